// Copyright 2026 mst authors
// Licensed under the Apache License, Version 2.0 (the "License");
// http://www.apache.org/licenses/LICENSE-2.0

#include "mst/cli.hpp"

int main(int argc, char** argv) { return mst::cli::run(argc, argv); }
