from ._core import (
    ConfigError,
    DataError,
    NumericError,
    corpus_bleu,
    corpus_cer,
    corpus_wer,
    ctc_loss,
    ctc_prefix_score,
    decode,
    edit_distance,
    evaluate,
    gen_data,
    label_smoothed_nll,
    normalize_text,
    train,
    transfer,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "corpus_bleu",
    "corpus_cer",
    "corpus_wer",
    "ctc_loss",
    "ctc_prefix_score",
    "decode",
    "edit_distance",
    "evaluate",
    "gen_data",
    "label_smoothed_nll",
    "normalize_text",
    "train",
    "transfer",
]
