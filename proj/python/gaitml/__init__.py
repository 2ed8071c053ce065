"""Gait knowledge-map screening pipeline (C++ core)."""

from ._core import (
    CLIP_FRAMES,
    NUM_FEATURES,
    domain_columns,
    evaluate,
    explain,
    extract,
    f1,
    feature_names,
    macro_f1,
    metrics_from_counts,
    run_cli,
    simulate,
    split,
    train,
    windowed_xcorr,
)

__all__ = [
    "CLIP_FRAMES",
    "NUM_FEATURES",
    "domain_columns",
    "evaluate",
    "explain",
    "extract",
    "f1",
    "feature_names",
    "macro_f1",
    "metrics_from_counts",
    "run_cli",
    "simulate",
    "split",
    "train",
    "windowed_xcorr",
]
