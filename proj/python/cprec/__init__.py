"""Consumer/producer-aware recommendation on user-generated-content platforms."""

from ._core import (
    CprecError,
    Dataset,
    Model,
    Split,
    SynthConfig,
    TrainConfig,
    cli,
    corpus_stats,
    evaluate_auc,
    filter_inactive,
    generate_synthetic,
    ingest,
    init_model,
    load_model,
    read_dataset,
    read_prepared,
    split_leave_one_out,
    train,
    write_prepared,
)

MODELS = ("poprec", "bpr", "fm", "vista", "cprec")

__all__ = [
    "CprecError",
    "Dataset",
    "MODELS",
    "Model",
    "Split",
    "SynthConfig",
    "TrainConfig",
    "cli",
    "corpus_stats",
    "evaluate_auc",
    "filter_inactive",
    "generate_synthetic",
    "ingest",
    "init_model",
    "load_model",
    "read_dataset",
    "read_prepared",
    "split_leave_one_out",
    "train",
    "write_prepared",
]
