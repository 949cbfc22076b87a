"""Triplet-loss image embeddings with k-shot nearest-class evaluation."""

from ._core import (
    Checkpoint,
    CheckpointError,
    ConfigError,
    ContractViolation,
    DimensionError,
    Error,
    IndexOutOfRangeError,
    IoError,
    LabelError,
    LoadError,
    ProtocolError,
    SamplingError,
    SupportError,
    classify,
    generate_dataset,
    k_sweep_csv,
    load_dataset,
    metrics,
    read_embeddings,
    read_png,
    run_cli,
    triplet_loss,
    write_png,
)

__all__ = [name for name in dir() if not name.startswith("_")]
