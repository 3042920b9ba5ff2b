"""Temporal convolution charge estimator for battery drive cycles.

Pure NumPy training and inference for a causal dilated-convolution network
that maps windows of (voltage, current, temperature, past SOC) telemetry to
the battery state of charge, plus a drive-cycle simulator, a compact binary
model format, and a sweep/benchmark harness.
"""

from .data import (
    DEFAULT_CELL,
    BatterySpec,
    DriveCycle,
    NormalizationParams,
    WindowedDataset,
    apply_normalization,
    build_hybrid,
    coulomb_count,
    fit_normalization,
    load_csv,
    make_windows,
    save_csv,
)
from .model import (
    TcnConfig,
    TcnModel,
    build_model,
    forward,
    parameter_count,
    predict,
    receptive_field,
)
from .modelio import (
    BadMagicError,
    ChecksumError,
    ModelFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
    deserialize,
    serialize,
)
from .rng import SplitMix64
from .simulate import PROFILE_KINDS, EcmConfig, generate_profile, simulate_ecm
from .sweep import SweepReport, SweepRow, measure_latency, run_sweep
from .training import (
    EvalMetrics,
    TrainConfig,
    compute_metrics,
    evaluate,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "BatterySpec",
    "ChecksumError",
    "DEFAULT_CELL",
    "DriveCycle",
    "EcmConfig",
    "EvalMetrics",
    "ModelFormatError",
    "NormalizationParams",
    "PROFILE_KINDS",
    "SplitMix64",
    "SweepReport",
    "SweepRow",
    "TcnConfig",
    "TcnModel",
    "TrainConfig",
    "TruncatedPayloadError",
    "VersionMismatchError",
    "WindowedDataset",
    "apply_normalization",
    "build_hybrid",
    "build_model",
    "compute_metrics",
    "coulomb_count",
    "deserialize",
    "evaluate",
    "fit_normalization",
    "forward",
    "generate_profile",
    "load_csv",
    "make_windows",
    "measure_latency",
    "parameter_count",
    "predict",
    "receptive_field",
    "run_sweep",
    "save_csv",
    "serialize",
    "simulate_ecm",
    "train",
]
