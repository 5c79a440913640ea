"""Accelerometry: ENMO, bout summaries and MVPA epoch detection."""
from .core import (
    AccelSample,
    AccelTrace,
    BoutOutcome,
    BoutSummary,
    EpochResult,
    MvpaStream,
    SignalError,
    TriggerConfig,
    batch_triggers,
    compute_enmo,
    detect_mvpa_epoch,
    summarize_bout,
)
from .kernels import BACKEND
from .trace import read_trace, read_triggers, write_trace, write_triggers

__all__ = [
    "AccelSample", "AccelTrace", "BoutOutcome", "BoutSummary", "EpochResult", "MvpaStream",
    "SignalError", "TriggerConfig", "batch_triggers", "compute_enmo", "detect_mvpa_epoch",
    "summarize_bout", "BACKEND", "read_trace", "read_triggers", "write_trace", "write_triggers",
]
