"""Batched zero-Doppler interference cancellation.

Each batch of the surveillance signal is projected, in the least-squares
sense, onto the span of the reference signal delayed by
``0 .. num_delay_taps - 1`` samples, and the projection is subtracted.
Keeping batches short confines the cancellation notch to a narrow band
around 0 Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import AlignmentError, ConfigError
from .waveform import IqCapture


@dataclass(frozen=True)
class CancellationConfig:
    batch_duration: float = 0.1
    num_delay_taps: int = 8
    regularization: float = 1e-9

    def __post_init__(self):
        if not self.batch_duration > 0:
            raise ConfigError("batch_duration must be positive")
        if self.num_delay_taps < 1:
            raise ConfigError("num_delay_taps must be at least 1")
        if self.regularization < 0:
            raise ConfigError("regularization must be nonnegative")


def check_aligned(a: IqCapture, b: IqCapture):
    if a.sample_rate != b.sample_rate:
        raise AlignmentError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    if len(a) != len(b):
        raise AlignmentError(f"capture lengths differ: {len(a)} vs {len(b)}")
    if abs(a.start_time - b.start_time) > 0.5 / a.sample_rate:
        raise AlignmentError(f"start times differ: {a.start_time} vs {b.start_time}")


def _delay_matrix(ref, lo, hi, taps):
    cols = np.zeros((hi - lo, taps), dtype=complex)
    for d in range(taps):
        a = lo - d
        if a >= 0:
            cols[:, d] = ref[a:hi - d]
        else:
            cols[-a:, d] = ref[: hi - d]
    return cols


def cancel_batch(surv: np.ndarray, ref_delayed: np.ndarray, regularization: float) -> np.ndarray:
    """Residual of ``surv`` after removing its projection on ``ref_delayed`` columns."""
    gram = ref_delayed.conj().T @ ref_delayed
    load = np.real(np.trace(gram)) / gram.shape[0]
    if load == 0:
        return surv.copy()
    rhs = ref_delayed.conj().T @ surv
    w = np.linalg.solve(gram + regularization * load * np.eye(gram.shape[0]), rhs)
    return surv - ref_delayed @ w


def cancel_clutter(surv: IqCapture, ref: IqCapture, cfg: CancellationConfig = CancellationConfig()) -> IqCapture:
    check_aligned(surv, ref)
    if surv.channel_role != "surveillance":
        raise AlignmentError("first argument must be a surveillance capture")
    s = surv.samples.astype(complex)
    r = ref.samples.astype(complex)
    n = len(s)
    batch = max(1, int(round(cfg.batch_duration * surv.sample_rate)))
    out = np.empty(n, dtype=complex)
    for lo in range(0, n, batch):
        hi = min(n, lo + batch)
        cols = _delay_matrix(r, lo, hi, cfg.num_delay_taps)
        out[lo:hi] = cancel_batch(s[lo:hi], cols, cfg.regularization)
    return replace(surv, samples=out.astype(np.complex64), cleaned=True)
