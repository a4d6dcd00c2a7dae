"""Tracking-error scoring, percentiles and CDF tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, EmptyReportError
from .scenario import GroundTruthTrack
from .tracking import TrackEstimate

LABELS = ("perfect_init", "noisy_init", "baseline_maxpeak", "aoa_triangulation")
DEFAULT_PERCENTILES = (50.0, 90.0, 100.0)


@dataclass
class ErrorReport:
    label: str
    times: np.ndarray
    errors: np.ndarray
    percentiles: tuple = DEFAULT_PERCENTILES
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        if np.any(self.errors < 0):
            raise ValueError("errors must be nonnegative")

    def __len__(self):
        return len(self.errors)

    @property
    def sorted_errors(self) -> np.ndarray:
        return np.sort(self.errors)

    def summary(self) -> dict:
        out = {"label": self.label, "count": len(self)}
        if len(self):
            out.update(
                p50=percentile(self, 50), p90=percentile(self, 90), max=float(self.errors.max()),
                mean=float(self.errors.mean()),
            )
        out.update(self.meta)
        return out

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "times": self.times.tolist(),
            "errors": self.errors.tolist(),
            "percentiles": list(self.percentiles),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorReport":
        return cls(d["label"], d["times"], d["errors"], tuple(d["percentiles"]), dict(d.get("meta", {})))


def position_errors(positions, times, truth: GroundTruthTrack) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean errors against truth interpolated at ``times``.

    Instants outside the truth support are dropped.
    """
    times = np.asarray(times, dtype=float)
    inside = (times >= truth.times[0] - 1e-9) & (times <= truth.times[-1] + 1e-9)
    if not np.any(inside):
        raise CoverageError("estimate and ground truth do not overlap in time")
    ref = truth.position_at(times[inside])
    err = np.linalg.norm(np.asarray(positions, dtype=float)[inside] - ref, axis=1)
    return times[inside], err


def tracking_errors(est: TrackEstimate, truth: GroundTruthTrack, label: str = "perfect_init") -> ErrorReport:
    t, err = position_errors(est.positions, est.time_s, truth)
    return ErrorReport(label, t, err)


def percentile(report: ErrorReport, q: float) -> float:
    """Nearest-rank percentile: element ``ceil(q N / 100)`` of the sorted errors (1-based)."""
    n = len(report.errors)
    if n == 0:
        raise EmptyReportError(f"report {report.label!r} has no errors")
    if not 0 < q <= 100:
        raise ValueError("percentile rank must lie in (0, 100]")
    rank = max(1, math.ceil(q * n / 100))
    return float(report.sorted_errors[rank - 1])


def cdf_table(report: ErrorReport) -> np.ndarray:
    """Rows of ``(error_m, cdf)`` with ``cdf = i / N`` at the i-th sorted error."""
    e = report.sorted_errors
    return np.column_stack([e, np.arange(1, len(e) + 1) / len(e)])


def signed_cross_track(points, times, truth: GroundTruthTrack) -> np.ndarray:
    """Offset of each point from the true position along the left normal of the true heading."""
    times = np.asarray(times, dtype=float)
    ref = truth.position_at(times)
    v = truth.velocity_at(times)
    speed = np.linalg.norm(v, axis=1)
    moving = speed > 0
    normal = np.zeros_like(v)
    normal[moving] = np.column_stack([-v[moving, 1], v[moving, 0]]) / speed[moving, None]
    d = np.asarray(points, dtype=float) - ref
    return np.sum(d * normal, axis=1)[moving]
