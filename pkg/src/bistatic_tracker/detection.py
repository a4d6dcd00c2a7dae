"""Doppler detection from CAF maps and per-receiver Doppler track recovery."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .caf import CafMap
from .errors import ConfigError, ContractError, NoSignalError, UnrecoverableTrackError

MEASURED = "measured"
AVERAGED = "averaged"
INTERPOLATED = "interpolated"
HELD = "held"
PROVENANCES = (MEASURED, AVERAGED, INTERPOLATED, HELD)


@dataclass(frozen=True)
class ThresholdParams:
    """Local-average detection threshold.

    The average spans ``2 * half_width + 1`` bins and includes the cell
    under test unless ``exclude_center`` is set. ``peak_interpolation``
    selects how a detected run maps to a frequency: ``"none"`` reports the
    peak bin, ``"neighbor_ratio"`` shifts it towards the larger adjacent bin
    by ``m_nb / (m_peak + m_nb)`` bins, which is exact for a steady tone
    under the rectangular CAF window.
    """

    gamma: float = 3.0
    half_width: int = 25
    exclude_center: bool = False
    peak_interpolation: str = "neighbor_ratio"

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigError("gamma must exceed 1")
        if self.half_width < 1:
            raise ConfigError("half_width must be at least 1")
        if self.peak_interpolation not in ("none", "neighbor_ratio"):
            raise ConfigError(f"unknown peak interpolation {self.peak_interpolation!r}")


@dataclass
class DetectionSet:
    k: int
    receiver_id: int
    detections: list = field(default_factory=list)  # (frequency_hz, magnitude)
    time_s: float = 0.0

    def __len__(self):
        return len(self.detections)

    @property
    def frequencies(self):
        return [f for f, _ in self.detections]


def local_threshold(mag: np.ndarray, params: ThresholdParams) -> np.ndarray:
    """Per-bin threshold; edge bins average over the bins that exist."""
    n = len(mag)
    if 2 * params.half_width + 1 > n:
        raise ConfigError(f"neighbourhood of {2 * params.half_width + 1} bins exceeds {n} Doppler bins")
    csum = np.concatenate([[0.0], np.cumsum(mag)])
    idx = np.arange(n)
    lo = np.maximum(idx - params.half_width, 0)
    hi = np.minimum(idx + params.half_width + 1, n)
    total = csum[hi] - csum[lo]
    count = (hi - lo).astype(float)
    if params.exclude_center:
        total = total - mag
        count = count - 1
    return params.gamma * total / count


def adaptive_threshold_detect(caf: CafMap, params: ThresholdParams = ThresholdParams(), receiver_id: int = 1) -> DetectionSet:
    """Bins with ``|R| >= threshold``; each contiguous run becomes one detection at its peak."""
    mag = np.asarray(caf.magnitude, dtype=float)
    if len(mag) == 0:
        raise ContractError("empty CAF map")
    hit = mag >= local_threshold(mag, params)
    dets = []
    i, n = 0, len(mag)
    while i < n:
        if not hit[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and hit[j + 1]:
            j += 1
        peak = i + int(np.argmax(mag[i:j + 1]))
        freq = float(caf.doppler_hz[peak])
        if params.peak_interpolation == "neighbor_ratio":
            freq += _subbin_offset(mag, peak) * caf.df
        dets.append((freq, float(mag[peak])))
        i = j + 1
    return DetectionSet(caf.k, receiver_id, dets, caf.time_s)


def _subbin_offset(mag, peak):
    left = mag[peak - 1] if peak > 0 else 0.0
    right = mag[peak + 1] if peak + 1 < len(mag) else 0.0
    if right > left:
        return float(right / (mag[peak] + right))
    if left > right:
        return -float(left / (mag[peak] + left))
    return 0.0


def max_peak_baseline(caf: CafMap) -> float:
    """Doppler of the strongest CAF bin."""
    mag = np.asarray(caf.magnitude)
    if len(mag) == 0 or not np.any(mag > 0):
        raise NoSignalError(f"CAF map {caf.k} carries no signal")
    return float(caf.doppler_hz[int(np.argmax(mag))])


# ---------------------------------------------------------------------------
# track filter


@dataclass(frozen=True)
class FilterParams:
    alpha: float = 0.7
    weight_rule: str = "magnitude"

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.weight_rule not in ("magnitude", "uniform"):
            raise ConfigError(f"unknown weight rule {self.weight_rule!r}")


@dataclass
class DopplerTrack:
    receiver_id: int
    k: np.ndarray
    time_s: np.ndarray
    f_hat: np.ndarray
    provenance: list
    f_tilde: np.ndarray | None = None
    held_tail: bool = False

    def __len__(self):
        return len(self.k)

    def crop(self, k_first: int, k_last: int) -> "DopplerTrack":
        sel = (self.k >= k_first) & (self.k <= k_last)
        idx = np.nonzero(sel)[0]
        return DopplerTrack(
            self.receiver_id,
            self.k[sel],
            self.time_s[sel],
            self.f_hat[sel],
            [self.provenance[i] for i in idx],
            None if self.f_tilde is None else self.f_tilde[sel],
            self.held_tail,
        )


def _weighted_mean(dets, rule):
    if rule == "uniform":
        return sum(f for f, _ in dets) / len(dets)
    total = sum(m for _, m in dets)
    return sum((m / total) * f for f, m in dets)


def _check_contiguous(ks):
    ks = np.asarray(ks)
    if len(ks) > 1 and np.any(np.diff(ks) != 1):
        raise ContractError("detection instances must be contiguous and ascending")


def track_filter(sets: list[DetectionSet], params: FilterParams = FilterParams()) -> DopplerTrack:
    """Reduce detection sets to one Doppler value per instance.

    Starts at the first instance with a single detection. Multiple
    detections are blended with the previous estimate; empty sets are
    filled by stepping linearly towards the next single detection. A
    trailing run of empty sets with nothing ahead holds the last value and
    sets ``held_tail``.
    """
    if not sets:
        raise UnrecoverableTrackError("no detection sets")
    _check_contiguous([s.k for s in sets])
    rid = sets[0].receiver_id
    sizes = [len(s) for s in sets]
    try:
        start = sizes.index(1)
    except ValueError:
        raise UnrecoverableTrackError(f"receiver {rid} never has a single detection") from None

    # next_single[j]: smallest index > j with exactly one detection, or None
    next_single = [None] * len(sets)
    nxt = None
    for j in range(len(sets) - 1, -1, -1):
        next_single[j] = nxt
        if sizes[j] == 1:
            nxt = j

    f_hat = [sets[start].detections[0][0]]
    prov = [MEASURED]
    held = False
    for j in range(start + 1, len(sets)):
        prev = f_hat[-1]
        dets = sets[j].detections
        if len(dets) == 1:
            f_hat.append(dets[0][0])
            prov.append(MEASURED)
        elif len(dets) > 1:
            f_hat.append(params.alpha * prev + (1 - params.alpha) * _weighted_mean(dets, params.weight_rule))
            prov.append(AVERAGED)
        else:
            l = next_single[j]
            if l is None:
                f_hat.append(prev)
                prov.append(HELD)
                held = True
            else:
                target = sets[l].detections[0][0]
                f_hat.append(prev + (target - prev) / (l - (j - 1)))
                prov.append(INTERPOLATED)
    if held:
        warnings.warn(f"receiver {rid}: trailing instances without detections hold the last Doppler value", stacklevel=2)
    chosen = sets[start:]
    return DopplerTrack(
        rid,
        np.array([s.k for s in chosen], dtype=int),
        np.array([s.time_s for s in chosen], dtype=float),
        np.array(f_hat, dtype=float),
        prov,
        held_tail=held,
    )


# ---------------------------------------------------------------------------
# Kalman smoothing


@dataclass(frozen=True)
class KalmanConfig:
    """Constant-rate Doppler model with white rate-noise of intensity ``q`` (Hz^2/s^3)."""

    dt: float = 0.05
    q: float = 4.0
    r: float = 1.0
    interp_inflation: float = 4.0
    initial_variance: float = 1e8

    def __post_init__(self):
        if self.q < 0:
            raise ConfigError("process noise q must be nonnegative")
        if not self.r > 0:
            raise ConfigError("measurement variance r must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")


def kalman_filter(z: np.ndarray, cfg: KalmanConfig, variances=None) -> np.ndarray:
    """Forward filter returning the filtered frequency after each update."""
    dt = cfg.dt
    F = np.array([[1.0, dt], [0.0, 1.0]])
    Q = cfg.q * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
    x = np.zeros(2)
    P = np.eye(2) * cfg.initial_variance
    out = np.empty(len(z))
    for i, zi in enumerate(z):
        if i:
            x = F @ x
            P = F @ P @ F.T + Q
        r = cfg.r if variances is None else variances[i]
        s = P[0, 0] + r
        gain = P[:, 0] / s
        x = x + gain * (zi - x[0])
        P = P - np.outer(gain, P[0, :])
        out[i] = x[0]
    return out


def kalman_smooth(track: DopplerTrack, cfg: KalmanConfig = KalmanConfig()) -> DopplerTrack:
    _check_contiguous(track.k)
    var = np.array(
        [cfg.r * (cfg.interp_inflation if p in (INTERPOLATED, HELD) else 1.0) for p in track.provenance]
    )
    f_tilde = kalman_filter(np.asarray(track.f_hat, dtype=float), cfg, var)
    return DopplerTrack(
        track.receiver_id, track.k.copy(), track.time_s.copy(), track.f_hat.copy(), list(track.provenance),
        f_tilde, track.held_tail,
    )
