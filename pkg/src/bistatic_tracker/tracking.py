"""Velocity inversion, dead-reckoning trajectory and AoA triangulation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detection import DopplerTrack
from .errors import ContractError, DegenerateGeometryError, NoIntersectionError, SingularGeometryError
from .scenario import ScenarioGeometry, as_point

COND_GUARD = 1e6
MIN_BEARING_SEPARATION_DEG = 0.1


def doppler_matrix(p, tx1, rx1, tx2, rx2, lambda1, lambda2) -> np.ndarray:
    """Rows ``-(u_tx,i + u_rx,i) / lambda_i``; broadcasts over leading axes of ``p``."""
    p = np.asarray(p, dtype=float)
    rows = []
    for tx, rx, lam in ((tx1, rx1, lambda1), (tx2, rx2, lambda2)):
        d_tx = p - np.asarray(tx, dtype=float)
        d_rx = p - np.asarray(rx, dtype=float)
        n_tx = np.linalg.norm(d_tx, axis=-1, keepdims=True)
        n_rx = np.linalg.norm(d_rx, axis=-1, keepdims=True)
        if np.any(n_tx < 1e-9) or np.any(n_rx < 1e-9):
            raise SingularGeometryError("position coincides with a transmitter or receiver")
        lam = np.asarray(lam, dtype=float)[..., None]
        rows.append(-(d_tx / n_tx + d_rx / n_rx) / lam)
    return np.stack(rows, axis=-2)


@dataclass(frozen=True)
class DopplerMatrix:
    matrix: np.ndarray
    cond: float
    guard: float = COND_GUARD

    @property
    def degenerate(self) -> bool:
        return not self.cond <= self.guard


def build_doppler_matrix(p, geom: ScenarioGeometry, guard: float = COND_GUARD) -> DopplerMatrix:
    m = doppler_matrix(as_point(p), geom.tx1, geom.rx1, geom.tx2, geom.rx2, geom.lambda1, geom.lambda2)
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(m))
    if not np.isfinite(cond):
        cond = math.inf
    return DopplerMatrix(m, cond, guard)


def invert_velocity(f1: float, f2: float, D: DopplerMatrix) -> np.ndarray:
    """Velocity whose forward Doppler pair is ``(f1, f2)``."""
    if D.degenerate:
        raise DegenerateGeometryError(
            f"Doppler matrix condition number {D.cond:.3g} exceeds guard {D.guard:.3g}", D.cond
        )
    return np.linalg.solve(D.matrix, np.array([f1, f2], dtype=float))


@dataclass
class TrackEstimate:
    k: np.ndarray
    time_s: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    cond: np.ndarray
    dt: float
    label: str = ""

    def __len__(self):
        return len(self.k)


def integrate_trajectory(
    p0,
    tracks: tuple[DopplerTrack, DopplerTrack],
    geom: ScenarioGeometry,
    dt: float,
    guard: float = COND_GUARD,
    use_smoothed: bool = True,
) -> TrackEstimate:
    """Dead-reckon from ``p0`` using the two receivers' Doppler tracks.

    The Doppler matrix is rebuilt at the current estimate every step and
    the position advanced by one forward-Euler step of ``dt``.
    """
    t1, t2 = tracks
    if t1.receiver_id == t2.receiver_id:
        raise ContractError("need one Doppler track per receiver")
    if t1.receiver_id == 2:
        t1, t2 = t2, t1
    if len(t1) == 0 or not np.array_equal(t1.k, t2.k):
        raise ContractError("Doppler tracks must cover the same instances")
    f1 = t1.f_tilde if use_smoothed else t1.f_hat
    f2 = t2.f_tilde if use_smoothed else t2.f_hat
    if f1 is None or f2 is None:
        raise ContractError("tracks have not been smoothed")

    n = len(t1)
    pos = np.empty((n, 2))
    vel = np.empty((n, 2))
    cond = np.empty(n)
    pos[0] = as_point(p0)
    for i in range(n):
        D = build_doppler_matrix(pos[i], geom, guard)
        cond[i] = D.cond
        try:
            vel[i] = invert_velocity(f1[i], f2[i], D)
        except DegenerateGeometryError as exc:
            partial = TrackEstimate(t1.k[:i], t1.time_s[:i], pos[:i].copy(), vel[:i].copy(), cond[:i].copy(), dt)
            raise DegenerateGeometryError(str(exc), exc.cond, index=int(t1.k[i]), partial=partial) from None
        if i + 1 < n:
            pos[i + 1] = pos[i] + vel[i] * dt
    return TrackEstimate(t1.k.copy(), t1.time_s.copy(), pos, vel, cond, dt)


# ---------------------------------------------------------------------------
# angle of arrival


def bearing_deg(rx, p) -> np.ndarray:
    """Bearing from ``rx`` to ``p``, degrees counter-clockwise from +x."""
    d = np.asarray(p, dtype=float) - np.asarray(rx, dtype=float)
    return np.degrees(np.arctan2(d[..., 1], d[..., 0]))


def triangulate_many(rx1, bearing1, rx2, bearing2) -> np.ndarray:
    """Intersection of bearing lines, vectorised over the bearing arrays."""
    rx1 = np.asarray(rx1, dtype=float)
    rx2 = np.asarray(rx2, dtype=float)
    b1 = np.radians(np.asarray(bearing1, dtype=float))
    b2 = np.radians(np.asarray(bearing2, dtype=float))
    u1 = np.stack([np.cos(b1), np.sin(b1)], axis=-1)
    u2 = np.stack([np.cos(b2), np.sin(b2)], axis=-1)
    cross = u1[..., 0] * u2[..., 1] - u1[..., 1] * u2[..., 0]
    if np.any(np.abs(cross) < math.sin(math.radians(MIN_BEARING_SEPARATION_DEG))):
        raise NoIntersectionError("bearings are parallel; no intersection")
    d = rx2 - rx1
    s = (d[..., 0] * u2[..., 1] - d[..., 1] * u2[..., 0]) / cross
    return rx1 + s[..., None] * u1


def triangulate_aoa(rx1, bearing1: float, rx2, bearing2: float) -> np.ndarray:
    return triangulate_many(as_point(rx1), float(bearing1), as_point(rx2), float(bearing2))


def perturb_initial_location(p0_true, geom: ScenarioGeometry, bearing_noise_std: float, seed) -> np.ndarray:
    """AoA-triangulated estimate of ``p0_true`` with Gaussian bearing errors (degrees)."""
    p0 = as_point(p0_true)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, bearing_noise_std, 2) if bearing_noise_std > 0 else np.zeros(2)
    b1 = float(bearing_deg(geom.rx1, p0)) + noise[0]
    b2 = float(bearing_deg(geom.rx2, p0)) + noise[1]
    if bearing_noise_std == 0:
        return p0.copy()
    return triangulate_aoa(geom.rx1, b1, geom.rx2, b2)
