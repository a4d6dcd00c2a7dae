"""Geometry, ground-truth trajectories and the forward bistatic Doppler model.

Positions and velocities are plain ``numpy`` arrays whose last axis has
length 2 (x, y). All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CoverageError, DegenerateSegmentError, SingularGeometryError

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_CARRIERS_HZ = (1.85e9, 1.87e9)
MAX_UAV_SPEED = 15.0

# distances below this are treated as coincident points
_COINCIDENT_M = 1e-9


def wavelength(carrier_hz: float) -> float:
    return SPEED_OF_LIGHT / carrier_hz


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ConfigError(f"expected a 2-D point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"non-finite coordinates {arr}")
    return arr


@dataclass(frozen=True)
class ScenarioGeometry:
    """Two transmitter/receiver pairs; receiver 1 sits at the origin."""

    tx1: np.ndarray
    tx2: np.ndarray
    rx1: np.ndarray
    rx2: np.ndarray
    lambda1: float = field(default_factory=lambda: wavelength(DEFAULT_CARRIERS_HZ[0]))
    lambda2: float = field(default_factory=lambda: wavelength(DEFAULT_CARRIERS_HZ[1]))

    def __post_init__(self):
        for name in ("tx1", "tx2", "rx1", "rx2"):
            object.__setattr__(self, name, as_point(getattr(self, name)))
        if np.any(self.rx1 != 0.0):
            raise ConfigError("receiver 1 must be at the origin")
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ConfigError("wavelengths must be positive")
        for i in (1, 2):
            if np.linalg.norm(self.tx(i) - self.rx(i)) < _COINCIDENT_M:
                raise ConfigError(f"tx{i} and rx{i} coincide; bistatic pair needs a baseline")
        if np.linalg.norm(self.rx1 - self.rx2) < _COINCIDENT_M:
            raise ConfigError("the two receivers must be at different locations")

    def tx(self, i: int) -> np.ndarray:
        return self.tx1 if i == 1 else self.tx2

    def rx(self, i: int) -> np.ndarray:
        return self.rx1 if i == 1 else self.rx2

    def wavelength(self, i: int) -> float:
        return self.lambda1 if i == 1 else self.lambda2

    def nodes(self):
        return (self.tx1, self.tx2, self.rx1, self.rx2)

    def to_dict(self) -> dict:
        return {
            "tx1": self.tx1.tolist(),
            "tx2": self.tx2.tolist(),
            "rx1": self.rx1.tolist(),
            "rx2": self.rx2.tolist(),
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioGeometry":
        kw = {k: d[k] for k in ("tx1", "tx2", "rx1", "rx2")}
        if "lambda1" in d:
            kw["lambda1"] = float(d["lambda1"])
        elif "carrier1_hz" in d:
            kw["lambda1"] = wavelength(float(d["carrier1_hz"]))
        if "lambda2" in d:
            kw["lambda2"] = float(d["lambda2"])
        elif "carrier2_hz" in d:
            kw["lambda2"] = wavelength(float(d["carrier2_hz"]))
        return cls(**kw)


@dataclass(frozen=True)
class GroundTruthTrack:
    """Uniformly sampled trajectory.

    ``velocities[k]`` is constant on ``[times[k], times[k+1])`` so that
    ``positions[k+1] == positions[k] + velocities[k] * sample_period``.
    """

    sample_period: float
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def position_at(self, t) -> np.ndarray:
        """Linear interpolation of position; ``t`` may be scalar or array."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-9) or np.any(t > self.times[-1] + 1e-9):
            raise CoverageError("requested time lies outside the ground-truth track")
        x = np.interp(t, self.times, self.positions[:, 0])
        y = np.interp(t, self.times, self.positions[:, 1])
        return np.stack([x, y], axis=-1)

    def velocity_at(self, t) -> np.ndarray:
        """Piecewise-constant velocity matching the sampled positions."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.times) - 1)
        return self.velocities[idx]


# ---------------------------------------------------------------------------
# forward Doppler model


def bistatic_doppler(p, v, tx, rx, wavelength):
    """Bistatic Doppler frequency in Hz, broadcasting over leading axes.

    Returns ``-(u_tx + u_rx) . v / wavelength`` where ``u_tx`` and ``u_rx``
    are the unit vectors pointing from the transmitter and the receiver to
    the target. A target closing on the pair gives a positive frequency.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    d_tx = p - np.asarray(tx, dtype=float)
    d_rx = p - np.asarray(rx, dtype=float)
    n_tx = np.hypot(d_tx[..., 0], d_tx[..., 1])
    n_rx = np.hypot(d_rx[..., 0], d_rx[..., 1])
    if np.any(n_tx < _COINCIDENT_M) or np.any(n_rx < _COINCIDENT_M):
        raise SingularGeometryError("target coincides with a transmitter or receiver")
    proj = (d_tx[..., 0] * v[..., 0] + d_tx[..., 1] * v[..., 1]) / n_tx
    proj = proj + (d_rx[..., 0] * v[..., 0] + d_rx[..., 1] * v[..., 1]) / n_rx
    return -proj / np.asarray(wavelength, dtype=float)


def true_bistatic_doppler(p, v, tx, rx, wavelength: float) -> float:
    """Scalar bistatic Doppler for a single target state."""
    return float(bistatic_doppler(as_point(p), as_point(v), as_point(tx), as_point(rx), wavelength))


def receiver_doppler(geom: ScenarioGeometry, receiver_id: int, p, v):
    return bistatic_doppler(p, v, geom.tx(receiver_id), geom.rx(receiver_id), geom.wavelength(receiver_id))


def bistatic_range(p, tx, rx):
    p = np.asarray(p, dtype=float)
    d_tx = p - np.asarray(tx, dtype=float)
    d_rx = p - np.asarray(rx, dtype=float)
    return np.hypot(d_tx[..., 0], d_tx[..., 1]) + np.hypot(d_rx[..., 0], d_rx[..., 1])


# ---------------------------------------------------------------------------
# trajectories


class _Line:
    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.length = float(np.linalg.norm(b - a))

    def at(self, s):
        frac = s / self.length
        return self.a[None, :] + frac[:, None] * (self.b - self.a)[None, :]


class _Arc:
    def __init__(self, center, radius, phi0, sweep):
        self.center = center
        self.radius = radius
        self.phi0 = phi0
        self.sweep = sweep
        self.length = abs(sweep) * radius

    def at(self, s):
        phi = self.phi0 + np.sign(self.sweep) * s / self.radius
        return self.center[None, :] + self.radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def _build_path(points, turn_radius):
    segments = []
    if turn_radius is None or turn_radius <= 0 or len(points) < 3:
        for a, b in zip(points[:-1], points[1:]):
            segments.append(_Line(a, b))
        return segments

    start = points[0]
    for i in range(1, len(points) - 1):
        prev, corner, nxt = points[i - 1], points[i], points[i + 1]
        d_in = (corner - prev) / np.linalg.norm(corner - prev)
        d_out = (nxt - corner) / np.linalg.norm(nxt - corner)
        cross = d_in[0] * d_out[1] - d_in[1] * d_out[0]
        turn = math.atan2(cross, float(d_in @ d_out))
        if abs(turn) < 1e-12:
            continue
        # fillet must fit inside half of each adjacent leg
        r = turn_radius
        max_tangent = 0.5 * min(np.linalg.norm(corner - prev), np.linalg.norm(nxt - corner))
        tangent = r * math.tan(abs(turn) / 2)
        if tangent > max_tangent:
            r = max_tangent / math.tan(abs(turn) / 2)
            tangent = max_tangent
        entry = corner - d_in * tangent
        exit_ = corner + d_out * tangent
        normal = np.array([-d_in[1], d_in[0]]) * math.copysign(1.0, turn)
        center = entry + normal * r
        phi0 = math.atan2(entry[1] - center[1], entry[0] - center[0])
        if np.linalg.norm(entry - start) > 0:
            segments.append(_Line(start, entry))
        segments.append(_Arc(center, r, phi0, turn))
        start = exit_
    segments.append(_Line(start, points[-1]))
    return segments


def make_waypoint_trajectory(
    waypoints,
    speed: float,
    sample_period: float,
    turn_policy: str = "instant",
    turn_radius: float | None = None,
    max_speed: float = MAX_UAV_SPEED,
    start_time: float = 0.0,
) -> GroundTruthTrack:
    """Constant-speed track through ``waypoints`` in order.

    ``turn_policy`` is ``"instant"`` (heading changes at the waypoint) or
    ``"arc"`` (constant-rate turn on a fillet of ``turn_radius`` meters,
    shrunk where a leg is too short to hold it).
    """
    pts = [as_point(w) for w in waypoints]
    if len(pts) < 2:
        raise ConfigError("a trajectory needs at least two waypoints")
    if not speed > 0 or not sample_period > 0:
        raise ConfigError("speed and sample_period must be positive")
    if speed > max_speed:
        raise ConfigError(f"speed {speed} m/s exceeds the {max_speed} m/s limit")
    for a, b in zip(pts[:-1], pts[1:]):
        if np.linalg.norm(b - a) < _COINCIDENT_M:
            raise DegenerateSegmentError(f"consecutive waypoints coincide at {a.tolist()}")
    if turn_policy == "instant":
        segments = _build_path(pts, None)
    elif turn_policy == "arc":
        if turn_radius is None or not turn_radius > 0:
            raise ConfigError("arc turn policy needs a positive turn_radius")
        segments = _build_path(pts, turn_radius)
    else:
        raise ConfigError(f"unknown turn policy {turn_policy!r}")

    lengths = np.array([seg.length for seg in segments])
    bounds = np.concatenate([[0.0], np.cumsum(lengths)])
    total = float(bounds[-1])
    duration = total / speed
    n = int(math.ceil(duration / sample_period - 1e-9)) + 1
    k = np.arange(n)
    s = np.minimum(k * sample_period * speed, total)

    positions = np.empty((n, 2))
    seg_idx = np.clip(np.searchsorted(bounds, s, side="right") - 1, 0, len(segments) - 1)
    for j, seg in enumerate(segments):
        mask = seg_idx == j
        if np.any(mask):
            positions[mask] = seg.at(s[mask] - bounds[j])
    positions[-1] = pts[-1]

    velocities = np.zeros_like(positions)
    velocities[:-1] = (positions[1:] - positions[:-1]) / sample_period
    times = start_time + k * sample_period
    return GroundTruthTrack(sample_period, times, positions, velocities)


def preset_waypoints(name: str, size: float = 30.0, origin=(0.0, 0.0), height: float | None = None):
    """Waypoints for the built-in ``u_shape`` and ``triangle`` courses."""
    ox, oy = as_point(origin)
    if name == "triangle":
        h = size * math.sqrt(3) / 2
        pts = [(0, 0), (size, 0), (size / 2, h), (0, 0)]
    elif name == "u_shape":
        depth = size if height is None else height
        pts = [(0, depth), (0, 0), (size, 0), (size, depth)]
    else:
        raise ConfigError(f"unknown trajectory preset {name!r}")
    return [(ox + x, oy + y) for x, y in pts]


def track_from_dict(d: dict) -> GroundTruthTrack:
    """Build a track from the ``trajectory`` block of a scenario file."""
    if "preset" in d:
        waypoints = preset_waypoints(
            d["preset"], float(d.get("size", 30.0)), d.get("origin", (0.0, 0.0)), d.get("height")
        )
    elif "waypoints" in d:
        waypoints = d["waypoints"]
    else:
        raise ConfigError("trajectory needs either 'preset' or 'waypoints'")
    turn = d.get("turn_policy", "instant")
    radius = None
    if isinstance(turn, dict):
        radius = turn.get("radius")
        turn = turn.get("kind", "instant")
    return make_waypoint_trajectory(
        waypoints,
        speed=float(d["speed"]),
        sample_period=float(d.get("sample_period", 0.005)),
        turn_policy=turn,
        turn_radius=radius,
        start_time=float(d.get("start_time", 0.0)),
    )


@dataclass(frozen=True)
class Scenario:
    geometry: ScenarioGeometry
    truth: GroundTruthTrack
    description: dict

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            geom = ScenarioGeometry.from_dict(d["geometry"])
            traj = dict(d["trajectory"])
        except KeyError as exc:
            raise ConfigError(f"scenario description missing {exc}") from None
        for key in ("speed", "sample_period"):
            if key in d and key not in traj:
                traj[key] = d[key]
        return cls(geom, track_from_dict(traj), d)
