"""Transmit waveform synthesis and reference/surveillance channel models."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, CoverageError
from .scenario import SPEED_OF_LIGHT, GroundTruthTrack, ScenarioGeometry, bistatic_doppler, bistatic_range

ROLES = ("transmit", "reference", "surveillance")

# samples processed per chunk in the surveillance simulator
_CHUNK = 1 << 20


@dataclass(frozen=True)
class WaveformConfig:
    sample_rate: float = 3.072e6
    occupied_bandwidth: float = 2.5e6
    kind: str = "bandlimited_noise"
    seed: int = 0
    duration: float = 1.0
    fft_size: int = 256
    cp_fraction: float = 1 / 8

    def __post_init__(self):
        if self.kind not in ("ofdm_like", "bandlimited_noise"):
            raise ConfigError(f"unknown waveform kind {self.kind!r}")
        if not self.sample_rate > 0 or not self.duration > 0:
            raise ConfigError("sample_rate and duration must be positive")
        if not 0 < self.occupied_bandwidth <= 0.9 * self.sample_rate:
            raise ConfigError(
                f"occupied bandwidth {self.occupied_bandwidth} Hz exceeds 0.9 x sample rate {self.sample_rate} Hz"
            )

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @classmethod
    def desk(cls, **kw) -> "WaveformConfig":
        """Reduced-rate configuration used by tests and desk-scale runs."""
        kw.setdefault("sample_rate", 256e3)
        kw.setdefault("occupied_bandwidth", 0.8 * kw["sample_rate"])
        return cls(**kw)


@dataclass
class IqCapture:
    """One sampled complex baseband channel.

    ``samples`` is stored as ``complex64``, matching the on-disk format.
    """

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0
    channel_role: str = "transmit"
    receiver_id: int | None = None
    cleaned: bool = False
    center_freq_hz: float = 0.0
    creator_seed: int | None = None

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.complex64)
        if self.samples.ndim != 1:
            raise ConfigError("IQ buffer must be one-dimensional")
        if self.channel_role not in ROLES:
            raise ConfigError(f"unknown channel role {self.channel_role!r}")
        if self.cleaned and self.channel_role != "surveillance":
            raise ConfigError("only surveillance captures can be cleaned")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.samples)) / self.sample_rate


@dataclass(frozen=True)
class MicroDopplerConfig:
    """Propeller-like sideband bursts riding on the target echo.

    Time is cut into slots of ``slot_duration``; each slot is active with
    probability ``duty`` and then carries a symmetric pair of sidebands at
    ``+/- offset`` Hz around the body Doppler, each with amplitude
    ``amplitude`` relative to the body echo.
    """

    duty: float = 0.3
    slot_duration: float = 0.5
    offset_range: tuple = (30.0, 80.0)
    amplitude_range: tuple = (1.5, 2.5)


@dataclass(frozen=True)
class ChannelConfig:
    """Path gains and delays of one receive channel.

    For a surveillance channel ``los_gain``/``los_delay`` describe the
    direct-path leakage and ``clutter_paths`` the static scatterers.
    Delays are seconds.
    """

    los_gain: complex = 1.0
    los_delay: float = 0.0
    clutter_paths: tuple = ()
    target_gain: complex = 0.0
    target_gain_model: str = "constant"
    noise_power: float = 0.0
    micro_doppler: MicroDopplerConfig | None = None

    def __post_init__(self):
        if self.los_delay < 0 or any(d < 0 for _, d in self.clutter_paths):
            raise ConfigError("path delays must be nonnegative")
        if self.noise_power < 0:
            raise ConfigError("noise power must be nonnegative")
        if self.target_gain_model not in ("constant", "bistatic_range"):
            raise ConfigError(f"unknown target gain model {self.target_gain_model!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        d = dict(d)
        for key in ("los_gain", "target_gain"):
            if key in d:
                d[key] = _complex(d[key])
        if "clutter_paths" in d:
            d["clutter_paths"] = tuple((_complex(g), float(t)) for g, t in d["clutter_paths"])
        if d.get("micro_doppler") is not None:
            md = dict(d["micro_doppler"])
            for key in ("offset_range", "amplitude_range"):
                if key in md:
                    md[key] = tuple(md[key])
            d["micro_doppler"] = MicroDopplerConfig(**md)
        return cls(**d)


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(float(value[0]), float(value[1]))
    return complex(value)


# ---------------------------------------------------------------------------
# transmit signal


def gen_tx_signal(cfg: WaveformConfig) -> IqCapture:
    """Unit-power baseband transmit signal, deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_samples
    if cfg.kind == "bandlimited_noise":
        x = _bandlimited_noise(rng, n, cfg.occupied_bandwidth / cfg.sample_rate)
    else:
        x = _ofdm_frames(rng, n, cfg)
    x = x / np.sqrt(np.mean(np.abs(x) ** 2))
    return IqCapture(x, cfg.sample_rate, channel_role="transmit", creator_seed=cfg.seed)


def _bandlimited_noise(rng, n, fraction):
    spectrum = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    freqs = np.fft.fftfreq(n)
    spectrum[np.abs(freqs) > fraction / 2] = 0.0
    return np.fft.ifft(spectrum)


def _ofdm_frames(rng, n, cfg):
    nfft = cfg.fft_size
    ncp = int(round(cfg.cp_fraction * nfft))
    n_occ = int(round(cfg.occupied_bandwidth / cfg.sample_rate * nfft))
    half = n_occ // 2
    # DC subcarrier left empty as in LTE downlink
    carriers = np.concatenate([np.arange(-half, 0), np.arange(1, n_occ - half + 1)])
    sym_len = nfft + ncp
    n_sym = -(-n // sym_len)
    qpsk = (rng.integers(0, 2, (n_sym, len(carriers))) * 2 - 1) + 1j * (
        rng.integers(0, 2, (n_sym, len(carriers))) * 2 - 1
    )
    grid = np.zeros((n_sym, nfft), dtype=complex)
    grid[:, carriers % nfft] = qpsk / np.sqrt(2)
    body = np.fft.ifft(grid, axis=1)
    frames = np.concatenate([body[:, nfft - ncp:], body], axis=1)
    return frames.reshape(-1)[:n]


# ---------------------------------------------------------------------------
# channels


def fractional_delay(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Delay by a possibly fractional number of samples using linear interpolation.

    Samples before the start of ``x`` are taken as zero.
    """
    if delay_samples < 0:
        raise ConfigError("delay must be nonnegative")
    whole = int(np.floor(delay_samples))
    mu = delay_samples - whole
    out = np.zeros(len(x), dtype=complex)
    if whole < len(x):
        out[whole:] = x[: len(x) - whole]
    if mu == 0.0:
        return out
    later = np.zeros(len(x), dtype=complex)
    if whole + 1 < len(x):
        later[whole + 1:] = x[: len(x) - whole - 1]
    return (1.0 - mu) * out + mu * later


def _noise(rng, n, power):
    if power == 0:
        return np.zeros(n, dtype=complex)
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(power / 2)


def _static_paths(s, fs, paths):
    out = np.zeros(len(s), dtype=complex)
    for gain, delay in paths:
        if gain != 0:
            out += gain * fractional_delay(s, delay * fs)
    return out


def apply_reference_channel(tx: IqCapture, cfg: ChannelConfig, seed, receiver_id: int = 1) -> IqCapture:
    """``gain * s(t - delay) + noise`` sampled on the transmit grid."""
    if tx.channel_role != "transmit":
        raise ConfigError("reference channel expects a transmit-side capture")
    rng = np.random.default_rng(seed)
    s = tx.samples.astype(complex)
    y = _static_paths(s, tx.sample_rate, [(cfg.los_gain, cfg.los_delay)])
    y += _noise(rng, len(s), cfg.noise_power)
    return IqCapture(
        y, tx.sample_rate, tx.start_time, "reference", receiver_id, center_freq_hz=tx.center_freq_hz,
        creator_seed=_seed_int(seed),
    )


def _seed_int(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def micro_doppler_schedule(md: MicroDopplerConfig, seed: int, t0: float, t1: float):
    """Per-slot ``(active, offsets, amplitudes, phases)`` for a capture spanning ``[t0, t1]``.

    Drawn from a stream of its own so the schedule can be reproduced
    without re-running the channel simulation.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))
    n_slots = int(np.ceil((t1 - t0) / md.slot_duration)) + 1
    active = rng.random(n_slots) < md.duty
    offsets = rng.uniform(*md.offset_range, n_slots)
    amps = rng.uniform(*md.amplitude_range, n_slots)
    phases = rng.uniform(0, 2 * np.pi, n_slots)
    return active, offsets, amps, phases


def apply_surveillance_channel(
    tx: IqCapture,
    track: GroundTruthTrack,
    geom: ScenarioGeometry,
    receiver_id: int,
    cfg: ChannelConfig,
    seed,
) -> IqCapture:
    """Target echo plus static clutter plus noise.

    The echo phase is the running sum ``2*pi*sum_{m<n} f(m Ts) Ts`` of the
    instantaneous bistatic Doppler, so a constant Doppler reduces to
    ``exp(j 2 pi f (t - t_start))``. Echo delay follows the excess bistatic
    path length on top of ``cfg.los_delay``.
    """
    if tx.channel_role != "transmit":
        raise ConfigError("surveillance channel expects a transmit-side capture")
    fs = tx.sample_rate
    n = len(tx)
    t_start = tx.start_time
    t_end = t_start + (n - 1) / fs
    half = 0.5 / fs
    if track.times[0] > t_start + half or track.times[-1] < t_end - half:
        raise CoverageError(
            f"track covers [{track.times[0]}, {track.times[-1]}] s but capture spans [{t_start}, {t_end}] s"
        )

    rng = np.random.default_rng(seed)
    s = tx.samples.astype(complex)
    y = _static_paths(s, fs, [(cfg.los_gain, cfg.los_delay), *cfg.clutter_paths])

    if cfg.target_gain != 0:
        txp, rxp, lam = geom.tx(receiver_id), geom.rx(receiver_id), geom.wavelength(receiver_id)
        baseline = float(np.linalg.norm(txp - rxp))
        md = cfg.micro_doppler
        gate = micro_doppler_schedule(md, seed, t_start, t_end + 1 / fs) if md is not None else None
        ref_range = None
        phase0 = 0.0
        for lo in range(0, n, _CHUNK):
            hi = min(n, lo + _CHUNK)
            idx = np.arange(lo, hi)
            t = np.clip(t_start + idx / fs, track.times[0], track.times[-1])
            p = track.position_at(t)
            v = track.velocity_at(t)
            f = bistatic_doppler(p, v, txp, rxp, lam)
            steps = 2 * np.pi * f / fs
            phase = phase0 + np.concatenate([[0.0], np.cumsum(steps[:-1])])
            phase0 = phase[-1] + steps[-1]

            d_tx = np.hypot(*(p - txp).T)
            d_rx = np.hypot(*(p - rxp).T)
            delay = cfg.los_delay * fs + (d_tx + d_rx - baseline) / SPEED_OF_LIGHT * fs
            pos = idx - delay
            base = np.floor(pos).astype(np.int64)
            mu = pos - base
            s0 = np.where(base >= 0, s[np.clip(base, 0, n - 1)], 0)
            s1 = np.where(base + 1 >= 0, s[np.clip(base + 1, 0, n - 1)], 0)
            delayed = (1 - mu) * s0 + mu * s1

            gain = np.full(hi - lo, cfg.target_gain, dtype=complex)
            if cfg.target_gain_model == "bistatic_range":
                prod = d_tx * d_rx
                if ref_range is None:
                    ref_range = prod[0]
                gain = gain * (ref_range / prod)
            echo = gain * delayed * np.exp(1j * phase)

            if gate is not None:
                active, offsets, amps, phases = gate
                slot = ((t_start + idx / fs - t_start) / md.slot_duration).astype(np.int64)
                tt = idx / fs
                side = 2 * np.cos(2 * np.pi * offsets[slot] * tt + phases[slot]) * amps[slot]
                echo = echo * (1 + np.where(active[slot], side, 0.0))
            y[lo:hi] += echo

    y += _noise(rng, n, cfg.noise_power)
    return IqCapture(
        y, fs, t_start, "surveillance", receiver_id, center_freq_hz=tx.center_freq_hz, creator_seed=_seed_int(seed)
    )


def with_start_time(cap: IqCapture, start_time: float) -> IqCapture:
    return replace(cap, start_time=start_time)
