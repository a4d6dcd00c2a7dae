"""Delay-maximised cross-ambiguity function and time-Doppler spectrograms."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigError, ContractError, CoverageError, WindowError
from .waveform import IqCapture


@dataclass(frozen=True)
class CafParams:
    """CAF windowing.

    ``doppler_span=None`` keeps the full FFT grid (``N_w`` bins, centred).
    """

    window_duration: float = 0.5
    detection_period: float = 0.05
    doppler_span: float | None = 500.0
    delay_taps: int = 4
    require_cleaned: bool = False

    def __post_init__(self):
        if not self.detection_period > 0:
            raise ConfigError("detection_period must be positive")
        if self.window_duration < self.detection_period:
            raise ConfigError("window_duration must be at least detection_period")
        if self.delay_taps < 1:
            raise ConfigError("delay_taps must be at least 1")
        if self.doppler_span is not None and not self.doppler_span > 0:
            raise ConfigError("doppler_span must be positive")

    def window_samples(self, sample_rate: float) -> int:
        return int(round(self.window_duration * sample_rate))

    def stride_samples(self, sample_rate: float) -> int:
        return int(round(self.detection_period * sample_rate))

    def resolution(self, sample_rate: float) -> float:
        return sample_rate / self.window_samples(sample_rate)

    def range_rate_resolution(self, sample_rate: float, wavelength: float) -> float:
        """Bistatic range-rate step ``lambda * df`` of one Doppler bin, m/s."""
        return wavelength * self.resolution(sample_rate)

    def bin_indices(self, sample_rate: float) -> np.ndarray:
        """Signed FFT bin numbers retained in a CafMap, ascending."""
        nw = self.window_samples(sample_rate)
        if self.doppler_span is None:
            return np.arange(-(nw // 2), nw - nw // 2)
        half = int(round(self.doppler_span / self.resolution(sample_rate)))
        if 2 * half + 1 > nw:
            raise ConfigError("doppler span exceeds the FFT grid")
        return np.arange(-half, half + 1)


@dataclass
class CafMap:
    """Doppler profile of one detection instance.

    ``time_s`` is the centre of the integration window, the epoch the
    measured Doppler refers to; ``window_start_s`` is where the window
    begins.
    """

    k: int
    doppler_hz: np.ndarray
    magnitude: np.ndarray
    delay_index: np.ndarray
    df: float
    time_s: float = 0.0
    window_start_s: float = 0.0

    def __len__(self):
        return len(self.magnitude)


def _caf_core(surv, ref_ext, taps, bins, workers=None):
    """Magnitudes maximised over delay for window ``surv``.

    ``ref_ext`` holds ``taps - 1`` samples of history followed by the
    window-aligned reference samples.
    """
    nw = len(surv)
    lead = taps - 1
    prod = np.empty((taps, nw), dtype=complex)
    for tau in range(taps):
        prod[tau] = surv * np.conj(ref_ext[lead - tau: lead - tau + nw])
    spectrum = scipy.fft.fft(prod, axis=1, workers=workers)
    mags = np.abs(spectrum[:, bins % nw])
    best = np.argmax(mags, axis=0)
    return mags[best, np.arange(len(bins))], best


def compute_caf(surv_window, ref_window, params: CafParams, sample_rate: float, k: int = 0, ref_history=None):
    """CAF of one window pair.

    Without ``ref_history`` the reference is treated as zero before the
    window when evaluating delayed taps.
    """
    if isinstance(surv_window, IqCapture):
        _check_cleaned(surv_window, params)
        surv_window = surv_window.samples
    if isinstance(ref_window, IqCapture):
        ref_window = ref_window.samples
    surv = np.asarray(surv_window, dtype=complex)
    ref = np.asarray(ref_window, dtype=complex)
    nw = params.window_samples(sample_rate)
    if len(surv) != nw or len(ref) != nw:
        raise WindowError(f"windows must hold exactly {nw} samples, got {len(surv)} and {len(ref)}")
    lead = params.delay_taps - 1
    history = np.zeros(lead, dtype=complex)
    if ref_history is not None and lead:
        h = np.asarray(ref_history, dtype=complex)[-lead:]
        history[lead - len(h):] = h
    bins = params.bin_indices(sample_rate)
    df = sample_rate / nw
    mags, best = _caf_core(surv, np.concatenate([history, ref]), params.delay_taps, bins)
    return CafMap(k, bins * df, mags, best, df)


def _check_cleaned(surv: IqCapture, params: CafParams):
    if not surv.cleaned:
        msg = "surveillance capture has not been clutter-cancelled"
        if params.require_cleaned:
            raise ContractError(msg)
        warnings.warn(msg, stacklevel=3)


def instance_count(n_samples: int, params: CafParams, sample_rate: float) -> int:
    nw = params.window_samples(sample_rate)
    if n_samples < nw:
        return 0
    return (n_samples - nw) // params.stride_samples(sample_rate) + 1


def caf_spectrogram(surv: IqCapture, ref: IqCapture, params: CafParams = CafParams(), workers=None) -> list[CafMap]:
    """One CafMap per detection instance, windows starting every ``N_0`` samples."""
    from .clutter import check_aligned

    check_aligned(surv, ref)
    _check_cleaned(surv, params)
    fs = surv.sample_rate
    count = instance_count(len(surv), params, fs)
    if count == 0:
        raise CoverageError(
            f"capture of {len(surv)} samples is shorter than one {params.window_samples(fs)}-sample window"
        )
    nw = params.window_samples(fs)
    n0 = params.stride_samples(fs)
    lead = params.delay_taps - 1
    bins = params.bin_indices(fs)
    df = fs / nw
    s = surv.samples.astype(complex)
    r = np.concatenate([np.zeros(lead, dtype=complex), ref.samples.astype(complex)])
    maps = []
    for k in range(count):
        a = k * n0
        mags, best = _caf_core(s[a:a + nw], r[a:a + nw + lead], params.delay_taps, bins, workers)
        start = surv.start_time + a / fs
        maps.append(CafMap(k, bins * df, mags, best, df, start + 0.5 * nw / fs, start))
    return maps


def spectrogram_matrix(maps: list[CafMap]) -> np.ndarray:
    return np.stack([m.magnitude for m in maps])
