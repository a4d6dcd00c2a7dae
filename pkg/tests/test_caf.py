import warnings

import numpy as np
import pytest

from bistatic_tracker.caf import CafParams, caf_spectrogram, compute_caf, instance_count, spectrogram_matrix
from bistatic_tracker.clutter import CancellationConfig, cancel_clutter
from bistatic_tracker.errors import ConfigError, ContractError, CoverageError, WindowError
from bistatic_tracker.scenario import make_waypoint_trajectory, preset_waypoints, receiver_doppler
from bistatic_tracker.waveform import (
    ChannelConfig,
    IqCapture,
    WaveformConfig,
    apply_reference_channel,
    apply_surveillance_channel,
    gen_tx_signal,
)


def direct_caf(surv, ref, taps, freqs, fs):
    """Brute-force delay-maximised CAF by explicit summation."""
    n = np.arange(len(surv))
    best = np.zeros(len(freqs))
    for tau in range(taps):
        shifted = np.concatenate([np.zeros(tau, dtype=complex), ref[: len(ref) - tau]])
        prod = surv * np.conj(shifted)
        for i, f in enumerate(freqs):
            val = abs(np.sum(prod * np.exp(-2j * np.pi * f * n / fs)))
            best[i] = max(best[i], val)
    return best


def test_pure_tone_shift_peaks_at_bin_eight():
    fs, nw = 2000.0, 1000
    rng = np.random.default_rng(1)
    ref = np.exp(2j * np.pi * rng.random(nw))
    params = CafParams()
    df = params.resolution(fs)
    assert df == 2.0
    surv = ref * np.exp(2j * np.pi * 8 * df * np.arange(nw) / fs)
    m = compute_caf(surv, ref, params, fs)
    peak = int(np.argmax(m.magnitude))
    assert m.doppler_hz[peak] == 8 * df
    assert m.magnitude[peak] == pytest.approx(1000.0, rel=1e-12)
    assert m.delay_index[peak] == 0


def test_zero_window_gives_zero_map():
    params = CafParams()
    m = compute_caf(np.zeros(1000), np.ones(1000), params, 2000.0)
    assert not np.any(m.magnitude)


def test_fft_matches_direct_summation():
    fs = 20000.0
    params = CafParams(window_duration=0.5, doppler_span=200.0, delay_taps=4)
    rng = np.random.default_rng(5)
    nw = params.window_samples(fs)
    for _ in range(3):
        s = rng.standard_normal(nw) + 1j * rng.standard_normal(nw)
        r = rng.standard_normal(nw) + 1j * rng.standard_normal(nw)
        m = compute_caf(s, r, params, fs)
        oracle = direct_caf(s, r, 4, m.doppler_hz, fs)
        assert np.max(np.abs(m.magnitude - oracle) / oracle) < 1e-6


def test_bin_count_and_default_resolution():
    params = CafParams()
    assert params.resolution(3.072e6) == 2.0
    assert params.resolution(256e3) == 2.0
    assert len(params.bin_indices(256e3)) == round(2 * 500 / 2.0) + 1
    assert len(CafParams(doppler_span=None).bin_indices(1000.0)) == 500


def test_range_rate_step_is_wavelength_times_bin_width():
    # 0.5 s window at 1.85 GHz: 2 Hz bins, c / 1.85e9 * 2 m/s
    step = CafParams().range_rate_resolution(256e3, 299_792_458.0 / 1.85e9)
    assert step == pytest.approx(0.32410, abs=1e-5)


def test_parseval_energy_at_zero_delay():
    fs = 1000.0
    params = CafParams(doppler_span=None, delay_taps=1)
    rng = np.random.default_rng(2)
    s = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    r = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    m = compute_caf(s, r, params, fs)
    prod = s * np.conj(r)
    assert np.sum(m.magnitude**2) / 500 == pytest.approx(np.sum(np.abs(prod) ** 2), rel=1e-6)


def test_shift_covariance_on_the_doppler_grid():
    fs = 1000.0
    params = CafParams(doppler_span=None, delay_taps=3)
    rng = np.random.default_rng(3)
    s = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    r = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    base = compute_caf(s, r, params, fs)
    shifted = compute_caf(s * np.exp(2j * np.pi * 6 * np.arange(500) / fs), r, params, fs)
    np.testing.assert_allclose(shifted.magnitude, np.roll(base.magnitude, 3), rtol=1e-9, atol=1e-9)


def test_window_length_and_cleaned_contract():
    params = CafParams()
    with pytest.raises(WindowError):
        compute_caf(np.zeros(999), np.zeros(1000), params, 2000.0)
    raw = IqCapture(np.zeros(1000), 2000.0, channel_role="surveillance")
    with pytest.warns(UserWarning):
        compute_caf(raw, np.zeros(1000), params, 2000.0)
    with pytest.raises(ContractError):
        compute_caf(raw, np.zeros(1000), CafParams(require_cleaned=True), 2000.0)


def test_params_validation():
    with pytest.raises(ConfigError):
        CafParams(window_duration=0.01, detection_period=0.05)
    with pytest.raises(ConfigError):
        CafParams(delay_taps=0)
    with pytest.raises(ConfigError):
        CafParams(doppler_span=600.0).bin_indices(1000.0)


def _pair(duration, surv_samples=None, fs=256e3):
    tx = gen_tx_signal(WaveformConfig.desk(duration=duration))
    ref = apply_reference_channel(tx, ChannelConfig(), 0)
    x = tx.samples if surv_samples is None else surv_samples
    return IqCapture(x, fs, channel_role="surveillance", cleaned=True), ref


def test_one_second_capture_gives_eleven_instances():
    surv, ref = _pair(1.0)
    maps = caf_spectrogram(surv, ref)
    assert [m.k for m in maps] == list(range(11))
    assert instance_count(len(surv), CafParams(), 256e3) == 11
    # time stamps refer to the window centres
    np.testing.assert_allclose([m.time_s for m in maps], 0.25 + 0.05 * np.arange(11))
    np.testing.assert_allclose([m.window_start_s for m in maps], 0.05 * np.arange(11))
    assert spectrogram_matrix(maps).shape == (11, 501)


def test_constant_doppler_echo_has_constant_ridge():
    tx = gen_tx_signal(WaveformConfig.desk(duration=1.0))
    t = np.arange(len(tx)) / tx.sample_rate
    surv, ref = _pair(1.0, tx.samples * np.exp(2j * np.pi * 30.0 * t))
    ridge = [m.doppler_hz[np.argmax(m.magnitude)] for m in caf_spectrogram(surv, ref)]
    assert set(ridge) == {30.0}


def test_short_capture_raises_coverage_error():
    surv, ref = _pair(0.4)
    with pytest.raises(CoverageError):
        caf_spectrogram(surv, ref)


def test_ridge_sign_follows_approach_and_retreat(geom):
    truth = make_waypoint_trajectory(preset_waypoints("u_shape", 8.0, (8, 8), height=8.0), 3.0, 0.005)
    fs = 256e3
    tx = gen_tx_signal(WaveformConfig.desk(duration=7.5, seed=2))
    ref = apply_reference_channel(tx, ChannelConfig(noise_power=1e-3), 1)
    surv = apply_surveillance_channel(tx, truth, geom, 1, ChannelConfig(los_gain=5.0, target_gain=0.1, noise_power=1.0), 2)
    clean = cancel_clutter(surv, ref, CancellationConfig(batch_duration=0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        maps = caf_spectrogram(clean, ref)
    times = np.array([m.time_s for m in maps])
    f_true = receiver_doppler(geom, 1, truth.position_at(times), truth.velocity_at(times))
    ridge = np.array([m.doppler_hz[np.argmax(m.magnitude)] for m in maps])
    strong = np.abs(f_true) > 6
    assert np.any(f_true[strong] > 0) and np.any(f_true[strong] < 0)
    assert np.mean(np.sign(ridge[strong]) == np.sign(f_true[strong])) > 0.95
    assert fs == clean.sample_rate
