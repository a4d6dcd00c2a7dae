import json
import shutil

import numpy as np
import pytest

from bistatic_tracker import cli, fileio, pipeline
from bistatic_tracker.errors import ConfigError, StageError
from bistatic_tracker.evaluation import LABELS

FS = 64e3


def small_config(tmp_path, **over):
    scen = {
        "geometry": {"tx1": [-51.764, -193.185], "tx2": [86.94, -212.504], "rx1": [0, 0], "rx2": [30, 0]},
        "trajectory": {"waypoints": [[8, 10], [14, 14], [20, 10]], "speed": 2.0, "sample_period": 0.005},
    }
    (tmp_path / "scen.json").write_text(json.dumps(scen))
    d = {
        "scenario": "scen.json",
        "master_seed": 7,
        "output_dir": str(tmp_path / "run"),
        "waveform": {"sample_rate": FS, "occupied_bandwidth": 0.8 * FS, "kind": "ofdm_like"},
        "reference_channel": {"los_gain": 1.0, "noise_power": 1e-3},
        "surveillance_channel": {"los_gain": 10.0, "clutter_paths": [[[3, 1], 1 / FS]], "target_snr_db": -20.0,
                                 "noise_power": 1.0},
        "cancellation": {"batch_duration": 0.5},
    }
    d.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return path


def _files(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("small")
    cfg = pipeline.load_config(small_config(base))
    result = pipeline.run_pipeline(cfg)
    return base, cfg, result


def test_pipeline_writes_every_product(small_run):
    _, cfg, result = small_run
    names = set(_files(result.out_dir))
    for rid in (1, 2):
        for n in (f"ref_rx{rid}.cf32", f"surv_rx{rid}.cf32", f"clean_rx{rid}.cf32", f"spectrogram_rx{rid}.bin",
                  f"spectrogram_rx{rid}.csv", f"detections_rx{rid}.json", f"doppler_rx{rid}.csv"):
            assert n in names
    for label in LABELS:
        assert {f"track_{label}.csv", f"cdf_{label}.csv", f"errors_{label}.csv"} <= names
    s = result.summary
    assert set(s["scenarios"]) == set(LABELS)
    assert s["p90"] == s["scenarios"]["perfect_init"]["p90"]
    assert s["config_digest"] == cfg.digest()
    assert 0.8 <= s["scenarios"]["noisy_init"]["initial_error_m"] <= 0.9


def test_identical_runs_are_byte_identical(small_run, tmp_path):
    _, cfg, result = small_run
    again = pipeline.run_pipeline(cfg, tmp_path / "again")
    assert _files(again.out_dir) == _files(result.out_dir)


def test_cli_stages_reproduce_the_pipeline(small_run, tmp_path):
    base, _, result = small_run
    out = tmp_path / "staged"
    for stage in pipeline.STAGES:
        assert cli.main([stage, "--config", str(base / "cfg.json"), "--out-dir", str(out)]) == 0
    assert _files(out) == _files(result.out_dir)


def test_single_file_stage_commands(small_run, tmp_path):
    _, _, result = small_run
    root = result.out_dir
    for name in ("surv_rx1.cf32", "ref_rx1.cf32"):
        shutil.copy(root / name, tmp_path / name)
        shutil.copy(root / (name + ".json"), tmp_path / (name + ".json"))
    assert cli.main(["cancel", "--surv", str(tmp_path / "surv_rx1.cf32"), "--ref", str(tmp_path / "ref_rx1.cf32"),
                     "--output", str(tmp_path / "clean.cf32"), "--config", str(small_run[0] / "cfg.json")]) == 0
    assert (tmp_path / "clean.cf32").read_bytes() == (root / "clean_rx1.cf32").read_bytes()
    assert cli.main(["caf", "--surv", str(tmp_path / "clean.cf32"), "--ref", str(tmp_path / "ref_rx1.cf32"),
                     "--output", str(tmp_path / "spectrogram_rx1")]) == 0
    assert (tmp_path / "spectrogram_rx1.bin").read_bytes() == (root / "spectrogram_rx1.bin").read_bytes()
    assert cli.main(["detect", "--spectrogram", str(tmp_path / "spectrogram_rx1"),
                     "--config", str(small_run[0] / "cfg.json"), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "doppler_rx1.csv").read_bytes() == (root / "doppler_rx1.csv").read_bytes()


def test_errors_recomputed_from_exported_csv(small_run):
    _, _, result = small_run
    root = result.out_dir
    truth = fileio.read_csv(root / "truth.csv")
    tt = np.array(truth["time_s"], float)
    tx, ty = np.array(truth["x_m"], float), np.array(truth["y_m"], float)
    track = fileio.read_csv(root / "track_perfect_init.csv")
    t = np.array(track["time_s"], float)
    ex = np.array(track["x_m"], float) - np.interp(t, tt, tx)
    ey = np.array(track["y_m"], float) - np.interp(t, tt, ty)
    exported = np.array(fileio.read_csv(root / "errors_perfect_init.csv")["error_m"], float)
    np.testing.assert_allclose(exported, np.hypot(ex, ey), rtol=1e-12, atol=1e-15)


def test_seed_override_changes_outputs(small_run, tmp_path):
    base, cfg, result = small_run
    other = pipeline.run_pipeline(cfg.with_seed(8), tmp_path / "seed8")
    assert other.summary["master_seed"] == 8
    assert other.summary["config_digest"] != result.summary["config_digest"]
    assert (other.out_dir / "surv_rx1.cf32").read_bytes() != (result.out_dir / "surv_rx1.cf32").read_bytes()


def test_seed_derivation_is_stable_and_stream_separated():
    a = pipeline.derive_seed(1, "waveform", 1)
    assert a == pipeline.derive_seed(1, "waveform", 1)
    assert len({a, pipeline.derive_seed(1, "waveform", 2), pipeline.derive_seed(1, "reference", 1),
                pipeline.derive_seed(2, "waveform", 1)}) == 4


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        pipeline.load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        pipeline.load_config(small_config(tmp_path, scenario="nope.json"))
    with pytest.raises(ConfigError):
        pipeline.load_config(small_config(tmp_path, caf={"window_duration": 0.5, "bogus": 1}))
    with pytest.raises(ConfigError):
        pipeline.load_config(small_config(tmp_path, kalman={"dt": 0.1}))
    assert cli.main(["pipeline", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["pipeline", "--config", "no_such_bundled"]) == 2


def test_degenerate_geometry_reports_stage_and_instance(tmp_path, capsys):
    # both bistatic pairs and the target on one line: the Doppler matrix is singular
    scen = {
        "geometry": {"tx1": [0, -100], "tx2": [0, -200], "rx1": [0, 0], "rx2": [0, -50]},
        "trajectory": {"waypoints": [[0, 10], [0, 20]], "speed": 1.0, "sample_period": 0.005},
    }
    cfg = small_config(tmp_path)
    (tmp_path / "scen.json").write_text(json.dumps(scen))
    assert cli.main(["pipeline", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert "stage 'track'" in err and "instance" in err
    with pytest.raises(StageError) as exc:
        pipeline.run_stage("track", pipeline.load_config(cfg))
    assert exc.value.stage == "track" and exc.value.index is not None


def test_caf_on_empty_capture_exits_nonzero(tmp_path):
    from bistatic_tracker.waveform import IqCapture

    fileio.write_iq(tmp_path / "s.cf32", IqCapture(np.zeros(0), FS, channel_role="surveillance", cleaned=True))
    fileio.write_iq(tmp_path / "r.cf32", IqCapture(np.zeros(0), FS, channel_role="reference"))
    assert cli.main(["caf", "--surv", str(tmp_path / "s.cf32"), "--ref", str(tmp_path / "r.cf32")]) == 3


def test_bundled_configs_load():
    for name in ("u_shape_desk", "triangle_desk", "triangle_microdoppler_desk"):
        cfg = pipeline.load_config(pipeline.bundled_config_path(name))
        assert cfg.caf.resolution(cfg.waveform.sample_rate) == 2.0
        assert cfg.scenario.truth.duration >= 30.0
        assert np.max(np.linalg.norm(cfg.scenario.truth.velocities, axis=1)) <= 8.0
