"""End-to-end configuration, seeding and file-based pipeline stages.

A run directory holds every intermediate product under fixed names, and
each stage reads only what earlier stages wrote there:

    simulate  truth.csv, scenario.json, ref_rx{i}.cf32, surv_rx{i}.cf32
    cancel    clean_rx{i}.cf32
    caf       spectrogram_rx{i}.bin / .bin.json / .csv
    detect    detections_rx{i}.json, doppler_rx{i}.csv, baseline_rx{i}.csv
    track     track_<label>.csv, init.json
    eval      errors_<label>.csv, cdf_<label>.csv, summary.json
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fileio
from .caf import CafParams, caf_spectrogram
from .clutter import CancellationConfig, cancel_clutter
from .detection import (
    MEASURED,
    DopplerTrack,
    FilterParams,
    KalmanConfig,
    ThresholdParams,
    adaptive_threshold_detect,
    kalman_smooth,
    max_peak_baseline,
    track_filter,
)
from .errors import BistaticError, ConfigError, StageError
from .evaluation import LABELS, ErrorReport, percentile, signed_cross_track, tracking_errors
from .scenario import Scenario, ScenarioGeometry
from .tracking import (
    COND_GUARD,
    TrackEstimate,
    bearing_deg,
    integrate_trajectory,
    perturb_initial_location,
    triangulate_many,
)
from .waveform import (
    ChannelConfig,
    WaveformConfig,
    apply_reference_channel,
    apply_surveillance_channel,
    gen_tx_signal,
)

RECEIVERS = (1, 2)
STAGES = ("simulate", "cancel", "caf", "detect", "track", "eval")

# stable identifiers for the independent random streams of a run
_STREAMS = {"waveform": 1, "reference": 2, "surveillance": 3, "noisy_init": 4, "aoa": 5}


def derive_seed(master_seed: int, stream: str, *index: int) -> int:
    """64-bit seed for one random stream, a pure function of the master seed."""
    ss = np.random.SeedSequence([int(master_seed), _STREAMS[stream], *map(int, index)])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class TrackingParams:
    cond_guard: float = COND_GUARD
    bearing_noise_std_deg: float = 1.55
    # accept the first noisy-init draw whose initial error falls in this band
    initial_error_band: tuple | None = (0.8, 0.9)
    max_init_draws: int = 10_000

    def __post_init__(self):
        if self.bearing_noise_std_deg < 0:
            raise ConfigError("bearing noise std must be nonnegative")
        if self.initial_error_band is not None:
            lo, hi = self.initial_error_band
            if not 0 <= lo <= hi:
                raise ConfigError("initial_error_band must be an ordered nonnegative pair")


@dataclass
class PipelineConfig:
    scenario: Scenario
    waveform: WaveformConfig
    reference_channel: ChannelConfig
    surveillance_channel: ChannelConfig
    cancellation: CancellationConfig
    caf: CafParams
    threshold: ThresholdParams
    filter: FilterParams
    kalman: KalmanConfig
    tracking: TrackingParams
    master_seed: int
    output_dir: Path
    raw: dict = field(default_factory=dict)

    @property
    def geometry(self) -> ScenarioGeometry:
        return self.scenario.geometry

    def with_seed(self, seed: int) -> "PipelineConfig":
        raw = copy.deepcopy(self.raw)
        raw["master_seed"] = int(seed)
        return replace(self, master_seed=int(seed), raw=raw)

    def with_output_dir(self, path) -> "PipelineConfig":
        return replace(self, output_dir=Path(path))

    def digest(self) -> str:
        return fileio.config_digest(self.raw)


def _block(d, key, cls, **extra):
    kw = dict(d.get(key) or {})
    kw.update({k: v for k, v in extra.items() if k not in kw})
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"block '{key}': {exc}") from None


def _surveillance_block(d: dict) -> dict:
    block = dict(d.get("surveillance_channel") or {})
    snr = block.pop("target_snr_db", None)
    if snr is not None:
        if "target_gain" in block:
            raise ConfigError("give either target_gain or target_snr_db, not both")
        ref_power = block.get("noise_power", 1.0) or 1.0
        block["target_gain"] = math.sqrt(ref_power * 10 ** (float(snr) / 10))
    return block


def config_from_dict(d: dict, base_dir=".") -> PipelineConfig:
    """Validate a pipeline description; relative paths resolve against ``base_dir``."""
    base_dir = Path(base_dir)
    raw = copy.deepcopy(d)
    scen = d.get("scenario")
    if scen is None:
        raise ConfigError("pipeline config needs a 'scenario'")
    if isinstance(scen, str):
        path = base_dir / scen
        if not path.is_file():
            raise ConfigError(f"scenario file {path} does not exist")
        with open(path, encoding="utf-8") as fh:
            scen = json.load(fh)
        raw["scenario"] = scen
    scenario = Scenario.from_dict(scen)

    wf = dict(d.get("waveform") or {})
    wf.pop("seed", None)
    if "duration" not in wf:
        fs = float(wf.get("sample_rate", WaveformConfig.sample_rate))
        wf["duration"] = math.floor(scenario.truth.duration * fs) / fs
    caf = _block(d, "caf", CafParams)
    kalman = _block(d, "kalman", KalmanConfig, dt=caf.detection_period)
    tracking_kw = dict(d.get("tracking") or {})
    if tracking_kw.get("initial_error_band") is not None:
        tracking_kw["initial_error_band"] = tuple(tracking_kw["initial_error_band"])
    try:
        cfg = PipelineConfig(
            scenario=scenario,
            waveform=WaveformConfig(**wf),
            reference_channel=ChannelConfig.from_dict(d.get("reference_channel") or {}),
            surveillance_channel=ChannelConfig.from_dict(_surveillance_block(d)),
            cancellation=_block(d, "cancellation", CancellationConfig),
            caf=caf,
            threshold=_block(d, "threshold", ThresholdParams),
            filter=_block(d, "filter", FilterParams),
            kalman=kalman,
            tracking=TrackingParams(**tracking_kw),
            master_seed=int(d.get("master_seed", 0)),
            output_dir=Path(d.get("output_dir", "run")),
            raw=raw,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if abs(cfg.kalman.dt - caf.detection_period) > 1e-12:
        raise ConfigError("kalman.dt must equal the detection period")
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(d, path.parent)


def bundled_config_path(name: str) -> Path:
    """Path of a configuration shipped in the package ``data`` directory."""
    path = Path(__file__).parent / "data" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


# ---------------------------------------------------------------------------
# run directory layout


class RunLayout:
    def __init__(self, root):
        self.root = Path(root)

    def p(self, name) -> Path:
        return self.root / name

    truth = property(lambda self: self.p("truth.csv"))
    scenario = property(lambda self: self.p("scenario.json"))
    init = property(lambda self: self.p("init.json"))
    summary = property(lambda self: self.p("summary.json"))

    def ref(self, rid):
        return self.p(f"ref_rx{rid}.cf32")

    def surv(self, rid):
        return self.p(f"surv_rx{rid}.cf32")

    def clean(self, rid):
        return self.p(f"clean_rx{rid}.cf32")

    def spectrogram(self, rid):
        return self.p(f"spectrogram_rx{rid}")

    def detections(self, rid):
        return self.p(f"detections_rx{rid}.json")

    def doppler(self, rid):
        return self.p(f"doppler_rx{rid}.csv")

    def baseline(self, rid):
        return self.p(f"baseline_rx{rid}.csv")

    def track(self, label):
        return self.p(f"track_{label}.csv")

    def errors(self, label):
        return self.p(f"errors_{label}.csv")

    def cdf(self, label):
        return self.p(f"cdf_{label}.csv")


def run_guarded(stage, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except StageError:
        raise
    except BistaticError as exc:
        raise StageError(stage, exc, getattr(exc, "index", None)) from exc


# ---------------------------------------------------------------------------
# stages


def simulate(cfg: PipelineConfig, layout: RunLayout):
    fileio.ensure_dir(layout.root)
    truth = cfg.scenario.truth
    fileio.write_truth(layout.truth, truth)
    with open(layout.scenario, "w", encoding="utf-8") as fh:
        json.dump({"geometry": cfg.geometry.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for rid in RECEIVERS:
        wf = replace(cfg.waveform, seed=derive_seed(cfg.master_seed, "waveform", rid))
        tx = gen_tx_signal(wf)
        tx = replace(tx, start_time=float(truth.times[0]))
        ref = apply_reference_channel(tx, cfg.reference_channel, derive_seed(cfg.master_seed, "reference", rid), rid)
        surv = apply_surveillance_channel(
            tx, truth, cfg.geometry, rid, cfg.surveillance_channel, derive_seed(cfg.master_seed, "surveillance", rid)
        )
        fileio.write_iq(layout.ref(rid), ref)
        fileio.write_iq(layout.surv(rid), surv)


def cancel_files(surv_path, ref_path, out_path, params: CancellationConfig = CancellationConfig()):
    clean = cancel_clutter(fileio.read_iq(surv_path), fileio.read_iq(ref_path), params)
    return fileio.write_iq(out_path, clean)


def cancel(cfg: PipelineConfig, layout: RunLayout):
    for rid in RECEIVERS:
        cancel_files(layout.surv(rid), layout.ref(rid), layout.clean(rid), cfg.cancellation)


def caf_files(surv_path, ref_path, out_prefix, params: CafParams = CafParams()):
    surv = fileio.read_iq(surv_path)
    maps = caf_spectrogram(surv, fileio.read_iq(ref_path), params)
    return fileio.write_spectrogram(out_prefix, maps, surv.receiver_id)


def caf(cfg: PipelineConfig, layout: RunLayout):
    for rid in RECEIVERS:
        caf_files(layout.clean(rid), layout.ref(rid), layout.spectrogram(rid), cfg.caf)


def baseline_track(maps, receiver_id: int) -> DopplerTrack:
    """Max-peak Doppler per instance, with no filtering or smoothing."""
    f = np.array([max_peak_baseline(m) for m in maps])
    return DopplerTrack(
        receiver_id,
        np.array([m.k for m in maps], dtype=int),
        np.array([m.time_s for m in maps]),
        f,
        [MEASURED] * len(maps),
        f.copy(),
    )


def detect_files(spectrogram_prefix, out_dir, threshold=ThresholdParams(), filt=FilterParams(), kalman=None, receiver_id=None):
    maps = fileio.read_spectrogram(spectrogram_prefix)
    rid = receiver_id or fileio.spectrogram_receiver(spectrogram_prefix) or 1
    if kalman is None:
        kalman = KalmanConfig(dt=maps[1].time_s - maps[0].time_s if len(maps) > 1 else KalmanConfig.dt)
    sets = [adaptive_threshold_detect(m, threshold, rid) for m in maps]
    layout = RunLayout(out_dir)
    fileio.ensure_dir(layout.root)
    fileio.write_detections(layout.detections(rid), sets)
    track = kalman_smooth(track_filter(sets, filt), kalman)
    fileio.write_doppler_track(layout.doppler(rid), track)
    fileio.write_doppler_track(layout.baseline(rid), baseline_track(maps, rid))
    return track


def detect(cfg: PipelineConfig, layout: RunLayout):
    for rid in RECEIVERS:
        detect_files(layout.spectrogram(rid), layout.root, cfg.threshold, cfg.filter, cfg.kalman, rid)


def common_span(tracks) -> tuple[int, int]:
    """Instances covered by every track: from the later anchor to the earlier end."""
    k0 = max(int(t.k[0]) for t in tracks)
    k1 = min(int(t.k[-1]) for t in tracks)
    if k1 < k0:
        raise ConfigError("Doppler tracks of the two receivers do not overlap")
    return k0, k1


def noisy_initial_location(p0, geom, params: TrackingParams, master_seed: int):
    """Perturbed start point; draws are repeated until the error lies in the configured band."""
    for draw in range(params.max_init_draws):
        seed = derive_seed(master_seed, "noisy_init", draw)
        p = perturb_initial_location(p0, geom, params.bearing_noise_std_deg, seed)
        err = float(np.linalg.norm(p - p0))
        band = params.initial_error_band
        if band is None or band[0] <= err <= band[1]:
            return p, {"seed": seed, "draw": draw, "initial_error_m": err}
    raise ConfigError(f"no initial-location draw within {params.initial_error_band} m after {params.max_init_draws} tries")


def aoa_track(truth, geom, times, k, dt, std_deg: float, seed: int) -> TrackEstimate:
    """Independent noisy-bearing triangulation at every instance."""
    p_true = truth.position_at(times)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, std_deg, (len(times), 2))
    b1 = bearing_deg(geom.rx1, p_true) + noise[:, 0]
    b2 = bearing_deg(geom.rx2, p_true) + noise[:, 1]
    pos = triangulate_many(geom.rx1, b1, geom.rx2, b2)
    vel = np.zeros_like(pos)
    vel[:-1] = (pos[1:] - pos[:-1]) / dt
    return TrackEstimate(np.asarray(k), np.asarray(times), pos, vel, np.full(len(k), np.nan), dt, "aoa_triangulation")


def track(cfg: PipelineConfig, layout: RunLayout):
    truth = fileio.read_truth(layout.truth)
    with open(layout.scenario, encoding="utf-8") as fh:
        geom = ScenarioGeometry.from_dict(json.load(fh)["geometry"])
    dt = cfg.caf.detection_period
    guard = cfg.tracking.cond_guard
    filt = [fileio.read_doppler_track(layout.doppler(r), r) for r in RECEIVERS]
    base = [fileio.read_doppler_track(layout.baseline(r), r) for r in RECEIVERS]
    k0, k1 = common_span(filt + base)
    filt = [t.crop(k0, k1) for t in filt]
    base = [t.crop(k0, k1) for t in base]
    times = filt[0].time_s
    p0 = truth.position_at(times[0])
    perfect = integrate_trajectory(p0, tuple(filt), geom, dt, guard)
    p_noisy, noisy_meta = noisy_initial_location(p0, geom, cfg.tracking, cfg.master_seed)
    aoa_seed = derive_seed(cfg.master_seed, "aoa")

    estimates = {
        "perfect_init": perfect,
        "noisy_init": integrate_trajectory(p_noisy, tuple(filt), geom, dt, guard),
        "baseline_maxpeak": integrate_trajectory(p0, tuple(base), geom, dt, guard),
        "aoa_triangulation": aoa_track(truth, geom, times, filt[0].k, dt, cfg.tracking.bearing_noise_std_deg, aoa_seed),
    }
    for label, est in estimates.items():
        fileio.write_track(layout.track(label), est)
    init = {
        "k_first": k0,
        "k_last": k1,
        "p0_true": p0.tolist(),
        "p0_noisy": p_noisy.tolist(),
        "noisy_init": noisy_meta,
        "aoa_seed": aoa_seed,
    }
    fileio.write_summary(layout.init, init)
    return estimates


def evaluate(cfg: PipelineConfig, layout: RunLayout) -> dict:
    truth = fileio.read_truth(layout.truth)
    init = fileio.read_summary(layout.init)
    reports = {}
    summary = {"config_digest": cfg.digest(), "master_seed": cfg.master_seed, "scenarios": {}}
    for label in LABELS:
        est = fileio.read_track(layout.track(label), cfg.caf.detection_period, label)
        rep = tracking_errors(est, truth, label)
        fileio.write_errors(layout.errors(label), rep)
        fileio.write_cdf(layout.cdf(label), rep)
        entry = {
            "p50": percentile(rep, 50),
            "p90": percentile(rep, 90),
            "max": percentile(rep, 100),
            "count": len(rep),
        }
        if label == "aoa_triangulation":
            entry["cross_track_mean_m"] = float(np.mean(signed_cross_track(est.positions, est.time_s, truth)))
        if label == "noisy_init":
            entry["initial_error_m"] = init["noisy_init"]["initial_error_m"]
        reports[label] = rep
        summary["scenarios"][label] = entry
    summary["seeds"] = {
        "waveform": [derive_seed(cfg.master_seed, "waveform", r) for r in RECEIVERS],
        "reference": [derive_seed(cfg.master_seed, "reference", r) for r in RECEIVERS],
        "surveillance": [derive_seed(cfg.master_seed, "surveillance", r) for r in RECEIVERS],
        "noisy_init": init["noisy_init"]["seed"],
        "aoa": init["aoa_seed"],
    }
    fs = cfg.waveform.sample_rate
    summary["doppler_resolution_hz"] = cfg.caf.resolution(fs)
    summary["range_rate_resolution_mps"] = [
        cfg.caf.range_rate_resolution(fs, cfg.geometry.wavelength(r)) for r in RECEIVERS
    ]
    summary["p90"] = summary["scenarios"]["perfect_init"]["p90"]
    fileio.write_summary(layout.summary, summary)
    return reports


_STAGE_FUNCS = {"simulate": simulate, "cancel": cancel, "caf": caf, "detect": detect, "track": track, "eval": evaluate}


def run_stage(name: str, cfg: PipelineConfig, out_dir=None):
    if name not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {name!r}")
    layout = RunLayout(out_dir or cfg.output_dir)
    return run_guarded(name, _STAGE_FUNCS[name], cfg, layout)


@dataclass
class PipelineResult:
    out_dir: Path
    summary: dict
    reports: dict


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> PipelineResult:
    """All stages in order; every intermediate product is written to ``out_dir``."""
    layout = RunLayout(out_dir or cfg.output_dir)
    reports = None
    for name in STAGES:
        reports = run_stage(name, cfg, layout.root)
    return PipelineResult(layout.root, fileio.read_summary(layout.summary), reports)


def scenario_suite(cfg: PipelineConfig, out_dir=None) -> dict[str, ErrorReport]:
    """The four evaluation scenarios on one set of seeded captures."""
    return run_pipeline(cfg, out_dir).reports
