"""On-disk formats: cf32le IQ captures, spectrograms, tracks and reports.

Every float written to CSV uses ``repr`` so that reading a file back gives
the exact value that was written; the stages of the pipeline exchange data
only through these files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .caf import CafMap
from .detection import PROVENANCES, DetectionSet, DopplerTrack
from .errors import ConfigError, IqFormatError
from .evaluation import ErrorReport, cdf_table
from .scenario import GroundTruthTrack
from .tracking import TrackEstimate
from .waveform import ROLES, IqCapture

FORMAT_TAG = "cf32le"
_CF32 = np.dtype("<f4")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# IQ captures


def write_iq(path, capture: IqCapture) -> Path:
    """Write interleaved little-endian float32 I/Q pairs plus a ``.json`` sidecar."""
    path = Path(path)
    inter = np.empty(2 * len(capture), dtype=_CF32)
    inter[0::2] = capture.samples.real
    inter[1::2] = capture.samples.imag
    path.write_bytes(inter.tobytes())
    header = {
        "sample_rate_hz": float(capture.sample_rate),
        "center_freq_hz": float(capture.center_freq_hz),
        "start_time_s": float(capture.start_time),
        "receiver_id": capture.receiver_id,
        "channel_role": capture.channel_role,
        "cleaned": bool(capture.cleaned),
        "sample_count": len(capture),
        "format_tag": FORMAT_TAG,
        "creator_seed": capture.creator_seed,
    }
    _write_json(sidecar_path(path), header)
    return path


def read_iq(path) -> IqCapture:
    path = Path(path)
    try:
        header = _read_json(sidecar_path(path))
    except FileNotFoundError:
        raise IqFormatError(f"missing sidecar {sidecar_path(path)}") from None
    if header.get("format_tag") != FORMAT_TAG:
        raise IqFormatError(f"unknown format tag {header.get('format_tag')!r}")
    if header.get("channel_role") not in ROLES:
        raise IqFormatError(f"unknown channel role {header.get('channel_role')!r}")
    raw = path.read_bytes()
    if len(raw) % 8:
        raise IqFormatError(f"payload of {len(raw)} bytes is not a whole number of cf32 samples")
    count = len(raw) // 8
    if count != header.get("sample_count"):
        raise IqFormatError(f"header declares {header.get('sample_count')} samples, payload holds {count}")
    inter = np.frombuffer(raw, dtype=_CF32)
    samples = np.empty(count, dtype=np.complex64)
    samples.real = inter[0::2]
    samples.imag = inter[1::2]
    return IqCapture(
        samples,
        float(header["sample_rate_hz"]),
        float(header["start_time_s"]),
        header["channel_role"],
        header.get("receiver_id"),
        bool(header.get("cleaned", False)),
        float(header.get("center_freq_hz", 0.0)),
        header.get("creator_seed"),
    )


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, columns: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return Path(path)


def read_csv(path, expected: list[str] | None = None) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        try:
            head = next(r)
        except StopIteration:
            raise ConfigError(f"{path} is empty") from None
        if expected is not None and head != expected:
            raise ConfigError(f"{path}: expected columns {expected}, found {head}")
        cols = {c: [] for c in head}
        for row in r:
            for c, v in zip(head, row):
                cols[c].append(v)
    return cols


def _floats(col):
    return np.array([float(v) for v in col], dtype=float)


def _ints(col):
    return np.array([int(v) for v in col], dtype=int)


# ---------------------------------------------------------------------------
# ground truth

TRUTH_COLUMNS = ["time_s", "x_m", "y_m", "vx_mps", "vy_mps"]


def write_truth(path, truth: GroundTruthTrack) -> Path:
    rows = zip(truth.times, truth.positions[:, 0], truth.positions[:, 1], truth.velocities[:, 0], truth.velocities[:, 1])
    return write_csv(path, TRUTH_COLUMNS, rows)


def read_truth(path) -> GroundTruthTrack:
    c = read_csv(path, TRUTH_COLUMNS)
    t = _floats(c["time_s"])
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
    pos = np.column_stack([_floats(c["x_m"]), _floats(c["y_m"])])
    vel = np.column_stack([_floats(c["vx_mps"]), _floats(c["vy_mps"])])
    return GroundTruthTrack(dt, t, pos, vel)


# ---------------------------------------------------------------------------
# spectrograms


SPECTROGRAM_COLUMNS = ["k", "time_s", "doppler_hz", "magnitude"]


def write_spectrogram(prefix, maps: list[CafMap], receiver_id=None) -> Path:
    """Binary ``<prefix>.bin`` with a JSON header plus a long-format ``<prefix>.csv``.

    The binary holds the ``(K, B)`` float64 magnitude matrix followed by the
    ``(K, B)`` int32 delay-index matrix, both little-endian row-major.
    """
    prefix = Path(prefix)
    if not maps:
        raise ConfigError("no CAF maps to write")
    mag = np.stack([m.magnitude for m in maps]).astype("<f8")
    delay = np.stack([m.delay_index for m in maps]).astype("<i4")
    with open(prefix.with_suffix(".bin"), "wb") as fh:
        fh.write(mag.tobytes())
        fh.write(delay.tobytes())
    header = {
        "shape": list(mag.shape),
        "magnitude_dtype": "<f8",
        "delay_dtype": "<i4",
        "receiver_id": receiver_id,
        "df_hz": float(maps[0].df),
        "doppler_hz": [float(f) for f in maps[0].doppler_hz],
        "k": [int(m.k) for m in maps],
        "time_s": [float(m.time_s) for m in maps],
        "window_start_s": [float(m.window_start_s) for m in maps],
    }
    _write_json(prefix.with_suffix(".bin.json"), header)
    rows = ((m.k, m.time_s, f, a) for m in maps for f, a in zip(m.doppler_hz, m.magnitude))
    write_csv(prefix.with_suffix(".csv"), SPECTROGRAM_COLUMNS, rows)
    return prefix.with_suffix(".bin")


def read_spectrogram(prefix) -> list[CafMap]:
    prefix = Path(prefix)
    if prefix.suffix == ".bin":
        prefix = prefix.with_suffix("")
    h = _read_json(prefix.with_suffix(".bin.json"))
    shape = tuple(h["shape"])
    raw = prefix.with_suffix(".bin").read_bytes()
    n = shape[0] * shape[1]
    if len(raw) != n * 12:
        raise IqFormatError(f"spectrogram payload holds {len(raw)} bytes, header implies {n * 12}")
    mag = np.frombuffer(raw[: 8 * n], dtype="<f8").reshape(shape)
    delay = np.frombuffer(raw[8 * n:], dtype="<i4").reshape(shape)
    f = np.array(h["doppler_hz"], dtype=float)
    return [
        CafMap(k, f.copy(), mag[i].astype(float), delay[i].astype(int), h["df_hz"], t, ws)
        for i, (k, t, ws) in enumerate(zip(h["k"], h["time_s"], h["window_start_s"]))
    ]


def spectrogram_receiver(prefix):
    prefix = Path(prefix)
    if prefix.suffix == ".bin":
        prefix = prefix.with_suffix("")
    return _read_json(prefix.with_suffix(".bin.json")).get("receiver_id")


# ---------------------------------------------------------------------------
# detections and Doppler tracks


def write_detections(path, sets: list[DetectionSet]) -> Path:
    payload = [
        {"k": s.k, "receiver_id": s.receiver_id, "time_s": s.time_s,
         "detections": [{"doppler_hz": f, "magnitude": m} for f, m in s.detections]}
        for s in sets
    ]
    _write_json(path, payload)
    return Path(path)


def read_detections(path) -> list[DetectionSet]:
    return [
        DetectionSet(d["k"], d["receiver_id"], [(x["doppler_hz"], x["magnitude"]) for x in d["detections"]], d["time_s"])
        for d in _read_json(path)
    ]


DOPPLER_COLUMNS = ["k", "time_s", "f_hat_hz", "provenance", "f_tilde_hz"]


def write_doppler_track(path, track: DopplerTrack) -> Path:
    f_tilde = track.f_tilde if track.f_tilde is not None else [""] * len(track)
    rows = zip(track.k, track.time_s, track.f_hat, track.provenance, f_tilde)
    return write_csv(path, DOPPLER_COLUMNS, rows)


def read_doppler_track(path, receiver_id: int) -> DopplerTrack:
    c = read_csv(path, DOPPLER_COLUMNS)
    prov = c["provenance"]
    bad = set(prov) - set(PROVENANCES)
    if bad:
        raise ConfigError(f"{path}: unknown provenance tags {sorted(bad)}")
    f_tilde = None if any(v == "" for v in c["f_tilde_hz"]) else _floats(c["f_tilde_hz"])
    return DopplerTrack(
        receiver_id, _ints(c["k"]), _floats(c["time_s"]), _floats(c["f_hat_hz"]), list(prov), f_tilde,
        held_tail=bool(prov) and prov[-1] == "held",
    )


# ---------------------------------------------------------------------------
# trajectories and reports

TRACK_COLUMNS = ["k", "time_s", "x_m", "y_m", "vx_mps", "vy_mps", "cond"]


def write_track(path, est: TrackEstimate) -> Path:
    rows = zip(est.k, est.time_s, est.positions[:, 0], est.positions[:, 1], est.velocities[:, 0],
               est.velocities[:, 1], est.cond)
    return write_csv(path, TRACK_COLUMNS, rows)


def read_track(path, dt: float = 0.0, label: str = "") -> TrackEstimate:
    c = read_csv(path, TRACK_COLUMNS)
    return TrackEstimate(
        _ints(c["k"]),
        _floats(c["time_s"]),
        np.column_stack([_floats(c["x_m"]), _floats(c["y_m"])]).reshape(-1, 2),
        np.column_stack([_floats(c["vx_mps"]), _floats(c["vy_mps"])]).reshape(-1, 2),
        _floats(c["cond"]),
        dt,
        label,
    )


def write_errors(path, report: ErrorReport) -> Path:
    return write_csv(path, ["time_s", "error_m"], zip(report.times, report.errors))


def read_errors(path, label: str) -> ErrorReport:
    c = read_csv(path, ["time_s", "error_m"])
    return ErrorReport(label, _floats(c["time_s"]), _floats(c["error_m"]))


def write_cdf(path, report: ErrorReport) -> Path:
    return write_csv(path, ["error_m", "cdf"], cdf_table(report))


def write_summary(path, summary: dict) -> Path:
    _write_json(path, summary)
    return Path(path)


def read_summary(path) -> dict:
    return _read_json(path)


def config_digest(cfg: dict) -> str:
    """sha256 of the canonical JSON encoding of ``cfg``."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
