"""Command-line entry point.

Exit status is 0 on success, 2 for configuration errors and 3 when a
pipeline stage fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .caf import CafParams
from .clutter import CancellationConfig
from .detection import FilterParams, ThresholdParams
from .errors import BistaticError, ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _config(args) -> pipeline.PipelineConfig | None:
    if args.config is None:
        return None
    path = Path(args.config)
    if not path.exists() and not path.suffix:
        path = pipeline.bundled_config_path(args.config)
    cfg = pipeline.load_config(path)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out_dir is not None:
        cfg = cfg.with_output_dir(args.out_dir)
    return cfg


def _require(cfg, command):
    if cfg is None:
        raise ConfigError(f"'{command}' needs --config")
    return cfg


def _cmd_directory_stage(args, cfg):
    cfg = _require(cfg, args.command)
    pipeline.run_stage(args.command, cfg)
    return EXIT_OK


def _cmd_cancel(args, cfg):
    if args.surv is None:
        return _cmd_directory_stage(args, cfg)
    params = cfg.cancellation if cfg else CancellationConfig()
    out = args.output or str(Path(args.surv).with_name("clean_" + Path(args.surv).name))
    pipeline.run_guarded("cancel", pipeline.cancel_files, args.surv, args.ref, out, params)
    return EXIT_OK


def _cmd_caf(args, cfg):
    if args.surv is None:
        return _cmd_directory_stage(args, cfg)
    params = cfg.caf if cfg else CafParams()
    out = args.output or str(Path(args.surv).with_suffix("")) + "_spectrogram"
    pipeline.run_guarded("caf", pipeline.caf_files, args.surv, args.ref, out, params)
    return EXIT_OK


def _cmd_detect(args, cfg):
    if args.spectrogram is None:
        return _cmd_directory_stage(args, cfg)
    out = args.out_dir or str(Path(args.spectrogram).parent)
    if cfg:
        pipeline.run_guarded("detect", pipeline.detect_files, args.spectrogram, out, cfg.threshold, cfg.filter, cfg.kalman)
    else:
        pipeline.run_guarded("detect", pipeline.detect_files, args.spectrogram, out, ThresholdParams(), FilterParams())
    return EXIT_OK


def _cmd_pipeline(args, cfg):
    cfg = _require(cfg, "pipeline")
    result = pipeline.run_pipeline(cfg)
    rows = {k: {"p50": v["p50"], "p90": v["p90"], "max": v["max"]} for k, v in result.summary["scenarios"].items()}
    print(json.dumps({"out_dir": str(result.out_dir), "scenarios": rows}, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bistatic-tracker", description="Simulate, detect and track a UAV with two passive bistatic receivers.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON, or the name of a bundled config")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out-dir", help="run directory (overrides the config)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("simulate", "write ground truth and reference/surveillance captures"),
        ("track", "reconstruct trajectories for all evaluation scenarios"),
        ("eval", "score trajectories and write CDF tables and summary.json"),
        ("pipeline", "run every stage in order"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.set_defaults(func=_cmd_pipeline if name == "pipeline" else _cmd_directory_stage)

    p = sub.add_parser("cancel", parents=[common], help="clutter-cancel surveillance captures")
    p.add_argument("--surv", help="surveillance capture (.cf32)")
    p.add_argument("--ref", help="reference capture (.cf32)")
    p.add_argument("--output", help="output capture path")
    p.set_defaults(func=_cmd_cancel)

    p = sub.add_parser("caf", parents=[common], help="compute CAF spectrograms")
    p.add_argument("--surv", help="cleaned surveillance capture (.cf32)")
    p.add_argument("--ref", help="reference capture (.cf32)")
    p.add_argument("--output", help="spectrogram output prefix")
    p.set_defaults(func=_cmd_caf)

    p = sub.add_parser("detect", parents=[common], help="detect, filter and smooth Doppler tracks")
    p.add_argument("--spectrogram", help="spectrogram prefix written by 'caf'")
    p.set_defaults(func=_cmd_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "surv", None) is not None and getattr(args, "ref", None) is None:
        parser.error("--surv needs --ref")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BistaticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
