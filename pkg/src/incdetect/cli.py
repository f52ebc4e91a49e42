"""Command-line front end: ``simulate``, ``train``, ``evaluate`` and ``stream``.

Every PipelineConfig field has a matching ``--flag`` on ``train``
(underscores become dashes); tuple fields take comma-separated values and
bands take ``low-high`` items, e.g. ``--bands 8-13,14-22``. Flags override
values read from ``--config``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import PipelineConfig
from .cva import discrimination_rows, write_discrimination_csv
from .decision import format_trace_line, write_trace_csv
from .evaluation import (
    accuracy_ci,
    compare_methods,
    format_comparison,
    format_report,
    write_comparison_csv,
    write_report_csv,
)
from .features import feature_names
from .labeling import write_labels_csv
from .pipeline import TrainedDetector, evaluate, stream, train_detector
from .simgen import SessionSpec, generate_session, read_session, write_session

log = logging.getLogger("incdetect")

MODEL_FILE = "model.json"
CONFIG_FILE = "config.json"
DISCRIMINATION_FILE = "discrimination.csv"


# --- config flags ---------------------------------------------------------------

def _parse_bands(text: str) -> tuple:
    out = []
    for item in text.split(","):
        lo, sep, hi = item.strip().partition("-")
        if not sep:
            raise argparse.ArgumentTypeError(f"band {item!r} is not of the form low-high")
        out.append((float(lo), float(hi)))
    return tuple(out)


def _tuple_of(kind):
    def parse(text: str) -> tuple:
        try:
            return tuple(kind(v) for v in text.split(",") if v.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _optional(kind):
    def parse(text: str):
        return None if text.strip().lower() in ("none", "") else kind(text)
    return parse


_FIELD_TYPES = {
    "bands": _parse_bands,
    "grid_alpha": _tuple_of(float),
    "grid_th": _tuple_of(float),
    "train_runs": _tuple_of(int),
    "test_runs": _tuple_of(int),
    "train_variances": _parse_bool,
    "emg_threshold_left": _optional(float),
    "emg_threshold_right": _optional(float),
}


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline configuration")
    defaults = PipelineConfig()
    for f in dataclasses.fields(PipelineConfig):
        kind = _FIELD_TYPES.get(f.name) or type(getattr(defaults, f.name))
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, type=kind,
                           default=None, metavar=f.name.upper(),
                           help=f"default: {getattr(defaults, f.name)!r}")


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    base = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    changes = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return base.replace(**changes) if changes else base


def _runs_arg(text: str):
    if text == "all":
        return "all"
    return _tuple_of(int)(text)


# --- commands ---------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    spec = SessionSpec(seed=args.seed, n_runs=args.runs, trials_per_condition=args.trials,
                       delta=args.delta, montage=args.montage)
    session = generate_session(spec)
    out = write_session(session, args.out)
    print(f"wrote {spec.n_runs} runs, {len(session.truth.trials)} trials to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    session = read_session(args.session)
    detector = train_detector(session, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    detector.save(out / MODEL_FILE)
    config.save(out / CONFIG_FILE)
    names = feature_names(detector.channels, detector.band_names)
    rows = discrimination_rows(detector.discrimination, names, detector.channels, detector.band_names)
    write_discrimination_csv(out / DISCRIMINATION_FILE, rows)
    sel = ", ".join(f"{c}/{b}" for c, b in detector.selected_names)
    print(f"selected {len(detector.selected)} features: {sel}")
    print(f"alpha {detector.alpha:g}  th {detector.th:g}  "
          f"calibration accuracy {detector.training_log['calibration_accuracy']:.4f}")
    print(f"model written to {out / MODEL_FILE}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    session = read_session(args.session)
    detectors = [TrainedDetector.load(p) for p in args.model]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    used = set()
    for det in detectors:
        cfg = det.config
        if args.mode:
            cfg = cfg.replace(labeling_mode=args.mode)
        ev = evaluate(det, session, args.runs, cfg)
        tag = det.config.feature_method
        while tag in used:
            tag += "_"
        used.add(tag)
        ci = accuracy_ci(ev.trace, ev.labels.labels)
        text = format_report(ev.report) + (
            f"95% CI (naive, {ci['n']} frames): {ci['ci_naive'][0]:.4f}-{ci['ci_naive'][1]:.4f}\n"
            f"95% CI (effective n {ci['n_effective']:.1f}): {ci['ci'][0]:.4f}-{ci['ci'][1]:.4f}\n")
        (out / f"report_{tag}.txt").write_text(text)
        write_trace_csv(out / f"trace_{tag}.csv", ev.trace)
        write_labels_csv(out / "labels.csv", ev.labels)
        print(text)
        reports.append(ev.report)
    write_report_csv(out / "report.csv", reports)
    if len(reports) == 2:
        cmp = compare_methods(*reports)
        (out / "comparison.txt").write_text(format_comparison(cmp))
        write_comparison_csv(out / "comparison.csv", cmp)
        print(format_comparison(cmp))
    return 0


def cmd_stream(args: argparse.Namespace) -> int:
    det = TrainedDetector.load(args.model)
    session = read_session(args.session)
    write = sys.stdout.write
    write("t,p_ic,D,label\n")
    stats = stream(det, session, args.runs,
                   emit=lambda d: write(format_trace_line(d.t, d.p_ic, d.D, d.label) + "\n"))
    sys.stdout.flush()
    print(f"{stats.frames} frames, {stats.signal_seconds:.1f} s of signal in "
          f"{stats.wall_seconds:.2f} s (real-time factor {stats.real_time_factor:.1f})",
          file=sys.stderr)
    return 0


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="incdetect", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic labelled session")
    s.add_argument("--out", required=True, help="session directory to write")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--runs", type=int, default=5)
    s.add_argument("--trials", type=int, default=10, help="trials per condition per run")
    s.add_argument("--delta", type=float, default=1.0, help="class separability in [0, 1]")
    s.add_argument("--montage", default="FPc", choices=("FPc", "Mc"))
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="fit a detector on the training runs of a session")
    t.add_argument("session", help="session directory")
    t.add_argument("--out", required=True, help="output directory for the model")
    t.add_argument("--config", help="JSON config file; flags below override it")
    add_config_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score one or two models on the test runs")
    e.add_argument("session", help="session directory")
    e.add_argument("--model", action="append", required=True,
                   help="model.json; give twice (e.g. entropy and psd) for a comparison")
    e.add_argument("--out", required=True, help="output directory for reports")
    e.add_argument("--runs", type=_tuple_of(int), default=None, help="default: the model's test runs")
    e.add_argument("--mode", choices=("execution", "preparation"), default=None,
                   help="labeling mode for the ground truth; default: the model's")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("stream", help="replay a session frame by frame to stdout")
    r.add_argument("model", help="model.json")
    r.add_argument("session", help="session directory")
    r.add_argument("--runs", type=_runs_arg, default=None,
                   help="comma-separated runs or 'all'; default: the model's test runs")
    r.set_defaults(func=cmd_stream)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "evaluate" and len(args.model) > 2:
        parser.error("at most two models can be compared")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        # ConfigError, PipelineError and RecordingFormatError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
