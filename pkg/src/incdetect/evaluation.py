"""Scoring: single-sample accuracy, motion-preparation trial verdicts and reports."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decision import DecisionTrace
from .io import EXCLUDED, IC, INC, Event, EventCode
from .labeling import LabelTimeline


class Verdict(str, enum.Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    MISSED = "missed"


@dataclass(frozen=True)
class TrialOutcome:
    trial_id: int
    verdict: Verdict
    delay: float | None = None
    cue_time: float = 0.0

    def __post_init__(self):
        if self.verdict is Verdict.CORRECT:
            if self.delay is None or self.delay < 0:
                raise ValueError("a correct trial needs a non-negative delay")
        elif self.delay is not None:
            raise ValueError("delay is only defined for correct trials")


@dataclass(frozen=True)
class TrialScores:
    outcomes: tuple
    excluded: int = 0  # trials with IC already active when the window opened

    def count(self, verdict: Verdict) -> int:
        return sum(o.verdict is verdict for o in self.outcomes)

    def rate(self, verdict: Verdict) -> float:
        n = len(self.outcomes)
        return self.count(verdict) / n if n else float("nan")

    @property
    def delays(self) -> np.ndarray:
        return np.array([o.delay for o in self.outcomes if o.verdict is Verdict.CORRECT])


@dataclass(frozen=True)
class Report:
    method: str
    single_sample_accuracy: float
    confusion: tuple = ((0, 0), (0, 0))  # rows truth (INC, IC), cols predicted
    n_frames: int = 0
    trial_correct: float | None = None
    trial_incorrect: float | None = None
    trial_missed: float | None = None
    n_trials: int = 0
    n_excluded: int = 0
    delay_mean: float | None = None
    delay_std: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def class_accuracy(self) -> tuple[float, float]:
        (a, b), (c, d) = self.confusion
        inc = a / (a + b) if a + b else float("nan")
        ic = d / (c + d) if c + d else float("nan")
        return inc, ic


def _scored(trace_labels, truth_labels):
    pred = np.asarray(trace_labels)
    truth = np.asarray(truth_labels)
    if pred.shape != truth.shape:
        raise ValueError(f"trace has {pred.size} frames but labels have {truth.size}")
    keep = truth != EXCLUDED
    return pred[keep], truth[keep]


def _labels_of(x):
    if isinstance(x, DecisionTrace):
        return x.label
    if isinstance(x, LabelTimeline):
        return x.labels
    return np.asarray(x)


def single_sample_accuracy(trace, labels) -> float:
    """Fraction of scored frames whose emitted label equals the truth.

    Frames labelled EXCLUDED in ``labels`` are not scored.
    """
    pred, truth = _scored(_labels_of(trace), _labels_of(labels))
    if truth.size == 0:
        raise ValueError("no scorable frames")
    return float(np.mean(pred == truth))


def confusion_matrix(trace, labels) -> tuple:
    pred, truth = _scored(_labels_of(trace), _labels_of(labels))
    return tuple(tuple(int(np.sum((truth == t) & (pred == p))) for p in (INC, IC)) for t in (INC, IC))


def binomial_ci(successes: float, n: float, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval.

    ``n`` may be fractional, as when it is an effective sample size.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


def effective_sample_size(x) -> float:
    """Sample count adjusted for serial correlation, ``n / (1 + 2 sum rho_k)``.

    The autocorrelations ``rho_k`` are summed from lag 1 up to (excluding)
    the first non-positive one. A constant series counts as one sample.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    if n == 0:
        raise ValueError("empty series")
    x = x - x.mean()
    c0 = float(np.dot(x, x))
    if c0 == 0.0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, size)
    acf = np.fft.irfft(spec * spec.conj(), size)[:n] / c0
    s = 0.0
    for rho in acf[1:]:
        if rho <= 0.0:
            break
        s += float(rho)
    return n / (1.0 + 2.0 * s)


def accuracy_ci(trace: DecisionTrace, labels, z: float = 1.959963984540054) -> dict:
    """Single-sample accuracy with naive and autocorrelation-aware Wilson intervals.

    Successive frames overlap heavily, so the per-frame hits are far from
    independent; the second interval uses the effective sample size of the
    hit indicator series.
    """
    lab = np.asarray(labels)
    pred = np.asarray(trace.label)
    if lab.shape != pred.shape:
        raise ValueError("trace and labels differ in length")
    hit = (pred == lab)[lab != EXCLUDED].astype(np.float64)
    if hit.size == 0:
        raise ValueError("no scored frames")
    n = hit.size
    acc = float(hit.mean())
    n_eff = effective_sample_size(hit)
    return {
        "accuracy": acc,
        "n": n,
        "n_effective": n_eff,
        "ci_naive": binomial_ci(acc * n, n, z),
        "ci": binomial_ci(acc * n_eff, n_eff, z),
    }


def ic_onsets(trace: DecisionTrace) -> np.ndarray:
    """Frame indices where the emitted label enters IC from a non-IC label."""
    lab = np.asarray(trace.label)
    prev = np.concatenate(([INC], lab[:-1]))
    return np.nonzero((lab == IC) & (prev != IC))[0]


def score_preparation_trials(trace: DecisionTrace, events: Sequence[Event], sample_rate: float,
                             cue_seconds: float = 3.0, time_offset: float = 0.0) -> TrialScores:
    """Verdict per IC-cue onset.

    The first transition into IC within ``[c - cue, c + cue]`` decides: before
    ``c`` is incorrect, at or after ``c`` is correct with its delay, none is
    missed. A trial whose window opens while IC is already being emitted and
    that sees no fresh onset is excluded and counted separately.
    Event sample indices are converted to seconds with ``sample_rate`` and
    shifted by ``time_offset`` to the trace's clock.
    """
    t = np.asarray(trace.t, dtype=np.float64)
    if len(t) == 0:
        raise ValueError("empty trace")
    onsets = ic_onsets(trace)
    t_on = t[onsets]
    cues = [e for e in events if e.code == EventCode.IC_CUE_ON]
    outcomes = []
    excluded = 0
    tol = 1e-9
    for k, ev in enumerate(cues):
        c = ev.sample_index / sample_rate + time_offset
        if c < t[0] - tol or c + cue_seconds > t[-1] + tol:
            raise ValueError(f"IC cue at {c:.3f} s lies outside the trace ({t[0]:.3f}-{t[-1]:.3f} s)")
        lo, hi = c - cue_seconds, c + cue_seconds
        j = np.searchsorted(t_on, lo - tol, side="left")
        first = t_on[j] if j < len(t_on) and t_on[j] <= hi + tol else None
        if first is None:
            # is IC being held from before the window opened?
            i0 = np.searchsorted(t, lo - tol, side="left")
            if i0 < len(t) and trace.label[i0] == IC:
                excluded += 1
                continue
            outcomes.append(TrialOutcome(k, Verdict.MISSED, None, c))
        elif first < c - tol:
            outcomes.append(TrialOutcome(k, Verdict.INCORRECT, None, c))
        else:
            outcomes.append(TrialOutcome(k, Verdict.CORRECT, max(0.0, float(first - c)), c))
    return TrialScores(tuple(outcomes), excluded)


def make_report(method: str, trace: DecisionTrace, labels, trials: TrialScores | None = None,
                **extra) -> Report:
    acc = single_sample_accuracy(trace, labels)
    conf = confusion_matrix(trace, labels)
    n = sum(map(sum, conf))
    kw = {}
    if trials is not None:
        d = trials.delays
        kw = dict(
            trial_correct=trials.rate(Verdict.CORRECT),
            trial_incorrect=trials.rate(Verdict.INCORRECT),
            trial_missed=trials.rate(Verdict.MISSED),
            n_trials=len(trials.outcomes),
            n_excluded=trials.excluded,
            delay_mean=float(d.mean()) if d.size else None,
            delay_std=float(d.std()) if d.size else None,
        )
    return Report(method, acc, conf, n, extra=dict(extra), **kw)


@dataclass(frozen=True)
class MethodComparison:
    rows: tuple  # (method, accuracy, inc_accuracy, ic_accuracy)
    delta: float  # first minus second accuracy
    delta_inc: float
    delta_ic: float


def compare_methods(first: Report, second: Report) -> MethodComparison:
    """Side-by-side accuracies of two reports scored on the same frames."""
    if first.n_frames != second.n_frames or \
            [sum(r) for r in first.confusion] != [sum(r) for r in second.confusion]:
        raise ValueError("reports were scored on different frame sets")
    rows = []
    for r in (first, second):
        inc, ic = r.class_accuracy
        rows.append((r.method, r.single_sample_accuracy, inc, ic))
    (_, a1, i1, c1), (_, a2, i2, c2) = rows
    return MethodComparison(tuple(rows), a1 - a2, i1 - i2, c1 - c2)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.4f}"
    return str(x)


REPORT_FIELDS = ("method", "single_sample_accuracy", "inc_accuracy", "ic_accuracy", "n_frames",
                 "trial_correct", "trial_incorrect", "trial_missed", "n_trials", "n_excluded",
                 "delay_mean", "delay_std")


def report_row(r: Report) -> list[str]:
    inc, ic = r.class_accuracy
    vals = (r.method, r.single_sample_accuracy, inc, ic, r.n_frames, r.trial_correct,
            r.trial_incorrect, r.trial_missed, r.n_trials, r.n_excluded, r.delay_mean, r.delay_std)
    return [_fmt(v) for v in vals]


def write_report_csv(path, reports: Sequence[Report]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(REPORT_FIELDS)
        for r in reports:
            wr.writerow(report_row(r))


def format_report(r: Report) -> str:
    inc, ic = r.class_accuracy
    (a, b), (c, d) = r.confusion
    lines = [
        f"method: {r.method}",
        f"single-sample accuracy: {_fmt(r.single_sample_accuracy)} over {r.n_frames} frames",
        f"class accuracy: INC {_fmt(inc)}  IC {_fmt(ic)}",
        "confusion (rows truth, cols predicted; INC, IC):",
        f"  INC {a:6d} {b:6d}",
        f"  IC  {c:6d} {d:6d}",
    ]
    if r.trial_correct is not None:
        lines += [
            f"trials: {r.n_trials} scored, {r.n_excluded} excluded (IC held at window start)",
            f"  correct {_fmt(r.trial_correct)}  incorrect {_fmt(r.trial_incorrect)}"
            f"  missed {_fmt(r.trial_missed)}",
        ]
        if r.delay_mean is not None:
            lines.append(f"  delay {r.delay_mean:.3f} +/- {r.delay_std:.3f} s")
    for k in sorted(r.extra):
        lines.append(f"{k}: {_fmt(r.extra[k])}")
    return "\n".join(lines) + "\n"


def format_comparison(cmp: MethodComparison) -> str:
    lines = ["method      accuracy  INC      IC"]
    for m, acc, inc, ic in cmp.rows:
        lines.append(f"{m:<10}  {acc:.4f}    {inc:.4f}   {ic:.4f}")
    lines.append(f"{'delta':<10}  {cmp.delta:+.4f}   {cmp.delta_inc:+.4f}  {cmp.delta_ic:+.4f}")
    return "\n".join(lines) + "\n"


def write_comparison_csv(path, cmp: MethodComparison) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["method", "accuracy", "inc_accuracy", "ic_accuracy"])
        for m, acc, inc, ic in cmp.rows:
            wr.writerow([m, f"{acc:.6f}", f"{inc:.6f}", f"{ic:.6f}"])
        wr.writerow(["delta", f"{cmp.delta:.6f}", f"{cmp.delta_inc:.6f}", f"{cmp.delta_ic:.6f}"])
