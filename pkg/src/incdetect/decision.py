"""Exponential evidence integration with hysteresis, and (alpha, th) calibration."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .io import EXCLUDED, IC, INC, LABEL_NAMES

UNDECIDED = -2

CANONICAL_ALPHAS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))   # 0.50 .. 0.95
CANONICAL_THRESHOLDS = tuple(round(0.55 + 0.05 * i, 2) for i in range(8))  # 0.55 .. 0.90


@dataclass(frozen=True)
class IntegratorState:
    """``D`` is the accumulated evidence for IC."""

    D: float = 0.5
    alpha: float = 0.9
    th: float = 0.65
    label: int = INC

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.5 < self.th < 1.0:
            raise ValueError(f"th must lie in (0.5, 1), got {self.th}")
        if not 0.0 <= self.D <= 1.0:
            raise ValueError(f"D must lie in [0, 1], got {self.D}")
        if self.label not in (IC, INC, UNDECIDED):
            raise ValueError(f"invalid label {self.label}")


def integrate_step(state: IntegratorState, p_ic: float) -> tuple[IntegratorState, int]:
    if not 0.0 <= p_ic <= 1.0:
        raise ValueError(f"posterior must lie in [0, 1], got {p_ic}")
    D = state.alpha * state.D + (1.0 - state.alpha) * p_ic
    # convex combination; clamp guards the last ulp
    D = min(1.0, max(0.0, D))
    if D > state.th:
        label = IC
    elif D < 1.0 - state.th:
        label = INC
    else:
        label = state.label
    return IntegratorState(D, state.alpha, state.th, label), label


@dataclass(frozen=True, eq=False)
class DecisionTrace:
    t: np.ndarray
    p_ic: np.ndarray
    D: np.ndarray
    label: np.ndarray

    def __len__(self) -> int:
        return len(self.label)

    def rows(self):
        for i in range(len(self)):
            yield float(self.t[i]), float(self.p_ic[i]), float(self.D[i]), int(self.label[i])


def run_trace(posteriors: Sequence[float], alpha: float = 0.9, th: float = 0.65,
              D0: float = 0.5, label0: int = INC, t: Sequence[float] | None = None,
              return_state: bool = False):
    """Fold :func:`integrate_step` over an IC-posterior sequence."""
    p = np.asarray(posteriors, dtype=np.float64).ravel()
    state = IntegratorState(D0, alpha, th, label0)
    if p.size and not (np.all(p >= 0.0) and np.all(p <= 1.0)):
        raise ValueError("posteriors must lie in [0, 1]")
    # inlined integrate_step; same arithmetic, no per-step allocation
    Ds = np.empty(len(p))
    labels = np.empty(len(p), dtype=np.int64)
    D, label, lo = state.D, state.label, 1.0 - th
    beta = 1.0 - alpha
    for i, pi in enumerate(p.tolist()):
        D = min(1.0, max(0.0, alpha * D + beta * pi))
        if D > th:
            label = IC
        elif D < lo:
            label = INC
        Ds[i] = D
        labels[i] = label
    if len(p):
        state = IntegratorState(D, alpha, th, label)
    tt = np.arange(len(p), dtype=np.float64) if t is None else np.asarray(t, dtype=np.float64)
    if len(tt) != len(p):
        raise ValueError("timestamps and posteriors differ in length")
    trace = DecisionTrace(tt, p, Ds, labels)
    return (trace, state) if return_state else trace


def format_trace_line(t: float, p_ic: float, D: float, label: int) -> str:
    return f"{t:.6f},{p_ic:.6f},{D:.6f},{LABEL_NAMES[label]}"


def write_trace_csv(path, trace: DecisionTrace) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,p_ic,D,label\n")
        for row in trace.rows():
            fh.write(format_trace_line(*row) + "\n")


def _count_hits(labels_pred: np.ndarray, truth: np.ndarray) -> tuple[int, int]:
    scored = truth != EXCLUDED
    return int((labels_pred[scored] == truth[scored]).sum()), int(scored.sum())


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    alpha: float
    th: float
    accuracy: np.ndarray  # [len(grid_alpha), len(grid_th)]
    grid_alpha: tuple
    grid_th: tuple


def calibrate(features, labels, folds, fit: Callable, grid_alpha: Sequence[float] = CANONICAL_ALPHAS,
              grid_th: Sequence[float] = CANONICAL_THRESHOLDS) -> CalibrationResult:
    """Grid search of (alpha, th) by leave-one-fold-out cross-validation.

    ``features`` is [n_frames x n_features] in time order, ``labels`` holds
    IC/INC/EXCLUDED per frame and ``folds`` a fold id per frame (one fold per
    run). ``fit(X, y)`` returns a callable mapping feature rows to IC
    posteriors. Each held-out fold is traced contiguously from the default
    initial state, then pooled accuracy decides; ties go to larger alpha,
    then larger th.
    """
    grid_alpha, grid_th = tuple(grid_alpha), tuple(grid_th)
    if not grid_alpha or not grid_th:
        raise ValueError("calibration grid is empty")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    folds = np.asarray(folds)
    fold_ids = list(dict.fromkeys(folds.tolist()))
    hits = np.zeros((len(grid_alpha), len(grid_th)), dtype=np.int64)
    total = 0
    for f in fold_ids:
        held = folds == f
        train_mask = ~held & (y != EXCLUDED)
        if len(fold_ids) == 1:
            train_mask = y != EXCLUDED
        predict = fit(X[train_mask], y[train_mask])
        p_ic = predict(X[held])
        y_held = y[held]
        for a, alpha in enumerate(grid_alpha):
            for b, th in enumerate(grid_th):
                tr = run_trace(p_ic, alpha, th)
                h, n = _count_hits(tr.label, y_held)
                hits[a, b] += h
        total += int((y_held != EXCLUDED).sum())
    acc = hits / max(total, 1)
    # integer counts compare exactly; scan so ties favour larger alpha, then th
    best = None
    for a in range(len(grid_alpha)):
        for b in range(len(grid_th)):
            key = (hits[a, b], grid_alpha[a], grid_th[b])
            if best is None or key > best[0]:
                best = (key, a, b)
    _, a, b = best
    return CalibrationResult(grid_alpha[a], grid_th[b], acc, grid_alpha, grid_th)
