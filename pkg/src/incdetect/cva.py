"""Two-class canonical variate analysis and channel-band selection.

With two classes there is a single canonical direction, the Fisher
discriminant ``w = Sw^-1 (mu_IC - mu_INC)``. Each feature's discrimination
score is its squared pooled within-class correlation with the canonical
projection (structure coefficient), normalized over features.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .io import IC, INC

SHRINKAGE = 1e-3


@dataclass(frozen=True, eq=False)
class LabeledFeatureSet:
    X: np.ndarray           # [n_frames x n_features]
    y: np.ndarray           # IC / INC per frame
    feature_names: tuple    # (channel, band) per column

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be [n_frames x n_features] with one label per frame")
        if not np.isin(y, (IC, INC)).all():
            raise ValueError("labels must be IC or INC")
        if len(self.feature_names) != X.shape[1]:
            raise ValueError("one feature name per column required")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(tuple(n) for n in self.feature_names))


@dataclass(frozen=True, eq=False)
class CvaModel:
    cdsp: np.ndarray            # [n_features x 1] canonical direction (unit norm)
    discrimination: np.ndarray  # [n_features], non-negative, sums to 1
    structure: np.ndarray       # [n_features] pooled correlations with the projection
    selected: tuple             # feature indices, descending score

    @property
    def ranking(self) -> np.ndarray:
        # stable: ties keep feature order
        return np.argsort(-self.discrimination, kind="stable")


@dataclass(frozen=True)
class SelectionPolicy:
    tau: float = 0.8
    floor: int = 3
    cap: int = 12

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.floor < 1 or self.cap < self.floor:
            raise ValueError("need 1 <= floor <= cap")


def _class_scatter(Xc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = Xc.mean(axis=0)
    d = Xc - mu
    return mu, d.T @ d


def fit_cva(data: LabeledFeatureSet, policy: SelectionPolicy = SelectionPolicy(),
            shrinkage: float = SHRINKAGE) -> CvaModel:
    X, y = data.X, data.y
    n_ic, n_inc = int((y == IC).sum()), int((y == INC).sum())
    if n_ic == 0 or n_inc == 0:
        raise ValueError("CVA needs frames of both classes")
    if n_ic < 2 or n_inc < 2:
        raise ValueError("CVA needs at least two frames per class")

    # constant columns carry no information and would make Sw singular
    live = np.ptp(X, axis=0) > 0
    if not live.any():
        raise ValueError("all features are constant")
    Xl = X[:, live]
    p = Xl.shape[1]

    mu_ic, s_ic = _class_scatter(Xl[y == IC])
    mu_inc, s_inc = _class_scatter(Xl[y == INC])
    sw = s_ic + s_inc
    # shrink in within-class standardized units so that per-feature
    # rescaling cannot change which features the regularization favours
    sd = np.sqrt(np.diag(sw))
    sd = np.where(sd > 0, sd, 1.0)
    sw_std = sw / np.outer(sd, sd)
    sw_reg = (1.0 - shrinkage) * sw_std + shrinkage * (np.trace(sw_std) / p) * np.eye(p)
    w = np.linalg.solve(sw_reg, (mu_ic - mu_inc) / sd) / sd
    norm = np.linalg.norm(w)
    if not np.isfinite(norm) or norm == 0:
        raise ValueError("degenerate canonical direction")
    w = w / norm

    # pooled within-class correlation between each feature and the projection
    cov_fz = sw @ w
    var_z = float(w @ cov_fz)
    var_f = np.diag(sw)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = cov_fz / np.sqrt(var_f * var_z)
    r = np.nan_to_num(r, nan=0.0, posinf=0.0, neginf=0.0)
    r = np.clip(r, -1.0, 1.0)

    n_feat = X.shape[1]
    cdsp = np.zeros((n_feat, 1))
    cdsp[live, 0] = w
    structure = np.zeros(n_feat)
    structure[live] = r
    r2 = structure ** 2
    total = r2.sum()
    discrimination = r2 / total if total > 0 else r2
    model = CvaModel(cdsp, discrimination, structure, ())
    return CvaModel(cdsp, discrimination, structure, tuple(select_features(model, policy)))


def select_features(model: CvaModel, policy: SelectionPolicy = SelectionPolicy()) -> list[int]:
    """Smallest score-ranked prefix holding ``tau`` of the total score.

    The prefix is then padded up to ``floor`` with the next-ranked features
    and truncated to ``cap``.
    """
    order = model.ranking
    scores = model.discrimination[order]
    total = scores.sum()
    csum = np.cumsum(scores)
    target = policy.tau * total
    # relative slack absorbs round-off in the running sum
    hit = np.nonzero(csum >= target - 1e-12 * max(total, 1.0))[0]
    n = int(hit[0]) + 1 if hit.size else len(order)
    n = max(n, policy.floor)
    n = min(n, policy.cap, len(order))
    return [int(i) for i in order[:n]]


def discrimination_map(model: CvaModel, feature_names: Sequence[tuple[str, str]],
                       channels: Sequence[str] | None = None,
                       bands: Sequence[str] | None = None) -> list[tuple[str, str, float]]:
    """Long table of (channel, band, score) ordered band-major, montage order within band."""
    return discrimination_rows(model.discrimination, feature_names, channels, bands)


def discrimination_rows(scores, feature_names: Sequence[tuple[str, str]],
                        channels: Sequence[str] | None = None,
                        bands: Sequence[str] | None = None) -> list[tuple[str, str, float]]:
    """As :func:`discrimination_map`, from a bare score vector."""
    names = [tuple(n) for n in feature_names]
    scores = np.asarray(scores, dtype=np.float64)
    if len(names) != len(scores):
        raise ValueError("feature names do not match the scores")
    if channels is None:
        channels = list(dict.fromkeys(c for c, _ in names))
    if bands is None:
        bands = list(dict.fromkeys(b for _, b in names))
    pos = {n: i for i, n in enumerate(names)}
    rows = []
    for b in bands:
        for c in channels:
            i = pos.get((c, b))
            if i is not None:
                rows.append((c, b, float(scores[i])))
    return rows


def write_discrimination_csv(path, rows: Sequence[tuple[str, str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["channel", "band", "score"])
        for c, b, s in rows:
            wr.writerow([c, b, repr(s)])
