"""Gaussian-prototype classifier.

Each class is an equal-weight mixture of ``n_p`` diagonal Gaussians. The
prototypes are seeded by a batch self-organizing map on a 1-D lattice whose
neighbourhood shrinks to zero (ending as plain k-means), then refined by
stochastic gradient descent on ``E = 1/2 * sum_k (p_k - t_k)**2`` where
``p`` is the posterior vector and ``t`` the one-hot target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .io import IC, INC

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
CLASSES = (INC, IC)  # column order of posterior vectors
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GaussianPrototype:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "variance",
                           np.maximum(np.asarray(self.variance, dtype=np.float64), VARIANCE_FLOOR))


@dataclass(frozen=True, eq=False)
class GaussianClassifier:
    """Stacked parameters: ``means``/``variances`` are [n_classes, n_p, n_features].

    Class axis follows :data:`CLASSES` (INC, IC).
    """

    means: np.ndarray
    variances: np.ndarray
    norm_mean: np.ndarray
    norm_std: np.ndarray
    priors: np.ndarray = None

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float64)
        v = np.maximum(np.asarray(self.variances, dtype=np.float64), VARIANCE_FLOOR)
        if m.ndim != 3 or m.shape != v.shape or m.shape[0] != len(CLASSES):
            raise ValueError("means/variances must be [2, n_p, n_features] and match")
        priors = np.full(len(CLASSES), 1.0 / len(CLASSES)) if self.priors is None \
            else np.asarray(self.priors, dtype=np.float64)
        if abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must sum to 1")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "norm_mean", np.asarray(self.norm_mean, dtype=np.float64))
        object.__setattr__(self, "norm_std", np.asarray(self.norm_std, dtype=np.float64))

    @property
    def n_p(self) -> int:
        return self.means.shape[1]

    @property
    def n_features(self) -> int:
        return self.means.shape[2]

    def prototypes(self, cls: int) -> list[GaussianPrototype]:
        k = CLASSES.index(cls)
        return [GaussianPrototype(self.means[k, i], self.variances[k, i]) for i in range(self.n_p)]

    def normalize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.norm_mean) / self.norm_std


def feature_norm(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and (population) std; constant columns get std 1."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def init_prototypes(X_class, n_p: int, n_iter: int = 30) -> list[GaussianPrototype]:
    """Cluster one class's rows into ``n_p`` prototypes.

    Batch SOM on a chain of ``n_p`` units: units start at quantiles of the
    data's first principal component, the Gaussian neighbourhood width
    decays linearly to zero, and the last iterations are k-means updates.
    Deterministic for a given input.
    """
    X = np.asarray(X_class, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a [n_rows x n_features] matrix")
    n = X.shape[0]
    if n < n_p:
        raise ValueError(f"need at least {n_p} rows to seed {n_p} prototypes, got {n}")

    centred = X - X.mean(axis=0)
    if n > 1 and np.any(centred):
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        proj = centred @ vt[0]
    else:
        proj = np.zeros(n)
    order = np.argsort(proj, kind="stable")
    picks = order[np.round((np.arange(n_p) + 0.5) / n_p * n - 0.5).astype(int).clip(0, n - 1)]
    units = X[picks].copy()

    lattice = np.arange(n_p)
    width0 = n_p / 2.0
    for it in range(n_iter):
        width = width0 * max(0.0, 1.0 - it / (0.6 * n_iter))
        d2 = ((X[:, None, :] - units[None, :, :]) ** 2).sum(axis=2)
        bmu = d2.argmin(axis=1)
        if width > 0:
            h = np.exp(-0.5 * ((lattice[:, None] - lattice[None, :]) / width) ** 2)
        else:
            h = np.eye(n_p)
        weights = h[:, bmu]  # [n_p, n]
        mass = weights.sum(axis=1)
        nz = mass > 0
        units[nz] = (weights[nz] @ X) / mass[nz, None]

    d2 = ((X[:, None, :] - units[None, :, :]) ** 2).sum(axis=2)
    bmu = d2.argmin(axis=1)
    protos = []
    for i in range(n_p):
        members = X[bmu == i]
        if len(members) > 1:
            var = members.var(axis=0)
        else:
            var = np.full(X.shape[1], VARIANCE_FLOOR)
        protos.append(GaussianPrototype(units[i], var))
    return protos


def build_classifier(X, y, n_p: int = 4) -> GaussianClassifier:
    """Normalize features and seed prototypes for both classes."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    mu, sd = feature_norm(X)
    Z = (X - mu) / sd
    means, variances = [], []
    for cls in CLASSES:
        protos = init_prototypes(Z[y == cls], n_p)
        means.append([p.mean for p in protos])
        variances.append([p.variance for p in protos])
    return GaussianClassifier(np.array(means), np.array(variances), mu, sd)


def _log_components(means, variances, z):
    # log N(z; mean, diag var) for every class/prototype -> [n_classes, n_p]
    diff = z - means
    return -0.5 * (np.sum(diff * diff / variances, axis=-1)
                   + np.sum(np.log(variances), axis=-1)
                   + means.shape[-1] * _LOG2PI)


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _posterior_z(means, variances, priors, z):
    """Posterior and within-class responsibilities for one normalized vector."""
    lc = _log_components(means, variances, z)
    n_p = means.shape[1]
    class_ll = _logsumexp(lc, axis=1) - np.log(n_p) + np.log(priors)
    post = np.exp(class_ll - _logsumexp(class_ll, axis=0))
    post = post / post.sum()
    resp = np.exp(lc - _logsumexp(lc, axis=1)[:, None])
    return post, resp


def posterior(clf: GaussianClassifier, x) -> np.ndarray:
    """Class posteriors (INC, IC) for a raw selected-feature vector ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (clf.n_features,):
        raise ValueError(f"expected {clf.n_features} features, got shape {x.shape}")
    # one code path with the batch version so per-frame and offline agree bitwise
    return posterior_batch(clf, x[None])[0]


def posterior_batch(clf: GaussianClassifier, X) -> np.ndarray:
    """[n_frames x 2] posteriors for raw feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != clf.n_features:
        raise ValueError(f"expected {clf.n_features} features, got {X.shape[1]}")
    Z = clf.normalize(X)
    diff = Z[:, None, None, :] - clf.means[None]
    lc = -0.5 * (np.sum(diff * diff / clf.variances[None], axis=-1)
                 + np.sum(np.log(clf.variances), axis=-1)[None]
                 + clf.n_features * _LOG2PI)
    class_ll = _logsumexp(lc, axis=2) - np.log(clf.n_p) + np.log(clf.priors)[None]
    post = np.exp(class_ll - _logsumexp(class_ll, axis=1)[:, None])
    return post / post.sum(axis=1, keepdims=True)


def mse_loss(means, variances, priors, z, target) -> float:
    post, _ = _posterior_z(means, variances, priors, z)
    return 0.5 * float(np.sum((post - target) ** 2))


def mse_gradient(means, variances, priors, z, target, with_variances: bool = False):
    """Analytic gradient of the squared error w.r.t. prototype means (and variances).

    With ``l_k`` the class log-likelihood and ``r_ki`` the responsibility of
    prototype ``i`` within class ``k``::

        dE/dl_k    = p_k * ((p_k - t_k) - sum_j (p_j - t_j) p_j)
        dl_k/dmu   = r_ki (z - mu_ki) / var_ki
        dl_k/dvar  = r_ki * ((z - mu_ki)**2 / var_ki - 1) / (2 var_ki)
    """
    post, resp = _posterior_z(means, variances, priors, z)
    err = post - target
    g_l = post * (err - np.dot(err, post))
    diff = z - means
    g_mean = (g_l[:, None] * resp)[..., None] * diff / variances
    if not with_variances:
        return post, g_mean, None
    g_var = (g_l[:, None] * resp)[..., None] * 0.5 * (diff * diff / variances - 1.0) / variances
    return post, g_mean, g_var


class _MeanStepper:
    """Lean per-sample update of the means for fixed variances.

    Same arithmetic as :func:`mse_gradient` specialised to two classes,
    where ``dE/dl = 2 p_INC p_IC (p_IC - t_IC) * (-1, +1)``.
    """

    def __init__(self, variances, priors):
        self.inv_var = 1.0 / variances
        self.const = -0.5 * (np.sum(np.log(variances), axis=-1) + variances.shape[-1] * _LOG2PI)
        self.log_prior_ratio = math.log(priors[1]) - math.log(priors[0])
        self.sign = np.array([[-1.0], [1.0]])

    def __call__(self, means, z, t_ic: float, lr: float) -> float:
        diff = z - means
        a = diff * self.inv_var
        lc = self.const - 0.5 * (diff * a).sum(axis=-1)
        m = lc.max(axis=1)
        e = np.exp(lc - m[:, None])
        cs = e.sum(axis=1)
        m0, m1 = m.tolist()
        c0, c1 = cs.tolist()
        d = (m0 + math.log(c0)) - (m1 + math.log(c1) + self.log_prior_ratio)
        p_ic = 1.0 / (1.0 + math.exp(d)) if d < 700 else 0.0
        err = p_ic - t_ic
        g = 2.0 * (1.0 - p_ic) * p_ic * err
        if g != 0.0:
            coef = e * ((lr * g) / cs)[:, None] * self.sign
            means -= coef[..., None] * a
        return err * err  # = 0.5 * sum_k (p_k - t_k)**2 for two classes


@dataclass(frozen=True)
class TrainingLog:
    epoch_mse: tuple


def train(clf: GaussianClassifier, X, y, lr: float = 0.01, epochs: int = 20,
          seed: int = 0, train_variances: bool = False,
          return_log: bool = False):
    """Stochastic gradient descent on the posterior squared error.

    One pass per epoch over the rows in an order shuffled by a seeded RNG.
    Returns a new classifier; ``clf`` is untouched.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if not np.isin(y, CLASSES).all():
        raise ValueError("labels must be IC or INC")
    Z = clf.normalize(X)
    targets = np.zeros((len(y), len(CLASSES)))
    targets[np.arange(len(y)), np.searchsorted(CLASSES, y)] = 1.0

    means = clf.means.copy()
    variances = clf.variances.copy()
    rng = np.random.default_rng(seed)
    history = []
    fast = None if train_variances else _MeanStepper(variances, clf.priors)
    t_ic = targets[:, CLASSES.index(IC)]
    for ep in range(epochs):
        total = 0.0
        if fast is not None:
            for i in rng.permutation(len(y)):
                total += fast(means, Z[i], t_ic[i], lr)
            if not np.all(np.isfinite(means)):
                raise FloatingPointError(f"non-finite prototype means after epoch {ep}")
            history.append(total / max(len(y), 1))
            log.debug("epoch %d mse %.6f", ep, history[-1])
            continue
        for i in rng.permutation(len(y)):
            post, g_mean, g_var = mse_gradient(means, variances, clf.priors, Z[i], targets[i],
                                               with_variances=train_variances)
            if not np.all(np.isfinite(g_mean)) or (g_var is not None and not np.all(np.isfinite(g_var))):
                raise FloatingPointError(f"non-finite gradient at epoch {ep}, sample {i}")
            total += 0.5 * float(np.sum((post - targets[i]) ** 2))
            if lr:
                means -= lr * g_mean
                if g_var is not None:
                    variances = np.maximum(variances - lr * g_var, VARIANCE_FLOOR)
        history.append(total / max(len(y), 1))
        log.debug("epoch %d mse %.6f", ep, history[-1])
    out = replace(clf, means=means, variances=variances)
    if return_log:
        return out, TrainingLog(tuple(history))
    return out


def fit_classifier(X, y, n_p: int = 4, lr: float = 0.01, epochs: int = 20, seed: int = 0,
                   train_variances: bool = False) -> GaussianClassifier:
    return train(build_classifier(X, y, n_p), X, y, lr, epochs, seed, train_variances)
