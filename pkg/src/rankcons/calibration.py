"""Supervised monotone score transforms: piecewise linear (PWL) and Platt scaling.

Both maps are non-decreasing, so they can change score values but never the
order of two documents. Fitting needs labels, which is what separates these
baselines from consolidation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import lsq_linear
from scipy.special import expit

from .domain import CandidateList, ScoreKind, ScoreVector
from .oracles.synthetic import stable_hash

STRICT_EPS = 1e-9
DEFAULT_KNOTS = 10


@dataclass(frozen=True)
class PwlMap:
    knots_s: np.ndarray
    knots_y: np.ndarray

    def __post_init__(self):
        s = np.array(self.knots_s, dtype=float)
        y = np.array(self.knots_y, dtype=float)
        if s.shape != y.shape or s.ndim != 1 or len(s) < 2:
            raise ValueError("need at least two (s, y) knots of matching shape")
        if np.any(np.diff(s) <= 0) or np.any(np.diff(y) <= 0):
            raise ValueError("knots must be strictly increasing in both coordinates")
        s.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "knots_s", s)
        object.__setattr__(self, "knots_y", y)

    def __call__(self, s):
        return pwl_apply(self, s)


def pwl_apply(pwl: PwlMap, s):
    """Linear interpolation between knots, clamped to the end ordinates outside them."""
    out = np.interp(s, pwl.knots_s, pwl.knots_y)
    return float(out) if np.ndim(out) == 0 else out


def hat_basis(scores: np.ndarray, knots_s: np.ndarray) -> np.ndarray:
    """Interpolation weights: row ``r`` maps knot ordinates to the PWL value at ``scores[r]``."""
    m = len(knots_s)
    s = np.clip(scores, knots_s[0], knots_s[-1])
    right = np.clip(np.searchsorted(knots_s, s, side="right"), 1, m - 1)
    left = right - 1
    u = (s - knots_s[left]) / (knots_s[right] - knots_s[left])
    basis = np.zeros((len(s), m))
    rows = np.arange(len(s))
    basis[rows, left] = 1.0 - u
    basis[rows, right] += u
    return basis


def pwl_fit(scores, targets, n_knots: int = DEFAULT_KNOTS) -> PwlMap:
    """Fit a monotone PWL map by least squares.

    Knot abscissas sit at evenly spaced quantiles of the scores (min and max
    included; quantiles of the distinct values if ties collapse them). The
    ordinates minimize the training MSE of the interpolated map subject to
    being non-decreasing, then are nudged apart by ``STRICT_EPS`` steps so
    they are strictly increasing.
    """
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if scores.shape != targets.shape:
        raise ValueError("scores and targets are not aligned")
    if n_knots < 2:
        raise ValueError(f"need at least 2 knots, got {n_knots}")
    if not np.all(np.isfinite(targets)) or not np.all(np.isfinite(scores)):
        raise ValueError("non-finite scores or targets")
    distinct = np.unique(scores)
    if len(distinct) < n_knots:
        raise ValueError(f"{n_knots} knots need as many distinct scores, got {len(distinct)}")

    q = np.linspace(0.0, 1.0, n_knots)
    knots_s = np.quantile(scores, q)
    if np.any(np.diff(knots_s) <= 0):
        knots_s = np.quantile(distinct, q)

    # ordinates = level + cumulative nonnegative increments
    basis = hat_basis(scores, knots_s)
    steps = np.tril(np.ones((n_knots, n_knots)), -1)[:, : n_knots - 1]
    design = np.column_stack([basis.sum(axis=1), basis @ steps])
    lower = np.r_[-np.inf, np.zeros(n_knots - 1)]
    sol = lsq_linear(design, targets, bounds=(lower, np.inf), method="bvls").x
    knots_y = sol[0] + steps @ sol[1:]
    fit = PwlMap(knots_s, knots_y + STRICT_EPS * np.arange(n_knots))

    const = float(targets.mean())
    if np.mean((fit(scores) - targets) ** 2) > np.mean((const - targets) ** 2):
        fit = PwlMap(knots_s, const + STRICT_EPS * np.arange(n_knots))
    return fit


@dataclass(frozen=True)
class PlattMap:
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def __call__(self, s):
        out = expit(self.alpha * np.asarray(s, dtype=float) + self.beta)
        return float(out) if np.ndim(out) == 0 else out


ALPHA_FLOOR = 1e-12


def _bce(z, t):
    return float(np.mean(np.logaddexp(0.0, z) - t * z))


def platt_fit(scores, targets, max_iter: int = 1000, tol: float = 1e-8) -> PlattMap:
    """Minimize binary cross-entropy of ``sigmoid(alpha * s + beta)`` with alpha > 0.

    Targets may be hard {0, 1} labels or soft labels in [0, 1]. Runs projected,
    damped Newton on standardized scores until the projected gradient norm
    drops below ``tol`` or ``max_iter`` is reached.
    """
    s = np.asarray(scores, dtype=float)
    t = np.asarray(targets, dtype=float)
    if s.shape != t.shape or s.size == 0:
        raise ValueError("scores and targets must be non-empty and aligned")
    if np.any((t < 0) | (t > 1)):
        raise ValueError("targets must lie in [0, 1]")
    if np.ptp(t) == 0:
        raise ValueError("platt_fit needs both classes present (targets are constant)")

    mu = float(s.mean())
    sd = float(s.std()) or 1.0
    x = (s - mu) / sd
    base = float(np.clip(t.mean(), 1e-6, 1 - 1e-6))
    a, b = 1.0, float(np.log(base / (1 - base)))
    damping = 1e-6

    def projected_grad(a, b):
        r = expit(a * x + b) - t
        g = np.array([np.mean(r * x), np.mean(r)])
        if a <= ALPHA_FLOOR and g[0] > 0:
            g[0] = 0.0
        return g

    loss = _bce(a * x + b, t)
    for _ in range(max_iter):
        g = projected_grad(a, b)
        if np.linalg.norm(g) < tol:
            break
        p = expit(a * x + b)
        w = p * (1 - p)
        H = np.array([[np.mean(w * x * x), np.mean(w * x)], [np.mean(w * x), np.mean(w)]])
        H[np.diag_indices(2)] += damping
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -g
        if step @ g >= 0:
            step = -g
        lr = 1.0
        while lr > 1e-12:
            na, nb = max(a + lr * step[0], ALPHA_FLOOR), b + lr * step[1]
            nl = _bce(na * x + nb, t)
            if nl <= loss:
                break
            lr *= 0.5
        else:
            break
        a, b, loss = na, nb, nl
    return PlattMap(alpha=a / sd, beta=b - a * mu / sd)


def fold_assignment(query_ids: Iterable[str], folds: int, seed: int) -> dict[str, int]:
    """Shuffle queries by a seeded hash and deal them round-robin into ``folds``."""
    if folds < 2:
        raise ValueError("need at least two folds")
    ordered = sorted(query_ids, key=lambda q: (stable_hash(seed, "fold", q), q))
    return {q: k % folds for k, q in enumerate(ordered)}


def crossval_calibrate(
    lists: Iterable[CandidateList],
    scores: Mapping[str, ScoreVector],
    method: str = "pwl",
    folds: int = 4,
    seed: int = 0,
    n_knots: int = DEFAULT_KNOTS,
) -> dict[str, ScoreVector]:
    """K-fold (by query) calibration against normalized labels.

    Each fold is transformed by a map fit on all other folds. When a fit is
    impossible (single-class targets for Platt, too few distinct scores for
    PWL) the fold's scores pass through unchanged with a warning.
    """
    if method not in ("pwl", "platt"):
        raise ValueError(f"unknown calibration method {method!r}")
    lists = [cl for cl in lists if cl.query_id in scores]
    for cl in lists:
        if cl.normalized_labels is None:
            raise ValueError(f"query {cl.query_id!r} has no labels")
    assign = fold_assignment([cl.query_id for cl in lists], folds, seed)
    out: dict[str, ScoreVector] = {}
    for f in range(folds):
        held = [cl for cl in lists if assign[cl.query_id] == f]
        if not held:
            continue
        train = [cl for cl in lists if assign[cl.query_id] != f]
        x = np.concatenate([scores[cl.query_id].values for cl in train]) if train else np.zeros(0)
        y = np.concatenate([cl.normalized_labels for cl in train]) if train else np.zeros(0)
        fmap = None
        try:
            if method == "platt":
                fmap = platt_fit(x, y)
            else:
                m = min(n_knots, len(np.unique(x)))
                fmap = pwl_fit(x, y, m)
        except ValueError as exc:
            warnings.warn(f"fold {f}: {method} fit skipped ({exc}); scores passed through")
        for cl in held:
            v = scores[cl.query_id].values
            out[cl.query_id] = ScoreVector(
                cl.query_id, ScoreKind.CALIBRATED, fmap(v) if fmap is not None else v
            )
    return out
