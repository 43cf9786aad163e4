"""Conditional-mean regressors: additive penalized cubic regression splines
with cross-validated smoothing, and a local-linear kernel smoother.

The spline engine is organised around :class:`AdditiveDesign`, which holds
the basis and the cross-validation Gram matrices for one set of training
covariates.  Every nuisance regression on the same covariates reuses it, so
fitting another target only costs a handful of small linear solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class RegressorSpec:
    """Configuration of the conditional-mean learner.

    Parameters
    ----------
    basis : {"pspline", "local_linear"}
    n_knots : int
        Interior knots per smooth, placed at covariate quantiles.
    penalty_grid : tuple of float
        Relative smoothing parameters searched by cross-validation.
    cv_folds : int
    link : {"identity", "clipped_probability"}
    clip : float
        Probability clip used by the ``clipped_probability`` link.
    bandwidth_scale : float
        Multiplier on the rule-of-thumb bandwidth (local-linear only).
    max_factor_levels : int
        Covariates with at most this many distinct values get a factor term.
    covariance : {"decomposition", "residual"}
        How nuisance bundles estimate conditional covariances: as
        E[XY|L] - E[X|L]E[Y|L] from three regressions, or by regressing the
        product of leave-one-out residuals on L.
    interaction_knots : int
        Interior knots per margin of the tensor-product interaction added
        between the first instrument and first covariate when regressing on
        (Z, L); 0 keeps the model purely additive.
    """

    basis: str = "pspline"
    n_knots: int = 20
    penalty_grid: tuple = tuple(float(v) for v in np.logspace(-6, 4, 21))
    cv_folds: int = 5
    link: str = "identity"
    clip: float = 0.01
    bandwidth_scale: float = 1.0
    max_factor_levels: int = 6
    covariance: str = "residual"
    interaction_knots: int = 6

    def __post_init__(self):
        if self.basis not in ("pspline", "local_linear"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.link not in ("identity", "clipped_probability"):
            raise ValueError(f"unknown link {self.link!r}")
        if self.covariance not in ("decomposition", "residual"):
            raise ValueError(f"unknown covariance mode {self.covariance!r}")
        if not self.penalty_grid or min(self.penalty_grid) <= 0:
            raise ValueError("penalty grid must be non-empty and positive")
        if not 0 < self.clip < 0.5:
            raise ValueError("probability clip must lie in (0, 0.5)")
        if self.n_knots < 1 or self.cv_folds < 2:
            raise ValueError("need n_knots >= 1 and cv_folds >= 2")
        if self.interaction_knots < 0:
            raise ValueError("interaction_knots must be non-negative")
        object.__setattr__(self, "penalty_grid", tuple(float(v) for v in self.penalty_grid))

    def with_link(self, link: str) -> "RegressorSpec":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["link"] = link
        return RegressorSpec(**d)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in
                ((k, getattr(self, k)) for k in self.__dataclass_fields__)}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressorSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown regressor keys: {sorted(unknown)}")
        d = dict(d)
        if "penalty_grid" in d:
            d["penalty_grid"] = tuple(d["penalty_grid"])
        return cls(**d)


# ------------------------------------------------------------------ terms

@dataclass(eq=False)
class _SmoothTerm:
    col: int
    knots: np.ndarray       # full knot vector, boundary knots repeated 4 times
    constraint: np.ndarray  # (k, k-1) null-space map enforcing sum-to-zero
    lo: float
    hi: float
    penalty: np.ndarray = None

    @property
    def width(self) -> int:
        return self.constraint.shape[1]

    def raw_basis(self, x):
        x = np.clip(x, self.lo, self.hi)
        return BSpline.design_matrix(x, self.knots, 3).toarray()

    def basis(self, x):
        return self.raw_basis(x) @ self.constraint

    def design(self, x):
        return self.basis(x[:, self.col])

    def to_dict(self):
        return {"kind": "smooth", "col": self.col, "knots": self.knots.tolist(),
                "constraint": self.constraint.tolist(), "lo": self.lo, "hi": self.hi}


@dataclass(eq=False)
class _FactorTerm:
    col: int
    levels: np.ndarray

    @property
    def width(self) -> int:
        return len(self.levels) - 1

    def basis(self, x):
        # unseen values snap to the nearest training level
        idx = np.abs(x[:, None] - self.levels[None, :]).argmin(axis=1)
        out = np.zeros((x.shape[0], self.width))
        rows = np.nonzero(idx > 0)[0]
        out[rows, idx[rows] - 1] = 1.0
        return out

    def design(self, x):
        return self.basis(x[:, self.col])

    def to_dict(self):
        return {"kind": "factor", "col": self.col, "levels": self.levels.tolist()}


@dataclass(eq=False)
class _TensorTerm:
    """Interaction-only tensor product of two centred marginal smooths."""

    first: _SmoothTerm
    second: _SmoothTerm
    penalty: np.ndarray = None

    @property
    def width(self) -> int:
        return self.first.width * self.second.width

    def design(self, x):
        a = self.first.basis(x[:, self.first.col])
        b = self.second.basis(x[:, self.second.col])
        return (a[:, :, None] * b[:, None, :]).reshape(x.shape[0], -1)

    def to_dict(self):
        return {"kind": "tensor", "first": self.first.to_dict(), "second": self.second.to_dict()}


def _curvature_penalty(knots: np.ndarray) -> np.ndarray:
    """Gram matrix of integrated squared second derivatives of the cubic
    B-spline basis; exact via 2-point Gauss-Legendre per knot interval."""
    k = len(knots) - 4
    breaks = np.unique(knots)
    gx, gw = np.polynomial.legendre.leggauss(2)
    mid = 0.5 * (breaks[1:] + breaks[:-1])
    half = 0.5 * (breaks[1:] - breaks[:-1])
    xq = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wq = (half[:, None] * gw[None, :]).ravel()
    d2 = BSpline(knots, np.eye(k), 3).derivative(2)(xq)
    return d2.T @ (d2 * wq[:, None])


def _build_terms(x: np.ndarray, w: np.ndarray, spec: RegressorSpec, interact=None):
    n, d = x.shape
    kinds = []
    for j in range(d):
        uniq = np.unique(x[:, j])
        if uniq.size <= 1:
            continue
        if uniq.size <= spec.max_factor_levels:
            kinds.append(("factor", j, uniq))
        else:
            kinds.append(("smooth", j, uniq))
    n_smooth = sum(1 for k in kinds if k[0] == "smooth")
    factor_cols = sum(len(k[2]) - 1 for k in kinds if k[0] == "factor")
    budget = n - 2 - 1 - factor_cols
    per_term = spec.n_knots
    if n_smooth:
        # basis width per smooth is n_int + 3 after the centring constraint
        per_term = min(per_term, budget // n_smooth - 3)
        if per_term < 1:
            raise InsufficientDataError(
                f"{n} rows cannot support {n_smooth} smooth terms (need at least {n_smooth * 4 + factor_cols + 3})"
            )
    terms = []
    for kind, j, uniq in kinds:
        if kind == "factor":
            terms.append(_FactorTerm(j, uniq))
        else:
            terms.append(_smooth_term(x[:, j], j, uniq, per_term, w))
    if interact is not None and spec.interaction_knots > 0:
        a, b = interact
        smooth = {k[1]: k[2] for k in kinds if k[0] == "smooth"}
        if a in smooth and b in smooth:
            ta = _smooth_term(x[:, a], a, smooth[a], spec.interaction_knots, w)
            tb = _smooth_term(x[:, b], b, smooth[b], spec.interaction_knots, w)
            sa = ta.penalty / np.trace(ta.penalty)
            sb = tb.penalty / np.trace(tb.penalty)
            pen = np.kron(sa, np.eye(tb.width)) + np.kron(np.eye(ta.width), sb)
            used = 1 + sum(t.width for t in terms)
            if n > 4 * (used + ta.width * tb.width):
                terms.append(_TensorTerm(ta, tb, pen))
    return terms


def _smooth_term(xs, j, uniq, per_term, w) -> _SmoothTerm:
    lo, hi = float(uniq[0]), float(uniq[-1])
    n_int = min(per_term, uniq.size - 4) if uniq.size > 5 else 1
    probs = np.linspace(0, 1, n_int + 2)[1:-1]
    inner = np.unique(np.quantile(xs, probs))
    inner = inner[(inner > lo) & (inner < hi)]
    knots = np.concatenate([[lo] * 4, inner, [hi] * 4])
    raw = BSpline.design_matrix(xs, knots, 3).toarray()
    colsum = (w @ raw)[None, :]
    q, _ = np.linalg.qr(colsum.T, mode="complete")
    constraint = q[:, 1:]
    term = _SmoothTerm(j, knots, constraint, lo, hi)
    term.penalty = constraint.T @ _curvature_penalty(knots) @ constraint
    return term


class AdditiveDesign:
    """Additive spline design for fixed training covariates.

    Holds the design matrix, per-fold Gram matrices for the internal
    cross-validation, and the scaled penalty blocks.  ``fit(target)`` returns
    an :class:`AdditiveSplineModel`.
    """

    def __init__(self, x, spec: RegressorSpec | None = None, weights=None, interact=None):
        spec = spec or RegressorSpec()
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n = x.shape[0]
        if n < 10:
            raise InsufficientDataError(f"need at least 10 rows to fit a regression, got {n}")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        self.spec = spec
        self.n, self.dim = x.shape
        self.weights = w
        self.terms = _build_terms(x, w, spec, interact)
        self.X = self.basis(x)
        p = self.X.shape[1]
        if n < max(10, p + 2):
            raise InsufficientDataError(f"need at least {p + 2} rows for basis of dimension {p}")
        self.p = p
        self._slices = []
        start = 1
        for t in self.terms:
            self._slices.append(slice(start, start + t.width))
            start += t.width
        XW = self.X * w[:, None]
        self.gram = XW.T @ self.X
        # penalty blocks scaled to the data so one grid serves all terms
        self._blocks = []
        for t, sl in zip(self.terms, self._slices):
            if isinstance(t, (_SmoothTerm, _TensorTerm)):
                s = t.penalty
                scale = np.trace(self.gram[sl, sl]) / max(np.trace(s), 1e-300)
                self._blocks.append((sl, s * scale))
            else:
                self._blocks.append((sl, None))
        self._jitter = 1e-10 * np.trace(self.gram) / p
        k = min(spec.cv_folds, n)
        self._cv_fold = np.arange(n) % k
        self._fold_rows = [np.nonzero(self._cv_fold == f)[0] for f in range(k)]
        self._fold_grams = [XW[r].T @ self.X[r] for r in self._fold_rows]

    def basis(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        cols = [np.ones((x.shape[0], 1))]
        cols += [t.design(x) for t in self.terms]
        return np.hstack(cols)

    def _penalty(self, lams) -> np.ndarray:
        P = np.zeros((self.p, self.p))
        for (sl, s), lam in zip(self._blocks, lams):
            if s is not None:
                P[sl, sl] += lam * s
        # a tiny ridge on non-intercept columns guards against collinear factors
        idx = np.arange(1, self.p)
        P[idx, idx] += self._jitter
        return P

    @staticmethod
    def _solve(A, b):
        try:
            c = linalg.cho_factor(A, check_finite=False)
            return linalg.cho_solve(c, b, check_finite=False)
        except linalg.LinAlgError:
            return linalg.lstsq(A, b, check_finite=False)[0]

    def _cv_error(self, lams, xty_folds, yty_folds, xty):
        P = self._penalty(lams)
        err = 0.0
        for G_f, c_f, yy_f in zip(self._fold_grams, xty_folds, yty_folds):
            beta = self._solve(self.gram - G_f + P, xty - c_f)
            err += yy_f - 2.0 * beta @ c_f + beta @ G_f @ beta
        return err

    def _select_penalties(self, y) -> list:
        n_pen = sum(1 for _, s in self._blocks if s is not None)
        lams = [0.0] * len(self._blocks)
        if n_pen == 0:
            return lams
        w = self.weights
        wy = w * y
        xty = self.X.T @ wy
        xty_folds = [self.X[r].T @ wy[r] for r in self._fold_rows]
        yty_folds = [float(wy[r] @ y[r]) for r in self._fold_rows]
        grid = self.spec.penalty_grid
        pen_idx = [i for i, (_, s) in enumerate(self._blocks) if s is not None]

        def trial(vals):
            lv = list(lams)
            for i, v in zip(pen_idx, vals):
                lv[i] = v
            return self._cv_error(lv, xty_folds, yty_folds, xty)

        scores = [trial([g] * len(pen_idx)) for g in grid]
        best = grid[int(np.argmin(scores))]
        current = [best] * len(pen_idx)
        if len(pen_idx) > 1:
            for pos in range(len(pen_idx)):
                sc = []
                for g in grid:
                    cand = list(current)
                    cand[pos] = g
                    sc.append(trial(cand))
                current[pos] = grid[int(np.argmin(sc))]
        for i, v in zip(pen_idx, current):
            lams[i] = v
        return lams

    def leverage(self, lams) -> np.ndarray:
        """Diagonal of the hat matrix at penalties ``lams`` (training rows)."""
        if not self.terms:
            return self.weights / self.weights.sum()
        A_inv_Xt = self._solve(self.gram + self._penalty(lams), self.X.T)
        return self.weights * np.einsum("ij,ji->i", self.X, A_inv_Xt)

    def fit(self, target) -> "AdditiveSplineModel":
        y = np.asarray(target, dtype=float).ravel()
        if y.shape[0] != self.n:
            raise ValueError("target length does not match the design")
        if not np.all(np.isfinite(y)):
            raise ValueError("target must be finite")
        if y.size and np.all(y == y[0]):
            return AdditiveSplineModel.constant(float(y[0]), self.spec)
        w = self.weights
        if not self.terms:
            return AdditiveSplineModel.constant(float(np.average(y, weights=w)), self.spec)
        lams = self._select_penalties(y)
        beta = self._solve(self.gram + self._penalty(lams), self.X.T @ (w * y))
        return AdditiveSplineModel(self.terms, beta, lams, self.spec)


class AdditiveSplineModel:
    """A fitted additive spline x -> E[target | x]."""

    def __init__(self, terms, coef, lambdas, spec: RegressorSpec):
        self.terms = terms
        self.coef = np.asarray(coef, dtype=float)
        self.lambdas = list(lambdas)
        self.spec = spec

    @classmethod
    def constant(cls, value: float, spec: RegressorSpec):
        return cls([], np.array([value]), [], spec)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def predict_basis(self, B: np.ndarray) -> np.ndarray:
        """Predict from a basis matrix produced by the training design."""
        if self.is_constant:
            out = np.full(B.shape[0], self.coef[0])
        else:
            out = B @ self.coef
        return self._link(out)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.is_constant:
            return self._link(np.full(x.shape[0], self.coef[0]))
        cols = [np.ones((x.shape[0], 1))] + [t.design(x) for t in self.terms]
        return self._link(np.hstack(cols) @ self.coef)

    def _link(self, v):
        if self.spec.link == "clipped_probability":
            return np.clip(v, self.spec.clip, 1.0 - self.spec.clip)
        return v

    def to_dict(self) -> dict:
        return {
            "basis": "pspline",
            "terms": [t.to_dict() for t in self.terms],
            "coef": self.coef.tolist(),
            "lambdas": self.lambdas,
            "spec": self.spec.to_dict(),
        }


# ------------------------------------------------------ local-linear kernel

class LocalLinearModel:
    """Gaussian product-kernel local-linear smoother, bandwidth per
    coordinate 1.06 * sd * n^(-1/5) times ``bandwidth_scale``."""

    def __init__(self, x, y, spec: RegressorSpec, weights=None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        keep = np.ptp(x, axis=0) > 0 if x.shape[0] else np.zeros(x.shape[1], bool)
        self.x = x[:, keep]
        self.keep = keep
        self.y = np.asarray(y, dtype=float)
        self.w = np.ones(len(self.y)) if weights is None else np.asarray(weights, dtype=float)
        self.spec = spec
        n = len(self.y)
        sd = self.x.std(axis=0) if self.x.shape[1] else np.empty(0)
        self.h = spec.bandwidth_scale * 1.06 * sd * n ** (-0.2)
        self.lo = self.x.min(axis=0) if self.x.shape[1] else np.empty(0)
        self.hi = self.x.max(axis=0) if self.x.shape[1] else np.empty(0)
        self.const = float(self.y[0]) if np.all(self.y == self.y[0]) else None

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        m = x.shape[0]
        if self.const is not None:
            return self._link(np.full(m, self.const))
        if self.x.shape[1] == 0:
            return self._link(np.full(m, np.average(self.y, weights=self.w)))
        x = np.clip(x[:, self.keep], self.lo, self.hi)
        out = np.empty(m)
        d = self.x.shape[1]
        for s in range(0, m, 256):
            x0 = x[s:s + 256]
            diff = (self.x[None, :, :] - x0[:, None, :]) / self.h
            k = np.exp(-0.5 * (diff ** 2).sum(axis=2)) * self.w[None, :]
            design = np.concatenate([np.ones(diff.shape[:2] + (1,)), diff], axis=2)
            A = np.einsum("mi,mij,mik->mjk", k, design, design)
            b = np.einsum("mi,mij,i->mj", k, design, self.y)
            A += 1e-10 * np.eye(d + 1)[None] * A[:, :1, :1]
            try:
                out[s:s + 256] = np.linalg.solve(A, b[..., None])[:, 0, 0]
            except np.linalg.LinAlgError:
                out[s:s + 256] = (k @ self.y) / k.sum(axis=1)
        return self._link(out)

    def _link(self, v):
        if self.spec.link == "clipped_probability":
            return np.clip(v, self.spec.clip, 1.0 - self.spec.clip)
        return v

    def to_dict(self) -> dict:
        return {"basis": "local_linear", "bandwidth": self.h.tolist(), "spec": self.spec.to_dict()}


@dataclass(eq=False)
class NuisanceModel:
    """A fitted regressor x -> E[target | x], tagged with its training fold."""

    model: object
    fold: int | None = None
    meta: dict = field(default_factory=dict)

    def predict(self, x) -> np.ndarray:
        return self.model.predict(x)

    def to_dict(self) -> dict:
        return {"fold": self.fold, **self.model.to_dict(), **self.meta}


def fit_conditional_mean(x, target, spec: RegressorSpec | None = None, weights=None,
                         fold: int | None = None) -> NuisanceModel:
    """Fit E[target | x].

    Multivariate ``x`` gets an additive model with one smooth (or factor)
    term per coordinate; smoothing parameters are chosen by internal
    cross-validation over ``spec.penalty_grid``.
    """
    spec = spec or RegressorSpec()
    y = np.asarray(target, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and target lengths differ")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
        raise ValueError("regression inputs must be finite")
    if spec.basis == "local_linear":
        if y.shape[0] < 10:
            raise InsufficientDataError("need at least 10 rows")
        return NuisanceModel(LocalLinearModel(x, y, spec, weights), fold)
    return NuisanceModel(AdditiveDesign(x, spec, weights).fit(y), fold)


def rmse(a, b) -> float:
    return math.sqrt(float(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))
