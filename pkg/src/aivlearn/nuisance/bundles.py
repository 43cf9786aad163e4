"""Fold-wise nuisance bundles for the prespecified-weight and adaptive-weight
pseudo-outcomes.

A :class:`FoldRegressions` object owns the spline designs built on one
training fold and hands out predictions for every row of the dataset, so
the same fitted functions serve the evaluation fold (for the estimate) and
the training fold (where the adaptive and backward recursions need in-sample
values as regression targets).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spline import AdditiveDesign, LocalLinearModel, NuisanceModel, RegressorSpec

FLOOR_TAU = 0.05
MAX_FLOOR_FRACTION = 0.20


class WeakInstrumentError(ValueError):
    """The conditional covariance between treatment and weight is too close
    to zero on too many evaluation points."""

    def __init__(self, fraction: float, context: str = ""):
        self.fraction = float(fraction)
        where = f" ({context})" if context else ""
        super().__init__(
            f"weak instrument{where}: covariance floor hit at {self.fraction:.1%} of evaluation points"
        )


class FoldRegressions:
    """Conditional-mean fits restricted to the training rows of one fold.

    Parameters
    ----------
    train : index array of training rows
    spec : RegressorSpec
    weights : optional frequency weights for all rows
    fold : fold label recorded on fitted models
    """

    def __init__(self, train, spec: RegressorSpec, weights=None, fold=None):
        self.train = np.asarray(train)
        self.spec = spec
        self.weights = weights
        self.fold = fold
        self._x = {}
        self._interact = {}
        self._designs = {}
        self._bases = {}
        self._cache = {}

    def add(self, name: str, x_all: np.ndarray, interact=None) -> None:
        """Register covariate set ``name``; ``interact`` optionally names a
        column pair that gets a tensor-product interaction."""
        x_all = np.asarray(x_all, dtype=float)
        if x_all.ndim == 1:
            x_all = x_all[:, None]
        self._x[name] = x_all
        self._interact[name] = interact

    def has(self, name: str) -> bool:
        return name in self._x

    def _design(self, name):
        if name not in self._designs:
            x = self._x[name]
            w = None if self.weights is None else self.weights[self.train]
            d = AdditiveDesign(x[self.train], self.spec, w, self._interact.get(name))
            self._designs[name] = d
            self._bases[name] = d.basis(x)
        return self._designs[name]

    def fit(self, name: str, target_all, key=None, link: str = "identity") -> tuple[NuisanceModel, np.ndarray]:
        """Regress ``target_all[train]`` on set ``name``; return the model and
        its predictions on every row.  ``key`` memoises the result."""
        if key is not None and (name, key, link) in self._cache:
            return self._cache[(name, key, link)]
        target_all = np.asarray(target_all, dtype=float)
        y = target_all[self.train]
        spec = self.spec if link == "identity" else self.spec.with_link(link)
        if spec.basis == "local_linear":
            x = self._x[name]
            w = None if self.weights is None else self.weights[self.train]
            model = LocalLinearModel(x[self.train], y, spec, w)
            pred = model.predict(x)
        else:
            d = self._design(name)
            raw = d.fit(y)
            if link != "identity":
                raw.spec = spec
            model = raw
            pred = model.predict_basis(self._bases[name])
        out = (NuisanceModel(model, self.fold, {"set": name, "target": key}), pred)
        if key is not None:
            self._cache[(name, key, link)] = out
        return out

    def residual(self, name: str, target_all, key=None) -> np.ndarray:
        """Residuals of ``target_all`` on set ``name``.  On training rows they
        are leave-one-out residuals e / (1 - h), h the smoother leverage, so
        each row's residual comes from a fit that did not see it.  In-sample
        residual products shrink a covariance by about (1 - h), which drives
        kappa toward zero in sparse tails where h is large."""
        model, pred = self.fit(name, target_all, key)
        res = np.asarray(target_all, dtype=float) - pred
        inner = model.model
        if self.spec.basis == "local_linear" or inner.is_constant:
            return res
        h = self._design(name).leverage(inner.lambdas)
        res[self.train] /= 1.0 - np.minimum(h, 0.9)
        return res

    def mean(self, name, target_all, key=None, link="identity") -> np.ndarray:
        return self.fit(name, target_all, key, link)[1]


def _sd(v, w=None):
    if w is None:
        return float(np.std(v))
    m = np.average(v, weights=w)
    return float(np.sqrt(np.average((v - m) ** 2, weights=w)))


def floor_kappa(kappa, floor, eval_rows, positive=False, context=""):
    """Replace |kappa| < floor by sign(kappa) * floor (or +floor when the
    quantity is a variance); error when too many evaluation rows hit it."""
    kappa = np.asarray(kappa, dtype=float)
    hit = np.abs(kappa) < floor
    if positive:
        hit = kappa < floor
    if not np.isfinite(floor) or floor <= 0:
        raise WeakInstrumentError(1.0, context)
    frac = float(hit[eval_rows].mean()) if len(eval_rows) else 0.0
    if frac > MAX_FLOOR_FRACTION:
        raise WeakInstrumentError(frac, context)
    out = kappa.copy()
    if positive:
        out[hit] = floor
    else:
        out[hit] = np.where(kappa[hit] < 0, -floor, floor)
    return out, hit, frac


@dataclass(eq=False)
class FixedPiNuisanceBundle:
    """Prespecified-weight nuisances evaluated on all rows of the dataset."""

    delta: np.ndarray
    rho: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    cross: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray
    floor: float
    floored: np.ndarray
    floor_fraction: float
    models: dict = field(default_factory=dict)

    def values(self) -> dict:
        return {k: getattr(self, k) for k in ("delta", "rho", "eta", "kappa", "gamma")}

    def to_dict(self) -> dict:
        return {"floor": self.floor, "floor_fraction": self.floor_fraction,
                "models": {k: m.to_dict() for k, m in self.models.items()}}


@dataclass(eq=False)
class AdaptiveNuisanceBundle:
    prop: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    prop_mean: np.ndarray
    zeta: np.ndarray
    floor: float
    floored: np.ndarray
    floor_fraction: float
    models: dict = field(default_factory=dict)

    def values(self) -> dict:
        return {k: getattr(self, k) for k in ("prop", "delta", "kappa", "xi", "eta", "gamma")}

    def to_dict(self) -> dict:
        return {"floor": self.floor, "floor_fraction": self.floor_fraction,
                "models": {k: m.to_dict() for k, m in self.models.items()}}


def _res_key(key):
    return None if key is None else ("res",) + key


def fit_fixed_bundle(reg: FoldRegressions, cond: str, treat, weight, outcome, eval_rows,
                     keys: dict | None = None, context: str = "") -> FixedPiNuisanceBundle:
    """Five regressions on the conditioning set ``cond`` (training rows only);
    kappa and gamma are derived from them, never regressed directly."""
    keys = keys or {}
    w_tr = None if reg.weights is None else reg.weights[reg.train]
    m_delta, delta = reg.fit(cond, treat, keys.get("treat"))
    m_rho, rho = reg.fit(cond, weight, keys.get("weight"))
    m_eta, eta = reg.fit(cond, outcome, keys.get("outcome"))
    tw = None if keys.get("treat") is None else ("prod", keys.get("treat"), keys.get("weight"))
    ow = None if keys.get("outcome") is None else ("prod", keys.get("outcome"), keys.get("weight"))
    if reg.spec.covariance == "residual":
        # covariances from residual products; cross and zeta are the implied means
        e_t = reg.residual(cond, treat, keys.get("treat"))
        e_w = reg.residual(cond, weight, keys.get("weight"))
        e_o = reg.residual(cond, outcome, keys.get("outcome"))
        m_cross, cov_tw = reg.fit(cond, e_t * e_w, _res_key(tw))
        m_zeta, cov_ow = reg.fit(cond, e_o * e_w, _res_key(ow))
        cross, zeta = cov_tw + delta * rho, cov_ow + eta * rho
    else:
        m_cross, cross = reg.fit(cond, treat * weight, tw)
        m_zeta, zeta = reg.fit(cond, outcome * weight, ow)
        cov_tw, cov_ow = cross - delta * rho, zeta - eta * rho
    floor = FLOOR_TAU * _sd(weight[reg.train], w_tr) * _sd(treat[reg.train], w_tr)
    kappa, hit, frac = floor_kappa(cov_tw, floor, eval_rows, context=context)
    gamma = cov_ow / kappa
    models = {"delta": m_delta, "rho": m_rho, "eta": m_eta, "cross": m_cross, "zeta": m_zeta}
    return FixedPiNuisanceBundle(delta, rho, eta, zeta, cross, kappa, gamma, floor, hit, frac, models)


def fit_adaptive_bundle_arrays(reg: FoldRegressions, cond: str, cond_z: str, treat, outcome, eval_rows,
                               keys: dict | None = None, context: str = "") -> AdaptiveNuisanceBundle:
    """Adaptive-weight nuisances: propensity on (Z, history), its conditional
    variance given the history, and the outcome regressions."""
    keys = keys or {}
    w_tr = None if reg.weights is None else reg.weights[reg.train]
    m_prop, prop = reg.fit(cond_z, treat, keys.get("treat"), link="clipped_probability")
    m_delta, delta = reg.fit(cond, treat, keys.get("treat"))
    pk = None if keys.get("treat") is None else ("prop", keys.get("treat"))
    m_kappa, kappa_raw = reg.fit(cond, (prop - delta) ** 2, None if pk is None else ("kappa",) + pk)
    m_xi, xi = reg.fit(cond_z, outcome, keys.get("outcome"))
    m_eta, eta = reg.fit(cond, outcome, keys.get("outcome"))
    m_pm, prop_mean = reg.fit(cond, prop, pk)
    ok = None if keys.get("outcome") is None else ("prod", keys.get("outcome"), pk)
    if reg.spec.covariance == "residual":
        e_o = reg.residual(cond, outcome, keys.get("outcome"))
        e_p = reg.residual(cond, prop, pk)
        m_zeta, cov_op = reg.fit(cond, e_o * e_p, _res_key(ok))
        zeta = cov_op + eta * prop_mean
    else:
        m_zeta, zeta = reg.fit(cond, outcome * prop, ok)
        cov_op = zeta - eta * prop_mean
    floor = FLOOR_TAU * _sd(prop[reg.train], w_tr) * _sd(treat[reg.train], w_tr)
    kappa, hit, frac = floor_kappa(kappa_raw, floor, eval_rows, positive=True, context=context)
    gamma = cov_op / kappa
    models = {"prop": m_prop, "delta": m_delta, "kappa": m_kappa, "xi": m_xi, "eta": m_eta,
              "prop_mean": m_pm, "zeta": m_zeta}
    return AdaptiveNuisanceBundle(prop, delta, kappa, xi, eta, gamma, prop_mean, zeta, floor, hit, frac, models)


def _treat_indicator(data, level):
    if level is None:
        if data.treatment_levels != 2:
            raise ValueError("the ATE needs a binary treatment")
        return data.a.astype(float)
    return data.indicator(level)


def fit_fixed_pi_bundle(train, a, pi, spec: RegressorSpec | None = None) -> FixedPiNuisanceBundle:
    """Fit the prespecified-weight bundle on a training dataset.

    ``a=None`` targets the ATE (treat = A, outcome = Y); an integer level
    targets E[Y(a)] (treat = I{A=a}, outcome = I{A=a} Y).
    """
    spec = spec or RegressorSpec()
    treat = _treat_indicator(train, a)
    outcome = train.y if a is None else treat * train.y
    weight = pi.evaluate(train.z, train.l)
    reg = FoldRegressions(np.arange(train.n), spec, train.weights)
    reg.add("L", train.l)
    return fit_fixed_bundle(reg, "L", treat, weight, outcome, np.arange(train.n))


def fit_adaptive_bundle(train, spec: RegressorSpec | None = None, a=None) -> AdaptiveNuisanceBundle:
    spec = spec or RegressorSpec()
    treat = _treat_indicator(train, a)
    outcome = train.y if a is None else treat * train.y
    reg = FoldRegressions(np.arange(train.n), spec, train.weights)
    reg.add("L", train.l)
    reg.add("ZL", np.hstack([train.z, train.l]))
    return fit_adaptive_bundle_arrays(reg, "L", "ZL", treat, outcome, np.arange(train.n))
