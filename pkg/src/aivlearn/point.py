"""Point-exposure estimators: debiased ATE and mean potential outcomes with a
prespecified or adaptive weighting function, the multiplicative-IV mean,
the continuous-treatment plug-in, instrument discretization, the pairs
bootstrap and two identification diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from . import eif
from .data import DataError, EstimateReport, FoldAssignment, PointDataset, make_folds
from .nuisance.bundles import (
    FLOOR_TAU,
    MAX_FLOOR_FRACTION,
    FoldRegressions,
    WeakInstrumentError,
    fit_adaptive_bundle_arrays,
    fit_fixed_bundle,
)
from .nuisance.spline import RegressorSpec
from .weights import WeightingFunctionSpec

MIN_N = 50


@dataclass
class EIFEvaluation:
    """Per-observation influence values at the estimate."""

    values: np.ndarray
    mean: float
    second_moment: float


def _check_common(data: PointDataset, K: int):
    if data.n < MIN_N:
        raise DataError(f"need at least {MIN_N} observations, got {data.n}")
    if K < 2:
        raise ValueError("K must be at least 2")


def _require_binary(data: PointDataset):
    if data.treatment_levels != 2:
        raise ValueError(f"this estimator needs a binary treatment, got {data.treatment_levels} levels")


def _folds(data, K, seed, folds):
    if folds is not None:
        if len(folds.folds) != data.n:
            raise ValueError("fold assignment does not match the data")
        return folds
    return make_folds(data.n, K, seed)


def summarize(psi_obs, folds: FoldAssignment, weights=None, estimand="", seed=None,
              diagnostics=None, centre="global") -> EstimateReport:
    """Fold-size-weighted mean of the pseudo-outcomes and its variance.

    ``centre="global"`` centres the second moment at the overall estimate;
    ``"fold"`` centres within each fold (backward-recursion convention).
    """
    psi_obs = np.asarray(psi_obs, dtype=float)
    w = np.ones(len(psi_obs)) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    psi_hat = 0.0
    fold_means = []
    for k in range(folds.K):
        rows = folds.folds == k
        wk = w[rows]
        mk = float(np.dot(wk, psi_obs[rows]) / wk.sum())
        fold_means.append(mk)
        psi_hat += wk.sum() / total * mk
    sigma = 0.0
    fold_vars = []
    for k in range(folds.K):
        rows = folds.folds == k
        wk = w[rows]
        c = fold_means[k] if centre == "fold" else psi_hat
        vk = float(np.dot(wk, (psi_obs[rows] - c) ** 2) / wk.sum())
        fold_vars.append(vk)
        sigma += wk.sum() / total * vk
    diag = dict(diagnostics or {})
    diag.setdefault("variance_centring", centre)
    return EstimateReport(estimand=estimand, psi_hat=psi_hat, sigma_hat_sq=sigma, n=len(psi_obs),
                          K=folds.K, seed=seed if seed is not None else folds.seed,
                          diagnostics=diag, fold_variances=fold_vars)


def _treat(data, level):
    return data.a.astype(float) if level is None else data.indicator(level)


def _regressions(data, folds, spec, with_z):
    regs = []
    for k in range(folds.K):
        ev, tr = folds.indices(k)
        reg = FoldRegressions(tr, spec, data.weights, fold=k)
        reg.add("L", data.l)
        if with_z:
            reg.add("ZL", np.hstack([data.z, data.l]), interact=(0, data.z.shape[1]) if data.l_dim else None)
        regs.append((ev, reg))
    return regs


# --------------------------------------------------------------- families

def _fixed_family(data, folds, spec, weight, targets, kind="fixed", nuisances=None):
    """Cross-fitted pseudo-outcomes for several (treat, outcome) targets that
    share one weighting function, reusing regressions across targets."""
    n = data.n
    out = {name: np.empty(n) for name, *_ in targets}
    diag = {name: {"kappa_floored": 0, "floor_fraction": []} for name, *_ in targets}
    if nuisances is not None:
        for name, treat, outcome, keys in targets:
            nu = nuisances[name] if name in nuisances else nuisances
            out[name] = _fixed_formula(kind, weight, treat, outcome, data.y, nu)
        return out, diag
    for ev, reg in _regressions(data, folds, spec, with_z=False):
        for name, treat, outcome, keys in targets:
            b = fit_fixed_bundle(reg, "L", treat, weight, outcome, ev, keys=keys, context=name)
            nu = b.values()
            out[name][ev] = _fixed_formula(kind, weight[ev], treat[ev], outcome[ev], data.y[ev],
                                           {k: v[ev] for k, v in nu.items()})
            diag[name]["kappa_floored"] += int(b.floored[ev].sum())
            diag[name]["floor_fraction"].append(b.floor_fraction)
    return out, diag


def _fixed_formula(kind, weight, treat, outcome, y, nu):
    if kind == "miv":
        return eif.miv_pseudo(weight, treat, y, nu["delta"], nu["rho"], nu["eta"], nu["kappa"], nu["gamma"])
    return eif.fixed_weight_pseudo(weight, treat, outcome, nu["delta"], nu["rho"], nu["eta"],
                                   nu["kappa"], nu["gamma"])


def _adaptive_family(data, folds, spec, targets, nuisances=None):
    n = data.n
    out = {name: np.empty(n) for name, *_ in targets}
    diag = {name: {"kappa_floored": 0, "floor_fraction": [], "prop_clipped": 0} for name, *_ in targets}
    if nuisances is not None:
        for name, treat, outcome, keys in targets:
            nu = nuisances[name] if name in nuisances else nuisances
            out[name] = eif.adaptive_pseudo(treat, outcome, nu["prop"], nu["delta"], nu["kappa"],
                                            nu["xi"], nu["eta"], nu["gamma"])
        return out, diag
    clip = spec.clip
    for ev, reg in _regressions(data, folds, spec, with_z=True):
        for name, treat, outcome, keys in targets:
            b = fit_adaptive_bundle_arrays(reg, "L", "ZL", treat, outcome, ev, keys=keys, context=name)
            out[name][ev] = eif.adaptive_pseudo(treat[ev], outcome[ev], b.prop[ev], b.delta[ev], b.kappa[ev],
                                                b.xi[ev], b.eta[ev], b.gamma[ev])
            diag[name]["kappa_floored"] += int(b.floored[ev].sum())
            diag[name]["floor_fraction"].append(b.floor_fraction)
            p = b.prop[ev]
            diag[name]["prop_clipped"] += int(np.sum((p <= clip) | (p >= 1 - clip)))
    return out, diag


def _target(data, level, name=None):
    """(name, treat, outcome, cache keys) for the ATE (level None) or E[Y(level)]."""
    if level is None:
        return (name or "ate", data.a.astype(float), data.y, {"treat": ("A",), "outcome": ("Y",), "weight": ("W",)})
    t = data.indicator(level)
    return (name or f"mean[{level}]", t, t * data.y,
            {"treat": ("A", level), "outcome": ("AY", level), "weight": ("W",)})


def _report(psi_obs, folds, data, estimand, diag, extra=None):
    d = {"kappa_floored": diag["kappa_floored"],
         "max_floor_fraction": max(diag["floor_fraction"]) if diag["floor_fraction"] else 0.0}
    if "prop_clipped" in diag:
        d["prop_clipped"] = diag["prop_clipped"]
    d.update(extra or {})
    return summarize(psi_obs, folds, data.weights, estimand, diagnostics=d)


# ------------------------------------------------------------- estimators

def estimate_ate_fixed_pi(data: PointDataset, pi: WeightingFunctionSpec | None = None, K: int = 2,
                          seed: int = 0, spec: RegressorSpec | None = None, folds=None,
                          nuisances=None, return_pseudo: bool = False):
    """Cross-fitted ATE with a prespecified weighting function.

    The influence function is affine in the target with slope -1, so the
    estimating equation is solved by the mean of the pseudo-outcomes.
    """
    pi = pi or WeightingFunctionSpec.identity_coordinate(0)
    if not pi.is_fixed:
        return estimate_ate_adaptive(data, K, seed, spec, folds, nuisances, return_pseudo)
    _require_binary(data)
    _check_common(data, K)
    spec = spec or RegressorSpec()
    folds = _folds(data, K, seed, folds)
    weight = pi.evaluate(data.z, data.l)
    tgt = _target(data, None)
    psi, diag = _fixed_family(data, folds, spec, weight, [tgt], nuisances=nuisances)
    rep = _report(psi["ate"], folds, data, f"ate[pi={pi.label}]", diag["ate"])
    return (rep, psi["ate"]) if return_pseudo else rep


def estimate_ate_adaptive(data: PointDataset, K: int = 2, seed: int = 0, spec: RegressorSpec | None = None,
                          folds=None, nuisances=None, return_pseudo: bool = False):
    """Cross-fitted ATE weighting by the fitted propensity Pr(A=1 | Z, L)."""
    _require_binary(data)
    _check_common(data, K)
    spec = spec or RegressorSpec()
    folds = _folds(data, K, seed, folds)
    tgt = _target(data, None)
    psi, diag = _adaptive_family(data, folds, spec, [tgt], nuisances=nuisances)
    rep = _report(psi["ate"], folds, data, "ate[adaptive]", diag["ate"])
    return (rep, psi["ate"]) if return_pseudo else rep


def estimate_mean_po(data: PointDataset, a: int, pi: WeightingFunctionSpec | None = None, K: int = 2,
                     seed: int = 0, spec: RegressorSpec | None = None, folds=None, nuisances=None,
                     return_pseudo: bool = False):
    """Debiased E[Y(a)].

    A fixed ``pi`` uses the prespecified-weight pseudo-outcome with
    treat = I{A=a}; ``pi`` of kind ``propensity`` uses the adaptive form with
    the fitted Pr(A=a | Z, L).
    """
    if data.treatment_levels is None or not 0 <= a < data.treatment_levels:
        raise ValueError(f"level {a} is not a valid treatment level")
    _check_common(data, K)
    spec = spec or RegressorSpec()
    folds = _folds(data, K, seed, folds)
    pi = pi or WeightingFunctionSpec.identity_coordinate(0)
    tgt = _target(data, a)
    name = tgt[0]
    if pi.is_fixed:
        weight = pi.evaluate(data.z, data.l)
        psi, diag = _fixed_family(data, folds, spec, weight, [tgt], nuisances=nuisances)
        label = f"mean[{a}][pi={pi.label}]"
    else:
        psi, diag = _adaptive_family(data, folds, spec, [tgt], nuisances=nuisances)
        label = f"mean[{a}][adaptive]"
    rep = _report(psi[name], folds, data, label, diag[name])
    return (rep, psi[name]) if return_pseudo else rep


def estimate_mean_po_miv(data: PointDataset, a: int, pi: WeightingFunctionSpec | None = None, K: int = 2,
                         seed: int = 0, spec: RegressorSpec | None = None, folds=None, nuisances=None,
                         return_pseudo: bool = False):
    """E[Y(a)] under a multiplicative instrument (weight defaults to Z)."""
    if data.treatment_levels is None or not 0 <= a < data.treatment_levels:
        raise ValueError(f"level {a} is not a valid treatment level")
    _check_common(data, K)
    spec = spec or RegressorSpec()
    folds = _folds(data, K, seed, folds)
    pi = pi or WeightingFunctionSpec.identity_coordinate(0)
    weight = pi.evaluate(data.z, data.l)
    tgt = _target(data, a)
    name = tgt[0]
    psi, diag = _fixed_family(data, folds, spec, weight, [tgt], kind="miv", nuisances=nuisances)
    rep = _report(psi[name], folds, data, f"mean_miv[{a}][pi={pi.label}]", diag[name])
    return (rep, psi[name]) if return_pseudo else rep


def estimate_point_family(data: PointDataset, adaptive: bool, pi: WeightingFunctionSpec | None = None,
                          K: int = 2, seed: int = 0, spec: RegressorSpec | None = None, folds=None) -> dict:
    """Treated mean, control mean and ATE in one pass.

    Each report is identical to the corresponding single-estimand call with
    the same folds; regressions shared between the three are fitted once.
    """
    _require_binary(data)
    _check_common(data, K)
    spec = spec or RegressorSpec()
    folds = _folds(data, K, seed, folds)
    targets = [_target(data, 1), _target(data, 0), _target(data, None)]
    if adaptive:
        psi, diag = _adaptive_family(data, folds, spec, targets)
        labels = ["mean[1][adaptive]", "mean[0][adaptive]", "ate[adaptive]"]
    else:
        pi = pi or WeightingFunctionSpec.identity_coordinate(0)
        weight = pi.evaluate(data.z, data.l)
        psi, diag = _fixed_family(data, folds, spec, weight, targets)
        labels = [f"mean[1][pi={pi.label}]", f"mean[0][pi={pi.label}]", f"ate[pi={pi.label}]"]
    out = {}
    for key, (name, *_), label in zip(("treated", "control", "ate"), targets, labels):
        out[key] = _report(psi[name], folds, data, label, diag[name])
    return out


def eif_evaluation(psi_obs, report: EstimateReport, weights=None) -> EIFEvaluation:
    phi = np.asarray(psi_obs, dtype=float) - report.psi_hat
    w = np.ones(len(phi)) if weights is None else weights
    return EIFEvaluation(phi, float(np.average(phi, weights=w)), float(np.average(phi ** 2, weights=w)))


# ---------------------------------------------------- continuous treatment

def _dose_point(data, a0, weight, spec, h):
    kern = norm.pdf((data.a - a0) / h)
    if kern.sum() <= 0 or np.count_nonzero(kern > 1e-12 * kern.max()) < 10:
        raise DataError(f"no treatment mass near a0={a0}")
    base = np.ones(data.n) if data.weights is None else data.weights
    from .nuisance.spline import AdditiveDesign

    local = AdditiveDesign(data.l, spec, base * kern)
    marginal = AdditiveDesign(data.l, spec, base)
    Bl = local.basis(data.l)
    Bm = marginal.basis(data.l)
    m_yw = local.fit(data.y * weight).predict_basis(Bl)
    m_y = local.fit(data.y).predict_basis(Bl)
    m_w = local.fit(weight).predict_basis(Bl)
    r = marginal.fit(weight).predict_basis(Bm)
    denom = m_w - r
    floor = FLOOR_TAU * float(np.std(weight))
    hit = np.abs(denom) < floor
    if floor <= 0 or hit.mean() > MAX_FLOOR_FRACTION:
        raise WeakInstrumentError(float(hit.mean()) if floor > 0 else 1.0, f"dose at a0={a0}")
    denom = np.where(hit, np.where(denom < 0, -floor, floor), denom)
    vals = (m_yw - m_y * r) / denom
    return float(np.average(vals, weights=base)), int(hit.sum())


def estimate_dose_response(data: PointDataset, a0: float, pi: WeightingFunctionSpec | None = None,
                           spec: RegressorSpec | None = None, bandwidth: float | None = None,
                           bootstrap: int = 200, seed: int = 0) -> EstimateReport:
    """Plug-in E[Y(a0)] for a continuous treatment.

    Conditional means given A = a0 are localised with a Gaussian kernel in A
    (bandwidth 1.06 sd(A) n^(-1/5) unless given).  No influence-function
    correction exists for this case, so the variance is a pairs-bootstrap
    variance (``bootstrap`` replicates; 0 disables it).
    """
    if data.treatment_levels is not None:
        raise ValueError("dose-response estimation needs a continuous treatment")
    pi = pi or WeightingFunctionSpec.identity_coordinate(0)
    spec = spec or RegressorSpec()
    weight = pi.evaluate(data.z, data.l)
    if np.all(data.y == data.y[0]):
        return EstimateReport(f"dose[{a0:g}]", float(data.y[0]), 0.0, data.n,
                              diagnostics={"variance": "constant outcome"})
    h = bandwidth or 1.06 * float(np.std(data.a)) * data.n ** (-0.2)
    est, floored = _dose_point(data, a0, weight, spec, h)
    var = 0.0
    if bootstrap:
        def stat(d):
            return _dose_point(d, a0, pi.evaluate(d.z, d.l), spec, h)[0]

        boot = pairs_bootstrap(stat, data, bootstrap, seed)
        var = boot.sd ** 2 * data.n
    return EstimateReport(f"dose[{a0:g}]", est, var, data.n, seed=seed,
                          diagnostics={"bandwidth": h, "denominator_floored": floored,
                                       "variance": "pairs bootstrap" if bootstrap else "none"})


# -------------------------------------------------------------- bootstrap

@dataclass
class BootstrapResult:
    mean: float
    sd: float
    ci_lower: float
    ci_upper: float
    replicates: np.ndarray
    failures: int = 0

    def to_dict(self):
        return {"mean": self.mean, "sd": self.sd, "ci_lower": self.ci_lower, "ci_upper": self.ci_upper,
                "B": int(len(self.replicates)), "failures": self.failures}


def bootstrap_indices(n: int, B: int, seed: int):
    from .dgp.simulate import stream

    g = stream(seed, 99)
    for _ in range(B):
        yield g.integers(0, n, size=n)


def pairs_bootstrap(estimator: Callable, data, B: int, seed: int, level: float = 0.95) -> BootstrapResult:
    """Resample rows with replacement and re-run ``estimator`` (which refits
    its nuisances) on each replicate; deterministic given ``seed``."""
    if B < 50:
        raise ValueError(f"bootstrap needs B >= 50, got {B}")
    vals = []
    failures = 0
    for idx in bootstrap_indices(data.n, B, seed):
        try:
            v = estimator(data.subset(idx))
        except (WeakInstrumentError, DataError):
            failures += 1
            continue
        vals.append(float(v.psi_hat if isinstance(v, EstimateReport) else v))
    if len(vals) < 2:
        raise RuntimeError("too few successful bootstrap replicates")
    vals = np.asarray(vals)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(vals, [alpha, 1 - alpha])
    return BootstrapResult(float(vals.mean()), float(vals.std(ddof=1)), float(lo), float(hi), vals, failures)


# ------------------------------------------------------------ diagnostics

@dataclass
class AIVDiagnostic:
    psi1: float
    psi2: float
    difference: float
    std_error: float
    p_value: float
    B: int
    note: str = "p-value from a pairs bootstrap of the difference (nuisances refit per replicate)"

    def to_dict(self):
        return dict(self.__dict__)


def diagnose_aiv(data: PointDataset, pi1: WeightingFunctionSpec, pi2: WeightingFunctionSpec, K: int = 2,
                 seed: int = 0, spec: RegressorSpec | None = None, B: int = 200, a: int | None = None
                 ) -> AIVDiagnostic:
    """Compare the estimand under two weighting functions; under an additive
    instrument both target the same quantity."""
    spec = spec or RegressorSpec()

    def both(d, folds=None):
        if a is None:
            r1 = estimate_ate_fixed_pi(d, pi1, K, seed, spec, folds=folds)
            r2 = estimate_ate_fixed_pi(d, pi2, K, seed, spec, folds=folds)
        else:
            r1 = estimate_mean_po(d, a, pi1, K, seed, spec, folds=folds)
            r2 = estimate_mean_po(d, a, pi2, K, seed, spec, folds=folds)
        return r1.psi_hat, r2.psi_hat

    folds = make_folds(data.n, K, seed)
    p1, p2 = both(data, folds)
    diff = p1 - p2
    if pi1 == pi2:
        return AIVDiagnostic(p1, p2, 0.0, 0.0, 1.0, 0)
    boot = pairs_bootstrap(lambda d: np.subtract(*both(d)), data, B, seed)
    se = boot.sd
    p = 1.0 if se == 0 else float(2 * norm.sf(abs(diff) / se))
    return AIVDiagnostic(p1, p2, diff, se, p, B)


@dataclass
class ConfoundingDiagnostic:
    values: np.ndarray
    mean: float
    ci_lower: float
    ci_upper: float
    bins: list

    def to_dict(self):
        return {"mean": self.mean, "ci_lower": self.ci_lower, "ci_upper": self.ci_upper, "bins": self.bins}


def latent_confounding_values(data, a, pi, folds, spec) -> np.ndarray:
    """Cross-fitted f_a(0, L) = E[A^(a) Y | L] - gamma_a(L) E[A^(a) | L]."""
    weight = pi.evaluate(data.z, data.l)
    name, treat, outcome, keys = _target(data, a)
    vals = np.empty(data.n)
    for ev, reg in _regressions(data, folds, spec, with_z=False):
        b = fit_fixed_bundle(reg, "L", treat, weight, outcome, ev, keys=keys, context=name)
        vals[ev] = b.eta[ev] - b.gamma[ev] * b.delta[ev]
    return vals


def diagnose_latent_confounding(data: PointDataset, a: int, pi: WeightingFunctionSpec | None = None,
                                K: int = 2, seed: int = 0, spec: RegressorSpec | None = None,
                                B: int = 200, n_bins: int = 5) -> ConfoundingDiagnostic:
    """Estimate f_a(0, L); it is identically zero without latent confounding."""
    pi = pi or WeightingFunctionSpec.identity_coordinate(0)
    spec = spec or RegressorSpec()
    folds = make_folds(data.n, K, seed)
    if np.all(data.y == data.y[0]):
        zeros = np.zeros(data.n)
        return ConfoundingDiagnostic(zeros, 0.0, 0.0, 0.0, [])
    vals = latent_confounding_values(data, a, pi, folds, spec)
    mean = float(np.average(vals, weights=data.weights))

    def stat(d):
        return float(np.mean(latent_confounding_values(d, a, pi, make_folds(d.n, K, seed), spec)))

    boot = pairs_bootstrap(stat, data, B, seed)
    bins = []
    if data.l_dim:
        edges = np.quantile(data.l[:, 0], np.linspace(0, 1, n_bins + 1))
        idx = np.clip(np.searchsorted(edges, data.l[:, 0], side="right") - 1, 0, n_bins - 1)
        for b in range(n_bins):
            m = idx == b
            if m.any():
                bins.append({"l0_low": float(edges[b]), "l0_high": float(edges[b + 1]),
                             "mean": float(vals[m].mean()), "count": int(m.sum())})
    return ConfoundingDiagnostic(vals, mean, boot.ci_lower, boot.ci_upper, bins)


# --------------------------------------------------------- discretization

def discretize_instrument(data: PointDataset, cutpoints, coordinate: int = 0) -> PointDataset:
    """Replace instrument coordinate ``coordinate`` by its cell index.

    ``cutpoints`` are the interior boundaries of the partition (cells are
    (-inf, c1], (c1, c2], ...).  Raises on empty cells or when, for some
    treatment level, the treatment rate does not vary across cells.
    """
    cuts = np.sort(np.asarray(cutpoints, dtype=float).ravel())
    zc = data.z[:, coordinate]
    cell = np.searchsorted(cuts, zc, side="left").astype(float)
    n_cells = len(cuts) + 1
    counts = np.bincount(cell.astype(int), minlength=n_cells)
    if n_cells < 2:
        raise DataError("a single-cell partition carries no instrument variation")
    if np.any(counts == 0):
        raise DataError(f"empty instrument cells: {np.nonzero(counts == 0)[0].tolist()}")
    if data.treatment_levels is not None:
        for lev in range(data.treatment_levels):
            rates = [np.mean(data.a[cell == m] == lev) for m in range(n_cells)]
            if np.ptp(rates) == 0:
                raise DataError(f"treatment level {lev} has the same rate in every instrument cell")
    z = data.z.copy()
    z[:, coordinate] = cell
    return data.replace(z=z)


def median_split(data: PointDataset, coordinate: int = 0) -> list:
    return [float(np.median(data.z[:, coordinate]))]

