"""Backward cross-fitting for longitudinal mean potential outcomes under
static regimes, dynamic regimes and adaptive weighting.

Within each fold the pseudo-outcome starts at Y and is folded back one
period at a time: the period-t nuisances are fitted on the training rows
with I{A_t = g_t(H_t)} Psi_{t+1} as the outcome, and the update is applied to
every row so that the next (earlier) period has regression targets.  The
estimate is the fold-size-weighted mean of Psi_0 over evaluation rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import eif
from .data import DataError, EstimateReport, PanelDataset, make_folds
from .nuisance.bundles import FoldRegressions, fit_adaptive_bundle_arrays, fit_fixed_bundle
from .nuisance.spline import RegressorSpec
from .point import MIN_N, summarize
from .regimes import DynamicRegime, FixedRule, NaturalRule, RegimeError, StaticRegime, ThresholdRule, as_dynamic

WINSOR_IQR = 50.0


@dataclass
class BackwardState:
    """Per-fold record of the backward sweep (all arrays are full length)."""

    fold: int
    psi: dict = field(default_factory=dict)          # t -> Psi_t, with T+1 -> Y
    nuisances: dict = field(default_factory=dict)    # t -> dict of arrays
    treats: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    winsorized: int = 0
    kappa_floored: int = 0
    max_floor_fraction: float = 0.0


def _check_panel(data: PanelDataset, regime, K):
    if data.n < MIN_N:
        raise DataError(f"need at least {MIN_N} observations, got {data.n}")
    if K < 2:
        raise ValueError("K must be at least 2")
    if regime.horizon != data.horizon:
        raise RegimeError(f"regime has horizon {regime.horizon} but the data has T={data.horizon}")
    for t, rule in enumerate(regime.rules):
        levels = data.treatment_levels[t]
        used = {rule.level} if isinstance(rule, FixedRule) else (
            rule.levels() if isinstance(rule, ThresholdRule) else set())
        for a in used:
            if not 0 <= a < levels:
                raise RegimeError(f"period {t}: level {a} is not valid (levels 0..{levels - 1})")
        if isinstance(rule, ThresholdRule):
            rule.column(data.history_names(t))


def _winsorize(values, train, rows_for_count):
    q1, q3 = np.quantile(values[train], [0.25, 0.75])
    spread = q3 - q1
    lo, hi = q1 - WINSOR_IQR * spread, q3 + WINSOR_IQR * spread
    out = np.clip(values, lo, hi)
    return out, int(np.count_nonzero(out[rows_for_count] != values[rows_for_count]))


def _period_assignment(rule, data, t, hist, train):
    """Regime assignment g_t(H_t) on all rows, or None for the natural rule."""
    if isinstance(rule, NaturalRule):
        return None
    if isinstance(rule, FixedRule):
        return np.full(data.n, rule.level, dtype=np.int64)
    names = data.history_names(t)
    w = None if data.weights is None else data.weights[train]
    cut = rule.cutoff(hist[train], names, w)
    return rule.assign(hist, names, cut)


def _instrument(data, t, coordinate):
    z = data.z[t]
    if coordinate >= z.shape[1]:
        raise ValueError(f"period {t}: instrument coordinate {coordinate} >= dimension {z.shape[1]}")
    return z[:, coordinate].astype(float)


def _fixed_period(reg, data, t, assign, psi_next, weight, ev, state, tail):
    """Fixed-weight nuisances for period t, combining per-level fits by the
    regime's assignment so that static and dynamic paths coincide.  ``tail``
    (the rules after t) identifies Psi_{t+1} in the regression cache."""
    levels = np.unique(assign)
    at = data.a[t]
    parts = {}
    for lev in levels:
        treat = (at == lev).astype(float)
        keys = {"treat": ("A", t, int(lev)), "weight": ("W", t, tail[2]), "outcome": ("AP", t, int(lev), tail)}
        b = fit_fixed_bundle(reg, "H", treat, weight, treat * psi_next, ev, keys=keys, context=f"period {t}")
        parts[int(lev)] = b
    if len(levels) == 1:
        b = parts[int(levels[0])]
        nu = {k: getattr(b, k) for k in ("delta", "rho", "eta", "kappa", "gamma")}
        floored, frac = b.floored, b.floor_fraction
    else:
        nu = {k: np.zeros(data.n) for k in ("delta", "rho", "eta", "kappa", "gamma")}
        floored = np.zeros(data.n, dtype=bool)
        for lev, b in parts.items():
            m = assign == lev
            for k in nu:
                nu[k][m] = getattr(b, k)[m]
            floored[m] = b.floored[m]
        frac = float(floored[ev].mean())
    state.kappa_floored += int(floored[ev].sum())
    state.max_floor_fraction = max(state.max_floor_fraction, frac)
    return nu


def _adaptive_period(reg, data, t, level, psi_next, ev, state, tail):
    treat = (data.a[t] == level).astype(float)
    keys = {"treat": ("A", t, level), "outcome": ("AP", t, level, tail)}
    b = fit_adaptive_bundle_arrays(reg, "H", "ZH", treat, treat * psi_next, ev, keys=keys, context=f"period {t}")
    state.kappa_floored += int(b.floored[ev].sum())
    state.max_floor_fraction = max(state.max_floor_fraction, b.floor_fraction)
    return b.values()


class _SweepCache:
    """Per-(fold, period) regression objects shared by every regime swept
    over the same data and folds."""

    def __init__(self, data, spec):
        self.data = data
        self.spec = spec
        self._regs = {}

    def get(self, k, t, tr, adaptive):
        key = (k, t)
        if key not in self._regs:
            reg = FoldRegressions(tr, self.spec, self.data.weights, fold=k)
            reg.add("H", self.data.history(t))
            self._regs[key] = reg
        reg = self._regs[key]
        if adaptive and not reg.has("ZH"):
            zt = self.data.z[t]
            reg.add("ZH", np.hstack([zt, self.data.history(t)]), interact=(0, zt.shape[1]))
        return reg


def backward_sweep(data: PanelDataset, regime: DynamicRegime, folds, spec: RegressorSpec, adaptive=False,
                   instrument_coordinate: int = 0, winsorize: bool = True, nuisances=None, cache=None):
    """Run the backward recursion in every fold.

    Returns the per-observation Psi_0 (each row taken from the fold where it
    is an evaluation row) and the per-fold :class:`BackwardState`.

    ``nuisances`` (optional) maps period t to a dict of full-length true
    nuisance arrays; regressions are then skipped and every row is updated
    with those values, which is how the enumeration oracles are checked.
    ``cache`` shares fitted regressions between calls on the same data.
    """
    T = data.horizon
    cache = cache or _SweepCache(data, spec)
    psi0 = np.empty(data.n)
    states = []
    fold_ids = [None] if nuisances is not None else range(folds.K)
    for k in fold_ids:
        if k is None:
            ev = np.arange(data.n)
            tr = ev
        else:
            ev, tr = folds.indices(k)
        state = BackwardState(fold=-1 if k is None else k)
        psi = data.y.astype(float).copy()
        state.psi[T + 1] = psi
        for t in range(T, -1, -1):
            rule = regime.rules[t]
            tail = (adaptive, winsorize, instrument_coordinate) + tuple(regime.rules[t + 1:])
            assign = _period_assignment(rule, data, t, data.history(t), tr)
            if assign is None:
                state.psi[t] = psi
                continue
            treat = (data.a[t] == assign).astype(float)
            state.treats[t] = treat
            if nuisances is not None:
                nu = nuisances[t]
            else:
                reg = cache.get(k, t, tr, adaptive)
            if adaptive:
                if not isinstance(rule, FixedRule):
                    raise RegimeError("adaptive weighting supports static regimes only")
                if nuisances is None:
                    nu = _adaptive_period(reg, data, t, rule.level, psi, ev, state, tail)
                new = eif.adaptive_pseudo(treat, treat * psi, nu["prop"], nu["delta"], nu["kappa"],
                                          nu["xi"], nu["eta"], nu["gamma"])
            else:
                weight = _instrument(data, t, instrument_coordinate)
                state.weights[t] = weight
                if nuisances is None:
                    nu = _fixed_period(reg, data, t, assign, psi, weight, ev, state, tail)
                new = eif.fixed_weight_pseudo(weight, treat, treat * psi, nu["delta"], nu["rho"], nu["eta"],
                                              nu["kappa"], nu["gamma"])
            state.nuisances[t] = nu
            # Psi_0 is the estimate itself and is left untouched
            if winsorize and t > 0:
                new, hits = _winsorize(new, tr, ev)
                state.winsorized += hits
            if not np.all(np.isfinite(new[ev])):
                raise FloatingPointError(f"non-finite pseudo-outcome at period {t}")
            psi = new
            state.psi[t] = psi
        psi0[ev] = psi[ev]
        states.append(state)
    return psi0, states


def _estimate(data, regime, K, seed, spec, adaptive, label, folds=None, instrument_coordinate=0,
              winsorize=True, nuisances=None, return_states=False, cache=None):
    regime = as_dynamic(regime)
    _check_panel(data, regime, K)
    spec = spec or RegressorSpec()
    folds = folds or make_folds(data.n, K, seed)
    psi0, states = backward_sweep(data, regime, folds, spec, adaptive, instrument_coordinate, winsorize,
                                  nuisances, cache)
    diag = {
        "regime": regime.label,
        "winsorized": sum(s.winsorized for s in states),
        "kappa_floored": sum(s.kappa_floored for s in states),
        "max_floor_fraction": max(s.max_floor_fraction for s in states),
        "weighting": "adaptive" if adaptive else f"z[{instrument_coordinate}]",
    }
    if nuisances is not None:
        rep = summarize(psi0, make_folds(data.n, 2, seed), data.weights, f"{label}{regime.label}",
                        diagnostics=diag, centre="global")
        rep.K = None
    else:
        rep = summarize(psi0, folds, data.weights, f"{label}{regime.label}", diagnostics=diag, centre="fold")
    if return_states:
        return rep, psi0, states
    return rep


def estimate_longitudinal_static(data: PanelDataset, regime, K: int = 2, seed: int = 0,
                                 spec: RegressorSpec | None = None, **kw) -> EstimateReport:
    """E[Y(a_0, ..., a_T)] with the per-period instrument as the weight.

    ``regime`` is a :class:`StaticRegime` or a sequence of levels.  Keyword
    options: ``folds``, ``instrument_coordinate``, ``winsorize``,
    ``nuisances`` and ``return_states``.
    """
    regime = as_dynamic(regime)
    if not regime.is_static:
        raise RegimeError("use estimate_longitudinal_dtr for non-constant rules")
    return _estimate(data, regime, K, seed, spec, False, "mean", **kw)


def estimate_longitudinal_dtr(data: PanelDataset, regime, K: int = 2, seed: int = 0,
                              spec: RegressorSpec | None = None, **kw) -> EstimateReport:
    """Mean outcome under a dynamic regime.

    The per-period indicator I{A_t = g_t(H_t)} replaces I{A_t = a_t}.
    Threshold cutpoints are estimated on the training rows of each fold.
    Periods with the natural rule pass the pseudo-outcome through unchanged.
    """
    return _estimate(data, as_dynamic(regime), K, seed, spec, False, "mean", **kw)


def estimate_longitudinal_adaptive(data: PanelDataset, regime, K: int = 2, seed: int = 0,
                                   spec: RegressorSpec | None = None, **kw) -> EstimateReport:
    """Static-regime mean with the fitted per-period propensity
    Pr(A_t = a_t | Z_t, H_t) as the weight."""
    regime = as_dynamic(regime)
    if not regime.is_static:
        raise RegimeError("adaptive weighting supports static regimes only")
    return _estimate(data, regime, K, seed, spec, True, "mean_adaptive", **kw)


def evaluate_pseudo_outcomes(data: PanelDataset, regime, K: int = 2, seed: int = 0,
                             spec: RegressorSpec | None = None, adaptive: bool = False,
                             all_periods: bool = False, **kw):
    """Per-observation Psi_0 (cross-fitted), or with ``all_periods`` a dict
    t -> Psi_t where each row takes the value from its evaluation fold."""
    rep, psi0, states = _estimate(data, as_dynamic(regime), K, seed, spec, adaptive,
                                  "mean_adaptive" if adaptive else "mean", return_states=True, **kw)
    if not all_periods:
        return psi0
    folds = kw.get("folds") or make_folds(data.n, K, seed)
    out = {}
    for t in range(data.horizon + 2):
        v = np.empty(data.n)
        for s in states:
            rows = np.arange(data.n) if s.fold < 0 else folds.indices(s.fold)[0]
            v[rows] = s.psi[t][rows]
        out[t] = v
    return out


def estimate_longitudinal_family(data: PanelDataset, regimes, K: int = 2, seed: int = 0,
                                 spec: RegressorSpec | None = None, adaptive: bool = False, **kw) -> dict:
    """Reports for several regimes on the same data and folds.

    Regressions that coincide across regimes (same period, level and
    downstream rules) are fitted once; every report equals the one from the
    corresponding single-regime call.
    """
    spec = spec or RegressorSpec()
    kw.setdefault("folds", make_folds(data.n, K, seed))
    cache = _SweepCache(data, spec)
    out = {}
    for regime in regimes:
        regime = as_dynamic(regime)
        label = "mean_adaptive" if adaptive else "mean"
        out[regime.label] = _estimate(data, regime, K, seed, spec, adaptive, label, cache=cache, **kw)
    return out


def closed_form_from_state(data: PanelDataset, state: BackwardState, adaptive=False) -> np.ndarray:
    """Psi_0 from the product expansion using the nuisances recorded in
    ``state`` (static regimes, every period active)."""
    T = data.horizon
    ts = range(T + 1)
    nu = [state.nuisances[t] for t in ts]
    treats = [state.treats[t] for t in ts]
    if adaptive:
        return eif.longitudinal_adaptive_closed_form(
            data.y, treats, [n["prop"] for n in nu], [n["delta"] for n in nu], [n["kappa"] for n in nu],
            [n["xi"] for n in nu], [n["eta"] for n in nu], [n["gamma"] for n in nu])
    return eif.longitudinal_closed_form(
        data.y, [state.weights[t] for t in ts], treats, [n["rho"] for n in nu], [n["kappa"] for n in nu],
        [n["delta"] for n in nu], [n["eta"] for n in nu], [n["gamma"] for n in nu])


def static_regime(levels) -> StaticRegime:
    return StaticRegime(tuple(levels))
