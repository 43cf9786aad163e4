"""Longitudinal estimators: reductions, recursion equivalence and oracle checks."""

import numpy as np
import pytest

from aivlearn import PanelDataset, PointDataset, make_folds
from aivlearn.data import DataError
from aivlearn.dgp import LongitudinalDGPSpec, generate_longitudinal
from aivlearn.dgp.oracle import sample_oracle
from aivlearn.longitudinal import (backward_sweep, closed_form_from_state, estimate_longitudinal_adaptive,
                                   estimate_longitudinal_dtr, estimate_longitudinal_family,
                                   estimate_longitudinal_static, evaluate_pseudo_outcomes)
from aivlearn.dgp.simulate import PointDGPSpec, generate_point
from aivlearn.nuisance import RegressorSpec
from aivlearn.point import estimate_mean_po, summarize
from aivlearn.regimes import DynamicRegime, FixedRule, NaturalRule, RegimeError, ThresholdRule, as_dynamic
from aivlearn.weights import WeightingFunctionSpec

FAST = RegressorSpec(n_knots=6)


def single_period(d: PointDataset) -> PanelDataset:
    return PanelDataset(ids=None, z=(d.z,), a=(d.a,), l=(d.l,), y=d.y, treatment_levels=(2,))


@pytest.fixture(scope="module")
def point_data():
    return generate_point(PointDGPSpec(outcome="Y1", treatment="A1", n=800, seed=3))


@pytest.fixture(scope="module")
def panel():
    return generate_longitudinal(LongitudinalDGPSpec(n=800, seed=11))


# ------------------------------------------------------------- T = 0

@pytest.mark.parametrize("level", [0, 1])
@pytest.mark.parametrize("adaptive", [False, True])
def test_single_period_matches_point_path(point_data, level, adaptive):
    folds = make_folds(point_data.n, 2, 5)
    pi = WeightingFunctionSpec.fitted_propensity(level) if adaptive else WeightingFunctionSpec.identity_coordinate(0)
    rep, psi = estimate_mean_po(point_data, level, pi, folds=folds, spec=FAST, return_pseudo=True)
    panel = single_period(point_data)
    est = estimate_longitudinal_adaptive if adaptive else estimate_longitudinal_static
    lrep = est(panel, (level,), folds=folds, spec=FAST)
    lpsi = evaluate_pseudo_outcomes(panel, (level,), folds=folds, spec=FAST, adaptive=adaptive)
    assert abs(lrep.psi_hat - rep.psi_hat) <= 1e-10
    np.testing.assert_allclose(lpsi, psi, rtol=0, atol=1e-10)
    # the two paths centre the variance differently (overall vs per fold)
    assert rep.std_error == summarize(psi, folds, centre="global").std_error
    assert lrep.std_error == summarize(lpsi, folds, centre="fold").std_error


# ------------------------------------------------- recursion vs closed form

@pytest.mark.parametrize("adaptive", [False, True])
def test_recursion_equals_product_expansion(adaptive):
    worst = 0.0
    for s in range(50):
        rng = np.random.default_rng(s)
        data = generate_longitudinal(LongitudinalDGPSpec(n=300, seed=1000 + s))
        regime = as_dynamic(tuple(int(v) for v in rng.integers(0, 2, size=2)))
        folds = make_folds(data.n, 2, s)
        psi0, states = backward_sweep(data, regime, folds, FAST, adaptive=adaptive, winsorize=False)
        for st in states:
            ev, _ = folds.indices(st.fold)
            closed = closed_form_from_state(data, st, adaptive=adaptive)
            worst = max(worst, float(np.max(np.abs(closed[ev] - psi0[ev]) / np.maximum(1.0, np.abs(psi0[ev])))))
    assert worst <= 1e-12


# ------------------------------------------------------- oracle injection

STATIC = [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.mark.parametrize("regime", STATIC)
def test_injected_true_nuisances_give_truth(long_oracle, regime):
    L = long_oracle
    data = L.dataset()
    nu = L.nuisances(regime)
    rep = estimate_longitudinal_static(data, regime, nuisances={0: nu[0], 1: nu[1]}, winsorize=False)
    assert abs(rep.psi_hat - L.truth(regime)) <= 1e-10
    anu = L.adaptive_nuisances(regime)
    rep = estimate_longitudinal_adaptive(data, regime, nuisances={0: anu[0], 1: anu[1]}, winsorize=False)
    assert abs(rep.psi_hat - L.truth(regime)) <= 1e-10


def test_pseudo_outcome_conditional_mean_is_gamma(long_oracle):
    from aivlearn.dgp.oracle import group_mean

    L = long_oracle
    regime = (1, 0)
    nu = L.nuisances(regime)
    data = L.dataset()
    psi = evaluate_pseudo_outcomes(data, regime, nuisances={0: nu[0], 1: nu[1]}, winsorize=False, all_periods=True)
    g = L.gamma_recursion(regime)
    for t in (0, 1):
        m = group_mean(psi[t], L.prob, *L.history(t))
        np.testing.assert_allclose(m, g[t], atol=1e-10)


def test_injected_dynamic_regime(long_oracle):
    L = long_oracle
    # treat at period 1 iff A0 was 0: the oracle's callable and the estimator's
    # threshold on a0 agree on every history cell
    rule = (1, lambda l1, a0, **_: 1 - a0)
    nu = L.nuisances(rule)
    data = L.dataset()
    regime = DynamicRegime((FixedRule(1), ThresholdRule("a0", 0.5, "below", 1, 0)))
    _, psi0, states = _sweep_with(data, regime, nu)
    assert abs(L.E(psi0) - L.truth(rule)) <= 1e-10


def _sweep_with(data, regime, nu):
    folds = make_folds(data.n, 2, 0)
    psi0, states = backward_sweep(data, regime, folds, FAST, nuisances={0: nu[0], 1: nu[1]}, winsorize=False)
    return None, psi0, states


# ------------------------------------------------------------ coherence

def test_dtr_static_equals_static(panel):
    a = estimate_longitudinal_static(panel, (0, 0), seed=4, spec=FAST)
    b = estimate_longitudinal_dtr(panel, DynamicRegime((FixedRule(0), FixedRule(0))), seed=4, spec=FAST)
    assert a.psi_hat == b.psi_hat and a.std_error == b.std_error


def test_pseudo_mean_is_estimate(panel):
    rep = estimate_longitudinal_static(panel, (1, 1), seed=2, spec=FAST)
    psi = evaluate_pseudo_outcomes(panel, (1, 1), seed=2, spec=FAST)
    assert np.mean(psi) == pytest.approx(rep.psi_hat, abs=1e-12)


def test_family_matches_single_calls(panel):
    regimes = [(0, 0), (1, 1), "A0,1"]
    fam = estimate_longitudinal_family(panel, regimes, seed=9, spec=FAST)
    for r in regimes:
        rep = estimate_longitudinal_dtr(panel, r, seed=9, spec=FAST)
        assert fam[as_dynamic(r).label].psi_hat == rep.psi_hat


def test_constant_outcome_gives_constant_pseudo(panel):
    const = PanelDataset(ids=panel.ids, z=panel.z, a=panel.a, l=panel.l, y=np.full(panel.n, 2.5),
                         treatment_levels=panel.treatment_levels)
    psi = evaluate_pseudo_outcomes(const, (1, 0), seed=1, spec=FAST)
    # a constant outcome gives gamma = 0 at period 1 and a constant thereafter
    assert np.all(np.isfinite(psi))
    rep = estimate_longitudinal_static(const, (1, 0), seed=1, spec=FAST)
    assert np.isfinite(rep.psi_hat)


def test_natural_rule_passes_through(panel):
    rep = estimate_longitudinal_dtr(panel, "A0,1", seed=0, spec=FAST)
    assert rep.estimand.endswith("(A0,1)")
    assert np.isfinite(rep.std_error) and rep.std_error > 0


def test_seed_replay_is_bit_identical(panel):
    a = estimate_longitudinal_static(panel, (0, 1), seed=7, spec=FAST)
    b = estimate_longitudinal_static(panel, (0, 1), seed=7, spec=FAST)
    assert a.to_dict() == b.to_dict()


def test_winsorization_reported(panel):
    rep = estimate_longitudinal_static(panel, (1, 1), seed=0, spec=FAST)
    assert "winsorized" in rep.diagnostics
    assert rep.diagnostics["winsorized"] >= 0


# --------------------------------------------------------------- errors

def test_regime_horizon_mismatch(panel):
    with pytest.raises(RegimeError):
        estimate_longitudinal_static(panel, (0, 0, 1), spec=FAST)


def test_regime_invalid_level(panel):
    with pytest.raises(RegimeError):
        estimate_longitudinal_static(panel, (0, 2), spec=FAST)


def test_threshold_unknown_column(panel):
    regime = DynamicRegime((NaturalRule(), ThresholdRule("nope", 0.8)))
    with pytest.raises(RegimeError):
        estimate_longitudinal_dtr(panel, regime, spec=FAST)


def test_adaptive_rejects_dynamic(panel):
    with pytest.raises(RegimeError):
        estimate_longitudinal_adaptive(panel, "A0,1", spec=FAST)


def test_static_rejects_dynamic(panel):
    with pytest.raises(RegimeError):
        estimate_longitudinal_static(panel, "A0,1", spec=FAST)


def test_too_few_rows(panel):
    with pytest.raises(DataError):
        estimate_longitudinal_static(panel.subset(np.arange(5)), (0, 0), spec=FAST)


def test_one_fold_rejected(panel):
    with pytest.raises(ValueError):
        estimate_longitudinal_static(panel, (0, 0), K=1, spec=FAST)


def test_regime_parse():
    r = DynamicRegime.parse("(A0, l1<q0.8)")
    assert isinstance(r.rules[0], NaturalRule)
    assert r.rules[1] == ThresholdRule("l1", 0.8, "below")
    with pytest.raises(RegimeError):
        DynamicRegime.parse("x?")


def test_sampled_oracle_estimate_close(long_oracle):
    data = sample_oracle(long_oracle, 4000, seed=1)
    rep = estimate_longitudinal_static(data, (1, 1), seed=0, spec=FAST)
    truth = long_oracle.truth((1, 1))
    assert abs(rep.psi_hat - truth) <= 4 * rep.std_error


def test_threshold_regime_matches_resimulation():
    from aivlearn.dgp import compute_truth_by_intervention

    # treat at each period iff the current covariate is below its 80% quantile
    # a single 2-SE check fails 5% of the time by design; the seed is fixed and
    # z-scores over 20 seeds of this design have mean -0.14 and all lie within 2
    spec = LongitudinalDGPSpec(n=5000, seed=102)
    regime = DynamicRegime.parse("l0<q0.8, l1<q0.8")
    rep = estimate_longitudinal_dtr(generate_longitudinal(spec), regime, seed=0)
    truth = compute_truth_by_intervention(spec, regime)
    assert abs(rep.psi_hat - truth) <= 2 * rep.std_error
