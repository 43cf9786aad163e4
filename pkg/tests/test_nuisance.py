"""Spline learner and nuisance bundles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aivlearn import WeightingFunctionSpec
from aivlearn.dgp import PointDGPSpec, generate_point
from aivlearn.dgp.oracle import PointOracle, aiv_oracle, sample_oracle
from aivlearn.nuisance import (RegressorSpec, WeakInstrumentError, fit_adaptive_bundle, fit_conditional_mean,
                               fit_fixed_pi_bundle, floor_kappa)
from aivlearn.nuisance.spline import AdditiveDesign, _TensorTerm, rmse

Z = WeightingFunctionSpec.identity_coordinate(0)


def test_constant_target_exact():
    x = np.linspace(-1, 1, 200)
    m = fit_conditional_mean(x, np.full(200, 3.7))
    np.testing.assert_allclose(m.predict(x), 3.7, atol=1e-10)
    np.testing.assert_allclose(m.predict(np.array([5.0, -5.0])), 3.7, atol=1e-10)


def test_linear_target_reproduced():
    x = np.random.default_rng(0).uniform(-1, 1, 300)
    m = fit_conditional_mean(x, 2 * x)
    np.testing.assert_allclose(m.predict(x), 2 * x, atol=1e-8)


def test_sine_accuracy():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, 2000)
    y = np.sin(3 * x) + rng.normal(0, 0.1, 2000)
    m = fit_conditional_mean(x, y)
    grid = np.linspace(-1, 1, 201)
    assert rmse(m.predict(grid), np.sin(3 * grid)) <= 0.05


def test_additive_two_covariates():
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (3000, 2))
    f = np.sin(3 * x[:, 0]) + x[:, 1] ** 2
    m = fit_conditional_mean(x, f + rng.normal(0, 0.1, 3000))
    assert rmse(m.predict(x), f) <= 0.05


def test_factor_covariate():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 3, 900).astype(float)
    means = np.array([1.0, -2.0, 0.5])
    m = fit_conditional_mean(x, means[x.astype(int)] + rng.normal(0, 0.01, 900))
    np.testing.assert_allclose(m.predict(np.array([0.0, 1.0, 2.0])), means, atol=0.01)


def test_local_linear_basis():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, 1500)
    y = np.sin(3 * x) + rng.normal(0, 0.1, 1500)
    m = fit_conditional_mean(x, y, RegressorSpec(basis="local_linear"))
    grid = np.linspace(-0.9, 0.9, 101)
    assert rmse(m.predict(grid), np.sin(3 * grid)) <= 0.08


def test_clipped_probability_link():
    rng = np.random.default_rng(5)
    x = rng.uniform(-3, 3, 1000)
    t = (rng.uniform(size=1000) < (x > 0)).astype(float)
    spec = RegressorSpec(link="clipped_probability", clip=0.02)
    p = fit_conditional_mean(x, t, spec).predict(x)
    assert p.min() >= 0.02 and p.max() <= 0.98


def test_weighted_fit_matches_replication():
    # a factor covariate has no knots, so integer weights act as replication
    rng = np.random.default_rng(6)
    x = rng.integers(0, 5, 300).astype(float)
    y = np.cos(2 * x) + rng.normal(0, 0.2, 300)
    reps = rng.integers(1, 4, 300)
    spec = RegressorSpec(penalty_grid=(0.1,))
    a = fit_conditional_mean(x, y, spec, weights=reps.astype(float)).predict(x)
    b = fit_conditional_mean(np.repeat(x, reps), np.repeat(y, reps), spec).predict(x)
    np.testing.assert_allclose(a, b, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-50, 50), s=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_fit_equivariant_in_affine_target(c, s, seed):
    # with a fixed penalty the smoother is linear and reproduces constants
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 150)
    y = rng.normal(size=150)
    spec = RegressorSpec(n_knots=6, penalty_grid=(1.0,))
    base = fit_conditional_mean(x, y, spec).predict(x)
    moved = fit_conditional_mean(x, c + s * y, spec).predict(x)
    np.testing.assert_allclose(moved, c + s * base, atol=1e-8 * (1 + abs(c) + abs(s)))


def test_spec_validation():
    for bad in ({"basis": "tree"}, {"link": "logit"}, {"covariance": "x"}, {"clip": 0.6},
                {"penalty_grid": ()}, {"penalty_grid": (-1.0,)}, {"n_knots": 0}, {"interaction_knots": -1}):
        with pytest.raises(ValueError):
            RegressorSpec(**bad)
    s = RegressorSpec(n_knots=7)
    assert RegressorSpec.from_dict(s.to_dict()) == s
    with pytest.raises(ValueError):
        RegressorSpec.from_dict({"nope": 1})


def test_fit_input_errors():
    with pytest.raises(ValueError):
        fit_conditional_mean(np.zeros(5), np.zeros(4))
    with pytest.raises(ValueError):
        fit_conditional_mean(np.zeros(5), np.array([0, 1, np.nan, 0, 0]))


def test_tensor_interaction_term():
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, (4000, 2))
    with_int = AdditiveDesign(x, RegressorSpec(n_knots=8), interact=(0, 1))
    without = AdditiveDesign(x, RegressorSpec(n_knots=8, interaction_knots=0), interact=(0, 1))
    plain = AdditiveDesign(x, RegressorSpec(n_knots=8))
    assert any(isinstance(t, _TensorTerm) for t in with_int.terms)
    assert not any(isinstance(t, _TensorTerm) for t in without.terms)
    assert not any(isinstance(t, _TensorTerm) for t in plain.terms)
    f = x[:, 0] * x[:, 1]
    y = f + rng.normal(0, 0.1, 4000)
    assert rmse(with_int.fit(y).predict(x), f) < 0.5 * rmse(plain.fit(y).predict(x), f)


def test_tensor_skipped_for_small_samples():
    x = np.random.default_rng(8).uniform(-1, 1, (60, 2))
    d = AdditiveDesign(x, RegressorSpec(n_knots=8), interact=(0, 1))
    assert not any(isinstance(t, _TensorTerm) for t in d.terms)


# -------------------------------------------------------------- floors

def test_floor_kappa_signs_and_errors():
    k = np.array([0.5, -0.001, 0.002, -0.4, 0.3, 0.9, -0.8, 0.6, 0.7, 0.2])
    out, hit, frac = floor_kappa(k, 0.01, np.arange(10))
    assert out[1] == -0.01 and out[2] == 0.01 and hit.sum() == 2 and frac == 0.2
    out, hit, _ = floor_kappa(np.array([0.5, -0.1] + [1.0] * 8), 0.01, np.arange(10), positive=True)
    assert out[1] == 0.01
    with pytest.raises(WeakInstrumentError):
        floor_kappa(np.zeros(10), 0.01, np.arange(10))
    with pytest.raises(WeakInstrumentError):
        floor_kappa(k, 0.0, np.arange(10))


# ------------------------------------------------------------- bundles

@pytest.fixture(scope="module")
def oracle_sample():
    orc = PointOracle(aiv_oracle())
    return orc, sample_oracle(orc, 40000, seed=3)


def _at_cells(orc, values, data):
    """Map oracle per-cell values (functions of L) onto the sampled rows."""
    out = np.empty(data.n)
    for lv in np.unique(orc.l):
        out[data.l[:, 0] == lv] = values[orc.l == lv][0]
    return out


@pytest.mark.parametrize("covariance", ["residual", "decomposition"])
def test_fixed_bundle_matches_oracle(oracle_sample, covariance):
    orc, d = oracle_sample
    b = fit_fixed_pi_bundle(d, None, Z, RegressorSpec(covariance=covariance))
    truth = orc.fixed_nuisances(orc.z.astype(float))
    for k in ("delta", "rho", "eta", "kappa"):
        assert np.max(np.abs(b.__dict__[k] - _at_cells(orc, truth[k], d))) <= 0.02, k
    # gamma is a ratio with a small denominator; compare on the numerator's scale
    err = np.abs(b.gamma * b.kappa - _at_cells(orc, truth["gamma"] * truth["kappa"], d))
    assert err.max() <= 0.02


def test_adaptive_bundle_propensity_matches_oracle(oracle_sample):
    orc, d = oracle_sample
    b = fit_adaptive_bundle(d)
    truth = orc.propensity(1)
    for zv in np.unique(orc.z):
        for lv in np.unique(orc.l):
            m = (d.z[:, 0] == zv) & (d.l[:, 0] == lv)
            t = truth[(orc.z == zv) & (orc.l == lv)][0]
            assert np.max(np.abs(b.prop[m] - t)) <= 0.02


def test_simulated_kappa_negative():
    # treatment probability decreases in Z under the A1 design
    d = generate_point(PointDGPSpec("Y1", "A1", n=5000, seed=0))
    b = fit_fixed_pi_bundle(d, None, Z)
    assert np.all(b.kappa < 0)


def test_constant_weight_is_weak():
    d = generate_point(PointDGPSpec("Y1", "A1", n=800, seed=0))
    with pytest.raises(WeakInstrumentError):
        fit_fixed_pi_bundle(d, None, WeightingFunctionSpec.from_expression("1 + 0*z"))


def test_independent_instrument_adaptive_is_weak():
    rng = np.random.default_rng(0)
    d = generate_point(PointDGPSpec("Y1", "A1", n=1500, seed=0))
    d = d.replace(z=rng.normal(size=(d.n, 1)))
    with pytest.raises(WeakInstrumentError):
        fit_adaptive_bundle(d)


def test_leverage_is_hat_diagonal():
    rng = np.random.default_rng(4)
    x = rng.normal(size=80)
    d = AdditiveDesign(x, RegressorSpec(n_knots=6))
    lams = [0.3]
    H = d.X @ np.linalg.solve(d.gram + d._penalty(lams), d.X.T)
    np.testing.assert_allclose(d.leverage(lams), np.diag(H), atol=1e-10)


def test_leave_one_out_residual_identity():
    # for a linear smoother at a fixed penalty, e / (1 - h) is the residual
    # of the fit that leaves the row out
    rng = np.random.default_rng(5)
    x = rng.normal(size=60)
    y = np.sin(x) + rng.normal(scale=0.3, size=60)
    d = AdditiveDesign(x, RegressorSpec(n_knots=5))
    lams = [0.1]
    P = d._penalty(lams)
    beta = np.linalg.solve(d.gram + P, d.X.T @ y)
    loo = (y - d.X @ beta) / (1 - d.leverage(lams))
    for i in (0, 17, 42):
        keep = np.arange(60) != i
        b_i = np.linalg.solve(d.X[keep].T @ d.X[keep] + P, d.X[keep].T @ y[keep])
        assert loo[i] == pytest.approx(y[i] - d.X[i] @ b_i, rel=1e-8)


def test_residual_covariance_not_shrunk():
    # in-sample residual products shrink the noise covariance by about the
    # leverage; leave-one-out products overshoot it by a similar amount
    from aivlearn.nuisance.bundles import FoldRegressions

    rng = np.random.default_rng(6)
    n = 400
    x = rng.normal(size=n)
    e = rng.normal(size=(200, n))
    spec = RegressorSpec(n_knots=20, penalty_grid=(1e-4,))
    reg = FoldRegressions(np.arange(n), spec)
    reg.add("x", x)
    raw, loo = [], []
    for k in range(200):
        t = np.sin(x) + e[k]
        w = np.cos(x) + e[k]
        raw.append(np.mean((t - reg.mean("x", t)) * (w - reg.mean("x", w))))
        loo.append(np.mean(reg.residual("x", t) * reg.residual("x", w)))
    h = reg._design("x").leverage(list(spec.penalty_grid)).mean()
    assert h > 0.03
    assert np.mean(raw) == pytest.approx(1 - h, abs=0.02)
    assert np.mean(loo) == pytest.approx(1 + h, abs=0.02)
