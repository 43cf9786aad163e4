"""Dataset validation, CSV round trips, folds and reports."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from aivlearn import (DataError, EstimateReport, PanelDataset, PointDataset, load_panel_csv, load_point_csv,
                      make_folds, write_panel_csv, write_point_csv)
from aivlearn.data import PointSchema
from aivlearn.dgp import LongitudinalDGPSpec, PointDGPSpec, generate_longitudinal, generate_point


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_point_csv(tmp_path):
    p = _write(tmp_path, "z,a,y,l1\n0.1,0,1.0,2\n0.5,1,2.0,3\n-1,1,0.5,1\n")
    d = load_point_csv(p)
    assert d.n == 3 and d.z_dim == 1 and d.l_dim == 1
    assert d.treatment_levels == 2


def test_level_outside_declared_range_names_row(tmp_path):
    p = _write(tmp_path, "z,a,y,l1\n0.1,0,1.0,2\n0.5,2,2.0,3\n")
    with pytest.raises(DataError, match="row 3"):
        load_point_csv(p, PointSchema(treatment_levels=2))


def test_non_numeric_cell_names_row(tmp_path):
    p = _write(tmp_path, "z,a,y\n0.1,0,1.0\nx,1,2.0\n")
    with pytest.raises(DataError, match="row 3"):
        load_point_csv(p)


def test_missing_column_and_empty(tmp_path):
    with pytest.raises(DataError, match="missing column"):
        load_point_csv(_write(tmp_path, "z,a\n1,0\n"))
    with pytest.raises(DataError):
        load_point_csv(_write(tmp_path, "z,a,y\n", "e.csv"))
    with pytest.raises(DataError):
        load_point_csv(tmp_path / "absent.csv")


def test_string_treatment_labels(tmp_path):
    d = load_point_csv(_write(tmp_path, "z,a,y\n1,ctrl,1\n2,trt,2\n3,ctrl,0\n"))
    assert d.level_labels == ("ctrl", "trt")
    assert d.a.tolist() == [0, 1, 0]


def test_simulated_point_round_trip(tmp_path):
    d = generate_point(PointDGPSpec("Y1", "A1", n=5000, seed=4), debug_latents=True)
    p = tmp_path / "sim.csv"
    write_point_csv(d, p, include_latents=True)
    back = load_point_csv(p, PointSchema(u=["u0"]))
    assert back.z_dim == 1 and back.l_dim == 1
    for f in ("z", "a", "y", "l", "u"):
        np.testing.assert_array_equal(getattr(back, f), getattr(d, f))


def test_dataset_validation():
    with pytest.raises(DataError):
        PointDataset(z=[1.0], a=[0], y=[], l=np.zeros((0, 0)))
    with pytest.raises(DataError):
        PointDataset(z=[1.0, np.nan], a=[0, 1], y=[1.0, 2.0], l=np.zeros((2, 0)))
    with pytest.raises(DataError):
        PointDataset(z=[1.0, 2.0], a=[0, 0.5], y=[1.0, 2.0], l=np.zeros((2, 0)))
    with pytest.raises(DataError):
        PointDataset(z=[1.0, 2.0], a=[0, 1], y=[1.0, 2.0], l=np.zeros((2, 0)), weights=[1.0, -1.0])
    with pytest.warns(UserWarning):
        PointDataset(z=[1.0, 2.0], a=[0, 0], y=[1.0, 2.0], l=np.zeros((2, 0)))


def test_dataset_is_read_only():
    d = PointDataset(z=[1.0, 2.0], a=[0, 1], y=[1.0, 2.0], l=np.zeros((2, 0)))
    with pytest.raises(ValueError):
        d.y[0] = 5.0


# -------------------------------------------------------------- panels

def _panel_text(rows):
    return "id,t,z0,a,l0,y\n" + "".join(",".join(map(str, r)) + "\n" for r in rows)


def test_two_subject_panel(tmp_path):
    rows = [(1, 0, 0.1, 0, 1.0, ""), (1, 1, 0.2, 1, 1.5, ""), (1, 2, "", "", "", 3.0),
            (2, 0, 0.3, 1, 0.0, ""), (2, 1, 0.4, 0, 0.5, ""), (2, 2, "", "", "", 1.0)]
    d = load_panel_csv(_write(tmp_path, _panel_text(rows)))
    assert d.n == 2 and d.horizon == 1
    assert d.y.tolist() == [3.0, 1.0]
    assert d.history_names(1) == ["z0", "a0", "l0", "l1"]


def test_ragged_panel_rejected(tmp_path):
    rows = [(1, 0, 0.1, 0, 1.0, ""), (1, 1, 0.2, 1, 1.5, ""), (1, 2, "", "", "", 3.0),
            (2, 0, 0.3, 1, 0.0, ""), (2, 2, "", "", "", 1.0)]
    with pytest.raises(DataError, match="ragged"):
        load_panel_csv(_write(tmp_path, _panel_text(rows)))


def test_simulated_panel_round_trip(tmp_path):
    d = generate_longitudinal(LongitudinalDGPSpec(n=2000, seed=3))
    p = tmp_path / "panel.csv"
    write_panel_csv(d, p)
    back = load_panel_csv(p)
    assert back.n == d.n and back.horizon == 1
    np.testing.assert_array_equal(back.y, d.y)
    for t in range(2):
        np.testing.assert_array_equal(back.z[t], d.z[t])
        np.testing.assert_array_equal(back.a[t], d.a[t])
        np.testing.assert_array_equal(back.l[t], d.l[t])


def test_panel_history_layout():
    d = generate_longitudinal(LongitudinalDGPSpec(n=10, seed=1))
    h = d.history(1)
    np.testing.assert_array_equal(h[:, 0], d.z[0][:, 0])
    np.testing.assert_array_equal(h[:, 1], d.a[0])
    np.testing.assert_array_equal(h[:, 3], d.l[1][:, 0])
    assert d.history(0).shape == (10, 1)


def test_panel_to_point():
    d = generate_longitudinal(LongitudinalDGPSpec(n=50, seed=1))
    single = PanelDataset(ids=None, z=(d.z[0],), a=(d.a[0],), l=(d.l[0],), y=d.y, treatment_levels=(2,))
    p = single.to_point()
    np.testing.assert_array_equal(p.a, d.a[0])
    np.testing.assert_array_equal(p.y, d.y)


# --------------------------------------------------------------- folds

def test_folds_even_and_odd():
    assert sorted(make_folds(10, 2, 1).sizes().tolist()) == [5, 5]
    assert sorted(make_folds(11, 2, 1).sizes().tolist()) == [5, 6]


def test_folds_deterministic():
    a, b = make_folds(5000, 2, 42), make_folds(5000, 2, 42)
    np.testing.assert_array_equal(a.folds, b.folds)
    assert not np.array_equal(a.folds, make_folds(5000, 2, 43).folds)


def test_folds_reject_bad_k():
    with pytest.raises(ValueError):
        make_folds(10, 1, 0)
    with pytest.raises(ValueError):
        make_folds(3, 4, 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 500), K=st.integers(2, 10), seed=st.integers(0, 2 ** 32 - 1))
def test_folds_partition_property(n, K, seed):
    if K > n:
        return
    f = make_folds(n, K, seed)
    sizes = f.sizes()
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    for k in range(K):
        ev, tr = f.indices(k)
        assert len(np.intersect1d(ev, tr)) == 0 and len(ev) + len(tr) == n


# -------------------------------------------------------------- reports

@settings(max_examples=50, deadline=None)
@given(psi=st.floats(-1e3, 1e3), var=st.floats(0, 1e3), n=st.integers(1, 10 ** 6))
def test_report_interval(psi, var, n):
    r = EstimateReport("x", psi, var, n)
    z = norm.ppf(0.975)
    assert r.std_error == pytest.approx(np.sqrt(var / n))
    assert r.ci_upper - r.ci_lower == pytest.approx(2 * z * r.std_error, abs=1e-9)
    assert r.covers(psi)


def test_report_json_round_trip():
    r = EstimateReport("ate", 0.25, 1.5, 100, K=2, seed=3, diagnostics={"kappa_floored": 0},
                       fold_variances=[1.4, 1.6])
    d = json.loads(r.to_json())
    assert d["schema_version"] >= 1
    back = EstimateReport.from_dict(d)
    assert back.to_dict() == r.to_dict()
