import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivpolicy import propensity as pr
from ivpolicy.errors import ConfigurationError
from ivpolicy.structural_model import Sample, canonical_parameters, sample


def _toy(n, seed, coef=(-0.5, 1.2, -0.8)):
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.normal(size=n)])
    z = rng.uniform(-1, 1, size=(n, 1))
    p = 1 / (1 + np.exp(-(coef[0] + coef[1] * x[:, 1] + coef[2] * z[:, 0])))
    d = (rng.uniform(size=n) < p).astype(float)
    return Sample(np.zeros(n), d, x, z), p


# -- logit --------------------------------------------------------------------------


def test_logit_recovers_canonical_coefficients(canonical):
    s = sample(canonical, 100_000, 3)
    m = pr.fit_logit(s)
    assert m.diagnostics["converged"]
    assert np.max(np.abs(np.asarray(m.params["coef"]) - canonical_parameters()["gamma"])) < 0.05


def test_logit_intercept_only_is_sample_mean():
    s, _ = _toy(500, 1)
    m = pr.fit_logit(s, pr.FeatureSpec(("1",)))
    assert np.allclose(m.predict(s.x, s.z), s.d.mean(), atol=1e-9)


def test_logit_separation_fallback():
    s, _ = _toy(200, 2)
    s = Sample(s.y, np.ones(s.n), s.x, s.z)
    with pytest.warns(RuntimeWarning, match="separation"):
        m = pr.fit_logit(s)
    assert m.diagnostics["separation"]
    assert np.allclose(m.predict(s.x, s.z), 1 - m.trim_eps)


def test_logit_interactions_and_too_few_rows():
    s, _ = _toy(400, 3)
    m = pr.fit_logit(s, ("x1", "x2", "z1", "z1*x2"))
    assert len(m.params["coef"]) == 4
    with pytest.raises(ConfigurationError):
        pr.fit_logit(s.subset(np.arange(3)), ("x1", "x2", "z1", "z1*x2"))


@given(st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
def test_logit_invariant_to_affine_rescaling(a, b):
    s, _ = _toy(300, 4)
    t = Sample(s.y, s.d, np.column_stack([s.x[:, 0], a * s.x[:, 1] + b]), s.z)
    p1 = pr.fit_logit(s).predict(s.x, s.z)
    p2 = pr.fit_logit(t).predict(t.x, t.z)
    assert np.max(np.abs(p1 - p2)) < 1e-6


def test_model_round_trip(tmp_path):
    s, _ = _toy(300, 5)
    for m in (pr.fit_logit(s), pr.fit_local_poly(s, bandwidth=0.3),
              pr.fit_series(s, "polynomial", 6), pr.fit_series(s, "spline", 9)):
        path = tmp_path / f"{m.kind}.json"
        m.save(path)
        again = pr.PropensityModel.load(path)
        assert np.allclose(again.predict(s.x, s.z), m.predict(s.x, s.z), atol=1e-12)


# -- local polynomial --------------------------------------------------------------------


def test_degree_zero_is_nadaraya_watson():
    rng = np.random.default_rng(0)
    v = rng.uniform(size=(200, 1))
    d = (rng.uniform(size=200) < v[:, 0]).astype(float)
    q = np.array([[0.3], [0.7]])
    h = 0.1
    got = pr.local_poly_predict(v, d, q, 0, h, eigen_trim=False)
    w = np.exp(-0.5 * ((v[:, 0][None] - q) / h) ** 2)
    assert np.allclose(got, (w * d).sum(1) / w.sum(1), atol=1e-12)


def test_constant_labels_predict_one():
    rng = np.random.default_rng(1)
    v = rng.uniform(size=(300, 2))
    got = pr.local_poly_predict(v, np.ones(300), np.array([[0.5, 0.5]]), 1, 0.3)
    assert abs(got[0] - 1) < 1e-10


def test_empty_neighbourhood_is_trimmed_to_zero():
    v = np.random.default_rng(2).uniform(size=(100, 1))
    got = pr.local_poly_predict(v, np.ones(100), np.array([[50.0]]), 1, 0.05, kernel="epanechnikov")
    assert got[0] == 0.0


def test_wide_bandwidth_tends_to_global_fit():
    rng = np.random.default_rng(3)
    v = rng.uniform(size=(150, 1))
    d = (rng.uniform(size=150) < 0.2 + 0.6 * v[:, 0]).astype(float)
    q = np.array([[0.25], [0.8]])
    got = pr.local_poly_predict(v, d, q, 1, 50.0, eigen_trim=False)
    beta = np.polyfit(v[:, 0], d, 1)
    assert np.allclose(got, np.polyval(beta, q[:, 0]), atol=1e-3)


def test_local_poly_config_errors():
    s, _ = _toy(100, 6)
    with pytest.raises(ConfigurationError):
        pr.fit_local_poly(s, bandwidth=0.0)
    with pytest.raises(ConfigurationError):
        pr.fit_local_poly(s, kernel="triweight")


@given(st.integers(0, 10**6), st.floats(0.02, 2.0))
def test_predictions_always_clamped(seed, h):
    s, _ = _toy(60, seed)
    m = pr.fit_local_poly(s, bandwidth=h)
    q = np.random.default_rng(seed + 1).normal(size=(25, 2)) * 3
    out = m.predict(np.column_stack([np.ones(25), q[:, 0]]), q[:, 1:])
    assert np.all(out >= m.trim_eps) and np.all(out <= 1 - m.trim_eps)


# -- bandwidth choice ------------------------------------------------------------------------


def _loo_brute(v, y, h, degree=1):
    """Refit without each point in turn (no hat-matrix shortcut)."""
    n = len(y)
    err = []
    for i in range(n):
        keep = np.arange(n) != i
        fit = pr.local_poly_predict(v[keep], y[keep], v[i:i + 1], degree, h, eigen_trim=False)[0]
        err.append((y[i] - fit) ** 2)
    return float(np.mean(err))


def test_loo_shortcut_matches_refits():
    rng = np.random.default_rng(7)
    v = rng.uniform(size=(80, 1))
    y = np.sin(3 * v[:, 0]) + 0.1 * rng.normal(size=80)
    for h in (0.05, 0.1, 0.3):
        assert abs(pr.loo_score(v, y, h) - _loo_brute(v, y, h)) < 1e-10


def test_cv_choice_is_brute_force_minimum():
    rng = np.random.default_rng(8)
    v = rng.uniform(size=(120, 1))
    y = np.sin(4 * v[:, 0]) + 0.2 * rng.normal(size=120)
    grid = [0.02, 0.04, 0.08, 0.16, 0.32]
    s = Sample(y, np.zeros(120), np.ones((120, 1)), v)
    h = pr.cv_bandwidth(s, grid, regressor=v, response=y)
    brute = {g: _loo_brute(v, y, g) for g in grid}
    assert brute[h] <= 1.05 * min(brute.values())


def test_cv_single_point_and_validation():
    s, _ = _toy(50, 9)
    assert pr.cv_bandwidth(s, [0.06]) == 0.06
    with pytest.raises(ConfigurationError):
        pr.cv_bandwidth(s, [])
    with pytest.raises(ConfigurationError):
        pr.cv_bandwidth(s, [0.1, -1.0])


def test_cv_ties_go_to_larger_bandwidth():
    # constant response: every bandwidth has zero LOO error
    v = np.linspace(0, 1, 40)[:, None]
    s = Sample(np.ones(40), np.zeros(40), np.ones((40, 1)), v)
    assert pr.cv_bandwidth(s, [0.1, 0.2, 0.4], regressor=v, response=np.ones(40)) == 0.4


# -- series ------------------------------------------------------------------------------------


def test_series_constant_basis_is_mean():
    s, _ = _toy(300, 10)
    m = pr.fit_series(s, "polynomial", 1)
    assert np.allclose(m.raw(s.x, s.z), s.d.mean())


def test_series_recovers_quadratic():
    rng = np.random.default_rng(11)
    n = 100_000
    t = rng.uniform(-1, 1, n)
    d = 0.3 + 0.2 * t - 0.1 * t**2 + 0.1 * rng.normal(size=n)
    s = Sample(np.zeros(n), np.zeros(n), np.ones((n, 1)), t[:, None])
    s.d = d  # continuous response through the least-squares machinery
    m = pr.fit_series(s, "polynomial", 3, regressors=("z1",))
    assert np.allclose(m.params["coef"], [0.3, 0.2, -0.1], atol=0.05)


def test_series_duplicate_column_uses_pseudo_inverse():
    s, _ = _toy(200, 12)
    base = pr.polynomial_basis(3, 2)
    dup = lambda v: np.hstack([base(v), base(v)[:, 1:2]])  # noqa: E731
    a = pr.fit_series(s, base, 3)
    b = pr.fit_series(s, dup, 4)
    assert b.diagnostics["singular_gram"]
    assert np.allclose(a.raw(s.x, s.z), b.raw(s.x, s.z), atol=1e-10)


def test_series_k_too_large():
    s, _ = _toy(20, 13)
    with pytest.raises(ConfigurationError):
        pr.fit_series(s, "polynomial", 21)


def test_dispatch():
    s, _ = _toy(200, 14)
    assert pr.fit_propensity(s, {"kind": "logit"}).kind == "logit"
    assert pr.fit_propensity(s, {"kind": "series", "k": 4}).kind == "series"
    with pytest.raises(ConfigurationError):
        pr.fit_propensity(s, {"kind": "forest"})


def test_spline_basis_is_partition_of_unity_plus_constant():
    fn = pr.spline_basis(9, np.array([0.0]), np.array([1.0]))
    v = np.linspace(0, 1, 50)[:, None]
    b = fn(v)
    assert b.shape == (50, 8)
    assert np.linalg.matrix_rank(b) == 8
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert math.isfinite(b.sum())
