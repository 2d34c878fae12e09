import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivpolicy import policy_opt as po
from ivpolicy.errors import ConfigurationError
from ivpolicy.structural_model import IDENTITY, Manipulation, ManipulationPair
from ivpolicy.welfare import GainVector
from oracles import best_labeling, les_labelings, ta_labelings

PAIR = ManipulationPair(IDENTITY, Manipulation("scale", 0.5))


def _instance(n, d, seed, costs=False):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, d))
    g = rng.normal(size=n) + 0.3 * v[:, 0]
    c1 = rng.uniform(0.2, 1.0, n) if costs else None
    c0 = rng.uniform(0.0, 0.2, n) if costs else None
    return GainVector(g, c1, c0, v, None, None, pair=PAIR, selector=tuple(f"x{k + 2}" for k in range(d)))


def _labels(policy, gains):
    return policy.assign_v(gains.v)


# -- linear eligibility scores ----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_fewm_matches_labeling_oracle(seed):
    gv = _instance(40, 2, seed)
    pol = po.solve_fewm(gv)
    best = best_labeling(les_labelings(gv.v), gv.g)
    assert pol.welfare == pytest.approx(best, abs=1e-12)
    assert gv.welfare(_labels(pol, gv)) == pytest.approx(pol.welfare, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_bewm_matches_constrained_oracle(seed):
    gv = _instance(40, 2, 100 + seed, costs=True)
    kappa = float(np.quantile([gv.budget(lab) for lab in (np.zeros(40), np.ones(40))], 0.4))
    pol = po.solve_bewm(gv, kappa=kappa)
    best = best_labeling(les_labelings(gv.v), gv.g, gv.c1, gv.c0, kappa)
    assert pol.welfare == pytest.approx(best, abs=1e-12)
    assert gv.budget(_labels(pol, gv)) <= kappa + 1e-12


def test_beats_random_hyperplanes():
    gv = _instance(40, 2, 7)
    pol = po.solve_fewm(gv)
    rng = np.random.default_rng(0)
    coef = rng.uniform(-1, 1, size=(3, 200_000))
    labs = (coef[0] + gv.v @ coef[1:] >= 0).astype(float)
    assert pol.welfare >= (gv.g @ labs).max() / gv.n - 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_one_dimensional_enumeration(seed):
    gv = _instance(30, 1, 200 + seed)
    pol = po.solve_fewm(gv)
    assert pol.welfare == pytest.approx(best_labeling(ta_labelings(gv.v), gv.g), abs=1e-12)


@pytest.mark.parametrize("seed", [300, 1001, 1003])
def test_three_dimensional_enumeration_agrees_with_milp(seed):
    gv = _instance(14, 3, seed, costs=True)
    a = po.solve_fewm(gv)
    b = po.solve_fewm(gv, backend="milp")
    assert a.welfare == pytest.approx(b.welfare, abs=1e-9)
    assert gv.welfare(_labels(b, gv)) == pytest.approx(b.welfare, abs=1e-12)
    kappa = 0.5 * (gv.budget(np.zeros(14)) + gv.budget(np.ones(14)))
    c, e = po.solve_bewm(gv, kappa=kappa), po.solve_bewm(gv, kappa=kappa, backend="milp")
    assert c.welfare == pytest.approx(e.welfare, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_milp_matches_oracle(seed):
    gv = _instance(16, 2, 400 + seed, costs=True)
    best = best_labeling(les_labelings(gv.v), gv.g)
    assert po.solve_fewm(gv, backend="milp").welfare == pytest.approx(best, abs=1e-9)
    kappa = 0.5 * (gv.budget(np.zeros(16)) + gv.budget(np.ones(16)))
    capped = po.solve_bewm(gv, kappa=kappa, backend="milp")
    assert capped.welfare == pytest.approx(best_labeling(les_labelings(gv.v), gv.g, gv.c1, gv.c0, kappa),
                                           abs=1e-9)


def test_constant_rules():
    gv = _instance(30, 2, 1)
    neg = GainVector(-np.abs(gv.g) - 0.1, None, None, gv.v, None, None)
    pos = GainVector(np.abs(gv.g) + 0.1, None, None, gv.v, None, None)
    for backend in ("enumerate", "milp"):
        assert np.all(po.solve_fewm(neg, backend=backend).assign_v(gv.v) == 0)
        assert po.solve_fewm(neg, backend=backend).welfare == 0
        assert np.all(po.solve_fewm(pos, backend=backend).assign_v(gv.v) == 1)


def test_at_least_constant_rules():
    for seed in range(5):
        gv = _instance(50, 2, 500 + seed)
        w = po.solve_fewm(gv).welfare
        assert w >= 0 and w >= gv.g.mean() - 1e-15


def test_infinite_kappa_is_fewm():
    gv = _instance(60, 2, 8, costs=True)
    a = po.solve_fewm(gv)
    b = po.solve_bewm(gv, kappa=math.inf)
    assert np.array_equal(a.assign_v(gv.v), b.assign_v(gv.v))
    c = po.solve_bewm(gv, kappa=10.0)
    assert c.welfare == a.welfare


def test_infeasible_budget_gives_empty():
    gv = _instance(30, 2, 9, costs=True)
    kappa = 0.5 * min(gv.c0.mean(), gv.c1.mean())
    for pol in (po.solve_bewm(gv, kappa=kappa), po.solve_bewm(gv, kappa=kappa, backend="milp"),
                po.solve_ta(gv, kappa=kappa)):
        assert pol.is_empty
        with pytest.raises(ConfigurationError):
            pol.assign_v(gv.v)


def test_joint_solver_matches_separate():
    for seed in range(3):
        gv = _instance(80, 2, 600 + seed, costs=True)
        kappa = 0.5 * (gv.budget(np.zeros(80)) + gv.budget(np.ones(80)))
        free, capped = po.solve_fewm_bewm(gv, kappa)
        assert free == po.solve_fewm(gv)
        assert capped == po.solve_bewm(gv, kappa=kappa)


def test_zero_gains_tie_break_to_nobody():
    gv = _instance(25, 2, 10)
    pol = po.solve_fewm(GainVector(np.zeros(25), None, None, gv.v, None, None))
    assert pol.share == 0 and pol.welfare == 0


def test_coefficients_are_normalized_and_deterministic():
    gv = _instance(50, 2, 11)
    a, b = po.solve_fewm(gv), po.solve_fewm(gv)
    assert a == b
    assert max(abs(c) for c in a.coef) == pytest.approx(1.0)


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.floats(0.01, 100.0))
def test_positive_rescaling_keeps_a_maximizer(seed, scale):
    gv = _instance(30, 2, seed)
    pol = po.solve_fewm(GainVector(scale * gv.g, None, None, gv.v, None, None))
    assert gv.welfare(pol.assign_v(gv.v)) == pytest.approx(po.solve_fewm(gv).welfare, abs=1e-12)


def test_errors():
    with pytest.raises(ConfigurationError):
        po.solve_fewm(_instance(10, 4, 0))
    with pytest.raises(Exception):
        po.solve_fewm(GainVector(np.zeros(0), None, None, np.zeros((0, 2)), None, None))
    with pytest.raises(ConfigurationError):
        po.solve_fewm(_instance(10, 2, 0), backend="simplex")
    with pytest.raises(ConfigurationError):
        po.PolicySpec("ta", thresholds=(0.0,), signs=(2,))


# -- threshold allocations --------------------------------------------------------------------


def test_ta_median_example():
    n = 21
    v = np.arange(1.0, n + 1)[:, None]
    med = np.median(v)
    g = np.where(v[:, 0] <= med, 1.0, -1.0)
    pol = po.solve_ta(GainVector(g, None, None, v, None, None))
    assert pol.signs == (1,) and pol.thresholds == (med,)


def test_ta_all_negative_excludes_everyone():
    gv = _instance(20, 2, 12)
    pol = po.solve_ta(GainVector(-np.abs(gv.g) - 1, None, None, gv.v, None, None))
    assert pol.welfare == 0 and np.all(pol.assign_v(gv.v) == 0)


@pytest.mark.parametrize("d,seed", [(1, 0), (2, 1), (2, 2), (3, 3)])
def test_ta_matches_box_oracle(d, seed):
    gv = _instance(30 if d < 3 else 12, d, 700 + seed, costs=True)
    labs = ta_labelings(gv.v)
    assert po.solve_ta(gv).welfare == pytest.approx(best_labeling(labs, gv.g), abs=1e-12)
    kappa = 0.5 * (gv.budget(np.zeros(gv.n)) + gv.budget(np.ones(gv.n)))
    assert po.solve_ta(gv, kappa=kappa).welfare == pytest.approx(
        best_labeling(labs, gv.g, gv.c1, gv.c0, kappa), abs=1e-12)


# -- doubly robust objective and serialization --------------------------------------------------


def test_dr_solver_uses_scores():
    from ivpolicy.welfare import DrScoreSet

    gv = _instance(40, 2, 13)
    dr = DrScoreSet(gv.g, np.ones(40, int), 2, "oracle")
    pol = po.solve_dr_ewm(dr, gv.v, pair=PAIR, selector=("x2", "x3"))
    assert pol.welfare == pytest.approx(best_labeling(les_labelings(gv.v), gv.g), abs=1e-12)
    neg = DrScoreSet(-np.abs(gv.g) - 0.1, np.ones(40, int), 2, "oracle")
    assert po.solve_dr_ewm(neg, gv.v).share == 0


def test_dr_and_plugin_policies_have_similar_oracle_welfare(canonical):
    from ivpolicy.experiments import _OracleMte
    from ivpolicy.structural_model import oracle_phi, oracle_welfare, sample
    from ivpolicy.welfare import build_gains, dr_scores

    pair = ManipulationPair(IDENTITY, Manipulation("scale", 0.75))
    data = sample(canonical, 4000, 17)
    gains = build_gains(data, canonical.propensity, _OracleMte(canonical), pair, None, ("x2", "z2"))
    dr = dr_scores(data, 5, pair, {"propensity": canonical.propensity,
                                   "regression": lambda x, z, u: oracle_phi(canonical, x, u)},
                   "oracle", canonical)
    a = po.solve_fewm(gains)
    b = po.solve_dr_ewm(dr, gains.v, pair=pair, selector=("x2", "z2"))
    wa = oracle_welfare(canonical, a, draws=10**6, seed=3)
    wb = oracle_welfare(canonical, b, draws=10**6, seed=3)
    assert abs(wa.value - wb.value) <= 2 * max(wa.se, wb.se)


def test_policy_json_round_trip(tmp_path):
    gv = _instance(30, 2, 14, costs=True)
    for pol in (po.solve_fewm(gv), po.solve_ta(gv), po.empty_policy(PAIR, ("x2", "x3"), "none"),
                po.PolicySpec("ta", thresholds=(-math.inf, 0.5), signs=(1, -1), pair=PAIR)):
        path = tmp_path / "p.json"
        pol.save(path)
        again = po.PolicySpec.load(path)
        assert again == pol or (math.isnan(pol.welfare) and again.thresholds == pol.thresholds)
        if not pol.is_empty:
            assert np.array_equal(again.assign_v(gv.v), pol.assign_v(gv.v))


def test_vc_dimension_reported():
    assert po.PolicySpec("les", (1.0, 0.0, 0.0)).vc_dimension == 3
    assert po.PolicySpec("ta", thresholds=(0.0, 1.0), signs=(1, 1)).vc_dimension == 2
