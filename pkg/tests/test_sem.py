import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causal_kit import sem
from causal_kit.dag import Dag, d_separated, parse_dag
from causal_kit.errors import ModelError, UnknownNodeError
from causal_kit.sem import (
    StructuralModel, bernoulli, counterfactual_pairs, intervene, linear, normal, oracle_effects,
    simulate, swig_model, threshold, uniform,
)

from .helpers import dags, linear_gaussian, partial_corr


def single_node():
    return StructuralModel(Dag(["Y"], []), {"Y": linear()}, {"Y": normal(0, 1)}, roles={"y": "Y"})


def test_simulate_is_deterministic():
    a = simulate(single_node(), 3, 11)
    b = simulate(single_node(), 3, 11)
    assert a.n == 3
    assert np.array_equal(a.Y, b.Y)
    assert not np.array_equal(a.Y, simulate(single_node(), 3, 12).Y)


def test_rows_are_prefix_stable():
    # row i always takes the i-th draw of each node's stream
    m = sem.smoking_bias()
    small, big = simulate(m, 50, 4), simulate(m, 500, 4)
    for col in small.names:
        assert np.array_equal(small[col], big[col][:50])


@pytest.mark.parametrize("bad", [lambda: normal(0, -1), lambda: bernoulli(1.5), lambda: uniform(1, 0)])
def test_noise_parameters_checked(bad):
    with pytest.raises(ModelError):
        bad()


def test_equation_parents_must_match_dag():
    with pytest.raises(ModelError):
        StructuralModel(Dag(["A", "B"], [("A", "B")]), {"A": linear(), "B": linear()}, {})


def test_n_must_be_positive():
    with pytest.raises(ValueError):
        simulate(single_node(), 0, 1)


def test_intervene_sets_constant_and_cuts_edges():
    m = sem.smoking_bias()
    fixed = intervene(m, "D", 1)
    assert fixed.dag.parents("D") == frozenset()
    ds = simulate(fixed, 200, 3)
    assert np.all(ds["D"] == 1)
    # everything upstream is untouched
    assert np.array_equal(ds["eta0"], simulate(m, 200, 3)["eta0"])
    with pytest.raises(UnknownNodeError):
        intervene(m, "nope", 0)


def test_chain_intervention_mean():
    g = parse_dag("D -> M\nM -> Y")
    m = StructuralModel(g, {"D": linear(), "M": linear({"D": 1}), "Y": linear({"M": 1})},
                        {n: normal(0, 1) for n in "DMY"}, roles={"y": "Y"})
    for d in (-2.0, 0.0, 3.0):
        y = simulate(intervene(m, "D", d), 100_000, 8)["Y"]
        assert abs(y.mean() - d) < 0.02


def test_counterfactual_consistency_is_exact():
    m = sem.heart_transplant()
    cf, ds = counterfactual_pairs(m, "A", 5000, 21)
    factual = np.where(cf.observed_d == 1, cf.y1, cf.y0)
    assert np.array_equal(factual, ds.Y)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-2, 2), st.integers(0, 2**31))
def test_consistency_property(rho, eta1, seed):
    cf, ds = counterfactual_pairs(sem.smoking_bias(rho=rho, eta1=eta1), "D", 200, seed)
    assert np.array_equal(np.where(cf.observed_d == 1, cf.y1, cf.y0), ds.Y)
    assert np.allclose(cf.effect, eta1)


def test_unit_effect_model():
    g = parse_dag("D -> Y")
    m = StructuralModel(g, {"D": linear(), "Y": linear({"D": 1})},
                        {"D": bernoulli(0.5), "Y": normal(0, 0)}, roles={"y": "Y", "d": "D"})
    cf, _ = counterfactual_pairs(m, "D", 100, 1)
    assert np.all(cf.y1 - cf.y0 == 1)


def test_non_binary_treatment_rejected():
    m = sem.growth_highdim(p=5, s=2)
    with pytest.raises(ModelError):
        counterfactual_pairs(m, "D", 10, 0)
    # the unit contrast is still available as an oracle
    assert oracle_effects(m, "D", 10, 0)["oracle_ate"] == pytest.approx(-0.045)


def test_smoking_bias_negative_selection():
    m = sem.smoking_bias()
    ds = simulate(m, 10_000, 5)
    eta0, nu = ds["eta0"], ds["nu"]
    assert np.mean(eta0 * nu) < 0
    y, d = ds.Y, ds.D
    assert y[d == 1].mean() < y[d == 0].mean()
    cf, _ = counterfactual_pairs(m, "D", 100_000, 6)
    assert abs(cf.ate) < 0.01


def test_heart_transplant_assignment_probabilities():
    ds = simulate(sem.heart_transplant(), 100_000, 9)
    L, A, Y = ds["L"], ds["A"], ds["Y"]
    assert abs(A[L == 1].mean() - 0.75) < 0.02
    assert abs(A[L == 0].mean() - 0.5) < 0.02
    assert abs(Y[L == 1].mean() - 2 / 3) < 0.02
    assert abs(Y[L == 0].mean() - 0.25) < 0.02
    assert abs(L.mean() - 0.6) < 0.01


def test_heart_transplant_oracle_vs_crude():
    cf, ds = counterfactual_pairs(sem.heart_transplant(), "A", 100_000, 2)
    assert cf.ate == 0.0
    crude = ds.Y[ds.D == 1].mean() - ds.Y[ds.D == 0].mean()
    # expected crude difference: 0.6*0.75*(2/3)+... works out near 0.1
    assert crude > 0.05


def test_heart_transplant_expected_counts():
    # with q = 3/5 the expected 20-patient table has 13 treated (7 deaths) and 7 untreated (3 deaths)
    q, n = 0.6, 20
    crit, stable = q * n, (1 - q) * n
    treated = 0.75 * crit + 0.5 * stable
    deaths_t = 0.75 * crit * 2 / 3 + 0.5 * stable / 4
    deaths_c = 0.25 * crit * 2 / 3 + 0.5 * stable / 4
    assert (treated, deaths_t, deaths_c) == pytest.approx((13, 7, 3))


def test_growth_dimensions():
    ds = simulate(sem.growth_highdim(), 90, 0)
    assert ds.n == 90 and len(ds.names) == 62
    assert ds.X.shape == (90, 60)


def test_unknown_scenario():
    with pytest.raises(ModelError):
        sem.scenario("nope")


def test_swig_model_matches_intervention():
    m = sem.heart_transplant(effect=-0.2)
    for value in (0, 1):
        sw, swm = swig_model(m, "A", value)
        a = simulate(intervene(m, "A", value), 3000, 13)
        b = simulate(swm, 3000, 13)
        assert np.array_equal(a["Y"], b[sw.node("Y")])
        # the natural treatment keeps its factual value
        assert np.array_equal(b["A"], simulate(m, 3000, 13)["A"])


def test_local_markov_in_linear_gaussian_data():
    rng = np.random.default_rng(3)
    from .helpers import random_dag

    for _ in range(3):
        g = random_dag(rng, 5, 0.5)
        m = linear_gaussian(g, rng)
        ds = simulate(m, 50_000, int(rng.integers(1 << 30)))
        data = np.column_stack([ds[n] for n in g.nodes])
        pos = {n: i for i, n in enumerate(g.nodes)}
        for v in g.nodes:
            pa = sorted(g.parents(v))
            for w in set(g.nodes) - g.descendants(v) - set(pa) - {v}:
                assert d_separated(g, v, w, pa)
                r = partial_corr(data, pos[v], pos[w], [pos[p] for p in pa])
                assert abs(r) < 0.025


def test_threshold_equation_is_binary():
    m = sem.smoking_bias()
    assert m.is_binary("D") and not m.is_binary("Y")
    ds = simulate(m, 100, 0)
    assert set(np.unique(ds.D)) <= {0.0, 1.0}


def test_randomized_smoking_breaks_selection():
    m = sem.smoking_bias(randomized=True, eta1=0.3)
    cf, ds = counterfactual_pairs(m, "D", 50_000, 1)
    assert cf.ate == pytest.approx(0.3)
    diff = ds.Y[ds.D == 1].mean() - ds.Y[ds.D == 0].mean()
    assert abs(diff - 0.3) < 4 * math.sqrt(4 / 50_000)
