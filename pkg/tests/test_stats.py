import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from causal_kit.errors import RankError
from causal_kit.stats import normal_cdf, normal_quantile, ols, wald_ci, z_critical


@given(st.floats(1e-300, 1 - 1e-16))
def test_quantile_matches_reference(p):
    ref = sps.norm.ppf(p)
    assert abs(normal_quantile(p) - ref) <= 1e-9 * max(1.0, abs(ref))


@given(st.floats(-8, 1))
def test_quantile_inverts_cdf(x):
    # upper tail excluded: p near 1 is rounded too coarsely to pin x down
    p = normal_cdf(x)
    if 0 < p < 1:
        assert normal_quantile(p) == pytest.approx(x, abs=1e-9, rel=1e-9)


def test_familiar_values():
    assert z_critical(0.95) == pytest.approx(1.959963984540054, abs=1e-12)
    assert z_critical(0.90) == pytest.approx(1.6448536269514722, abs=1e-12)
    assert normal_quantile(0.5) == 0.0
    with pytest.raises(ValueError):
        normal_quantile(1.0)


@given(st.floats(-1e3, 1e3), st.floats(0, 1e3), st.floats(0.5, 0.999))
def test_wald_interval_symmetric(est, se, level):
    lo, hi = wald_ci(est, se, level)
    assert lo <= est <= hi
    assert (hi - est) == pytest.approx(est - lo, abs=1e-9 * (1 + abs(est)))


def test_ols_matches_lstsq_and_sandwich():
    rng = np.random.default_rng(1)
    x = np.column_stack([np.ones(300), rng.standard_normal((300, 3))])
    y = x @ [1, 2, 0, -1] + rng.standard_normal(300) * (1 + np.abs(x[:, 1]))
    fit = ols(x, y)
    assert np.allclose(fit.coef, np.linalg.lstsq(x, y, rcond=None)[0])
    # HC0 written out longhand
    bread = np.linalg.inv(x.T @ x)
    meat = sum(np.outer(xi, xi) * ei**2 for xi, ei in zip(x, fit.resid))
    assert np.allclose(fit.robust_cov(x), bread @ meat @ bread)
    assert np.allclose(fit.robust_cov(x, "HC1"), bread @ meat @ bread * 300 / 296)


def test_ols_rank_deficient():
    x = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(RankError):
        ols(x, np.ones(10))
    with pytest.raises(RankError):
        ols(np.column_stack([np.ones(5), np.zeros(5)]), np.ones(5))
