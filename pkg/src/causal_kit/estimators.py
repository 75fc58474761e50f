"""Treatment-effect estimators for binary treatments.

Difference in means with Wald intervals, effect-measure scales,
standardization over strata, delta-method relative effects, crossover
contrasts, logistic propensity scores, Horvitz-Thompson / IPW, balance
checks, interacted regression for heterogeneous effects and the
nonparametric bootstrap.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

from .data import Dataset
from .errors import (
    CausalKitError, DataError, EstimationError, PositivityError, RankError,
    UndefinedRatioError,
)
from .stats import ols, wald_ci

SCORE_CLIP = 1e-6


@dataclass(frozen=True)
class EffectReport:
    estimate: float
    se: float
    ci: tuple
    level: float
    method: str
    n: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimate": self.estimate,
            "se": self.se,
            "ci": list(self.ci),
            "level": self.level,
            "n": self.n,
            "diagnostics": dict(self.diagnostics),
        }


def _wald_report(estimate, se, level, method, n, **diagnostics) -> EffectReport:
    estimate, se = float(estimate), float(se)
    return EffectReport(estimate, se, wald_ci(estimate, se, level), level, method, int(n),
                        diagnostics)


class GroupMeans(NamedTuple):
    theta0: float
    theta1: float
    n0: int
    n1: int


def group_means(ds: Dataset) -> GroupMeans:
    control, treated = ds.treatment_arms(min_rows=1)
    y = ds.Y
    return GroupMeans(float(y[control].mean()), float(y[treated].mean()),
                      int(control.sum()), int(treated.sum()))


def _arm_moments(ds: Dataset, min_rows=2):
    control, treated = ds.treatment_arms(min_rows=min_rows)
    y = ds.Y
    y0, y1 = y[control], y[treated]
    return y0.mean(), y1.mean(), y0.var(ddof=1), y1.var(ddof=1), y0.size, y1.size


def ate_wald(ds: Dataset, level: float = 0.95) -> EffectReport:
    """Difference in means with the unpooled large-sample Wald interval."""
    m0, m1, v0, v1, n0, n1 = _arm_moments(ds)
    se = math.sqrt(v0 / n0 + v1 / n1)
    return _wald_report(m1 - m0, se, level, "difference_in_means", ds.n,
                        theta0=float(m0), theta1=float(m1), n0=int(n0), n1=int(n1))


def _require_binary_outcome(ds):
    y = ds.Y
    if not np.all((y == 0) | (y == 1)):
        raise DataError(f"outcome column {ds.y!r} must be binary 0/1 for risk measures")


def risk_measures(ds: Dataset) -> dict:
    """Risk difference, risk ratio, odds ratio and number needed to treat.

    Undefined quantities (zero denominators) are reported as ``None``.
    """
    _require_binary_outcome(ds)
    t0, t1, n0, n1 = group_means(ds)
    rd = t1 - t0
    rr = t1 / t0 if t0 > 0 else None
    if 0 < t0 < 1 and 0 < t1 < 1:
        odds_ratio = (t1 / (1 - t1)) / (t0 / (1 - t0))
    else:
        odds_ratio = None
    nnt = 1 / rd if rd != 0 else None
    return {"rd": rd, "rr": rr, "or": odds_ratio, "nnt": nnt, "risk1": t1, "risk0": t0,
            "n0": n0, "n1": n1}


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class StratifiedTable:
    strata: tuple
    n_treated: tuple
    n_control: tuple
    risk_treated: tuple
    risk_control: tuple
    weights: tuple

    def to_dict(self) -> dict:
        return {
            "strata": [float(s) for s in self.strata],
            "n_treated": list(self.n_treated),
            "n_control": list(self.n_control),
            "risk_treated": [float(r) for r in self.risk_treated],
            "risk_control": [float(r) for r in self.risk_control],
            "weights": [float(w) for w in self.weights],
        }


@dataclass(frozen=True)
class StandardizedContrast:
    table: StratifiedTable
    std_risk1: object
    std_risk0: object
    std_rr: object
    crude_rr: object
    std_rd: object
    crude_rd: object
    exact: bool = False

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None else float(v)

        out = {
            "table": self.table.to_dict(),
            "std_risk1": num(self.std_risk1),
            "std_risk0": num(self.std_risk0),
            "std_rr": num(self.std_rr),
            "crude_rr": num(self.crude_rr),
            "std_rd": num(self.std_rd),
            "crude_rd": num(self.crude_rd),
        }
        if self.exact:
            out["exact"] = {k: (None if getattr(self, k) is None else str(getattr(self, k)))
                            for k in ("std_risk1", "std_risk0", "std_rr", "crude_rr",
                                      "std_rd", "crude_rd")}
        return out


def standardized_contrast(ds: Dataset, stratum_col: str, exact: bool = False) -> StandardizedContrast:
    """Standardize arm-specific risks to the sample distribution of ``stratum_col``.

    With ``exact=True`` every count-based quantity is a :class:`Fraction`
    (outcome and stratum codes must then be integers).
    """
    control, treated = ds.treatment_arms(min_rows=1)
    y = ds.Y
    strata_col = ds[stratum_col]
    levels = np.unique(strata_col)
    if exact and not (np.all(y == np.round(y)) and np.all(levels == np.round(levels))):
        raise DataError("exact standardization needs integer outcomes and stratum codes")

    def ratio(num, den):
        return Fraction(int(num), int(den)) if exact else num / den

    def total(values):
        return int(values.sum()) if exact else float(values.sum())

    nt, nc, rt, rc, w = [], [], [], [], []
    for level in levels:
        in_stratum = strata_col == level
        t = in_stratum & treated
        c = in_stratum & control
        if not t.any() or not c.any():
            missing = "treated" if not t.any() else "control"
            raise PositivityError(
                f"stratum {stratum_col}={level:g} has no {missing} rows", stratum=float(level)
            )
        nt.append(int(t.sum()))
        nc.append(int(c.sum()))
        rt.append(ratio(total(y[t]), t.sum()))
        rc.append(ratio(total(y[c]), c.sum()))
        w.append(ratio(in_stratum.sum(), ds.n))
    table = StratifiedTable(tuple(levels.tolist()), tuple(nt), tuple(nc), tuple(rt), tuple(rc),
                            tuple(w))
    std1 = sum(wi * ri for wi, ri in zip(w, rt))
    std0 = sum(wi * ri for wi, ri in zip(w, rc))
    crude1 = ratio(total(y[treated]), treated.sum())
    crude0 = ratio(total(y[control]), control.sum())
    return StandardizedContrast(
        table,
        std1,
        std0,
        std1 / std0 if std0 != 0 else None,
        crude1 / crude0 if crude0 != 0 else None,
        std1 - std0,
        crude1 - crude0,
        exact,
    )


# ---------------------------------------------------------------------------
# relative effect and crossover


def relative_effect(ds: Dataset, level: float = 0.95) -> EffectReport:
    """phi = theta1/theta0 - 1 with a delta-method standard error.

    The asymptotic covariance of sqrt(n)(theta0_hat, theta1_hat) is
    diag(sigma0^2/p0, sigma1^2/p1), so Var(phi_hat) = G'VG / n with
    gradient G = (-theta1/theta0^2, 1/theta0).
    """
    m0, m1, v0, v1, n0, n1 = _arm_moments(ds)
    if m0 == 0:
        raise UndefinedRatioError("control mean is zero; relative effect undefined")
    n = n0 + n1
    grad = np.array([-m1 / m0**2, 1 / m0])
    V = np.diag([v0 / (n0 / n), v1 / (n1 / n)])
    se = math.sqrt(grad @ V @ grad / n)
    return _wald_report(m1 / m0 - 1, se, level, "relative_effect_delta", n,
                        theta0=float(m0), theta1=float(m1), grad_theta0=float(grad[0]),
                        grad_theta1=float(grad[1]))


def crossover_effect(y0, y1, level: float = 0.95) -> EffectReport:
    """Within-subject contrast: mean of y1 - y0 with se sd(diff)/sqrt(n)."""
    y0 = np.asarray(y0, float)
    y1 = np.asarray(y1, float)
    if y0.shape != y1.shape or y0.ndim != 1:
        raise DataError("period columns must be one-dimensional with equal length")
    if y0.size < 2:
        raise EstimationError("crossover needs at least two subjects")
    diff = y1 - y0
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    return _wald_report(diff.mean(), se, level, "crossover_difference", diff.size)


# ---------------------------------------------------------------------------
# propensity scores


class SeparationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PropensityModel:
    coefficients: np.ndarray  # intercept first, original covariate scale
    scores: np.ndarray
    converged: bool
    iterations: int
    separated: bool = False
    n_clipped: int = 0
    names: tuple = ()

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, float).reshape(-1, len(self.coefficients) - 1)
        eta = self.coefficients[0] + x @ self.coefficients[1:]
        return np.clip(_expit(eta), SCORE_CLIP, 1 - SCORE_CLIP)

    def to_dict(self) -> dict:
        return {
            "coefficients": dict(zip(("intercept",) + tuple(self.names),
                                     map(float, self.coefficients))),
            "converged": self.converged,
            "iterations": self.iterations,
            "separated": self.separated,
            "n_clipped": self.n_clipped,
        }


def _expit(eta):
    return 0.5 * (1 + np.tanh(0.5 * eta))


def fit_propensity(ds: Dataset, max_iter: int = 100, tol: float = 1e-8) -> PropensityModel:
    """Logistic regression of D on the covariates by iteratively reweighted least squares.

    Covariates are standardized for the iterations and coefficients mapped
    back.  Convergence: largest coefficient change below ``tol``.  If fitted
    probabilities collapse to 0/1 (separation) the fit stops with
    ``converged=False`` and a :class:`SeparationWarning`; scores are always
    clipped to [1e-6, 1 - 1e-6] and the number of clipped rows reported.
    """
    control, treated = ds.treatment_arms(min_rows=1)
    d = ds.D
    x = ds.X
    n, k = x.shape
    if n <= k + 1:
        raise RankError(f"need more than {k + 1} rows to fit {k} covariates plus intercept")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    if np.any(sd == 0):
        bad = [ds.x[j] for j in np.flatnonzero(sd == 0)]
        raise RankError(f"covariate(s) without variation: {', '.join(bad)}")
    z = np.column_stack([np.ones(n), (x - mean) / sd])
    ols(z, d)  # rank check only

    beta = np.zeros(k + 1)
    beta[0] = math.log(d.mean() / (1 - d.mean()))
    converged = separated = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = z @ beta
        if np.max(np.abs(eta)) > 30:
            separated = True
            break
        prob = _expit(eta)
        w = prob * (1 - prob)
        hess = (z * w[:, None]).T @ z
        grad = z.T @ (d - prob)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            separated = True
            break
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    if separated:
        warnings.warn("treatment is (quasi-)separated by the covariates; propensity "
                      "coefficients diverge and scores were clipped", SeparationWarning,
                      stacklevel=2)
    elif not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations", SeparationWarning,
                      stacklevel=2)
    coef = np.empty(k + 1)
    coef[1:] = beta[1:] / sd
    coef[0] = beta[0] - np.sum(beta[1:] * mean / sd)
    raw = _expit(z @ beta)
    scores = np.clip(raw, SCORE_CLIP, 1 - SCORE_CLIP)
    return PropensityModel(coef, scores, converged, it, separated,
                           int(np.sum(scores != raw)), tuple(ds.x))


def ht_transform(ds: Dataset, scores) -> np.ndarray:
    """H = 1{D=1}/p(X) - 1{D=0}/(1-p(X))."""
    scores = _check_scores(ds, scores)
    d = ds.D
    return np.where(d == 1, 1 / scores, -1 / (1 - scores))


def _check_scores(ds, scores):
    ds.treatment_arms(min_rows=0)
    scores = np.asarray(scores, float)
    if scores.shape != (ds.n,):
        raise DataError(f"need one score per row ({ds.n}), got shape {scores.shape}")
    bad = np.flatnonzero(~((scores > 0) & (scores < 1)))
    if bad.size:
        i = int(bad[0])
        raise PositivityError(
            f"propensity score {scores[i]!r} at row {i} is outside (0, 1)", row=i
        )
    return scores


# ---------------------------------------------------------------------------
# inverse probability weighting


def ipw_ate(ds: Dataset, scores, stabilized: bool = False, truncate_pct=None,
            level: float = 0.95) -> EffectReport:
    """Horvitz-Thompson / stabilized IPW estimate of the ATE.

    Unstabilized: mean of Y*H.  Stabilized: weights
    ``A*P(A=1)/p + (1-A)*P(A=0)/(1-p)`` (marginals are sample shares),
    normalized to average one within each arm, giving the Hajek contrast.
    ``truncate_pct=(lo, hi)`` clamps the weights at those sample
    percentiles.  Standard errors treat the weights as fixed.
    """
    scores = _check_scores(ds, scores)
    control, treated = ds.treatment_arms(min_rows=1)
    y = ds.Y
    n = ds.n
    raw = np.where(treated, 1 / scores, 1 / (1 - scores))
    if stabilized:
        raw = raw * np.where(treated, treated.mean(), control.mean())
    w = raw
    truncated = 0.0
    if truncate_pct is not None:
        lo, hi = truncate_pct
        if not 0 <= lo < hi <= 100:
            raise ValueError("truncation percentiles must satisfy 0 <= lo < hi <= 100")
        lo_w, hi_w = np.percentile(raw, [lo, hi])
        w = np.clip(raw, lo_w, hi_w)
        truncated = float(np.mean(w != raw))
    diagnostics = {
        "max_weight": float(w.max()),
        "max_weight_untruncated": float(raw.max()),
        "truncated_fraction": truncated,
        "min_score": float(scores.min()),
        "max_score": float(scores.max()),
    }
    if stabilized:
        mu = {}
        var = 0.0
        for arm, mask in ((0, control), (1, treated)):
            wa, ya = w[mask], y[mask]
            mu[arm] = np.sum(wa * ya) / wa.sum()
            var += np.sum(wa**2 * (ya - mu[arm]) ** 2) / wa.sum() ** 2
            diagnostics[f"ess_{arm}"] = float(wa.sum() ** 2 / np.sum(wa**2))
        return _wald_report(mu[1] - mu[0], math.sqrt(var), level, "ipw_stabilized", n,
                            **diagnostics)
    z = y * np.where(treated, w, -w)
    return _wald_report(z.mean(), z.std() / math.sqrt(n), level, "ipw_horvitz_thompson", n,
                        **diagnostics)


def stabilized_weights(ds: Dataset, scores) -> np.ndarray:
    """Stabilized weights normalized to mean one within each arm."""
    scores = _check_scores(ds, scores)
    control, treated = ds.treatment_arms(min_rows=1)
    w = np.where(treated, treated.mean() / scores, control.mean() / (1 - scores))
    out = np.empty_like(w)
    for mask in (control, treated):
        out[mask] = w[mask] / w[mask].mean()
    return out


# ---------------------------------------------------------------------------
# balance check


def default_dictionary(x: np.ndarray, names: Sequence[str]) -> tuple:
    """Raw covariates, squares and pairwise products, minus exact duplicates and constants."""
    x = np.asarray(x, float)
    cols = []
    labels = []
    k = x.shape[1]
    for j in range(k):
        cols.append(x[:, j])
        labels.append(names[j])
    for j in range(k):
        cols.append(x[:, j] ** 2)
        labels.append(f"{names[j]}^2")
    for j in range(k):
        for l in range(j + 1, k):
            cols.append(x[:, j] * x[:, l])
            labels.append(f"{names[j]}*{names[l]}")
    keep_cols, keep_labels = [], []
    for col, label in zip(cols, labels):
        if np.all(col == col[0]):
            continue
        if any(np.array_equal(col, other) for other in keep_cols):
            continue
        keep_cols.append(col)
        keep_labels.append(label)
    if not keep_cols:
        return np.empty((x.shape[0], 0)), ()
    return np.column_stack(keep_cols), tuple(keep_labels)


@dataclass(frozen=True)
class BalanceResult:
    f_stat: float
    p_value: float
    robust_f: float
    robust_p: float
    df: tuple
    t_stats: dict

    def to_dict(self) -> dict:
        return {
            "method": "balance_check",
            "f_stat": self.f_stat,
            "p_value": self.p_value,
            "robust_f": self.robust_f,
            "robust_p_value": self.robust_p,
            "df": list(self.df),
            "t_stats": dict(self.t_stats),
        }


def balance_check(ds: Dataset, scores, dictionary=None, names=None) -> BalanceResult:
    """Regress the Horvitz-Thompson transform on a covariate dictionary.

    Under a correct propensity model E[H | X] = 0, so the dictionary
    should have no joint predictive power; the classical F-test and an
    HC1 Wald version of it are both reported.
    """
    h = ht_transform(ds, scores)
    if dictionary is None:
        dictionary, names = default_dictionary(ds.X, ds.x)
    dictionary = np.asarray(dictionary, float)
    if dictionary.ndim == 1:
        dictionary = dictionary[:, None]
    if dictionary.shape[0] != ds.n:
        raise DataError("dictionary must have one row per observation")
    k = dictionary.shape[1]
    if names is None:
        names = [f"w{j + 1}" for j in range(k)]
    if k == 0:
        raise RankError("dictionary has no non-constant terms; F-test undefined")
    design = np.column_stack([np.ones(ds.n), dictionary])
    fit = ols(design, h)
    df_resid = ds.n - k - 1
    if df_resid <= 0:
        raise RankError("dictionary has as many terms as observations")
    rss = fit.resid @ fit.resid
    tss = np.sum((h - h.mean()) ** 2)
    # a saturated score model can leave tss - rss at -1e-17; F is non-negative
    f_stat = max(tss - rss, 0.0) / k / (rss / df_resid)
    slopes = fit.coef[1:]
    cov = fit.classical_cov(design)
    rcov = fit.robust_cov(design, "HC1")[1:, 1:]
    robust_f = float(slopes @ np.linalg.solve(rcov, slopes) / k)
    t = slopes / np.sqrt(np.diag(cov)[1:])
    return BalanceResult(
        float(f_stat),
        float(sps.f.sf(f_stat, k, df_resid)),
        robust_f,
        float(sps.f.sf(robust_f, k, df_resid)),
        (k, df_resid),
        {name: float(v) for name, v in zip(names, t)},
    )


# ---------------------------------------------------------------------------
# heterogeneous effects


@dataclass(frozen=True)
class CateResult:
    ate: EffectReport
    cate_coeffs: dict
    cate_se: dict
    x_mean: dict

    def predict(self, x) -> np.ndarray:
        """CATE(x) = ATE + alpha2'(x - xbar)."""
        x = np.atleast_2d(np.asarray(x, float))
        names = list(self.cate_coeffs)
        a2 = np.array([self.cate_coeffs[k] for k in names])
        xbar = np.array([self.x_mean[k] for k in names])
        return self.ate.estimate + (x - xbar) @ a2

    def to_dict(self) -> dict:
        out = self.ate.to_dict()
        out["cate_coeffs"] = dict(self.cate_coeffs)
        out["cate_se"] = dict(self.cate_se)
        return out


def cate_interaction(ds: Dataset, level: float = 0.95) -> CateResult:
    """OLS of Y on D, centered X and D x centered X, with HC1 standard errors.

    Centering makes the D coefficient the average effect.
    """
    ds.treatment_arms(min_rows=1)
    x = ds.X
    xbar = x.mean(axis=0)
    xc = x - xbar
    d = ds.D
    design = np.column_stack([np.ones(ds.n), d, xc, d[:, None] * xc])
    fit = ols(design, ds.Y)
    se = np.sqrt(np.diag(fit.robust_cov(design, "HC1")))
    k = x.shape[1]
    ate = _wald_report(fit.coef[1], se[1], level, "cate_interaction", ds.n)
    inter = slice(2 + k, 2 + 2 * k)
    return CateResult(
        ate,
        {name: float(c) for name, c in zip(ds.x, fit.coef[inter])},
        {name: float(s) for name, s in zip(ds.x, se[inter])},
        {name: float(m) for name, m in zip(ds.x, xbar)},
    )


# ---------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True)
class BootstrapResult:
    se: float
    ci: tuple
    level: float
    b: int
    failures: int
    replicates: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"se": self.se, "ci": list(self.ci), "level": self.level, "b": self.b,
                "failures": self.failures}


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    """Generator for replicate ``r``; independent of execution order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))


def bootstrap(est: Callable[[Dataset], object], ds: Dataset, b: int = 1000, seed: int = 0,
              level: float = 0.95, jobs: int = 1, max_failure_rate: float = 0.10) -> BootstrapResult:
    """Nonparametric bootstrap: resample rows with replacement ``b`` times.

    ``est`` returns a number or anything with an ``estimate`` attribute.
    Replicates that raise a package error are counted; more than
    ``max_failure_rate`` of them aborts with :class:`EstimationError`.
    """
    if b < 100:
        raise ValueError("bootstrap needs b >= 100 replicates")

    def one(r):
        idx = replicate_rng(seed, r).integers(0, ds.n, ds.n)
        try:
            val = est(ds.take(idx))
        except (CausalKitError, np.linalg.LinAlgError, ZeroDivisionError):
            return None
        val = float(getattr(val, "estimate", val))
        return val if math.isfinite(val) else None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(one, range(b)))
    else:
        values = [one(r) for r in range(b)]
    ok = np.array([v for v in values if v is not None])
    failures = b - ok.size
    if failures > max_failure_rate * b:
        raise EstimationError(f"{failures} of {b} bootstrap replicates failed")
    alpha = (1 - level) / 2
    lo, hi = np.quantile(ok, [alpha, 1 - alpha])
    return BootstrapResult(float(ok.std(ddof=1)), (float(lo), float(hi)), level, b, failures, ok)


def ipw_bootstrap(ds: Dataset, b: int = 1000, seed: int = 0, scores=None,
                  stabilized: bool = False, truncate_pct=None, level: float = 0.95,
                  jobs: int = 1) -> BootstrapResult:
    """Bootstrap for IPW; without known ``scores`` the propensity model is refit per replicate."""
    if scores is None:
        def est(sample):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SeparationWarning)
                fitted = fit_propensity(sample)
            return ipw_ate(sample, fitted.scores, stabilized, truncate_pct, level)
    else:
        known = np.asarray(scores, float)
        col = "__score__"
        ds = Dataset({**ds.columns, col: known}, y=ds.y, d=ds.d, x=ds.x)

        def est(sample):
            return ipw_ate(sample, sample[col], stabilized, truncate_pct, level)
    return bootstrap(est, ds, b=b, seed=seed, level=level, jobs=jobs)


__all__ = [
    "EffectReport", "GroupMeans", "group_means", "ate_wald", "risk_measures",
    "StratifiedTable", "StandardizedContrast", "standardized_contrast", "relative_effect",
    "crossover_effect", "PropensityModel", "SeparationWarning", "fit_propensity",
    "ht_transform", "ipw_ate", "stabilized_weights", "default_dictionary", "BalanceResult",
    "balance_check", "CateResult", "cate_interaction", "BootstrapResult", "bootstrap",
    "ipw_bootstrap", "replicate_rng",
]
