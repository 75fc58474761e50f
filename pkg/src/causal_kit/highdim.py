"""Inference on one target coefficient with many controls.

Model: ``Y = alpha*D + beta'W + eps``.  Nuisance regressions use a
coordinate-descent Lasso that minimizes

    (1/2n) ||y - b0 - X g||^2 + lam * sum_j psi_j |g_j|

Columns are standardized internally (loadings are 1 on that scale unless
given), so on the original scale psi_j is the column standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import PenaltyConfig
from .data import Dataset
from .errors import ConvergenceError, DataError, EstimationError, NoIdentificationError
from .stats import ols, wald_ci

KKT_TOL = 1e-8
CD_TOL = 1e-10


# ---------------------------------------------------------------------------
# Lasso


@dataclass(frozen=True)
class LassoFit:
    coef: np.ndarray
    intercept: float
    lam: float
    loadings: np.ndarray  # original scale
    active: tuple
    resid: np.ndarray = field(repr=False)
    iterations: int = 0
    converged: bool = True
    kkt: float = 0.0

    def predict(self, x) -> np.ndarray:
        return self.intercept + np.asarray(x, float) @ self.coef

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "active": list(self.active),
            "loadings_min": float(self.loadings.min()) if self.loadings.size else None,
            "loadings_max": float(self.loadings.max()) if self.loadings.size else None,
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt_max_violation": self.kkt,
        }


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _prepare(x, y, standardize, fit_intercept):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DataError("lasso needs x of shape (n, p) and y of length n")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("lasso inputs must be finite")
    n = x.shape[0]
    xm = x.mean(axis=0) if fit_intercept else np.zeros(x.shape[1])
    ym = y.mean() if fit_intercept else 0.0
    if standardize:
        scale = x.std(axis=0)
        if np.any(scale == 0):
            raise DataError(f"column(s) {np.flatnonzero(scale == 0).tolist()} have zero variance")
    else:
        scale = np.ones(x.shape[1])
    z = (x - xm) / scale
    return z, y - ym, xm, ym, scale, n


def _kkt_gap(grad, b, pen):
    """Largest KKT violation given grad = Z'(y - Zb)/n."""
    on = b != 0
    viol = np.where(on, np.abs(grad - pen * np.sign(b)), np.maximum(np.abs(grad) - pen, 0.0))
    return float(viol.max()) if viol.size else 0.0


def _polish(G, c, pen, b):
    """Solve the KKT equations on the current support with its signs held fixed.

    Returns the candidate or None if the solve fails or flips a sign.  On
    badly conditioned designs this finishes in one step what cyclic
    updates approach only geometrically.
    """
    A = np.flatnonzero(b)
    if A.size == 0:
        return None
    s = np.sign(b[A])
    try:
        sol = np.linalg.solve(G[np.ix_(A, A)], c[A] - pen[A] * s)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)) or np.any(np.sign(sol) != s):
        return None
    out = np.zeros_like(b)
    out[A] = sol
    return out


def _coordinate_descent(G, c, pen, b, tol=CD_TOL, max_sweeps=100_000):
    """Cyclic coordinate descent with an active-set inner loop.

    Keeps g = c - G b up to date so each update costs O(p).  Whenever a
    loop settles, a polished support solve is tried before continuing.
    """
    p = c.size
    g = c - G @ b
    diag = np.diag(G).copy()
    sweeps = 0
    everything = np.arange(p)

    def sweep(idx):
        biggest = 0.0
        for j in idx:
            if diag[j] == 0:
                continue
            old = b[j]
            rho = g[j] + diag[j] * old
            new = math.copysign(max(abs(rho) - pen[j], 0.0), rho) / diag[j]
            if new != old:
                delta = new - old
                g[:] -= G[:, j] * delta
                b[j] = new
                biggest = max(biggest, abs(delta))
        return biggest

    def certified(cand):
        return cand is not None and _kkt_gap(c - G @ cand, cand, pen) <= KKT_TOL

    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(everything) < tol:
            g[:] = c - G @ b
            if _kkt_gap(g, b, pen) <= KKT_TOL:
                return b, sweeps, True
            cand = _polish(G, c, pen, b)
            if certified(cand):
                return cand, sweeps, True
            continue
        active = np.flatnonzero(b)
        while sweeps < max_sweeps:
            sweeps += 1
            if sweep(active) < tol:
                break
            if sweeps % 10 == 0:
                cand = _polish(G, c, pen, b)
                if certified(cand):
                    return cand, sweeps, True
    g = c - G @ b
    return b, sweeps, _kkt_gap(g, b, pen) <= KKT_TOL


def lasso(x, y, lam: float, loadings=None, standardize: bool = True, fit_intercept: bool = True,
          warm_start=None, max_sweeps: int = 100_000) -> LassoFit:
    """Weighted-l1 least squares by coordinate descent.

    ``loadings`` are on the working scale (unit-variance columns when
    ``standardize``); the fit reports them on the original scale.  Raises
    :class:`ConvergenceError` if the KKT certificate cannot be reached.
    """
    if not lam >= 0:
        raise ValueError("lambda must be non-negative")
    z, yc, xm, ym, scale, n = _prepare(x, y, standardize, fit_intercept)
    p = z.shape[1]
    psi = np.ones(p) if loadings is None else np.asarray(loadings, float)
    if psi.shape != (p,) or np.any(psi <= 0):
        raise ValueError("loadings must be positive, one per column")
    G = z.T @ z / n
    c = z.T @ yc / n
    b0 = np.zeros(p) if warm_start is None else np.asarray(warm_start, float) * scale
    b, sweeps, ok = _coordinate_descent(G, c, lam * psi, b0.copy(), max_sweeps=max_sweeps)
    coef = b / scale
    intercept = float(ym - xm @ coef)
    resid = np.asarray(y, float) - intercept - np.asarray(x, float) @ coef
    fit = LassoFit(coef, intercept, float(lam), psi * scale, tuple(np.flatnonzero(b).tolist()),
                   resid, sweeps, ok)
    violation = kkt_violation(x, y, fit, fit_intercept=fit_intercept)
    fit = LassoFit(fit.coef, fit.intercept, fit.lam, fit.loadings, fit.active, resid, sweeps,
                   ok and violation <= KKT_TOL, violation)
    if not fit.converged:
        raise ConvergenceError(f"lasso KKT violation {violation:.3g} after {sweeps} sweeps")
    return fit


def kkt_violation(x, y, fit: LassoFit, fit_intercept: bool = True) -> float:
    """Recompute the optimality certificate from the residuals on the original scale."""
    x = np.asarray(x, float)
    resid = np.asarray(y, float) - fit.intercept - x @ fit.coef
    if fit_intercept:
        x = x - x.mean(axis=0)
    grad = x.T @ resid / x.shape[0]
    return _kkt_gap(grad, fit.coef, fit.lam * fit.loadings)


def lambda_max(x, y, loadings=None, standardize=True, fit_intercept=True) -> float:
    """Smallest lambda at which every coefficient is zero."""
    z, yc, *_ , n = _prepare(x, y, standardize, fit_intercept)
    psi = np.ones(z.shape[1]) if loadings is None else np.asarray(loadings, float)
    return float(np.max(np.abs(z.T @ yc) / (n * psi)))


def lasso_path(x, y, lams: Sequence[float], **kw) -> list:
    """Fits along a decreasing lambda grid with warm starts."""
    fits = []
    warm = None
    for lam in lams:
        fit = lasso(x, y, lam, warm_start=warm, **kw)
        warm = fit.coef
        fits.append(fit)
    return fits


# ---------------------------------------------------------------------------
# lambda selection


@dataclass(frozen=True)
class LambdaChoice:
    lam: float
    loadings: np.ndarray  # working (standardized) scale
    rule: str
    sigma_hat: Optional[float] = None
    cv_grid: Optional[np.ndarray] = None
    cv_error: Optional[np.ndarray] = None


def plugin_lambda(n: int, p: int, sigma: float, c: float = 1.1) -> float:
    """c * sigma * sqrt(2 log(p) / n)."""
    return c * sigma * math.sqrt(2 * math.log(max(p, 2)) / n)


def select_lambda(x, y, rule: str = "plugin", seed: int = 0, c: float = 1.1, rounds: int = 2,
                  folds: int = 10, n_grid: int = 100, one_se: bool = False) -> LambdaChoice:
    """Penalty level by the plug-in formula or k-fold cross-validation.

    Plug-in: start from sigma_hat = sd(y), then ``rounds`` times refit and
    set sigma_hat to the residual root mean square.  ``rule`` may be
    ``"plugin"``, ``"cv"`` or ``"cv<k>"``.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n, p = x.shape
    if y.std() == 0:
        raise DataError("outcome has zero variance; lambda undefined")
    psi = np.ones(p)
    if rule == "plugin":
        sigma = float(y.std())
        for _ in range(rounds):
            fit = lasso(x, y, plugin_lambda(n, p, sigma, c), psi)
            sigma = float(np.sqrt(np.mean(fit.resid**2)))
            if sigma == 0:
                raise EstimationError("lasso fits the outcome exactly; sigma estimate is zero")
        return LambdaChoice(plugin_lambda(n, p, sigma, c), psi, "plugin", sigma)
    if rule.startswith("cv"):
        k = int(rule[2:]) if len(rule) > 2 else folds
        return _cv_lambda(x, y, k, seed, n_grid, one_se)
    raise ValueError(f"unknown lambda rule {rule!r}")


def fold_ids(n: int, k: int, seed: int) -> np.ndarray:
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= folds <= n, got {k}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    ids = np.arange(n) % k
    rng.shuffle(ids)
    return ids


def _cv_lambda(x, y, k, seed, n_grid, one_se):
    n, p = x.shape
    top = lambda_max(x, y)
    grid = top * np.logspace(0, -3, n_grid)
    ids = fold_ids(n, k, seed)
    errs = np.zeros((k, n_grid))
    for f in range(k):
        train, test = ids != f, ids == f
        for i, fit in enumerate(lasso_path(x[train], y[train], grid)):
            errs[f, i] = np.mean((y[test] - fit.predict(x[test])) ** 2)
    mean = errs.mean(axis=0)
    best = int(np.argmin(mean))
    if one_se:
        se = errs.std(axis=0, ddof=1) / math.sqrt(k)
        best = int(np.flatnonzero(mean <= mean[best] + se[best])[0])
    return LambdaChoice(float(grid[best]), np.ones(p), f"cv{k}", None, grid, mean)


# ---------------------------------------------------------------------------
# estimators of alpha


@dataclass(frozen=True)
class DmlReport:
    alpha: float
    variance: float
    se: float
    ci: tuple
    level: float
    method: str
    n: int
    selected_controls: dict
    fits: dict = field(repr=False, default_factory=dict)
    lambdas: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    residuals: dict = field(repr=False, default_factory=dict)

    @property
    def estimate(self) -> float:
        return self.alpha

    @property
    def kkt_max_violation(self) -> float:
        return max((f.kkt for f in self.fits.values()), default=0.0)

    def to_dict(self) -> dict:
        loads = {}
        for stage, fit in self.fits.items():
            if fit.loadings.size:
                loads[stage] = {"min": float(fit.loadings.min()), "max": float(fit.loadings.max()),
                                "mean": float(fit.loadings.mean())}
        return {
            "method": self.method,
            "estimate": self.alpha,
            "variance": self.variance,
            "se": self.se,
            "ci": list(self.ci),
            "level": self.level,
            "n": self.n,
            "selected_controls": {k: sorted(v) for k, v in self.selected_controls.items()},
            "lambdas": dict(self.lambdas),
            "loadings": loads,
            "kkt_max_violation": self.kkt_max_violation,
            "diagnostics": dict(self.diagnostics),
        }


def _roles(ds: Dataset):
    y, d, w = ds.Y, ds.D, ds.X
    if w.shape[1] < 1:
        raise DataError("need at least one control column")
    if ds.n < 10:
        raise DataError("need at least 10 rows")
    return y, d, w


def _fit_stage(x, y, rule, seed, lam, penalty=None):
    if lam is None:
        kw = penalty.selector_kwargs() if penalty is not None else {}
        choice = select_lambda(x, y, rule, seed, **kw)
        return lasso(x, y, choice.lam, choice.loadings), choice.lam
    return lasso(x, y, lam), float(lam)


def _post_ols(x, y, fit: LassoFit):
    """Least-squares refit on the Lasso support: (intercept, full coefficient vector, residual)."""
    support = list(fit.active)
    design = np.column_stack([np.ones(len(y)), x[:, support]])
    refit = ols(design, y)
    coef = np.zeros(x.shape[1])
    coef[support] = refit.coef[1:]
    return float(refit.coef[0]), coef, refit.resid


def _nuisance(x, y, rule, seed, lam, refit, penalty=None):
    fit, used = _fit_stage(x, y, rule, seed, lam, penalty)
    if refit:
        b0, coef, resid = _post_ols(x, y, fit)
    else:
        b0, coef, resid = fit.intercept, fit.coef, fit.resid
    return fit, used, b0, coef, resid


def _report(alpha, dt, eps, level, method, n, selected, fits, lambdas, residuals=None, **diag):
    m2 = np.mean(dt**2)
    V = float(np.mean(dt**2 * eps**2) / m2**2)
    se = math.sqrt(V / n)
    return DmlReport(float(alpha), V, se, wald_ci(float(alpha), se, level), level, method, n,
                     selected, fits, lambdas, diag, residuals or {})


def _check_identified(dt, d, what):
    if np.mean(dt**2) <= 1e-12 * max(np.var(d), 1e-300):
        raise NoIdentificationError(f"{what}: treatment is explained by the controls")


def partial_out(ds: Dataset, rule: str = "plugin", level: float = 0.95, seed: int = 0,
                lam: Optional[float] = None, refit: bool = True,
        penalty: Optional[PenaltyConfig] = None) -> DmlReport:
    """Partialling-out Double Lasso.

    Residualize Y and D on W, regress residual on residual, and use the
    sandwich (mean Dc^2)^-2 mean(Dc^2 e^2) with e = Yc - alpha*Dc.  With
    ``refit`` (default) each residual comes from least squares on the
    controls its Lasso selected; ``refit=False`` uses the raw Lasso
    residuals, whose shrinkage biases alpha when n is small.  A fixed
    ``lam`` overrides the rule for both stages; a ``penalty`` config
    replaces ``rule`` and carries the selector's tuning constants.
    """
    y, d, w = _roles(ds)
    rule = penalty.rule if penalty is not None else rule
    fy, ly, _, _, yc = _nuisance(w, y, rule, seed, lam, refit, penalty)
    fd, ld, _, _, dc = _nuisance(w, d, rule, seed, lam, refit, penalty)
    _check_identified(dc, d, "partialling out")
    alpha = (dc @ yc) / (dc @ dc)
    return _report(alpha, dc, yc - alpha * dc, level, "partialling_out", ds.n,
                   {"y": list(fy.active), "d": list(fd.active)}, {"y": fy, "d": fd},
                   {"y": ly, "d": ld}, {"y": yc, "d": dc}, refit=refit)


def double_selection(ds: Dataset, rule: str = "plugin", level: float = 0.95, seed: int = 0,
                     lam: Optional[float] = None, max_tighten: int = 10,
        penalty: Optional[PenaltyConfig] = None) -> DmlReport:
    """Lasso Y~(D,W) and D~W, then OLS of Y on D and the union of selected controls."""
    y, d, w = _roles(ds)
    rule = penalty.rule if penalty is not None else rule
    n, p = w.shape
    dw = np.column_stack([d, w])
    fy, ly = _fit_stage(dw, y, rule, seed, lam, penalty)
    fd, ld = _fit_stage(w, d, rule, seed, lam, penalty)
    tightened = 0
    while True:
        sel_y = sorted(j - 1 for j in fy.active if j > 0)
        union = sorted(set(sel_y) | set(fd.active))
        if len(union) < n - 2:
            break
        if tightened >= max_tighten:
            raise EstimationError(f"{len(union)} selected controls leave no residual degrees of freedom")
        tightened += 1
        ly, ld = ly * 1.5, ld * 1.5
        fy, fd = lasso(dw, y, ly), lasso(w, d, ld)
    design = np.column_stack([np.ones(n), d, w[:, union]])
    fit = ols(design, y)
    alpha = fit.coef[1]
    # Frisch-Waugh residual of D on the selected controls gives the sandwich weights
    aux = np.column_stack([np.ones(n), w[:, union]])
    dt = ols(aux, d).resid
    _check_identified(dt, d, "double selection")
    return _report(alpha, dt, fit.resid, level, "double_selection", n,
                   {"y": sel_y, "d": list(fd.active), "union": union}, {"y": fy, "d": fd},
                   {"y": ly, "d": ld}, tightened=tightened)


def single_selection(ds: Dataset, rule: str = "plugin", level: float = 0.95, seed: int = 0,
                     lam: Optional[float] = None,
        penalty: Optional[PenaltyConfig] = None) -> DmlReport:
    """Naive post-selection OLS that screens controls on the outcome equation only."""
    y, d, w = _roles(ds)
    rule = penalty.rule if penalty is not None else rule
    n = ds.n
    dw = np.column_stack([d, w])
    fy, ly = _fit_stage(dw, y, rule, seed, lam, penalty)
    sel = sorted(j - 1 for j in fy.active if j > 0)
    design = np.column_stack([np.ones(n), d, w[:, sel]])
    fit = ols(design, y)
    dt = ols(np.column_stack([np.ones(n), w[:, sel]]), d).resid
    beta = np.zeros(w.shape[1])
    beta[sel] = fit.coef[2:]
    return _report(fit.coef[1], dt, fit.resid, level, "single_selection", n, {"y": sel},
                   {"y": fy}, {"y": ly}, intercept=float(fit.coef[0]), beta=beta.tolist())


def debiased_lasso(ds: Dataset, rule: str = "plugin", level: float = 0.95, seed: int = 0,
                   lam: Optional[float] = None, refit: bool = True,
        penalty: Optional[PenaltyConfig] = None) -> DmlReport:
    """Four-step debiased Lasso.

    beta from Lasso Y~(D,W); gamma from Lasso D~W; Dt = D - gamma'W;
    alpha = mean((Y - beta'W) Dt) / mean(D Dt).  Variance uses the same
    sandwich as partialling out with e = Y - alpha D - beta'W.  ``refit``
    has the same meaning as in :func:`partial_out`.
    """
    y, d, w = _roles(ds)
    rule = penalty.rule if penalty is not None else rule
    dw = np.column_stack([d, w])
    fd, ld, _, _, dt = _nuisance(w, d, rule, seed, lam, refit, penalty)
    _check_identified(dt, d, "debiased lasso")
    fy, ly, by0, by, _ = _nuisance(dw, y, rule, seed, lam, refit, penalty)
    denom = np.mean(d * dt)
    if abs(denom) <= 1e-12 * max(np.var(d), 1e-300):
        raise NoIdentificationError("mean(D * Dt) is zero")
    y_w = y - by0 - w @ by[1:]
    alpha = np.mean(y_w * dt) / denom
    eps = y_w - alpha * d
    return _report(alpha, dt, eps, level, "debiased", ds.n,
                   {"y": sorted(j - 1 for j in fy.active if j > 0), "d": list(fd.active)},
                   {"y": fy, "d": fd}, {"y": ly, "d": ld}, {"d": dt},
                   first_stage_d_coef=float(by[0]), refit=refit)


def ols_all_controls(ds: Dataset, level: float = 0.95) -> dict:
    """OLS of Y on D and every control with HC1 standard errors (comparator)."""
    y, d, w = _roles(ds)
    design = np.column_stack([np.ones(ds.n), d, w])
    fit = ols(design, y)
    se = math.sqrt(fit.robust_cov(design, "HC1")[1, 1])
    return {"method": "ols_all_controls", "estimate": float(fit.coef[1]), "se": se,
            "ci": list(wald_ci(float(fit.coef[1]), se, level)), "level": level, "n": ds.n}


# ---------------------------------------------------------------------------
# orthogonality probe


@dataclass(frozen=True)
class OrthoResult:
    t: tuple
    moment: tuple
    slope: float
    method: str
    direction: tuple
    moment_at_zero: float
    signed: tuple = ()

    def to_dict(self) -> dict:
        return {
            "method": "orthogonality_check",
            "estimator": self.method,
            "rows": [{"t": t, "abs_moment": m} for t, m in zip(self.t, self.moment)],
            "slope": self.slope,
            "moment_at_zero": self.moment_at_zero,
            "direction": list(self.direction),
        }


def loglog_slope(t, m) -> float:
    lt, lm = np.log(np.asarray(t, float)), np.log(np.asarray(m, float))
    return float(np.polyfit(lt, lm, 1)[0])


def probe_direction(p: int, seed: int, blocks: int = 2) -> np.ndarray:
    """Unit vector in R^(blocks*p) drawn from a seeded generator."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    v = rng.standard_normal(blocks * p)
    return v / np.linalg.norm(v)


# Step sizes along a unit-norm direction in standardized-control space.  The
# empirical moment is exactly quadratic in t; below t ~ 0.1 its first-order
# term, which is sampling noise of order n^-1/2, swamps the curvature.
DEFAULT_T_GRID = (0.1, 0.2, 0.5, 1.0, 2.0)


def orthogonality_check(ds: Dataset, report: DmlReport, t_grid=DEFAULT_T_GRID,
                        direction_seed: int = 0) -> OrthoResult:
    """Empirical moment at alpha_hat after moving the nuisance fit by t*delta.

    For partialling out the moment is mean((Yt - a Dt) Dt) with
    Yt = Y - eta1'W, Dt = D - eta2'W and delta perturbs (eta1, eta2).  For
    single selection it is mean((Y - a D - beta'W) D) with delta on beta.
    Perturbations act on standardized, centered controls so the step size
    is unit-free.  The slope is the least-squares fit of log|M| on log t.
    """
    y, d, w = _roles(ds)
    n, p = w.shape
    sd = w.std(axis=0)
    sd[sd == 0] = 1.0
    z = (w - w.mean(axis=0)) / sd
    delta = probe_direction(p, direction_seed)
    a = report.alpha
    if report.method == "partialling_out":
        yt0, dt0 = report.residuals["y"], report.residuals["d"]
        u1, u2 = z @ delta[:p], z @ delta[p:]

        def moment(t):
            yt = yt0 - t * u1
            dt = dt0 - t * u2
            return np.mean((yt - a * dt) * dt)
    elif report.method == "single_selection":
        resid0 = y - report.diagnostics["intercept"] - a * d - w @ np.array(report.diagnostics["beta"])
        u = z @ (delta[:p] / np.linalg.norm(delta[:p]))

        def moment(t):
            return np.mean((resid0 - t * u) * d)
    else:
        raise ValueError(f"no orthogonality probe for method {report.method!r}")
    ts = tuple(float(t) for t in t_grid)
    if any(t <= 0 for t in ts) or len(ts) < 2:
        raise ValueError("t_grid needs at least two positive step sizes")
    signed = tuple(float(moment(t)) for t in ts)
    values = tuple(abs(v) for v in signed)
    return OrthoResult(ts, values, loglog_slope(ts, values), report.method,
                       tuple(delta.tolist()), abs(float(moment(0.0))), signed)


def pooled_slope(results: Sequence[OrthoResult]) -> float:
    """Slope of |average signed moment| across replicates sharing one direction and grid.

    Averaging over independent samples approximates the expectation that
    defines the population moment, so mean-zero first-order noise cancels.
    """
    t = results[0].t
    if any(r.t != t for r in results):
        raise ValueError("results must share the same t grid")
    return loglog_slope(t, np.abs(np.mean([r.signed for r in results], axis=0)))


ESTIMATORS = {
    "dml-po": partial_out,
    "dml-ds": double_selection,
    "dml-db": debiased_lasso,
}
