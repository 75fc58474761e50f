"""Acyclic structural equation models: simulation, interventions, counterfactuals.

Noise streams
-------------
Every node ``j`` owns an independent random stream
``PCG64(SeedSequence(seed, spawn_key=(noise_index[j],)))`` and row ``i``
takes the ``i``-th draw of that stream.  Streams are derived, not chained,
so a node's noise does not depend on which other nodes exist or in what
order they are evaluated; intervened and split models reuse the indices of
the original model and therefore see exactly the same noise realisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .dag import Dag, make_swig
from .data import Dataset
from .errors import ModelError

# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class Noise:
    kind: str
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ModelError("noise parameters must be finite")
        if self.kind == "normal":
            if b < 0:
                raise ModelError(f"normal sd must be >= 0, got {b}")
        elif self.kind == "bernoulli":
            if not 0 <= a <= 1:
                raise ModelError(f"bernoulli p must lie in [0, 1], got {a}")
        elif self.kind == "uniform":
            if not a < b:
                raise ModelError(f"uniform needs a < b, got ({a}, {b})")
        else:
            raise ModelError(f"unknown noise kind {self.kind!r}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return self.a + self.b * rng.standard_normal(n)
        if self.kind == "bernoulli":
            return (rng.random(n) < self.a).astype(float)
        return self.a + (self.b - self.a) * rng.random(n)

    def describe(self) -> str:
        if self.kind == "bernoulli":
            return f"bernoulli({self.a!r})"
        return f"{self.kind}({self.a!r}, {self.b!r})"


def normal(mean=0.0, sd=1.0) -> Noise:
    return Noise("normal", mean, sd)


def bernoulli(p) -> Noise:
    return Noise("bernoulli", p)


def uniform(a=0.0, b=1.0) -> Noise:
    return Noise("uniform", a, b)


NO_NOISE = normal(0.0, 0.0)


# ---------------------------------------------------------------------------
# equations


@dataclass(frozen=True)
class Equation:
    """Registered equation forms, all additive in the node's own noise ``e``.

    linear     ``b0 + sum_k b_k x_k + e``
    threshold  ``1{b0 + sum_k b_k x_k + e > 0}``
    product    ``b0 + sum_k b_k x_k + c * prod_f x_f + e``
    constant   ``v`` (noise ignored; produced by interventions)
    """

    kind: str
    intercept: float = 0.0
    coefs: tuple = ()
    factors: tuple = ()
    factor_coef: float = 0.0

    @property
    def parents(self) -> frozenset:
        return frozenset(p for p, _ in self.coefs) | frozenset(self.factors)

    def coef(self, parent) -> float:
        return dict(self.coefs).get(parent, 0.0)

    def __call__(self, values: Mapping[str, np.ndarray], noise: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(noise.shape[0], self.intercept)
        out = self.intercept + noise
        for parent, c in self.coefs:
            out = out + c * values[parent]
        if self.kind == "product":
            prod = np.ones_like(noise)
            for f in self.factors:
                prod = prod * values[f]
            out = out + self.factor_coef * prod
        if self.kind == "threshold":
            return (out > 0).astype(float)
        return out

    def renamed(self, mapping: Mapping[str, str]) -> "Equation":
        return replace(
            self,
            coefs=tuple(sorted((mapping.get(p, p), c) for p, c in self.coefs)),
            factors=tuple(mapping.get(f, f) for f in self.factors),
        )


def _coefs(coefs):
    coefs = dict(coefs or {})
    for k, v in coefs.items():
        if not math.isfinite(float(v)):
            raise ModelError(f"coefficient on {k!r} is not finite")
    return tuple(sorted((str(k), float(v)) for k, v in coefs.items()))


def linear(coefs=None, intercept=0.0) -> Equation:
    return Equation("linear", float(intercept), _coefs(coefs))


def threshold(coefs=None, intercept=0.0) -> Equation:
    return Equation("threshold", float(intercept), _coefs(coefs))


def product(factors, factor_coef=1.0, coefs=None, intercept=0.0) -> Equation:
    factors = tuple(str(f) for f in factors)
    if len(factors) < 2:
        raise ModelError("product equation needs at least two factors")
    return Equation("product", float(intercept), _coefs(coefs), factors, float(factor_coef))


def constant(value) -> Equation:
    return Equation("constant", float(value))


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class StructuralModel:
    dag: Dag
    equations: Mapping[str, Equation]
    noises: Mapping[str, Noise]
    roles: Mapping[str, object] = field(default_factory=dict)
    noise_index: Optional[Mapping[str, int]] = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        nodes = set(self.dag.nodes)
        if set(self.equations) != nodes:
            raise ModelError("equations must be keyed exactly by the DAG's nodes")
        noises = {n: self.noises.get(n, NO_NOISE) for n in self.dag.nodes}
        for node, eq in self.equations.items():
            if eq.parents != self.dag.parents(node):
                raise ModelError(
                    f"equation for {node!r} uses {sorted(eq.parents)}, "
                    f"DAG parents are {sorted(self.dag.parents(node))}"
                )
        index = self.noise_index
        if index is None:
            index = {n: i for i, n in enumerate(self.dag.nodes)}
        elif set(index) != nodes:
            raise ModelError("noise_index must cover every node")
        object.__setattr__(self, "noises", noises)
        object.__setattr__(self, "noise_index", dict(index))
        object.__setattr__(self, "equations", dict(self.equations))
        object.__setattr__(self, "roles", dict(self.roles))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def is_linear(self) -> bool:
        return all(eq.kind in ("linear", "constant") for eq in self.equations.values())

    def coefficient_matrix(self) -> np.ndarray:
        """``B[i, j]`` = coefficient of node i in node j's equation (linear models)."""
        if not self.is_linear:
            raise ModelError("model is not linear")
        pos = {n: i for i, n in enumerate(self.dag.nodes)}
        B = np.zeros((len(pos), len(pos)))
        for node, eq in self.equations.items():
            for parent, c in eq.coefs:
                B[pos[parent], pos[node]] = c
        return B

    def is_binary(self, node) -> bool:
        eq = self.equations[self.dag.check(node)]
        if eq.kind == "threshold":
            return True
        if eq.kind == "constant":
            return eq.intercept in (0.0, 1.0)
        return (
            eq.kind == "linear" and not eq.coefs and eq.intercept == 0.0
            and self.noises[node].kind == "bernoulli"
        )


def draw_noise(model: StructuralModel, n: int, seed: int) -> dict:
    n = _check_n(n)
    seed = _check_seed(seed)
    out = {}
    for node in model.dag.nodes:
        if model.equations[node].kind == "constant":
            out[node] = np.zeros(n)
            continue
        ss = np.random.SeedSequence(seed, spawn_key=(model.noise_index[node],))
        out[node] = model.noises[node].draw(np.random.Generator(np.random.PCG64(ss)), n)
    return out


def evaluate(model: StructuralModel, noise: Mapping[str, np.ndarray], fixed=None) -> dict:
    """Solve the equations in topological order; ``fixed`` pins nodes to constants."""
    fixed = fixed or {}
    n = next(iter(noise.values())).shape[0]
    values = {}
    for node in model.dag.topological_order():
        if node in fixed:
            values[node] = np.full(n, float(fixed[node]))
        else:
            values[node] = model.equations[node](values, noise[node])
    return {node: values[node] for node in model.dag.nodes}


def _dataset(model, values) -> Dataset:
    roles = model.roles
    return Dataset(values, y=roles.get("y"), d=roles.get("d"), x=tuple(roles.get("x", ())))


def simulate(model: StructuralModel, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. rows; identical (model, n, seed) gives identical data."""
    return _dataset(model, evaluate(model, draw_noise(model, n, seed)))


def intervene(model: StructuralModel, node: str, value: float) -> StructuralModel:
    """fix(node = value): constant equation, incoming edges removed."""
    model.dag.check(node)
    dag = model.dag.without_edges((p, node) for p in model.dag.parents(node))
    equations = dict(model.equations)
    equations[node] = constant(value)
    return replace(model, dag=dag, equations=equations)


def randomize(model: StructuralModel, node: str, p: float = 0.5) -> StructuralModel:
    """Replace a node's mechanism by an independent Bernoulli(p) coin."""
    model.dag.check(node)
    dag = model.dag.without_edges((q, node) for q in model.dag.parents(node))
    equations = dict(model.equations)
    equations[node] = linear()
    noises = dict(model.noises)
    noises[node] = bernoulli(p)
    return replace(model, dag=dag, equations=equations, noises=noises)


def swig_model(model: StructuralModel, node: str, value: float, label=None) -> tuple:
    """Counterfactual model on the SWIG of fix(node = value).

    Returns ``(swig, model)``; nodes carry SWIG names (``Y(d)``) and reuse
    the noise streams of their originals.
    """
    label = _label(value) if label is None else label
    swig = make_swig(model.dag, node, label)
    ren = swig.rename
    equations = {}
    noises = {}
    index = {}
    for orig in model.dag.nodes:
        eq = model.equations[orig]
        mapping = {p: (label if p == node else ren[p]) for p in eq.parents}
        equations[ren[orig]] = eq.renamed(mapping)
        noises[ren[orig]] = model.noises[orig]
        index[ren[orig]] = model.noise_index[orig]
    equations[label] = constant(value)
    noises[label] = NO_NOISE
    index[label] = -1
    roles = {}
    if model.roles.get("y"):
        roles["y"] = ren[model.roles["y"]]
    return swig, StructuralModel(swig.dag, equations, noises, roles, index, model.params)


def _label(value):
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)


@dataclass(frozen=True)
class Counterfactuals:
    """Shared-noise potential outcomes; ``observed_d`` is the factual treatment."""

    y0: np.ndarray
    y1: np.ndarray
    observed_d: np.ndarray
    seed: int

    def __len__(self):
        return self.y0.shape[0]

    @property
    def effect(self) -> np.ndarray:
        return self.y1 - self.y0

    @property
    def ate(self) -> float:
        return float(np.mean(self.effect))

    @property
    def att(self) -> Optional[float]:
        mask = self.observed_d == 1
        return float(np.mean(self.effect[mask])) if mask.any() else None

    @property
    def atc(self) -> Optional[float]:
        mask = self.observed_d == 0
        return float(np.mean(self.effect[mask])) if mask.any() else None


def counterfactual_pairs(model: StructuralModel, treatment: str, n: int, seed: int,
                         outcome: Optional[str] = None):
    """Draw noise once, then evaluate factually and with the treatment fixed at 0 and 1.

    Returns ``(Counterfactuals, Dataset)``; the factual outcome equals
    ``y1`` where D=1 and ``y0`` where D=0, bit for bit.
    """
    model.dag.check(treatment)
    outcome = outcome or model.roles.get("y")
    if outcome is None:
        raise ModelError("no outcome given and model has no outcome role")
    model.dag.check(outcome)
    if not model.is_binary(treatment):
        raise ModelError(f"treatment {treatment!r} is not generated by a binary equation")
    noise = draw_noise(model, n, seed)
    factual = evaluate(model, noise)
    y0 = evaluate(model, noise, {treatment: 0.0})[outcome]
    y1 = evaluate(model, noise, {treatment: 1.0})[outcome]
    cf = Counterfactuals(y0, y1, factual[treatment].copy(), seed)
    return cf, _dataset(model, factual)


def oracle_effects(model: StructuralModel, treatment: str, n: int, seed: int,
                   outcome: Optional[str] = None) -> dict:
    """Sample-level oracle ATE/ATT/ATC from shared-noise counterfactuals.

    For a non-binary treatment only the unit contrast E[Y(1) - Y(0)] is
    reported (ATT and ATC are undefined).
    """
    outcome = outcome or model.roles.get("y")
    if model.is_binary(treatment):
        cf, _ = counterfactual_pairs(model, treatment, n, seed, outcome)
        return {"oracle_ate": cf.ate, "oracle_att": cf.att, "oracle_atc": cf.atc}
    noise = draw_noise(model, n, seed)
    y0 = evaluate(model, noise, {treatment: 0.0})[outcome]
    y1 = evaluate(model, noise, {treatment: 1.0})[outcome]
    return {"oracle_ate": float(np.mean(y1 - y0)), "oracle_att": None, "oracle_atc": None}


def _check_n(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ModelError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _check_seed(seed):
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise ModelError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


# ---------------------------------------------------------------------------
# preset scenarios


def smoking_bias(rho=-0.5, eta1=0.0, mean=0.0, randomized=False, p_treat=0.5) -> StructuralModel:
    """Selection on an unobserved endowment.

    ``eta0 ~ N(mean, 1)`` is the baseline outcome, ``nu`` the latent
    propensity with corr(eta0, nu) = ``rho``, ``D = 1{nu > 0}`` and
    ``Y = eta0 + eta1 * D``.  ``randomized=True`` swaps the selection rule
    for a Bernoulli(``p_treat``) coin.
    """
    rho, eta1, mean = float(rho), float(eta1), float(mean)
    if not -1 < rho < 1:
        raise ModelError("rho must lie strictly between -1 and 1")
    dag = Dag(["eta0", "nu", "D", "Y"], [("eta0", "nu"), ("nu", "D"), ("eta0", "Y"), ("D", "Y")])
    model = StructuralModel(
        dag,
        {
            "eta0": linear(intercept=mean),
            "nu": linear({"eta0": rho}, intercept=-rho * mean),
            "D": threshold({"nu": 1.0}),
            "Y": linear({"eta0": 1.0, "D": eta1}),
        },
        {"eta0": normal(0, 1), "nu": normal(0, math.sqrt(1 - rho**2))},
        roles={"y": "Y", "d": "D", "x": ()},
        params={"rho": rho, "eta1": eta1, "mean": mean, "randomized": bool(randomized),
                "p_treat": float(p_treat)},
    )
    if randomized:
        model = randomize(model, "D", p_treat)
    return model


def heart_transplant(q=0.6, p_treat_critical=0.75, p_treat_stable=0.5,
                     risk_critical=2 / 3, risk_stable=1 / 4, effect=0.0) -> StructuralModel:
    """Stratified assignment: L critical, A transplant, Y death.

    With the defaults the expected counts in a 20-patient trial are 12
    critical (9 treated) and 8 stable (4 treated), i.e. 13 treated with
    7 deaths and 7 untreated with 3 deaths; within strata the risk does
    not depend on A unless ``effect`` is non-zero.
    """
    vals = dict(q=q, p_treat_critical=p_treat_critical, p_treat_stable=p_treat_stable,
                risk_critical=risk_critical, risk_stable=risk_stable, effect=effect)
    vals = {k: float(v) for k, v in vals.items()}
    for k in ("q", "p_treat_critical", "p_treat_stable", "risk_critical", "risk_stable"):
        if not 0 <= vals[k] <= 1:
            raise ModelError(f"{k} must lie in [0, 1]")
    for risk in (vals["risk_critical"], vals["risk_stable"]):
        if not 0 <= risk + vals["effect"] <= 1:
            raise ModelError("risk + effect must stay within [0, 1]")
    coin = uniform(-1.0, 0.0)  # 1{p + e > 0} is Bernoulli(p) for p in [0, 1]
    dag = Dag(["L", "A", "Y"], [("L", "A"), ("L", "Y"), ("A", "Y")])
    return StructuralModel(
        dag,
        {
            "L": linear(),
            "A": threshold({"L": vals["p_treat_critical"] - vals["p_treat_stable"]},
                           vals["p_treat_stable"]),
            "Y": threshold({"L": vals["risk_critical"] - vals["risk_stable"], "A": vals["effect"]},
                           vals["risk_stable"]),
        },
        {"L": bernoulli(vals["q"]), "A": coin, "Y": coin},
        roles={"y": "Y", "d": "A", "x": ("L",)},
        params=vals,
    )


def growth_highdim(n=90, p=60, s=5, alpha=-0.045, rho=0.5, gamma=0.3, beta=0.03,
                   sigma_d=0.3, sigma_y=0.05) -> StructuralModel:
    """Partially linear model ``Y = alpha*D + beta'W + eps`` with s-sparse controls.

    Controls ``W1..Wp`` form a stationary AR(1) chain with unit variance and
    lag-one correlation ``rho``; the first ``s`` controls drive both ``D``
    (coefficient ``gamma``) and ``Y`` (coefficient ``beta``).  ``n`` is the
    default sample size.
    """
    n, p, s = int(n), int(p), int(s)
    if p < 1 or not 0 <= s <= p or n < 1:
        raise ModelError("need p >= 1, 0 <= s <= p and n >= 1")
    if not -1 < float(rho) < 1:
        raise ModelError("rho must lie strictly between -1 and 1")
    if sigma_d <= 0 or sigma_y <= 0:
        raise ModelError("noise scales must be positive")
    w = [f"W{j + 1}" for j in range(p)]
    edges = [(w[j - 1], w[j]) for j in range(1, p)]
    edges += [(w[j], "D") for j in range(s)] + [(w[j], "Y") for j in range(s)] + [("D", "Y")]
    innov = math.sqrt(1 - rho**2)
    equations = {w[0]: linear()}
    noises = {w[0]: normal(0, 1)}
    for j in range(1, p):
        equations[w[j]] = linear({w[j - 1]: rho})
        noises[w[j]] = normal(0, innov)
    equations["D"] = linear({w[j]: gamma for j in range(s)})
    equations["Y"] = linear({**{w[j]: beta for j in range(s)}, "D": alpha})
    noises["D"] = normal(0, sigma_d)
    noises["Y"] = normal(0, sigma_y)
    return StructuralModel(
        Dag(w + ["D", "Y"], edges),
        equations,
        noises,
        roles={"y": "Y", "d": "D", "x": tuple(w)},
        params=dict(n=n, p=p, s=s, alpha=float(alpha), rho=float(rho), gamma=float(gamma),
                    beta=float(beta), sigma_d=float(sigma_d), sigma_y=float(sigma_y)),
    )


SCENARIOS = {
    "smoking_bias": smoking_bias,
    "heart_transplant": heart_transplant,
    "growth_highdim": growth_highdim,
}


def scenario(name: str, **params) -> StructuralModel:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ModelError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {name}: {exc}") from None
