"""Shared generators for the test-suite: random DAGs, linear SEMs, a moral-graph oracle."""

import itertools
import string

import numpy as np
from hypothesis import strategies as st

from causal_kit.dag import Dag
from causal_kit.sem import StructuralModel, linear, normal

NAMES = list(string.ascii_uppercase[:8])


def random_dag(rng, n_nodes, edge_prob=0.4):
    """Edges only go forward in a random permutation, so the graph is acyclic."""
    names = [NAMES[i] for i in rng.permutation(n_nodes)]
    edges = [(names[i], names[j]) for i in range(n_nodes) for j in range(i + 1, n_nodes)
             if rng.random() < edge_prob]
    return Dag(sorted(names), edges)


@st.composite
def dags(draw, min_nodes=1, max_nodes=6):
    n = draw(st.integers(min_nodes, max_nodes))
    order = draw(st.permutations(NAMES[:n]))
    pairs = [(order[i], order[j]) for i in range(n) for j in range(i + 1, n)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Dag(sorted(order), [e for e, k in zip(pairs, keep) if k])


def linear_gaussian(dag, rng):
    coefs = {}
    for node in dag.nodes:
        coefs[node] = {p: float(rng.choice([-1, 1]) * rng.uniform(0.5, 1.0))
                       for p in sorted(dag.parents(node))}
    return StructuralModel(dag, {n: linear(coefs[n]) for n in dag.nodes},
                           {n: normal(0, 1) for n in dag.nodes})


def moral_dsep(dag, x, y, s):
    """Lauritzen's criterion: separation in the moralized ancestral graph."""
    s = set(s)
    keep = dag.ancestors_of_set({x, y} | s)
    adj = {n: set() for n in keep}
    for a, b in dag.edges:
        if a in keep and b in keep:
            adj[a].add(b)
            adj[b].add(a)
    for node in keep:
        for p, q in itertools.combinations(sorted(dag.parents(node)), 2):
            adj[p].add(q)
            adj[q].add(p)
    seen, stack = {x}, [x]
    while stack:
        node = stack.pop()
        for nb in adj[node]:
            if nb in s or nb in seen:
                continue
            if nb == y:
                return False
            seen.add(nb)
            stack.append(nb)
    return True


def subsets(items):
    items = list(items)
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def partial_corr(data, i, j, given):
    idx = [i, j, *given]
    prec = np.linalg.inv(np.cov(data[:, idx], rowvar=False))
    return -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])
