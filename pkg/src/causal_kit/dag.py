"""Directed acyclic graphs and graphical identification queries.

Conventions: ``ancestors`` of a node include the node itself, ``descendants``
exclude it.  Every query that returns a collection orders it
lexicographically by node name so that output is reproducible.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import CycleError, DagError, DagParseError, PathLimitError, UnknownNodeError

DEFAULT_PATH_NODE_LIMIT = 12

_KINDS = ("parents", "children", "ancestors", "descendants")


@dataclass(frozen=True, eq=False)
class Dag:
    """Immutable DAG over named nodes.

    ``nodes`` keeps declaration order (used for simulation substreams);
    equality and hashing only look at the node and edge *sets*.
    """

    nodes: tuple
    edges: frozenset
    _parents: dict = field(init=False, repr=False)
    _children: dict = field(init=False, repr=False)
    _order: tuple = field(init=False, repr=False)

    def __init__(self, nodes: Iterable[str] = (), edges: Iterable[tuple] = ()):
        nodes = tuple(nodes)
        edges = tuple((str(a), str(b)) for a, b in edges)
        if len(set(nodes)) != len(nodes):
            dup = sorted({n for n in nodes if nodes.count(n) > 1})
            raise DagError(f"duplicate node declaration(s): {', '.join(dup)}")
        declared = set(nodes)
        for a, b in edges:
            for end in (a, b):
                if end not in declared:
                    raise UnknownNodeError(end)
            if a == b:
                raise DagError(f"self-loop on {a!r}")
        if len(set(edges)) != len(edges):
            raise DagError("duplicate edge")
        parents = {n: set() for n in nodes}
        children = {n: set() for n in nodes}
        for a, b in edges:
            parents[b].add(a)
            children[a].add(b)
        order = _kahn(parents, children)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(edges))
        object.__setattr__(self, "_parents", {n: frozenset(p) for n, p in parents.items()})
        object.__setattr__(self, "_children", {n: frozenset(c) for n, c in children.items()})
        object.__setattr__(self, "_order", order)

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return set(self.nodes) == set(other.nodes) and self.edges == other.edges

    def __hash__(self):
        return hash((frozenset(self.nodes), self.edges))

    def __contains__(self, node):
        return node in self._parents

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        edges = ", ".join(f"{a}->{b}" for a, b in sorted(self.edges))
        return f"Dag(nodes={sorted(self.nodes)}, edges=[{edges}])"

    def check(self, node):
        if node not in self._parents:
            raise UnknownNodeError(node)
        return node

    def parents(self, node) -> frozenset:
        return self._parents[self.check(node)]

    def children(self, node) -> frozenset:
        return self._children[self.check(node)]

    def neighbors(self, node) -> frozenset:
        return self.parents(node) | self.children(node)

    def has_edge(self, a, b) -> bool:
        return (a, b) in self.edges

    def topological_order(self) -> tuple:
        """Topological order, ties broken lexicographically."""
        return self._order

    def ancestors(self, node) -> frozenset:
        return _closure(self._parents, [self.check(node)])

    def descendants(self, node) -> frozenset:
        return _closure(self._children, [self.check(node)]) - {node}

    def ancestors_of_set(self, nodes) -> frozenset:
        return _closure(self._parents, [self.check(n) for n in nodes])

    def without_edges(self, edges) -> "Dag":
        drop = set(edges)
        return Dag(self.nodes, [e for e in sorted(self.edges) if e not in drop])


def _kahn(parents, children):
    indegree = {n: len(p) for n, p in parents.items()}
    heap = [n for n, k in indegree.items() if k == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        node = heapq.heappop(heap)
        order.append(node)
        for c in children[node]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(heap, c)
    if len(order) < len(parents):
        raise CycleError(_find_cycle({n for n, k in indegree.items() if k > 0}, parents))
    return tuple(order)


def _find_cycle(remaining, parents):
    # each leftover node keeps a leftover parent, so a backward walk must loop
    node = min(remaining)
    trail = []
    index = {}
    while node not in index:
        index[node] = len(trail)
        trail.append(node)
        node = min(p for p in parents[node] if p in remaining)
    cycle = trail[index[node]:] + [node]
    return cycle[::-1]


def _closure(adjacency, start):
    seen = set(start)
    stack = list(start)
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return frozenset(seen)


def relatives(dag: Dag, node: str, kind: str) -> frozenset:
    """Parents, children, ancestors (self included) or descendants (self excluded)."""
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    return getattr(dag, kind)(node)


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Path:
    """Simple path; ``forward[i]`` is True when the edge is nodes[i] -> nodes[i+1]."""

    nodes: tuple
    forward: tuple

    def __post_init__(self):
        if len(self.forward) != len(self.nodes) - 1:
            raise ValueError("need exactly one direction flag per step")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("path revisits a node")

    def __len__(self):
        return len(self.nodes)

    def __str__(self):
        out = [self.nodes[0]]
        for fwd, node in zip(self.forward, self.nodes[1:]):
            out.append(" -> " if fwd else " <- ")
            out.append(node)
        return "".join(out)

    @classmethod
    def parse(cls, text: str) -> "Path":
        """Inverse of ``str``: ``"D <- X2 -> Y"``."""
        tokens = text.split()
        if len(tokens) % 2 == 0:
            raise ValueError(f"malformed path {text!r}")
        arrows = tokens[1::2]
        if any(a not in ("->", "<-") for a in arrows):
            raise ValueError(f"malformed path {text!r}")
        return cls(tuple(tokens[0::2]), tuple(a == "->" for a in arrows))

    def colliders(self) -> list:
        return [
            self.nodes[i]
            for i in range(1, len(self.nodes) - 1)
            if self.forward[i - 1] and not self.forward[i]
        ]

    def validate(self, dag: Dag) -> None:
        for i, fwd in enumerate(self.forward):
            a, b = self.nodes[i], self.nodes[i + 1]
            if not (dag.has_edge(a, b) if fwd else dag.has_edge(b, a)):
                arrow = "->" if fwd else "<-"
                raise DagError(f"path step {a} {arrow} {b} is not an edge of the DAG")


def enumerate_paths(dag: Dag, a: str, b: str, max_nodes: int = DEFAULT_PATH_NODE_LIMIT) -> list:
    """All simple non-directed paths between ``a`` and ``b``, in lexicographic order.

    Exponential in the worst case, so DAGs with more than ``max_nodes`` nodes
    are refused; use :func:`d_separated` for large graphs.
    """
    dag.check(a)
    dag.check(b)
    if a == b:
        raise ValueError("path endpoints must differ")
    if max_nodes is not None and len(dag) > max_nodes:
        raise PathLimitError(
            f"path enumeration limited to {max_nodes} nodes, DAG has {len(dag)}"
        )
    adjacency = {n: sorted(dag.neighbors(n)) for n in dag.nodes}
    found = []
    stack = [a]
    on_path = {a}

    def extend(node):
        for nxt in adjacency[node]:
            if nxt in on_path:
                continue
            stack.append(nxt)
            if nxt == b:
                found.append(tuple(stack))
            else:
                on_path.add(nxt)
                extend(nxt)
                on_path.discard(nxt)
            stack.pop()

    extend(a)
    found.sort()
    return [
        Path(seq, tuple(dag.has_edge(seq[i], seq[i + 1]) for i in range(len(seq) - 1)))
        for seq in found
    ]


def path_blocked(dag: Dag, path: Path, s: Iterable[str] = ()) -> bool:
    s = frozenset(s)
    for node in s:
        dag.check(node)
    for i in range(1, len(path.nodes) - 1):
        middle = path.nodes[i]
        if path.forward[i - 1] and not path.forward[i]:
            if middle not in s and not (dag.descendants(middle) & s):
                return True
        elif middle in s:
            return True
    return False


def d_separated(dag: Dag, x: str, y: str, s: Iterable[str] = ()) -> bool:
    """True iff ``s`` blocks every path between ``x`` and ``y``.

    Uses the linear-time reachability ("Bayes ball") traversal over
    (node, direction) states; no path enumeration is involved.
    """
    s = frozenset(s)
    dag.check(x)
    dag.check(y)
    for node in s:
        dag.check(node)
    if x == y:
        raise ValueError("x and y must differ")
    if x in s or y in s:
        raise ValueError("conditioning set must not contain x or y")
    return y not in _reachable(dag, x, s)


def _reachable(dag: Dag, x: str, s: frozenset) -> set:
    # nodes whose descendants intersect s: colliders there are open
    opens_collider = dag.ancestors_of_set(s) if s else frozenset()
    up, down = True, False
    todo = [(x, up)]
    visited = set()
    reached = set()
    while todo:
        node, direction = todo.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in s:
            reached.add(node)
        if direction is up and node not in s:
            todo.extend((p, up) for p in dag.parents(node))
            todo.extend((c, down) for c in dag.children(node))
        elif direction is down:
            if node not in s:
                todo.extend((c, down) for c in dag.children(node))
            if node in opens_collider:
                todo.extend((p, up) for p in dag.parents(node))
    return reached


def d_separated_by_paths(dag: Dag, x: str, y: str, s: Iterable[str] = (), **kw) -> bool:
    """Reference implementation: enumerate every path and test each for blocking."""
    s = frozenset(s)
    if x in s or y in s:
        raise ValueError("conditioning set must not contain x or y")
    return all(path_blocked(dag, p, s) for p in enumerate_paths(dag, x, y, **kw))


# ---------------------------------------------------------------------------
# backdoor adjustment


def backdoor_paths(dag: Dag, d: str, y: str, **kw) -> list:
    return [p for p in enumerate_paths(dag, d, y, **kw) if not p.forward[0]]


@dataclass(frozen=True)
class BackdoorCheck:
    valid: bool
    reason: Optional[str] = None  # "descendant_of_treatment" | "open_backdoor_path"
    offending: tuple = ()
    witness: Optional[Path] = None

    def __bool__(self):
        return self.valid

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "reason": self.reason,
            "offending": list(self.offending),
            "witness": None if self.witness is None else str(self.witness),
        }


def is_valid_backdoor_set(dag: Dag, d: str, y: str, s: Iterable[str]) -> BackdoorCheck:
    """Check both conditions of the backdoor criterion for adjustment set ``s``.

    On failure the check carries a witness: a directed path from ``d`` to the
    offending descendant, or an open backdoor path.
    """
    s = frozenset(s)
    if d in s or y in s:
        raise ValueError("adjustment set must not contain the treatment or outcome")
    bad = sorted(dag.descendants(d) & s)
    if bad:
        return BackdoorCheck(False, "descendant_of_treatment", tuple(bad), _directed_path(dag, d, bad[0]))
    if _backdoor_blocked(dag, d, y, s):
        return BackdoorCheck(True)
    witness = None
    try:
        witness = next(p for p in backdoor_paths(dag, d, y) if not path_blocked(dag, p, s))
    except PathLimitError:
        pass
    return BackdoorCheck(False, "open_backdoor_path", (), witness)


def _backdoor_blocked(dag: Dag, d: str, y: str, s: frozenset) -> bool:
    # with no descendant of d in s, backdoor paths are exactly the d-y paths
    # that survive deleting d's outgoing edges
    pruned = dag.without_edges((d, c) for c in dag.children(d))
    return d_separated(pruned, d, y, s)


def _directed_path(dag: Dag, a: str, b: str) -> Path:
    prev = {a: None}
    queue = [a]
    while queue:
        node = queue.pop(0)
        if node == b:
            break
        for c in sorted(dag.children(node)):
            if c not in prev:
                prev[c] = node
                queue.append(c)
    seq = [b]
    while prev[seq[-1]] is not None:
        seq.append(prev[seq[-1]])
    seq.reverse()
    return Path(tuple(seq), (True,) * (len(seq) - 1))


def minimal_backdoor_sets(dag: Dag, d: str, y: str, max_size: Optional[int] = None) -> list:
    """Inclusion-minimal valid adjustment sets of size <= ``max_size``.

    Candidates are non-descendants of ``d`` other than ``d`` and ``y``;
    subsets are scanned by increasing size so a set is minimal exactly when
    it contains no previously found minimal set.
    """
    dag.check(d)
    dag.check(y)
    if d == y:
        raise ValueError("treatment and outcome must differ")
    candidates = sorted(set(dag.nodes) - dag.descendants(d) - {d, y})
    if max_size is None:
        max_size = len(candidates)
    if max_size < 0:
        raise ValueError("max_size must be >= 0")
    found = []
    for size in range(min(max_size, len(candidates)) + 1):
        for combo in itertools.combinations(candidates, size):
            s = frozenset(combo)
            if any(m <= s for m in found):
                continue
            if _backdoor_blocked(dag, d, y, s):
                found.append(s)
    return sorted(found, key=lambda m: (len(m), sorted(m)))


# ---------------------------------------------------------------------------
# single-world intervention graphs


@dataclass(frozen=True)
class Swig:
    """Result of splitting ``split_node`` under fix(split_node = label).

    The natural half keeps the original name and only the incoming edges;
    the intervention node is named by the label and only has the outgoing
    edges.  Descendants of the split node are renamed ``name(label)``.
    """

    base: Dag
    split_node: str
    natural_node: str
    intervention_node: str
    fixed_label: str
    dag: Dag
    rename: dict

    def node(self, original: str) -> str:
        """Name in the SWIG of an original node (natural half for the split node)."""
        return self.rename[self.base.check(original)]


def make_swig(dag: Dag, node: str, label: str) -> Swig:
    dag.check(node)
    label = str(label)
    if not label or any(ch.isspace() for ch in label):
        raise ValueError("label must be a non-empty token without whitespace")
    desc = dag.descendants(node)
    rename = {n: (f"{n}({label})" if n in desc else n) for n in dag.nodes}
    new_names = set(rename.values())
    if label in new_names:
        raise DagError(f"intervention label {label!r} collides with an existing node name")
    edges = []
    for a, b in dag.edges:
        if a == node:
            edges.append((label, rename[b]))
        else:
            edges.append((rename[a], rename[b]))
    nodes = [rename[n] for n in dag.nodes] + [label]
    return Swig(
        base=dag,
        split_node=node,
        natural_node=node,
        intervention_node=label,
        fixed_label=label,
        dag=Dag(nodes, sorted(edges)),
        rename=rename,
    )


# ---------------------------------------------------------------------------
# text format


def parse_dag(text: str) -> Dag:
    """Parse the line-oriented format: ``node A``, ``A -> B``, ``#`` comments."""
    nodes = []
    seen = set()
    edges = []

    def declare(name, lineno):
        if not _valid_name(name):
            raise DagParseError(f"invalid node name {name!r}", lineno)
        if name not in seen:
            seen.add(name)
            nodes.append(name)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "node":
            if len(tokens) != 2:
                raise DagParseError(f"expected 'node NAME', got {line!r}", lineno)
            declare(tokens[1], lineno)
        elif len(tokens) == 3 and tokens[1] == "->":
            declare(tokens[0], lineno)
            declare(tokens[2], lineno)
            if (tokens[0], tokens[2]) in edges:
                raise DagParseError(f"duplicate edge {tokens[0]} -> {tokens[2]}", lineno)
            edges.append((tokens[0], tokens[2]))
        else:
            raise DagParseError(f"cannot parse {line!r}", lineno)
    try:
        return Dag(nodes, edges)
    except DagError as exc:
        raise DagParseError(str(exc)) from exc


def _valid_name(name):
    return bool(name) and name not in ("node", "->") and "#" not in name


def format_dag(dag: Dag) -> str:
    lines = [f"node {n}" for n in sorted(dag.nodes)]
    lines += [f"{a} -> {b}" for a, b in sorted(dag.edges)]
    return "\n".join(lines) + "\n"


def read_dag(path) -> Dag:
    with open(path, encoding="utf-8") as fh:
        return parse_dag(fh.read())
