import itertools

import pytest
from hypothesis import given, settings, strategies as st

from causal_kit.dag import (
    Dag, Path, backdoor_paths, d_separated, d_separated_by_paths, enumerate_paths, format_dag,
    is_valid_backdoor_set, make_swig, minimal_backdoor_sets, parse_dag, path_blocked,
)
from causal_kit.errors import CycleError, DagError, DagParseError, PathLimitError, UnknownNodeError

from .helpers import dags, moral_dsep, subsets

BACKDOOR_FIGURE = """
# treatment D, outcome Y, mediator M
Z1 -> X1
Z1 -> X2
Z2 -> X2
Z2 -> X3
X1 -> D
X2 -> D
X2 -> Y
X3 -> Y
D -> M
M -> Y
"""


@pytest.fixture
def figure():
    return parse_dag(BACKDOOR_FIGURE)


# --- construction -----------------------------------------------------------


def test_rejects_cycle_and_reports_it():
    with pytest.raises(CycleError) as info:
        Dag(["A", "B", "C"], [("A", "B"), ("B", "C"), ("C", "A")])
    cyc = info.value.cycle
    assert set(cyc) == {"A", "B", "C"}
    assert cyc[0] == cyc[-1] or len(cyc) == 3


def test_cycle_downstream_node_does_not_confuse_finder():
    with pytest.raises(CycleError) as info:
        Dag(["A", "B", "C", "E"], [("A", "B"), ("B", "A"), ("B", "E"), ("C", "E")])
    assert set(info.value.cycle) <= {"A", "B"}


def test_self_loop_and_duplicates():
    with pytest.raises(DagError):
        Dag(["A"], [("A", "A")])
    with pytest.raises(DagError):
        Dag(["A", "A"], [])
    with pytest.raises(DagError):
        Dag(["A", "B"], [("A", "B"), ("A", "B")])


def test_unknown_node():
    g = Dag(["A", "B"], [("A", "B")])
    with pytest.raises(UnknownNodeError):
        g.parents("Q")
    with pytest.raises(UnknownNodeError):
        d_separated(g, "A", "Q")


def test_relatives(figure):
    assert figure.parents("D") == {"X1", "X2"}
    assert figure.children("X2") == {"D", "Y"}
    assert figure.descendants("D") == {"M", "Y"}
    assert figure.ancestors("D") == {"D", "X1", "X2", "Z1", "Z2"}


def test_topological_order_is_lexicographic_among_ties():
    g = Dag(["b", "a", "c"], [("c", "a")])
    assert g.topological_order() == ("b", "c", "a")


@given(dags())
def test_topological_order_respects_edges(g):
    pos = {n: i for i, n in enumerate(g.topological_order())}
    assert sorted(pos) == sorted(g.nodes)
    assert all(pos[a] < pos[b] for a, b in g.edges)


@given(dags())
def test_descendants_match_reachability(g):
    for node in g.nodes:
        reach = set()
        frontier = [node]
        while frontier:
            for c in g.children(frontier.pop()):
                if c not in reach:
                    reach.add(c)
                    frontier.append(c)
        assert g.descendants(node) == reach


# --- text format ------------------------------------------------------------


@given(dags())
def test_format_parse_roundtrip(g):
    assert parse_dag(format_dag(g)) == g


def test_parse_errors_carry_line_number():
    with pytest.raises(DagParseError) as info:
        parse_dag("A -> B\nB -> \n")
    assert info.value.lineno == 2
    with pytest.raises(DagParseError):
        parse_dag("A => B")


def test_parse_declared_isolated_node():
    g = parse_dag("node Q\nA -> B  # trailing comment\n")
    assert set(g.nodes) == {"Q", "A", "B"}


# --- paths ------------------------------------------------------------------


def test_path_string_roundtrip(figure):
    p = Path.parse("D <- X1 <- Z1 -> X2 <- Z2 -> X3 -> Y")
    p.validate(figure)
    assert str(p) == "D <- X1 <- Z1 -> X2 <- Z2 -> X3 -> Y"
    assert p.colliders() == ["X2"]


def test_backdoor_paths_of_figure(figure):
    paths = {str(p) for p in backdoor_paths(figure, "D", "Y")}
    assert "D <- X2 -> Y" in paths
    assert "D <- X1 <- Z1 -> X2 <- Z2 -> X3 -> Y" in paths
    # the two named ones plus two that mix inner and outer segments
    assert len(paths) == 4


def test_path_limit():
    g = Dag([f"N{i}" for i in range(14)], [(f"N{i}", f"N{i + 1}") for i in range(13)])
    with pytest.raises(PathLimitError):
        enumerate_paths(g, "N0", "N13")
    assert len(enumerate_paths(g, "N0", "N13", max_nodes=20)) == 1


def test_collider_opened_by_descendant():
    g = parse_dag("X -> C\nY -> C\nC -> K")
    assert d_separated(g, "X", "Y")
    assert not d_separated(g, "X", "Y", {"C"})
    assert not d_separated(g, "X", "Y", {"K"})


def test_textbook_examples():
    a = parse_dag("Z -> X\nU -> X\nU -> Y\nZ -> Y")
    assert d_separated(a, "X", "Y", {"Z", "U"})
    assert not d_separated(a, "X", "Y", {"Z"})
    b = parse_dag("Z -> X\nX -> U\nY -> U\nZ -> Y")
    assert d_separated(b, "X", "Y", {"Z"})
    assert not d_separated(b, "X", "Y", {"Z", "U"})


def test_bad_queries(figure):
    with pytest.raises(ValueError):
        d_separated(figure, "D", "D")
    with pytest.raises(ValueError):
        d_separated(figure, "D", "Y", {"D"})


@settings(max_examples=300)
@given(dags(min_nodes=2), st.data())
def test_three_routes_agree(g, data):
    x, y = data.draw(st.lists(st.sampled_from(sorted(g.nodes)), min_size=2, max_size=2, unique=True))
    rest = sorted(set(g.nodes) - {x, y})
    s = data.draw(st.lists(st.sampled_from(rest), unique=True)) if rest else []
    fast = d_separated(g, x, y, s)
    assert fast == d_separated_by_paths(g, x, y, s)
    assert fast == moral_dsep(g, x, y, s)
    assert fast == d_separated(g, y, x, s)


@given(dags(min_nodes=2))
def test_parents_screen_off_nondescendants(g):
    # local Markov property, read graphically
    for v in g.nodes:
        pa = g.parents(v)
        for w in set(g.nodes) - g.descendants(v) - pa - {v}:
            assert d_separated(g, v, w, pa)


def test_path_blocked_by_chain_node(figure):
    p = Path.parse("D <- X2 -> Y")
    assert not path_blocked(figure, p)
    assert path_blocked(figure, p, {"X2"})


# --- backdoor ---------------------------------------------------------------


def test_minimal_sets_of_figure(figure):
    sets = minimal_backdoor_sets(figure, "D", "Y")
    assert sets == [{"X1", "X2"}, {"X2", "X3"}, {"X2", "Z1"}, {"X2", "Z2"}]


def test_x2_alone_opens_the_outer_path(figure):
    check = is_valid_backdoor_set(figure, "D", "Y", {"X2"})
    assert not check.valid
    assert check.reason == "open_backdoor_path"
    assert str(check.witness) == "D <- X1 <- Z1 -> X2 <- Z2 -> X3 -> Y"


def test_mediator_is_rejected(figure):
    check = is_valid_backdoor_set(figure, "D", "Y", {"M"})
    assert not check.valid
    assert check.reason == "descendant_of_treatment"
    assert check.offending == ("M",)
    assert str(check.witness) == "D -> M"


def test_empty_set_valid_without_confounding():
    g = parse_dag("D -> Y\nD -> Z")
    assert is_valid_backdoor_set(g, "D", "Y", set()).valid
    assert is_valid_backdoor_set(g, "D", "Y", {"Z"}).valid is False  # descendant
    assert minimal_backdoor_sets(g, "D", "Y") == [set()]


@settings(max_examples=150)
@given(dags(min_nodes=2))
def test_validity_matches_path_definition(g):
    nodes = sorted(g.nodes)
    d, y = nodes[0], nodes[-1]
    nondesc = sorted(set(g.nodes) - g.descendants(d) - {d, y})
    paths = backdoor_paths(g, d, y)
    for s in subsets(nondesc):
        by_paths = all(path_blocked(g, p, s) for p in paths)
        assert is_valid_backdoor_set(g, d, y, s).valid == by_paths


@settings(max_examples=100)
@given(dags(min_nodes=2))
def test_minimal_sets_are_valid_and_minimal(g):
    nodes = sorted(g.nodes)
    d, y = nodes[0], nodes[-1]
    sets = minimal_backdoor_sets(g, d, y)
    for s in sets:
        assert is_valid_backdoor_set(g, d, y, s).valid
        for r in range(len(s)):
            for sub in itertools.combinations(sorted(s), r):
                assert not is_valid_backdoor_set(g, d, y, sub).valid


# --- SWIG -------------------------------------------------------------------


def test_swig_of_figure(figure):
    sw = make_swig(figure, "D", "d")
    assert sw.node("Y") == "Y(d)" and sw.node("M") == "M(d)" and sw.node("X2") == "X2"
    assert sw.dag.children("D") == frozenset()
    assert sw.dag.children("d") == {"M(d)"}
    assert sw.dag.parents("D") == {"X1", "X2"}
    for s in ({"X1", "X2"}, {"X2", "X3"}, {"X2", "Z1"}, {"X2", "Z2"}):
        assert d_separated(sw.dag, "Y(d)", "D", s)
    assert not d_separated(sw.dag, "Y(d)", "D", {"X2"})
    assert not d_separated(sw.dag, "Y(d)", "D")


def test_swig_mediator_chain():
    g = parse_dag("D -> Z\nD -> Y")
    sw = make_swig(g, "D", "d")
    assert d_separated(sw.dag, "Y(d)", "D")
    assert set(sw.dag.edges) == {("d", "Z(d)"), ("d", "Y(d)")}


def test_swig_label_collision():
    g = parse_dag("D -> Y\nnode d")
    with pytest.raises(DagError):
        make_swig(g, "D", "d")


@settings(max_examples=150)
@given(dags(min_nodes=2))
def test_swig_agrees_with_backdoor_criterion(g):
    # for sets without descendants of D, Y(d) _||_ D | S in the SWIG iff S is a valid backdoor set
    nodes = sorted(g.nodes)
    d, y = nodes[0], nodes[-1]
    if y not in g.descendants(d):
        return
    sw = make_swig(g, d, "fixed")
    nondesc = sorted(set(g.nodes) - g.descendants(d) - {d, y})
    for s in subsets(nondesc):
        assert d_separated(sw.dag, sw.node(y), d, s) == is_valid_backdoor_set(g, d, y, s).valid
