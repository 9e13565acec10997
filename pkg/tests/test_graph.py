import math
import random

import pytest

from cvarctp.belief import IndependentBelief
from cvarctp.graph import (
    AMBIGUOUS, BLOCKED, HIGH, LOW, DriveObserve, DriveTerminate, Graph, Instance, Mode,
    PathCache, deterministic_edge, effective_cost, enumerate_actions, resolve,
    shortest_path, stochastic_edge, validate_instance,
)

from generators import random_instance


def test_effective_cost_modes():
    d = deterministic_edge("d", "a", "b", 5)
    s = stochastic_edge("s", "a", "b", 2, 20, index=0)
    blocked = stochastic_edge("x", "a", "b", 2, BLOCKED, index=0)
    for mode in Mode:
        assert effective_cost(d, (AMBIGUOUS,), mode) == 5
    assert effective_cost(s, (AMBIGUOUS,), Mode.OPTIMISTIC) == 2
    assert effective_cost(s, (AMBIGUOUS,), Mode.WORST_CASE) == 20
    assert effective_cost(s, (AMBIGUOUS,), Mode.KNOWN_ONLY) is None
    assert effective_cost(blocked, (AMBIGUOUS,), Mode.WORST_CASE) is None
    for mode in Mode:
        assert effective_cost(s, (LOW,), mode) == 2
        assert effective_cost(s, (HIGH,), mode) == 20
        assert effective_cost(blocked, (HIGH,), mode) is None


def test_resolve_is_one_way():
    info = resolve((AMBIGUOUS, AMBIGUOUS), 1, HIGH)
    assert info == (AMBIGUOUS, HIGH)
    with pytest.raises(ValueError):
        resolve(info, 1, LOW)


def test_stochastic_edges_numbered_in_declaration_order():
    g = Graph(["a", "b", "c"], [
        stochastic_edge("p", "a", "b", 1, 2),
        deterministic_edge("q", "b", "c", 1),
        stochastic_edge("r", "a", "c", 1, BLOCKED),
    ])
    assert [e.index for e in g.stochastic_edges] == [0, 1]
    assert [e.id for e in g.stochastic_edges] == ["p", "r"]
    assert g.initial_info() == (AMBIGUOUS, AMBIGUOUS)
    assert g.stochastic_edges[1].blocked_when_high


def test_graph_rejects_bad_declarations():
    with pytest.raises(ValueError):
        Graph(["a"], [deterministic_edge("d", "a", "zz", 1)])
    with pytest.raises(ValueError):
        Graph(["a", "b"], [deterministic_edge("d", "a", "b", 1), deterministic_edge("d", "b", "a", 1)])


def test_shortest_path_examples():
    chain = Graph(["v0", "va", "vg"], [
        deterministic_edge("a", "v0", "va", 3), deterministic_edge("b", "va", "vg", 4)])
    info = chain.initial_info()
    assert shortest_path(chain, info, "v0", "v0", Mode.KNOWN_ONLY) == (0.0, ("v0",))
    assert shortest_path(chain, info, "v0", "vg", Mode.KNOWN_ONLY) == (7.0, ("v0", "va", "vg"))

    g = Graph(["v0", "va", "vg"], [
        deterministic_edge("d", "v0", "vg", 10),
        deterministic_edge("a", "v0", "va", 3),
        stochastic_edge("e", "va", "vg", 1, 50),
    ])
    info = g.initial_info()
    assert shortest_path(g, info, "v0", "vg", Mode.OPTIMISTIC) == (4.0, ("v0", "va", "vg"))
    assert shortest_path(g, info, "v0", "vg", Mode.KNOWN_ONLY) == (10.0, ("v0", "vg"))


def test_shortest_path_directed_and_unreachable():
    g = Graph(["a", "b"], [deterministic_edge("d", "a", "b", 1, directed=True)])
    info = g.initial_info()
    assert shortest_path(g, info, "a", "b", Mode.KNOWN_ONLY) == (1.0, ("a", "b"))
    assert shortest_path(g, info, "b", "a", Mode.KNOWN_ONLY) is None


def test_shortest_path_ties_break_lexicographically():
    g = Graph(["s", "b", "a", "t"], [
        deterministic_edge("1", "s", "b", 1), deterministic_edge("2", "b", "t", 1),
        deterministic_edge("3", "s", "a", 1), deterministic_edge("4", "a", "t", 1),
    ])
    assert shortest_path(g, g.initial_info(), "s", "t", Mode.KNOWN_ONLY) == (2.0, ("s", "a", "t"))


def two_edge_graph(order=None):
    """v0 -2- v1 ~e0~ vg, v0 -3- v2 ~e1~ vg, v0 -20- vg."""
    edges = [
        deterministic_edge("a", "v0", "v1", 2),
        deterministic_edge("b", "v0", "v2", 3),
        stochastic_edge("e0", "v1", "vg", 1, 10),
        stochastic_edge("e1", "v2", "vg", 1, BLOCKED),
        deterministic_edge("d", "v0", "vg", 20),
    ]
    if order is not None:
        edges = [edges[i] for i in order]
    return Graph(["v0", "v1", "v2", "vg"], edges)


def _by_id(graph, actions):
    out = set()
    for a in actions:
        if isinstance(a, DriveTerminate):
            out.add(("T", a.path, a.drive_cost))
        else:
            out.add(("O", graph.stochastic_edges[a.edge].id, a.path, a.drive_cost))
    return out


def test_enumerate_actions_hand_count():
    g = two_edge_graph()
    acts = enumerate_actions(g, g.initial_info(), "v0", "vg")
    # two ambiguous edges, both endpoints of each reachable, plus the direct route
    assert _by_id(g, acts) == {
        ("O", "e0", ("v0", "v1"), 2.0),
        ("O", "e1", ("v0", "v2"), 3.0),
        ("O", "e0", ("v0", "vg"), 20.0),
        ("O", "e1", ("v0", "vg"), 20.0),
        ("T", ("v0", "vg"), 20.0),
    }
    costs = [a.drive_cost for a in acts]
    assert costs == sorted(costs)
    # at equal cost the terminating action comes first, then observations by edge index
    assert isinstance(acts[2], DriveTerminate)
    assert [a.edge for a in acts[3:]] == [0, 1]


def test_enumerate_actions_after_observation():
    g = two_edge_graph()
    info = resolve(g.initial_info(), 0, LOW)
    acts = enumerate_actions(g, info, "v1", "vg")
    assert isinstance(acts[0], DriveTerminate) and acts[0].drive_cost == 1
    assert {a.edge for a in acts if isinstance(a, DriveObserve)} == {1}


def test_enumerate_actions_zero_length_drive():
    g = two_edge_graph()
    acts = enumerate_actions(g, g.initial_info(), "v1", "vg")
    first = acts[0]
    assert isinstance(first, DriveObserve) and first.edge == 0
    assert first.drive_cost == 0 and first.path == ("v1",)


def test_enumerate_actions_deterministic_only():
    g = Graph(["va", "vg"], [deterministic_edge("d", "va", "vg", 4)])
    acts = enumerate_actions(g, g.initial_info(), "va", "vg")
    assert acts == [DriveTerminate(("va", "vg"), 4.0)]


@pytest.mark.parametrize("seed", range(5))
def test_enumerate_actions_permutation_invariant(seed):
    base = two_edge_graph()
    order = list(range(5))
    random.Random(seed).shuffle(order)
    other = two_edge_graph(order)
    a = _by_id(base, enumerate_actions(base, base.initial_info(), "v0", "vg"))
    b = _by_id(other, enumerate_actions(other, other.initial_info(), "v0", "vg"))
    assert a == b


@pytest.mark.parametrize("seed", range(40))
def test_mode_ordering_and_low_resolution(seed):
    inst = random_instance(seed, min_stochastic=1)
    g = inst.graph
    info = g.initial_info()
    cache = PathCache(g)
    for src in g.vertices:
        costs = {}
        for mode in Mode:
            r = shortest_path(g, info, src, inst.goal, mode, cache)
            costs[mode] = math.inf if r is None else r[0]
        # every edge usable in a mode is usable in the next one, never cheaper
        assert costs[Mode.OPTIMISTIC] <= costs[Mode.WORST_CASE] + 1e-9
        assert costs[Mode.WORST_CASE] <= costs[Mode.KNOWN_ONLY] + 1e-9
        # an edge priced at its low cost already; observing it low changes nothing
        opt = costs[Mode.OPTIMISTIC]
        low = resolve(info, 0, LOW)
        r = shortest_path(g, low, src, inst.goal, Mode.OPTIMISTIC)
        assert (math.inf if r is None else r[0]) == pytest.approx(opt)


def _instance(edges, vertices=("v0", "vg"), belief=None, alpha=None):
    g = Graph(list(vertices), edges)
    return Instance(g, belief or IndependentBelief({e.id: 0.5 for e in g.stochastic_edges}),
                    "v0", "vg", alpha)


def test_validate_examples():
    assert validate_instance(_instance([deterministic_edge("d", "v0", "vg", 1)])).ok
    only_blocked = _instance([stochastic_edge("e", "v0", "vg", 1, BLOCKED)])
    assert validate_instance(only_blocked).codes() == ["no_worst_case_path"]
    zero_alpha = _instance([deterministic_edge("d", "v0", "vg", 1)], alpha=0.0)
    assert "alpha_range" in validate_instance(zero_alpha).codes()
    one_alpha = _instance([deterministic_edge("d", "v0", "vg", 1)], alpha=1.0)
    assert validate_instance(one_alpha).ok


def test_validate_costs_and_belief():
    report = validate_instance(_instance([
        deterministic_edge("d", "v0", "vg", 0),
        stochastic_edge("e", "v0", "vg", 5, 3),
    ]))
    assert set(report.codes()) >= {"nonpositive_cost", "cost_order"}
    missing = _instance([deterministic_edge("d", "v0", "vg", 1), stochastic_edge("e", "v0", "vg", 1, 2)],
                        belief=IndependentBelief({}))
    assert "missing_probability" in validate_instance(missing).codes()


def test_validate_dead_end():
    # a one-way edge into a cul-de-sac strands the agent
    inst = _instance([
        deterministic_edge("d", "v0", "vg", 5),
        deterministic_edge("x", "v0", "trap", 1, directed=True),
    ], vertices=("v0", "trap", "vg"))
    assert validate_instance(inst).codes() == ["dead_end"]
