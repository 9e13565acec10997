"""Graph model: edges with known or uncertain cost, information sets, known-cost
routing and action enumeration."""

from __future__ import annotations

import heapq
import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:
    from .belief import BeliefModel

LOW = "L"
HIGH = "H"
AMBIGUOUS = "A"

BLOCKED = math.inf

InfoSet = tuple  # tuple of LOW / HIGH / AMBIGUOUS, one entry per stochastic edge


class Mode(Enum):
    OPTIMISTIC = "optimistic"
    WORST_CASE = "worst_case"
    KNOWN_ONLY = "known_only"


@dataclass(frozen=True)
class Edge:
    """A graph edge. ``index`` is None for deterministic edges.

    Stochastic edges carry ``low_cost`` and ``high_cost``; a blocked high status
    is stored as ``math.inf``.
    """

    id: str
    u: str
    v: str
    directed: bool = False
    cost: float | None = None
    index: int | None = None
    low_cost: float | None = None
    high_cost: float | None = None
    features: tuple[float, ...] = ()

    @property
    def stochastic(self) -> bool:
        return self.index is not None

    @property
    def blocked_when_high(self) -> bool:
        return self.stochastic and math.isinf(self.high_cost)

    def endpoints(self) -> tuple[str, ...]:
        return (self.u,) if self.u == self.v else (self.u, self.v)


def deterministic_edge(id, u, v, cost, directed=False) -> Edge:
    return Edge(id=id, u=u, v=v, directed=directed, cost=float(cost))


def stochastic_edge(id, u, v, low_cost, high_cost, features=(), directed=False, index=None) -> Edge:
    high = BLOCKED if high_cost is None or high_cost == "blocked" else float(high_cost)
    return Edge(
        id=id, u=u, v=v, directed=directed, index=index,
        low_cost=float(low_cost), high_cost=high,
        features=tuple(float(x) for x in features),
    )


class Graph:
    """Immutable graph. Stochastic edges are renumbered 0..m_s-1 in declaration order."""

    def __init__(self, vertices: Iterable[str], edges: Iterable[Edge]):
        self.vertices: tuple[str, ...] = tuple(vertices)
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertex names")
        known = set(self.vertices)
        renumbered = []
        stochastic = []
        seen_ids = set()
        for e in edges:
            if e.id in seen_ids:
                raise ValueError(f"duplicate edge id {e.id!r}")
            seen_ids.add(e.id)
            for x in (e.u, e.v):
                if x not in known:
                    raise ValueError(f"edge {e.id!r} references undeclared vertex {x!r}")
            if e.low_cost is not None:
                e = Edge(e.id, e.u, e.v, e.directed, None, len(stochastic),
                         e.low_cost, e.high_cost, e.features)
                stochastic.append(e)
            renumbered.append(e)
        self.edges: tuple[Edge, ...] = tuple(renumbered)
        self.stochastic_edges: tuple[Edge, ...] = tuple(stochastic)
        self.edge_by_id = {e.id: e for e in self.edges}
        # outgoing / incoming arcs: vertex -> list of (neighbour, edge)
        self.out_arcs: dict[str, list[tuple[str, Edge]]] = {x: [] for x in self.vertices}
        self.in_arcs: dict[str, list[tuple[str, Edge]]] = {x: [] for x in self.vertices}
        for e in self.edges:
            self.out_arcs[e.u].append((e.v, e))
            self.in_arcs[e.v].append((e.u, e))
            if not e.directed and e.u != e.v:
                self.out_arcs[e.v].append((e.u, e))
                self.in_arcs[e.u].append((e.v, e))

    @property
    def m_s(self) -> int:
        return len(self.stochastic_edges)

    def initial_info(self) -> InfoSet:
        return (AMBIGUOUS,) * self.m_s

    def __repr__(self):
        return f"Graph({len(self.vertices)} vertices, {len(self.edges)} edges, m_s={self.m_s})"


def resolve(info: InfoSet, index: int, status: str) -> InfoSet:
    if info[index] != AMBIGUOUS:
        raise ValueError(f"stochastic edge {index} already observed as {info[index]}")
    return info[:index] + (status,) + info[index + 1:]


def effective_cost(edge: Edge, info: InfoSet, mode: Mode) -> float | None:
    """Cost of traversing ``edge`` under ``info``; None when unavailable."""
    if not edge.stochastic:
        return edge.cost
    status = info[edge.index]
    if status == LOW:
        return edge.low_cost
    if status == HIGH or mode is Mode.WORST_CASE:
        return None if math.isinf(edge.high_cost) else edge.high_cost
    if mode is Mode.OPTIMISTIC:
        return edge.low_cost
    return None


def _dijkstra(arcs, source, info, mode):
    """Shortest paths from ``source`` over ``arcs``.

    Ties between equal-cost paths go to the lexicographically smallest vertex
    sequence. Returns {vertex: (cost, path)}.
    """
    settled = {}
    heap = [(0.0, (source,))]
    while heap:
        cost, path = heapq.heappop(heap)
        x = path[-1]
        if x in settled:
            continue
        settled[x] = (cost, path)
        for y, edge in arcs[x]:
            if y in settled:
                continue
            c = effective_cost(edge, info, mode)
            if c is None:
                continue
            heapq.heappush(heap, (cost + c, path + (y,)))
    return settled


class PathCache:
    """Per-session memo of single-source shortest-path trees keyed by (info, mode)."""

    def __init__(self, graph: Graph):
        self.graph = graph
        self._forward = {}
        self._backward = {}

    def tree_from(self, source, info, mode):
        key = (source, info, mode)
        tree = self._forward.get(key)
        if tree is None:
            tree = self._forward[key] = _dijkstra(self.graph.out_arcs, source, info, mode)
        return tree

    def distances_to(self, target, info, mode) -> dict[str, float]:
        """Cost-to-go from every vertex to ``target`` (unreachable vertices absent)."""
        key = (target, info, mode)
        dist = self._backward.get(key)
        if dist is None:
            rev = _dijkstra(self.graph.in_arcs, target, info, mode)
            dist = self._backward[key] = {x: c for x, (c, _) in rev.items()}
        return dist


def shortest_path(graph: Graph, info: InfoSet, source: str, target: str, mode: Mode,
                  cache: PathCache | None = None) -> tuple[float, tuple[str, ...]] | None:
    """Minimal-cost path under ``effective_cost``; None when unreachable."""
    if cache is None:
        tree = _dijkstra(graph.out_arcs, source, info, mode)
    else:
        tree = cache.tree_from(source, info, mode)
    return tree.get(target)


@dataclass(frozen=True)
class DriveObserve:
    path: tuple[str, ...]
    edge: int
    drive_cost: float

    @property
    def post(self) -> str:
        return self.path[-1]

    def label(self, graph: Graph | None = None) -> str:
        name = graph.stochastic_edges[self.edge].id if graph else f"e{self.edge}"
        return f"D-O {'>'.join(self.path)} obs {name}"


@dataclass(frozen=True)
class DriveTerminate:
    path: tuple[str, ...]
    drive_cost: float

    def label(self, graph: Graph | None = None) -> str:
        return f"D-T {'>'.join(self.path)}"


Action = Union[DriveObserve, DriveTerminate]


def action_sort_key(action: Action):
    # at equal drive cost, terminating sorts first so it wins exact ties
    if isinstance(action, DriveObserve):
        return (action.drive_cost, 1, action.edge, action.path)
    return (action.drive_cost, 0, -1, action.path)


def enumerate_actions(graph: Graph, info: InfoSet, at: str, goal: str,
                      cache: PathCache | None = None) -> list[Action]:
    if cache is None:
        tree = _dijkstra(graph.out_arcs, at, info, Mode.KNOWN_ONLY)
    else:
        tree = cache.tree_from(at, info, Mode.KNOWN_ONLY)
    actions: list[Action] = []
    for e in graph.stochastic_edges:
        if info[e.index] != AMBIGUOUS:
            continue
        for post in e.endpoints():
            if post in tree:
                cost, path = tree[post]
                actions.append(DriveObserve(path, e.index, cost))
    if goal in tree:
        cost, path = tree[goal]
        actions.append(DriveTerminate(path, cost))
    actions.sort(key=action_sort_key)
    return actions


@dataclass(frozen=True)
class Instance:
    graph: Graph
    belief: BeliefModel
    start: str
    goal: str
    alpha: float | None = None
    source: dict | None = field(default=None, compare=False, repr=False)

    def with_alpha(self, alpha):
        return Instance(self.graph, self.belief, self.start, self.goal, alpha, self.source)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def add(self, code, message):
        self.violations.append(Violation(code, message))

    def __bool__(self):
        return self.ok


def _reachable(graph: Graph, source: str, usable) -> set[str]:
    seen = {source}
    stack = [source]
    while stack:
        x = stack.pop()
        for y, e in graph.out_arcs[x]:
            if y not in seen and usable(e):
                seen.add(y)
                stack.append(y)
    return seen


def validate_instance(instance: Instance) -> ValidationReport:
    """Collect every problem that makes ``instance`` unsolvable or ill-formed.

    Beyond the start vertex, every vertex the agent could ever reach must also
    keep a worst-case route to the goal; otherwise directed edges can strand the
    agent after a bad observation.
    """
    report = ValidationReport()
    g = instance.graph
    for name, x in (("start", instance.start), ("goal", instance.goal)):
        if x not in g.out_arcs:
            report.add("unknown_vertex", f"{name} vertex {x!r} is not declared")
    for e in g.edges:
        if e.stochastic:
            if not e.low_cost > 0:
                report.add("nonpositive_cost", f"edge {e.id!r} has low cost {e.low_cost}")
            if not e.high_cost > 0:
                report.add("nonpositive_cost", f"edge {e.id!r} has high cost {e.high_cost}")
            elif not e.low_cost < e.high_cost:
                report.add("cost_order", f"edge {e.id!r}: low cost must be below high cost")
        elif not e.cost > 0 or math.isinf(e.cost):
            report.add("nonpositive_cost", f"edge {e.id!r} has cost {e.cost}")
    if instance.alpha is not None and not 0.0 < instance.alpha <= 1.0:
        report.add("alpha_range", f"alpha {instance.alpha} out of range (0, 1]")
    if instance.belief is not None:
        for code, message in instance.belief.check(g):
            report.add(code, message)
    if not report.ok and "unknown_vertex" in report.codes():
        return report

    worst = g.initial_info()
    to_goal = PathCache(g).distances_to(instance.goal, worst, Mode.WORST_CASE)
    if instance.start not in to_goal:
        report.add("no_worst_case_path",
                   f"no finite-cost path from {instance.start!r} to {instance.goal!r} "
                   "with every stochastic edge at its high status")
        return report
    # any edge the agent might ever drive: deterministic, or stochastic with a finite status
    reachable = _reachable(g, instance.start, lambda e: True)
    stranded = sorted(x for x in reachable if x not in to_goal)
    if stranded:
        report.add("dead_end",
                   "vertices reachable from start without a worst-case path to goal: "
                   + ", ".join(stranded))
    return report
