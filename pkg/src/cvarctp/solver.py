"""Exact CVaR-optimal AND-OR search.

The search grows one tree over states (vertex, information set, running cost)
and keeps, for every node and every candidate truncation level ``s``, the best
expected truncated cost ``w(node, s) = min E[(C - s)^+]`` reachable through the
node. The optimal risk value is ``min_s s + w(root, s) / alpha``.

Per-candidate tables live in node-by-candidate matrices owned by the tree so a
backup touches all candidate levels with one vectorized operation.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .belief import BoundBelief
from .graph import (
    HIGH, LOW, DriveObserve, DriveTerminate, Instance, Mode, PathCache,
    enumerate_actions, resolve, validate_instance,
)
from .policy import Branch, Decision, Leaf, Observe, Policy, exact_distribution
from .risk import DiscreteDistribution, expectation

OR = "OR"
AND = "AND"

S_TOL = 1e-9       # candidate-cost deduplication
G_QUANTUM = 1e-9   # running-cost resolution of the node cache
TIE_RTOL = 1e-12   # relative tolerance for treating two backed-up values as tied
PRUNE_TOL = 1e-9


class SolverError(RuntimeError):
    pass


class InvalidInstance(SolverError):
    def __init__(self, report):
        super().__init__("; ".join(v.message for v in report.violations))
        self.report = report


class IterationCapExceeded(SolverError):
    def __init__(self, iterations, trace):
        super().__init__(f"search not finished after {iterations} iterations")
        self.iterations = iterations
        self.trace = trace


@dataclass
class SolveOptions:
    tie_break_expected_cost: bool = True
    prune_dominated: bool = True
    cache_nodes: bool = True
    max_iterations: int | None = None
    trace: bool = False


class SearchNode:
    __slots__ = ("id", "kind", "vertex", "info", "g", "h", "action", "terminal",
                 "children", "child_idx", "probs", "labels", "parents")

    def __init__(self, id, kind, vertex, info, g, h, action=None, terminal=False):
        self.id = id
        self.kind = kind
        self.vertex = vertex
        self.info = info
        self.g = g
        self.h = h
        self.action = action
        self.terminal = terminal
        self.children: tuple[int, ...] = ()
        self.child_idx = None
        self.probs: tuple[float, ...] = ()
        self.labels: tuple[str, ...] = ()
        self.parents: list[int] = []

    @property
    def f(self) -> float:
        return self.g + self.h

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self):
        info = "".join(self.info)
        return f"<{self.kind} #{self.id} {self.vertex} {info} g={self.g:g} h={self.h:g}>"


def _tol(x):
    return TIE_RTOL * np.maximum(1.0, np.abs(x))


class SearchTree:
    """Arena of search nodes plus the candidate set and per-candidate tables.

    Row ``i`` of ``w``/``ev``/``solved``/``best`` belongs to node ``i``; column
    ``j`` to candidate ``s_values[j]`` (columns in insertion order).
    """

    def __init__(self, node_capacity=256, s_capacity=32):
        self.nodes: list[SearchNode] = []
        self.root = 0
        self.s_values: list[float] = []
        self._s_sorted: list[float] = []
        self.cache: dict = {}
        self.s_star = 0
        self.w = np.zeros((node_capacity, s_capacity))
        self.ev = np.zeros((node_capacity, s_capacity))
        self.solved = np.zeros((node_capacity, s_capacity), dtype=bool)
        self.best = np.zeros((node_capacity, s_capacity), dtype=np.int32)

    @property
    def n_s(self) -> int:
        return len(self.s_values)

    def s_array(self, cols=slice(None)) -> np.ndarray:
        return np.asarray(self.s_values, dtype=float)[cols]

    def _grow(self, rows, cols):
        r, c = self.w.shape
        if rows <= r and cols <= c:
            return
        nr, nc = max(r, 1), max(c, 1)
        while nr < rows:
            nr *= 2
        while nc < cols:
            nc *= 2
        for name in ("w", "ev", "solved", "best"):
            old = getattr(self, name)
            new = np.zeros((nr, nc), dtype=old.dtype)
            new[:r, :c] = old
            setattr(self, name, new)

    def add_node(self, node: SearchNode) -> int:
        node.id = len(self.nodes)
        self.nodes.append(node)
        self._grow(len(self.nodes), self.n_s)
        return node.id

    def find_s(self, value: float):
        """Existing candidate within ``S_TOL`` of ``value``, else None."""
        k = bisect.bisect_left(self._s_sorted, value - S_TOL)
        if k < len(self._s_sorted) and self._s_sorted[k] <= value + S_TOL:
            return self._s_sorted[k]
        return None

    def add_s(self, values) -> slice:
        start = self.n_s
        for v in values:
            self.s_values.append(v)
            bisect.insort(self._s_sorted, v)
        self._grow(len(self.nodes), self.n_s)
        return slice(start, self.n_s)

    def topological_order(self) -> list[int]:
        """Children before parents (iterative post-order from the root)."""
        WHITE, GREY, BLACK = 0, 1, 2
        color = [WHITE] * len(self.nodes)
        order = []
        stack = [(self.root, 0)]
        color[self.root] = GREY
        while stack:
            i, k = stack[-1]
            children = self.nodes[i].children
            if k < len(children):
                stack[-1] = (i, k + 1)
                c = children[k]
                if color[c] == GREY:
                    raise SolverError(f"cycle through node {c}; node cache is inconsistent")
                if color[c] == WHITE:
                    color[c] = GREY
                    stack.append((c, 0))
            else:
                color[i] = BLACK
                order.append(i)
                stack.pop()
        return order


def _node_key(kind, vertex, info, g, tag=None):
    return (kind, vertex, info, round(g / G_QUANTUM), tag)


class Search:
    """One solve session: the search tree and its memo caches for one instance."""

    def __init__(self, instance: Instance, opts: SolveOptions | None = None, validate=True):
        if validate:
            report = validate_instance(instance)
            if not report.ok:
                raise InvalidInstance(report)
        self.instance = instance
        self.graph = instance.graph
        self.goal = instance.goal
        self.opts = opts or SolveOptions()
        self.paths = PathCache(self.graph)
        self.belief: BoundBelief = instance.belief.bind(self.graph)
        self.tree = SearchTree()
        self.alpha = None
        self.iterations = 0
        self._fresh: list[int] = []

        info0 = self.graph.initial_info()
        root = SearchNode(0, OR, instance.start, info0, 0.0, self.heuristic(instance.start, info0))
        self.tree.add_node(root)
        self.tree.add_s([root.f])
        t = self.tree
        t.w[0, 0] = 0.0
        t.ev[0, 0] = root.f
        t.solved[0, 0] = False
        if self.opts.cache_nodes:
            t.cache[_node_key(OR, root.vertex, root.info, 0.0)] = 0

    # heuristics -----------------------------------------------------------

    def heuristic(self, vertex, info) -> float:
        """Optimistic cost-to-go: unobserved stochastic edges at their low cost."""
        dist = self.paths.distances_to(self.goal, info, Mode.OPTIMISTIC)
        if vertex not in dist:
            raise SolverError(f"goal unreachable from {vertex!r} even optimistically")
        return dist[vertex]

    def worst_case_to_goal(self, vertex, info) -> float | None:
        return self.paths.distances_to(self.goal, info, Mode.WORST_CASE).get(vertex)

    # main loop ------------------------------------------------------------

    def objective(self, alpha=None) -> np.ndarray:
        alpha = self.alpha if alpha is None else alpha
        t = self.tree
        return t.s_array() + t.w[t.root, :t.n_s] / alpha

    def run(self, alpha: float) -> Solution:
        if not 0.0 < alpha <= 1.0:
            raise SolverError(f"alpha {alpha} out of range (0, 1]")
        self.alpha = alpha
        t = self.tree
        t.s_star = self.best_s(alpha)
        trace = [float(self.objective()[t.s_star])] if self.opts.trace else []
        start_iterations = self.iterations
        cap = self.opts.max_iterations
        while not t.solved[t.root, t.s_star]:
            if cap is not None and self.iterations - start_iterations >= cap:
                raise IterationCapExceeded(self.iterations - start_iterations, trace)
            self.step()
            if self.opts.trace:
                trace.append(float(self.objective()[t.s_star]))
        return self._solution(alpha, self.iterations - start_iterations, trace)

    def step(self):
        t = self.tree
        n = self.select_node(t.s_star)
        self.expand_node(n)
        omega_old = slice(0, t.n_s)
        new_values = self.initialize_successor_costs(self._fresh)
        self.backprop_tree(new_values)
        self.backprop_ancestors(n, omega_old)
        t.s_star = self.best_s(self.alpha)
        self.iterations += 1

    def select_node(self, s: int) -> int:
        """Non-terminal leaf of the best partial policy for candidate column ``s``."""
        t = self.tree
        i = t.root
        while True:
            node = t.nodes[i]
            if node.is_leaf:
                if node.terminal:
                    raise SolverError("selection reached a terminal node of an unsolved policy")
                return i
            if node.kind == OR:
                i = node.children[t.best[i, s]]
                continue
            for c in node.children:
                if not t.solved[c, s]:
                    i = c
                    break
            else:
                raise SolverError(f"AND node {i} has only solved children but is unsolved")

    # expansion ------------------------------------------------------------

    def _child(self, parent: SearchNode, kind, vertex, info, g, action=None, terminal=False, tag=None):
        t = self.tree
        key = _node_key(kind, vertex, info, g, tag) if self.opts.cache_nodes else None
        if key is not None and key in t.cache:
            cid = t.cache[key]
        else:
            h = 0.0 if terminal else self.heuristic(vertex, info)
            cid = t.add_node(SearchNode(-1, kind, vertex, info, g, h, action, terminal))
            self._fresh.append(cid)
            if key is not None:
                t.cache[key] = cid
        t.nodes[cid].parents.append(parent.id)
        return cid

    def prune(self, node: SearchNode, actions):
        """Drop actions whose best case is worse than the node's worst-case fallback."""
        fallback = self.worst_case_to_goal(node.vertex, node.info)
        if fallback is None:
            return actions
        bound = node.g + fallback
        kept = []
        for a in actions:
            rest = self.heuristic(a.post, node.info) if isinstance(a, DriveObserve) else 0.0
            if node.g + a.drive_cost + rest <= bound + PRUNE_TOL:
                kept.append(a)
        return kept

    def expand_node(self, i: int) -> list[int]:
        t = self.tree
        node = t.nodes[i]
        if not node.is_leaf or node.terminal:
            raise SolverError(f"cannot expand {node!r}")
        self._fresh = []
        children, probs, labels = [], [], []
        if node.kind == OR:
            actions = enumerate_actions(self.graph, node.info, node.vertex, self.goal, self.paths)
            if self.opts.prune_dominated:
                actions = self.prune(node, actions)
            if not actions:
                raise SolverError(f"no action available at {node!r}")
            for a in actions:
                g = node.g + a.drive_cost
                if isinstance(a, DriveTerminate):
                    c = self._child(node, AND, self.goal, node.info, g, a, terminal=True, tag="T")
                else:
                    c = self._child(node, AND, a.post, node.info, g, a, tag=a.edge)
                children.append(c)
        else:
            e = node.action.edge
            p_high = self.belief.rho(e, node.info)
            for label, p in ((LOW, 1.0 - p_high), (HIGH, p_high)):
                info = resolve(node.info, e, label)
                children.append(self._child(node, OR, node.vertex, info, node.g))
                probs.append(p)
                labels.append(label)
        node.children = tuple(children)
        node.child_idx = np.asarray(children, dtype=np.intp)
        node.probs = tuple(probs)
        node.labels = tuple(labels)
        return list(self._fresh)

    def initialize_successor_costs(self, fresh) -> list[float]:
        """Leaf tables of new nodes over the existing candidates; returns the new
        distinct f values."""
        t = self.tree
        cols = slice(0, t.n_s)
        s = t.s_array(cols)
        new_values: list[float] = []
        for c in fresh:
            node = t.nodes[c]
            f = node.f
            t.w[c, cols] = np.maximum(f - s, 0.0)
            t.ev[c, cols] = f
            t.solved[c, cols] = node.terminal
            t.best[c, cols] = 0
            if t.find_s(f) is None and all(abs(f - v) > S_TOL for v in new_values):
                new_values.append(f)
        return new_values

    # backpropagation --------------------------------------------------------

    def _backup(self, i: int, cols: slice):
        t = self.tree
        node = t.nodes[i]
        if node.is_leaf:
            f = node.f
            t.w[i, cols] = np.maximum(f - t.s_array(cols), 0.0)
            t.ev[i, cols] = f
            t.solved[i, cols] = node.terminal
        elif node.kind == OR:
            self.backprop_or(i, cols)
        else:
            self.backprop_and(i, cols)

    def backprop_or(self, i: int, cols: slice):
        t = self.tree
        ch = t.nodes[i].child_idx
        wc = t.w[ch, cols]
        evc = t.ev[ch, cols]
        wmin = wc.min(axis=0)
        cand = wc <= wmin + _tol(wmin)
        if self.opts.tie_break_expected_cost and len(ch) > 1:
            ev_tied = np.where(cand, evc, np.inf)
            evmin = ev_tied.min(axis=0)
            cand &= evc <= evmin + _tol(evmin)
        best = cand.argmax(axis=0)
        r = np.arange(wc.shape[1])
        t.w[i, cols] = wc[best, r]
        t.ev[i, cols] = evc[best, r]
        t.solved[i, cols] = t.solved[ch, cols][best, r]
        t.best[i, cols] = best

    def backprop_and(self, i: int, cols: slice):
        t = self.tree
        node = t.nodes[i]
        (lo, hi), (p_lo, p_hi) = node.children, node.probs
        t.w[i, cols] = p_lo * t.w[lo, cols] + p_hi * t.w[hi, cols]
        t.ev[i, cols] = p_lo * t.ev[lo, cols] + p_hi * t.ev[hi, cols]
        t.solved[i, cols] = t.solved[lo, cols] & t.solved[hi, cols]

    def backprop_tree(self, new_values):
        """Extend every node's tables to the new candidates, children first."""
        if not new_values:
            return
        t = self.tree
        cols = t.add_s(new_values)
        for i in t.topological_order():
            self._backup(i, cols)

    def backprop_ancestors(self, i: int, cols: slice):
        """Re-back-up ``i`` and all its ancestors (FIFO over parents)."""
        t = self.tree
        queue = deque([i])
        pending = {i}
        while queue:
            n = queue.popleft()
            pending.discard(n)
            self._backup(n, cols)
            for p in t.nodes[n].parents:
                if p not in pending:
                    pending.add(p)
                    queue.append(p)

    def best_s(self, alpha: float) -> int:
        """Column minimizing s + w(root, s)/alpha; ties to lower expected cost,
        then to smaller s."""
        t = self.tree
        obj = self.objective(alpha)
        cand = obj <= obj.min() + _tol(obj.min())
        ev = t.ev[t.root, :t.n_s]
        if self.opts.tie_break_expected_cost:
            evm = ev[cand].min()
            cand &= ev <= evm + _tol(evm)
        idx = np.flatnonzero(cand)
        s = t.s_array()
        return int(idx[np.argmin(s[idx])])

    # results ----------------------------------------------------------------

    def extract_policy(self, s: int) -> Policy:
        t = self.tree
        if not t.solved[t.root, s]:
            raise SolverError("root is not solved for this candidate")

        def decision(i) -> Decision:
            node = t.nodes[i]
            c = t.nodes[node.children[t.best[i, s]]]
            if c.terminal:
                outcome = Leaf(c.vertex, c.info, c.g)
            else:
                branches = tuple(
                    Branch(label, p, decision(k))
                    for k, p, label in zip(c.children, c.probs, c.labels)
                )
                outcome = Observe(c.vertex, c.info, c.g, c.action.edge, branches)
            return Decision(node.vertex, node.info, node.g, c.action, outcome)

        return Policy(decision(t.root))

    def _solution(self, alpha, iterations, trace) -> Solution:
        t = self.tree
        s = t.s_star
        policy = self.extract_policy(s)
        dist = exact_distribution(policy)
        value = float(t.s_values[s] + t.w[t.root, s] / alpha)
        return Solution(
            policy=policy,
            value=value,
            s_star=float(t.s_values[s]),
            distribution=dist,
            expected_cost=expectation(dist),
            iterations=iterations,
            trace=trace,
            alpha=alpha,
            nodes=len(t.nodes),
            search=self,
        )


@dataclass
class Solution:
    policy: Policy
    value: float
    s_star: float
    distribution: DiscreteDistribution
    expected_cost: float
    iterations: int
    trace: list[float]
    alpha: float
    nodes: int = 0
    search: Search | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        graph = self.search.graph if self.search else None
        return {
            "alpha": self.alpha,
            "value": self.value,
            "s_star": self.s_star,
            "expected_cost": self.expected_cost,
            "iterations": self.iterations,
            "nodes": self.nodes,
            "distribution": self.distribution.to_list(),
            "policy": self.policy.to_dict(graph),
            "trace": list(self.trace),
        }


def solve(instance: Instance, alpha: float | None = None, opts: SolveOptions | None = None) -> Solution:
    """CVaR_alpha-optimal policy for ``instance`` (alpha defaults to the instance's)."""
    if alpha is None:
        alpha = instance.alpha
    if alpha is None:
        raise SolverError("no alpha given and the instance does not set one")
    if not 0.0 < alpha <= 1.0:
        raise SolverError(f"alpha {alpha} out of range (0, 1]")
    return Search(instance, opts).run(alpha)


def resolve_with_alpha(previous: Solution | Search, alpha_new: float) -> Solution:
    """Reuse an earlier session's tree for another risk level; the search
    resumes only if the new best candidate is not solved yet."""
    search = previous.search if isinstance(previous, Solution) else previous
    if search is None:
        raise SolverError("solution carries no search session")
    return search.run(alpha_new)
