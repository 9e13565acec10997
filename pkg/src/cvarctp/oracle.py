"""Brute-force reference solvers for small instances.

Nothing here is shared with the heuristic search: the full AND-OR tree is
expanded without selection, heuristics, pruning or node fusion, and the
truncated-cost recursion is evaluated for every leaf cost at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .graph import HIGH, LOW, DriveTerminate, Instance, enumerate_actions, resolve
from .risk import DiscreteDistribution, cvar

DEFAULT_MAX_STOCHASTIC = 4


class OracleCapExceeded(ValueError):
    pass


@dataclass
class _Or:
    options: list  # [(action, _Terminal | _And)]


@dataclass
class _Terminal:
    cost: float


@dataclass
class _And:
    edge: int
    probs: tuple[float, float]
    children: tuple[_Or, _Or]


def _expand(instance: Instance, belief, vertex, info, g) -> _Or:
    graph = instance.graph
    options = []
    for a in enumerate_actions(graph, info, vertex, instance.goal):
        cost = g + a.drive_cost
        if isinstance(a, DriveTerminate):
            options.append((a, _Terminal(cost)))
            continue
        p_high = belief.rho(a.edge, info)
        kids = tuple(
            _expand(instance, belief, a.post, resolve(info, a.edge, label), cost)
            for label in (LOW, HIGH)
        )
        options.append((a, _And(a.edge, (1.0 - p_high, p_high), kids)))
    if not options:
        raise ValueError(f"dead end at {vertex!r} with information {''.join(info)}")
    return _Or(options)


def full_tree(instance: Instance, max_stochastic=DEFAULT_MAX_STOCHASTIC) -> _Or:
    graph = instance.graph
    if graph.m_s > max_stochastic:
        raise OracleCapExceeded(f"{graph.m_s} stochastic edges exceeds oracle cap {max_stochastic}")
    belief = instance.belief.bind(graph)
    return _expand(instance, belief, instance.start, graph.initial_info(), 0.0)


def _leaf_costs(node, out):
    for _, child in node.options:
        if isinstance(child, _Terminal):
            out.append(child.cost)
        else:
            for k in child.children:
                _leaf_costs(k, out)
    return out


def _truncated(node: _Or, s: np.ndarray) -> np.ndarray:
    """min over policies of E[(C - s)^+], elementwise over candidate levels s."""
    best = None
    for _, child in node.options:
        if isinstance(child, _Terminal):
            w = np.maximum(child.cost - s, 0.0)
        else:
            (pl, ph), (lo, hi) = child.probs, child.children
            w = pl * _truncated(lo, s) + ph * _truncated(hi, s)
        best = w if best is None else np.minimum(best, w)
    return best


def _expected(node: _Or) -> float:
    """Risk-neutral optimum by ordinary backward induction."""
    values = []
    for _, child in node.options:
        if isinstance(child, _Terminal):
            values.append(child.cost)
        else:
            (pl, ph), (lo, hi) = child.probs, child.children
            values.append(pl * _expected(lo) + ph * _expected(hi))
    return min(values)


@dataclass
class OracleResult:
    value: float | None
    expectation_value: float
    table: dict[float, float] = field(default_factory=dict)
    first_actions: dict[float, list] = field(default_factory=dict)
    leaves: int = 0

    def to_dict(self):
        return {
            "value": self.value,
            "expectation_value": self.expectation_value,
            "table": [{"alpha": a, "value": v} for a, v in self.table.items()],
            "first_actions": [
                {"alpha": a, "optimal_first_actions": [_describe(x) for x in acts]}
                for a, acts in self.first_actions.items()
            ],
            "leaves": self.leaves,
        }


def _describe(a):
    if isinstance(a, DriveTerminate):
        return {"type": "drive_terminate", "path": list(a.path)}
    return {"type": "drive_observe", "path": list(a.path), "edge": a.edge}


def oracle_value(instance: Instance, alpha: float | None = None, alphas=(),
                 max_stochastic=DEFAULT_MAX_STOCHASTIC, tol=1e-9) -> OracleResult:
    """Exact optimal CVaR at ``alpha`` (and at each of ``alphas``).

    ``first_actions`` lists every root action through which the optimum is
    attained (within ``tol``).
    """
    root = full_tree(instance, max_stochastic)
    s = np.unique(np.asarray(_leaf_costs(root, []), dtype=float))
    # per-root-option truncated costs, so optimal first actions can be reported
    per_option = []
    for a, child in root.options:
        if isinstance(child, _Terminal):
            per_option.append((a, np.maximum(child.cost - s, 0.0)))
        else:
            (pl, ph), (lo, hi) = child.probs, child.children
            per_option.append((a, pl * _truncated(lo, s) + ph * _truncated(hi, s)))
    w_root = np.min(np.vstack([w for _, w in per_option]), axis=0)

    levels = list(alphas)
    if alpha is not None and alpha not in levels:
        levels.append(alpha)
    result = OracleResult(value=None, expectation_value=_expected(root), leaves=len(s))
    for a_level in levels:
        if not 0.0 < a_level <= 1.0:
            raise ValueError(f"alpha {a_level} out of range (0, 1]")
        obj = s + w_root / a_level
        value = float(obj.min())
        result.table[a_level] = value
        firsts = []
        for act, w in per_option:
            if float((s + w / a_level).min()) <= value + tol:
                firsts.append(act)
        result.first_actions[a_level] = firsts
    if alpha is not None:
        result.value = result.table[alpha]
    return result


# exhaustive policy enumeration ----------------------------------------------

def _policies(node: _Or):
    """Yield (summary, [(cost, prob), ...]) for every deterministic policy below ``node``."""
    for a, child in node.options:
        if isinstance(child, _Terminal):
            yield {"action": _describe(a)}, [(child.cost, 1.0)]
            continue
        (pl, ph), (lo, hi) = child.probs, child.children
        for (sl, dl), (sh, dh) in itertools.product(list(_policies(lo)), list(_policies(hi))):
            atoms = [(c, p * pl) for c, p in dl] + [(c, p * ph) for c, p in dh]
            yield {"action": _describe(a), "L": sl, "H": sh}, atoms


def enumerate_policies(instance: Instance, max_stochastic=2, max_vertices=12):
    """Every deterministic history-dependent policy with its exact cost distribution."""
    graph = instance.graph
    if graph.m_s > max_stochastic or len(graph.vertices) > max_vertices:
        raise OracleCapExceeded("instance too large for policy enumeration")
    root = full_tree(instance, max_stochastic)
    return [(summary, DiscreteDistribution.from_pairs(atoms)) for summary, atoms in _policies(root)]


def enumeration_value(instance: Instance, alpha: float, **kw) -> float:
    return min(cvar(d, alpha) for _, d in enumerate_policies(instance, **kw))
