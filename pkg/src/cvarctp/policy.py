"""Policy trees: decisions at OR states, observation branches at AND states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .graph import Action, DriveObserve, DriveTerminate, Graph
from .risk import DiscreteDistribution


@dataclass(frozen=True)
class Leaf:
    vertex: str
    info: tuple
    cost: float


@dataclass(frozen=True)
class Branch:
    label: str  # "L" or "H"
    prob: float
    decision: Decision


@dataclass(frozen=True)
class Observe:
    vertex: str
    info: tuple
    g: float
    edge: int
    branches: tuple[Branch, ...]


@dataclass(frozen=True)
class Decision:
    vertex: str
    info: tuple
    g: float
    action: Action
    outcome: Union[Leaf, Observe]


class IncompletePolicy(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    root: Decision

    @property
    def first_action(self) -> Action:
        return self.root.action

    def leaves(self) -> list[tuple[float, float]]:
        """(terminal cost, path probability) for every leaf."""
        out = []
        stack = [(self.root, 1.0)]
        while stack:
            node, prob = stack.pop()
            if not isinstance(node, Decision):
                raise IncompletePolicy(f"unexpected policy node {node!r}")
            outcome = node.outcome
            if isinstance(outcome, Leaf):
                out.append((outcome.cost, prob))
            elif isinstance(outcome, Observe):
                for b in reversed(outcome.branches):
                    stack.append((b.decision, prob * b.prob))
            else:
                raise IncompletePolicy(f"decision at {node.vertex!r} has no outcome")
        return out

    def decisions(self):
        stack = [self.root]
        while stack:
            d = stack.pop()
            yield d
            if isinstance(d.outcome, Observe):
                stack.extend(b.decision for b in reversed(d.outcome.branches))

    def observed_edges(self) -> set[int]:
        return {d.action.edge for d in self.decisions() if isinstance(d.action, DriveObserve)}

    def visited_vertices(self) -> set[str]:
        return {x for d in self.decisions() for x in d.action.path}

    def signature(self, ndigits=9):
        """Hashable structural summary: actions and branch labels, costs rounded."""
        def walk(d: Decision):
            a = d.action
            if isinstance(a, DriveTerminate):
                return ("T", a.path, round(d.outcome.cost, ndigits))
            return ("O", a.path, a.edge,
                    tuple((b.label, walk(b.decision)) for b in d.outcome.branches))
        return walk(self.root)

    def to_dict(self, graph: Graph | None = None) -> dict:
        def walk(d: Decision):
            a = d.action
            node = {
                "vertex": d.vertex,
                "info": "".join(d.info),
                "g": d.g,
                "action": _action_dict(a, graph),
            }
            if isinstance(d.outcome, Leaf):
                node["cost"] = d.outcome.cost
            else:
                node["branches"] = [
                    {"status": b.label, "prob": b.prob, "next": walk(b.decision)}
                    for b in d.outcome.branches
                ]
            return node
        return walk(self.root)


def _action_dict(a: Action, graph: Graph | None):
    if isinstance(a, DriveTerminate):
        return {"type": "drive_terminate", "path": list(a.path), "drive_cost": a.drive_cost}
    d = {"type": "drive_observe", "path": list(a.path), "edge": a.edge, "drive_cost": a.drive_cost}
    if graph is not None:
        d["edge_id"] = graph.stochastic_edges[a.edge].id
    return d


def exact_distribution(policy: Policy) -> DiscreteDistribution:
    return DiscreteDistribution.from_pairs(policy.leaves())
