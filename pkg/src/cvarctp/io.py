"""Instance files (JSON), report serialization and Graphviz export of policy trees."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

from .belief import (
    BeliefError, CorrelatedBelief, IndependentBelief, LogisticHypothesis,
    load_grid_hypotheses, sample_logistic_hypotheses, surfaces_from_dict,
)
from .graph import Graph, Instance, deterministic_edge, stochastic_edge
from .policy import Decision, Leaf, Policy


class InstanceError(ValueError):
    pass


def _belief_from_dict(doc: dict, base_dir: Path):
    kind = doc.get("type")
    theta = float(doc.get("theta", 1.0))
    if kind == "independent":
        return IndependentBelief(doc["p"])
    if kind == "logistic_samples":
        kw = {}
        if "a_range" in doc:
            kw["a_range"] = tuple(doc["a_range"])
        if "b_range" in doc:
            kw["b_range"] = tuple(doc["b_range"])
        hyps = sample_logistic_hypotheses(doc["constraints"], int(doc["count"]),
                                          seed=int(doc.get("seed", 0)), **kw)
        return CorrelatedBelief(hyps, doc.get("prior"), theta)
    if kind == "logistic":
        hyps = [LogisticHypothesis(float(h["a"]), float(h["b"])) for h in doc["hypotheses"]]
        return CorrelatedBelief(hyps, doc.get("prior"), theta)
    if kind == "grid_surfaces":
        if "file" in doc:
            loaded = load_grid_hypotheses(base_dir / doc["file"])
        else:
            loaded = surfaces_from_dict(doc)
        prior = doc.get("prior", loaded.prior)
        return CorrelatedBelief(loaded.hypotheses, prior, theta)
    raise InstanceError(f"unknown belief type {kind!r}")


def _edge_from_dict(e: dict):
    common = dict(id=str(e["id"]), u=str(e["u"]), v=str(e["v"]), directed=bool(e.get("directed", False)))
    if "cost" in e:
        return deterministic_edge(cost=e["cost"], **common)
    if "low_cost" in e:
        return stochastic_edge(low_cost=e["low_cost"], high_cost=e["high_cost"],
                               features=e.get("features", ()), **common)
    raise InstanceError(f"edge {e.get('id')!r} has neither 'cost' nor 'low_cost'")


def instance_from_dict(doc: dict, base_dir: Path | str = ".") -> Instance:
    try:
        graph = Graph([str(v) for v in doc["vertices"]], [_edge_from_dict(e) for e in doc["edges"]])
        belief = _belief_from_dict(doc["belief"], Path(base_dir))
        alpha = doc.get("alpha")
        return Instance(graph, belief, str(doc["start"]), str(doc["goal"]),
                        None if alpha is None else float(alpha), source=doc)
    except KeyError as exc:
        raise InstanceError(f"instance is missing field {exc}") from None
    except (BeliefError, TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError(str(exc)) from None


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceError(f"cannot read instance {path}: {exc}") from None
    return instance_from_dict(doc, path.parent)


def instance_to_dict(instance: Instance) -> dict:
    """Graph part of an instance; the belief is taken from the source document
    when there is one."""
    edges = []
    for e in instance.graph.edges:
        d = {"id": e.id, "u": e.u, "v": e.v, "directed": e.directed}
        if e.stochastic:
            d["low_cost"] = e.low_cost
            d["high_cost"] = "blocked" if math.isinf(e.high_cost) else e.high_cost
            d["features"] = list(e.features)
        else:
            d["cost"] = e.cost
        edges.append(d)
    doc = {"vertices": list(instance.graph.vertices), "edges": edges,
           "start": instance.start, "goal": instance.goal}
    if instance.source and "belief" in instance.source:
        doc["belief"] = instance.source["belief"]
    elif isinstance(instance.belief, IndependentBelief):
        doc["belief"] = {"type": "independent", "p": dict(instance.belief.p)}
    if instance.alpha is not None:
        doc["alpha"] = instance.alpha
    return doc


def digest(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def policy_to_dot(policy: Policy, graph: Graph | None = None, name="policy") -> str:
    """Policy tree as Graphviz DOT: boxes for decisions (D-O / D-T labels),
    ellipses for observations, double circles for terminal outcomes."""
    lines = [f"digraph {name} {{", "\trankdir=LR;", '\tnode [fontname="Helvetica"];']
    counter = [0]

    def new_id(prefix):
        counter[0] += 1
        return f"{prefix}{counter[0]}"

    def walk(d: Decision, prob: float) -> str:
        me = new_id("or")
        info = "".join(d.info)
        lines.append(f'\t{me} [shape=box, label="{d.vertex} [{info}]\\n{d.action.label(graph)}"];')
        out = d.outcome
        if isinstance(out, Leaf):
            leaf = new_id("leaf")
            lines.append(f'\t{leaf} [shape=doublecircle, label="{_fmt(out.cost)}\\np={_fmt(prob)}"];')
            lines.append(f"\t{me} -> {leaf};")
            return me
        obs = new_id("and")
        lines.append(f'\t{obs} [shape=ellipse, label="{out.vertex} g={_fmt(out.g)}"];')
        lines.append(f"\t{me} -> {obs};")
        for b in out.branches:
            child = walk(b.decision, prob * b.prob)
            lines.append(f'\t{obs} -> {child} [label="{b.label} ({_fmt(b.prob)})"];')
        return me

    walk(policy.root, 1.0)
    lines.append("}")
    return "\n".join(lines) + "\n"
