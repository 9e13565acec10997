"""Policy evaluation: exact cost distributions, risk profiles across alpha, and
Monte Carlo rollouts under the belief's sequential observation law."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .graph import Instance
from .policy import Decision, IncompletePolicy, Leaf, Observe, Policy, exact_distribution
from .risk import DiscreteDistribution, cvar, expectation

__all__ = [
    "exact_distribution", "cvar_profile", "cross_cvar_matrix", "simulate",
    "Empirical", "bootstrap_cvar_se", "ks_distance",
]


def cvar_profile(policy: Policy, alphas) -> list[tuple[float, float]]:
    dist = exact_distribution(policy)
    return [(a, cvar(dist, a)) for a in alphas]


def cross_cvar_matrix(policies, alphas) -> np.ndarray:
    """M[i, j] = CVaR at ``alphas[i]`` of ``policies[j]``.

    When ``policies[j]`` was optimized for ``alphas[j]`` the diagonal is the
    minimum of its row.
    """
    dists = [exact_distribution(p) for p in policies]
    return np.array([[cvar(d, a) for d in dists] for a in alphas])


@dataclass
class Empirical:
    """Raw rollout outcome counts."""

    counts: dict[float, int]
    trials: int
    seed: int

    @property
    def distribution(self) -> DiscreteDistribution:
        return DiscreteDistribution.from_pairs(
            [(c, n / self.trials) for c, n in sorted(self.counts.items())])

    def arrays(self):
        costs = np.array(sorted(self.counts))
        return costs, np.array([self.counts[c] for c in costs])

    def mean(self) -> float:
        return expectation(self.distribution)

    def to_dict(self):
        return {
            "trials": self.trials,
            "seed": self.seed,
            "atoms": [[c, self.counts[c]] for c in sorted(self.counts)],
        }


def simulate(instance: Instance, policy: Policy, trials: int, seed: int = 0) -> Empirical:
    """Roll ``policy`` out ``trials`` times.

    Each observation is drawn from the belief's high-status probability at the
    current information set. Trials reaching the same observation are split
    between its outcomes with one binomial draw, which is the same law as
    walking them one by one.
    """
    belief = instance.belief.bind(instance.graph)
    rng = np.random.default_rng(seed)
    counts: Counter = Counter()
    stack = [(policy.root, trials)]
    while stack:
        d, n = stack.pop()
        if n == 0:
            continue
        if not isinstance(d, Decision):
            raise IncompletePolicy(f"unexpected node {d!r}")
        out = d.outcome
        if isinstance(out, Leaf):
            counts[out.cost] += n
        elif isinstance(out, Observe):
            p_high = belief.rho(out.edge, out.info)
            k = int(rng.binomial(n, p_high))
            by_label = {b.label: b.decision for b in out.branches}
            stack.append((by_label["H"], k))
            stack.append((by_label["L"], n - k))
        else:
            raise IncompletePolicy("policy has an open leaf")
    return Empirical(dict(counts), trials, seed)


def bootstrap_cvar_se(empirical: Empirical, alpha: float, reps=200, seed=0) -> float:
    """Standard error of the empirical CVaR by multinomial resampling of trials."""
    costs, counts = empirical.arrays()
    n = empirical.trials
    rng = np.random.default_rng(seed)
    stats = []
    for _ in range(reps):
        resampled = rng.multinomial(n, counts / n)
        d = DiscreteDistribution.from_pairs(
            [(c, k / n) for c, k in zip(costs, resampled) if k], normalize=True)
        stats.append(cvar(d, alpha))
    return float(np.std(stats, ddof=1))


def ks_distance(a: DiscreteDistribution, b: DiscreteDistribution) -> float:
    """sup_z |F_a(z) - F_b(z)| over the union of both supports."""
    grid = sorted(set(a.costs) | set(b.costs))

    def cdf(d, z):
        return sum(p for c, p in d.atoms if c <= z + 1e-9)

    return max(abs(cdf(a, z) - cdf(b, z)) for z in grid)
