"""Exact risk measures on finite discrete cost distributions."""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass

COST_TOL = 1e-9
PROB_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteDistribution:
    """Sorted (cost, probability) atoms. Build with :meth:`from_pairs`."""

    atoms: tuple[tuple[float, float], ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], normalize=False) -> DiscreteDistribution:
        """Merge costs closer than ``COST_TOL`` and drop zero-probability atoms."""
        items = sorted((float(c), float(p)) for c, p in pairs)
        for c, p in items:
            if not math.isfinite(c):
                raise ValueError(f"non-finite cost {c}")
            if p < 0:
                raise ValueError(f"negative probability {p}")
        merged: list[list[float]] = []
        for c, p in items:
            if merged and c - merged[-1][0] <= COST_TOL:
                merged[-1][1] += p
            else:
                merged.append([c, p])
        total = math.fsum(p for _, p in merged)
        if normalize:
            if total <= 0:
                raise ValueError("distribution has no mass")
            merged = [[c, p / total] for c, p in merged]
        elif abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}")
        return cls(tuple((c, p) for c, p in merged if p > 0))

    @property
    def costs(self) -> list[float]:
        return [c for c, _ in self.atoms]

    @property
    def probs(self) -> list[float]:
        return [p for _, p in self.atoms]

    def max_cost(self) -> float:
        return self.atoms[-1][0]

    def min_cost(self) -> float:
        return self.atoms[0][0]

    def shifted(self, c: float) -> DiscreteDistribution:
        return DiscreteDistribution(tuple((x + c, p) for x, p in self.atoms))

    def scaled(self, lam: float) -> DiscreteDistribution:
        return DiscreteDistribution(tuple((x * lam, p) for x, p in self.atoms))

    def to_list(self):
        return [[c, p] for c, p in self.atoms]


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha {alpha} out of range (0, 1]")


def expectation(dist: DiscreteDistribution) -> float:
    return math.fsum(c * p for c, p in dist.atoms)


def truncated_expectation(dist: DiscreteDistribution, s: float) -> float:
    """E[(Z - s)^+]."""
    return math.fsum((c - s) * p for c, p in dist.atoms if c > s)


def var(dist: DiscreteDistribution, alpha: float) -> float:
    """Smallest atom z with P(Z <= z) >= 1 - alpha."""
    _check_alpha(alpha)
    target = 1.0 - alpha
    cum = 0.0
    for c, p in dist.atoms:
        cum += p
        if cum >= target - 1e-12:
            return c
    return dist.atoms[-1][0]


def cvar_objective(dist: DiscreteDistribution, alpha: float, s: float) -> float:
    return s + truncated_expectation(dist, s) / alpha


def cvar(dist: DiscreteDistribution, alpha: float) -> float:
    """Minimum over atom costs s of s + E[(Z - s)^+] / alpha."""
    _check_alpha(alpha)
    return min(cvar_objective(dist, alpha, c) for c in dist.costs)


def cvar_tail_average(dist: DiscreteDistribution, alpha: float) -> float:
    """Mean of the worst ``alpha`` probability mass; a second, independent route
    to the same number as :func:`cvar`."""
    _check_alpha(alpha)
    remaining = alpha
    acc = []
    for c, p in reversed(dist.atoms):
        take = min(p, remaining)
        acc.append(c * take)
        remaining -= take
        if remaining <= 0:
            break
    if remaining > 0:
        # rounding left some tail mass unassigned; it belongs to the lowest atom
        acc.append(dist.atoms[0][0] * remaining)
    return math.fsum(acc) / alpha
