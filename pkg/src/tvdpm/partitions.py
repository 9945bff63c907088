"""Random partitions of n, the Ewens sampling formula, and the static Polya urn.

Everything else in the package is ultimately checked against this module:
the urn processes must leave the partition law invariant, and that law is
computable here exactly (small n, by enumeration) or in closed form.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "CountsVector",
    "counts_of",
    "enumerate_partitions",
    "esf_log_prob",
    "polya_urn_sample",
    "validate_allocation",
]

MAX_ENUMERATION_N = 25


@dataclass(frozen=True)
class CountsVector:
    """Partition of ``n`` encoded by box-size counts.

    ``counts[j-1]`` is the number of boxes holding exactly ``j`` balls, so
    ``sum(j * counts[j-1]) == n``.
    """

    counts: tuple[int, ...]

    def __post_init__(self):
        if not self.counts:
            raise ValueError("counts must be non-empty")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")
        n = self.n
        if sum(j * c for j, c in enumerate(self.counts, start=1)) != n:
            raise ValueError(f"counts {self.counts} do not encode a partition of {n}")

    @property
    def n(self) -> int:
        """Number of balls (length of the counts vector by convention)."""
        return len(self.counts)

    @property
    def num_boxes(self) -> int:
        return sum(self.counts)

    @classmethod
    def from_box_sizes(cls, sizes: Iterable[int]) -> "CountsVector":
        sizes = list(sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError("box sizes must be positive and non-empty")
        n = sum(sizes)
        counts = [0] * n
        for s in sizes:
            counts[s - 1] += 1
        return cls(tuple(counts))

    def box_sizes(self) -> tuple[int, ...]:
        """Box sizes in descending order, e.g. (2, 2, 1) for n = 5."""
        sizes = []
        for j, c in enumerate(self.counts, start=1):
            sizes.extend([j] * c)
        return tuple(sorted(sizes, reverse=True))

    def to_json(self) -> list[int]:
        return list(self.counts)

    @classmethod
    def from_json(cls, data: Sequence[int]) -> "CountsVector":
        return cls(tuple(int(x) for x in data))


def validate_allocation(labels: Sequence[int]) -> None:
    """Check order-of-appearance labelling: c_1 = 1, each new label = max + 1."""
    seen_max = 0
    for c in labels:
        if c == seen_max + 1:
            seen_max += 1
        elif not (1 <= c <= seen_max):
            raise ValueError(f"label {c} breaks order-of-appearance labelling")


def counts_of(labels: Sequence) -> CountsVector:
    """Partition induced by an allocation vector (any hashable labels)."""
    if not labels:
        raise ValueError("empty allocation")
    freq = Counter(labels)
    return CountsVector.from_box_sizes(freq.values())


def esf_log_prob(a: CountsVector, theta: float) -> float:
    """Log-probability of a partition under the Ewens sampling formula.

    log P_n(a) = log n! - sum_{i=1}^{n} log(theta + i - 1)
               + sum_j [a_j log theta - a_j log j - log a_j!]

    Evaluated via log-gamma so n in the thousands is fine.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    n = a.n
    out = gammaln(n + 1) - (gammaln(theta + n) - gammaln(theta))
    for j, aj in enumerate(a.counts, start=1):
        if aj:
            out += aj * (np.log(theta) - np.log(j)) - gammaln(aj + 1)
    return float(out)


def polya_urn_sample(n: int, theta: float, rng: np.random.Generator) -> list[int]:
    """One draw of n seatings from the standard Polya urn (CRP).

    Returns an allocation vector with labels in order of appearance: the
    k-th ball joins box i with probability m_i / (k - 1 + theta) and opens
    a new box with probability theta / (k - 1 + theta).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if theta <= 0:
        raise ValueError("theta must be positive")
    labels = [1]
    sizes = [1]
    for k in range(2, n + 1):
        u = rng.random() * (k - 1 + theta)
        acc = 0.0
        chosen = 0
        for i, m in enumerate(sizes, start=1):
            acc += m
            if u < acc:
                chosen = i
                break
        if chosen:
            sizes[chosen - 1] += 1
        else:
            sizes.append(1)
            chosen = len(sizes)
        labels.append(chosen)
    return labels


def enumerate_partitions(n: int) -> list[CountsVector]:
    """All partitions of n as counts vectors, lexicographic in the counts.

    Guarded at n <= 25 (p(25) = 1958) to keep exhaustive tests honest about
    their own cost.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"enumeration capped at n = {MAX_ENUMERATION_N}")

    results: list[CountsVector] = []

    def descend(remaining: int, max_part: int, parts: list[int]):
        if remaining == 0:
            counts = [0] * n
            for p in parts:
                counts[p - 1] += 1
            results.append(CountsVector(tuple(counts)))
            return
        for p in range(min(remaining, max_part), 0, -1):
            parts.append(p)
            descend(remaining - p, p, parts)
            parts.pop()

    descend(n, n, [])
    results.sort(key=lambda cv: cv.counts)
    return results
