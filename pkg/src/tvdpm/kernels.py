"""Base measures and stationary cluster-location kernels.

A box keeps its parameter trajectory for as long as it lives: a fresh base
draw at birth, then one kernel transition per step.  Every shipped kernel
leaves its base measure invariant, which is what keeps the mixture model
marginally stationary; `diagnostics.kernel_stationarity_test` checks that
property by simulation for any kernel/base pair, so new kernels only need
a `transition` method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "NormalInverseGamma",
    "GaussianKnownVar",
    "SymmetricDirichlet",
    "FiniteAtomic",
    "BaseMeasure",
    "StaticKernel",
    "GaussianAR1",
    "LocationTrack",
    "sample_base",
    "transition",
    "evolve_locations",
    "track_records",
]


@dataclass(frozen=True)
class NormalInverseGamma:
    """Conjugate prior for (mean, variance): variance ~ InvGamma(nu0/2,
    lambda0/2), mean | variance ~ Normal(mu0, variance/kappa0)."""

    mu0: float
    kappa0: float
    nu0: float
    lambda0: float

    def __post_init__(self):
        if min(self.kappa0, self.nu0, self.lambda0) <= 0:
            raise ValueError("kappa0, nu0, lambda0 must be positive")


@dataclass(frozen=True)
class GaussianKnownVar:
    """Normal prior over a scalar location, Normal(mu0, sigma0^2)."""

    mu0: float
    sigma0: float

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")


@dataclass(frozen=True)
class SymmetricDirichlet:
    """Dirichlet(theta_v/K, ..., theta_v/K) over topic vectors of size K."""

    theta_v: float
    vocab_size: int

    def __post_init__(self):
        if self.theta_v <= 0:
            raise ValueError("theta_v must be positive")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")


@dataclass(frozen=True)
class FiniteAtomic:
    """Discrete base measure on a fixed set of scalar atoms."""

    atoms: tuple[float, ...]
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("need at least one atom")
        w = self.weights or tuple(1.0 / len(self.atoms) for _ in self.atoms)
        if len(w) != len(self.atoms) or any(x <= 0 for x in w):
            raise ValueError("weights must be positive and match atoms")
        total = sum(w)
        object.__setattr__(self, "weights", tuple(x / total for x in w))


BaseMeasure = Union[NormalInverseGamma, GaussianKnownVar, SymmetricDirichlet, FiniteAtomic]


def sample_base(base: BaseMeasure, rng: np.random.Generator):
    """One i.i.d. draw from the base measure."""
    if isinstance(base, NormalInverseGamma):
        variance = (base.lambda0 / 2.0) / rng.gamma(base.nu0 / 2.0)
        mean = rng.normal(base.mu0, math.sqrt(variance / base.kappa0))
        return (mean, variance)
    if isinstance(base, GaussianKnownVar):
        return float(rng.normal(base.mu0, base.sigma0))
    if isinstance(base, SymmetricDirichlet):
        alpha = np.full(base.vocab_size, base.theta_v / base.vocab_size)
        return rng.dirichlet(alpha)
    if isinstance(base, FiniteAtomic):
        idx = rng.choice(len(base.atoms), p=base.weights)
        return float(base.atoms[idx])
    raise TypeError(f"unknown base measure {base!r}")


@dataclass(frozen=True)
class StaticKernel:
    """Identity transition: the location never moves while the box lives."""

    def transition(self, u_prev, rng: np.random.Generator):
        return u_prev


@dataclass(frozen=True)
class GaussianAR1:
    """AR(1) over a GaussianKnownVar base; the base is its stationary law."""

    phi: float
    base: GaussianKnownVar

    def __post_init__(self):
        if not -1.0 <= self.phi <= 1.0:
            raise ValueError("phi must lie in [-1, 1]")

    @property
    def noise_scale(self) -> float:
        return math.sqrt(1.0 - self.phi * self.phi) * self.base.sigma0

    def transition(self, u_prev, rng: np.random.Generator):
        mu0 = self.base.mu0
        return float(self.phi * (u_prev - mu0) + mu0 + self.noise_scale * rng.standard_normal())


def transition(kernel, u_prev, rng: np.random.Generator):
    """One kernel draw; kernels are duck-typed via a `transition` method."""
    return kernel.transition(u_prev, rng)


@dataclass
class LocationTrack:
    """Parameter trajectory of one box: values[i] is the value at time
    birth_time + i."""

    label: int
    birth_time: int
    values: list

    def value_at(self, t: int):
        return self.values[t - self.birth_time]

    @property
    def last(self):
        return self.values[-1]


def evolve_locations(
    tracks: dict[int, LocationTrack],
    kernel,
    base: BaseMeasure,
    newborn_labels,
    time: int,
    rng: np.random.Generator,
) -> dict[int, LocationTrack]:
    """Extend all alive tracks one step and open tracks for newborn labels."""
    out = {}
    for label, tr in tracks.items():
        values = list(tr.values)
        values.append(transition(kernel, values[-1], rng))
        out[label] = LocationTrack(label, tr.birth_time, values)
    for label in newborn_labels:
        if label in out or label in tracks:
            raise ValueError(f"newborn label {label} already tracked")
        out[label] = LocationTrack(label, time, [sample_base(base, rng)])
    return out


def _as_list(value) -> list:
    if isinstance(value, np.ndarray):
        return [float(x) for x in value]
    if isinstance(value, (tuple, list)):
        return [float(x) for x in value]
    return [float(value)]


def track_records(tracks: dict[int, LocationTrack]):
    """Yield JSON-ready rows {"label", "t", "value"} for every tracked step."""
    for label in sorted(tracks):
        tr = tracks[label]
        for i, v in enumerate(tr.values):
            yield {"label": label, "t": tr.birth_time + i, "value": _as_list(v)}
