"""Sequential Monte Carlo for the time-varying DPM.

One step per particle: sample the deletion (and the random-walk survival
probability when enabled), propose the batch's allocations, propose
locations for newborn boxes, and accumulate the importance-weight ratio;
then normalize, check the effective sample size, and resample
systematically when it drops below the configured fraction.

Weights live in log space throughout.  Each particle slot owns an
independent RNG stream spawned from the caller's generator at
initialization, so a fixed master seed fixes the run regardless of how the
per-particle work would be scheduled; resampling draws from a dedicated
stream and is a synchronization barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .kernels import GaussianAR1, StaticKernel
from .models import GaussianModel, KnownVarGaussianModel, ObservationBatch, normal_logpdf
from .urn import (
    ComposePolicy,
    DeletionPolicy,
    MixturePolicy,
    UniformDeletion,
    UrnState,
    apply_policy,
    policy_requires_ages,
)

__all__ = [
    "WalkUniform",
    "RhoWalk",
    "FilterConfig",
    "Particle",
    "ParticlePopulation",
    "DensityEstimate",
    "DegeneracyError",
    "init_particles",
    "advance",
    "ess",
    "resample",
    "estimate_density",
    "estimate_alive_mass",
    "estimate_rho",
    "run_filter",
]

_RHO_EPS = 1e-6


@dataclass(frozen=True)
class WalkUniform:
    """Uniform deletion whose survival probability is the particle's current
    random-walk value rather than a fixed constant."""


@dataclass(frozen=True)
class RhoWalk:
    """Beta random walk rho_t ~ B(a_rho, a_rho*(1-rho)/rho), which preserves
    the mean and has variance rho^2*(1-rho)/(a_rho+rho)."""

    a_rho: float
    rho0: float

    def __post_init__(self):
        if self.a_rho <= 0:
            raise ValueError("a_rho must be positive")
        if not 0.0 < self.rho0 < 1.0:
            raise ValueError("rho0 must lie in (0, 1)")

    def sample(self, rho_prev: float, rng: np.random.Generator) -> float:
        rho_prev = min(max(rho_prev, _RHO_EPS), 1.0 - _RHO_EPS)
        draw = rng.beta(self.a_rho, self.a_rho * (1.0 - rho_prev) / rho_prev)
        return min(max(draw, _RHO_EPS), 1.0 - _RHO_EPS)


def resolve_policy(policy, rho: float | None) -> DeletionPolicy:
    """Substitute the particle's walk value into WalkUniform placeholders."""
    if isinstance(policy, WalkUniform):
        if rho is None:
            raise ValueError("policy uses the rho walk but none is configured")
        return UniformDeletion(rho)
    if isinstance(policy, MixturePolicy):
        return MixturePolicy(
            policy.alpha,
            resolve_policy(policy.policy_a, rho),
            resolve_policy(policy.policy_b, rho),
        )
    if isinstance(policy, ComposePolicy):
        return ComposePolicy([resolve_policy(p, rho) for p in policy.policies])
    return policy


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int
    theta: float
    policy: object
    proposal: str = "conjugate"
    ess_threshold_fraction: float = 0.5
    rho_walk: RhoWalk | None = None
    grid: np.ndarray | None = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0.0 < self.ess_threshold_fraction <= 1.0:
            raise ValueError("ess_threshold_fraction must lie in (0, 1]")
        if self.proposal not in ("prior", "conjugate"):
            raise ValueError("proposal must be 'prior' or 'conjugate'")


@dataclass
class Particle:
    """One urn trajectory hypothesis: alive boxes, their current parameter
    values (keys match the urn's boxes), and the walk state."""

    urn: UrnState
    locations: dict[int, object]
    rho: float | None = None

    def copy(self) -> "Particle":
        return Particle(urn=self.urn.copy(), locations=dict(self.locations), rho=self.rho)

    @property
    def total_mass(self) -> int:
        return self.urn.total_mass


class DegeneracyError(RuntimeError):
    """All particles reached zero weight: the model cannot explain the batch."""

    def __init__(self, time_index: int):
        super().__init__(f"all particle weights vanished at t={time_index}")
        self.time_index = time_index


@dataclass
class ParticlePopulation:
    particles: list[Particle]
    log_weights: np.ndarray
    rngs: list[np.random.Generator]
    resample_rng: np.random.Generator
    time: int = 0

    @property
    def n(self) -> int:
        return len(self.particles)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def init_particles(config: FilterConfig, rng: np.random.Generator) -> ParticlePopulation:
    """N particles with empty urns and equal weights; one spawned RNG stream
    per particle slot plus one for resampling."""
    streams = rng.spawn(config.n_particles + 1)
    retain = policy_requires_ages(config.policy)
    particles = [
        Particle(
            urn=UrnState.empty(config.theta, retain_ages=retain),
            locations={},
            rho=config.rho_walk.rho0 if config.rho_walk else None,
        )
        for _ in range(config.n_particles)
    ]
    log_w = np.full(config.n_particles, -math.log(config.n_particles))
    return ParticlePopulation(
        particles=particles,
        log_weights=log_w,
        rngs=streams[: config.n_particles],
        resample_rng=streams[config.n_particles],
    )


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions, side="right").clip(0, n - 1)


def resample(population: ParticlePopulation, rng: np.random.Generator | None = None) -> None:
    """Systematic resampling in place; weights reset to 1/N.  Particle slots
    keep their RNG streams, only states are copied."""
    rng = rng if rng is not None else population.resample_rng
    idx = systematic_indices(population.weights(), rng)
    population.particles = [population.particles[i].copy() for i in idx]
    population.log_weights = np.full(population.n, -math.log(population.n))


def _kernel_is_static(kernel) -> bool:
    return isinstance(kernel, StaticKernel)


def _propose_batch(
    boxes: dict[int, int],
    locations: dict[int, object],
    next_label: int,
    values,
    model,
    theta: float,
    conjugate: bool,
    rng: np.random.Generator,
):
    """Sequentially assign each observation to an alive box or a new one.

    Returns (assignments, newborn stats, log Pr(c|m) - log q(c)).  Scores for
    the conjugate proposal are (box mass) x likelihood at the box's current
    parameter for boxes that already have one, and the collapsed predictive
    of the box's within-batch observations for boxes opened this batch; the
    new-box score is theta x the prior predictive.
    """
    labels = list(boxes)
    masses = [float(boxes[l]) for l in labels]
    locs = [locations[l] for l in labels]
    newborn: dict[int, list] = {}
    assignments: list[int] = []
    log_prior_minus_q = 0.0
    for z in values:
        total = sum(masses)
        log_scores = []
        # survivors / within-batch boxes
        for j, lab in enumerate(labels):
            lm = math.log(masses[j])
            if conjugate:
                if locs[j] is not None:
                    lm += model.log_likelihood(z, locs[j])
                else:
                    lm += model.predictive_logp(newborn[lab], z)
            log_scores.append(lm)
        new_score = math.log(theta)
        if conjugate:
            new_score += model.predictive_logp(model.empty_stats(), z)
        log_scores.append(new_score)
        m = max(log_scores)
        probs = [math.exp(s - m) for s in log_scores]
        norm = sum(probs)
        u = rng.random() * norm
        acc = 0.0
        pick = len(log_scores) - 1
        for j, p in enumerate(probs):
            acc += p
            if u < acc:
                pick = j
                break
        log_q = math.log(probs[pick] / norm)
        if pick == len(labels):
            lab = next_label
            next_label += 1
            labels.append(lab)
            masses.append(1.0)
            locs.append(None)
            stats = model.empty_stats()
            model.stats_add(stats, z)
            newborn[lab] = stats
            log_prior = math.log(theta) - math.log(total + theta)
        else:
            lab = labels[pick]
            log_prior = math.log(masses[pick]) - math.log(total + theta)
            masses[pick] += 1.0
            if locs[pick] is None:
                model.stats_add(newborn[lab], z)
        assignments.append(lab)
        log_prior_minus_q += log_prior - log_q
    return assignments, newborn, log_prior_minus_q


def advance(
    population: ParticlePopulation,
    batch: ObservationBatch,
    model,
    kernel,
    config: FilterConfig,
    *,
    debug: bool = False,
) -> dict:
    """One filtering step over the whole population; returns step diagnostics
    {"t", "ess", "resampled"} plus, with debug, the raw per-particle weight
    increments and allocations.  Raises DegeneracyError if every particle's
    weight vanishes."""
    conjugate = config.proposal == "conjugate"
    static = _kernel_is_static(kernel)
    if not static and not isinstance(model, KnownVarGaussianModel):
        raise ValueError("non-static kernels are supported for the known-variance model only")
    n_new = np.empty(population.n)
    debug_assignments: list[list[int]] = []
    for i, particle in enumerate(population.particles):
        rng = population.rngs[i]
        log_inc = 0.0
        if config.rho_walk is not None:
            particle.rho = config.rho_walk.sample(particle.rho, rng)
        policy = resolve_policy(config.policy, particle.rho)
        urn = apply_policy(particle.urn, policy, rng)
        survivors = set(urn.boxes)
        locations = {lab: particle.locations[lab] for lab in survivors}
        assignments, newborn, log_pq = _propose_batch(
            urn.boxes,
            locations,
            urn.next_label,
            batch.values,
            model,
            config.theta,
            conjugate,
            rng,
        )
        log_inc += log_pq
        # commit allocations to the urn state
        t_new = urn.time + 1
        for lab in assignments:
            if lab in urn.boxes:
                urn.boxes[lab] += 1
            else:
                urn.boxes[lab] = 1
                urn.next_label = lab + 1
            if urn.births is not None:
                cells = urn.births.setdefault(lab, {})
                cells[t_new] = cells.get(t_new, 0) + 1
        urn.time = t_new
        # locations: newborn boxes from the conjugate posterior (or the base
        # under the prior proposal); static survivors keep their value with
        # unit ratio, AR1 survivors move by the kernel (used boxes through
        # the exact one-step conditional with its ratio).
        used = set(assignments)
        for lab, stats in newborn.items():
            if conjugate:
                u = model.posterior_sample_from_stats(stats, rng)
                log_inc += model.base_log_density(u) - model.posterior_log_density(stats, u)
            else:
                u = model.posterior_sample_from_stats(model.empty_stats(), rng)
            locations[lab] = u
        if not static:
            for lab in survivors:
                prev = locations[lab]
                if lab in used and conjugate:
                    u, log_ratio = _ar1_posterior_step(
                        kernel, model, prev,
                        [z for z, a in zip(batch.values, assignments) if a == lab],
                        rng,
                    )
                    log_inc += log_ratio
                else:
                    u = kernel.transition(prev, rng)
                locations[lab] = u
        # data likelihood at the final locations
        for z, lab in zip(batch.values, assignments):
            log_inc += model.log_likelihood(z, locations[lab])
        particle.urn = urn
        particle.locations = locations
        n_new[i] = log_inc
        if debug:
            debug_assignments.append(list(assignments))
    population.log_weights = population.log_weights + n_new
    norm = logsumexp(population.log_weights)
    if not np.isfinite(norm):
        raise DegeneracyError(batch.time)
    population.log_weights = population.log_weights - norm
    population.time = batch.time
    n_eff = ess(population.weights())
    resampled = n_eff <= config.ess_threshold_fraction * population.n
    if resampled:
        resample(population)
    info = {"t": batch.time, "ess": n_eff, "resampled": resampled}
    if debug:
        info["log_increments"] = n_new
        info["assignments"] = debug_assignments
    return info


def _ar1_posterior_step(kernel: GaussianAR1, model, u_prev, obs, rng):
    """Exact conditional for an AR1-surviving, used box under the known
    variance model, with its importance ratio log p/q."""
    mu0 = kernel.base.mu0
    prior_mean = mu0 + kernel.phi * (u_prev - mu0)
    prior_var = kernel.noise_scale ** 2
    obs_var = model.obs_sigma ** 2
    prec = 1.0 / prior_var + len(obs) / obs_var
    post_var = 1.0 / prec
    post_mean = (prior_mean / prior_var + sum(obs) / obs_var) * post_var
    u = rng.normal(post_mean, math.sqrt(post_var))
    log_ratio = float(
        normal_logpdf(u, prior_mean, prior_var) - normal_logpdf(u, post_mean, post_var)
    )
    return float(u), log_ratio


@dataclass
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid))


def estimate_density(population: ParticlePopulation, grid: np.ndarray, model) -> DensityEstimate:
    """Posterior-mean predictive density on a grid: per particle, alive boxes
    weighted m_k/(M+theta) at their current parameters plus theta/(M+theta)
    on the base predictive, averaged with the particle weights."""
    if isinstance(model, GaussianModel):
        comp = lambda u: (u[0], u[1])
    elif isinstance(model, KnownVarGaussianModel) and not model._atomic:
        comp = lambda u: (u, model.obs_sigma ** 2)
    else:
        raise ValueError("density estimation needs a Gaussian observation model")
    grid = np.asarray(grid, dtype=float)
    weights = population.weights()
    theta = population.particles[0].urn.theta
    w_box, means, varis = [], [], []
    base_w = 0.0
    for w, particle in zip(weights, population.particles):
        total = particle.total_mass
        denom = total + theta
        base_w += w * theta / denom
        for lab, m in particle.urn.boxes.items():
            mu, var = comp(particle.locations[lab])
            w_box.append(w * m / denom)
            means.append(mu)
            varis.append(var)
    values = base_w * model.predictive_grid(model.empty_stats(), grid)
    if w_box:
        wb = np.asarray(w_box)[:, None]
        mu = np.asarray(means)[:, None]
        var = np.asarray(varis)[:, None]
        values = values + (wb * np.exp(normal_logpdf(grid[None, :], mu, var))).sum(axis=0)
    return DensityEstimate(grid=grid, values=values)


def estimate_alive_mass(population: ParticlePopulation) -> float:
    """Posterior-mean total alive allocation mass."""
    return float(sum(w * p.total_mass for w, p in zip(population.weights(), population.particles)))


def estimate_rho(population: ParticlePopulation) -> float:
    if population.particles[0].rho is None:
        raise ValueError("rho walk is not enabled")
    return float(sum(w * p.rho for w, p in zip(population.weights(), population.particles)))


def run_filter(
    batches,
    model,
    kernel,
    config: FilterConfig,
    rng: np.random.Generator,
    *,
    with_density: bool | None = None,
):
    """Filter a whole observation stream, yielding one record per step."""
    population = init_particles(config, rng)
    emit_density = config.grid is not None if with_density is None else with_density
    for batch in batches:
        info = advance(population, batch, model, kernel, config)
        record = {
            "t": batch.time,
            "ess": info["ess"],
            "resampled": info["resampled"],
            "n_alive": estimate_alive_mass(population),
        }
        if config.rho_walk is not None:
            record["rho_post"] = estimate_rho(population)
        if emit_density:
            est = estimate_density(population, config.grid, model)
            record["density"] = {
                "grid": [float(x) for x in est.grid],
                "values": [float(v) for v in est.values],
            }
        yield record, population
