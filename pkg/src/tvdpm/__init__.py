"""Time-varying Dirichlet process mixtures via a generalized Polya urn.

A forward model (urn with random deletion whose batch partitions stay
Ewens-distributed), stationary cluster-location kernels, online SMC and
batch MCMC inference, and a statistical validation suite.
"""

from .partitions import CountsVector, counts_of, enumerate_partitions, esf_log_prob, polya_urn_sample
from .urn import (
    ComposePolicy,
    MixturePolicy,
    SizeBiasedDeletion,
    SlidingWindow,
    UniformDeletion,
    UrnState,
    allocate_batch,
    apply_policy,
    delete_size_biased,
    delete_uniform,
    step,
)
from .kernels import (
    FiniteAtomic,
    GaussianAR1,
    GaussianKnownVar,
    LocationTrack,
    NormalInverseGamma,
    StaticKernel,
    SymmetricDirichlet,
    evolve_locations,
    sample_base,
    transition,
)
from .models import GaussianModel, KnownVarGaussianModel, ObservationBatch, TopicModel
from .smc import (
    DegeneracyError,
    DensityEstimate,
    FilterConfig,
    Particle,
    RhoWalk,
    WalkUniform,
    advance,
    ess,
    estimate_alive_mass,
    estimate_density,
    estimate_rho,
    init_particles,
    resample,
    run_filter,
)
from .mcmc import MCMCState, gibbs_allocation, gibbs_death_time, gibbs_locations, reconstruct_counts, relabel, sweep

__version__ = "0.1.0"
