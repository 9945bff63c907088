import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats as sps

from tvdpm.kernels import FiniteAtomic, GaussianAR1, GaussianKnownVar
from tvdpm.models import KnownVarGaussianModel
from tvdpm.mcmc import (
    MCMCState,
    gibbs_death_time,
    gibbs_locations,
    reconstruct_counts,
    relabel,
    sweep,
)
from tvdpm.partitions import counts_of, enumerate_partitions, esf_log_prob

from .oracles import canonical_state_key, enumerate_toy_posterior, forward_alive_counts, tv


class TestReconstructCounts:
    def test_single_unit_lifetime(self):
        after_batch, after_deletion = reconstruct_counts([[1], [2], [2]], [[2], [2], [3]])
        # unit (0, t=1) with d=2: alive at times 1 and 2, gone at 3
        assert after_batch[0] == {1: 1}
        assert after_batch[1] == {1: 1, 2: 1}
        assert after_batch[2] == {2: 1}
        assert after_deletion[1] == {1: 1}
        assert after_deletion[2] == {}

    def test_immediate_deaths(self):
        after_batch, after_deletion = reconstruct_counts([[1], [2]], [[1], [2]])
        assert after_batch[0] == {1: 1} and after_batch[1] == {2: 1}
        assert after_deletion[1] == {}

    def test_death_before_birth_rejected(self):
        with pytest.raises(ValueError):
            reconstruct_counts([[1], [1]], [[0], [2]])

    def test_forward_replay_oracle(self, rng):
        for _ in range(1000):
            rho = float(rng.random())
            state = MCMCState.from_prior(3, 2, 1.2, rho, rng)
            after_batch, _ = reconstruct_counts(state.c, state.d)
            assert after_batch == forward_alive_counts(state.c, state.d, 3)


class TestPriorSimulation:
    def test_caches_consistent(self, rng):
        for _ in range(50):
            state = MCMCState.from_prior(4, 3, 1.0, 0.5, rng)
            state.check_caches()

    def test_rho_one_all_capped(self, rng):
        state = MCMCState.from_prior(3, 2, 1.0, 1.0, rng)
        assert all(d == 4 for row in state.d for d in row)

    def test_rho_zero_all_die_at_birth(self, rng):
        state = MCMCState.from_prior(3, 2, 1.0, 0.0, rng)
        assert all(state.d[t][k] == t + 1 for t in range(3) for k in range(2))


class TestDeathTimeMove:
    def test_rho_one_forces_cap(self, rng):
        state = MCMCState.from_prior(3, 2, 1.0, 1.0, rng)
        for t in range(1, 4):
            for k in range(2):
                gibbs_death_time(state, k, t, rng)
        assert all(d == 4 for row in state.d for d in row)

    def test_rho_zero_forces_birth_death(self, rng):
        state = MCMCState.from_prior(3, 2, 1.0, 0.0, rng)
        for t in range(1, 4):
            for k in range(2):
                gibbs_death_time(state, k, t, rng)
        assert all(state.d[t][k] == t + 1 for t in range(3) for k in range(2))

    def test_lifetime_prior_geometric(self, rng):
        # no data: d - t for unit (0, 1) follows the truncated geometric
        T, rho = 3, 0.6
        state = MCMCState.from_prior(T, 3, 1.0, rho, rng)
        hist = Counter()
        n_sweeps = 30_000
        for _ in range(n_sweeps):
            sweep(state, rng)
            hist[state.d[0][0] - 1] += 1
        emp = {k: v / n_sweeps for k, v in hist.items()}
        exact = {j: rho**j * (1 - rho) for j in range(T)}
        exact[T] = rho**T
        assert tv(emp, exact) < 0.02


class TestAllocationMove:
    def test_t1_reduces_to_crp_gibbs(self, rng):
        # reference: textbook collapsed CRP Gibbs on one batch
        theta = 1.0
        model = KnownVarGaussianModel(GaussianKnownVar(0.0, 2.0), 1.0)
        obs = (-1.0, -0.8, 1.2, 1.4)
        n = len(obs)

        def reference_chain(n_sweeps, rng):
            labels = [1, 1, 1, 1]
            freq = Counter()
            for _ in range(n_sweeps):
                for i in range(n):
                    others = [labels[j] for j in range(n) if j != i]
                    masses = Counter(others)
                    cands = list(masses)
                    scores = [
                        masses[c]
                        * math.exp(
                            model.predictive_log_prob(
                                obs[i], [obs[j] for j in range(n) if j != i and labels[j] == c]
                            )
                        )
                        for c in cands
                    ]
                    scores.append(theta * math.exp(model.predictive_log_prob(obs[i], [])))
                    u = rng.random() * sum(scores)
                    acc = 0.0
                    pick = len(scores) - 1
                    for ci, sc in enumerate(scores):
                        acc += sc
                        if u < acc:
                            pick = ci
                            break
                    labels[i] = cands[pick] if pick < len(cands) else max(labels) + 1
                freq[tuple(sorted(Counter(labels).values(), reverse=True))] += 1
            return {k: v / n_sweeps for k, v in freq.items()}

        n_sweeps = 30_000
        ref = reference_chain(n_sweeps, rng)
        state = MCMCState.from_prior(
            1, n, theta, 0.5, rng, observations=[obs], model=model, mode="collapsed"
        )
        freq = Counter()
        for _ in range(n_sweeps):
            sweep(state, rng)
            freq[counts_of(state.c[0]).box_sizes()] += 1
        ours = {k: v / n_sweeps for k, v in freq.items()}
        assert tv(ours, ref) < 0.02

    def test_caches_survive_data_sweeps(self, rng):
        model = KnownVarGaussianModel(FiniteAtomic((-1.0, 1.0)), 0.8)
        obs = [(-0.9, 1.1), (0.2, -1.3), (1.0, 0.9)]
        state = MCMCState.from_prior(
            3, 2, 1.0, 0.5, rng, observations=obs, model=model, mode="collapsed"
        )
        for _ in range(200):
            sweep(state, rng)
        state.check_caches()


class TestRelabel:
    def make_gapped_state(self):
        # box 1 used at t=1 (dies at 1) and again at t=3: a gap at t=2
        c = [[1], [2], [1]]
        d = [[1], [2], [3]]
        return MCMCState.from_tables(c, d, 1.0, 0.5, canonicalize=False)

    def test_contiguous_label_noop(self):
        state = MCMCState.from_tables([[1], [1]], [[2], [2]], 1.0, 0.5, canonicalize=False)
        before = [list(r) for r in state.c]
        relabel(state, 1, 2)
        assert state.c == before

    def test_gap_splits_second_segment(self):
        state = self.make_gapped_state()
        relabel(state, 1, 2)
        assert state.c[0][0] == 1
        assert state.c[2][0] not in (1, 2)
        state.check_caches()

    def test_from_tables_canonicalizes(self):
        state = MCMCState.from_tables([[1], [2], [1]], [[1], [2], [3]], 1.0, 0.5)
        state.check_caches()

    def test_sweeps_preserve_contiguity(self, rng):
        state = MCMCState.from_prior(4, 2, 1.0, 0.5, rng)
        for _ in range(1000):
            sweep(state, rng)
            state.check_caches()


class TestPriorInvariance:
    def test_partition_marginals_stay_esf(self, rng):
        # reduced version of the acceptance criterion
        n, T, theta, rho = 2, 2, 1.0, 0.6
        state = MCMCState.from_prior(T, n, theta, rho, rng)
        per_t = [Counter() for _ in range(T)]
        n_sweeps = 30_000
        for _ in range(n_sweeps):
            sweep(state, rng)
            for t in range(T):
                per_t[t][counts_of(state.c[t]).box_sizes()] += 1
        exact = {p.box_sizes(): math.exp(esf_log_prob(p, theta)) for p in enumerate_partitions(n)}
        for t in range(T):
            emp = {k: v / n_sweeps for k, v in per_t[t].items()}
            assert tv(emp, exact) < 0.05


class TestToyPosterior:
    def test_matches_enumeration_smoke(self, rng):
        # reduced version of the acceptance criterion
        theta, rho, sigma = 1.0, 0.5, 0.7
        atoms, weights = (-1.0, 1.5), (0.5, 0.5)
        obs = [(-0.8, 1.2), (1.4, -1.1)]
        exact = enumerate_toy_posterior(obs, theta, rho, atoms, weights, sigma)
        model = KnownVarGaussianModel(FiniteAtomic(atoms, weights), sigma)
        state = MCMCState.from_prior(
            2, 2, theta, rho, rng, observations=obs, model=model, mode="collapsed"
        )
        freq = Counter()
        n_sweeps = 30_000
        for _ in range(n_sweeps):
            sweep(state, rng)
            freq[canonical_state_key(state)] += 1
        emp = {k: v / n_sweeps for k, v in freq.items()}
        assert tv(emp, exact) < 0.08


class TestLocations:
    def test_collapsed_mode_rejects(self, rng):
        state = MCMCState.from_prior(2, 2, 1.0, 0.5, rng)
        with pytest.raises(ValueError):
            gibbs_locations(state, 1, 1, rng)

    def test_static_single_obs_conjugate(self, rng):
        # sigma0 == obs_sigma: posterior mean z/2, variance obs_var/2
        model = KnownVarGaussianModel(GaussianKnownVar(0.0, 1.0), 1.0)
        obs = [(2.0,)]
        state = MCMCState.from_tables(
            [[1]], [[2]], 1.0, 0.5, observations=obs, model=model, mode="static",
            rng=rng,
        )
        draws = []
        for _ in range(20_000):
            gibbs_locations(state, 1, 1, rng)
            draws.append(state.locs[1])
        draws = np.array(draws)
        se = draws.std() / math.sqrt(len(draws))
        assert abs(draws.mean() - 1.0) < 3 * se
        assert draws.var() == pytest.approx(0.5, rel=0.05)

    def test_ar1_no_data_marginal_stays_base(self, rng):
        # prior-invariance of the location bridge moves
        base = GaussianKnownVar(0.0, 1.0)
        kernel = GaussianAR1(0.7, base)
        state = MCMCState.from_prior(3, 2, 1.0, 0.7, rng, mode="ar1", kernel=kernel)
        pooled = []
        for _ in range(10_000):
            sweep(state, rng)
            lab = next(iter(state.m_post[1]), None)
            if lab is not None:
                pooled.append(state.locs[lab][2])
        assert sps.kstest(np.array(pooled), sps.norm.cdf).pvalue > 0.01

    def test_ar1_trajectories_cover_alive_interval(self, rng):
        base = GaussianKnownVar(0.0, 1.0)
        kernel = GaussianAR1(0.9, base)
        model = KnownVarGaussianModel(base, 1.0)
        obs = [(0.5, -0.5), (1.0, 0.0), (-1.0, 0.3), (0.1, 0.2)]
        state = MCMCState.from_prior(
            4, 2, 1.0, 0.6, rng, observations=obs, model=model, mode="ar1", kernel=kernel
        )
        for _ in range(100):
            sweep(state, rng)
            for lab in state.blocks:
                lo, hi = state.alive_interval(lab)
                assert set(state.locs[lab]) == set(range(lo, hi + 1))


class TestSummaries:
    def test_alive_boxes_and_loglik(self, rng):
        model = KnownVarGaussianModel(FiniteAtomic((-1.0, 1.0)), 0.8)
        obs = [(-0.9, 1.1), (0.2, -1.3)]
        state = MCMCState.from_prior(
            2, 2, 1.0, 0.5, rng, observations=obs, model=model, mode="collapsed"
        )
        ks = state.alive_boxes_per_time()
        assert len(ks) == 2 and all(k >= 1 for k in ks)
        assert np.isfinite(state.log_marginal_likelihood())

    def test_checkpoint_shape(self, rng):
        state = MCMCState.from_prior(2, 2, 1.0, 0.5, rng)
        ck = state.to_checkpoint()
        assert ck["T"] == 2 and ck["n"] == 2
        assert len(ck["c"]) == 2 and len(ck["d"]) == 2
