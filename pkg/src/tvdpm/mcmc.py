"""Batch Gibbs sampling under the death-time parametrization.

The per-step survivor vectors are replaced by a death time for every
allocation unit: unit (k, t) is alive for batches t .. min(d, T), with
d in {t, ..., T, T+1} and d = T+1 standing for "still alive at the
horizon" (the unbounded geometric tail collapsed into one value).  A sweep
resamples, time step by time step, each allocation from its full
conditional, each death time from its full conditional, and then cluster
locations (unless they are integrated out, the default for the static
kernel with a conjugate model).

Both conditionals are computed on the canonical state space where every
box's alive interval is contiguous in time.  Moves that would strand a
later unit of the box (leave it joined to a box that is dead at its birth)
get zero conditional mass, so contiguity is preserved by construction;
`relabel` restores it when a state is built from raw tables.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .kernels import GaussianAR1, StaticKernel, sample_base
__all__ = [
    "MCMCState",
    "reconstruct_counts",
    "gibbs_allocation",
    "gibbs_death_time",
    "gibbs_locations",
    "relabel",
    "sweep",
]

NEG_INF = float("-inf")


def reconstruct_counts(c, d):
    """Per-time alive-count maps implied by allocation and death tables.

    `c[t-1][k]` and `d[t-1][k]` describe unit (k, t) for t = 1..T.  Returns
    (after_batch, after_deletion): after_batch[u-1] maps label -> count of
    units with t <= u <= min(d, T); after_deletion[u-1] counts units with
    t < u <= d (the state the batch at u is drawn against).
    """
    T = len(c)
    after_batch = [defaultdict(int) for _ in range(T)]
    after_deletion = [defaultdict(int) for _ in range(T)]
    for ti, row in enumerate(c):
        t = ti + 1
        for k, lab in enumerate(row):
            dk = d[ti][k]
            if dk < t:
                raise ValueError(f"death time {dk} before birth {t} at unit ({k}, {t})")
            last = min(dk, T)
            for u in range(t, last + 1):
                after_batch[u - 1][lab] += 1
            for u in range(t + 1, min(dk, T) + 1):
                after_deletion[u - 1][lab] += 1
    return (
        [dict(m) for m in after_batch],
        [dict(m) for m in after_deletion],
    )


class MCMCState:
    """Mutable sampler state: tables, alive-count caches, per-box unit sets
    and sufficient statistics, and (in explicit modes) locations.

    mode is one of "collapsed" (locations integrated out; static kernel +
    conjugate model), "static" (one explicit shared location per box), or
    "ar1" (a location per box and alive time, moved by a GaussianAR1
    kernel).
    """

    def __init__(
        self,
        T: int,
        n: int,
        theta: float,
        rho: float,
        *,
        observations=None,
        model=None,
        mode: str = "collapsed",
        kernel=None,
    ):
        if T < 1 or n < 1:
            raise ValueError("T and n must be >= 1")
        if theta <= 0:
            raise ValueError("theta must be positive")
        if not 0.0 <= rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if mode not in ("collapsed", "static", "ar1"):
            raise ValueError("mode must be collapsed, static or ar1")
        if mode == "ar1" and not isinstance(kernel, GaussianAR1):
            raise ValueError("ar1 mode needs a GaussianAR1 kernel")
        if mode == "static" and model is None:
            raise ValueError("static explicit-location mode needs a model")
        if observations is not None and model is None:
            raise ValueError("observations need a model")
        self.T = T
        self.n = n
        self.theta = float(theta)
        self.rho = float(rho)
        self.model = model
        self.mode = mode
        self.kernel = kernel if kernel is not None else StaticKernel()
        self.obs = observations
        self.c: list[list[int]] = [[0] * n for _ in range(T)]
        self.d: list[list[int]] = [[T + 1] * n for _ in range(T)]
        self.next_label = 1
        self.m_post: list[dict[int, int]] = [dict() for _ in range(T)]
        self.blocks: dict[int, set] = {}
        self.founder: dict[int, tuple[int, int]] = {}
        self.stats: dict[int, object] = {}
        self.locs: dict[int, object] = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def from_prior(
        cls,
        T: int,
        n: int,
        theta: float,
        rho: float,
        rng: np.random.Generator,
        *,
        observations=None,
        model=None,
        mode: str = "collapsed",
        kernel=None,
    ) -> "MCMCState":
        """Forward-simulate (c, d) from the uniform-deletion prior."""
        state = cls(
            T, n, theta, rho,
            observations=observations, model=model, mode=mode, kernel=kernel,
        )
        alive: list[list] = []  # [t, k, label] still-alive units
        c = [[0] * n for _ in range(T)]
        d = [[T + 1] * n for _ in range(T)]
        label = 1
        for t in range(1, T + 1):
            keep = []
            for unit in alive:
                if rng.random() < rho:
                    keep.append(unit)
                else:
                    d[unit[0] - 1][unit[1]] = t - 1
            alive = keep
            masses: dict[int, int] = defaultdict(int)
            for unit in alive:
                masses[unit[2]] += 1
            total = len(alive)
            for k in range(n):
                u = rng.random() * (total + theta)
                acc = 0.0
                chosen = 0
                for lab, m in masses.items():
                    acc += m
                    if u < acc:
                        chosen = lab
                        break
                if not chosen:
                    chosen = label
                    label += 1
                masses[chosen] += 1
                total += 1
                c[t - 1][k] = chosen
                alive.append([t, k, chosen])
        # units alive after batch T die at the out-of-horizon deletion with
        # probability 1 - rho (d = T), else carry the alive-at-horizon cap
        for unit in alive:
            if rng.random() >= rho:
                d[unit[0] - 1][unit[1]] = T
        state._load_tables(c, d, label)
        if state.mode != "collapsed":
            state._init_locations(rng)
        return state

    @classmethod
    def from_tables(
        cls,
        c,
        d,
        theta: float,
        rho: float,
        *,
        observations=None,
        model=None,
        mode: str = "collapsed",
        kernel=None,
        canonicalize: bool = True,
        rng: np.random.Generator | None = None,
    ) -> "MCMCState":
        T = len(c)
        n = len(c[0])
        state = cls(
            T, n, theta, rho,
            observations=observations, model=model, mode=mode, kernel=kernel,
        )
        next_label = max(max(row) for row in c) + 1
        state._load_tables([list(row) for row in c], [list(row) for row in d], next_label)
        if canonicalize:
            for lab in list(state.blocks):
                while _first_gap(state, lab) is not None:
                    relabel(state, lab, _first_gap(state, lab))
        if state.mode != "collapsed":
            state._init_locations(rng if rng is not None else np.random.default_rng())
        return state

    def _load_tables(self, c, d, next_label):
        self.c = c
        self.d = d
        self.next_label = next_label
        after_batch, _ = reconstruct_counts(c, d)
        self.m_post = [dict(m) for m in after_batch]
        self.blocks = defaultdict(set)
        for ti, row in enumerate(c):
            for k, lab in enumerate(row):
                self.blocks[lab].add((ti + 1, k))
        self.blocks = dict(self.blocks)
        self.founder = {lab: min(units) for lab, units in self.blocks.items()}
        if self.model is not None and self.obs is not None:
            self.stats = {}
            for lab, units in self.blocks.items():
                st = self.model.empty_stats()
                for (t, k) in units:
                    self.model.stats_add(st, self.obs[t - 1][k])
                self.stats[lab] = st

    def _init_locations(self, rng: np.random.Generator):
        base = self.model.base if self.model is not None else None
        for lab in self.blocks:
            if self.mode == "static":
                if self.model is not None and self.obs is not None:
                    self.locs[lab] = self.model.posterior_sample_from_stats(self.stats[lab], rng)
                else:
                    self.locs[lab] = sample_base(base, rng)
            else:
                lo, hi = self.alive_interval(lab)
                traj = {}
                u = sample_base(self.kernel.base, rng)
                for v in range(lo, hi + 1):
                    traj[v] = u if v == lo else self.kernel.transition(traj[v - 1], rng)
                self.locs[lab] = traj

    # -- small helpers --------------------------------------------------------

    def alive_interval(self, label: int) -> tuple[int, int]:
        times = [u + 1 for u in range(self.T) if self.m_post[u].get(label, 0) > 0]
        return times[0], times[-1]

    def block_max_death(self, label: int) -> int:
        return max(min(self.d[t - 1][k], self.T) for (t, k) in self.blocks[label])

    def _pre_masses(self, v: int) -> dict[int, int]:
        """Alive masses the batch at time v is drawn against (units born
        before v that survive through v), label -> count."""
        out = dict(self.m_post[v - 1])
        for lab in self.c[v - 1]:
            m = out[lab] - 1
            if m:
                out[lab] = m
            else:
                del out[lab]
        return out

    def _obs_at(self, label: int, v: int) -> list:
        if self.obs is None:
            return []
        return [self.obs[v - 1][k] for k in range(self.n) if self.c[v - 1][k] == label]

    def check_caches(self):
        """Debug invariant: incremental caches match a from-scratch rebuild
        and every box's alive interval is contiguous."""
        after_batch, _ = reconstruct_counts(self.c, self.d)
        for u in range(self.T):
            if dict(self.m_post[u]) != after_batch[u]:
                raise AssertionError(f"alive-count cache diverged at time {u + 1}")
        for lab, units in self.blocks.items():
            alive = [u + 1 for u in range(self.T) if self.m_post[u].get(lab, 0) > 0]
            if alive != list(range(alive[0], alive[-1] + 1)):
                raise AssertionError(f"box {lab} alive interval not contiguous: {alive}")
            if self.founder[lab] != min(units):
                raise AssertionError(f"founder cache wrong for box {lab}")
        if self.model is not None and self.obs is not None:
            for lab, units in self.blocks.items():
                st = self.model.empty_stats()
                for (t, k) in units:
                    self.model.stats_add(st, self.obs[t - 1][k])
                if not _stats_close(st, self.stats[lab]):
                    raise AssertionError(f"stats cache diverged for box {lab}")

    # -- summaries ------------------------------------------------------------

    def alive_boxes_per_time(self) -> list[int]:
        return [len(self.m_post[u]) for u in range(self.T)]

    def log_marginal_likelihood(self) -> float:
        if self.model is None or self.obs is None:
            return 0.0
        out = 0.0
        for lab, units in self.blocks.items():
            st = self.model.empty_stats()
            for (t, k) in sorted(units):
                z = self.obs[t - 1][k]
                out += self.model.predictive_logp(st, z)
                self.model.stats_add(st, z)
        return out

    def to_checkpoint(self) -> dict:
        ck = {
            "T": self.T,
            "n": self.n,
            "theta": self.theta,
            "rho": self.rho,
            "mode": self.mode,
            "c": [list(row) for row in self.c],
            "d": [list(row) for row in self.d],
        }
        if self.mode == "static":
            ck["locations"] = {str(k): _loc_json(v) for k, v in self.locs.items()}
        elif self.mode == "ar1":
            ck["locations"] = {
                str(k): {str(t): float(x) for t, x in v.items()} for k, v in self.locs.items()
            }
        return ck


def _loc_json(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, tuple):
        return [float(x) for x in v]
    return float(v)


def _stats_close(a, b) -> bool:
    if isinstance(a, np.ndarray):
        return np.allclose(a, b)
    if isinstance(a, list) and len(a) == 2 and isinstance(a[0], np.ndarray):
        return np.array_equal(a[0], b[0]) and a[1] == b[1]
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


# -- conditional likelihood hooks ---------------------------------------------


def _move_loglik(state: MCMCState, label, z, t):
    """Log-likelihood weight of putting observation z (at time t) into the
    given box; label None means a fresh box."""
    if state.model is None or state.obs is None:
        return 0.0
    if state.mode == "collapsed":
        if label is None:
            return state.model.predictive_logp(state.model.empty_stats(), z)
        return state.model.predictive_logp(state.stats[label], z)
    if label is None:
        return state.model.predictive_logp(state.model.empty_stats(), z)
    if state.mode == "static":
        return state.model.log_likelihood(z, state.locs[label])
    return state.model.log_likelihood(z, state.locs[label][t])


# -- the allocation move --------------------------------------------------------


def gibbs_allocation(state: MCMCState, k: int, t: int, rng: np.random.Generator):
    """Resample c_{k,t} from its full conditional.

    Candidates are the boxes alive at the unit's draw position (excluding
    the unit itself) plus a fresh box.  A candidate's prior weight is its
    mass at the draw position times, for every later draw inside the unit's
    lifetime that joined that box, the ratio (m+1)/m of the urn numerators
    with and without this unit; a later join that would see an empty box
    pins the unit where it is.
    """
    a = state.c[t - 1][k]
    dd = min(state.d[t - 1][k], state.T)
    z = state.obs[t - 1][k] if state.obs is not None else None

    cur = state._pre_masses(t)
    for k2 in range(k):
        b = state.c[t - 1][k2]
        cur[b] = cur.get(b, 0) + 1
    entry = dict(cur)

    adj: dict[int, float] = defaultdict(float)
    forced = False
    # later draws of the same batch, then whole batches up to the death time
    scan = [(t, k2) for k2 in range(k + 1, state.n)] + [
        (v, k2) for v in range(t + 1, dd + 1) for k2 in range(state.n)
    ]
    v_cur = t
    for (v, k2) in scan:
        if v != v_cur:
            cur = state._pre_masses(v)
            m_a = cur.get(a, 0) - 1
            if m_a:
                cur[a] = m_a
            else:
                cur.pop(a, None)
            v_cur = v
        b = state.c[v - 1][k2]
        m = cur.get(b, 0)
        if m == 0:
            if b == a and state.founder[b] != (v, k2):
                forced = True
                break
            # otherwise this draw founded a later box: weight theta either way
        elif b == a or b in entry:
            adj[b] += math.log(m + 1) - math.log(m)
        cur[b] = m + 1
    if forced:
        return

    if state.model is not None and state.obs is not None and state.mode == "collapsed":
        state.model.stats_remove(state.stats[a], z)

    labels = [b for b, m in entry.items() if m > 0]
    scores = [math.log(entry[b]) + adj.get(b, 0.0) + _move_loglik(state, b, z, t) for b in labels]
    scores.append(math.log(state.theta) + _move_loglik(state, None, z, t))
    top = max(scores)
    probs = [math.exp(s - top) for s in scores]
    u = rng.random() * sum(probs)
    acc = 0.0
    pick = len(scores) - 1
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            pick = i
            break
    target = labels[pick] if pick < len(labels) else None

    if target == a:
        if state.model is not None and state.obs is not None and state.mode == "collapsed":
            state.model.stats_add(state.stats[a], z)
        return
    _detach_unit(state, a, k, t, dd, z)
    if target is None:
        target = state.next_label
        state.next_label += 1
        _attach_new_box(state, target, k, t, dd, z, rng)
    else:
        _attach_unit(state, target, k, t, dd, z, rng)
    state.c[t - 1][k] = target


def _detach_unit(state: MCMCState, a: int, k: int, t: int, dd: int, z):
    state.blocks[a].discard((t, k))
    for u in range(t, dd + 1):
        m = state.m_post[u - 1][a] - 1
        if m:
            state.m_post[u - 1][a] = m
        else:
            del state.m_post[u - 1][a]
    if not state.blocks[a]:
        del state.blocks[a]
        state.founder.pop(a, None)
        state.stats.pop(a, None)
        state.locs.pop(a, None)
        return
    # collapsed-mode stats were already reduced by the caller; explicit modes
    # keep stats in sync here
    if state.model is not None and state.obs is not None and state.mode != "collapsed":
        state.model.stats_remove(state.stats[a], z)
    if state.mode == "ar1":
        lo, hi = state.alive_interval(a)
        traj = state.locs[a]
        for v in [v for v in traj if v > hi or v < lo]:
            del traj[v]


def _attach_unit(state: MCMCState, b: int, k: int, t: int, dd: int, z, rng):
    if state.mode == "ar1":
        old_hi = state.block_max_death(b)
    state.blocks[b].add((t, k))
    for u in range(t, dd + 1):
        state.m_post[u - 1][b] = state.m_post[u - 1].get(b, 0) + 1
    if state.model is not None and state.obs is not None:
        state.model.stats_add(state.stats[b], z)
    if state.mode == "ar1" and dd > old_hi:
        traj = state.locs[b]
        for v in range(old_hi + 1, dd + 1):
            traj[v] = state.kernel.transition(traj[v - 1], rng)


def _attach_new_box(state: MCMCState, b: int, k: int, t: int, dd: int, z, rng):
    state.blocks[b] = {(t, k)}
    state.founder[b] = (t, k)
    for u in range(t, dd + 1):
        state.m_post[u - 1][b] = 1
    if state.model is not None and state.obs is not None:
        st = state.model.empty_stats()
        state.model.stats_add(st, z)
        state.stats[b] = st
    if state.mode == "static":
        if state.model is not None and state.obs is not None:
            state.locs[b] = state.model.posterior_sample_from_stats(state.stats[b], rng)
        else:
            state.locs[b] = sample_base(state.model.base if state.model else state.kernel.base, rng)
    elif state.mode == "ar1":
        traj = {}
        if state.model is not None and state.obs is not None:
            st = state.model.empty_stats()
            state.model.stats_add(st, z)
            traj[t] = state.model.posterior_sample_from_stats(st, rng)
        else:
            traj[t] = sample_base(state.kernel.base, rng)
        for v in range(t + 1, dd + 1):
            traj[v] = state.kernel.transition(traj[v - 1], rng)
        state.locs[b] = traj


# -- the death-time move ----------------------------------------------------------


def _lifetime_log_prior(rho: float, t: int, u: int, T: int) -> float:
    """Truncated-geometric prior of death time u for a unit born at t:
    rho^(u-t)*(1-rho) for u <= T, rho^(T+1-t) for the alive-at-horizon cap."""
    if u == T + 1:
        return NEG_INF if rho == 0.0 else (T + 1 - t) * math.log(rho)
    if rho == 1.0:
        return NEG_INF
    tail = 0.0 if u == t else (NEG_INF if rho == 0.0 else (u - t) * math.log(rho))
    return tail + math.log(1.0 - rho)


def gibbs_death_time(state: MCMCState, k: int, t: int, rng: np.random.Generator):
    """Resample d_{k,t} from its full conditional.

    The truncated-geometric prior is reweighted, for every batch in the
    affected window, by the urn probabilities of that batch's draws with
    and without this unit alive (numerators of its own box, denominators of
    everyone).  Candidates that would strand a later unit of the box score
    zero.
    """
    a = state.c[t - 1][k]
    d_old = state.d[t - 1][k]
    T = state.T
    rho = state.rho

    # per-batch weight sums with the unit alive (A) and dead (B)
    A = {}
    B = {}
    alive_last = min(d_old, T)
    for v in range(t + 1, T + 1):
        cur = state._pre_masses(v)
        if v <= alive_last:
            m_a = cur.get(a, 0) - 1
            if m_a:
                cur[a] = m_a
            else:
                cur.pop(a, None)
        total = sum(cur.values())
        av = bv = 0.0
        for k2 in range(state.n):
            b = state.c[v - 1][k2]
            m = cur.get(b, 0)
            if state.founder[b] == (v, k2):
                num_with = num_without = math.log(state.theta)
            else:
                num_with = math.log(m + (1 if b == a else 0))
                num_without = math.log(m) if m > 0 else NEG_INF
            av += num_with - math.log(total + 1 + state.theta)
            bv += (num_without - math.log(total + state.theta)) if num_without > NEG_INF else NEG_INF
            cur[b] = m + 1
            total += 1
        A[v] = av
        B[v] = bv

    # suffix sums of B and prefix sums of A
    candidates = list(range(t, T + 2))
    scores = []
    b_suffix = {T + 1: 0.0}
    for v in range(T, t, -1):
        b_suffix[v] = b_suffix[v + 1] + B[v]
    acc_a = 0.0
    for u in candidates:
        if t < u <= T:
            acc_a += A[u]
        prior = _lifetime_log_prior(rho, t, u, T)
        scores.append(prior + acc_a + b_suffix.get(min(u, T) + 1, 0.0))
    top = max(scores)
    if top == NEG_INF:
        return
    probs = [math.exp(s - top) for s in scores]
    r = rng.random() * sum(probs)
    acc = 0.0
    pick = len(candidates) - 1
    for i, p in enumerate(probs):
        acc += p
        if r < acc:
            pick = i
            break
    d_new = candidates[pick]
    if d_new == d_old:
        return
    lo, hi = min(d_old, T), min(d_new, T)
    if hi > lo:
        for u in range(lo + 1, hi + 1):
            state.m_post[u - 1][a] = state.m_post[u - 1].get(a, 0) + 1
    elif hi < lo:
        for u in range(hi + 1, lo + 1):
            m = state.m_post[u - 1][a] - 1
            if m:
                state.m_post[u - 1][a] = m
            else:
                del state.m_post[u - 1][a]
    state.d[t - 1][k] = d_new
    if state.mode == "ar1" and hi != lo:
        traj = state.locs[a]
        new_hi = state.block_max_death(a)
        for v in [v for v in traj if v > new_hi]:
            del traj[v]
        last = max(traj)
        for v in range(last + 1, new_hi + 1):
            traj[v] = state.kernel.transition(traj[v - 1], rng)


# -- location moves ------------------------------------------------------------


def gibbs_locations(state: MCMCState, j: int, t: int, rng: np.random.Generator):
    """Resample the location of box j (at time t for the AR1 mode).

    Static mode redraws the box's single shared value from the conjugate
    posterior of all its lifetime observations; AR1 mode draws from the
    kernel bridge times the likelihood of the observations assigned at
    (j, t).  Collapsed mode has no locations to sample.
    """
    if state.mode == "collapsed":
        raise ValueError("locations are integrated out in collapsed mode")
    if state.mode == "static":
        if state.model is not None and state.obs is not None:
            state.locs[j] = state.model.posterior_sample_from_stats(state.stats[j], rng)
        else:
            base = state.model.base if state.model is not None else state.kernel.base
            state.locs[j] = sample_base(base, rng)
        return
    kernel = state.kernel
    mu0, sigma0 = kernel.base.mu0, kernel.base.sigma0
    s2 = kernel.noise_scale ** 2
    phi = kernel.phi
    traj = state.locs[j]
    lo, hi = state.alive_interval(j)
    # prior factor from the left neighbour (or the base at birth)
    if t == lo:
        mean, var = mu0, sigma0 * sigma0
    else:
        mean, var = mu0 + phi * (traj[t - 1] - mu0), s2
    prec = 1.0 / var
    mean_p = mean * prec
    # prior factor from the right neighbour
    if t < hi and abs(phi) > 0:
        prec_r = phi * phi / s2
        mean_r = mu0 + (traj[t + 1] - mu0) / phi
        prec += prec_r
        mean_p += mean_r * prec_r
    if state.model is not None and state.obs is not None:
        ov = state.model.obs_sigma ** 2
        for z in state._obs_at(j, t):
            prec += 1.0 / ov
            mean_p += z / ov
    var_post = 1.0 / prec
    traj[t] = float(rng.normal(mean_p * var_post, math.sqrt(var_post)))


# -- relabelling ---------------------------------------------------------------


def _first_gap(state: MCMCState, label: int):
    """First time u with the box dead at u but alive again later, or None."""
    alive = [u + 1 for u in range(state.T) if state.m_post[u].get(label, 0) > 0]
    if not alive:
        return None
    for prev, nxt in zip(alive, alive[1:]):
        if nxt > prev + 1:
            return prev + 1
    return None


def relabel(state: MCMCState, label: int, from_time: int):
    """Split the segment of `label` that restarts after the gap at
    `from_time` off into a fresh box (up to the next gap), restoring the
    contiguous-alive-interval invariant.  No-op for contiguous boxes."""
    alive = [u + 1 for u in range(state.T) if state.m_post[u].get(label, 0) > 0]
    restart = [u for u in alive if u >= from_time]
    if not restart or _first_gap(state, label) is None:
        return
    seg_start = restart[0]
    seg_end = seg_start
    while seg_end + 1 in restart:
        seg_end += 1
    moved = [(t, k) for (t, k) in state.blocks[label] if seg_start <= t <= seg_end]
    if not moved:
        return
    fresh = state.next_label
    state.next_label += 1
    state.blocks[fresh] = set()
    for (t, k) in moved:
        state.blocks[label].discard((t, k))
        state.blocks[fresh].add((t, k))
        state.c[t - 1][k] = fresh
        dd = min(state.d[t - 1][k], state.T)
        for u in range(t, dd + 1):
            m = state.m_post[u - 1][label] - 1
            if m:
                state.m_post[u - 1][label] = m
            else:
                del state.m_post[u - 1][label]
            state.m_post[u - 1][fresh] = state.m_post[u - 1].get(fresh, 0) + 1
    state.founder[fresh] = min(state.blocks[fresh])
    if not state.blocks[label]:
        del state.blocks[label]
        state.founder.pop(label, None)
    else:
        state.founder[label] = min(state.blocks[label])
    if state.model is not None and state.obs is not None:
        for lab in (label, fresh):
            if lab not in state.blocks:
                state.stats.pop(lab, None)
                continue
            st = state.model.empty_stats()
            for (t, k) in state.blocks[lab]:
                state.model.stats_add(st, state.obs[t - 1][k])
            state.stats[lab] = st
    if state.mode == "static" and label in state.locs:
        state.locs[fresh] = state.locs[label]
        if label not in state.blocks:
            del state.locs[label]
    elif state.mode == "ar1" and label in state.locs:
        traj = state.locs[label]
        state.locs[fresh] = {v: x for v, x in traj.items() if seg_start <= v <= seg_end}
        if label in state.blocks:
            lo, hi = state.alive_interval(label)
            state.locs[label] = {v: x for v, x in traj.items() if lo <= v <= hi}
        else:
            del state.locs[label]


# -- one sweep -----------------------------------------------------------------


def sweep(state: MCMCState, rng: np.random.Generator):
    """One systematic scan: for each time step, all allocation moves, then
    all death-time moves, then location moves for the boxes alive there
    (AR1 mode); static mode resamples each box once at the end."""
    for t in range(1, state.T + 1):
        for k in range(state.n):
            gibbs_allocation(state, k, t, rng)
        for k in range(state.n):
            gibbs_death_time(state, k, t, rng)
        if state.mode == "ar1":
            for j in list(state.m_post[t - 1]):
                gibbs_locations(state, j, t, rng)
    if state.mode == "static":
        for j in list(state.blocks):
            gibbs_locations(state, j, 1, rng)
    return state
