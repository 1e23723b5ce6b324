"""Blocked Gibbs sampler for Gaussian mixtures with a thinned stick-breaking prior.

Each sweep cycles five conditional updates:

1. thinning flags (forced to one for occupied components, otherwise a
   Bernoulli whose odds weight the keep probability by the survival factor
   the component would impose on later allocations),
2. stick fractions, Beta(1 + occupancy, alpha + flagged later occupancy),
3. allocations, multinomial over components with mass density * weight,
   computed in log space,
4. kernel means/variances from the normal-inverse-gamma conjugate update,
   pooling members across groups,
5. per-group keep probabilities, Beta-conjugate in the flag counts.

Two reference modes reuse the same engine: ``complete_pooling`` merges all
groups into one unthinned mixture, ``no_pooling`` fits one independent
unthinned mixture per group.

A chain is strictly sequential; run several chains in parallel by giving each
its own seed (state is never shared between them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .sticks import DPParams

__all__ = [
    "MODES",
    "GroupedDataset",
    "ModelConfig",
    "GibbsState",
    "PosteriorSamples",
    "initial_state",
    "update_thinning",
    "update_sticks",
    "update_allocations",
    "update_kernel_params",
    "update_thinning_probs",
    "run_chain",
]

MODES = ("thinned", "complete_pooling", "no_pooling")

_VAR_FLOOR = 1e-10
_STICK_EPS = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GroupedDataset:
    """Real-valued observations partitioned into groups.

    Groups may be empty here (prior-only runs exercise that path); the CSV
    ingestion layer is the place that rejects empty groups for actual fits.
    """

    groups: tuple[np.ndarray, ...]

    def __post_init__(self):
        cleaned = []
        for g, y in enumerate(self.groups):
            arr = np.asarray(y, dtype=float).ravel()
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"group {g} contains non-finite values")
            cleaned.append(arr)
        object.__setattr__(self, "groups", tuple(cleaned))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(y) for y in self.groups)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def concatenated(self) -> np.ndarray:
        if self.total == 0:
            return np.empty(0)
        return np.concatenate([y for y in self.groups])


@dataclass(frozen=True)
class ModelConfig:
    """Sampler configuration: base measure, keep-probability prior, truncation, mode."""

    alpha: float = 1.0
    loc0: float | None = None  # None: use the data mean
    scale0: float = 0.01
    shape0: float = 2.5
    rate0: float = 1.5
    a_keep: float = 3.0
    b_keep: float = 3.0
    truncation: int = 100
    mode: str = "thinned"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.truncation < 2:
            raise ValueError("truncation must be >= 2")
        if not (self.a_keep > 0 and self.b_keep > 0):
            raise ValueError("keep-probability prior parameters must be > 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not (self.scale0 > 0 and self.shape0 > 0 and self.rate0 > 0):
            raise ValueError("base measure parameters must be > 0")

    def resolve(self, data: GroupedDataset) -> "ModelConfig":
        """Pin loc0 to the overall data mean when left unset."""
        if self.loc0 is not None:
            return self
        y = data.concatenated()
        return replace(self, loc0=float(y.mean()) if y.size else 0.0)

    def dp_params(self) -> DPParams:
        if self.loc0 is None:
            raise ValueError("loc0 unresolved; call resolve(data) first")
        return DPParams(self.alpha, self.loc0, self.scale0, self.shape0, self.rate0)


@dataclass
class GibbsState:
    """Mutable sampler state for one chain."""

    alloc: list[np.ndarray]  # per group, component index of each observation
    v: np.ndarray  # (T,) stick fractions
    flags: np.ndarray  # (T, G) uint8 thinning flags
    atom_means: np.ndarray  # (T,)
    atom_vars: np.ndarray  # (T,)
    keep_probs: np.ndarray  # (G,)
    counts: np.ndarray = field(default=None)  # (T, G) occupancy

    def __post_init__(self):
        if self.counts is None:
            self.refresh_counts()

    @property
    def truncation(self) -> int:
        return self.v.shape[0]

    @property
    def n_groups(self) -> int:
        return self.flags.shape[1]

    def refresh_counts(self) -> None:
        T = self.v.shape[0]
        cols = [np.bincount(z, minlength=T) for z in self.alloc]
        self.counts = np.stack(cols, axis=1) if cols else np.zeros((T, 0), dtype=int)

    def last_occupied(self) -> int:
        """Number of leading components through the highest occupied one."""
        occ = np.nonzero(self.counts.any(axis=1))[0]
        return int(occ[-1]) + 1 if occ.size else 0

    def suffix_counts(self) -> np.ndarray:
        """S[k, g] = occupancy of components strictly above k."""
        totals = self.counts.sum(axis=0)
        return totals[None, :] - np.cumsum(self.counts, axis=0)

    def weights(self) -> np.ndarray:
        vf = self.v[:, None] * self.flags
        surv = np.cumprod(1.0 - vf, axis=0)
        out = vf.copy()
        out[1:] *= surv[:-1]
        return out

    def log_weights(self, group: int) -> np.ndarray:
        """log of the group's weight column, -inf where the flag is zero."""
        active = self.flags[:, group].astype(bool)
        vf = np.where(active, self.v, 0.0)
        cum = np.concatenate([[0.0], np.cumsum(np.log1p(-vf))[:-1]])
        out = np.full(self.truncation, -np.inf)
        out[active] = np.log(self.v[active]) + cum[active]
        return out

    def check_invariants(self) -> None:
        """Audit structural invariants; raises RuntimeError on violation."""
        recount = [np.bincount(z, minlength=self.truncation) for z in self.alloc]
        recount = np.stack(recount, axis=1)
        if not np.array_equal(recount, self.counts):
            raise RuntimeError("occupancy counts out of sync with allocations")
        if np.any((self.counts > 0) & (self.flags == 0)):
            raise RuntimeError("occupied component with zero thinning flag")
        for g, z in enumerate(self.alloc):
            if z.size and not np.all(self.flags[z, g] == 1):
                raise RuntimeError("allocation points at a thinned component")

    def check_finite(self, iteration: int) -> None:
        for name, arr in (
            ("stick fractions", self.v),
            ("atom means", self.atom_means),
            ("atom variances", self.atom_vars),
            ("keep probabilities", self.keep_probs),
        ):
            if not np.all(np.isfinite(arr)):
                raise RuntimeError(f"non-finite {name} at iteration {iteration}")


def _clip_sticks(v: np.ndarray) -> np.ndarray:
    return np.clip(v, _STICK_EPS, 1.0 - _STICK_EPS)


def initial_state(data: GroupedDataset, config: ModelConfig, rng) -> GibbsState:
    """Overdispersed but label-stable start.

    Allocations come from per-group quantile binning into min(10, T)
    components, flags start at one, keep probabilities at their prior mean,
    sticks from the prior, and kernel parameters from their conditional
    given the initial allocations.
    """
    T = config.truncation
    G = data.n_groups
    n_bins = min(10, T)
    alloc = []
    for y in data.groups:
        if y.size == 0:
            alloc.append(np.empty(0, dtype=np.int64))
            continue
        edges = np.quantile(y, np.linspace(0.0, 1.0, n_bins + 1))[1:-1]
        alloc.append(np.searchsorted(edges, y, side="right").astype(np.int64))
    state = GibbsState(
        alloc=alloc,
        v=_clip_sticks(rng.beta(1.0, config.alpha, size=T)),
        flags=np.ones((T, G), dtype=np.uint8),
        atom_means=np.zeros(T),
        atom_vars=np.ones(T),
        keep_probs=np.full(G, config.a_keep / (config.a_keep + config.b_keep)),
    )
    update_kernel_params(state, data, config, rng)
    return state


def update_thinning(state: GibbsState, config: ModelConfig, rng) -> GibbsState:
    """Gibbs update of the thinning flags.

    Components are visited from the highest occupied one downward (the
    conditional depends on counts above a component only through their sum,
    which is fixed within the sweep). Occupied components are pinned to one;
    an unoccupied component k keeps probability

        p* = (1 - v_k)**S * p / ((1 - v_k)**S * p + 1 - p)

    where S is the group's occupancy above k. Components past the last
    occupied one are refreshed from the Bernoulli prior.
    """
    T, G = state.flags.shape
    K = state.last_occupied()
    suffix = state.suffix_counts()
    pk = state.keep_probs
    for k in range(K - 1, -1, -1):
        surv = (1.0 - state.v[k]) ** suffix[k]
        num = surv * pk
        p_star = num / (num + 1.0 - pk)
        draw = (rng.random(G) < p_star).astype(np.uint8)
        state.flags[k] = np.where(state.counts[k] > 0, 1, draw)
    if K < T:
        state.flags[K:] = (rng.random((T - K, G)) < pk).astype(np.uint8)
    return state


def update_sticks(state: GibbsState, config: ModelConfig, rng) -> GibbsState:
    """Conjugate Beta update of the stick fractions."""
    occupancy = state.counts.sum(axis=1)
    later = (state.flags * state.suffix_counts()).sum(axis=1)
    state.v = _clip_sticks(rng.beta(1.0 + occupancy, config.alpha + later))
    return state


def allocation_log_mass(state: GibbsState, y: np.ndarray, group: int) -> np.ndarray:
    """(n, T) log of density * weight per observation and component;
    exactly -inf where the group's flag is zero."""
    logw = state.log_weights(group)
    log_norm = -0.5 * (_LOG_2PI + np.log(state.atom_vars))
    dev = y[:, None] - state.atom_means[None, :]
    return logw[None, :] + log_norm[None, :] - 0.5 * dev * dev / state.atom_vars[None, :]


def update_allocations(state: GibbsState, data: GroupedDataset, rng) -> GibbsState:
    """Multinomial reallocation of every observation, in log space.

    Component mass is density * weight for flagged components and exactly
    zero otherwise; sampling uses the Gumbel-max trick so only log masses
    are ever formed.
    """
    for g, y in enumerate(data.groups):
        if y.size == 0:
            continue
        log_mass = allocation_log_mass(state, y, g)
        if np.any(np.all(np.isneginf(log_mass), axis=1)):
            raise RuntimeError(f"allocation mass underflowed for group {g}")
        gumbel = rng.gumbel(size=log_mass.shape)
        state.alloc[g] = np.argmax(log_mass + gumbel, axis=1).astype(np.int64)
    state.refresh_counts()
    return state


def update_kernel_params(state: GibbsState, data: GroupedDataset, config: ModelConfig, rng) -> GibbsState:
    """Normal-inverse-gamma conjugate update of all component parameters.

    Members are pooled across groups; empty components reduce to a prior
    draw through the same formulas.
    """
    T = state.truncation
    y = data.concatenated()
    if y.size:
        z = np.concatenate([a for a in state.alloc])
        nk = np.bincount(z, minlength=T).astype(float)
        sums = np.bincount(z, weights=y, minlength=T)
        sqsums = np.bincount(z, weights=y * y, minlength=T)
    else:
        nk = np.zeros(T)
        sums = np.zeros(T)
        sqsums = np.zeros(T)
    loc0, scale0 = config.loc0, config.scale0
    denom = scale0 + nk
    ybar = sums / np.maximum(nk, 1.0)
    sse = np.maximum(sqsums - nk * ybar * ybar, 0.0)
    shape = config.shape0 + 0.5 * nk
    rate = config.rate0 + 0.5 * (sse + scale0 * nk / denom * (ybar - loc0) ** 2)
    precision = rng.gamma(shape, 1.0 / rate)
    state.atom_vars = np.maximum(1.0 / precision, _VAR_FLOOR)
    post_mean = (scale0 * loc0 + sums) / denom
    state.atom_means = rng.normal(post_mean, np.sqrt(state.atom_vars / denom))
    return state


def update_thinning_probs(state: GibbsState, config: ModelConfig, rng) -> GibbsState:
    """Beta-conjugate update of the per-group keep probabilities."""
    T = state.truncation
    ones = state.flags.sum(axis=0).astype(float)
    state.keep_probs = rng.beta(config.a_keep + ones, config.b_keep + T - ones)
    return state


@dataclass
class PosteriorSamples:
    """Retained post-burn-in draws, one slot per kept iteration.

    Kernel parameters and weights are stored per group so that the
    independent-chains baseline fits the same layout; for shared-atom modes
    the group columns are identical copies.
    """

    alloc: tuple[np.ndarray, ...]  # per group, (Q, n_g) int32
    weights: np.ndarray  # (Q, T, G)
    atom_means: np.ndarray  # (Q, T, G)
    atom_vars: np.ndarray  # (Q, T, G)
    keep_probs: np.ndarray  # (Q, G)
    flags: np.ndarray  # (Q, T, G) uint8
    mode: str
    seed: object
    iterations: int
    burn_in: int
    config: ModelConfig

    @property
    def n_draws(self) -> int:
        return self.weights.shape[0]

    @property
    def truncation(self) -> int:
        return self.weights.shape[1]

    @property
    def n_groups(self) -> int:
        return self.weights.shape[2]

    def occupied_sets(self) -> np.ndarray:
        """(Q, T, G) boolean occupancy of each component by each group."""
        Q, T, G = self.weights.shape
        occ = np.zeros((Q, T, G), dtype=bool)
        rows = np.arange(Q)[:, None]
        for g, z in enumerate(self.alloc):
            if z.shape[1]:
                occ[rows, z, g] = True
        return occ


def _run_core(data, config, iterations, burn_in, rng, *, thinned, audit_every):
    """Shared engine: runs the sweep on one (possibly merged) dataset."""
    T = config.truncation
    G = data.n_groups
    Q = iterations - burn_in
    state = initial_state(data, config, rng)
    if not thinned:
        state.flags[:] = 1
        state.keep_probs[:] = 1.0

    alloc = tuple(np.empty((Q, n), dtype=np.int32) for n in data.sizes)
    weights = np.empty((Q, T, G))
    means = np.empty((Q, T))
    variances = np.empty((Q, T))
    keep = np.empty((Q, G))
    flags = np.empty((Q, T, G), dtype=np.uint8)

    has_data = data.total > 0
    for it in range(iterations):
        if thinned:
            update_thinning(state, config, rng)
        update_sticks(state, config, rng)
        if has_data:
            update_allocations(state, data, rng)
        update_kernel_params(state, data, config, rng)
        if thinned:
            update_thinning_probs(state, config, rng)
        state.check_finite(it)
        if audit_every and (it + 1) % audit_every == 0:
            state.check_invariants()
        if it >= burn_in:
            q = it - burn_in
            for g in range(G):
                alloc[g][q] = state.alloc[g]
            weights[q] = state.weights()
            means[q] = state.atom_means
            variances[q] = state.atom_vars
            keep[q] = state.keep_probs
            flags[q] = state.flags
    return alloc, weights, means, variances, keep, flags


def run_chain(
    data: GroupedDataset,
    config: ModelConfig,
    iterations: int,
    burn_in: int,
    *,
    seed=None,
    audit_every: int | None = None,
) -> PosteriorSamples:
    """Run one chain and return the retained draws. Deterministic given the seed.

    ``thinned`` runs the five-step sweep as specified; ``complete_pooling``
    merges all groups into one unthinned mixture (flags and keep
    probabilities pinned at one); ``no_pooling`` runs an independent
    unthinned chain per group with RNG streams spawned from the seed.
    """
    if not 0 <= burn_in < iterations:
        raise ValueError("need 0 <= burn_in < iterations")
    G = data.n_groups
    T = config.truncation
    Q = iterations - burn_in

    if config.mode == "no_pooling":
        # Each independent fit centers an unset base location on its own
        # group mean.
        streams = np.random.default_rng(seed).spawn(G)
        alloc = []
        weights = np.empty((Q, T, G))
        means = np.empty((Q, T, G))
        variances = np.empty((Q, T, G))
        flags = np.empty((Q, T, G), dtype=np.uint8)
        for g, y in enumerate(data.groups):
            sub = GroupedDataset((y,))
            a, w, m, s2, _, f = _run_core(
                sub, config.resolve(sub), iterations, burn_in, streams[g],
                thinned=False, audit_every=audit_every,
            )
            alloc.append(a[0])
            weights[:, :, g] = w[:, :, 0]
            means[:, :, g] = m
            variances[:, :, g] = s2
            flags[:, :, g] = f[:, :, 0]
        keep = np.ones((Q, G))
        return PosteriorSamples(
            tuple(alloc), weights, means, variances, keep, flags,
            config.mode, seed, iterations, burn_in, config,
        )

    config = config.resolve(data)
    rng = np.random.default_rng(seed)
    if config.mode == "complete_pooling":
        merged = GroupedDataset((data.concatenated(),))
        a, w, m, s2, _, f = _run_core(
            merged, config, iterations, burn_in, rng,
            thinned=False, audit_every=audit_every,
        )
        bounds = np.cumsum((0,) + data.sizes)
        alloc = tuple(a[0][:, bounds[g] : bounds[g + 1]] for g in range(G))
        weights = np.repeat(w, G, axis=2)
        flags = np.repeat(f, G, axis=2)
        means = np.repeat(m[:, :, None], G, axis=2)
        variances = np.repeat(s2[:, :, None], G, axis=2)
        keep = np.ones((Q, G))
        return PosteriorSamples(
            alloc, weights, means, variances, keep, flags,
            config.mode, seed, iterations, burn_in, config,
        )

    a, w, m, s2, keep, f = _run_core(
        data, config, iterations, burn_in, rng, thinned=True, audit_every=audit_every
    )
    alloc = tuple(np.ascontiguousarray(x) for x in a)
    means = np.repeat(m[:, :, None], G, axis=2)
    variances = np.repeat(s2[:, :, None], G, axis=2)
    return PosteriorSamples(
        alloc, w, means, variances, keep, f,
        config.mode, seed, iterations, burn_in, config,
    )
