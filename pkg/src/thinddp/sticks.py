"""Truncated thinned stick-breaking construction and prior cluster-count simulation.

A parent Dirichlet process with concentration ``alpha`` and a normal-inverse-
gamma base measure is shared by all groups; per-group binary thinning flags
zero out selected stick fractions, so group g receives the weights

    w[j, g] = v[j] * flag[j, g] * prod_{h < j} (1 - v[h] * flag[h, g]).

Atoms are identified by their level index j (the base measure is continuous,
so index identity equals value identity almost surely), which makes the
shared/specific cluster counting exact set arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .thinning import (
    ThinningModel,
    ThinningSequences,
    UnderTruncationError,
    as_generator,
    sample_thinning_batch,
)

__all__ = [
    "DPParams",
    "ThinnedSticks",
    "PartitionCounts",
    "compute_weights",
    "sample_sticks",
    "sample_prior_observations",
    "count_partition",
    "ExpectedClusterEstimate",
    "monte_carlo_expected_k",
]


@dataclass(frozen=True)
class DPParams:
    """Concentration and normal-inverse-gamma base measure parameters.

    Under the base measure, 1/var ~ Gamma(shape0, rate0) and
    mean | var ~ Normal(loc0, var / scale0).
    """

    alpha: float
    loc0: float = 0.0
    scale0: float = 1.0
    shape0: float = 2.0
    rate0: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("concentration alpha must be > 0")
        if not (self.scale0 > 0 and self.shape0 > 0 and self.rate0 > 0):
            raise ValueError("base measure parameters must be > 0")

    def sample_atoms(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Draw n iid (mean, variance) atoms from the base measure."""
        variances = 1.0 / rng.gamma(self.shape0, 1.0 / self.rate0, size=n)
        means = rng.normal(self.loc0, np.sqrt(variances / self.scale0))
        return means, variances


def sample_stick_fractions(alpha: float, size, rng) -> np.ndarray:
    """Beta(1, alpha) draws via the inverse CDF, 1 - u**(1/alpha).

    Identical in law to rng.beta(1, alpha, size) but much faster for the
    large blocks the Monte Carlo routines need.
    """
    return 1.0 - rng.random(size) ** (1.0 / alpha)


def compute_weights(v: np.ndarray, flags: np.ndarray) -> np.ndarray:
    """Per-group weights of the thinned construction, exactly as defined."""
    v = np.asarray(v, dtype=float)
    vf = v[:, None] * flags
    surv = np.cumprod(1.0 - vf, axis=0)
    shifted = np.vstack([np.ones((1, flags.shape[1])), surv[:-1]])
    return vf * shifted


@dataclass(frozen=True)
class ThinnedSticks:
    """A truncated realization: stick fractions, atoms, flags and weights."""

    v: np.ndarray  # (T,)
    atom_means: np.ndarray  # (T,)
    atom_vars: np.ndarray  # (T,)
    flags: np.ndarray  # (T, G)
    weights: np.ndarray  # (T, G)

    @property
    def truncation(self) -> int:
        return self.v.shape[0]

    @property
    def n_groups(self) -> int:
        return self.flags.shape[1]


def sample_sticks(params: DPParams, sequences: ThinningSequences, *, seed=None) -> ThinnedSticks:
    """Draw stick fractions and atoms, and assemble the per-group weights.

    Fractions are iid Beta(1, alpha); atoms are iid normal-inverse-gamma.
    Deterministic given the seed.
    """
    rng = as_generator(seed)
    T = sequences.truncation
    v = rng.beta(1.0, params.alpha, size=T)
    means, variances = params.sample_atoms(T, rng)
    weights = compute_weights(v, sequences.flags)
    return ThinnedSticks(v, means, variances, sequences.flags, weights)


def sample_prior_observations(sticks: ThinnedSticks, sizes, *, seed=None) -> list[np.ndarray]:
    """Draw atom-index labels for each group from the renormalized weights.

    The truncation leftover mass is redistributed proportionally (choose T so
    the leftover is negligible). A zero-weight column signals under-truncation.
    """
    rng = as_generator(seed)
    labels = []
    for g, n in enumerate(sizes):
        w = sticks.weights[:, g]
        total = w.sum()
        if total <= 0:
            raise UnderTruncationError(f"group {g} has zero total weight")
        labels.append(rng.choice(sticks.truncation, size=int(n), p=w / total))
    return labels


@dataclass(frozen=True)
class PartitionCounts:
    """Distinct-value counts across groups.

    ``k_shared``/``k_specific`` follow the two-sample definition (values
    present in both samples vs. in exactly one); for more than two groups
    only the per-group and total distinct counts are reported.
    """

    k: int
    per_group: tuple[int, ...]
    k_shared: int | None = None
    k_specific: tuple[int, ...] | None = None


def count_partition(labels_per_group) -> PartitionCounts:
    """Count total, per-group, and (for two groups) shared/specific values."""
    sets = [set(np.asarray(lab).tolist()) for lab in labels_per_group]
    union = set().union(*sets) if sets else set()
    per_group = tuple(len(s) for s in sets)
    if len(sets) == 2:
        shared = len(sets[0] & sets[1])
        specific = (len(sets[0] - sets[1]), len(sets[1] - sets[0]))
        return PartitionCounts(len(union), per_group, shared, specific)
    return PartitionCounts(len(union), per_group)


@dataclass(frozen=True)
class ExpectedClusterEstimate:
    """Monte Carlo means and standard errors for the cluster counts."""

    k0: float
    k0_se: float
    k1: float
    k1_se: float
    k2: float
    k2_se: float
    k: float
    k_se: float
    replications: int


def _categorical_rows(cumprob: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling: cumprob (m, T) nondecreasing rows in
    [0, 1], u (m, n) uniforms; returns (m, n) indices."""
    m, T = cumprob.shape
    offsets = 2.0 * np.arange(m)
    flat = (cumprob + offsets[:, None]).ravel()
    idx = np.searchsorted(flat, (u + offsets[:, None]).ravel(), side="left")
    idx = idx.reshape(u.shape) - np.arange(m)[:, None] * T
    return np.clip(idx, 0, T - 1)


_MC_CHUNK = 1024


def monte_carlo_expected_k(
    params: DPParams,
    model: ThinningModel,
    n1: int,
    n2: int,
    replications: int,
    truncation: int,
    *,
    seed=None,
) -> ExpectedClusterEstimate:
    """Estimate the expected shared/specific/total distinct-value counts.

    Each replication draws thinning flags, stick fractions, and two samples
    of sizes (n1, n2) from the renormalized truncated weights, then counts
    distinct atom indices. Standard errors are sample sd / sqrt(R).

    Replications are processed in fixed-size chunks whose RNG streams are
    spawned from SeedSequence(seed), so the estimate is reproducible and the
    chunks could run in parallel.
    """
    if model.n_groups != 2:
        raise ValueError("cluster-count Monte Carlo is defined for two groups")
    if replications < 100:
        raise ValueError("need at least 100 replications")
    if min(n1, n2) < 0 or max(n1, n2) == 0:
        raise ValueError("sample sizes must be nonnegative and not both zero")

    T = truncation
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    n_chunks = (replications + _MC_CHUNK - 1) // _MC_CHUNK
    children = seq.spawn(n_chunks)

    sizes = (n1, n2)
    k0 = np.empty(replications)
    kspec = [np.empty(replications), np.empty(replications)]
    ktot = np.empty(replications)

    done = 0
    for child in children:
        m = min(_MC_CHUNK, replications - done)
        rng = np.random.default_rng(child)
        flags = sample_thinning_batch(model, T, m, rng)  # (m, T, 2)
        v = sample_stick_fractions(params.alpha, (m, T), rng)
        vf = v[:, :, None] * flags
        surv = np.cumprod(1.0 - vf, axis=1)
        weights = vf.copy()
        weights[:, 1:, :] *= surv[:, :-1, :]
        cum = np.cumsum(weights, axis=1)
        totals = cum[:, -1, :]
        if np.any(totals <= 0):
            raise UnderTruncationError("zero total weight in a Monte Carlo draw")

        occupied = []
        for g in range(2):
            u = rng.random((m, sizes[g]))
            lab = _categorical_rows(cum[:, :, g] / totals[:, g : g + 1], u)
            occ = np.zeros((m, T), dtype=bool)
            occ[np.arange(m)[:, None], lab] = True
            occupied.append(occ)

        both = occupied[0] & occupied[1]
        sl = slice(done, done + m)
        k0[sl] = both.sum(axis=1)
        kspec[0][sl] = (occupied[0] & ~occupied[1]).sum(axis=1)
        kspec[1][sl] = (occupied[1] & ~occupied[0]).sum(axis=1)
        ktot[sl] = (occupied[0] | occupied[1]).sum(axis=1)
        done += m

    def mean_se(x):
        return float(x.mean()), float(x.std(ddof=1) / np.sqrt(replications))

    m0, s0 = mean_se(k0)
    m1, s1 = mean_se(kspec[0])
    m2, s2 = mean_se(kspec[1])
    mk, sk = mean_se(ktot)
    return ExpectedClusterEstimate(m0, s0, m1, s1, m2, s2, mk, sk, replications)
