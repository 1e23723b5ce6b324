"""Posterior summaries: grid densities with credible bands, similarity matrices,
partition point estimates, and the evaluation metrics built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mcmc import PosteriorSamples

__all__ = [
    "GridDensity",
    "PartitionEstimate",
    "density_estimate",
    "hpd_interval",
    "co_clustering",
    "psm",
    "vi_lower_bound",
    "vi_partition",
    "ari",
    "tv_distance",
    "group_similarity",
]

_DENSITY_CHUNK = 128


@dataclass(frozen=True)
class GridDensity:
    """Pointwise posterior density summary on a shared grid.

    ``estimate``, ``lower`` and ``upper`` are (G, M); the bands are pointwise
    shortest intervals at the stated level. The point estimate is a mean over
    draws and may exit the band for skewed draws; lower <= upper always holds.
    """

    grid: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    def __post_init__(self):
        if np.any(self.lower > self.upper + 1e-12):
            raise ValueError("band lower bound exceeds upper bound")

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def band_lengths(self) -> np.ndarray:
        return self.upper - self.lower


def _shortest_windows(values: np.ndarray, level: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-column shortest interval containing ceil(level * Q) of the Q values."""
    q = values.shape[0]
    h = min(max(int(math.ceil(level * q)), 1), q)
    srt = np.sort(values, axis=0)
    widths = srt[h - 1 :, :] - srt[: q - h + 1, :]
    start = np.argmin(widths, axis=0)
    cols = np.arange(values.shape[1])
    return srt[start, cols], srt[start + h - 1, cols]


def hpd_interval(draws, level: float = 0.95) -> tuple[float, float]:
    """Shortest interval containing ceil(level * Q) of the draws."""
    arr = np.asarray(draws, dtype=float).reshape(-1, 1)
    if arr.size == 0:
        raise ValueError("no draws")
    lo, hi = _shortest_windows(arr, level)
    return float(lo[0]), float(hi[0])


def density_estimate(samples: PosteriorSamples, grid, level: float = 0.95) -> GridDensity:
    """Per-group posterior density estimate with pointwise credible bands.

    Each draw's density is the active-component mixture with the group's
    weights renormalized over their truncated total; the point estimate is
    the mean over draws, the band the pointwise shortest interval. At least
    a hundred retained draws are recommended for stable bands.
    """
    grid = np.asarray(grid, dtype=float)
    Q, T, G = samples.weights.shape
    if Q == 0:
        raise ValueError("no retained draws")
    est = np.empty((G, grid.size))
    lower = np.empty((G, grid.size))
    upper = np.empty((G, grid.size))
    for g in range(G):
        w = samples.weights[:, :, g]
        totals = w.sum(axis=1, keepdims=True)
        if np.any(totals <= 0):
            raise ValueError(f"group {g} has a draw with no active components")
        wn = w / totals
        dens = np.empty((Q, grid.size))
        for lo in range(0, Q, _DENSITY_CHUNK):
            hi = min(lo + _DENSITY_CHUNK, Q)
            mu = samples.atom_means[lo:hi, :, g]
            var = samples.atom_vars[lo:hi, :, g]
            dev = grid[None, None, :] - mu[:, :, None]
            phi = np.exp(-0.5 * dev * dev / var[:, :, None]) / np.sqrt(2.0 * np.pi * var[:, :, None])
            dens[lo:hi] = np.einsum("qt,qtm->qm", wn[lo:hi], phi)
        est[g] = dens.mean(axis=0)
        lower[g], upper[g] = _shortest_windows(dens, level)
    return GridDensity(grid, est, lower, upper, level)


def co_clustering(z_draws: np.ndarray) -> np.ndarray:
    """Fraction of draws in which each pair of items shares a component.

    ``z_draws`` is (Q, n); the result is symmetric with unit diagonal.
    """
    z = np.asarray(z_draws)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValueError("need a (Q, n) array of allocation draws")
    q, n = z.shape
    out = np.zeros((n, n))
    for lo in range(0, q, _DENSITY_CHUNK):
        hi = min(lo + _DENSITY_CHUNK, q)
        eq = z[lo:hi, :, None] == z[lo:hi, None, :]
        out += eq.sum(axis=0)
    return out / q


def psm(samples: PosteriorSamples, scope: str = "per-group"):
    """Posterior similarity matrices from the allocation draws.

    ``scope="per-group"`` returns one matrix per group; ``scope="global"``
    concatenates the groups (only meaningful when components are shared, so
    it is refused for independently fitted groups).
    """
    if scope == "per-group":
        return [co_clustering(z) for z in samples.alloc]
    if scope == "global":
        if samples.mode == "no_pooling":
            raise ValueError("global similarity is undefined for independent per-group fits")
        return co_clustering(np.concatenate(samples.alloc, axis=1))
    raise ValueError("scope must be 'per-group' or 'global'")


def _relabel(labels: np.ndarray) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.int64)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def vi_lower_bound(psm_matrix: np.ndarray, labels: np.ndarray) -> float:
    """Variation-of-information lower bound of a partition given a similarity matrix."""
    P = np.asarray(psm_matrix, dtype=float)
    labels = _relabel(np.asarray(labels))
    n = labels.shape[0]
    sizes = np.bincount(labels)
    member_sum = np.zeros(n)
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        member_sum[idx] = P[np.ix_(idx, idx)].sum(axis=1)
    return float(
        np.mean(np.log2(sizes[labels])) + np.mean(np.log2(P.sum(axis=1)))
        - 2.0 * np.mean(np.log2(member_sum))
    )


@dataclass(frozen=True)
class PartitionEstimate:
    """A partition point estimate and the loss value it attains."""

    labels: np.ndarray
    loss: float


class _VISearch:
    """Greedy build plus sweetening passes on the variable part of the bound.

    The optimized objective drops the label-free middle term of the bound:
    mean_i [log2 |cluster(i)| - 2 log2 sum_{j in cluster(i)} P_ij].
    """

    def __init__(self, P: np.ndarray):
        self.P = P
        self.n = P.shape[0]

    def _objective(self, labels, sizes, member_sum) -> float:
        return float(np.sum(np.log2(sizes[labels]) - 2.0 * np.log2(member_sum)))

    def run(self, order: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, float]:
        n, P = self.n, self.P
        labels = np.full(n, -1, dtype=np.int64)
        sizes = np.zeros(n + 1, dtype=np.int64)  # room for one new cluster
        member_sum = np.zeros(n)  # per item: similarity mass inside its cluster
        n_clusters = 0
        assigned = np.zeros(n, dtype=bool)

        def deltas(i):
            """Objective change of putting i into each cluster; last entry = new singleton."""
            k = n_clusters
            out = np.zeros(k + 1)
            if k:
                sz = sizes[:k].astype(float)
                p_i = P[i]
                mask = assigned
                # growth of log-size terms for existing members, plus their S gain
                t = np.log2(member_sum[mask] + p_i[mask]) - np.log2(member_sum[mask])
                lab = labels[mask]
                gain_s = np.bincount(lab, weights=t, minlength=k)
                s_new = np.bincount(lab, weights=p_i[mask], minlength=k) + P[i, i]
                grow = (sz + 1.0) * np.log2(sz + 1.0) - sz * np.log2(np.maximum(sz, 1.0))
                out[:k] = grow - 2.0 * gain_s - 2.0 * np.log2(s_new)
            out[k] = -2.0 * np.log2(P[i, i])
            return out

        def insert(i, c):
            nonlocal n_clusters
            members = assigned & (labels == c)
            member_sum[members] += P[i][members]
            member_sum[i] = P[i][members].sum() + P[i, i]
            labels[i] = c
            sizes[c] += 1
            assigned[i] = True
            if c == n_clusters:
                n_clusters += 1

        def remove(i):
            nonlocal n_clusters
            c = labels[i]
            assigned[i] = False
            labels[i] = -1
            sizes[c] -= 1
            members = assigned & (labels == c)
            member_sum[members] -= self.P[i][members]
            member_sum[i] = 0.0
            if sizes[c] == 0:
                # compact: move the last cluster id into the freed slot
                last = n_clusters - 1
                if c != last:
                    moved = assigned & (labels == last)
                    labels[moved] = c
                    sizes[c] = sizes[last]
                sizes[last] = 0
                n_clusters -= 1

        for i in order:
            d = deltas(i)
            insert(i, int(np.argmin(d)))

        for _ in range(max_sweeps):
            changed = False
            for i in range(n):
                old = labels[i]
                remove(i)
                d = deltas(i)
                best = int(np.argmin(d))
                insert(i, best)
                if labels[i] != old:
                    changed = True
            if not changed:
                break

        final = _relabel(labels)
        sizes_f = np.bincount(final)
        ms = np.zeros(n)
        for c in range(final.max() + 1):
            idx = np.nonzero(final == c)[0]
            ms[idx] = P[np.ix_(idx, idx)].sum(axis=1)
        return final, self._objective(final, sizes_f, ms)


def vi_partition(
    psm_matrix: np.ndarray,
    n_restarts: int = 16,
    *,
    seed=0,
    max_sweeps: int = 50,
) -> PartitionEstimate:
    """Partition point estimate minimizing the similarity-based VI lower bound.

    Greedy sequential allocation in a random order, then sweetening passes,
    best of ``n_restarts`` restarts. Ties break toward lower loss, then fewer
    clusters, then the first solution found. The all-singletons and one-block
    partitions are always included as candidates, so the estimate never loses
    to either baseline.
    """
    P = np.asarray(psm_matrix, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("similarity matrix must be square")
    n = P.shape[0]
    if n == 0:
        raise ValueError("empty similarity matrix")
    if n == 1:
        return PartitionEstimate(np.zeros(1, dtype=np.int64), vi_lower_bound(P, np.zeros(1, dtype=np.int64)))

    const = float(np.mean(np.log2(P.sum(axis=1))))
    search = _VISearch(P)
    rng = np.random.default_rng(seed)

    candidates = [
        np.zeros(n, dtype=np.int64),  # one block
        np.arange(n, dtype=np.int64),  # singletons
    ]
    results = []
    for labels in candidates:
        results.append((labels, vi_lower_bound(P, labels)))
    for _ in range(n_restarts):
        labels, var_part = search.run(rng.permutation(n), max_sweeps)
        results.append((labels, var_part / n + const))

    best_labels, best_loss = results[0]
    for labels, loss in results[1:]:
        better = loss < best_loss - 1e-12
        tie = abs(loss - best_loss) <= 1e-12
        if better or (tie and labels.max() < best_labels.max()):
            best_labels, best_loss = labels, loss
    return PartitionEstimate(_relabel(best_labels), float(best_loss))


def ari(a, b) -> float:
    """Adjusted Rand index between two partitions of the same items."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError("partitions must cover the same items")
    n = a.shape[0]
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    cont = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(cont, (ai, bi), 1.0)

    def comb2(x):
        return x * (x - 1.0) / 2.0

    sum_cells = comb2(cont).sum()
    sum_rows = comb2(cont.sum(axis=1)).sum()
    sum_cols = comb2(cont.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / comb2(n)
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def tv_distance(f, g, dx: float) -> float:
    """Half the gridded L1 distance between two densities, clamped to [0, 1]."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError("grids must match")
    if not dx > 0:
        raise ValueError("grid spacing must be > 0")
    return float(min(max(0.5 * np.abs(f - g).sum() * dx, 0.0), 1.0))


def group_similarity(samples: PosteriorSamples, *, seed=0) -> tuple[np.ndarray, PartitionEstimate]:
    """Fraction of draws in which pairs of groups occupy identical component sets,
    plus the group partition obtained from that matrix.

    Requires shared components across groups (refused for independent fits).
    """
    if samples.mode == "no_pooling":
        raise ValueError("group similarity is undefined for independent per-group fits")
    occ = samples.occupied_sets()  # (Q, T, G)
    G = samples.n_groups
    sim = np.eye(G)
    for g in range(G):
        for h in range(g + 1, G):
            match = np.all(occ[:, :, g] == occ[:, :, h], axis=1)
            sim[g, h] = sim[h, g] = match.mean()
    partition = vi_partition(sim, seed=seed)
    return sim, partition
