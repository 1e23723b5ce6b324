"""Prior models for the binary thinning sequences driving a thinned stick-breaking prior.

Four specifications are supported:

* independent Bernoulli flags per group,
* "eventually single-atom" sequences (a block of leading zeros, then all ones),
  with the zero-block length either fixed or Poisson-distributed,
* dependent Bernoulli pairs for two groups, parameterized by the four joint
  probabilities,
* a symmetric blocked layout (a shared prefix of ones, one exclusive block per
  group, then all ones), with block lengths fixed or Poisson-distributed.

All group indices in this package are 0-based. Models are immutable value
types and every operation is reentrant given independent generators, so
concurrent use with per-thread seeds is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnderTruncationError",
    "ThinningModel",
    "BernoulliThinning",
    "EventuallySingleAtomThinning",
    "DependentBernoulliThinning",
    "SymmetricBlockedThinning",
    "ThinningSequences",
    "sample_thinning",
    "marginal_one_probability",
]

_JOINT_TOL = 1e-12


class UnderTruncationError(ValueError):
    """The truncation level cannot accommodate the requested thinning structure."""


def as_generator(seed) -> np.random.Generator:
    """Coerce an int / SeedSequence / Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class ThinningModel:
    """Base class for thinning-sequence priors; see the concrete subclasses."""

    @property
    def n_groups(self) -> int | None:
        """Number of groups implied by the parameters, or None if free."""
        raise NotImplementedError


@dataclass(frozen=True)
class BernoulliThinning(ThinningModel):
    """Independent Bernoulli(keep_probs[g]) flags for each level and group.

    keep_probs must lie in (0, 1]; a probability of 1 yields an all-ones
    column (complete pooling), while 0 is rejected because it empties the
    thinned process at any truncation.
    """

    keep_probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.keep_probs)
        object.__setattr__(self, "keep_probs", probs)
        if len(probs) == 0:
            raise ValueError("need at least one group probability")
        for p in probs:
            if not 0.0 < p <= 1.0:
                raise ValueError(f"keep probability {p} outside (0, 1]")

    @property
    def n_groups(self) -> int:
        return len(self.keep_probs)


@dataclass(frozen=True)
class EventuallySingleAtomThinning(ThinningModel):
    """Column g is zero for the first starts[g]-1 levels and one afterwards.

    Either ``starts`` (each >= 1) is fixed, or ``rates`` gives Poisson rates
    and starts[g] - 1 is drawn as Poisson(rates[g]) at sampling time.
    """

    starts: tuple[int, ...] | None = None
    rates: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.starts is None) == (self.rates is None):
            raise ValueError("give exactly one of starts or rates")
        if self.starts is not None:
            starts = tuple(int(u) for u in self.starts)
            object.__setattr__(self, "starts", starts)
            if any(u < 1 for u in starts):
                raise ValueError("starts must be >= 1")
        else:
            rates = tuple(float(r) for r in self.rates)
            object.__setattr__(self, "rates", rates)
            if any(r < 0 for r in rates):
                raise ValueError("rates must be >= 0")

    @property
    def n_groups(self) -> int:
        params = self.starts if self.starts is not None else self.rates
        return len(params)


@dataclass(frozen=True)
class DependentBernoulliThinning(ThinningModel):
    """Dependent Bernoulli pairs for two groups.

    The four joint probabilities P(flag_1=a, flag_2=b) must sum to one
    within 1e-12; pairs are independent across levels.
    """

    p11: float
    p10: float
    p01: float
    p00: float

    def __post_init__(self):
        probs = (self.p11, self.p10, self.p01, self.p00)
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"joint probability {p} outside [0, 1]")
        if abs(sum(probs) - 1.0) > _JOINT_TOL:
            raise ValueError("joint probabilities must sum to 1 within 1e-12")

    @property
    def n_groups(self) -> int:
        return 2

    def marginal(self, group: int) -> float:
        if group == 0:
            return self.p11 + self.p10
        if group == 1:
            return self.p11 + self.p01
        raise ValueError(f"group index {group} out of range for 2 groups")


@dataclass(frozen=True)
class SymmetricBlockedThinning(ThinningModel):
    """Blocked layout: blocks[0] shared ones, then blocks[g] exclusive levels
    for each group g in turn, then all ones.

    Either ``blocks`` (G+1 nonnegative ints) is fixed, or ``rates`` gives
    independent Poisson rates for the block lengths.
    """

    blocks: tuple[int, ...] | None = None
    rates: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.blocks is None) == (self.rates is None):
            raise ValueError("give exactly one of blocks or rates")
        if self.blocks is not None:
            blocks = tuple(int(b) for b in self.blocks)
            object.__setattr__(self, "blocks", blocks)
            if len(blocks) < 2:
                raise ValueError("need a shared block plus one block per group")
            if any(b < 0 for b in blocks):
                raise ValueError("block lengths must be >= 0")
        else:
            rates = tuple(float(r) for r in self.rates)
            object.__setattr__(self, "rates", rates)
            if len(rates) < 2:
                raise ValueError("need a shared rate plus one rate per group")
            if any(r < 0 for r in rates):
                raise ValueError("rates must be >= 0")

    @property
    def n_groups(self) -> int:
        params = self.blocks if self.blocks is not None else self.rates
        return len(params) - 1


@dataclass(frozen=True)
class ThinningSequences:
    """A realized truncation-by-groups binary matrix of thinning flags."""

    flags: np.ndarray  # (T, G) uint8

    def __post_init__(self):
        flags = np.ascontiguousarray(self.flags, dtype=np.uint8)
        if flags.ndim != 2:
            raise ValueError("flags must be a (T, G) matrix")
        if np.any(flags > 1):
            raise ValueError("flags must be binary")
        object.__setattr__(self, "flags", flags)

    @property
    def truncation(self) -> int:
        return self.flags.shape[0]

    @property
    def n_groups(self) -> int:
        return self.flags.shape[1]


def _check_columns_nonempty(flags: np.ndarray) -> None:
    level_axis = 0 if flags.ndim == 2 else 1
    if not flags.any(axis=level_axis).all():
        raise UnderTruncationError(
            "thinning produced an all-zero column; increase the truncation level"
        )


def _esa_starts(model: EventuallySingleAtomThinning, n: int, rng) -> np.ndarray:
    if model.starts is not None:
        return np.broadcast_to(np.asarray(model.starts, dtype=np.int64), (n, model.n_groups))
    rates = np.asarray(model.rates, dtype=float)
    return 1 + rng.poisson(rates, size=(n, len(rates)))


def _blocked_lengths(model: SymmetricBlockedThinning, n: int, rng) -> np.ndarray:
    if model.blocks is not None:
        return np.broadcast_to(np.asarray(model.blocks, dtype=np.int64), (n, len(model.blocks)))
    rates = np.asarray(model.rates, dtype=float)
    return rng.poisson(rates, size=(n, len(rates)))


def sample_thinning_batch(model: ThinningModel, truncation: int, n: int, rng) -> np.ndarray:
    """Sample ``n`` independent (T, G) flag matrices; returns (n, T, G) uint8.

    Used by Monte Carlo routines; raises UnderTruncationError if any column
    of any replication comes out all zero.
    """
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    T = truncation
    G = model.n_groups
    rows = np.arange(T)

    if isinstance(model, BernoulliThinning):
        probs = np.asarray(model.keep_probs)
        flags = (rng.random((n, T, G)) < probs).astype(np.uint8)
    elif isinstance(model, EventuallySingleAtomThinning):
        starts = _esa_starts(model, n, rng)  # (n, G)
        if np.any(starts > T):
            raise UnderTruncationError(
                f"start level {int(starts.max())} exceeds truncation {T}"
            )
        flags = (rows[None, :, None] >= starts[:, None, :] - 1).astype(np.uint8)
    elif isinstance(model, DependentBernoulliThinning):
        cum = np.cumsum([model.p11, model.p10, model.p01, model.p00])
        cat = np.searchsorted(cum, rng.random((n, T)), side="left")
        flags = np.empty((n, T, 2), dtype=np.uint8)
        flags[..., 0] = (cat == 0) | (cat == 1)
        flags[..., 1] = (cat == 0) | (cat == 2)
    elif isinstance(model, SymmetricBlockedThinning):
        lengths = _blocked_lengths(model, n, rng)  # (n, G+1)
        ends = np.cumsum(lengths, axis=1)  # block end offsets
        if np.any(ends[:, -1] > T):
            raise UnderTruncationError(
                f"total block length {int(ends[:, -1].max())} exceeds truncation {T}"
            )
        flags = np.empty((n, T, G), dtype=np.uint8)
        shared = rows[None, :] < lengths[:, :1]
        tail = rows[None, :] >= ends[:, -1:]
        for g in range(G):
            own = (rows[None, :] >= ends[:, g : g + 1]) & (rows[None, :] < ends[:, g + 1 : g + 2])
            flags[..., g] = shared | own | tail
    else:
        raise TypeError(f"unknown thinning model {type(model).__name__}")

    _check_columns_nonempty(flags)
    return flags


def sample_thinning(
    model: ThinningModel, truncation: int, n_groups: int | None = None, *, seed=None
) -> ThinningSequences:
    """Draw one truncated realization of the thinning sequences.

    Parameters
    ----------
    model : ThinningModel
    truncation : int
        Number of retained stick-breaking levels (rows), >= 1.
    n_groups : int, optional
        If given, must match the group count implied by the model.
    seed : int, SeedSequence or Generator

    Deterministic given the seed. Raises UnderTruncationError when the
    structure cannot fit (a fixed or drawn zero-block extending past the
    truncation, or a column that came out all zero).
    """
    if n_groups is not None and n_groups != model.n_groups:
        raise ValueError(
            f"model defines {model.n_groups} groups, asked for {n_groups}"
        )
    rng = as_generator(seed)
    flags = sample_thinning_batch(model, truncation, 1, rng)[0]
    return ThinningSequences(flags)


def marginal_one_probability(model: ThinningModel, group: int) -> float:
    """P(flag = 1) for one level in the given (0-based) group.

    Only defined for level-homogeneous models; the eventually-single-atom
    and blocked layouts have row-dependent marginals and raise.
    """
    G = model.n_groups
    if not 0 <= group < G:
        raise ValueError(f"group index {group} out of range for {G} groups")
    if isinstance(model, BernoulliThinning):
        return model.keep_probs[group]
    if isinstance(model, DependentBernoulliThinning):
        return model.marginal(group)
    raise ValueError(
        f"row-dependent marginal: {type(model).__name__} has no single "
        "per-level probability"
    )
