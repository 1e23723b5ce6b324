"""Synthetic grouped data for the simulation study.

Groups draw from one of two Gaussian mixtures: a three-component mixture
with means (-5, 0, 5) and probabilities (0.5, 0.25, 0.25), or a two-component
mixture with means (5, 10) and probabilities (0.4, 0.6); all component
variances are 0.6. By default the first half of the groups uses the
three-component mixture and the second half the two-component one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mcmc import MODES, GroupedDataset

__all__ = [
    "GaussianMixture",
    "MIXTURE_A",
    "MIXTURE_B",
    "MIXTURES",
    "ScenarioConfig",
    "ReplicationData",
    "generate_dataset",
    "data_stream",
    "model_stream",
]


@dataclass(frozen=True)
class GaussianMixture:
    """Finite Gaussian mixture with a common variance."""

    means: tuple[float, ...]
    probs: tuple[float, ...]
    var: float

    def __post_init__(self):
        if len(self.means) != len(self.probs):
            raise ValueError("means and probs must align")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probs must sum to 1")

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Draw n observations; returns (values, component labels)."""
        labels = rng.choice(len(self.probs), size=n, p=self.probs)
        values = rng.normal(np.asarray(self.means)[labels], math.sqrt(self.var))
        return values, labels

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        norm = 1.0 / math.sqrt(2.0 * math.pi * self.var)
        for mean, prob in zip(self.means, self.probs):
            out += prob * norm * np.exp(-0.5 * (x - mean) ** 2 / self.var)
        return out


MIXTURE_A = GaussianMixture(means=(-5.0, 0.0, 5.0), probs=(0.5, 0.25, 0.25), var=0.6)
MIXTURE_B = GaussianMixture(means=(5.0, 10.0), probs=(0.4, 0.6), var=0.6)
MIXTURES = {"A": MIXTURE_A, "B": MIXTURE_B}

SCHEMA_VERSION = 1


def _default_generators(n_groups: int) -> tuple[str, ...]:
    half = n_groups // 2
    return ("A",) * half + ("B",) * (n_groups - half)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation-study scenario.

    ``generators`` assigns a mixture ("A" or "B") to each group; the default
    splits the groups half and half.
    """

    name: str
    sizes: tuple[int, ...]
    replications: int
    seed: int
    models: tuple[str, ...] = MODES
    generators: tuple[str, ...] | None = None
    iterations: int = 3000
    burn_in: int = 2000
    truncation: int = 100
    grid_points: int = 300
    density_replications: tuple[int, ...] = (0,)

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if self.n_groups not in (2, 10):
            raise ValueError("scenarios are defined for 2 or 10 groups")
        if any(n <= 0 for n in sizes):
            raise ValueError("group sizes must be positive")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        models = tuple(self.models)
        object.__setattr__(self, "models", models)
        if not models or any(m not in MODES for m in models):
            raise ValueError(f"models must be a nonempty subset of {MODES}")
        gens = self.generators
        if gens is None:
            gens = _default_generators(self.n_groups)
        gens = tuple(str(g) for g in gens)
        object.__setattr__(self, "generators", gens)
        if len(gens) != self.n_groups or any(g not in MIXTURES for g in gens):
            raise ValueError("generators must assign 'A' or 'B' to every group")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        object.__setattr__(
            self, "density_replications", tuple(int(r) for r in self.density_replications)
        )

    @property
    def n_groups(self) -> int:
        return len(self.sizes)


@dataclass(frozen=True)
class ReplicationData:
    """One generated dataset with its ground truth."""

    dataset: GroupedDataset
    true_labels: tuple[np.ndarray, ...]
    mixtures: tuple[GaussianMixture, ...]

    def true_pdf(self, group: int, x) -> np.ndarray:
        return self.mixtures[group].pdf(x)


def data_stream(seed: int, replication: int) -> np.random.Generator:
    """Data-generation stream for one replication: SeedSequence([seed, rep, 0])."""
    return np.random.default_rng(np.random.SeedSequence([seed, replication, 0]))


def model_stream(seed: int, replication: int, model_index: int) -> np.random.Generator:
    """Model-fit stream: SeedSequence([seed, rep, 1 + position in the model list])."""
    return np.random.default_rng(np.random.SeedSequence([seed, replication, 1 + model_index]))


def generate_dataset(config: ScenarioConfig, replication: int, seed: int | None = None) -> ReplicationData:
    """Generate one replication's grouped data, labels, and true densities.

    Deterministic in (seed, replication); the scenario's own seed is used
    unless an override is given.
    """
    rng = data_stream(config.seed if seed is None else seed, replication)
    groups, labels, mixtures = [], [], []
    for size, gen in zip(config.sizes, config.generators):
        mixture = MIXTURES[gen]
        y, lab = mixture.sample(size, rng)
        groups.append(y)
        labels.append(lab)
        mixtures.append(mixture)
    return ReplicationData(GroupedDataset(tuple(groups)), tuple(labels), tuple(mixtures))
