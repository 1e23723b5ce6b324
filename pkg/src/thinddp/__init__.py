"""Dependent Dirichlet process mixtures via thinned stick-breaking."""

__version__ = "0.1.0"

from .analytics import (
    CorrelationResult,
    bessel_i,
    corr_bernoulli,
    corr_conditional,
    corr_dependent_bernoulli,
    corr_eventually,
    corr_parent_bernoulli,
    corr_parent_conditional,
    corr_parent_eventually,
    corr_parent_poisson,
    corr_poisson,
    corr_poisson_diff,
    corr_symmetric_blocked,
    corr_symmetric_poisson,
    dp_expected_distinct,
    expected_k_bounds,
    expected_k_exact,
)
from .datagen import MIXTURE_A, MIXTURE_B, GaussianMixture, ScenarioConfig, generate_dataset
from .mcmc import GibbsState, GroupedDataset, ModelConfig, PosteriorSamples, run_chain
from .sticks import (
    DPParams,
    PartitionCounts,
    ThinnedSticks,
    compute_weights,
    count_partition,
    monte_carlo_expected_k,
    sample_prior_observations,
    sample_sticks,
)
from .summaries import (
    GridDensity,
    PartitionEstimate,
    ari,
    density_estimate,
    group_similarity,
    psm,
    tv_distance,
    vi_partition,
)
from .thinning import (
    BernoulliThinning,
    DependentBernoulliThinning,
    EventuallySingleAtomThinning,
    SymmetricBlockedThinning,
    ThinningSequences,
    UnderTruncationError,
    marginal_one_probability,
    sample_thinning,
)
