"""Monte Carlo estimators that exploit product-form structure."""

from .diagnostics import (
    Ecdf,
    OracleReport,
    batch_means_variance,
    brute_force_oracle,
    conditional_oracle,
    efficiency_frontier,
    efficiency_frontier_large_k,
    ks_statistic,
    oracle_fast,
    reference_theta_posterior,
    theory_ratios,
    top_mass,
    w1_distance,
)
from .distributions import (
    FiniteDiscrete,
    InverseGamma,
    Normal,
    PointMass,
    StudentT,
    Uniform,
)
from .errors import (
    CapExceeded,
    DegeneracyError,
    EvaluationError,
    ProdformError,
    RegimeError,
)
from .estimators import (
    DiscreteProductTarget,
    Estimate,
    ReplicateSummary,
    VarianceReport,
    asymptotic_variances,
    exact_variance,
    hoeffding_projection,
    product_form_estimate,
    replicate_variance,
    standard_estimate,
)
from .factorized import (
    EliminationPlan,
    eval_eliminated,
    eval_sop,
    pfq_mean,
    plan_elimination,
    taylor_bias,
    taylor_pf_asymptotic_variance,
    taylor_sop_exp,
    taylor_std_asymptotic_variance,
)
from .functions import (
    BlackBox,
    FactorGraphFunction,
    SopFunction,
    as_black_box,
    product_of_coordinates,
)
from .importance import (
    ConditionalSamples,
    LogWeightModel,
    WeightedParticles,
    mn_average_exact_variance,
    pf_is_estimate,
    pf_snis_estimate,
    ppf_estimate,
    ppf_exact_variance,
    theta_marginal,
)
from .mcmc import (
    ChainTrace,
    DiscreteUniformProposal,
    GimhConfig,
    HierarchicalModel,
    LogRandomWalkProposal,
    density_estimate,
    gibbs_hierarchical,
    gimh_chain,
    rwm_chain,
)
from .mixtures import (
    MixtureComponent,
    MixtureOfProducts,
    allocation_asymptotic_variance,
    mixture_exact_moments,
    optimal_allocation,
    plain_exact_variance,
    proportional_allocation,
    stratified_estimate,
    stratified_exact_variance,
    stratified_pf_estimate,
    stratified_pf_exact_variance,
)
from .rng import Rng
from .samples import MarginalSamples

__version__ = "0.1.0"
