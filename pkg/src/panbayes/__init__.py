"""Differentially private Bayesian-network learning over horizontally
partitioned data, and pan-private stream density estimation."""

from .dp_core import (
    BudgetExhaustedError,
    BudgetLedger,
    InvalidParameterError,
    PrivacyBudget,
    RandomSource,
    Sensitivity,
    compose_sequential,
    exponential_select,
    perturb_counts,
    randomized_response,
    sample_laplace,
)
from .discrete_prob import (
    AttributeSchema,
    Dataset,
    FrequencyTable,
    ProbabilityTable,
    build_frequency_table,
    cross_entropy,
    entropy_bits,
    kl_divergence,
    marginalize,
    mi_sensitivity,
    mutual_information,
    smooth_add_one,
    to_probability,
)
from .bayes_net import (
    BayesNet,
    BNStructure,
    ConditionalTables,
    greedy_structure_learn,
    learn_parameters_central,
    prior_sample,
    topological_order,
)
from .distributed import (
    HolderEndpoint,
    ProtocolMessage,
    learn_parameters_distributed,
    learn_structure_majority_vote,
    learn_structure_noisy_ss,
    learn_structure_share_model,
    partition_round_robin,
    run_strategy,
)
from .stream import Stream, StreamSpec, generate_stream, stream_density, sub_stream_density
from .pan_private import (
    actual_budget_used,
    design_binary_quantizer,
    finalize_density,
    ingest,
    make_estimator,
    optimize_sample_size,
    snapshot_state,
    tightest_error_bound,
)

__version__ = "0.1.0"
