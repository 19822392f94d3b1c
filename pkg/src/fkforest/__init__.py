"""Exact combinatorics of interacting-particle genealogies and finite
ensemble-size expansions of their moment measures.

The package splits into a combinatorial layer (leveled forests, colored
forests, orbit counts, generating-function censuses), an exact linear
algebra layer over finite-state weighted Markov models (signed measures
and tensor functions with rational entries), the expansion engines that
tie the two together, and two independent ground truths: a sampling-free
configuration dynamic program and a seeded Monte Carlo simulator.
"""

from .combinatorics import (
    compositions,
    falling_factorial,
    mi_factorial,
    mi_falling,
    mi_leq,
    mi_norm,
    mi_stirling_first,
    stirling_first,
    stirling_second,
)
from .config import Caps, DEFAULT_CAPS
from .errors import (
    CapExceeded,
    IdentityMismatch,
    InvalidParameter,
    ToolkitError,
    ValidationError,
)
from .forest import (
    Forest,
    MapSeq,
    Tree,
    brute_force_orbit_count,
    brute_force_stabilizer_size,
    chain_tree,
    count_jungles,
    cut_branch_forest,
    double_pair_forest,
    enumerate_forests,
    enumerate_orbits,
    enumerate_trees,
    forest,
    forest_of,
    nested_merge_forest,
    pair_merge_forest,
    planar_mapseq,
    remove_roots,
    staggered_merge_forest,
    symmetry_multiset,
    tree,
    triple_merge_forest,
    trivial_forest,
    two_tree_merge_forest,
    wick_pair_forest,
)
from .colored_forest import (
    ColoredForest,
    ColoredMapSeq,
    ColoredTree,
    black,
    black_chain,
    brute_force_colored_orbit_count,
    build_wick_forest,
    colored_forest,
    colored_forest_of,
    colored_planar_mapseq,
    colored_symmetry_multiset,
    count_colored_jungles,
    enumerate_colored_forests,
    enumerate_colored_orbits,
    first_order_path_forest,
    normalize_path_profile,
    path_profile_bar,
    white,
    white_topped_chain,
    wick_colored_tree,
)
from .genfunc import (
    SparseSeries,
    coalescence_series,
    count_forests,
    hilbert_series,
    marginalize_coalescence,
)
from .fk_core import (
    DMap,
    FKModel,
    Flow,
    SignedMeasure,
    TensorFunction,
    center_function,
    constant_function,
    delta_colored,
    delta_forest,
    dot_partial_tv,
    eta_measure,
    eta_tensor,
    fiber_count,
    flow,
    format_scalar,
    function_from_vector,
    gamma_measure,
    gamma_tensor,
    is_centered,
    lq_derivative,
    lq_operator,
    measure_from_vector,
    path_gamma,
    path_semigroup,
    q_operator,
    semigroup,
    tensor_minus_dot_tv,
)
from .particle import (
    config_count,
    estimators,
    exact_config_distribution,
    exact_EN_oracle,
    exact_eta_tensor_oracle,
    exact_PN_oracle,
    exact_QN_dot_oracle,
    exact_QN_oracle,
    mc_gamma_mean,
    simulate,
)
from .expansion import (
    ExpansionReport,
    centered_moment_expansion,
    closed_form_low_orders,
    derivative_P,
    derivative_P_tilde,
    derivative_Q,
    exact_QN,
    expansion_report_P,
    expansion_report_Q,
    expansion_report_path_Q,
    first_order_P,
    gaussian_covariance,
    gaussian_product_moment,
    gbar_vector,
    max_order_Q,
    measure_table,
    pair_partitions,
    path_derivative_Q,
    path_exact_QN,
    path_max_order,
    path_wick_Q,
    ustat_decay_check,
    wick_Q,
    zolotarev_interval,
)
from .models import (
    DOCUMENTED_FLOW,
    bundled_model,
    bundled_names,
    bundled_summary,
    check_documented_flow,
    load_model,
    model_sha256,
    random_rational_model,
)

__version__ = "0.1.0"
