"""V-fold cross-validation and resampling penalties for least-squares
histogram density estimation on [0, 1], with exact variance formulas and a
reproducible Monte Carlo harness."""

from ._kernels import BACKEND
from .criteria import (
    CriterionSpec,
    FoldPartition,
    crit_ho,
    crit_ideal_expected,
    crit_lpo_closed,
    crit_vf,
    criterion_table,
    default_holdout_split,
    make_folds,
    parse_criterion,
    pen_dim,
    pen_ho,
    pen_vf,
    select,
)
from .densities import TrueDensity, from_json as density_from_json, make_setting
from .experiments import (
    ExperimentConfig,
    config_from_json,
    run_bench,
    run_cor,
    run_variance_curves,
    write_csv,
)
from .fastvf import vf_aggregates, vf_fast, vf_naive, bench_kernels
from .heuristic import m_star, phi_bar, selection_distribution, sr
from .models import (
    HistogramModel,
    ModelCollection,
    check_h1,
    collection_by_name,
    custom_model,
    dya2_collection,
    regu_collection,
)
from .projection import (
    ProjectedEstimate,
    ProjectionStats,
    empirical_risk,
    fit,
    loss,
    oracle_model,
    true_projection,
)
from .variance import (
    BetaTerms,
    VarianceReport,
    beta,
    beta_increment,
    beta_regular_nested,
    beta_terms,
    expected_delta,
    var_criterion,
    var_holdout,
    var_ideal,
    var_increment,
)

__version__ = "0.1.0"
