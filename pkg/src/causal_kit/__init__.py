"""Causal inference toolkit: DAG queries, structural simulation and effect estimation."""

from .dag import (
    Dag, Path, backdoor_paths, d_separated, d_separated_by_paths, enumerate_paths,
    format_dag, is_valid_backdoor_set, make_swig, minimal_backdoor_sets, parse_dag,
    path_blocked, read_dag,
)
from .config import BootstrapConfig, PenaltyConfig
from .data import Dataset, parse_csv, read_csv, write_csv
from .errors import CausalKitError
from .estimators import (
    EffectReport, ate_wald, balance_check, bootstrap, cate_interaction, crossover_effect,
    fit_propensity, group_means, ht_transform, ipw_ate, relative_effect, risk_measures,
    standardized_contrast,
)
from .highdim import (
    DmlReport, LassoFit, debiased_lasso, double_selection, lasso, orthogonality_check,
    partial_out, select_lambda,
)
from .sem import (
    StructuralModel, counterfactual_pairs, intervene, oracle_effects, scenario, simulate,
)

__version__ = "0.1.0"
