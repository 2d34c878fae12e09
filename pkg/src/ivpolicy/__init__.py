"""Learning welfare-maximizing encouragement rules from instrumental-variable data.

Modules
-------
structural_model  data-generating processes, samples and oracle quantities
propensity        logit, local polynomial and series propensity estimators
mte               polynomial, partially linear and local IV MTE estimators
welfare           gains, budgets, reports, doubly robust scores, binary-IV welfare
policy_opt        exact and MILP welfare maximization over rule classes
experiments       configuration, end-to-end pipeline and Monte Carlo harness
"""

from .errors import (
    ConfigurationError,
    DomainError,
    EstimationError,
    ExtrapolationError,
    IdentificationError,
    InfeasibleError,
    IVPolicyError,
    SchemaError,
)
from .structural_model import (
    Law,
    Manipulation,
    ManipulationPair,
    Sample,
    StructuralDgp,
    canonical_dgp,
    oracle_budget,
    oracle_welfare,
    sample,
)
from .propensity import PropensityModel, fit_local_poly, fit_logit, fit_propensity, fit_series
from .mte import MteModel, fit_liv_mte, fit_mte, fit_partially_linear_mte, fit_polynomial_mte
from .welfare import (
    CostSpec,
    DrScoreSet,
    GainVector,
    WelfareReport,
    binary_iv_welfare,
    build_gains,
    dr_scores,
    rationed_welfare,
    report,
)
from .policy_opt import PolicySpec, solve_bewm, solve_dr_ewm, solve_fewm, solve_fewm_bewm, solve_ta
from .experiments import ExperimentConfig, RegretCurve, run_montecarlo, run_pipeline

__version__ = "0.1.0"
