"""Conformal test martingales with Bayes-Kelly betting, exact optimality
certificates and binary maximum-likelihood e-processes."""

from .betting import (
    BettingMartingale,
    ConstantBettor,
    PiecewiseDensity,
    ShrunkAlternativeBettor,
    wealth_update,
)
from .bayes_kelly import (
    BayesKellyBettor,
    CollapsedBayesKellyBettor,
    HypothesisSet,
    bayes_kelly_bettor,
    collapse_binary_identity,
    condition,
    extend,
    predictive_density,
)
from .conformal import (
    ConformityMeasure,
    ConstantTauSource,
    DistanceToMeanMeasure,
    IdentityMeasure,
    PValueRecord,
    SequenceTauSource,
    TauSource,
    TrajectoryStep,
    UniformTauSource,
    ctm_run,
    pvalue_step,
    read_observation_stream,
    score_window,
    tie_counts,
)
from .eprocess import (
    EProcessState,
    empirical_ml,
    eprocess_step,
    example_distinct_report,
    initial_state,
    log_empirical_ml,
    log_ml_sup,
    ml_sup,
    run_eprocess,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    audit_trajectory,
    run_eprocess as run_eprocess_suite,
    run_optimality,
    run_simulate,
    run_validate,
)
from .models import (
    AlternativeModel,
    BinaryHMM,
    IIDModel,
    PointMassModel,
    TableModel,
    changepoint_model,
    iid_model,
    markov_model,
)
from .oracle import (
    CellPath,
    bk_factor_sequences,
    cell_tree,
    cell_volume_closure,
    evariable_expectation,
    expected_log_wealth,
    pushforward_kl,
    sample_betting_family,
)

__version__ = "0.1.0"

__all__ = [
    "AlternativeModel",
    "BayesKellyBettor",
    "BettingMartingale",
    "BinaryHMM",
    "CellPath",
    "CollapsedBayesKellyBettor",
    "ConfigError",
    "ConformityMeasure",
    "ConstantBettor",
    "ConstantTauSource",
    "DistanceToMeanMeasure",
    "EProcessState",
    "ExperimentConfig",
    "HypothesisSet",
    "IIDModel",
    "IdentityMeasure",
    "PValueRecord",
    "PiecewiseDensity",
    "PointMassModel",
    "SequenceTauSource",
    "ShrunkAlternativeBettor",
    "TableModel",
    "TauSource",
    "TrajectoryStep",
    "UniformTauSource",
    "audit_trajectory",
    "bayes_kelly_bettor",
    "bk_factor_sequences",
    "cell_tree",
    "cell_volume_closure",
    "changepoint_model",
    "collapse_binary_identity",
    "condition",
    "ctm_run",
    "empirical_ml",
    "eprocess_step",
    "evariable_expectation",
    "example_distinct_report",
    "expected_log_wealth",
    "extend",
    "iid_model",
    "initial_state",
    "log_empirical_ml",
    "log_ml_sup",
    "markov_model",
    "ml_sup",
    "predictive_density",
    "pushforward_kl",
    "pvalue_step",
    "read_observation_stream",
    "run_eprocess",
    "run_eprocess_suite",
    "run_optimality",
    "run_simulate",
    "run_validate",
    "sample_betting_family",
    "score_window",
    "tie_counts",
    "wealth_update",
]
