"""Thompson sampling bandit lab.

Simulates Thompson sampling on finite-action bandits, checks the martingale
structure of its action-selection probabilities against an exact enumeration
oracle, and estimates the optimal action from nothing but the agent's action
stream.
"""

from .belief import (
    BetaBelief,
    DegenerateEvidenceError,
    DiscreteBelief,
    OptimalActionDistribution,
    optimal_action_probability,
    optimal_action_probability_mc,
    sample_parameter,
    update_beta,
    update_discrete,
)
from .diagnostics import (
    UnsupportedInstanceError,
    bayes_regret_estimate,
    counterexample_report,
    default_verification_grid,
    enumerate_exact,
    log_count_ratio,
    martingale_check,
    posterior_convergence_report,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    derive_seed,
    load_config,
    parse_config,
    read_trace_csv,
    run_experiment,
    write_trace_csv,
)
from .model import (
    ActionTrace,
    BetaBernoulliModel,
    ParameterGrid,
    mean_reward,
    optimal_action,
    optimal_partition,
    sample_reward,
    validate_grid,
)
from .observer import ConvergenceCurve, FrequencyEstimator, convergence_curve
from .policies import (
    SquareStepCompositePolicy,
    ThompsonBetaPolicy,
    ThompsonDiscretePolicy,
    UniformRandomPolicy,
    build_policy,
    run_episode,
)

__version__ = "0.1.0"
