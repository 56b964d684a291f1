"""decqueue: deterministic simulator and policy library for decentralized
multi-queue / multi-server systems."""

from .adequa import (
    AdequaQueue,
    ExplorationSchedule,
    PerQueueBundle,
    QueueEstimates,
    SharedDraws,
    adequa_bundle,
    berger_opponent,
    decide,
    draw_shared,
    epsilon,
    update_after_round,
)
from .baselines import (
    CounterexampleConfig,
    DeviationReport,
    Exp3Config,
    NonPositiveMargin,
    centralized_policy,
    counterexample_policy,
    deviation_experiment,
    exp3_policy,
    fixed_policy,
)
from .birkhoff import (
    BvnDecomposition,
    NoPerfectMatching,
    disagreement_volume,
    draw_cost_matrix,
    hungarian,
    ordered_birkhoff,
    psi_sample,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    RunSummary,
    load_config,
    preset_instance,
    property_suite,
    run_experiment,
)
from .mapping import (
    InfeasibleMargin,
    PhiConfig,
    barrier_objective,
    compute_phi,
    empirical_margin,
    project_feasible,
    verify_domination,
)
from .model import (
    Decision,
    EnvState,
    EpisodeStreams,
    RoundOutcome,
    SystemParams,
    Trajectory,
    compute_margin,
    compute_slack,
    env_step,
    run_episode,
)

__version__ = "0.1.0"
