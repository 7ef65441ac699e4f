"""Active exploration in Markov decision processes.

Variance-adaptive allocation of visits across states: the asymptotic
allocation problem, the FW-AME learner, faster-mixing surrogate policies
and the experiment harness around them.
"""

__version__ = "0.1.0"

from .asymptotic import SolveResult, fw_solve, grad_loss, loss_lambda, loss_regularized
from .errors import ActiveMdpError
from .fmh import FmhResult, delta_schedule, fmh_run, p1_solve, p2_project
from .fwame import EpisodeSchedule, LearnerTrace, fw_ame_fmh_run, fw_ame_run, regret_exponent, uniform_baseline_run
from .garnet import garnet_generate
from .mdp import (
    ChainAnalysis,
    MdpModel,
    StationaryPolicy,
    chain_from_policy,
    load_mdp,
    save_mdp,
    three_state_mdp,
    uniform_policy,
)
from .polytope import LinearMinOracle, lambda_to_policy, linear_min_oracle
from .simlab import ExperimentConfig, preset_config, run_experiment
from .spectral import slem_of
from .stats import EstimatorState, ObservationModel

__all__ = [
    "__version__",
    "ActiveMdpError",
    "ChainAnalysis",
    "EpisodeSchedule",
    "EstimatorState",
    "ExperimentConfig",
    "FmhResult",
    "LearnerTrace",
    "LinearMinOracle",
    "MdpModel",
    "ObservationModel",
    "SolveResult",
    "StationaryPolicy",
    "chain_from_policy",
    "delta_schedule",
    "fmh_run",
    "fw_ame_fmh_run",
    "fw_ame_run",
    "fw_solve",
    "garnet_generate",
    "grad_loss",
    "lambda_to_policy",
    "linear_min_oracle",
    "load_mdp",
    "loss_lambda",
    "loss_regularized",
    "p1_solve",
    "p2_project",
    "preset_config",
    "regret_exponent",
    "run_experiment",
    "save_mdp",
    "slem_of",
    "three_state_mdp",
    "uniform_baseline_run",
    "uniform_policy",
]
