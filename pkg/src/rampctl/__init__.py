"""Control environments for tokamak plasma current ramp-up.

``rampctl.plasma`` holds a small 1D transport surrogate, ``rampctl.env`` the
episodic step/reset machinery, ``rampctl.iter_hybrid`` the ITER-like ramp-up
scenario and its reward, ``rampctl.policies`` the baseline controllers and
``rampctl.tuning`` rollouts and the PI gain sweep.
"""

from rampctl.env import ActionChannel, ActionSpec, EnvConfig, ObservationSpec, RampEnv, compute_return
from rampctl.errors import ConfigError, EpisodeOver, GridMismatch, NonPositiveProfile, NumericalBlowup, ZeroCurrent
from rampctl.iter_hybrid import HybridReward, RewardWeights, TargetBand, build_iter_hybrid_env, g_term
from rampctl.plasma import (
    Controls,
    DerivedQuantities,
    InitialProfiles,
    PlasmaState,
    RadialGrid,
    SimConfig,
    advance,
    compute_derived,
    init_state,
    substep,
)
from rampctl.policies import DEFAULT_REFERENCE, OpenLoopPolicy, PIGains, PIPolicy, RandomPolicy
from rampctl.tuning import GridSpec, evaluate_policy, grid_search

__version__ = "0.1.0"

__all__ = [
    "ActionChannel", "ActionSpec", "EnvConfig", "ObservationSpec", "RampEnv", "compute_return",
    "ConfigError", "EpisodeOver", "GridMismatch", "NonPositiveProfile", "NumericalBlowup", "ZeroCurrent",
    "HybridReward", "RewardWeights", "TargetBand", "build_iter_hybrid_env", "g_term",
    "Controls", "DerivedQuantities", "InitialProfiles", "PlasmaState", "RadialGrid", "SimConfig",
    "advance", "compute_derived", "init_state", "substep",
    "DEFAULT_REFERENCE", "OpenLoopPolicy", "PIGains", "PIPolicy", "RandomPolicy",
    "GridSpec", "evaluate_policy", "grid_search",
]
