"""ITER hybrid ramp-up scenario: three actions and a four-term reward.

The reward is ``alpha_Q g(Q) + alpha_qmin g(q_min) + alpha_q95 g(q95) +
alpha_H98 g(H98)`` where each ``g`` is a trapezoidal membership function of a
target band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from rampctl.env import ActionChannel, ActionSpec, EnvConfig, ObservationSpec, OBSERVABLE_FIELDS
from rampctl.plasma import DerivedQuantities, InitialProfiles, PlasmaState, RadialGrid, SimConfig

REWARD_TERMS = ("Q", "q_min", "q95", "h98")


@dataclass(frozen=True)
class RewardWeights:
    alpha_q: float = 0.01
    alpha_qmin: float = 0.01
    alpha_q95: float = 0.005
    alpha_h98: float = 0.005

    def __post_init__(self):
        values = self.as_tuple()
        if not all(math.isfinite(v) and v >= 0 for v in values):
            raise ValueError(f"reward weights must be finite and >= 0, got {values}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha_q, self.alpha_qmin, self.alpha_q95, self.alpha_h98)

    def scaled(self, c: float) -> RewardWeights:
        return RewardWeights(*(c * w for w in self.as_tuple()))


@dataclass(frozen=True)
class TargetBand:
    """Trapezoid: 0 outside ``[low_zero, high_zero]``, 1 on ``[low_one, high_one]``.

    Use ``-inf``/``inf`` for an open side.
    """

    low_zero: float
    low_one: float
    high_one: float
    high_zero: float

    def __post_init__(self):
        pts = (self.low_zero, self.low_one, self.high_one, self.high_zero)
        if any(math.isnan(p) for p in pts):
            raise ValueError("band edges must not be NaN")
        if not (pts[0] <= pts[1] <= pts[2] <= pts[3]):
            raise ValueError(f"band edges must be ordered, got {pts}")
        if pts[0] == pts[3]:
            raise ValueError("band must have non-zero width")

    @classmethod
    def at_least(cls, zero: float, one: float) -> TargetBand:
        return cls(zero, one, math.inf, math.inf)

    @classmethod
    def at_most(cls, one: float, zero: float) -> TargetBand:
        return cls(-math.inf, -math.inf, one, zero)


def g_term(x: float, band: TargetBand) -> float:
    """Trapezoidal membership of ``x`` in ``band``, in [0, 1]."""
    if x < band.low_one:
        if x <= band.low_zero:
            return 0.0
        return (x - band.low_zero) / (band.low_one - band.low_zero)
    if x > band.high_one:
        if x >= band.high_zero:
            return 0.0
        return (band.high_zero - x) / (band.high_zero - band.high_one)
    return 1.0


DEFAULT_BANDS: dict[str, TargetBand] = {
    "Q": TargetBand.at_least(0.0, 10.0),
    "q_min": TargetBand.at_least(0.5, 1.0),
    "q95": TargetBand(1.0, 3.0, 4.0, 6.0),
    "h98": TargetBand.at_least(0.5, 1.0),
}


def reward(derived: DerivedQuantities, weights: RewardWeights, bands: Mapping[str, TargetBand]) -> float:
    """Weighted sum of the four band memberships."""
    return (
        weights.alpha_q * g_term(derived.q_fusion_gain, bands["Q"])
        + weights.alpha_qmin * g_term(derived.q_min, bands["q_min"])
        + weights.alpha_q95 * g_term(derived.q95, bands["q95"])
        + weights.alpha_h98 * g_term(derived.h98, bands["h98"])
    )


@dataclass(frozen=True)
class HybridReward:
    """Reward hook for :class:`rampctl.env.RampEnv`; ignores the action."""

    weights: RewardWeights = field(default_factory=RewardWeights)
    bands: Mapping[str, TargetBand] = field(default_factory=lambda: dict(DEFAULT_BANDS))

    def __post_init__(self):
        missing = set(REWARD_TERMS) - set(self.bands)
        if missing:
            raise ValueError(f"reward bands missing for {sorted(missing)}")

    def __call__(self, state: PlasmaState, derived: DerivedQuantities, action: np.ndarray) -> float:
        return reward(derived, self.weights, self.bands)


def default_sim_config() -> SimConfig:
    """Surrogate settings for the ITER-like ramp-up.

    Densities are Greenwald fractions so that fuelling follows the current,
    the H-mode pedestal is a raised edge temperature, and ``q_shape_factor``
    brings the cylindrical q95 to about 3 at 15 MA.
    """
    return SimConfig(
        grid=RadialGrid(n_cells=25, minor_radius_m=2.0, major_radius_m=6.2, b0_tesla=5.3),
        chi_i=(1.0, 0.5),
        chi_e=(1.0, 0.5),
        chi_current_exponent=1.0,
        d_e=0.1,
        eta=2.8e-8,
        t_edge_kev=(0.2, 2.0),
        greenwald_density=True,
        n_target_core=1.2,
        n_target_edge=0.35,
        tau_density_s=2.0,
        q_shape_factor=2.9,
    )


# cold, low-density 3 MA start with j0 close to 0.6 MA/m^2
DEFAULT_INITIAL: dict[str, float] = {
    "T_core": 1.5, "T_edge": 0.2, "T_exponent": 1.0, "n_core": 3.0,
    "n_edge": 1.0, "n_exponent": 1.0, "j_exponent": 1.5, "i_p": 3.0,
}


def default_initial_profiles(grid: RadialGrid) -> InitialProfiles:
    return InitialProfiles.parabolic(grid, **DEFAULT_INITIAL)


def default_action_spec() -> ActionSpec:
    return ActionSpec(
        (
            ActionChannel("i_p", 3.0, 15.0, ramp_rate_limit=0.2, unit="MA"),
            ActionChannel("p_nbi", 0.0, 33.0, unit="MW"),
            ActionChannel("p_ecrh", 0.0, 20.0, unit="MW"),
        )
    )


DEFAULT_OBSERVATION_BOUNDS: dict[str, tuple[float, float]] = {
    "T_i": (0.0, 50.0),
    "T_e": (0.0, 50.0),
    "n_e": (0.0, 15.0),
    "j": (0.0, 4.0),
    "psi": (0.0, 40.0),
    "q_profile": (0.0, 20.0),
    "q_min": (0.0, 20.0),
    "q95": (0.0, 20.0),
    "beta": (0.0, 0.05),
    "q_fusion_gain": (0.0, 20.0),
    "h98": (0.0, 3.0),
    "i_p": (0.0, 15.0),
    "p_nbi": (0.0, 33.0),
    "p_ecrh": (0.0, 20.0),
    "time": (0.0, 150.0),
}


def default_observation_spec() -> ObservationSpec:
    return ObservationSpec(fields=OBSERVABLE_FIELDS, bounds=dict(DEFAULT_OBSERVATION_BOUNDS))


def build_iter_hybrid_env(
    sim: SimConfig | None = None,
    weights: RewardWeights | None = None,
    bands: Mapping[str, TargetBand] | None = None,
    **overrides,
) -> EnvConfig:
    """Default ITER hybrid ramp-up configuration: 150 steps of 1 s, fully observed."""
    sim = sim or default_sim_config()
    hook = HybridReward(weights or RewardWeights(), dict(bands or DEFAULT_BANDS))
    config = EnvConfig(
        sim=sim,
        initial=default_initial_profiles(sim.grid),
        action_spec=default_action_spec(),
        observation_spec=default_observation_spec(),
        reward_params=hook,
        horizon_steps=150,
        control_interval_s=1.0,
        substep_mode="fixed",
        k_fixed=5,
        gamma=1.0,
    )
    if overrides:
        config = config.replace(**overrides)
    return config.validate()
