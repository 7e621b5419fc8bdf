"""Episodic MDP wrapper around the transport surrogate.

An environment owns one simulator state. Each agent step clips the requested
action to its bounds and ramp-rate window, merges it with the prescribed
time series of the uncontrolled channels, advances the plasma by one control
interval and scores the result with the reward hook.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from rampctl.errors import ConfigError, EpisodeOver, NumericalBlowup, ZeroCurrent
from rampctl.plasma import (
    Controls,
    DerivedQuantities,
    InitialProfiles,
    PlasmaState,
    SimConfig,
    advance,
    compute_derived,
    init_state,
)

TERMINATION_REWARD = -1000.0
CONTROL_CHANNELS = ("i_p", "p_nbi", "p_ecrh")

PROFILE_FIELDS = ("T_i", "T_e", "n_e", "j", "psi", "q_profile")
SCALAR_FIELDS = ("q_min", "q95", "beta", "q_fusion_gain", "h98", "i_p", "p_nbi", "p_ecrh", "time")
OBSERVABLE_FIELDS = PROFILE_FIELDS + SCALAR_FIELDS

RewardHook = Callable[[PlasmaState, DerivedQuantities, np.ndarray], float]
Breakpoints = Sequence[tuple[float, float]]


@dataclass(frozen=True)
class ActionChannel:
    name: str
    low: float
    high: float
    ramp_rate_limit: float | None = None
    unit: str = ""


@dataclass(frozen=True)
class ActionSpec:
    channels: tuple[ActionChannel, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    @property
    def low(self) -> np.ndarray:
        return np.array([c.low for c in self.channels], dtype=float)

    @property
    def high(self) -> np.ndarray:
        return np.array([c.high for c in self.channels], dtype=float)

    @property
    def ramp_limits(self) -> np.ndarray:
        """Per-channel limit, ``inf`` where none is set."""
        return np.array(
            [np.inf if c.ramp_rate_limit is None else c.ramp_rate_limit for c in self.channels],
            dtype=float,
        )

    def __len__(self) -> int:
        return len(self.channels)

    def problems(self) -> list[str]:
        out = []
        if not self.channels:
            out.append("action spec has no channels")
        seen = set()
        for c in self.channels:
            if c.name in seen:
                out.append(f"action channel {c.name!r} listed twice")
            seen.add(c.name)
            if c.name not in CONTROL_CHANNELS:
                out.append(f"unknown action channel {c.name!r}; expected one of {CONTROL_CHANNELS}")
            if not (math.isfinite(c.low) and math.isfinite(c.high) and c.low < c.high):
                out.append(f"action channel {c.name!r} needs finite bounds with low < high")
            if c.ramp_rate_limit is not None and not c.ramp_rate_limit > 0:
                out.append(f"action channel {c.name!r} ramp_rate_limit must be > 0")
        return out


@dataclass(frozen=True)
class ObservationSpec:
    """Which fields the agent sees, and the bounds mapped onto [-1, 1]."""

    fields: tuple[str, ...]
    bounds: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "bounds", {k: tuple(v) for k, v in self.bounds.items()})

    def problems(self) -> list[str]:
        out = []
        if not self.fields:
            out.append("observation spec selects no fields")
        for name in self.fields:
            if name not in OBSERVABLE_FIELDS:
                out.append(f"unknown observation field {name!r}")
            elif name not in self.bounds:
                out.append(f"observation field {name!r} has no bounds")
        for name, (lo, hi) in self.bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                out.append(f"observation bounds for {name!r} must be finite with lower < upper")
        return out

    def size(self, n_cells: int) -> int:
        return sum(n_cells if f in PROFILE_FIELDS else 1 for f in self.fields)


@dataclass(frozen=True)
class EnvConfig:
    sim: SimConfig
    initial: InitialProfiles
    action_spec: ActionSpec
    observation_spec: ObservationSpec
    reward_params: RewardHook
    horizon_steps: int = 150
    control_interval_s: float = 1.0
    substep_mode: str = "fixed"
    k_fixed: int | None = 5
    uncontrolled_series: Mapping[str, Breakpoints] = field(default_factory=dict)
    initial_action: Mapping[str, float] = field(default_factory=dict)
    gamma: float = 1.0

    def replace(self, **changes) -> EnvConfig:
        return dataclasses.replace(self, **changes)

    def problems(self) -> list[str]:
        out = list(self.sim.problems())
        out += self.action_spec.problems()
        out += self.observation_spec.problems()
        if int(self.horizon_steps) != self.horizon_steps or self.horizon_steps < 1:
            out.append("env.horizon_steps must be a positive integer")
        if not self.control_interval_s > 0:
            out.append("env.control_interval_s must be > 0")
        if self.substep_mode not in ("auto", "fixed"):
            out.append(f"env.substep_mode must be 'auto' or 'fixed', got {self.substep_mode!r}")
        if self.substep_mode == "fixed" and self.k_fixed is not None and self.k_fixed < 1:
            out.append("env.k_fixed must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            out.append("env.gamma must lie in [0, 1]")
        if not callable(self.reward_params):
            out.append("env reward hook is not callable")
        controlled = set(self.action_spec.names)
        prescribed = set(self.uncontrolled_series)
        for name in CONTROL_CHANNELS:
            if name in controlled and name in prescribed:
                out.append(f"control {name!r} is both an action and an uncontrolled time series")
            elif name not in controlled and name not in prescribed:
                out.append(f"control {name!r} is neither an action nor an uncontrolled time series")
        for name in prescribed - set(CONTROL_CHANNELS):
            out.append(f"unknown uncontrolled series {name!r}")
        for name, points in self.uncontrolled_series.items():
            out += _breakpoint_problems(f"uncontrolled series {name!r}", points)
        for name in self.initial_action:
            if name not in controlled:
                out.append(f"initial action given for {name!r}, which is not an action channel")
        if not out:
            prev = initial_action_vector(self)
            bad = (prev < self.action_spec.low) | (prev > self.action_spec.high)
            for c, b in zip(self.action_spec.channels, bad):
                if b:
                    out.append(f"initial value of action {c.name!r} lies outside its bounds")
        return out

    def validate(self) -> EnvConfig:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


def _breakpoint_problems(label: str, points) -> list[str]:
    pts = list(points)
    if not pts:
        return [f"{label} has no breakpoints"]
    times = [p[0] for p in pts]
    values = [p[1] for p in pts]
    out = []
    if times[0] != 0:
        out.append(f"{label} must start at t = 0")
    if any(b <= a for a, b in zip(times, times[1:])):
        out.append(f"{label} times must be strictly increasing")
    if not all(math.isfinite(v) for v in times + values):
        out.append(f"{label} contains non-finite values")
    return out


def sample_series(points: Breakpoints, t: float) -> float:
    """Piecewise-linear interpolation, held constant outside the breakpoints."""
    times, values = zip(*points)
    return float(np.interp(t, times, values))


def initial_action_vector(config: EnvConfig) -> np.ndarray:
    """Action in force before the first step (the ramp-rate reference)."""
    out = []
    for name in config.action_spec.names:
        if name in config.initial_action:
            out.append(float(config.initial_action[name]))
        elif name == "i_p":
            out.append(float(config.initial.i_p))
        else:
            out.append(0.0)
    return np.array(out)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict[str, Any]

    def __iter__(self):
        # allows ``obs, reward, terminated, truncated, info = env.step(a)``
        return iter((self.observation, self.reward, self.terminated, self.truncated, self.info))


def clip_action(requested, spec: ActionSpec, previous) -> tuple[np.ndarray, bool, bool]:
    """Clamp to bounds, then to the ramp-rate window around ``previous``.

    Returns ``(applied, clipped, ramp_limited)``; each flag is set when the
    corresponding stage changed at least one channel.
    """
    requested = np.asarray(requested, dtype=float)
    previous = np.asarray(previous, dtype=float)
    bounded = np.clip(requested, spec.low, spec.high)
    limits = spec.ramp_limits
    applied = np.clip(bounded, previous - limits, previous + limits)
    clipped = bool(np.any(bounded != requested))
    ramp_limited = bool(np.any(applied != bounded))
    return applied, clipped, ramp_limited


def compute_return(rewards: Sequence[float], gamma: float) -> float:
    """Discounted return ``sum_t gamma**t * r_t``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    total = 0.0
    discount = 1.0
    for r in rewards:
        total += discount * r
        discount *= gamma
    return total


def observation_fields(state: PlasmaState, derived: DerivedQuantities | None, controls: Controls, t: float) -> dict:
    """Raw values of every observable field."""
    values = {
        "T_i": state.T_i, "T_e": state.T_e, "n_e": state.n_e, "j": state.j, "psi": state.psi,
        "i_p": controls.i_p, "p_nbi": controls.p_nbi, "p_ecrh": controls.p_ecrh, "time": t,
    }
    if derived is not None:
        values.update(
            q_profile=derived.q_profile, q_min=derived.q_min, q95=derived.q95, beta=derived.beta,
            q_fusion_gain=derived.q_fusion_gain, h98=derived.h98,
        )
    return values


def normalize_observation(state, derived, controls, t, spec: ObservationSpec) -> np.ndarray:
    """Affine map of each selected field from its bounds to [-1, 1], unclamped."""
    raw = observation_fields(state, derived, controls, t)
    parts = []
    for name in spec.fields:
        lo, hi = spec.bounds[name]
        parts.append(np.atleast_1d(2.0 * (np.asarray(raw[name], dtype=float) - lo) / (hi - lo) - 1.0))
    return np.concatenate(parts)


def snapshot(state: PlasmaState, derived: DerivedQuantities | None, controls: Controls) -> dict[str, float]:
    """Scalar summary of a plasma state for logs and trajectory records."""
    out = {
        "t": float(state.t),
        "i_p": controls.i_p,
        "p_nbi": controls.p_nbi,
        "p_ecrh": controls.p_ecrh,
        "j0": state.j0,
        "T_e0": float(state.T_e[0]),
        "T_i0": float(state.T_i[0]),
        "n_e0": float(state.n_e[0]),
    }
    if derived is not None:
        out.update(
            q_min=derived.q_min, q95=derived.q95, beta=derived.beta,
            q_fusion_gain=derived.q_fusion_gain, h98=derived.h98,
        )
    return out


class RampEnv:
    """One episode of the control problem.

    Subclasses may override :meth:`_compute_reward`; the default delegates to
    ``config.reward_params``. Record sinks attached with :meth:`add_sink` get a
    dict per step.
    """

    def __init__(self, config: EnvConfig):
        self.config = config.validate()
        self._sinks: list[Callable[[dict], None]] = []
        self._reset_needed = True

    # -- public API ------------------------------------------------------------

    def add_sink(self, sink: Callable[[dict], None]) -> None:
        self._sinks.append(sink)

    def reset(self, config: EnvConfig | None = None) -> tuple[np.ndarray, dict]:
        if config is not None:
            self.config = config.validate()
        cfg = self.config
        self.state = init_state(cfg.sim, cfg.initial)
        self.previous_action = initial_action_vector(cfg)
        self.controls = self._controls(self.previous_action, 0.0)
        self.derived = compute_derived(self.state, self.controls, cfg.sim)
        self.step_count = 0
        self.rewards: list[float] = []
        self._done = False
        self._reset_needed = False
        info = {
            "action_clipped": False,
            "ramp_limited": False,
            "n_substeps": 0,
            "raw_state_snapshot": snapshot(self.state, self.derived, self.controls),
            "state": self.state,
            "derived": self.derived,
        }
        return self.observe(), info

    @property
    def t(self) -> float:
        return self.step_count * self.config.control_interval_s

    @property
    def done(self) -> bool:
        return self._done

    def observe(self) -> np.ndarray:
        return normalize_observation(self.state, self.derived, self.controls, self.t, self.config.observation_spec)

    def step(self, action) -> StepResult:
        if self._reset_needed:
            raise EpisodeOver("call reset() before step()")
        if self._done:
            raise EpisodeOver("episode has ended; call reset()")
        cfg = self.config
        requested = np.asarray(action, dtype=float).reshape(-1)
        if requested.size != len(cfg.action_spec):
            raise ValueError(f"action has {requested.size} entries, spec has {len(cfg.action_spec)}")
        if not np.all(np.isfinite(requested)):
            raise ValueError("action contains non-finite values")

        t0 = self.t
        applied, clipped, ramp_limited = clip_action(requested, cfg.action_spec, self.previous_action)
        controls = self._controls(applied, t0)
        terminated = False
        failure = None
        try:
            state, stats = advance(
                self.state, controls, cfg.control_interval_s, cfg.sim, cfg.substep_mode, cfg.k_fixed
            )
            derived = compute_derived(state, controls, cfg.sim)
            reward = float(self._compute_reward(state, derived, applied))
            if not math.isfinite(reward):
                raise NumericalBlowup(f"non-finite reward {reward}")
        except (NumericalBlowup, ZeroCurrent) as exc:
            terminated = True
            failure = str(exc)
            reward = TERMINATION_REWARD
            stats = getattr(exc, "stats", None)
            state, derived = self.state, self.derived
        else:
            self.state, self.derived = state, derived

        self.previous_action = applied
        self.controls = controls
        self.step_count += 1
        self.rewards.append(reward)
        truncated = not terminated and self.step_count >= cfg.horizon_steps
        self._done = terminated or truncated

        info = {
            "action_clipped": clipped,
            "ramp_limited": ramp_limited,
            "n_substeps": stats.n_substeps if stats is not None else 0,
            "dt_used_s": list(stats.dt_used_s) if stats is not None else [],
            "requested_action": requested,
            "applied_action": applied,
            "raw_state_snapshot": snapshot(state, derived, controls),
            "state": state,
            "derived": derived,
        }
        if failure is not None:
            info["failure"] = failure
        if self._sinks:
            record = {
                "t": t0,
                "requested": requested.tolist(),
                "applied": applied.tolist(),
                "reward": reward,
                "terminated": terminated,
                "truncated": truncated,
                "clipped": clipped,
                "ramp_limited": ramp_limited,
                "n_substeps": info["n_substeps"],
                **{k: info["raw_state_snapshot"][k] for k in ("j0", "q_min", "q95", "beta", "q_fusion_gain", "h98")},
            }
            for sink in self._sinks:
                sink(record)
        return StepResult(self.observe(), reward, terminated, truncated, info)

    # -- hooks -----------------------------------------------------------------

    def _compute_reward(self, state: PlasmaState, derived: DerivedQuantities, applied: np.ndarray) -> float:
        return self.config.reward_params(state, derived, applied)

    def _controls(self, applied: np.ndarray, t: float) -> Controls:
        values = dict(zip(self.config.action_spec.names, applied))
        for name, points in self.config.uncontrolled_series.items():
            values[name] = sample_series(points, t)
        return Controls(**{k: float(values[k]) for k in CONTROL_CHANNELS})
