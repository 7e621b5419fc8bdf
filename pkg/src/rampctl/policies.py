"""Baseline policies: open-loop reference, uniform random, PI current tracking.

Each policy exists as a pure function over explicit state and as a small
stateful wrapper with ``reset(seed)`` / ``__call__(t, state)`` used by the
rollout helpers in :mod:`rampctl.tuning`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from rampctl.env import ActionSpec, Breakpoints, _breakpoint_problems, sample_series
from rampctl.errors import ConfigError
from rampctl.plasma import PlasmaState

ReferenceTrajectory = Mapping[str, Breakpoints]

DEFAULT_REFERENCE: dict[str, list[tuple[float, float]]] = {
    "i_p": [(0.0, 3.0), (100.0, 15.0)],
    "p_nbi": [(0.0, 0.0), (80.0, 0.0), (99.0, 33.0)],
    "p_ecrh": [(0.0, 0.0), (19.0, 0.0), (20.0, 10.0)],
}


def reference_problems(ref: ReferenceTrajectory, spec: ActionSpec) -> list[str]:
    out = []
    for channel in spec.channels:
        points = ref.get(channel.name)
        if points is None:
            out.append(f"reference trajectory has no channel {channel.name!r}")
            continue
        label = f"reference channel {channel.name!r}"
        out += _breakpoint_problems(label, points)
        if any(not channel.low <= v <= channel.high for _, v in points):
            out.append(f"{label} leaves the action bounds [{channel.low}, {channel.high}]")
    for name in set(ref) - set(spec.names):
        out.append(f"reference trajectory channel {name!r} is not an action")
    return out


def open_loop_policy(t: float, ref: ReferenceTrajectory, spec: ActionSpec) -> np.ndarray:
    """Reference actions at ``t``, linearly interpolated and held past the end."""
    return np.array([sample_series(ref[name], t) for name in spec.names])


def random_policy(rng: np.random.Generator, spec: ActionSpec) -> tuple[np.ndarray, np.random.Generator]:
    """One action drawn uniformly and independently per channel."""
    return rng.uniform(spec.low, spec.high), rng


@dataclass(frozen=True)
class PIGains:
    k_p: float = 0.700
    k_i: float = 34.257


@dataclass(frozen=True)
class CurrentDensityTarget:
    """Linear ramp of the central current density, MA/m^2."""

    start: float = 0.6
    end: float = 2.0
    ramp_end_s: float = 100.0

    def __call__(self, t: float) -> float:
        return self.start + (self.end - self.start) * min(t, self.ramp_end_s) / self.ramp_end_s


@dataclass(frozen=True, eq=False)
class PIState:
    integral: float = 0.0
    last_action: np.ndarray | None = None
    hold_active: bool = False


def pi_policy(
    t: float,
    measured_j0: float,
    gains: PIGains,
    pi_state: PIState,
    dt: float,
    ref: ReferenceTrajectory,
    spec: ActionSpec,
    target: CurrentDensityTarget = CurrentDensityTarget(),
) -> tuple[np.ndarray, PIState]:
    """PI control of the plasma current on the central current density.

    During the ramp the current command is ``k_p*e + k_i*integral(e)`` clamped
    to the channel bounds, and the other channels follow the reference. From
    ``target.ramp_end_s`` on, the last action is repeated.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if t >= target.ramp_end_s and pi_state.last_action is not None:
        return pi_state.last_action.copy(), dataclasses.replace(pi_state, hold_active=True)

    error = target(t) - measured_j0
    integral = pi_state.integral + error * dt
    command = gains.k_p * error + gains.k_i * integral
    action = open_loop_policy(t, ref, spec)
    k = spec.names.index("i_p")
    action[k] = min(max(command, spec.channels[k].low), spec.channels[k].high)
    return action, PIState(integral=integral, last_action=action.copy(), hold_active=False)


# -- stateful wrappers -------------------------------------------------------------


class Policy(Protocol):
    name: str
    deterministic: bool

    def reset(self, seed: int | None = None) -> None: ...

    def __call__(self, t: float, state: PlasmaState) -> np.ndarray: ...


class OpenLoopPolicy:
    name = "open_loop"
    deterministic = True

    def __init__(self, ref: ReferenceTrajectory, spec: ActionSpec):
        problems = reference_problems(ref, spec)
        if problems:
            raise ConfigError(problems)
        self.ref = ref
        self.spec = spec

    def reset(self, seed=None):
        pass

    def __call__(self, t, state):
        return open_loop_policy(t, self.ref, self.spec)


class RandomPolicy:
    name = "random"
    deterministic = False

    def __init__(self, spec: ActionSpec, seed: int = 0):
        self.spec = spec
        self.reset(seed)

    def reset(self, seed=None):
        self.rng = np.random.default_rng(seed)

    def __call__(self, t, state):
        action, self.rng = random_policy(self.rng, self.spec)
        return action


class PIPolicy:
    name = "pi"
    deterministic = True

    def __init__(
        self,
        gains: PIGains,
        ref: ReferenceTrajectory,
        spec: ActionSpec,
        dt: float = 1.0,
        target: CurrentDensityTarget = CurrentDensityTarget(),
    ):
        problems = reference_problems(ref, spec)
        if "i_p" not in spec.names:
            problems.append("PI policy needs an 'i_p' action channel")
        if problems:
            raise ConfigError(problems)
        self.gains = gains
        self.ref = ref
        self.spec = spec
        self.dt = dt
        self.target = target
        self.reset()

    def reset(self, seed=None):
        self.pi_state = PIState()

    def __call__(self, t, state):
        action, self.pi_state = pi_policy(
            t, state.j0, self.gains, self.pi_state, self.dt, self.ref, self.spec, self.target
        )
        return action


def as_breakpoints(points: Sequence[Sequence[float]]) -> list[tuple[float, float]]:
    return [(float(t), float(v)) for t, v in points]
