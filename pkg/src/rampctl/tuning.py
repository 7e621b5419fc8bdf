"""Policy evaluation and grid search over PI gains."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from rampctl.env import EnvConfig, RampEnv, compute_return
from rampctl.policies import CurrentDensityTarget, PIGains, PIPolicy, Policy, ReferenceTrajectory


@dataclass
class Episode:
    rewards: list[float] = field(default_factory=list)
    infos: list[dict] = field(default_factory=list)
    terminated: bool = False

    def ret(self, gamma: float) -> float:
        return compute_return(self.rewards, gamma)


def run_episode(env: RampEnv, policy: Policy, seed: int | None = None, keep_info: bool = False) -> Episode:
    """Roll out one episode; the policy sees the raw plasma state."""
    policy.reset(seed)
    env.reset()
    episode = Episode()
    while not env.done:
        result = env.step(policy(env.t, env.state))
        episode.rewards.append(result.reward)
        episode.terminated = result.terminated
        if keep_info:
            episode.infos.append(result.info)
    return episode


def episode_seeds(seed: int, n_episodes: int) -> list[int]:
    """Independent per-episode seeds derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n_episodes)
    return [int(c.generate_state(1)[0]) for c in children]


def episode_returns(policy: Policy, env_config: EnvConfig, n_episodes: int = 1, seed: int = 0) -> list[float]:
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if policy.deterministic and n_episodes != 1:
        raise ValueError("a deterministic policy in a deterministic environment needs n_episodes = 1")
    env = RampEnv(env_config)
    return [run_episode(env, policy, s).ret(env_config.gamma) for s in episode_seeds(seed, n_episodes)]


def evaluate_policy(policy: Policy, env_config: EnvConfig, n_episodes: int = 1, seed: int = 0) -> float:
    """Mean discounted return over ``n_episodes`` episodes."""
    returns = episode_returns(policy, env_config, n_episodes, seed)
    return float(sum(returns) / len(returns))


@dataclass(frozen=True)
class GridSpec:
    kp_range: tuple[float, float] = (0.0, 2.0)
    ki_range: tuple[float, float] = (0.0, 60.0)
    n: int = 20
    m: int = 60

    def __post_init__(self):
        if not self.kp_range[0] < self.kp_range[1] or not self.ki_range[0] < self.ki_range[1]:
            raise ValueError("grid ranges need min < max")
        if self.n < 1 or self.m < 1:
            raise ValueError("grid needs n >= 1 and m >= 1")

    @property
    def kp_values(self) -> np.ndarray:
        return np.linspace(*self.kp_range, self.n)

    @property
    def ki_values(self) -> np.ndarray:
        return np.linspace(*self.ki_range, self.m)


@dataclass
class ReturnSurface:
    kp_values: np.ndarray
    ki_values: np.ndarray
    j_values: np.ndarray
    best_index: tuple[int, int]
    best_gains: PIGains
    best_return: float


def _evaluate_gains(args) -> float:
    env_config, reference, k_p, k_i, target = args
    policy = PIPolicy(PIGains(k_p, k_i), reference, env_config.action_spec, env_config.control_interval_s, target)
    return evaluate_policy(policy, env_config)


def grid_search(
    grid: GridSpec,
    env_config: EnvConfig,
    reference: ReferenceTrajectory,
    target: CurrentDensityTarget = CurrentDensityTarget(),
    workers: int | None = 1,
) -> ReturnSurface:
    """Evaluate the PI policy at every gain pair and keep the best.

    Ties go to the smallest ``k_p`` index, then the smallest ``k_i`` index.
    ``workers > 1`` spreads the episodes over processes; ``None`` uses all CPUs.
    """
    kp, ki = grid.kp_values, grid.ki_values
    jobs = [(env_config, reference, float(p), float(i), target) for p in kp for i in ki]
    if workers == 1:
        values = [_evaluate_gains(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_evaluate_gains, jobs, chunksize=max(1, len(jobs) // 64)))
    surface = np.array(values).reshape(grid.n, grid.m)
    # argmax returns the first maximum in row-major order: smallest kp index, then ki
    flat = int(np.argmax(surface))
    best = divmod(flat, grid.m)
    return ReturnSurface(
        kp_values=kp,
        ki_values=ki,
        j_values=surface,
        best_index=best,
        best_gains=PIGains(float(kp[best[0]]), float(ki[best[1]])),
        best_return=float(surface[best]),
    )


def export_surface(surface: ReturnSurface, clip_floor: float | None = None) -> list[dict[str, float]]:
    """Rows of ``(k_p, k_i, J, J_clipped)`` in k_p-major order."""
    rows = []
    for a, k_p in enumerate(surface.kp_values):
        for b, k_i in enumerate(surface.ki_values):
            j = float(surface.j_values[a, b])
            rows.append(
                {
                    "k_p": float(k_p),
                    "k_i": float(k_i),
                    "J": j,
                    "J_clipped": j if clip_floor is None else max(j, clip_floor),
                }
            )
    return rows
