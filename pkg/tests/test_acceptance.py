"""The twelve acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line that the session prints at the end (see
``conftest.pytest_terminal_summary``), whether or not output is captured.
"""

import math
import time

import numpy as np
import pytest

import conftest
from conftest import energy_oracle, quiet_sim
from rampctl.cli import main
from rampctl.env import TERMINATION_REWARD, RampEnv, compute_return
from rampctl.errors import EpisodeOver
from rampctl.iter_hybrid import build_iter_hybrid_env, default_sim_config
from rampctl.plasma import Controls, InitialProfiles, advance, compute_derived, init_state
from rampctl.policies import (
    DEFAULT_REFERENCE,
    CurrentDensityTarget,
    OpenLoopPolicy,
    PIGains,
    PIPolicy,
    RandomPolicy,
)
from rampctl.tuning import GridSpec, episode_returns, evaluate_policy, grid_search, run_episode

MU0 = 4e-7 * math.pi


def record(number: int, ok: bool, detail: str) -> None:
    conftest.ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def env_config():
    return build_iter_hybrid_env()


@pytest.fixture(scope="module")
def tuned(env_config):
    """The default 20x60 sweep with parallel evaluation, timed."""
    start = time.perf_counter()
    surface = grid_search(GridSpec(n=20, m=60), env_config, DEFAULT_REFERENCE, workers=None)
    return surface, time.perf_counter() - start


def test_01_policy_ordering(env_config, tuned):
    surface, _ = tuned
    spec = env_config.action_spec
    j_pi = evaluate_policy(PIPolicy(surface.best_gains, DEFAULT_REFERENCE, spec), env_config)
    j_ol = evaluate_policy(OpenLoopPolicy(DEFAULT_REFERENCE, spec), env_config)
    j_r = float(np.mean(episode_returns(RandomPolicy(spec), env_config, n_episodes=10, seed=0)))
    ok = j_pi >= j_ol > j_r and j_pi == surface.best_return
    g = surface.best_gains
    record(
        1,
        ok,
        f"J(PI {g.k_p:.3f},{g.k_i:.3f})={j_pi:.4f} >= J(OL)={j_ol:.4f} > mean J(R, 10 seeds)={j_r:.4f}",
    )


def test_02_grid_argmax_oracle(env_config):
    start = time.perf_counter()
    grid = GridSpec(n=4, m=4)
    surface = grid_search(grid, env_config, DEFAULT_REFERENCE, workers=1)
    best = -math.inf
    for kp in grid.kp_values:
        for ki in grid.ki_values:
            pol = PIPolicy(PIGains(float(kp), float(ki)), DEFAULT_REFERENCE, env_config.action_spec)
            best = max(best, evaluate_policy(pol, env_config))
    elapsed = time.perf_counter() - start
    record(2, surface.best_return == best and elapsed < 30, f"best={surface.best_return!r} oracle={best!r} in {elapsed:.1f}s")


def test_03_return_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        rewards = list(rng.uniform(-1.0, 1.0, size=int(rng.integers(0, 151))))
        if rewards and rng.random() < 0.3:
            rewards[-1] = TERMINATION_REWARD
        for gamma in (0.0, 0.5, 1.0):
            terms = [r * gamma**t for t, r in enumerate(rewards)]
            brute = math.fsum(terms)
            scale = max(math.fsum(abs(x) for x in terms), 1e-300)
            worst = max(worst, abs(compute_return(rewards, gamma) - brute) / scale)
    record(3, worst < 1e-12, f"max relative deviation {worst:.2e} over 300 cases")


def test_04_energy_conservation():
    sim = quiet_sim(default_sim_config())
    prof = InitialProfiles.parabolic(sim.grid, T_core=8.0, T_exponent=2.0, n_core=6.0, n_edge=2.0)
    state = init_state(sim, prof)
    e0 = energy_oracle(state, sim)
    controls = Controls(i_p=3.0)
    for _ in range(150):
        state, stats = advance(state, controls, 1.0, sim, "fixed", 5)
    drift = abs(energy_oracle(state, sim) - e0) / e0
    record(4, drift < 1e-6, f"relative energy drift {drift:.2e} after 150 steps")


def test_05_current_pinning(env_config):
    env = RampEnv(env_config)
    pol = OpenLoopPolicy(DEFAULT_REFERENCE, env_config.action_spec)
    env.reset()
    worst = 0.0
    while not env.done:
        info = env.step(pol(env.t, env.state)).info
        i_p = info["applied_action"][0]
        worst = max(worst, abs(info["state"].total_current(env_config.sim.grid) - i_p) / i_p)
    record(5, worst < 1e-9, f"max relative current mismatch {worst:.2e}")


def test_06_ramp_rate_safety(env_config):
    env = RampEnv(env_config)
    worst, flag_errors, steps = 0.0, 0, 0
    for seed in range(100):
        pol = RandomPolicy(env_config.action_spec, seed)
        env.reset()
        prev = env.previous_action[0]
        while not env.done:
            info = env.step(pol(env.t, env.state)).info
            applied, requested = info["applied_action"], info["requested_action"]
            worst = max(worst, abs(applied[0] - prev))
            changed = bool(np.any(applied != requested))
            flag_errors += (info["action_clipped"] or info["ramp_limited"]) != changed
            prev = applied[0]
            steps += 1
    ok = worst <= 0.2 + 1e-12 and flag_errors == 0
    record(6, ok, f"max |delta i_p| {worst:.15f} MA, {flag_errors} flag mismatches over {steps} steps")


def test_07_termination_semantics(env_config):
    hostile = env_config.replace(sim=env_config.sim.replace(chi_i=(1e-6, 1e-6), chi_e=(1e-6, 1e-6)))
    env = RampEnv(hostile)
    env.reset()
    while not env.done:
        result = env.step([3.0, 33.0, 20.0])
    try:
        env.step([3.0, 0.0, 0.0])
        raised = False
    except EpisodeOver:
        raised = True
    ok = result.terminated and not result.truncated and result.reward == -1000.0 and raised
    record(7, ok, f"terminated={result.terminated} reward={result.reward} at step {env.step_count}, EpisodeOver={raised}")


def test_08_substep_accounting(env_config):
    pol = OpenLoopPolicy(DEFAULT_REFERENCE, env_config.action_spec)
    fixed = run_episode(RampEnv(env_config), pol, keep_info=True)
    fixed_ok = all(i["n_substeps"] == 5 for i in fixed.infos) and len(fixed.infos) == 150

    auto_cfg = env_config.replace(substep_mode="auto", k_fixed=None)
    auto = run_episode(RampEnv(auto_cfg), pol, keep_info=True)
    lo, hi = auto_cfg.sim.dt_min_s, auto_cfg.sim.dt_max_s
    sizes_ok = all(lo <= dt <= hi for i in auto.infos for dt in i["dt_used_s"][:-1])
    sums_ok = all(abs(sum(i["dt_used_s"]) - 1.0) <= 1e-9 for i in auto.infos)
    counts = [i["n_substeps"] for i in auto.infos]
    record(
        8,
        fixed_ok and sizes_ok and sums_ok and not auto.terminated,
        f"fixed K=5 on all 150 steps: {fixed_ok}; auto substeps {min(counts)}..{max(counts)}, "
        f"sizes in bounds: {sizes_ok}, sums to 1 s: {sums_ok}",
    )


def test_09_compare_determinism(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["compare", "--seed", "3", "--out", str(out)]) for out in outs]
    names = sorted(p.name for p in outs[0].iterdir())
    same = names == sorted(p.name for p in outs[1].iterdir()) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names
    )
    record(9, codes == [0, 0] and same, f"{len(names)} files byte-identical: {same}")


def test_10_q95_oracle():
    sim = default_sim_config()
    g = sim.grid
    state = init_state(sim, InitialProfiles.parabolic(g, j_exponent=1.0, i_p=15.0))
    q95 = compute_derived(state, Controls(i_p=15.0), sim).q95
    # cumulative integration of the same parabolic profile on a 10x finer grid
    n = 10 * g.n_cells
    edges = np.linspace(0.0, 1.0, n + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    area = math.pi * g.minor_radius_m**2 * np.diff(edges**2)
    j = 1.0 - centers**2
    j *= 15.0 / np.sum(j * area)
    i_95 = np.interp(0.95, edges, np.concatenate(([0.0], np.cumsum(j * area)))) * 1e6
    oracle = sim.q_shape_factor * 2 * math.pi * 0.95**2 * g.minor_radius_m**2 * g.b0_tesla / (
        MU0 * g.major_radius_m * i_95
    )
    err = abs(q95 - oracle) / oracle
    record(10, err < 0.02, f"q95={q95:.4f} oracle={oracle:.4f} relative error {err:.2%}")


def test_11_pi_tracking(env_config, tuned):
    surface, _ = tuned
    target = CurrentDensityTarget()
    pol = PIPolicy(surface.best_gains, DEFAULT_REFERENCE, env_config.action_spec)
    ep = run_episode(RampEnv(env_config), pol, keep_info=True)
    # states at the end of the first 100 control intervals, t = 1..100 s
    errors = [abs(info["state"].j0 - target(info["state"].t)) for info in ep.infos[:100]]
    mae = float(np.mean(errors))
    limit = 0.2 * (target.end - target.start)
    record(11, mae < limit, f"MAE {mae:.4f} MA/m^2 < {limit:.2f} with gains {surface.best_gains}")


def test_12_performance(env_config, tuned):
    _, sweep_s = tuned
    pol = OpenLoopPolicy(DEFAULT_REFERENCE, env_config.action_spec)
    env = RampEnv(env_config)
    run_episode(env, pol)
    times = []
    for _ in range(3):
        start = time.perf_counter()
        run_episode(env, pol)
        times.append(time.perf_counter() - start)
    episode_s = min(times)
    ok = episode_s < 1.0 and sweep_s < 300.0
    record(12, ok, f"episode {episode_s:.3f}s (< 1 s), 20x60 sweep {sweep_s:.0f}s (< 300 s)")
