import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import short_env
from rampctl.env import (
    TERMINATION_REWARD,
    ActionChannel,
    ActionSpec,
    ObservationSpec,
    RampEnv,
    clip_action,
    compute_return,
    normalize_observation,
)
from rampctl.errors import ConfigError, EpisodeOver
from rampctl.iter_hybrid import build_iter_hybrid_env
from rampctl.plasma import Controls, init_state
from rampctl.policies import DEFAULT_REFERENCE, open_loop_policy

SPEC = ActionSpec((ActionChannel("i_p", 0.0, 15.0, ramp_rate_limit=0.5), ActionChannel("p_nbi", 0.0, 33.0)))


# -- clip_action --------------------------------------------------------------------------


def test_clip_to_upper_bound():
    spec = ActionSpec((ActionChannel("i_p", 0.0, 15.0),))
    applied, clipped, ramp = clip_action([20.0], spec, [15.0])
    assert applied[0] == 15.0 and clipped and not ramp


def test_clip_ramp_window():
    applied, clipped, ramp = clip_action([11.0, 0.0], SPEC, [10.0, 0.0])
    assert applied[0] == 10.5 and ramp and not clipped


def test_clip_identity():
    applied, clipped, ramp = clip_action([10.2, 5.0], SPEC, [10.0, 0.0])
    assert list(applied) == [10.2, 5.0] and not clipped and not ramp


actions = st.tuples(st.floats(-50, 50), st.floats(-50, 80))
previous = st.tuples(st.floats(0, 15), st.floats(0, 33))


@given(actions, previous)
def test_clip_idempotent(req, prev):
    once, _, _ = clip_action(req, SPEC, prev)
    twice, c, r = clip_action(once, SPEC, prev)
    assert np.array_equal(once, twice) and not c and not r


@given(actions, previous)
def test_clip_respects_bounds_and_ramp(req, prev):
    applied, clipped, ramp = clip_action(req, SPEC, prev)
    assert np.all(applied >= SPEC.low) and np.all(applied <= SPEC.high)
    assert abs(applied[0] - prev[0]) <= 0.5 + 1e-12
    assert (clipped or ramp) == bool(np.any(applied != np.asarray(req)))


def test_action_spec_problems():
    bad = ActionSpec((ActionChannel("i_p", 5.0, 1.0, ramp_rate_limit=-1.0), ActionChannel("i_p", 0.0, 1.0)))
    assert len(bad.problems()) >= 3


# -- compute_return ---------------------------------------------------------------------


def test_return_examples():
    assert compute_return([1, 1, 1], 1.0) == 3
    assert compute_return([1, 2], 0.5) == 2.0
    assert compute_return([], 0.3) == 0


@given(st.lists(st.floats(-1e3, 1e3), max_size=150), st.floats(0, 1))
def test_return_matches_brute_force(rewards, gamma):
    brute = sum(r * gamma**t for t, r in enumerate(rewards))
    assert compute_return(rewards, gamma) == pytest.approx(brute, rel=1e-9, abs=1e-9)


@given(st.lists(st.floats(-100, 100), max_size=50), st.floats(0, 1), st.floats(-10, 10))
def test_return_linear(rewards, gamma, a):
    scaled = compute_return([a * r for r in rewards], gamma)
    assert scaled == pytest.approx(a * compute_return(rewards, gamma), rel=1e-9, abs=1e-9)


def test_return_rejects_gamma():
    with pytest.raises(ValueError):
        compute_return([1.0], 1.5)


# -- observation ---------------------------------------------------------------------------


def test_normalization_endpoints():
    cfg = build_iter_hybrid_env()
    state = init_state(cfg.sim, cfg.initial)
    controls = Controls(i_p=0.0, p_nbi=16.5, p_ecrh=20.0)
    spec = ObservationSpec(("i_p", "p_nbi", "p_ecrh"), {"i_p": (0, 15), "p_nbi": (0, 33), "p_ecrh": (-20, 20)})
    obs = normalize_observation(state, None, controls, 0.0, spec)
    assert list(obs) == [-1.0, 0.0, 1.0]


def test_normalization_passes_excursions_through():
    cfg = build_iter_hybrid_env()
    state = init_state(cfg.sim, cfg.initial)
    spec = ObservationSpec(("time",), {"time": (0.0, 10.0)})
    assert normalize_observation(state, None, Controls(i_p=3.0), 20.0, spec)[0] == 3.0


def test_observation_length_follows_fields():
    cfg = build_iter_hybrid_env()
    n = cfg.sim.grid.n_cells
    spec = ObservationSpec(("T_e", "q95", "time"), {"T_e": (0, 10), "q95": (0, 10), "time": (0, 150)})
    env = RampEnv(cfg.replace(observation_spec=spec))
    obs, _ = env.reset()
    assert obs.shape == (n + 2,) == (spec.size(n),)


def test_observation_spec_problems():
    assert ObservationSpec((), {}).problems()
    assert ObservationSpec(("q95",), {"q95": (1.0, 1.0)}).problems()
    assert ObservationSpec(("q95",), {}).problems()


# -- reset / step ----------------------------------------------------------------------------


def test_reset_observation_in_unit_box():
    env = RampEnv(build_iter_hybrid_env())
    obs, info = env.reset()
    assert np.all(obs >= -1) and np.all(obs <= 1)
    assert info["n_substeps"] == 0
    obs2, _ = env.reset()
    assert np.array_equal(obs, obs2)


def test_reset_rejects_double_coverage():
    cfg = build_iter_hybrid_env()
    bad = cfg.replace(uncontrolled_series={"i_p": [(0.0, 5.0)]})
    with pytest.raises(ConfigError) as info:
        RampEnv(bad)
    assert any("i_p" in p for p in info.value.problems)


def test_reset_reports_every_problem():
    cfg = build_iter_hybrid_env()
    bad = cfg.replace(horizon_steps=0, gamma=2.0, uncontrolled_series={"p_ecrh": [(1.0, 1.0)]})
    with pytest.raises(ConfigError) as info:
        RampEnv(bad).reset()
    assert len(info.value.problems) >= 4


def test_missing_channel_is_error():
    cfg = build_iter_hybrid_env()
    spec = ActionSpec(cfg.action_spec.channels[:2])
    with pytest.raises(ConfigError):
        RampEnv(cfg.replace(action_spec=spec))


def test_step_before_reset_raises():
    with pytest.raises(EpisodeOver):
        RampEnv(short_env()).step([3.0, 0.0, 0.0])


def test_horizon_and_substep_accounting():
    cfg = build_iter_hybrid_env()
    env = RampEnv(cfg)
    env.reset()
    steps, substeps = 0, 0
    while True:
        result = env.step(open_loop_policy(env.t, DEFAULT_REFERENCE, cfg.action_spec))
        steps += 1
        substeps += result.info["n_substeps"]
        assert not result.terminated
        if result.truncated:
            break
    assert steps == 150 and substeps == 150 * 5
    with pytest.raises(EpisodeOver):
        env.step([15.0, 33.0, 10.0])


def test_truncated_only_on_last_step():
    env = RampEnv(short_env(horizon=3))
    env.reset()
    flags = [env.step([3.0, 0.0, 0.0]).truncated for _ in range(3)]
    assert flags == [False, False, True]


def test_blowup_terminates_with_penalty():
    cfg = short_env(horizon=30)
    hostile = cfg.replace(sim=cfg.sim.replace(chi_i=(1e-6, 1e-6), chi_e=(1e-6, 1e-6)))
    env = RampEnv(hostile)
    env.reset()
    rewards = []
    while not env.done:
        result = env.step([3.0, 33.0, 20.0])
        rewards.append(result.reward)
    assert result.terminated and not result.truncated
    assert rewards[-1] == TERMINATION_REWARD
    assert rewards.count(TERMINATION_REWARD) == 1
    assert "failure" in result.info
    with pytest.raises(EpisodeOver):
        env.step([3.0, 0.0, 0.0])


def test_transition_determinism():
    cfg = short_env(horizon=10)
    rng = np.random.default_rng(3)
    seq = rng.uniform(cfg.action_spec.low, cfg.action_spec.high, size=(10, 3))
    runs = []
    for _ in range(2):
        env = RampEnv(cfg)
        env.reset()
        runs.append([env.step(a) for a in seq])
    for a, b in zip(*runs):
        assert np.array_equal(a.observation, b.observation)
        assert (a.reward, a.terminated, a.truncated) == (b.reward, b.terminated, b.truncated)


def test_uncontrolled_series_is_sampled():
    cfg = build_iter_hybrid_env(horizon_steps=4)
    spec = ActionSpec(cfg.action_spec.channels[:2])
    series = {"p_ecrh": [(0.0, 0.0), (2.0, 10.0)]}
    env = RampEnv(cfg.replace(action_spec=spec, uncontrolled_series=series))
    env.reset()
    seen = [env.step([3.0, 0.0]).info["raw_state_snapshot"]["p_ecrh"] for _ in range(4)]
    assert seen == [0.0, 5.0, 10.0, 10.0]


def test_reward_sees_applied_action_and_sink_records():
    seen = []

    def hook(state, derived, action):
        seen.append(np.array(action))
        return 0.25

    env = RampEnv(short_env(horizon=2).replace(reward_params=hook))
    records = []
    env.add_sink(records.append)
    env.reset()
    result = env.step([20.0, 50.0, 0.0])
    assert result.info["action_clipped"] and result.info["ramp_limited"]
    assert list(seen[0]) == [3.2, 33.0, 0.0]
    rec = records[0]
    assert rec["requested"] == [20.0, 50.0, 0.0] and rec["applied"] == [3.2, 33.0, 0.0]
    assert rec["t"] == 0.0 and rec["reward"] == 0.25 and rec["n_substeps"] == 5
    for key in ("raw_state_snapshot", "n_substeps", "action_clipped", "ramp_limited"):
        assert key in result.info


def test_action_shape_checked():
    env = RampEnv(short_env())
    env.reset()
    with pytest.raises(ValueError):
        env.step([3.0])
    with pytest.raises(ValueError):
        env.step([math.nan, 0.0, 0.0])


def test_initial_action_sets_ramp_reference():
    cfg = short_env(horizon=2).replace(initial_action={"i_p": 5.0})
    env = RampEnv(cfg)
    env.reset()
    assert env.step([15.0, 0.0, 0.0]).info["applied_action"][0] == pytest.approx(5.2)
    with pytest.raises(ConfigError):
        RampEnv(cfg.replace(initial_action={"i_p": 50.0}))
