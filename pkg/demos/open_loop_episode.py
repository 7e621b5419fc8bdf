"""Run the open-loop reference through the ITER-like ramp-up and print a trace.

    python demos/open_loop_episode.py
"""

from rampctl import DEFAULT_REFERENCE, OpenLoopPolicy, RampEnv, build_iter_hybrid_env


def main():
    config = build_iter_hybrid_env()
    env = RampEnv(config)
    policy = OpenLoopPolicy(DEFAULT_REFERENCE, config.action_spec)

    obs, _ = env.reset()
    print(f"observation vector: {obs.size} entries, horizon {config.horizon_steps} steps")
    print(f"{'t':>5} {'I_p':>6} {'P_nbi':>6} {'j0':>6} {'q_min':>6} {'q95':>6} {'Q':>6} {'H98':>6} {'r':>7}")
    total = 0.0
    while not env.done:
        result = env.step(policy(env.t, env.state))
        total += result.reward
        s = result.info["raw_state_snapshot"]
        if round(s["t"]) % 10 == 0:
            print(
                f"{s['t']:5.0f} {s['i_p']:6.2f} {s['p_nbi']:6.1f} {s['j0']:6.3f} {s['q_min']:6.2f} "
                f"{s['q95']:6.2f} {s['q_fusion_gain']:6.2f} {s['h98']:6.2f} {result.reward:7.4f}"
            )
    print(f"undiscounted return J = {total:.4f}")


if __name__ == "__main__":
    main()
