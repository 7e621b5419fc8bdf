"""Open-loop, random and PI baselines side by side.

The PI gains here are the built-in defaults; ``gain_sweep.py`` (or
``rampctl tune``) finds better ones for the current scenario.

    python demos/compare_policies.py
"""

import numpy as np

from rampctl import DEFAULT_REFERENCE, OpenLoopPolicy, PIGains, PIPolicy, RandomPolicy, build_iter_hybrid_env
from rampctl.tuning import episode_returns, evaluate_policy


def main(n_random: int = 10, seed: int = 0):
    config = build_iter_hybrid_env()
    spec = config.action_spec
    ol = evaluate_policy(OpenLoopPolicy(DEFAULT_REFERENCE, spec), config)
    pi = evaluate_policy(PIPolicy(PIGains(0.7, 34.257), DEFAULT_REFERENCE, spec), config)
    rand = np.array(episode_returns(RandomPolicy(spec), config, n_episodes=n_random, seed=seed))

    print(f"open loop       J = {ol:.4f}")
    print(f"random (n={n_random:2d})  J = {rand.mean():.4f} +- {rand.std():.4f}")
    print(f"PI (default)    J = {pi:.4f}")


if __name__ == "__main__":
    main()
