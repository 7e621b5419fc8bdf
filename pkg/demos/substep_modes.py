"""Fixed versus adaptive inner substepping on the same open-loop episode.

    python demos/substep_modes.py
"""

import time

from rampctl import DEFAULT_REFERENCE, OpenLoopPolicy, RampEnv, build_iter_hybrid_env
from rampctl.tuning import run_episode


def main():
    base = build_iter_hybrid_env()
    policy = OpenLoopPolicy(DEFAULT_REFERENCE, base.action_spec)
    for label, config in [
        ("fixed K=5", base),
        ("fixed K=20", base.replace(k_fixed=20)),
        ("auto", base.replace(substep_mode="auto", k_fixed=None)),
    ]:
        start = time.perf_counter()
        ep = run_episode(RampEnv(config), policy, keep_info=True)
        elapsed = time.perf_counter() - start
        counts = [info["n_substeps"] for info in ep.infos]
        print(
            f"{label:10s} J={ep.ret(config.gamma):.4f}  substeps/step {min(counts)}..{max(counts)}  "
            f"total {sum(counts):5d}  {elapsed:.2f}s"
        )


if __name__ == "__main__":
    main()
