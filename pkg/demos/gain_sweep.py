"""A coarse PI gain sweep, printed as a small return table.

The full 20x60 sweep takes a couple of minutes on one core; this one uses a
5x6 grid over the same ranges so it finishes in a few seconds.

    python demos/gain_sweep.py
"""

import numpy as np

from rampctl import DEFAULT_REFERENCE, GridSpec, build_iter_hybrid_env, grid_search


def main():
    config = build_iter_hybrid_env()
    grid = GridSpec(n=5, m=6)
    surface = grid_search(grid, config, DEFAULT_REFERENCE)

    print("k_p \\ k_i " + " ".join(f"{ki:8.2f}" for ki in grid.ki_values))
    for kp, row in zip(grid.kp_values, surface.j_values):
        print(f"{kp:9.3f} " + " ".join(f"{j:8.4f}" for j in np.asarray(row)))
    g = surface.best_gains
    print(f"best: k_p={g.k_p:.3f} k_i={g.k_i:.3f}  J={surface.best_return:.4f}")


if __name__ == "__main__":
    main()
