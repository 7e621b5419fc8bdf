"""Command line front end: ``rampctl run | tune | compare``.

Exit codes: 0 success, 1 configuration error, 2 I/O error. All floats are
written with 9 significant digits so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from rampctl.config import RunConfig, load_config
from rampctl.env import RampEnv
from rampctl.errors import ConfigError
from rampctl.policies import OpenLoopPolicy, PIGains, PIPolicy, RandomPolicy
from rampctl.tuning import GridSpec, episode_seeds, export_surface, grid_search, run_episode

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

POLICY_NAMES = ("open_loop", "random", "pi")
COMPARE_LABELS = {"open_loop": "π_OL", "random": "π_R", "pi": "π_PI"}

# trajectory record field -> source key in the environment's step record
TRAJECTORY_FIELDS = {
    "t": "t",
    "requested": "requested",
    "applied": "applied",
    "reward": "reward",
    "terminated": "terminated",
    "truncated": "truncated",
    "clipped": "clipped",
    "ramp_limited": "ramp_limited",
    "n_substeps": "n_substeps",
    "j0": "j0",
    "q_min": "q_min",
    "q95": "q95",
    "beta": "beta",
    "Q": "q_fusion_gain",
    "H98": "h98",
}


def fmt(x):
    """Round floats to 9 significant digits; non-finite values become null."""
    if isinstance(x, bool) or isinstance(x, int):
        return x
    if isinstance(x, float):
        return float(f"{x:.9g}") if math.isfinite(x) else None
    if isinstance(x, (list, tuple)):
        return [fmt(v) for v in x]
    if isinstance(x, dict):
        return {k: fmt(v) for k, v in x.items()}
    return x


def _csv_value(x) -> str:
    x = fmt(x)
    return "" if x is None else repr(x) if isinstance(x, float) else str(x)


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(fmt(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_ndjson(path: Path, records) -> None:
    lines = [json.dumps(fmt(r), separators=(",", ":")) for r in records]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_value(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_ndjson(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


# -- episode helpers -----------------------------------------------------------------


def make_policy(name: str, run: RunConfig, gains: PIGains | None = None):
    spec = run.env.action_spec
    if name == "open_loop":
        return OpenLoopPolicy(run.reference, spec)
    if name == "random":
        return RandomPolicy(spec)
    if name == "pi":
        return PIPolicy(gains or run.pi_gains, run.reference, spec, run.env.control_interval_s, run.target)
    raise ConfigError([f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}"])


def rollout(run: RunConfig, policy, seed: int | None) -> tuple[float, list[dict]]:
    """One episode; returns its discounted return and the trajectory records."""
    env = RampEnv(run.env)
    raw: list[dict] = []
    env.add_sink(raw.append)
    episode = run_episode(env, policy, seed)
    records = [{name: r[key] for name, key in TRAJECTORY_FIELDS.items()} for r in raw]
    return episode.ret(run.env.gamma), records


def policy_returns(run: RunConfig, name: str, episodes: int, seed: int, gains=None):
    policy = make_policy(name, run, gains)
    if policy.deterministic and episodes != 1:
        raise ConfigError([f"policy {name!r} is deterministic; use --episodes 1"])
    if episodes < 1:
        raise ConfigError(["--episodes must be >= 1"])
    return [rollout(run, policy, s) for s in episode_seeds(seed, episodes)]


def _grid(run: RunConfig, args) -> GridSpec:
    base = run.grid
    try:
        return GridSpec(
            tuple(args.kp_range) if args.kp_range else base.kp_range,
            tuple(args.ki_range) if args.ki_range else base.ki_range,
            args.n if args.n is not None else base.n,
            args.m if args.m is not None else base.m,
        )
    except ValueError as exc:
        raise ConfigError([f"grid: {exc}"]) from exc


def _tune(run: RunConfig, args):
    grid = _grid(run, args)
    workers = args.workers if args.workers is not None else run.workers
    return grid_search(grid, run.env, run.reference, run.target, workers=workers)


# -- commands --------------------------------------------------------------------------


def cmd_run(args, run: RunConfig, out: Path) -> None:
    episodes = args.episodes if args.episodes is not None else 1
    results = policy_returns(run, args.policy, episodes, args.seed)
    for k, (_, records) in enumerate(results):
        write_ndjson(out / f"trajectory_{args.policy}_{k:03d}.ndjson", records)
    returns = [r for r, _ in results]
    summary = {
        "command": "run",
        "policy": args.policy,
        "seed": args.seed,
        "episodes": episodes,
        "gamma": run.env.gamma,
        "returns": returns,
        "mean_return": sum(returns) / len(returns),
        "terminated": [bool(recs and recs[-1]["terminated"]) for _, recs in results],
    }
    if args.policy == "pi":
        summary["gains"] = {"k_p": run.pi_gains.k_p, "k_i": run.pi_gains.k_i}
    write_json(out / "summary.json", summary)


def cmd_tune(args, run: RunConfig, out: Path) -> None:
    surface = _tune(run, args)
    floor = args.clip_floor if args.clip_floor is not None else run.clip_floor
    rows = export_surface(surface, floor)
    write_csv(out / "surface.csv", ["k_p", "k_i", "J", "J_clipped"], [[r[k] for k in ("k_p", "k_i", "J", "J_clipped")] for r in rows])
    write_json(
        out / "best_gains.json",
        {
            "k_p": surface.best_gains.k_p,
            "k_i": surface.best_gains.k_i,
            "J": surface.best_return,
            "index": list(surface.best_index),
            "n": len(surface.kp_values),
            "m": len(surface.ki_values),
            "gamma": run.env.gamma,
        },
    )


def cmd_compare(args, run: RunConfig, out: Path) -> None:
    gains = run.pi_gains
    if args.tune:
        gains = _tune(run, args).best_gains
    n_random = args.episodes if args.episodes is not None else 10
    table, ip_series, detail = [], {}, {}
    for name in POLICY_NAMES:
        results = policy_returns(run, name, n_random if name == "random" else 1, args.seed, gains)
        returns = [r for r, _ in results]
        mean = sum(returns) / len(returns)
        table.append((COMPARE_LABELS[name], mean))
        ip_series[name] = [rec["applied"][run.env.action_spec.names.index("i_p")] for rec in results[0][1]]
        detail[name] = {"returns": returns, "mean_return": mean}
    write_csv(out / "compare.csv", ["policy", "J"], table)
    times = [k * run.env.control_interval_s for k in range(max(len(v) for v in ip_series.values()))]
    rows = [[t] + [ip_series[n][k] if k < len(ip_series[n]) else None for n in POLICY_NAMES] for k, t in enumerate(times)]
    write_csv(out / "ip_trajectories.csv", ["t"] + [COMPARE_LABELS[n] for n in POLICY_NAMES], rows)
    write_json(
        out / "summary.json",
        {
            "command": "compare",
            "seed": args.seed,
            "gamma": run.env.gamma,
            "random_episodes": n_random,
            "pi_gains": {"k_p": gains.k_p, "k_i": gains.k_i, "tuned": bool(args.tune)},
            "policies": {COMPARE_LABELS[n]: detail[n] for n in POLICY_NAMES},
        },
    )


COMMANDS = {"run": cmd_run, "tune": cmd_tune, "compare": cmd_compare}


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kp-range", nargs=2, type=float, metavar=("A", "B"))
    p.add_argument("--ki-range", nargs=2, type=float, metavar=("A", "B"))
    p.add_argument("--n", type=int, help="number of k_p grid points")
    p.add_argument("--m", type=int, help="number of k_i grid points")
    p.add_argument("--workers", type=int, help="sweep processes (default: config, else all CPUs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rampctl", description="Plasma current ramp-up control environment.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="iter_hybrid", help="JSON config file or built-in name (iter_hybrid)")
    common.add_argument("--seed", type=int, default=0, help="master seed for the random policy (default 0)")
    common.add_argument("--out", default="rampctl-out", help="output directory")

    p_run = sub.add_parser("run", parents=[common], help="roll out episodes of one policy")
    p_run.add_argument("--policy", choices=POLICY_NAMES, default="open_loop", help="policy to roll out (default open_loop)")
    p_run.add_argument("--episodes", type=int, help="episodes to run (default 1; only the random policy accepts more)")

    p_tune = sub.add_parser("tune", parents=[common], help="grid search over PI gains")
    _add_grid_flags(p_tune)
    p_tune.add_argument("--clip-floor", type=float, help="lower clip for the J_clipped column")

    p_cmp = sub.add_parser("compare", parents=[common], help="open-loop vs random vs PI returns")
    p_cmp.add_argument("--episodes", type=int, help="random-policy episodes (default 10)")
    p_cmp.add_argument("--tune", action="store_true", help="tune PI gains first instead of using the config gains")
    _add_grid_flags(p_cmp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = load_config(args.config)
    except ConfigError as exc:
        print(f"rampctl: invalid configuration {args.config}:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rampctl: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, run, out)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"rampctl: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rampctl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
