"""JSON run configuration: schema, the built-in ``iter_hybrid`` document, loading.

A config file is a JSON object with the sections ``sim``, ``env``, ``actions``,
``observations``, ``reward``, ``policies`` and ``tuning``. Every key is
optional; missing keys take their value from the built-in document. Unknown
keys are rejected, and all problems found are reported together.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from rampctl.env import OBSERVABLE_FIELDS, ActionChannel, ActionSpec, EnvConfig, ObservationSpec
from rampctl.errors import ConfigError
from rampctl.iter_hybrid import (
    DEFAULT_BANDS,
    DEFAULT_INITIAL,
    DEFAULT_OBSERVATION_BOUNDS,
    REWARD_TERMS,
    HybridReward,
    RewardWeights,
    TargetBand,
    build_iter_hybrid_env,
    default_sim_config,
)
from rampctl.plasma import InitialProfiles, RadialGrid, SimConfig
from rampctl.policies import DEFAULT_REFERENCE, CurrentDensityTarget, PIGains, reference_problems
from rampctl.tuning import GridSpec

BUILTIN_NAMES = ("iter_hybrid",)

_NUMBER = {"type": "number"}
_PAIR = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}
_BREAKPOINTS = {"type": "array", "items": _PAIR, "minItems": 1}
_NULLABLE = {"type": ["number", "null"]}


def _closed(properties: dict, **extra) -> dict:
    return {"type": "object", "properties": properties, "additionalProperties": False, **extra}


def _sim_schema() -> dict:
    props: dict[str, Any] = {}
    for f in dataclasses.fields(SimConfig):
        if f.name == "grid":
            continue
        default = getattr(SimConfig(), f.name)
        if isinstance(default, bool):
            props[f.name] = {"type": "boolean"}
        elif isinstance(default, tuple):
            props[f.name] = _PAIR
        elif f.name == "edge_bc":
            props[f.name] = {"enum": ["dirichlet", "zero_flux"]}
        else:
            props[f.name] = _NUMBER
    props["grid"] = _closed(
        {
            "n_cells": {"type": "integer"},
            "minor_radius_m": _NUMBER,
            "major_radius_m": _NUMBER,
            "b0_tesla": _NUMBER,
        }
    )
    props["initial"] = _closed({name: _NUMBER for name in DEFAULT_INITIAL})
    return _closed(props)


CONFIG_SCHEMA: dict = _closed(
    {
        "sim": _sim_schema(),
        "env": _closed(
            {
                "horizon_steps": {"type": "integer"},
                "control_interval_s": _NUMBER,
                "substep_mode": {"enum": ["auto", "fixed"]},
                "k_fixed": {"type": ["integer", "null"]},
                "gamma": _NUMBER,
                "uncontrolled_series": {"type": "object", "additionalProperties": _BREAKPOINTS},
                "initial_action": {"type": "object", "additionalProperties": _NUMBER},
            }
        ),
        "actions": {
            "type": "array",
            "items": _closed(
                {
                    "name": {"type": "string"},
                    "low": _NUMBER,
                    "high": _NUMBER,
                    "ramp_rate_limit": _NULLABLE,
                    "unit": {"type": "string"},
                },
                required=["name", "low", "high"],
            ),
        },
        "observations": _closed(
            {
                "fields": {"type": "array", "items": {"enum": list(OBSERVABLE_FIELDS)}, "uniqueItems": True},
                "bounds": {"type": "object", "additionalProperties": _PAIR},
            }
        ),
        "reward": _closed(
            {
                "weights": _closed({name: _NUMBER for name in ("alpha_q", "alpha_qmin", "alpha_q95", "alpha_h98")}),
                "bands": _closed(
                    {term: {"type": "array", "items": _NULLABLE, "minItems": 4, "maxItems": 4} for term in REWARD_TERMS}
                ),
            }
        ),
        "policies": _closed(
            {
                "reference": {"type": "object", "additionalProperties": _BREAKPOINTS},
                "pi": _closed({"k_p": _NUMBER, "k_i": _NUMBER}),
                "target": _closed({"start": _NUMBER, "end": _NUMBER, "ramp_end_s": _NUMBER}),
            }
        ),
        "tuning": _closed(
            {
                "kp_range": _PAIR,
                "ki_range": _PAIR,
                "n": {"type": "integer"},
                "m": {"type": "integer"},
                "workers": {"type": ["integer", "null"]},
                "clip_floor": _NULLABLE,
            }
        ),
    },
    **{"$schema": "https://json-schema.org/draft/2020-12/schema", "title": "rampctl run configuration"},
)


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return None
    return value


def _band_to_json(band: TargetBand) -> list:
    return [_plain(v) for v in (band.low_zero, band.low_one, band.high_one, band.high_zero)]


def _band_from_json(values) -> TargetBand:
    lo = [-math.inf if v is None else float(v) for v in values[:2]]
    hi = [math.inf if v is None else float(v) for v in values[2:]]
    return TargetBand(*lo, *hi)


def iter_hybrid_document() -> dict:
    """The built-in configuration as a plain JSON-ready dict."""
    sim = default_sim_config()
    sim_doc = {f.name: _plain(getattr(sim, f.name)) for f in dataclasses.fields(SimConfig) if f.name != "grid"}
    sim_doc["grid"] = {
        "n_cells": sim.grid.n_cells,
        "minor_radius_m": sim.grid.minor_radius_m,
        "major_radius_m": sim.grid.major_radius_m,
        "b0_tesla": sim.grid.b0_tesla,
    }
    sim_doc["initial"] = dict(DEFAULT_INITIAL)
    env = build_iter_hybrid_env(sim)
    return {
        "sim": sim_doc,
        "env": {
            "horizon_steps": env.horizon_steps,
            "control_interval_s": env.control_interval_s,
            "substep_mode": env.substep_mode,
            "k_fixed": env.k_fixed,
            "gamma": env.gamma,
            "uncontrolled_series": {},
            "initial_action": {},
        },
        "actions": [
            {"name": c.name, "low": c.low, "high": c.high, "ramp_rate_limit": c.ramp_rate_limit, "unit": c.unit}
            for c in env.action_spec.channels
        ],
        "observations": {
            "fields": list(OBSERVABLE_FIELDS),
            "bounds": {k: list(v) for k, v in DEFAULT_OBSERVATION_BOUNDS.items()},
        },
        "reward": {
            "weights": dataclasses.asdict(RewardWeights()),
            "bands": {k: _band_to_json(v) for k, v in DEFAULT_BANDS.items()},
        },
        "policies": {
            "reference": {k: [list(p) for p in v] for k, v in DEFAULT_REFERENCE.items()},
            "pi": dataclasses.asdict(PIGains()),
            "target": dataclasses.asdict(CurrentDensityTarget()),
        },
        "tuning": {
            "kp_range": list(GridSpec().kp_range),
            "ki_range": list(GridSpec().ki_range),
            "n": GridSpec().n,
            "m": GridSpec().m,
            "workers": None,
            "clip_floor": None,
        },
    }


@dataclass
class RunConfig:
    """Everything a CLI command needs, built from one validated document."""

    env: EnvConfig
    reference: dict[str, list[tuple[float, float]]]
    pi_gains: PIGains
    target: CurrentDensityTarget
    grid: GridSpec
    workers: int | None
    clip_floor: float | None
    document: dict


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; lists and scalars in ``override`` replace."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key not in ("uncontrolled_series", "reference"):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _schema_problems(doc) -> list[str]:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    out = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def _attempt(problems: list[str], label: str, fn):
    """Run a constructor, turning its complaint into a collected problem."""
    try:
        return fn()
    except ConfigError as exc:
        problems.extend(exc.problems)
    except (ValueError, TypeError) as exc:
        problems.append(f"{label}: {exc}")
    return None


def build_run_config(doc: dict) -> RunConfig:
    """Validate a full document (already merged with the defaults) and build it."""
    problems = _schema_problems(doc)
    if problems:
        raise ConfigError(problems)

    s = dict(doc["sim"])
    grid_doc, init_doc = s.pop("grid"), s.pop("initial")
    for name, value in s.items():
        if isinstance(value, list):
            s[name] = tuple(value)
    grid = _attempt(problems, "sim.grid", lambda: RadialGrid(**grid_doc))
    sim = initial = None
    if grid is not None:
        sim = SimConfig(grid=grid, **s)
        problems += sim.problems()
        initial = _attempt(problems, "sim.initial", lambda: InitialProfiles.parabolic(grid, **init_doc))

    channels = [
        _attempt(problems, f"actions[{k}]", lambda c=c: ActionChannel(**c)) for k, c in enumerate(doc["actions"])
    ]
    action_spec = None
    if None not in channels:
        action_spec = _attempt(problems, "actions", lambda: ActionSpec(tuple(channels)))
    obs = _attempt(
        problems,
        "observations",
        lambda: ObservationSpec(
            fields=tuple(doc["observations"]["fields"]),
            bounds={k: tuple(v) for k, v in doc["observations"]["bounds"].items()},
        ),
    )
    weights = _attempt(problems, "reward.weights", lambda: RewardWeights(**doc["reward"]["weights"]))
    bands = {}
    for term, values in doc["reward"]["bands"].items():
        band = _attempt(problems, f"reward.bands.{term}", lambda v=values: _band_from_json(v))
        if band is not None:
            bands[term] = band

    pol = doc["policies"]
    reference = {k: [(float(t), float(v)) for t, v in pts] for k, pts in pol["reference"].items()}
    gains = PIGains(**pol["pi"])
    target = CurrentDensityTarget(**pol["target"])
    if not target.ramp_end_s > 0:
        problems.append("policies.target.ramp_end_s must be > 0")
    if action_spec is not None:
        problems += reference_problems(reference, action_spec)

    tun = doc["tuning"]
    grid_spec = _attempt(
        problems,
        "tuning",
        lambda: GridSpec(tuple(tun["kp_range"]), tuple(tun["ki_range"]), tun["n"], tun["m"]),
    )
    if tun["workers"] is not None and tun["workers"] < 1:
        problems.append("tuning.workers must be >= 1 or null")

    env = None
    if not problems:
        e = doc["env"]
        env = EnvConfig(
            sim=sim,
            initial=initial,
            action_spec=action_spec,
            observation_spec=obs,
            reward_params=HybridReward(weights, bands),
            horizon_steps=e["horizon_steps"],
            control_interval_s=e["control_interval_s"],
            substep_mode=e["substep_mode"],
            k_fixed=e["k_fixed"],
            uncontrolled_series={k: [tuple(p) for p in v] for k, v in e["uncontrolled_series"].items()},
            initial_action=dict(e["initial_action"]),
            gamma=e["gamma"],
        )
        problems += env.problems()
    if problems:
        raise ConfigError(problems)
    return RunConfig(
        env=env,
        reference=reference,
        pi_gains=gains,
        target=target,
        grid=grid_spec,
        workers=tun["workers"],
        clip_floor=tun["clip_floor"],
        document=doc,
    )


def load_document(source: str | Path | None) -> dict:
    """Read a config file (or a built-in name) and merge it over ``iter_hybrid``.

    Raises ``OSError`` when the file cannot be read and ``ConfigError`` when it
    is not a JSON object.
    """
    base = iter_hybrid_document()
    if source is None or str(source) in BUILTIN_NAMES:
        return base
    text = Path(source).read_text()
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{source}: not valid JSON ({exc})"]) from exc
    if not isinstance(user, dict):
        raise ConfigError([f"{source}: top level must be a JSON object"])
    schema_errors = _schema_problems(user)
    if schema_errors:
        raise ConfigError(schema_errors)
    return merge(base, user)


def load_config(source: str | Path | None = None) -> RunConfig:
    return build_run_config(load_document(source))
