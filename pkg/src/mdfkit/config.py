"""Experiment configuration: JSON parsing, object factories and fail-fast validation.

A config looks like::

    {
      "experiment": "verify",
      "process": {"family": "polya2", "params": {"B": 1, "N": 2}},
      "sequences": {"eps": [{"family": "constant", "c": 0.25, "n0": 1}],
                    "a": {"family": "exponential", "b": 2.718281828459045, "p": 0.0104, "n0": 1}},
      "bounds": [{"function": "azuma_special_cases", "args": {"C": 3, "q": 1, "case": "c", "eps": 0.25, "p": 0.5}}],
      "tail_bound": {"function": "azuma_special_cases", "args": {"C": 3, "q": 1, "case": "c", "eps": 0.25}},
      "mc": {"paths": 20000, "horizon": 5000, "N_eval": 2000, "n0": 1, "seed": 1},
      "output": {"dir": "out"}
    }

``tail_bound`` is evaluated once per reported k with ``k`` added to its args.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import bounds as B
from . import sequences as S
from . import simulate as sim

EXPERIMENTS = ("simulate", "bounds", "verify", "refute", "calibrate")
SEED_ENV = "MDFKIT_SEED"


class ConfigError(ValueError):
    """One or more configuration problems; ``problems`` lists (key, message) pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {m}" for k, m in problems))


# --- sequences --------------------------------------------------------------


_SEQUENCES: dict[str, Callable[..., S.Sequence]] = {
    "power": S.Power,
    "shifted_power": S.ShiftedPower,
    "exponential": S.Exponential,
    "weibull": S.Weibull,
    "constant": S.Constant,
    "log_weight": S.LogWeight,
    "log_sqrt": S.LogSqrt,
    "log_power": S.LogPower,
}


def make_sequence(spec: dict) -> S.Sequence:
    spec = dict(spec)
    family = spec.pop("family", None)
    if family == "tabulated":
        return S.Tabulated(tuple(spec.pop("values")), **spec)
    if family not in _SEQUENCES:
        raise ValueError(f"unknown sequence family {family!r}; known: {sorted(_SEQUENCES) + ['tabulated']}")
    return _SEQUENCES[family](**spec)


def _convert_args(args: dict) -> dict:
    """Turn nested sequence, decay and margin specs into objects."""
    out = {}
    for key, val in args.items():
        if isinstance(val, dict) and "family" in val and key != "decay":
            out[key] = make_sequence(val)
        elif key == "decay":
            out[key] = make_decay(val)
        elif key == "margins":
            out[key] = B.Margins(**val)
        else:
            out[key] = val
    return out


def make_decay(spec: dict):
    spec = dict(spec)
    family = spec.pop("family", None)
    kinds = {"poly": B.PolyDecay, "exp": B.ExpDecay, "weibull": B.WeibullDecay}
    if family not in kinds:
        raise ValueError(f"unknown decay family {family!r}; known: {sorted(kinds)}")
    return kinds[family](**spec)


# --- bounds -----------------------------------------------------------------


BOUND_FUNCTIONS: dict[str, Callable[..., Any]] = {
    "decay_moment": B.decay_moment_bound,
    "decay_tail": B.decay_tail_bound,
    "pythagoras_rate": B.pythagoras_rate,
    "azuma_finite_n": B.azuma_finite_n,
    "azuma_suite": B.azuma_suite,
    "azuma_special_cases": B.azuma_special_cases,
    "slln_lp_bound": B.slln_lp_bound,
    "bounded_slln_bound": B.bounded_slln_bound,
    "baum_katz_bound": B.baum_katz_bound,
    "lesigne_volny_suite": B.lesigne_volny_suite,
    "branching_bounds": B.branching_bounds,
    "freedman_bound": B.freedman_bound,
    "kyfan_corollaries": B.kyfan_corollaries,
    "m_estimator_bounds": B.m_estimator_bounds,
}


def evaluate_bound(spec: dict, **extra) -> list[B.BoundReport]:
    """Call the configured bound function; tuple results are flattened."""
    name = spec.get("function")
    if name not in BOUND_FUNCTIONS:
        raise ValueError(f"unknown bound function {name!r}; known: {sorted(BOUND_FUNCTIONS)}")
    args = _convert_args(dict(spec.get("args", {}), **extra))
    out = BOUND_FUNCTIONS[name](**args)
    return list(out) if isinstance(out, tuple) else [out]


# --- processes --------------------------------------------------------------


def make_process(spec: dict) -> sim.ProcessSpec:
    family = spec.get("family")
    params = dict(spec.get("params", {}))
    if family == "polya2":
        return sim.Polya2(**params)
    if family == "polya_multicolor":
        return sim.PolyaMulticolor(sim.ReplacementMatrix(params["R"]), tuple(params["initial"]))
    if family == "galton_watson":
        offspring = {int(k): float(v) for k, v in params.pop("offspring").items()}
        return sim.GaltonWatson(offspring, **params)
    if family == "random_walk_decaying":
        return sim.RandomWalkDecaying(**params)
    if family == "sign_walk":
        return sim.SignWalk()
    if family == "stochastic_integral":
        return sim.StochasticIntegral(**params)
    if family == "gcrp":
        return sim.GCRP(**params)
    if family == "moment_process":
        return sim.MomentProcess(params["family"], tuple(params["theta0"]))
    if family == "nested_events":
        return sim.NestedEvents(make_sequence(params["p"]))
    raise ValueError(f"unknown process family {family!r}")


# --- loading and validation -------------------------------------------------


@dataclass
class Experiment:
    kind: str
    raw: dict
    seed: int
    workers: int
    out_dir: str
    process: Optional[sim.ProcessSpec] = None
    eps: list = field(default_factory=list)
    a: Optional[S.Sequence] = None
    bound_reports: list = field(default_factory=list)


def load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as err:
        raise ConfigError([("config", f"cannot read {path}: {err}")]) from err
    except json.JSONDecodeError as err:
        raise ConfigError([("config", f"invalid JSON in {path}: {err}")]) from err


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """key.sub=value pairs; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    problems = []
    for item in overrides:
        if "=" not in item:
            problems.append((item, "override must look like key=value"))
            continue
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                problems.append((key, f"{part} is not a mapping"))
                break
        else:
            node[parts[-1]] = value
    if problems:
        raise ConfigError(problems)
    return cfg


def resolve_seed(cfg: dict, flag: Optional[int], env: dict) -> int:
    """Flag, then environment variable, then config, then 0."""
    if flag is not None:
        return int(flag)
    if env.get(SEED_ENV):
        try:
            return int(env[SEED_ENV])
        except ValueError as err:
            raise ConfigError([(SEED_ENV, f"not an integer: {env[SEED_ENV]!r}")]) from err
    return int(cfg.get("mc", {}).get("seed", 0))


def _positive_int(mc: dict, key: str, problems: list, minimum: int = 1) -> None:
    val = mc.get(key)
    if not isinstance(val, int) or isinstance(val, bool) or val < minimum:
        problems.append((f"mc.{key}", f"must be an integer >= {minimum}, got {val!r}"))


def validate(cfg: dict, seed: int, workers: Optional[int]) -> Experiment:
    """Build every object the experiment needs; collect all problems before failing."""
    problems: list[tuple[str, str]] = []
    kind = cfg.get("experiment")
    if kind not in EXPERIMENTS:
        problems.append(("experiment", f"must be one of {list(EXPERIMENTS)}, got {kind!r}"))
    mc = cfg.get("mc", {})
    if workers is None:
        workers = mc.get("workers", sim.default_workers())
    exp = Experiment(kind, cfg, seed, int(workers), cfg.get("output", {}).get("dir", "mdf-report"))

    needs_process = kind in ("simulate", "verify", "refute", "calibrate")
    if needs_process:
        try:
            exp.process = make_process(cfg.get("process", {}))
        except (ValueError, TypeError, KeyError, sim.SimulationError) as err:
            problems.append(("process", str(err)))
        _positive_int(mc, "paths", problems, 100 if kind == "verify" else 1)
        _positive_int(mc, "horizon", problems)

    if kind == "verify":
        seqs = cfg.get("sequences", {})
        eps_specs = seqs.get("eps")
        if isinstance(eps_specs, dict):
            eps_specs = [eps_specs]
        if not eps_specs:
            problems.append(("sequences.eps", "at least one tolerance sequence is required"))
        for i, spec in enumerate(eps_specs or []):
            try:
                exp.eps.append(make_sequence(spec))
            except (ValueError, TypeError, S.SequenceError) as err:
                problems.append((f"sequences.eps[{i}]", str(err)))
        try:
            exp.a = make_sequence(seqs.get("a", {"family": "constant", "c": 1.0, "n0": 1}))
        except (ValueError, TypeError, S.SequenceError) as err:
            problems.append(("sequences.a", str(err)))
        _positive_int(mc, "N_eval", problems)
        n0 = mc.get("n0", 1)
        if isinstance(mc.get("N_eval"), int) and isinstance(mc.get("horizon"), int):
            if not 1 <= n0 <= mc["N_eval"] <= mc["horizon"]:
                problems.append(("mc.N_eval", "need 1 <= n0 <= N_eval <= horizon"))
        if "tail_bound" not in cfg:
            problems.append(("tail_bound", "verify experiments need a tail bound"))
        else:
            try:
                rep = evaluate_bound(cfg["tail_bound"], k=1)[0]
                if not rep.valid:
                    problems.append(("tail_bound", rep.reason))
            except (ValueError, TypeError, KeyError) as err:
                problems.append(("tail_bound", str(err)))

    if kind in ("refute", "calibrate"):
        ref = cfg.get("refutation", {})
        for key in ("C", "s", "eps", "p", "alpha"):
            if not isinstance(ref.get(key), (int, float)) or isinstance(ref.get(key), bool):
                problems.append((f"refutation.{key}", "must be a number"))
        if not problems:
            p_max = (ref["s"] * ref["eps"]) ** 2 / (2.0 * (ref["C"] + 1.0) ** 2)
            if not 0 < ref["p"] <= p_max:
                problems.append(("refutation.p", f"must lie in (0, {p_max!r}]"))
            if not 0 < ref["alpha"] < 1:
                problems.append(("refutation.alpha", "must lie in (0, 1)"))
        if exp.process is not None and not isinstance(exp.process, (sim.Polya2, sim.PolyaMulticolor)):
            problems.append(("process.family", "refutation needs an urn process"))
        if "alternative_bias" in ref and not -1 <= ref["alternative_bias"] <= 1:
            problems.append(("refutation.alternative_bias", "must lie in [-1, 1]"))

    for i, spec in enumerate(cfg.get("bounds", [])):
        try:
            for rep in evaluate_bound(spec):
                if not rep.valid:
                    problems.append((f"bounds[{i}]", f"{rep.bound_id}: {rep.reason}"))
                exp.bound_reports.append(rep)
        except (ValueError, TypeError, KeyError, S.SequenceError) as err:
            problems.append((f"bounds[{i}]", str(err)))
    if kind == "bounds" and not cfg.get("bounds"):
        problems.append(("bounds", "a bounds experiment needs at least one bound"))
    if not isinstance(exp.workers, int) or exp.workers < 1:
        problems.append(("mc.workers", "must be a positive integer"))
    if problems:
        raise ConfigError(problems)
    return exp
