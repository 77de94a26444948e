"""Command line entry point: ``mdfkit run | validate | list-bounds``.

Exit codes: 0 all verdicts pass (or nothing to verify), 1 usage or config
error, 2 at least one fail verdict, 3 inconclusive verdicts and no fail.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import config as cfgmod
from .bounds import CATALOG, BoundReport, Quantity
from .mdf import (
    PASS,
    FAIL,
    azuma_proxy_slack,
    mc_overlap,
    refutation_batch,
    refutation_test,
    verify,
    verify_mean,
)
from .report import Results, TailCurve, emit_report, overall_status, ReportError
from .simulate import Polya2, concat, iter_blocks, write_trace

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def _proxy_slack(exp, eps, N_eval: int) -> float:
    spec = exp.raw.get("mc", {}).get("proxy_slack", 0.0)
    if isinstance(spec, dict):
        c = cfgmod.make_sequence(spec["increments"])
        return azuma_proxy_slack(c, float(eps(N_eval)), N_eval)
    return float(spec)


def run_verify(exp) -> Results:
    mc = exp.raw["mc"]
    n0, N_eval = mc.get("n0", 1), mc["N_eval"]
    res = Results("verify", exp.seed, bounds=list(exp.bound_reports))
    markov_ok = True
    for eps in exp.eps:
        slack = _proxy_slack(exp, eps, N_eval)
        r = mc_overlap(exp.process, eps, exp.a, n0, N_eval, mc["paths"], exp.seed, mc["horizon"],
                       workers=exp.workers, proxy_slack=slack, time_budget=mc.get("time_budget"))
        bounds_k, statuses = [1.0], []
        trivial = BoundReport("trivial", Quantity.TAIL, {"k": 0}, 1.0)
        v0 = verify(trivial, float(r.tail_hat[0]), float(r.ci_upper[0]), float(r.ci_lower[0]), r.O.size,
                    quantity=Quantity.TAIL)
        statuses.append(v0.status)
        for k in r.ks[1:]:
            rep = cfgmod.evaluate_bound(exp.raw["tail_bound"], k=int(k))[0]
            v = verify(rep, float(r.tail_hat[k]), float(r.ci_upper[k]), float(r.ci_lower[k]), r.O.size,
                       quantity=Quantity.TAIL, slack=slack, runtime=r.runtime)
            bounds_k.append(rep.value)
            statuses.append(v.status)
            res.verdicts.append((f"{eps.label} k={int(k)}", v))
        res.curves.append(TailCurve(eps.label, r.ks, r.tail_hat, r.ci_upper, np.array(bounds_k), statuses))
        if "mean_bound" in exp.raw:
            rep = cfgmod.evaluate_bound(exp.raw["mean_bound"])[0]
            res.verdicts.append((f"{eps.label} mean", verify_mean(r, rep)))
        markov_ok &= not r.markov_violations()
        res.summary[f"{eps.label} E_hat"] = r.E_hat
        res.summary[f"{eps.label} E_ci_upper"] = r.mean_ci_upper
        res.summary[f"{eps.label} k_max"] = r.k_max
        res.summary[f"{eps.label} proxy_slack"] = slack
        res.summary[f"{eps.label} paths_used"] = int(r.O.size)
        res.summary[f"{eps.label} truncated_paths"] = r.truncated_paths
        if r.partial:
            res.summary[f"{eps.label} partial"] = f"time budget reached after {r.completed} paths"
        res.metadata[f"{eps.label} runtime_seconds"] = r.runtime
    res.summary["markov_consistency"] = markov_ok
    return res


def run_simulate(exp) -> Results:
    mc = exp.raw["mc"]
    batch = concat(list(iter_blocks(exp.process, mc["paths"], mc["horizon"], exp.seed, exp.workers)))
    rows = []
    for i in range(batch.n_paths):
        proxy = batch.proxy[i]
        proxy_text = repr(float(proxy)) if np.ndim(proxy) == 0 else ";".join(repr(float(x)) for x in proxy)
        rows.append((i, proxy_text, batch.proxy_method, bool(batch.truncated[i])))
    res = Results("simulate", exp.seed, tables={"paths": (("path_index", "limit_proxy", "proxy_method", "truncated"), rows)})
    res.summary.update(process=batch.process_id, paths=batch.n_paths, horizon=batch.horizon)
    if exp.raw.get("output", {}).get("trace"):
        os.makedirs(exp.out_dir, exist_ok=True)
        write_trace(batch, os.path.join(exp.out_dir, "trace.jsonl"))
    return res


def _refutation_args(exp) -> dict:
    ref = exp.raw["refutation"]
    return dict(C=float(ref["C"]), s=float(ref["s"]), eps=float(ref["eps"]), p=float(ref["p"]), alpha=float(ref["alpha"]))


def _refute_runs(exp, process, seed) -> tuple[np.ndarray, int]:
    mc, args = exp.raw["mc"], _refutation_args(exp)
    coord = int(exp.raw["refutation"].get("coordinate", 0))
    us, k_star = [], 0
    for batch in iter_blocks(process, mc["paths"], mc["horizon"], seed, exp.workers):
        u, k_star = refutation_batch(batch, coordinate=coord, **args)
        us.append(u)
    return np.concatenate(us), k_star


def run_refute(exp) -> Results:
    ref, args = exp.raw["refutation"], _refutation_args(exp)
    res = Results("refute", exp.seed)
    if "data" in ref:
        out = refutation_test(np.asarray(ref["data"], dtype=float), n0=int(ref.get("n0", 1)), **args)
        rows = [(0, out.U_N, out.k_star, out.decision)]
    else:
        u, k_star = _refute_runs(exp, exp.process, exp.seed)
        rows = [(i, int(x), k_star, "refute" if x > k_star else "retain") for i, x in enumerate(u)]
    res.tables["refutation"] = (("run", "U_N", "k_star", "decision"), rows)
    res.summary["refuted_runs"] = sum(r[3] == "refute" for r in rows)
    res.summary["runs"] = len(rows)
    return res


def run_calibrate(exp) -> Results:
    ref, args = exp.raw["refutation"], _refutation_args(exp)
    runs = exp.raw["mc"]["paths"]
    u, k_star = _refute_runs(exp, exp.process, exp.seed)
    size = float(np.mean(u > k_star))
    threshold = args["alpha"] + 3.0 * math.sqrt(args["alpha"] / runs)
    res = Results("calibrate", exp.seed)
    rows = [("true_model", runs, k_star, size, threshold, PASS if size <= threshold else FAIL)]
    bias = ref.get("alternative_bias")
    if bias and isinstance(exp.process, Polya2):
        alt = Polya2(exp.process.B, exp.process.N, float(bias))
        u_alt, _ = _refute_runs(exp, alt, exp.seed + 1)
        power = float(np.mean(u_alt > k_star))
        rows.append(("alternative", runs, k_star, power, 0.5, PASS if power >= 0.5 else FAIL))
    res.tables["calibration"] = (("model", "runs", "k_star", "refutation_fraction", "threshold", "status"), rows)
    res.summary["size_within_threshold"] = size <= threshold
    return res


RUNNERS = {"verify": run_verify, "simulate": run_simulate, "refute": run_refute, "calibrate": run_calibrate,
           "bounds": lambda exp: Results("bounds", exp.seed, bounds=list(exp.bound_reports))}


def _exit_code(res: Results) -> int:
    statuses = [v.status for _, v in res.verdicts]
    if "calibration" in res.tables:
        statuses += [row[-1] for row in res.tables["calibration"][1]]
    status = overall_status(statuses)
    return {None: EXIT_OK, "pass": EXIT_OK, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}[status]


def _load(args, env) -> "cfgmod.Experiment":
    raw = cfgmod.apply_overrides(cfgmod.load(args.config), args.overrides)
    seed = cfgmod.resolve_seed(raw, args.seed, env)
    exp = cfgmod.validate(raw, seed, args.workers)
    if getattr(args, "out", None):
        exp.out_dir = args.out
    return exp


def cmd_run(args, env) -> int:
    exp = _load(args, env)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    res = RUNNERS[exp.kind](exp)
    res.metadata.update(started_utc=started.isoformat(), runtime_seconds=time.perf_counter() - t0,
                        workers=exp.workers, config=os.path.abspath(args.config), overrides=list(args.overrides))
    files = emit_report(res, exp.out_dir, figures=not args.no_figures)
    code = _exit_code(res)
    print(f"{exp.kind}: wrote {len(files)} files to {exp.out_dir} (exit {code})")
    return code


def cmd_validate(args, env) -> int:
    exp = _load(args, env)
    print(f"config ok: {exp.kind} experiment, seed {exp.seed}")
    return EXIT_OK


def cmd_list_bounds(args, env) -> int:
    width = max(len(e.bound_id) for e in CATALOG)
    for e in CATALOG:
        print(f"{e.bound_id:<{width}}  {e.description}\n{'':<{width}}  domain: {e.domain}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdfkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run an experiment and write its report"), ("validate", "check a config only")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="JSON experiment config")
        p.add_argument("overrides", nargs="*", help="key.sub=value overrides (values parsed as JSON)")
        p.add_argument("--seed", type=int, default=None, help=f"master seed (overrides ${cfgmod.SEED_ENV} and the config)")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: config, then CPU count)")
        if name == "run":
            p.add_argument("--out", default=None, help="output directory (default: config output.dir)")
            p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    sub.add_parser("list-bounds", help="print the bound catalog with parameter domains")
    return parser


def main(argv=None, env=None) -> int:
    env = os.environ if env is None else env
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_USAGE
    handlers = {"run": cmd_run, "validate": cmd_validate, "list-bounds": cmd_list_bounds}
    try:
        return handlers[args.command](args, env)
    except cfgmod.ConfigError as err:
        print("config error:", file=sys.stderr)
        for key, msg in err.problems:
            print(f"  {key}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ReportError as err:
        print(f"report error: {err}", file=sys.stderr)
        return EXIT_USAGE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
