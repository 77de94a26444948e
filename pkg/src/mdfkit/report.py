"""Report files: CSV tables, a plain-text summary, a metadata file and figures.

Every CSV body depends only on the configuration and the seed.  Wall-clock
data (timestamps, runtimes) goes to ``metadata.json`` so that re-running a
config reproduces the CSVs byte for byte.  Floats are written with ``repr``
and parse back to the identical value.
"""

from __future__ import annotations

import csv
import json
import os
import platform
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import BoundReport

BOUNDS_HEADER = ("bound_id", "quantity", "value", "valid", "reason")
TAILS_HEADER = ("eps_id", "k", "tail_hat", "ci_upper", "bound", "status")
CURVE_HEADER = ("eps_id", "k", "empirical", "ci_upper", "bound")
VERDICT_HEADER = ("label", "bound_id", "quantity", "empirical", "ci_lower", "ci_upper", "bound", "slack", "status", "n_paths")


class ReportError(ValueError):
    pass


def fmt(x) -> str:
    """Exact text form: repr for floats, lower-case booleans."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def parse_float(text: str) -> float:
    return float(text)


@dataclass
class TailCurve:
    eps_id: str
    ks: np.ndarray
    empirical: np.ndarray
    ci_upper: np.ndarray
    bounds: np.ndarray
    statuses: list


@dataclass
class Results:
    kind: str
    seed: int
    bounds: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)  # (label, VerificationVerdict)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.bounds or self.curves or self.verdicts or self.tables)


def _write_csv(path: str, header, rows) -> str:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) for x in row])
    except OSError as err:
        raise ReportError(f"cannot write {path}: {err}") from err
    return path


def bound_rows(reports: list[BoundReport]):
    return [(r.bound_id, r.quantity.value, r.value, r.valid, r.reason) for r in reports]


def write_bounds_csv(path: str, reports: list[BoundReport]) -> str:
    if not reports:
        raise ReportError("no bound reports to write")
    return _write_csv(path, BOUNDS_HEADER, bound_rows(reports))


def read_bounds_csv(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["value"] = parse_float(row["value"])
        row["valid"] = row["valid"] == "true"
    return rows


def write_summary(path: str, summary: dict) -> str:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for key, val in summary.items():
                fh.write(f"{key}: {fmt(val)}\n")
    except OSError as err:
        raise ReportError(f"cannot write {path}: {err}") from err
    return path


def versions() -> dict:
    import matplotlib
    import scipy

    from . import __version__

    return {"mdfkit": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


def plot_tail_curves(path: str, curves: list[TailCurve]) -> str:
    """Empirical tails, their upper CIs and the bounds on a log scale."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for c in curves:
        k = c.ks[1:]
        line, = ax.step(k, np.maximum(c.empirical[1:], 1e-12), where="post", label=f"{c.eps_id} empirical")
        ax.plot(k, c.ci_upper[1:], ":", color=line.get_color(), label=f"{c.eps_id} 99% upper")
        ax.plot(k, np.minimum(c.bounds[1:], 1.0), "--", color=line.get_color(), label=f"{c.eps_id} bound")
    ax.set_yscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("P(O >= k)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=120, metadata={"Software": None})
    except OSError as err:
        raise ReportError(f"cannot write {path}: {err}") from err
    finally:
        plt.close(fig)
    return path


def emit_report(results: Results, out_dir: str, figures: bool = True) -> list[str]:
    """Write every table of ``results`` into ``out_dir``; returns the written paths."""
    if results is None or results.is_empty():
        raise ReportError("nothing to report: the results are empty")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        raise ReportError(f"cannot create {out_dir}: {err}") from err
    p = lambda name: os.path.join(out_dir, name)  # noqa: E731
    written = []
    if results.bounds:
        written.append(write_bounds_csv(p("bounds.csv"), results.bounds))
    if results.curves:
        tail_rows, curve_rows = [], []
        for c in results.curves:
            for i, k in enumerate(c.ks):
                tail_rows.append((c.eps_id, k, c.empirical[i], c.ci_upper[i], c.bounds[i], c.statuses[i]))
                curve_rows.append((c.eps_id, k, c.empirical[i], c.ci_upper[i], c.bounds[i]))
        written.append(_write_csv(p("tails.csv"), TAILS_HEADER, tail_rows))
        written.append(_write_csv(p("tail_curve.csv"), CURVE_HEADER, curve_rows))
        if figures:
            written.append(plot_tail_curves(p("tail_curve.png"), results.curves))
    if results.verdicts:
        rows = [(label, v.bound.bound_id, v.bound.quantity.value, v.empirical, v.ci_lower, v.ci_upper,
                 v.bound.value, v.slack, v.status, v.n_paths) for label, v in results.verdicts]
        written.append(_write_csv(p("verdicts.csv"), VERDICT_HEADER, rows))
    for name, (header, rows) in results.tables.items():
        written.append(_write_csv(p(f"{name}.csv"), header, rows))
    summary = dict(experiment=results.kind, seed=results.seed, **results.summary)
    for key, val in versions().items():
        summary[f"version_{key}"] = val
    written.append(write_summary(p("summary.txt"), summary))
    try:
        with open(p("metadata.json"), "w", encoding="utf-8") as fh:
            json.dump(results.metadata, fh, indent=2, sort_keys=True, default=str)
    except OSError as err:
        raise ReportError(f"cannot write {p('metadata.json')}: {err}") from err
    written.append(p("metadata.json"))
    return written


def overall_status(statuses: list[str]) -> Optional[str]:
    if "fail" in statuses:
        return "fail"
    if "inconclusive" in statuses:
        return "inconclusive"
    return "pass" if statuses else None
