import csv
import json
import os
import re

import pytest

from mdfkit import cli
from mdfkit.bounds import CATALOG, BoundReport, Quantity
from mdfkit.config import ConfigError, apply_overrides, resolve_seed
from mdfkit.mdf import verify
from mdfkit.report import BOUNDS_HEADER, Results, ReportError, emit_report, read_bounds_csv

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _verify_cfg(paths=300, seed=5):
    return {
        "experiment": "verify",
        "process": {"family": "polya2", "params": {"B": 1, "N": 2}},
        "sequences": {"eps": [{"family": "constant", "c": 0.25, "n0": 1}, {"family": "constant", "c": 0.3, "n0": 1}],
                      "a": {"family": "power", "p": 0.0}},
        "tail_bound": {"function": "azuma_special_cases", "args": {"C": 3, "q": 1, "case": "c", "eps": 0.25}},
        "mc": {"paths": paths, "horizon": 500, "N_eval": 200, "seed": seed},
    }


def test_list_bounds_is_reference_free(capsys):
    assert cli.main(["list-bounds"], env={}) == 0
    out = capsys.readouterr().out
    for entry in CATALOG:
        assert entry.bound_id in out
    assert "domain:" in out
    assert not re.search(r"Example|Theorem|Lemma|Corollary|Remark|§|Eq\.", out)


def test_bounds_only_experiment(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", os.path.join(CONFIGS, "bounds_only.json"), "--out", str(out)], env={})
    assert code == 0
    with open(out / "bounds.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == BOUNDS_HEADER
    assert (out / "summary.txt").exists() and (out / "metadata.json").exists()


def test_bound_values_round_trip(tmp_path):
    reports = [BoundReport("x", Quantity.TAIL, {}, 0.1 + 0.2), BoundReport("y", Quantity.MOMENT_SA, {}, 1 / 3),
               BoundReport("z", Quantity.TAIL, {}, 0.0, False, "bad")]
    emit_report(Results("bounds", 0, bounds=reports), str(tmp_path))
    rows = read_bounds_csv(str(tmp_path / "bounds.csv"))
    assert [r["value"] for r in rows] == [r.value for r in reports]
    assert [r["valid"] for r in rows] == [True, True, False]


def test_single_bound_report_one_row(tmp_path):
    emit_report(Results("bounds", 0, bounds=[BoundReport("x", Quantity.TAIL, {}, 0.5)]), str(tmp_path))
    lines = (tmp_path / "bounds.csv").read_text().splitlines()
    assert lines == ["bound_id,quantity,value,valid,reason", "x,tail P(O>=k),0.5,true,"]


def test_empty_results_are_an_error(tmp_path):
    with pytest.raises(ReportError):
        emit_report(Results("verify", 0), str(tmp_path))


def test_invalid_poly_bound_exits_1(tmp_path, capsys):
    cfg = {"experiment": "bounds",
           "bounds": [{"function": "decay_moment", "args": {"decay": {"family": "poly", "c": 1.0, "q": 4.0}, "p": 2.5}}]}
    assert cli.main(["run", _write(tmp_path, cfg)], env={}) == 1
    err = capsys.readouterr().err
    assert "bounds[0]" in err and "q-2" in err


def test_validation_lists_every_problem(tmp_path, capsys):
    cfg = {"experiment": "verify", "process": {"family": "nope"}, "mc": {"paths": 5}}
    assert cli.main(["validate", _write(tmp_path, cfg)], env={}) == 1
    err = capsys.readouterr().err
    for key in ("process", "mc.paths", "mc.horizon", "sequences.eps", "mc.N_eval", "tail_bound"):
        assert f"  {key}:" in err


def test_unreadable_config_exits_1(tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.json")], env={}) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["validate", str(bad)], env={}) == 1


def test_usage_error_exits_1():
    assert cli.main(["frobnicate"], env={}) == 1


def test_verify_experiment_end_to_end(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", _write(tmp_path, _verify_cfg()), "--out", str(out), "--workers", "1"], env={})
    assert code == 0
    with open(out / "tail_curve.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    summary = dict(line.split(": ", 1) for line in (out / "summary.txt").read_text().splitlines())
    for eps_id in ("Constant(0.25)", "Constant(0.3)"):
        k_max = int(summary[f"{eps_id} k_max"])
        mine = [r for r in rows if r["eps_id"] == eps_id]
        assert len(mine) == k_max - 0 + 1
        assert [int(r["k"]) for r in mine] == list(range(k_max + 1))
    assert summary["markov_consistency"] == "true"
    assert (out / "tail_curve.png").stat().st_size > 0


def test_rerun_reproduces_csv_bytes(tmp_path):
    path = _write(tmp_path, _verify_cfg())
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", path, "--out", str(a), "--no-figures"], env={}) == 0
    assert cli.main(["run", path, "--out", str(b), "--no-figures", "--workers", "2"], env={}) == 0
    for name in ("bounds.csv", "tails.csv", "tail_curve.csv", "verdicts.csv", "summary.txt"):
        if (a / name).exists():
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seed_precedence():
    cfg = {"mc": {"seed": 3}}
    assert resolve_seed(cfg, None, {}) == 3
    assert resolve_seed(cfg, None, {"MDFKIT_SEED": "9"}) == 9
    assert resolve_seed(cfg, 11, {"MDFKIT_SEED": "9"}) == 11
    with pytest.raises(ConfigError):
        resolve_seed(cfg, None, {"MDFKIT_SEED": "x"})


def test_overrides_parse_json_values():
    cfg = apply_overrides({"mc": {"paths": 10}}, ["mc.paths=200", "output.dir=out/x", "mc.flag=true"])
    assert cfg["mc"] == {"paths": 200, "flag": True}
    assert cfg["output"]["dir"] == "out/x"
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_failing_bound_exits_2(tmp_path):
    cfg = _verify_cfg()
    # a Baum-Katz tail with a deliberately tiny estimated constant
    cfg["tail_bound"] = {"function": "baum_katz_bound",
                         "args": {"alpha": 4.0, "p": 5.0, "p_tilde": 0.0, "eta": 1.0, "C_est": 1e-6}}
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o"), "--no-figures"], env={}) == 2
    with open(tmp_path / "o" / "verdicts.csv", newline="") as fh:
        assert any(r["status"] == "fail" for r in csv.DictReader(fh))


def test_exit_code_inconclusive_only():
    rep = BoundReport("t", Quantity.TAIL, {}, 0.05)
    res = Results("verify", 0, verdicts=[("a", verify(rep, 0.06, 0.08, 0.04, 100)),
                                        ("b", verify(rep, 0.01, 0.02, 0.0, 100))])
    assert cli._exit_code(res) == 3


def test_refute_with_data(tmp_path):
    cfg = {"experiment": "refute", "process": {"family": "polya2", "params": {"B": 20, "N": 200}},
           "refutation": {"C": 1, "s": 1, "eps": 0.3, "p": 0.01125, "alpha": 0.05, "data": [0.1] * 50},
           "mc": {"paths": 1, "horizon": 10}}
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o")], env={}) == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "refutation.csv", newline="")))
    assert rows[0]["U_N"] == "0" and rows[0]["decision"] == "retain"


def test_refutation_p_out_of_range_exits_1(tmp_path, capsys):
    cfg = {"experiment": "calibrate", "process": {"family": "polya2", "params": {"B": 20, "N": 200}},
           "refutation": {"C": 1, "s": 1, "eps": 0.3, "p": 0.5, "alpha": 0.05},
           "mc": {"paths": 10, "horizon": 100}}
    assert cli.main(["validate", _write(tmp_path, cfg)], env={}) == 1
    assert "refutation.p" in capsys.readouterr().err


def test_simulate_experiment_with_trace(tmp_path):
    cfg = {"experiment": "simulate", "process": {"family": "galton_watson", "params": {"offspring": {"0": 0.4, "2": 0.6}}},
           "mc": {"paths": 20, "horizon": 10}, "output": {"trace": True}}
    out = tmp_path / "o"
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(out)], env={}) == 0
    assert len((out / "trace.jsonl").read_text().splitlines()) == 20
    assert len((out / "paths.csv").read_text().splitlines()) == 21


def test_example_configs_validate():
    for name in sorted(os.listdir(CONFIGS)):
        assert cli.main(["validate", os.path.join(CONFIGS, name)], env={}) == 0, name
