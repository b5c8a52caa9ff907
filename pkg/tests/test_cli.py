"""Command-line runs against fixture panels and golden tables.

Set ``SUPERDEA_REGEN_GOLDEN=1`` to rewrite the golden files after an
intended change in output.
"""

import csv
import json
import math
import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from superdea.cli import main

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"
PANEL = FIXTURES / "panel.csv"
REGEN = os.environ.get("SUPERDEA_REGEN_GOLDEN") == "1"

GROUP_MEAN_ITEMS = ["DmuYear", "PA", "coreasset_slack", "ie_slack", "oe_slack", "netprofit_slack", "npl_slack"]
REGRESSION_ROWS = ["dalr", "dcar", "dloantosave", "dtencient", "downhhi", "dotheri", "droe", "dfown", "_cons", "Observations"]
DESCRIPTIVE_COLUMNS = ["Variables", "Represent for", "Obs.", "mean", "std", "min", "P25", "P50", "P75", "max"]


def run(tmp_path, *argv, out="out"):
    target = tmp_path / out
    code = main([*map(str, argv), "--out", str(target)])
    return code, target


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def same_cell(a, b):
    if a == b:
        return True
    try:
        x, y = float(a), float(b)
    except ValueError:
        return False
    return math.isclose(x, y, rel_tol=1e-9, abs_tol=1e-12)


def check_golden(produced, name):
    golden = GOLDEN / name
    if REGEN:
        shutil.copyfile(produced, golden)
    got, want = read_rows(produced), read_rows(golden)
    assert got[0] == want[0], "header differs from golden"
    assert len(got) == len(want)
    for r, (g, w) in enumerate(zip(got[1:], want[1:]), 2):
        assert len(g) == len(w)
        bad = [(c, x, y) for c, (x, y) in enumerate(zip(g, w)) if not same_cell(x, y)]
        assert not bad, f"{name} row {r}: {bad}"


@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipeline")
    code, out = run(tmp, "pipeline", PANEL, "--model", "PA,IA", "--macro", FIXTURES / "macro.csv")
    assert code == 0
    return out


# efficiency

def test_t3_scores_golden(tmp_path):
    code, out = run(tmp_path, "efficiency", FIXTURES / "t3_panel.csv", "--spec-file", FIXTURES / "t3_model.txt")
    assert code == 0
    scores = pd.read_csv(out / "scores.csv")
    assert scores["bank"].tolist() == ["A", "B", "C"]
    assert np.allclose(scores["se"], [3.0, 1.0, 0.0], atol=1e-6)
    check_golden(out / "scores.csv", "t3_scores.csv")


def test_group_means_schema(pipeline_out):
    rows = read_rows(pipeline_out / "group_means.csv")
    assert rows[0] == ["model", "item", "SOB", "JSB", "RCB/CCB"]
    pa = [r[1] for r in rows[1:] if r[0] == "PA"]
    assert pa == GROUP_MEAN_ITEMS
    ia = [r[1] for r in rows[1:] if r[0] == "IA"]
    assert ia == ["DmuYear", "IA", "coreasset_slack", "ie_slack", "oe_slack", "save_slack", "loan_slack", "npl_slack"]
    counts = [int(c) for c in rows[1][2:]]
    assert sum(counts) == 353
    check_golden(pipeline_out / "group_means.csv", "group_means.csv")


def test_single_group_mean_is_its_record(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("bank,year,type,x,g,b\nA,2020,2,2,2,1\nB,2020,2,4,3,2\nC,2020,2,4,2,2\nC,2021,2,4,2,2\n")
    code, out = run(tmp_path, "efficiency", path, "--spec-file", FIXTURES / "t3_model.txt")
    assert code == 0
    scores = pd.read_csv(out / "scores.csv")
    means = pd.read_csv(out / "group_means.csv").set_index("item")
    assert means.loc["DmuYear", "JSB"] == 4
    assert float(means.loc["T3", "JSB"]) == pytest.approx(scores["se"].mean())
    assert means.loc["DmuYear", "SOB"] == 0
    assert means.drop(index="DmuYear")[["SOB", "RCB/CCB"]].isna().all().all()
    ranks = pd.read_csv(out / "ranks.csv")
    assert ranks["rank"].tolist() == [1, 2, 3]


def test_efficiency_side_outputs(pipeline_out):
    ranks = pd.read_csv(pipeline_out / "ranks.csv")
    assert list(ranks.columns) == ["model", "bank", "type", "mean_se", "n_years", "rank"]
    assert sorted(ranks[ranks.model == "PA"]["rank"]) == list(range(1, 43))
    dens = pd.read_csv(pipeline_out / "densities.csv")
    assert list(dens.columns) == ["model", "series", "group", "x", "density"]
    assert (dens["density"] >= 0).all()


# malmquist

def test_mi_records_closure_and_unbalanced_rows(pipeline_out):
    mi = pd.read_csv(pipeline_out / "mi_records.csv")
    complete = mi[mi["status"] == "Complete"]
    assert len(complete) > 0
    assert np.allclose(complete["mi"], complete["catch_up"] * complete["frontier_shift"], rtol=1e-9, atol=0)
    panel = pd.read_csv(PANEL)
    present = set(zip(panel["bank"], panel["year"]))
    for bank, t1, t2 in zip(mi["bank"], mi["t1"], mi["t2"]):
        assert (bank, t1) in present and (bank, t2) in present
    series = pd.read_csv(pipeline_out / "yearly_series.csv")
    assert list(series.columns) == ["model", "t1", "t2", "n_complete", "n_excluded", "gm_catch_up",
                                    "gm_frontier_shift", "gm_mi", "am_frontier_shift", "am_mi", "missing"]


def test_duplicated_year_gives_unit_index(tmp_path):
    src = pd.read_csv(PANEL)
    first = src[src.year == 2021].copy()
    second = first.copy()
    second["year"] = 2022
    path = tmp_path / "dup.csv"
    pd.concat([first, second]).to_csv(path, index=False)
    code, out = run(tmp_path, "malmquist", path)
    assert code == 0
    mi = pd.read_csv(out / "mi_records.csv")
    assert len(mi) == 42
    for col in ("mi", "catch_up", "frontier_shift"):
        assert np.allclose(mi[col], 1.0, atol=1e-9)


# compare

def test_tests_schema(pipeline_out):
    rows = read_rows(pipeline_out / "tests.csv")
    assert rows[0] == ["model", "test", "pair", "H0", "H1", "statistic", "p_value"]
    pa = [r for r in rows[1:] if r[0] == "PA"]
    assert len(pa) == 12
    hyps = {(r[1], r[2], r[3], r[4]) for r in pa}
    for test in ("rank-sum", "t-test"):
        for a, b in (("1", "2"), ("1", "3"), ("2", "3")):
            assert (test, f"[{a}, {b}]", f"{a}>{b}", f"{a}<{b}") in hyps
            assert (test, f"[{a}, {b}]", f"{a}<{b}", f"{a}>{b}") in hyps
    for r in rows[1:]:
        assert 0.0 <= float(r[6]) <= 1.0
    check_golden(pipeline_out / "tests.csv", "tests.csv")


def test_compare_detects_shift_in_right_orientation(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for t, shift in ((1, 1.0), (2, 0.0), (3, 0.0)):
        for i in range(30):
            rows.append(("PA", f"B{t}{i}", 2020, t, 1.0, "", rng.normal(shift, 0.3), "Inefficient"))
    scores = pd.DataFrame(rows, columns=["model", "bank", "year", "type", "rho", "delta", "se", "status"])
    path = tmp_path / "scores.csv"
    scores.to_csv(path, index=False)
    code, out = run(tmp_path, "compare", "--scores", path)
    assert code == 0
    tests = pd.read_csv(out / "tests.csv")
    for test in ("rank-sum", "t-test"):
        hit = tests[(tests.test == test) & (tests.pair == "[1, 2]") & (tests.H1 == "1>2")]
        assert hit["p_value"].item() < 0.01
        miss = tests[(tests.test == test) & (tests.pair == "[1, 2]") & (tests.H1 == "1<2")]
        assert miss["p_value"].item() > 0.99


# regress

def test_regression_table_schema(pipeline_out):
    rows = read_rows(pipeline_out / "regression_table.csv")
    assert rows[0] == ["Models", "(1) CatchPA", "(2) CatchPA", "(3) CatchPA", "(4) CatchIA", "(5) CatchIA", "(6) CatchIA"]
    labels = [r[0] for r in rows]
    assert labels[3:13] == REGRESSION_ROWS
    assert labels[:3] == ["Models", "Estimator", "Sample"]
    assert labels[13:] == ["R2 within", "R2 overall", "Hausman"]
    coef = r"^-?(\d+)?(\.\d{1,3})?\**( \(-?(\d+)?(\.\d{1,3})?\))$|^0 \(.*\)$"
    for r in rows[3:12]:
        for cell in r[1:]:
            assert pd.Series([cell]).str.match(coef).item(), cell
    assert rows[12][1:] == ["311"] * 6
    hausman = dict(zip(rows[0], rows[-1]))
    assert hausman["(1) CatchPA"].startswith("chi2(8)=")
    check_golden(pipeline_out / "regression_table.csv", "regression_table.csv")


def test_hausman_near_one_without_entity_effects(pipeline_out):
    rows = read_rows(pipeline_out / "regression_table.csv")
    for cell in rows[-1][1:]:
        if cell:
            assert float(cell.split("p=")[1]) > 0.8


def planted_mi(tmp_path, beta):
    panel = pd.read_csv(PANEL).sort_values(["bank", "year"])
    rng = np.random.default_rng(1)
    d = panel.groupby("bank")["loantosave"].diff()
    panel["catch_up"] = 1.0 + beta * d + 0.002 * rng.normal(size=len(panel))
    prev = panel.groupby("bank")["year"].shift()
    rows = panel[prev.notna()].assign(t1=prev[prev.notna()].astype(int))
    mi = pd.DataFrame({
        "model": "PA", "bank": rows["bank"], "type": rows["type"], "t1": rows["t1"], "t2": rows["year"],
        "catch_up": rows["catch_up"], "frontier_shift": 1.0, "mi": rows["catch_up"],
        "d11": 1.0, "d12": 1.0, "d21": 1.0, "d22": 1.0, "status": "Complete",
    })
    path = tmp_path / "mi.csv"
    mi.to_csv(path, index=False)
    return path


def test_planted_coefficient_gets_stars(tmp_path):
    code, out = run(tmp_path, "regress", PANEL, "--mi-records", planted_mi(tmp_path, 0.5), "--by-type")
    assert code == 0
    table = pd.read_csv(out / "regression_table.csv", dtype=str, keep_default_na=False).set_index("Models")
    assert list(table.loc["Sample"]) == ["All", "All", "All", "SOB", "JSB", "RCB/CCB"]
    for cell in table.loc["dloantosave"]:
        assert "***" in cell
    counts = [int(c) for c in table.loc["Observations"]]
    assert counts[:3] == [311] * 3 and sum(counts[3:]) == 311


# correlate and describe

def test_correlogram_block(pipeline_out):
    corr = pd.read_csv(pipeline_out / "correlogram.csv")
    names = list(corr["variable"])
    assert names[:2] == ["FSPA", "FSIA"] and len(names) == 10
    m = corr.set_index("variable")[names].to_numpy()
    assert np.allclose(np.diag(m), 1.0)
    assert np.allclose(m, m.T, equal_nan=True)
    top = pd.read_csv(pipeline_out / "top_correlations.csv")
    assert list(top.columns) == ["target", "rank", "variable", "r"]
    assert top.groupby("target").size().to_dict() == {"FSIA": 4, "FSPA": 4}


def test_descriptives_schema(pipeline_out):
    rows = read_rows(pipeline_out / "descriptives.csv")
    assert rows[0] == DESCRIPTIVE_COLUMNS
    assert [r[0] for r in rows[1:]] == ["netprofit", "asset", "ie", "oe", "coreasset", "save", "loan", "npl"]
    assert all(r[2] == "353" for r in rows[1:])
    check_golden(pipeline_out / "descriptives.csv", "descriptives.csv")


def test_describe_hand_checked(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("bank,year,type,netprofit\nA,2020,1,1\nB,2020,2,2\nC,2020,3,3\nD,2020,3,\n")
    code, out = run(tmp_path, "describe", path)
    assert code == 0
    rows = read_rows(out / "descriptives.csv")
    assert rows[1] == ["netprofit", "net profit", "3", "2.0", "1.0", "1.0", "1.5", "2.0", "2.5", "3.0"]


# reproducibility, formats and exit codes

def test_rerun_is_byte_identical(tmp_path, pipeline_out):
    code, out = run(tmp_path, "pipeline", PANEL, "--model", "PA,IA", "--macro", FIXTURES / "macro.csv")
    assert code == 0
    first = sorted(p.name for p in pipeline_out.iterdir())
    assert first == sorted(p.name for p in out.iterdir())
    for name in first:
        if name != "manifest.json":
            assert (out / name).read_bytes() == (pipeline_out / name).read_bytes(), name
    a = json.loads((out / "manifest.json").read_text())
    b = json.loads((pipeline_out / "manifest.json").read_text())
    a["config"].pop("out")
    b["config"].pop("out")
    assert a == b


def test_manifest_contents(pipeline_out):
    doc = json.loads((pipeline_out / "manifest.json").read_text())
    assert doc["command"] == "pipeline" and doc["version"]
    import hashlib
    assert doc["inputs"][str(PANEL)] == hashlib.sha256(PANEL.read_bytes()).hexdigest()
    for name, digest in doc["outputs"].items():
        assert hashlib.sha256((pipeline_out / name).read_bytes()).hexdigest() == digest
    assert doc["config"]["model"] == "PA,IA" and doc["config"]["zero_policy"] == "error"


def test_json_mirrors_csv(tmp_path):
    code, out = run(tmp_path, "efficiency", FIXTURES / "t3_panel.csv", "--spec-file", FIXTURES / "t3_model.txt",
                    "--format", "json")
    assert code == 0
    records = json.loads((out / "scores.json").read_text())
    assert list(records[0]) == ["model", "bank", "year", "type", "rho", "delta", "se", "status"]
    assert [r["se"] for r in records] == [3.0, 1.0, 0.0]
    assert records[2]["delta"] is None


def test_exit_code_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        run(tmp_path, "efficiency")
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["efficiency", "--format", "xml"])
    assert info.value.code == 2


def test_exit_code_command_error(tmp_path, capsys):
    code, _ = run(tmp_path, "efficiency", tmp_path / "missing.csv")
    assert code == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("bank,year,type,x\nA,2020,9,1\n")
    code, _ = run(tmp_path, "describe", bad)
    assert code == 1
    assert "unknown type label" in capsys.readouterr().err


def test_partial_failure_exit_code(tmp_path, capsys):
    panel = pd.read_csv(PANEL)
    panel.loc[(panel.year == 2015) & (panel.bank == "B01"), "npl"] = 0.0
    path = tmp_path / "zero.csv"
    panel.to_csv(path, index=False)
    code, out = run(tmp_path, "efficiency", path)
    assert code == 3
    err = capsys.readouterr().err
    assert "PA 2015" in err and "zero value" in err
    scores = pd.read_csv(out / "scores.csv")
    assert 2015 not in set(scores["year"]) and len(scores) > 300
    assert json.loads((out / "manifest.json").read_text())["problems"]
    code, _ = run(tmp_path, "efficiency", path, "--zero-policy", "epsilon", out="eps")
    assert code == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "superdea", "synth", "--out", str(tmp_path / "s"), "--seed", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "s" / "panel.csv").read_bytes() == PANEL.read_bytes()
