"""Table builders behind the CLI: every output file is one DataFrame from here.

Layouts are report-shaped: group means by bank type, pairwise tests with
both hypotheses spelled out, coefficient cells with t-values in parentheses.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import (
    BANK,
    TYPE,
    TYPE_LABELS,
    YEAR,
    DataError,
    EmptyInstanceError,
    ModelSpec,
    Panel,
    ZeroPolicy,
    build_instance,
)
from .dea import BAD_AS_INPUT, DeaError, EfficiencyRecord, RecordStatus, score_all
from .lp import SolverSettings
from .malmquist import COMPLETE, MalmquistRecord, malmquist_panel, summarize_pairs
from .stats.compare import rank_sum_test, t_test
from .stats.descriptive import correlogram, describe, gaussian_density, top_correlations
from .stats.regression import CONST, RegressionError, catch_up_regression, hausman_test

log = logging.getLogger(__name__)

SCORE_COLUMNS = ["model", "bank", "year", "type", "rho", "delta", "se", "status"]
MI_COLUMNS = ["model", "bank", "type", "t1", "t2", "catch_up", "frontier_shift", "mi",
              "d11", "d12", "d21", "d22", "status"]
SERIES_COLUMNS = ["model", "t1", "t2", "n_complete", "n_excluded", "gm_catch_up",
                  "gm_frontier_shift", "gm_mi", "am_frontier_shift", "am_mi", "missing"]
TEST_COLUMNS = ["model", "test", "pair", "H0", "H1", "statistic", "p_value"]
RANK_COLUMNS = ["model", "bank", "type", "mean_se", "n_years", "rank"]
DENSITY_COLUMNS = ["model", "series", "group", "x", "density"]

DESCRIPTIVE_VARIABLES = ("netprofit", "asset", "ie", "oe", "coreasset", "save", "loan", "npl")
VARIABLE_LABELS = {
    "netprofit": "net profit",
    "asset": "total asset",
    "fixedasset": "fixed asset",
    "ie": "interest expenses",
    "oe": "non-interest expenses",
    "coreasset": "tier-one capital",
    "save": "deposit",
    "loan": "loan",
    "npl": "non-performing loan",
}
ESTIMATOR_LABELS = {"fe": "FE", "re": "RE", "pooled": "Pooled"}


@dataclass
class EfficiencyRun:
    """Records for one model over all panel years, with per-year problems."""

    spec: ModelSpec
    records: list[EfficiencyRecord] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    skipped: list[tuple[int, str]] = field(default_factory=list)

    def distances(self) -> dict[int, dict[str, float]]:
        out: dict[int, dict[str, float]] = {}
        for r in self.records:
            out.setdefault(r.year, {})[r.dmu] = r.ratio_score
        return out


def score_panel(
    panel: Panel,
    spec: ModelSpec,
    zero_policy: ZeroPolicy | None = None,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
) -> EfficiencyRun:
    """Two-stage scores for every year; a failing year is recorded and skipped."""
    run = EfficiencyRun(spec)
    for year in panel.years:
        try:
            inst = build_instance(panel, year, spec, zero_policy)
            run.records.extend(score_all(inst, bad_convention, settings))
        except EmptyInstanceError as exc:
            log.warning("%s: %s", spec.name, exc)
            run.skipped.append((year, str(exc)))
        except (DataError, DeaError) as exc:
            log.error("%s year %s failed: %s", spec.name, year, exc)
            run.failures.append((year, str(exc)))
    return run


def scores_table(run: EfficiencyRun, groups: dict[str, int]) -> pd.DataFrame:
    rows = [
        [run.spec.name, r.dmu, r.year, groups[r.dmu], r.rho, r.delta, r.se, r.status.value]
        for r in run.records
    ]
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def slacks_table(run: EfficiencyRun, groups: dict[str, int]) -> pd.DataFrame:
    cols = [f"{v}_slack" for v in run.spec.variables]
    rows = [[run.spec.name, r.dmu, r.year, groups[r.dmu]] + [r.shares[c] for c in cols] for r in run.records]
    return pd.DataFrame(rows, columns=["model", "bank", "year", "type"] + cols)


def _type_columns(types) -> list[str]:
    return [TYPE_LABELS.get(t, str(t)) for t in sorted(types)]


def group_means_table(
    scores: pd.DataFrame, slacks: pd.DataFrame, spec: ModelSpec, include_infeasible: bool = True
) -> pd.DataFrame:
    """Mean SE and mean slack shares by bank type, one block per model.

    Rows are ``DmuYear`` (record count), the model name (mean SE) and one
    ``<variable>_slack`` row per model variable.
    """
    s = scores[scores["model"] == spec.name]
    sl = slacks[slacks["model"] == spec.name]
    if not include_infeasible:
        keep = s["status"] != RecordStatus.FRONTIER_INFEASIBLE.value
        s, sl = s[keep.to_numpy()], sl[keep.to_numpy()]
    types = sorted(set(TYPE_LABELS) | set(scores["type"].unique()))
    labels = _type_columns(types)
    slack_cols = [f"{v}_slack" for v in spec.variables]
    rows = []
    count_row = [spec.name, "DmuYear"]
    se_row = [spec.name, spec.name]
    slack_rows = {c: [spec.name, c] for c in slack_cols}
    for t in types:
        mask = (s["type"] == t).to_numpy()
        count_row.append(int(mask.sum()))
        se_row.append(float(s.loc[mask, "se"].mean()) if mask.any() else math.nan)
        for c in slack_cols:
            slack_rows[c].append(float(sl.loc[mask, c].mean()) if mask.any() else math.nan)
    rows.append(count_row)
    rows.append(se_row)
    rows.extend(slack_rows.values())
    return pd.DataFrame(rows, columns=["model", "item"] + labels, dtype=object)


def ranks_table(scores: pd.DataFrame) -> pd.DataFrame:
    """Banks ordered by mean SE over their observed years, best first."""
    parts = []
    for model, s in scores.groupby("model", sort=False):
        g = s.groupby("bank").agg(type=("type", "first"), mean_se=("se", "mean"), n_years=("se", "size"))
        g = g.reset_index().sort_values(["mean_se", "bank"], ascending=[False, True], kind="mergesort")
        g.insert(0, "model", model)
        g["rank"] = np.arange(1, len(g) + 1)
        parts.append(g[RANK_COLUMNS])
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=RANK_COLUMNS)


def densities_table(scores: pd.DataFrame, slacks: pd.DataFrame, by_type: bool = False) -> pd.DataFrame:
    """Kernel density curves of SE and of each slack share, overall and optionally per type."""
    rows = []
    for model, s in scores.groupby("model", sort=False):
        sl = slacks[slacks["model"] == model]
        series = {"se": s["se"].to_numpy(float)}
        for c in sl.columns:
            if c.endswith("_slack") and sl[c].notna().any():
                series[c] = sl[c].to_numpy(float)
        groups = [("All", np.ones(len(s), bool))]
        if by_type:
            groups += [(TYPE_LABELS.get(t, str(t)), (s["type"] == t).to_numpy()) for t in sorted(s["type"].unique())]
        for name, values in series.items():
            for label, mask in groups:
                v = values[mask]
                v = v[~np.isnan(v)]
                if np.unique(v).size < 2:
                    log.info("density of %s/%s for %s skipped: fewer than two distinct values", name, label, model)
                    continue
                grid, dens, _ = gaussian_density(v)
                rows.extend([model, name, label, float(x), float(d)] for x, d in zip(grid, dens))
    return pd.DataFrame(rows, columns=DENSITY_COLUMNS)


def mi_table(model: str, records: list[MalmquistRecord], groups: dict[str, int]) -> pd.DataFrame:
    rows = [
        [model, r.dmu, groups[r.dmu], r.t1, r.t2, r.catch_up, r.frontier_shift, r.mi,
         r.d11, r.d12, r.d21, r.d22, r.status]
        for r in sorted(records, key=lambda r: (r.dmu, r.t1))
    ]
    return pd.DataFrame(rows, columns=MI_COLUMNS)


def series_table(model: str, records: list[MalmquistRecord], years: list[int]) -> pd.DataFrame:
    summaries = summarize_pairs(records, list(zip(years, years[1:])))
    rows = [
        [model, p.t1, p.t2, p.n_complete, p.n_excluded, p.gm_catch_up, p.gm_frontier_shift,
         p.gm_mi, p.am_frontier_shift, p.am_mi, p.missing]
        for p in summaries
    ]
    return pd.DataFrame(rows, columns=SERIES_COLUMNS)


def run_malmquist(
    panel: Panel,
    spec: ModelSpec,
    zero_policy: ZeroPolicy | None = None,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
    within: dict[int, dict[str, float]] | None = None,
) -> tuple[list[MalmquistRecord], list[tuple[int, int, str]]]:
    skipped: list[tuple[int, int, str]] = []
    records = malmquist_panel(panel, spec, zero_policy, bad_convention, settings, skipped, within)
    return records, skipped


def tests_table(scores: pd.DataFrame, include_infeasible: bool = True) -> pd.DataFrame:
    """Rank-sum and Welch t tests of SE between every pair of bank types, both one-sided directions."""
    rows = []
    for model, s in scores.groupby("model", sort=False):
        if not include_infeasible:
            s = s[s["status"] != RecordStatus.FRONTIER_INFEASIBLE.value]
        types = sorted(s["type"].unique())
        if len(types) < 2:
            raise ValueError(f"{model}: need at least two bank types to compare, found {types}")
        by_type = {t: s.loc[s["type"] == t, "se"].to_numpy(float) for t in types}
        for test_name, fn in (("rank-sum", rank_sum_test), ("t-test", t_test)):
            for a, b in itertools.combinations(types, 2):
                for alternative in ("less", "greater"):
                    res = fn(by_type[a], by_type[b], alternative, labels=(str(a), str(b)))
                    if res.warning:
                        log.warning("%s %s [%s, %s]: %s", model, test_name, a, b, res.warning)
                    rows.append([model, test_name, f"[{a}, {b}]", res.null, res.alt, res.statistic, res.p_value])
    return pd.DataFrame(rows, columns=TEST_COLUMNS)


def catch_frame(mi: pd.DataFrame, model: str) -> pd.DataFrame:
    """Catch-up values keyed by (bank, t2 year), ready to join onto the panel."""
    m = mi[mi["model"] == model]
    return pd.DataFrame({BANK: m["bank"].astype(str).to_numpy(), YEAR: m["t2"].astype(int).to_numpy(),
                         "catch": m["catch_up"].astype(float).to_numpy()})


def _num(v: float) -> str:
    """Three decimals without the leading zero, ``0`` for values that round to zero."""
    text = f"{v:.3f}"
    if float(text) == 0:
        return "0"
    return text.replace("0.", ".", 1) if text.lstrip("-").startswith("0.") else text


def _stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def coef_cell(coef: float, t: float, p: float) -> str:
    return f"{_num(coef)}{_stars(p)} ({_num(t)})"


def _fit_columns(panel, mi, specs, se_mode, by_type, columns, notes, hausman, order) -> None:
    for spec in specs:
        data = panel.with_columns(catch_frame(mi, spec.name))
        fits = [(e, "All", data) for e in ("fe", "re", "pooled")]
        if by_type:
            for t in sorted(data.frame[TYPE].unique()):
                fits.append(("re", TYPE_LABELS.get(t, str(t)), data.filter_types([t])))
        for estimator, sample, d in fits:
            header = f"({len(columns) + 1}) Catch{spec.name}"
            try:
                res = catch_up_regression(d, spec.regressors, estimator, se_mode)
                for name in res.names:
                    if name not in order and name != CONST:
                        order.append(name)
                notes.extend(f"{header}: {n}" for n in res.notes)
                columns.append((header, spec.name, estimator, sample, res))
            except (RegressionError, ValueError) as exc:
                notes.append(f"{header} ({ESTIMATOR_LABELS[estimator]}, {sample}): {exc}")
                columns.append((header, spec.name, estimator, sample, None))
        try:
            fe = catch_up_regression(data, spec.regressors, "fe", "conventional")
            re = catch_up_regression(data, spec.regressors, "re", "conventional")
            h = hausman_test(fe, re)
            text = f"chi2({int(h.df)})={h.statistic:.2f}; p={h.p_value:.4f}"
            if h.warning:
                notes.append(f"Hausman {spec.name}: {h.warning}")
            hausman[spec.name] = text
        except (RegressionError, ValueError) as exc:
            notes.append(f"Hausman {spec.name}: {exc}")


def regression_table(
    panel: Panel,
    mi: pd.DataFrame,
    specs: list[ModelSpec],
    se_mode: str = "hc1",
    by_type: bool = False,
) -> tuple[pd.DataFrame, list[str]]:
    """Catch-up regressions laid out as a coefficient table.

    For each model the columns are FE, RE and pooled OLS on all banks, then
    (with ``by_type``) RE per bank type.  The Hausman row compares FE and RE
    on all banks using conventional covariances.  Returns the table and notes.
    """
    columns: list[tuple[str, str, str, str, object]] = []  # header, model, estimator, sample, result
    notes: list[str] = []
    hausman: dict[str, str] = {}
    order: list[str] = []
    with warnings.catch_warnings():
        # Fit warnings are already carried in each result's notes.
        warnings.simplefilter("ignore", RuntimeWarning)
        _fit_columns(panel, mi, specs, se_mode, by_type, columns, notes, hausman, order)

    row_names = ["Estimator", "Sample"] + order + [CONST, "Observations", "R2 within", "R2 overall", "Hausman"]
    table = {"Models": row_names}
    for header, spec_name, estimator, sample, res in columns:
        cells = [ESTIMATOR_LABELS[estimator], sample]
        for name in order + [CONST]:
            if res is not None and name in res.names:
                i = res.names.index(name)
                cells.append(coef_cell(res.params[i], res.tvalues[i], res.pvalues[i]))
            else:
                cells.append("")
        if res is None:
            cells += ["", "", "", ""]
        else:
            cells.append(str(res.nobs))
            cells.append("" if res.r2_within is None or math.isnan(res.r2_within) else f"{res.r2_within:.3f}")
            cells.append("" if res.r2_overall is None or math.isnan(res.r2_overall) else f"{res.r2_overall:.3f}")
            cells.append(hausman.get(spec_name, "") if sample == "All" and estimator in ("fe", "re") else "")
        table[header] = cells
    return pd.DataFrame(table), notes


def describe_table(panel: Panel, variables=None) -> pd.DataFrame:
    """Descriptive statistics with a ``Represent for`` label column."""
    if variables is None:
        variables = [v for v in DESCRIPTIVE_VARIABLES if v in panel.frame.columns]
    table = describe(panel, variables)
    table.insert(1, "Represent for", [VARIABLE_LABELS.get(v, "") for v in variables])
    return table


def frontier_series(series: pd.DataFrame) -> pd.DataFrame:
    """Yearly ``FS<model>`` columns keyed by the later year of each pair."""
    out = None
    for model, s in series.groupby("model", sort=False):
        part = pd.DataFrame({YEAR: s["t2"].astype(int).to_numpy(),
                             f"FS{model}": s["gm_frontier_shift"].astype(float).to_numpy()})
        out = part if out is None else out.merge(part, on=YEAR, how="outer")
    return out.sort_values(YEAR).reset_index(drop=True)


def correlation_tables(fs: pd.DataFrame, macro: pd.DataFrame, k: int = 4) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Full correlation matrix of frontier-shift and macro series, plus the top-``k`` list per target."""
    if YEAR not in macro.columns:
        raise DataError(f"macro file needs a {YEAR!r} column")
    targets = [c for c in fs.columns if c != YEAR]
    macro_vars = [c for c in macro.columns if c != YEAR]
    merged = fs.merge(macro, on=YEAR, how="outer").sort_values(YEAR)
    matrix = correlogram(merged[targets + macro_vars])
    corr = matrix.reset_index().rename(columns={"index": "variable"})
    top_rows = []
    for target in targets:
        for rank, (name, r) in enumerate(top_correlations(matrix, target, k, among=macro_vars), 1):
            top_rows.append([target, rank, name, r])
    return corr, pd.DataFrame(top_rows, columns=["target", "rank", "variable", "r"])


def mi_consistent(mi: pd.DataFrame, tol: float = 1e-9) -> bool:
    """True when every Complete row satisfies MI = C * F."""
    done = mi[mi["status"] == COMPLETE]
    return bool(np.all(np.abs(done["mi"] - done["catch_up"] * done["frontier_shift"]) <= tol))
