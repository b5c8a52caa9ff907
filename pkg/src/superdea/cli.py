"""Command-line entry point: ``superdea <command> [panel.csv] [options]``.

Every command writes its tables plus a ``manifest.json`` into ``--out``.
Exit status is 0 on success, 1 on a command-level error, 2 on bad usage and
3 when some years or year pairs failed but the rest was written.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, reports
from .data import (
    DataError,
    ModelSpec,
    Panel,
    ZeroPolicy,
    load_panel,
    load_spec_file,
    resolve_spec,
    write_panel,
)
from .dea import CONVENTIONS, DeaError
from .malmquist import MalmquistError
from .stats.regression import SE_MODES, RegressionError
from .synthetic import make_macro, make_panel

log = logging.getLogger("superdea")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 3


class UsageError(Exception):
    pass


def _cell(v):
    """Plain Python value for output; NaN and None become None."""
    if isinstance(v, np.generic):
        v = v.item()
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    return v


def _csv_text(v) -> str:
    v = _cell(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Writer:
    """Writes tables into the output directory and remembers their hashes."""

    def __init__(self, out: Path, fmt: str):
        self.out = out
        self.fmt = fmt
        self.outputs: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out / f"{name}.{self.fmt}"
        if self.fmt == "csv":
            with path.open("w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(frame.columns)
                for row in frame.itertuples(index=False, name=None):
                    w.writerow([_csv_text(v) for v in row])
        else:
            rows = [{c: _cell(v) for c, v in zip(frame.columns, row)}
                    for row in frame.itertuples(index=False, name=None)]
            path.write_text(json.dumps(rows, indent=1, allow_nan=False) + "\n", encoding="utf-8")
        self.outputs[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def manifest(self, args: argparse.Namespace, inputs: dict[str, str], problems: list[str], notes: list[str]):
        config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
        doc = {
            "version": __version__,
            "command": args.command,
            "config": config,
            "inputs": inputs,
            "outputs": dict(sorted(self.outputs.items())),
            "problems": problems,
            "notes": notes,
        }
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _specs(args) -> list[ModelSpec]:
    if args.spec_file:
        spec = load_spec_file(args.spec_file)
        if args.rts and args.rts != spec.rts:
            spec = ModelSpec(spec.name, spec.inputs, spec.good, spec.bad, args.rts, spec.regressors)
        return [spec]
    names = [n.strip() for n in args.model.split(",") if n.strip()]
    if not names:
        raise UsageError("--model needs at least one model name")
    return [resolve_spec(n, args.rts) for n in names]


def _read_frame(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip", keep_default_na=True)


class Run:
    """Shared state for one invocation: inputs, writer, problems and notes."""

    def __init__(self, args):
        self.args = args
        self.writer = Writer(Path(args.out), args.format)
        self.inputs: dict[str, str] = {}
        self.problems: list[str] = []
        self.notes: list[str] = []
        self._panel: Panel | None = None
        self.policy = ZeroPolicy(args.zero_policy) if hasattr(args, "zero_policy") else None
        self.cache: dict[str, object] = {}

    def track(self, path) -> None:
        self.inputs[str(path)] = _sha256(path)

    @property
    def panel(self) -> Panel:
        if self._panel is None:
            if not getattr(self.args, "panel", None):
                raise UsageError(f"{self.args.command} needs a panel file")
            self._panel = load_panel(self.args.panel)
            self.track(self.args.panel)
        return self._panel

    def specs(self) -> list[ModelSpec]:
        if self.args.spec_file:
            self.track(self.args.spec_file)
        return _specs(self.args)

    def finish(self) -> int:
        self.writer.manifest(self.args, self.inputs, self.problems, self.notes)
        if self.problems:
            print(f"completed with {len(self.problems)} problem(s):", file=sys.stderr)
            for p in self.problems:
                print(f"  {p}", file=sys.stderr)
            return EXIT_PARTIAL
        return EXIT_OK


def _efficiency(run: Run) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Scores and slack shares for every requested model (cached per run)."""
    if "scores" in run.cache:
        return run.cache["scores"], run.cache["slacks"]
    panel, args = run.panel, run.args
    groups = panel.groups()
    scores, slacks = [], []
    for spec in run.specs():
        er = reports.score_panel(panel, spec, run.policy, args.bad_convention)
        run.cache[f"within:{spec.name}"] = er.distances()
        run.problems += [f"{spec.name} {year}: {msg}" for year, msg in er.failures]
        run.notes += [f"{spec.name} {year} skipped: {msg}" for year, msg in er.skipped]
        scores.append(reports.scores_table(er, groups))
        slacks.append(reports.slacks_table(er, groups))
    score_frame = pd.concat(scores, ignore_index=True).sort_values(["model", "bank", "year"], kind="mergesort")
    slack_frame = pd.concat(slacks, ignore_index=True).sort_values(["model", "bank", "year"], kind="mergesort")
    run.cache["scores"] = score_frame.reset_index(drop=True)
    run.cache["slacks"] = slack_frame.reset_index(drop=True)
    return run.cache["scores"], run.cache["slacks"]


def cmd_efficiency(run: Run) -> None:
    scores, slacks = _efficiency(run)
    w = run.writer
    w.table("scores", scores)
    w.table("slacks", slacks)
    means = [reports.group_means_table(scores, slacks, spec, run.args.include_infeasible) for spec in run.specs()]
    w.table("group_means", pd.concat(means, ignore_index=True))
    w.table("ranks", reports.ranks_table(scores))
    w.table("densities", reports.densities_table(scores, slacks, run.args.by_type))


def _malmquist(run: Run) -> tuple[pd.DataFrame, pd.DataFrame]:
    if "mi" in run.cache:
        return run.cache["mi"], run.cache["series"]
    panel, args = run.panel, run.args
    groups = panel.groups()
    mi_parts, series_parts = [], []
    for spec in run.specs():
        records, skipped = reports.run_malmquist(
            panel, spec, run.policy, args.bad_convention, within=run.cache.get(f"within:{spec.name}")
        )
        run.problems += [f"{spec.name} {t1}-{t2}: {msg}" for t1, t2, msg in skipped]
        mi_parts.append(reports.mi_table(spec.name, records, groups))
        series_parts.append(reports.series_table(spec.name, records, panel.years))
    run.cache["mi"] = pd.concat(mi_parts, ignore_index=True)
    run.cache["series"] = pd.concat(series_parts, ignore_index=True)
    return run.cache["mi"], run.cache["series"]


def cmd_malmquist(run: Run) -> None:
    mi, series = _malmquist(run)
    run.writer.table("mi_records", mi)
    run.writer.table("yearly_series", series)


def cmd_compare(run: Run) -> None:
    if getattr(run.args, "scores", None):
        scores = _read_frame(run.args.scores)
        run.track(run.args.scores)
    else:
        scores, _ = _efficiency(run)
    run.writer.table("tests", reports.tests_table(scores, run.args.include_infeasible))


def cmd_regress(run: Run) -> None:
    if getattr(run.args, "mi_records", None):
        mi = _read_frame(run.args.mi_records)
        run.track(run.args.mi_records)
    else:
        mi, _ = _malmquist(run)
    table, notes = reports.regression_table(run.panel, mi, run.specs(), run.args.se, run.args.by_type)
    run.notes += notes
    run.writer.table("regression_table", table)


def cmd_correlate(run: Run) -> None:
    if not run.args.macro:
        raise UsageError("correlate needs --macro")
    macro = _read_frame(run.args.macro)
    run.track(run.args.macro)
    if getattr(run.args, "series", None):
        series = _read_frame(run.args.series)
        run.track(run.args.series)
    else:
        _, series = _malmquist(run)
    corr, top = reports.correlation_tables(reports.frontier_series(series), macro)
    run.writer.table("correlogram", corr)
    run.writer.table("top_correlations", top)


def cmd_describe(run: Run) -> None:
    variables = None
    if run.args.variables:
        variables = [v.strip() for v in run.args.variables.split(",") if v.strip()]
    run.writer.table("descriptives", reports.describe_table(run.panel, variables))


def cmd_pipeline(run: Run) -> None:
    cmd_describe(run)
    cmd_efficiency(run)
    cmd_malmquist(run)
    cmd_compare(run)
    cmd_regress(run)
    if run.args.macro:
        cmd_correlate(run)


def cmd_synth(run: Run) -> None:
    out = Path(run.args.out)
    out.mkdir(parents=True, exist_ok=True)
    panel_path = out / "panel.csv"
    write_panel(make_panel(run.args.seed), panel_path)
    run.writer.outputs[panel_path.name] = _sha256(panel_path)
    run.writer.table("macro", make_macro(run.args.seed))


COMMANDS = {
    "efficiency": (cmd_efficiency, "two-stage super-efficiency scores, slack shares, group means, ranks, densities"),
    "malmquist": (cmd_malmquist, "catch-up, frontier-shift and MI per bank and consecutive year pair"),
    "compare": (cmd_compare, "rank-sum and t tests of scores between bank types"),
    "regress": (cmd_regress, "catch-up regressions on differenced bank-specific variables"),
    "correlate": (cmd_correlate, "correlations of frontier shift with macro series"),
    "describe": (cmd_describe, "descriptive statistics of the panel variables"),
    "pipeline": (cmd_pipeline, "describe, efficiency, malmquist, compare and regress in one run"),
    "synth": (cmd_synth, "write a synthetic panel and macro file"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="superdea", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=0, help="random seed for generated data")
    common.add_argument("-v", "--verbose", action="count", default=0)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("panel", nargs="?", help="long-format panel CSV (bank, year, type, variables...)")
    model.add_argument("--model", default="PA", help="comma-separated built-in models (PA, IA, PA1, IA1)")
    model.add_argument("--spec-file", help="key = value model file; overrides --model")
    model.add_argument("--rts", choices=("vrs", "crs"), default=None, help="returns to scale (default: model's)")
    model.add_argument("--bad-convention", choices=CONVENTIONS, default=CONVENTIONS[0])
    model.add_argument("--zero-policy", choices=("error", "epsilon", "drop-term"), default="error")
    model.add_argument("--by-type", action="store_true", help="add per-type densities and regressions")
    model.add_argument("--include-infeasible", action=argparse.BooleanOptionalAction, default=True,
                       help="keep stage-2 infeasible records in group means and tests")
    model.add_argument("--se", choices=SE_MODES, default="hc1", help="regression standard errors")
    model.add_argument("--macro", help="yearly macro CSV with a year column")

    for name, (func, help_text) in COMMANDS.items():
        parents = [common] if name == "synth" else [common, model]
        p = sub.add_parser(name, parents=parents, help=help_text, description=help_text)
        p.set_defaults(func=func)
        if name == "compare":
            p.add_argument("--scores", help="scores file from an earlier efficiency run")
        if name == "regress":
            p.add_argument("--mi-records", help="mi_records file from an earlier malmquist run")
        if name == "correlate":
            p.add_argument("--series", help="yearly_series file from an earlier malmquist run")
        if name in ("describe", "pipeline"):
            p.add_argument("--variables", help="comma-separated variables to describe")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(args)
        args.func(run)
        return run.finish()
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, DeaError, MalmquistError, RegressionError, ValueError, KeyError, OSError) as exc:
        print(f"superdea: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK
