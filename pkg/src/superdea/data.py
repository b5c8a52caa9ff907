"""Panel ingestion, model specs and per-year DEA instances."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .dea import DeaInstance

log = logging.getLogger(__name__)

BANK, YEAR, TYPE = "bank", "year", "type"
TYPE_LABELS = {1: "SOB", 2: "JSB", 3: "RCB/CCB"}
TYPE_NAMES = {1: "State-owned bank", 2: "Joint-stock bank", 3: "City/rural commercial bank"}
MISSING_TOKENS = {"", "na", "nan", "."}

# Bank-specific regressors of the catch-up regression, before differencing.
DEFAULT_REGRESSORS = ("alr", "car", "loantosave", "tencient", "ownhhi", "otheri", "roe", "fown")


class DataError(Exception):
    pass


class EmptyInstanceError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class Panel:
    """Long-format observations keyed by (bank, year).  Treat ``frame`` as read-only."""

    frame: pd.DataFrame

    def __post_init__(self):
        df = self.frame.copy()
        for col in (BANK, YEAR, TYPE):
            if col not in df.columns:
                raise DataError(f"panel is missing required column {col!r}")
        df[BANK] = df[BANK].astype(str)
        df[YEAR] = df[YEAR].astype(int)
        df[TYPE] = df[TYPE].astype(int)
        dup = df.duplicated([BANK, YEAR], keep=False)
        if dup.any():
            pairs = sorted(set(zip(df.loc[dup, BANK], df.loc[dup, YEAR])))
            raise DataError(f"duplicate (bank, year) rows: {pairs}")
        mixed = df.groupby(BANK)[TYPE].nunique()
        if (mixed > 1).any():
            raise DataError(f"type label changes within bank(s): {list(mixed[mixed > 1].index)}")
        df = df.sort_values([BANK, YEAR], kind="mergesort").reset_index(drop=True)
        object.__setattr__(self, "frame", df)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def variables(self) -> list[str]:
        return [c for c in self.frame.columns if c not in (BANK, YEAR, TYPE)]

    @property
    def years(self) -> list[int]:
        return sorted(self.frame[YEAR].unique().tolist())

    @property
    def banks(self) -> list[str]:
        return sorted(self.frame[BANK].unique().tolist())

    def groups(self) -> dict[str, int]:
        return dict(self.frame.groupby(BANK)[TYPE].first())

    def year_slice(self, year: int) -> pd.DataFrame:
        return self.frame[self.frame[YEAR] == year]

    def filter_types(self, types) -> "Panel":
        types = {int(t) for t in types}
        return Panel(self.frame[self.frame[TYPE].isin(types)])

    def with_columns(self, extra: pd.DataFrame) -> "Panel":
        """Left-join extra (bank, year, ...) columns onto the panel."""
        merged = self.frame.merge(extra, on=[BANK, YEAR], how="left", validate="one_to_one")
        return Panel(merged)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    inputs: tuple[str, ...]
    good: tuple[str, ...]
    bad: tuple[str, ...] = ()
    rts: str = "vrs"
    regressors: tuple[str, ...] = DEFAULT_REGRESSORS

    def __post_init__(self):
        for attr in ("inputs", "good", "bad", "regressors"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        if not self.inputs or not self.good:
            raise DataError(f"model {self.name}: inputs and good outputs must be nonempty")
        roles = self.inputs + self.good + self.bad
        if len(set(roles)) != len(roles):
            raise DataError(f"model {self.name}: variable roles overlap: {roles}")
        if self.rts not in ("vrs", "crs"):
            raise DataError(f"model {self.name}: rts must be vrs or crs")

    @property
    def variables(self) -> tuple[str, ...]:
        return self.inputs + self.good + self.bad


MODELS: dict[str, ModelSpec] = dict(
    PA=ModelSpec("PA", ("coreasset", "ie", "oe"), ("netprofit",), ("npl",)),
    IA=ModelSpec("IA", ("coreasset", "ie", "oe"), ("save", "loan"), ("npl",)),
    PA1=ModelSpec("PA1", ("asset", "ie", "oe"), ("netprofit",), ("npl",)),
    IA1=ModelSpec("IA1", ("fixedasset", "ie", "oe"), ("save", "loan"), ("npl",)),
)


def _split_names(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def load_spec_file(path) -> ModelSpec:
    """Read a ``key = value`` model file.

    Recognised keys: ``name``, ``base`` (a built-in model to start from),
    ``inputs``, ``good``, ``bad``, ``rts``, ``regressors``.  List values are
    comma separated column names.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.lower()] = value
    unknown = set(values) - {"name", "base", "inputs", "good", "bad", "rts", "regressors"}
    if unknown:
        raise DataError(f"{path}: unknown keys {sorted(unknown)}")
    base = MODELS[values["base"]] if "base" in values else None
    kwargs = {}
    for key, attr in (("inputs", "inputs"), ("good", "good"), ("bad", "bad"), ("regressors", "regressors")):
        if key in values:
            kwargs[attr] = _split_names(values[key])
        elif base is not None:
            kwargs[attr] = getattr(base, attr)
    if "rts" in values:
        kwargs["rts"] = values["rts"].lower()
    elif base is not None:
        kwargs["rts"] = base.rts
    kwargs.setdefault("bad", ())
    name = values.get("name", base.name if base else "custom")
    try:
        return ModelSpec(name=name, **kwargs)
    except TypeError as exc:
        raise DataError(f"{path}: incomplete model spec ({exc})") from None


def resolve_spec(name: str, rts: str | None = None) -> ModelSpec:
    key = name.upper()
    if key not in MODELS:
        raise DataError(f"unknown model {name!r}; built-in models are {sorted(MODELS)}")
    spec = MODELS[key]
    if rts is not None and rts != spec.rts:
        spec = ModelSpec(spec.name, spec.inputs, spec.good, spec.bad, rts, spec.regressors)
    return spec


@dataclass(frozen=True)
class ZeroPolicy:
    mode: str = "error"
    epsilon_scale: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("error", "epsilon", "drop-term"):
            raise DataError(f"unknown zero policy {self.mode!r}")
        if self.mode == "epsilon" and not self.epsilon_scale > 0:
            raise DataError("epsilon scale must be positive")


def _parse_number(token: str) -> float:
    if token.strip().lower() in MISSING_TOKENS:
        return math.nan
    return float(token)


def load_panel(path, bank_col: str = BANK, year_col: str = YEAR, type_col: str = TYPE) -> Panel:
    """Load a long-format CSV (one row per bank-year) into a :class:`Panel`."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in (bank_col, year_col, type_col) if c not in header]
        if missing:
            raise DataError(f"{path}: missing required column(s) {missing}")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        rows, problems = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                problems.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                continue
            rec = {}
            for col, tok in zip(header, row):
                tok = tok.strip()
                try:
                    if col == bank_col:
                        if not tok:
                            raise ValueError("empty bank id")
                        rec[BANK] = tok
                    elif col == year_col:
                        rec[YEAR] = int(tok)
                    elif col == type_col:
                        label = int(tok)
                        if label not in TYPE_LABELS:
                            allowed = ", ".join(f"{k}={v}" for k, v in TYPE_NAMES.items())
                            raise ValueError(f"unknown type label {tok!r}; allowed: {allowed}")
                        rec[TYPE] = label
                    else:
                        rec[col] = _parse_number(tok)
                except ValueError as exc:
                    problems.append(f"line {lineno}, column {col!r}: {exc}")
            rows.append(rec)
    if problems:
        raise DataError(f"{path}: malformed rows:\n  " + "\n  ".join(problems))
    value_cols = [c for c in header if c not in (bank_col, year_col, type_col)]
    frame = pd.DataFrame(rows, columns=[BANK, YEAR, TYPE] + value_cols)
    for col in value_cols:
        frame[col] = frame[col].astype(float)
    return Panel(frame)


def write_panel(panel: Panel, path) -> None:
    """Write a panel as CSV; floats use their shortest round-trip repr."""
    df = panel.frame
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(df.columns)
        for rec in df.itertuples(index=False):
            w.writerow(
                "" if isinstance(v, float) and math.isnan(v) else repr(v) if isinstance(v, float) else v
                for v in rec
            )


def build_instance(
    panel: Panel, year: int, spec: ModelSpec, zero_policy: ZeroPolicy | None = None
) -> DeaInstance:
    """DEA instance for one year: banks with complete data on every spec variable."""
    policy = zero_policy or ZeroPolicy()
    missing_cols = [v for v in spec.variables if v not in panel.frame.columns]
    if missing_cols:
        raise DataError(f"model {spec.name}: panel lacks column(s) {missing_cols}")
    rows = panel.year_slice(year)
    if rows.empty:
        raise DataError(f"year {year} not present in panel")
    values = rows[list(spec.variables)].to_numpy(dtype=float)
    banks = rows[BANK].tolist()

    excluded = []
    complete = ~np.isnan(values).any(axis=1)
    for b, ok, vals in zip(banks, complete, values):
        if not ok:
            gone = [v for v, x in zip(spec.variables, vals) if np.isnan(x)]
            reason = f"missing {', '.join(gone)}"
            excluded.append((b, reason))
            log.info("year %s: bank %s excluded (%s)", year, b, reason)
    values = values[complete]
    banks = [b for b, ok in zip(banks, complete) if ok]
    if not banks:
        raise EmptyInstanceError(f"year {year}: no bank has complete data for model {spec.name}")

    negative = np.argwhere(values < 0)
    if negative.size:
        i, k = negative[0]
        raise DataError(
            f"negative value {values[i, k]} for bank {banks[i]}, year {year}, variable {spec.variables[k]}"
        )
    zeros = np.argwhere(values == 0)
    if zeros.size:
        if policy.mode == "error":
            i, k = zeros[0]
            raise DataError(
                f"zero value for bank {banks[i]}, year {year}, variable {spec.variables[k]} "
                "(choose --zero-policy epsilon or drop-term to proceed)"
            )
        if policy.mode == "epsilon":
            values = values.copy()
            col_means = values.mean(axis=0)
            for i, k in zeros:
                if col_means[k] <= 0:
                    raise DataError(f"year {year}: variable {spec.variables[k]} is zero for every bank")
                values[i, k] = policy.epsilon_scale * col_means[k]
                log.info(
                    "year %s: bank %s %s zero replaced by %g",
                    year, banks[i], spec.variables[k], values[i, k],
                )

    m, s1 = len(spec.inputs), len(spec.good)
    return DeaInstance(
        ids=banks,
        X=values[:, :m].T,
        Yg=values[:, m:m + s1].T,
        Yb=values[:, m + s1:].T,
        input_names=spec.inputs,
        good_names=spec.good,
        bad_names=spec.bad,
        rts=spec.rts,
        year=int(year),
        allow_zero=policy.mode == "drop-term",
        excluded=tuple(excluded),
    )
