"""Slack-based efficiency with undesirable outputs, plus super-efficiency.

Stage 1 scores every DMU with the non-oriented SBM model (inputs, good
outputs, bad outputs).  DMUs that come out efficient are re-scored in stage 2
against the frontier formed without them, which yields a ratio score of at
least one.  Both stages are fractional programs; they are linearised with the
scalar-multiplier (Charnes-Cooper) substitution and solved with :mod:`superdea.lp`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .lp import LpSolution, SolverSettings, StandardFormLP, Status, solve_lp

log = logging.getLogger(__name__)

RHO_TOL = 1e-6
SLACK_TOL = 1e-7

BAD_AS_INPUT = "bad-as-input"
LITERAL = "literal"
CONVENTIONS = (BAD_AS_INPUT, LITERAL)


class DeaError(Exception):
    """Invalid DEA input or an unexpected solver outcome."""


class NoReferenceSetError(DeaError):
    pass


class ScoringError(DeaError):
    """One or more DMUs failed during a batch run."""

    def __init__(self, failures: dict[str, Exception]):
        self.failures = failures
        detail = "; ".join(f"{k}: {v}" for k, v in failures.items())
        super().__init__(f"{len(failures)} DMU(s) failed: {detail}")


class RecordStatus(str, Enum):
    INEFFICIENT = "Inefficient"
    SUPER_EFFICIENT = "SuperEfficient"
    FRONTIER_INFEASIBLE = "FrontierInfeasible"


@dataclass(frozen=True, eq=False)
class DeaInstance:
    """One period's data.  Matrices are variables x DMUs."""

    ids: tuple[str, ...]
    X: np.ndarray
    Yg: np.ndarray
    Yb: np.ndarray
    input_names: tuple[str, ...]
    good_names: tuple[str, ...]
    bad_names: tuple[str, ...] = ()
    rts: str = "vrs"
    year: int | None = None
    # Zero entries are tolerated only when the drop-term zero policy produced them.
    allow_zero: bool = False
    excluded: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        n = len(ids)
        X = np.array(self.X, dtype=float, copy=True).reshape(len(self.input_names), n)
        Yg = np.array(self.Yg, dtype=float, copy=True).reshape(len(self.good_names), n)
        Yb = np.array(self.Yb, dtype=float, copy=True).reshape(len(self.bad_names), n)
        for arr in (X, Yg, Yb):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Yg", Yg)
        object.__setattr__(self, "Yb", Yb)
        for name in ("input_names", "good_names", "bad_names", "excluded"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

        if n < 1:
            raise DeaError("instance needs at least one DMU")
        if len(set(ids)) != n:
            raise DeaError("DMU identifiers must be unique")
        if X.shape[0] < 1 or Yg.shape[0] < 1:
            raise DeaError("instance needs at least one input and one good output")
        names = self.variable_names
        if len(set(names)) != len(names):
            raise DeaError(f"variable names must be unique across roles: {names}")
        if self.rts not in ("vrs", "crs"):
            raise DeaError(f"rts must be 'vrs' or 'crs', got {self.rts!r}")
        data = np.vstack([X, Yg, Yb])
        if not np.all(np.isfinite(data)):
            raise DeaError("instance contains missing or non-finite values")
        floor_ok = data >= 0 if self.allow_zero else data > 0
        if not floor_ok.all():
            r, j = np.argwhere(~floor_ok)[0]
            raise DeaError(
                f"nonpositive value {data[r, j]} for {names[r]} at DMU {ids[j]}; "
                "apply a zero policy before scoring"
            )

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def s1(self) -> int:
        return self.Yg.shape[0]

    @property
    def s2(self) -> int:
        return self.Yb.shape[0]

    @property
    def variable_names(self) -> tuple[str, ...]:
        return self.input_names + self.good_names + self.bad_names

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.X[:, j], self.Yg[:, j], self.Yb[:, j]

    def subset(self, keep: Sequence[int]) -> "DeaInstance":
        keep = list(keep)
        return DeaInstance(
            ids=[self.ids[j] for j in keep],
            X=self.X[:, keep],
            Yg=self.Yg[:, keep],
            Yb=self.Yb[:, keep],
            input_names=self.input_names,
            good_names=self.good_names,
            bad_names=self.bad_names,
            rts=self.rts,
            year=self.year,
            allow_zero=self.allow_zero,
        )

    def with_rts(self, rts: str) -> "DeaInstance":
        return DeaInstance(
            ids=self.ids, X=self.X, Yg=self.Yg, Yb=self.Yb,
            input_names=self.input_names, good_names=self.good_names,
            bad_names=self.bad_names, rts=rts, year=self.year,
            allow_zero=self.allow_zero, excluded=self.excluded,
        )

    def append(self, dmu_id: str, x, yg, yb) -> "DeaInstance":
        """Return a copy with one extra DMU column at the end."""
        return DeaInstance(
            ids=self.ids + (dmu_id,),
            X=np.column_stack([self.X, np.asarray(x, float)]),
            Yg=np.column_stack([self.Yg, np.asarray(yg, float)]),
            Yb=np.column_stack([self.Yb, np.asarray(yb, float).reshape(self.s2)]),
            input_names=self.input_names,
            good_names=self.good_names,
            bad_names=self.bad_names,
            rts=self.rts,
            year=self.year,
            allow_zero=self.allow_zero,
        )


@dataclass(frozen=True, eq=False)
class SbmSolution:
    rho: float
    s_minus: np.ndarray
    s_good: np.ndarray
    s_bad: np.ndarray
    lam: np.ndarray
    efficient: bool


@dataclass(frozen=True, eq=False)
class SuperSolution:
    feasible: bool
    delta: float | None = None
    x_bar: np.ndarray | None = None
    yg_bar: np.ndarray | None = None
    yb_bar: np.ndarray | None = None
    # Weights over the reference set, i.e. every DMU except the one scored.
    lam: np.ndarray | None = None
    reference_ids: tuple[str, ...] = ()

    def super_slacks(self, x0, yg0, yb0):
        return self.x_bar - x0, yg0 - self.yg_bar, self.yb_bar - yb0


@dataclass(frozen=True, eq=False)
class EfficiencyRecord:
    dmu: str
    year: int | None
    rho: float
    se: float
    status: RecordStatus
    delta: float | None = None
    stage1: SbmSolution | None = field(default=None, repr=False)
    stage2: SuperSolution | None = field(default=None, repr=False)
    shares: dict[str, float] = field(default_factory=dict)

    @property
    def ratio_score(self) -> float:
        """rho for inefficient DMUs, the super ratio otherwise (1 if stage 2 failed)."""
        if self.status is RecordStatus.INEFFICIENT:
            return self.rho
        if self.status is RecordStatus.SUPER_EFFICIENT:
            return self.delta
        return 1.0


def _ratio_terms(values: np.ndarray) -> np.ndarray:
    """Reciprocals of observed values, with zeros mapped to a dropped (0) term."""
    out = np.zeros_like(values)
    pos = values > 0
    out[pos] = 1.0 / values[pos]
    return out


def _check_observed(instance: DeaInstance, k: int):
    obs = np.concatenate(instance.column(k))
    if np.any(obs < 0) or (not instance.allow_zero and np.any(obs <= 0)):
        raise DeaError(
            f"internal invariant violated: DMU {instance.ids[k]} has nonpositive observed values; "
            "the zero policy must run before scoring"
        )


def linearize_sbm(instance: DeaInstance, dmu_index: int) -> StandardFormLP:
    """LP form of the SBM-undesirable program for one DMU.

    Variable order is ``[t, t*lam (n), t*s_minus (m), t*s_good (s1), t*s_bad (s2)]``.
    Each data row is divided by the DMU's own observed value, which leaves the
    feasible set unchanged but keeps coefficients near one.
    """
    inst = instance
    if not 0 <= dmu_index < inst.n:
        raise IndexError(f"dmu_index {dmu_index} out of range for {inst.n} DMUs")
    _check_observed(inst, dmu_index)
    n, m, s1, s2 = inst.n, inst.m, inst.s1, inst.s2
    x0, yg0, yb0 = inst.column(dmu_index)
    ix, ig, ib = _ratio_terms(x0), _ratio_terms(yg0), _ratio_terms(yb0)
    n_in = max(int(np.count_nonzero(ix)), 1)
    n_out = int(np.count_nonzero(ig) + np.count_nonzero(ib))

    L = 1
    S = L + n
    G = S + m
    B = G + s1
    nv = B + s2
    vrs = inst.rts == "vrs"
    rows = 1 + m + s1 + s2 + (1 if vrs else 0)
    A = np.zeros((rows, nv))
    b = np.zeros(rows)
    c = np.zeros(nv)
    c[0] = 1.0
    c[S:G] = -ix / n_in

    A[0, 0] = 1.0
    if n_out:
        A[0, G:B] = ig / n_out
        A[0, B:nv] = ib / n_out
    b[0] = 1.0
    r = 1
    for i in range(m):
        scale = ix[i] if ix[i] > 0 else 1.0
        A[r, 0] = x0[i] * scale
        A[r, L:S] = -inst.X[i] * scale
        A[r, S + i] = -scale
        r += 1
    for q in range(s1):
        scale = ig[q] if ig[q] > 0 else 1.0
        A[r, 0] = yg0[q] * scale
        A[r, L:S] = -inst.Yg[q] * scale
        A[r, G + q] = scale
        r += 1
    for q in range(s2):
        scale = ib[q] if ib[q] > 0 else 1.0
        A[r, 0] = yb0[q] * scale
        A[r, L:S] = -inst.Yb[q] * scale
        A[r, B + q] = -scale
        r += 1
    if vrs:
        A[r, 0] = -1.0
        A[r, L:S] = 1.0
    return StandardFormLP(c=c, A=A, b=b, senses=("=",) * rows)


def _is_efficient(rho, s_minus, s_good, s_bad, x0, yg0, yb0) -> bool:
    if rho < 1.0 - RHO_TOL:
        return False
    for slack, obs in ((s_minus, x0), (s_good, yg0), (s_bad, yb0)):
        limit = SLACK_TOL * np.where(obs > 0, obs, 1.0)
        if np.any(slack > limit):
            return False
    return True


def sbm_score(
    instance: DeaInstance, dmu_index: int, settings: SolverSettings | None = None
) -> SbmSolution:
    """Stage-1 SBM score of one DMU, with its slacks and intensity weights."""
    lp = linearize_sbm(instance, dmu_index)
    sol = solve_lp(lp, settings)
    if not sol.optimal:
        raise DeaError(
            f"SBM program for DMU {instance.ids[dmu_index]} returned {sol.status.value}; "
            "the DMU itself is always a feasible reference, so this indicates a solver fault"
        )
    n, m, s1 = instance.n, instance.m, instance.s1
    t = sol.x[0]
    if t <= 0:
        raise DeaError(f"SBM program for DMU {instance.ids[dmu_index]} returned t = {t}")
    lam = sol.x[1:1 + n] / t
    s_minus = sol.x[1 + n:1 + n + m] / t
    s_good = sol.x[1 + n + m:1 + n + m + s1] / t
    s_bad = sol.x[1 + n + m + s1:] / t
    rho = min(sol.value, 1.0)
    x0, yg0, yb0 = instance.column(dmu_index)
    return SbmSolution(
        rho=rho,
        s_minus=s_minus,
        s_good=s_good,
        s_bad=s_bad,
        lam=lam,
        efficient=_is_efficient(rho, s_minus, s_good, s_bad, x0, yg0, yb0),
    )


def linearize_super_sbm(
    instance: DeaInstance, dmu_index: int, bad_convention: str = BAD_AS_INPUT
) -> StandardFormLP:
    """LP form of the super-SBM program; DMU ``dmu_index`` is left out of the reference set.

    Variable order is ``[t, t*lam (n-1), t*x_bar (m), t*yg_bar (s1), t*yb_bar (s2)]``.
    """
    inst = instance
    if bad_convention not in CONVENTIONS:
        raise DeaError(f"unknown bad-output convention {bad_convention!r}")
    _check_observed(inst, dmu_index)
    ref = [j for j in range(inst.n) if j != dmu_index]
    k = len(ref)
    m, s1, s2 = inst.m, inst.s1, inst.s2
    x0, yg0, yb0 = inst.column(dmu_index)
    ix, ig, ib = _ratio_terms(x0), _ratio_terms(yg0), _ratio_terms(yb0)

    L, XB = 1, 1 + k
    GB = XB + m
    BB = GB + s1
    nv = BB + s2
    c = np.zeros(nv)
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    senses: list[str] = []

    def add(row, sense, value=0.0):
        rows.append(row)
        senses.append(sense)
        rhs.append(value)

    norm = np.zeros(nv)
    if bad_convention == BAD_AS_INPUT:
        n_num = max(int(np.count_nonzero(ix) + np.count_nonzero(ib)), 1)
        c[XB:GB] = ix / n_num
        c[BB:nv] = ib / n_num
        n_den = int(np.count_nonzero(ig))
        norm[GB:BB] = ig / max(n_den, 1)
    else:
        n_num = max(int(np.count_nonzero(ix)), 1)
        c[XB:GB] = ix / n_num
        n_den = int(np.count_nonzero(ig) + np.count_nonzero(ib))
        norm[GB:BB] = ig / max(n_den, 1)
        norm[BB:nv] = ib / max(n_den, 1)
    add(norm, "=", 1.0)

    def scale_of(v):
        return v if v > 0 else 1.0

    for i in range(m):
        sc = scale_of(ix[i])
        row = np.zeros(nv)
        row[XB + i] = sc
        row[L:XB] = -inst.X[i, ref] * sc
        add(row, ">=")
        row = np.zeros(nv)
        row[XB + i] = sc
        row[0] = -x0[i] * sc
        add(row, ">=")
    for q in range(s1):
        sc = scale_of(ig[q])
        row = np.zeros(nv)
        row[GB + q] = sc
        row[L:XB] = -inst.Yg[q, ref] * sc
        add(row, "<=")
        row = np.zeros(nv)
        row[GB + q] = sc
        row[0] = -yg0[q] * sc
        add(row, "<=")
    for q in range(s2):
        sc = scale_of(ib[q])
        row = np.zeros(nv)
        row[BB + q] = sc
        row[L:XB] = -inst.Yb[q, ref] * sc
        add(row, ">=")
        row = np.zeros(nv)
        row[BB + q] = sc
        row[0] = -yb0[q] * sc
        add(row, ">=")
        if bad_convention == LITERAL:
            # Without a cap the printed objective can be driven to zero by inflating bad outputs.
            row = np.zeros(nv)
            row[BB + q] = sc
            row[0] = -inst.Yb[q].max() * sc
            add(row, "<=")
    if inst.rts == "vrs":
        row = np.zeros(nv)
        row[L:XB] = 1.0
        row[0] = -1.0
        add(row, "=")
    return StandardFormLP(c=c, A=np.array(rows), b=np.array(rhs), senses=tuple(senses))


def super_sbm_score(
    instance: DeaInstance,
    dmu_index: int,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
) -> SuperSolution:
    """Stage-2 ratio score against the frontier that excludes ``dmu_index``."""
    if instance.n < 2:
        raise NoReferenceSetError(
            f"DMU {instance.ids[dmu_index]}: no reference set once the DMU itself is excluded"
        )
    x0, yg0, yb0 = instance.column(dmu_index)
    if not np.any(yg0 > 0) and bad_convention == BAD_AS_INPUT:
        return SuperSolution(feasible=False)
    lp = linearize_super_sbm(instance, dmu_index, bad_convention)
    sol: LpSolution = solve_lp(lp, settings)
    if sol.status is Status.INFEASIBLE:
        return SuperSolution(feasible=False)
    if sol.status is not Status.OPTIMAL:
        raise DeaError(
            f"super-SBM program for DMU {instance.ids[dmu_index]} returned {sol.status.value}"
        )
    t = sol.x[0]
    k = instance.n - 1
    m, s1 = instance.m, instance.s1
    lam = sol.x[1:1 + k] / t
    x_bar = sol.x[1 + k:1 + k + m] / t
    yg_bar = sol.x[1 + k + m:1 + k + m + s1] / t
    yb_bar = sol.x[1 + k + m + s1:] / t
    # Projection bounds hold exactly in theory; clip solver round-off.
    x_bar = np.maximum(x_bar, x0)
    yg_bar = np.minimum(yg_bar, yg0)
    yb_bar = np.maximum(yb_bar, yb0)
    return SuperSolution(
        feasible=True,
        delta=float(sol.value),
        x_bar=x_bar,
        yg_bar=yg_bar,
        yb_bar=yb_bar,
        lam=lam,
        reference_ids=tuple(d for j, d in enumerate(instance.ids) if j != dmu_index),
    )


def _mean_ratio(num: np.ndarray, den: np.ndarray) -> float:
    terms = _ratio_terms(den) * num
    count = np.count_nonzero(den > 0)
    return float(terms.sum() / count) if count else 0.0


def two_stage_se(
    instance: DeaInstance,
    dmu_index: int,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
) -> EfficiencyRecord:
    """Combined super-efficiency score.

    Inefficient DMUs get ``1 - mean(s_minus/x0) - mean(s_bad/yb0)`` from their
    stage-1 slacks; efficient ones get ``1 + mean((x_bar-x0)/x0) + mean((yb_bar-yb0)/yb0)``
    from the stage-2 projection.  Good-output slack does not enter either branch,
    so ``delta`` is reported alongside.  Values below zero are not clamped.
    """
    stage1 = sbm_score(instance, dmu_index, settings)
    x0, yg0, yb0 = instance.column(dmu_index)
    dmu = instance.ids[dmu_index]
    if not stage1.efficient:
        se = 1.0 - _mean_ratio(stage1.s_minus, x0) - _mean_ratio(stage1.s_bad, yb0)
        record = EfficiencyRecord(
            dmu=dmu, year=instance.year, rho=stage1.rho, se=se,
            status=RecordStatus.INEFFICIENT, stage1=stage1,
        )
    elif instance.n < 2:
        record = EfficiencyRecord(
            dmu=dmu, year=instance.year, rho=stage1.rho, se=1.0,
            status=RecordStatus.FRONTIER_INFEASIBLE, stage1=stage1,
        )
    else:
        stage2 = super_sbm_score(instance, dmu_index, bad_convention, settings)
        if not stage2.feasible:
            log.info("super-SBM infeasible for DMU %s (year %s)", dmu, instance.year)
            record = EfficiencyRecord(
                dmu=dmu, year=instance.year, rho=stage1.rho, se=1.0,
                status=RecordStatus.FRONTIER_INFEASIBLE, stage1=stage1, stage2=stage2,
            )
        else:
            ex, _, eb = stage2.super_slacks(x0, yg0, yb0)
            se = 1.0 + _mean_ratio(ex, x0) + _mean_ratio(eb, yb0)
            record = EfficiencyRecord(
                dmu=dmu, year=instance.year, rho=stage1.rho, se=se,
                status=RecordStatus.SUPER_EFFICIENT, delta=stage2.delta,
                stage1=stage1, stage2=stage2,
            )
    record.shares.update(inefficiency_decomposition(record, instance))
    return record


def inefficiency_decomposition(record: EfficiencyRecord, instance: DeaInstance) -> dict[str, float]:
    """Per-variable slack share (slack / observed), keyed ``<variable>_slack``."""
    k = instance.ids.index(record.dmu)
    x0, yg0, yb0 = instance.column(k)
    if record.status is RecordStatus.SUPER_EFFICIENT:
        slacks = record.stage2.super_slacks(x0, yg0, yb0)
    else:
        st = record.stage1
        slacks = (st.s_minus, st.s_good, st.s_bad)
    shares = np.concatenate([np.maximum(s, 0.0) * _ratio_terms(o) for s, o in zip(slacks, (x0, yg0, yb0))])
    return {f"{name}_slack": float(v) for name, v in zip(instance.variable_names, shares)}


def score_all(
    instance: DeaInstance,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
) -> list[EfficiencyRecord]:
    """Two-stage records for every DMU, in instance order."""
    records = []
    failures: dict[str, Exception] = {}
    for j, dmu in enumerate(instance.ids):
        try:
            records.append(two_stage_se(instance, j, bad_convention, settings))
        except Exception as exc:  # noqa: BLE001 - collected and re-raised with ids attached
            failures[dmu] = exc
    if failures:
        raise ScoringError(failures)
    return records
