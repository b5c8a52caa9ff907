"""Malmquist productivity change from super-SBM distances.

For a bank observed in consecutive panel years t1 and t2 four distances are
needed: its score against its own year's frontier in each year, and the
score of each year's observation against the other year's frontier.  Then::

    C  = d(t2 | t2) / d(t1 | t1)
    F  = sqrt( d(t1 | t1) / d(t2 | t1)  *  d(t1 | t2) / d(t2 | t2) )
    MI = C * F

where ``d(f | p)`` is the distance of the year-p point against the year-f
frontier.  A bank is never part of the frontier it is scored against, not
even through its own observation from the other year.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DataError, ModelSpec, Panel, ZeroPolicy, build_instance
from .dea import BAD_AS_INPUT, DeaError, DeaInstance, score_all, sbm_score, super_sbm_score
from .lp import SolverSettings

log = logging.getLogger(__name__)

COMPLETE = "Complete"
PARTIAL = "PartialInfeasible"


class MalmquistError(Exception):
    pass


@dataclass(frozen=True)
class Observation:
    """One DMU's data outside any instance; vectors follow the frontier's variable order."""

    dmu: str
    x: tuple[float, ...]
    yg: tuple[float, ...]
    yb: tuple[float, ...] = ()

    @classmethod
    def from_instance(cls, instance: DeaInstance, j: int) -> "Observation":
        x, yg, yb = instance.column(j)
        return cls(instance.ids[j], tuple(x), tuple(yg), tuple(yb))


@dataclass(frozen=True)
class MalmquistRecord:
    dmu: str
    t1: int
    t2: int
    d11: float
    d12: float | None
    d21: float | None
    d22: float
    catch_up: float
    frontier_shift: float | None
    mi: float | None
    status: str


def cross_period_score(
    frontier: DeaInstance,
    point: Observation,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
) -> float | None:
    """Two-stage ratio distance of ``point`` against ``frontier``.

    The DMU sharing the point's id is removed from the frontier first.  The
    point is then scored with stage-1 SBM (itself included, so the program is
    always feasible) and, when efficient there, with super-SBM against the
    remaining frontier.  Returns ``None`` when the super stage has no feasible
    solution, including the case of an empty remaining frontier.
    """
    dims = (frontier.m, frontier.s1, frontier.s2)
    if (len(point.x), len(point.yg), len(point.yb)) != dims:
        raise MalmquistError(
            f"point {point.dmu} has shape {(len(point.x), len(point.yg), len(point.yb))}, "
            f"frontier expects (inputs, good, bad) = {dims}"
        )
    keep = [j for j, d in enumerate(frontier.ids) if d != point.dmu]
    if not keep:
        return None
    ref = frontier.subset(keep).append(point.dmu, point.x, point.yg, point.yb)
    k = ref.n - 1
    stage1 = sbm_score(ref, k, settings)
    if not stage1.efficient:
        return stage1.rho
    stage2 = super_sbm_score(ref, k, bad_convention, settings)
    return stage2.delta if stage2.feasible else None


def _within_distances(instance: DeaInstance, bad_convention, settings) -> dict[str, float]:
    return {r.dmu: r.ratio_score for r in score_all(instance, bad_convention, settings)}


def _decompose(dmu, t1, t2, d11, d22, d12, d21) -> MalmquistRecord:
    catch = d22 / d11
    if d12 is None or d21 is None:
        return MalmquistRecord(dmu, t1, t2, d11, d12, d21, d22, catch, None, None, PARTIAL)
    shift = math.sqrt((d11 / d21) * (d12 / d22))
    mi = math.sqrt((d12 / d11) * (d22 / d21))
    return MalmquistRecord(dmu, t1, t2, d11, d12, d21, d22, catch, shift, mi, COMPLETE)


class _Context:
    """Caches per-year instances and within-year distances for one panel/spec."""

    def __init__(self, panel, spec, zero_policy, bad_convention, settings, within=None):
        self.panel = panel
        self.spec = spec
        self.zero_policy = zero_policy or ZeroPolicy()
        self.bad_convention = bad_convention
        self.settings = settings
        self._instances: dict[int, DeaInstance] = {}
        self._within: dict[int, dict[str, float]] = dict(within or {})

    def instance(self, year: int) -> DeaInstance:
        if year not in self._instances:
            self._instances[year] = build_instance(self.panel, year, self.spec, self.zero_policy)
        return self._instances[year]

    def within(self, year: int) -> dict[str, float]:
        if year not in self._within:
            self._within[year] = _within_distances(self.instance(year), self.bad_convention, self.settings)
        return self._within[year]

    def pair(self, t1: int, t2: int) -> list[MalmquistRecord]:
        f1, f2 = self.instance(t1), self.instance(t2)
        common = sorted(set(f1.ids) & set(f2.ids))
        if not common:
            raise MalmquistError(f"no common DMUs between {t1} and {t2}")
        w1, w2 = self.within(t1), self.within(t2)
        out = []
        for dmu in common:
            p1 = Observation.from_instance(f1, f1.ids.index(dmu))
            p2 = Observation.from_instance(f2, f2.ids.index(dmu))
            d12 = cross_period_score(f1, p2, self.bad_convention, self.settings)
            d21 = cross_period_score(f2, p1, self.bad_convention, self.settings)
            out.append(_decompose(dmu, t1, t2, w1[dmu], w2[dmu], d12, d21))
        return out


def malmquist_decompose(
    panel: Panel,
    spec: ModelSpec,
    years: tuple[int, int],
    zero_policy: ZeroPolicy | None = None,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
) -> list[MalmquistRecord]:
    """Records for every DMU present (with complete data) in both years."""
    t1, t2 = years
    for t in (t1, t2):
        if t not in panel.years:
            raise MalmquistError(f"year {t} not in panel")
    return _Context(panel, spec, zero_policy, bad_convention, settings).pair(t1, t2)


def malmquist_panel(
    panel: Panel,
    spec: ModelSpec,
    zero_policy: ZeroPolicy | None = None,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
    skipped: list | None = None,
    within: dict[int, dict[str, float]] | None = None,
) -> list[MalmquistRecord]:
    """Records for all consecutive year pairs of the panel.

    Pairs whose instances cannot be built (empty year) or share no DMU are
    skipped; a ``(t1, t2, reason)`` tuple is appended to ``skipped`` for each.
    ``within`` may carry already computed own-period distances by year
    (``{year: {dmu: ratio_score}}``) so a preceding scoring run is not repeated.
    """
    years = panel.years
    if len(years) < 2:
        raise MalmquistError("need at least two years")
    ctx = _Context(panel, spec, zero_policy, bad_convention, settings, within)
    records = []
    for t1, t2 in zip(years, years[1:]):
        try:
            records.extend(ctx.pair(t1, t2))
        except (DataError, DeaError, MalmquistError) as exc:
            log.warning("pair %s-%s skipped: %s", t1, t2, exc)
            if skipped is not None:
                skipped.append((t1, t2, str(exc)))
    return records


def _gmean(values: Sequence[float]) -> float:
    return float(np.exp(np.mean(np.log(values))))


@dataclass(frozen=True)
class PairSummary:
    t1: int
    t2: int
    n_complete: int
    n_excluded: int
    gm_catch_up: float | None
    gm_frontier_shift: float | None
    gm_mi: float | None
    am_frontier_shift: float | None
    am_mi: float | None

    @property
    def missing(self) -> bool:
        return self.n_complete == 0


def summarize_pairs(records: Sequence[MalmquistRecord], pairs: Sequence[tuple[int, int]] | None = None) -> list[PairSummary]:
    """Geometric (and arithmetic) means per year pair over Complete records."""
    if pairs is None:
        pairs = sorted({(r.t1, r.t2) for r in records})
    out = []
    for t1, t2 in pairs:
        rs = [r for r in records if (r.t1, r.t2) == (t1, t2)]
        done = [r for r in rs if r.status == COMPLETE]
        if not done:
            out.append(PairSummary(t1, t2, 0, len(rs), None, None, None, None, None))
            continue
        out.append(
            PairSummary(
                t1, t2, len(done), len(rs) - len(done),
                _gmean([r.catch_up for r in done]),
                _gmean([r.frontier_shift for r in done]),
                _gmean([r.mi for r in done]),
                float(np.mean([r.frontier_shift for r in done])),
                float(np.mean([r.mi for r in done])),
            )
        )
    return out


def frontier_shift_series(
    panel: Panel,
    spec: ModelSpec,
    zero_policy: ZeroPolicy | None = None,
    bad_convention: str = BAD_AS_INPUT,
    settings: SolverSettings | None = None,
) -> list[PairSummary]:
    years = panel.years
    if len(years) < 2:
        raise MalmquistError("need at least two years")
    records = malmquist_panel(panel, spec, zero_policy, bad_convention, settings)
    return summarize_pairs(records, list(zip(years, years[1:])))

