import math

import numpy as np
import pandas as pd
import pytest

from superdea.data import ModelSpec, Panel, build_instance, resolve_spec
from superdea.dea import DeaInstance, score_all
from superdea.malmquist import (
    COMPLETE,
    PARTIAL,
    MalmquistError,
    MalmquistRecord,
    Observation,
    cross_period_score,
    frontier_shift_series,
    malmquist_decompose,
    malmquist_panel,
    summarize_pairs,
)

SPEC = ModelSpec("T", ("x1", "x2"), ("g",), ("b",))


def panel_from(years_data, types=None):
    """``years_data``: {year: {bank: (x1, x2, g, b)}}."""
    rows = []
    for year, banks in years_data.items():
        for bank, (x1, x2, g, b) in banks.items():
            rows.append({"bank": bank, "year": year, "type": (types or {}).get(bank, 1),
                         "x1": x1, "x2": x2, "g": g, "b": b})
    return Panel(pd.DataFrame(rows))


def random_year(rng, banks):
    return {b: tuple(rng.uniform(1, 10, 4)) for b in banks}


@pytest.fixture
def two_year_panel():
    rng = np.random.default_rng(3)
    banks = [f"K{i}" for i in range(6)]
    return panel_from({2010: random_year(rng, banks), 2011: random_year(rng, banks)})


def test_duplicated_period_is_stationary():
    rng = np.random.default_rng(1)
    for _ in range(5):
        data = random_year(rng, [f"K{i}" for i in range(5)])
        recs = malmquist_decompose(panel_from({2010: data, 2011: data}), SPEC, (2010, 2011))
        assert len(recs) == 5
        for r in recs:
            assert r.status == COMPLETE
            assert r.catch_up == pytest.approx(1.0, abs=1e-9)
            assert r.frontier_shift == pytest.approx(1.0, abs=1e-9)
            assert r.mi == pytest.approx(1.0, abs=1e-9)
            assert r.d12 == pytest.approx(r.d11, abs=1e-9)


def test_closure_and_distance_identities(two_year_panel):
    for r in malmquist_decompose(two_year_panel, SPEC, (2010, 2011)):
        assert r.status == COMPLETE
        assert min(r.d11, r.d12, r.d21, r.d22) > 0
        assert r.mi == pytest.approx(r.catch_up * r.frontier_shift, abs=1e-9)
        assert r.catch_up == pytest.approx(r.d22 / r.d11, abs=1e-9)
        assert r.frontier_shift == pytest.approx(math.sqrt(r.d11 / r.d21 * r.d12 / r.d22), abs=1e-9)


def test_time_reversal(two_year_panel):
    fwd = {r.dmu: r for r in malmquist_decompose(two_year_panel, SPEC, (2010, 2011))}
    f = two_year_panel.frame.copy()
    f["year"] = f["year"].map({2010: 2011, 2011: 2010})
    back = {r.dmu: r for r in malmquist_decompose(Panel(f), SPEC, (2010, 2011))}
    for dmu, r in fwd.items():
        s = back[dmu]
        assert s.catch_up == pytest.approx(1 / r.catch_up, rel=1e-6)
        assert s.mi == pytest.approx(1 / r.mi, rel=1e-6)
        # The frontier ratio is inverted too, not preserved.
        assert s.frontier_shift == pytest.approx(1 / r.frontier_shift, rel=1e-6)


def test_unit_invariance(two_year_panel):
    base = malmquist_decompose(two_year_panel, SPEC, (2010, 2011))
    for col in ("x1", "g", "b"):
        for c in (0.01, 100.0):
            f = two_year_panel.frame.copy()
            f[col] = f[col] * c
            other = malmquist_decompose(Panel(f), SPEC, (2010, 2011))
            for a, b in zip(base, other):
                assert (b.catch_up, b.frontier_shift, b.mi) == pytest.approx(
                    (a.catch_up, a.frontier_shift, a.mi), abs=1e-6
                )


def t3_instance():
    return DeaInstance(
        ids=["A", "B", "C"], X=[[2, 4, 4]], Yg=[[2, 3, 2]], Yb=[[1, 2, 2]],
        input_names=["x"], good_names=["g"], bad_names=["b"],
    )


def test_external_point_against_t3():
    point = Observation("P", np.array([4.0]), np.array([2.0]), np.array([2.0]))
    assert cross_period_score(t3_instance(), point) == pytest.approx(0.4, abs=1e-9)


def test_own_period_point_matches_two_stage():
    inst = t3_instance()
    recs = {r.dmu: r for r in score_all(inst)}
    for j, dmu in enumerate(inst.ids):
        d = cross_period_score(inst, Observation.from_instance(inst, j))
        assert d == pytest.approx(recs[dmu].ratio_score, abs=1e-9)


def test_point_shape_mismatch():
    with pytest.raises(MalmquistError):
        cross_period_score(t3_instance(), Observation("P", np.array([1.0, 2.0]), np.array([1.0]), np.array([1.0])))


def test_single_dmu_doubling_good_output():
    p = panel_from({2010: {"K": (2.0, 3.0, 4.0, 1.0)}, 2011: {"K": (2.0, 3.0, 8.0, 1.0)}})
    (r,) = malmquist_decompose(p, SPEC, (2010, 2011))
    assert r.catch_up == pytest.approx(1.0)
    assert r.status == PARTIAL
    assert r.frontier_shift is None and r.mi is None
    assert r.d12 is None and r.d21 is None


def test_no_common_dmus():
    p = panel_from({2010: {"K": (2.0, 3.0, 4.0, 1.0)}, 2011: {"L": (2.0, 3.0, 8.0, 1.0)}})
    with pytest.raises(MalmquistError, match="no common"):
        malmquist_decompose(p, SPEC, (2010, 2011))
    with pytest.raises(MalmquistError):
        malmquist_decompose(p, SPEC, (2010, 2013))


def test_unbalanced_panel_pairs():
    rng = np.random.default_rng(9)
    data = {
        2010: random_year(rng, ["A", "B", "C", "D"]),
        2011: random_year(rng, ["A", "B", "C"]),
        2012: random_year(rng, ["A", "C", "D"]),
    }
    recs = malmquist_panel(panel_from(data), SPEC)
    by_pair = {}
    for r in recs:
        by_pair.setdefault((r.t1, r.t2), set()).add(r.dmu)
    assert by_pair == {(2010, 2011): {"A", "B", "C"}, (2011, 2012): {"A", "C"}}


def test_precomputed_distances_are_used(two_year_panel):
    plain = malmquist_panel(two_year_panel, SPEC)
    within = {
        y: {r.dmu: r.ratio_score for r in score_all(build_instance(two_year_panel, y, SPEC))}
        for y in two_year_panel.years
    }
    seeded = malmquist_panel(two_year_panel, SPEC, within=within)
    assert [(r.dmu, r.mi) for r in plain] == [(r.dmu, r.mi) for r in seeded]


def test_series_stationary_and_identical_years():
    rng = np.random.default_rng(4)
    data = random_year(rng, ["A", "B", "C", "D"])
    two = frontier_shift_series(panel_from({2010: data, 2011: data}), SPEC)
    assert [s.gm_frontier_shift for s in two] == pytest.approx([1.0])
    three = frontier_shift_series(panel_from({2010: data, 2011: data, 2012: data}), SPEC)
    assert [s.gm_frontier_shift for s in three] == pytest.approx([1.0, 1.0])
    assert [s.gm_mi for s in three] == pytest.approx([1.0, 1.0])


def _rec(f, status=COMPLETE, t=(2010, 2011)):
    return MalmquistRecord("K", t[0], t[1], 1.0, f, 1.0, 1.0, 1.0, f if status == COMPLETE else None,
                           f if status == COMPLETE else None, status)


def test_geometric_mean_and_missing_pairs():
    (s,) = summarize_pairs([_rec(2.0), _rec(0.5)])
    assert s.gm_frontier_shift == pytest.approx(1.0)
    assert s.am_frontier_shift == pytest.approx(1.25)
    assert s.n_complete == 2 and s.n_excluded == 0
    (m,) = summarize_pairs([_rec(2.0, PARTIAL)], [(2010, 2011)])
    assert m.missing and m.gm_frontier_shift is None and m.n_excluded == 1


def test_series_needs_two_years():
    p = panel_from({2010: {"K": (2.0, 3.0, 4.0, 1.0)}})
    with pytest.raises(MalmquistError):
        frontier_shift_series(p, SPEC)


def test_builtin_spec_on_synthetic_panel_closes():
    from superdea.synthetic import make_panel

    panel = make_panel(seed=2)
    years = panel.years[-3:]
    sub = Panel(panel.frame[panel.frame["year"].isin(years)])
    recs = malmquist_panel(sub, resolve_spec("PA"))
    assert recs
    for r in recs:
        if r.status == COMPLETE:
            assert r.mi == pytest.approx(r.catch_up * r.frontier_shift, abs=1e-9)
