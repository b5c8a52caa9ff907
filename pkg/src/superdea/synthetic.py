"""Synthetic bank panels shaped like the study's sample.

The real annual-report data is not distributed, so fixtures, demos and
timing checks use these generators: 42 banks (6 state-owned, 9 joint-stock,
27 city/rural), 2006-2021, each bank observed contiguously from its listing
year, 353 bank-years in total.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .data import Panel

FIRST_YEAR, LAST_YEAR = 2006, 2021
N_OBS = 353
TYPE_COUNTS = {1: 6, 2: 9, 3: 27}
MACRO_VARIABLES = ("spread", "rf", "cpi", "m2r", "lpr", "rgdp", "shiborv", "aloancon")


def panel_layout(n_obs: int = N_OBS) -> list[tuple[str, int, list[int]]]:
    """``(bank, type, years)`` triples; spans are at least two years so differencing drops one row per bank."""
    n_banks = sum(TYPE_COUNTS.values())
    n_years = LAST_YEAR - FIRST_YEAR + 1
    spans = np.linspace(n_years, 2, n_banks).round().astype(int)
    i = 0
    while spans.sum() > n_obs:
        j = n_banks - 1 - (i % n_banks)
        if spans[j] > 2:
            spans[j] -= 1
        i += 1
    i = 0
    while spans.sum() < n_obs:
        j = i % n_banks
        if spans[j] < n_years:
            spans[j] += 1
        i += 1
    # Interleave types so every type gets long and short spans.
    types = []
    pools = {t: c for t, c in TYPE_COUNTS.items()}
    while len(types) < n_banks:
        for t in sorted(pools):
            if pools[t]:
                types.append(t)
                pools[t] -= 1
    layout = []
    for k, (t, span) in enumerate(zip(types, spans)):
        years = list(range(LAST_YEAR - span + 1, LAST_YEAR + 1))
        layout.append((f"B{k + 1:02d}", t, years))
    return layout


def make_panel(seed: int = 0, n_obs: int = N_OBS) -> Panel:
    """Bank panel with the DEA variables and the bank-specific regressors in levels."""
    rng = np.random.default_rng(seed)
    size_mu = {1: 10.5, 2: 9.2, 3: 7.5}
    rows = []
    for bank, btype, years in panel_layout(n_obs):
        size = np.exp(rng.normal(size_mu[btype], 0.5))
        skill = rng.normal(0.0, 0.15)
        ratios = {
            "alr": rng.uniform(0.90, 0.94),
            "car": rng.uniform(0.11, 0.15),
            "loantosave": rng.uniform(0.6, 0.8),
            "tencient": rng.uniform(0.1, 0.5),
            "ownhhi": rng.uniform(0.05, 0.4),
            "otheri": rng.uniform(0.1, 0.3),
            "roe": rng.uniform(0.1, 0.2),
            "fown": rng.uniform(0.0, 0.2),
        }
        for year in years:
            growth = 1.12 ** (year - FIRST_YEAR)
            asset = size * growth * np.exp(rng.normal(0, 0.05))
            eff = np.exp(skill + rng.normal(0, 0.1))
            for key, step in (("alr", 0.005), ("car", 0.004), ("loantosave", 0.03), ("tencient", 0.04),
                              ("ownhhi", 0.02), ("otheri", 0.03), ("roe", 0.02), ("fown", 0.01)):
                ratios[key] = max(ratios[key] + rng.normal(0, step), 1e-3)
            save = asset * rng.uniform(0.6, 0.8)
            rows.append({
                "bank": bank,
                "year": year,
                "type": btype,
                "asset": asset,
                "coreasset": asset * rng.uniform(0.05, 0.09),
                "fixedasset": asset * rng.uniform(0.004, 0.01),
                "ie": asset * rng.uniform(0.015, 0.025) / eff,
                "oe": asset * rng.uniform(0.01, 0.02) / eff,
                "netprofit": asset * rng.uniform(0.005, 0.013) * eff,
                "npl": asset * rng.uniform(0.005, 0.02) / eff,
                "save": save,
                "loan": save * ratios["loantosave"],
                **ratios,
            })
    return Panel(pd.DataFrame(rows))


def make_macro(seed: int = 0) -> pd.DataFrame:
    """Yearly macro series (one row per year) with the study's variable names."""
    rng = np.random.default_rng(seed + 1)
    years = np.arange(FIRST_YEAR, LAST_YEAR + 1)
    n = years.size
    frame = pd.DataFrame({
        "year": years,
        "spread": np.clip(0.021 + rng.normal(0, 0.009, n), 0.005, None),
        "rf": 0.032 + rng.normal(0, 0.007, n),
        "cpi": 102.5 + rng.normal(0, 1.7, n),
        "m2r": np.clip(0.138 + rng.normal(0, 0.05, n), 0.05, None),
        "lpr": 0.053 + rng.normal(0, 0.01, n),
        "rgdp": np.clip(0.083 + rng.normal(0, 0.028, n), 0.02, None),
        "shiborv": np.clip(0.45 + rng.normal(0, 0.24, n), 0.1, None),
        "aloancon": 0.053 + rng.normal(0, 0.008, n),
    })
    return frame
