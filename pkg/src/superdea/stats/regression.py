"""Differenced panel regressions: pooled OLS, within (FE), random-effects GLS, Hausman."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg
from scipy import stats as sps

from ..data import BANK, TYPE, YEAR, Panel
from .compare import TestResult

log = logging.getLogger(__name__)

CONST = "_cons"
SE_MODES = ("conventional", "hc1", "cluster")
ESTIMATORS = ("pooled", "fe", "re")
RANK_TOL = 1e-10


class RegressionError(Exception):
    pass


class RankDeficiencyError(RegressionError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"regressor matrix is rank deficient; collinear columns: {self.columns}")


@dataclass(frozen=True, eq=False)
class RegressionResult:
    names: tuple[str, ...]
    params: np.ndarray
    cov: np.ndarray
    estimator: str
    se_mode: str
    nobs: int
    df_resid: int
    resid: np.ndarray = field(repr=False)
    r2: float = math.nan
    r2_within: float = math.nan
    r2_overall: float = math.nan
    n_entities: int | None = None
    sigma2_e: float | None = None
    sigma2_u: float | None = None
    theta: np.ndarray | None = field(default=None, repr=False)
    notes: tuple[str, ...] = ()

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        return self.params / self.std_errors

    @property
    def pvalues(self) -> np.ndarray:
        return 2.0 * sps.t.sf(np.abs(self.tvalues), max(self.df_resid, 1))

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"coef": self.params, "se": self.std_errors, "t": self.tvalues, "p": self.pvalues},
            index=list(self.names),
        )


def _names(X, names):
    if names is None:
        names = [f"x{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise RegressionError(f"{len(names)} names for {X.shape[1]} columns")
    return tuple(names)


def _collinear_columns(X, names) -> list[str]:
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    null = vt[s <= RANK_TOL * s[0]] if s.size and s[0] > 0 else vt
    involved = np.any(np.abs(null) > 1e-8, axis=0)
    return [n for n, hit in zip(names, involved) if hit]


def _ols_core(y, X, names, se_mode, clusters=None, df_absorbed=0):
    n, k = X.shape
    if se_mode not in SE_MODES:
        raise RegressionError(f"se_mode must be one of {SE_MODES}")
    if n <= k + df_absorbed:
        raise RegressionError(f"{n} observations are too few for {k} regressors")
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0 or np.any(diag < RANK_TOL * diag[0]):
        raise RankDeficiencyError(_collinear_columns(X, names) or list(names))
    beta_p = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(k)
    beta[piv] = beta_p
    Rinv = linalg.solve_triangular(R, np.eye(k))
    bread_p = Rinv @ Rinv.T
    bread = np.empty((k, k))
    bread[np.ix_(piv, piv)] = bread_p
    resid = y - X @ beta
    df_resid = n - k - df_absorbed
    if se_mode == "conventional":
        cov = bread * float(resid @ resid) / df_resid
    elif se_mode == "hc1":
        meat = (X * resid[:, None] ** 2).T @ X
        cov = bread @ meat @ bread * n / df_resid
    else:
        if clusters is None:
            raise RegressionError("cluster standard errors need cluster ids")
        codes, uniq = pd.factorize(pd.Series(clusters))
        g = len(uniq)
        if g < 2:
            raise RegressionError("cluster standard errors need at least two clusters")
        scores = np.zeros((g, k))
        np.add.at(scores, codes, X * resid[:, None])
        meat = scores.T @ scores
        cov = bread @ meat @ bread * (g / (g - 1)) * ((n - 1) / (n - k))
    cov = (cov + cov.T) / 2.0
    return beta, cov, resid, df_resid


def _r2(y, fitted, centered=True):
    dev = y - y.mean() if centered else y
    tss = float(dev @ dev)
    if tss == 0:
        return math.nan
    resid = y - fitted
    return 1.0 - float(resid @ resid) / tss


def _corr2(a, b):
    if np.std(a) == 0 or np.std(b) == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1] ** 2)


def pooled_ols(y, X, names=None, se_mode: str = "conventional", entities=None) -> RegressionResult:
    """OLS by pivoted QR.  ``entities`` doubles as the cluster variable for ``se_mode="cluster"``."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = _names(X, names)
    if len(y) != X.shape[0]:
        raise RegressionError("y and X have different row counts")
    beta, cov, resid, df = _ols_core(y, X, names, se_mode, entities)
    fitted = X @ beta
    return RegressionResult(
        names=names, params=beta, cov=cov, estimator="pooled", se_mode=se_mode,
        nobs=len(y), df_resid=df, resid=resid, r2=_r2(y, fitted),
        r2_overall=_r2(y, fitted),
        n_entities=None if entities is None else int(pd.Series(entities).nunique()),
    )


def _group_means(values: np.ndarray, codes: np.ndarray, g: int):
    counts = np.bincount(codes, minlength=g).astype(float)
    sums = np.zeros((g,) + values.shape[1:])
    np.add.at(sums, codes, values)
    return sums / counts.reshape((g,) + (1,) * (values.ndim - 1)), counts


def _const_columns(X) -> np.ndarray:
    return np.all(X == 1.0, axis=0)


def fixed_effects(y, X, entities, names=None, se_mode: str = "conventional") -> RegressionResult:
    """Within estimator.

    With an all-ones column present the grand means are added back after
    entity demeaning, so the constant is reported (as the mean of the
    entity effects) and the slopes equal the pure within estimates.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = _names(X, names)
    codes, uniq = pd.factorize(pd.Series(entities))
    g = len(uniq)
    if np.bincount(codes).max() < 2:
        raise RegressionError("fixed effects need at least one entity with two observations")
    const = _const_columns(X)
    ybar, _ = _group_means(y, codes, g)
    xbar, _ = _group_means(X, codes, g)
    y_w = y - ybar[codes]
    X_w = X - xbar[codes]
    flat = [n for n, c, col in zip(names, const, X_w.T) if not c and np.all(np.abs(col) <= 1e-12 * max(1.0, np.abs(X).max()))]
    if flat:
        raise RankDeficiencyError(flat)
    if const.any():
        y_t = y_w + y.mean()
        X_t = X_w + X.mean(axis=0)
        X_t[:, const] = 1.0
        absorbed = g - 1
    else:
        y_t, X_t, absorbed = y_w, X_w, g
    beta, cov, resid, df = _ols_core(y_t, X_t, names, se_mode, codes, df_absorbed=absorbed)
    slope = ~const
    within_fit = X_w[:, slope] @ beta[slope]
    return RegressionResult(
        names=names, params=beta, cov=cov, estimator="fe", se_mode=se_mode,
        nobs=len(y), df_resid=df, resid=resid,
        r2=_r2(y_w, within_fit, centered=False),
        r2_within=_r2(y_w, within_fit, centered=False),
        r2_overall=_corr2(y, X[:, slope] @ beta[slope]) if slope.any() else math.nan,
        n_entities=g,
    )


def random_effects_gls(y, X, entities, names=None, se_mode: str = "conventional") -> RegressionResult:
    """Feasible GLS with Swamy-Arora variance components for unbalanced panels.

    The idiosyncratic variance comes from the within regression, the entity
    variance from the between regression minus ``sigma2_e / T_harmonic``.
    A negative entity-variance estimate is set to zero (with a warning), which
    reduces the estimator to pooled OLS; so is the variance when there are no
    more entities than regressors and the between regression is exact.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = _names(X, names)
    codes, uniq = pd.factorize(pd.Series(entities))
    g = len(uniq)
    T = np.bincount(codes, minlength=g).astype(float)
    const = _const_columns(X)
    notes = []

    if T.max() < 2:
        notes.append("every entity has one observation; random effects reduce to pooled OLS")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
        theta_i = np.zeros(g)
        sigma2_e = sigma2_u = math.nan
    else:
        ybar, _ = _group_means(y, codes, g)
        xbar, _ = _group_means(X, codes, g)
        slope = ~const
        y_w = y - ybar[codes]
        X_w = (X - xbar[codes])[:, slope]
        k_slopes = int(slope.sum())
        df_w = len(y) - g - k_slopes
        if df_w <= 0:
            raise RegressionError("not enough within-entity observations for variance components")
        if k_slopes:
            b_w = np.linalg.lstsq(X_w, y_w, rcond=None)[0]
            e_w = y_w - X_w @ b_w
        else:
            e_w = y_w
        sigma2_e = float(e_w @ e_w) / df_w
        k = X.shape[1]
        if g <= k:
            notes.append(f"{g} entities cannot identify the entity variance with {k} regressors; set to 0")
            warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
            sigma2_u = 0.0
        else:
            b_b = np.linalg.lstsq(xbar, ybar, rcond=None)[0]
            u = ybar - xbar @ b_b
            t_harm = g / float(np.sum(1.0 / T))
            sigma2_u = float(u @ u) / (g - k) - sigma2_e / t_harm
        if sigma2_u < 0:
            notes.append(f"negative entity variance estimate ({sigma2_u:.3g}) truncated at 0")
            warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
            sigma2_u = 0.0
        theta_i = 1.0 - np.sqrt(sigma2_e / (T * sigma2_u + sigma2_e))

    ybar, _ = _group_means(y, codes, g)
    xbar, _ = _group_means(X, codes, g)
    th = theta_i[codes]
    y_q = y - th * ybar[codes]
    X_q = X - th[:, None] * xbar[codes]
    beta, cov, resid, df = _ols_core(y_q, X_q, names, se_mode, codes)
    slope = ~const
    fit_overall = X @ beta
    y_w = y - ybar[codes]
    within_fit = (X - xbar[codes])[:, slope] @ beta[slope]
    return RegressionResult(
        names=names, params=beta, cov=cov, estimator="re", se_mode=se_mode,
        nobs=len(y), df_resid=df, resid=resid,
        r2=_r2(y_q, X_q @ beta),
        r2_within=_corr2(y_w, within_fit) if slope.any() else math.nan,
        r2_overall=_corr2(y, fit_overall) if slope.any() else math.nan,
        n_entities=g, sigma2_e=sigma2_e, sigma2_u=sigma2_u, theta=theta_i,
        notes=tuple(notes),
    )


def _resid_var(res: RegressionResult) -> float:
    return float(res.resid @ res.resid) / max(res.df_resid, 1)


def hausman_test(fe: RegressionResult, re: RegressionResult, common_scale: bool = True) -> TestResult:
    """Chi-square contrast of FE and RE slopes (the constant is not compared).

    With conventional covariances and ``common_scale`` both are rescaled to the
    RE residual variance, which keeps ``V_FE - V_RE`` positive semidefinite;
    separately scaled covariances often are not at this sample size.
    """
    fe_names = [n for n in fe.names if n != CONST]
    re_names = [n for n in re.names if n != CONST]
    if sorted(fe_names) != sorted(re_names):
        raise RegressionError(f"regressor sets differ: FE {fe_names} vs RE {re_names}")
    fi = [fe.names.index(n) for n in fe_names]
    ri = [re.names.index(n) for n in fe_names]
    d = fe.params[fi] - re.params[ri]
    V_fe = fe.cov[np.ix_(fi, fi)]
    if common_scale and fe.se_mode == re.se_mode == "conventional":
        V_fe = V_fe * (_resid_var(re) / _resid_var(fe))
    V = V_fe - re.cov[np.ix_(ri, ri)]
    warning = None
    try:
        L = np.linalg.cholesky(V)
        z = linalg.solve_triangular(L, d, lower=True)
        stat = float(z @ z)
    except np.linalg.LinAlgError:
        warning = "V_FE - V_RE is not positive definite; generalized inverse used"
        stat = float(d @ np.linalg.pinv(V) @ d)
    df = len(fe_names)
    p = float(sps.chi2.sf(max(stat, 0.0), df)) if df else 1.0
    return TestResult(
        statistic=stat, p_value=p, alternative="two-sided",
        null="difference in coefficients not systematic", alt="FE and RE differ",
        n_a=fe.nobs, n_b=re.nobs, df=float(df), warning=warning,
    )


def difference_panel(panel: Panel, variables, prefix: str = "d") -> Panel:
    """Per-bank first differences against the previous observed year.

    The first observation of each bank is dropped.  ``gap`` is 1 where the
    previous observed year is not ``year - 1``.
    """
    df = panel.frame
    missing = [v for v in variables if v not in df.columns]
    if missing:
        raise KeyError(f"unknown variable(s) {missing}")
    grouped = df.groupby(BANK, sort=False)
    out = df[[BANK, YEAR, TYPE]].copy()
    for v in variables:
        out[prefix + v] = grouped[v].diff()
    prev_year = grouped[YEAR].shift()
    out["gap"] = (df[YEAR] - prev_year != 1).astype(float)
    out = out[prev_year.notna()]
    return Panel(out.reset_index(drop=True))


def _fit(estimator, y, X, names, entities, se_mode):
    if estimator == "pooled":
        return pooled_ols(y, X, names, se_mode, entities)
    if estimator == "fe":
        return fixed_effects(y, X, entities, names, se_mode)
    if estimator == "re":
        return random_effects_gls(y, X, entities, names, se_mode)
    raise RegressionError(f"estimator must be one of {ESTIMATORS}")


def catch_up_design(panel: Panel, regressors, catch_col: str = "catch"):
    """Rows and design for ``catch - 1`` on differenced bank-specific regressors.

    Returns ``(frame, y, X, names, notes)``; regressors whose differences are
    all zero are dropped with a note.
    """
    if catch_col not in panel.frame.columns:
        raise RegressionError(f"panel has no {catch_col!r} column; run the Malmquist step first")
    diffs = difference_panel(panel, regressors).frame
    diff_cols = ["d" + r for r in regressors]
    catch = panel.frame[[BANK, YEAR, catch_col]]
    rows = diffs.merge(catch, on=[BANK, YEAR], how="inner")
    rows = rows.dropna(subset=diff_cols + [catch_col]).reset_index(drop=True)
    notes = []
    keep = []
    for c in diff_cols:
        if np.all(rows[c].to_numpy() == 0):
            notes.append(f"{c} has no variation after differencing; dropped")
            log.warning(notes[-1])
        else:
            keep.append(c)
    y = rows[catch_col].to_numpy(dtype=float) - 1.0
    X = np.column_stack([rows[keep].to_numpy(dtype=float), np.ones(len(rows))])
    return rows, y, X, keep + [CONST], notes


def catch_up_regression(
    panel: Panel, regressors, estimator: str = "re", se_mode: str = "hc1", catch_col: str = "catch"
) -> RegressionResult:
    rows, y, X, names, notes = catch_up_design(panel, regressors, catch_col)
    if len(names) == 1:
        warnings.warn("all regressors dropped; fitting an intercept-only model", RuntimeWarning, stacklevel=2)
    if len(rows) == 0:
        raise RegressionError("no rows with both a catch-up value and differenced regressors")
    res = _fit(estimator, y, X, names, rows[BANK].to_numpy(), se_mode)
    if notes:
        res = RegressionResult(**{**res.__dict__, "notes": res.notes + tuple(notes)})
    return res
