"""Statistical analysis suite over assembled trait profiles.

Conventions throughout: missing values are NaN; correlation uses pairwise
deletion per cell while group tests and regression use listwise deletion;
standard deviations use the n-1 denominator; p-values come from the local
distribution functions rather than a statistics library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .distributions import chi2_sf, f_sf, t_sf_two_tailed
from .errors import ArgumentError, StatsError

# two-sided 95% normal quantile used for Fisher-z confidence intervals
Z_95 = 1.959964
BONFERRONI_ALPHA = 0.05 / 45  # 45 pairwise trait combinations


def _clean(values: Sequence) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr[~np.isnan(arr)]


@dataclass(frozen=True)
class Descriptives:
    n: int
    mean: float
    sd: float
    skewness: Optional[float]


def describe(column: Sequence) -> Descriptives:
    """n, mean, sample sd, and moment skewness; skewness is None when undefined."""
    arr = _clean(column)
    if arr.size == 0:
        raise StatsError("no non-missing values", code="E_EMPTY")
    if arr.size < 2:
        raise StatsError("need >= 2 values for sd", code="E_EMPTY")
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    centered = arr - mean
    m2 = float(np.mean(centered ** 2))
    if m2 == 0.0:
        skewness = None
    else:
        skewness = float(np.mean(centered ** 3) / m2 ** 1.5)
    return Descriptives(n=int(arr.size), mean=mean, sd=sd, skewness=skewness)


@dataclass(frozen=True)
class CorrelationCell:
    r: float
    ci_low: float
    ci_high: float
    p: float
    n: int
    significant: bool


def fisher_ci(r: float, n: int, z: float = Z_95) -> tuple[float, float]:
    """95% confidence interval for a correlation via the z-transformation."""
    if n < 4:
        raise StatsError("Fisher CI needs n >= 4", code="E_EMPTY")
    if abs(r) >= 1.0:
        return (r, r)
    zr = math.atanh(r)
    se = 1.0 / math.sqrt(n - 3)
    return (math.tanh(zr - z * se), math.tanh(zr + z * se))


def correlation_p(r: float, n: int) -> float:
    """Two-tailed p for a Pearson correlation via the t transform."""
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return t_sf_two_tailed(t, n - 2)


def correlation_matrix(matrix: np.ndarray, columns: Sequence[str],
                       alpha: float = BONFERRONI_ALPHA) -> dict[tuple[str, str], Optional[CorrelationCell]]:
    """All pairwise correlations with Fisher CIs and a Bonferroni flag.

    Cells with fewer than 3 complete pairs are None. Diagonal entries are
    exact r=1 cells. Deletion is pairwise per cell.
    """
    data = np.asarray(matrix, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ArgumentError("matrix shape does not match column names")
    out: dict[tuple[str, str], Optional[CorrelationCell]] = {}
    for i, a in enumerate(columns):
        out[(a, a)] = CorrelationCell(r=1.0, ci_low=1.0, ci_high=1.0, p=0.0,
                                      n=int(np.sum(~np.isnan(data[:, i]))), significant=True)
        for j in range(i + 1, len(columns)):
            b = columns[j]
            mask = ~np.isnan(data[:, i]) & ~np.isnan(data[:, j])
            n = int(mask.sum())
            if n < 3:
                out[(a, b)] = out[(b, a)] = None
                continue
            x = data[mask, i]
            y = data[mask, j]
            sx = x.std(ddof=1)
            sy = y.std(ddof=1)
            if sx == 0.0 or sy == 0.0:
                out[(a, b)] = out[(b, a)] = None
                continue
            r = float(np.corrcoef(x, y)[0, 1])
            r = max(-1.0, min(1.0, r))
            if n >= 4:
                ci_low, ci_high = fisher_ci(r, n)
            else:
                ci_low, ci_high = (float("nan"), float("nan"))
            p = correlation_p(r, n)
            cell = CorrelationCell(r=r, ci_low=ci_low, ci_high=ci_high, p=p, n=n,
                                   significant=p < alpha)
            out[(a, b)] = out[(b, a)] = cell
    return out


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch_t(a: Sequence, b: Sequence) -> WelchResult:
    """Welch's unequal-variance t-test with Welch-Satterthwaite df."""
    xa, xb = _clean(a), _clean(b)
    if xa.size < 2 or xb.size < 2:
        raise ArgumentError("each group needs n >= 2")
    va = float(xa.var(ddof=1))
    vb = float(xb.var(ddof=1))
    mean_diff = float(xa.mean() - xb.mean())
    if va == 0.0 and vb == 0.0:
        if mean_diff == 0.0:
            # identical constant groups: no evidence of difference
            return WelchResult(t=0.0, df=float(xa.size + xb.size - 2), p=1.0)
        raise StatsError("zero variance in both groups with unequal means",
                         code="E_DEGENERATE")
    sa2 = va / xa.size
    sb2 = vb / xb.size
    se = math.sqrt(sa2 + sb2)
    t = mean_diff / se
    df = (sa2 + sb2) ** 2 / (
        sa2 ** 2 / (xa.size - 1) + sb2 ** 2 / (xb.size - 1)
    )
    return WelchResult(t=t, df=df, p=t_sf_two_tailed(t, df))


def cohens_d(a: Sequence, b: Sequence) -> float:
    """Standardized mean difference with the pooled n-1 variance."""
    xa, xb = _clean(a), _clean(b)
    if xa.size < 2 or xb.size < 2:
        raise ArgumentError("each group needs n >= 2")
    na, nb = xa.size, xb.size
    pooled_var = (
        (na - 1) * float(xa.var(ddof=1)) + (nb - 1) * float(xb.var(ddof=1))
    ) / (na + nb - 2)
    pooled_sd = math.sqrt(pooled_var)
    if pooled_sd == 0.0:
        raise StatsError("pooled standard deviation is zero", code="E_DEGENERATE")
    return (float(xa.mean()) - float(xb.mean())) / pooled_sd


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p: float


def one_way_anova(groups: Sequence[Sequence]) -> AnovaResult:
    arrays = [_clean(g) for g in groups]
    if len(arrays) < 2:
        raise ArgumentError("need at least 2 groups")
    if any(a.size < 2 for a in arrays):
        raise ArgumentError("each group needs n >= 2")
    all_values = np.concatenate(arrays)
    grand = all_values.mean()
    ss_between = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ss_within = sum(float(((a - a.mean()) ** 2).sum()) for a in arrays)
    df_between = len(arrays) - 1
    df_within = all_values.size - len(arrays)
    if ss_within == 0.0 and ss_between == 0.0:
        raise StatsError("all values identical", code="E_DEGENERATE")
    if ss_within == 0.0:
        return AnovaResult(f=math.inf, df_between=df_between, df_within=df_within, p=0.0)
    f = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(f=float(f), df_between=df_between, df_within=df_within,
                       p=f_sf(f, df_between, df_within))


def _midranks(values: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Average ranks (1-based) with tie group sizes."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=float)
    tie_sizes: list[int] = []
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg_rank = (i + j) / 2.0 + 1.0
        ranks[order[i:j + 1]] = avg_rank
        if j > i:
            tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, tie_sizes


@dataclass(frozen=True)
class KruskalResult:
    h: float
    df: int
    p: float


def kruskal_wallis(groups: Sequence[Sequence]) -> KruskalResult:
    """Rank-based H with midrank tie correction; p via chi-square with k-1 df."""
    arrays = [_clean(g) for g in groups]
    if len(arrays) < 2:
        raise ArgumentError("need at least 2 groups")
    if any(a.size == 0 for a in arrays):
        raise ArgumentError("groups must be non-empty")
    pooled = np.concatenate(arrays)
    n = pooled.size
    if n < 3:
        raise ArgumentError("need total n >= 3")
    if np.all(pooled == pooled[0]):
        raise StatsError("all values identical", code="E_DEGENERATE")
    ranks, tie_sizes = _midranks(pooled)
    h = 0.0
    offset = 0
    for a in arrays:
        r_sum = float(ranks[offset:offset + a.size].sum())
        h += r_sum * r_sum / a.size
        offset += a.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    correction = 1.0 - sum(t ** 3 - t for t in tie_sizes) / (n ** 3 - n)
    if correction == 0.0:
        raise StatsError("all values identical", code="E_DEGENERATE")
    h /= correction
    df = len(arrays) - 1
    return KruskalResult(h=float(h), df=df, p=chi2_sf(h, df))


@dataclass(frozen=True)
class RegressionFit:
    coefficients: np.ndarray  # intercept first
    r_squared: float
    adj_r_squared: float
    mae: float
    rmse: float
    vif: np.ndarray  # one per predictor, intercept excluded
    column_names: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.coefficients[0] + X @ self.coefficients[1:]


_RANK_TOL = 1e-8


def _r_squared_of(design: np.ndarray, y: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_res = float(resid @ resid)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        return 0.0
    return 1.0 - ss_res / ss_tot


def ols_fit(X, y, column_names: Optional[Sequence[str]] = None) -> RegressionFit:
    """Least-squares fit with intercept; reports fit metrics and per-predictor VIF."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if column_names is None:
        column_names = tuple(f"x{j + 1}" for j in range(p))
    else:
        column_names = tuple(column_names)
        if len(column_names) != p:
            raise ArgumentError("column_names length does not match predictors")
    if y.shape != (n,):
        raise ArgumentError("y length does not match X rows")
    if np.isnan(X).any() or np.isnan(y).any():
        raise ArgumentError("ols_fit requires complete data; drop missing rows first")
    if n <= p + 1:
        raise ArgumentError(f"need n > p+1 (n={n}, p={p})")

    design = np.column_stack([np.ones(n), X])
    singular_values = np.linalg.svd(design, compute_uv=False)
    rank = int(np.sum(singular_values > _RANK_TOL * singular_values[0]))
    if rank < p + 1:
        dependent = [
            column_names[j] for j in range(p)
            if _r_squared_of(np.column_stack([np.ones(n), np.delete(X, j, axis=1)]),
                             X[:, j]) > 1.0 - 1e-9
        ]
        raise StatsError(
            "design matrix is rank deficient; dependent column(s): "
            + (", ".join(dependent) if dependent else "<intercept>"),
            code="E_SINGULAR",
            columns=dependent,
        )

    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    resid = y - fitted
    ss_res = float(resid @ resid)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    adj = 1.0 - (1.0 - r_squared) * (n - 1) / (n - p - 1)
    vif = np.empty(p)
    for j in range(p):
        if p == 1:
            vif[j] = 1.0
            continue
        others = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        r2j = _r_squared_of(others, X[:, j])
        vif[j] = math.inf if r2j >= 1.0 else 1.0 / (1.0 - r2j)
    return RegressionFit(
        coefficients=coef,
        r_squared=float(r_squared),
        adj_r_squared=float(adj),
        mae=float(np.abs(resid).mean()),
        rmse=float(np.sqrt(ss_res / n)),
        vif=vif,
        column_names=column_names,
    )


@dataclass(frozen=True)
class CvResult:
    seed: int
    mean_r_squared: float
    mean_rmse: float


def _stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row, stratified on quintile bins of y."""
    edges = np.quantile(y, [0.2, 0.4, 0.6, 0.8])
    bins = np.searchsorted(edges, y, side="right")
    fold_of = np.empty(y.size, dtype=int)
    for b_index, b in enumerate(np.unique(bins)):
        rows = np.flatnonzero(bins == b)
        rng.shuffle(rows)
        # rotate the starting fold per bin so tiny bins spread across folds
        for i, row in enumerate(rows):
            fold_of[row] = (i + b_index) % folds
    return fold_of


def kfold_cv(X, y, folds: int = 5, seeds: Sequence[int] = (0, 1, 2, 3, 4)) -> list[CvResult]:
    """Stratified k-fold cross-validation of the OLS model, one result per seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if folds < 2:
        raise ArgumentError("folds must be >= 2")
    if folds > n:
        raise ArgumentError(f"folds ({folds}) exceeds n ({n})")
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        fold_of = _stratified_folds(y, folds, rng)
        r2s, rmses = [], []
        for fold in range(folds):
            test = fold_of == fold
            train = ~test
            if not test.any() or not train.any():
                continue
            fit = ols_fit(X[train], y[train])
            pred = fit.predict(X[test])
            resid = y[test] - pred
            rmses.append(float(np.sqrt(np.mean(resid ** 2))))
            centered = y[test] - y[test].mean()
            ss_tot = float(centered @ centered)
            if ss_tot == 0.0:
                r2s.append(1.0 if np.allclose(resid, 0.0) else 0.0)
            else:
                r2s.append(1.0 - float(resid @ resid) / ss_tot)
        results.append(CvResult(
            seed=seed,
            mean_r_squared=float(np.mean(r2s)),
            mean_rmse=float(np.mean(rmses)),
        ))
    return results


def bootstrap_ci(values: Sequence, statistic: Callable[[np.ndarray], float],
                 iterations: int = 1000, level: float = 0.95,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval; deterministic for a fixed seed."""
    arr = _clean(values)
    if arr.size == 0:
        raise StatsError("no values to resample", code="E_EMPTY")
    if not 0.0 < level < 1.0:
        raise ArgumentError("level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    stats = np.empty(iterations)
    for i in range(iterations):
        sample = arr[rng.integers(0, arr.size, size=arr.size)]
        stats[i] = statistic(sample)
    alpha = (1.0 - level) / 2.0
    return (float(np.quantile(stats, alpha)), float(np.quantile(stats, 1.0 - alpha)))
