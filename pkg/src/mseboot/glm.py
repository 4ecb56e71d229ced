"""Poisson loglinear fitting, BIC, and model selection criteria.

Fitting uses iteratively reweighted least squares with a log link after
the sparsity reduction: parameters whose marginal count is zero are
recorded as -inf and the cells forced to zero by them are dropped before
the numerical fit.  Estimates therefore live in [-inf, inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import linalg, special, stats

from .core import CountTable, ModelSpec, canonical_key, marginal_count

STATUS_CONVERGED = "converged"
STATUS_NOT_CONVERGED = "not_converged"
STATUS_FR_FAILED = "fr_failed"


class NoModelFoundError(Exception):
    """Every candidate model was assigned an infinite BIC."""


@dataclass(frozen=True)
class FitSettings:
    max_iter: int = 100
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    alpha_floor: float = -30.0
    # BIC sample size: "case" uses the number of observed cases, "capture"
    # the number of observable cells 2^t - 1.
    sample_size: str = "case"
    # Count all model parameters in the BIC penalty, or only the ones
    # actually estimated (the -inf ones excluded).
    count_all_params: bool = True


@dataclass(frozen=True)
class ReducedProblem:
    """Outcome of the sparsity reduction for one (model, table) pair."""

    theta_dagger: tuple[int, ...]
    omega_dagger: tuple[int, ...]
    minus_infinity_params: frozenset[int]


@dataclass(frozen=True)
class FitResult:
    model: ModelSpec
    status: str
    alpha: dict[int, float] = field(default_factory=dict)
    mu: dict[int, float] = field(default_factory=dict)
    bic: float = math.inf
    population_estimate: float | None = None
    deviance_change: float = math.nan
    flags: tuple[str, ...] = ()

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


def reduce_for_sparsity(model: ModelSpec, table: CountTable) -> ReducedProblem:
    """Split parameters into estimable ones and those fixed at -inf.

    A parameter is dropped when no observed case includes all its lists;
    every cell containing such a parameter is removed too (those cells
    necessarily hold zero counts).
    """
    dead = frozenset(
        theta for theta in model.params if marginal_count(table, theta) == 0
    )
    theta_dagger = tuple(
        sorted((p for p in model.params if p not in dead), key=canonical_key)
    )
    omega_dagger = tuple(
        w
        for w in sorted(range(1, 1 << table.t), key=canonical_key)
        if not any(d & w == d for d in dead)
    )
    return ReducedProblem(theta_dagger, omega_dagger, dead)


def design_matrix(omega: Sequence[int], theta: Sequence[int]) -> np.ndarray:
    """0/1 incidence of parameter-contained-in-cell."""
    return np.array(
        [[1.0 if th & w == th else 0.0 for th in theta] for w in omega]
    )


def _poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogy = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / mu), 0.0)
    return 2.0 * float(np.sum(ylogy - (y - mu)))


def log_likelihood(y: np.ndarray, mu: np.ndarray) -> float:
    """Poisson log-likelihood including the factorial normalizer."""
    with np.errstate(divide="ignore"):
        term = np.where(y > 0, y * np.log(mu), 0.0)
    return float(np.sum(term - mu - special.gammaln(y + 1)))


def bic_from_mu(
    model: ModelSpec,
    table: CountTable,
    mu: dict[int, float],
    settings: FitSettings = FitSettings(),
    n_estimated: int | None = None,
) -> float:
    """BIC: parameter-count penalty plus twice the negative log-likelihood.

    Cells outside the fitted set contribute nothing (their count and
    fitted mean are both zero).
    """
    if settings.sample_size == "case":
        size = table.n_total
    elif settings.sample_size == "capture":
        size = (1 << table.t) - 1
    else:
        raise ValueError(f"unknown sample size convention {settings.sample_size!r}")
    if settings.count_all_params or n_estimated is None:
        n_params = len(model.params)
    else:
        n_params = n_estimated
    dev = 0.0
    for w, m in mu.items():
        n = table.count(w)
        dev += m - (n * math.log(m) if n > 0 else 0.0) + float(special.gammaln(n + 1))
    return n_params * math.log(size) + 2.0 * dev


def fit(
    model: ModelSpec, table: CountTable, settings: FitSettings = FitSettings()
) -> FitResult:
    """Extended maximum likelihood fit of one model by IRLS.

    Callers normally verify the existence criterion first; without it the
    fit may diverge, which is detected via the coefficient floor and
    reported as non-convergence.
    """
    if table.n_total == 0:
        raise ValueError("cannot fit an empty table")
    red = reduce_for_sparsity(model, table)
    if not red.omega_dagger:
        return FitResult(model, STATUS_NOT_CONVERGED, flags=("no_cells_left",))
    y = np.array([table.count(w) for w in red.omega_dagger], dtype=float)
    X = design_matrix(red.omega_dagger, red.theta_dagger)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        return FitResult(model, STATUS_NOT_CONVERGED, flags=("parameter_redundant",))

    # strictly positive working means for the log link; the first solve
    # lands on an actual model fit and deviance is tracked from there
    mu = y + 0.5
    beta = np.zeros(X.shape[1])
    first_dev: float | None = None
    prev_dev: float | None = None
    dev = math.inf
    converged = False
    diverged = False
    change = math.nan
    for _ in range(settings.max_iter):
        eta = np.log(mu)
        z = eta + (y - mu) / mu
        sw = np.sqrt(mu)
        beta, *_ = linalg.lstsq(X * sw[:, None], z * sw, lapack_driver="gelsd")
        if np.min(beta) < settings.alpha_floor:
            diverged = True
            break
        mu = np.exp(X @ beta)
        dev = _poisson_deviance(y, mu)
        if first_dev is None:
            first_dev = dev
        if prev_dev is not None:
            change = abs(dev - prev_dev)
            if change < settings.abs_tol or change < settings.rel_tol * max(
                1.0, abs(prev_dev)
            ):
                converged = True
                break
        prev_dev = dev
    if diverged or not converged:
        flag = "diverged" if diverged else "max_iterations"
        return FitResult(model, STATUS_NOT_CONVERGED, deviance_change=change,
                         flags=(flag,))

    alpha = {th: float(b) for th, b in zip(red.theta_dagger, beta)}
    for th in red.minus_infinity_params:
        alpha[th] = -math.inf
    mu_map = {w: float(m) for w, m in zip(red.omega_dagger, mu)}
    bic = bic_from_mu(model, table, mu_map, settings, n_estimated=len(red.theta_dagger))
    m_hat = math.exp(alpha[0]) + table.n_total
    if first_dev is not None and first_dev + 1e-8 < dev:
        # deviance must not increase across IRLS iterations
        return FitResult(model, STATUS_NOT_CONVERGED, deviance_change=change,
                         flags=("deviance_increase",))
    return FitResult(
        model,
        STATUS_CONVERGED,
        alpha=alpha,
        mu=mu_map,
        bic=bic,
        population_estimate=m_hat,
        deviance_change=change,
    )


def fit_or_reject(
    model: ModelSpec,
    table: CountTable,
    existence_checker: Callable[[ModelSpec, CountTable], bool] | None,
    settings: FitSettings = FitSettings(),
) -> FitResult:
    """Fit with the existence criterion applied first when provided."""
    if existence_checker is not None and not existence_checker(model, table):
        return FitResult(model, STATUS_FR_FAILED)
    return fit(model, table, settings)


def select_best_bic(
    candidates: Iterable[ModelSpec],
    table: CountTable,
    existence_checker: Callable[[ModelSpec, CountTable], bool] | None = None,
    settings: FitSettings = FitSettings(),
) -> tuple[ModelSpec, FitResult]:
    """Fit every candidate and return the BIC minimizer.

    Candidates failing the existence check or the fit get an infinite
    BIC.  Ties go to the earliest candidate in the given (canonical)
    order.  Raises NoModelFoundError when nothing attains a finite BIC.
    """
    best: tuple[ModelSpec, FitResult] | None = None
    for model in candidates:
        res = fit_or_reject(model, table, existence_checker, settings)
        if res.bic < (best[1].bic if best is not None else math.inf):
            best = (model, res)
    if best is None or math.isinf(best[1].bic):
        raise NoModelFoundError("no candidate model has a finite BIC")
    return best


@dataclass(frozen=True)
class ChisqResult:
    model: ModelSpec
    fit: FitResult
    statistic: float
    df: int
    p_value: float

    @property
    def ratio(self) -> float:
        return self.statistic / self.df


def pearson_chisq(fit_result: FitResult, table: CountTable) -> tuple[float, int]:
    """Pearson goodness-of-fit statistic and residual degrees of freedom."""
    if not fit_result.converged:
        raise ValueError("chi-squared statistic requires a converged fit")
    stat = sum(
        (table.count(w) - m) ** 2 / m for w, m in fit_result.mu.items()
    )
    n_estimated = sum(1 for a in fit_result.alpha.values() if math.isfinite(a))
    df = len(fit_result.mu) - n_estimated
    return float(stat), df


def select_by_chisq(
    candidates: Iterable[ModelSpec],
    table: CountTable,
    p_lo: float = 0.05,
    p_hi: float = 0.3,
    existence_checker: Callable[[ModelSpec, CountTable], bool] | None = None,
    settings: FitSettings = FitSettings(),
) -> ChisqResult | None:
    """Choose the model minimizing chi-squared per degree of freedom
    among those whose goodness-of-fit p-value falls in [p_lo, p_hi].

    Models with no residual degrees of freedom are never candidates.
    Returns None when the window admits no model at all.
    """
    if not 0.0 <= p_lo <= p_hi <= 1.0:
        raise ValueError(f"invalid p-value window [{p_lo}, {p_hi}]")
    best: ChisqResult | None = None
    for model in candidates:
        res = fit_or_reject(model, table, existence_checker, settings)
        if not res.converged:
            continue
        stat, df = pearson_chisq(res, table)
        if df <= 0:
            continue
        p = float(stats.chi2.sf(stat, df))
        if not p_lo <= p <= p_hi:
            continue
        cand = ChisqResult(model, res, stat, df, p)
        if best is None or cand.ratio < best.ratio:
            best = cand
    return best
