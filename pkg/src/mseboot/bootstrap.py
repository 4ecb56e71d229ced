"""Bootstrap and jackknife inference for the selected-model population size.

Replicates are multinomial resamples of the observed table; the interval
construction is bias-corrected and accelerated, with the acceleration
obtained from a weighted jackknife over the positive cells.  Model
selection is repeated inside every replicate, optionally restricted to
the models ranking best on the original data, searched greedily, or
filtered by a goodness-of-fit window.

Determinism: each replicate draws from its own generator seeded by
(seed, replicate index), so results are identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri

from .core import CountTable, ModelSpec
from .existence import ExistenceCache, cached_fr_check
from .glm import (
    FitResult,
    FitSettings,
    NoModelFoundError,
    fit_or_reject,
    select_by_chisq,
)
from .modelspace import (
    ModelSpace,
    RankTable,
    bic_ranks,
    downhill_search,
    rank_order,
)

T = TypeVar("T")
U = TypeVar("U")

DEFAULT_LEVELS = (0.8, 0.95)
DEFAULT_B = 1000


def _pmap(fn: Callable[[T], U], items: Sequence[T], workers: int) -> list[U]:
    """Order-preserving map, threaded when workers > 1."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one replicate, stable across worker counts."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def resample(table: CountTable, rng: np.random.Generator) -> CountTable:
    """Multinomial resample: same number of cases, probabilities from counts."""
    if table.n_total == 0:
        raise ValueError("cannot resample an empty table")
    masks = list(table.counts)
    probs = np.array([table.counts[m] for m in masks], dtype=float)
    draw = rng.multinomial(table.n_total, probs / probs.sum())
    return CountTable.from_counts(
        table.t, {m: int(k) for m, k in zip(masks, draw) if k > 0}
    )


def jackknife_tables(table: CountTable) -> list[tuple[int, CountTable]]:
    """One table per positive cell, with that cell's count lowered by one."""
    out = []
    for mask in table.counts:
        counts = dict(table.counts)
        counts[mask] -= 1
        out.append((mask, CountTable.from_counts(table.t, counts)))
    return out


@dataclass(frozen=True)
class BcaComponents:
    """Everything the BCa endpoint formula needs."""

    boot_estimates: tuple[float, ...]  # finite, replicate order
    jackknife_estimates: dict[int, float]
    jackknife_mean: float
    s2: float
    s3: float
    z0_hat: float
    a_hat: float
    excluded_boot: int
    excluded_jack: int
    flags: tuple[str, ...] = ()


def bca_components(
    boot: Sequence[float | None],
    jack: Iterable[tuple[int, float | None]],
    table: CountTable,
    m_hat: float,
) -> BcaComponents:
    """Assemble bias-correction and acceleration from replicate estimates.

    ``None`` entries (replicates with no estimable model) are dropped and
    counted.  Jackknife estimates are weighted by the cell counts.
    """
    flags: list[str] = []
    kept = [b for b in boot if b is not None and math.isfinite(b)]
    excluded_boot = len(boot) - len(kept)
    if not kept:
        raise NoModelFoundError("every bootstrap replicate was excluded")
    n_below = sum(1 for b in kept if b < m_hat)
    prop = n_below / len(kept)
    lo, hi = 1.0 / (len(kept) + 1), len(kept) / (len(kept) + 1)
    if prop <= 0.0 or prop >= 1.0:
        prop = min(max(prop, lo), hi)
        flags.append("z0_clamped")
    z0 = float(ndtri(prop))

    jack_kept: dict[int, float] = {}
    excluded_jack = 0
    for mask, est in jack:
        if est is None or not math.isfinite(est):
            excluded_jack += 1
        else:
            jack_kept[mask] = est
    if not jack_kept:
        raise NoModelFoundError("every jackknife replicate was excluded")
    weights = {mask: table.count(mask) for mask in jack_kept}
    w_sum = sum(weights.values())
    mean = sum(weights[m] * e for m, e in jack_kept.items()) / w_sum
    s2 = sum(weights[m] * (mean - e) ** 2 for m, e in jack_kept.items())
    s3 = sum(weights[m] * (mean - e) ** 3 for m, e in jack_kept.items())
    if s2 > 0:
        a_hat = s3 / (6.0 * s2**1.5)
    else:
        a_hat = 0.0
        flags.append("zero_jackknife_variance")
    return BcaComponents(
        boot_estimates=tuple(kept),
        jackknife_estimates=jack_kept,
        jackknife_mean=mean,
        s2=s2,
        s3=s3,
        z0_hat=z0,
        a_hat=a_hat,
        excluded_boot=excluded_boot,
        excluded_jack=excluded_jack,
        flags=tuple(flags),
    )


def adjusted_level(z0: float, a: float, beta: float) -> float | None:
    """One-sided level after bias correction and acceleration.

    Returns None when the denominator is not positive, in which case the
    endpoint degenerates to an extreme order statistic.
    """
    zb = float(ndtri(beta))
    denom = 1.0 - a * (z0 + zb)
    if denom <= 0.0:
        return None
    return float(ndtr(z0 + (z0 + zb) / denom))


def _quantile(sorted_boot: np.ndarray, beta_tilde: float) -> float:
    """Empirical quantile: the ceil(level * B)-th order statistic."""
    n = len(sorted_boot)
    k = min(max(math.ceil(beta_tilde * n), 1), n)
    return float(sorted_boot[k - 1])


@dataclass(frozen=True)
class IntervalResult:
    """Point estimate plus BCa intervals and run diagnostics."""

    point_estimate: float
    intervals: dict[float, tuple[float, float]]
    method: str
    B: int
    seed: int | None
    n_top: int | None = None
    selected_model: str | None = None
    z0_hat: float = math.nan
    a_hat: float = math.nan
    excluded_boot: int = 0
    excluded_jack: int = 0
    flags: tuple[str, ...] = ()


def bca_interval(
    components: BcaComponents,
    m_hat: float,
    levels: Sequence[float] = DEFAULT_LEVELS,
) -> dict[float, tuple[float, float]]:
    """Two-sided BCa intervals at each confidence level."""
    sorted_boot = np.sort(components.boot_estimates)
    out: dict[float, tuple[float, float]] = {}
    for level in levels:
        if not 0.0 < level < 1.0:
            raise ValueError(f"confidence level must be in (0,1), got {level}")
        alpha = 1.0 - level
        ends = []
        for beta in (alpha / 2.0, 1.0 - alpha / 2.0):
            bt = adjusted_level(components.z0_hat, components.a_hat, beta)
            if bt is None:
                # the adjustment pushed past the sample range
                zb = float(ndtri(beta))
                ends.append(
                    float(sorted_boot[-1])
                    if components.z0_hat + zb > 0
                    else float(sorted_boot[0])
                )
            else:
                ends.append(_quantile(sorted_boot, bt))
        lo, hi = min(ends), max(ends)
        out[level] = (lo, hi)
    return out


# ---------------------------------------------------------------------------
# Model evaluation helpers shared by the drivers
# ---------------------------------------------------------------------------


def _evaluate_models(
    models: Sequence[ModelSpec],
    table: CountTable,
    cache: ExistenceCache,
    settings: FitSettings,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-model (BIC, population estimate); inf/nan where not estimable."""
    bics = np.full(len(models), np.inf)
    ests = np.full(len(models), np.nan)
    for j, model in enumerate(models):
        res = fit_or_reject(
            model, table, lambda m, t: cached_fr_check(m, t, cache), settings
        )
        if res.converged:
            bics[j] = res.bic
            ests[j] = res.population_estimate
    return bics, ests


def _select_from_eval(bics: np.ndarray, ests: np.ndarray) -> float | None:
    """Estimate of the BIC-minimal model; ties to the earliest position."""
    j = int(np.argmin(bics))
    if math.isinf(bics[j]):
        return None
    return float(ests[j])


def original_fits(
    table: CountTable,
    space: ModelSpace,
    cache: ExistenceCache,
    settings: FitSettings,
) -> tuple[np.ndarray, np.ndarray, list[FitResult]]:
    """Fit the whole space on the original data, canonically ordered."""
    fits = [
        fit_or_reject(
            m, table, lambda mm, tt: cached_fr_check(mm, tt, cache), settings
        )
        for m in space
    ]
    bics = np.array([f.bic for f in fits])
    ests = np.array(
        [f.population_estimate if f.converged else np.nan for f in fits]
    )
    return bics, ests, fits


def space_ordering(
    space: ModelSpace, bics: Sequence[float], degree: int = 1
) -> tuple[list[int], RankTable]:
    """Model indices best-first under the requested rank degree."""
    table = bic_ranks(space, bics, K=max(2, degree))
    return rank_order(space, table, degree), table


# ---------------------------------------------------------------------------
# Restricted bootstrap and the sweep over the restriction size
# ---------------------------------------------------------------------------


def restricted_bootstrap(
    table: CountTable,
    space: ModelSpace,
    B: int = DEFAULT_B,
    n_top: int | None = None,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    degree: int = 1,
    workers: int = 1,
    settings: FitSettings = FitSettings(),
    cache: ExistenceCache | None = None,
) -> IntervalResult:
    """Bootstrap with per-replicate selection restricted to the models
    ranking best on the original data; ``n_top=None`` considers them all.
    """
    if B < 1:
        raise ValueError("need at least one bootstrap replication")
    cache = cache if cache is not None else ExistenceCache()
    bics, _, fits = original_fits(table, space, cache, settings)
    ordering, _ = space_ordering(space, bics, degree)
    best = fits[ordering[0]]
    if not best.converged:
        raise NoModelFoundError("no model has a finite BIC on the original data")
    m_hat = best.population_estimate
    assert m_hat is not None
    if n_top is None:
        n_top = len(space)
    n_top = min(n_top, len(space))
    if n_top < 1:
        raise ValueError("n_top must be at least 1")
    top_models = [space.models[i] for i in ordering[:n_top]]

    def one_boot(i: int) -> float | None:
        rep = resample(table, replicate_rng(seed, i))
        return _select_from_eval(*_evaluate_models(top_models, rep, cache, settings))

    boot = _pmap(one_boot, range(B), workers)
    jack = [
        (mask, _select_from_eval(*_evaluate_models(top_models, jt, cache, settings)))
        for mask, jt in jackknife_tables(table)
    ]
    comps = bca_components(boot, jack, table, m_hat)
    return IntervalResult(
        point_estimate=m_hat,
        intervals=bca_interval(comps, m_hat, levels),
        method="degree2" if degree == 2 else "bic",
        B=B,
        seed=seed,
        n_top=n_top,
        selected_model=best.model.notation(),
        z0_hat=comps.z0_hat,
        a_hat=comps.a_hat,
        excluded_boot=comps.excluded_boot,
        excluded_jack=comps.excluded_jack,
        flags=comps.flags,
    )


@dataclass(frozen=True)
class SweepState:
    """Per-replicate model evaluations for the restriction-size sweep."""

    bic_array: np.ndarray  # (B, n_top_high)
    estimate_array: np.ndarray
    record_indices: tuple[tuple[int, ...], ...]
    filled_estimates: np.ndarray  # (B, n_top_high)


def _record_fill(bics: np.ndarray, ests: np.ndarray) -> tuple[tuple[int, ...], np.ndarray]:
    """Fill per-restriction estimates from the record values of one row.

    Walking the decreasing sequence of prefix-argmin positions fills
    every restriction size with the estimate of its best-ranked model.
    Positions are 1-based in the returned record sequence.
    """
    nh = len(bics)
    filled = np.full(nh, np.nan)
    records: list[int] = []
    j_prev = nh + 1
    while j_prev > 1:
        prefix = bics[: j_prev - 1]
        j_k = int(np.argmin(prefix)) + 1
        if math.isinf(bics[j_k - 1]):
            break
        records.append(j_k)
        filled[j_k - 1 : j_prev - 1] = ests[j_k - 1]
        j_prev = j_k
    return tuple(records), filled


def ntop_sweep(
    table: CountTable,
    space: ModelSpace,
    B: int = DEFAULT_B,
    n_top_high: int | None = None,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    degree: int = 1,
    workers: int = 1,
    settings: FitSettings = FitSettings(),
    cache: ExistenceCache | None = None,
) -> tuple[SweepState, dict[int, IntervalResult]]:
    """Intervals for every restriction size up to ``n_top_high`` from a
    single pass of model evaluations per replicate.
    """
    if B < 1:
        raise ValueError("need at least one bootstrap replication")
    cache = cache if cache is not None else ExistenceCache()
    bics0, _, fits = original_fits(table, space, cache, settings)
    ordering, _ = space_ordering(space, bics0, degree)
    best = fits[ordering[0]]
    if not best.converged:
        raise NoModelFoundError("no model has a finite BIC on the original data")
    m_hat = best.population_estimate
    assert m_hat is not None
    if n_top_high is None:
        n_top_high = len(space)
    n_top_high = min(n_top_high, len(space))
    top_models = [space.models[i] for i in ordering[:n_top_high]]

    def eval_boot(i: int) -> tuple[np.ndarray, np.ndarray]:
        rep = resample(table, replicate_rng(seed, i))
        return _evaluate_models(top_models, rep, cache, settings)

    boot_evals = _pmap(eval_boot, range(B), workers)
    bic_array = np.stack([b for b, _ in boot_evals])
    est_array = np.stack([e for _, e in boot_evals])
    filled_boot = np.empty_like(est_array)
    records = []
    for i in range(B):
        rec, row = _record_fill(bic_array[i], est_array[i])
        records.append(rec)
        filled_boot[i] = row

    jack_masks, jack_filled = [], []
    for mask, jt in jackknife_tables(table):
        jb, je = _evaluate_models(top_models, jt, cache, settings)
        _, row = _record_fill(jb, je)
        jack_masks.append(mask)
        jack_filled.append(row)
    jack_filled_arr = np.array(jack_filled)

    state = SweepState(bic_array, est_array, tuple(records), filled_boot)
    results: dict[int, IntervalResult] = {}
    for n_top in range(1, n_top_high + 1):
        boot = [
            float(v) if math.isfinite(v) else None
            for v in filled_boot[:, n_top - 1]
        ]
        jack = [
            (mask, float(v) if math.isfinite(v) else None)
            for mask, v in zip(jack_masks, jack_filled_arr[:, n_top - 1])
        ]
        comps = bca_components(boot, jack, table, m_hat)
        results[n_top] = IntervalResult(
            point_estimate=m_hat,
            intervals=bca_interval(comps, m_hat, levels),
            method="sweep",
            B=B,
            seed=seed,
            n_top=n_top,
            selected_model=best.model.notation(),
            z0_hat=comps.z0_hat,
            a_hat=comps.a_hat,
            excluded_boot=comps.excluded_boot,
            excluded_jack=comps.excluded_jack,
            flags=comps.flags,
        )
    return state, results


# ---------------------------------------------------------------------------
# Greedy-search and goodness-of-fit-window variants
# ---------------------------------------------------------------------------


def _downhill_estimate(
    table: CountTable,
    l: int,
    starts: Sequence[ModelSpec],
    cache: ExistenceCache,
    settings: FitSettings,
) -> tuple[ModelSpec, FitResult] | None:
    """Best local BIC minimum over the given starts, or None."""
    fits: dict[frozenset[int], FitResult] = {}

    def bic_of(model: ModelSpec) -> float:
        res = fit_or_reject(
            model, table, lambda m, t: cached_fr_check(m, t, cache), settings
        )
        fits[model.params] = res
        return res.bic

    shared: dict[frozenset[int], float] = {}
    best: tuple[ModelSpec, float] | None = None
    for start in starts:
        found = downhill_search(start, l, bic_of, fit_cache=shared)
        if found is not None and (best is None or found[1] < best[1]):
            best = found
    if best is None:
        return None
    return best[0], fits[best[0].params]


def downhill_bootstrap(
    table: CountTable,
    l: int | None = None,
    B: int = DEFAULT_B,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    starts: Sequence[ModelSpec] | None = None,
    workers: int = 1,
    settings: FitSettings = FitSettings(),
    cache: ExistenceCache | None = None,
) -> IntervalResult:
    """Bootstrap where each replicate's model is found by greedy descent
    from the null model (and any extra starts) instead of full selection.
    """
    if B < 1:
        raise ValueError("need at least one bootstrap replication")
    if l is None:
        l = table.t - 1
    cache = cache if cache is not None else ExistenceCache()
    if starts is None:
        starts = [ModelSpec.null_model(table.t)]
    found = _downhill_estimate(table, l, starts, cache, settings)
    if found is None:
        raise NoModelFoundError("greedy search found no model with finite BIC")
    best_model, best_fit = found
    m_hat = best_fit.population_estimate
    assert m_hat is not None

    def one_boot(i: int) -> float | None:
        rep = resample(table, replicate_rng(seed, i))
        res = _downhill_estimate(rep, l, starts, cache, settings)
        return None if res is None else res[1].population_estimate

    boot = _pmap(one_boot, range(B), workers)
    jack = []
    for mask, jt in jackknife_tables(table):
        res = _downhill_estimate(jt, l, starts, cache, settings)
        jack.append((mask, None if res is None else res[1].population_estimate))
    comps = bca_components(boot, jack, table, m_hat)
    return IntervalResult(
        point_estimate=m_hat,
        intervals=bca_interval(comps, m_hat, levels),
        method="downhill",
        B=B,
        seed=seed,
        selected_model=best_model.notation(),
        z0_hat=comps.z0_hat,
        a_hat=comps.a_hat,
        excluded_boot=comps.excluded_boot,
        excluded_jack=comps.excluded_jack,
        flags=comps.flags,
    )


def chisq_bootstrap(
    table: CountTable,
    space: ModelSpace,
    B: int = DEFAULT_B,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    p_lo: float = 0.05,
    p_hi: float = 0.3,
    workers: int = 1,
    settings: FitSettings = FitSettings(),
    cache: ExistenceCache | None = None,
) -> IntervalResult:
    """Bootstrap of the goodness-of-fit-window selection rule.

    Replicates where no model falls in the p-value window are excluded
    and counted; the resulting interval therefore carries a validity
    caveat (the exclusions are reported, not imputed).
    """
    if B < 1:
        raise ValueError("need at least one bootstrap replication")
    cache = cache if cache is not None else ExistenceCache()
    checker = lambda m, t: cached_fr_check(m, t, cache)
    chosen = select_by_chisq(space.models, table, p_lo, p_hi, checker, settings)
    if chosen is None:
        raise NoModelFoundError(
            "no model falls in the requested p-value window on the original data"
        )
    m_hat = chosen.fit.population_estimate
    assert m_hat is not None

    def one_boot(i: int) -> float | None:
        rep = resample(table, replicate_rng(seed, i))
        res = select_by_chisq(space.models, rep, p_lo, p_hi, checker, settings)
        return None if res is None else res.fit.population_estimate

    boot = _pmap(one_boot, range(B), workers)
    jack = []
    for mask, jt in jackknife_tables(table):
        res = select_by_chisq(space.models, jt, p_lo, p_hi, checker, settings)
        jack.append((mask, None if res is None else res.fit.population_estimate))
    comps = bca_components(boot, jack, table, m_hat)
    flags = comps.flags + (("replicates_excluded",) if comps.excluded_boot else ())
    return IntervalResult(
        point_estimate=m_hat,
        intervals=bca_interval(comps, m_hat, levels),
        method="chisq",
        B=B,
        seed=seed,
        selected_model=chosen.model.notation(),
        z0_hat=comps.z0_hat,
        a_hat=comps.a_hat,
        excluded_boot=comps.excluded_boot,
        excluded_jack=comps.excluded_jack,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Diagnostics on the full-space bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsReport:
    """How well original-data model ranks predict replicate selections."""

    rho: tuple[float, ...]
    mean_rho: float
    rho_undefined: int
    containment: dict[int, int]
    m1: tuple[int, ...]
    m2: tuple[int, ...]
    B: int
    excluded: int


def diagnostics(
    table: CountTable,
    space: ModelSpace,
    B: int = DEFAULT_B,
    seed: int = 0,
    ntop_grid: Sequence[int] = (1, 5, 10, 50, 100),
    workers: int = 1,
    settings: FitSettings = FitSettings(),
    cache: ExistenceCache | None = None,
) -> DiagnosticsReport:
    """Rank agreement between original and replicate BIC values.

    For each replicate: the Spearman correlation over models where both
    fits exist, and the position of the replicate's best model in the
    degree-1 and degree-2 orderings of the original data.
    """
    cache = cache if cache is not None else ExistenceCache()
    bics0, _, _ = original_fits(table, space, cache, settings)
    if not np.isfinite(bics0).any():
        raise NoModelFoundError("no model has a finite BIC on the original data")
    rank_table = bic_ranks(space, bics0, K=2)
    order1 = rank_order(space, rank_table, 1)
    order2 = rank_order(space, rank_table, 2)
    pos1 = {j: p + 1 for p, j in enumerate(order1)}
    pos2 = {j: p + 1 for p, j in enumerate(order2)}

    def one(i: int) -> tuple[float | None, int | None]:
        rep = resample(table, replicate_rng(seed, i))
        bics, _ = _evaluate_models(space.models, rep, cache, settings)
        both = np.isfinite(bics0) & np.isfinite(bics)
        rho = None
        if both.sum() >= 3:
            rho = float(stats.spearmanr(bics0[both], bics[both]).statistic)
        j = int(np.argmin(bics))
        if math.isinf(bics[j]):
            return rho, None
        return rho, j

    outcomes = _pmap(one, range(B), workers)
    rhos = tuple(r for r, _ in outcomes if r is not None)
    winners = [j for _, j in outcomes if j is not None]
    m1 = tuple(pos1[j] for j in winners)
    m2 = tuple(pos2[j] for j in winners)
    containment = {
        n: sum(1 for p in m1 if p <= n)
        for n in sorted({min(n, len(space)) for n in ntop_grid})
    }
    return DiagnosticsReport(
        rho=rhos,
        mean_rho=float(np.mean(rhos)) if rhos else math.nan,
        rho_undefined=B - len(rhos),
        containment=containment,
        m1=m1,
        m2=m2,
        B=B,
        excluded=B - len(winners),
    )
