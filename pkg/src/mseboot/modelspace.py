"""Hierarchical model lattice: enumeration, neighbours, ranks, greedy search.

A hierarchical model is determined by its parameters of order >= 2 (the
empty history and main effects are always present), which must form a
down-set in the subset lattice.  Enumeration walks that lattice in
canonical order so output is reproducible across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .core import ModelSpec, canonical_key, order, subsets

DEFAULT_SAFETY_LIMIT = 10**7


class ModelSpaceError(Exception):
    pass


def _higher_terms(t: int, l: int) -> list[int]:
    """All masks of order 2..l over t lists, in canonical order."""
    return sorted(
        (m for m in range(1 << t) if 2 <= order(m) <= l),
        key=canonical_key,
    )


def _immediate_subs(mask: int) -> list[int]:
    """Order-(k-1) subsets of a mask of order k."""
    return [mask & ~(1 << i) for i in range(mask.bit_length()) if mask >> i & 1]


@dataclass(frozen=True)
class ModelSpace:
    """All hierarchical models on t lists with parameter order <= l."""

    t: int
    l: int
    models: tuple[ModelSpec, ...]

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self) -> Iterator[ModelSpec]:
        return iter(self.models)

    def index_of(self, model: ModelSpec) -> int:
        return self._index[model.params]

    @property
    def _index(self) -> dict[frozenset[int], int]:
        d = self.__dict__.get("_index_cache")
        if d is None:
            d = {m.params: i for i, m in enumerate(self.models)}
            self.__dict__["_index_cache"] = d
        return d


def _iter_downsets(elems: list[int]) -> Iterator[frozenset[int]]:
    """Down-sets of the order->=2 term poset, via include/exclude DFS.

    Elements are processed in canonical order, so every immediate subset
    of a term precedes it and membership can be checked incrementally.
    Each down-set is produced exactly once.
    """
    n = len(elems)
    chosen: set[int] = set()

    def rec(i: int) -> Iterator[frozenset[int]]:
        if i == n:
            yield frozenset(chosen)
            return
        e = elems[i]
        # exclude e
        yield from rec(i + 1)
        # include e, if its lower covers are all present
        if all(s in chosen or order(s) < 2 for s in _immediate_subs(e)):
            chosen.add(e)
            yield from rec(i + 1)
            chosen.remove(e)

    return rec(0)


def enumerate_models(
    t: int, l: int | None = None, safety_limit: int = DEFAULT_SAFETY_LIMIT
) -> ModelSpace:
    """Enumerate the full hierarchical model space on t lists, max order l."""
    if l is None:
        l = t - 1
    if not 2 <= t:
        raise ModelSpaceError(f"need at least 2 lists, got t={t}")
    if not 1 <= l <= t - 1:
        raise ModelSpaceError(f"maximum order must be in 1..t-1, got l={l}")
    base = frozenset([0] + [1 << i for i in range(t)])
    elems = _higher_terms(t, l)
    models: list[ModelSpec] = []
    for down in _iter_downsets(elems):
        if len(models) >= safety_limit:
            raise ModelSpaceError(
                f"model space for (t={t}, l={l}) exceeds safety limit {safety_limit}"
            )
        models.append(ModelSpec(t, base | down))
    models.sort(key=lambda m: tuple(m.sorted_params))
    return ModelSpace(t, l, tuple(models))


def model_distance(a: ModelSpec, b: ModelSpec) -> int:
    """Size of the symmetric difference between the two parameter sets."""
    if a.t != b.t:
        raise ModelSpaceError("models must be over the same number of lists")
    return len(a.params ^ b.params)


def neighbors(model: ModelSpec, l: int | None = None) -> list[ModelSpec]:
    """Models at distance exactly 1: add or drop one order->=2 term,
    preserving the hierarchy and the order cap.  Excludes the model itself.
    """
    t = model.t
    if l is None:
        l = t - 1
    out: list[ModelSpec] = []
    present = model.params
    # removable: maximal order->=2 terms
    for p in present:
        if order(p) >= 2 and not any(
            q != p and q & p == p for q in present
        ):
            out.append(ModelSpec(t, present - {p}))
    # addable: absent terms of order 2..l whose subsets are all present
    for m in _higher_terms(t, l):
        if m not in present and all(s in present for s in subsets(m) if s != m):
            out.append(ModelSpec(t, present | {m}))
    out.sort(key=lambda m: tuple(m.sorted_params))
    return out


@dataclass(frozen=True)
class RankTable:
    """Per-model BIC ranks: original rank r_1 and degree-k ranks r_2..r_K."""

    ranks: np.ndarray  # shape (K, n_models); ranks[k-1] is r_k

    @property
    def r1(self) -> np.ndarray:
        return self.ranks[0]

    def degree(self, k: int) -> np.ndarray:
        return self.ranks[k - 1]


def primary_ranks(bic_values: Sequence[float]) -> np.ndarray:
    """Ranks 1..n by ascending BIC; infinite values last, ties canonical.

    Canonical here means position in the (canonically ordered) space.
    """
    n = len(bic_values)
    idx = sorted(range(n), key=lambda i: (math.isinf(bic_values[i]), bic_values[i], i))
    ranks = np.empty(n, dtype=int)
    for rank, i in enumerate(idx, start=1):
        ranks[i] = rank
    return ranks


def bic_ranks(space: ModelSpace, bic_values: Sequence[float], K: int = 2) -> RankTable:
    """BIC ranks of degrees 1..K via the neighbour-minimum recursion."""
    if K < 1:
        raise ModelSpaceError("K must be >= 1")
    if len(bic_values) != len(space):
        raise ModelSpaceError("bic_values must align with the model space")
    n = len(space)
    ranks = np.empty((K, n), dtype=int)
    ranks[0] = primary_ranks(bic_values)
    if K > 1:
        neigh = [
            [space.index_of(m) for m in neighbors(model, space.l)] + [i]
            for i, model in enumerate(space)
        ]
        for k in range(1, K):
            prev = ranks[k - 1]
            ranks[k] = [min(prev[j] for j in neigh[i]) for i in range(n)]
    return RankTable(ranks)


def rank_order(space: ModelSpace, rank_table: RankTable, degree: int = 1) -> list[int]:
    """Model indices sorted by rank of the given degree, ties by lower degree.

    Degree 1 orders by r_1 alone; degree 2 by (r_2, r_1).  Deterministic
    because r_1 is a permutation.
    """
    if not 1 <= degree <= rank_table.ranks.shape[0]:
        raise ModelSpaceError(f"degree {degree} not available in rank table")
    keys = [tuple(rank_table.ranks[k][i] for k in reversed(range(degree)))
            for i in range(len(space))]
    return sorted(range(len(space)), key=lambda i: keys[i])


def downhill_search(
    start: ModelSpec,
    l: int,
    fitter: Callable[[ModelSpec], float],
    fit_cache: dict[frozenset[int], float] | None = None,
) -> tuple[ModelSpec, float] | None:
    """Greedy descent over the model lattice to a local BIC minimum.

    ``fitter`` maps a model to its BIC (inf for existence failures or
    non-convergence).  At each step all neighbours are evaluated and the
    move goes to the strictly smallest BIC if it improves, canonically
    first model on ties.  Returns None when neither the start nor any
    model reached has a finite BIC.
    """
    cache = fit_cache if fit_cache is not None else {}

    def evaluate(model: ModelSpec) -> float:
        key = model.params
        if key not in cache:
            cache[key] = fitter(model)
        return cache[key]

    current, current_bic = start, evaluate(start)
    while True:
        best_n, best_bic = None, math.inf
        for cand in neighbors(current, l):
            b = evaluate(cand)
            if b < best_bic:
                best_n, best_bic = cand, b
        if best_n is not None and best_bic < current_bic:
            current, current_bic = best_n, best_bic
        else:
            break
    if math.isinf(current_bic):
        return None
    return current, current_bic


def random_order2_starts(
    t: int, n_pairs: int, count: int, rng: np.random.Generator
) -> list[ModelSpec]:
    """Random order-2 starting models, each from distinct uniform pairs."""
    pairs = [m for m in range(1 << t) if order(m) == 2]
    if n_pairs > len(pairs):
        raise ModelSpaceError(f"requested {n_pairs} pairs but only {len(pairs)} exist")
    starts = []
    for _ in range(count):
        picked = rng.choice(len(pairs), size=n_pairs, replace=False)
        starts.append(ModelSpec.from_generators(t, [pairs[i] for i in picked]))
    return starts
