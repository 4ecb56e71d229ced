"""Existence of the extended maximum likelihood estimate.

The check solves a small linear program in exact rational arithmetic: we
maximize the slack s over all real cell vectors x with the model's
marginal constraints, and the estimate exists iff the optimum is
strictly positive.  Floating point is deliberately avoided because the
verdict hinges on a strict inequality and the failure pattern is
combinatorially delicate.

Since the verdict depends only on which cells are positive, repeated
checks during resampling are served from a cache keyed by the model and
the support of the table.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .core import CountTable, ModelSpec, marginal_count, support_key
from .glm import reduce_for_sparsity

INFEASIBLE = "infeasible"
OPTIMAL = "optimal"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class ExistenceProblem:
    """Marginal-matching LP data for one reduced (model, table) pair.

    ``incidence[i][j]`` is 1 when parameter j is contained in cell i.
    """

    omega: tuple[int, ...]
    theta: tuple[int, ...]
    incidence: tuple[tuple[int, ...], ...]
    nu: tuple[int, ...]

    @staticmethod
    def build(model: ModelSpec, table: CountTable) -> "ExistenceProblem":
        red = reduce_for_sparsity(model, table)
        incidence = tuple(
            tuple(1 if th & w == th else 0 for th in red.theta_dagger)
            for w in red.omega_dagger
        )
        nu = tuple(marginal_count(table, th) for th in red.theta_dagger)
        return ExistenceProblem(red.omega_dagger, red.theta_dagger, incidence, nu)


def simplex_max(
    c: Sequence[Fraction],
    A: Sequence[Sequence[Fraction]],
    b: Sequence[Fraction],
) -> tuple[str, Fraction | None, list[Fraction] | None]:
    """Two-phase simplex: maximize c.z subject to A z = b, z >= 0.

    All arithmetic is exact (Fraction); Bland's rule prevents cycling.
    Returns (status, optimal value, solution vector).
    """
    m, n = len(A), len(c)
    # normalize to b >= 0
    rows = []
    rhs = []
    for i in range(m):
        if b[i] < 0:
            rows.append([-a for a in A[i]])
            rhs.append(-b[i])
        else:
            rows.append(list(A[i]))
            rhs.append(b[i])

    # tableau with artificial variables for phase 1
    total = n + m
    T = [rows[i] + [Fraction(1) if j == i else Fraction(0) for j in range(m)]
         + [rhs[i]] for i in range(m)]
    basis = [n + i for i in range(m)]

    def pivot(r: int, col: int) -> None:
        piv = T[r][col]
        T[r] = [v / piv for v in T[r]]
        for i in range(m):
            if i != r and T[i][col] != 0:
                f = T[i][col]
                T[i] = [vi - f * vr for vi, vr in zip(T[i], T[r])]
        basis[r] = col

    def optimize(obj: list[Fraction], allowed: int) -> str:
        # obj holds reduced costs for a maximization; allowed bounds the
        # eligible column range
        while True:
            # reduced costs relative to the current basis
            red = list(obj)
            z = Fraction(0)
            for i, bi in enumerate(basis):
                if obj[bi] != 0:
                    coeff = obj[bi]
                    for j in range(allowed):
                        red[j] -= coeff * T[i][j]
                    z += coeff * T[i][-1]
            enter = next((j for j in range(allowed)
                          if j not in basis and red[j] > 0), None)
            if enter is None:
                return OPTIMAL
            ratios = [
                (T[i][-1] / T[i][enter], basis[i], i)
                for i in range(m)
                if T[i][enter] > 0
            ]
            if not ratios:
                return UNBOUNDED
            _, _, r = min(ratios)  # Bland: smallest ratio, then basis index
            pivot(r, enter)

    # phase 1: maximize -(sum of artificials)
    phase1 = [Fraction(0)] * n + [Fraction(-1)] * m
    optimize(phase1, total)
    art_value = sum(T[i][-1] for i in range(m) if basis[i] >= n)
    if art_value > 0:
        return INFEASIBLE, None, None
    # drive remaining artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            col = next((j for j in range(n) if T[i][j] != 0), None)
            if col is not None:
                pivot(i, col)
    # rows still basic in an artificial variable are redundant (all-zero
    # in the structural columns); they stay inert in phase 2 because the
    # artificial columns are excluded from entering
    status = optimize(list(c) + [Fraction(0)] * m, n)
    if status == UNBOUNDED:
        return UNBOUNDED, None, None
    z = [Fraction(0)] * n
    for i, bi in enumerate(basis):
        if bi < n:
            z[bi] = T[i][-1]
    value = sum(ci * zi for ci, zi in zip(c, z))
    return OPTIMAL, value, z


def lp_max_s(problem: ExistenceProblem) -> tuple[str, Fraction | None]:
    """Maximum slack s over x with A^T x = nu and x >= s elementwise.

    Substituting y = x - s*1 (y >= 0) and splitting the free s gives a
    standard-form LP.  The all-ones parameter column bounds s above, so
    the program is never unbounded; infeasibility is reported distinctly.
    """
    n_cells = len(problem.omega)
    n_params = len(problem.theta)
    if n_cells == 0:
        return INFEASIBLE, None
    # columns: y_1..y_ncells, s_plus, s_minus
    colsum = [
        sum(problem.incidence[i][j] for i in range(n_cells))
        for j in range(n_params)
    ]
    A = [
        [Fraction(problem.incidence[i][j]) for i in range(n_cells)]
        + [Fraction(colsum[j]), Fraction(-colsum[j])]
        for j in range(n_params)
    ]
    b = [Fraction(v) for v in problem.nu]
    c = [Fraction(0)] * n_cells + [Fraction(1), Fraction(-1)]
    status, value, _ = simplex_max(c, A, b)
    if status != OPTIMAL:
        return status, None
    return OPTIMAL, value


def fr_check(model: ModelSpec, table: CountTable) -> bool:
    """Whether the extended maximum likelihood estimate exists.

    Fast path: when every retained cell has a positive count the data
    vector itself is a feasible point with positive slack.  A table where
    the reduction removes every cell cannot identify any parameter.
    """
    problem = ExistenceProblem.build(model, table)
    if not problem.omega:
        return False
    if all(table.count(w) > 0 for w in problem.omega):
        return True
    status, s_star = lp_max_s(problem)
    if status != OPTIMAL:
        return False
    return s_star > 0


@dataclass
class ExistenceCache:
    """Verdict cache keyed by (model, support); thread-safe, idempotent."""

    verdicts: dict[tuple[frozenset[int], str], bool] = field(default_factory=dict)
    hits: int = 0
    misses: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def check(self, model: ModelSpec, table: CountTable) -> bool:
        key = (model.params, support_key(table))
        with self._lock:
            cached = self.verdicts.get(key)
            if cached is not None:
                self.hits += 1
                return cached
        # evaluate on the 0/1 indicator of the support: the verdict only
        # depends on which cells are positive
        indicator = CountTable.from_counts(
            table.t, {w: 1 for w in table.support}
        )
        verdict = fr_check(model, indicator)
        with self._lock:
            self.verdicts[key] = verdict
            self.misses += 1
        return verdict


def cached_fr_check(
    model: ModelSpec, table: CountTable, cache: ExistenceCache
) -> bool:
    return cache.check(model, table)
