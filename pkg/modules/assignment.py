"""
Optimal and k-best rectangular assignment.

Cost matrices are m x n with m <= n; every row is assigned to a distinct column.
numpy.inf marks a forbidden pair.
"""
import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from utils.errors import InvalidInputError, NoSolutionError


@dataclass(frozen=True)
class Assignment:
    """Column chosen for each row and the total cost."""

    columns: tuple
    cost: float

    def as_matrix(self, n_cols):
        s = np.zeros((len(self.columns), n_cols), dtype=int)
        for i, j in enumerate(self.columns):
            s[i, j] = 1
        return s


def _as_cost_matrix(c):
    c = np.array(c, dtype=float)
    if c.ndim != 2:
        raise InvalidInputError(f"cost matrix must be 2-D, got shape {c.shape}")
    if np.isnan(c).any() or np.isneginf(c).any():
        raise InvalidInputError("cost matrix holds NaN or -inf entries")
    if c.shape[0] > c.shape[1]:
        raise NoSolutionError(f"cost matrix has more rows than columns {c.shape}")
    return c


def _solve(c):
    """Returns (columns, cost) of one optimal assignment or None when infeasible."""
    m = c.shape[0]
    if m == 0:
        return (), 0.0
    if not np.isfinite(c).any(axis=1).all():
        return None
    try:
        rows, cols = linear_sum_assignment(c)
    except ValueError:
        return None
    picked = c[rows, cols]
    if not np.isfinite(picked).all():
        return None
    columns = [0] * m
    for r, col in zip(rows, cols):
        columns[r] = int(col)
    return tuple(columns), float(picked.sum())


def _tie_tolerance(cost):
    return 1e-9 * (1.0 + abs(cost))


def _lexicographic_refine(c, columns, cost):
    """
    Among the assignments of optimal cost returns the one whose column vector is
    lexicographically smallest.
    """
    m = c.shape[0]
    work = c.copy()
    remaining = cost
    chosen = []
    for i in range(m):
        for j in np.flatnonzero(np.isfinite(work[i])):
            trial = work.copy()
            trial[i, :] = np.inf
            trial[i, j] = work[i, j]
            trial[i + 1 :, j] = np.inf
            sub = _solve(trial[i:])
            if sub is not None and abs(sub[1] - remaining) <= _tie_tolerance(cost):
                chosen.append(int(j))
                remaining -= work[i, j]
                work = trial
                break
        else:
            # Numerical noise only; keep the solver's own choice.
            return columns
    return tuple(chosen)


def solve_optimal(c, tie_break=True):
    """
    Solves min tr(S^T C) over row-complete assignments.

    Args:
        c (array-like): m x n cost matrix, m <= n, inf for forbidden pairs.
        tie_break (bool): Return the lexicographically smallest column vector
            among equal-cost optima.

    Returns:
        Assignment: Optimal assignment.

    Raises:
        NoSolutionError: If no feasible assignment exists.
    """
    c = _as_cost_matrix(c)
    res = _solve(c)
    if res is None:
        raise NoSolutionError(f"solve_optimal: infeasible {c.shape[0]}x{c.shape[1]} cost matrix")
    columns, cost = res
    if tie_break and c.shape[0] > 0:
        columns = _lexicographic_refine(c, columns, cost)
        cost = float(sum(c[i, j] for i, j in enumerate(columns)))
    return Assignment(columns, cost)


def _constrained(c, forced, excluded):
    sub = c.copy()
    for i, j in excluded:
        sub[i, j] = np.inf
    for i, j in forced.items():
        keep = sub[i, j]
        sub[i, :] = np.inf
        sub[:, j] = np.inf
        sub[i, j] = keep
    return sub


def solve_k_best(c, k):
    """
    Murty's algorithm: the min(k, #feasible) cheapest distinct assignments.

    Subproblems live in a heap ordered by (cost, column tuple) so the output
    order is reproducible when costs tie.

    Args:
        c (array-like): m x n cost matrix, m <= n.
        k (int): Number of assignments requested, >= 1.

    Returns:
        list: Assignment objects in nondecreasing cost order.

    Raises:
        NoSolutionError: If no feasible assignment exists.
    """
    if k < 1:
        raise InvalidInputError(f"solve_k_best: k must be >= 1, got {k}")
    c = _as_cost_matrix(c)
    first = solve_optimal(c)
    m = c.shape[0]
    counter = itertools.count()
    heap = [(first.cost, first.columns, next(counter), {}, frozenset())]
    out = []
    while heap and len(out) < k:
        cost, columns, _, forced, excluded = heapq.heappop(heap)
        out.append(Assignment(columns, cost))
        fixed = dict(forced)
        for i in range(m):
            if i in forced:
                continue
            child_excluded = excluded | {(i, columns[i])}
            res = _solve(_constrained(c, fixed, child_excluded))
            if res is not None:
                child_cols, _ = res
                child_cost = float(sum(c[r, col] for r, col in enumerate(child_cols)))
                if math.isfinite(child_cost):
                    heapq.heappush(heap, (child_cost, child_cols, next(counter), dict(fixed), child_excluded))
            fixed[i] = columns[i]
    return out
