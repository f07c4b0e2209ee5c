"""Exact linear assignment (maximisation) with deterministic tie-breaking."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np


class AssignmentError(ValueError):
    pass


@dataclass(frozen=True)
class AssignmentResult:
    perm: np.ndarray  # row i is assigned to column perm[i]
    objective: float


def assignment_objective(cost: np.ndarray, perm) -> float:
    """Exactly rounded ``sum_i cost[i, perm[i]]``."""
    cost = np.asarray(cost, dtype=float)
    return math.fsum(cost[np.arange(len(perm)), np.asarray(perm)].tolist())


def _hungarian_min(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest augmenting path Hungarian method, O(n^3).

    Returns ``(col_of_row, u, v)`` with dual potentials such that
    ``a[i, j] - u[i] - v[j] >= 0`` everywhere and ``== 0`` on the matching.
    """
    n = a.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=int)
    big = np.zeros((n + 1, n + 1))
    big[1:, 1:] = a
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = big[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(free, minv, inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _lexicographic_matching(tight: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Lexicographically smallest perfect matching inside ``tight``.

    ``start`` must already be a perfect matching of the tight graph.
    """
    n = len(start)
    match = start.copy()
    owner = np.empty(n, dtype=int)
    owner[match] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)
    adj = [np.flatnonzero(tight[i]) for i in range(n)]

    def augment(r: int, target: int, first_row: int, seen: np.ndarray) -> bool:
        for c in adj[r]:
            if fixed_col[c] or seen[c]:
                continue
            seen[c] = True
            if c == target or (owner[c] > first_row and augment(owner[c], target, first_row, seen)):
                match[r] = c
                owner[c] = r
                return True
        return False

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 100))
    try:
        for i in range(n):
            for j in adj[i]:
                if fixed_col[j]:
                    continue
                if j == match[i]:
                    break
                r, freed = owner[j], match[i]
                saved_match, saved_owner = match.copy(), owner.copy()
                match[i], owner[j] = j, i
                fixed_col[j] = True
                seen = np.zeros(n, dtype=bool)
                seen[j] = True
                if augment(r, freed, i, seen):
                    fixed_col[j] = False
                    break
                fixed_col[j] = False
                match[:], owner[:] = saved_match, saved_owner
            fixed_col[match[i]] = True
    finally:
        sys.setrecursionlimit(limit)
    return match


def solve_lap_max(cost) -> AssignmentResult:
    """Permutation maximising ``sum_i cost[i, perm[i]]``.

    Among optimal permutations the lexicographically smallest ``perm`` is
    returned.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise AssignmentError(f"cost must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise AssignmentError("cost has non-finite entries")
    n = cost.shape[0]
    if n == 0:
        return AssignmentResult(np.zeros(0, dtype=int), 0.0)
    a = -cost
    perm, u, v = _hungarian_min(a)
    reduced = a - u[:, None] - v[None, :]
    scale = float(np.max(np.abs(cost)))
    tol = 1e-9 * scale if scale > 0 else 0.0
    tight = reduced <= tol
    tight[np.arange(n), perm] = True
    lex = _lexicographic_matching(tight, perm)
    best = assignment_objective(cost, perm)
    lex_obj = assignment_objective(cost, lex)
    if lex_obj < best:
        return AssignmentResult(perm, best)
    return AssignmentResult(lex, lex_obj)
