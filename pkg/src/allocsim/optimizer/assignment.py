"""Full-information assignment baselines: Kuhn-Munkres and a brute-force oracle."""

from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..agents.base import Backend
from ..agents.rule import score_resource
from ..scenario import Scenario

Assignment = Dict[int, Optional[int]]

EXHAUSTIVE_LIMIT = 8


def satisfaction_matrix(scenario: Scenario, backend: Optional[Backend] = None) -> np.ndarray:
    """``U[i, j]`` = satisfaction of participant i with resource j, ignoring queues and budgets."""
    table = scenario.rating_table
    return np.array([[score_resource(p, r, table, backend)[2] for r in scenario.resources]
                     for p in scenario.participants], dtype=float)


def _square(U) -> Tuple[np.ndarray, int, int]:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n, r = U.shape
    if n < 1 or r < 1:
        raise ValueError("matrix must have at least one row and column")
    if np.any(U < 0):
        raise ValueError("satisfaction entries must be >= 0")
    size = max(n, r)
    padded = np.zeros((size, size))
    padded[:n, :r] = U
    return padded, n, r


def _hungarian_min(cost: np.ndarray) -> List[int]:
    """Row -> column minimum-cost assignment on a square matrix (potential method, O(n^3))."""
    n = cost.shape[0]
    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)  # match[col] = row, 1-based, 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta, j1 = INF, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    row_to_col = [0] * n
    for j in range(1, n + 1):
        if match[j]:
            row_to_col[match[j] - 1] = j - 1
    return row_to_col


def _result(U: np.ndarray, n: int, r: int, cols: Sequence[int]) -> Tuple[Assignment, float]:
    assignment: Assignment = {}
    total = 0.0
    for i in range(n):
        j = cols[i]
        if j < r:
            assignment[i] = j
            total += U[i, j]
        else:
            assignment[i] = None
    return assignment, float(total)


def km_baseline(U) -> Tuple[Assignment, float]:
    """Maximum-weight matching of rows (participants) to columns (resources).

    Rectangular inputs are padded with zero rows/columns; rows matched to a
    padding column map to ``None``.
    """
    padded, n, r = _square(U)
    cost = padded.max() - padded
    cols = _hungarian_min(cost)
    return _result(padded, n, r, cols)


def exhaustive_assignment(U) -> Tuple[Assignment, float]:
    """Exact maximum by enumerating every permutation; refuses matrices larger than 8 on a side."""
    padded, n, r = _square(U)
    size = padded.shape[0]
    if size > EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive assignment refuses {size} > {EXHAUSTIVE_LIMIT} rows/columns")
    best, best_cols = -1.0, None
    rows = np.arange(size)
    for perm in itertools.permutations(range(size)):
        total = padded[rows, perm].sum()
        if total > best:
            best, best_cols = total, perm
    return _result(padded, n, r, best_cols)
