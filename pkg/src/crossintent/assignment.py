"""Rectangular linear assignment (Hungarian / Kuhn-Munkres) with a
deterministic tie-break and threshold gating."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Shortest-augmenting-path Hungarian method for ``n <= m``.

    O(n^2 m); the inner column scan is vectorised. Returns one pair per row.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: 1-based row matched to column j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return sorted((int(p[j]) - 1, j - 1) for j in range(1, m + 1) if p[j])


def _solve(cost: np.ndarray) -> list[tuple[int, int]]:
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    if n <= m:
        return _hungarian(cost)
    return sorted((r, c) for c, r in _hungarian(cost.T))


def assignment_cost(cost, pairs) -> float:
    """Exactly rounded total of ``cost[r, c]`` over ``pairs`` (order independent)."""
    cost = np.asarray(cost, dtype=float)
    return math.fsum(float(cost[r, c]) for r, c in pairs)


def linear_assignment(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment of rows to columns.

    ``min(n, m)`` pairs are returned, sorted by row. Among optimal
    assignments the lexicographically smallest list of ``(row, col)``
    pairs is chosen, so the result does not depend on solver internals.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    best = assignment_cost(cost, _solve(cost))
    tol = 1e-12 * max(1.0, float(np.abs(cost).max()) * min(n, m))

    fixed: list[tuple[int, int]] = []
    fixed_total = 0.0
    rows = list(range(n))
    cols = list(range(m))

    def sub_optimum(rs, cs):
        sub = cost[np.ix_(rs, cs)]
        pairs = [(rs[a], cs[b]) for a, b in _solve(sub)]
        return assignment_cost(cost, pairs), pairs

    _, current = sub_optimum(rows, cols)
    for r in range(n):
        rest = rows[1:]
        assigned = dict(current)
        target = assigned.get(r)
        # try smaller columns first; the current choice is known to be optimal
        trial_cols = [c for c in cols if target is None or c < target]
        chosen = None
        for c in trial_cols:
            if len(rest) > 0 and len(cols) > 1:
                sub_total, sub_pairs = sub_optimum(rest, [k for k in cols if k != c])
            else:
                sub_total, sub_pairs = 0.0, []
            # must still place min(n, m) pairs overall
            if len(fixed) + 1 + len(sub_pairs) != min(n, m):
                continue
            total = math.fsum([fixed_total, float(cost[r, c]), sub_total])
            if total <= best + tol:
                chosen = c
                current = sub_pairs
                break
        if chosen is None:
            chosen = target
            current = [pc for pc in current if pc[0] != r]
        if chosen is not None:
            fixed.append((r, chosen))
            fixed_total = math.fsum([fixed_total, float(cost[r, chosen])])
            cols = [k for k in cols if k != chosen]
        rows = rest
        if not cols:
            break
    return sorted(fixed)


@dataclass
class Assignment:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)


def assign(cost, gate=np.inf) -> Assignment:
    """Solve the assignment and drop pairs whose cost exceeds ``gate``.

    ``gate`` is a scalar or an array broadcastable to ``cost``. Entries
    above the gate are replaced by a prohibitive constant before solving,
    so the solver first maximises the number of admissible pairs and only
    then minimises their total cost; with no gated entries this is the
    plain minimum-cost assignment.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)))
    gate = np.broadcast_to(np.asarray(gate, dtype=float), cost.shape)
    over = cost > gate
    work = cost
    if over.any():
        admissible = np.abs(cost[~over])
        big = 1.0 + 2.0 * (float(admissible.sum()) if admissible.size else 0.0)
        work = np.where(over, big, cost)
    matches = [(r, c) for r, c in linear_assignment(work) if not over[r, c]]
    mr = {r for r, _ in matches}
    mc = {c for _, c in matches}
    return Assignment(
        matches,
        [r for r in range(n) if r not in mr],
        [c for c in range(m) if c not in mc],
    )
