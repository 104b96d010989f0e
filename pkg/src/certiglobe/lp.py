"""Bounded-variable simplex for linear feasibility.

Solves ``row_lo <= A x <= row_hi, lo <= x <= hi`` with the tableau method used
by SMT arithmetic solvers: every row gets a slack variable ``s = A x`` that
starts basic, nonbasic variables sit at a bound (or zero when free), and the
loop repairs one out-of-bounds basic variable at a time.  Bland's rule (the
lowest-index violated basic variable, then the lowest-index suitable nonbasic
one) rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
REFACTOR_EVERY = 64


class PivotLimit(RuntimeError):
    pass


@dataclass
class LPResult:
    feasible: bool
    x: np.ndarray | None
    pivots: int


def _slack(bound):
    return FEAS_TOL * (1.0 + np.abs(np.where(np.isfinite(bound), bound, 0.0)))


def find_feasible(A, row_lo, row_hi, lo, hi, *, max_pivots=100_000):
    """Return a point satisfying all rows and bounds, or report infeasibility."""
    A = np.asarray(A, dtype=float)
    R, N = A.shape
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi + _slack(hi)):
        return LPResult(False, None, 0)
    if R == 0:
        return LPResult(True, np.clip(np.zeros(N), lo, hi), 0)

    L = np.concatenate([lo, np.asarray(row_lo, dtype=float)])
    U = np.concatenate([hi, np.asarray(row_hi, dtype=float)])
    if np.any(L > U + _slack(U)):
        return LPResult(False, None, 0)
    tol_lo, tol_hi = _slack(L), _slack(U)
    full = np.hstack([A, -np.eye(R)])
    # Row r reads: basic[r] + sum_{j nonbasic} tab[r, j] * v_j = 0.
    tab = -full.copy()
    basic = np.arange(N, N + R)
    is_basic = np.zeros(N + R, dtype=bool)
    is_basic[basic] = True

    val = np.zeros(N + R)
    val[:N] = np.clip(0.0, L[:N], U[:N])

    def update_basic():
        v = val.copy()
        v[basic] = 0.0
        val[basic] = -(tab @ v)

    update_basic()
    pivots = 0
    since_refactor = 0
    while True:
        vb = val[basic]
        low = vb < L[basic] - tol_lo[basic]
        high = vb > U[basic] + tol_hi[basic]
        bad = np.flatnonzero(low | high)
        if bad.size == 0:
            break
        r = bad[np.argmin(basic[bad])]
        b = basic[r]
        raise_it = bool(low[r])
        row = -tab[r]  # d basic / d nonbasic
        nonbasic = ~is_basic
        can_up = val < U - tol_hi
        can_down = val > L + tol_lo
        if raise_it:
            ok = nonbasic & (((row > PIVOT_TOL) & can_up) | ((row < -PIVOT_TOL) & can_down))
        else:
            ok = nonbasic & (((row < -PIVOT_TOL) & can_up) | ((row > PIVOT_TOL) & can_down))
        cand = np.flatnonzero(ok)
        if cand.size == 0:
            return LPResult(False, None, pivots)
        j = int(cand[0])

        piv = tab[r, j]
        tab[r] /= piv
        col = tab[:, j].copy()
        col[r] = 0.0
        tab -= np.outer(col, tab[r])
        basic[r] = j
        is_basic[j] = True
        is_basic[b] = False
        val[b] = L[b] if raise_it else U[b]
        pivots += 1
        since_refactor += 1
        if pivots > max_pivots:
            raise PivotLimit(f"no feasible basis after {max_pivots} pivots")
        if since_refactor >= REFACTOR_EVERY:
            tab = np.linalg.solve(full[:, basic], full)
            since_refactor = 0
        update_basic()

    # Recompute basic values from the original rows to shed accumulated drift.
    nb = ~is_basic
    try:
        vb = np.linalg.solve(full[:, basic], -full[:, nb] @ val[nb])
        val[basic] = vb
    except np.linalg.LinAlgError:
        pass
    return LPResult(True, val[:N].copy(), pivots)
