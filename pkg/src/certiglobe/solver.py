"""Case-splitting decision procedure for piecewise-linear constraint systems.

`solve` interleaves interval bound deduction, an LP over the linear part plus
relaxations of the undecided ``ReLU``/``Max``/``Abs`` constraints, and depth
first case splitting.  `enumerate_oracle` is the brute-force reference: it
tries every combination of phases, one LP each.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import PivotLimit, find_feasible
from .plc import TAU, Abs, Max, ReLU

__all__ = [
    "BudgetExceeded",
    "Deduction",
    "SolveResult",
    "SolveStats",
    "Status",
    "deduce_bounds",
    "enumerate_oracle",
    "solve",
]

log = logging.getLogger("certiglobe.solver")

BOUND_TOL = 1e-9
CHECK_TOL = 1e-9
MAX_ROUNDS = 40
ORACLE_CASE_LIMIT = 2 ** 20

ACTIVE, INACTIVE = 0, 1   # ReLU phases
POS, NEG = 0, 1           # Abs phases


class Status(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class SolveStats:
    lp_pivots: int = 0
    lp_calls: int = 0
    splits: int = 0
    deductions: int = 0
    wall_time: float = 0.0

    def counters(self):
        """Everything except wall time; identical across repeated runs."""
        return (self.lp_pivots, self.lp_calls, self.splits, self.deductions)


@dataclass
class SolveResult:
    status: Status
    assignment: np.ndarray | None = None
    stats: SolveStats = field(default_factory=SolveStats)
    reason: str | None = None

    @property
    def feasible(self):
        return self.status is Status.FEASIBLE


@dataclass
class Deduction:
    lower: np.ndarray
    upper: np.ndarray
    fixed: dict
    conflict: bool = False


# ---------------------------------------------------------------- compilation

class _Problem:
    """Dense row form of a system: ``row_lo <= A x <= row_hi`` plus constraints."""

    def __init__(self, system, tau):
        self.system = system
        self.tau = tau
        self.n = system.num_vars
        self.base = [_row(eq, tau) for eq in system.equations]
        self.pwl = list(system.pwl)
        self.disj = [[_row(eq, tau) for eq in d.alternatives] for d in system.disjunctions]
        self.ncons = len(self.pwl) + len(self.disj)
        self.lower = np.array(system.lower, dtype=float)
        self.upper = np.array(system.upper, dtype=float)

    def branches(self, cid):
        if cid >= len(self.pwl):
            return list(range(len(self.disj[cid - len(self.pwl)])))
        c = self.pwl[cid]
        if isinstance(c, Max):
            return list(range(len(c.inputs)))
        return [0, 1]

    def phase_rows(self, cid, b):
        """Linear rows that pin constraint ``cid`` to branch ``b``."""
        if cid >= len(self.pwl):
            return [self.disj[cid - len(self.pwl)][b]]
        c = self.pwl[cid]
        if isinstance(c, ReLU):
            if b == ACTIVE:
                return [((c.out, c.inp), (1.0, -1.0), 0.0, 0.0), ((c.inp,), (1.0,), 0.0, math.inf)]
            return [((c.out,), (1.0,), 0.0, 0.0), ((c.inp,), (1.0,), -math.inf, 0.0)]
        if isinstance(c, Abs):
            s = 1.0 if b == POS else -1.0
            return [((c.out, c.inp), (1.0, -s), 0.0, 0.0), ((c.inp,), (s,), 0.0, math.inf)]
        w = c.inputs[b]
        rows = [((c.out, w), (1.0, -1.0), 0.0, 0.0)]
        rows += [((w, k), (1.0, -1.0), 0.0, math.inf) for k in c.inputs if k != w]
        return rows

    def relaxation_rows(self, cid, lo, hi):
        c = self.pwl[cid]
        if isinstance(c, Max):
            return [((c.out, k), (1.0, -1.0), 0.0, math.inf) for k in c.inputs if k != c.out]
        x, y = c.inp, c.out
        l, u = lo[x], hi[x]
        rows = [((y, x), (1.0, -1.0), 0.0, math.inf)]
        if isinstance(c, Abs):
            rows.append(((y, x), (1.0, 1.0), 0.0, math.inf))
        if math.isfinite(l) and math.isfinite(u) and u > l:
            # chord over [l, u]
            fl = -l if isinstance(c, Abs) else 0.0
            slope = (u - fl) / (u - l)
            rows.append(((y, x), (1.0, -slope), -math.inf, fl - slope * l))
        return rows

    def dense(self, rows):
        A = np.zeros((len(rows), self.n))
        rlo = np.empty(len(rows))
        rhi = np.empty(len(rows))
        for r, (idx, coef, a, b) in enumerate(rows):
            A[r, list(idx)] = coef
            rlo[r], rhi[r] = a, b
        return A, rlo, rhi


def _row(eq, tau):
    lo, hi = eq.interval(tau)
    idx = tuple(v for _, v in eq.terms)
    coef = tuple(c for c, _ in eq.terms)
    return (idx, coef, lo, hi)


# ------------------------------------------------------------------ deduction

class _Conflict(Exception):
    pass


def _tol(b):
    return BOUND_TOL * (1.0 + abs(b)) if math.isfinite(b) else 0.0


def _row_pass(A, rlo, rhi, lo, hi):
    """One sweep of interval propagation over all rows (vectorised)."""
    if A.shape[0] == 0:
        return lo, hi
    pos, neg = A > 0, A < 0
    with np.errstate(invalid="ignore"):
        tmax = np.where(pos, A * hi, np.where(neg, A * lo, 0.0))
        tmin = np.where(pos, A * lo, np.where(neg, A * hi, 0.0))
    inf_max, inf_min = np.isposinf(tmax), np.isneginf(tmin)
    fmax, fmin = np.where(inf_max, 0.0, tmax), np.where(inf_min, 0.0, tmin)
    smax, cmax = fmax.sum(1), inf_max.sum(1)
    smin, cmin = fmin.sum(1), inf_min.sum(1)
    row_max = np.where(cmax > 0, math.inf, smax)
    row_min = np.where(cmin > 0, -math.inf, smin)
    scale = 1.0 + np.abs(np.where(np.isfinite(rlo), rlo, np.where(np.isfinite(rhi), rhi, 0.0)))
    if np.any(row_max < rlo - 1e-9 * scale) or np.any(row_min > rhi + 1e-9 * scale):
        raise _Conflict
    omax = np.where(cmax[:, None] - inf_max == 0, smax[:, None] - fmax, math.inf)
    omin = np.where(cmin[:, None] - inf_min == 0, smin[:, None] - fmin, -math.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        low_ax = rlo[:, None] - omax
        up_ax = rhi[:, None] - omin
        safe = np.where(A == 0, 1.0, A)
        cand_lo = np.where(pos, low_ax / safe, np.where(neg, up_ax / safe, -math.inf))
        cand_hi = np.where(pos, up_ax / safe, np.where(neg, low_ax / safe, math.inf))
    cand_lo = np.nan_to_num(cand_lo, nan=-math.inf)
    cand_hi = np.nan_to_num(cand_hi, nan=math.inf)
    new_lo = cand_lo.max(0)
    new_hi = cand_hi.min(0)
    # back off by a hair so rounding never cuts off a feasible point
    with np.errstate(over="ignore"):
        new_lo = new_lo - 1e-12 * (1.0 + np.abs(np.where(np.isfinite(new_lo), new_lo, 0.0)))
        new_hi = new_hi + 1e-12 * (1.0 + np.abs(np.where(np.isfinite(new_hi), new_hi, 0.0)))
    return np.maximum(lo, new_lo), np.minimum(hi, new_hi)


def _interval(row, lo, hi):
    idx, coef, _, _ = row
    mn = mx = 0.0
    for v, a in zip(idx, coef):
        if a > 0:
            mn += a * lo[v]
            mx += a * hi[v]
        else:
            mn += a * hi[v]
            mx += a * lo[v]
    return mn, mx


def _set(lo, hi, v, new_lo=-math.inf, new_hi=math.inf):
    if new_lo > lo[v]:
        lo[v] = new_lo
    if new_hi < hi[v]:
        hi[v] = new_hi
    if lo[v] > hi[v] + _tol(hi[v]):
        raise _Conflict
    if lo[v] > hi[v]:
        lo[v] = hi[v]


def _pwl_pass(prob, lo, hi, fixed):
    """Bound rules for each piecewise constraint; may decide phases."""
    newly = {}
    for cid, c in enumerate(prob.pwl):
        if isinstance(c, ReLU):
            x, y = c.inp, c.out
            _set(lo, hi, y, max(0.0, lo[x]))
            _set(lo, hi, x, new_hi=hi[y])
            _set(lo, hi, y, new_hi=max(0.0, hi[x]))
            phase = fixed.get(cid)
            if phase is None:
                if lo[x] >= 0.0 or lo[y] > _tol(0.0):
                    phase = ACTIVE
                elif hi[x] <= 0.0 or hi[y] <= 0.0:
                    phase = INACTIVE
                if phase is not None:
                    newly[cid] = phase
            if phase == ACTIVE:
                _set(lo, hi, x, max(lo[y], 0.0), hi[y])
                _set(lo, hi, y, lo[x], hi[x])
            elif phase == INACTIVE:
                _set(lo, hi, y, 0.0, 0.0)
                _set(lo, hi, x, new_hi=0.0)
        elif isinstance(c, Abs):
            x, y = c.inp, c.out
            _set(lo, hi, y, 0.0, max(-lo[x], hi[x]))
            _set(lo, hi, x, -hi[y], hi[y])
            phase = fixed.get(cid)
            if phase is None:
                if lo[x] >= 0.0:
                    phase = POS
                elif hi[x] <= 0.0:
                    phase = NEG
                if phase is not None:
                    newly[cid] = phase
            if phase == POS:
                _set(lo, hi, x, lo[y], hi[y])
                _set(lo, hi, y, lo[x], hi[x])
            elif phase == NEG:
                _set(lo, hi, x, -hi[y], -lo[y])
                _set(lo, hi, y, -hi[x], -lo[x])
        else:
            ins = c.inputs
            _set(lo, hi, c.out, max(lo[k] for k in ins), max(hi[k] for k in ins))
            for k in ins:
                _set(lo, hi, k, new_hi=hi[c.out])
            w = fixed.get(cid)
            if w is None:
                floor = lo[c.out] - _tol(lo[c.out])
                live = [j for j, k in enumerate(ins) if hi[k] >= floor]
                if not live:
                    raise _Conflict
                if len(live) == 1:
                    w = newly[cid] = live[0]
            if w is not None:
                k = ins[w]
                _set(lo, hi, c.out, lo[k], hi[k])
                _set(lo, hi, k, lo[c.out], hi[c.out])
    base = len(prob.pwl)
    for d, alts in enumerate(prob.disj):
        cid = base + d
        if cid in fixed:
            continue
        live = []
        for j, row in enumerate(alts):
            mn, mx = _interval(row, lo, hi)
            a, b = row[2], row[3]
            if mx < a - _tol(a) or mn > b + _tol(b):
                continue
            live.append(j)
            if mn >= a - _tol(a) and mx <= b + _tol(b):
                live = [j]   # entailed
                break
        if not live:
            raise _Conflict
        if len(live) == 1:
            newly[cid] = live[0]
    return newly


def _propagate(prob, lo, hi, fixed, stats):
    """Run row and constraint rules to a fixpoint; raises `_Conflict`."""
    rows = list(prob.base)
    for cid, b in fixed.items():
        rows += prob.phase_rows(cid, b)
    A, rlo, rhi = prob.dense(rows)
    for _ in range(MAX_ROUNDS):
        old_lo, old_hi = lo.copy(), hi.copy()
        lo, hi = _row_pass(A, rlo, rhi, lo, hi)
        if np.any(lo > hi + BOUND_TOL * (1.0 + np.abs(np.where(np.isfinite(hi), hi, 0.0)))):
            raise _Conflict
        lo = np.minimum(lo, hi)
        newly = _pwl_pass(prob, lo, hi, fixed)
        if newly:
            for cid, b in newly.items():
                fixed[cid] = b
                extra = prob.phase_rows(cid, b)
                rows += extra
                log.debug("deduce phase c%d -> %d", cid, b)
            A, rlo, rhi = prob.dense(rows)
        with np.errstate(invalid="ignore"):
            moved_lo = lo - old_lo > 1e-9 * (1.0 + np.abs(np.where(np.isfinite(lo), lo, 0.0)))
            moved_hi = old_hi - hi > 1e-9 * (1.0 + np.abs(np.where(np.isfinite(hi), hi, 0.0)))
        moved = int(np.count_nonzero(moved_lo) + np.count_nonzero(moved_hi))
        stats.deductions += moved + len(newly)
        if not moved and not newly:
            break
    return lo, hi, rows


def deduce_bounds(system, tau=TAU):
    """Interval propagation to a fixpoint.  Never removes a feasible point."""
    prob = _Problem(system, tau)
    fixed = {}
    try:
        lo, hi, _ = _propagate(prob, prob.lower.copy(), prob.upper.copy(), fixed, SolveStats())
    except _Conflict:
        return Deduction(prob.lower.copy(), prob.upper.copy(), fixed, conflict=True)
    return Deduction(lo, hi, fixed)


# --------------------------------------------------------------------- search

def _violation(prob, cid, x):
    """How far the LP point is from satisfying constraint ``cid`` (0 if it does)."""
    if cid >= len(prob.pwl):
        best = math.inf
        for idx, coef, a, b in prob.disj[cid - len(prob.pwl)]:
            v = sum(cf * x[k] for k, cf in zip(idx, coef))
            best = min(best, max(0.0, a - v, v - b))
        return best
    c = prob.pwl[cid]
    if isinstance(c, ReLU):
        want = max(0.0, x[c.inp])
    elif isinstance(c, Abs):
        want = abs(x[c.inp])
    else:
        want = max(x[k] for k in c.inputs)
    err = abs(x[c.out] - want)
    return err if err > CHECK_TOL * (1.0 + abs(want)) else 0.0


def _straddle(prob, cid, lo, hi):
    c = prob.pwl[cid]
    if isinstance(c, Max):
        his = sorted((hi[k] for k in c.inputs), reverse=True)
        top_lo = max(lo[k] for k in c.inputs)
        gap = (his[1] if len(his) > 1 else his[0]) - top_lo
        return gap if math.isfinite(gap) else math.inf
    return min(-lo[c.inp], hi[c.inp])


def _branch_order(prob, cid, x):
    branches = prob.branches(cid)
    if cid >= len(prob.pwl):
        alts = prob.disj[cid - len(prob.pwl)]

        def miss(j):
            idx, coef, a, b = alts[j]
            v = sum(cf * x[k] for k, cf in zip(idx, coef))
            return max(0.0, a - v, v - b)
        return sorted(branches, key=miss)
    c = prob.pwl[cid]
    if isinstance(c, ReLU):
        return [ACTIVE, INACTIVE] if x[c.inp] >= 0 else [INACTIVE, ACTIVE]
    if isinstance(c, Abs):
        return [POS, NEG] if x[c.inp] >= 0 else [NEG, POS]
    return sorted(branches, key=lambda j: -x[c.inputs[j]])


def solve(system, *, max_splits=None, max_time=None, tau=TAU):
    """Decide feasibility of ``system``.

    Returns FEASIBLE with a certificate that passes
    ``system.eval_assignment``, INFEASIBLE, or UNKNOWN when a budget runs out.
    """
    problems = system.validate()
    if problems:
        raise ValueError("invalid constraint system: " + "; ".join(problems[:5]))
    t0 = time.perf_counter()
    stats = SolveStats()
    prob = _Problem(system, tau)
    stack = [(prob.lower.copy(), prob.upper.copy(), {})]
    numeric_trouble = False

    def finish(status, x=None, reason=None):
        stats.wall_time = time.perf_counter() - t0
        return SolveResult(status, x, stats, reason)

    while stack:
        if max_time is not None and time.perf_counter() - t0 > max_time:
            return finish(Status.UNKNOWN, reason="time budget exhausted")
        lo, hi, fixed = stack.pop()
        fixed = dict(fixed)
        try:
            lo, hi, rows = _propagate(prob, lo, hi, fixed, stats)
        except _Conflict:
            log.debug("prune: bound conflict at depth %d", len(fixed))
            continue
        open_pwl = [cid for cid in range(len(prob.pwl)) if cid not in fixed]
        lp_rows = list(rows)
        for cid in open_pwl:
            lp_rows += prob.relaxation_rows(cid, lo, hi)
        A, rlo, rhi = prob.dense(lp_rows)
        stats.lp_calls += 1
        try:
            res = find_feasible(A, rlo, rhi, lo, hi)
        except PivotLimit:
            numeric_trouble = True
            continue
        stats.lp_pivots += res.pivots
        if not res.feasible:
            log.debug("prune: LP infeasible at depth %d", len(fixed))
            continue
        x = res.x
        open_all = open_pwl + [cid for cid in range(len(prob.pwl), prob.ncons) if cid not in fixed]
        violated = [cid for cid in open_all if _violation(prob, cid, x) > 0]
        if not violated:
            ok, why = system.eval_assignment(x, tau=tau)
            if ok:
                log.debug("feasible after %d splits", stats.splits)
                return finish(Status.FEASIBLE, x)
            log.debug("certificate rejected: %s", why)
            violated = open_all
            if not violated:
                numeric_trouble = True
                continue
        pwl_viol = [cid for cid in violated if cid < len(prob.pwl)]
        if pwl_viol:
            cid = max(pwl_viol, key=lambda c: (_straddle(prob, c, lo, hi), -c))
        else:
            cid = min(violated)
        if max_splits is not None and stats.splits >= max_splits:
            return finish(Status.UNKNOWN, reason="split budget exhausted")
        stats.splits += 1
        order = _branch_order(prob, cid, x)
        log.debug("split c%d depth %d order %s", cid, len(fixed), order)
        for b in reversed(order):
            child = dict(fixed)
            child[cid] = b
            stack.append((lo.copy(), hi.copy(), child))

    if numeric_trouble:
        return finish(Status.UNKNOWN, reason="numerical difficulties")
    return finish(Status.INFEASIBLE)


def enumerate_oracle(system, *, tau=TAU, case_limit=ORACLE_CASE_LIMIT):
    """Brute force: one LP per complete phase assignment."""
    problems = system.validate()
    if problems:
        raise ValueError("invalid constraint system: " + "; ".join(problems[:5]))
    t0 = time.perf_counter()
    prob = _Problem(system, tau)
    choices = [prob.branches(cid) for cid in range(prob.ncons)]
    total = math.prod(len(c) for c in choices)
    if total > case_limit:
        raise BudgetExceeded(f"{total} cases exceed the oracle limit of {case_limit}")
    stats = SolveStats()
    base = prob.dense(prob.base)
    blocks = [[prob.dense(prob.phase_rows(cid, b)) for b in ch] for cid, ch in enumerate(choices)]
    for combo in itertools.product(*choices):
        parts = [base] + [blocks[cid][b] for cid, b in enumerate(combo)]
        A, rlo, rhi = (np.concatenate(p) for p in zip(*parts))
        stats.lp_calls += 1
        res = find_feasible(A, rlo, rhi, prob.lower, prob.upper)
        stats.lp_pivots += res.pivots
        if res.feasible and system.eval_assignment(res.x, tau=tau)[0]:
            stats.wall_time = time.perf_counter() - t0
            return SolveResult(Status.FEASIBLE, res.x, stats)
    stats.wall_time = time.perf_counter() - t0
    return SolveResult(Status.INFEASIBLE, None, stats)
