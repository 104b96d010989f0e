"""Piecewise-linear sigmoid and certified softmax bounds.

The approximant is built on the negative half of ``[logit(delta),
logit(1 - delta)]`` and mirrored through ``(0, 0.5)``.  Each segment is grown
as far as the best (minimax) line on it stays within ``delta`` of the sigmoid;
the best line of a segment is found with the Remez exchange iteration.  Knots
are placed on the curve shifted down by a fixed offset, which makes the result
continuous, convex below zero and concave above it.  That shape is what lets
the constraint encoder express it through ``max``/``min`` of the segment lines.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "PwlSigmoid",
    "RemezError",
    "Segment",
    "SoftmaxBound",
    "error_bound",
    "gap_function",
    "logit",
    "remez_line",
    "remez_sigmoid",
    "sig",
    "sig_hat",
    "softmax_bound",
    "softmax_hat_lower",
    "softmax_hat_upper",
]

# Relative margin kept below delta so rounding never pushes the error over it.
_MARGIN = 1e-9


class RemezError(RuntimeError):
    """The exchange iteration did not settle within its iteration budget."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def sig(x):
    """Logistic sigmoid, overflow-safe, for scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def logit(p):
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    slope: float
    intercept: float

    def __call__(self, x):
        return self.slope * x + self.intercept


def remez_line(f, a, b, *, max_iter=50, tol=1e-13):
    """Best uniform linear approximation of ``f`` on ``[a, b]``.

    Runs the exchange iteration with a three-point reference.  Returns
    ``(slope, intercept, error)`` where ``error`` is the levelled (minimax)
    error.  ``f`` must accept numpy arrays.
    """
    if not b > a:
        raise ValueError(f"empty interval [{a}, {b}]")
    ref = np.array([a, 0.5 * (a + b), b])
    grid = np.linspace(a, b, 65)
    err_max = math.inf
    lev = 0.0
    for _ in range(max_iter):
        # slope*r + c + (-1)^k E = f(r)
        mat = np.column_stack([ref, np.ones(3), [1.0, -1.0, 1.0]])
        slope, icpt, lev = np.linalg.solve(mat, f(ref))
        def err(x):
            return f(x) - (slope * x + icpt)
        x_star, err_max = _largest_deviation(err, grid)
        if err_max - abs(lev) <= tol * max(1.0, abs(lev)):
            return float(slope), float(icpt), float(abs(lev))
        # exchange: keep alternation of signs across the reference
        pts = list(ref)
        signs = [np.sign(err(p)) for p in pts]
        s_new = np.sign(err(x_star))
        if x_star < pts[0]:
            pts = [x_star] + pts[:2] if s_new != signs[0] else [x_star] + pts[1:]
        elif x_star > pts[2]:
            pts = pts[1:] + [x_star] if s_new != signs[2] else pts[:2] + [x_star]
        else:
            j = 0 if x_star < pts[1] else 1
            if s_new == signs[j]:
                pts[j] = x_star
            else:
                pts[j + 1] = x_star
        ref = np.array(sorted(pts))
    raise RemezError("exchange iteration did not converge", err_max - abs(lev))


def _largest_deviation(err, grid):
    """Locate max |err| by refining every local extremum of the grid values."""
    vals = np.abs(err(grid))
    last = grid.size - 1
    cands = [k for k in range(grid.size)
             if vals[k] >= vals[max(k - 1, 0)] and vals[k] >= vals[min(k + 1, last)]]
    best_x, best = float(grid[0]), float(vals[0])
    for k in cands:
        x_k, v_k = float(grid[k]), float(vals[k])
        lo_k, hi_k = grid[max(k - 1, 0)], grid[min(k + 1, last)]
        res = minimize_scalar(lambda x: -abs(err(x)), bounds=(lo_k, hi_k),
                              method="bounded", options={"xatol": 1e-14})
        if -res.fun > v_k:
            x_k, v_k = float(res.x), float(-res.fun)
        if v_k > best:
            best_x, best = x_k, v_k
    return best_x, best


@dataclass(frozen=True)
class PwlSigmoid:
    """Continuous piecewise-linear sigmoid, exact to ``delta`` on its domain.

    Outside ``[domain_lo, domain_hi]`` it saturates to 0 and 1.
    """

    delta: float
    domain_lo: float
    domain_hi: float
    segments: tuple[Segment, ...]

    @property
    def knots(self):
        return np.array([s.lo for s in self.segments] + [self.segments[-1].hi])

    @property
    def lower_half(self):
        return tuple(s for s in self.segments if s.hi <= 0.0)

    @property
    def upper_half(self):
        return tuple(s for s in self.segments if s.lo >= 0.0)

    def __call__(self, x):
        return sig_hat(self, x)

    def to_table(self):
        """Tab-separated ``seg_lo seg_hi slope intercept`` lines, with a header."""
        lines = [f"# delta={self.delta!r} domain=[{self.domain_lo!r}, {self.domain_hi!r}]",
                 "seg_lo\tseg_hi\tslope\tintercept"]
        for s in self.segments:
            lines.append(f"{s.lo!r}\t{s.hi!r}\t{s.slope!r}\t{s.intercept!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_table(cls, text):
        header, *rest = [ln for ln in text.splitlines() if ln.strip()]
        meta = dict(part.split("=", 1) for part in header.lstrip("# ").split(" ", 1))
        delta = float(meta["delta"])
        lo, hi = (float(v) for v in meta["domain"].strip("[]").split(","))
        segs = []
        for ln in rest[1:]:
            a, b, s, c = (float(v) for v in ln.split("\t"))
            segs.append(Segment(a, b, s, c))
        return cls(delta, lo, hi, tuple(segs))


def _grow_segment(a, end, target):
    """Largest ``b`` in ``(a, end]`` whose minimax line error is <= target."""
    if remez_line(sig, a, end)[2] <= target:
        return end
    lo, hi = a, end
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if remez_line(sig, a, mid)[2] <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return lo


@functools.lru_cache(maxsize=32)
def remez_sigmoid(delta, *, check_points=100_001):
    """Build the piecewise-linear sigmoid with uniform error at most ``delta``.

    Raises ``RemezError`` if the dense-grid check of the result fails.  The
    result is immutable, so calls are cached per ``delta``.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 0.5), got {delta}")
    hi = logit(1.0 - delta)
    lo = -hi
    shift = delta * (1.0 - _MARGIN)

    # Knots on [lo, 0]; their values sit on the curve shifted down by `shift`.
    xs = [lo]
    while xs[-1] < 0.0:
        b = _grow_segment(xs[-1], 0.0, shift)
        xs.append(b)
    # The last segment must end at (0, 0.5) rather than (0, 0.5 - shift);
    # halve it until the pinned line stays within the error budget.
    while True:
        a = xs[-2]
        ys = _knot_values(xs, shift)
        seg = _segment(a, 0.0, ys[-2], 0.5)
        grid = np.linspace(a, 0.0, 2001)
        if np.max(np.abs(seg(grid) - sig(grid))) <= shift + 0.5 * delta * _MARGIN:
            break
        xs.insert(len(xs) - 1, 0.5 * a)

    ys = _knot_values(xs, shift)
    lower = [_segment(xs[k], xs[k + 1], ys[k], ys[k + 1]) for k in range(len(xs) - 1)]
    upper = [Segment(-s.hi, -s.lo, s.slope, 1.0 - s.intercept) for s in reversed(lower)]
    pwl = PwlSigmoid(delta, lo, hi, tuple(lower + upper))

    grid = np.linspace(lo, hi, check_points)
    worst = float(np.max(np.abs(sig_hat(pwl, grid) - sig(grid))))
    if worst > delta:
        raise RemezError("approximation exceeds delta on the check grid", worst - delta)
    return pwl


def _knot_values(xs, shift):
    ys = [float(sig(x)) - shift for x in xs]
    ys[-1] = 0.5
    return ys


def _segment(x0, x1, y0, y1):
    slope = (y1 - y0) / (x1 - x0)
    return Segment(float(x0), float(x1), float(slope), float(y0 - slope * x0))


def sig_hat(pwl, x):
    """Evaluate the approximant; clamps to 0 below and 1 above the domain."""
    x = np.asarray(x, dtype=float)
    knots = pwl.knots
    slopes = np.array([s.slope for s in pwl.segments])
    icpts = np.array([s.intercept for s in pwl.segments])
    idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, len(slopes) - 1)
    out = slopes[idx] * x + icpts[idx]
    out = np.where(x < pwl.domain_lo, 0.0, out)
    out = np.where(x > pwl.domain_hi, 1.0, out)
    return out if out.ndim else float(out)


def _others_max(z, i):
    z = np.asarray(z, dtype=float)
    return np.max(np.delete(z, i, axis=-1), axis=-1)


def softmax_hat_lower(z, i, pwl):
    """Certified lower bound on ``softmax(z)[i]`` (0-based ``i``).

    ``sig_hat(z_i - max_{j != i} z_j - log(n - 1)) - delta``.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    if n < 2:
        raise ValueError("need at least two classes")
    t = z[..., i] - _others_max(z, i) - math.log(n - 1)
    return sig_hat(pwl, t) - pwl.delta


def softmax_hat_upper(z, i, pwl):
    """Certified upper bound ``sig_hat(z_i - max_{j != i} z_j) + delta``."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] < 2:
        raise ValueError("need at least two classes")
    return sig_hat(pwl, z[..., i] - _others_max(z, i)) + pwl.delta


def gap_function(n, m):
    """Distance between the exact upper and lower softmax bounds.

    ``m = exp(-(z_i - max_{j != i} z_j))``; the bounds are ``1/(1+m)`` and
    ``1/(1+(n-1)m)``.
    """
    return m * (n - 2) / ((m + 1.0) * ((n - 1) * m + 1.0))


def error_bound(n, delta):
    """Worst-case gap between the exact softmax and its lower bound."""
    if n < 2:
        raise ValueError(f"error bound needs n >= 2, got {n}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    return (n - 2) / (math.sqrt(n - 1) + 1.0) ** 2 + 2.0 * delta


@dataclass(frozen=True)
class SoftmaxBound:
    n: int
    delta: float
    lower_shift: float
    error_bound: float


def softmax_bound(n, delta):
    return SoftmaxBound(n, delta, math.log(n - 1) if n > 1 else 0.0, error_bound(n, delta))
