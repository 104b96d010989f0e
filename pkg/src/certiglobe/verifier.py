"""End-to-end verification, counterexample triage and threshold synthesis.

The solver sees the approximated network, whose confidence can undershoot
the exact one by up to ``b = error_bound(n, delta)``.  Checking it at
``kappa - b`` therefore certifies the exact network at ``kappa``.  A witness
found this way is re-evaluated on the exact network; if its exact confidence
falls in the gap the result is reported as indeterminate rather than as a
violation.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .encoder import build_query_family, decode_witness
from .network import classify, conf
from .sigmoid import error_bound, remez_sigmoid
from .solver import Status, solve

__all__ = [
    "CERTAIN",
    "INDETERMINATE",
    "CexReport",
    "GuaranteeUnavailable",
    "NotSafeAtMax",
    "QueryStats",
    "SweepRow",
    "Verdict",
    "adjusted_threshold",
    "classify_counterexample",
    "kappa_grid",
    "min_confidence",
    "sweep",
    "verify",
    "write_sweep_csv",
]

log = logging.getLogger("certiglobe.verifier")

SAFE, VIOLATED, UNKNOWN = "Safe", "Violated", "Unknown"
CERTAIN, INDETERMINATE = "CertainViolation", "Indeterminate"


class GuaranteeUnavailable(ValueError):
    """``kappa - b`` is not above 1/2, so a Safe answer would certify nothing."""


def adjusted_threshold(n, kappa, delta):
    return kappa - error_bound(n, delta)


@dataclass
class CexReport:
    x: np.ndarray
    x_prime: np.ndarray
    class_x: int
    class_x_prime: int
    conf_exact: float
    classification: str
    interval: tuple | None = None   # (kappa - b, kappa) when indeterminate

    def to_dict(self):
        d = {"x": self.x.tolist(), "x_prime": self.x_prime.tolist(),
             "class_x": self.class_x, "class_x_prime": self.class_x_prime,
             "conf_exact": self.conf_exact}
        if self.interval is not None:
            d["interval"] = list(self.interval)
        return d


@dataclass
class QueryStats:
    class_index: int
    branch: str
    status: str
    time_ms: float
    splits: int

    def to_dict(self):
        return {"class": self.class_index, "branch": self.branch, "status": self.status,
                "time_ms": self.time_ms, "splits": self.splits}


@dataclass
class Verdict:
    status: str
    property: str
    epsilon: object
    kappa: float
    delta: float
    adjusted_threshold: float
    witness: CexReport | None = None
    per_query: list = field(default_factory=list)
    reason: str | None = None

    @property
    def safe(self):
        return self.status == SAFE

    def to_dict(self, timing=True):
        d = {"property": self.property,
             "epsilon": list(self.epsilon) if isinstance(self.epsilon, tuple) else self.epsilon,
             "kappa": self.kappa, "delta": self.delta,
             "adjusted_threshold": self.adjusted_threshold, "status": self.status}
        if self.witness is not None:
            d["witness"] = self.witness.to_dict()
            d["classification"] = self.witness.classification
        if self.reason is not None:
            d["reason"] = self.reason
        d["per_query"] = [q.to_dict() for q in self.per_query]
        if not timing:
            for q in d["per_query"]:
                q["time_ms"] = 0.0
        return d

    def to_json(self, timing=True):
        return json.dumps(self.to_dict(timing), indent=2) + "\n"


def classify_counterexample(net, x, x_prime, kappa, b):
    """Re-evaluate a witness on the exact network and label it."""
    cx, cxp = int(classify(net, x)), int(classify(net, x_prime))
    c = float(conf(net, x))
    if c > kappa and cx != cxp:
        return CexReport(x, x_prime, cx, cxp, c, CERTAIN)
    return CexReport(x, x_prime, cx, cxp, c, INDETERMINATE, (kappa - b, kappa))


def _run_family(family, *, early_exit, max_splits, max_time):
    stats, found, unknown = [], None, None
    for q in family.queries:
        res = solve(q.system, max_splits=max_splits, max_time=max_time)
        stats.append(QueryStats(q.class_index, q.branch, res.status.value,
                                round(res.stats.wall_time * 1e3, 3), res.stats.splits))
        log.info("class %d/%s: %s in %.1f ms", q.class_index, q.branch,
                 res.status.value, res.stats.wall_time * 1e3)
        if res.status is Status.FEASIBLE and found is None:
            found = (q, res.assignment)
            if early_exit:
                break
        elif res.status is Status.UNKNOWN and unknown is None:
            unknown = res.reason or "solver budget exhausted"
    return found, unknown, stats


def verify(net, spec, *, early_exit=True, fidelity=False, max_splits=None,
           max_time=None, pwl=None, confirm=True):
    """Decide the 2-safety property of ``net`` at confidence ``spec.kappa``.

    Raises ``GuaranteeUnavailable`` when ``kappa - b <= 1/2``.  With
    ``confirm`` an indeterminate witness triggers one more search at the
    unadjusted threshold ``kappa``; any witness found there has exact
    confidence above ``kappa`` and is a certain violation.
    """
    n = net.output_dim
    b = error_bound(n, spec.delta)
    thr = spec.kappa - b
    if not thr > 0.5:
        raise GuaranteeUnavailable(
            f"kappa - b = {spec.kappa} - {b:.6g} = {thr:.6g} is not above 1/2")
    pwl = pwl if pwl is not None else remez_sigmoid(spec.delta)
    family = build_query_family(net, spec, thr, pwl=pwl, fidelity=fidelity)
    found, unknown, stats = _run_family(family, early_exit=early_exit,
                                        max_splits=max_splits, max_time=max_time)
    verdict = Verdict(SAFE, spec.property, spec.epsilon, spec.kappa, spec.delta, thr,
                      per_query=stats)
    if found is None:
        if unknown is not None:
            verdict.status, verdict.reason = UNKNOWN, unknown
        return verdict

    verdict.status = VIOLATED
    x, xp = decode_witness(family, found[1])
    report = classify_counterexample(net, x, xp, spec.kappa, b)
    if report.classification == INDETERMINATE and confirm and spec.kappa + spec.delta < 1.0:
        strict = build_query_family(net, spec, spec.kappa, pwl=pwl)
        hit, _, more = _run_family(strict, early_exit=True,
                                   max_splits=max_splits, max_time=max_time)
        verdict.per_query += [QueryStats(q.class_index, "confirm", q.status, q.time_ms, q.splits)
                              for q in more]
        if hit is not None:
            cx, cxp = decode_witness(strict, hit[1])
            confirmed = classify_counterexample(net, cx, cxp, spec.kappa, b)
            if confirmed.classification == CERTAIN:
                report = confirmed
    verdict.witness = report
    return verdict


# --------------------------------------------------------- threshold search

@dataclass(frozen=True)
class NotSafeAtMax:
    """No grid threshold below 1 could be certified."""

    kappa_max: float | None
    granularity: float


def kappa_grid(n, delta, granularity):
    """Grid multiples strictly between ``max(1/2, 1/2 + b)`` and 1."""
    if not granularity > 0:
        raise ValueError("granularity must be positive")
    floor = max(0.5, 0.5 + error_bound(n, delta))
    ks = range(math.floor(floor / granularity), math.ceil(1.0 / granularity) + 1)
    grid = [round(k * granularity, 12) for k in ks]
    return [k for k in grid if floor < k < 1.0 and k - error_bound(n, delta) > 0.5]


def min_confidence(net, spec, granularity=0.05, **verify_kw):
    """Smallest grid ``kappa`` certified Safe, or ``NotSafeAtMax``.

    Relies on monotonicity (Safe at ``kappa`` implies Safe above it) and
    binary-searches the grid after checking its top point.
    """
    grid = kappa_grid(net.output_dim, spec.delta, granularity)
    if not grid:
        return NotSafeAtMax(None, granularity)
    cache = {}

    def safe(k):
        if k not in cache:
            cache[k] = verify(net, spec.with_kappa(grid[k]), **verify_kw).safe
        return cache[k]

    if not safe(len(grid) - 1):
        return NotSafeAtMax(grid[-1], granularity)
    lo, hi = -1, len(grid) - 1    # grid[hi] is Safe; everything <= lo is not
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if safe(mid):
            hi = mid
        else:
            lo = mid
    return grid[hi]


# -------------------------------------------------------------------- sweep

@dataclass
class SweepRow:
    epsilon: float
    kappa: float
    status: str
    time_ms: float


def sweep(net, spec, epsilons, kappas, **verify_kw):
    """Verify every ``(epsilon, kappa)`` cell; failures are recorded, not raised."""
    if not epsilons or not kappas:
        raise ValueError("sweep grids must be non-empty")
    rows = []
    for eps in epsilons:
        for kappa in kappas:
            t0 = time.perf_counter()
            try:
                status = verify(net, _respec(spec, eps, kappa), **verify_kw).status
            except GuaranteeUnavailable:
                status = "GuaranteeUnavailable"
            except Exception as exc:   # one bad cell must not abort the grid
                log.warning("cell eps=%s kappa=%s failed: %s", eps, kappa, exc)
                status = "Error"
            rows.append(SweepRow(eps, kappa, status, round((time.perf_counter() - t0) * 1e3, 3)))
    return rows


def _respec(spec, eps, kappa):
    return type(spec)(spec.property, eps, kappa, spec.delta, spec.sensitive)


def write_sweep_csv(rows, out=None, timing=True):
    """CSV text with header ``epsilon,kappa,status,time_ms``; also written to ``out``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epsilon", "kappa", "status", "time_ms"])
    for r in rows:
        w.writerow([repr(float(r.epsilon)), repr(float(r.kappa)), r.status,
                    r.time_ms if timing else 0])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text
