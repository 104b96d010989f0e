"""The eight acceptance criteria, each at its stated tolerance and time limit.

Every criterion evaluates all of its checks before asserting, so a failure
report lists everything that went wrong.  A one-line verdict per criterion is
printed in the terminal summary.
"""

import math
import time
from contextlib import contextmanager

import numpy as np

from certiglobe.encoder import SafetySpec, encode_confidence, encode_product
from certiglobe.fixtures import (boundary_network, constant_network, fairness_network,
                                 flip_network, indeterminate_network)
from certiglobe.network import classify, eval_logits, generate_network, softmax
from certiglobe.sigmoid import (error_bound, gap_function, remez_sigmoid, sig, sig_hat,
                                softmax_hat_lower, softmax_hat_upper)
from certiglobe.solver import enumerate_oracle, solve
from certiglobe.verifier import (CERTAIN, INDETERMINATE, kappa_grid, min_confidence, sweep,
                                 verify)
from attack import attack
from conftest import ACCEPTANCE
from randsys import random_system

REQUIRED_ENDPOINT = 7.423034723582278


@contextmanager
def criterion(number, limit):
    """Collect failures in a list; record and assert once at the end."""
    failures = []
    t0 = time.perf_counter()
    try:
        yield failures
    except Exception as exc:
        failures.append(f"error: {exc!r}")
    secs = time.perf_counter() - t0
    if secs >= limit:
        failures.append(f"took {secs:.1f} s, limit {limit} s")
    ACCEPTANCE[number] = (not failures, secs, "; ".join(failures[:3]))
    assert not failures, failures


def test_1_error_bound_constants():
    with criterion(1, 1.0) as bad:
        for d in (0.005, 0.0006, 1e-4, 0.1):
            if error_bound(2, d) != 2 * d:
                bad.append(f"error_bound(2, {d}) != {2 * d}")
        b = error_bound(3, 0.0001)
        if not 0.1717 <= b <= 0.1718:
            bad.append(f"error_bound(3, 1e-4) = {b}")
        for n in range(3, 11):
            g = gap_function(n, 1 / math.sqrt(n - 1))
            if abs(g - (n - 2) / (math.sqrt(n - 1) + 1) ** 2) > 1e-12:
                bad.append(f"gap maximum off for n={n}")


def test_2_remez_contract():
    with criterion(2, 5.0) as bad:
        for delta in (0.005, 0.0006):
            p = remez_sigmoid.__wrapped__(delta)   # bypass the cache so timing is honest
            xs = np.linspace(p.domain_lo, p.domain_hi, 100_000)
            err = float(np.max(np.abs(sig_hat(p, xs) - sig(xs))))
            if err > delta:
                bad.append(f"delta={delta}: grid error {err}")
            if delta == 0.0006 and abs(p.domain_hi - REQUIRED_ENDPOINT) > 1e-9:
                bad.append(f"domain endpoint {p.domain_hi!r} != {REQUIRED_ENDPOINT!r}")


def test_3_softmax_sandwich():
    with criterion(3, 10.0) as bad:
        pwl = remez_sigmoid(0.005)
        rng = np.random.default_rng(3)
        for n in (2, 3, 4, 5):
            z = rng.normal(scale=4, size=(100_000, n))
            p = softmax(z)
            for i in range(n):
                lo, hi = softmax_hat_lower(z, i, pwl), softmax_hat_upper(z, i, pwl)
                viol = int(np.sum((p[:, i] < lo) | (p[:, i] > hi)))
                if viol:
                    bad.append(f"n={n} i={i}: {viol} sandwich violations")
            top = np.argmax(z, 1)
            rows = np.arange(len(z))
            lo = np.empty(len(z))
            for i in range(n):
                sel = top == i
                lo[sel] = softmax_hat_lower(z[sel], i, pwl)
            gap = float(np.max(p[rows, top] - lo))
            if gap > error_bound(n, pwl.delta) + 1e-9:
                bad.append(f"n={n}: gap {gap} exceeds bound")


def test_4_solver_differential():
    with criterion(4, 120.0) as bad:
        for seed in range(500):
            s = random_system(seed)
            if len(s.pwl) > 12:
                bad.append(f"seed {seed}: {len(s.pwl)} PWL constraints")
            r, o = solve(s), enumerate_oracle(s)
            if r.status is not o.status:
                bad.append(f"seed {seed}: solve {r.status.value}, oracle {o.status.value}")
            if r.feasible and not s.eval_assignment(r.assignment)[0]:
                bad.append(f"seed {seed}: certificate rejected")


def test_5_encoder_round_trip():
    with criterion(5, 120.0) as bad:
        pwl = remez_sigmoid(0.005)
        rng = np.random.default_rng(5)
        for k in range(50):
            m, n = int(rng.integers(1, 6)), int(rng.integers(2, 6))
            hidden = [int(h) for h in rng.integers(1, 13, size=int(rng.integers(1, 4)))]
            net = generate_network(k, m, n, hidden, float(rng.uniform(0.5, 3.0)))
            s, (a, b) = encode_product(net)
            c = encode_confidence(s, net, pwl, None, a)
            x, xp = rng.uniform(size=m), rng.uniform(size=m)
            for v, val in [*zip(a.inputs, x), *zip(b.inputs, xp)]:
                s.tighten(v, val, val)
            r = solve(s)
            if not r.feasible:
                bad.append(f"net {k}: pinned system {r.status.value}")
                continue
            za, zb = r.assignment[a.logits], r.assignment[b.logits]
            if np.max(np.abs(za - eval_logits(net, x))) > 1e-7 or \
                    np.max(np.abs(zb - eval_logits(net, xp))) > 1e-7:
                bad.append(f"net {k}: logits differ")
            z = eval_logits(net, x)
            want = max(softmax_hat_lower(z, i, pwl) for i in range(n))
            if abs(r.assignment[c] - pwl.delta - want) > 1e-7:
                bad.append(f"net {k}: conf-hat {r.assignment[c] - pwl.delta} vs {want}")


def soundness_cases():
    """Twenty (network, spec) pairs with two or three classes."""
    rob = SafetySpec.robustness
    cases = [
        (constant_network(2, 2), rob(0.4, 0.8)),
        (constant_network(2, 3, winner=2, margin=3.0), rob(0.4, 0.8)),
        (flip_network(), rob(0.5, 0.7)),
        (flip_network(), rob(0.5, 0.8)),
        (indeterminate_network(), rob(0.5, 0.75)),
        (boundary_network(3.0, n=3), rob(0.5, 0.8)),
        (boundary_network(8.0), rob(0.2, 0.9)),
        (boundary_network(1.0), rob(0.3, 0.6)),
        (fairness_network(bias=4.0), SafetySpec.fairness([0], 0.0, 0.6)),
        (fairness_network(bias=0.0), SafetySpec.fairness([0], 0.0, 0.6)),
    ]
    for seed in range(10):
        n = 2 + seed % 2
        net = generate_network(100 + seed, 2, n, [5], 2.5)
        cases.append((net, rob(0.15, 0.75 if n == 2 else 0.8)))
    return cases


def cond_holds(net, spec, x, xp):
    eps = spec.feature_tolerances(net)
    for j, f in enumerate(net.features):
        cols = slice(f.start, f.start + f.width)
        if f.is_categorical:
            for v in (x[cols], xp[cols]):
                if sorted(v.tolist()) != [0.0] * (f.width - 1) + [1.0]:
                    return False
            same = np.array_equal(x[cols], xp[cols])
            if spec.property == "fairness" and j in spec.sensitive:
                if same:
                    return False
            elif eps[j] < 1.0 and not same:
                return False
        else:
            c = f.start
            if not (f.lo <= x[c] <= f.hi and f.lo <= xp[c] <= f.hi):
                return False
            if abs(x[c] - xp[c]) > eps[j]:
                return False
    return True


def test_6_end_to_end_soundness():
    with criterion(6, 600.0) as bad:
        cases = soundness_cases()
        assert len(cases) == 20
        indeterminate_n3 = 0
        for k, (net, spec) in enumerate(cases):
            v = verify(net, spec)
            if v.status == "Safe":
                hits = attack(net, spec, spec.kappa, pairs=100_000, seed=k)
                if hits:
                    bad.append(f"case {k}: Safe but attack found {hits} pairs")
            elif v.status == "Violated":
                w = v.witness
                if not cond_holds(net, spec, w.x, w.x_prime):
                    bad.append(f"case {k}: witness violates cond")
                if classify(net, w.x) == classify(net, w.x_prime):
                    bad.append(f"case {k}: witness classes agree")
                if net.output_dim == 2 and w.classification != CERTAIN:
                    bad.append(f"case {k}: n=2 witness {w.classification}")
                if net.output_dim == 3 and w.classification == INDETERMINATE:
                    indeterminate_n3 += 1
            else:
                bad.append(f"case {k}: {v.status}")
        if not indeterminate_n3:
            bad.append("no n=3 Indeterminate witness")


def test_7_monotonicity_and_synthesis():
    with criterion(7, 300.0) as bad:
        rob = SafetySpec.robustness
        fixtures = [(flip_network(), rob(0.5, 0.8)), (constant_network(), rob(0.3, 0.8)),
                    (boundary_network(3.0), rob(0.4, 0.8)),
                    (generate_network(101, 2, 2, [5], 2.5), rob(0.15, 0.8)),
                    (generate_network(103, 2, 3, [5], 2.5), rob(0.15, 0.8))]
        for k, (net, spec) in enumerate(fixtures):
            grid = kappa_grid(net.output_dim, spec.delta, 0.05)
            rows = sweep(net, spec, [spec.epsilon], grid)
            safe = [r.status == "Safe" for r in rows]
            if safe != sorted(safe):
                bad.append(f"fixture {k}: verdicts not monotone in kappa {safe}")
            got = min_confidence(net, spec, 0.05)
            first = next((g for g, s in zip(grid, safe) if s), None)
            if first is None:
                if not hasattr(got, "kappa_max"):
                    bad.append(f"fixture {k}: expected NotSafeAtMax, got {got}")
                continue
            if got != first:
                bad.append(f"fixture {k}: min_confidence {got}, grid minimum {first}")
            if not verify(net, spec.with_kappa(got)).safe:
                bad.append(f"fixture {k}: not Safe at kappa_min")
            lower = round(got - 0.05, 12)
            if lower in grid and verify(net, spec.with_kappa(lower)).safe:
                bad.append(f"fixture {k}: Safe below kappa_min")
        got = min_confidence(flip_network(), rob(0.5, 0.8), 0.05)
        if got != 0.75:
            bad.append(f"flip fixture returned {got}, expected 0.75")


def test_8_fairness_path():
    with criterion(8, 60.0) as bad:
        spec = SafetySpec.fairness([0], 0.0, 0.6)
        v = verify(fairness_network(bias=4.0), spec)
        if v.status != "Violated":
            bad.append(f"biased network: {v.status}")
        else:
            x, xp = v.witness.x, v.witness.x_prime
            if np.array_equal(x[:2], xp[:2]):
                bad.append("sensitive columns equal in witness")
            if not np.array_equal(x[2:], xp[2:]):
                bad.append("non-sensitive columns differ in witness")
        v = verify(fairness_network(bias=0.0), spec)
        if v.status != "Safe":
            bad.append(f"unbiased network: {v.status}")
