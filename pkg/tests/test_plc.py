import math

import numpy as np
import pytest

from certiglobe.plc import ConstraintSystem, LinearEquation, lower_segmented
from certiglobe.sigmoid import PwlSigmoid, Segment, sig_hat
from certiglobe.solver import solve


def toy_sigmoid():
    """Four segments on [-4, 4], continuous, convex below 0 and concave above."""
    ys = {-4.0: 0.02, -1.5: 0.18, 0.0: 0.5, 1.5: 0.82, 4.0: 0.98}
    xs = sorted(ys)
    segs = []
    for a, b in zip(xs, xs[1:]):
        slope = (ys[b] - ys[a]) / (b - a)
        segs.append(Segment(a, b, slope, ys[a] - slope * a))
    return PwlSigmoid(0.05, -4.0, 4.0, tuple(segs))


def solve_lowered(pwl, x_value):
    s = ConstraintSystem()
    x = s.add_var(x_value, x_value, "x")
    out = lower_segmented(s, pwl, x)
    r = solve(s)
    assert r.feasible
    return r.assignment[out]


class TestVariables:
    def test_dense_ids(self):
        s = ConstraintSystem()
        assert [s.add_var() for _ in range(10_000)] == list(range(10_000))

    def test_fixed_variable(self):
        s = ConstraintSystem()
        v = s.add_var(3.0, 3.0)
        assert solve(s).assignment[v] == 3.0

    def test_inverted_bounds(self):
        with pytest.raises(ValueError):
            ConstraintSystem().add_var(2.0, 1.0)

    def test_const_is_shared(self):
        s = ConstraintSystem()
        assert s.const(0.5) == s.const(0.5) != s.const(1.0)


class TestValidate:
    def test_well_formed(self):
        s = ConstraintSystem()
        a, b = s.add_var(), s.add_var()
        s.add_relu(a, b)
        assert s.validate() == []

    def test_dangling_var(self):
        s = ConstraintSystem()
        a = s.add_var()
        s.add_relu(a, 7)
        assert any("out of range" in p for p in s.validate())

    def test_empty_disjunction(self):
        s = ConstraintSystem()
        s.add_disjunction([])
        assert any("no alternatives" in p for p in s.validate())

    def test_repeated_term(self):
        s = ConstraintSystem()
        a = s.add_var()
        s.add_equation([(1.0, a), (2.0, a)], "LE", 0.0)
        assert any("repeated" in p for p in s.validate())

    def test_max_output_as_input(self):
        s = ConstraintSystem()
        a, b = s.add_var(), s.add_var()
        s.add_max(a, [a, b])
        assert s.validate()


class TestEvalAssignment:
    def setup_method(self):
        self.s = ConstraintSystem()
        self.x, self.y = self.s.add_var(), self.s.add_var()
        self.s.add_relu(self.x, self.y)

    def test_relu_ok(self):
        assert self.s.eval_assignment([-1.0, 0.0]) == (True, None)

    def test_relu_fails(self):
        ok, why = self.s.eval_assignment([-1.0, -1.0])
        assert not ok and "pwl 0" in why

    def test_length(self):
        with pytest.raises(ValueError):
            self.s.eval_assignment([0.0])

    def test_strict_uses_tau(self):
        s = ConstraintSystem()
        v = s.add_var()
        s.add_equation([(1.0, v)], "GT", 1.0)
        assert not s.eval_assignment([1.0])[0]
        assert s.eval_assignment([1.0 + 1e-6])[0]

    def test_disjunction(self):
        s = ConstraintSystem()
        v = s.add_var()
        s.add_disjunction([LinearEquation(((1.0, v),), "LE", -1.0),
                           LinearEquation(((1.0, v),), "GE", 1.0)])
        assert s.eval_assignment([2.0])[0] and not s.eval_assignment([0.0])[0]


class TestMin:
    @pytest.mark.parametrize("a,b", [(1.0, 2.0), (-3.0, 2.0), (-1.0, -5.0), (4.0, 4.0)])
    def test_min_semantics(self, a, b):
        s = ConstraintSystem()
        u, v = s.add_var(a, a), s.add_var(b, b)
        out = s.add_min([u, v])
        assert solve(s).assignment[out] == pytest.approx(min(a, b), abs=1e-9)


class TestLowering:
    @pytest.mark.parametrize("x", [-2.0, 0.0, 2.0, -4.0, 4.0, -0.3, 3.1])
    def test_toy_points(self, x):
        pwl = toy_sigmoid()
        assert solve_lowered(pwl, x) == pytest.approx(sig_hat(pwl, x), abs=1e-9)

    @pytest.mark.parametrize("x,want", [(-9.0, 0.0), (9.0, 1.0)])
    def test_clamps(self, x, want):
        assert solve_lowered(toy_sigmoid(), x) == pytest.approx(want, abs=1e-9)

    def test_remez_table(self, pwl):
        xs = np.random.default_rng(0).uniform(-10, 10, 300)
        for x in xs:
            assert solve_lowered(pwl, x) == pytest.approx(sig_hat(pwl, x), abs=1e-9)

    def test_out_is_unique(self, pwl):
        # forcing the output away from sig_hat(x) must be infeasible
        for x in (-3.0, 0.4, 2.5):
            for sign in (1, -1):
                s = ConstraintSystem()
                xv = s.add_var(x, x)
                out = lower_segmented(s, pwl, xv)
                s.add_equation([(1.0, out)], "GE" if sign > 0 else "LE",
                               sig_hat(pwl, x) + sign * 1e-4)
                assert not solve(s).feasible

    def test_non_contiguous(self):
        p = toy_sigmoid()
        s0 = p.segments[0]
        bad = PwlSigmoid(p.delta, p.domain_lo, p.domain_hi,
                         (Segment(s0.lo, s0.hi - 0.1, s0.slope, s0.intercept),) + p.segments[1:])
        with pytest.raises(ValueError):
            lower_segmented(ConstraintSystem(), bad, 0)


class TestText:
    def test_round_trip(self, pwl):
        s = ConstraintSystem()
        a = s.add_var(-1.0, 2.0, "a")
        b = s.add_var(name="b")
        s.add_relu(a, b)
        c = s.add_var(0.0, math.inf)
        s.add_abs(a, c)
        lower_segmented(s, pwl, a)
        s.add_disjunction([LinearEquation(((1.0, a), (-2.5, b)), "LT", 0.1),
                           LinearEquation(((1.0, c),), "GT", 3.0)])
        back = ConstraintSystem.loads(s.dumps())
        assert back.dumps() == s.dumps()
        assert back.equations == s.equations and back.pwl == s.pwl
        assert back.disjunctions == s.disjunctions

    def test_bad_line(self):
        with pytest.raises(ValueError, match="line 2"):
            ConstraintSystem.loads("vars 0\nfoo 1 2\n")
