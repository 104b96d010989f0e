"""Piecewise-linear constraint systems.

A `ConstraintSystem` holds bounded real variables, linear (in)equalities,
``ReLU``/``Max``/``Abs`` constraints and disjunctions of linear equations.  It
is what the encoder produces and what the solver consumes.  Strict relations
are part of the language; they are interpreted with a slack ``tau``:
``expr > c`` means ``expr >= c + tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Abs",
    "ConstraintSystem",
    "Disjunction",
    "LinearEquation",
    "Max",
    "ReLU",
    "TAU",
    "FEAS_TOL",
    "lower_segmented",
]

TAU = 1e-6
FEAS_TOL = 1e-7
RELATIONS = ("LE", "GE", "EQ", "LT", "GT")
_SYMBOL = {"LE": "<=", "GE": ">=", "EQ": "=", "LT": "<", "GT": ">"}


@dataclass(frozen=True)
class LinearEquation:
    """``sum(coef * var) <relation> constant``."""

    terms: tuple[tuple[float, int], ...]
    relation: str
    constant: float

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((float(c), int(v)) for c, v in self.terms))
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def vars(self):
        return [v for _, v in self.terms]

    def value(self, x):
        return math.fsum(c * x[v] for c, v in self.terms)

    def interval(self, tau=TAU):
        """Allowed range of the left-hand side after resolving strictness."""
        c = self.constant
        return {
            "LE": (-math.inf, c),
            "GE": (c, math.inf),
            "EQ": (c, c),
            "LT": (-math.inf, c - tau),
            "GT": (c + tau, math.inf),
        }[self.relation]

    def holds(self, x, tol=FEAS_TOL, tau=TAU):
        lo, hi = self.interval(tau)
        v = self.value(x)
        scale = 1.0 + abs(self.constant)
        return lo - tol * scale <= v <= hi + tol * scale

    def __str__(self):
        body = " + ".join(f"{c:g}*v{v}" for c, v in self.terms)
        return f"{body} {_SYMBOL[self.relation]} {self.constant:g}"


@dataclass(frozen=True)
class ReLU:
    inp: int
    out: int

    @property
    def vars(self):
        return [self.inp, self.out]

    def holds(self, x, tol=FEAS_TOL):
        want = max(0.0, x[self.inp])
        return abs(x[self.out] - want) <= tol * (1.0 + abs(want))


@dataclass(frozen=True)
class Max:
    out: int
    inputs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(v) for v in self.inputs))

    @property
    def vars(self):
        return [self.out, *self.inputs]

    def holds(self, x, tol=FEAS_TOL):
        want = max(x[v] for v in self.inputs)
        return abs(x[self.out] - want) <= tol * (1.0 + abs(want))


@dataclass(frozen=True)
class Abs:
    inp: int
    out: int

    @property
    def vars(self):
        return [self.inp, self.out]

    def holds(self, x, tol=FEAS_TOL):
        want = abs(x[self.inp])
        return abs(x[self.out] - want) <= tol * (1.0 + want)


@dataclass(frozen=True)
class Disjunction:
    alternatives: tuple[LinearEquation, ...]

    def __post_init__(self):
        object.__setattr__(self, "alternatives", tuple(self.alternatives))

    @property
    def vars(self):
        return sorted({v for eq in self.alternatives for v in eq.vars})

    def holds(self, x, tol=FEAS_TOL, tau=TAU):
        return any(eq.holds(x, tol, tau) for eq in self.alternatives)


@dataclass
class ConstraintSystem:
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    names: list[str | None] = field(default_factory=list)
    equations: list[LinearEquation] = field(default_factory=list)
    pwl: list[ReLU | Max | Abs] = field(default_factory=list)
    disjunctions: list[Disjunction] = field(default_factory=list)
    _consts: dict = field(default_factory=dict, repr=False)

    @property
    def num_vars(self):
        return len(self.lower)

    def add_var(self, lo=-math.inf, hi=math.inf, name=None):
        lo, hi = float(lo), float(hi)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ValueError(f"invalid bounds [{lo}, {hi}] for variable {name!r}")
        self.lower.append(lo)
        self.upper.append(hi)
        self.names.append(name)
        return len(self.lower) - 1

    def const(self, value):
        """A variable fixed to ``value``; one per distinct value."""
        value = float(value)
        if value not in self._consts:
            self._consts[value] = self.add_var(value, value, f"const[{value:g}]")
        return self._consts[value]

    def tighten(self, var, lo=-math.inf, hi=math.inf):
        self.lower[var] = max(self.lower[var], float(lo))
        self.upper[var] = min(self.upper[var], float(hi))

    def add_equation(self, terms, relation, constant):
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        eq = LinearEquation(tuple(terms), relation, constant)
        self.equations.append(eq)
        return eq

    def add_relu(self, inp, out):
        self.pwl.append(ReLU(inp, out))

    def add_max(self, out, inputs):
        self.pwl.append(Max(out, tuple(inputs)))

    def add_abs(self, inp, out):
        self.pwl.append(Abs(inp, out))

    def add_disjunction(self, alternatives):
        self.disjunctions.append(Disjunction(tuple(alternatives)))

    def add_min(self, inputs, name=None):
        """``out = min(inputs)`` expressed as ``-max(-inputs)``; returns ``out``."""
        negs = []
        for v in inputs:
            n = self.add_var(-self.upper[v], -self.lower[v], None)
            self.add_equation([(1.0, n), (1.0, v)], "EQ", 0.0)
            negs.append(n)
        m = self.add_var(name=None)
        self.add_max(m, negs)
        out = self.add_var(name=name)
        self.add_equation([(1.0, out), (1.0, m)], "EQ", 0.0)
        return out

    def copy(self):
        return ConstraintSystem(list(self.lower), list(self.upper), list(self.names),
                                list(self.equations), list(self.pwl),
                                list(self.disjunctions), dict(self._consts))

    # ------------------------------------------------------------------ checks

    def validate(self):
        """List of invariant violations; empty when the system is well formed."""
        problems = []
        n = self.num_vars

        def check_var(v, where):
            if not (isinstance(v, (int, np.integer)) and 0 <= v < n):
                problems.append(f"{where}: variable {v} out of range 0..{n - 1}")

        for k, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if lo > hi:
                problems.append(f"var {k}: lower {lo} > upper {hi}")
        for k, eq in enumerate(self.equations):
            problems.extend(_check_equation(eq, f"equation {k}", check_var))
        for k, c in enumerate(self.pwl):
            where = f"pwl {k} ({type(c).__name__})"
            for v in c.vars:
                check_var(v, where)
            if isinstance(c, Max):
                if not c.inputs:
                    problems.append(f"{where}: max needs at least one input")
                if c.out in c.inputs:
                    problems.append(f"{where}: output also used as input")
            elif c.inp == c.out:
                problems.append(f"{where}: output also used as input")
        for k, d in enumerate(self.disjunctions):
            if not d.alternatives:
                problems.append(f"disjunction {k}: no alternatives")
            for j, eq in enumerate(d.alternatives):
                problems.extend(_check_equation(eq, f"disjunction {k} alternative {j}", check_var))
        return problems

    def eval_assignment(self, x, tol=FEAS_TOL, tau=TAU):
        """``(True, None)`` if ``x`` satisfies everything, else ``(False, reason)``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_vars,):
            raise ValueError(f"assignment has shape {x.shape}, expected ({self.num_vars},)")
        for k, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not lo - tol * (1 + abs(lo)) <= x[k] <= hi + tol * (1 + abs(hi)):
                return False, f"var {k} = {x[k]!r} outside [{lo}, {hi}]"
        for k, eq in enumerate(self.equations):
            if not eq.holds(x, tol, tau):
                return False, f"equation {k}: {eq} (lhs {eq.value(x)!r})"
        for k, c in enumerate(self.pwl):
            if not c.holds(x, tol):
                return False, f"pwl {k}: {c}"
        for k, d in enumerate(self.disjunctions):
            if not d.holds(x, tol, tau):
                return False, f"disjunction {k}: no alternative holds"
        return True, None

    # --------------------------------------------------------------- text I/O

    def dumps(self):
        """Line-oriented text form; `loads` reads it back."""
        out = [f"vars {self.num_vars}"]
        for k in range(self.num_vars):
            name = self.names[k]
            out.append(f"var {k} {self.lower[k]!r} {self.upper[k]!r}" + (f" {name}" if name else ""))
        for eq in self.equations:
            out.append(_dump_eq(eq))
        for c in self.pwl:
            if isinstance(c, ReLU):
                out.append(f"relu {c.inp} {c.out}")
            elif isinstance(c, Abs):
                out.append(f"abs {c.inp} {c.out}")
            else:
                out.append("max " + " ".join(str(v) for v in (c.out, *c.inputs)))
        for d in self.disjunctions:
            out.append("or " + " ; ".join(_dump_eq(eq) for eq in d.alternatives))
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text):
        sys_ = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts or parts[0] == "vars":
                continue
            try:
                tag = parts[0]
                if tag == "var":
                    k = int(parts[1])
                    if k != sys_.num_vars:
                        raise ValueError(f"variable {k} out of order")
                    sys_.add_var(float(parts[2]), float(parts[3]), " ".join(parts[4:]) or None)
                elif tag == "lin":
                    sys_.equations.append(_load_eq(parts))
                elif tag == "relu":
                    sys_.add_relu(int(parts[1]), int(parts[2]))
                elif tag == "abs":
                    sys_.add_abs(int(parts[1]), int(parts[2]))
                elif tag == "max":
                    sys_.add_max(int(parts[1]), [int(v) for v in parts[2:]])
                elif tag == "or":
                    alts = [_load_eq(chunk.split()) for chunk in line[2:].split(";")]
                    sys_.add_disjunction(alts)
                else:
                    raise ValueError(f"unknown record {tag!r}")
            except (ValueError, IndexError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
        for k, name in enumerate(sys_.names):
            if name and name.startswith("const[") and sys_.lower[k] == sys_.upper[k]:
                sys_._consts.setdefault(sys_.lower[k], k)
        return sys_


def _check_equation(eq, where, check_var):
    problems = []
    if not eq.terms:
        problems.append(f"{where}: no terms")
    seen = set()
    for _, v in eq.terms:
        check_var(v, where)
        if v in seen:
            problems.append(f"{where}: variable {v} repeated")
        seen.add(v)
    if eq.relation not in RELATIONS:
        problems.append(f"{where}: unknown relation {eq.relation!r}")
    return problems


def _dump_eq(eq):
    terms = " ".join(f"{c!r} {v}" for c, v in eq.terms)
    return f"lin {eq.relation} {eq.constant!r} {terms}"


def _load_eq(parts):
    if parts[0] != "lin":
        raise ValueError("expected 'lin'")
    rel, const = parts[1], float(parts[2])
    rest = parts[3:]
    if len(rest) % 2:
        raise ValueError("odd number of term tokens")
    terms = [(float(rest[i]), int(rest[i + 1])) for i in range(0, len(rest), 2)]
    return LinearEquation(tuple(terms), rel, const)


def lower_segmented(system, pwl, x, name=None):
    """Add ``out = sig_hat(x)`` for a piecewise-linear sigmoid; returns ``out``.

    The lower convex half becomes ``S1 = min(max(0, q_1..q_k), 0.5)`` and the
    upper concave half ``S2 = max(min(1, q_k+1..q_2k), 0.5)``, with
    ``out = S1 + S2 - 0.5``.  Each ``min`` is written as ``-max(-...)``.
    """
    lower, upper = pwl.lower_half, pwl.upper_half
    _check_tiling(pwl)
    tag = name or f"sig(v{x})"

    qs = []
    for j, s in enumerate(lower):
        q = system.add_var(name=f"{tag}.q{j}")
        system.add_equation([(1.0, q), (-s.slope, x)], "EQ", s.intercept)
        qs.append(q)
    a = system.add_var(0.0, math.inf, f"{tag}.lo_max")
    system.add_max(a, [system.const(0.0), *qs])
    # S1 = min(a, 0.5) = -max(-a, -0.5)
    neg_a = system.add_var(-math.inf, 0.0, f"{tag}.neg_lo_max")
    system.add_equation([(1.0, neg_a), (1.0, a)], "EQ", 0.0)
    neg_s1 = system.add_var(-0.5, math.inf, f"{tag}.neg_s1")
    system.add_max(neg_s1, [neg_a, system.const(-0.5)])

    # min(1, upper lines) = -max(-1, -lines); the negated lines are built directly
    nqs = []
    for j, s in enumerate(upper):
        nq = system.add_var(name=f"{tag}.nq{j}")
        system.add_equation([(1.0, nq), (s.slope, x)], "EQ", -s.intercept)
        nqs.append(nq)
    neg_b = system.add_var(-1.0, math.inf, f"{tag}.neg_hi_min")
    system.add_max(neg_b, [system.const(-1.0), *nqs])
    b = system.add_var(-math.inf, 1.0, f"{tag}.hi_min")
    system.add_equation([(1.0, b), (1.0, neg_b)], "EQ", 0.0)
    s2 = system.add_var(0.5, math.inf, f"{tag}.s2")
    system.add_max(s2, [b, system.const(0.5)])

    out = system.add_var(0.0, 1.0, tag)
    # out = S1 + S2 - 0.5 with S1 = -neg_s1
    system.add_equation([(1.0, out), (1.0, neg_s1), (-1.0, s2)], "EQ", -0.5)
    return out


def _check_tiling(pwl):
    segs = pwl.segments
    for a, b in zip(segs, segs[1:]):
        if a.hi != b.lo:
            raise ValueError(f"segments are not contiguous at {a.hi} / {b.lo}")
    if not pwl.lower_half or not pwl.upper_half or pwl.lower_half[-1].hi != 0.0:
        raise ValueError("segments must split at x = 0")
