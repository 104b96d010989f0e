"""Constraint encoding of confidence-based 2-safety queries.

A query asks for two inputs ``x, x'`` that satisfy the closeness condition,
where the approximated confidence at ``x`` exceeds a threshold and the two
classes differ.  The network is duplicated (self-composition) so a single
constraint system talks about both executions; class disequality is split
into one system per class of ``x``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import Network
from .plc import ConstraintSystem, LinearEquation, lower_segmented
from .sigmoid import PwlSigmoid, remez_sigmoid

__all__ = [
    "CopyMap",
    "EncodingError",
    "Query",
    "QueryFamily",
    "SafetySpec",
    "build_query_family",
    "decode_witness",
    "dump_family",
    "encode_class_disequality",
    "encode_cond",
    "encode_confidence",
    "encode_product",
    "expected_var_count",
]

ROBUSTNESS = "robustness"
FAIRNESS = "fairness"
# Non-sensitive categorical features must match exactly in fairness queries.
CATEGORICAL_FAIRNESS_EPS = 0.5


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class SafetySpec:
    """What to verify: the closeness condition, confidence ``kappa`` and ``delta``.

    ``epsilon`` is a scalar (broadcast to every feature) or one tolerance per
    feature of the network, in feature order.  ``sensitive`` holds feature
    indices and is only meaningful for fairness.
    """

    property: str
    epsilon: float | tuple = 0.0
    kappa: float = 0.75
    delta: float = 0.005
    sensitive: tuple = ()

    def __post_init__(self):
        if self.property not in (ROBUSTNESS, FAIRNESS):
            raise EncodingError(f"unknown property {self.property!r}")
        eps = self.epsilon
        eps = float(eps) if np.isscalar(eps) else tuple(float(e) for e in eps)
        if np.any(np.asarray(eps) < 0) or not np.all(np.isfinite(eps)):
            raise EncodingError("tolerances must be finite and non-negative")
        if not 0.0 < self.kappa < 1.0:
            raise EncodingError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not 0.0 < self.delta < 0.5:
            raise EncodingError(f"delta must lie in (0, 0.5), got {self.delta}")
        if self.property == FAIRNESS and not self.sensitive:
            raise EncodingError("fairness needs at least one sensitive feature")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "sensitive", tuple(int(s) for s in self.sensitive))

    @classmethod
    def robustness(cls, epsilon, kappa, delta=0.005):
        return cls(ROBUSTNESS, epsilon, kappa, delta)

    @classmethod
    def fairness(cls, sensitive, epsilon, kappa, delta=0.005):
        return cls(FAIRNESS, epsilon, kappa, delta, tuple(sensitive))

    def with_kappa(self, kappa):
        return SafetySpec(self.property, self.epsilon, kappa, self.delta, self.sensitive)

    def feature_tolerances(self, net):
        """Per-feature tolerance after broadcasting and the fairness rules."""
        k = len(net.features)
        if np.isscalar(self.epsilon):
            eps = [self.epsilon] * k
        elif len(self.epsilon) == k:
            eps = list(self.epsilon)
        else:
            raise EncodingError(f"expected {k} tolerances (one per feature), got {len(self.epsilon)}")
        if self.property == FAIRNESS:
            for j, f in enumerate(net.features):
                if f.is_categorical and j not in self.sensitive:
                    eps[j] = CATEGORICAL_FAIRNESS_EPS
        return eps


@dataclass
class CopyMap:
    """Solver variables of one copy of the network."""

    inputs: list
    pre: list = field(default_factory=list)    # per hidden layer, pre-activation vars
    post: list = field(default_factory=list)   # per hidden layer, post-ReLU vars
    logits: list = field(default_factory=list)

    def node_vars(self):
        out = list(self.inputs)
        for a, b in zip(self.pre, self.post):
            out += a + b
        return out + list(self.logits)


@dataclass
class Query:
    class_index: int
    branch: str          # "gt": class(x') != i; "lt": the vacuous literal branch
    system: ConstraintSystem


@dataclass
class QueryFamily:
    net: Network
    spec: SafetySpec
    threshold: float
    pwl: PwlSigmoid
    maps: tuple
    queries: list

    def __len__(self):
        return len(self.queries)


# ----------------------------------------------------------------- encoders

def _encode_copy(system, net, tag):
    lo, hi = net.input_bounds()
    inputs = [system.add_var(lo[j], hi[j], f"{tag}x{j}") for j in range(net.input_dim)]
    cm = CopyMap(inputs)
    prev = inputs
    for k, layer in enumerate(net.layers):
        last = k == len(net.layers) - 1
        cur = []
        for r in range(layer.out_dim):
            name = f"{tag}z{r}" if last else f"{tag}h{k}.{r}.in"
            v = system.add_var(name=name)
            # v - sum w * prev = b
            terms = [(1.0, v)] + [(-w, p) for w, p in zip(layer.weights[r], prev) if w != 0.0]
            system.add_equation(terms, "EQ", float(layer.biases[r]))
            cur.append(v)
        if last:
            cm.logits = cur
        else:
            outs = [system.add_var(0.0, math.inf, f"{tag}h{k}.{r}.out") for r in range(layer.out_dim)]
            for a, b in zip(cur, outs):
                system.add_relu(a, b)
            cm.pre.append(cur)
            cm.post.append(outs)
            prev = outs
    return cm


def encode_product(net, system=None):
    """Two disjoint copies of the network; returns ``(system, (map, map'))``."""
    system = system if system is not None else ConstraintSystem()
    return system, (_encode_copy(system, net, ""), _encode_copy(system, net, "p."))


def _one_hot(system, cols):
    system.add_equation([(1.0, c) for c in cols], "EQ", 1.0)
    system.add_disjunction([LinearEquation(((1.0, c),), "GE", 1.0) for c in cols])


def encode_cond(system, net, spec, maps):
    """Closeness of the two inputs (robustness) or a sensitive flip (fairness)."""
    a, b = maps
    eps = spec.feature_tolerances(net)
    for j, f in enumerate(net.features):
        cols = list(f.columns)
        if spec.property == FAIRNESS and j in spec.sensitive:
            if not f.is_categorical:
                raise EncodingError(f"sensitive feature {f.name!r} must be categorical")
            system.add_equation([(1.0, a.inputs[c]) for c in cols], "EQ", 1.0)
            system.add_equation([(1.0, b.inputs[c]) for c in cols], "EQ", 1.0)
            system.add_disjunction([
                LinearEquation(((1.0, a.inputs[u]), (1.0, b.inputs[v])), "GE", 2.0)
                for u, v in itertools.permutations(cols, 2)
            ])
            continue
        if f.is_categorical:
            _one_hot(system, [a.inputs[c] for c in cols])
            if eps[j] < 1.0:
                for c in cols:
                    system.add_equation([(1.0, a.inputs[c]), (-1.0, b.inputs[c])], "EQ", 0.0)
            else:
                _one_hot(system, [b.inputs[c] for c in cols])
            continue
        d = [(1.0, a.inputs[f.start]), (-1.0, b.inputs[f.start])]
        if eps[j] == 0.0:
            system.add_equation(d, "EQ", 0.0)
        else:
            system.add_equation(d, "LE", eps[j])
            system.add_equation(d, "GE", -eps[j])
    if spec.property == FAIRNESS:
        for s in spec.sensitive:
            if not 0 <= s < len(net.features):
                raise EncodingError(f"sensitive feature index {s} out of range")


def encode_confidence(system, net, pwl, threshold, cmap):
    """Approximated confidence of one copy; returns its variable.

    ``conf_hat = max_i sig_hat(z_i - max_{j != i} z_j - log(n - 1)) - delta``.
    The ``- delta`` is folded into the constraint ``conf_hat > threshold``,
    which is only added when ``threshold`` is not None.
    """
    z = cmap.logits
    n = len(z)
    shift = math.log(n - 1)
    ss = []
    for i in range(n):
        others = [z[j] for j in range(n) if j != i]
        if len(others) == 1:
            m = others[0]
        else:
            m = system.add_var(name=f"max_not{i}")
            system.add_max(m, others)
        t = system.add_var(name=f"t{i}")
        system.add_equation([(1.0, t), (-1.0, z[i]), (1.0, m)], "EQ", -shift)
        ss.append(lower_segmented(system, pwl, t, f"s{i}"))
    c = system.add_var(0.0, 1.0, "conf_hat_plus_delta")
    system.add_max(c, ss)
    if threshold is not None:
        if not 0.5 < threshold < 1.0:
            raise EncodingError(f"threshold must lie in (0.5, 1), got {threshold}")
        system.add_equation([(1.0, c)], "GT", threshold + pwl.delta)
    return c


def encode_class_disequality(system, i, maps, branch="gt"):
    """``class(x) = i`` on the first copy and ``class(x') != i`` on the second.

    The second copy uses ``max(z') - z'_i > 0``.  ``branch="lt"`` emits the
    literal ``< 0`` alternative instead, which is unsatisfiable by design.
    """
    a, b = maps
    n = len(a.logits)
    if not 0 <= i < n:
        raise EncodingError(f"class index {i} out of range for {n} classes")
    mz = system.add_var(name="max_z")
    system.add_max(mz, list(a.logits))
    system.add_equation([(1.0, mz), (-1.0, a.logits[i])], "EQ", 0.0)
    mzp = system.add_var(name="p.max_z")
    system.add_max(mzp, list(b.logits))
    rel = {"gt": "GT", "lt": "LT"}[branch]
    system.add_equation([(1.0, mzp), (-1.0, b.logits[i])], rel, 0.0)


def build_query_family(net, spec, threshold, *, pwl=None, fidelity=False):
    """One system per class (two with ``fidelity``), sharing the same prefix.

    ``threshold`` is the already-adjusted confidence bound for the
    approximated network.
    """
    pwl = pwl if pwl is not None else remez_sigmoid(spec.delta)
    base, maps = encode_product(net)
    encode_cond(base, net, spec, maps)
    encode_confidence(base, net, pwl, threshold, maps[0])
    queries = []
    for i in range(net.output_dim):
        for branch in (("gt", "lt") if fidelity else ("gt",)):
            s = base.copy()
            encode_class_disequality(s, i, maps, branch)
            queries.append(Query(i, branch, s))
    return QueryFamily(net, spec, threshold, pwl, maps, queries)


def expected_var_count(net, pwl, fidelity=False):
    """Closed-form size of each family member, from the lowering rules."""
    n = net.output_dim
    copy = net.input_dim + 2 * sum(net.hidden_sizes) + n
    k_lo, k_hi = len(pwl.lower_half), len(pwl.upper_half)
    # q lines, lo_max, neg_lo_max, neg_s1, nq lines, neg_hi_min, hi_min, s2, out
    per_sig = k_lo + k_hi + 7
    conf = n * (per_sig + 1) + (n if n > 2 else 0) + 1
    consts = 4   # 0, -0.5, -1, 0.5 shared by every lowering
    return 2 * copy + conf + consts + 2


def decode_witness(family, assignment):
    """Input pair of a feasible query, projected so the condition holds exactly.

    Categorical columns are rounded to 0/1 and each real feature of ``x'`` is
    clipped into ``[x - eps, x + eps]`` and the feature bounds, which removes
    the LP's last-digit slack.
    """
    a, b = family.maps
    x = np.array([assignment[v] for v in a.inputs])
    xp = np.array([assignment[v] for v in b.inputs])
    net, spec = family.net, family.spec
    eps = spec.feature_tolerances(net)
    for j, f in enumerate(net.features):
        if f.is_categorical:
            for arr in (x, xp):
                cols = slice(f.start, f.start + f.width)
                hot = np.argmax(arr[cols])
                arr[cols] = 0.0
                arr[f.start + hot] = 1.0
        else:
            c = f.start
            x[c] = min(max(x[c], f.lo), f.hi)
            if spec.property == FAIRNESS and j in spec.sensitive:
                continue
            lo, hi = max(f.lo, x[c] - eps[j]), min(f.hi, x[c] + eps[j])
            xp[c] = min(max(xp[c], lo), hi)
            # x +/- eps may round outward; step back until the check holds exactly
            while abs(x[c] - xp[c]) > eps[j]:
                xp[c] = np.nextafter(xp[c], x[c])
    return x, xp


def dump_family(family, directory):
    """Write one constraint file per query; returns the written paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for q in family.queries:
        p = out / f"query_class{q.class_index}_{q.branch}.plc"
        p.write_text(q.system.dumps())
        paths.append(p)
    return paths
