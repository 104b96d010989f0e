"""Small hand-built networks with analytically known behaviour.

They stand in for trained benchmark models: each has a decision boundary or
bias placed so the expected verdict at a given confidence is known in closed
form.
"""

from __future__ import annotations

import numpy as np

from .network import IDENTITY, RELU, Feature, Layer, Network
from .sigmoid import logit

__all__ = [
    "FLIP_KAPPA",
    "boundary_network",
    "constant_network",
    "fairness_network",
    "flip_network",
    "indeterminate_network",
]

# Supremum of the exact confidence over boundary-straddling pairs of
# `flip_network` at epsilon 0.5; sits between the grid points 0.70 and 0.75.
FLIP_KAPPA = 0.72


def constant_network(m=2, n=2, winner=0, margin=1.0):
    """Every input gets class ``winner`` with the same logits."""
    w = np.zeros((n, m))
    b = np.zeros(n)
    b[winner] = margin
    return Network((Layer(w, b, IDENTITY),))


def boundary_network(slope, n=2, center=0.5, extra_logit=-20.0):
    """1-D input on ``[0, 1]``; ``z0 - z1 = slope * (x - center)``.

    The difference is built from two hidden ReLUs so the encoding has real
    case splits.  Classes beyond the second get the constant ``extra_logit``.
    """
    hidden = Layer([[1.0], [-1.0]], [-center, center], RELU)
    w = np.zeros((n, 2))
    w[0] = [slope, -slope]
    b = np.zeros(n)
    b[2:] = extra_logit
    return Network((hidden, Layer(w, b, IDENTITY)))


def flip_network():
    """Boundary net whose best straddling pair at epsilon 0.5 has confidence 0.72.

    With ``x = 1`` and ``x'`` just below 0.5 the logit gap is ``slope / 2``,
    so ``slope = 2 * logit(0.72)``: Violated at kappa 0.70, Safe at 0.75.
    """
    return boundary_network(2.0 * logit(FLIP_KAPPA))


def indeterminate_network():
    """Three classes, logit gap at most 1.05 over an epsilon-0.5 straddle.

    The exact confidence never exceeds about 0.741, below kappa 0.75, while
    the approximated confidence reaches about 0.58, above ``0.75 - b``.
    """
    return boundary_network(2.1, n=3)


def fairness_network(bias=4.0, hidden=4, seed=0):
    """Binary one-hot sensitive feature ``s`` plus two real features.

    ``z0 - z1 = bias * (s_a - s_b) + g(x1, x2)`` where ``g`` is a small
    ReLU layer; ``bias = 0`` makes the output independent of ``s``.
    """
    rng = np.random.default_rng(seed)
    feats = (Feature.categorical("s", 0, 2), Feature.real("x1", 2), Feature.real("x2", 3))
    w1 = np.zeros((hidden + 2, 4))
    w1[:hidden, 2:] = rng.uniform(-1.0, 1.0, size=(hidden, 2))
    w1[hidden, 0] = w1[hidden + 1, 1] = 1.0     # pass the sensitive columns through
    b1 = np.zeros(hidden + 2)
    b1[:hidden] = rng.uniform(-0.5, 0.5, size=hidden)
    v = rng.uniform(-1.0, 1.0, size=hidden)
    w2 = np.zeros((2, hidden + 2))
    w2[0, :hidden] = v
    w2[0, hidden:] = [bias, -bias]
    return Network((Layer(w1, b1, RELU), Layer(w2, np.zeros(2), IDENTITY)), feats)
