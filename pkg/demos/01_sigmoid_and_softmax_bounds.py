"""
Piecewise-linear sigmoid and softmax bounds
===========================================

Build the approximant, look at its segments, and watch the softmax
sandwich tighten or loosen with the number of classes.
"""

import numpy as np

from certiglobe.network import softmax
from certiglobe.sigmoid import (error_bound, remez_sigmoid, sig, sig_hat, softmax_hat_lower,
                                softmax_hat_upper)

# %% The approximant at the default precision
pwl = remez_sigmoid(0.005)
print(f"{len(pwl.segments)} segments on [{pwl.domain_lo:.4f}, {pwl.domain_hi:.4f}]")
print(pwl.to_table())

xs = np.linspace(-8, 8, 100_001)
print("max |sig_hat - sig| =", np.max(np.abs(sig_hat(pwl, xs) - sig(xs))))

# %% Bounds around the exact softmax
rng = np.random.default_rng(0)
for n in (2, 3, 5):
    z = rng.normal(scale=2, size=(10_000, n))
    p = softmax(z)[:, 0]
    lo, hi = softmax_hat_lower(z, 0, pwl), softmax_hat_upper(z, 0, pwl)
    print(f"n={n}: lower <= p <= upper on all samples: {bool(np.all((lo <= p) & (p <= hi)))}, "
          f"worst-case gap b = {error_bound(n, pwl.delta):.4f}")
