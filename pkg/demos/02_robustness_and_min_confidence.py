"""
Global robustness of a one-dimensional boundary
===============================================

The flip fixture separates two classes at x = 0.5.  Pairs closer than 0.5
can straddle the boundary, but only with confidence up to 0.72.  Sweeping
the threshold shows where the verdict changes, and the binary search finds
the same point.
"""

from certiglobe.encoder import SafetySpec
from certiglobe.fixtures import flip_network
from certiglobe.verifier import min_confidence, sweep, verify, write_sweep_csv

net = flip_network()
spec = SafetySpec.robustness(epsilon=0.5, kappa=0.7)

# %% A single query
v = verify(net, spec)
print(v.status, v.witness.classification, "conf", round(v.witness.conf_exact, 4))
print("x =", v.witness.x, " x' =", v.witness.x_prime)

# %% Sweep over epsilon and kappa
rows = sweep(net, spec, [0.1, 0.3, 0.5], [0.55, 0.65, 0.75, 0.85])
print(write_sweep_csv(rows))

# %% Smallest certified threshold on the 0.05 grid
print("kappa_min =", min_confidence(net, spec, granularity=0.05))
