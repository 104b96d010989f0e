"""
Global fairness with a binary sensitive attribute
=================================================

Two networks share everything except the weight on a one-hot sensitive
feature.  The biased one flips its decision when only that feature changes.
"""

from certiglobe.encoder import SafetySpec
from certiglobe.fixtures import fairness_network
from certiglobe.verifier import verify

spec = SafetySpec.fairness(sensitive=[0], epsilon=0.0, kappa=0.6)

for bias in (4.0, 0.0):
    v = verify(fairness_network(bias=bias), spec)
    print(f"bias={bias}: {v.status}")
    if v.witness is not None:
        w = v.witness
        print("  x  =", w.x, "class", w.class_x, "conf", round(w.conf_exact, 3))
        print("  x' =", w.x_prime, "class", w.class_x_prime)
