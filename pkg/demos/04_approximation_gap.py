"""
When a witness is not a real violation
======================================

With three classes the approximated confidence can undershoot the exact
one by about 0.17.  The verifier therefore searches at kappa - b and then
re-checks every witness on the exact network.  This fixture lands in the
gap: the exact confidence of its best straddling pair is just below kappa.
"""

from certiglobe.encoder import SafetySpec
from certiglobe.fixtures import indeterminate_network
from certiglobe.sigmoid import error_bound
from certiglobe.verifier import GuaranteeUnavailable, verify

net = indeterminate_network()
print("b(3, 0.005) =", round(error_bound(3, 0.005), 4))

v = verify(net, SafetySpec.robustness(0.5, 0.75))
w = v.witness
print(v.status, w.classification, "exact conf", round(w.conf_exact, 4), "interval", w.interval)

# %% Below 1/2 + b nothing can be certified
try:
    verify(net, SafetySpec.robustness(0.5, 0.65))
except GuaranteeUnavailable as exc:
    print("no guarantee:", exc)
