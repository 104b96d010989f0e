"""Certify confidence-based global robustness and fairness of ReLU classifiers."""

import logging
import os

if os.environ.get("CERTIGLOBE_LOG"):
    # e.g. CERTIGLOBE_LOG=debug prints one line per split and deduction
    logging.basicConfig(format="%(name)s %(message)s")
    logging.getLogger("certiglobe").setLevel(os.environ["CERTIGLOBE_LOG"].upper())

from .encoder import SafetySpec, build_query_family
from .network import (Feature, Layer, Network, classify, conf, eval_logits,
                      generate_network, load_network, save_network, softmax)
from .plc import ConstraintSystem, LinearEquation
from .sigmoid import error_bound, remez_sigmoid, sig_hat, softmax_hat_lower, softmax_hat_upper
from .solver import Status, enumerate_oracle, solve
from .verifier import GuaranteeUnavailable, NotSafeAtMax, min_confidence, sweep, verify

__version__ = "0.1.0"

__all__ = [
    "ConstraintSystem", "Feature", "GuaranteeUnavailable", "Layer", "LinearEquation",
    "Network", "NotSafeAtMax", "SafetySpec", "Status", "build_query_family", "classify",
    "conf", "enumerate_oracle", "error_bound", "eval_logits", "generate_network",
    "load_network", "min_confidence", "remez_sigmoid", "save_network", "sig_hat", "softmax",
    "softmax_hat_lower", "softmax_hat_upper", "solve", "sweep", "verify",
]
