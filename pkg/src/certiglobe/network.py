"""Feed-forward ReLU classifiers: evaluation, generation and file I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Feature",
    "Layer",
    "Network",
    "NetworkFormatError",
    "conf",
    "classify",
    "eval_logits",
    "generate_network",
    "load_network",
    "loads_network",
    "save_network",
    "dumps_network",
    "softmax",
]

RELU = "relu"
IDENTITY = "identity"
FORMAT_VERSION = 1


class NetworkFormatError(ValueError):
    """A network file or in-memory description is inconsistent."""


@dataclass(frozen=True)
class Feature:
    """One input feature occupying ``columns`` of the input vector.

    Real features hold one column with bounds ``[lo, hi]``.  Categorical
    features are one-hot encoded over ``cardinality`` consecutive columns.
    """

    name: str
    kind: str
    start: int
    cardinality: int = 1
    lo: float = 0.0
    hi: float = 1.0

    @property
    def columns(self):
        return range(self.start, self.start + self.width)

    @property
    def width(self):
        return self.cardinality if self.kind == "categorical" else 1

    @property
    def is_categorical(self):
        return self.kind == "categorical"

    @classmethod
    def real(cls, name, start, lo=0.0, hi=1.0):
        return cls(name, "real", start, 1, float(lo), float(hi))

    @classmethod
    def categorical(cls, name, start, cardinality):
        return cls(name, "categorical", start, int(cardinality), 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=2)
        b = np.array(self.biases, dtype=float).reshape(-1)
        if w.shape[0] != b.shape[0]:
            raise NetworkFormatError(
                f"weights have {w.shape[0]} rows but biases have {b.shape[0]} entries")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NetworkFormatError("weights and biases must be finite")
        if self.activation not in (RELU, IDENTITY):
            raise NetworkFormatError(f"unknown activation {self.activation!r}")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def __eq__(self, other):
        return (isinstance(other, Layer) and self.activation == other.activation
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.biases, other.biases))


@dataclass(frozen=True)
class Network:
    """Hidden layers use ReLU, the last layer is affine and yields the logits.

    Softmax is never stored as a layer; `softmax`, `conf` and `classify`
    apply it on demand.
    """

    layers: tuple[Layer, ...]
    features: tuple[Feature, ...] = field(default=())

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise NetworkFormatError("a network needs at least one layer")
        for k, layer in enumerate(layers):
            if k and layer.in_dim != layers[k - 1].out_dim:
                raise NetworkFormatError(
                    f"layer {k} expects {layer.in_dim} inputs, "
                    f"previous layer yields {layers[k - 1].out_dim}")
            want = IDENTITY if k == len(layers) - 1 else RELU
            if layer.activation != want:
                raise NetworkFormatError(f"layer {k} must use {want}, got {layer.activation}")
        if layers[-1].out_dim < 2:
            raise NetworkFormatError("a classifier needs at least two outputs")
        m = layers[0].in_dim
        feats = tuple(self.features) or tuple(Feature.real(f"x{j}", j) for j in range(m))
        col = 0
        for f in feats:
            if f.start != col:
                raise NetworkFormatError(f"feature {f.name!r} starts at column {f.start}, expected {col}")
            if f.is_categorical and f.cardinality < 2:
                raise NetworkFormatError(f"categorical feature {f.name!r} needs cardinality >= 2")
            if not f.is_categorical and not f.lo <= f.hi:
                raise NetworkFormatError(f"feature {f.name!r} has inverted bounds")
            col += f.width
        if col != m:
            raise NetworkFormatError(f"features cover {col} columns but the input has {m}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "features", feats)

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def hidden_sizes(self):
        return [layer.out_dim for layer in self.layers[:-1]]

    def input_bounds(self):
        lo = np.zeros(self.input_dim)
        hi = np.ones(self.input_dim)
        for f in self.features:
            if not f.is_categorical:
                lo[f.start], hi[f.start] = f.lo, f.hi
        return lo, hi

    def feature(self, name):
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)


def _as_input(net, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} input columns, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def eval_logits(net, x):
    """Logits for one input (shape ``(m,)``) or a batch (shape ``(..., m)``)."""
    h = _as_input(net, x)
    for layer in net.layers:
        h = h @ layer.weights.T + layer.biases
        if layer.activation == RELU:
            h = np.maximum(h, 0.0)
    return h


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def conf(net, x):
    """Highest softmax probability of the network's output."""
    return np.max(softmax(eval_logits(net, x)), axis=-1)


def classify(net, x):
    """0-based predicted class; ties go to the lowest index."""
    return np.argmax(eval_logits(net, x), axis=-1)


def generate_network(seed, m, n, hidden_sizes, weight_scale=1.0, *, max_neurons=50):
    """Pseudo-random network with weights drawn uniformly from ``±weight_scale``.

    Biases use the same law at half the scale.  All inputs are real features
    in ``[0, 1]``.
    """
    hidden_sizes = list(hidden_sizes)
    if m <= 0 or n <= 0 or any(h <= 0 for h in hidden_sizes):
        raise ValueError("dimensions must be positive")
    if sum(hidden_sizes) > max_neurons:
        raise ValueError(f"{sum(hidden_sizes)} hidden neurons exceed the limit of {max_neurons}")
    rng = np.random.default_rng(seed)
    dims = [m, *hidden_sizes, n]
    layers = []
    for k in range(len(dims) - 1):
        w = rng.uniform(-weight_scale, weight_scale, size=(dims[k + 1], dims[k]))
        b = rng.uniform(-0.5 * weight_scale, 0.5 * weight_scale, size=dims[k + 1])
        act = IDENTITY if k == len(dims) - 2 else RELU
        layers.append(Layer(w, b, act))
    return Network(tuple(layers))


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        raise NetworkFormatError("non-finite number")
    return float(format(x, ".17g"))


def _network_dict(net):
    feats = []
    for f in net.features:
        d = {"name": f.name, "kind": f.kind, "start": f.start}
        if f.is_categorical:
            d["cardinality"] = f.cardinality
        else:
            d["lo"], d["hi"] = _num(f.lo), _num(f.hi)
        feats.append(d)
    return {
        "format": "certiglobe-network",
        "version": FORMAT_VERSION,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "feature_kinds": feats,
        "layers": [
            {
                "activation": layer.activation,
                "in_dim": layer.in_dim,
                "out_dim": layer.out_dim,
                "weights": [_num(v) for v in layer.weights.ravel()],
                "biases": [_num(v) for v in layer.biases],
            }
            for layer in net.layers
        ],
    }


def dumps_network(net):
    return json.dumps(_network_dict(net), indent=1) + "\n"


def loads_network(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"not valid JSON: {exc}") from exc
    try:
        layers = []
        for k, d in enumerate(doc["layers"]):
            w = np.asarray(d["weights"], dtype=float)
            if w.size != d["out_dim"] * d["in_dim"]:
                raise NetworkFormatError(
                    f"layers[{k}].weights has {w.size} entries, "
                    f"expected {d['out_dim']}x{d['in_dim']}")
            try:
                layers.append(Layer(w.reshape(d["out_dim"], d["in_dim"]), d["biases"], d["activation"]))
            except NetworkFormatError as exc:
                raise NetworkFormatError(f"layers[{k}]: {exc}") from exc
        feats = []
        for f in doc.get("feature_kinds", []):
            if f["kind"] == "categorical":
                feats.append(Feature.categorical(f["name"], f["start"], f["cardinality"]))
            elif f["kind"] == "real":
                feats.append(Feature.real(f["name"], f["start"], f.get("lo", 0.0), f.get("hi", 1.0)))
            else:
                raise NetworkFormatError(f"feature {f['name']!r}: unknown kind {f['kind']!r}")
        net = Network(tuple(layers), tuple(feats))
    except (KeyError, TypeError) as exc:
        raise NetworkFormatError(f"missing or malformed field: {exc}") from exc
    if net.input_dim != doc["input_dim"] or net.output_dim != doc["output_dim"]:
        raise NetworkFormatError(
            f"declared dims {doc['input_dim']}->{doc['output_dim']} disagree with layers "
            f"{net.input_dim}->{net.output_dim}")
    return net


def save_network(net, path):
    Path(path).write_text(dumps_network(net))


def load_network(path):
    return loads_network(Path(path).read_text())
