import json
from pathlib import Path

import numpy as np
import pytest

from certiglobe.network import (Feature, Layer, Network, NetworkFormatError, classify, conf,
                                dumps_network, eval_logits, generate_network, load_network,
                                loads_network, save_network, softmax)
from certiglobe.sigmoid import sig
from oracles import hp_softmax, net_as_lists, straight_line_logits

DATA = Path(__file__).parent / "data"


def identity_net(w, b):
    return Network((Layer(w, b, "identity"),))


class TestEvalLogits:
    def test_identity_network(self):
        net = identity_net([[1.0], [0.0]], [0.0, 0.0])
        assert eval_logits(net, [3.5])[0] == 3.5

    def test_relu_clamps_negatives(self):
        net = Network((Layer([[-1.0]], [0.0], "relu"), Layer([[1.0], [0.0]], [0.0, 0.0], "identity")))
        assert eval_logits(net, [2.0])[0] == 0.0

    def test_matches_straight_line_evaluator(self):
        net = generate_network(3, 4, 3, [6, 5], 1.0)
        ref = net_as_lists(net)
        rng = np.random.default_rng(0)
        for x in rng.uniform(0, 1, size=(100, 4)):
            np.testing.assert_allclose(eval_logits(net, x), straight_line_logits(ref, x),
                                       rtol=0, atol=1e-12)

    def test_batch_equals_rows(self):
        net = generate_network(1, 3, 2, [4], 1.0)
        xs = np.random.default_rng(1).uniform(size=(7, 3))
        np.testing.assert_allclose(eval_logits(net, xs),
                                   np.array([eval_logits(net, x) for x in xs]), rtol=0, atol=1e-13)

    def test_dimension_mismatch(self):
        net = generate_network(1, 3, 2, [4], 1.0)
        with pytest.raises(ValueError):
            eval_logits(net, [0.1, 0.2])

    def test_non_finite_input(self):
        net = generate_network(1, 2, 2, [4], 1.0)
        with pytest.raises(ValueError):
            eval_logits(net, [0.1, np.nan])

    def test_piecewise_affine_along_a_line(self):
        net = generate_network(5, 3, 2, [8, 8], 1.0)
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(200):
            x, d = rng.uniform(size=3), rng.normal(size=3) * 1e-4
            pts = [x, x + d, x + 2 * d]
            pats = [_pattern(net, p) for p in pts]
            if all(p == pats[0] for p in pats):
                z = [eval_logits(net, p) for p in pts]
                np.testing.assert_allclose(z[1] - z[0], z[2] - z[1], atol=1e-9)
                checked += 1
        assert checked > 100


def _pattern(net, x):
    h, pat = np.asarray(x, dtype=float), []
    for layer in net.layers[:-1]:
        h = h @ layer.weights.T + layer.biases
        pat.append(tuple(h > 0))
        h = np.maximum(h, 0)
    return pat


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)

    def test_high_precision_value(self):
        # frozen from a 50-digit computation
        np.testing.assert_allclose(softmax([2.0, 1.0, 0.5]),
                                   [0.6285317192117624, 0.23122389762214907, 0.14024438316608848],
                                   rtol=1e-14)

    def test_two_class_is_sigmoid(self):
        rng = np.random.default_rng(3)
        for z1, z2 in rng.normal(scale=5, size=(100, 2)):
            assert abs(softmax([z1, z2])[0] - sig(z1 - z2)) < 1e-12

    def test_sums_to_one_and_open_interval(self):
        z = np.random.default_rng(4).normal(scale=10, size=(500, 5))
        p = softmax(z)
        np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-12)
        assert np.all(p >= 0) and np.all(p < 1)

    def test_no_overflow(self):
        np.testing.assert_allclose(softmax([1000.0, 0.0]), [1.0, 0.0])

    def test_against_mpmath(self):
        rng = np.random.default_rng(5)
        for z in rng.normal(scale=4, size=(50, 4)):
            np.testing.assert_allclose(softmax(z), hp_softmax(z), rtol=1e-13, atol=1e-300)

    def test_order_preserving(self):
        z = np.random.default_rng(6).normal(size=(1000, 4))
        np.testing.assert_array_equal(np.argmax(softmax(z), -1), np.argmax(z, -1))


class TestConfAndClass:
    def test_uniform_conf(self):
        assert conf(identity_net(np.eye(2), [0, 0]), [0.0, 0.0]) == pytest.approx(0.5)

    def test_conf_at_least_one_over_n(self):
        for seed in range(5):
            net = generate_network(seed, 3, 4, [5], 2.0)
            xs = np.random.default_rng(seed).uniform(size=(200, 3))
            assert np.all(conf(net, xs) >= 0.25 - 1e-15)

    def test_conf_matches_oracle(self):
        net = generate_network(8, 2, 3, [4], 1.5)
        for x in np.random.default_rng(8).uniform(size=(20, 2)):
            assert conf(net, x) == pytest.approx(max(hp_softmax(eval_logits(net, x))), abs=1e-13)

    def test_class_argmax(self):
        assert classify(identity_net(np.eye(2), [0, 0]), [3.0, 1.0]) == 0

    def test_tie_goes_to_lowest_index(self):
        assert classify(identity_net(np.eye(2), [0, 0]), [1.0, 1.0]) == 0


class TestGenerate:
    def test_deterministic_bytes(self):
        assert dumps_network(generate_network(7, 2, 2, [4], 1.0)) == \
            dumps_network(generate_network(7, 2, 2, [4], 1.0))

    def test_weights_in_range(self):
        net = generate_network(11, 5, 3, [10, 10], 0.7)
        for layer in net.layers:
            assert np.all(np.abs(layer.weights) <= 0.7)
            assert np.all(np.abs(layer.biases) <= 0.35)

    def test_rejects_zero_dims(self):
        with pytest.raises(ValueError):
            generate_network(0, 0, 2, [3])

    def test_neuron_limit(self):
        with pytest.raises(ValueError):
            generate_network(0, 2, 2, [30, 30])


class TestValidation:
    def test_dimension_chain(self):
        with pytest.raises(NetworkFormatError, match="layer 1"):
            Network((Layer(np.ones((3, 2)), np.zeros(3), "relu"),
                     Layer(np.ones((2, 4)), np.zeros(2), "identity")))

    def test_last_layer_identity(self):
        with pytest.raises(NetworkFormatError):
            Network((Layer(np.ones((2, 2)), np.zeros(2), "relu"),))

    def test_needs_two_classes(self):
        with pytest.raises(NetworkFormatError):
            identity_net([[1.0]], [0.0])

    def test_non_finite_weights(self):
        with pytest.raises(NetworkFormatError):
            Layer([[np.inf]], [0.0], "identity")

    def test_bias_length(self):
        with pytest.raises(NetworkFormatError):
            Layer(np.ones((2, 2)), [0.0], "identity")

    def test_feature_coverage(self):
        with pytest.raises(NetworkFormatError):
            Network((Layer(np.ones((2, 3)), np.zeros(2), "identity"),), (Feature.real("a", 0),))

    def test_default_features_unit_bounds(self):
        lo, hi = generate_network(0, 3, 2, [2]).input_bounds()
        assert lo.tolist() == [0, 0, 0] and hi.tolist() == [1, 1, 1]

    def test_weights_read_only(self):
        net = generate_network(0, 2, 2, [2])
        with pytest.raises(ValueError):
            net.layers[0].weights[0, 0] = 1.0


class TestSerialization:
    def test_round_trip(self, tmp_path):
        feats = (Feature.categorical("g", 0, 2), Feature.real("age", 2, -1.0, 3.5))
        base = generate_network(4, 3, 3, [5], 1.0)
        net = Network(base.layers, feats)
        save_network(net, tmp_path / "n.json")
        back = load_network(tmp_path / "n.json")
        assert back == net
        assert dumps_network(back) == dumps_network(net)

    def test_exact_floats(self):
        net = generate_network(9, 2, 2, [3], 1.0)
        back = loads_network(dumps_network(net))
        for a, b in zip(net.layers, back.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_declared_dims_checked(self):
        doc = json.loads(dumps_network(generate_network(0, 2, 2, [3])))
        doc["input_dim"] = 5
        with pytest.raises(NetworkFormatError, match="declared dims"):
            loads_network(json.dumps(doc))

    def test_weight_count_has_location(self):
        doc = json.loads(dumps_network(generate_network(0, 2, 2, [3])))
        doc["layers"][1]["weights"].pop()
        with pytest.raises(NetworkFormatError, match=r"layers\[1\]"):
            loads_network(json.dumps(doc))

    def test_not_json(self):
        with pytest.raises(NetworkFormatError):
            loads_network("{nope")

    def test_missing_field(self):
        doc = json.loads(dumps_network(generate_network(0, 2, 2, [3])))
        del doc["layers"][0]["biases"]
        with pytest.raises(NetworkFormatError):
            loads_network(json.dumps(doc))

    def test_hand_written_file(self):
        text = (DATA / "tiny_network.json").read_text()
        net = loads_network(text)
        assert eval_logits(net, [1.0, 0.0]).tolist() == [1.5, -0.5]
