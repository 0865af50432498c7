import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bnnverify.generate import gen_model
from bnnverify.network import (BnnModel, InputSpec, ModelError, Norm, affine, dump_input, dump_model,
                               layer_constants, load_input, load_model, margin_upper_bound, propagate,
                               propagate_scaled, save_model)


def layer2_model(row, bias, q=1):
    n = len(row)
    eye = [[int(a == b) for b in range(n)] for a in range(n)]
    return BnnModel([eye, [row], [[1], [-1]]], [[0] * n, [bias], [0, 0]], q)


class TestConstants:
    def test_mixed_row(self):
        k = layer_constants(layer2_model([1, -1, 0], 2), 2, 0)
        assert (k.lb, k.ub, k.r2q) == (-2, 2, -3)

    def test_zero_row(self):
        k = layer_constants(layer2_model([0, 0, 0], 0), 2, 0)
        assert (k.lb, k.ub, k.r2q) == (0, 0, -1)

    def test_first_layer_scaled(self):
        m = BnnModel([[[1, 1]], [[1], [0]]], [[0], [0, 0]], 2)
        k = layer_constants(m, 1, 0)
        assert (k.lb, k.ub, k.r2q) == (0, 4, 3)
        assert k.threshold(2) == Fraction(3, 2)

    def test_out_of_range(self):
        m = layer2_model([1, 0], 0)
        with pytest.raises(IndexError):
            layer_constants(m, 2, 5)
        with pytest.raises(IndexError):
            layer_constants(m, 3, 0)

    @given(st.lists(st.sampled_from([-1, 0, 1]), min_size=1, max_size=6), st.integers(-5, 5),
           st.integers(1, 4), st.integers(1, 2))
    def test_invariants(self, row, b, q, layer):
        if layer == 1:
            m = BnnModel([[row], [[1], [0]]], [[b], [0, 0]], q)
        else:
            m = layer2_model(row, b, q)
        k = layer_constants(m, layer, 0)
        assert k.lb <= 0 <= k.ub and k.lb % 2 == 0 and k.ub % 2 == 0
        assert k.r2q % 2 == 1

    @given(st.lists(st.sampled_from([-1, 0, 1]), min_size=1, max_size=6),
           st.lists(st.fractions(0, 1, max_denominator=9), min_size=6, max_size=6))
    def test_bounds_hold_on_box(self, row, xs):
        k = layer_constants(layer2_model(row, 0), 2, 0)
        val = 2 * sum(w * x for w, x in zip(row, xs))
        assert k.lb <= val <= k.ub


class TestAffine:
    def test_hand_value(self):
        assert affine(layer2_model([1, -1, 0], 2), 2, [1, 0, 0]) == [4]

    def test_zero_row(self):
        m = layer2_model([0, 0, 0], -1)
        for x in itertools.product((0, 1), repeat=3):
            assert affine(m, 2, x) == [-1]

    def test_boundary_zero(self):
        assert affine(layer2_model([1, 1], 0), 2, [0, 1]) == [0]

    def test_dimension_mismatch(self):
        with pytest.raises(ModelError):
            affine(layer2_model([1, 1], 0), 2, [0, 1, 1])


class TestPropagate:
    def test_single_neuron(self):
        m = BnnModel([[[1, -1]], [[1], [-1]]], [[0], [0, 0]], 2)
        assert propagate(m, [1, 0]).hidden == ((1,),)

    def test_zero_activation_maps_to_one(self):
        m = layer2_model([1, 1], 0)
        assert propagate(m, [0, 1]).hidden[1] == (1,)

    def test_tie_lowest_index(self):
        m = BnnModel([[[1]], [[0], [0], [0]]], [[0], [0, 0, 0]], 1)
        p = propagate(m, [1])
        assert p.output == (0, 0, 0) and p.predicted_class == 0

    def test_rejects_unquantized(self):
        m = BnnModel([[[1, -1]], [[1], [-1]]], [[0], [0, 0]], 2)
        with pytest.raises(ModelError):
            propagate(m, [Fraction(1, 3), 0])
        with pytest.raises(ModelError):
            propagate_scaled(m, [3, 0])
        with pytest.raises(ModelError):
            propagate_scaled(m, [1])

    @given(st.integers(0, 2 ** 32), st.data())
    def test_matches_rational_forward_pass(self, seed, data):
        m = gen_model([3, 3, 2, 3], 0.7, (-2, 2), seed, q=3)
        y = data.draw(st.lists(st.integers(0, 3), min_size=3, max_size=3))
        x = [Fraction(v, 3) for v in y]
        for layer in (1, 2):
            x = [Fraction(int(a >= 0)) for a in affine(m, layer, x)]
        f = affine(m, 3, x)
        p = propagate_scaled(m, y)
        assert list(p.output) == f
        assert p == propagate_scaled(m, y)


class TestMarginBound:
    def out_model(self, rows, b):
        n = len(rows[0])
        eye = [[int(a == c) for c in range(n)] for a in range(n)]
        return BnnModel([eye, rows], [[0] * n, b], 1)

    def brute(self, m, tbar):
        w, b = m.weights(2), m.biases(2)
        best = None
        for x in itertools.product((0, 1), repeat=w.shape[1]):
            f = w @ (2 * np.array(x) - 1) + b
            for t in range(w.shape[0]):
                v = int(f[t] - f[tbar])
                best = v if best is None else max(best, v)
        return best

    def test_opposite_rows(self):
        assert margin_upper_bound(self.out_model([[1, -1], [-1, 1]], [0, 0]), 0) == 4

    def test_identical_rows(self):
        assert margin_upper_bound(self.out_model([[1, 0, -1]] * 3, [2, 2, 2]), 1) == 0

    def test_bias_gap(self):
        assert margin_upper_bound(self.out_model([[1, 0], [1, 1]], [0, 3]), 0) == 4

    @given(st.integers(0, 2 ** 32), st.integers(1, 8), st.integers(2, 4))
    def test_matches_enumeration(self, seed, width, classes):
        m = gen_model([width, width, classes], 0.6, (-3, 3), seed)
        m = self.out_model(m.weights(2).tolist(), m.biases(2).tolist())
        for tbar in range(classes):
            assert margin_upper_bound(m, tbar) == self.brute(m, tbar)


class TestModelValidation:
    def test_non_ternary(self):
        with pytest.raises(ModelError):
            BnnModel([[[2]], [[1], [0]]], [[0], [0, 0]], 1)

    def test_chain_mismatch(self):
        with pytest.raises(ModelError):
            BnnModel([[[1, 0]], [[1, 1], [0, 0]]], [[0], [0, 0]], 1)

    def test_needs_hidden_layer(self):
        with pytest.raises(ModelError):
            BnnModel([[[1, 0], [0, 1]]], [[0, 0]], 1)

    def test_non_integer_bias(self):
        with pytest.raises(ModelError):
            BnnModel([[[1]], [[1], [0]]], [[0.5], [0, 0]], 1)

    def test_zero_rows_reported(self, tmp_path, caplog):
        m = layer2_model([0, 0], 0)
        assert (2, 0) in m.zero_weight_rows()
        save_model(m, tmp_path / "m.json")
        with caplog.at_level("WARNING", logger="bnnverify.network"):
            load_model(tmp_path / "m.json")
        assert "all-zero weight rows" in caplog.text


class TestFileIO:
    def test_model_roundtrip(self, tmp_path):
        m = gen_model([3, 4, 2], 0.5, (-2, 2), 7, q=3)
        path = tmp_path / "m.json"
        path.write_text(dump_model(m))
        assert load_model(path) == m
        assert json.loads(path.read_text())["format_version"] == 1

    def test_bad_version(self, tmp_path):
        m = gen_model([2, 2, 2], 0.5, (-1, 1), 1)
        doc = m.to_dict()
        doc["format_version"] = 9
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelError):
            load_model(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        with pytest.raises(ModelError):
            load_model(path)

    def test_input_json_and_csv(self, tmp_path):
        m = gen_model([3, 3, 2], 0.8, (-1, 1), 3, q=2)
        spec = InputSpec((0, 1, 2), 2, Fraction(1, 2), Norm.L1, 1)
        j = tmp_path / "in.json"
        j.write_text(dump_input(spec))
        assert load_input(j, m, Fraction(1, 2), "l1") == spec
        c = tmp_path / "in.csv"
        c.write_text("# format_version: 1\n0,1,2,1\n")
        assert load_input(c, m, Fraction(1, 2), "l1") == spec

    def test_input_default_class_is_prediction(self, tmp_path):
        m = gen_model([3, 3, 3], 0.8, (-1, 1), 3, q=2)
        j = tmp_path / "in.json"
        j.write_text('{"anchor_q": [2, 0, 1]}')
        assert load_input(j, m).true_class == propagate_scaled(m, [2, 0, 1]).predicted_class

    def test_input_out_of_range(self, tmp_path):
        m = gen_model([2, 2, 2], 0.5, (-1, 1), 1, q=2)
        j = tmp_path / "in.json"
        j.write_text('{"anchor_q": [3, 0]}')
        with pytest.raises(ModelError):
            load_input(j, m)


class TestInputSpec:
    def test_negative_eps(self):
        with pytest.raises(ModelError):
            InputSpec((0,), 1, Fraction(-1), Norm.L1, 0)

    def test_linf_range(self):
        spec = InputSpec((2,), 4, Fraction(1, 4), Norm.LINF, 0)
        assert spec.linf_range(0) == (1, 3)

    def test_l2_membership_exact(self):
        spec = InputSpec((1, 1), 2, Fraction(1, 2), Norm.L2, 0)
        assert spec.contains((2, 1)) and not spec.contains((2, 2))
