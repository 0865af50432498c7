"""Binarized network representation, exact propagation and model/input I/O.

Layers are numbered as in the usual BNN notation: layer 0 is the input,
layers ``1..L`` are hidden and layer ``L+1`` is the output layer.  Python
indices (neurons, classes) are 0-based.

All arithmetic is integer.  A quantized input ``x0 = y / q`` is carried as
its integer numerators ``y``; layer-1 pre-activations are computed scaled
by ``q`` so every comparison is integer-vs-integer.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelError(ValueError):
    """Raised for malformed networks, inputs or files."""


class Norm(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, value: "Norm | str") -> "Norm":
        if isinstance(value, Norm):
            return value
        key = str(value).strip().lower().replace("∞", "inf")
        aliases = {"1": "l1", "2": "l2", "inf": "linf", "l_inf": "linf", "infinity": "linf"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ModelError(f"unknown norm {value!r}") from None


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


@dataclass(frozen=True)
class NeuronConstants:
    """Big-M constants of one hidden neuron.

    ``r2q`` holds ``q*R`` on layer 1 and ``R`` on deeper layers; it is odd
    in both cases.  ``lb``/``ub`` are unscaled.
    """

    lb: int
    ub: int
    r2q: int
    layer: int

    def threshold(self, q: int) -> Fraction:
        """The unscaled R constant."""
        return Fraction(self.r2q, q) if self.layer == 1 else Fraction(self.r2q)


class BnnModel:
    """Dense ternary-weight BNN with integer biases and quantization ``q``."""

    def __init__(self, weights: Sequence, biases: Sequence, q: int):
        if len(weights) != len(biases):
            raise ModelError("weights and biases must have one entry per layer")
        if len(weights) < 2:
            raise ModelError("a BNN needs at least one hidden layer (L >= 1)")
        if not isinstance(q, (int, np.integer)) or isinstance(q, bool) or q < 1:
            raise ModelError(f"q must be a positive integer, got {q!r}")
        self.q = int(q)
        ws, bs = [], []
        prev = None
        for idx, (w, b) in enumerate(zip(weights, biases), start=1):
            w_arr = np.asarray(w)
            b_arr = np.asarray(b)
            if w_arr.ndim != 2 or w_arr.shape[0] < 1 or w_arr.shape[1] < 1:
                raise ModelError(f"layer {idx}: weights must be a non-empty matrix")
            if not np.all(np.isin(w_arr, (-1, 0, 1))):
                raise ModelError(f"layer {idx}: weights must be in {{-1, 0, 1}}")
            if b_arr.shape != (w_arr.shape[0],):
                raise ModelError(f"layer {idx}: bias length {b_arr.shape} != {w_arr.shape[0]}")
            if b_arr.dtype.kind not in "iu":
                if not np.all(np.equal(np.mod(b_arr, 1), 0)):
                    raise ModelError(f"layer {idx}: biases must be integers")
            if prev is not None and w_arr.shape[1] != prev:
                raise ModelError(f"layer {idx}: expects {w_arr.shape[1]} inputs, previous layer has {prev}")
            prev = w_arr.shape[0]
            w_int = w_arr.astype(np.int64)
            w_int.setflags(write=False)
            b_int = b_arr.astype(np.int64)
            b_int.setflags(write=False)
            ws.append(w_int)
            bs.append(b_int)
        self._weights = tuple(ws)
        self._biases = tuple(bs)
        self.dims = (ws[0].shape[1],) + tuple(w.shape[0] for w in ws)
        self._constants = {}

    # -- structure --------------------------------------------------------
    @property
    def num_hidden(self) -> int:
        """L, the number of hidden layers."""
        return len(self._weights) - 1

    @property
    def num_classes(self) -> int:
        return self.dims[-1]

    def weights(self, layer: int) -> np.ndarray:
        self._check_layer(layer, allow_output=True)
        return self._weights[layer - 1]

    def biases(self, layer: int) -> np.ndarray:
        self._check_layer(layer, allow_output=True)
        return self._biases[layer - 1]

    def _check_layer(self, layer: int, allow_output: bool = False) -> None:
        top = self.num_hidden + 1 if allow_output else self.num_hidden
        if not 1 <= layer <= top:
            raise IndexError(f"layer {layer} out of range 1..{top}")

    def zero_weight_rows(self) -> list[tuple[int, int]]:
        """(layer, neuron) pairs whose weight row is identically zero."""
        out = []
        for layer, w in enumerate(self._weights, start=1):
            for i in np.flatnonzero(~w.any(axis=1)):
                out.append((layer, int(i)))
        return out

    def __eq__(self, other):
        if not isinstance(other, BnnModel):
            return NotImplemented
        return (self.q == other.q and self.dims == other.dims
                and all(np.array_equal(a, b) for a, b in zip(self._weights, other._weights))
                and all(np.array_equal(a, b) for a, b in zip(self._biases, other._biases)))

    def __repr__(self):
        return f"BnnModel(dims={self.dims}, q={self.q})"

    # -- constants --------------------------------------------------------
    def constants(self, layer: int, neuron: int) -> NeuronConstants:
        key = (layer, neuron)
        if key not in self._constants:
            self._constants[key] = layer_constants(self, layer, neuron)
        return self._constants[key]

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "q": self.q,
            "layers": [{"weights": w.tolist(), "biases": b.tolist()}
                       for w, b in zip(self._weights, self._biases)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BnnModel":
        if not isinstance(data, dict):
            raise ModelError("model document must be a JSON object")
        version = data.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ModelError(f"unsupported model format_version {version!r}")
        try:
            layers = data["layers"]
            q = data["q"]
            weights = [layer["weights"] for layer in layers]
            biases = [layer["biases"] for layer in layers]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model document: {exc}") from None
        for layer in layers:
            for row in layer["weights"]:
                if any(isinstance(v, bool) or not isinstance(v, int) for v in row):
                    raise ModelError("weights must be JSON integers")
            if any(isinstance(v, bool) or not isinstance(v, int) for v in layer["biases"]):
                raise ModelError("biases must be JSON integers")
        return cls(weights, biases, q)


def layer_constants(model: BnnModel, layer: int, neuron: int) -> NeuronConstants:
    """LB, UB and R of a hidden neuron, in exact integer arithmetic.

    ``R`` is stored pre-scaled: ``q*R`` for ``layer == 1`` and ``R`` itself
    for deeper layers.  Both are odd integers.
    """
    model._check_layer(layer)
    w = model.weights(layer)
    if not 0 <= neuron < w.shape[0]:
        raise IndexError(f"neuron {neuron} out of range for layer {layer}")
    row = w[neuron]
    b = int(model.biases(layer)[neuron])
    s = int(row.sum())
    nnz = int(np.abs(row).sum())
    lb = s - nnz
    ub = s + nnz
    if layer == 1:
        r2q = 2 * _ceil_div(model.q * (s - b), 2) - 1
    else:
        r2q = 2 * _ceil_div(s - b, 2) - 1
    return NeuronConstants(lb=lb, ub=ub, r2q=r2q, layer=layer)


def _as_fraction_vector(x) -> list[Fraction]:
    return [Fraction(v) for v in x]


def affine(model: BnnModel, layer: int, x) -> list[Fraction]:
    """Pre-activation ``W(2x - 1) + b`` of ``layer``, returned exactly."""
    w = model.weights(layer)
    xs = _as_fraction_vector(x)
    if len(xs) != w.shape[1]:
        raise ModelError(f"layer {layer} expects {w.shape[1]} inputs, got {len(xs)}")
    b = model.biases(layer)
    out = []
    for i in range(w.shape[0]):
        acc = Fraction(int(b[i]))
        for j, wij in enumerate(w[i]):
            if wij:
                acc += int(wij) * (2 * xs[j] - 1)
        out.append(acc)
    return out


def scaled_first_layer(model: BnnModel, y) -> np.ndarray:
    """``q * a^1(y/q)`` as integers."""
    w = model.weights(1)
    y = np.asarray(y, dtype=np.int64)
    return w @ (2 * y - model.q) + model.q * model.biases(1)


def hidden_step(model: BnnModel, layer: int, x_prev) -> np.ndarray:
    """Binary output of hidden ``layer`` for a binary (layer >= 2) or q-scaled (layer 1) input."""
    if layer == 1:
        a = scaled_first_layer(model, x_prev)
    else:
        x = np.asarray(x_prev, dtype=np.int64)
        a = model.weights(layer) @ (2 * x - 1) + model.biases(layer)
    # a == 0 maps to 1
    return (a >= 0).astype(np.int64)


def output_scores(model: BnnModel, x_last) -> np.ndarray:
    """Integer output vector ``f = a^{L+1}(x^L)``."""
    layer = model.num_hidden + 1
    x = np.asarray(x_last, dtype=np.int64)
    return model.weights(layer) @ (2 * x - 1) + model.biases(layer)


@dataclass(frozen=True)
class Propagation:
    hidden: tuple[tuple[int, ...], ...]
    output: tuple[int, ...]
    predicted_class: int


def check_quantized(model: BnnModel, y) -> tuple[int, ...]:
    ys = tuple(int(v) for v in y)
    if len(ys) != model.dims[0]:
        raise ModelError(f"input has {len(ys)} coordinates, model expects {model.dims[0]}")
    if any(v != orig for v, orig in zip(ys, y)) or any(not 0 <= v <= model.q for v in ys):
        raise ModelError("quantized input numerators must be integers in [0, q]")
    return ys


def propagate_scaled(model: BnnModel, y) -> Propagation:
    """Forward pass for q-scaled integer input numerators ``y``."""
    ys = check_quantized(model, y)
    hidden = []
    cur = np.asarray(ys, dtype=np.int64)
    for layer in range(1, model.num_hidden + 1):
        cur = hidden_step(model, layer, cur)
        hidden.append(tuple(int(v) for v in cur))
    f = output_scores(model, cur)
    # argmax picks the lowest index on ties
    return Propagation(tuple(hidden), tuple(int(v) for v in f), int(np.argmax(f)))


def propagate(model: BnnModel, x0) -> Propagation:
    """Forward pass for an input in ``[0, 1]`` given as exact multiples of ``1/q``."""
    y = []
    for v in x0:
        scaled = Fraction(v) * model.q
        if scaled.denominator != 1:
            raise ModelError(f"input coordinate {v} is not a multiple of 1/{model.q}")
        y.append(int(scaled))
    return propagate_scaled(model, y)


def margin_upper_bound(model: BnnModel, true_class: int) -> int:
    """Largest possible ``a_t - a_tbar`` over every binary last hidden vector."""
    layer = model.num_hidden + 1
    w = model.weights(layer)
    b = model.biases(layer)
    if not 0 <= true_class < w.shape[0]:
        raise IndexError(f"class {true_class} out of range")
    diff = np.abs(w - w[true_class]).sum(axis=1) + b - b[true_class]
    return int(diff.max())


@dataclass(frozen=True)
class InputSpec:
    """Anchor point, perturbation radius and norm defining the input domain.

    ``anchor_q`` holds ``q * xbar`` as integers; ``true_class`` is 0-based.
    """

    anchor_q: tuple[int, ...]
    q: int
    epsilon: Fraction
    norm: Norm
    true_class: int

    def __post_init__(self):
        object.__setattr__(self, "anchor_q", tuple(int(v) for v in self.anchor_q))
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))
        object.__setattr__(self, "norm", Norm.parse(self.norm))
        if self.q < 1:
            raise ModelError("q must be positive")
        if any(not 0 <= v <= self.q for v in self.anchor_q):
            raise ModelError("anchor numerators must lie in [0, q]")
        if self.epsilon < 0:
            raise ModelError("epsilon must be non-negative")

    @property
    def anchor(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(v, self.q) for v in self.anchor_q)

    @property
    def dim(self) -> int:
        return len(self.anchor_q)

    def with_epsilon(self, epsilon) -> "InputSpec":
        return InputSpec(self.anchor_q, self.q, Fraction(epsilon), self.norm, self.true_class)

    def validate_for(self, model: BnnModel) -> None:
        if self.q != model.q:
            raise ModelError(f"input q={self.q} does not match model q={model.q}")
        if self.dim != model.dims[0]:
            raise ModelError(f"input has {self.dim} coordinates, model expects {model.dims[0]}")
        if not 0 <= self.true_class < model.num_classes:
            raise ModelError(f"true class {self.true_class} out of range")

    def linf_range(self, j: int) -> tuple[int, int]:
        """Integer range of ``y_j`` allowed by an infinity-norm ball."""
        qe = self.q * self.epsilon
        lo = max(0, _ceil_frac(self.anchor_q[j] - qe))
        hi = min(self.q, _floor_frac(self.anchor_q[j] + qe))
        return lo, hi

    def contains(self, y) -> bool:
        """Exact membership of q-scaled point ``y`` in the perturbation set."""
        if len(y) != self.dim or any(not 0 <= v <= self.q for v in y):
            return False
        diffs = [abs(int(v) - a) for v, a in zip(y, self.anchor_q)]
        qe = self.q * self.epsilon
        if self.norm is Norm.L1:
            return sum(diffs) <= qe
        if self.norm is Norm.LINF:
            return max(diffs, default=0) <= qe
        return sum(d * d for d in diffs) <= qe * qe


def _floor_frac(v: Fraction) -> int:
    return Fraction(v).__floor__()


def _ceil_frac(v: Fraction) -> int:
    return Fraction(v).__ceil__()


# -- file I/O -----------------------------------------------------------------

def load_model(path) -> BnnModel:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model {path}: {exc}") from None
    model = BnnModel.from_dict(data)
    zero = model.zero_weight_rows()
    if zero:
        # such neurons are constant; legal, but usually a sign of a bad export
        log.warning("model %s has %d all-zero weight rows (layer, neuron): %s", path, len(zero), zero[:10])
    return model


def dump_model(model: BnnModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True) + "\n"


def save_model(model: BnnModel, path) -> None:
    Path(path).write_text(dump_model(model))


def load_input(path, model: BnnModel, epsilon=0, norm="l1") -> InputSpec:
    """Read an anchor point from JSON or CSV.

    JSON: ``{"format_version": 1, "anchor_q": [...], "true_class": t}``
    (``true_class`` may be omitted, in which case the model's prediction is
    used).  CSV: optional ``# format_version: 1`` comment line followed by
    one row ``y_1,...,y_n,true_class``.
    """
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"malformed input file {path}: {exc}") from None
        if data.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise ModelError(f"unsupported input format_version {data.get('format_version')!r}")
        anchor = data.get("anchor_q")
        if not isinstance(anchor, list):
            raise ModelError("input JSON needs an 'anchor_q' list")
        true_class = data.get("true_class")
    else:
        rows = [r for r in csv.reader(io.StringIO(text))
                if r and not r[0].lstrip().startswith("#")]
        if len(rows) != 1:
            raise ModelError("CSV input must contain exactly one data row")
        try:
            values = [int(v) for v in rows[0]]
        except ValueError:
            raise ModelError("CSV input must contain integers only") from None
        anchor, true_class = values[:-1], values[-1]
    try:
        anchor_q = check_quantized(model, anchor)
    except (TypeError, ValueError) as exc:
        raise ModelError(str(exc)) from None
    if true_class is None:
        true_class = propagate_scaled(model, anchor_q).predicted_class
    spec = InputSpec(anchor_q, model.q, Fraction(epsilon), Norm.parse(norm), int(true_class))
    spec.validate_for(model)
    return spec


def dump_input(spec: InputSpec) -> str:
    doc = {"format_version": FORMAT_VERSION, "anchor_q": list(spec.anchor_q),
           "true_class": spec.true_class}
    return json.dumps(doc, sort_keys=True) + "\n"
