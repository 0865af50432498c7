"""Verification integer programs.

Variable families, in creation order:

* ``y_j``   integer input numerators in ``[0, q]`` (the input is ``y / q``)
* ``u_j``   distance auxiliaries for the l1/l2 balls
* ``x{l}_i`` binary hidden outputs
* ``z_t``   class selectors (single-IP form only)
* ``v_t_i`` products ``z_t * x^L_i`` (single-IP form only)

Every coefficient is an integer: layer-1 rows are multiplied through by q.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .approx import InfeasibleOuterApprox, OuterApprox, two_var_tag
from .ipmodel import EQ, GE, LE, IpModel
from .network import BnnModel, InputSpec, Norm, layer_constants, propagate_scaled


@dataclass
class VerificationIp:
    """An IP plus the bookkeeping needed to map network points onto it."""

    model: IpModel
    bnn: BnnModel
    spec: InputSpec
    kind: str  # "one" or "many"
    alt_class: Optional[int] = None
    var_index: dict = field(default_factory=dict)

    def idx(self, *key) -> int:
        return self.var_index[key]

    def x_index(self, layer: int, neuron: int) -> int:
        return self.var_index[("x", layer, neuron)]

    # -- completion of input points into full assignments --------------------
    def round_input(self, values: Sequence[float]) -> list:
        """Nearest integer y inside the variable bounds, then shrunk into the ball."""
        spec = self.spec
        y = []
        for j in range(spec.dim):
            ref = self.model.variables[self.var_index[("y", j)]]
            v = math.floor(float(values[self.var_index[("y", j)]]) + 0.5)
            y.append(int(min(max(v, ref.lower), ref.upper)))
        anchor = spec.anchor_q
        while not spec.contains(y):
            # move the farthest coordinate one step toward the anchor
            j = max(range(len(y)), key=lambda k: (abs(y[k] - anchor[k]), -k))
            y[j] += 1 if y[j] < anchor[j] else -1
        return y

    def complete(self, y: Sequence[int]) -> Optional[list]:
        """Full assignment induced by input numerators ``y``, or None if it
        violates a variable bound of this IP."""
        model, spec = self.model, self.spec
        point = [Fraction(0)] * model.num_vars
        for j, yj in enumerate(y):
            point[self.var_index[("y", j)]] = Fraction(int(yj))
            if ("u", j) in self.var_index:
                point[self.var_index[("u", j)]] = Fraction(abs(int(yj) - spec.anchor_q[j]), spec.q)
        prop = propagate_scaled(self.bnn, y)
        for layer, xs in enumerate(prop.hidden, start=1):
            for i, bit in enumerate(xs):
                point[self.var_index[("x", layer, i)]] = Fraction(bit)
        if self.kind == "one":
            allowed = []
            for t in range(self.bnn.num_classes):
                if ("z", t) not in self.var_index:
                    continue
                ref = model.variables[self.var_index[("z", t)]]
                if ref.lower == 1:
                    allowed = [t]
                    break
                if ref.upper >= 1:
                    allowed.append(t)
            if not allowed:
                return None
            best = max(allowed, key=lambda t: (prop.output[t], -t))
            point[self.var_index[("z", best)]] = Fraction(1)
            last = prop.hidden[-1]
            for i, bit in enumerate(last):
                point[self.var_index[("v", best, i)]] = Fraction(bit)
        for ref, val in zip(model.variables, point):
            if val < ref.lower or val > ref.upper:
                return None
        return point

    def complete_from_lp(self, values: Sequence[float]) -> Optional[list]:
        return self.complete(self.round_input(values))

    def input_of(self, point: Sequence) -> tuple:
        return tuple(int(point[self.var_index[("y", j)]]) for j in range(self.spec.dim))


def _new_ip(bnn: BnnModel, spec: InputSpec, kind: str, name: str, alt_class=None) -> VerificationIp:
    spec.validate_for(bnn)
    return VerificationIp(IpModel(name=name), bnn, spec, kind, alt_class)


def build_input_constraints(ip: VerificationIp, spec: InputSpec) -> None:
    """Integer input variables and the perturbation-ball constraints."""
    model = ip.model
    q = spec.q
    for j in range(spec.dim):
        lo, hi = (spec.linf_range(j) if spec.norm is Norm.LINF else (0, q))
        ip.var_index[("y", j)] = model.add_var(f"y_{j}", lo, hi, integral=True).index
    if spec.norm is Norm.LINF:
        return
    for j in range(spec.dim):
        ip.var_index[("u", j)] = model.add_var(f"u_{j}", 0, 1).index
    for j in range(spec.dim):
        y, u, yb = ip.var_index[("y", j)], ip.var_index[("u", j)], spec.anchor_q[j]
        # q*u_j >= |y_j - ybar_j|
        model.add_constraint([(u, q), (y, -1)], GE, -yb, tag=f"ball.{spec.norm.value}.neg[j={j}]")
        model.add_constraint([(u, q), (y, 1)], GE, yb, tag=f"ball.{spec.norm.value}.pos[j={j}]")
    us = [ip.var_index[("u", j)] for j in range(spec.dim)]
    if spec.norm is Norm.L1:
        model.add_constraint([(u, 1) for u in us], LE, spec.epsilon, tag="ball.l1.sum")
    else:
        model.set_quadratic([(u, 1) for u in us], spec.epsilon ** 2, tag="ball.l2")


def build_propagation_constraints(ip: VerificationIp, bnn: BnnModel) -> None:
    """Hidden-layer binaries and the big-M rows linking each layer to the next."""
    model = ip.model
    q = bnn.q
    for layer in range(1, bnn.num_hidden + 1):
        for i in range(bnn.dims[layer]):
            ip.var_index[("x", layer, i)] = model.add_var(f"x{layer}_{i}", 0, 1, integral=True).index
    for layer in range(1, bnn.num_hidden + 1):
        w = bnn.weights(layer)
        if layer == 1:
            prev = [ip.var_index[("y", j)] for j in range(bnn.dims[0])]
        else:
            prev = [ip.var_index[("x", layer - 1, j)] for j in range(bnn.dims[layer - 1])]
        family = "propInp" if layer == 1 else "propHid"
        for i in range(bnn.dims[layer]):
            k = layer_constants(bnn, layer, i)
            xi = ip.var_index[("x", layer, i)]
            lhs = [(prev[j], 2 * int(w[i, j])) for j in range(len(prev)) if w[i, j]]
            if layer == 1:
                lb, ub, r = q * k.lb, q * k.ub, k.r2q
            else:
                lb, ub, r = k.lb, k.ub, k.r2q
            model.add_constraint(lhs + [(xi, -(r - lb + 1))], GE, lb, tag=f"{family}.lower[ℓ={layer},i={i}]")
            model.add_constraint(lhs + [(xi, -(ub - r + 1))], LE, r - 1, tag=f"{family}.upper[ℓ={layer},i={i}]")


def _output_difference(bnn: BnnModel, t: int, tbar: int):
    layer = bnn.num_hidden + 1
    w = bnn.weights(layer)
    b = bnn.biases(layer)
    d = (w[t] - w[tbar]).astype(np.int64)
    const = int(-d.sum() + b[t] - b[tbar])
    return d, const


def build_many_ip(bnn: BnnModel, spec: InputSpec, alt_class: int) -> VerificationIp:
    """IP maximizing ``f_t - f_tbar`` for one alternative class ``t``."""
    if alt_class == spec.true_class:
        raise ValueError("alternative class must differ from the true class")
    if not 0 <= alt_class < bnn.num_classes:
        raise IndexError(f"class {alt_class} out of range")
    ip = _new_ip(bnn, spec, "many", f"many-ip-t{alt_class}", alt_class)
    build_input_constraints(ip, spec)
    build_propagation_constraints(ip, bnn)
    d, const = _output_difference(bnn, alt_class, spec.true_class)
    L = bnn.num_hidden
    terms = [(ip.var_index[("x", L, i)], 2 * int(d[i])) for i in range(bnn.dims[L]) if d[i]]
    ip.model.set_objective(terms, const)
    return ip


def build_one_ip(bnn: BnnModel, spec: InputSpec) -> VerificationIp:
    """Single IP with class selectors covering every alternative class."""
    if bnn.num_classes < 2:
        raise ValueError("need at least two classes")
    ip = _new_ip(bnn, spec, "one", "one-ip")
    build_input_constraints(ip, spec)
    build_propagation_constraints(ip, bnn)
    model = ip.model
    L = bnn.num_hidden
    classes = [t for t in range(bnn.num_classes) if t != spec.true_class]
    for t in classes:
        ip.var_index[("z", t)] = model.add_var(f"z_{t}", 0, 1, integral=True).index
    for t in classes:
        for i in range(bnn.dims[L]):
            ip.var_index[("v", t, i)] = model.add_var(f"v_{t}_{i}", 0, 1, integral=True).index
    model.add_constraint([(ip.var_index[("z", t)], 1) for t in classes], EQ, 1, tag="class.sum")
    for i in range(bnn.dims[L]):
        terms = [(ip.var_index[("v", t, i)], 1) for t in classes] + [(ip.var_index[("x", L, i)], -1)]
        model.add_constraint(terms, EQ, 0, tag=f"prod.sum[i={i}]")
    for t in classes:
        for i in range(bnn.dims[L]):
            model.add_constraint([(ip.var_index[("v", t, i)], 1), (ip.var_index[("z", t)], -1)], LE, 0,
                                 tag=f"prod.le[t={t},i={i}]")
    obj = []
    for t in classes:
        d, const = _output_difference(bnn, t, spec.true_class)
        obj.extend((ip.var_index[("v", t, i)], 2 * int(d[i])) for i in range(bnn.dims[L]) if d[i])
        obj.append((ip.var_index[("z", t)], const))
    model.set_objective(obj)
    return ip


def apply_outer_approx(ip: VerificationIp, approx: OuterApprox) -> int:
    """Add fixings as bounds and two-variable inequalities as rows.

    Returns the number of fixings plus inequalities applied.
    """
    model = ip.model
    added = 0
    for layer, cuts in approx.layers.items():
        for i, bit in sorted(cuts.fixings.items()):
            idx = ip.x_index(layer, i)
            ref = model.variables[idx]
            if not ref.lower <= bit <= ref.upper:
                raise InfeasibleOuterApprox(f"fixing x{layer}_{i}={bit} contradicts bounds [{ref.lower}, {ref.upper}]")
            model.set_bounds(idx, bit, bit)
            added += 1
        for i, ci, k, ck in cuts.two_var:
            model.add_constraint([(ip.x_index(layer, i), ci), (ip.x_index(layer, k), ck)], LE,
                                 Fraction(ci + ck, 2), tag=two_var_tag(layer, i, ci, k, ck))
            added += 1
    return added
