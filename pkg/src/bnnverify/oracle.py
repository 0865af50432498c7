"""Exhaustive ground truth for small networks.

Everything here enumerates.  Nothing is sampled or approximated; when a
domain is too large the functions raise ``CapExceeded`` instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from .network import BnnModel, InputSpec, Norm, hidden_step, output_scores

DEFAULT_CAP = 2_000_000


class CapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"enumeration exceeded cap {cap} after {count} points")
        self.count = count
        self.cap = cap


def enumerate_x0(spec: InputSpec, cap: int = DEFAULT_CAP) -> Iterator[tuple]:
    """Yield every q-scaled grid point of the perturbation set.

    Depth-first over coordinates; for l1/l2 the remaining budget prunes
    each coordinate's range.  Budgets are tracked on integers scaled by q
    (l1) or q^2 (l2) so the membership test is exact.
    """
    q = spec.q
    anchor = spec.anchor_q
    n = spec.dim
    qe = q * spec.epsilon
    if spec.norm is Norm.L1:
        budget0 = qe
    elif spec.norm is Norm.L2:
        budget0 = qe * qe
    else:
        budget0 = None
    count = 0
    y = [0] * n

    def ranges(j, budget):
        a = anchor[j]
        if spec.norm is Norm.LINF:
            lo, hi = spec.linf_range(j)
            return range(lo, hi + 1)
        if spec.norm is Norm.L1:
            radius = int(budget)  # budget >= 0 and integers only step by 1
        else:
            radius = _isqrt_floor(budget)
        return range(max(0, a - radius), min(q, a + radius) + 1)

    def rec(j, budget):
        nonlocal count
        if j == n:
            count += 1
            if count > cap:
                raise CapExceeded(count, cap)
            yield tuple(y)
            return
        for v in ranges(j, budget):
            d = abs(v - anchor[j])
            if spec.norm is Norm.L1:
                nb = budget - d
            elif spec.norm is Norm.L2:
                nb = budget - d * d
            else:
                nb = None
            y[j] = v
            yield from rec(j + 1, nb)

    yield from rec(0, budget0)


def _isqrt_floor(v: Fraction) -> int:
    """Largest integer r with r*r <= v, for rational v >= 0."""
    v = Fraction(v)
    r = int(v.numerator // v.denominator)
    r = int(np.floor(np.sqrt(float(r)))) if r > 0 else 0
    while (r + 1) * (r + 1) <= v:
        r += 1
    while r > 0 and r * r > v:
        r -= 1
    return r


@dataclass
class ReachableSets:
    """Exact reachable sets: layer 0 q-scaled inputs, layers 1..L binary."""

    layers: list  # list of sets of tuples

    @property
    def sizes(self) -> list:
        return [len(s) for s in self.layers]


def exact_reachable(model: BnnModel, spec: InputSpec, cap: int = DEFAULT_CAP) -> ReachableSets:
    x0 = set(enumerate_x0(spec, cap))
    layers = [x0]
    cur = x0
    for layer in range(1, model.num_hidden + 1):
        cur = {tuple(int(v) for v in hidden_step(model, layer, np.asarray(p))) for p in cur}
        layers.append(cur)
    return ReachableSets(layers)


def exact_zstar(model: BnnModel, spec: InputSpec, cap: int = DEFAULT_CAP):
    """``max f_t - f_tbar`` over the perturbation set and every ``t != tbar``.

    Returns ``(zstar, witness_y, argmax_class)``; ties keep the first point
    found in enumeration order and the lowest class index.
    """
    tbar = spec.true_class
    best: Optional[int] = None
    witness = None
    arg = None
    cache = {}
    for y in enumerate_x0(spec, cap):
        x = np.asarray(y)
        for layer in range(1, model.num_hidden + 1):
            x = hidden_step(model, layer, x)
        key = tuple(int(v) for v in x)
        if key not in cache:
            f = output_scores(model, x)
            margins = [(int(f[t] - f[tbar]), t) for t in range(len(f)) if t != tbar]
            cache[key] = max(margins, key=lambda m: (m[0], -m[1]))
        val, t = cache[key]
        if best is None or val > best:
            best, witness, arg = val, y, t
    return Fraction(best), witness, arg


@dataclass(frozen=True)
class Verdict:
    valid: bool
    witness: Optional[tuple] = None


def check_fixing(reachable: ReachableSets, layer: int, i: int, bit: int) -> Verdict:
    for x in sorted(reachable.layers[layer]):
        if x[i] != bit:
            return Verdict(False, x)
    return Verdict(True)


def check_two_var(reachable: ReachableSets, layer: int, i: int, ci: int, k: int, ck: int) -> Verdict:
    for x in sorted(reachable.layers[layer]):
        if 2 * (ci * x[i] + ck * x[k]) > ci + ck:
            return Verdict(False, x)
    return Verdict(True)


def check_hull_cut(model: BnnModel, reachable: ReachableSets, cut) -> Verdict:
    """Evaluate a hull cut on every (x^{l-1}, x^l_i) pair arising from X^{l-1}."""
    from .hull import cut_satisfied

    for xp in sorted(reachable.layers[cut.layer - 1]):
        out = int(hidden_step(model, cut.layer, np.asarray(xp))[cut.neuron])
        if not cut_satisfied(cut, xp, out):
            return Verdict(False, tuple(xp) + (out,))
    return Verdict(True)


def check_cut_validity(reachable: ReachableSets, cut, model: Optional[BnnModel] = None) -> Verdict:
    """Dispatch on the cut kind.

    ``cut`` is one of ``("fix", layer, i, bit)``, ``("2var", layer, i, ci, k, ck)``
    or a ``HullCut`` (which needs ``model``).
    """
    if isinstance(cut, tuple):
        kind = cut[0]
        if kind == "fix":
            return check_fixing(reachable, *cut[1:])
        if kind == "2var":
            return check_two_var(reachable, *cut[1:])
        raise ValueError(f"unknown cut kind {kind!r}")
    if model is None:
        raise ValueError("hull cuts need the model")
    return check_hull_cut(model, reachable, cut)
