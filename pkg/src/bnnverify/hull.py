"""Single-neuron convex-hull cuts for hidden layers ``2..L`` and the
constraint-generation loop that adds them to an LP relaxation.

For neuron ``i`` with weights ``w`` on the previous layer and output ``u``
write ``t_j = w_j (2 x_j - 1) - (2u - 1)``.  For any subset ``J`` of the
weight support

    lower:  sum_J t_j >= (R - UB + 1) u
    upper:  sum_J t_j <= (R - LB - 1) (1 - u)

are valid, and together with the unit box they describe the convex hull of
the neuron's graph.  Both sides are term-separable in ``J``, so the most
violated subset is picked coordinate-wise.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .formulation import VerificationIp
from .ipmodel import GE, LE
from .network import BnnModel, layer_constants
from .solver import LPStatus, solve_lp

log = logging.getLogger(__name__)

EXACT_TOL = Fraction(1, 10 ** 9)
FLOAT_TOL = 1e-6


@dataclass(frozen=True)
class HullCut:
    layer: int
    neuron: int
    side: str  # "lower" or "upper"
    subset: tuple
    weights: tuple  # w_j for j in subset
    r: int
    lb: int
    ub: int

    @property
    def key(self) -> tuple:
        return (self.layer, self.neuron, self.side, self.subset)

    @property
    def tag(self) -> str:
        js = ".".join(str(j) for j in self.subset)
        kind = "hull.lb" if self.side == "lower" else "hull.ub"
        return f"{kind}[ℓ={self.layer},i={self.neuron},J={js}]"

    def lhs(self, x_prev: Sequence, u) -> object:
        return sum((w * (2 * x_prev[j] - 1) - (2 * u - 1) for j, w in zip(self.subset, self.weights)), 0)

    def rhs(self, u) -> object:
        if self.side == "lower":
            return (self.r - self.ub + 1) * u
        return (self.r - self.lb - 1) * (1 - u)

    def violation(self, x_prev: Sequence, u) -> object:
        """Positive when the point violates the cut."""
        if self.side == "lower":
            return self.rhs(u) - self.lhs(x_prev, u)
        return self.lhs(x_prev, u) - self.rhs(u)

    def linear_form(self):
        """``(coef_prev: {j: a_j}, coef_u, sense, rhs)`` with integer data."""
        size = len(self.subset)
        wsum = sum(self.weights)
        coef = {j: 2 * w for j, w in zip(self.subset, self.weights)}
        if self.side == "lower":
            return coef, -(2 * size + self.r - self.ub + 1), GE, wsum - size
        m = self.r - self.lb - 1
        return coef, m - 2 * size, LE, m + wsum - size


def cut_satisfied(cut: HullCut, x_prev: Sequence, u) -> bool:
    x_prev = [Fraction(v) for v in x_prev]
    return cut.violation(x_prev, Fraction(u)) <= 0


def separate(model: BnnModel, layer: int, neuron: int, x_prev: Sequence, u, tol=EXACT_TOL):
    """Most violated lower and upper cut at a fractional point.

    Returns ``(lower, upper)``; each is ``(HullCut, violation)`` or None.
    """
    if layer < 2:
        raise ValueError("hull cuts apply to layers 2..L")
    k = layer_constants(model, layer, neuron)
    row = model.weights(layer)[neuron]
    support = [j for j, w in enumerate(row) if w]
    terms = {j: int(row[j]) * (2 * x_prev[j] - 1) - (2 * u - 1) for j in support}
    found = []
    for side, pick in (("lower", lambda t: t < 0), ("upper", lambda t: t > 0)):
        subset = tuple(j for j in support if pick(terms[j]))
        cut = HullCut(layer, neuron, side, subset, tuple(int(row[j]) for j in subset), k.r2q, k.lb, k.ub)
        gap = cut.violation(x_prev, u)
        found.append((cut, gap) if gap > tol else None)
    return found[0], found[1]


@dataclass
class HullResult:
    ip: VerificationIp
    iterations: int = 0
    lp_trace: list = field(default_factory=list)
    cuts_added: int = 0
    cuts: list = field(default_factory=list)


def add_cut(ip: VerificationIp, cut: HullCut) -> None:
    coef, coef_u, sense, rhs = cut.linear_form()
    terms = [(ip.x_index(cut.layer - 1, j), a) for j, a in coef.items()]
    terms.append((ip.x_index(cut.layer, cut.neuron), coef_u))
    ip.model.add_constraint(terms, sense, rhs, tag=cut.tag)


def constraint_generation(ip: VerificationIp, model: BnnModel, deadline: Optional[float] = None,
                          max_iterations: int = 1000, window: int = 10,
                          min_improvement: float = 0.01) -> HullResult:
    """Add most-violated hull cuts until none is violated or the LP value stalls.

    The loop stops when an iteration adds no cut or when the LP value has
    not improved (decreased) by ``min_improvement`` relative to its value
    ``window`` iterations earlier.  ``ip.model`` is modified in place.
    """
    result = HullResult(ip)
    seen = set()
    while result.iterations < max_iterations:
        if deadline is not None and time.monotonic() >= deadline:
            break
        lp = solve_lp(ip.model)
        result.iterations += 1
        if lp.status is not LPStatus.OPTIMAL:
            log.info("hull loop: LP status %s", lp.status.value)
            break
        result.lp_trace.append(lp.value)
        if lp.exact:
            values, tol = lp.point, EXACT_TOL
        else:
            values, tol = [float(v) for v in lp.x], FLOAT_TOL
        added = 0
        for layer in range(2, model.num_hidden + 1):
            prev = [values[ip.x_index(layer - 1, j)] for j in range(model.dims[layer - 1])]
            for i in range(model.dims[layer]):
                u = values[ip.x_index(layer, i)]
                for hit in separate(model, layer, i, prev, u, tol):
                    if hit is None or hit[0].key in seen:
                        continue
                    seen.add(hit[0].key)
                    add_cut(ip, hit[0])
                    result.cuts.append(hit[0])
                    added += 1
        result.cuts_added += added
        if not added:
            break
        trace = result.lp_trace
        if len(trace) > window:
            old, new = float(trace[-1 - window]), float(trace[-1])
            gain = old - new
            if gain <= 0 or gain < min_improvement * abs(old):
                break
    return result
