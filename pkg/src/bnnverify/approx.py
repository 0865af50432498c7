"""Outer and inner approximations of the per-layer reachable sets.

The outer approximation holds proven fixings and two-variable inequalities
(a superset of every reachable set).  The inner approximation holds vectors
witnessed as reachable; it is only used to reject candidate cuts cheaply.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .network import BnnModel, hidden_step

DEFAULT_POOL_CAP = 4096


class InfeasibleOuterApprox(RuntimeError):
    """A neuron was proven constant 0 and constant 1 at the same time."""


@dataclass
class LayerCuts:
    fixings: dict = field(default_factory=dict)  # neuron -> bit
    two_var: list = field(default_factory=list)  # (i, c_i, k, c_k) with i < k


def sign_tag(c: int) -> str:
    return "p" if c > 0 else "m"


def two_var_tag(layer: int, i: int, ci: int, k: int, ck: int) -> str:
    return f"2var[ℓ={layer},({i},{k}),({sign_tag(ci)},{sign_tag(ck)})]"


def fix_tag(layer: int, i: int) -> str:
    return f"fix[ℓ={layer},i={i}]"


class OuterApprox:
    """Fixings and two-variable inequalities for hidden layers ``1..L``."""

    def __init__(self, num_hidden: int):
        self.num_hidden = num_hidden
        self.layers = {layer: LayerCuts() for layer in range(1, num_hidden + 1)}

    def _layer(self, layer: int) -> LayerCuts:
        if layer not in self.layers:
            raise IndexError(f"layer {layer} outside 1..{self.num_hidden}")
        return self.layers[layer]

    def fix(self, layer: int, i: int, bit: int) -> None:
        cuts = self._layer(layer)
        old = cuts.fixings.get(i)
        if old is not None and old != bit:
            raise InfeasibleOuterApprox(f"neuron {i} of layer {layer} proven both 0 and 1")
        cuts.fixings[i] = int(bit)

    def add_two_var(self, layer: int, i: int, ci: int, k: int, ck: int) -> None:
        if i >= k:
            raise ValueError("two-variable inequalities need i < k")
        if ci not in (-1, 1) or ck not in (-1, 1):
            raise ValueError("signs must be -1 or +1")
        entry = (i, ci, k, ck)
        cuts = self._layer(layer)
        if entry not in cuts.two_var:
            cuts.two_var.append(entry)

    def fixings(self, layer: int) -> dict:
        return self._layer(layer).fixings

    def two_var(self, layer: int) -> list:
        return self._layer(layer).two_var

    def is_fix_only(self, layer: int) -> bool:
        return layer == 0 or not self._layer(layer).two_var

    def count(self) -> int:
        return sum(len(c.fixings) + len(c.two_var) for c in self.layers.values())

    def admits(self, layer: int, x) -> bool:
        """Whether binary vector ``x`` satisfies every cut stored for ``layer``."""
        cuts = self._layer(layer)
        if any(int(x[i]) != bit for i, bit in cuts.fixings.items()):
            return False
        return all(2 * (ci * int(x[i]) + ck * int(x[k])) <= ci + ck for i, ci, k, ck in cuts.two_var)

    def to_dict(self) -> dict:
        return {
            str(layer): {
                "fixings": {str(i): b for i, b in sorted(c.fixings.items())},
                "two_var": [list(t) for t in c.two_var],
            }
            for layer, c in self.layers.items()
        }


class InnerApprox:
    """Per-layer pools of reachable vectors, deduplicated, FIFO-capped.

    Layer 0 stores q-scaled integer inputs; layers ``1..L`` store binary
    vectors.
    """

    def __init__(self, model: BnnModel, cap: int = DEFAULT_POOL_CAP):
        if cap < 1:
            raise ValueError("pool cap must be positive")
        self.model = model
        self.cap = cap
        self.pools = [OrderedDict() for _ in range(model.num_hidden + 1)]
        self._arrays = {}

    def pool(self, layer: int) -> list:
        return list(self.pools[layer].keys())

    def matrix(self, layer: int) -> np.ndarray:
        """Pool members of ``layer`` stacked as rows (cached until the next insert)."""
        arr = self._arrays.get(layer)
        if arr is None:
            width = self.model.dims[layer]
            pool = self.pools[layer]
            arr = np.array(list(pool), dtype=np.int64).reshape(len(pool), width)
            self._arrays[layer] = arr
        return arr

    def size(self, layer: int) -> int:
        return len(self.pools[layer])

    def __contains__(self, item) -> bool:
        layer, vec = item
        return tuple(int(v) for v in vec) in self.pools[layer]

    def _insert(self, layer: int, vec: tuple) -> None:
        pool = self.pools[layer]
        if vec in pool:
            return
        self._arrays.pop(layer, None)
        pool[vec] = None
        if len(pool) > self.cap:
            pool.popitem(last=False)

    def update(self, layer: int, points: Iterable) -> "InnerApprox":
        """Insert ``points`` at ``layer`` and their forward images at later layers."""
        fresh = list(dict.fromkeys(tuple(int(v) for v in p) for p in points))
        for vec in fresh:
            self._insert(layer, vec)
        for nxt in range(layer + 1, self.model.num_hidden + 1):
            if not fresh:
                break
            images = dict.fromkeys(tuple(int(v) for v in hidden_step(self.model, nxt, np.asarray(p)))
                                   for p in fresh)
            fresh = list(images)
            for vec in fresh:
                self._insert(nxt, vec)
        return self


def update_in_approx(inner: InnerApprox, layer: int, new_points: Iterable) -> InnerApprox:
    return inner.update(layer, new_points)
