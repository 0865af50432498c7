"""Seeded random networks and verification instances."""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .network import BnnModel, InputSpec, ModelError, Norm, propagate_scaled

MASK64 = (1 << 64) - 1


class SplitMix64:
    """64-bit SplitMix generator; the whole state is one integer."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` by rejection (no modulo bias)."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            v = self.next_u64()
            if v < limit:
                return lo + v % span

    def choice(self, seq: Sequence):
        return seq[self.randint(0, len(seq) - 1)]


def gen_model(dims: Sequence[int], density: float = 0.5, bias_range=(-2, 2), seed: int = 0,
              q: int = 1) -> BnnModel:
    """Random ternary network with layer sizes ``dims = (n0, n1, ..., n_{L+1})``.

    Each weight is 0 with probability ``1 - density`` and otherwise +1 or -1
    with equal odds.  Biases are uniform integers in ``bias_range``.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 3 or any(d < 1 for d in dims):
        raise ModelError("dims needs an input size, at least one hidden size and a class count, all >= 1")
    if not 0.0 <= density <= 1.0:
        raise ModelError("density must lie in [0, 1]")
    lo, hi = int(bias_range[0]), int(bias_range[1])
    if lo > hi:
        raise ModelError("bias range is empty")
    rng = SplitMix64(seed)
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        w = []
        for _ in range(n_out):
            row = []
            for _ in range(n_in):
                if rng.uniform() < density:
                    row.append(1 if rng.next_u64() & 1 else -1)
                else:
                    row.append(0)
            w.append(row)
        weights.append(w)
        biases.append([rng.randint(lo, hi) for _ in range(n_out)])
    return BnnModel(weights, biases, q)


def random_instance(seed: int, norm=None, max_input: int = 6, max_width: int = 5,
                    max_layers: int = 3, max_q: int = 3):
    """A tiny seeded (model, spec) pair for oracle comparisons.

    The anchor's true class is the network's own prediction.  The radius is
    drawn on the grid ``k / q`` so it ranges from the trivial ball to the
    whole box.
    """
    rng = SplitMix64(seed ^ 0x5EED)
    n0 = rng.randint(1, max_input)
    q = rng.randint(1, max_q)
    L = rng.randint(1, max_layers)
    hidden = [rng.randint(1, max_width) for _ in range(L)]
    classes = rng.randint(2, 4)
    density = rng.choice((0.5, 0.7, 0.9))
    model = gen_model([n0] + hidden + [classes], density, (-2, 2), rng.next_u64(), q)
    anchor = [rng.randint(0, q) for _ in range(n0)]
    norm = Norm.parse(norm) if norm is not None else rng.choice((Norm.L1, Norm.LINF))
    top = n0 * q if norm is Norm.L1 else q
    eps = Fraction(rng.randint(0, top), q)
    tbar = propagate_scaled(model, anchor).predicted_class
    return model, InputSpec(tuple(anchor), q, eps, norm, tbar)
