"""Best-bound branch-and-bound over the dense simplex.

Integral points are accepted only after an exact rational feasibility check,
so incumbents, pool members and the values compared against verification
thresholds are exact.  Node bounds of models whose objective is integral on
integral points are rounded down, which makes every stop test an integer
compare.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ..ipmodel import EQ, GE, LE, IpModel
from .simplex import DenseLP, LPStatus

log = logging.getLogger(__name__)

INT_TOL = 1e-6
BOUND_SLACK = 1e-6


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    BOUND_STOP = "BoundStop"
    INCUMBENT_STOP = "IncumbentStop"
    NODE_LIMIT = "NodeLimit"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    QUAD_UNSUPPORTED = "QuadUnsupported"


class QuadUnsupported(Exception):
    """The internal engine only handles linear constraints."""


@dataclass
class SolveControls:
    node_limit: Optional[int] = None
    time_limit_ms: Optional[int] = None
    stop_if_bound_at_most: Optional[Fraction] = None
    stop_if_incumbent_above: Optional[Fraction] = None
    collect_solution_pool: bool = False

    def __post_init__(self):
        for name in ("node_limit", "time_limit_ms"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass
class SolveOutcome:
    status: Status
    incumbent_value: Optional[Fraction] = None
    incumbent_point: Optional[list] = None
    best_bound: Optional[Fraction] = None
    nodes_processed: int = 0
    solution_pool: list = field(default_factory=list)
    root_lp_value: Optional[Fraction] = None
    root_lp_exact: bool = False
    bound_trace: list = field(default_factory=list)
    lp_iterations: int = 0
    elapsed_ms: float = 0.0


@dataclass
class LPResult:
    status: LPStatus
    value: Optional[Fraction] = None
    point: Optional[list] = None
    exact: bool = False
    x: Optional[np.ndarray] = None


# -- model -> arrays -----------------------------------------------------------

@dataclass
class _Arrays:
    A: np.ndarray
    senses: list
    b: np.ndarray
    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integral: np.ndarray


def _to_float(v) -> float:
    return float(v)


def model_arrays(model: IpModel) -> _Arrays:
    n = model.num_vars
    m = len(model.constraints)
    A = np.zeros((m, n))
    b = np.zeros(m)
    senses = []
    for r, con in enumerate(model.constraints):
        for j, coef in con.terms:
            A[r, j] = float(coef)
        b[r] = float(con.rhs)
        senses.append(con.sense)
    c = np.zeros(n)
    for j, coef in model.objective.items():
        c[j] = float(coef)
    lo = np.array([_to_float(v.lower) for v in model.variables], dtype=float)
    hi = np.array([_to_float(v.upper) for v in model.variables], dtype=float)
    integral = np.array([v.integral for v in model.variables], dtype=bool)
    return _Arrays(A, senses, b, c, lo, hi, integral)


def _float_feasible(arr: _Arrays, x: np.ndarray, tol=1e-6) -> bool:
    if np.any(x < arr.lo - tol) or np.any(x > arr.hi + tol):
        return False
    if not len(arr.senses):
        return True
    act = arr.A @ x
    for r, s in enumerate(arr.senses):
        if s == LE and act[r] > arr.b[r] + tol:
            return False
        if s == GE and act[r] < arr.b[r] - tol:
            return False
        if s == EQ and abs(act[r] - arr.b[r]) > tol:
            return False
    return True


def rationalize(model: IpModel, x: Sequence[float], snap_integral=True) -> Optional[list]:
    """Rational reconstruction of a float point, kept only if exactly feasible."""
    for limit in (10 ** 4, 10 ** 8):
        point = []
        for v, ref in zip(x, model.variables):
            r = round(float(v))
            if (snap_integral and ref.integral) or abs(v - r) < 1e-9:
                point.append(Fraction(r))
            else:
                point.append(Fraction(float(v)).limit_denominator(limit))
        if model.is_feasible(point, check_integrality=snap_integral):
            return point
    return None


# -- LP ------------------------------------------------------------------------

def solve_lp(model: IpModel) -> LPResult:
    """Solve the continuous relaxation of ``model``.

    Integrality flags are ignored.  The value is exact when the optimal
    vertex could be reconstructed as a rational point that passes an exact
    feasibility check; otherwise it is the float value with ``exact=False``.
    """
    if model.quadratic is not None:
        raise QuadUnsupported("linear-only engine: model has a quadratic constraint")
    arr = model_arrays(model)
    sol = DenseLP(arr.A, arr.senses, arr.b, arr.c).solve(arr.lo, arr.hi)
    if sol.status is LPStatus.NUMERIC:
        raise ArithmeticError("LP solve failed numerically")
    if sol.status is not LPStatus.OPTIMAL:
        return LPResult(sol.status)
    const = model.objective_constant
    point = rationalize(model, sol.x, snap_integral=False)
    if point is not None:
        value = model.objective_value(point)
        if abs(float(value) - (sol.value + float(const))) <= 1e-6 * (1 + abs(sol.value)):
            return LPResult(sol.status, value, point, True, sol.x)
    value = Fraction(sol.value) + const
    return LPResult(sol.status, value, None, False, sol.x)


# -- heuristic -----------------------------------------------------------------

def rounding_heuristic(model: IpModel, lp_point, context=None) -> Optional[list]:
    """Round-and-propagate completion of an LP point through ``context``.

    ``context`` is any object exposing ``complete_from_lp(point)`` returning a
    full assignment (the verification formulations provide one).  Without a
    context nothing is returned.
    """
    if context is None:
        return None
    cand = context.complete_from_lp(lp_point)
    if cand is None or not model.is_feasible(cand):
        return None
    return cand


# -- branch and bound ----------------------------------------------------------

@dataclass(order=True)
class _Node:
    key: tuple
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    bound: float = field(compare=False)
    warm: object = field(compare=False)


class _Search:
    def __init__(self, model: IpModel, controls: SolveControls, context):
        self.model = model
        self.controls = controls
        self.context = context
        self.arr = model_arrays(model)
        self.lp = DenseLP(self.arr.A, self.arr.senses, self.arr.b, self.arr.c)
        self.const = model.objective_constant
        self.integral_obj = model.objective_is_integral()
        self.incumbent_value: Optional[Fraction] = None
        self.incumbent_point = None
        self.pool = []
        self._pool_keys = set()
        self._tried = set()
        self.outcome = SolveOutcome(Status.OPTIMAL)

    def node_bound(self, lp_value: float, parent: float) -> float:
        v = lp_value + float(self.const)
        if self.integral_obj:
            v = math.floor(v + BOUND_SLACK)
        else:
            v = v + BOUND_SLACK * (1 + abs(v))
        return min(v, parent)

    def offer(self, point) -> bool:
        """Register an exactly feasible integral point.  True if it improved."""
        key = tuple(point)
        value = self.model.objective_value(point)
        if self.controls.collect_solution_pool and key not in self._pool_keys:
            self._pool_keys.add(key)
            self.pool.append(list(point))
        if self.incumbent_value is None or value > self.incumbent_value:
            self.incumbent_value = value
            self.incumbent_point = list(point)
            return True
        return False

    def try_heuristic(self, x):
        if self.context is None:
            return
        cand = self.context.complete_from_lp(x)
        if cand is None:
            return
        key = tuple(cand)
        if key in self._tried:
            return
        self._tried.add(key)
        if _float_feasible(self.arr, np.array([float(v) for v in cand])) and self.model.is_feasible(cand):
            self.offer(cand)

    def accept_integral(self, x) -> None:
        point = rationalize(self.model, x)
        if point is not None:
            self.offer(point)
            return
        log.debug("integral LP point failed exact check; trying completion")
        self.try_heuristic(x)

    def bound_fraction(self, heap) -> Optional[Fraction]:
        if heap:
            b = heap[0].bound
            bf = Fraction(int(b)) if self.integral_obj else Fraction(b)
            if self.incumbent_value is not None:
                bf = max(bf, self.incumbent_value)
            return bf
        return self.incumbent_value

    def run(self) -> SolveOutcome:
        out = self.outcome
        ctl = self.controls
        start = time.monotonic()
        seq = itertools.count()
        heap = [_Node((-math.inf, next(seq)), self.arr.lo.copy(), self.arr.hi.copy(), math.inf, None)]
        nodes = 0
        status = None
        while True:
            if not heap:
                break
            if ctl.stop_if_bound_at_most is not None and nodes:
                gb = self.bound_fraction(heap)
                if gb is not None and gb <= ctl.stop_if_bound_at_most:
                    status = Status.BOUND_STOP
                    break
            if ctl.node_limit is not None and nodes >= ctl.node_limit:
                status = Status.NODE_LIMIT
                break
            if ctl.time_limit_ms is not None and (time.monotonic() - start) * 1000 >= ctl.time_limit_ms:
                status = Status.TIME_LIMIT
                break
            node = heapq.heappop(heap)
            if self.incumbent_value is not None and node.bound <= float(self.incumbent_value) and nodes:
                continue
            sol = self.lp.solve(node.lo, node.hi, node.warm)
            nodes += 1
            out.lp_iterations += sol.iterations
            if nodes == 1:
                if sol.status is LPStatus.OPTIMAL:
                    self._record_root(sol)
                elif sol.status is LPStatus.UNBOUNDED:
                    status = Status.UNBOUNDED
                    break
            if sol.status is LPStatus.INFEASIBLE:
                self._trace(nodes, heap)
                continue
            if sol.status is not LPStatus.OPTIMAL:
                log.warning("node LP status %s; node dropped", sol.status.value)
                self._trace(nodes, heap)
                continue
            bound = self.node_bound(sol.value, node.bound)
            x = sol.x
            self.try_heuristic(x)
            frac = np.abs(x - np.round(x))
            frac[~self.arr.integral] = 0.0
            if frac.max(initial=0.0) <= INT_TOL:
                self.accept_integral(x)
            elif self.incumbent_value is None or bound > float(self.incumbent_value):
                dist = np.minimum(x - np.floor(x), np.ceil(x) - x)
                dist[~self.arr.integral | (frac <= INT_TOL)] = -1.0
                j = int(np.argmax(dist))
                down_hi = node.hi.copy()
                down_hi[j] = math.floor(x[j])
                up_lo = node.lo.copy()
                up_lo[j] = math.ceil(x[j])
                heapq.heappush(heap, _Node((-bound, next(seq)), node.lo, down_hi, bound, sol.basis))
                heapq.heappush(heap, _Node((-bound, next(seq)), up_lo, node.hi, bound, sol.basis))
            if (ctl.stop_if_incumbent_above is not None and self.incumbent_value is not None
                    and self.incumbent_value > ctl.stop_if_incumbent_above):
                status = Status.INCUMBENT_STOP
                self._trace(nodes, heap)
                break
            if self.incumbent_value is not None:
                heap = [nd for nd in heap if nd.bound > float(self.incumbent_value)]
                heapq.heapify(heap)
            self._trace(nodes, heap)
        if status is None:
            status = Status.OPTIMAL if self.incumbent_value is not None else Status.INFEASIBLE
        out.status = status
        out.nodes_processed = nodes
        out.incumbent_value = self.incumbent_value
        out.incumbent_point = self.incumbent_point
        out.best_bound = self.bound_fraction(heap) if status is not Status.OPTIMAL else self.incumbent_value
        out.solution_pool = self.pool
        out.elapsed_ms = (time.monotonic() - start) * 1000
        return out

    def _record_root(self, sol):
        value = sol.value + float(self.const)
        point = rationalize(self.model, sol.x, snap_integral=False)
        if point is not None:
            exact = self.model.objective_value(point)
            if abs(float(exact) - value) <= 1e-6 * (1 + abs(value)):
                self.outcome.root_lp_value = exact
                self.outcome.root_lp_exact = True
                return
        self.outcome.root_lp_value = Fraction(value)
        self.outcome.root_lp_exact = False

    def _trace(self, nodes, heap):
        self.outcome.bound_trace.append(self.bound_fraction(heap))


def solve_mip(model: IpModel, controls: Optional[SolveControls] = None, context=None) -> SolveOutcome:
    """Maximize ``model`` by best-bound branch-and-bound.

    Parameters
    ----------
    model : IpModel
        Linear model.  A quadratic constraint yields ``QuadUnsupported``.
    controls : SolveControls, optional
        Node/time limits, threshold stops and solution-pool collection.
    context : object, optional
        Completion hook for the rounding heuristic (see ``rounding_heuristic``).

    Returns
    -------
    SolveOutcome
        Resource and threshold stops are reported as statuses, never raised.
    """
    controls = controls or SolveControls()
    if model.quadratic is not None:
        return SolveOutcome(Status.QUAD_UNSUPPORTED)
    return _Search(model, controls, context).run()
