"""Solver-independent integer program container.

Data are exact rationals.  Conversion to floating point happens only when
a model is handed to the simplex code.
"""
from __future__ import annotations

import copy
import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, TextIO

log = logging.getLogger(__name__)

INF = math.inf

LE, GE, EQ = "<=", ">=", "="
_SENSES = (LE, GE, EQ)


class LossyExportWarning(UserWarning):
    """A coefficient could not be written as an exact decimal."""


def _rational(v):
    if v is None:
        return None
    if isinstance(v, float) and math.isinf(v):
        return v
    return Fraction(v)


@dataclass(frozen=True)
class VarRef:
    index: int
    name: str
    lower: object
    upper: object
    integral: bool

    @property
    def is_binary(self) -> bool:
        return self.integral and self.lower == 0 and self.upper == 1


@dataclass
class LinConstraint:
    terms: list  # list of (var index, Fraction)
    sense: str
    rhs: Fraction
    tag: str = ""

    def activity(self, point: Sequence) -> Fraction:
        return sum((c * point[j] for j, c in self.terms), Fraction(0))

    def satisfied(self, point: Sequence, tol=0) -> bool:
        act = self.activity(point)
        if self.sense == LE:
            return act <= self.rhs + tol
        if self.sense == GE:
            return act >= self.rhs - tol
        return abs(act - self.rhs) <= tol


@dataclass
class QuadConstraint:
    """``sum c_j v_j^2 <= rhs`` with every ``c_j >= 0``."""

    squared_terms: list  # list of (var index, Fraction)
    rhs: Fraction
    tag: str = "ball"

    def satisfied(self, point: Sequence, tol=0) -> bool:
        return sum((c * point[j] ** 2 for j, c in self.squared_terms), Fraction(0)) <= self.rhs + tol


@dataclass
class IpModel:
    """Variables, linear rows, at most one convex quadratic row and a
    linear objective that is always maximized."""

    name: str = "model"
    variables: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    quadratic: Optional[QuadConstraint] = None
    objective: dict = field(default_factory=dict)  # var index -> Fraction
    objective_constant: Fraction = Fraction(0)
    _names: dict = field(default_factory=dict, repr=False)

    # -- building ---------------------------------------------------------
    def add_var(self, name: str, lower=0, upper=INF, integral=False) -> VarRef:
        lower, upper = _rational(lower), _rational(upper)
        if lower is None:
            lower = -INF
        if upper is None:
            upper = INF
        if lower > upper:
            raise ValueError(f"variable {name}: lower bound {lower} exceeds upper bound {upper}")
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        ref = VarRef(len(self.variables), name, lower, upper, bool(integral))
        self.variables.append(ref)
        self._names[name] = ref.index
        return ref

    def var(self, name: str) -> VarRef:
        return self.variables[self._names[name]]

    def set_bounds(self, var, lower=None, upper=None) -> VarRef:
        idx = var.index if isinstance(var, VarRef) else int(var)
        old = self.variables[idx]
        lo = old.lower if lower is None else _rational(lower)
        hi = old.upper if upper is None else _rational(upper)
        if lo > hi:
            raise ValueError(f"variable {old.name}: empty bound interval [{lo}, {hi}]")
        new = VarRef(idx, old.name, lo, hi, old.integral)
        self.variables[idx] = new
        return new

    def _index(self, var) -> int:
        idx = var.index if isinstance(var, VarRef) else int(var)
        if not 0 <= idx < len(self.variables):
            raise KeyError(f"unregistered variable {var!r}")
        return idx

    def _collect(self, terms: Iterable) -> list:
        merged: dict[int, Fraction] = {}
        for var, coef in terms:
            idx = self._index(var)
            merged[idx] = merged.get(idx, Fraction(0)) + Fraction(coef)
        return [(j, c) for j, c in merged.items() if c != 0]

    def add_constraint(self, terms: Iterable, sense: str, rhs, tag: str = "") -> LinConstraint:
        if sense not in _SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        con = LinConstraint(self._collect(terms), sense, Fraction(rhs), tag)
        self.constraints.append(con)
        return con

    def set_quadratic(self, squared_terms: Iterable, rhs, tag: str = "ball") -> QuadConstraint:
        if self.quadratic is not None:
            raise ValueError("a model holds at most one quadratic constraint")
        terms = self._collect(squared_terms)
        if any(c < 0 for _, c in terms):
            raise ValueError("quadratic constraint must be convex (non-negative coefficients)")
        rhs = Fraction(rhs)
        if rhs < 0:
            raise ValueError("quadratic right-hand side must be non-negative")
        self.quadratic = QuadConstraint(terms, rhs, tag)
        return self.quadratic

    def set_objective(self, terms: Iterable, constant=0) -> None:
        self.objective = dict(self._collect(terms))
        self.objective_constant = Fraction(constant)

    # -- queries ----------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_integral(self) -> int:
        return sum(v.integral for v in self.variables)

    def objective_value(self, point: Sequence) -> Fraction:
        return self.objective_constant + sum((c * point[j] for j, c in self.objective.items()), Fraction(0))

    def is_feasible(self, point: Sequence, check_integrality=True) -> bool:
        """Exact feasibility test of a rational point."""
        if len(point) != len(self.variables):
            return False
        for v, val in zip(self.variables, point):
            if val < v.lower or val > v.upper:
                return False
            if check_integrality and v.integral and Fraction(val).denominator != 1:
                return False
        if not all(c.satisfied(point) for c in self.constraints):
            return False
        return self.quadratic is None or self.quadratic.satisfied(point)

    def objective_is_integral(self) -> bool:
        """True when every feasible integral point has an integer objective."""
        if self.objective_constant.denominator != 1:
            return False
        for j, c in self.objective.items():
            if not self.variables[j].integral or c.denominator != 1:
                return False
        return True

    def copy(self) -> "IpModel":
        return copy.deepcopy(self)

    def constraints_tagged(self, prefix: str) -> list:
        return [c for c in self.constraints if c.tag.startswith(prefix)]


def lp_relaxation(model: IpModel) -> IpModel:
    """Copy of ``model`` with every integrality flag cleared."""
    relaxed = model.copy()
    relaxed.variables = [VarRef(v.index, v.name, v.lower, v.upper, False) for v in relaxed.variables]
    relaxed.name = model.name if model.name.endswith("-lp") else model.name + "-lp"
    return relaxed


# -- LP-format export ---------------------------------------------------------

_NAME_BAD = re.compile(r"[^A-Za-z0-9_.]")


def sanitize_name(tag: str) -> str:
    """Map a provenance tag to an LP-format identifier.

    ``fix[ℓ=1,i=7]`` becomes ``fix_l1_i7``.  Names that would start with a
    digit or a period get an ``r_`` prefix.
    """
    s = tag.replace("ℓ=", "l").replace("ℓ", "l").replace("=", "")
    s = _NAME_BAD.sub("_", s)
    s = re.sub(r"_+", "_", s).strip("_")
    if not s:
        s = "r"
    if s[0].isdigit() or s[0] == ".":
        s = "r_" + s
    return s


def _is_exact_decimal(v: Fraction) -> bool:
    d = v.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def format_number(v) -> tuple[str, bool]:
    """Decimal text for ``v`` and whether it is exact."""
    if isinstance(v, float) and math.isinf(v):
        return ("inf" if v > 0 else "-inf"), True
    v = Fraction(v)
    if v.denominator == 1:
        return str(v.numerator), True
    if _is_exact_decimal(v):
        sign = "-" if v < 0 else ""
        a = abs(v)
        digits = 0
        while (a * 10 ** digits).denominator != 1:
            digits += 1
        scaled = int(a * 10 ** digits)
        whole, frac = divmod(scaled, 10 ** digits)
        return f"{sign}{whole}.{frac:0{digits}d}", True
    return f"{float(v):.17g}", False


class _Emitter:
    def __init__(self):
        self.lossy = 0

    def num(self, v) -> str:
        text, exact = format_number(v)
        if not exact:
            self.lossy += 1
        return text

    def linear(self, terms, names) -> str:
        parts = []
        for j, c in terms:
            if c == 0:
                continue
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            coef = "" if mag == 1 else self.num(mag) + " "
            parts.append(f"{sign} {coef}{names[j]}")
        if not parts:
            return "0 " + names[0] if names else "0"
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[1:]


def export_lp_text(model: IpModel, sink: TextIO) -> None:
    """Write ``model`` in CPLEX LP format to ``sink``."""
    em = _Emitter()
    names = [sanitize_name(v.name) for v in model.variables]
    if len(set(names)) != len(names):
        raise ValueError("variable names collide after sanitizing")
    out = [f"\\ {model.name}", "Maximize"]
    obj = em.linear(sorted(model.objective.items()), names) if model.objective else ""
    const = model.objective_constant
    if const != 0 or not obj:
        c_text = em.num(abs(const))
        if obj:
            obj = f"{obj} {'-' if const < 0 else '+'} {c_text}"
        else:
            obj = ("-" if const < 0 else "") + c_text
    out.append(f" obj: {obj}")
    out.append("Subject To")
    used = set()
    for k, con in enumerate(model.constraints):
        base = sanitize_name(con.tag) if con.tag else f"c{k}"
        cname = base
        n = 1
        while cname in used:
            n += 1
            cname = f"{base}_{n}"
        used.add(cname)
        lhs = em.linear(con.terms, names) if con.terms else f"0 {names[0]}"
        out.append(f" {cname}: {lhs} {con.sense} {em.num(con.rhs)}")
    if model.quadratic is not None:
        qc = model.quadratic
        sq = " + ".join(f"{'' if c == 1 else em.num(c) + ' '}{names[j]} ^2" for j, c in qc.squared_terms)
        out.append(f" {sanitize_name(qc.tag)}: [ {sq} ] <= {em.num(qc.rhs)}")
    out.append("Bounds")
    for v, nm in zip(model.variables, names):
        lo, hi = v.lower, v.upper
        if lo == -INF and hi == INF:
            out.append(f" {nm} free")
        elif lo == -INF:
            out.append(f" -inf <= {nm} <= {em.num(hi)}")
        elif hi == INF:
            out.append(f" {nm} >= {em.num(lo)}")
        elif lo == hi:
            out.append(f" {nm} = {em.num(lo)}")
        else:
            out.append(f" {em.num(lo)} <= {nm} <= {em.num(hi)}")
    general = [nm for v, nm in zip(model.variables, names) if v.integral and not v.is_binary]
    binary = [nm for v, nm in zip(model.variables, names) if v.is_binary]
    if general:
        out.append("General")
        out.extend(f" {nm}" for nm in general)
    if binary:
        out.append("Binary")
        out.extend(f" {nm}" for nm in binary)
    out.append("End")
    try:
        sink.write("\n".join(out) + "\n")
    except OSError:
        raise
    if em.lossy:
        warnings.warn(f"{em.lossy} coefficient(s) written as 17-digit decimals; export is lossy",
                      LossyExportWarning, stacklevel=2)
