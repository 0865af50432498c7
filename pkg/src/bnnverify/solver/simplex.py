"""Dense bounded-variable simplex.

Solves ``max c.x  s.t.  A x (<=,>=,=) b,  lo <= x <= hi`` in double
precision.  Every row gets a slack column so the working problem is
``[A | I] (x, s) = b`` with bounds on both parts.  A cold start runs a
two-phase primal simplex; a warm start from a stored basis runs the dual
simplex, which is what branch-and-bound children need after a bound change.

The tableau ``B^-1 [A | I]`` is kept explicitly and refactored from the
basis every ``REFACTOR_EVERY`` pivots; at desk scale (tens of rows) this is
cheaper than maintaining LU factors.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
BLAND_AFTER = 1000
REFACTOR_EVERY = 64

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERIC = "numeric"


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Basis:
    """Basic column per row plus the nonbasic columns resting at upper bound."""

    basic: tuple
    at_upper: frozenset


@dataclass
class LPSolution:
    status: LPStatus
    value: float = float("nan")
    x: Optional[np.ndarray] = None
    basis: Optional[Basis] = None
    iterations: int = 0


class _Tableau:
    def __init__(self, A, b, lo, hi, basis, status):
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        self.m, self.N = A.shape
        self.basis = np.asarray(basis, dtype=np.int64)
        self.status = status
        self.x = np.zeros(self.N)
        self.iterations = 0
        self.refactor()

    def _place_nonbasic(self):
        st = self.status
        x = self.x
        lower = st == AT_LOWER
        upper = st == AT_UPPER
        x[lower] = self.lo[lower]
        x[upper] = self.hi[upper]
        x[st == FREE] = 0.0

    def refactor(self):
        self._place_nonbasic()
        if self.m == 0:
            self.T = np.zeros((0, self.N))
            self.since = 0
            return
        B = self.A[:, self.basis]
        nb = self.status != BASIC
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        try:
            self.T = np.linalg.solve(B, self.A)
            self.x[self.basis] = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis") from exc
        self.since = 0

    def pivot(self, r, j):
        T = self.T
        piv = T[r, j]
        T[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.since += 1
        self.iterations += 1

    def reduced_costs(self, c):
        if self.m == 0:
            return c.copy()
        return c - c[self.basis] @ self.T

    def max_primal_infeasibility(self):
        if self.m == 0:
            return 0.0
        xb = self.x[self.basis]
        return float(max(np.max(self.lo[self.basis] - xb), np.max(xb - self.hi[self.basis]), 0.0))

    # -- primal ------------------------------------------------------------
    def primal(self, c, max_iter):
        degenerate = 0
        movable = self.hi > self.lo
        for _ in range(max_iter):
            if self.since >= REFACTOR_EVERY:
                self.refactor()
            d = self.reduced_costs(c)
            st = self.status
            up = ((st == AT_LOWER) | (st == FREE)) & (d > OPT_TOL) & movable
            down = ((st == AT_UPPER) | (st == FREE)) & (d < -OPT_TOL) & movable
            cand = up | down
            if not cand.any():
                return LPStatus.OPTIMAL
            bland = degenerate >= BLAND_AFTER
            if bland:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            direction = 1.0 if d[j] > 0 else -1.0
            flip = self.hi[j] - self.lo[j]
            r = -1
            t = flip
            if self.m:
                alpha = direction * self.T[:, j]
                xb = self.x[self.basis]
                lb = self.lo[self.basis]
                ub = self.hi[self.basis]
                ratios = np.full(self.m, np.inf)
                pos = alpha > PIVOT_TOL
                neg = alpha < -PIVOT_TOL
                with np.errstate(invalid="ignore"):
                    ratios[pos] = np.maximum(xb[pos] - lb[pos], 0.0) / alpha[pos]
                    ratios[neg] = np.maximum(ub[neg] - xb[neg], 0.0) / (-alpha[neg])
                rmin = ratios.min()
                if rmin < flip:
                    ties = np.flatnonzero(ratios <= rmin + 1e-12)
                    if bland:
                        r = int(ties[np.argmin(self.basis[ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(alpha[ties]))])
                    t = ratios[r]
            if not np.isfinite(t):
                return LPStatus.UNBOUNDED
            degenerate = degenerate + 1 if t <= 1e-12 else 0
            if self.m:
                self.x[self.basis] -= t * alpha
            if r < 0:
                st[j] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[j] = self.hi[j] if direction > 0 else self.lo[j]
                self.iterations += 1
                continue
            leaving = int(self.basis[r])
            self.x[j] += direction * t
            if alpha[r] > 0:
                st[leaving] = AT_LOWER
                self.x[leaving] = self.lo[leaving]
            else:
                st[leaving] = AT_UPPER
                self.x[leaving] = self.hi[leaving]
            self.pivot(r, j)
            st[j] = BASIC
        raise NumericalFailure("primal simplex iteration limit")

    # -- dual --------------------------------------------------------------
    def dual_feasible(self, c, tol=1e-6):
        d = self.reduced_costs(c)
        st = self.status
        movable = self.hi > self.lo
        bad = (((st == AT_LOWER) & (d > tol)) | ((st == AT_UPPER) & (d < -tol))
               | ((st == FREE) & (np.abs(d) > tol))) & movable
        return not bad.any()

    def dual(self, c, max_iter):
        movable = self.hi > self.lo
        stall = 0
        for _ in range(max_iter):
            if self.since >= REFACTOR_EVERY:
                self.refactor()
            if self.m == 0:
                return LPStatus.OPTIMAL
            xb = self.x[self.basis]
            lb = self.lo[self.basis]
            ub = self.hi[self.basis]
            viol = np.maximum(lb - xb, xb - ub)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return LPStatus.OPTIMAL
            below = xb[r] < lb[r]
            target = lb[r] if below else ub[r]
            row = self.T[r]
            st = self.status
            if below:
                cand = (((st == AT_LOWER) & (row < -PIVOT_TOL)) | ((st == AT_UPPER) & (row > PIVOT_TOL))
                        | ((st == FREE) & (np.abs(row) > PIVOT_TOL)))
            else:
                cand = (((st == AT_LOWER) & (row > PIVOT_TOL)) | ((st == AT_UPPER) & (row < -PIVOT_TOL))
                        | ((st == FREE) & (np.abs(row) > PIVOT_TOL)))
            cand &= movable
            if not cand.any():
                return LPStatus.INFEASIBLE
            d = self.reduced_costs(c)
            idx = np.flatnonzero(cand)
            ratios = np.abs(d[idx]) / np.abs(row[idx])
            rmin = ratios.min()
            if stall >= BLAND_AFTER:
                j = int(idx[np.flatnonzero(ratios <= rmin + 1e-12)[0]])
            else:
                ties = idx[ratios <= rmin + 1e-12]
                j = int(ties[np.argmax(np.abs(row[ties]))])
            stall = stall + 1 if rmin <= 1e-12 else 0
            dx = (xb[r] - target) / row[j]
            self.x[self.basis] -= self.T[:, j] * dx
            self.x[j] += dx
            leaving = int(self.basis[r])
            st[leaving] = AT_LOWER if below else AT_UPPER
            self.x[leaving] = target
            self.pivot(r, j)
            st[j] = BASIC
        raise NumericalFailure("dual simplex iteration limit")


def _slack_bounds(senses):
    lo = np.zeros(len(senses))
    hi = np.zeros(len(senses))
    for r, s in enumerate(senses):
        if s == "<=":
            hi[r] = np.inf
        elif s == ">=":
            lo[r] = -np.inf
    return lo, hi


def _initial_status(lo, hi):
    st = np.full(len(lo), AT_LOWER, dtype=np.int64)
    fin_lo = np.isfinite(lo)
    fin_hi = np.isfinite(hi)
    st[~fin_lo & fin_hi] = AT_UPPER
    st[~fin_lo & ~fin_hi] = FREE
    return st


class DenseLP:
    """Reusable LP shell: the matrix is fixed, bounds change per solve."""

    def __init__(self, A, senses, b, c):
        A = np.asarray(A, dtype=float).reshape(len(senses), -1) if len(senses) else np.zeros((0, len(c)))
        self.m, self.n = A.shape
        self.A_full = np.hstack([A, np.eye(self.m)])
        self.b = np.asarray(b, dtype=float).reshape(self.m)
        self.c_full = np.concatenate([np.asarray(c, dtype=float), np.zeros(self.m)])
        self.slack_lo, self.slack_hi = _slack_bounds(senses)
        self.max_iter = 50 * (self.m + self.n) + 1000

    def _full_bounds(self, lo, hi):
        return (np.concatenate([np.asarray(lo, dtype=float), self.slack_lo]),
                np.concatenate([np.asarray(hi, dtype=float), self.slack_hi]))

    def solve(self, lo, hi, warm: Optional[Basis] = None) -> LPSolution:
        flo, fhi = self._full_bounds(lo, hi)
        if np.any(flo > fhi + FEAS_TOL):
            return LPSolution(LPStatus.INFEASIBLE)
        if warm is not None:
            try:
                sol = self._warm(flo, fhi, warm)
            except NumericalFailure as exc:
                log.debug("warm start failed (%s); cold start", exc)
                sol = None
            if sol is not None:
                return sol
        try:
            return self._cold(flo, fhi)
        except NumericalFailure as exc:
            log.warning("LP numerical failure: %s", exc)
            return LPSolution(LPStatus.NUMERIC)

    def _finish(self, tab, c) -> LPSolution:
        tab.refactor()
        if tab.max_primal_infeasibility() > 1e-6:
            raise NumericalFailure("drift after refactor")
        basis = Basis(tuple(int(v) for v in tab.basis),
                      frozenset(int(j) for j in np.flatnonzero(tab.status == AT_UPPER)))
        x = tab.x[: self.n].copy()
        return LPSolution(LPStatus.OPTIMAL, float(c[: self.n] @ x), x, basis, tab.iterations)

    def _warm(self, flo, fhi, warm: Basis):
        if len(warm.basic) != self.m or max(warm.basic, default=-1) >= self.n + self.m:
            return None
        st = _initial_status(flo, fhi)
        for j in warm.at_upper:
            if np.isfinite(fhi[j]):
                st[j] = AT_UPPER
        st[list(warm.basic)] = BASIC
        tab = _Tableau(self.A_full, self.b, flo, fhi, warm.basic, st)
        c = self.c_full
        if tab.dual_feasible(c):
            res = tab.dual(c, self.max_iter)
            if res is LPStatus.INFEASIBLE:
                return LPSolution(LPStatus.INFEASIBLE, iterations=tab.iterations)
            res = tab.primal(c, self.max_iter)
        elif tab.max_primal_infeasibility() <= FEAS_TOL:
            res = tab.primal(c, self.max_iter)
        else:
            return None
        if res is LPStatus.UNBOUNDED:
            return LPSolution(LPStatus.UNBOUNDED, iterations=tab.iterations)
        return self._finish(tab, c)

    def _cold(self, flo, fhi) -> LPSolution:
        m, n = self.m, self.n
        st = _initial_status(flo, fhi)
        x = np.zeros(n + m)
        x[st == AT_LOWER] = flo[st == AT_LOWER]
        x[st == AT_UPPER] = fhi[st == AT_UPPER]
        res = self.b - self.A_full[:, :n] @ x[:n]
        basis = []
        art_rows = []
        for r in range(m):
            s = n + r
            if self.slack_lo[r] - FEAS_TOL <= res[r] <= self.slack_hi[r] + FEAS_TOL:
                basis.append(s)
            else:
                art_rows.append(r)
                basis.append(-1)
        k = len(art_rows)
        A = self.A_full
        lo, hi = flo, fhi
        if k:
            art = np.zeros((m, k))
            for a, r in enumerate(art_rows):
                art[r, a] = 1.0 if res[r] >= 0 else -1.0
                basis[r] = n + m + a
            A = np.hstack([A, art])
            lo = np.concatenate([flo, np.zeros(k)])
            hi = np.concatenate([fhi, np.full(k, np.inf)])
            st = np.concatenate([st, np.zeros(k, dtype=np.int64)])
        st[basis] = BASIC
        tab = _Tableau(A, self.b, lo, hi, basis, st)
        if k:
            c1 = np.zeros(A.shape[1])
            c1[n + m:] = -1.0
            tab.primal(c1, self.max_iter)
            infeas = float(np.sum(tab.x[n + m:]))
            if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(self.b), initial=0.0))):
                return LPSolution(LPStatus.INFEASIBLE, iterations=tab.iterations)
            tab.hi[n + m:] = 0.0
            tab.x[n + m:] = np.minimum(tab.x[n + m:], 0.0)
            self._drive_out_artificials(tab, n + m)
        c = np.concatenate([self.c_full, np.zeros(k)])
        status = tab.primal(c, self.max_iter)
        if status is LPStatus.UNBOUNDED:
            return LPSolution(LPStatus.UNBOUNDED, iterations=tab.iterations)
        sol = self._finish(tab, c)
        if k and max(sol.basis.basic) >= n + m:
            sol.basis = None  # redundant row kept its artificial; not reusable
        elif k:
            sol.basis = Basis(sol.basis.basic, frozenset(j for j in sol.basis.at_upper if j < n + m))
        return sol

    @staticmethod
    def _drive_out_artificials(tab, first_art):
        for r in range(tab.m):
            if tab.basis[r] < first_art:
                continue
            row = np.abs(tab.T[r, :first_art]).copy()
            row[tab.status[:first_art] == BASIC] = 0.0
            j = int(np.argmax(row)) if row.size else -1
            if j >= 0 and row[j] > 1e-7:
                leaving = int(tab.basis[r])
                tab.pivot(r, j)
                tab.status[j] = BASIC
                tab.status[leaving] = AT_LOWER
                tab.x[leaving] = 0.0
        tab.refactor()
