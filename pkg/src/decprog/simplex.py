"""Bounded-variable revised primal simplex.

Solves the LP relaxation of a MilpModel: maximize c'x subject to linear
rows and box bounds.  Rows get slack columns with sign-restricted
bounds; the basis inverse is kept explicitly (dense) with product-form
updates and periodic refactorization.  Phase 1 drives the slack basis
to feasibility by pricing against the infeasibility gradient; phase 2
prices with Dantzig's rule and falls back to Bland's rule after a
degeneracy stall.  Pivoting is deterministic: identical inputs walk the
identical pivot sequence.

Besides the primal solution, `solve_lp` reports row duals, reduced
costs, and a `dual_bound`: a certified upper bound on the LP optimum
computed from the (sign-clamped) terminal duals.  The bound is valid
even if iteration stopped early, which is what the branch-and-bound
layer prunes against.

Column storage is dense up to 5000 variables and switches to a
compressed column-major layout above that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .formulation import EQ, GE, LE, MilpModel, Row

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64
STALL_LIMIT = 64
SPARSE_COLUMN_THRESHOLD = 5000

_AT_LOWER, _AT_UPPER, _BASIC, _FREE_NB = 0, 1, 2, 3


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


class SimplexNumericalError(RuntimeError):
    """Basis factorization or pivoting broke down numerically."""


@dataclass
class LpLimits:
    max_iterations: int = 200_000
    feasibility_tol: float = FEAS_TOL
    optimality_tol: float = OPT_TOL


@dataclass
class BasisSnapshot:
    """Opaque warm-start state: basic column ids and upper-bound set.

    Columns are identified by ("v", variable index) or ("s", row index)
    so a snapshot survives appended rows: their slacks re-enter the
    basis on restore.
    """

    signature: int
    basic: tuple
    at_upper: frozenset


@dataclass
class LpSolution:
    status: LpStatus
    objective: float
    primal: np.ndarray
    iteration_count: int
    duals: np.ndarray
    reduced_costs: np.ndarray
    dual_bound: float
    infeasibility: float = 0.0
    basis: BasisSnapshot | None = None


class _Columns:
    """Structural-column storage: dense matrix or CSC arrays."""

    def __init__(self, rows: list[Row], var_map: dict[int, int], n_cols: int):
        m = len(rows)
        self.m = m
        self.n = n_cols
        self.dense: np.ndarray | None = None
        if n_cols <= SPARSE_COLUMN_THRESHOLD:
            A = np.zeros((m, n_cols), dtype=np.float64)
            for i, row in enumerate(rows):
                for vidx, coef in row.coeffs.items():
                    j = var_map.get(vidx)
                    if j is not None:
                        A[i, j] += coef
            self.dense = A
        else:
            per_col: list[list[tuple[int, float]]] = [[] for _ in range(n_cols)]
            for i, row in enumerate(rows):
                for vidx, coef in row.coeffs.items():
                    j = var_map.get(vidx)
                    if j is not None:
                        per_col[j].append((i, coef))
            indptr = np.zeros(n_cols + 1, dtype=np.int64)
            total = sum(len(c) for c in per_col)
            indices = np.empty(total, dtype=np.int64)
            data = np.empty(total, dtype=np.float64)
            pos = 0
            for j, entries in enumerate(per_col):
                entries.sort()
                for i, coef in entries:
                    indices[pos] = i
                    data[pos] = coef
                    pos += 1
                indptr[j + 1] = pos
            self.indptr, self.indices, self.data = indptr, indices, data

    def col(self, j: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[:, j]
        out = np.zeros(self.m, dtype=np.float64)
        lo, hi = self.indptr[j], self.indptr[j + 1]
        out[self.indices[lo:hi]] = self.data[lo:hi]
        return out

    def t_dot(self, y: np.ndarray) -> np.ndarray:
        """A' y over all structural columns."""
        if self.dense is not None:
            return self.dense.T @ y
        weighted = self.data * y[self.indices]
        cs = np.concatenate(([0.0], np.cumsum(weighted)))
        return cs[self.indptr[1:]] - cs[self.indptr[:-1]]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense @ x
        out = np.zeros(self.m, dtype=np.float64)
        nz = np.nonzero(x)[0]
        for j in nz:
            lo, hi = self.indptr[j], self.indptr[j + 1]
            np.add.at(out, self.indices[lo:hi], self.data[lo:hi] * x[j])
        return out


class _Simplex:
    def __init__(self, rows: list[Row], c: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                 var_map: dict[int, int], limits: LpLimits):
        self.limits = limits
        n = len(c)
        m = len(rows)
        self.n, self.m = n, m
        self.A = _Columns(rows, var_map, n)
        self.b = np.array([r.rhs for r in rows], dtype=np.float64)
        self.c = np.concatenate([c, np.zeros(m)])
        self.lo = np.concatenate([lo, np.zeros(m)])
        self.hi = np.concatenate([hi, np.zeros(m)])
        self.row_sense = [r.sense for r in rows]
        for i, r in enumerate(rows):
            if r.sense == LE:
                self.hi[n + i] = math.inf
            elif r.sense == GE:
                self.lo[n + i] = -math.inf
        self.N = n + m
        self.status = np.empty(self.N, dtype=np.int8)
        self.x = np.zeros(self.N, dtype=np.float64)
        self.basis = np.arange(n, n + m, dtype=np.int64)
        self.in_basis = np.zeros(self.N, dtype=bool)
        self.binv = np.eye(m, dtype=np.float64)
        self.iterations = 0
        self.pivots_since_refactor = 0
        self.bland = False
        self.stall = 0
        self.last_gain_ref = -math.inf

    # -- columns over the extended (structural + slack) index space ------------

    def col(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.A.col(j)
        e = np.zeros(self.m, dtype=np.float64)
        e[j - self.n] = 1.0
        return e

    def all_reduced(self, y: np.ndarray, costs: np.ndarray) -> np.ndarray:
        d = np.empty(self.N, dtype=np.float64)
        d[:self.n] = costs[:self.n] - self.A.t_dot(y)
        d[self.n:] = costs[self.n:] - y
        return d

    # -- setup -------------------------------------------------------------------

    def cold_start(self) -> None:
        for j in range(self.N):
            if j >= self.n:
                continue
            if math.isfinite(self.lo[j]):
                self.status[j] = _AT_LOWER
                self.x[j] = self.lo[j]
            elif math.isfinite(self.hi[j]):
                self.status[j] = _AT_UPPER
                self.x[j] = self.hi[j]
            else:
                self.status[j] = _FREE_NB
                self.x[j] = 0.0
        for i in range(self.m):
            j = self.n + i
            self.status[j] = _BASIC
            self.in_basis[j] = True
        self.basis = np.arange(self.n, self.n + self.m, dtype=np.int64)
        self.binv = np.eye(self.m, dtype=np.float64)
        self.recompute_basics()

    def warm_start(self, snap: BasisSnapshot) -> bool:
        basic_ids: list[int] = []
        seen_rows: set[int] = set()
        for kind, ident in snap.basic:
            if kind == "v":
                if not 0 <= ident < self.n:
                    return False
                basic_ids.append(ident)
            else:
                if not 0 <= ident < self.m:
                    return False
                seen_rows.add(ident)
                basic_ids.append(self.n + ident)
        for i in range(self.m):
            if i not in seen_rows and len(basic_ids) < self.m:
                basic_ids.append(self.n + i)
                seen_rows.add(i)
        if len(basic_ids) != self.m:
            return False
        self.basis = np.array(basic_ids, dtype=np.int64)
        self.in_basis[:] = False
        self.in_basis[self.basis] = True
        for j in range(self.N):
            if self.in_basis[j]:
                self.status[j] = _BASIC
            elif ("v", j) in snap.at_upper or ("s", j - self.n) in snap.at_upper:
                self.status[j] = _AT_UPPER
                self.x[j] = self.hi[j]
            elif math.isfinite(self.lo[j]):
                self.status[j] = _AT_LOWER
                self.x[j] = self.lo[j]
            elif math.isfinite(self.hi[j]):
                self.status[j] = _AT_UPPER
                self.x[j] = self.hi[j]
            else:
                self.status[j] = _FREE_NB
                self.x[j] = 0.0
        try:
            self.refactor()
        except SimplexNumericalError:
            return False
        scale = 1.0 + float(np.max(np.abs(self.b), initial=0.0))
        if (float(np.max(np.abs(self.binv), initial=0.0)) > 1e12
                or float(np.max(np.abs(self.x[self.basis]), initial=0.0)) > 1e9 * scale):
            return False  # restored basis is numerically useless
        return True

    def refactor(self) -> None:
        B = np.empty((self.m, self.m), dtype=np.float64)
        for k, j in enumerate(self.basis):
            B[:, k] = self.col(int(j))
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SimplexNumericalError("singular basis") from exc
        self.pivots_since_refactor = 0
        self.recompute_basics()

    def recompute_basics(self) -> None:
        xs = self.x[:self.n].copy()
        xs[self.in_basis[:self.n]] = 0.0
        r = self.b - self.A.matvec(xs)
        nb_slack = ~self.in_basis[self.n:]
        # nonbasic slacks sit at zero by construction, nothing to subtract
        del nb_slack
        xb = self.binv @ r
        self.x[self.basis] = xb

    # -- iteration ------------------------------------------------------------------

    def violations(self) -> tuple[np.ndarray, float]:
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        below = np.maximum(0.0, lo - xb)
        above = np.maximum(0.0, xb - hi)
        grad = np.where(below > self.limits.feasibility_tol, 1.0, 0.0)
        grad -= np.where(above > self.limits.feasibility_tol, 1.0, 0.0)
        return grad, float(below.sum() + above.sum())

    def pick_entering(self, d: np.ndarray) -> int | None:
        tol = self.limits.optimality_tol
        stat = self.status
        eligible = np.zeros(self.N, dtype=bool)
        eligible |= (stat == _AT_LOWER) & (d > tol)
        eligible |= (stat == _AT_UPPER) & (d < -tol)
        eligible |= (stat == _FREE_NB) & (np.abs(d) > tol)
        idx = np.nonzero(eligible)[0]
        if idx.size == 0:
            return None
        if self.bland:
            return int(idx[0])
        scores = np.abs(d[idx])
        best = idx[np.argmax(scores)]
        return int(best)

    def ratio_test(self, enter: int, direction: float, w: np.ndarray,
                   phase1: bool) -> tuple[float, int | None, float]:
        """Largest feasible step: (t, leaving basis position or None, target).

        None means the entering variable hits its own opposite bound (a
        bound flip); `target` is the bound value the leaving variable
        stops at.  Infinite t signals unboundedness.
        """
        ftol = self.limits.feasibility_tol
        rate = -direction * w  # d x_B / dt
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]

        best_t = math.inf
        if math.isfinite(self.hi[enter]) and math.isfinite(self.lo[enter]):
            best_t = self.hi[enter] - self.lo[enter]
        best_pos: int | None = None
        best_piv = 0.0
        best_target = 0.0

        live = np.nonzero(np.abs(w) > PIVOT_TOL)[0]
        for pos in live:
            r = rate[pos]
            xv, lov, hiv = xb[pos], lo[pos], hi[pos]
            if phase1 and xv < lov - ftol:
                # below its range: blocks only when climbing back to the lower bound
                if r <= 0:
                    continue
                t, target = (lov - xv) / r, lov
            elif phase1 and xv > hiv + ftol:
                if r >= 0:
                    continue
                t, target = (hiv - xv) / r, hiv
            elif r > 0:
                if not math.isfinite(hiv):
                    continue
                t, target = (hiv - xv) / r, hiv
            elif r < 0:
                if not math.isfinite(lov):
                    continue
                t, target = (lov - xv) / r, lov
            else:
                continue
            t = max(t, 0.0)
            if t < best_t - 1e-12:
                best_t, best_pos, best_piv, best_target = t, int(pos), abs(w[pos]), target
            elif t <= best_t + 1e-12:
                if best_pos is None:
                    if t < best_t:
                        best_t, best_pos, best_piv, best_target = (t, int(pos),
                                                                   abs(w[pos]), target)
                elif self.bland:
                    if self.basis[pos] < self.basis[best_pos]:
                        best_pos, best_piv, best_target = int(pos), abs(w[pos]), target
                elif abs(w[pos]) > best_piv:
                    best_pos, best_piv, best_target = int(pos), abs(w[pos]), target
        return best_t, best_pos, best_target

    def apply_step(self, enter: int, direction: float, w: np.ndarray, t: float,
                   leave_pos: int | None, target: float) -> None:
        if t != 0.0:
            self.x[self.basis] -= direction * t * w
            self.x[enter] += direction * t
        if leave_pos is None:
            # bound flip
            self.status[enter] = _AT_UPPER if direction > 0 else _AT_LOWER
            self.x[enter] = self.hi[enter] if direction > 0 else self.lo[enter]
            return
        leave = int(self.basis[leave_pos])
        if not math.isfinite(target):
            raise SimplexNumericalError("leaving variable has no finite bound")
        # snap the leaving variable onto the bound it reached
        self.x[leave] = target
        self.status[leave] = (_AT_UPPER if target == self.hi[leave]
                              and math.isfinite(self.hi[leave]) else _AT_LOWER)
        self.in_basis[leave] = False
        self.basis[leave_pos] = enter
        self.in_basis[enter] = True
        self.status[enter] = _BASIC
        piv = w[leave_pos]
        if abs(piv) < PIVOT_TOL:
            raise SimplexNumericalError("pivot element vanished")
        self.binv[leave_pos, :] /= piv
        others = np.arange(self.m) != leave_pos
        self.binv[others, :] -= np.outer(w[others], self.binv[leave_pos, :])
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def note_progress(self, measure: float) -> None:
        if measure > self.last_gain_ref + 1e-10 * (1.0 + abs(measure)):
            self.stall = 0
            self.bland = False
            self.last_gain_ref = measure
        else:
            self.stall += 1
            if self.stall >= STALL_LIMIT:
                self.bland = True

    def run_phase(self, phase1: bool) -> str:
        self.last_gain_ref = -math.inf
        self.stall = 0
        while True:
            if self.iterations >= self.limits.max_iterations:
                return "limit"
            if phase1:
                grad, total = self.violations()
                if total <= self.limits.feasibility_tol:
                    return "feasible"
                costs = np.zeros(self.N, dtype=np.float64)
                costs[self.basis] = grad
                self.note_progress(-total)
            else:
                costs = self.c
                self.note_progress(float(self.c @ self.x))
            y = self.binv.T @ costs[self.basis]
            d = self.all_reduced(y, costs)
            enter = self.pick_entering(d)
            if enter is None:
                return "infeasible" if phase1 else "optimal"
            if self.status[enter] == _AT_UPPER:
                direction = -1.0
            elif self.status[enter] == _AT_LOWER:
                direction = 1.0
            else:
                direction = 1.0 if d[enter] > 0 else -1.0
            w = self.binv @ self.col(enter)
            t, leave_pos, target = self.ratio_test(enter, direction, w, phase1)
            if math.isinf(t):
                if phase1:
                    raise SimplexNumericalError("unbounded infeasibility direction")
                return "unbounded"
            self.apply_step(enter, direction, w, t, leave_pos, target)
            self.iterations += 1

    # -- reporting ---------------------------------------------------------------------

    def duals_and_reduced(self, costs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = self.binv.T @ costs[self.basis]
        d = self.all_reduced(y, costs)
        return y, d

    def certified_bound(self) -> float:
        """Valid upper bound on the LP optimum from sign-clamped duals."""
        y, _ = self.duals_and_reduced(self.c)
        y = y.copy()
        for i, sense in enumerate(self.row_sense):
            if sense == LE:
                y[i] = max(y[i], 0.0)
            elif sense == GE:
                y[i] = min(y[i], 0.0)
        d = self.c[:self.n] - self.A.t_dot(y)
        lo, hi = self.lo[:self.n], self.hi[:self.n]
        with np.errstate(invalid="ignore"):
            hi_term = np.where(d > 0, d * hi, 0.0)
            lo_term = np.where(d < 0, d * lo, 0.0)
        total = float(y @ self.b + np.sum(hi_term) + np.sum(lo_term))
        return math.inf if math.isnan(total) else total

    def snapshot(self, signature: int) -> BasisSnapshot:
        basic = tuple(("v", int(j)) if j < self.n else ("s", int(j - self.n))
                      for j in self.basis)
        ups = frozenset(("v", int(j)) if j < self.n else ("s", int(j - self.n))
                        for j in range(self.N) if self.status[j] == _AT_UPPER)
        return BasisSnapshot(signature=signature, basic=basic, at_upper=ups)


def _presolve(model: MilpModel, fixings: Mapping[str, float] | None,
              extra_rows: Sequence[Row] | None,
              lo_override: np.ndarray | None = None,
              hi_override: np.ndarray | None = None,
              rhs_override: Mapping[int, float] | None = None):
    """Fixed-variable elimination and empty-row removal.

    Returns live rows (RHS adjusted for fixed columns), the live-column
    map, bounds and costs over live columns, the full fixed-value
    vector, and a flag when an empty row is inconsistent.
    """
    nvars = model.n_variables
    if lo_override is not None:
        lo_full = np.asarray(lo_override, dtype=np.float64).copy()
    else:
        lo_full = np.array([v.lo for v in model.variables], dtype=np.float64)
    if hi_override is not None:
        hi_full = np.asarray(hi_override, dtype=np.float64).copy()
    else:
        hi_full = np.array([v.hi for v in model.variables], dtype=np.float64)
    if fixings:
        for name, value in fixings.items():
            idx = model.var_index(name)
            lo_full[idx] = hi_full[idx] = float(value)

    fixed = lo_full == hi_full
    live = np.nonzero(~fixed)[0]
    var_map = {int(v): k for k, v in enumerate(live)}

    x_full = np.zeros(nvars, dtype=np.float64)
    x_full[fixed] = lo_full[fixed]

    rows_in = list(model.iter_rows(include_lazy=False))
    if extra_rows:
        rows_in.extend(extra_rows)
    rows_out: list[Row] = []
    row_map: list[int] = []
    infeasible_row: Row | None = None
    for ridx, row in enumerate(rows_in):
        shift = 0.0
        alive = False
        for vidx, coef in row.coeffs.items():
            if fixed[vidx]:
                shift += coef * x_full[vidx]
            else:
                alive = True
        base_rhs = row.rhs
        if rhs_override is not None and ridx in rhs_override:
            base_rhs = float(rhs_override[ridx])
        rhs = base_rhs - shift
        if not alive:
            viol = (max(0.0, -rhs) if row.sense == LE else
                    max(0.0, rhs) if row.sense == GE else abs(rhs))
            if viol > FEAS_TOL:
                infeasible_row = row
            continue
        rows_out.append(Row(name=row.name, coeffs=row.coeffs, sense=row.sense,
                            rhs=rhs, origin=row.origin))
        row_map.append(ridx)

    c_live = np.zeros(len(live), dtype=np.float64)
    for vidx, coef in model.objective.items():
        k = var_map.get(vidx)
        if k is not None:
            c_live[k] = coef
    const = sum(coef * x_full[vidx] for vidx, coef in model.objective.items()
                if fixed[vidx])
    return (rows_out, row_map, len(rows_in), var_map, live,
            lo_full[live], hi_full[live], c_live, float(const), x_full,
            infeasible_row)


def solve_lp(model: MilpModel, fixings: Mapping[str, float] | None = None,
             limits: LpLimits | None = None, *,
             extra_rows: Sequence[Row] | None = None,
             warm: BasisSnapshot | None = None,
             bland: bool = False,
             lo_override: np.ndarray | None = None,
             hi_override: np.ndarray | None = None,
             rhs_override: Mapping[int, float] | None = None) -> LpSolution:
    """Solve the model's LP relaxation (binaries relaxed to their boxes).

    `fixings` pins variables by name before the solve; `extra_rows`
    appends rows (the branch-and-bound layer uses this for activated
    lazy cuts).  The override arrays replace every variable bound (or a
    row's RHS by position) without touching the model, which lets a
    caller re-solve one cached model under many bound patterns.
    Numerical breakdown raises SimplexNumericalError rather than being
    folded into the infeasible status.
    """
    limits = limits or LpLimits()
    (rows, row_map, n_rows_in, var_map, live, lo, hi, c, const, x_full,
     bad_row) = _presolve(model, fixings, extra_rows, lo_override, hi_override,
                          rhs_override)

    if bad_row is not None:
        return LpSolution(status=LpStatus.INFEASIBLE, objective=-math.inf,
                          primal=x_full, iteration_count=0,
                          duals=np.zeros(n_rows_in), reduced_costs=np.zeros(model.n_variables),
                          dual_bound=-math.inf, infeasibility=math.inf)

    if len(live) == 0:
        # everything fixed: rows already verified consistent
        return LpSolution(status=LpStatus.OPTIMAL, objective=const, primal=x_full,
                          iteration_count=0, duals=np.zeros(n_rows_in),
                          reduced_costs=np.zeros(model.n_variables), dual_bound=const)

    sx = _Simplex(rows, c, lo, hi, var_map, limits)
    sx.bland = bland
    signature = hash((model.n_variables, len(live), tuple(int(v) for v in live[:64])))
    warmed = (warm is not None and warm.signature == signature
              and sx.warm_start(warm))
    if not warmed:
        sx.cold_start()

    outcome = sx.run_phase(phase1=True)
    if outcome == "infeasible" and warmed:
        # never trust an infeasibility verdict reached from a restored basis
        sx.cold_start()
        outcome = sx.run_phase(phase1=True)
    if outcome == "feasible":
        outcome = sx.run_phase(phase1=False)

    def expand_primal() -> np.ndarray:
        out = x_full.copy()
        out[live] = sx.x[:sx.n]
        return out

    def expand_duals(y_live: np.ndarray) -> np.ndarray:
        out = np.zeros(n_rows_in, dtype=np.float64)
        for k, ridx in enumerate(row_map):
            out[ridx] = y_live[k]
        return out

    def expand_reduced(d_live: np.ndarray) -> np.ndarray:
        out = np.zeros(model.n_variables, dtype=np.float64)
        out[live] = d_live[:sx.n]
        return out

    if outcome == "infeasible":
        grad, total = sx.violations()
        costs = np.zeros(sx.N)
        costs[sx.basis] = grad
        y, d = sx.duals_and_reduced(costs)
        return LpSolution(status=LpStatus.INFEASIBLE, objective=-math.inf,
                          primal=expand_primal(), iteration_count=sx.iterations,
                          duals=expand_duals(y), reduced_costs=expand_reduced(d),
                          dual_bound=-math.inf, infeasibility=total,
                          basis=sx.snapshot(signature))

    if outcome == "unbounded":
        return LpSolution(status=LpStatus.UNBOUNDED, objective=math.inf,
                          primal=expand_primal(), iteration_count=sx.iterations,
                          duals=np.zeros(n_rows_in),
                          reduced_costs=np.zeros(model.n_variables),
                          dual_bound=math.inf)

    # optimal or iteration limit: report the point plus a certified bound
    status = LpStatus.OPTIMAL if outcome == "optimal" else LpStatus.ITERATION_LIMIT

    if status is LpStatus.OPTIMAL:
        # feasibility audit; drifted or ill-conditioned runs restart cold
        attempts = 0
        while _residual(sx) > limits.feasibility_tol:
            attempts += 1
            if attempts > 3:
                raise SimplexNumericalError(
                    f"terminal residual {_residual(sx):.3e} above feasibility "
                    f"tolerance after {attempts - 1} restarts")
            sx.refactor()
            if _residual(sx) <= limits.feasibility_tol:
                break
            sx.bland = attempts >= 2
            sx.cold_start()
            outcome2 = sx.run_phase(phase1=True)
            if outcome2 == "feasible":
                outcome2 = sx.run_phase(phase1=False)
            if outcome2 == "unbounded":
                return LpSolution(status=LpStatus.UNBOUNDED, objective=math.inf,
                                  primal=expand_primal(), iteration_count=sx.iterations,
                                  duals=np.zeros(n_rows_in),
                                  reduced_costs=np.zeros(model.n_variables),
                                  dual_bound=math.inf)

    y, d = sx.duals_and_reduced(sx.c)
    primal = expand_primal()
    objective = const + float(sx.c[:sx.n] @ sx.x[:sx.n])
    bound = const + sx.certified_bound()

    return LpSolution(status=status, objective=objective, primal=primal,
                      iteration_count=sx.iterations, duals=expand_duals(y),
                      reduced_costs=expand_reduced(d), dual_bound=bound,
                      basis=sx.snapshot(signature))


def _residual(sx: _Simplex) -> float:
    xs = sx.x[:sx.n]
    r = sx.A.matvec(xs) + sx.x[sx.n:] - sx.b
    worst = float(np.max(np.abs(r))) if sx.m else 0.0
    worst = max(worst, float(np.max(np.maximum(sx.lo - sx.x, 0.0), initial=0.0)))
    worst = max(worst, float(np.max(np.maximum(sx.x - sx.hi, 0.0), initial=0.0)))
    return worst
