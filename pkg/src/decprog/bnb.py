"""Branch-and-bound solver for the path-probability MILPs.

Models built by `formulation.build_base` have a special shape: once the
policy binaries z are fixed, every path variable collapses to a closed
form (its probability cap, or a floor when lower-bound rows are
present).  The solver exploits this with a decomposition: the search
tree lives over the binaries, each node bound comes from a small master
LP over (z, extra binaries, value epigraph) strengthened by exact
supergradient cuts of the path-space value function, and a node whose
binaries are integral is finished off exactly, without a large LP.
The value-function subproblem is evaluated in closed form when no
coupling rows exist, and as a small simplex solve over the path columns
when strengthening equalities, chance rows, or dominance rows couple
the paths.  Tail-expectation blocks relax to a capacity-limited tail in
the bound and are completed exactly (threshold, indicators, tail
weights) from the induced consequence distribution at integral nodes.

Lazy cuts follow the discard mechanism: they are checked only when an
integer-feasible candidate appears; a violation above 1e-7 activates
the cut, the node is re-solved, and only then may fathoming decisions
be taken.

Raw models without path structure fall back to a direct engine that
solves every node's full LP relaxation.

All pruning uses certified dual bounds from the LP layer, so early
simplex termination can never cut off the optimum.  Identical inputs
produce identical trees: candidate ordering, cut generation, and
branching are deterministic.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .diagram import Diagram, info_states
from .formulation import (BINARY, CONTINUOUS, EQ, GE, LE, CvarBlock, MilpModel,
                          ModelError, ORIGIN_ACTIVE_CUT, ORIGIN_ASSIGN, ORIGIN_CVAR,
                          ORIGIN_PROB_CUT, Row, parse_z_key)
from .simplex import (BasisSnapshot, LpLimits, LpSolution, LpStatus,
                      SimplexNumericalError, solve_lp)
from .strategy import GlobalStrategy, LocalStrategy

logger = logging.getLogger("decprog.bnb")

LAZY_VIOLATION_TOL = 1e-7
COMPLETION_FEAS_TOL = 1e-7
DIRECT_ROW_LIMIT = 100_000
NODE_KELLEY_CAP = 8  # non-root nodes lean on the shared cut pool

CUT_POLICY_OFF = "off"
CUT_POLICY_PROB = "probability_cut"
CUT_POLICY_PROB_ACTIVE = "probability_and_active_path"


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    LIMIT = "limit"


@dataclass
class SolveParams:
    gap_tolerance: float = 1e-9          # relative
    integrality_tolerance: float = 1e-6
    node_limit: int | None = None
    time_limit: float | None = None
    lazy_cut_policy: str = CUT_POLICY_PROB
    branching: str = "most_fractional"   # or "first_index"
    search: str = "best_bound"           # or "depth_first"
    engine: str = "auto"                 # "auto", "decomposition", "direct"
    kelley_max_iterations: int = 400
    lp_limits: LpLimits = field(default_factory=LpLimits)

    def __post_init__(self) -> None:
        if self.gap_tolerance <= 0 or self.integrality_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class MilpSolution:
    status: SolveStatus
    objective: float                 # reporting units (shift undone)
    gap: float
    assignment: np.ndarray | None    # aligned with model.variables
    node_count: int
    cuts_added: int
    best_bound: float                # reporting units
    variable_names: tuple[str, ...] = ()

    def value(self, name: str) -> float:
        if self.assignment is None:
            raise ValueError("solution carries no assignment")
        return float(self.assignment[self.variable_names.index(name)])


@dataclass
class _Node:
    node_id: int
    fixings: dict
    bound: float
    depth: int


# ---------------------------------------------------------------------------
# decomposition engine
# ---------------------------------------------------------------------------


@dataclass
class _GeneralRow:
    """Row coupling path/tail columns, with master variables moved to the RHS."""

    name: str
    sense: str
    rhs: float
    col_coeffs: dict            # subproblem column -> coefficient
    master_terms: dict          # model variable index -> coefficient
    model_row: Row
    origin: str


class _Unsupported(Exception):
    """Model shape outside the decomposition engine's reach."""


class _Decomposition:
    """Value-function decomposition over the path structure."""

    def __init__(self, model: MilpModel, params: SolveParams):
        st = model.structure
        if st is None:
            raise _Unsupported("no path structure")
        self.model = model
        self.params = params
        self.st = st
        self.arrays = st.arrays
        self.n_paths = self.arrays.n_paths
        self.n_dec = self.arrays.z_index.shape[1]
        self.p = self.arrays.p

        # -- variable classification
        self.z_set = {int(v) for v in st.z_vars}
        self.pi_col = {int(st.pi_vars[r]): r for r in range(self.n_paths)}
        self.blocks = st.cvar_blocks
        cvar_vars: set[int] = set()
        self.rhob_col: dict[int, int] = {}
        ncols = self.n_paths
        self.block_col_base: list[int] = []
        for blk in self.blocks:
            self.block_col_base.append(ncols)
            for r in range(self.n_paths):
                self.rhob_col[int(blk.rhob[r])] = ncols + r
            ncols += self.n_paths
            cvar_vars.add(blk.eta)
            for arr in (blk.lam, blk.lamb, blk.rho, blk.rhob):
                cvar_vars.update(int(v) for v in arr)
        self.n_cols = ncols
        self.cvar_vars = cvar_vars

        self.master_binaries: list[int] = []
        for idx, var in enumerate(model.variables):
            if idx in self.z_set or idx in self.pi_col or idx in cvar_vars:
                continue
            if var.kind == BINARY:
                self.master_binaries.append(idx)
            else:
                raise _Unsupported(f"continuous variable {var.name!r} outside structure")
        self.master_var_set = self.z_set | set(self.master_binaries)

        # -- objective split
        self.obj_cols = np.zeros(self.n_cols, dtype=np.float64)
        self.obj_master: dict[int, float] = {}
        self.obj_eta: dict[int, float] = {}
        self.obj_box_const = 0.0
        eta_vars = {blk.eta: blk for blk in self.blocks}
        for idx, coef in model.objective.items():
            if idx in self.pi_col:
                self.obj_cols[self.pi_col[idx]] += coef
            elif idx in self.rhob_col:
                self.obj_cols[self.rhob_col[idx]] += coef
            elif idx in self.master_var_set:
                self.obj_master[idx] = self.obj_master.get(idx, 0.0) + coef
            elif idx in eta_vars:
                blk = eta_vars[idx]
                self.obj_eta[idx] = self.obj_eta.get(idx, 0.0) + coef
                self.obj_box_const += max(coef * blk.c_lo, coef * blk.c_hi)
            elif idx in cvar_vars:
                v = model.variables[idx]
                self.obj_box_const += max(coef * v.lo, coef * v.hi)
            else:
                raise _Unsupported(f"objective touches unsupported variable "
                                   f"{model.variables[idx].name!r}")

        # -- row classification
        self.master_rows: list[Row] = []
        self.general_rows: list[_GeneralRow] = []
        self.lazy_general: list[_GeneralRow] = []
        for row in model.explicit_rows:
            if row.origin == ORIGIN_CVAR and not row.name.startswith("cv7"):
                continue  # relaxed for bounds, reconstructed at completions
            target = self._classify_row(row)
            if row.lazy:
                if not isinstance(target, _GeneralRow):
                    raise _Unsupported(f"lazy row {row.name!r} over master variables")
                self.lazy_general.append(target)
            elif isinstance(target, _GeneralRow):
                self.general_rows.append(target)
            else:
                self.master_rows.append(row)

        if self.blocks and not any(gr.origin == ORIGIN_PROB_CUT
                                   for gr in self.general_rows):
            raise ModelError(
                "models with a tail-expectation block must pin path probabilities "
                "with the eager probability cut; call "
                "add_probability_cut(model, eager=True) before solving")

        self.activated: list[_GeneralRow] = []
        self.activated_names: set[str] = set()
        self.cut_rows = 0
        self._build_master()
        self._master_basis: BasisSnapshot | None = None
        self._master_solves = 0
        self._cut_last_tight: dict[str, int] = {}
        # subproblem model cache (rebuilt when the active row set changes)
        self._sub_key: tuple | None = None
        self._sub_model: MilpModel | None = None
        self._sub_rows: list[_GeneralRow] = []
        self._knap_order = np.lexsort((np.arange(self.n_paths),
                                       -self.obj_cols[:self.n_paths]))

    # -- setup ------------------------------------------------------------------

    def _classify_row(self, row: Row):
        master_terms: dict = {}
        col_coeffs: dict = {}
        for idx, coef in row.coeffs.items():
            if idx in self.pi_col:
                col = self.pi_col[idx]
                col_coeffs[col] = col_coeffs.get(col, 0.0) + coef
            elif idx in self.rhob_col:
                col = self.rhob_col[idx]
                col_coeffs[col] = col_coeffs.get(col, 0.0) + coef
            elif idx in self.master_var_set:
                master_terms[idx] = master_terms.get(idx, 0.0) + coef
            else:
                raise _Unsupported(f"row {row.name!r} touches unsupported variable")
        if not col_coeffs:
            return row
        return _GeneralRow(name=row.name, sense=row.sense, rhs=row.rhs,
                           col_coeffs=col_coeffs, master_terms=master_terms,
                           model_row=row, origin=row.origin)

    def _build_master(self) -> None:
        m = MilpModel()
        self.master_of: dict[int, int] = {}
        for idx in sorted(self.z_set) + self.master_binaries:
            self.master_of[idx] = m.add_variable(self.model.variables[idx].name,
                                                 CONTINUOUS, 0.0, 1.0)
        pos = np.maximum(self.obj_cols, 0.0)
        neg = np.minimum(self.obj_cols, 0.0)
        caps_all = np.tile(self.p, 1 + len(self.blocks))
        theta_hi = float(pos @ caps_all) + max(self.obj_box_const, 0.0) + 1.0
        theta_lo = float(neg @ caps_all) + min(self.obj_box_const, 0.0) - 1.0
        self.theta = m.add_variable("__theta", CONTINUOUS, theta_lo, theta_hi)
        for j, info, zvars in self.st.assignment_slots:
            m.add_row(f"assign[d{j},{info}]",
                      {self.master_of[v]: 1.0 for v in zvars}, EQ, 1.0,
                      origin=ORIGIN_ASSIGN)
        for row in self.master_rows:
            m.add_row(row.name, {self.master_of[i]: c for i, c in row.coeffs.items()},
                      row.sense, row.rhs, origin=row.origin)
        m.objective = {self.theta: 1.0}
        for idx, coef in self.obj_master.items():
            m.objective[self.master_of[idx]] = coef
        self.master = m

    def sync_master_rows(self) -> None:
        """Mirror master-only rows added to the model after engine setup."""
        have = {r.name for r in self.master.explicit_rows}
        for row in self.model.explicit_rows:
            if row.lazy or row.name in have or row.origin == ORIGIN_CVAR:
                continue
            target = self._classify_row(row)
            if isinstance(target, Row):
                self.master.add_row(row.name,
                                    {self.master_of[i]: c for i, c in row.coeffs.items()},
                                    row.sense, row.rhs, origin=row.origin)

    # -- caps and value function ----------------------------------------------------

    def _caps(self, zflat: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        if self.n_dec == 0:
            return self.p.copy(), None
        zp = zflat[self.arrays.z_index]
        zmin = zp.min(axis=1)
        arg = zp.argmin(axis=1)
        cap = np.minimum(self.p, zmin)
        arg = np.where(self.p <= zmin, -1, arg)  # -1: probability bound binds
        return cap, arg

    def _floors(self, zflat: np.ndarray) -> np.ndarray:
        if not self.st.has_lower_bound_rows or self.n_dec == 0:
            return np.zeros(self.n_paths, dtype=np.float64)
        zsum = zflat[self.arrays.z_index].sum(axis=1)
        return np.maximum(0.0, self.p + zsum - self.n_dec)

    def zflat_from_master(self, primal: np.ndarray) -> np.ndarray:
        out = np.empty(len(self.st.z_vars), dtype=np.float64)
        for k, vidx in enumerate(self.st.z_vars):
            out[k] = primal[self.master_of[int(vidx)]]
        return out

    def master_values(self, primal: np.ndarray) -> dict:
        return {i: float(primal[self.master_of[i]]) for i in self.master_var_set}

    def active_rows(self) -> list[_GeneralRow]:
        return self.general_rows + self.activated

    def _is_unit_probability_row(self, gr: _GeneralRow) -> bool:
        return (gr.origin == ORIGIN_PROB_CUT and gr.sense == EQ
                and not gr.master_terms and len(gr.col_coeffs) == self.n_paths
                and all(c == 1.0 for c in gr.col_coeffs.values()))

    def _subproblem(self, zflat: np.ndarray, master_vals: dict):
        """Exact path-space value at a master point plus a valid cut.

        Returns (feasible, value, cut_const, cut_coeffs).  The cut, an
        expression over master variables, overestimates the value
        function everywhere; for infeasible points it encodes the
        feasibility requirement 0 <= const + sum(coef * var).
        """
        cap, arg = self._caps(zflat)
        floor = self._floors(zflat)
        rows = self.active_rows()

        if not rows:
            d = self.obj_cols[:self.n_paths]
            value = float(np.where(d >= 0.0, d * cap, d * floor).sum())
            cut_const, cut_coeffs = self._linearize(value, zflat, cap, arg, floor,
                                                    np.maximum(d, 0.0),
                                                    np.minimum(d, 0.0), {}, {})
            return True, value, cut_const, cut_coeffs

        if (len(rows) == 1 and not self.blocks and not self.st.has_lower_bound_rows
                and self._is_unit_probability_row(rows[0])):
            return self._knapsack_subproblem(zflat, cap, arg, floor)

        self._ensure_sub_model(rows)
        lo = np.concatenate([floor] + [np.zeros(self.n_paths)] * len(self.blocks))
        hi = np.tile(cap, 1 + len(self.blocks))
        rhs_override = {}
        rhs_list = []
        for k, gr in enumerate(rows):
            rhs = gr.rhs - sum(c * master_vals[i] for i, c in gr.master_terms.items())
            rhs_override[k] = rhs
            rhs_list.append(rhs)
        sol = solve_lp(self._sub_model, limits=self.params.lp_limits,
                       lo_override=lo, hi_override=hi, rhs_override=rhs_override)
        if sol.status in (LpStatus.UNBOUNDED, LpStatus.ITERATION_LIMIT):
            raise SimplexNumericalError(f"subproblem ended with {sol.status}")

        y = sol.duals.copy()
        for k, gr in enumerate(rows):
            if gr.sense == LE:
                y[k] = max(y[k], 0.0)
            elif gr.sense == GE:
                y[k] = min(y[k], 0.0)

        feasible = sol.status is not LpStatus.INFEASIBLE
        cvec = self.obj_cols if feasible else np.zeros(self.n_cols)
        value = sol.objective if feasible else -sol.infeasibility
        # reduced costs for every column, presolve-eliminated ones included
        d_all = cvec.astype(np.float64).copy()
        row_const = 0.0
        master_row_terms: dict = {}
        for k, gr in enumerate(rows):
            yk = float(y[k])
            if yk == 0.0:
                continue
            for col, coef in gr.col_coeffs.items():
                d_all[col] -= yk * coef
            # V(..., rhs_k) has slope y_k; rhs_k depends on master variables
            for i, c in gr.master_terms.items():
                master_row_terms[i] = master_row_terms.get(i, 0.0) - yk * c

        cut_const, cut_coeffs = self._linearize(value, zflat, cap, arg, floor,
                                                np.maximum(d_all, 0.0),
                                                np.minimum(d_all, 0.0),
                                                master_row_terms, master_vals)
        return feasible, value, cut_const + row_const, cut_coeffs

    def _ensure_sub_model(self, rows: list[_GeneralRow]) -> None:
        key = tuple(gr.name for gr in rows)
        if self._sub_key == key:
            return
        sub = MilpModel()
        for k in range(self.n_cols):
            sub.add_variable(f"c{k}", CONTINUOUS, 0.0, 1.0)
        sub.objective = {k: float(self.obj_cols[k]) for k in range(self.n_cols)
                         if self.obj_cols[k] != 0.0}
        for gr in rows:
            sub.add_row(gr.name, dict(gr.col_coeffs), gr.sense, gr.rhs)
        self._sub_model = sub
        self._sub_key = key
        self._sub_rows = list(rows)

    def _knapsack_subproblem(self, zflat: np.ndarray, cap: np.ndarray,
                             arg: np.ndarray | None, floor: np.ndarray):
        """Unit-mass fill of capped paths by descending objective coefficient."""
        c = self.obj_cols[:self.n_paths]
        order = self._knap_order
        capo = cap[order]
        cum = np.cumsum(capo)
        total = float(cum[-1]) if self.n_paths else 0.0
        if total < 1.0 - 1e-12:
            value = total - 1.0
            const, coeffs = self._linearize(value, zflat, cap, arg, floor,
                                            np.ones(self.n_paths), np.zeros(0), {}, {})
            return False, value, const, coeffs
        k = int(np.searchsorted(cum, 1.0, side="left"))
        k = min(k, self.n_paths - 1)  # total mass within tolerance of one
        before = float(cum[k - 1]) if k > 0 else 0.0
        co = c[order]
        value = float(co[:k] @ capo[:k]) + float(co[k]) * (1.0 - before)
        y = float(co[k])
        up_duals = np.maximum(c - y, 0.0)
        const, coeffs = self._linearize(value, zflat, cap, arg, floor,
                                        up_duals, np.zeros(0), {}, {})
        return True, value, const, coeffs

    def _linearize(self, value: float, zflat: np.ndarray, cap: np.ndarray,
                   arg: np.ndarray | None, floor: np.ndarray,
                   up_duals: np.ndarray, lo_duals: np.ndarray,
                   master_row_terms: dict, master_vals: dict):
        """Supergradient overestimate of the value function at (zflat, master)."""
        const = value
        coeffs: dict = {}
        P = self.n_paths

        cap_grad = up_duals[:P].copy()
        for b in range(len(self.blocks)):
            cap_grad = cap_grad + up_duals[P * (b + 1):P * (b + 2)]
        if arg is not None:
            hot = np.nonzero((cap_grad > 0.0) & (arg >= 0))[0]
            for r in hot:
                g = float(cap_grad[r])
                zslot = self.arrays.z_index[r, arg[r]]
                mi = self.master_of[int(self.st.z_vars[zslot])]
                coeffs[mi] = coeffs.get(mi, 0.0) + g
                const -= g * float(zflat[zslot])
        # probability-bound-binding paths vary nothing: constant contribution

        if self.st.has_lower_bound_rows and self.n_dec > 0:
            lo_grad = lo_duals[:P]
            hot = np.nonzero((lo_grad < 0.0) & (floor > 0.0))[0]
            for r in hot:
                g = float(lo_grad[r])
                const += g * (float(self.p[r]) - self.n_dec)
                for k in range(self.n_dec):
                    zslot = self.arrays.z_index[r, k]
                    mi = self.master_of[int(self.st.z_vars[zslot])]
                    coeffs[mi] = coeffs.get(mi, 0.0) + g
                    const -= g * float(zflat[zslot])
            # inactive floors support the zero minorant: no contribution

        for i, c in master_row_terms.items():
            mi = self.master_of[i]
            coeffs[mi] = coeffs.get(mi, 0.0) + c
            const -= c * master_vals[i]

        const += 1e-11 * (1.0 + abs(value))
        return const, coeffs

    # -- node bound ---------------------------------------------------------------------

    def node_bound(self, fixings: Mapping[str, float],
                   fathom_threshold: float = -math.inf,
                   max_iterations: int | None = None):
        """Cutting-plane loop at one node: (status, bound, master primal).

        The bound is the tightest certified master dual bound seen, so
        it stays valid even when the loop stops early: on convergence,
        on a stall, on the iteration cap (non-root nodes lean on the
        shared cut pool and get a small cap), or as soon as the bound
        already falls at or below `fathom_threshold` (the caller will
        prune the node anyway).
        """
        if max_iterations is None:
            max_iterations = self.params.kelley_max_iterations
        bound = math.inf
        sol = None
        stall = 0
        for it in range(max_iterations):
            try:
                sol = solve_lp(self.master, fixings=dict(fixings),
                               limits=self.params.lp_limits, warm=self._master_basis)
            except SimplexNumericalError:
                sol = solve_lp(self.master, fixings=dict(fixings),
                               limits=self.params.lp_limits, bland=True)
            self._master_basis = sol.basis
            self._master_solves += 1
            if sol.status is LpStatus.INFEASIBLE:
                return "infeasible", -math.inf, None
            if sol.status is not LpStatus.OPTIMAL:
                raise SimplexNumericalError(f"master LP ended with {sol.status}")
            improved = sol.dual_bound < bound - 1e-9 * (1.0 + abs(sol.dual_bound))
            bound = min(bound, sol.dual_bound)
            if bound <= fathom_threshold:
                return "ok", bound, sol.primal
            self._note_tight_cuts(sol)
            zflat = self.zflat_from_master(sol.primal)
            master_vals = self.master_values(sol.primal)
            theta_hat = float(sol.primal[self.theta])
            feasible, value, const, coeffs = self._subproblem(zflat, master_vals)
            if feasible:
                total = value + self.obj_box_const
                if theta_hat <= total + 1e-10 * (1.0 + abs(total)):
                    return "ok", bound, sol.primal
                row = {self.theta: 1.0, **{k: -v for k, v in coeffs.items()}}
                rhs = const + self.obj_box_const
            else:
                row = {k: -v for k, v in coeffs.items()}
                rhs = const
            # normalize the cut for master conditioning (same halfspace)
            scale = max(1.0, max((abs(v) for v in row.values()), default=1.0))
            row = {k: v / scale for k, v in row.items()}
            name = "kcut" if feasible else "kfeas"
            self.master.add_row(f"{name}[{self.cut_rows}]", row, LE, rhs / scale,
                                origin="kelley")
            self._cut_last_tight[f"kcut[{self.cut_rows}]"] = self._master_solves
            self.cut_rows += 1
            stall = 0 if improved else stall + 1
            if stall >= 6 and it >= 6:
                return "ok", bound, sol.primal
            self._trim_cut_pool()
        return "ok", bound, sol.primal

    MAX_MASTER_CUTS = 320

    def _note_tight_cuts(self, sol: LpSolution) -> None:
        for row in self.master.explicit_rows:
            if not row.name.startswith("k"):
                continue
            act = sum(c * sol.primal[i] for i, c in row.coeffs.items())
            if row.sense == LE and act >= row.rhs - 1e-7:
                self._cut_last_tight[row.name] = self._master_solves

    def _trim_cut_pool(self) -> None:
        """Drop long-inactive cutting planes; removal only relaxes the master."""
        cut_rows = [r for r in self.master.explicit_rows if r.name.startswith("k")]
        if len(cut_rows) <= self.MAX_MASTER_CUTS:
            return
        keep: list[Row] = []
        scored = sorted(cut_rows,
                        key=lambda r: (-self._cut_last_tight.get(r.name, 0), r.name))
        keep_names = {r.name for r in scored[:self.MAX_MASTER_CUTS // 2]}
        fresh = [r for r in self.master.explicit_rows
                 if not r.name.startswith("k") or r.name in keep_names]
        self.master.explicit_rows = fresh
        self._master_basis = None

    # -- integral completion ----------------------------------------------------------------

    def complete(self, zflat01: np.ndarray, master_vals: dict):
        """Exact node optimum once every master binary is integral.

        Returns (feasible, raw objective value, full model assignment).
        """
        cap, _ = self._caps(zflat01)
        floor = self._floors(zflat01)
        rows = self.active_rows()
        x = np.zeros(self.model.n_variables, dtype=np.float64)
        for vidx, val in master_vals.items():
            x[vidx] = round(val)
        for k, vidx in enumerate(self.st.z_vars):
            x[int(vidx)] = round(float(zflat01[k]))

        if self.blocks:
            pi = cap.copy()  # the eager probability cut pins pi at its caps
        elif rows:
            self._ensure_sub_model(rows)
            rhs_override = {k: gr.rhs - sum(c * master_vals[i]
                                            for i, c in gr.master_terms.items())
                            for k, gr in enumerate(rows)}
            sol = solve_lp(self._sub_model, limits=self.params.lp_limits,
                           lo_override=floor, hi_override=cap,
                           rhs_override=rhs_override)
            if sol.status is LpStatus.INFEASIBLE:
                return False, -math.inf, None
            if sol.status is not LpStatus.OPTIMAL:
                raise SimplexNumericalError(f"completion LP ended with {sol.status}")
            pi = sol.primal[:self.n_paths].copy()
        else:
            d = self.obj_cols[:self.n_paths]
            pi = np.where(d >= 0.0, cap, floor)

        for r in range(self.n_paths):
            x[int(self.st.pi_vars[r])] = pi[r]
        value = float(self.obj_cols[:self.n_paths] @ pi)
        for b, blk in enumerate(self.blocks):
            tail = self._complete_block(blk, pi, x)
            value += float(self.obj_cols[self.n_paths * (b + 1):
                                         self.n_paths * (b + 2)] @ tail)
            coef = self.obj_eta.get(blk.eta, 0.0)
            if coef:
                value += coef * float(x[blk.eta])
        for i, c in self.obj_master.items():
            value += c * float(x[i])

        if self.blocks:
            for gr in rows:
                if self.model.row_violation(gr.model_row, x) > COMPLETION_FEAS_TOL:
                    return False, -math.inf, None
        return True, value, x

    def _complete_block(self, blk: CvarBlock, pi: np.ndarray,
                        x: np.ndarray) -> np.ndarray:
        """Threshold, indicators, and tail weights for a pinned distribution.

        The threshold lands on the smallest consequence whose cumulative
        probability reaches alpha; paths strictly below it contribute
        their whole probability, and paths at the threshold absorb the
        remaining mass in path order.
        """
        alpha = blk.alpha
        cons = blk.consequences
        order = np.lexsort((np.arange(self.n_paths), cons))
        tail = np.zeros(self.n_paths, dtype=np.float64)
        eta = blk.c_lo
        cum = 0.0
        last_pos = None
        for r in order:
            if pi[r] <= 0.0:
                continue
            last_pos = r
            cum += float(pi[r])
            if cum >= alpha - 1e-9:
                eta = float(cons[r])
                break
        else:
            if last_pos is not None:
                eta = float(cons[last_pos])
        remaining = alpha
        for r in order:
            if pi[r] <= 0.0:
                continue
            c = float(cons[r])
            if c < eta - 1e-12:
                take = float(pi[r])
            elif c <= eta + 1e-12:
                take = min(float(pi[r]), max(remaining, 0.0))
            else:
                break
            tail[r] = take
            remaining -= take
        x[blk.eta] = eta
        if not blk.degenerate:
            below = cons < eta - 1e-12
            at_or_below = cons <= eta + 1e-12
            x[blk.lam] = below.astype(np.float64)
            x[blk.lamb] = at_or_below.astype(np.float64)
            x[blk.rho] = np.where(below, pi, 0.0)
        x[blk.rhob] = tail
        return tail

    # -- lazy cuts ------------------------------------------------------------------------------

    def check_lazy(self, x: np.ndarray, policy: str) -> list[str]:
        hits: list[str] = []
        for gr in self.lazy_general:
            if gr.name in self.activated_names:
                continue
            if not _policy_selects(gr.origin, policy):
                continue
            if self.model.row_violation(gr.model_row, x) > LAZY_VIOLATION_TOL:
                hits.append(gr.name)
        return hits

    def activate(self, names: Sequence[str]) -> int:
        added = 0
        wanted = set(names)
        for gr in self.lazy_general:
            if gr.name in wanted and gr.name not in self.activated_names:
                self.activated.append(gr)
                self.activated_names.add(gr.name)
                added += 1
        return added


def _policy_selects(origin: str, policy: str) -> bool:
    if origin == ORIGIN_PROB_CUT:
        return policy in (CUT_POLICY_PROB, CUT_POLICY_PROB_ACTIVE)
    if origin == ORIGIN_ACTIVE_CUT:
        return policy == CUT_POLICY_PROB_ACTIVE
    return True  # other lazy rows are always enforced at candidates


# ---------------------------------------------------------------------------
# direct engine
# ---------------------------------------------------------------------------


class _Direct:
    def __init__(self, model: MilpModel, params: SolveParams):
        self.model = model
        self.params = params
        stats = model.statistics()
        if stats.equality_rows + stats.inequality_rows > DIRECT_ROW_LIMIT:
            raise ModelError(f"model with {stats.equality_rows + stats.inequality_rows}"
                             f" rows is too large for the direct engine")
        self.binaries = [i for i, v in enumerate(model.variables) if v.kind == BINARY]
        self.extra_rows: list[Row] = []
        self.activated_names: set[str] = set()

    def solve_node(self, fixings: Mapping[str, float]) -> LpSolution:
        try:
            return solve_lp(self.model, fixings=dict(fixings),
                            limits=self.params.lp_limits, extra_rows=self.extra_rows)
        except SimplexNumericalError:
            return solve_lp(self.model, fixings=dict(fixings),
                            limits=self.params.lp_limits, extra_rows=self.extra_rows,
                            bland=True)

    def check_lazy(self, x: np.ndarray, policy: str) -> list[str]:
        hits = []
        for row in self.model.lazy_rows():
            if row.name in self.activated_names:
                continue
            if not _policy_selects(row.origin, policy):
                continue
            if self.model.row_violation(row, x) > LAZY_VIOLATION_TOL:
                hits.append(row.name)
        return hits

    def activate(self, names: Sequence[str]) -> int:
        added = 0
        wanted = set(names)
        for row in self.model.lazy_rows():
            if row.name in wanted and row.name not in self.activated_names:
                self.extra_rows.append(Row(name=row.name, coeffs=row.coeffs,
                                           sense=row.sense, rhs=row.rhs,
                                           origin=row.origin))
                self.activated_names.add(row.name)
                added += 1
        return added


# ---------------------------------------------------------------------------
# search driver
# ---------------------------------------------------------------------------


def solve(model: MilpModel, params: SolveParams | None = None) -> MilpSolution:
    """Exact branch-and-bound over the model's binary variables.

    Best-bound search with depth-first plunging until the first
    incumbent; branching picks the most fractional policy binary with
    ties broken by creation order.  A rounding heuristic evaluates the
    per-assignment argmax projection at every fractional node.  One
    machine-parseable progress line per node goes to the `decprog.bnb`
    logger at INFO level.
    """
    params = params or SolveParams()
    engine = None
    if params.engine in ("auto", "decomposition") and model.structure is not None:
        try:
            engine = _Decomposition(model, params)
        except _Unsupported as exc:
            if params.engine == "decomposition":
                raise ModelError(f"decomposition engine cannot handle this model: {exc}")
            engine = None
    if engine is None:
        engine = _Direct(model, params)
    return _Driver(model, params, engine).run()


class _Driver:
    def __init__(self, model: MilpModel, params: SolveParams, engine):
        self.model = model
        self.params = params
        self.engine = engine
        self.shift = model.objective_shift
        self.int_tol = params.integrality_tolerance
        self.incumbent_value = -math.inf
        self.incumbent_x: np.ndarray | None = None
        self.cuts_added = 0
        self.node_count = 0
        self.next_id = 0
        self.closed_bound = -math.inf  # max certified bound over closed nodes
        if isinstance(engine, _Decomposition):
            st = model.structure
            self.z_names = [model.variables[int(v)].name for v in st.z_vars]
            self.z_names += [model.variables[i].name for i in engine.master_binaries]
        else:
            self.z_names = [v.name for v in model.variables if v.kind == BINARY]

    # -- bookkeeping -------------------------------------------------------------

    def _new_id(self) -> int:
        self.next_id += 1
        return self.next_id

    def _gap(self, bound_raw: float) -> float:
        if self.incumbent_x is None:
            return math.inf
        b = bound_raw + self.shift
        i = self.incumbent_value + self.shift
        return max(0.0, b - i) / max(1.0, abs(i))

    def _fathomable(self, bound_raw: float) -> bool:
        if self.incumbent_x is None:
            return False
        inc = self.incumbent_value + self.shift
        return bound_raw + self.shift <= inc + self.params.gap_tolerance * max(1.0, abs(inc))

    def _offer(self, value_raw: float, x: np.ndarray) -> None:
        if value_raw > self.incumbent_value:
            self.incumbent_value = value_raw
            self.incumbent_x = x.copy()

    def _close(self, bound_raw: float) -> None:
        self.closed_bound = max(self.closed_bound, bound_raw)

    # -- main loop -----------------------------------------------------------------

    def run(self) -> MilpSolution:
        t0 = time.monotonic()
        params = self.params
        stack: list[_Node] = [_Node(self._new_id(), {}, math.inf, 0)]
        open_heap: list[tuple[float, int, _Node]] = []
        limit_hit = False

        while stack or open_heap:
            if params.node_limit is not None and self.node_count >= params.node_limit:
                limit_hit = True
                break
            if (params.time_limit is not None
                    and time.monotonic() - t0 > params.time_limit):
                limit_hit = True
                break
            plunge = bool(stack) and (self.incumbent_x is None
                                      or params.search == "depth_first")
            if plunge:
                node = stack.pop()
            elif stack:
                while stack:
                    n = stack.pop()
                    heapq.heappush(open_heap, (-n.bound, n.node_id, n))
                continue
            else:
                _, _, node = heapq.heappop(open_heap)

            if self._fathomable(node.bound):
                self._close(node.bound)
                continue
            self.node_count += 1
            children = self._process(node)
            if logger.isEnabledFor(logging.INFO):
                inc = (self.incumbent_value + self.shift
                       if self.incumbent_x is not None else float("-inf"))
                logger.info("node=%d bound=%.12g incumbent=%.12g gap=%.6g cuts=%d",
                            self.node_count, node.bound + self.shift, inc,
                            self._gap(node.bound), self.cuts_added)
            for child in reversed(children):
                stack.append(child)

        open_bound = -math.inf
        for n in stack:
            open_bound = max(open_bound, n.bound)
        for _, _, n in open_heap:
            open_bound = max(open_bound, n.bound)

        names = tuple(v.name for v in self.model.variables)
        if self.incumbent_x is None:
            if limit_hit:
                return MilpSolution(SolveStatus.LIMIT, -math.inf, math.inf, None,
                                    self.node_count, self.cuts_added,
                                    open_bound + self.shift, names)
            return MilpSolution(SolveStatus.INFEASIBLE, -math.inf, math.inf, None,
                                self.node_count, self.cuts_added, -math.inf, names)

        bound_raw = max(self.incumbent_value, self.closed_bound, open_bound)
        gap = self._gap(bound_raw)
        status = SolveStatus.OPTIMAL if gap <= params.gap_tolerance else SolveStatus.FEASIBLE
        return MilpSolution(status, self.incumbent_value + self.shift, gap,
                            self.incumbent_x, self.node_count, self.cuts_added,
                            bound_raw + self.shift, names)

    # -- node processing ---------------------------------------------------------------

    def _process(self, node: _Node) -> list[_Node]:
        if isinstance(self.engine, _Decomposition):
            return self._process_decomposition(node)
        return self._process_direct(node)

    def _pick_branch(self, values: Mapping[int, float]) -> int | None:
        """Most fractional binary; ties and `first_index` use creation order."""
        best = None
        best_score = -1.0
        for idx in sorted(values):
            v = values[idx]
            frac = min(v, 1.0 - v)
            if frac <= self.int_tol:
                continue
            if self.params.branching == "first_index":
                return idx
            if frac > best_score + 1e-15:
                best, best_score = idx, frac
        return best

    def _make_children(self, node: _Node, name: str, value: float) -> list[_Node]:
        first = 1.0 if value >= 0.5 else 0.0
        children = []
        for val in (first, 1.0 - first):
            fix = dict(node.fixings)
            fix[name] = val
            children.append(_Node(self._new_id(), fix, node.bound, node.depth + 1))
        return children

    def _fathom_threshold_raw(self) -> float:
        if self.incumbent_x is None:
            return -math.inf
        inc = self.incumbent_value + self.shift
        return (inc + self.params.gap_tolerance * max(1.0, abs(inc))) - self.shift

    def _process_decomposition(self, node: _Node) -> list[_Node]:
        eng: _Decomposition = self.engine

        # fully fixed binaries: complete directly, no relaxation needed
        all_fixed = all(name in node.fixings for name in self.z_names)
        while True:
            if all_fixed:
                master_vals = {idx: node.fixings[self.model.variables[idx].name]
                               for idx in eng.master_var_set}
                zflat = np.array([node.fixings[self.model.variables[int(v)].name]
                                  for v in eng.st.z_vars], dtype=np.float64)
                for row in eng.master_rows:
                    act = sum(c * master_vals[i] for i, c in row.coeffs.items())
                    viol = (act - row.rhs if row.sense == LE
                            else row.rhs - act if row.sense == GE
                            else abs(act - row.rhs))
                    if viol > COMPLETION_FEAS_TOL:
                        return []
                branch_idx = None
            else:
                cap = (self.params.kelley_max_iterations if node.depth == 0
                       else NODE_KELLEY_CAP)
                status, bound, primal = eng.node_bound(
                    node.fixings, fathom_threshold=self._fathom_threshold_raw(),
                    max_iterations=cap)
                if status == "infeasible":
                    return []
                node.bound = min(node.bound, bound)
                if self._fathomable(node.bound):
                    self._close(node.bound)
                    return []
                master_vals = eng.master_values(primal)
                zflat = eng.zflat_from_master(primal)
                branch_idx = self._pick_branch(master_vals)

            if branch_idx is not None:
                self._heuristic(master_vals)
                name = self.model.variables[branch_idx].name
                return self._make_children(node, name, master_vals[branch_idx])

            feasible, value, x = eng.complete(np.round(zflat), master_vals)
            if not feasible:
                self._close(-math.inf)
                return []
            hits = eng.check_lazy(x, self.params.lazy_cut_policy)
            if not hits:
                self._offer(value, x)
                self._close(value)
                return []
            # a lazy cut fired: activate, re-solve this node, only then fathom
            self.cuts_added += eng.activate(hits)
            if all_fixed:
                continue  # re-completion now sees the activated row

    def _heuristic(self, master_vals: dict) -> None:
        """Round to the per-assignment argmax and evaluate exactly."""
        eng: _Decomposition = self.engine
        rounded = dict(master_vals)
        for j, info, zvars in eng.st.assignment_slots:
            best_var = min(zvars, key=lambda v: (-master_vals[v], v))
            for v in zvars:
                rounded[v] = 1.0 if v == best_var else 0.0
        for i in eng.master_binaries:
            rounded[i] = 1.0 if master_vals[i] >= 0.5 else 0.0
        for row in eng.master_rows:
            act = sum(c * rounded[i] for i, c in row.coeffs.items())
            viol = (act - row.rhs if row.sense == LE
                    else row.rhs - act if row.sense == GE else abs(act - row.rhs))
            if viol > COMPLETION_FEAS_TOL:
                return
        zflat = np.array([rounded[int(v)] for v in eng.st.z_vars], dtype=np.float64)
        feasible, value, x = eng.complete(zflat, rounded)
        if feasible and not eng.check_lazy(x, self.params.lazy_cut_policy):
            self._offer(value, x)

    def _process_direct(self, node: _Node) -> list[_Node]:
        eng: _Direct = self.engine
        while True:
            sol = eng.solve_node(node.fixings)
            if sol.status is LpStatus.INFEASIBLE:
                return []
            if sol.status is LpStatus.UNBOUNDED:
                raise ModelError("relaxation is unbounded; add finite bounds")
            node.bound = min(node.bound, sol.dual_bound)
            if self._fathomable(node.bound):
                self._close(node.bound)
                return []
            values = {i: float(sol.primal[i]) for i in eng.binaries}
            branch_idx = self._pick_branch(values)
            if branch_idx is not None:
                name = self.model.variables[branch_idx].name
                return self._make_children(node, name, values[branch_idx])
            hits = eng.check_lazy(sol.primal, self.params.lazy_cut_policy)
            if hits:
                self.cuts_added += eng.activate(hits)
                continue  # re-solve before fathoming decisions
            self._offer(sol.objective, sol.primal)
            self._close(min(node.bound, sol.objective))
            return []


# ---------------------------------------------------------------------------
# strategy extraction
# ---------------------------------------------------------------------------


def extract_strategy(solution: MilpSolution, diagram: Diagram,
                     integrality_tolerance: float = 1e-6) -> GlobalStrategy:
    """Read the policy out of a solved model's z variables.

    For every (decision node, information state) exactly one state must
    sit within tolerance of one; anything else signals a tolerance
    misconfiguration and raises.
    """
    if solution.assignment is None:
        raise ValueError("solution has no assignment to extract from")
    chosen: dict[tuple[int, tuple[int, ...]], list[int]] = {}
    for name, value in zip(solution.variable_names, solution.assignment):
        parsed = parse_z_key(name)
        if parsed is None:
            continue
        node, state, info_pairs = parsed
        info = tuple(s for _, s in info_pairs)
        slot = (node, info)
        chosen.setdefault(slot, [])
        if value >= 1.0 - integrality_tolerance:
            chosen[slot].append(state)

    locals_: list[LocalStrategy] = []
    for j in diagram.decision_nodes:
        nd = diagram.node(j)
        mapping: dict = {}
        for info in info_states(diagram, j):
            picks = chosen.get((j, info), [])
            if len(picks) != 1:
                raise ValueError(f"ambiguous or missing policy at node {j}, "
                                 f"information state {info}: picked {picks}")
            mapping[info] = picks[0]
        locals_.append(LocalStrategy(node=j, info_set=tuple(nd.info_set), map=mapping))
    return GlobalStrategy(locals=tuple(locals_))
