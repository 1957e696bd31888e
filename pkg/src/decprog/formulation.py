"""Abstract MILP construction for influence-diagram optimization.

`build_base` turns a diagram into the path-probability program: one
binary policy variable per (decision node, information state, state),
one bounded continuous variable per path, assignment equalities, and
the per-decision upper-bound rows that zero out incompatible paths.
On top of that sit optional strengthening equalities (probability and
active-path cuts), chance constraints, the tail-expectation block for
CVaR, downside-risk objective terms, policy exclusion cuts, and the
dominance blocks used during frontier enumeration.

The per-path structural rows (assignment, upper bound, lower bound) are
stored implicitly and generated on demand: a model with 2^19 paths has
millions of such rows and materializing dict-backed row objects for
them would dominate memory.  Everything added after `build_base` is an
explicit row.  `iter_rows` presents the uniform view.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .diagram import Diagram, info_states
from .paths import (DEFAULT_PATH_CAP, PathArrays, UtilityFn, build_path_arrays,
                    identity_utility)

BINARY = "binary"
CONTINUOUS = "continuous"

LE, EQ, GE = "<=", "=", ">="

INF = float("inf")

#: Row origins used by the solver to recognize model structure.
ORIGIN_ASSIGN = "assign"
ORIGIN_VUB = "vub"
ORIGIN_VLB = "vlb"
ORIGIN_PROB_CUT = "probcut"
ORIGIN_ACTIVE_CUT = "activecut"
ORIGIN_CHANCE = "chance"
ORIGIN_CVAR = "cvar"
ORIGIN_DOMINANCE = "dominance"
ORIGIN_DOMINANCE_SELECT = "domselect"
ORIGIN_EXCLUSION = "exclusion"
ORIGIN_USER = "user"

LinExpr = dict[int, float]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    lo: float
    hi: float


@dataclass
class Row:
    name: str
    coeffs: LinExpr
    sense: str
    rhs: float
    lazy: bool = False
    origin: str = ORIGIN_USER


@dataclass(frozen=True)
class RowHandle:
    name: str
    lazy: bool


@dataclass(frozen=True)
class ModelStatistics:
    binaries: int
    continuous: int
    equality_rows: int
    inequality_rows: int
    lazy_cuts: int


@dataclass
class CvarBlock:
    """Tail-expectation block: variables and constants of one CVaR device.

    `tail_expression` is the linear form whose value, divided by alpha,
    equals the lower-tail conditional expectation for any feasible
    completion of the block.
    """

    alpha: float
    eta: int
    lam: np.ndarray
    lamb: np.ndarray
    rho: np.ndarray
    rhob: np.ndarray
    consequences: np.ndarray  # per-path totals in original (un-shifted) units
    big_m: float
    epsilon: float
    c_lo: float
    c_hi: float
    degenerate: bool
    row_names: list[str] = field(default_factory=list)

    @property
    def tail_expression(self) -> LinExpr:
        return {int(v): float(c) for v, c in zip(self.rhob, self.consequences)
                if c != 0.0}


@dataclass
class PathStructure:
    """Link between a model and the path arrays it was built from."""

    arrays: PathArrays
    z_vars: np.ndarray          # flat policy order -> variable index
    pi_vars: np.ndarray         # path rank -> variable index
    utility_model: np.ndarray   # objective coefficients on paths (shifted)
    utility_original: np.ndarray
    utility_shift: float
    has_lower_bound_rows: bool
    assignment_slots: list[tuple[int, tuple[int, ...], list[int]]]
    cvar_blocks: list[CvarBlock] = field(default_factory=list)


class MilpModel:
    """Linear model: named variables, rows, maximize objective, lazy cut pool."""

    def __init__(self) -> None:
        self.variables: list[Variable] = []
        self._by_name: dict[str, int] = {}
        self.explicit_rows: list[Row] = []
        self.objective: LinExpr = {}
        self.objective_shift: float = 0.0
        self.structure: PathStructure | None = None

    # -- variables -------------------------------------------------------------

    def add_variable(self, name: str, kind: str = CONTINUOUS,
                     lo: float = 0.0, hi: float = INF) -> int:
        if name in self._by_name:
            raise ModelError(f"duplicate variable key {name!r}")
        if kind == BINARY and (lo, hi) != (0.0, 1.0):
            raise ModelError(f"binary variable {name!r} must have bounds [0, 1]")
        if lo > hi:
            raise ModelError(f"variable {name!r} has empty bound interval [{lo}, {hi}]")
        idx = len(self.variables)
        self.variables.append(Variable(name=name, kind=kind, lo=lo, hi=hi))
        self._by_name[name] = idx
        return idx

    def var_index(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"unknown variable key {name!r}") from None

    def set_bounds(self, idx: int, lo: float, hi: float) -> None:
        v = self.variables[idx]
        self.variables[idx] = Variable(name=v.name, kind=v.kind, lo=lo, hi=hi)

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    # -- rows --------------------------------------------------------------------

    def _resolve(self, coeffs: Mapping) -> LinExpr:
        out: LinExpr = {}
        for key, coef in coeffs.items():
            idx = key if isinstance(key, int) else self.var_index(key)
            if not 0 <= idx < len(self.variables):
                raise ModelError(f"row references unknown variable index {idx}")
            if coef != 0.0:
                out[idx] = out.get(idx, 0.0) + float(coef)
        return out

    def add_row(self, name: str, coeffs: Mapping, sense: str, rhs: float,
                lazy: bool = False, origin: str = ORIGIN_USER) -> RowHandle:
        if sense not in (LE, EQ, GE):
            raise ModelError(f"bad row sense {sense!r}")
        self.explicit_rows.append(Row(name=name, coeffs=self._resolve(coeffs),
                                      sense=sense, rhs=float(rhs), lazy=lazy,
                                      origin=origin))
        return RowHandle(name=name, lazy=lazy)

    # Structural (implicit) rows exist only when the model came from build_base.

    def _structural_counts(self) -> tuple[int, int, int]:
        """(assignment equalities, vub inequalities, vlb inequalities)."""
        st = self.structure
        if st is None:
            return 0, 0, 0
        n_assign = len(st.assignment_slots)
        n_paths = st.arrays.n_paths
        n_dec = st.arrays.z_index.shape[1]
        n_vlb = n_paths if st.has_lower_bound_rows else 0
        return n_assign, n_paths * n_dec, n_vlb

    def iter_rows(self, include_lazy: bool = False) -> Iterator[Row]:
        """All rows: implicit structural rows first, then explicit ones."""
        st = self.structure
        if st is not None:
            for j, info, zvars in st.assignment_slots:
                yield Row(name=f"assign[d{j},{_info_suffix(info)}]",
                          coeffs={v: 1.0 for v in zvars}, sense=EQ, rhs=1.0,
                          origin=ORIGIN_ASSIGN)
            arrays = st.arrays
            n_dec = arrays.z_index.shape[1]
            for rank in range(arrays.n_paths):
                for k in range(n_dec):
                    zv = int(st.z_vars[arrays.z_index[rank, k]])
                    yield Row(name=f"vub[p{rank},k{k}]",
                              coeffs={int(st.pi_vars[rank]): 1.0, zv: -1.0},
                              sense=LE, rhs=0.0, origin=ORIGIN_VUB)
            if st.has_lower_bound_rows:
                for rank in range(arrays.n_paths):
                    coeffs: LinExpr = {int(st.pi_vars[rank]): 1.0}
                    for k in range(n_dec):
                        zv = int(st.z_vars[arrays.z_index[rank, k]])
                        coeffs[zv] = coeffs.get(zv, 0.0) - 1.0
                    yield Row(name=f"vlb[p{rank}]", coeffs=coeffs, sense=GE,
                              rhs=float(arrays.p[rank]) - n_dec, origin=ORIGIN_VLB)
        for row in self.explicit_rows:
            if include_lazy or not row.lazy:
                yield row

    def lazy_rows(self) -> list[Row]:
        return [r for r in self.explicit_rows if r.lazy]

    # -- queries -------------------------------------------------------------------

    def statistics(self) -> ModelStatistics:
        binaries = sum(1 for v in self.variables if v.kind == BINARY)
        continuous = len(self.variables) - binaries
        n_assign, n_vub, n_vlb = self._structural_counts()
        eq = n_assign
        ineq = n_vub + n_vlb
        lazy = 0
        for row in self.explicit_rows:
            if row.lazy:
                lazy += 1
            elif row.sense == EQ:
                eq += 1
            else:
                ineq += 1
        return ModelStatistics(binaries=binaries, continuous=continuous,
                               equality_rows=eq, inequality_rows=ineq,
                               lazy_cuts=lazy)

    def row_activity(self, row: Row, x: Sequence[float]) -> float:
        return math.fsum(coef * x[idx] for idx, coef in row.coeffs.items())

    def row_violation(self, row: Row, x: Sequence[float]) -> float:
        a = self.row_activity(row, x)
        if row.sense == LE:
            return max(0.0, a - row.rhs)
        if row.sense == GE:
            return max(0.0, row.rhs - a)
        return abs(a - row.rhs)

    def max_violation(self, x: Sequence[float], include_lazy: bool = True) -> float:
        worst = 0.0
        for row in self.iter_rows(include_lazy=include_lazy):
            worst = max(worst, self.row_violation(row, x))
        for idx, v in enumerate(self.variables):
            worst = max(worst, v.lo - x[idx], x[idx] - v.hi)
        return worst


# -- variable key text encoding ---------------------------------------------------


def _info_suffix(info: tuple[int, ...]) -> str:
    return "i" + "".join(str(s) for s in info) if info else "i"


def z_key(j: int, state: int, info_set: tuple[int, ...], info: tuple[int, ...]) -> str:
    if info_set:
        given = ",".join(f"{i}={s}" for i, s in zip(info_set, info))
        return f"z[{j}={state}|{given}]"
    return f"z[{j}={state}]"


def pi_key(rank: int) -> str:
    return f"pi[p{rank}]"


_Z_RE = re.compile(r"^z\[(\d+)=(\d+)(?:\|(.*))?\]$")
_PI_RE = re.compile(r"^pi\[p(\d+)\]$")


def parse_z_key(name: str) -> tuple[int, int, tuple[tuple[int, int], ...]] | None:
    """Decode a policy-variable key into (node, state, ((info node, state), ...))."""
    m = _Z_RE.match(name)
    if not m:
        return None
    node, state = int(m.group(1)), int(m.group(2))
    info: list[tuple[int, int]] = []
    if m.group(3):
        for part in m.group(3).split(","):
            i, s = part.split("=")
            info.append((int(i), int(s)))
    return node, state, tuple(info)


def parse_pi_key(name: str) -> int | None:
    m = _PI_RE.match(name)
    return int(m.group(1)) if m else None


# -- base model ---------------------------------------------------------------------


def build_base(diagram: Diagram, utility: UtilityFn = identity_utility, *,
               normalize_utilities: bool = True,
               include_lower_bound_rows: bool = False,
               path_cap: int = DEFAULT_PATH_CAP) -> MilpModel:
    """Path-probability MILP maximizing expected utility.

    Binary z(s_j | s_I(j)) pick one state per information state of each
    decision node; continuous pi(s) in [0, p(s)] carry path
    probabilities, capped by the chosen z along each path.  Lower-bound
    rows (which keep incompatible-path probabilities from being starved
    when objective coefficients are negative) are emitted only when
    requested or when utilities stay negative after the normalization
    choice; with `normalize_utilities` the objective coefficients are
    shifted so the smallest path utility is zero, and the shift is
    recorded on the model so reported optima can be un-shifted.
    """
    arrays = build_path_arrays(diagram, utility, cap=path_cap)
    model = MilpModel()

    z_vars = np.empty(arrays.n_z, dtype=np.int64)
    assignment_slots: list[tuple[int, tuple[int, ...], list[int]]] = []
    for j in diagram.decision_nodes:
        nd = diagram.node(j)
        base = arrays.z_offset[j]
        assert nd.state_count is not None
        for r, info in enumerate(info_states(diagram, j)):
            slot_vars: list[int] = []
            for s in range(1, nd.state_count + 1):
                idx = model.add_variable(z_key(j, s, tuple(nd.info_set), info),
                                         BINARY, 0.0, 1.0)
                z_vars[base + r * nd.state_count + (s - 1)] = idx
                slot_vars.append(idx)
            assignment_slots.append((j, info, slot_vars))

    utility_original = arrays.utility.copy()
    shift = float(utility_original.min()) if normalize_utilities and arrays.n_paths else 0.0
    utility_model = utility_original - shift

    pi_vars = np.empty(arrays.n_paths, dtype=np.int64)
    for rank in range(arrays.n_paths):
        ub = float(arrays.p[rank])
        pi_vars[rank] = model.add_variable(pi_key(rank), CONTINUOUS, 0.0, ub)

    model.objective = {int(pi_vars[r]): float(utility_model[r])
                       for r in range(arrays.n_paths) if utility_model[r] != 0.0}
    model.objective_shift = shift

    has_lb = include_lower_bound_rows or (not normalize_utilities
                                          and float(utility_original.min(initial=0.0)) < 0.0)
    model.structure = PathStructure(
        arrays=arrays, z_vars=z_vars, pi_vars=pi_vars,
        utility_model=utility_model, utility_original=utility_original,
        utility_shift=shift, has_lower_bound_rows=has_lb,
        assignment_slots=assignment_slots,
    )
    return model


def _require_structure(model: MilpModel) -> PathStructure:
    if model.structure is None:
        raise ModelError("operation requires a model built by build_base")
    return model.structure


# -- valid equalities ---------------------------------------------------------------


def add_probability_cut(model: MilpModel, eager: bool = False) -> RowHandle:
    """Path probabilities of any complete policy sum to one.

    Added to the lazy pool by default; pass eager=True to enforce it in
    every relaxation.
    """
    st = _require_structure(model)
    coeffs = {int(v): 1.0 for v in st.pi_vars}
    return model.add_row("cut[prob]", coeffs, EQ, 1.0, lazy=not eager,
                         origin=ORIGIN_PROB_CUT)


def add_active_path_cut(model: MilpModel, n_s: int, eager: bool = False) -> RowHandle:
    """Fix the number of positive-probability paths any policy activates.

    Valid only when the caller knows every feasible policy activates
    exactly `n_s` paths; zero-bound paths are excluded from the sum.
    """
    if n_s <= 0:
        raise ModelError(f"active path count must be positive, got {n_s}")
    st = _require_structure(model)
    coeffs: LinExpr = {}
    for rank in range(st.arrays.n_paths):
        p = float(st.arrays.p[rank])
        if p > 0.0:
            coeffs[int(st.pi_vars[rank])] = 1.0 / p
    return model.add_row("cut[active]", coeffs, EQ, float(n_s), lazy=not eager,
                         origin=ORIGIN_ACTIVE_CUT)


# -- chance constraints ---------------------------------------------------------------


def add_chance_constraint(model: MilpModel, t: float, p_t: float,
                          sense: str = GE) -> RowHandle:
    """Bound the probability that the total consequence reaches level t."""
    if not 0.0 <= p_t <= 1.0:
        raise ModelError(f"probability threshold must lie in [0, 1], got {p_t}")
    if sense not in (LE, GE):
        raise ModelError("chance constraint sense must be <= or >=")
    st = _require_structure(model)
    hit = st.utility_original >= t
    coeffs = {int(st.pi_vars[r]): 1.0 for r in np.nonzero(hit)[0]}
    name = f"chance[t={t:g},{'ge' if sense == GE else 'le'}]"
    return model.add_row(name, coeffs, sense, p_t, origin=ORIGIN_CHANCE)


def add_state_chance_constraint(model: MilpModel, k: int, states: Iterable[int],
                                p_k: float, sense: str = LE) -> RowHandle:
    """Bound the probability that node k lands in one of `states`.

    The direction is caller-chosen: a cap on undesirable states reads
    <=, a floor on desirable ones reads >=.
    """
    state_set = sorted(set(states))
    if not state_set:
        raise ModelError("state set must be non-empty")
    if sense not in (LE, GE):
        raise ModelError("chance constraint sense must be <= or >=")
    if not 0.0 <= p_k <= 1.0:
        raise ModelError(f"probability threshold must lie in [0, 1], got {p_k}")
    st = _require_structure(model)
    digits = st.arrays.digits
    if not 1 <= k <= digits.shape[1]:
        raise ModelError(f"node {k} is not a chance or decision node")
    mask = np.isin(digits[:, k - 1], state_set)
    coeffs = {int(st.pi_vars[r]): 1.0 for r in np.nonzero(mask)[0]}
    name = f"chance[node={k},{'ge' if sense == GE else 'le'}]"
    return model.add_row(name, coeffs, sense, p_k, origin=ORIGIN_CHANCE)


# -- CVaR block ------------------------------------------------------------------------


def add_cvar_block(model: MilpModel, alpha: float) -> CvarBlock:
    """Attach the lower-tail expectation device for probability level alpha.

    Precomputes the consequence range, the big-M span, and the half
    minimum gap between distinct consequence values, then adds the
    threshold variable eta, per-path indicator pairs, and tail weights
    whose sum is pinned to alpha.  For any feasible completion the
    returned tail expression divided by alpha equals the lower-tail
    conditional expectation; minimizing eta on its own recovers the
    quantile.  If every path has the same consequence the block
    degenerates: eta is fixed and only the tail weights remain.
    """
    if not 0.0 < alpha <= 1.0:
        raise ModelError(f"alpha must lie in (0, 1], got {alpha}")
    st = _require_structure(model)
    cons = st.utility_original
    n_paths = st.arrays.n_paths
    c_hi = float(cons.max())
    c_lo = float(cons.min())
    big_m = c_hi - c_lo

    distinct = np.unique(cons)
    gaps = np.diff(distinct)
    gaps = gaps[gaps > 1e-12]
    tag = len(st.cvar_blocks)
    suffix = "" if tag == 0 else f"@{tag}"

    eta = model.add_variable(f"eta{suffix}", CONTINUOUS, c_lo, c_hi)
    rhob = np.array([model.add_variable(f"rhob[p{r}]{suffix}", CONTINUOUS, 0.0, 1.0)
                     for r in range(n_paths)], dtype=np.int64)

    block = CvarBlock(alpha=alpha, eta=eta, lam=np.empty(0, dtype=np.int64),
                      lamb=np.empty(0, dtype=np.int64), rho=np.empty(0, dtype=np.int64),
                      rhob=rhob, consequences=cons.copy(), big_m=big_m,
                      epsilon=0.0, c_lo=c_lo, c_hi=c_hi, degenerate=gaps.size == 0)

    def row(name: str, coeffs: Mapping, sense: str, rhs: float) -> None:
        handle = model.add_row(name + suffix, coeffs, sense, rhs, origin=ORIGIN_CVAR)
        block.row_names.append(handle.name)

    if block.degenerate:
        # all consequences equal: eta is that value, tail weights just sum to alpha
        model.set_bounds(eta, c_lo, c_lo)
        for r in range(n_paths):
            row(f"cv6b[p{r}]", {int(rhob[r]): 1.0, int(st.pi_vars[r]): -1.0}, LE, 0.0)
        row("cv7", {int(v): 1.0 for v in rhob}, EQ, alpha)
        st.cvar_blocks.append(block)
        return block

    eps = float(gaps.min()) / 2.0
    block.epsilon = eps
    lam = np.array([model.add_variable(f"lam[p{r}]{suffix}", BINARY, 0.0, 1.0)
                    for r in range(n_paths)], dtype=np.int64)
    lamb = np.array([model.add_variable(f"lamb[p{r}]{suffix}", BINARY, 0.0, 1.0)
                     for r in range(n_paths)], dtype=np.int64)
    rho = np.array([model.add_variable(f"rho[p{r}]{suffix}", CONTINUOUS, 0.0, 1.0)
                    for r in range(n_paths)], dtype=np.int64)
    block.lam, block.lamb, block.rho = lam, lamb, rho

    M = big_m
    for r in range(n_paths):
        c = float(cons[r])
        pi_v = int(st.pi_vars[r])
        # eta - C(s) <= M lam(s)
        row(f"cv1[p{r}]", {eta: 1.0, int(lam[r]): -M}, LE, c)
        # eta - C(s) >= (M + eps) lam(s) - M
        row(f"cv2[p{r}]", {eta: 1.0, int(lam[r]): -(M + eps)}, GE, c - M)
        # eta - C(s) <= (M + eps) lamb(s) - eps
        row(f"cv3[p{r}]", {eta: 1.0, int(lamb[r]): -(M + eps)}, LE, c - eps)
        # eta - C(s) >= M (lamb(s) - 1)
        row(f"cv4[p{r}]", {eta: 1.0, int(lamb[r]): -M}, GE, c - M)
        # rhob(s) <= lamb(s)
        row(f"cv5[p{r}]", {int(rhob[r]): 1.0, int(lamb[r]): -1.0}, LE, 0.0)
        # pi(s) - (1 - lam(s)) <= rho(s) <= lam(s)
        row(f"cv6a[p{r}]", {pi_v: 1.0, int(lam[r]): 1.0, int(rho[r]): -1.0}, LE, 1.0)
        row(f"cv6c[p{r}]", {int(rho[r]): 1.0, int(lam[r]): -1.0}, LE, 0.0)
        # rho(s) <= rhob(s) <= pi(s)
        row(f"cv6d[p{r}]", {int(rho[r]): 1.0, int(rhob[r]): -1.0}, LE, 0.0)
        row(f"cv6b[p{r}]", {int(rhob[r]): 1.0, pi_v: -1.0}, LE, 0.0)
    row("cv7", {int(v): 1.0 for v in rhob}, EQ, alpha)

    st.cvar_blocks.append(block)
    return block


def set_cvar_min_eta_objective(model: MilpModel, block: CvarBlock) -> None:
    """Standalone use of the block: minimize the threshold variable."""
    model.objective = {block.eta: -1.0}
    model.objective_shift = 0.0


def set_mixed_objective(model: MilpModel, w: float, block: CvarBlock) -> None:
    """Trade off expected utility against the lower-tail expectation.

    Objective becomes w * sum(pi * U) + (1 - w)/alpha * sum(rhob * U),
    with the tail term in original consequence units.
    """
    if not 0.0 < w < 1.0:
        raise ModelError(f"weight must lie strictly inside (0, 1), got {w}")
    st = _require_structure(model)
    objective: LinExpr = {}
    for r in range(st.arrays.n_paths):
        coef = w * float(st.utility_model[r])
        if coef != 0.0:
            objective[int(st.pi_vars[r])] = coef
    scale = (1.0 - w) / block.alpha
    for r in range(st.arrays.n_paths):
        coef = scale * float(block.consequences[r])
        if coef != 0.0:
            objective[int(block.rhob[r])] = objective.get(int(block.rhob[r]), 0.0) + coef
    model.objective = objective
    model.objective_shift = w * st.utility_shift


def add_edr_objective_term(model: MilpModel, t: float, phi: float) -> None:
    """Penalize expected shortfall below target t with weight phi.

    The shortfall of each path is a constant, so the penalty stays
    linear: phi * max(0, t - U(s)) is subtracted from each path's
    objective coefficient.  Combine with lower-bound rows or the eager
    probability cut so negative coefficients cannot starve path
    probabilities.
    """
    st = _require_structure(model)
    short = np.maximum(0.0, t - st.utility_original)
    for r in np.nonzero(short)[0]:
        idx = int(st.pi_vars[r])
        coef = model.objective.get(idx, 0.0) - phi * float(short[r])
        if coef == 0.0:
            model.objective.pop(idx, None)
        else:
            model.objective[idx] = coef


# -- frontier support ---------------------------------------------------------------


def add_exclusion_cut(model: MilpModel, z_values: Mapping[int, float] | np.ndarray,
                      tag: int | None = None) -> RowHandle:
    """Forbid one complete policy, leaving every other policy feasible.

    `z_values` gives the excluded policy's 0/1 value for each policy
    variable (model index -> value, or a flat array over the structural
    policy order).  The row is violated only by that exact policy.
    """
    st = _require_structure(model)
    if isinstance(z_values, np.ndarray):
        z_values = {int(st.z_vars[i]): float(z_values[i]) for i in range(len(z_values))}
    total_slots = len(st.assignment_slots)
    ones = [idx for idx, v in z_values.items() if v > 0.5]
    zeros = [idx for idx, v in z_values.items() if v <= 0.5]
    if len(ones) != total_slots:
        raise ModelError(f"excluded policy sets {len(ones)} variables to one, "
                         f"expected {total_slots}")
    coeffs: LinExpr = {}
    for idx in zeros:
        coeffs[idx] = 1.0
    for idx in ones:
        coeffs[idx] = coeffs.get(idx, 0.0) - 1.0
    name = f"exclude[{tag if tag is not None else len(model.explicit_rows)}]"
    return model.add_row(name, coeffs, GE, 1.0 - total_slots, origin=ORIGIN_EXCLUSION)


def add_dominance_block(model: MilpModel, incumbent_values: Sequence[float],
                        objectives: Sequence[LinExpr],
                        big_m: Sequence[float] | float | None = None,
                        tag: int | None = None) -> list[RowHandle]:
    """Block candidates dominated by a known policy's objective vector.

    For each objective k a switch pair (lplus, lminus) is added with
    big-M rows comparing the model expression against the incumbent's
    value; at least one lplus must be one, which every non-dominated
    candidate (and any candidate tying the incumbent) can satisfy.  The
    condition is necessary but not sufficient: equal-on-some,
    worse-on-others candidates slip through and must be caught by an
    explicit dominance check.
    """
    if len(incumbent_values) != len(objectives):
        raise ModelError("one incumbent value per objective expression required")
    k_max = len(objectives)
    if isinstance(big_m, (int, float)):
        big_m = [float(big_m)] * k_max
    label = tag if tag is not None else len(model.explicit_rows)
    handles: list[RowHandle] = []
    lplus_vars: list[int] = []
    for k, (value, expr) in enumerate(zip(incumbent_values, objectives)):
        if big_m is None:
            span = sum(abs(c) * _var_span(model, idx) for idx, c in expr.items())
            M = span + 1.0
        else:
            M = big_m[k]
        lp = model.add_variable(f"lplus[b{label},o{k}]", BINARY, 0.0, 1.0)
        lm = model.add_variable(f"lminus[b{label},o{k}]", BINARY, 0.0, 1.0)
        lplus_vars.append(lp)
        coeffs = dict(expr)
        coeffs[lp] = coeffs.get(lp, 0.0) - M
        handles.append(model.add_row(f"dom[b{label},o{k},up]", coeffs, LE, value,
                                     origin=ORIGIN_DOMINANCE))
        coeffs2 = dict(expr)
        coeffs2[lm] = coeffs2.get(lm, 0.0) + M
        handles.append(model.add_row(f"dom[b{label},o{k},lo]", coeffs2, GE, value,
                                     origin=ORIGIN_DOMINANCE))
        handles.append(model.add_row(f"dom[b{label},o{k},sel]", {lp: 1.0, lm: 1.0},
                                     EQ, 1.0, origin=ORIGIN_DOMINANCE_SELECT))
    handles.append(model.add_row(f"dom[b{label},any]", {v: 1.0 for v in lplus_vars},
                                 GE, 1.0, origin=ORIGIN_DOMINANCE_SELECT))
    return handles


def _var_span(model: MilpModel, idx: int) -> float:
    v = model.variables[idx]
    if math.isinf(v.lo) or math.isinf(v.hi):
        return 1.0  # conservative fallback; structural vars are all bounded
    return v.hi - v.lo


def eu_expression(model: MilpModel, original_units: bool = True) -> LinExpr:
    """Expected-utility expression over path variables."""
    st = _require_structure(model)
    util = st.utility_original if original_units else st.utility_model
    return {int(st.pi_vars[r]): float(util[r])
            for r in range(st.arrays.n_paths) if util[r] != 0.0}


def value_node_expression(model: MilpModel, value_node: int) -> LinExpr:
    """Expected consequence of one value node as a linear expression."""
    st = _require_structure(model)
    value_nodes = list(st.arrays.diagram.value_nodes)
    try:
        col = value_nodes.index(value_node)
    except ValueError:
        raise ModelError(f"node {value_node} is not a value node") from None
    cons = st.arrays.consequences[:, col]
    return {int(st.pi_vars[r]): float(cons[r])
            for r in range(st.arrays.n_paths) if cons[r] != 0.0}


def model_statistics(model: MilpModel) -> ModelStatistics:
    return model.statistics()


# -- LP text export / internal reader ------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _write_terms(fh: IO[str], coeffs: LinExpr, model: MilpModel) -> None:
    first = True
    for idx in sorted(coeffs):
        coef = coeffs[idx]
        name = model.variables[idx].name
        if first:
            fh.write(f" {_fmt(coef)} {name}")
            first = False
        else:
            sign = "+" if coef >= 0 else "-"
            fh.write(f" {sign} {_fmt(abs(coef))} {name}")


def export_lp(model: MilpModel, destination) -> None:
    """Write the model in LP text format (names use the stable key encoding).

    Lazy cuts go under a dedicated `Lazy Constraints` section; the
    recorded objective shift rides along in a comment so the internal
    reader restores it.
    """
    own = isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__")
    try:
        fh = open(destination, "w", encoding="utf-8", newline="\n") if own else destination
    except OSError as exc:
        raise ModelError(f"cannot write LP file {destination!r}: {exc}") from exc
    try:
        fh.write("\\ decprog model export\n")
        fh.write(f"\\ objective-shift {_fmt(model.objective_shift)}\n")
        fh.write("Maximize\n obj:")
        _write_terms(fh, model.objective, model)
        fh.write("\nSubject To\n")
        for row in model.iter_rows(include_lazy=False):
            fh.write(f" {row.name}:")
            _write_terms(fh, row.coeffs, model)
            fh.write(f" {row.sense} {_fmt(row.rhs)}\n")
        lazy = model.lazy_rows()
        if lazy:
            fh.write("Lazy Constraints\n")
            for row in lazy:
                fh.write(f" {row.name}:")
                _write_terms(fh, row.coeffs, model)
                fh.write(f" {row.sense} {_fmt(row.rhs)}\n")
        fh.write("Bounds\n")
        for v in model.variables:
            if v.kind == BINARY and (v.lo, v.hi) == (0.0, 1.0):
                continue
            lo = "-inf" if math.isinf(v.lo) else _fmt(v.lo)
            hi = "+inf" if math.isinf(v.hi) else _fmt(v.hi)
            fh.write(f" {lo} <= {v.name} <= {hi}\n")
        binaries = [v.name for v in model.variables if v.kind == BINARY]
        if binaries:
            fh.write("Binaries\n")
            for name in binaries:
                fh.write(f" {name}\n")
        fh.write("End\n")
    except OSError as exc:
        raise ModelError(f"failed while writing LP file {destination!r}: {exc}") from exc
    finally:
        if own:
            fh.close()


_SECTION_RE = re.compile(r"^(maximize|subject to|lazy constraints|bounds|binaries|end)$",
                         re.IGNORECASE)


def read_lp(source) -> MilpModel:
    """Internal LP reader for round-trip checks; reconstructs rows and bounds."""
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "r", encoding="utf-8") if own else source
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()

    model = MilpModel()
    shift = 0.0
    pending_bounds: list[tuple[str, float, float]] = []
    binaries: set[str] = set()
    rows: list[tuple[str, dict[str, float], str, float, bool]] = []
    objective: dict[str, float] = {}

    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("\\"):
            parts = line[1:].split()
            if parts[:1] == ["objective-shift"]:
                shift = float(parts[1])
            continue
        if not line:
            continue
        if _SECTION_RE.match(line):
            section = line.lower()
            continue
        if section == "maximize":
            name, terms = _parse_lp_terms(line, expect_sense=False)
            if name != "obj":
                raise ModelError(f"unexpected objective label {name!r}")
            objective.update(terms[0])
        elif section in ("subject to", "lazy constraints"):
            name, (terms, sense, rhs) = _parse_lp_terms(line, expect_sense=True)
            rows.append((name, terms, sense, rhs, section == "lazy constraints"))
        elif section == "bounds":
            m = re.match(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line)
            if not m:
                raise ModelError(f"cannot parse bound line {line!r}")
            lo = -INF if m.group(1) == "-inf" else float(m.group(1))
            hi = INF if m.group(3) == "+inf" else float(m.group(3))
            pending_bounds.append((m.group(2), lo, hi))
        elif section == "binaries":
            binaries.add(line)
        elif section == "end":
            break
        else:
            raise ModelError(f"line outside any LP section: {line!r}")

    names: list[str] = []
    seen: set[str] = set()

    def note(name: str) -> None:
        if name not in seen:
            seen.add(name)
            names.append(name)

    for name in objective:
        note(name)
    for _, terms, _, _, _ in rows:
        for name in terms:
            note(name)
    for name, _, _ in pending_bounds:
        note(name)
    for name in sorted(binaries):
        note(name)

    for name in names:
        kind = BINARY if name in binaries else CONTINUOUS
        model.add_variable(name, kind, 0.0, 1.0 if kind == BINARY else INF)
    for name, lo, hi in pending_bounds:
        model.set_bounds(model.var_index(name), lo, hi)
    for name, terms, sense, rhs, lazy in rows:
        model.add_row(name, terms, sense, rhs, lazy=lazy)
    model.objective = {model.var_index(n): c for n, c in objective.items()}
    model.objective_shift = shift
    return model


def _parse_lp_terms(line: str, expect_sense: bool):
    label, _, rest = line.partition(":")
    tokens = rest.split()
    sense = None
    rhs = 0.0
    if expect_sense:
        for k, tok in enumerate(tokens):
            if tok in (LE, EQ, GE):
                sense = tok
                rhs = float(tokens[k + 1])
                tokens = tokens[:k]
                break
        if sense is None:
            raise ModelError(f"row line without sense: {line!r}")
    terms: dict[str, float] = {}
    sign = 1.0
    k = 0
    while k < len(tokens):
        tok = tokens[k]
        if tok == "+":
            sign = 1.0
            k += 1
            continue
        if tok == "-":
            sign = -1.0
            k += 1
            continue
        coef = sign * float(tok)
        name = tokens[k + 1]
        terms[name] = terms.get(name, 0.0) + coef
        sign = 1.0
        k += 2
    if expect_sense:
        return label.strip(), (terms, sense, rhs)
    return label.strip(), (terms,)
