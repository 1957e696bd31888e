"""Path space of a diagram: enumeration, probability bounds, utilities.

A path is one full state assignment s = (s_1, ..., s_n) over the chance
and decision nodes.  Its probability under a strategy factorizes into a
strategy-independent upper bound p(s) (the product of chance-node CPT
entries) and a 0/1 compatibility factor contributed by the decisions.
`recursion_probabilities` carries the prefix probabilities node by node
and serves as the ground-truth oracle for everything built on top.

Besides the per-path functions, `PathArrays` precomputes the whole path
table as numpy vectors; the solvers and brute-force oracles run on it.
Both views are cross-checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterator, Sequence, TYPE_CHECKING

import numpy as np

from .diagram import Diagram, DiagramError, NodeKind

if TYPE_CHECKING:
    from .strategy import GlobalStrategy

UtilityFn = Callable[[float], float]

#: Largest path count materialized into arrays by default (2**24).
DEFAULT_PATH_CAP = 1 << 24


def identity_utility(c: float) -> float:
    return c


def path_count(diagram: Diagram) -> int:
    count = 1
    for j in range(1, diagram.n + 1):
        sc = diagram.node(j).state_count
        assert sc is not None
        count *= sc
    return count


def enumerate_paths(diagram: Diagram) -> Iterator[tuple[int, ...]]:
    """Yield every path once, lexicographically (node 1 varies slowest)."""
    ranges = [diagram.states(j) for j in range(1, diagram.n + 1)]
    return product(*ranges)


def _info_state(s: Sequence[int], info_set: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(s[i - 1] for i in info_set)


def path_bound(diagram: Diagram, s: Sequence[int]) -> float:
    """Upper-bound probability p(s): product of chance-node CPT entries."""
    p = 1.0
    for j in diagram.chance_nodes:
        cpt = diagram.cpts[j]
        p *= cpt.rows[_info_state(s, diagram.node(j).info_set)][s[j - 1] - 1]
    return p


def path_consequences(diagram: Diagram, s: Sequence[int]) -> tuple[float, ...]:
    """Raw consequence at each value node along the path (ascending index)."""
    return tuple(
        diagram.consequences[v].rows[_info_state(s, diagram.node(v).info_set)]
        for v in diagram.value_nodes
    )


def path_utility(diagram: Diagram, utility: UtilityFn, s: Sequence[int]) -> float:
    """Total path utility: utilities of per-value-node consequences, summed.

    With a single value node this is exactly U(Y_v(s)); with several the
    additive convention applies (costs and terminal payoffs add up).
    """
    return sum(utility(c) for c in path_consequences(diagram, s))


def is_compatible(Z: "GlobalStrategy", s: Sequence[int]) -> bool:
    """True iff every decision in the path equals the strategy's choice."""
    for local in Z.locals:
        info = _info_state(s, local.info_set)
        if local.map[info] != s[local.node - 1]:
            return False
    return True


def recursion_probabilities(diagram: Diagram, Z: "GlobalStrategy",
                            s: Sequence[int]) -> list[float]:
    """Prefix path probabilities (pi_1(s), ..., pi_n(s)) under strategy Z.

    Starting from pi_0 = 1, a chance node multiplies by its conditional
    probability and a decision node keeps or zeroes the prefix depending
    on whether Z picks the path's decision.  The final entry is the path
    probability pi(s).
    """
    by_node = {local.node: local for local in Z.locals}
    out: list[float] = []
    pi = 1.0
    for j in range(1, diagram.n + 1):
        nd = diagram.node(j)
        info = _info_state(s, nd.info_set)
        if nd.kind is NodeKind.CHANCE:
            pi *= diagram.cpts[j].rows[info][s[j - 1] - 1]
        else:
            if by_node[j].map[info] != s[j - 1]:
                pi = 0.0
        out.append(pi)
    return out


# -- vectorized path table ----------------------------------------------------


@dataclass(frozen=True)
class PathArrays:
    """All-path table as flat numpy arrays, indexed by lexicographic rank.

    Attributes
    ----------
    state_counts : (n,) int64 state-set sizes of chance/decision nodes
    digits       : (P, n) int32, 1-based path states
    p            : (P,) float64 upper-bound probabilities
    consequences : (P, n_V) float64 raw consequence per value node
    utility      : (P,) float64 total path utility
    info_index   : dict node -> (P,) int64 rank of the node's information
                   state within its lexicographic info-state enumeration
    z_offset     : dict decision node -> int, first flat index of the
                   node's policy variables in (info_state, state) order
    z_index      : (P, |D|) int64 flat policy-variable index each path
                   needs set to 1 at each decision node
    """

    diagram: Diagram
    state_counts: np.ndarray
    digits: np.ndarray
    p: np.ndarray
    consequences: np.ndarray
    utility: np.ndarray
    info_index: dict
    z_offset: dict
    z_index: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.digits.shape[0]

    @property
    def n_z(self) -> int:
        d = self.diagram
        return sum(d.node(j).state_count * _count_info(d, j) for j in d.decision_nodes)

    def path(self, rank: int) -> tuple[int, ...]:
        return tuple(int(x) for x in self.digits[rank])


def _count_info(diagram: Diagram, j: int) -> int:
    cnt = 1
    for i in diagram.node(j).info_set:
        cnt *= diagram.node(i).state_count
    return cnt


def build_path_arrays(diagram: Diagram, utility: UtilityFn = identity_utility,
                      cap: int = DEFAULT_PATH_CAP) -> PathArrays:
    """Materialize the full path table; refuses path spaces above `cap`."""
    n = diagram.n
    total = path_count(diagram)
    if total > cap:
        raise DiagramError(f"path space has {total} paths, above the cap of {cap}; "
                           f"raise the cap to materialize it")

    counts = np.array([diagram.node(j).state_count for j in range(1, n + 1)],
                      dtype=np.int64)
    # mixed-radix digits, node 1 slowest-varying
    radix = np.ones(n, dtype=np.int64)
    for j in range(n - 2, -1, -1):
        radix[j] = radix[j + 1] * counts[j + 1]
    ranks = np.arange(total, dtype=np.int64)
    digits = ((ranks[:, None] // radix[None, :]) % counts[None, :]).astype(np.int32) + 1

    def info_rank(info_set: tuple[int, ...]) -> np.ndarray:
        """Lexicographic rank of each path's information state at these nodes."""
        out = np.zeros(total, dtype=np.int64)
        for i in info_set:
            out = out * counts[i - 1] + (digits[:, i - 1] - 1)
        return out

    info_index = {}
    p = np.ones(total, dtype=np.float64)
    for j in diagram.chance_nodes:
        nd = diagram.node(j)
        rows = diagram.cpts[j].rows
        table = np.empty((_count_info(diagram, j), nd.state_count), dtype=np.float64)
        for r, given in enumerate(_ordered_info_states(diagram, j)):
            table[r, :] = rows[given]
        idx = info_rank(nd.info_set)
        info_index[j] = idx
        p *= table[idx, digits[:, j - 1] - 1]

    value_nodes = diagram.value_nodes
    cons = np.empty((total, len(value_nodes)), dtype=np.float64)
    for k, v in enumerate(value_nodes):
        nd = diagram.node(v)
        flat = np.empty(_count_info(diagram, v), dtype=np.float64)
        for r, given in enumerate(_ordered_info_states(diagram, v)):
            flat[r] = diagram.consequences[v].rows[given]
        idx = info_rank(nd.info_set)
        info_index[v] = idx
        cons[:, k] = flat[idx]

    if utility is identity_utility:
        util = cons.sum(axis=1)
    else:
        transform = np.vectorize(utility, otypes=[np.float64])
        util = transform(cons).sum(axis=1)

    z_offset = {}
    offset = 0
    for j in diagram.decision_nodes:
        z_offset[j] = offset
        offset += diagram.node(j).state_count * _count_info(diagram, j)

    z_index = np.empty((total, len(diagram.decision_nodes)), dtype=np.int64)
    for k, j in enumerate(diagram.decision_nodes):
        nd = diagram.node(j)
        idx = info_rank(nd.info_set)
        info_index[j] = idx
        z_index[:, k] = z_offset[j] + idx * nd.state_count + (digits[:, j - 1] - 1)

    return PathArrays(diagram=diagram, state_counts=counts, digits=digits, p=p,
                      consequences=cons, utility=util, info_index=info_index,
                      z_offset=z_offset, z_index=z_index)


def _ordered_info_states(diagram: Diagram, j: int):
    from .diagram import info_states
    return info_states(diagram, j)


def dump_path_table_csv(arrays: PathArrays, path: str) -> None:
    """Write the path table: columns s_1..s_n, p, utility."""
    n = arrays.digits.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join([f"s_{j}" for j in range(1, n + 1)] + ["p", "utility"]) + "\n")
        for r in range(arrays.n_paths):
            cells = [str(int(x)) for x in arrays.digits[r]]
            cells.append(format(float(arrays.p[r]), ".17g"))
            cells.append(format(float(arrays.utility[r]), ".17g"))
            fh.write(",".join(cells) + "\n")
