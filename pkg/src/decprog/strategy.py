"""Decision strategies: representation, exact evaluation, risk measures.

A local strategy maps every information state of one decision node to a
chosen state; a global strategy holds one local per decision node.
Evaluation enumerates the compatible paths directly (decisions follow
the strategy, chance nodes range over all states), which visits exactly
prod_{j in C} |S_j| paths.  The module also provides the brute-force
optimum used as an oracle against the MILP solver, and direct
computation of VaR/CVaR/deviation measures on consequence
distributions of fixed strategies.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterator, Sequence

import numpy as np

from .diagram import Diagram, DiagramError, info_states, strategy_space_size
from .paths import (PathArrays, UtilityFn, build_path_arrays, identity_utility,
                    path_bound, path_utility)

#: Refuse to enumerate strategy spaces larger than this by default.
DEFAULT_STRATEGY_CAP = 10 ** 7

VALUE_MERGE_TOL = 1e-9  # consequence values closer than this collapse to one atom


@dataclass(frozen=True)
class LocalStrategy:
    """Policy of one decision node: information state -> chosen state."""

    node: int
    info_set: tuple[int, ...]
    map: dict

    def validate(self, diagram: Diagram) -> None:
        nd = diagram.node(self.node)
        if tuple(nd.info_set) != tuple(self.info_set):
            raise DiagramError(f"local strategy at {self.node} has info set "
                               f"{self.info_set}, diagram says {nd.info_set}")
        expected = set(info_states(diagram, self.node))
        if set(self.map) != expected:
            raise DiagramError(f"local strategy at {self.node} is not total")
        assert nd.state_count is not None
        for choice in self.map.values():
            if not 1 <= choice <= nd.state_count:
                raise DiagramError(f"local strategy at {self.node} picks state {choice} "
                                   f"outside 1..{nd.state_count}")


@dataclass(frozen=True)
class GlobalStrategy:
    """One local strategy per decision node, ascending node order."""

    locals: tuple[LocalStrategy, ...]

    def local(self, node: int) -> LocalStrategy:
        for ls in self.locals:
            if ls.node == node:
                return ls
        raise KeyError(node)

    def validate(self, diagram: Diagram) -> None:
        nodes = [ls.node for ls in self.locals]
        if nodes != list(diagram.decision_nodes):
            raise DiagramError(f"strategy covers nodes {nodes}, "
                               f"diagram has decisions {list(diagram.decision_nodes)}")
        for ls in self.locals:
            ls.validate(diagram)


@dataclass(frozen=True)
class ConsequenceDistribution:
    """Discrete consequence distribution: sorted support with probabilities."""

    support: tuple[tuple[float, float], ...]  # (value, probability), values increasing

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for v, _ in self.support)

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.support)

    def mean(self) -> float:
        return sum(v * p for v, p in self.support)


def compatible_paths(diagram: Diagram, Z: GlobalStrategy) -> Iterator[tuple[int, ...]]:
    """Walk nodes in order; chance nodes branch, decisions follow Z."""
    by_node = {ls.node: ls for ls in Z.locals}
    n = diagram.n

    def extend(prefix: list[int], j: int) -> Iterator[tuple[int, ...]]:
        if j > n:
            yield tuple(prefix)
            return
        nd = diagram.node(j)
        if nd.kind.value == "decision":
            info = tuple(prefix[i - 1] for i in nd.info_set)
            prefix.append(by_node[j].map[info])
            yield from extend(prefix, j + 1)
            prefix.pop()
        else:
            for s in diagram.states(j):
                prefix.append(s)
                yield from extend(prefix, j + 1)
                prefix.pop()

    return extend([], 1)


def expected_utility(diagram: Diagram, utility: UtilityFn, Z: GlobalStrategy) -> float:
    """Exact expected utility: sum of p(s) * U(s) over compatible paths."""
    return sum(path_bound(diagram, s) * path_utility(diagram, utility, s)
               for s in compatible_paths(diagram, Z))


def distribution(diagram: Diagram, utility: UtilityFn, Z: GlobalStrategy,
                 tol: float = VALUE_MERGE_TOL) -> ConsequenceDistribution:
    """Aggregate path probabilities by total consequence value.

    Values within `tol` of each other merge into one support atom (the
    first value seen is kept); zero-probability atoms are dropped.
    """
    pairs: list[tuple[float, float]] = []
    for s in compatible_paths(diagram, Z):
        p = path_bound(diagram, s)
        if p == 0.0:
            continue
        pairs.append((path_utility(diagram, utility, s), p))
    return merge_distribution(pairs, tol)


def merge_distribution(pairs: Sequence[tuple[float, float]],
                       tol: float = VALUE_MERGE_TOL) -> ConsequenceDistribution:
    support: list[tuple[float, float]] = []
    for value, prob in sorted(pairs):
        if support and value - support[-1][0] <= tol:
            support[-1] = (support[-1][0], support[-1][1] + prob)
        else:
            support.append((value, prob))
    return ConsequenceDistribution(support=tuple((v, p) for v, p in support if p > 0.0))


class StrategySpaceTooLarge(RuntimeError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"strategy space has {size} strategies, above the cap of {cap}")
        self.size = size
        self.cap = cap


def enumerate_strategies(diagram: Diagram,
                         cap: int = DEFAULT_STRATEGY_CAP) -> Iterator[GlobalStrategy]:
    """Yield every global strategy once, in a fixed lexicographic order.

    The order runs over assignment slots (decision node ascending, then
    information state ascending) with the chosen state of the last slot
    varying fastest.
    """
    size = strategy_space_size(diagram)
    if size > cap:
        raise StrategySpaceTooLarge(size, cap)

    slots: list[tuple[int, tuple[int, ...], tuple[int, ...], range]] = []
    for j in diagram.decision_nodes:
        nd = diagram.node(j)
        for info in info_states(diagram, j):
            slots.append((j, tuple(nd.info_set), info, diagram.states(j)))

    for combo in product(*(choices for _, _, _, choices in slots)):
        locals_by_node: dict[int, dict] = {}
        info_sets: dict[int, tuple[int, ...]] = {}
        for (j, iset, info, _), choice in zip(slots, combo):
            locals_by_node.setdefault(j, {})[info] = choice
            info_sets[j] = iset
        yield GlobalStrategy(locals=tuple(
            LocalStrategy(node=j, info_set=info_sets[j], map=locals_by_node[j])
            for j in diagram.decision_nodes
        ))


def brute_force_optimum(diagram: Diagram, utility: UtilityFn = identity_utility,
                        cap: int = DEFAULT_STRATEGY_CAP) -> tuple[GlobalStrategy, float]:
    """Exhaustive argmax of expected utility; first maximizer wins ties."""
    arrays = build_path_arrays(diagram, utility)
    best: tuple[GlobalStrategy, float] | None = None
    for Z in enumerate_strategies(diagram, cap=cap):
        value = expected_utility_arrays(arrays, Z)
        if best is None or value > best[1]:
            best = (Z, value)
    if best is None:
        raise DiagramError("diagram has an empty strategy space")
    return best


# -- vectorized evaluation on PathArrays --------------------------------------


def strategy_z_vector(arrays: PathArrays, Z: GlobalStrategy) -> np.ndarray:
    """0/1 vector over flat policy-variable indices encoding Z."""
    diagram = arrays.diagram
    z = np.zeros(arrays.n_z, dtype=np.float64)
    for ls in Z.locals:
        nd = diagram.node(ls.node)
        base = arrays.z_offset[ls.node]
        for r, info in enumerate(info_states(diagram, ls.node)):
            z[base + r * nd.state_count + (ls.map[info] - 1)] = 1.0
    return z


def compatibility_mask(arrays: PathArrays, Z: GlobalStrategy) -> np.ndarray:
    z = strategy_z_vector(arrays, Z)
    if arrays.z_index.shape[1] == 0:
        return np.ones(arrays.n_paths, dtype=bool)
    return np.all(z[arrays.z_index] > 0.5, axis=1)


def expected_utility_arrays(arrays: PathArrays, Z: GlobalStrategy) -> float:
    mask = compatibility_mask(arrays, Z)
    return float(np.dot(arrays.p[mask], arrays.utility[mask]))


def distribution_arrays(arrays: PathArrays, Z: GlobalStrategy,
                        tol: float = VALUE_MERGE_TOL) -> ConsequenceDistribution:
    mask = compatibility_mask(arrays, Z)
    probs = arrays.p[mask]
    vals = arrays.utility[mask]
    keep = probs > 0.0
    return merge_distribution(list(zip(vals[keep].tolist(), probs[keep].tolist())), tol)


def value_expectations(arrays: PathArrays, Z: GlobalStrategy) -> tuple[float, ...]:
    """Expected consequence at each value node (ascending node order)."""
    mask = compatibility_mask(arrays, Z)
    return tuple(float(np.dot(arrays.p[mask], arrays.consequences[mask, k]))
                 for k in range(arrays.consequences.shape[1]))


# -- direct risk measures ------------------------------------------------------


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def var_direct(dist: ConsequenceDistribution, alpha: float) -> float:
    """Value-at-Risk: largest t whose strict-left tail stays below alpha.

    On a discrete distribution this returns the smallest support value
    whose inclusive cumulative probability strictly exceeds alpha.  When
    alpha exactly coincides with a cumulative mass the sup lands on the
    next higher atom: with support {(0, 0.2), (100, 0.8)} and alpha 0.2,
    the result is 100 because P(C <= 0) = 0.2 is not below 0.2.  At
    alpha = 1 (no cumulative exceeds it) the maximum support value is
    returned.
    """
    _check_alpha(alpha)
    if not dist.support:
        raise ValueError("empty distribution")
    cum = 0.0
    for value, prob in dist.support:
        cum += prob
        if cum > alpha:
            return value
    return dist.support[-1][0]


def cvar_direct(dist: ConsequenceDistribution, alpha: float) -> float:
    """Expected consequence in the lower alpha-tail.

    Atoms strictly below the VaR contribute fully; the atom at the VaR
    contributes the residual mass alpha - P(C < VaR).
    """
    _check_alpha(alpha)
    var = var_direct(dist, alpha)
    below = 0.0
    acc = 0.0
    for value, prob in dist.support:
        if value < var:
            below += prob
            acc += prob * value
    acc += (alpha - below) * var
    return acc / alpha


@dataclass(frozen=True)
class DeviationMeasures:
    edr: float   # expected shortfall below the target
    ad: float    # mean absolute deviation around the mean
    lsad: float  # lower semi-absolute deviation around the mean
    mean: float
    target: float


def deviation_measures(dist: ConsequenceDistribution,
                       target: float | None = None) -> DeviationMeasures:
    """Downside-risk and deviation statistics of a fixed distribution.

    EDR is measured against `target` (defaulting to the mean); AD and
    LSAD are always measured around the mean.
    """
    mean = dist.mean()
    t = mean if target is None else target
    edr = sum(p * max(0.0, t - v) for v, p in dist.support)
    ad = sum(p * abs(v - mean) for v, p in dist.support)
    lsad = sum(p * max(0.0, mean - v) for v, p in dist.support)
    return DeviationMeasures(edr=edr, ad=ad, lsad=lsad, mean=mean, target=t)


# -- strategy JSON / distribution CSV -----------------------------------------


def strategy_to_obj(Z: GlobalStrategy) -> list:
    return [
        {"node": ls.node,
         "rows": [{"given": list(info), "choose": ls.map[info]}
                  for info in sorted(ls.map)]}
        for ls in Z.locals
    ]


def strategy_from_obj(diagram: Diagram, data: list) -> GlobalStrategy:
    locals_: list[LocalStrategy] = []
    for item in data:
        node = item["node"]
        nd = diagram.node(node)
        mapping = {tuple(row["given"]): int(row["choose"]) for row in item["rows"]}
        locals_.append(LocalStrategy(node=node, info_set=tuple(nd.info_set), map=mapping))
    Z = GlobalStrategy(locals=tuple(sorted(locals_, key=lambda ls: ls.node)))
    Z.validate(diagram)
    return Z


def dump_distribution_csv(dist: ConsequenceDistribution, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("value,probability\n")
        for value, prob in dist.support:
            fh.write(f"{value:.17g},{prob:.17g}\n")
