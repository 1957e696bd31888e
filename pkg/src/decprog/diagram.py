"""Influence-diagram data model and validation.

A diagram is an acyclic network of chance, decision, and value nodes.
Chance and decision nodes occupy indices 1..n and carry a finite state
set {1..state_count}; value nodes occupy n+1..n+n_V and map the states
of their direct predecessors to real-valued consequences.  Nodes must
arrive consecutively indexed with every information-set index strictly
smaller than the node's own index; this module rejects (it never
repairs) inputs that violate that ordering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Iterator, Mapping

PROB_TOL = 1e-9  # CPT row normalization tolerance (JSON round-off slack)


class NodeKind(Enum):
    CHANCE = "chance"
    DECISION = "decision"
    VALUE = "value"


@dataclass(frozen=True)
class Node:
    """One node: 1-based index, kind, state count, ordered info set.

    `state_count` is None for value nodes.  `info_set` must be strictly
    increasing; `state_labels` are optional display names (reporting
    only, never used in computation).
    """

    index: int
    kind: NodeKind
    state_count: int | None
    info_set: tuple[int, ...]
    label: str = ""
    state_labels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table of one chance node.

    `rows` maps each information-state tuple (states of the info-set
    nodes, in info-set order) to a probability vector over the node's
    own states.
    """

    node: int
    rows: Mapping[tuple[int, ...], tuple[float, ...]]


@dataclass(frozen=True)
class ConsequenceTable:
    """Consequence mapping of one value node: information state -> value."""

    node: int
    rows: Mapping[tuple[int, ...], float]


@dataclass(frozen=True)
class ValidationIssue:
    node: int | None
    rule: str
    message: str

    def __str__(self) -> str:
        where = f"node {self.node}: " if self.node is not None else ""
        return f"{where}[{self.rule}] {self.message}"


@dataclass
class ValidationReport:
    errors: list[ValidationIssue] = field(default_factory=list)
    warnings: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, node: int | None, rule: str, message: str) -> None:
        self.errors.append(ValidationIssue(node, rule, message))

    def warn(self, node: int | None, rule: str, message: str) -> None:
        self.warnings.append(ValidationIssue(node, rule, message))


class DiagramError(ValueError):
    """Raised when an operation requires a valid diagram and gets none."""


@dataclass(frozen=True)
class Diagram:
    """Immutable influence diagram: nodes plus CPTs and consequence tables.

    Construction performs no checks; call `validate` (or build through
    `load_json`, which does) before handing a diagram to the path or
    formulation layers.
    """

    nodes: tuple[Node, ...]
    cpts: Mapping[int, Cpt]
    consequences: Mapping[int, ConsequenceTable]

    # -- structural accessors ------------------------------------------------

    @property
    def chance_nodes(self) -> tuple[int, ...]:
        return tuple(nd.index for nd in self.nodes if nd.kind is NodeKind.CHANCE)

    @property
    def decision_nodes(self) -> tuple[int, ...]:
        return tuple(nd.index for nd in self.nodes if nd.kind is NodeKind.DECISION)

    @property
    def value_nodes(self) -> tuple[int, ...]:
        return tuple(nd.index for nd in self.nodes if nd.kind is NodeKind.VALUE)

    @property
    def n(self) -> int:
        """Number of chance + decision nodes."""
        return sum(1 for nd in self.nodes if nd.kind is not NodeKind.VALUE)

    def node(self, index: int) -> Node:
        nd = self.nodes[index - 1]
        if nd.index != index:
            raise DiagramError(f"node indices are not consecutive at {index}")
        return nd

    def states(self, index: int) -> range:
        count = self.node(index).state_count
        if count is None:
            raise DiagramError(f"node {index} is a value node and has no states")
        return range(1, count + 1)


def validate(diagram: Diagram) -> ValidationReport:
    """Check structural and numerical invariants, collecting every violation.

    Never aborts on the first problem; the report lists all findings with
    the offending node and a stable rule name.
    """
    report = ValidationReport()
    nodes = diagram.nodes

    for pos, nd in enumerate(nodes, start=1):
        if nd.index != pos:
            report.error(nd.index, "index-order",
                         f"expected index {pos} at position {pos}, got {nd.index}")
    index_ok = not report.errors

    n = diagram.n
    value_seen = False
    for nd in nodes:
        if nd.kind is NodeKind.VALUE:
            value_seen = True
        elif value_seen:
            report.error(nd.index, "value-node-position",
                         "chance/decision node appears after a value node")

    if not any(nd.kind is NodeKind.VALUE for nd in nodes):
        report.error(None, "no-value-node", "diagram has no value node")

    value_indices = {nd.index for nd in nodes if nd.kind is NodeKind.VALUE}
    for nd in nodes:
        prev = 0
        for i in nd.info_set:
            if i <= prev:
                report.error(nd.index, "info-set-order",
                             f"info set {nd.info_set} is not strictly increasing")
                break
            prev = i
        for i in nd.info_set:
            if i >= nd.index:
                report.error(nd.index, "info-set-topology",
                             f"info-set node {i} does not precede node {nd.index}")
            if i in value_indices:
                report.error(nd.index, "value-node-in-info-set",
                             f"value node {i} appears in the information set")
            if not (1 <= i <= len(nodes)):
                report.error(nd.index, "info-set-range", f"unknown node {i} in info set")

        if nd.kind is NodeKind.VALUE:
            if nd.state_count is not None:
                report.error(nd.index, "value-node-states", "value node carries a state count")
        else:
            if nd.state_count is None or nd.state_count < 1:
                report.error(nd.index, "state-count", "state count must be >= 1")
            elif nd.kind is NodeKind.DECISION and nd.state_count < 2:
                report.warn(nd.index, "degenerate-decision",
                            "decision node with a single alternative")

    if not index_ok:
        return report  # downstream table checks assume consecutive indexing

    for nd in nodes:
        if nd.kind is NodeKind.CHANCE:
            cpt = diagram.cpts.get(nd.index)
            if cpt is None:
                report.error(nd.index, "missing-cpt", "chance node has no CPT")
                continue
            _check_table_cover(diagram, nd, dict(cpt.rows), report, "cpt")
            for given, probs in cpt.rows.items():
                if nd.state_count is not None and len(probs) != nd.state_count:
                    report.error(nd.index, "cpt-row-length",
                                 f"row {given} has {len(probs)} entries, "
                                 f"expected {nd.state_count}")
                    continue
                if any(p < -PROB_TOL or p > 1 + PROB_TOL for p in probs):
                    report.error(nd.index, "cpt-entry-range",
                                 f"row {given} has entries outside [0,1]")
                total = math.fsum(probs)
                if abs(total - 1.0) > PROB_TOL:
                    report.error(nd.index, "cpt-row-sum",
                                 f"row {given} sums to {total!r}, not 1")
        elif nd.kind is NodeKind.VALUE:
            table = diagram.consequences.get(nd.index)
            if table is None:
                report.error(nd.index, "missing-consequences",
                             "value node has no consequence table")
                continue
            _check_table_cover(diagram, nd, dict(table.rows), report, "consequence")
            for given, val in table.rows.items():
                if not math.isfinite(val):
                    report.error(nd.index, "consequence-finite",
                                 f"row {given} has non-finite value {val!r}")

    for idx in diagram.cpts:
        if not (1 <= idx <= len(nodes)) or nodes[idx - 1].kind is not NodeKind.CHANCE:
            report.error(idx, "cpt-node-kind", "CPT attached to a non-chance node")
    for idx in diagram.consequences:
        if not (1 <= idx <= len(nodes)) or nodes[idx - 1].kind is not NodeKind.VALUE:
            report.error(idx, "consequence-node-kind",
                         "consequence table attached to a non-value node")

    return report


def _check_table_cover(diagram: Diagram, nd: Node, rows: dict, report: ValidationReport,
                       what: str) -> None:
    try:
        expected = list(info_states(diagram, nd.index, _checked=False))
    except DiagramError:
        return
    seen = set(rows)
    for key in rows:
        if key not in set(expected):
            report.error(nd.index, f"{what}-unknown-row",
                         f"row {key} is not an information state of node {nd.index}")
    for key in expected:
        if key not in seen:
            report.error(nd.index, f"{what}-missing-row",
                         f"information state {key} has no row")


def require_valid(diagram: Diagram) -> Diagram:
    """Return the diagram unchanged, or raise with every validation error."""
    report = validate(diagram)
    if not report.ok:
        summary = "; ".join(str(e) for e in report.errors)
        raise DiagramError(f"invalid diagram: {summary}")
    return diagram


def info_states(diagram: Diagram, j: int, *, _checked: bool = True) -> Iterator[tuple[int, ...]]:
    """Enumerate the information states of node j.

    The product of the info-set nodes' state sets, ordered
    lexicographically by ascending node index then ascending state
    index.  An empty information set yields exactly one empty tuple.
    """
    nd = diagram.node(j)
    ranges = []
    for i in nd.info_set:
        pred = diagram.node(i)
        if pred.state_count is None:
            raise DiagramError(f"node {i} in info set of {j} has no states")
        ranges.append(range(1, pred.state_count + 1))
    return product(*ranges)


def info_state_count(diagram: Diagram, j: int) -> int:
    count = 1
    for i in diagram.node(j).info_set:
        sc = diagram.node(i).state_count
        if sc is None:
            raise DiagramError(f"node {i} in info set of {j} has no states")
        count *= sc
    return count


def strategy_space_size(diagram: Diagram) -> int:
    """Exact number of global strategies: prod over decisions of |S_j|^|S_I(j)|.

    Python integers are unbounded, so the count is always exact; there is
    no wraparound to guard against.
    """
    total = 1
    for j in diagram.decision_nodes:
        sc = diagram.node(j).state_count
        assert sc is not None
        total *= sc ** info_state_count(diagram, j)
    return total


# -- JSON model format -------------------------------------------------------
#
# Top-level object:
#   nodes:        array ordered by index; each {kind, states|labels, info_set[, label]}
#   cpts:         array of {node, rows: [{given: [...], p: [...]}]}
#   consequences: array of {node, rows: [{given: [...], value: number}]}
# Unknown keys anywhere are rejected.

_NODE_KEYS = {"kind", "states", "labels", "info_set", "label"}
_TOP_KEYS = {"nodes", "cpts", "consequences"}


class ModelFormatError(ValueError):
    """Malformed model JSON (unknown keys, wrong types, bad shapes)."""


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ModelFormatError(f"unknown keys {sorted(unknown)} in {where}")


def diagram_from_dict(data: dict) -> Diagram:
    if not isinstance(data, dict):
        raise ModelFormatError("top-level JSON value must be an object")
    _reject_unknown(data, _TOP_KEYS, "model")
    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ModelFormatError("'nodes' must be a non-empty array")

    nodes: list[Node] = []
    for pos, item in enumerate(raw_nodes, start=1):
        if not isinstance(item, dict):
            raise ModelFormatError(f"node {pos} must be an object")
        _reject_unknown(item, _NODE_KEYS, f"node {pos}")
        try:
            kind = NodeKind(item["kind"])
        except (KeyError, ValueError) as exc:
            raise ModelFormatError(f"node {pos}: bad or missing 'kind'") from exc
        state_labels = None
        if kind is NodeKind.VALUE:
            if "states" in item or "labels" in item:
                raise ModelFormatError(f"node {pos}: value nodes carry no states")
            state_count = None
        elif "labels" in item:
            labels = item["labels"]
            if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
                raise ModelFormatError(f"node {pos}: 'labels' must be an array of strings")
            state_labels = tuple(labels)
            state_count = len(labels)
        elif "states" in item:
            state_count = item["states"]
            if not isinstance(state_count, int) or state_count < 1:
                raise ModelFormatError(f"node {pos}: 'states' must be a positive integer")
        else:
            raise ModelFormatError(f"node {pos}: needs 'states' or 'labels'")
        info_set = item.get("info_set", [])
        if not isinstance(info_set, list) or not all(isinstance(i, int) for i in info_set):
            raise ModelFormatError(f"node {pos}: 'info_set' must be an array of indices")
        nodes.append(Node(index=pos, kind=kind, state_count=state_count,
                          info_set=tuple(info_set), label=str(item.get("label", "")),
                          state_labels=state_labels))

    cpts: dict[int, Cpt] = {}
    for item in data.get("cpts", []):
        _reject_unknown(item, {"node", "rows"}, "cpt")
        node_idx = item.get("node")
        if not isinstance(node_idx, int):
            raise ModelFormatError("cpt: 'node' must be an integer index")
        rows: dict[tuple[int, ...], tuple[float, ...]] = {}
        for row in item.get("rows", []):
            _reject_unknown(row, {"given", "p"}, f"cpt row of node {node_idx}")
            given = tuple(row.get("given", []))
            probs = row.get("p")
            if not isinstance(probs, list):
                raise ModelFormatError(f"cpt row {given} of node {node_idx}: 'p' must be an array")
            if given in rows:
                raise ModelFormatError(f"cpt of node {node_idx}: duplicate row {given}")
            rows[given] = tuple(float(p) for p in probs)
        if node_idx in cpts:
            raise ModelFormatError(f"duplicate cpt for node {node_idx}")
        cpts[node_idx] = Cpt(node=node_idx, rows=rows)

    consequences: dict[int, ConsequenceTable] = {}
    for item in data.get("consequences", []):
        _reject_unknown(item, {"node", "rows"}, "consequence table")
        node_idx = item.get("node")
        if not isinstance(node_idx, int):
            raise ModelFormatError("consequence table: 'node' must be an integer index")
        crows: dict[tuple[int, ...], float] = {}
        for row in item.get("rows", []):
            _reject_unknown(row, {"given", "value"}, f"consequence row of node {node_idx}")
            given = tuple(row.get("given", []))
            if given in crows:
                raise ModelFormatError(f"consequences of node {node_idx}: duplicate row {given}")
            crows[given] = float(row.get("value"))
        if node_idx in consequences:
            raise ModelFormatError(f"duplicate consequence table for node {node_idx}")
        consequences[node_idx] = ConsequenceTable(node=node_idx, rows=crows)

    return Diagram(nodes=tuple(nodes), cpts=cpts, consequences=consequences)


def diagram_to_dict(diagram: Diagram) -> dict:
    raw_nodes = []
    for nd in diagram.nodes:
        item: dict = {"kind": nd.kind.value, "info_set": list(nd.info_set)}
        if nd.kind is not NodeKind.VALUE:
            if nd.state_labels is not None:
                item["labels"] = list(nd.state_labels)
            else:
                item["states"] = nd.state_count
        if nd.label:
            item["label"] = nd.label
        raw_nodes.append(item)
    return {
        "nodes": raw_nodes,
        "cpts": [
            {"node": cpt.node,
             "rows": [{"given": list(g), "p": list(p)} for g, p in cpt.rows.items()]}
            for cpt in (diagram.cpts[j] for j in sorted(diagram.cpts))
        ],
        "consequences": [
            {"node": t.node,
             "rows": [{"given": list(g), "value": v} for g, v in t.rows.items()]}
            for t in (diagram.consequences[j] for j in sorted(diagram.consequences))
        ],
    }


def load_json(path: str) -> Diagram:
    """Read, parse, and fully validate a diagram from a JSON model file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return require_valid(diagram_from_dict(data))


def dump_json(diagram: Diagram, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(diagram_to_dict(diagram), fh, indent=2)
        fh.write("\n")
