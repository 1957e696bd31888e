"""Benchmark diagram constructors: N-monitoring, pig farm, double monitoring.

Random data flows from SplitMix64 so that a seed fixes the instance
bit-for-bit on every platform.  SplitMix64 advances a 64-bit state by
the odd constant 0x9E3779B97F4A7C15 and scrambles it with two
xor-shift-multiply rounds (constants 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB, shifts 30/27/31); uniform doubles take the top 53
bits of the output over 2**53.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

from .diagram import ConsequenceTable, Cpt, Diagram, Node, NodeKind, require_valid

_MASK64 = (1 << 64) - 1


@dataclass
class SplitMix64:
    """Deterministic 64-bit generator; identical seeds give identical draws."""

    state: int

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def next_float(self) -> float:
        """Uniform draw in [0, 1) with 53 random mantissa bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


# -- N-monitoring ---------------------------------------------------------------
#
# Load L feeds N independent reports R^i; each report informs one
# reinforcement decision A^i; failure F depends on the load and on all
# actions taken; the single value node T pays 100 on survival and
# subtracts the cost of every action taken.
#
# State conventions (binary everywhere): load/report 1 = high, 2 = low;
# action 1 = reinforce, 2 = pass; failure 1 = fail, 2 = survive.

SURVIVAL_PAYOFF = 100.0


def n_monitoring(N: int, seed: int) -> Diagram:
    """Random N-monitoring instance.

    Draw order (one SplitMix64 stream, fixed for reproducibility):
      1. probability of high load, uniform;
      2. per report i ascending: correctness max(x, 1-x);
      3. failure prior under high load max(x, 1-x), then under low
         load min(y, 1-y);
      4. per action i ascending: cost c_i uniform.
    Taking actions A divides the failure prior by exp(sum of their
    costs), so reinforcement can only reduce the failure probability.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = SplitMix64(seed)

    p_high = rng.next_float()
    correctness = [max(x, 1.0 - x) for x in (rng.next_float() for _ in range(N))]
    x = rng.next_float()
    prior_high = max(x, 1.0 - x)
    y = rng.next_float()
    prior_low = min(y, 1.0 - y)
    costs = [rng.next_float() for _ in range(N)]

    load = 1
    reports = [1 + i for i in range(1, N + 1)]
    actions = [1 + N + i for i in range(1, N + 1)]
    failure = 2 * N + 2
    target = 2 * N + 3

    nodes = [Node(load, NodeKind.CHANCE, 2, (), "L")]
    nodes += [Node(reports[i], NodeKind.CHANCE, 2, (load,), f"R{i + 1}")
              for i in range(N)]
    nodes += [Node(actions[i], NodeKind.DECISION, 2, (reports[i],), f"A{i + 1}")
              for i in range(N)]
    nodes.append(Node(failure, NodeKind.CHANCE, 2, tuple([load] + actions), "F"))
    nodes.append(Node(target, NodeKind.VALUE, None, tuple(actions + [failure]), "T"))

    cpts = {load: Cpt(load, {(): (p_high, 1.0 - p_high)})}
    for i in range(N):
        c = correctness[i]
        cpts[reports[i]] = Cpt(reports[i], {
            (1,): (c, 1.0 - c),       # high load: correct report is "high"
            (2,): (1.0 - c, c),       # low load: correct report is "low"
        })

    fail_rows = {}
    for given in product((1, 2), *[(1, 2)] * N):
        prior = prior_high if given[0] == 1 else prior_low
        taken = [i for i in range(N) if given[1 + i] == 1]
        post = prior / math.exp(sum(costs[i] for i in taken))
        fail_rows[given] = (post, 1.0 - post)
    cpts[failure] = Cpt(failure, fail_rows)

    value_rows = {}
    for given in product(*([(1, 2)] * N), (1, 2)):
        taken_cost = sum(costs[i] for i in range(N) if given[i] == 1)
        payoff = SURVIVAL_PAYOFF if given[N] == 2 else 0.0
        value_rows[given] = payoff - taken_cost
    consequences = {target: ConsequenceTable(target, value_rows)}

    return require_valid(Diagram(nodes=tuple(nodes), cpts=cpts,
                                 consequences=consequences))


# -- pig farm -------------------------------------------------------------------
#
# Monthly health chain h_1..h_M with a test t_k and an injection
# decision d_k before each transition; the vet only sees the latest
# test, so earlier tests and treatments are forgotten.  Value nodes
# u_1..u_{M-1} charge the treatment cost and u_M pays the sale price.
#
# State conventions: health 1 = ill, 2 = healthy; test 1 = positive,
# 2 = negative; decision 1 = treat, 2 = pass.

PIG_INITIAL_ILL = 0.10
PIG_TEST_POSITIVE_GIVEN_ILL = 0.80
PIG_TEST_POSITIVE_GIVEN_HEALTHY = 0.10
PIG_HEALTHY_NEXT = {
    # (current health, decision) -> P(healthy next month)
    (1, 1): 0.5,  # ill, treated
    (1, 2): 0.1,  # ill, untreated
    (2, 1): 0.9,  # healthy, treated
    (2, 2): 0.8,  # healthy, untreated
}
PIG_TREAT_COST = 100.0
PIG_SALE_HEALTHY = 1000.0
PIG_SALE_ILL = 300.0


def pig_farm(months: int) -> Diagram:
    """Pig farm herd-management diagram with `months` health periods."""
    if months < 2:
        raise ValueError("months must be >= 2")
    M = months

    def h(k: int) -> int:
        return 3 * k - 2

    def t(k: int) -> int:
        return 3 * k - 1

    def d(k: int) -> int:
        return 3 * k

    n = 3 * M - 2  # h_M has index 3M-2; tests/decisions stop at M-1
    nodes: list[Node] = []
    for k in range(1, M):
        nodes.append(Node(h(k), NodeKind.CHANCE, 2, () if k == 1 else (h(k - 1), d(k - 1)),
                          f"h{k}"))
        nodes.append(Node(t(k), NodeKind.CHANCE, 2, (h(k),), f"t{k}"))
        nodes.append(Node(d(k), NodeKind.DECISION, 2, (t(k),), f"d{k}"))
    nodes.append(Node(h(M), NodeKind.CHANCE, 2, (h(M - 1), d(M - 1)), f"h{M}"))

    value_base = n
    for k in range(1, M):
        nodes.append(Node(value_base + k, NodeKind.VALUE, None, (d(k),), f"u{k}"))
    nodes.append(Node(value_base + M, NodeKind.VALUE, None, (h(M),), f"u{M}"))

    cpts = {h(1): Cpt(h(1), {(): (PIG_INITIAL_ILL, 1.0 - PIG_INITIAL_ILL)})}
    test_rows = {
        (1,): (PIG_TEST_POSITIVE_GIVEN_ILL, 1.0 - PIG_TEST_POSITIVE_GIVEN_ILL),
        (2,): (PIG_TEST_POSITIVE_GIVEN_HEALTHY, 1.0 - PIG_TEST_POSITIVE_GIVEN_HEALTHY),
    }
    for k in range(1, M):
        cpts[t(k)] = Cpt(t(k), dict(test_rows))
        healthy_rows = {}
        for health, dec in product((1, 2), (1, 2)):
            ph = PIG_HEALTHY_NEXT[(health, dec)]
            healthy_rows[(health, dec)] = (1.0 - ph, ph)
        cpts[h(k + 1)] = Cpt(h(k + 1), healthy_rows)

    consequences = {}
    for k in range(1, M):
        consequences[value_base + k] = ConsequenceTable(
            value_base + k, {(1,): -PIG_TREAT_COST, (2,): 0.0})
    consequences[value_base + M] = ConsequenceTable(
        value_base + M, {(1,): PIG_SALE_ILL, (2,): PIG_SALE_HEALTHY})

    return require_valid(Diagram(nodes=tuple(nodes), cpts=cpts,
                                 consequences=consequences))


# -- double monitoring ------------------------------------------------------------


@dataclass
class DoubleMonitoringParams:
    """Every probability and consequence of the two-sensor model, explicit.

    `fail`: P(failure | load, a1, a2) keyed by (load, a1, a2) with the
    same 1 = high/reinforce conventions as N-monitoring.  `consequence`
    is keyed by (a1, a2, f).
    """

    p_high_load: float
    p_report_high: dict  # (i, load_state) -> P(report i reads high)
    fail: dict
    consequence: dict

    @staticmethod
    def default() -> "DoubleMonitoringParams":
        """Symmetric hand-picked instance: decent sensors, costly actions."""
        fail = {}
        for load, a1, a2 in product((1, 2), (1, 2), (1, 2)):
            prior = 0.8 if load == 1 else 0.2
            reduction = (2.0 if a1 == 1 else 1.0) * (2.0 if a2 == 1 else 1.0)
            fail[(load, a1, a2)] = prior / reduction
        consequence = {}
        for a1, a2, f in product((1, 2), (1, 2), (1, 2)):
            cost = (10.0 if a1 == 1 else 0.0) + (10.0 if a2 == 1 else 0.0)
            consequence[(a1, a2, f)] = (100.0 if f == 2 else 0.0) - cost
        return DoubleMonitoringParams(
            p_high_load=0.5,
            p_report_high={(1, 1): 0.8, (1, 2): 0.2, (2, 1): 0.8, (2, 2): 0.2},
            fail=fail,
            consequence=consequence,
        )


def double_monitoring(params: DoubleMonitoringParams | None = None) -> Diagram:
    """Two-sensor reinforcement problem where neither decision sees the other."""
    if params is None:
        params = DoubleMonitoringParams.default()

    L, R1, R2, A1, A2, F, T = range(1, 8)
    nodes = (
        Node(L, NodeKind.CHANCE, 2, (), "L"),
        Node(R1, NodeKind.CHANCE, 2, (L,), "R1"),
        Node(R2, NodeKind.CHANCE, 2, (L,), "R2"),
        Node(A1, NodeKind.DECISION, 2, (R1,), "A1"),
        Node(A2, NodeKind.DECISION, 2, (R2,), "A2"),
        Node(F, NodeKind.CHANCE, 2, (L, A1, A2), "F"),
        Node(T, NodeKind.VALUE, None, (A1, A2, F), "T"),
    )
    cpts = {
        L: Cpt(L, {(): (params.p_high_load, 1.0 - params.p_high_load)}),
        R1: Cpt(R1, {(ld,): (params.p_report_high[(1, ld)],
                             1.0 - params.p_report_high[(1, ld)]) for ld in (1, 2)}),
        R2: Cpt(R2, {(ld,): (params.p_report_high[(2, ld)],
                             1.0 - params.p_report_high[(2, ld)]) for ld in (1, 2)}),
        F: Cpt(F, {key: (pf, 1.0 - pf) for key, pf in params.fail.items()}),
    }
    consequences = {T: ConsequenceTable(T, dict(params.consequence))}
    return require_valid(Diagram(nodes=tuple(nodes), cpts=cpts,
                                 consequences=consequences))


def random_double_monitoring(seed: int) -> DoubleMonitoringParams:
    """Random parameters in the same style as the N-monitoring draws."""
    rng = SplitMix64(seed)
    p_high = rng.next_float()
    corr = [max(x, 1.0 - x) for x in (rng.next_float(), rng.next_float())]
    x = rng.next_float()
    prior_high = max(x, 1.0 - x)
    y = rng.next_float()
    prior_low = min(y, 1.0 - y)
    costs = [rng.next_float(), rng.next_float()]

    fail = {}
    for load, a1, a2 in product((1, 2), (1, 2), (1, 2)):
        prior = prior_high if load == 1 else prior_low
        total = (costs[0] if a1 == 1 else 0.0) + (costs[1] if a2 == 1 else 0.0)
        fail[(load, a1, a2)] = prior / math.exp(total)
    consequence = {}
    for a1, a2, f in product((1, 2), (1, 2), (1, 2)):
        cost = (costs[0] if a1 == 1 else 0.0) + (costs[1] if a2 == 1 else 0.0)
        consequence[(a1, a2, f)] = (SURVIVAL_PAYOFF if f == 2 else 0.0) - cost
    return DoubleMonitoringParams(
        p_high_load=p_high,
        p_report_high={(1, 1): corr[0], (1, 2): 1.0 - corr[0],
                       (2, 1): corr[1], (2, 2): 1.0 - corr[1]},
        fail=fail,
        consequence=consequence,
    )
