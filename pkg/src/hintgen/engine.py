"""Hint-aware cost-based join optimizer and a noisy execution sampler.

Stands in for the database the hint generator is trained against: it plans a
query by exhaustive dynamic programming over connected table subsets (bushy
trees allowed), optionally restricted by a subplan hint set, and "executes" a
plan by scaling its true-selectivity cost with multiplicative normal noise.

Cost model (``|X|`` is an input cardinality)::

    SeqScan(T)   = rows(T)
    IndexScan(T) = log2(rows(T)) + sel(T) * rows(T)
    HashJoin     = 1.2 * |R| + |L|
    MergeJoin    = |L| + |R| + 0.1 * |X| * log2|X| for each unsorted input X
    NestedLoop   = |L| + |L| * log2(rows(R))   if R is an IndexScan leaf
                 = |L| * |R|                   otherwise

An index scan is only available on a leaf feeding a merge join or the inner
side of a nested loop. Join output cardinality divides ``|L| * |R|`` by
``max(rows(u), rows(v))`` for every query edge crossing the two inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import chain

import numpy as np

from .errors import InvalidArgumentError, InvalidHintError
from .workload import Edge, QuerySpec, SchemaGraph, canonical_edge, validate_query


class JoinType(enum.Enum):
    HASH = "HJ"
    MERGE = "MJ"
    NESTED_LOOP = "NL"


# Fixed order, also the tie-break order for decoding.
JOIN_TYPES = (JoinType.HASH, JoinType.MERGE, JoinType.NESTED_LOOP)


class ScanType(enum.Enum):
    SEQ = "Seq"
    INDEX = "Index"


HintSet = dict  # (left_table, right_table) -> JoinType


@dataclass(frozen=True)
class Scan:
    table: str
    scan_type: ScanType
    rows_out: float
    cost: float
    true_rows: float
    true_cost: float

    @property
    def tables(self) -> frozenset:
        return frozenset([self.table])

    @property
    def sorted_output(self) -> bool:
        return self.scan_type is ScanType.INDEX


@dataclass(frozen=True)
class Join:
    join_type: JoinType
    edge: Edge
    left: "Scan | Join"
    right: "Scan | Join"
    rows_out: float
    cost: float
    true_rows: float
    true_cost: float

    @property
    def tables(self) -> frozenset:
        return self.left.tables | self.right.tables

    @property
    def sorted_output(self) -> bool:
        return self.join_type is JoinType.MERGE


PlanTree = Scan | Join


@dataclass(frozen=True)
class ExecutionSample:
    durations: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(float(d) for d in self.durations))
        if len(self.durations) < 2:
            raise InvalidArgumentError("an execution sample needs at least 2 runs")
        if any(not d > 0 for d in self.durations):
            raise InvalidArgumentError("durations must be positive")

    @property
    def n(self) -> int:
        return len(self.durations)

    @property
    def mean(self) -> float:
        return float(np.mean(self.durations))

    @property
    def std(self) -> float:
        return float(np.std(self.durations, ddof=1))

    def shifted(self, offset: float) -> "ExecutionSample":
        return ExecutionSample(tuple(d + offset for d in self.durations))


# -- cost model ----------------------------------------------------------------

def _log2(x: float) -> float:
    return math.log2(x) if x > 1.0 else 0.0


def scan_cost(rows: int, sel: float, scan_type: ScanType) -> float:
    if scan_type is ScanType.SEQ:
        return float(rows)
    return _log2(rows) + sel * rows


def join_cost(join_type: JoinType, left_rows: float, right_rows: float,
              left_sorted: bool, right_sorted: bool,
              right_index_table_rows: int | None) -> float:
    """Cost of one join node; ``right_index_table_rows`` is set iff the right
    input is an IndexScan leaf."""
    if join_type is JoinType.HASH:
        return 1.2 * right_rows + left_rows
    if join_type is JoinType.MERGE:
        cost = left_rows + right_rows
        if not left_sorted:
            cost += 0.1 * left_rows * _log2(left_rows)
        if not right_sorted:
            cost += 0.1 * right_rows * _log2(right_rows)
        return cost
    if right_index_table_rows is not None:
        return left_rows + left_rows * _log2(right_index_table_rows)
    return left_rows * right_rows


def make_scan(schema: SchemaGraph, query: QuerySpec, table: str,
              scan_type: ScanType = ScanType.SEQ) -> Scan:
    rows = schema.rows(table)
    est, true = query.selectivity(table, True), query.selectivity(table, False)
    return Scan(table, scan_type, rows * est, scan_cost(rows, est, scan_type),
                rows * true, scan_cost(rows, true, scan_type))


def index_allowed(join_type: JoinType, side: str) -> bool:
    return join_type is JoinType.MERGE or (join_type is JoinType.NESTED_LOOP and side == "right")


def make_join(schema: SchemaGraph, query: QuerySpec, join_type: JoinType, edge: Edge,
              left: PlanTree, right: PlanTree) -> Join:
    """Build one join node, checking structural validity."""
    u, v = edge
    if u not in left.tables or v not in right.tables:
        raise InvalidArgumentError(f"edge {u}->{v} does not connect left to right input")
    if left.tables & right.tables:
        raise InvalidArgumentError("join inputs overlap")
    for side, child in (("left", left), ("right", right)):
        if isinstance(child, Scan) and child.scan_type is ScanType.INDEX \
                and not index_allowed(join_type, side):
            raise InvalidArgumentError(f"index scan not available on {side} of {join_type.value}")
    if canonical_edge(u, v) not in query.joins:
        raise InvalidArgumentError(f"{u}-{v} is not a join of {query.id}")
    divisor = 1.0
    for a, b in query.joins:
        if (a in left.tables and b in right.tables) or (b in left.tables and a in right.tables):
            divisor *= max(schema.rows(a), schema.rows(b))
    idx_rows = (schema.rows(right.table)
                if isinstance(right, Scan) and right.scan_type is ScanType.INDEX else None)
    cost = join_cost(join_type, left.rows_out, right.rows_out,
                     left.sorted_output, right.sorted_output, idx_rows)
    true_cost = join_cost(join_type, left.true_rows, right.true_rows,
                          left.sorted_output, right.sorted_output, idx_rows)
    return Join(join_type, (u, v), left, right,
                left.rows_out * right.rows_out / divisor, cost,
                left.true_rows * right.true_rows / divisor, true_cost)


def plan_cost(plan: PlanTree, true: bool = False) -> float:
    """Sum of node costs; estimated selectivities unless ``true``."""
    own = plan.true_cost if true else plan.cost
    if isinstance(plan, Scan):
        return own
    return own + plan_cost(plan.left, true) + plan_cost(plan.right, true)


def iter_joins(plan: PlanTree):
    if isinstance(plan, Join):
        yield plan
        yield from iter_joins(plan.left)
        yield from iter_joins(plan.right)


def plan_leaves(plan: PlanTree) -> list[Scan]:
    if isinstance(plan, Scan):
        return [plan]
    return plan_leaves(plan.left) + plan_leaves(plan.right)


def render_plan(plan: PlanTree, indent: int = 0) -> str:
    pad = "  " * indent
    total = plan_cost(plan)
    if isinstance(plan, Scan):
        return f"{pad}Scan({plan.scan_type.value}, {plan.table}, cost={total:.6f})\n"
    u, v = plan.edge
    head = f"{pad}Join({plan.join_type.value}, {u}⋈{v}, cost={total:.6f})\n"
    return head + render_plan(plan.left, indent + 1) + render_plan(plan.right, indent + 1)


def plan_signature(plan: PlanTree) -> str:
    if isinstance(plan, Scan):
        return f"{plan.scan_type.value}:{plan.table}"
    return (f"{plan.join_type.value}[{plan.edge[0]},{plan.edge[1]}]"
            f"({plan_signature(plan.left)},{plan_signature(plan.right)})")


# -- dynamic programming --------------------------------------------------------

# Property classes kept per subset: leaves by scan type, joins by sortedness.
_SEQ, _IDX, _UNSORTED, _SORTED = range(4)


def check_hints(query: QuerySpec, hints: HintSet) -> None:
    joins = set(query.joins)
    for key, jt in hints.items():
        if not isinstance(key, tuple) or len(key) != 2 or canonical_edge(*key) not in joins:
            raise InvalidHintError(f"hinted pair {key!r} is not a join of {query.id}")
        if not isinstance(jt, JoinType):
            raise InvalidHintError(f"hint for {key!r} is not a JoinType")
    for a, b in query.joins:
        if (a, b) not in hints and (b, a) not in hints:
            raise InvalidHintError(f"no hint covers join {a}-{b} of {query.id}")


class PreparedQuery:
    """Hint-independent DP skeleton for one query: connected subsets, their
    cardinalities and all ordered splits with crossing edges."""

    def __init__(self, schema: SchemaGraph, query: QuerySpec):
        validate_query(schema, query)
        self.schema = schema
        self.query = query
        self.tables = list(query.tables)
        if not self.tables:
            raise InvalidArgumentError(f"{query.id}: query references no tables")
        pos = {t: i for i, t in enumerate(self.tables)}
        n = len(self.tables)
        self.rows = [schema.rows(t) for t in self.tables]
        self.sel_est = [query.selectivity(t, True) for t in self.tables]
        self.sel_true = [query.selectivity(t, False) for t in self.tables]
        self.edges = [(pos[a], pos[b]) for a, b in query.joins]
        full = (1 << n) - 1
        connected = [False] * (full + 1)
        card_est = [0.0] * (full + 1)
        card_true = [0.0] * (full + 1)
        nbr = [0] * n
        for i, j in self.edges:
            nbr[i] |= 1 << j
            nbr[j] |= 1 << i
        for mask in range(1, full + 1):
            low = mask & -mask
            seen, frontier = low, low
            while frontier:
                b = frontier & -frontier
                frontier ^= b
                new = nbr[b.bit_length() - 1] & mask & ~seen
                seen |= new
                frontier |= new
            connected[mask] = seen == mask
            if connected[mask]:
                ce = ct = 1.0
                for i in range(n):
                    if mask >> i & 1:
                        ce *= self.rows[i] * self.sel_est[i]
                        ct *= self.rows[i] * self.sel_true[i]
                for i, j in self.edges:
                    if mask >> i & 1 and mask >> j & 1:
                        d = max(self.rows[i], self.rows[j])
                        ce /= d
                        ct /= d
                card_est[mask], card_true[mask] = ce, ct
        if not connected[full]:
            raise InvalidArgumentError(f"{query.id}: query is disconnected")
        self.full = full
        self.card_est = card_est
        self.card_true = card_true
        self.states = [m for m in range(1, full + 1) if connected[m]]
        # mask -> list of (left, right, [(u, v), ...] crossing edges oriented left->right)
        self.splits: dict[int, list] = {}
        for mask in self.states:
            if mask & (mask - 1) == 0:
                continue
            out = []
            sub = (mask - 1) & mask
            while sub:
                rest = mask ^ sub
                if connected[sub] and connected[rest]:
                    cross = []
                    for i, j in self.edges:
                        if sub >> i & 1 and rest >> j & 1:
                            cross.append((i, j))
                        elif sub >> j & 1 and rest >> i & 1:
                            cross.append((j, i))
                    cross.sort()
                    out.append((sub, rest, cross))
                sub = (sub - 1) & mask
            out.reverse()
            self.splits[mask] = out

    @property
    def n_states(self) -> int:
        return len(self.states)

    def optimize(self, hints: HintSet | None = None) -> PlanTree:
        if hints is not None:
            check_hints(self.query, hints)
            pos = {t: i for i, t in enumerate(self.tables)}
            allowed = {(pos[a], pos[b]): (jt,) for (a, b), jt in hints.items()}
        best: dict[int, dict[int, tuple]] = {}
        for i in range(len(self.tables)):
            m = 1 << i
            rows, sel = self.rows[i], self.sel_est[i]
            best[m] = {
                _SEQ: (scan_cost(rows, sel, ScanType.SEQ), None),
                _IDX: (scan_cost(rows, sel, ScanType.INDEX), None),
            }
        card = self.card_est
        for mask in self.states:
            if mask in best:
                continue
            entries: dict[int, tuple] = {}
            for left, right, cross in self.splits[mask]:
                lrows, rrows = card[left], card[right]
                lbest, rbest = best[left], best[right]
                for u, v in cross:
                    types = JOIN_TYPES if hints is None else allowed.get((u, v), ())
                    for jt in types:
                        out_cls = _SORTED if jt is JoinType.MERGE else _UNSORTED
                        for lcls, (lcost, _) in lbest.items():
                            if lcls == _IDX and jt is not JoinType.MERGE:
                                continue
                            for rcls, (rcost, _) in rbest.items():
                                if rcls == _IDX and jt is JoinType.HASH:
                                    continue
                                idx_rows = self.rows[v] if rcls == _IDX else None
                                c = lcost + rcost + join_cost(
                                    jt, lrows, rrows, lcls in (_IDX, _SORTED),
                                    rcls in (_IDX, _SORTED), idx_rows)
                                cur = entries.get(out_cls)
                                if cur is None or c < cur[0]:
                                    entries[out_cls] = (c, (jt, u, v, left, lcls, right, rcls))
            best[mask] = entries
        final = best[self.full]
        if self.full & (self.full - 1) == 0:
            cls = _SEQ
        else:
            cls = min(final, key=lambda k: (final[k][0], k))
        return self._materialize(best, self.full, cls)

    def _materialize(self, best, mask, cls) -> PlanTree:
        _, back = best[mask][cls]
        if back is None:
            t = self.tables[mask.bit_length() - 1]
            return make_scan(self.schema, self.query, t,
                             ScanType.INDEX if cls == _IDX else ScanType.SEQ)
        jt, u, v, left, lcls, right, rcls = back
        return make_join(self.schema, self.query, jt, (self.tables[u], self.tables[v]),
                         self._materialize(best, left, lcls),
                         self._materialize(best, right, rcls))


def optimize(schema: SchemaGraph, query: QuerySpec, hints: HintSet | None = None) -> PlanTree:
    return PreparedQuery(schema, query).optimize(hints)


def baseline_plan(schema: SchemaGraph, query: QuerySpec) -> PlanTree:
    return optimize(schema, query, None)


def count_dp_states(query: QuerySpec) -> int:
    """Number of connected table subsets the DP enumerates."""
    tables = list(query.tables)
    if not tables:
        return 0
    pos = {t: i for i, t in enumerate(tables)}
    nbr = [0] * len(tables)
    for a, b in query.joins:
        nbr[pos[a]] |= 1 << pos[b]
        nbr[pos[b]] |= 1 << pos[a]
    count = 0
    for mask in range(1, 1 << len(tables)):
        low = mask & -mask
        seen, frontier = low, low
        while frontier:
            b = frontier & -frontier
            frontier ^= b
            new = nbr[b.bit_length() - 1] & mask & ~seen
            seen |= new
            frontier |= new
        count += seen == mask
    return count


def execute(plan: PlanTree, seed: int, n_runs: int = 3, sigma_noise: float = 0.05,
            time_scale: float = 1.0) -> ExecutionSample:
    """Simulated run times in ms: true cost x time_scale x (1 + eps), eps > -0.9."""
    if n_runs < 2:
        raise InvalidArgumentError("n_runs must be >= 2")
    base = plan_cost(plan, true=True) * time_scale
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, sigma_noise, n_runs) if sigma_noise > 0 else np.zeros(n_runs)
    bad = eps <= -0.9
    while bad.any():
        eps[bad] = rng.normal(0.0, sigma_noise, int(bad.sum()))
        bad = eps <= -0.9
    return ExecutionSample(tuple(base * (1.0 + eps)))


@dataclass
class SimulatedEngine:
    """Engine settings bundled with the planning/execution entry points."""

    sigma_noise: float = 0.05
    time_scale: float = 1.0
    c_plan: float = 0.01

    def prepare(self, schema: SchemaGraph, query: QuerySpec) -> PreparedQuery:
        return PreparedQuery(schema, query)

    def optimize(self, schema, query, hints=None) -> PlanTree:
        return optimize(schema, query, hints)

    def baseline_plan(self, schema, query) -> PlanTree:
        return baseline_plan(schema, query)

    def execute(self, plan: PlanTree, seed: int, n_runs: int = 3) -> ExecutionSample:
        return execute(plan, seed, n_runs, self.sigma_noise, self.time_scale)

    def planning_time(self, query: QuerySpec) -> float:
        return self.c_plan * count_dp_states(query)


def candidate_options(query: QuerySpec, hints: HintSet | None, left: frozenset,
                      right: frozenset) -> set:
    """(edge, join type) options when combining ``left`` with ``right``."""
    opts = set()
    for a, b in chain(query.joins, ((b, a) for a, b in query.joins)):
        if a in left and b in right:
            if hints is None:
                opts.update(((a, b), jt) for jt in JOIN_TYPES)
            elif (a, b) in hints:
                opts.add(((a, b), hints[(a, b)]))
    return opts
