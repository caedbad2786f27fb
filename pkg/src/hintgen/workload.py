"""Synthetic schemas and template-style query workloads.

A schema is an undirected, connected graph of tables; a workload groups
queries by base template, every variant sharing its template's join set and
differing only in filter selectivities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ._seeding import rng_for, short_hash
from .errors import InvalidArgumentError, ParseError

Edge = tuple[str, str]

ROWS_RANGE = (1e3, 1e7)
EST_NOISE_SIGMA = 0.15
MIN_SELECTIVITY = 1e-3


def canonical_edge(a: str, b: str) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Column:
    name: str
    low: float
    high: float


@dataclass(frozen=True)
class Table:
    name: str
    rows: int
    columns: tuple[Column, ...]


@dataclass(frozen=True)
class SchemaGraph:
    tables: tuple[Table, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("table names must be unique")
        if any(t.rows < 1 for t in self.tables):
            raise InvalidArgumentError("row counts must be >= 1")
        known = set(names)
        canon = []
        for a, b in self.edges:
            if a == b:
                raise InvalidArgumentError(f"self-loop edge on {a!r}")
            if a not in known or b not in known:
                raise InvalidArgumentError(f"edge {a}-{b} references unknown table")
            canon.append(canonical_edge(a, b))
        object.__setattr__(self, "edges", tuple(sorted(set(canon))))
        if len(self.tables) > 1 and not _is_connected(names, self.edges):
            raise InvalidArgumentError("schema graph must be connected")

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def rows(self, name: str) -> int:
        return self.table(name).rows

    def has_edge(self, a: str, b: str) -> bool:
        return canonical_edge(a, b) in self.edges

    def directed_edges(self) -> list[Edge]:
        """Both orientations per edge, canonical direction first."""
        out = []
        for a, b in self.edges:
            out.extend([(a, b), (b, a)])
        return out

    def fingerprint(self) -> str:
        return short_hash(_serialize_schema(self))


@dataclass(frozen=True)
class Filter:
    predicate: str
    true_selectivity: float
    estimated_selectivity: float


@dataclass(frozen=True)
class QuerySpec:
    id: str
    base_id: str
    joins: tuple[Edge, ...]
    filters: dict[str, Filter] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(
            self, "joins", tuple(sorted({canonical_edge(a, b) for a, b in self.joins}))
        )
        for t, f in self.filters.items():
            for name, v in (("sel", f.true_selectivity), ("est", f.estimated_selectivity)):
                if not 0.0 < v <= 1.0:
                    raise InvalidArgumentError(f"{self.id}: {name} of {t} outside (0,1]")
        if self.joins:
            tabs = set(self.tables)
            stray = set(self.filters) - tabs
            if stray:
                raise InvalidArgumentError(
                    f"{self.id}: filtered tables {sorted(stray)} take part in no join"
                )
            if not _is_connected(sorted(tabs), self.joins):
                raise InvalidArgumentError(f"{self.id}: join graph is disconnected")

    @property
    def tables(self) -> tuple[str, ...]:
        names = {t for e in self.joins for t in e}
        if not names:
            names = set(self.filters)
        return tuple(sorted(names))

    def selectivity(self, table: str, estimated: bool = True) -> float:
        f = self.filters.get(table)
        if f is None:
            return 1.0
        return f.estimated_selectivity if estimated else f.true_selectivity

    def directed_joins(self) -> list[Edge]:
        out = []
        for a, b in self.joins:
            out.extend([(a, b), (b, a)])
        return out


@dataclass
class Workload:
    schema: SchemaGraph
    base_groups: dict[str, list[QuerySpec]]

    def queries(self) -> list[QuerySpec]:
        return [q for group in self.base_groups.values() for q in group]

    def query(self, query_id: str) -> QuerySpec:
        for q in self.queries():
            if q.id == query_id:
                return q
        raise KeyError(query_id)

    def __len__(self):
        return sum(len(g) for g in self.base_groups.values())


def _is_connected(nodes, edges) -> bool:
    nodes = list(nodes)
    if not nodes:
        return True
    adj = {n: set() for n in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(nodes)


def gen_schema(seed: int, n_tables: int, edge_density: float = 0.25,
               n_columns: int = 2) -> SchemaGraph:
    """Random connected schema: a spanning tree plus extra edges by density."""
    if n_tables < 2:
        raise InvalidArgumentError("n_tables must be >= 2")
    if not 0.0 <= edge_density <= 1.0:
        raise InvalidArgumentError("edge_density must be in [0, 1]")
    rng = rng_for(seed, "schema")
    width = max(2, len(str(n_tables - 1)))
    names = [f"t{i:0{width}d}" for i in range(n_tables)]
    lo, hi = (math.log10(v) for v in ROWS_RANGE)
    tables = []
    for name in names:
        rows = int(round(10 ** rng.uniform(lo, hi)))
        cols = tuple(
            Column(f"c{k}", 0.0, float(rng.integers(1, 1001))) for k in range(n_columns)
        )
        tables.append(Table(name, rows, cols))

    order = rng.permutation(n_tables)
    edges = set()
    for i in range(1, n_tables):
        parent = order[rng.integers(i)]
        edges.add(canonical_edge(names[order[i]], names[parent]))
    for i in range(n_tables):
        for j in range(i + 1, n_tables):
            e = (names[i], names[j])
            if e not in edges and rng.random() < edge_density:
                edges.add(e)
    return SchemaGraph(tuple(tables), tuple(sorted(edges)))


def describe_predicate(schema: SchemaGraph, table: str, selectivity: float) -> str:
    col = schema.table(table).columns[0]
    threshold = col.low + selectivity * (col.high - col.low)
    return f"{table}.{col.name} <= {threshold:.6f}"


def _estimate(seed: int, table: str, predicate: str, true_sel: float) -> float:
    eta = rng_for(seed, "estimate", table, predicate).normal(0.0, EST_NOISE_SIGMA)
    est = min(1.0, true_sel * math.exp(eta))
    return max(round(est, 6), 1e-6)


def _letters(k: int) -> str:
    s = ""
    k += 1
    while k:
        k, r = divmod(k - 1, 26)
        s = chr(ord("a") + r) + s
    return s


def gen_workload(schema: SchemaGraph, seed: int, n_base: int, n_variants: int,
                 max_joins: int, filter_prob: float = 0.5) -> Workload:
    if n_base < 1 or n_variants < 1:
        raise InvalidArgumentError("n_base and n_variants must be >= 1")
    if not 1 <= max_joins <= len(schema.edges):
        raise InvalidArgumentError(
            f"max_joins={max_joins} impossible for a schema with {len(schema.edges)} edges"
        )
    names = [t.name for t in schema.tables]
    width = max(2, len(str(n_base)))
    groups: dict[str, list[QuerySpec]] = {}
    for b in range(n_base):
        base_id = f"q{b + 1:0{width}d}"
        rng = rng_for(seed, "base", base_id)
        joins = _grow_joins(schema, rng, names, int(rng.integers(1, max_joins + 1)))
        tabs = sorted({t for e in joins for t in e})
        filtered = [t for t in tabs if rng.random() < filter_prob]
        if not filtered:
            filtered = [tabs[int(rng.integers(len(tabs)))]]
        variants = []
        for v in range(n_variants):
            filters = {}
            for t in filtered:
                sel = round(10 ** rng.uniform(math.log10(MIN_SELECTIVITY), 0.0), 6)
                pred = describe_predicate(schema, t, sel)
                filters[t] = Filter(pred, sel, _estimate(seed, t, pred, sel))
            variants.append(QuerySpec(base_id + _letters(v), base_id, tuple(joins), filters))
        groups[base_id] = variants
    return Workload(schema, groups)


def _grow_joins(schema, rng, names, k):
    start = names[int(rng.integers(len(names)))]
    inside = {start}
    joins: list[Edge] = []
    while len(joins) < k:
        frontier = [e for e in schema.edges
                    if e not in joins and (e[0] in inside or e[1] in inside)]
        if not frontier:
            break
        e = frontier[int(rng.integers(len(frontier)))]
        joins.append(e)
        inside.update(e)
    return sorted(joins)


# -- text format -------------------------------------------------------------

def _serialize_schema(schema: SchemaGraph) -> str:
    lines = ["[schema]", f"tables={len(schema.tables)}"]
    for t in schema.tables:
        lines.append(f"[table {t.name}]")
        lines.append(f"rows={t.rows}")
        for c in t.columns:
            lines.append(f"column {c.name} {c.low:.6f} {c.high:.6f}")
    for a, b in schema.edges:
        lines.append(f"[edge {a} {b}]")
    return "\n".join(lines) + "\n"


def serialize_workload(w: Workload, header: str | None = None) -> str:
    out = []
    if header:
        out.append(f"# {header}\n")
    out.append(_serialize_schema(w.schema))
    for q in w.queries():
        out.append(f"[query {q.id} base={q.base_id}]\n")
        for a, b in q.joins:
            out.append(f"join {a} {b}\n")
        for t in sorted(q.filters):
            f = q.filters[t]
            out.append(
                f"filter {t} sel={f.true_selectivity:.6f} est={f.estimated_selectivity:.6f}\n"
            )
    return "".join(out)


def parse_workload(text: str) -> Workload:
    tables: list[dict] = []
    edges: list[Edge] = []
    queries: list[dict] = []
    section = None
    seen_schema = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"unterminated section header {line!r}", lineno)
            parts = line[1:-1].split()
            kind = parts[0] if parts else ""
            if kind == "schema" and len(parts) == 1:
                seen_schema = True
                section = ("schema", None)
            elif kind == "table" and len(parts) == 2:
                tables.append({"name": parts[1], "rows": None, "columns": [], "line": lineno})
                section = ("table", tables[-1])
            elif kind == "edge" and len(parts) == 3:
                edges.append((parts[1], parts[2]))
                section = ("edge", None)
            elif kind == "query" and len(parts) == 3 and parts[2].startswith("base="):
                queries.append({"id": parts[1], "base": parts[2][5:], "joins": [],
                                "filters": {}, "line": lineno})
                section = ("query", queries[-1])
            else:
                raise ParseError(f"unknown section {line!r}", lineno)
            continue
        if section is None:
            raise ParseError("content before any section", lineno)
        kind, obj = section
        tok = line.split()
        if kind == "schema":
            if not tok[0].startswith("tables="):
                raise ParseError(f"unexpected schema line {line!r}", lineno)
        elif kind == "table":
            if tok[0].startswith("rows="):
                obj["rows"] = _parse_int(tok[0][5:], "rows", lineno)
            elif tok[0] == "column" and len(tok) == 4:
                obj["columns"].append(Column(tok[1], _parse_float(tok[2], "low", lineno),
                                             _parse_float(tok[3], "high", lineno)))
            else:
                raise ParseError(f"unexpected table line {line!r}", lineno)
        elif kind == "query":
            if tok[0] == "join" and len(tok) == 3:
                obj["joins"].append((tok[1], tok[2]))
            elif tok[0] == "filter" and len(tok) >= 2:
                kv = dict(p.split("=", 1) for p in tok[2:] if "=" in p)
                for key in ("sel", "est"):
                    if key not in kv:
                        raise ParseError(f"filter on {tok[1]} missing field '{key}'", lineno)
                obj["filters"][tok[1]] = (_parse_float(kv["sel"], "sel", lineno),
                                          _parse_float(kv["est"], "est", lineno), lineno)
            else:
                raise ParseError(f"unexpected query line {line!r}", lineno)
        else:
            raise ParseError(f"unexpected content in {kind} section", lineno)

    if not seen_schema:
        raise ParseError("missing [schema] section", 1 if text.strip() else None)
    for t in tables:
        if t["rows"] is None:
            raise ParseError(f"table {t['name']} missing field 'rows'", t["line"])
    try:
        schema = SchemaGraph(
            tuple(Table(t["name"], t["rows"], tuple(t["columns"])) for t in tables),
            tuple(edges),
        )
    except InvalidArgumentError as exc:
        raise ParseError(str(exc)) from exc

    groups: dict[str, list[QuerySpec]] = {}
    for q in queries:
        try:
            filters = {}
            for t, (sel, est, ln) in q["filters"].items():
                if not schema_has(schema, t):
                    raise ParseError(f"filter on unknown table {t!r}", ln)
                filters[t] = Filter(describe_predicate(schema, t, sel), sel, est)
            for a, b in q["joins"]:
                if not schema.has_edge(a, b):
                    raise ParseError(f"join {a}-{b} is not a schema edge", q["line"])
            spec = QuerySpec(q["id"], q["base"], tuple(q["joins"]), filters)
        except InvalidArgumentError as exc:
            raise ParseError(str(exc), q["line"]) from exc
        groups.setdefault(q["base"], []).append(spec)
    return Workload(schema, groups)


def schema_has(schema: SchemaGraph, name: str) -> bool:
    return any(t.name == name for t in schema.tables)


def _parse_float(s, name, lineno):
    try:
        return float(s)
    except ValueError:
        raise ParseError(f"field '{name}' is not a number: {s!r}", lineno) from None


def _parse_int(s, name, lineno):
    try:
        return int(s)
    except ValueError:
        raise ParseError(f"field '{name}' is not an integer: {s!r}", lineno) from None


def validate_query(schema: SchemaGraph, query: QuerySpec) -> None:
    for a, b in query.joins:
        if not schema.has_edge(a, b):
            raise InvalidArgumentError(f"{query.id}: join {a}-{b} is not a schema edge")
    for t in query.tables:
        if not schema_has(schema, t):
            raise InvalidArgumentError(f"{query.id}: unknown table {t!r}")


__all__ = [
    "Column", "Table", "SchemaGraph", "Filter", "QuerySpec", "Workload",
    "canonical_edge", "gen_schema", "gen_workload", "describe_predicate",
    "serialize_workload", "parse_workload", "validate_query",
]
