"""Small hand-built schemas shared by several test modules."""

from hintgen.engine import JoinType
from hintgen.workload import Column, Filter, QuerySpec, SchemaGraph, Table

HJ, MJ, NL = JoinType.HASH, JoinType.MERGE, JoinType.NESTED_LOOP


def five_table_example():
    """Five tables, edges A-B, B-D, B-E, C-D, D-E; the query joins A-B-D with
    filters on B (estimate 0.2, truth 0.15) and D (estimate 0.2)."""
    cols = (Column("col1", 0.0, 1.0), Column("col2", 0.0, 1.0))
    tables = tuple(Table(n, r, cols) for n, r in
                   (("A", 10_000), ("B", 50_000), ("C", 2_000), ("D", 20_000), ("E", 5_000)))
    schema = SchemaGraph(tables, [("A", "B"), ("B", "D"), ("B", "E"), ("C", "D"), ("D", "E")])
    query = QuerySpec("q01a", "q01", [("A", "B"), ("B", "D")], {
        "B": Filter("B.col2 >= 0.85", 0.15, 0.2),
        "D": Filter("D.col1 <= 0.2", 0.2, 0.2),
    })
    return schema, query


# Integer ranks 1..12 over the query's four directed edges.
EXAMPLE_RANKS = {
    ("A", "B"): (1, 9, 3),
    ("B", "A"): (8, 10, 7),
    ("B", "D"): (2, 5, 6),
    ("D", "B"): (11, 4, 12),
}


def example_ranking():
    out = {}
    for edge, ranks in EXAMPLE_RANKS.items():
        for jt, r in zip((HJ, MJ, NL), ranks):
            out[(edge, jt)] = r
    return out
