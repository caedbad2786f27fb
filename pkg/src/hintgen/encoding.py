"""Fixed-layout query and plan encodings, hint decoding and hint emission.

Both encodings are built from 3-sized cells laid out in canonical edge order
(lexicographic table pairs). The query encoding has one cell per schema edge
``(participates, est_sel_left, est_sel_right)``; the plan encoding has one
cell per *directed* edge, canonical direction first, holding normalized ranks
for (hash, merge, nested loop). Lower rank means preferred.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .engine import JOIN_TYPES, HintSet, JoinType
from .errors import InvalidArgumentError, ParseError
from .workload import QuerySpec, SchemaGraph

PG_HINT_NAMES = {
    JoinType.HASH: "HashJoin",
    JoinType.MERGE: "MergeJoin",
    JoinType.NESTED_LOOP: "NestLoop",
}


def query_encoding_length(schema: SchemaGraph) -> int:
    return 3 * len(schema.edges)


def plan_encoding_length(schema: SchemaGraph) -> int:
    return 6 * len(schema.edges)


def condition_length(schema: SchemaGraph) -> int:
    return query_encoding_length(schema) + 2


def _cell_index(schema: SchemaGraph) -> dict[tuple[str, str], int]:
    """Directed edge -> index of its cell in the plan encoding."""
    return {e: k for k, e in enumerate(schema.directed_edges())}


def encode_query(schema: SchemaGraph, query: QuerySpec) -> np.ndarray:
    enc = np.tile(np.array([0.0, 1.0, 1.0]), len(schema.edges))
    joins = set(query.joins)
    for k, (a, b) in enumerate(schema.edges):
        if (a, b) in joins:
            enc[3 * k: 3 * k + 3] = (1.0, query.selectivity(a), query.selectivity(b))
    return enc


def participation_mask(query_encoding: np.ndarray) -> np.ndarray:
    """Plan-encoding-shaped 0/1 mask derived from a query encoding.

    Works on a single vector or a batch (rows).
    """
    qe = np.asarray(query_encoding)
    flags = qe[..., 0::3]
    return np.repeat(flags, 6, axis=-1)


def encode_hint_ranks(schema: SchemaGraph, query: QuerySpec,
                      ranking: Mapping[tuple[tuple[str, str], JoinType], int]) -> np.ndarray:
    """Normalize integer ranks of all participating (directed edge, join type)
    entries into a plan encoding. ``ranking`` must be a bijection onto
    ``1..6*E_p``."""
    n = 6 * len(query.joins)
    expected = {(e, jt) for e in query.directed_joins() for jt in JOIN_TYPES}
    if set(ranking) != expected:
        raise InvalidArgumentError("ranking must cover exactly the participating entries")
    if sorted(ranking.values()) != list(range(1, n + 1)):
        raise InvalidArgumentError(f"ranks must be a permutation of 1..{n}")
    cells = _cell_index(schema)
    enc = np.zeros(plan_encoding_length(schema))
    for (edge, jt), r in ranking.items():
        enc[3 * cells[edge] + JOIN_TYPES.index(jt)] = r / n
    return enc


def decode_hints(enc: np.ndarray, schema: SchemaGraph, query: QuerySpec) -> HintSet:
    """Per participating directed edge, the join type with the smallest score."""
    enc = np.asarray(enc, dtype=float)
    if enc.shape != (plan_encoding_length(schema),):
        raise InvalidArgumentError(
            f"plan encoding has shape {enc.shape}, expected ({plan_encoding_length(schema)},)"
        )
    cells = _cell_index(schema)
    hints = {}
    for edge in query.directed_joins():
        k = cells[edge]
        # argmin returns the first minimum, i.e. ties go HJ < MJ < NL
        hints[edge] = JOIN_TYPES[int(np.argmin(enc[3 * k: 3 * k + 3]))]
    return hints


def random_hintset(query: QuerySpec, seed: int) -> HintSet:
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, 3, size=2 * len(query.joins))
    return {e: JOIN_TYPES[int(d)] for e, d in zip(query.directed_joins(), draws)}


def hintset_to_ranking(hints: HintSet, schema: SchemaGraph, query: QuerySpec,
                       seed: int) -> np.ndarray:
    """A random full ranking in which every hinted type is its cell's best."""
    directed = query.directed_joins()
    missing = [e for e in directed if e not in hints]
    if missing:
        raise InvalidArgumentError(f"hint set does not cover {missing}")
    n = 6 * len(query.joins)
    ranks = np.random.default_rng(seed).permutation(n) + 1
    ranking = {}
    for d, edge in enumerate(directed):
        cell = ranks[3 * d: 3 * d + 3].copy()
        h = JOIN_TYPES.index(hints[edge])
        m = int(np.argmin(cell))
        cell[h], cell[m] = cell[m], cell[h]
        for t, jt in enumerate(JOIN_TYPES):
            ranking[(edge, jt)] = int(cell[t])
    return encode_hint_ranks(schema, query, ranking)


def emit_pg_hints(hints: HintSet, query: QuerySpec, scores: np.ndarray | None = None,
                  schema: SchemaGraph | None = None) -> str:
    """``/*+ ... */`` block with one join-method token per participating edge.

    With ``scores`` (a plan encoding over ``schema``) the emitted direction is
    the one whose cell holds the smaller best score, ties to the canonical
    direction; without scores the canonical direction is used when hinted.
    """
    cells = _cell_index(schema) if scores is not None else None
    tokens = []
    for a, b in query.joins:
        if scores is not None:
            fwd = scores[3 * cells[(a, b)]: 3 * cells[(a, b)] + 3].min()
            rev = scores[3 * cells[(b, a)]: 3 * cells[(b, a)] + 3].min()
            edge = (b, a) if rev < fwd else (a, b)
        else:
            edge = (a, b) if (a, b) in hints else (b, a)
        tokens.append(f"{PG_HINT_NAMES[hints[edge]]}({edge[0]} {edge[1]})")
    if not tokens:
        return "/*+ */"
    return "/*+ " + " ".join(tokens) + " */"


@dataclass(frozen=True)
class Condition:
    query_encoding: np.ndarray
    i_in: float
    i_pg: float

    def __eq__(self, other):
        return (isinstance(other, Condition)
                and np.array_equal(self.query_encoding, other.query_encoding)
                and self.i_in == other.i_in and self.i_pg == other.i_pg)

    __hash__ = None


def build_condition(query_encoding: np.ndarray, i_in: float, i_pg: float) -> Condition:
    for name, p in (("i_in", i_in), ("i_pg", i_pg)):
        if not 0.0 <= p <= 1.0:
            raise InvalidArgumentError(f"{name}={p} is not a p-value in [0, 1]")
    return Condition(np.asarray(query_encoding, dtype=float), float(i_in), float(i_pg))


def flatten(cond: Condition) -> np.ndarray:
    return np.concatenate([cond.query_encoding, [cond.i_in, cond.i_pg]])


def unflatten(vec: np.ndarray) -> Condition:
    vec = np.asarray(vec, dtype=float)
    if (len(vec) - 2) % 3:
        raise InvalidArgumentError("condition vector length must be 3*E + 2")
    return build_condition(vec[:-2], vec[-2], vec[-1])


def format_vector(vec) -> str:
    return ",".join(f"{x:.6f}" for x in np.asarray(vec, dtype=float))


def parse_vector(text: str) -> np.ndarray:
    if not text:
        return np.zeros(0)
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ParseError(f"bad numeric list: {exc}") from None


__all__ = [
    "encode_query", "encode_hint_ranks", "decode_hints", "random_hintset",
    "hintset_to_ranking", "emit_pg_hints", "Condition", "build_condition",
    "flatten", "unflatten", "participation_mask", "format_vector", "parse_vector",
    "query_encoding_length", "plan_encoding_length", "condition_length",
]
