from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hintgen.encoding import (
    build_condition, condition_length, decode_hints, emit_pg_hints, encode_hint_ranks,
    encode_query, flatten, format_vector, hintset_to_ranking, parse_vector, participation_mask,
    plan_encoding_length, query_encoding_length, random_hintset, unflatten,
)
from hintgen.engine import JOIN_TYPES
from hintgen.errors import InvalidArgumentError, ParseError

from fixtures import HJ, MJ, NL, example_ranking, five_table_example
from oracles import small_queries

GOLDEN = Path(__file__).parent / "golden"


def test_lengths():
    schema, _ = five_table_example()
    assert query_encoding_length(schema) == 15
    assert plan_encoding_length(schema) == 30
    assert condition_length(schema) == 17


def test_query_encoding_cells():
    schema, q = five_table_example()
    enc = encode_query(schema, q)
    cells = enc.reshape(-1, 3)
    # canonical edge order: A-B, B-D, B-E, C-D, D-E
    assert tuple(cells[0]) == (1.0, 1.0, 0.2)
    assert tuple(cells[1]) == (1.0, 0.2, 0.2)
    for k in (2, 3, 4):
        assert tuple(cells[k]) == (0.0, 1.0, 1.0)


def test_encoding_uses_estimates_not_truth():
    schema, q = five_table_example()
    assert 0.15 not in encode_query(schema, q)


def test_rank_encoding_and_decoding():
    schema, q = five_table_example()
    enc = encode_hint_ranks(schema, q, example_ranking())
    # directed layout: (A,B), (B,A), (B,D), (D,B), ...
    assert enc[0:3] == pytest.approx(np.array([1, 9, 3]) / 12)
    assert enc[9:12] == pytest.approx(np.array([11, 4, 12]) / 12)
    assert not enc[12:].any()
    hints = decode_hints(enc, schema, q)
    assert hints == {("A", "B"): HJ, ("B", "A"): NL, ("B", "D"): HJ, ("D", "B"): MJ}


def test_emission_matches_golden():
    schema, q = five_table_example()
    enc = encode_hint_ranks(schema, q, example_ranking())
    hints = decode_hints(enc, schema, q)
    text = emit_pg_hints(hints, q, enc, schema)
    assert text + "\n" == (GOLDEN / "example_hints.txt").read_text()


def test_emission_direction_follows_better_cell():
    schema, q = five_table_example()
    ranking = example_ranking()
    # make B->A the stronger direction: its best rank becomes 1
    ranking[(("A", "B"), HJ)], ranking[(("B", "A"), NL)] = 7, 1
    enc = encode_hint_ranks(schema, q, ranking)
    text = emit_pg_hints(decode_hints(enc, schema, q), q, enc, schema)
    assert text == "/*+ NestLoop(B A) HashJoin(B D) */"


def test_emission_empty_query():
    schema, _ = five_table_example()
    from hintgen.workload import Filter, QuerySpec
    q = QuerySpec("q09a", "q09", [], {"A": Filter("A.col1 <= 0.5", 0.5, 0.5)})
    assert emit_pg_hints({}, q) == "/*+ */"


def test_decode_tie_break_order():
    schema, q = five_table_example()
    enc = np.zeros(plan_encoding_length(schema))
    enc[3:6] = (0.5, 0.5, 0.1)
    enc[6:9] = (0.4, 0.2, 0.2)
    hints = decode_hints(enc, schema, q)
    assert hints[("A", "B")] is HJ
    assert hints[("B", "A")] is NL
    assert hints[("B", "D")] is MJ


def test_rank_validation():
    schema, q = five_table_example()
    bad = example_ranking()
    bad[(("A", "B"), HJ)] = 9
    with pytest.raises(InvalidArgumentError):
        encode_hint_ranks(schema, q, bad)
    short = dict(list(example_ranking().items())[:-1])
    with pytest.raises(InvalidArgumentError):
        encode_hint_ranks(schema, q, short)
    with pytest.raises(InvalidArgumentError):
        decode_hints(np.zeros(7), schema, q)


def test_random_hintset_frequencies():
    schema, q = five_table_example()
    counts = {jt: 0 for jt in JOIN_TYPES}
    n = 10_000
    for s in range(n):
        for jt in random_hintset(q, s).values():
            counts[jt] += 1
    total = sum(counts.values())
    assert total == 4 * n
    for c in counts.values():
        assert abs(c / total - 1 / 3) < 0.02


def test_random_hintset_covers_both_directions():
    _, q = five_table_example()
    h = random_hintset(q, 3)
    assert set(h) == {("A", "B"), ("B", "A"), ("B", "D"), ("D", "B")}
    assert random_hintset(q, 3) == h


QUERIES = small_queries(30, seed=5, n_tables=6, max_joins=5)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, len(QUERIES) - 1), st.integers(0, 2**32 - 1))
def test_ranking_round_trip(k, seed):
    schema, q = QUERIES[k]
    hints = random_hintset(q, seed)
    enc = hintset_to_ranking(hints, schema, q, seed)
    assert decode_hints(enc, schema, q) == hints
    n = 6 * len(q.joins)
    vals = np.sort(enc[enc > 0])
    assert np.allclose(vals, np.arange(1, n + 1) / n)
    mask = participation_mask(encode_query(schema, q))
    assert not enc[mask == 0].any()


def test_condition_round_trip_and_bounds():
    schema, q = five_table_example()
    c = build_condition(encode_query(schema, q), 0.01, 0.3)
    assert unflatten(flatten(c)) == c
    assert len(flatten(c)) == condition_length(schema)
    with pytest.raises(InvalidArgumentError):
        build_condition(encode_query(schema, q), 1.5, 0.0)


def test_vector_text_format():
    v = np.array([0.25, 1.0, 1 / 3])
    text = format_vector(v)
    assert text == "0.250000,1.000000,0.333333"
    assert np.allclose(parse_vector(text), [0.25, 1.0, 0.333333])
    with pytest.raises(ParseError):
        parse_vector("1,x")
