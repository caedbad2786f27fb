"""Training pairs from random hint sets, filtered by a one-tailed Welch test.

For each training query a batch of random hint sets is planned and executed;
every ordered pair (slower i, faster j) whose p-value clears ``alpha``
becomes one example ``<(H_i, condition), H_j>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_seed
from .encoding import (
    build_condition, encode_query, flatten, format_vector, hintset_to_ranking,
    parse_vector, random_hintset,
)
from .engine import ExecutionSample, HintSet, PlanTree, PreparedQuery, SimulatedEngine
from .errors import InvalidArgumentError, ParseError
from .stats import sample_variance, welch_p_matrix, welch_t
from .workload import QuerySpec, SchemaGraph

DEFAULT_ALPHA = 0.025
PAIRS_MAGIC = "hintgen-pairs v1"


@dataclass(frozen=True)
class CandidateRun:
    query_id: str
    index: int
    hints: HintSet = field(hash=False)
    plan: PlanTree = field(hash=False)
    sample: ExecutionSample = field(hash=False)


@dataclass(frozen=True)
class QueryCandidates:
    query_id: str
    runs: list
    baseline_plan: PlanTree
    baseline: ExecutionSample


def gen_candidates(schema: SchemaGraph, query: QuerySpec, n: int = 200, seed: int = 0,
                   engine: SimulatedEngine | None = None, n_runs: int = 3) -> QueryCandidates:
    if n < 2:
        raise InvalidArgumentError("need at least 2 candidates")
    engine = engine or SimulatedEngine()
    prepared = PreparedQuery(schema, query)
    runs = []
    for i in range(n):
        hints = random_hintset(query, derive_seed(seed, query.id, "hints", i))
        plan = prepared.optimize(hints)
        sample = engine.execute(plan, derive_seed(seed, query.id, "exec", i), n_runs)
        runs.append(CandidateRun(query.id, i, hints, plan, sample))
    base_plan = prepared.optimize(None)
    baseline = engine.execute(base_plan, derive_seed(seed, query.id, "baseline"), n_runs)
    return QueryCandidates(query.id, runs, base_plan, baseline)


def _hint_key(hints: HintSet):
    return tuple(sorted((e, jt.value) for e, jt in hints.items()))


def dedup_candidates(runs):
    seen = set()
    out = []
    for r in runs:
        key = _hint_key(r.hints)
        if key not in seen:
            seen.add(key)
            out.append(r)
    return out


@dataclass
class TrainingPair:
    query_id: str
    i: int
    j: int
    p_in: float
    p_pg: float
    mean_in: float
    mean_out: float
    input_encoding: np.ndarray
    target_encoding: np.ndarray
    condition: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, TrainingPair):
            return NotImplemented
        return ((self.query_id, self.i, self.j, self.p_in, self.p_pg, self.mean_in, self.mean_out)
                == (other.query_id, other.i, other.j, other.p_in, other.p_pg,
                    other.mean_in, other.mean_out)
                and np.array_equal(self.input_encoding, other.input_encoding)
                and np.array_equal(self.target_encoding, other.target_encoding)
                and np.array_equal(self.condition, other.condition))


def build_pairs(candidates, baseline: ExecutionSample, schema: SchemaGraph, query: QuerySpec,
                alpha: float = DEFAULT_ALPHA, seed: int = 0) -> list[TrainingPair]:
    runs = dedup_candidates(candidates)
    if len(runs) < 2:
        return []
    means = np.array([r.sample.mean for r in runs])
    variances = np.array([sample_variance(r.sample.durations) for r in runs])
    counts = np.array([r.sample.n for r in runs], dtype=float)
    pmat = welch_p_matrix(means, variances, counts)
    qe = encode_query(schema, query)
    p_pg = [welch_t(baseline, r.sample).p_one_tailed for r in runs]
    enc_cache: dict[int, np.ndarray] = {}

    def ranking(k):
        if k not in enc_cache:
            r = runs[k]
            enc = hintset_to_ranking(r.hints, schema, query,
                                     derive_seed(seed, query.id, "ranking", r.index))
            enc_cache[k] = np.round(enc, 6)
        return enc_cache[k]

    pairs = []
    for a in range(len(runs)):
        for b in range(len(runs)):
            if not (means[a] > means[b] and pmat[a, b] <= alpha):
                continue
            p_in, pg = round(float(pmat[a, b]), 6), round(float(p_pg[b]), 6)
            cond = flatten(build_condition(qe, p_in, pg))
            pairs.append(TrainingPair(
                query.id, runs[a].index, runs[b].index, p_in, pg,
                round(float(means[a]), 6), round(float(means[b]), 6),
                ranking(a), ranking(b), np.round(cond, 6),
            ))
    return pairs


def subsample_pairs(pairs, ratio: float, seed: int) -> list[TrainingPair]:
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentError("ratio must be in (0, 1]")
    pairs = list(pairs)
    k = math.ceil(round(ratio * len(pairs), 9))
    idx = np.sort(np.random.default_rng(seed).choice(len(pairs), size=k, replace=False))
    return [pairs[i] for i in idx]


def collect_candidates(schema: SchemaGraph, queries, n: int = 200, seed: int = 0,
                       engine: SimulatedEngine | None = None, n_runs: int = 3) -> dict:
    """query id -> QueryCandidates, seeded per query so folds can share them."""
    return {q.id: gen_candidates(schema, q, n, seed, engine, n_runs) for q in queries}


def pairs_for_queries(schema: SchemaGraph, queries, candidates: dict, alpha: float = DEFAULT_ALPHA,
                      seed: int = 0, ratio: float = 1.0) -> list[TrainingPair]:
    pairs = []
    for q in queries:
        qc = candidates[q.id]
        pairs.extend(build_pairs(qc.runs, qc.baseline, schema, q, alpha, seed))
    if ratio < 1.0 and pairs:
        pairs = subsample_pairs(pairs, ratio, derive_seed(seed, "subsample"))
    return pairs


# -- pair file -----------------------------------------------------------------

class PairFileError(ParseError):
    pass


def format_pairs(pairs, schema_hash: str, meta: dict | None = None) -> str:
    head = [PAIRS_MAGIC, f"schema={schema_hash}", f"count={len(pairs)}"]
    for k, v in (meta or {}).items():
        head.append(f"{k}={v}")
    lines = ["# " + " ".join(head)]
    for p in pairs:
        lines.append("|".join([
            p.query_id, str(p.i), str(p.j), f"{p.p_in:.6f}", f"{p.p_pg:.6f}",
            f"{p.mean_in:.6f}", f"{p.mean_out:.6f}", format_vector(p.input_encoding),
            format_vector(p.target_encoding), format_vector(p.condition),
        ]))
    return "\n".join(lines) + "\n"


def read_pairs_header(text: str) -> dict:
    first = text.split("\n", 1)[0]
    if not first.startswith("# " + PAIRS_MAGIC):
        raise PairFileError("missing pair-file header", 1)
    meta = {}
    for tok in first[len("# " + PAIRS_MAGIC):].split():
        if "=" not in tok:
            raise PairFileError(f"bad header token {tok!r}", 1)
        k, v = tok.split("=", 1)
        meta[k] = v
    if "schema" not in meta or "count" not in meta:
        raise PairFileError("header lacks schema or count", 1)
    return meta


def parse_pairs(text: str, schema_hash: str | None = None,
                alpha: float = DEFAULT_ALPHA) -> list[TrainingPair]:
    meta = read_pairs_header(text)
    if schema_hash is not None and meta["schema"] != schema_hash:
        raise PairFileError(f"pairs were built for schema {meta['schema']}, not {schema_hash}")
    expected = int(meta["count"])
    body = [ln for ln in text.split("\n")[1:] if ln.strip()]
    pairs = []
    for k, line in enumerate(body):
        where = f"record {k}"
        f = line.split("|")
        if len(f) != 10:
            raise PairFileError(f"{where}: expected 10 fields, got {len(f)}", k + 2)
        try:
            pair = TrainingPair(
                f[0], int(f[1]), int(f[2]), float(f[3]), float(f[4]), float(f[5]), float(f[6]),
                parse_vector(f[7]), parse_vector(f[8]), parse_vector(f[9]),
            )
        except (ValueError, ParseError) as exc:
            raise PairFileError(f"{where}: {exc}", k + 2) from None
        if not (pair.mean_in > pair.mean_out and pair.p_in <= alpha):
            raise PairFileError(f"{where}: violates mean_in > mean_out and p_in <= {alpha}", k + 2)
        if (len(pair.input_encoding) != len(pair.target_encoding)
                or len(pair.condition) < 2
                or pair.condition[-2] != pair.p_in or pair.condition[-1] != pair.p_pg):
            raise PairFileError(f"{where}: inconsistent encodings", k + 2)
        pairs.append(pair)
    if len(pairs) != expected:
        raise PairFileError(f"record {len(pairs)}: file truncated, header promises "
                            f"{expected} records but {len(pairs)} found")
    return pairs


def persist_pairs(pairs, path, schema_hash: str, meta: dict | None = None) -> None:
    Path(path).write_text(format_pairs(pairs, schema_hash, meta), encoding="utf-8")


def load_pairs(path, schema_hash: str | None = None) -> list[TrainingPair]:
    return parse_pairs(Path(path).read_text(encoding="utf-8"), schema_hash)
