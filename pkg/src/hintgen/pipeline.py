"""Inference: turn a random input hint set into an improved one for a query."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derive_seed
from .encoding import (
    build_condition, decode_hints, emit_pg_hints, encode_query, flatten, hintset_to_ranking,
    random_hintset,
)
from .engine import (
    ExecutionSample, HintSet, PlanTree, PreparedQuery, SimulatedEngine, plan_cost,
)
from .errors import IncompatibleModelError, InvalidArgumentError
from .genmodel import TrainState, decode, encode, reparameterize
from .workload import QuerySpec, SchemaGraph

# Simulated inference cost used in deterministic mode, where wall time would
# break byte-identical reports: one EXPLAIN per table plus one model pass.
EXPLAIN_MS = 0.5
MODEL_PASS_MS = 0.2


@dataclass
class OptimizationResult:
    query_id: str
    hint_set: HintSet
    emitted_hints: str
    inference_time: float
    iterations: int
    plan: PlanTree
    input_hints: HintSet
    scores: np.ndarray
    trace: list = field(default_factory=list)  # (hints, estimated plan cost) per iteration
    sampled: bool = False


@dataclass(frozen=True)
class EndToEnd:
    inference_ms: float
    planning_ms: float
    execution: ExecutionSample

    @property
    def total_ms(self) -> float:
        return self.inference_ms + self.planning_ms + self.execution.mean

    def sample(self, include_inference: bool = True) -> ExecutionSample:
        offset = self.planning_ms + (self.inference_ms if include_inference else 0.0)
        return self.execution.shifted(offset)


class HintOptimizer:
    """Query-time driver around a trained model and the simulated engine."""

    def __init__(self, schema: SchemaGraph, state: TrainState,
                 engine: SimulatedEngine | None = None, deterministic: bool = True):
        expected = state.meta.get("schema_hash")
        if expected is not None and expected != schema.fingerprint():
            raise IncompatibleModelError(
                f"model was trained for schema {expected}, not {schema.fingerprint()}"
            )
        plan_dim = 6 * len(schema.edges)
        dims = state.params.dims
        if dims.plan_dim != plan_dim or dims.cond_dim != plan_dim // 2 + 2:
            raise IncompatibleModelError("model dimensions do not match the schema")
        self.schema = schema
        self.state = state
        self.engine = engine or SimulatedEngine()
        self.deterministic = deterministic
        self.query_encoding_calls = 0

    def encode_query(self, query: QuerySpec) -> np.ndarray:
        self.query_encoding_calls += 1
        return encode_query(self.schema, query)

    def _step(self, query, qe, hints_in, seed, k):
        """One model pass from an input hint set; returns (hints, scores)."""
        x_in = hintset_to_ranking(hints_in, self.schema, query,
                                  derive_seed(seed, query.id, "input-ranking", k))
        cond = build_condition(qe, 0.0, 0.0)
        assert cond.i_in == 0.0 and cond.i_pg == 0.0
        cvec = flatten(cond)
        params = self.state.params
        mu, logvar = encode(params, np.concatenate([x_in, cvec]))
        if self.deterministic:
            eps = np.zeros_like(mu)
        else:
            eps = np.random.default_rng(derive_seed(seed, query.id, "eps", k)).standard_normal(
                mu.shape)
        scores = decode(params, reparameterize(mu, logvar, eps), cvec)
        return decode_hints(scores, self.schema, query), scores

    def chain_optimize(self, query: QuerySpec, n_iter: int = 1, seed: int = 0) -> OptimizationResult:
        if n_iter < 1:
            raise InvalidArgumentError("n_iter must be >= 1")
        t0 = time.perf_counter()
        qe = self.encode_query(query)
        hints_in = random_hintset(query, derive_seed(seed, query.id, "h_in"))
        hints, scores = hints_in, None
        passes = []
        for k in range(n_iter):
            hints, scores = self._step(query, qe, hints, seed, k)
            passes.append(hints)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        if self.deterministic:
            inference_ms = EXPLAIN_MS * len(query.tables) + MODEL_PASS_MS * n_iter
        else:
            inference_ms = wall_ms
        prepared = PreparedQuery(self.schema, query)
        trace = []
        plan = None
        for h in passes:
            plan = prepared.optimize(h)
            trace.append((h, plan_cost(plan, true=True)))
        emitted = emit_pg_hints(hints, query, scores, self.schema)
        return OptimizationResult(query.id, hints, emitted, inference_ms, n_iter, plan,
                                  hints_in, scores, trace, not self.deterministic)

    def optimize_query(self, query: QuerySpec, seed: int = 0) -> OptimizationResult:
        return self.chain_optimize(query, 1, seed)

    def end_to_end(self, query: QuerySpec, seed: int = 0, n_runs: int = 3) -> EndToEnd:
        res = self.optimize_query(query, seed)
        sample = self.engine.execute(res.plan, derive_seed(seed, query.id, "exec", "model"),
                                     n_runs)
        return EndToEnd(res.inference_time, self.engine.planning_time(query), sample)


def baseline_end_to_end(schema: SchemaGraph, query: QuerySpec, engine: SimulatedEngine,
                        seed: int = 0, n_runs: int = 3) -> EndToEnd:
    plan = engine.baseline_plan(schema, query)
    sample = engine.execute(plan, derive_seed(seed, query.id, "exec", "baseline"), n_runs)
    return EndToEnd(0.0, engine.planning_time(query), sample)


def hinted_end_to_end(schema: SchemaGraph, query: QuerySpec, hints: HintSet,
                      engine: SimulatedEngine, seed: int = 0, label: str = "hinted",
                      n_runs: int = 3) -> EndToEnd:
    plan = engine.optimize(schema, query, hints)
    sample = engine.execute(plan, derive_seed(seed, query.id, "exec", label), n_runs)
    return EndToEnd(0.0, engine.planning_time(query), sample)


def report_record(res: OptimizationResult, e2e: EndToEnd) -> str:
    """``query_id, iterations, inference_ms, planning_ms, exec_ms_mean, exec_ms_std, hints``"""
    return ", ".join([
        res.query_id, str(res.iterations), f"{res.inference_time:.6f}",
        f"{e2e.planning_ms:.6f}", f"{e2e.execution.mean:.6f}", f"{e2e.execution.std:.6f}",
        res.emitted_hints,
    ])
