"""Three-fold train/test splits, end-to-end evaluation and report rendering."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derive_seed
from .engine import SimulatedEngine
from .errors import IncompatibleModelError, InvalidArgumentError
from .genmodel import TrainState
from .pipeline import EndToEnd, HintOptimizer, baseline_end_to_end, hinted_end_to_end
from .stats import WorkloadDiff, workload_difference
from .workload import Workload

SPLIT_TYPES = ("random", "leave_one_out", "base_query", "slow")
FOLDS = ("A", "B", "C")
CSV_COLUMNS = ["split_type", "fold", "query_id", "base_id", "method", "inference_ms",
               "planning_ms", "exec_ms_mean", "exec_ms_std", "total_ms"]


@dataclass(frozen=True)
class SplitSpec:
    split_type: str
    fold: str | None
    train_ids: tuple
    test_ids: tuple
    seed: int


def _distribute(units, rng) -> list[list]:
    """Spread units over three folds; the remainder goes to random distinct
    folds, and folds left empty (fewer than three units) reuse a random unit."""
    units = list(units)
    order = [units[i] for i in rng.permutation(len(units))]
    per = len(order) // 3
    folds = [order[k * per:(k + 1) * per] for k in range(3)]
    rest = order[3 * per:]
    for unit, f in zip(rest, rng.choice(3, size=len(rest), replace=False)):
        folds[int(f)].append(unit)
    for f in folds:
        if not f and units:
            f.append(units[int(rng.integers(len(units)))])
    return folds


def _slowest(workload: Workload, n: int, engine: SimulatedEngine, seed: int) -> list[str]:
    times = []
    for q in workload.queries():
        e2e = baseline_end_to_end(workload.schema, q, engine, derive_seed(seed, "slow"))
        times.append((-e2e.execution.mean, q.id))
    times.sort()
    return [qid for _, qid in times[:n]]


def make_splits(workload: Workload, split_type: str, seed: int, n_slow: int = 19,
                engine: SimulatedEngine | None = None) -> list[SplitSpec]:
    if split_type not in SPLIT_TYPES:
        raise InvalidArgumentError(f"unknown split type {split_type!r}; use one of {SPLIT_TYPES}")
    queries = workload.queries()
    if not queries:
        raise InvalidArgumentError("workload is empty")
    all_ids = [q.id for q in queries]
    if split_type == "slow":
        if not 1 <= n_slow < len(all_ids):
            raise InvalidArgumentError(f"n_slow={n_slow} must be in [1, {len(all_ids) - 1}]")
        test = set(_slowest(workload, n_slow, engine or SimulatedEngine(), seed))
        return [SplitSpec("slow", None, tuple(i for i in all_ids if i not in test),
                          tuple(i for i in all_ids if i in test), seed)]

    rng = np.random.default_rng(derive_seed(seed, "split", split_type))
    tests: list[set] = [set(), set(), set()]
    if split_type == "random":
        for k, f in enumerate(_distribute(all_ids, rng)):
            tests[k].update(f)
    elif split_type == "leave_one_out":
        for base_id in sorted(workload.base_groups):
            ids = [q.id for q in workload.base_groups[base_id]]
            for k, f in enumerate(_distribute(ids, rng)):
                tests[k].update(f)
    else:
        groups = sorted(workload.base_groups)
        for k, f in enumerate(_distribute(groups, rng)):
            for base_id in f:
                tests[k].update(q.id for q in workload.base_groups[base_id])
    return [
        SplitSpec(split_type, fold, tuple(i for i in all_ids if i not in test),
                  tuple(i for i in all_ids if i in test), seed)
        for fold, test in zip(FOLDS, tests)
    ]


@dataclass
class EvalRow:
    split_type: str
    fold: str | None
    query_id: str
    base_id: str
    method: str
    result: EndToEnd
    include_inference: bool = True

    @property
    def inference_ms(self) -> float:
        return self.result.inference_ms if self.include_inference else 0.0

    @property
    def total_ms(self) -> float:
        return self.inference_ms + self.result.planning_ms + self.result.execution.mean


@dataclass
class EvalReport:
    rows: list
    aggregates: dict
    metadata: dict = field(default_factory=dict)

    def method_rows(self, method: str) -> list[EvalRow]:
        return [r for r in self.rows if r.method == method]


def _check_model(split: SplitSpec, state: TrainState | None) -> None:
    if state is None:
        return
    recorded = state.meta.get("train_ids")
    if recorded is None or tuple(sorted(recorded)) != tuple(sorted(split.train_ids)):
        raise IncompatibleModelError(
            f"model for fold {split.fold} was not trained on that fold's train set"
        )


def run_eval(workload: Workload, splits, models: dict | None, seed: int,
             include_inference: bool = True, engine: SimulatedEngine | None = None,
             deterministic: bool = True, confidence: float = 0.95) -> EvalReport:
    """Evaluate one model per fold on its test queries.

    ``models`` maps fold label (``None`` for the slow split) to a
    :class:`TrainState`; with ``models=None`` the model path is bypassed and the
    method repeats the baseline, which must yield a zero difference.
    """
    engine = engine or SimulatedEngine()
    schema = workload.schema
    by_id = {q.id: q for q in workload.queries()}
    per_query: dict[str, list] = {}
    for split in splits:
        state = None if models is None else models.get(split.fold)
        if models is not None and state is None:
            raise IncompatibleModelError(f"no model for fold {split.fold}")
        _check_model(split, state)
        opt = HintOptimizer(schema, state, engine, deterministic) if state is not None else None
        for qid in split.test_ids:
            q = by_id[qid]
            base = baseline_end_to_end(schema, q, engine, seed)
            if opt is None:
                method = base
                rand = base
            else:
                res = opt.optimize_query(q, seed)
                exec_seed = derive_seed(seed, q.id, "exec", "model", split.fold)
                method = EndToEnd(res.inference_time, engine.planning_time(q),
                                  engine.execute(res.plan, exec_seed))
                rand = hinted_end_to_end(schema, q, res.input_hints, engine, seed,
                                         f"random_input-{split.fold}")
            per_query.setdefault(qid, []).append((split, base, method, rand))

    rows = []
    for qid in [q.id for q in workload.queries()]:
        if qid not in per_query:
            continue
        # duplicated queries keep the measurement least favourable to the method
        split, base, method, rand = max(
            per_query[qid], key=lambda m: (m[2].total_ms - m[1].total_ms)
        )
        for name, r in (("baseline", base), ("model", method), ("random_input", rand)):
            rows.append(EvalRow(split.split_type, split.fold, qid, by_id[qid].base_id, name, r,
                                include_inference))

    report = EvalReport(rows, {}, {"split_type": splits[0].split_type if splits else "",
                                   "seed": seed, "include_inference": include_inference})
    report.aggregates = aggregate(report, confidence)
    return report


def aggregate(report: EvalReport, confidence: float = 0.95) -> dict[str, WorkloadDiff]:
    base = {r.query_id: r for r in report.method_rows("baseline")}
    out = {}
    for method in ("model", "random_input"):
        rows = report.method_rows(method)
        if not rows:
            continue
        ids = [r.query_id for r in rows]
        for incl in (True, False):
            pairs = [(r.result.sample(incl), base[r.query_id].result.sample(incl)) for r in rows]
            key = f"{method}_vs_baseline" + ("" if incl else "_no_inference")
            out[key] = workload_difference(pairs, confidence, ids)
    rand = {r.query_id: r for r in report.method_rows("random_input")}
    model_rows = report.method_rows("model")
    if model_rows and rand:
        pairs = [(r.result.sample(False), rand[r.query_id].result.sample(False))
                 for r in model_rows]
        out["model_vs_random_input"] = workload_difference(
            pairs, confidence, [r.query_id for r in model_rows])
    return out


def render_report(report: EvalReport) -> tuple[str, str]:
    """(CSV text, tab-separated plot data). Positive differences mean faster
    than the reference."""
    buf = io.StringIO()
    meta = " ".join(f"{k}={v}" for k, v in sorted(report.metadata.items()))
    buf.write(f"# {meta}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([
            r.split_type, r.fold or "", r.query_id, r.base_id, r.method,
            f"{r.inference_ms:.6f}", f"{r.result.planning_ms:.6f}",
            f"{r.result.execution.mean:.6f}", f"{r.result.execution.std:.6f}",
            f"{r.total_ms:.6f}",
        ])
    plot = io.StringIO()
    plot.write(f"# {meta}\n")
    plot.write("comparison\tsplit_type\ttotal_difference_ms\tci_half_width_ms\n")
    for key in sorted(report.aggregates):
        d = report.aggregates[key]
        plot.write(f"{key}\t{report.metadata.get('split_type', '')}\t"
                   f"{d.total_difference:.6f}\t{d.ci_half_width:.6f}\n")
    return buf.getvalue(), plot.getvalue()
