"""Command-line entry point: ``hintgen <subcommand> ...``.

Exit codes: 0 success, 2 missing file, 3 validation failure, 4 incompatible
model. Failures print one ``error code=... kind=... message=...`` line to
stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from ._seeding import derive_seed
from .config import Config, ConfigError, load_config
from .engine import SimulatedEngine, render_plan
from .errors import IncompatibleModelError, InvalidArgumentError, InvalidHintError, ParseError
from .evalharness import FOLDS, SPLIT_TYPES, SplitSpec, make_splits, render_report, run_eval
from .genmodel import load_model, save_model, train
from .pipeline import HintOptimizer
from .traindata import (
    collect_candidates, load_pairs, pairs_for_queries, persist_pairs, read_pairs_header,
)
from .workload import gen_schema, gen_workload, parse_workload, serialize_workload

EXIT_OK = 0
EXIT_MISSING = 2
EXIT_INVALID = 3
EXIT_INCOMPATIBLE = 4

SPLIT_MAGIC = "hintgen-split v1"


def _engine(cfg: Config) -> SimulatedEngine:
    return SimulatedEngine(cfg.engine.sigma_noise, cfg.engine.time_scale, cfg.engine.c_plan)


def _provenance(cfg: Config) -> str:
    return f"config={cfg.fingerprint()} seed={cfg.global_.seed}"


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _load_workload(path):
    return parse_workload(_read_text(path))


# -- split file ----------------------------------------------------------------

def format_splits(splits, cfg: Config) -> str:
    split_type = splits[0].split_type
    lines = [f"# {SPLIT_MAGIC} type={split_type} {_provenance(cfg)}"]
    for s in splits:
        lines.append(f"[fold {s.fold or '-'}]")
        lines.append("train " + " ".join(s.train_ids))
        lines.append("test " + " ".join(s.test_ids))
    return "\n".join(lines) + "\n"


def parse_splits(text: str) -> list[SplitSpec]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# " + SPLIT_MAGIC):
        raise ParseError("missing split-file header", 1)
    meta = dict(tok.split("=", 1) for tok in lines[0][len("# " + SPLIT_MAGIC):].split()
                if "=" in tok)
    split_type = meta.get("type")
    if split_type not in SPLIT_TYPES:
        raise ParseError(f"unknown split type {split_type!r}", 1)
    seed = int(meta.get("seed", "0"))
    out, fold, train_ids = [], None, None
    for lineno, raw in enumerate(lines[1:], 2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[fold ") and line.endswith("]"):
            fold = line[6:-1].strip()
            train_ids = None
        elif line.startswith("train") and fold is not None:
            train_ids = tuple(line.split()[1:])
        elif line.startswith("test") and train_ids is not None:
            out.append(SplitSpec(split_type, None if fold == "-" else fold, train_ids,
                                 tuple(line.split()[1:]), seed))
            fold = None
        else:
            raise ParseError(f"unexpected line {line!r}", lineno)
    if not out:
        raise ParseError("split file has no folds")
    return out


def _pick_fold(splits, fold):
    if fold is None:
        if len(splits) != 1:
            raise InvalidArgumentError("split has several folds; pass --fold")
        return splits[0]
    for s in splits:
        if (s.fold or "-") == fold:
            return s
    raise InvalidArgumentError(f"fold {fold!r} not in split file")


def model_filename(fold) -> str:
    return f"model-{fold or 'slow'}.hgm"


# -- subcommands ---------------------------------------------------------------

def cmd_gen_workload(cfg: Config, out_path) -> int:
    wc = cfg.workload
    seed = cfg.global_.seed
    schema = gen_schema(derive_seed(seed, "schema"), wc.n_tables, wc.edge_density)
    w = gen_workload(schema, derive_seed(seed, "workload"), wc.n_base, wc.n_variants,
                     wc.max_joins)
    header = f"hintgen-workload v1 {_provenance(cfg)} schema={schema.fingerprint()}"
    Path(out_path).write_text(serialize_workload(w, header), encoding="utf-8")
    return EXIT_OK


def cmd_split(cfg: Config, workload_path, split_type, out_path) -> int:
    w = _load_workload(workload_path)
    splits = make_splits(w, split_type, cfg.global_.seed, cfg.eval.n_slow, _engine(cfg))
    Path(out_path).write_text(format_splits(splits, cfg), encoding="utf-8")
    return EXIT_OK


def cmd_gen_traindata(cfg: Config, workload_path, split_path, out_path, fold=None) -> int:
    w = _load_workload(workload_path)
    split = _pick_fold(parse_splits(_read_text(split_path)), fold)
    by_id = {q.id: q for q in w.queries()}
    missing = [i for i in split.train_ids if i not in by_id]
    if missing:
        raise InvalidArgumentError(f"split names unknown queries: {' '.join(missing)}")
    queries = [by_id[i] for i in split.train_ids]
    td = cfg.traindata
    seed = derive_seed(cfg.global_.seed, "traindata")
    cands = collect_candidates(w.schema, queries, td.n_candidates, seed, _engine(cfg), td.n_runs)
    pairs = pairs_for_queries(w.schema, queries, cands, td.alpha, seed, td.subsample_ratio)
    meta = {
        "config": cfg.fingerprint(), "seed": cfg.global_.seed,
        "split": split.split_type, "fold": split.fold or "-",
        "train_ids": ",".join(split.train_ids),
    }
    persist_pairs(pairs, out_path, w.schema.fingerprint(), meta)
    return EXIT_OK


def cmd_train(cfg: Config, pairs_path, model_out) -> int:
    text = _read_text(pairs_path)
    header = read_pairs_header(text)
    pairs = load_pairs(pairs_path)
    mc = cfg.model
    state = train(pairs, mc.latent_dim, mc.hidden, mc.beta, mc.learning_rate, mc.batch_size,
                  mc.epochs, derive_seed(cfg.global_.seed, "train"))
    state.meta.update({
        "schema_hash": header["schema"],
        "train_ids": [i for i in header.get("train_ids", "").split(",") if i],
        "split": header.get("split", ""),
        "fold": header.get("fold", ""),
        "config": cfg.fingerprint(),
        "config_seed": cfg.global_.seed,
    })
    save_model(state, model_out)
    return EXIT_OK


def cmd_optimize(cfg: Config, workload_path, model_path, query_id, n_iter: int = 1,
                 out=None) -> int:
    out = out or sys.stdout
    w = _load_workload(workload_path)
    if not Path(model_path).is_file():
        raise FileNotFoundError(f"no such file: {model_path}")
    state = load_model(model_path, w.schema.fingerprint())
    opt = HintOptimizer(w.schema, state, _engine(cfg), cfg.global_.deterministic)
    try:
        query = w.query(query_id)
    except KeyError:
        raise InvalidArgumentError(f"unknown query {query_id!r}") from None
    res = opt.chain_optimize(query, n_iter, derive_seed(cfg.global_.seed, "optimize"))
    out.write(res.emitted_hints + "\n")
    out.write(render_plan(res.plan))
    return EXIT_OK


def cmd_evaluate(cfg: Config, workload_path, models_dir, split_type, report_out,
                 plot_out=None) -> int:
    w = _load_workload(workload_path)
    mdir = Path(models_dir)
    if not mdir.is_dir():
        raise FileNotFoundError(f"no such directory: {models_dir}")
    seed = cfg.global_.seed
    engine = _engine(cfg)
    splits = make_splits(w, split_type, seed, cfg.eval.n_slow, engine)
    models = {}
    for s in splits:
        path = mdir / model_filename(s.fold)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        models[s.fold] = load_model(path, w.schema.fingerprint())
    report = run_eval(w, splits, models, derive_seed(seed, "eval"),
                      cfg.eval.include_inference, engine, cfg.global_.deterministic,
                      cfg.eval.confidence)
    report.metadata.update({"config": cfg.fingerprint(), "config_seed": seed})
    csv_text, plot_text = render_report(report)
    Path(report_out).write_text(csv_text, encoding="utf-8")
    if plot_out is not None:
        Path(plot_out).write_text(plot_text, encoding="utf-8")
    return EXIT_OK


# -- argument handling ---------------------------------------------------------

def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    if args.seed is not None:
        out["global.seed"] = str(args.seed)
    if args.deterministic is not None:
        out["global.deterministic"] = "true" if args.deterministic else "false"
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style configuration file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
    common.add_argument("--seed", type=int, help="override global.seed")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                        help="epsilon=0 inference and simulated inference timing")

    p = argparse.ArgumentParser(prog="hintgen", description="Generative subplan-hint optimizer")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-workload", parents=[common], help="generate schema and queries")
    s.add_argument("--out", required=True)

    s = sub.add_parser("split", parents=[common], help="write train/test folds")
    s.add_argument("--workload", required=True)
    s.add_argument("--split-type", choices=SPLIT_TYPES, default=None)
    s.add_argument("--out", required=True)

    s = sub.add_parser("gen-traindata", parents=[common], help="build training pairs")
    s.add_argument("--workload", required=True)
    s.add_argument("--split", required=True)
    s.add_argument("--fold", choices=list(FOLDS) + ["-"], default=None)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", parents=[common], help="train a model on a pair file")
    s.add_argument("--pairs", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("optimize", parents=[common], help="emit hints for one query")
    s.add_argument("--workload", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--query", required=True)
    s.add_argument("--n-iter", type=int, default=1)

    s = sub.add_parser("evaluate", parents=[common], help="evaluate per-fold models")
    s.add_argument("--workload", required=True)
    s.add_argument("--models-dir", required=True)
    s.add_argument("--split-type", choices=SPLIT_TYPES, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--plot-out", default=None)
    return p


def _dispatch(args, cfg: Config) -> int:
    split_type = getattr(args, "split_type", None) or cfg.eval.split_types[0]
    if args.command == "gen-workload":
        return cmd_gen_workload(cfg, args.out)
    if args.command == "split":
        return cmd_split(cfg, args.workload, split_type, args.out)
    if args.command == "gen-traindata":
        return cmd_gen_traindata(cfg, args.workload, args.split, args.out, args.fold)
    if args.command == "train":
        return cmd_train(cfg, args.pairs, args.out)
    if args.command == "optimize":
        return cmd_optimize(cfg, args.workload, args.model, args.query, args.n_iter)
    return cmd_evaluate(cfg, args.workload, args.models_dir, split_type, args.out,
                        args.plot_out)


def _fail(code: int, exc: BaseException) -> int:
    msg = json.dumps(str(exc).replace("\n", " "))
    print(f"error code={code} kind={type(exc).__name__} message={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None and not Path(args.config).is_file():
            raise FileNotFoundError(f"no such file: {args.config}")
        cfg = load_config(args.config, _overrides(args))
        return _dispatch(args, cfg)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, exc)
    except IncompatibleModelError as exc:
        return _fail(EXIT_INCOMPATIBLE, exc)
    except (ParseError, InvalidHintError, InvalidArgumentError, ValueError) as exc:
        return _fail(EXIT_INVALID, exc)


if __name__ == "__main__":
    sys.exit(main())
