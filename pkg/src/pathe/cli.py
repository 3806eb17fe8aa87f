"""Command-line front door: stats, mine, train, eval, positionals.

Every command is reproducible from (inputs, config, seed) in single-worker
mode, and the effective configuration is echoed next to every artifact it
produces. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path as FsPath

import numpy as np

from .autodiff import load_into_tape
from .config import RunConfig, config_text, parse_config, set_key
from .errors import DataError, NumericError, PatheError, UsageError
from .evaluation import evaluate_lp, evaluate_rp, positional_pca
from .kg import load_tsv, load_tsv_with_relations, structural_report
from .model import PatheModel, TASK_LP, TASK_RP
from .paths import load_corpus, mine_all, save_corpus
from .training import apply_ablations, effective_ppe, train

logger = logging.getLogger("pathe.cli")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pathe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[], help="structural statistics of a graph")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--csv", help="also write per-relation counts as CSV")

    p = sub.add_parser("mine", help="mine the path corpus")
    p.add_argument("--config", help="run configuration file")
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--num-paths", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="corpus output file (default: config corpus path)")

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--task", choices=[TASK_RP, TASK_LP])
    p.add_argument("--out", help="output directory (default: config out_dir)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", help="defaults to run.cfg next to the checkpoint")
    p.add_argument("--mode", choices=["transductive", "inductive"],
                   default="transductive")
    p.add_argument("--inference-dir",
                   help="directory with train.txt/valid.txt/test.txt of the "
                        "disjoint inference graph (inductive mode)")
    p.add_argument("--negatives",
                   help="'full' or a per-side sample count "
                        "(default: full transductive, 50 inductive)")
    p.add_argument("--out", help="report path prefix (default: next to ckpt)")

    p = sub.add_parser("positionals", help="1-D PCA of the positional table")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", help="defaults to run.cfg next to the checkpoint")
    p.add_argument("--out", required=True, help="CSV output path")
    return parser


def _load_config(path) -> RunConfig:
    path = FsPath(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    return parse_config(path)


def _require_dataset(cfg: RunConfig) -> tuple:
    for key in ("train", "valid", "test"):
        value = getattr(cfg, key)
        if not value:
            raise UsageError(f"dataset path '{key}' not set (config or flags)")
        if not FsPath(value).exists():
            raise DataError(f"{key} split file not found: {value}")
    return cfg.train, cfg.valid, cfg.test


def cmd_stats(args) -> int:
    cfg = RunConfig(train=args.train, valid=args.valid, test=args.test)
    kg = load_tsv(*_require_dataset(cfg))
    report = structural_report(kg)
    print(report.to_text())
    if args.csv:
        FsPath(args.csv).write_text(report.to_csv(), encoding="utf-8")
        logger.info("wrote %s", args.csv)
    return 0


def cmd_mine(args) -> int:
    cfg = _load_config(args.config) if args.config else RunConfig()
    for key in ("train", "valid", "test"):
        if getattr(args, key) is not None:
            set_key(cfg, key, getattr(args, key))
    if args.num_paths is not None:
        cfg.num_paths = args.num_paths
    if args.max_len is not None:
        cfg.max_len = args.max_len
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.corpus = args.out
    if cfg.num_paths < 1:
        raise UsageError(f"--num-paths must be >= 1, got {cfg.num_paths}")
    if cfg.max_len < 1:
        raise UsageError(f"--max-len must be >= 1, got {cfg.max_len}")
    if not cfg.corpus:
        raise UsageError("no corpus output path (set --out or config 'corpus')")
    kg = load_tsv(*_require_dataset(cfg))
    corpus = mine_all(kg, cfg.num_paths, cfg.max_len, cfg.seed, workers=cfg.workers)
    out = FsPath(cfg.corpus)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out)
    FsPath(str(out) + ".cfg").write_text(config_text(cfg), encoding="utf-8")
    total = kg.num_entities
    nonisolated = sum(1 for e in range(total) if kg.degree(e) > 0)
    covered = sum(1 for e in range(total) if corpus.for_entity(e))
    digest = hashlib.sha256(out.read_bytes()).hexdigest()[:16]
    print(f"mined {sum(len(p) for p in corpus.paths)} paths for {total} entities")
    print(f"coverage: {covered}/{nonisolated} entities with degree >= 1 "
          f"({covered / max(nonisolated, 1):.4f})")
    print(f"corpus: {out} (sha256 {digest})")
    return 0


def _load_run(cfg: RunConfig):
    kg = load_tsv(*_require_dataset(cfg))
    if not cfg.corpus:
        raise UsageError("config key 'corpus' not set")
    corpus_path = FsPath(cfg.corpus)
    if not corpus_path.exists():
        raise DataError(f"corpus file not found: {corpus_path} (run 'pathe mine')")
    corpus = load_corpus(corpus_path, num_entities=kg.num_entities)
    return kg, corpus


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.task is not None:
        cfg.task = args.task
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    kg, corpus = _load_run(cfg)
    out_dir = FsPath(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.cfg").write_text(config_text(cfg), encoding="utf-8")
    result = train(kg, corpus, cfg.model_config(), cfg.train_config(), out_dir)
    print(f"trained {result.epochs_run} epochs; best epoch {result.best_epoch} "
          f"(metric {result.best_metric:.4f})")
    print(f"checkpoint: {result.ckpt_path}")
    print(f"log: {result.log_path}")
    return 0


def _model_from_run(cfg: RunConfig, ckpt_path: FsPath, num_relations: int) -> PatheModel:
    eff_cfg = apply_ablations(cfg.model_config(), cfg.train_config())
    model = PatheModel(eff_cfg, num_relations, task=cfg.task)
    load_into_tape(ckpt_path, model.tape)
    return model


def _run_dir_files(args) -> tuple[FsPath, RunConfig, list[str]]:
    ckpt_path = FsPath(args.ckpt)
    if not ckpt_path.exists():
        raise DataError(f"checkpoint not found: {ckpt_path}")
    cfg_path = FsPath(args.config) if args.config else ckpt_path.parent / "run.cfg"
    cfg = _load_config(cfg_path)
    rel_path = ckpt_path.parent / "relations.txt"
    if not rel_path.exists():
        raise DataError(f"relation vocabulary not found: {rel_path}")
    relation_names = rel_path.read_text(encoding="utf-8").splitlines()
    return ckpt_path, cfg, relation_names


def cmd_eval(args) -> int:
    ckpt_path, cfg, relation_names = _run_dir_files(args)
    if args.mode == "inductive":
        if not args.inference_dir:
            raise UsageError("inductive mode requires --inference-dir")
        inf = FsPath(args.inference_dir)
        files = [inf / name for name in ("train.txt", "valid.txt", "test.txt")]
        for f in files:
            if not f.exists():
                raise DataError(f"inference split not found: {f}")
        kg = load_tsv_with_relations(*files, relation_names=relation_names)
        # contexts and paths must come from the inference graph only
        corpus = mine_all(kg, cfg.num_paths, cfg.max_len, cfg.seed,
                          workers=cfg.workers)
        negatives: str | int = 50
    else:
        kg, corpus = _load_run(cfg)
        if kg.relations.names() != relation_names:
            raise DataError("relation vocabulary drifted from the training run")
        negatives = "full"
    if args.negatives is not None:
        negatives = "full" if args.negatives == "full" else int(args.negatives)
    model = _model_from_run(cfg, ckpt_path, len(relation_names))
    ppe = effective_ppe(model.cfg, cfg.train_config())
    if cfg.task == TASK_RP:
        report = evaluate_rp(model, kg, corpus, eval_seed=cfg.seed, ppe=ppe,
                             force_average=cfg.single_path)
    else:
        report = evaluate_lp(model, kg, corpus, mode=args.mode,
                             negatives=negatives, eval_seed=cfg.seed, ppe=ppe,
                             force_average=cfg.single_path)
    prefix = FsPath(args.out) if args.out else ckpt_path.parent / f"eval_{args.mode}"
    prefix.parent.mkdir(parents=True, exist_ok=True)
    FsPath(str(prefix) + ".txt").write_text(report.to_text() + "\n", encoding="utf-8")
    FsPath(str(prefix) + ".json").write_text(report.to_json() + "\n", encoding="utf-8")
    FsPath(str(prefix) + ".cfg").write_text(config_text(cfg), encoding="utf-8")
    print(report.to_text())
    return 0


def cmd_positionals(args) -> int:
    ckpt_path, cfg, relation_names = _run_dir_files(args)
    model = _model_from_run(cfg, ckpt_path, len(relation_names))
    positions, projections = positional_pca(model)
    out = FsPath(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["position,component_value"]
    lines.extend(f"{p},{v:.8g}" for p, v in zip(positions, projections))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(positions)} positions to {out}")
    return 0


_COMMANDS = {
    "stats": cmd_stats,
    "mine": cmd_mine,
    "train": cmd_train,
    "eval": cmd_eval,
    "positionals": cmd_positionals,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
