"""Training objectives, negative sampling, and the training loop.

Relation prediction is a multi-class problem over the relation vocabulary,
trained with (optionally label-smoothed) cross entropy. Link prediction is
trained as true-triple classification: each positive is paired with N head
and N tail corruptions, filtered against every loaded split so no sampled
negative is actually true. The BCE objective balances the two classes by
dividing the summed negative losses by 2N; the CE variant scores each
positive against its 2N corruptions as one softmax group.

Early stopping tracks validation MRR (patience/min-delta), keeping the
best-scoring checkpoint.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor, save_checkpoint
from .errors import DataError, NumericError
from .evaluation import TripleScorer, metrics_from_ranks, ranks_against_negatives
from .kg import KnowledgeGraph, Triple
from .model import (AGG_AVERAGE, ModelConfig, PatheModel, STANDARD, TASK_LP,
                    TASK_RP, gather_instance_vectors)
from .paths import PathCorpus, sample_entity_paths

logger = logging.getLogger("pathe.training")

LOSS_CE = "ce"
LOSS_BCE = "bce"


@dataclass
class TrainConfig:
    task: str = TASK_LP
    loss: str = LOSS_CE
    label_smoothing: float = 0.01
    negatives: int = 99          # per side, link prediction only
    valid_negatives: int = 99    # per side, for early-stopping MRR
    lr: float = 1e-3
    batch_size: int = 4096
    accum_batches: int = 8
    max_epochs: int = 500
    patience: int = 10
    min_delta: float = 0.0
    seed: int = 42
    no_aggregator: bool = False
    single_path: bool = False
    standard_positionals: bool = False

    def validate(self) -> None:
        if self.task not in (TASK_RP, TASK_LP):
            raise ValueError(f"unknown task '{self.task}'")
        if self.loss not in (LOSS_CE, LOSS_BCE):
            raise ValueError(f"unknown loss '{self.loss}'")
        if self.batch_size < 1 or self.accum_batches < 1:
            raise ValueError("batch_size and accum_batches must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.task == TASK_LP and self.negatives < 1:
            raise ValueError("negatives must be >= 1 for link prediction")


def apply_ablations(model_cfg: ModelConfig, train_cfg: TrainConfig) -> ModelConfig:
    """Model config with the requested ablation switches applied.

    no_aggregator swaps the transformer aggregator for plain averaging (its
    parameters disappear); standard_positionals switches the position rule.
    single_path is handled at batch-assembly time and leaves the allocated
    architecture untouched.
    """
    cfg = replace(model_cfg)
    if train_cfg.no_aggregator:
        cfg.aggregator = AGG_AVERAGE
    if train_cfg.standard_positionals:
        cfg.positional = STANDARD
    return cfg


def effective_ppe(model_cfg: ModelConfig, train_cfg: TrainConfig) -> int:
    return 1 if train_cfg.single_path else model_cfg.paths_per_entity


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------

def rp_forward(model: PatheModel, e_h: Tensor, e_t: Tensor) -> Tensor:
    """(Z, |R|) relation score matrix from aggregated entity vectors."""
    return model.rp_scores(e_h, e_t)


def lp_forward(model: PatheModel, e_h: Tensor, rel_ids, e_t: Tensor) -> Tensor:
    """Per-triple binary classification logit."""
    return model.lp_logits(e_h, rel_ids, e_t)


def lp_loss(pos_logits: Tensor, neg_logits: Tensor, loss: str = LOSS_BCE,
            label_smoothing: float = 0.0) -> Tensor:
    """Combine positive and (Z, 2N) negative logits into one scalar.

    BCE: mean over positives of bce(pos, 1) + sum_j bce(neg_j, 0) / (2N).
    CE: each positive with its corruptions forms a (2N+1)-way classification
    with the positive as the target class.
    """
    z = pos_logits.shape[0]
    if len(neg_logits.shape) != 2 or neg_logits.shape[0] != z:
        raise ValueError(f"lp_loss: negative logits must be ({z}, 2N), "
                         f"got {neg_logits.shape}")
    two_n = neg_logits.shape[1]
    if loss == LOSS_BCE:
        pos_term = ad.bce_with_logits(pos_logits, 1.0, reduction="sum")
        neg_term = ad.bce_with_logits(neg_logits, 0.0, reduction="sum")
        return ad.scale(ad.add(pos_term, ad.scale(neg_term, 1.0 / two_n)), 1.0 / z)
    grid = ad.concat([ad.reshape(pos_logits, (z, 1)), neg_logits], axis=1)
    return ad.cross_entropy(grid, np.zeros(z, dtype=np.int64), label_smoothing)


# ---------------------------------------------------------------------------
# negative sampling
# ---------------------------------------------------------------------------

@dataclass
class NegativeSet:
    head_corruptions: list[Triple]
    tail_corruptions: list[Triple]
    head_shortfall: int = 0
    tail_shortfall: int = 0


def _sample_replacements(banned: set[int], num_entities: int, n: int,
                         rng: np.random.Generator) -> tuple[list[int], int]:
    picked: list[int] = []
    seen: set[int] = set()
    for _ in range(max(50 * n, 200)):
        if len(picked) >= n:
            break
        c = int(rng.integers(num_entities))
        if c in banned or c in seen:
            continue
        seen.add(c)
        picked.append(c)
    if len(picked) < n:
        pool = np.array([e for e in range(num_entities)
                         if e not in banned and e not in seen], dtype=np.int64)
        rng.shuffle(pool)
        picked.extend(int(e) for e in pool[:n - len(picked)])
    return picked, n - len(picked)


def sample_negatives(triple, n: int, kg: KnowledgeGraph,
                     rng: np.random.Generator) -> NegativeSet:
    """N distinct head and N distinct tail corruptions, none of them true.

    Candidates equal to the original entity are rejected implicitly (the
    original triple is in the membership index). When fewer than N valid
    corruptions exist, all of them are returned and the shortfall recorded.
    """
    h, r, t = (int(x) for x in triple)
    heads, head_short = _sample_replacements(kg.true_heads(r, t),
                                             kg.num_entities, n, rng)
    tails, tail_short = _sample_replacements(kg.true_tails(h, r),
                                             kg.num_entities, n, rng)
    if head_short or tail_short:
        logger.debug("negative shortfall for (%d,%d,%d): head=%d tail=%d",
                     h, r, t, head_short, tail_short)
    return NegativeSet(
        head_corruptions=[Triple(e, r, t) for e in heads],
        tail_corruptions=[Triple(h, r, e) for e in tails],
        head_shortfall=head_short,
        tail_shortfall=tail_short,
    )


def _cycle_to(items: list[int], n: int) -> list[int]:
    # shortfall padding: reuse sampled corruptions so groups stay rectangular
    if len(items) >= n:
        return items[:n]
    return [items[i % len(items)] for i in range(n)]


# ---------------------------------------------------------------------------
# batch forward passes
# ---------------------------------------------------------------------------

def rp_batch_loss(model: PatheModel, kg: KnowledgeGraph, corpus: PathCorpus,
                  triples: np.ndarray, ppe: int, path_rng, drop_rng,
                  label_smoothing: float, train: bool = True,
                  force_average: bool = False) -> Tensor:
    z = len(triples)
    instances = []
    for h, _, t in triples:
        instances.append(sample_entity_paths(corpus, int(h), ppe, path_rng))
        instances.append(sample_entity_paths(corpus, int(t), ppe, path_rng))
    inst = model.encode_instances(kg, instances, train=train, rng=drop_rng)
    hv = gather_instance_vectors(inst, np.arange(0, 2 * z, 2))
    tv = gather_instance_vectors(inst, np.arange(1, 2 * z, 2))
    e_h, e_t = model.aggregate(hv, tv, train=train, rng=drop_rng,
                               force_average=force_average)
    scores = rp_forward(model, e_h, e_t)
    return ad.cross_entropy(scores, triples[:, 1].astype(np.int64), label_smoothing)


def lp_batch_loss(model: PatheModel, kg: KnowledgeGraph, corpus: PathCorpus,
                  triples: np.ndarray, n_negatives: int, ppe: int,
                  path_rng, neg_rng, drop_rng, loss: str,
                  label_smoothing: float, train: bool = True,
                  force_average: bool = False) -> Tensor:
    """One micro-batch of positives with their corruption stacks.

    Corrupted triples reuse the positive's path set on the uncorrupted side;
    every replacement entity gets its own sampled paths.
    """
    z = len(triples)
    instances: list = []
    pos_head_idx = np.empty(z, dtype=np.int64)
    pos_tail_idx = np.empty(z, dtype=np.int64)
    neg_head_idx: list[int] = []
    neg_tail_idx: list[int] = []
    neg_rel: list[int] = []
    for i, (h, r, t) in enumerate(triples):
        h, r, t = int(h), int(r), int(t)
        hi = len(instances)
        instances.append(sample_entity_paths(corpus, h, ppe, path_rng))
        ti = len(instances)
        instances.append(sample_entity_paths(corpus, t, ppe, path_rng))
        pos_head_idx[i] = hi
        pos_tail_idx[i] = ti
        negs = sample_negatives((h, r, t), n_negatives, kg, neg_rng)
        head_ents = _cycle_to([trip.head for trip in negs.head_corruptions], n_negatives)
        tail_ents = _cycle_to([trip.tail for trip in negs.tail_corruptions], n_negatives)
        if not head_ents or not tail_ents:
            raise DataError(f"no valid corruptions exist for triple ({h},{r},{t})")
        for e in head_ents:
            idx = len(instances)
            instances.append(sample_entity_paths(corpus, e, ppe, path_rng))
            neg_head_idx.append(idx)
            neg_tail_idx.append(ti)
            neg_rel.append(r)
        for e in tail_ents:
            idx = len(instances)
            instances.append(sample_entity_paths(corpus, e, ppe, path_rng))
            neg_head_idx.append(hi)
            neg_tail_idx.append(idx)
            neg_rel.append(r)
    inst = model.encode_instances(kg, instances, train=train, rng=drop_rng)
    pos_h = gather_instance_vectors(inst, pos_head_idx)
    pos_t = gather_instance_vectors(inst, pos_tail_idx)
    e_h, e_t = model.aggregate(pos_h, pos_t, train=train, rng=drop_rng,
                               force_average=force_average)
    pos_logits = lp_forward(model, e_h, triples[:, 1], e_t)
    neg_h = gather_instance_vectors(inst, np.asarray(neg_head_idx))
    neg_t = gather_instance_vectors(inst, np.asarray(neg_tail_idx))
    ne_h, ne_t = model.aggregate(neg_h, neg_t, train=train, rng=drop_rng,
                                 force_average=force_average)
    neg_logits = lp_forward(model, ne_h, np.asarray(neg_rel), ne_t)
    neg_grid = ad.reshape(neg_logits, (z, 2 * n_negatives))
    return lp_loss(pos_logits, neg_grid, loss, label_smoothing)


# ---------------------------------------------------------------------------
# early stopping and the loop
# ---------------------------------------------------------------------------

class EarlyStopper:
    """Stop after `patience` epochs without improving by more than min_delta."""

    IMPROVED = "improved"
    CONTINUE = "continue"
    STOP = "stop"

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = -np.inf
        self.bad_epochs = 0

    def update(self, metric: float) -> str:
        if metric > self.best + self.min_delta:
            self.best = metric
            self.bad_epochs = 0
            return self.IMPROVED
        self.bad_epochs += 1
        return self.STOP if self.bad_epochs >= self.patience else self.CONTINUE


@dataclass
class TrainResult:
    ckpt_path: FsPath
    log_path: FsPath
    best_epoch: int
    best_metric: float
    epochs_run: int
    log_rows: list[dict] = field(default_factory=list)


def _sample_valid_negatives(kg: KnowledgeGraph, triples: np.ndarray, k: int,
                            rng: np.random.Generator):
    """Fixed filtered corruption sets so epochs compare like with like."""
    from .evaluation import sample_filtered_candidates
    neg_heads, neg_tails = [], []
    for triple in triples:
        neg_heads.append(np.asarray(
            sample_filtered_candidates(kg, triple, "head", k, rng), dtype=np.int64))
        neg_tails.append(np.asarray(
            sample_filtered_candidates(kg, triple, "tail", k, rng), dtype=np.int64))
    return neg_heads, neg_tails


def _validation_metrics(model, kg, corpus, task, valid, neg_heads, neg_tails,
                        eval_seed, ppe, force_average):
    scorer = TripleScorer(model, kg, corpus, eval_seed=eval_seed, ppe=ppe,
                          force_average=force_average)
    if task == TASK_RP:
        rows = scorer.score_relations(valid)
        ranks = []
        for i, (_, r, _) in enumerate(valid):
            others = np.delete(rows[i], int(r))
            ranks.append(1.0 + float((others > rows[i, int(r)]).sum())
                         + 0.5 * float((others == rows[i, int(r)]).sum()))
    else:
        ranks = ranks_against_negatives(scorer, valid, neg_heads, neg_tails)
    return metrics_from_ranks(ranks)


def train(kg: KnowledgeGraph, corpus: PathCorpus, model_cfg: ModelConfig,
          train_cfg: TrainConfig, out_dir) -> TrainResult:
    """Full training run with per-epoch validation and early stopping.

    Writes the best checkpoint, the relation vocabulary, and a CSV log
    (epoch, train_loss, valid_mrr, valid_hits10, elapsed_s) into out_dir.
    """
    train_cfg.validate()
    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eff_cfg = apply_ablations(model_cfg, train_cfg)
    eff_cfg.validate()
    ppe = effective_ppe(eff_cfg, train_cfg)
    force_avg = train_cfg.single_path

    ss = np.random.SeedSequence(train_cfg.seed)
    (init_ss, shuffle_ss, path_ss, neg_ss, drop_ss, vneg_ss, eval_ss) = ss.spawn(7)
    model = PatheModel(eff_cfg, kg.num_relations, task=train_cfg.task,
                       seed=init_ss.generate_state(1)[0])
    shuffle_rng = np.random.default_rng(shuffle_ss)
    path_rng = np.random.default_rng(path_ss)
    neg_rng = np.random.default_rng(neg_ss)
    drop_rng = np.random.default_rng(drop_ss)
    eval_seed = int(eval_ss.generate_state(1)[0])

    valid = np.asarray(kg.valid).reshape(-1, 3)
    use_valid = len(valid) > 0
    if not use_valid:
        logger.warning("empty valid split: early stopping falls back to train loss")
    neg_heads = neg_tails = None
    if use_valid and train_cfg.task == TASK_LP:
        vrng = np.random.default_rng(vneg_ss)
        neg_heads, neg_tails = _sample_valid_negatives(
            kg, valid, train_cfg.valid_negatives, vrng)

    opt = Adam(model.tape, lr=train_cfg.lr)
    stopper = EarlyStopper(train_cfg.patience, train_cfg.min_delta)
    ckpt_path = out_dir / "model.ckpt"
    log_path = out_dir / "train_log.csv"
    (out_dir / "relations.txt").write_text(
        "".join(f"{name}\n" for name in kg.relations.names()), encoding="utf-8")

    triples = np.asarray(kg.train).reshape(-1, 3)
    z = train_cfg.batch_size
    best_epoch = 0
    rows: list[dict] = []
    start = time.monotonic()
    with open(log_path, "w", newline="", encoding="utf-8") as logf:
        writer = csv.writer(logf)
        writer.writerow(["epoch", "train_loss", "valid_mrr", "valid_hits10", "elapsed_s"])
        epochs_run = 0
        for epoch in range(1, train_cfg.max_epochs + 1):
            epochs_run = epoch
            perm = shuffle_rng.permutation(len(triples))
            losses = []
            pending = 0
            model.tape.zero_grad()
            for lo in range(0, len(triples), z):
                batch = triples[perm[lo:lo + z]]
                if train_cfg.task == TASK_RP:
                    loss = rp_batch_loss(model, kg, corpus, batch, ppe,
                                         path_rng, drop_rng,
                                         train_cfg.label_smoothing,
                                         force_average=force_avg)
                else:
                    loss = lp_batch_loss(model, kg, corpus, batch,
                                         train_cfg.negatives, ppe,
                                         path_rng, neg_rng, drop_rng,
                                         train_cfg.loss,
                                         train_cfg.label_smoothing,
                                         force_average=force_avg)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(
                        f"non-finite training loss {value} at epoch {epoch}, "
                        f"batch starting at {lo}")
                losses.append(value)
                ad.scale(loss, 1.0 / train_cfg.accum_batches).backward()
                pending += 1
                if pending == train_cfg.accum_batches:
                    opt.step()
                    model.tape.zero_grad()
                    pending = 0
            if pending:
                opt.step()
                model.tape.zero_grad()
            train_loss = float(np.mean(losses))
            if use_valid:
                mrr, hits = _validation_metrics(
                    model, kg, corpus, train_cfg.task, valid,
                    neg_heads, neg_tails, eval_seed, ppe, force_avg)
                metric = mrr
                hits10 = hits[10]
            else:
                mrr, hits10 = float("nan"), float("nan")
                metric = -train_loss
            elapsed = time.monotonic() - start
            writer.writerow([epoch, f"{train_loss:.6f}", f"{mrr:.6f}",
                             f"{hits10:.6f}", f"{elapsed:.2f}"])
            logf.flush()
            rows.append({"epoch": epoch, "train_loss": train_loss,
                         "valid_mrr": mrr, "valid_hits10": hits10,
                         "elapsed_s": elapsed})
            verdict = stopper.update(metric)
            if verdict == EarlyStopper.IMPROVED:
                best_epoch = epoch
                save_checkpoint(ckpt_path, model.tape)
            logger.info("epoch %d loss=%.4f mrr=%.4f (%s)", epoch, train_loss,
                        mrr, verdict)
            if verdict == EarlyStopper.STOP:
                break
    if best_epoch == 0:
        # no epoch improved over -inf is impossible, but guard anyway
        save_checkpoint(ckpt_path, model.tape)
        best_epoch = epochs_run
    return TrainResult(ckpt_path=ckpt_path, log_path=log_path,
                       best_epoch=best_epoch, best_metric=stopper.best,
                       epochs_run=epochs_run, log_rows=rows)
