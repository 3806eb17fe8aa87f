"""Filtered ranking metrics, evaluation drivers, and embedding diagnostics.

Ranking uses the realistic tie policy: rank = 1 + #{better} + #{equal}/2.
Link prediction ranks each test triple against its head and tail corruptions
in the filtered setting (candidates forming known-true triples are removed),
pooling both sides into one MRR. Relation prediction ranks the true relation
within the full score row.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import UsageError
from .kg import KnowledgeGraph
from .model import PatheModel, TASK_LP, TASK_RP, gather_instance_vectors
from .paths import PathCorpus, rng_stream, sample_entity_paths

logger = logging.getLogger("pathe.evaluation")

HITS_KS = (1, 3, 5, 10)


def rank_of(true_score: float, corruption_scores) -> float:
    """Realistic (mean) rank of the true score among its corruptions."""
    s = np.asarray(corruption_scores)
    return float(1.0 + (s > true_score).sum() + 0.5 * (s == true_score).sum())


def effi(mrr: float, param_millions: float) -> float:
    """Performance per million trainable parameters."""
    if param_millions <= 0:
        raise ValueError(f"param_millions must be positive, got {param_millions}")
    return mrr / param_millions


@dataclass
class EvalReport:
    task: str
    mode: str                  # transductive | inductive
    negatives: str             # full-entity-set | sampled(k) | all-relations
    mrr: float
    hits: dict[int, float]
    n_evaluated: int
    parameter_count_millions: float
    effi: float

    def to_text(self) -> str:
        lines = [
            f"task           {self.task}",
            f"mode           {self.mode}",
            f"negatives      {self.negatives}",
            f"evaluated      {self.n_evaluated}",
            f"MRR            {self.mrr:.4f}",
        ]
        for k in sorted(self.hits):
            lines.append(f"Hits@{k:<2}        {self.hits[k]:.4f}")
        lines.append(f"params (M)     {self.parameter_count_millions:.4f}")
        lines.append(f"Effi           {self.effi:.4f}")
        return "\n".join(lines)

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "mode": self.mode,
            "negatives": self.negatives,
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "n_evaluated": self.n_evaluated,
            "parameter_count_millions": self.parameter_count_millions,
            "effi": self.effi,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def metrics_from_ranks(ranks: list[float]) -> tuple[float, dict[int, float]]:
    arr = np.asarray(ranks, dtype=np.float64)
    mrr = float((1.0 / arr).mean())
    hits = {k: float((arr <= k).mean()) for k in HITS_KS}
    return mrr, hits


class TripleScorer:
    """Deterministic model scores for ranking.

    Path selection per entity is seeded by (eval_seed, entity id), and each
    entity's path views are encoded once and cached, so every query for the
    same triple returns the same score within one scorer.
    """

    def __init__(self, model: PatheModel, kg: KnowledgeGraph, corpus: PathCorpus,
                 eval_seed: int = 0, ppe: int | None = None,
                 force_average: bool = False, chunk: int = 1024):
        self.model = model
        self.kg = kg
        self.corpus = corpus
        self.eval_seed = eval_seed
        self.ppe = ppe if ppe is not None else model.cfg.paths_per_entity
        self.force_average = force_average
        self.chunk = chunk
        self._cache: dict[int, np.ndarray] = {}

    def _ensure_cached(self, entities) -> None:
        todo = sorted({int(e) for e in entities} - self._cache.keys())
        model = self.model
        for lo in range(0, len(todo), self.chunk):
            block = todo[lo:lo + self.chunk]
            instances = [
                sample_entity_paths(self.corpus, e, self.ppe,
                                    rng_stream(self.eval_seed, "paths", e))
                for e in block
            ]
            with ad.no_grad():
                vecs = model.encode_instances(self.kg, instances).data
            for e, v in zip(block, vecs):
                self._cache[e] = v

    def _instance_block(self, entities: np.ndarray) -> np.ndarray:
        self._ensure_cached(entities)
        d = self.model.cfg.embedding_dim
        out = np.empty((len(entities), self.ppe, d), dtype=self.model.tape.dtype)
        for i, e in enumerate(entities):
            out[i] = self._cache[int(e)]
        return out

    def score(self, triples: np.ndarray) -> np.ndarray:
        """Plausibility logits for (m, 3) triples (link-prediction head)."""
        if self.model.task != TASK_LP:
            raise UsageError("scorer: model was trained for relation prediction, "
                             "cannot produce link-prediction scores")
        triples = np.asarray(triples).reshape(-1, 3)
        out = np.empty(len(triples), dtype=np.float64)
        for lo in range(0, len(triples), self.chunk):
            block = triples[lo:lo + self.chunk]
            hv = ad.constant(self._instance_block(block[:, 0]))
            tv = ad.constant(self._instance_block(block[:, 2]))
            with ad.no_grad():
                e_h, e_t = self.model.aggregate(hv, tv, force_average=self.force_average)
                logits = self.model.lp_logits(e_h, block[:, 1], e_t)
            out[lo:lo + len(block)] = logits.data
        return out

    def score_relations(self, triples: np.ndarray) -> np.ndarray:
        """(m, |R|) relation score rows for (m, 3) head/tail pairs."""
        if self.model.task != TASK_RP:
            raise UsageError("scorer: model was trained for link prediction, "
                             "cannot produce relation scores")
        triples = np.asarray(triples).reshape(-1, 3)
        out = np.empty((len(triples), self.model.num_relations), dtype=np.float64)
        for lo in range(0, len(triples), self.chunk):
            block = triples[lo:lo + self.chunk]
            hv = ad.constant(self._instance_block(block[:, 0]))
            tv = ad.constant(self._instance_block(block[:, 2]))
            with ad.no_grad():
                e_h, e_t = self.model.aggregate(hv, tv, force_average=self.force_average)
                scores = self.model.rp_scores(e_h, e_t)
            out[lo:lo + len(block)] = scores.data
        return out


def filtered_candidates(kg: KnowledgeGraph, triple, side: str) -> list[int]:
    """Replacement entities that do not form a known-true triple."""
    h, r, t = (int(x) for x in triple)
    banned = kg.true_heads(r, t) if side == "head" else kg.true_tails(h, r)
    return [e for e in range(kg.num_entities) if e not in banned]


def sample_filtered_candidates(kg: KnowledgeGraph, triple, side: str, k: int,
                               rng: np.random.Generator) -> list[int]:
    """Up to k distinct filtered replacements, uniform over entities."""
    h, r, t = (int(x) for x in triple)
    banned = kg.true_heads(r, t) if side == "head" else kg.true_tails(h, r)
    picked: list[int] = []
    seen: set[int] = set()
    for _ in range(max(50 * k, 200)):
        if len(picked) >= k:
            break
        c = int(rng.integers(kg.num_entities))
        if c in banned or c in seen:
            continue
        seen.add(c)
        picked.append(c)
    if len(picked) < k:
        pool = np.array([e for e in range(kg.num_entities)
                         if e not in banned and e not in seen], dtype=np.int64)
        rng.shuffle(pool)
        picked.extend(int(e) for e in pool[:k - len(picked)])
    return picked


def _candidate_triples(triple, side: str, candidates) -> np.ndarray:
    h, r, t = (int(x) for x in triple)
    out = np.empty((len(candidates), 3), dtype=np.int64)
    out[:, 1] = r
    if side == "head":
        out[:, 0] = candidates
        out[:, 2] = t
    else:
        out[:, 0] = h
        out[:, 2] = candidates
    return out


def ranks_against_negatives(scorer: TripleScorer, triples: np.ndarray,
                            neg_heads: list[np.ndarray],
                            neg_tails: list[np.ndarray]) -> list[float]:
    """Head-side and tail-side ranks for triples with fixed negative sets."""
    ranks: list[float] = []
    true_scores = scorer.score(triples)
    for i, triple in enumerate(triples):
        for side, negs in (("head", neg_heads[i]), ("tail", neg_tails[i])):
            if len(negs) == 0:
                ranks.append(1.0)
                continue
            scores = scorer.score(_candidate_triples(triple, side, negs))
            ranks.append(rank_of(true_scores[i], scores))
    return ranks


def evaluate_lp(model: PatheModel, kg: KnowledgeGraph, corpus: PathCorpus,
                mode: str = "transductive", negatives: str | int = "full",
                eval_seed: int = 0, ppe: int | None = None,
                force_average: bool = False) -> EvalReport:
    """Filtered link-prediction MRR and Hits@K over the test split.

    ``negatives`` is "full" for the whole filtered entity set or an integer
    for sampled filtered corruptions per side. In inductive mode the caller
    passes the inference graph as ``kg`` (its corpus mined from it too).
    """
    if model.task != TASK_LP:
        raise UsageError(f"checkpoint was trained for '{model.task}', not lp")
    test = np.asarray(kg.test).reshape(-1, 3)
    if test[:, 1].size and test[:, 1].max() >= model.num_relations:
        raise UsageError("test split contains relations unknown to the model")
    scorer = TripleScorer(model, kg, corpus, eval_seed, ppe, force_average)
    neg_heads: list[np.ndarray] = []
    neg_tails: list[np.ndarray] = []
    for i, triple in enumerate(test):
        for side, dest in (("head", neg_heads), ("tail", neg_tails)):
            if negatives == "full":
                cands = filtered_candidates(kg, triple, side)
            else:
                rng = rng_stream(eval_seed, "negatives", i, side)
                cands = sample_filtered_candidates(kg, triple, side, int(negatives), rng)
            dest.append(np.asarray(cands, dtype=np.int64))
    ranks = ranks_against_negatives(scorer, test, neg_heads, neg_tails)
    mrr, hits = metrics_from_ranks(ranks)
    pm = model.param_millions()
    label = "full-entity-set" if negatives == "full" else f"sampled({int(negatives)})"
    return EvalReport(task=TASK_LP, mode=mode, negatives=label, mrr=mrr, hits=hits,
                      n_evaluated=len(test), parameter_count_millions=pm,
                      effi=effi(mrr, pm))


def evaluate_rp(model: PatheModel, kg: KnowledgeGraph, corpus: PathCorpus,
                eval_seed: int = 0, ppe: int | None = None,
                force_average: bool = False) -> EvalReport:
    """Rank of the true relation within each test triple's score row."""
    if model.task != TASK_RP:
        raise UsageError(f"checkpoint was trained for '{model.task}', not rp")
    test = np.asarray(kg.test).reshape(-1, 3)
    scorer = TripleScorer(model, kg, corpus, eval_seed, ppe, force_average)
    rows = scorer.score_relations(test)
    ranks = []
    for i, (_, r, _) in enumerate(test):
        others = np.delete(rows[i], int(r))
        ranks.append(rank_of(rows[i, int(r)], others))
    mrr, hits = metrics_from_ranks(ranks)
    pm = model.param_millions()
    return EvalReport(task=TASK_RP, mode="transductive", negatives="all-relations",
                      mrr=mrr, hits=hits, n_evaluated=len(test),
                      parameter_count_millions=pm, effi=effi(mrr, pm))


def pca_1d(rows: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000) -> np.ndarray:
    """Project rows onto their top principal component via power iteration.

    Returns all-zero projections (with a warning) when the rows carry no
    variance, e.g. a single distinct row.
    """
    x = np.asarray(rows, dtype=np.float64)
    xc = x - x.mean(axis=0, keepdims=True)
    cov = xc.T @ xc / max(len(xc), 1)
    if not np.any(cov):
        warnings.warn("pca_1d: rows have no variance, returning zeros")
        return np.zeros(len(x))
    d = cov.shape[0]
    v = np.ones(d) / np.sqrt(d)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # the start vector landed in the null space; nudge and continue
            v = np.roll(v, 1)
            continue
        w /= norm
        if w @ v < 0:
            w = -w
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return xc @ v


def positional_pca(model: PatheModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-position 1-D projections of the learned positional embeddings.

    Row 0 of the table backs padding slots and is skipped; positions are the
    1-based ids used in paths.
    """
    table = model.p("pos_emb").data
    positions = np.arange(1, table.shape[0], dtype=np.int64)
    return positions, pca_1d(table[1:])
