"""The path-based embedding network.

Entities never get their own embedding table. Each entity slot in a path is
represented by projecting its relational context (incoming and outgoing
relation counts) through a pair of two-layer MLPs fused by a third MLP;
relation slots use a shared embedding table. Position ids measure distance
from the anchor entity, symmetric on both sides, so the encoder can discount
far-away elements. A transformer encoder contextualizes each path, anchor
representations are gathered, and an aggregator (averaging or a second
transformer with learned role tokens) merges the per-entity path views into
one head vector and one tail vector per triple.

Parameter count depends on the relation vocabulary and the architecture
only; adding entities to the graph changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, Tape
from .errors import ShapeError
from .kg import KnowledgeGraph, RelationalContext
from .paths import Path

ENTITY_FOCUSED = "entity_focused"
STANDARD = "standard"

AGG_TRANSFORMER = "transformer"
AGG_AVERAGE = "average"

TASK_RP = "rp"
TASK_LP = "lp"


@dataclass
class ModelConfig:
    embedding_dim: int = 64
    paths_per_entity: int = 4
    max_len: int = 20
    encoder_layers: int = 1
    encoder_heads: int = 2
    encoder_ff_dim: int = 256
    dropout: float = 0.1
    aggregator: str = AGG_TRANSFORMER
    aggregator_layers: int = 1
    positional: str = ENTITY_FOCUSED
    projector_hidden: int = 0  # 0 means embedding_dim
    log1p_contexts: bool = False

    def validate(self) -> None:
        if self.embedding_dim % self.encoder_heads != 0:
            raise ShapeError(f"embedding_dim {self.embedding_dim} not divisible "
                             f"by encoder_heads {self.encoder_heads}")
        if self.paths_per_entity < 1:
            raise ValueError("paths_per_entity must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.aggregator not in (AGG_TRANSFORMER, AGG_AVERAGE):
            raise ValueError(f"unknown aggregator '{self.aggregator}'")
        if self.positional not in (ENTITY_FOCUSED, STANDARD):
            raise ValueError(f"unknown positional mode '{self.positional}'")

    @property
    def hidden(self) -> int:
        return self.projector_hidden or self.embedding_dim

    @property
    def max_position(self) -> int:
        """Largest usable position id over an interleaved sequence."""
        return 2 * self.max_len + 1


def positional_indices(n_slots: int, anchor_slot: int,
                       mode: str = ENTITY_FOCUSED) -> np.ndarray:
    """Position id per slot: distance to the anchor plus one.

    Standard mode ignores the anchor and counts 1..n_slots (the ablation).
    """
    if not 0 <= anchor_slot < n_slots:
        raise ValueError(f"anchor slot {anchor_slot} outside 0..{n_slots - 1}")
    if mode == STANDARD:
        return np.arange(1, n_slots + 1, dtype=np.int32)
    return (np.abs(np.arange(n_slots, dtype=np.int32) - anchor_slot) + 1).astype(np.int32)


@dataclass
class PathBatch:
    """Padded slot grids for a list of paths.

    Entity j of a path sits at slot 2j, relation j at slot 2j+1. ``proj_ids``
    index into ``unique_entities`` (the per-batch entity list whose contexts
    get projected once); masks select which table feeds each slot.
    """

    proj_ids: np.ndarray      # (P, S) int32, 0 where not an entity slot
    entity_mask: np.ndarray   # (P, S) float32
    rel_ids: np.ndarray       # (P, S) int32, padding row elsewhere
    rel_mask: np.ndarray      # (P, S) float32
    pos_ids: np.ndarray       # (P, S) int32, 0 at padding
    attend: np.ndarray        # (P, S) bool
    anchor_slot: np.ndarray   # (P,) int32
    unique_entities: np.ndarray  # (U,) int64

    @property
    def num_paths(self) -> int:
        return self.proj_ids.shape[0]


def build_path_batch(paths: list[Path], cfg: ModelConfig,
                     pad_rel_id: int, min_slots: int = 1) -> PathBatch:
    p_count = len(paths)
    s = max(min_slots, max((p.num_slots for p in paths), default=1))
    proj_ids = np.zeros((p_count, s), dtype=np.int32)
    entity_mask = np.zeros((p_count, s), dtype=np.float32)
    rel_ids = np.full((p_count, s), pad_rel_id, dtype=np.int32)
    rel_mask = np.zeros((p_count, s), dtype=np.float32)
    pos_ids = np.zeros((p_count, s), dtype=np.int32)
    attend = np.zeros((p_count, s), dtype=bool)
    anchor_slot = np.zeros(p_count, dtype=np.int32)
    ent_index: dict[int, int] = {}
    for i, p in enumerate(paths):
        slots = p.num_slots
        anchor_slot[i] = 2 * p.anchor_pos
        pos = positional_indices(slots, int(anchor_slot[i]), cfg.positional)
        pos_ids[i, :slots] = np.minimum(pos, cfg.max_position)
        attend[i, :slots] = True
        for j, e in enumerate(p.entities):
            u = ent_index.setdefault(int(e), len(ent_index))
            proj_ids[i, 2 * j] = u
            entity_mask[i, 2 * j] = 1.0
        for j, r in enumerate(p.relations):
            rel_ids[i, 2 * j + 1] = r
            rel_mask[i, 2 * j + 1] = 1.0
    unique = np.fromiter(ent_index.keys(), dtype=np.int64, count=len(ent_index)) \
        if ent_index else np.zeros(0, dtype=np.int64)
    return PathBatch(proj_ids, entity_mask, rel_ids, rel_mask, pos_ids,
                     attend, anchor_slot, unique)


class PatheModel:
    """All trainable state for one task (relation or link prediction)."""

    def __init__(self, cfg: ModelConfig, num_relations: int, task: str = TASK_LP,
                 dtype=np.float32, seed: int = 0):
        cfg.validate()
        if task not in (TASK_RP, TASK_LP):
            raise ValueError(f"unknown task '{task}'")
        self.cfg = cfg
        self.num_relations = num_relations
        self.task = task
        self.tape = Tape(dtype=dtype, seed=seed)
        d = cfg.embedding_dim
        h = cfg.hidden
        tape = self.tape
        tape.parameter("rel_emb", (num_relations + 1, d), fan_in=d)
        tape.parameter("pos_emb", (cfg.max_position + 1, d), fan_in=d)
        for side in ("in", "out"):
            tape.parameter(f"proj_{side}.w1", (num_relations, h))
            tape.parameter(f"proj_{side}.b1", (h,), init="zeros")
            tape.parameter(f"proj_{side}.w2", (h, d))
            tape.parameter(f"proj_{side}.b2", (d,), init="zeros")
        # the fusion MLP keeps its hidden width at the concatenated input size
        tape.parameter("proj_fuse.w1", (2 * d, 2 * d))
        tape.parameter("proj_fuse.b1", (2 * d,), init="zeros")
        tape.parameter("proj_fuse.w2", (2 * d, d))
        tape.parameter("proj_fuse.b2", (d,), init="zeros")
        self._alloc_encoder("enc", cfg.encoder_layers)
        if cfg.aggregator == AGG_TRANSFORMER:
            tape.parameter("agg_tokens", (2, d), fan_in=d)
            self._alloc_encoder("agg", cfg.aggregator_layers)
        if task == TASK_RP:
            tape.parameter("rp.w", (2 * d, num_relations))
            tape.parameter("rp.b", (num_relations,), init="zeros")
        else:
            tape.parameter("lp.w", (3 * d, 1))
            tape.parameter("lp.b", (1,), init="zeros")

    def _alloc_encoder(self, prefix: str, layers: int) -> None:
        cfg = self.cfg
        d = cfg.embedding_dim
        for i in range(layers):
            base = f"{prefix}.{i}"
            for name in ("wq", "wk", "wv", "wo"):
                self.tape.parameter(f"{base}.{name}", (d, d))
            for name in ("bq", "bk", "bv", "bo"):
                self.tape.parameter(f"{base}.{name}", (d,), init="zeros")
            self.tape.parameter(f"{base}.ln1.g", (d,), init="ones")
            self.tape.parameter(f"{base}.ln1.b", (d,), init="zeros")
            self.tape.parameter(f"{base}.ff.w1", (d, cfg.encoder_ff_dim))
            self.tape.parameter(f"{base}.ff.b1", (cfg.encoder_ff_dim,), init="zeros")
            self.tape.parameter(f"{base}.ff.w2", (cfg.encoder_ff_dim, d))
            self.tape.parameter(f"{base}.ff.b2", (d,), init="zeros")
            self.tape.parameter(f"{base}.ln2.g", (d,), init="ones")
            self.tape.parameter(f"{base}.ln2.b", (d,), init="zeros")
        self.tape.parameter(f"{prefix}.ln_f.g", (d,), init="ones")
        self.tape.parameter(f"{prefix}.ln_f.b", (d,), init="zeros")

    def p(self, name: str) -> Tensor:
        return self.tape.params[name]

    def num_params(self) -> int:
        return self.tape.num_params()

    def param_millions(self) -> float:
        return self.num_params() / 1e6

    # -- context handling ---------------------------------------------------

    def context_rows(self, kg: KnowledgeGraph, entity_ids: np.ndarray) -> np.ndarray:
        """(U, 2|R|) float rows (incoming block, then outgoing block)."""
        if len(entity_ids) == 0:
            return np.zeros((0, 2 * self.num_relations), dtype=np.float32)
        rows = kg.context_matrix()[entity_ids]
        if self.cfg.log1p_contexts:
            rows = np.log1p(rows)
        return rows.astype(self.tape.dtype, copy=False)

    def _mlp2(self, x: Tensor, prefix: str) -> Tensor:
        hid = ad.relu(ad.add(ad.matmul(x, self.p(f"{prefix}.w1")), self.p(f"{prefix}.b1")))
        return ad.add(ad.matmul(hid, self.p(f"{prefix}.w2")), self.p(f"{prefix}.b2"))

    def project_context_batch(self, ctx_rows: np.ndarray) -> Tensor:
        """Project (U, 2|R|) context rows to (U, d) entity representations."""
        nr = self.num_relations
        if ctx_rows.shape[1] != 2 * nr:
            raise ShapeError(f"project: expected {2 * nr} context columns, "
                             f"got {ctx_rows.shape[1]}")
        p_in = self._mlp2(ad.constant(ctx_rows[:, :nr]), "proj_in")
        p_out = self._mlp2(ad.constant(ctx_rows[:, nr:]), "proj_out")
        return self._mlp2(ad.concat([p_in, p_out], axis=1), "proj_fuse")

    # -- encoder stacks -----------------------------------------------------

    def _encoder_stack(self, prefix: str, x: Tensor, mask: np.ndarray | None,
                       layers: int, train: bool, rng) -> Tensor:
        cfg = self.cfg
        p = self.p
        drop = cfg.dropout
        for i in range(layers):
            base = f"{prefix}.{i}"
            a = ad.layer_norm(x, p(f"{base}.ln1.g"), p(f"{base}.ln1.b"))
            q = ad.add(ad.matmul(a, p(f"{base}.wq")), p(f"{base}.bq"))
            k = ad.add(ad.matmul(a, p(f"{base}.wk")), p(f"{base}.bk"))
            v = ad.add(ad.matmul(a, p(f"{base}.wv")), p(f"{base}.bv"))
            att = ad.multi_head_attention(q, k, v, mask, cfg.encoder_heads)
            att = ad.add(ad.matmul(att, p(f"{base}.wo")), p(f"{base}.bo"))
            att = ad.dropout(att, drop, train, rng)
            x = ad.add(x, att)
            f = ad.layer_norm(x, p(f"{base}.ln2.g"), p(f"{base}.ln2.b"))
            f = ad.relu(ad.add(ad.matmul(f, p(f"{base}.ff.w1")), p(f"{base}.ff.b1")))
            f = ad.dropout(f, drop, train, rng)
            f = ad.add(ad.matmul(f, p(f"{base}.ff.w2")), p(f"{base}.ff.b2"))
            f = ad.dropout(f, drop, train, rng)
            x = ad.add(x, f)
        return ad.layer_norm(x, p(f"{prefix}.ln_f.g"), p(f"{prefix}.ln_f.b"))

    def encode_paths(self, batch: PathBatch, ctx_rows: np.ndarray,
                     train: bool = False, rng=None) -> Tensor:
        """Contextualize a path batch; returns the (P, S, d) output grid."""
        projected = self.project_context_batch(ctx_rows)
        ent = ad.embedding_lookup(projected, batch.proj_ids)
        ent = ad.mul(ent, ad.constant(batch.entity_mask[..., None]))
        rel = ad.embedding_lookup(self.p("rel_emb"), batch.rel_ids)
        rel = ad.mul(rel, ad.constant(batch.rel_mask[..., None]))
        pos = ad.embedding_lookup(self.p("pos_emb"), batch.pos_ids)
        x = ad.add(ad.add(ent, rel), pos)
        return self._encoder_stack("enc", x, batch.attend,
                                   self.cfg.encoder_layers, train, rng)

    def encode_instances(self, kg: KnowledgeGraph,
                         instances: list[list[Path]],
                         train: bool = False, rng=None) -> Tensor:
        """Encode path sets and gather anchors: (n_instances, ppe, d)."""
        ppe = len(instances[0])
        flat = [p for inst in instances for p in inst]
        batch = build_path_batch(flat, self.cfg, pad_rel_id=self.num_relations)
        ctx = self.context_rows(kg, batch.unique_entities)
        grid = self.encode_paths(batch, ctx, train, rng)
        anchors = ad.gather_rows(grid, batch.anchor_slot)
        return ad.reshape(anchors, (len(instances), ppe, self.cfg.embedding_dim))

    # -- aggregation ----------------------------------------------------------

    def aggregate(self, head_vecs: Tensor, tail_vecs: Tensor,
                  train: bool = False, rng=None,
                  force_average: bool = False) -> tuple[Tensor, Tensor]:
        """(Z, ppe, d) head/tail path views -> (Z, d) head and tail vectors.

        Averaging takes the per-entity mean. The transformer variant runs one
        encoder over [head token, tail token, head views..., tail views...]
        and reads the two token outputs.
        """
        if head_vecs.shape != tail_vecs.shape or len(head_vecs.shape) != 3:
            raise ShapeError(f"aggregate: expected matching (Z, ppe, d), got "
                             f"{head_vecs.shape} and {tail_vecs.shape}")
        if force_average or self.cfg.aggregator == AGG_AVERAGE:
            return ad.mean(head_vecs, axis=1), ad.mean(tail_vecs, axis=1)
        z = head_vecs.shape[0]
        tok = ad.embedding_lookup(self.p("agg_tokens"),
                                  np.broadcast_to(np.array([0, 1]), (z, 2)))
        seq = ad.concat([tok, head_vecs, tail_vecs], axis=1)
        out = self._encoder_stack("agg", seq, None,
                                  self.cfg.aggregator_layers, train, rng)
        return ad.take(out, 0, axis=1), ad.take(out, 1, axis=1)

    # -- prediction heads -----------------------------------------------------

    def rp_scores(self, e_h: Tensor, e_t: Tensor) -> Tensor:
        """(Z, |R|) relation scores from concatenated head/tail vectors."""
        f = ad.concat([e_h, e_t], axis=1)
        return ad.add(ad.matmul(f, self.p("rp.w")), self.p("rp.b"))

    def lp_logits(self, e_h: Tensor, rel_ids: np.ndarray, e_t: Tensor) -> Tensor:
        """Per-triple plausibility logit from [head | relation | tail]."""
        r = ad.embedding_lookup(self.p("rel_emb"), np.asarray(rel_ids))
        x = ad.concat([e_h, r, e_t], axis=1)
        out = ad.add(ad.matmul(x, self.p("lp.w")), self.p("lp.b"))
        return ad.reshape(out, (x.shape[0],))


def project_entity(model: PatheModel, ctx: RelationalContext) -> np.ndarray:
    """Single-entity projection (evaluation helper, no graph recorded)."""
    nr = model.num_relations
    row = np.concatenate([ctx.in_dense(nr), ctx.out_dense(nr)])[None, :]
    if model.cfg.log1p_contexts:
        row = np.log1p(row)
    with ad.no_grad():
        return model.project_context_batch(row.astype(model.tape.dtype)).data[0].copy()


def gather_instance_vectors(inst: Tensor, idx: np.ndarray) -> Tensor:
    """Select instance rows of a (n_inst, ppe, d) tensor by index: (C, ppe, d)."""
    n, ppe, d = inst.shape
    flat = ad.reshape(inst, (n, ppe * d))
    return ad.reshape(ad.embedding_lookup(flat, idx), (len(idx), ppe, d))
