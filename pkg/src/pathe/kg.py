"""Knowledge graph loading, indexing, and structural statistics.

Triples are read from tab-separated text files (head, relation, tail per
line). Entities and relations get dense integer ids in first-appearance
order over train, then valid, then test, so ids are reproducible from the
files alone. Adjacency is built from the train split only; the full triple
set across splits backs the filtered-ranking membership index.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError


class Triple(NamedTuple):
    head: int
    rel: int
    tail: int


class Vocab:
    """String <-> dense id bijection, ids assigned in insertion order."""

    def __init__(self):
        self._to_id: dict[str, int] = {}
        self._names: list[str] = []

    def add(self, name: str) -> int:
        idx = self._to_id.get(name)
        if idx is None:
            idx = len(self._names)
            self._to_id[name] = idx
            self._names.append(name)
        return idx

    def id(self, name: str) -> int:
        return self._to_id[name]

    def name(self, idx: int) -> str:
        return self._names[idx]

    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._to_id


@dataclass(frozen=True)
class RelationalContext:
    """Incoming/outgoing relation multiplicities of one entity.

    Counts are stored sparsely (relation id -> count) and densified on
    demand; relation vocabularies are small but entity counts are not.
    """

    in_counts: dict[int, int]
    out_counts: dict[int, int]

    def in_dense(self, num_relations: int) -> np.ndarray:
        v = np.zeros(num_relations, dtype=np.float32)
        for r, c in self.in_counts.items():
            v[r] = c
        return v

    def out_dense(self, num_relations: int) -> np.ndarray:
        v = np.zeros(num_relations, dtype=np.float32)
        for r, c in self.out_counts.items():
            v[r] = c
        return v

    def key(self) -> tuple:
        """Hashable canonical form, for uniqueness counting."""
        return (tuple(sorted(self.in_counts.items())),
                tuple(sorted(self.out_counts.items())))


class KnowledgeGraph:
    """Immutable after construction; safe for concurrent reads."""

    def __init__(self, entities: Vocab, relations: Vocab,
                 train: np.ndarray, valid: np.ndarray, test: np.ndarray):
        self.entities = entities
        self.relations = relations
        self.train = train
        self.valid = valid
        self.test = test
        n = len(entities)
        self.out_adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.in_adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for h, r, t in train:
            self.out_adj[h].append((int(r), int(t)))
            self.in_adj[t].append((int(r), int(h)))
        self.true_set: frozenset[tuple[int, int, int]] = frozenset(
            (int(h), int(r), int(t))
            for split in (train, valid, test)
            for h, r, t in split
        )
        self._true_heads: dict[tuple[int, int], set[int]] | None = None
        self._true_tails: dict[tuple[int, int], set[int]] | None = None
        self._ctx_matrix: np.ndarray | None = None

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def degree(self, entity: int) -> int:
        return len(self.out_adj[entity]) + len(self.in_adj[entity])

    def true_heads(self, rel: int, tail: int) -> set[int]:
        """All h with (h, rel, tail) in any loaded split."""
        if self._true_heads is None:
            idx: dict[tuple[int, int], set[int]] = {}
            for h, r, t in self.true_set:
                idx.setdefault((r, t), set()).add(h)
            self._true_heads = idx
        return self._true_heads.get((rel, tail), set())

    def true_tails(self, head: int, rel: int) -> set[int]:
        """All t with (head, rel, t) in any loaded split."""
        if self._true_tails is None:
            idx: dict[tuple[int, int], set[int]] = {}
            for h, r, t in self.true_set:
                idx.setdefault((h, r), set()).add(t)
            self._true_tails = idx
        return self._true_tails.get((head, rel), set())

    def context_matrix(self) -> np.ndarray:
        """Dense (num_entities, 2*num_relations) float32 matrix of raw counts.

        Column layout: incoming counts first, then outgoing. Built lazily and
        cached; rows are the densified relational contexts.
        """
        if self._ctx_matrix is None:
            m = np.zeros((self.num_entities, 2 * self.num_relations), dtype=np.float32)
            nr = self.num_relations
            for h, r, t in self.train:
                m[t, r] += 1.0
                m[h, nr + r] += 1.0
            self._ctx_matrix = m
        return self._ctx_matrix


def _parse_split(path) -> list[tuple[str, str, str]]:
    rows = []
    with io.open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated "
                                f"fields, got {len(parts)}")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def load_tsv(train_path, valid_path, test_path) -> KnowledgeGraph:
    """Load a graph from three TSV files with shared vocabularies."""
    entities = Vocab()
    relations = Vocab()
    raw = [_parse_split(p) for p in (train_path, valid_path, test_path)]
    if not raw[0]:
        raise DataError(f"empty train split: {train_path}")
    splits = []
    for rows in raw:
        arr = np.empty((len(rows), 3), dtype=np.int64)
        for i, (h, r, t) in enumerate(rows):
            arr[i, 0] = entities.add(h)
            arr[i, 1] = relations.add(r)
            arr[i, 2] = entities.add(t)
        splits.append(arr)
    return KnowledgeGraph(entities, relations, *splits)


def load_tsv_with_relations(train_path, valid_path, test_path,
                            relation_names: list[str]) -> KnowledgeGraph:
    """Load a graph whose relation ids are fixed by an existing vocabulary.

    Used for inductive evaluation: the inference graph must only use
    relations the model was trained with.
    """
    relations = Vocab()
    for name in relation_names:
        relations.add(name)
    entities = Vocab()
    raw = [_parse_split(p) for p in (train_path, valid_path, test_path)]
    if not raw[0]:
        raise DataError(f"empty train split: {train_path}")
    splits = []
    for rows in raw:
        arr = np.empty((len(rows), 3), dtype=np.int64)
        for i, (h, r, t) in enumerate(rows):
            if r not in relations:
                raise DataError(f"relation '{r}' not present in the training "
                                f"vocabulary; inductive graphs must share relations")
            arr[i, 0] = entities.add(h)
            arr[i, 1] = relations.id(r)
            arr[i, 2] = entities.add(t)
        splits.append(arr)
    return KnowledgeGraph(entities, relations, *splits)


def relational_context(kg: KnowledgeGraph, entity: int) -> RelationalContext:
    """Per-relation counts of the entity's train edges (both directions)."""
    out_counts = Counter(r for r, _ in kg.out_adj[entity])
    in_counts = Counter(r for r, _ in kg.in_adj[entity])
    return RelationalContext(dict(in_counts), dict(out_counts))


def unique_context_ratio(kg: KnowledgeGraph) -> float:
    """Number of distinct (in, out) context pairs divided by |E|."""
    distinct = {relational_context(kg, e).key() for e in range(kg.num_entities)}
    return len(distinct) / kg.num_entities


@dataclass
class StructuralReport:
    num_entities: int
    num_relations: int
    split_sizes: tuple[int, int, int]
    relation_rows: list[tuple[int, str, int, float]]  # (id, name, count, percent)
    avg_degree: float
    unique_ratio: float

    def to_text(self) -> str:
        train, valid, test = self.split_sizes
        lines = [
            f"entities            {self.num_entities}",
            f"relations           {self.num_relations}",
            f"train triples       {train}",
            f"valid triples       {valid}",
            f"test triples        {test}",
            f"avg entity degree   {self.avg_degree:.2f}",
            f"unique contexts     {self.unique_ratio:.4f}",
            "",
            f"{'rel_id':>6}  {'count':>9}  {'percent':>7}  name",
        ]
        for rid, name, count, pct in self.relation_rows:
            lines.append(f"{rid:>6}  {count:>9}  {pct:>6.1f}%  {name}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["relation_id,count,percent"]
        for rid, _, count, pct in self.relation_rows:
            lines.append(f"{rid},{count},{pct:.4f}")
        return "\n".join(lines) + "\n"


def structural_report(kg: KnowledgeGraph) -> StructuralReport:
    """Relation frequency table plus the density/uniqueness diagnostics."""
    counts = Counter(int(r) for r in kg.train[:, 1])
    total = len(kg.train)
    rows = [(rid, kg.relations.name(rid), c, 100.0 * c / total)
            for rid, c in counts.items()]
    rows.sort(key=lambda r: (-r[2], r[0]))
    return StructuralReport(
        num_entities=kg.num_entities,
        num_relations=kg.num_relations,
        split_sizes=(len(kg.train), len(kg.valid), len(kg.test)),
        relation_rows=rows,
        avg_degree=2.0 * total / kg.num_entities,
        unique_ratio=unique_context_ratio(kg),
    )
