"""Shared graph builders and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np

from pathe.kg import KnowledgeGraph, load_tsv
from pathe.paths import INCOMING, OUTGOING


def write_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in rows:
            f.write(f"{h}\t{r}\t{t}\n")


def make_kg(tmp_path, train, valid=None, test=None) -> KnowledgeGraph:
    """Build a graph from lists of (head, rel, tail) name triples."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    valid = valid if valid is not None else train[:1]
    test = test if test is not None else train[:1]
    write_tsv(tmp_path / "train.txt", train)
    write_tsv(tmp_path / "valid.txt", valid)
    write_tsv(tmp_path / "test.txt", test)
    return load_tsv(tmp_path / "train.txt", tmp_path / "valid.txt",
                    tmp_path / "test.txt")


def random_triples(rng, n_entities, n_relations, n_triples, self_loops=False):
    rows = set()
    while len(rows) < n_triples:
        h = int(rng.integers(n_entities))
        t = int(rng.integers(n_entities))
        if not self_loops and h == t:
            continue
        rows.add((h, int(rng.integers(n_relations)), t))
    return [(f"e{h}", f"r{r}", f"e{t}") for h, r, t in sorted(rows)]


TOY_TRIPLES = [
    ("a", "r0", "b"), ("b", "r1", "c"), ("c", "r2", "d"), ("d", "r0", "e"),
    ("e", "r1", "a"), ("a", "r2", "c"), ("b", "r0", "d"),
]


def enumerate_walks(kg: KnowledgeGraph, entity: int, max_len: int) -> set:
    """All loop-free walks from/to an entity, by DFS, in stored orientation.

    Independent of the miner: explicit stack enumeration over the adjacency
    lists, up to max_len relations. Returns (direction, entities, relations)
    tuples with incoming walks flipped to head-to-tail order.
    """
    out = set()

    def dfs(adj, prefix_ents, prefix_rels, visited):
        if prefix_rels:
            yield tuple(prefix_ents), tuple(prefix_rels)
        if len(prefix_rels) == max_len:
            return
        for r, nb in adj[prefix_ents[-1]]:
            if nb in visited:
                continue
            yield from dfs(adj, prefix_ents + [nb], prefix_rels + [r],
                           visited | {nb})

    for ents, rels in dfs(kg.out_adj, [entity], [], {entity}):
        out.add((OUTGOING, ents, rels))
    for ents, rels in dfs(kg.in_adj, [entity], [], {entity}):
        out.add((INCOMING, tuple(reversed(ents)), tuple(reversed(rels))))
    return out


def brute_force_context(kg: KnowledgeGraph, entity: int):
    """Literal scan of the train triple list."""
    in_counts: dict[int, int] = {}
    out_counts: dict[int, int] = {}
    for h, r, t in kg.train:
        if int(h) == entity:
            out_counts[int(r)] = out_counts.get(int(r), 0) + 1
        if int(t) == entity:
            in_counts[int(r)] = in_counts.get(int(r), 0) + 1
    return in_counts, out_counts


def sort_rank_oracle(true_score: float, corruption_scores) -> float:
    """Rank by full sort with tie averaging (mean position of equal block)."""
    scores = np.concatenate([[true_score], np.asarray(corruption_scores, dtype=float)])
    sorted_scores = np.sort(scores)[::-1]
    block = np.nonzero(sorted_scores == true_score)[0]
    return float(block.mean() + 1.0)
