"""Random-walk mining of entity-relation paths.

For every entity we try to collect N unique loop-free walks, each either
outgoing (starting at the entity) or incoming (ending at it), chosen with
equal probability among the directions that have at least one usable edge.
Incoming walks are traversed on reversed edges but stored in forward
head-to-tail orientation, so downstream consumers see one canonical layout.

Mining is deterministic: each entity draws from its own RNG stream keyed by
(seed, entity id), so the result is independent of scheduling or worker
count.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .errors import DataError
from .kg import KnowledgeGraph

OUTGOING = "O"
INCOMING = "I"

# walk attempts per entity before giving up on reaching n unique paths
RETRY_FACTOR = 10


@dataclass(frozen=True)
class Path:
    """Loop-free alternating entity/relation sequence, stored head-to-tail.

    ``entities`` has one more element than ``relations``; consecutive
    (entities[i], relations[i], entities[i+1]) follow graph edges in the
    forward direction regardless of how the walk was mined.
    """

    direction: str  # OUTGOING or INCOMING
    entities: tuple[int, ...]
    relations: tuple[int, ...]

    @property
    def anchor_pos(self) -> int:
        return 0 if self.direction == OUTGOING else len(self.entities) - 1

    @property
    def anchor(self) -> int:
        return self.entities[self.anchor_pos]

    @property
    def num_slots(self) -> int:
        """Length of the interleaved entity/relation sequence (2k+1)."""
        return len(self.entities) + len(self.relations)


def singleton_path(entity: int) -> Path:
    """Fallback for entities without any mined path: just the entity."""
    return Path(OUTGOING, (entity,), ())


@dataclass
class PathCorpus:
    """Mined paths for every entity, plus the mining parameters."""

    paths: list[list[Path]]
    n: int
    max_len: int
    seed: int

    def for_entity(self, entity: int) -> list[Path]:
        return self.paths[entity]

    @property
    def num_entities(self) -> int:
        return len(self.paths)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PathCorpus):
            return NotImplemented
        return (self.paths == other.paths and self.n == other.n
                and self.max_len == other.max_len and self.seed == other.seed)


def rng_stream(seed: int, *key) -> np.random.Generator:
    """Independent RNG stream keyed by (seed, *key); stable across platforms."""
    tag = ":".join([str(seed), *map(str, key)])
    digest = hashlib.blake2b(tag.encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def entity_rng(seed: int, entity: int) -> np.random.Generator:
    """Per-entity mining stream, independent of scheduling and worker count."""
    return rng_stream(seed, entity)


def _walk(adj, start: int, max_len: int, rng: np.random.Generator):
    """One random walk over an adjacency list; uniform over unvisited targets."""
    visited = {start}
    ents = [start]
    rels = []
    cur = start
    for _ in range(max_len):
        edges = adj[cur]
        if not edges:
            break
        # rejection sampling keeps the draw uniform over admissible edges and
        # avoids filtering long hub adjacency lists on every hop
        chosen = None
        for _ in range(6):
            r, nb = edges[rng.integers(len(edges))]
            if nb not in visited:
                chosen = (r, nb)
                break
        if chosen is None:
            admissible = [e for e in edges if e[1] not in visited]
            if not admissible:
                break
            chosen = admissible[rng.integers(len(admissible))]
        r, nb = chosen
        ents.append(nb)
        rels.append(r)
        visited.add(nb)
        cur = nb
    return ents, rels


def mine_entity(kg: KnowledgeGraph, entity: int, n: int, max_len: int,
                rng: np.random.Generator) -> list[Path]:
    """Up to n unique loop-free paths anchored at the entity.

    Returns fewer than n when the neighborhood is exhausted within the retry
    budget, and an empty list for isolated entities.
    """
    if n < 1 or max_len < 1:
        raise ValueError(f"mine_entity: need n >= 1 and max_len >= 1, got {n}, {max_len}")
    has_out = bool(kg.out_adj[entity])
    has_in = bool(kg.in_adj[entity])
    if not (has_out or has_in):
        return []
    found: set[Path] = set()
    out: list[Path] = []
    budget = RETRY_FACTOR * n
    for _ in range(budget):
        if len(out) >= n:
            break
        if has_out and has_in:
            direction = OUTGOING if rng.random() < 0.5 else INCOMING
        else:
            direction = OUTGOING if has_out else INCOMING
        if direction == OUTGOING:
            ents, rels = _walk(kg.out_adj, entity, max_len, rng)
        else:
            ents, rels = _walk(kg.in_adj, entity, max_len, rng)
            ents = ents[::-1]
            rels = rels[::-1]
        if not rels:
            continue
        path = Path(direction, tuple(ents), tuple(rels))
        if path not in found:
            found.add(path)
            out.append(path)
    return out


def _mine_range(kg: KnowledgeGraph, lo: int, hi: int, n: int, max_len: int,
                seed: int) -> list[list[Path]]:
    return [mine_entity(kg, e, n, max_len, entity_rng(seed, e))
            for e in range(lo, hi)]


def mine_all(kg: KnowledgeGraph, n: int, max_len: int, seed: int,
             workers: int = 1) -> PathCorpus:
    """Mine the whole graph; output is identical for any worker count."""
    ne = kg.num_entities
    if workers <= 1 or ne < 2 * workers:
        per_entity = _mine_range(kg, 0, ne, n, max_len, seed)
    else:
        bounds = np.linspace(0, ne, workers + 1).astype(int)
        ctx = get_context("fork")
        with ctx.Pool(workers) as pool:
            chunks = pool.starmap(
                _mine_range,
                [(kg, int(lo), int(hi), n, max_len, seed)
                 for lo, hi in zip(bounds[:-1], bounds[1:])],
            )
        per_entity = [paths for chunk in chunks for paths in chunk]
    return PathCorpus(per_entity, n=n, max_len=max_len, seed=seed)


def sample_entity_paths(corpus: PathCorpus, entity: int, ppe: int,
                        rng: np.random.Generator) -> list[Path]:
    """ppe paths for one entity.

    Without replacement when enough are available, with replacement when
    short, and ppe copies of the singleton path when none exist.
    """
    avail = corpus.for_entity(entity)
    if not avail:
        return [singleton_path(entity)] * ppe
    if len(avail) >= ppe:
        idx = rng.choice(len(avail), size=ppe, replace=False)
    else:
        idx = rng.integers(0, len(avail), size=ppe)
    return [avail[i] for i in idx]


def sample_for_triple(corpus: PathCorpus, triple, ppe: int,
                      rng: np.random.Generator) -> tuple[list[Path], list[Path]]:
    """Path sets describing the head and the tail of one triple."""
    if ppe < 1:
        raise ValueError(f"sample_for_triple: ppe must be >= 1, got {ppe}")
    head, _, tail = triple
    return (sample_entity_paths(corpus, int(head), ppe, rng),
            sample_entity_paths(corpus, int(tail), ppe, rng))


def save_corpus(corpus: PathCorpus, path) -> None:
    """Text format: header line, then one `anchor dir e0 r0 e1 ... ek` per line."""
    with io.open(path, "w", encoding="utf-8") as f:
        f.write(f"pathe-corpus v1 n={corpus.n} max_len={corpus.max_len} "
                f"seed={corpus.seed}\n")
        for entity in range(corpus.num_entities):
            for p in corpus.paths[entity]:
                seq = [str(p.entities[0])]
                for r, e in zip(p.relations, p.entities[1:]):
                    seq.append(str(r))
                    seq.append(str(e))
                f.write(f"{entity} {p.direction} {' '.join(seq)}\n")


def load_corpus(path, num_entities: int | None = None) -> PathCorpus:
    """Inverse of save_corpus; validates structure line by line."""
    with io.open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        fields = header.split()
        if len(fields) != 5 or fields[0] != "pathe-corpus" or fields[1] != "v1":
            raise DataError(f"{path}: corpus version mismatch (header {header!r})")
        try:
            n = int(fields[2].removeprefix("n="))
            max_len = int(fields[3].removeprefix("max_len="))
            seed = int(fields[4].removeprefix("seed="))
        except ValueError:
            raise DataError(f"{path}: malformed corpus header {header!r}") from None
        per_entity: dict[int, list[Path]] = {}
        max_entity = -1
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            toks = line.split()
            if len(toks) < 5 or len(toks) % 2 == 0:
                raise DataError(f"{path}:{lineno}: malformed path record")
            anchor = int(toks[0])
            direction = toks[1]
            if direction not in (OUTGOING, INCOMING):
                raise DataError(f"{path}:{lineno}: bad direction {direction!r}")
            ids = [int(t) for t in toks[2:]]
            ents = tuple(ids[0::2])
            rels = tuple(ids[1::2])
            p = Path(direction, ents, rels)
            if p.anchor != anchor:
                raise DataError(f"{path}:{lineno}: anchor {anchor} does not "
                                f"match path end {p.anchor}")
            per_entity.setdefault(anchor, []).append(p)
            max_entity = max(max_entity, anchor, max(ents))
    size = num_entities if num_entities is not None else max_entity + 1
    paths: list[list[Path]] = [per_entity.get(e, []) for e in range(max(size, 0))]
    return PathCorpus(paths, n=n, max_len=max_len, seed=seed)
