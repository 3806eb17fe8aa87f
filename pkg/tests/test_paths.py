"""Path mining soundness, determinism, sampling rules, and corpus format."""

import hashlib

import numpy as np
import pytest

from pathe.errors import DataError
from pathe.paths import (INCOMING, OUTGOING, Path, PathCorpus, entity_rng,
                         load_corpus, mine_all, mine_entity, rng_stream,
                         sample_entity_paths, sample_for_triple, save_corpus,
                         singleton_path)

from helpers import enumerate_walks, make_kg, random_triples


def chain_kg(tmp_path, n=4):
    return make_kg(tmp_path, [(f"e{i}", "r", f"e{i+1}") for i in range(n - 1)])


def check_path_against_kg(kg, path, anchor):
    ents, rels = path.entities, path.relations
    assert len(ents) == len(rels) + 1
    assert len(set(ents)) == len(ents), "loop-free"
    assert path.anchor == anchor
    if path.direction == OUTGOING:
        assert path.anchor_pos == 0
    else:
        assert path.anchor_pos == len(ents) - 1
    for i, r in enumerate(rels):
        assert (int(ents[i]), int(r), int(ents[i + 1])) in kg.true_set \
            or (r, ents[i + 1]) in kg.out_adj[ents[i]], "edge-valid"


def test_chain_single_walk(tmp_path):
    kg = chain_kg(tmp_path)
    # entity 0 has no incoming edges, so the only direction is outgoing
    paths = mine_entity(kg, 0, n=1, max_len=3, rng=entity_rng(0, 0))
    assert len(paths) == 1
    assert paths[0].direction == OUTGOING
    assert paths[0].entities == (0, 1, 2, 3)


def test_chain_tail_entity_walks_incoming(tmp_path):
    kg = chain_kg(tmp_path)
    last = kg.num_entities - 1
    paths = mine_entity(kg, last, n=1, max_len=3, rng=entity_rng(0, last))
    assert paths[0].direction == INCOMING
    assert paths[0].entities == (0, 1, 2, 3)
    assert paths[0].anchor == last


def test_triangle_loop_free_bound(tmp_path):
    kg = make_kg(tmp_path, [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")])
    for attempt in range(20):
        for p in mine_entity(kg, 0, n=5, max_len=5, rng=entity_rng(attempt, 0)):
            assert len(p.entities) <= 3
            assert len(set(p.entities)) == len(p.entities)


def test_isolated_entity_gets_no_paths(tmp_path):
    kg = make_kg(tmp_path, [("a", "r", "b")], [("c", "r", "d")], [("a", "r", "b")])
    c = kg.entities.id("c")
    assert mine_entity(kg, c, n=3, max_len=5, rng=entity_rng(0, c)) == []


def test_mined_paths_in_dfs_enumeration(tmp_path):
    rng = np.random.default_rng(5)
    kg = make_kg(tmp_path, random_triples(rng, 25, 3, 70))
    for e in range(kg.num_entities):
        walks = enumerate_walks(kg, e, max_len=4)
        mined = mine_entity(kg, e, n=6, max_len=4, rng=entity_rng(1, e))
        assert len({p for p in mined}) == len(mined), "unique per entity"
        for p in mined:
            check_path_against_kg(kg, p, e)
            assert (p.direction, p.entities, p.relations) in walks


def test_mine_all_deterministic_and_worker_independent(tmp_path):
    rng = np.random.default_rng(9)
    kg = make_kg(tmp_path, random_triples(rng, 30, 4, 90))
    c1 = mine_all(kg, n=4, max_len=5, seed=123)
    c2 = mine_all(kg, n=4, max_len=5, seed=123)
    assert c1 == c2
    c3 = mine_all(kg, n=4, max_len=5, seed=123, workers=2)
    assert c1 == c3
    c4 = mine_all(kg, n=4, max_len=5, seed=124)
    assert c1 != c4


def test_direction_balance(tmp_path):
    # overlay of two permutation cycles: every entity always has both
    # directions available from the first hop
    n = 100
    rows = [(f"e{i}", "ra", f"e{(i + 1) % n}") for i in range(n)]
    rows += [(f"e{i}", "rb", f"e{(i + 7) % n}") for i in range(n)]
    kg = make_kg(tmp_path, rows)
    corpus = mine_all(kg, n=120, max_len=6, seed=77)
    mined = [p for paths in corpus.paths for p in paths]
    assert len(mined) >= 10_000
    frac = sum(1 for p in mined if p.direction == OUTGOING) / len(mined)
    assert 0.48 <= frac <= 0.52


def test_sample_exactly_ppe_returns_all(tmp_path):
    kg = chain_kg(tmp_path, n=5)
    corpus = mine_all(kg, n=8, max_len=3, seed=3)
    e = 2
    avail = corpus.for_entity(e)
    got = sample_entity_paths(corpus, e, ppe=len(avail), rng=np.random.default_rng(0))
    assert sorted(got, key=str) == sorted(avail, key=str)


def test_sample_zero_paths_gives_singletons():
    corpus = PathCorpus([[], [singleton_path(1)]], n=2, max_len=3, seed=0)
    got = sample_entity_paths(corpus, 0, ppe=3, rng=np.random.default_rng(0))
    assert got == [singleton_path(0)] * 3
    assert got[0].num_slots == 1


def test_sample_with_replacement_when_short():
    p1 = Path(OUTGOING, (0, 1), (0,))
    p2 = Path(OUTGOING, (0, 2), (1,))
    corpus = PathCorpus([[p1, p2]], n=2, max_len=1, seed=0)
    got = sample_entity_paths(corpus, 0, ppe=4, rng=np.random.default_rng(1))
    assert len(got) == 4
    assert set(got) <= {p1, p2}


def test_sample_for_triple_shapes(tmp_path):
    kg = chain_kg(tmp_path, n=5)
    corpus = mine_all(kg, n=4, max_len=3, seed=1)
    heads, tails = sample_for_triple(corpus, kg.train[0], ppe=2,
                                     rng=np.random.default_rng(2))
    assert len(heads) == len(tails) == 2
    assert all(p.anchor == int(kg.train[0][0]) for p in heads)
    assert all(p.anchor == int(kg.train[0][2]) for p in tails)
    with pytest.raises(ValueError):
        sample_for_triple(corpus, kg.train[0], ppe=0, rng=np.random.default_rng(0))


def test_corpus_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    kg = make_kg(tmp_path, random_triples(rng, 20, 3, 50))
    corpus = mine_all(kg, n=3, max_len=4, seed=5)
    f = tmp_path / "paths.txt"
    save_corpus(corpus, f)
    loaded = load_corpus(f, num_entities=kg.num_entities)
    assert loaded == corpus
    header = f.read_text(encoding="utf-8").splitlines()[0]
    assert header == "pathe-corpus v1 n=3 max_len=4 seed=5"


def test_corpus_same_seed_identical_bytes(tmp_path):
    rng = np.random.default_rng(22)
    kg = make_kg(tmp_path, random_triples(rng, 15, 2, 40))
    digests = []
    for run in range(2):
        corpus = mine_all(kg, n=3, max_len=4, seed=9)
        f = tmp_path / f"c{run}.txt"
        save_corpus(corpus, f)
        digests.append(hashlib.sha256(f.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_empty_corpus_file(tmp_path):
    corpus = PathCorpus([[], []], n=1, max_len=2, seed=0)
    f = tmp_path / "empty.txt"
    save_corpus(corpus, f)
    loaded = load_corpus(f, num_entities=2)
    assert loaded.paths == [[], []]


def test_hand_written_corpus_lines(tmp_path):
    f = tmp_path / "hand.txt"
    f.write_text("pathe-corpus v1 n=2 max_len=3 seed=4\n"
                 "0 O 0 5 1 6 2\n"
                 "2 I 1 3 2\n", encoding="utf-8")
    corpus = load_corpus(f)
    assert corpus.n == 2 and corpus.max_len == 3 and corpus.seed == 4
    assert corpus.paths[0] == [Path(OUTGOING, (0, 1, 2), (5, 6))]
    assert corpus.paths[2] == [Path(INCOMING, (1, 2), (3,))]


def test_corpus_version_mismatch(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("pathe-corpus v2 n=1 max_len=2 seed=3\n", encoding="utf-8")
    with pytest.raises(DataError, match="version mismatch"):
        load_corpus(f)


def test_corpus_malformed_record(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("pathe-corpus v1 n=1 max_len=2 seed=3\n0 O 0 5\n", encoding="utf-8")
    with pytest.raises(DataError, match="bad.txt:2"):
        load_corpus(f)


def test_corpus_anchor_mismatch(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("pathe-corpus v1 n=1 max_len=2 seed=3\n9 O 0 5 1\n", encoding="utf-8")
    with pytest.raises(DataError, match="anchor"):
        load_corpus(f)


def test_rng_stream_stability():
    a = rng_stream(5, "paths", 3).integers(1 << 30)
    b = rng_stream(5, "paths", 3).integers(1 << 30)
    c = rng_stream(5, "paths", 4).integers(1 << 30)
    assert a == b
    assert a != c
