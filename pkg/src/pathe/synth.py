"""Synthetic benchmark graphs with a learnable relational structure.

Entities are assigned hidden classes and the relation of every edge is a
deterministic function of the (head class, tail class) pair. The relation
of a held-out pair is therefore fully predictable from the contexts the
classes induce, which makes these graphs a convergence benchmark for the
relation-prediction head.
"""

from __future__ import annotations

from pathlib import Path as FsPath

import numpy as np


def class_relation(head_class: int, tail_class: int, num_relations: int) -> int:
    """Deterministic relation for a class pair: head class and tail parity."""
    return (2 * head_class + (tail_class % 2)) % num_relations


def class_kg_triples(n_entities: int = 500, n_classes: int = 5,
                     n_relations: int = 10, out_degree: int = 6,
                     seed: int = 0) -> list[tuple[str, str, str]]:
    """Named triples where rel = f(class(head), class(tail)).

    Every entity gets exactly ``out_degree`` outgoing edges to distinct
    random targets, so no entity is isolated and contexts are informative.
    """
    rng = np.random.default_rng(seed)
    triples = []
    for h in range(n_entities):
        targets = rng.choice(n_entities - 1, size=out_degree, replace=False)
        for t in targets:
            t = int(t) + (int(t) >= h)  # shift past h: no self loops
            r = class_relation(h % n_classes, t % n_classes, n_relations)
            triples.append((f"e{h}", f"r{r}", f"e{t}"))
    return triples


def split_triples(triples: list, seed: int = 0,
                  valid_frac: float = 0.1, test_frac: float = 0.1):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(triples))
    n_valid = int(len(triples) * valid_frac)
    n_test = int(len(triples) * test_frac)
    valid = [triples[i] for i in order[:n_valid]]
    test = [triples[i] for i in order[n_valid:n_valid + n_test]]
    train = [triples[i] for i in order[n_valid + n_test:]]
    return train, valid, test


def write_split_files(directory, train, valid, test) -> tuple[FsPath, FsPath, FsPath]:
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, rows in (("train", train), ("valid", valid), ("test", test)):
        path = directory / f"{name}.txt"
        path.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows),
                        encoding="utf-8")
        out.append(path)
    return tuple(out)
