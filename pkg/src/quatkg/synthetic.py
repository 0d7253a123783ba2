"""Small synthetic knowledge graphs for tests, demos and ablations."""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .model import Variant, init_params, score_many


def random_kg(n_entities=50, n_relations=5, n_train=200, n_valid=0, n_test=0, seed=0) -> Dataset:
    """Distinct triples drawn uniformly, with no structure to generalize from."""
    rng = np.random.default_rng(seed)
    total = n_train + n_valid + n_test
    space = n_entities * n_relations * n_entities
    if total > space:
        raise ValueError(f"cannot draw {total} distinct triples from {space}")
    flat = rng.choice(space, size=total, replace=False)
    h, rest = np.divmod(flat, n_relations * n_entities)
    r, t = np.divmod(rest, n_entities)
    return _assemble(np.stack([h, r, t], axis=1), n_entities, n_relations, n_train, n_valid)


def planted_kg(n_entities=50, n_relations=5, n_train=200, n_valid=50, n_test=50, seed=0,
               teacher_dim=4) -> Dataset:
    """Triples planted by a random low-dimensional quaternion teacher.

    The highest-scoring ``(h, r, t)`` under a random QuatRE teacher form the
    graph, so held-out triples are predictable from the training ones.
    """
    rng = np.random.default_rng(seed)
    teacher = init_params(n_entities, n_relations, teacher_dim, None, rng=rng, scale=1.0)
    grid = np.stack(np.meshgrid(np.arange(n_entities), np.arange(n_relations), np.arange(n_entities),
                                indexing="ij"), axis=-1).reshape(-1, 3)
    scores = score_many(teacher, Variant.QUATRE, grid)
    total = n_train + n_valid + n_test
    chosen = grid[np.argsort(-scores, kind="stable")[:total]]
    chosen = chosen[rng.permutation(total)]
    return _assemble(chosen, n_entities, n_relations, n_train, n_valid)


def _assemble(triples, n_entities, n_relations, n_train, n_valid) -> Dataset:
    entities = {f"e{i}": i for i in range(n_entities)}
    relations = {f"r{i}": i for i in range(n_relations)}
    return Dataset(
        entities,
        relations,
        train=triples[:n_train],
        valid=triples[n_train:n_train + n_valid],
        test=triples[n_train + n_valid:],
    )
