"""Parameter storage and the QuatRE family of score functions.

For a triple ``(h, r, t)`` with entity embeddings ``v_h, v_t``, relation
embedding ``v_r`` and the two relation-aware rotations ``v_r1, v_r2``::

    QuatRE    ((v_h ⊗ N(v_r1)) ⊗ N(v_r)) • (v_t ⊗ N(v_r2))
    OnlyRot1  ((v_h ⊗ N(v_r1)) ⊗ N(v_r)) • v_t
    OnlyRot2  (v_h ⊗ N(v_r)) • (v_t ⊗ N(v_r2))
    QuatE     (v_h ⊗ N(v_r)) • v_t

where ``N`` normalizes every coordinate to a unit quaternion. Stored
parameters are un-normalized; ``N`` is applied inside every forward pass.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels

TABLES = ("entity", "relation", "rot1", "rot2")

HEAD, TAIL = 0, 1
SIDES = {"head": HEAD, "tail": TAIL}


class Variant(enum.Enum):
    QUATRE = "quatre"
    QUATE = "quate"
    ONLY_ROT1 = "onlyrot1"
    ONLY_ROT2 = "onlyrot2"

    @property
    def uses_rot1(self) -> bool:
        return self in (Variant.QUATRE, Variant.ONLY_ROT1)

    @property
    def uses_rot2(self) -> bool:
        return self in (Variant.QUATRE, Variant.ONLY_ROT2)

    @property
    def tables(self) -> tuple[str, ...]:
        """Parameter tables this variant reads."""
        used = ["entity", "relation"]
        if self.uses_rot1:
            used.append("rot1")
        if self.uses_rot2:
            used.append("rot2")
        return tuple(used)

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        aliases = {"rot1": "onlyrot1", "rot2": "onlyrot2", "i": "onlyrot1", "ii": "onlyrot2"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown variant {value!r}; choose from {[v.value for v in cls]}") from None


@dataclass
class ParamStore:
    """All trainable tables, each shaped ``(rows, 4, n)``, plus Adagrad state."""

    entity: np.ndarray
    relation: np.ndarray
    rot1: np.ndarray
    rot2: np.ndarray
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        dim = self.entity.shape[-1]
        n_rel = self.relation.shape[0]
        for name in TABLES:
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[1] != 4 or arr.shape[2] != dim:
                raise ValueError(f"table {name} has shape {arr.shape}, expected (rows, 4, {dim})")
            if name != "entity" and arr.shape[0] != n_rel:
                raise ValueError(f"table {name} has {arr.shape[0]} rows, expected {n_rel}")
            if not arr.flags.c_contiguous:
                setattr(self, name, np.ascontiguousarray(arr))
        for name in TABLES:
            acc = self.accumulators.get(name)
            if acc is None or acc.shape != getattr(self, name).shape:
                self.accumulators[name] = np.zeros_like(getattr(self, name))

    @property
    def n_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[0]

    @property
    def dim(self) -> int:
        return self.entity.shape[-1]

    @property
    def dtype(self):
        return self.entity.dtype

    def table(self, name: str) -> np.ndarray:
        if name not in TABLES:
            raise KeyError(name)
        return getattr(self, name)

    @property
    def tables(self):
        return tuple(getattr(self, name) for name in TABLES)

    def n_params(self, variant=Variant.QUATRE) -> int:
        """Trainable scalars read by ``variant``."""
        variant = Variant.parse(variant)
        return sum(self.table(name).size for name in variant.tables)

    def copy(self) -> "ParamStore":
        return ParamStore(
            *(t.copy() for t in self.tables),
            accumulators={k: v.copy() for k, v in self.accumulators.items()},
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tables)


def expected_param_count(n_entities: int, n_relations: int, dim: int, variant=Variant.QUATRE) -> int:
    variant = Variant.parse(variant)
    rel_tables = len(variant.tables) - 1
    return n_entities * 4 * dim + rel_tables * n_relations * 4 * dim


def init_params(n_entities, n_relations, dim, seed, *, dtype=np.float64, init_rot="uniform", scale=None,
                rng=None) -> ParamStore:
    """Draw every component plane uniformly from ``[-s, s]`` with ``s = 1/sqrt(4n)``.

    ``init_rot="identity"`` instead starts both rotation tables at the
    identity quaternion. ``rng`` overrides ``seed`` when given.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if init_rot not in ("uniform", "identity"):
        raise ValueError(f"init_rot must be 'uniform' or 'identity', got {init_rot!r}")
    rng = np.random.default_rng(seed) if rng is None else rng
    s = 1.0 / np.sqrt(4 * dim) if scale is None else float(scale)

    def draw(rows):
        return rng.uniform(-s, s, size=(rows, 4, dim)).astype(dtype)

    entity = draw(n_entities)
    relation = draw(n_relations)
    rot1 = draw(n_relations)
    rot2 = draw(n_relations)
    if init_rot == "identity":
        for rot in (rot1, rot2):
            rot[:] = 0.0
            rot[:, 0, :] = 1.0
    return ParamStore(entity, relation, rot1, rot2)


def _check_triples(params: ParamStore, triples) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if triples.size:
        ents = triples[:, [0, 2]]
        if ents.min() < 0 or ents.max() >= params.n_entities:
            raise IndexError(f"entity id out of range [0, {params.n_entities})")
        if triples[:, 1].min() < 0 or triples[:, 1].max() >= params.n_relations:
            raise IndexError(f"relation id out of range [0, {params.n_relations})")
    return triples


def score_many(params: ParamStore, variant, triples) -> np.ndarray:
    """Scores of a ``(B, 3)`` array of triples."""
    variant = Variant.parse(variant)
    triples = _check_triples(params, triples)
    return kernels.score_triples(params.tables, triples, variant.uses_rot1, variant.uses_rot2)


def score(params: ParamStore, variant, triple) -> float:
    return float(score_many(params, variant, [triple])[0])


def score_batch(params: ParamStore, variant, triple, side) -> np.ndarray:
    """Scores of ``triple`` with the ``side`` entity replaced by every entity.

    The fixed side is rotated once. Each entry equals ``score`` of the
    corresponding substituted triple bit-for-bit.
    """
    variant = Variant.parse(variant)
    side = SIDES[side] if isinstance(side, str) else int(side)
    if side not in (HEAD, TAIL):
        raise ValueError(f"side must be head or tail, got {side!r}")
    triple = _check_triples(params, [triple])[0]
    return kernels.score_candidates(params.tables, triple, side, variant.uses_rot1, variant.uses_rot2)


def score_linear_probe(params: ParamStore, variant, triple, side) -> np.ndarray:
    """Candidate scores through a single matrix-vector product.

    The score is linear in the candidate embedding, so all rotations can be
    folded into one probe quaternion vector using ``(x ⊗ w) • y = x • (y ⊗ conj(w))``.
    Equal to ``score_batch`` up to rounding, much faster on large entity sets.
    """
    from .quat import conj, hamilton, normalize

    variant = Variant.parse(variant)
    side = SIDES[side] if isinstance(side, str) else int(side)
    h, r, t = (int(x) for x in _check_triples(params, [triple])[0])
    w = normalize(params.relation[r])
    w1 = normalize(params.rot1[r]) if variant.uses_rot1 else None
    w2 = normalize(params.rot2[r]) if variant.uses_rot2 else None
    if side == TAIL:
        a = hamilton(params.entity[h], w1) if w1 is not None else params.entity[h]
        probe = hamilton(a, w)
        if w2 is not None:
            probe = hamilton(probe, conj(w2))
    else:
        probe = hamilton(params.entity[t], w2) if w2 is not None else params.entity[t]
        probe = hamilton(probe, conj(w))
        if w1 is not None:
            probe = hamilton(probe, conj(w1))
    flat = params.entity.reshape(params.n_entities, -1)
    return flat @ probe.reshape(-1)


def score_backward(params: ParamStore, variant, triple, upstream: float) -> dict[str, dict[int, np.ndarray]]:
    """Gradient of ``upstream * score(triple)`` as ``{table: {row: (4, n) array}}``.

    Only tables read by ``variant`` appear. A triple with ``h == t`` yields a
    single, summed entity row.
    """
    variant = Variant.parse(variant)
    triple = _check_triples(params, [triple])
    gh, gt, grel, grot1, grot2 = kernels.score_grad(
        params.tables, triple, [upstream], variant.uses_rot1, variant.uses_rot2
    )
    h, r, t = (int(x) for x in triple[0])
    grads = {"entity": {h: gh[0].copy()}, "relation": {r: grel[0]}}
    grads["entity"][t] = grads["entity"].get(t, 0) + gt[0]
    if variant.uses_rot1:
        grads["rot1"] = {r: grot1[0]}
    if variant.uses_rot2:
        grads["rot2"] = {r: grot2[0]}
    return grads
