"""Triple files, entity/relation dictionaries and the known-triple filter."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

CATEGORIES = ("1-1", "1-M", "M-1", "M-M")
#: Threshold on the averaged partner counts separating "1" from "M".
CARDINALITY_THRESHOLD = 1.5


class ParseError(ValueError):
    """A malformed line in a triple file."""

    def __init__(self, path, lineno, line, reason):
        self.path, self.lineno = Path(path), lineno
        super().__init__(f"{path}:{lineno}: {reason}: {line!r}")


class Triple(NamedTuple):
    h: int
    r: int
    t: int


@dataclass
class Dataset:
    """Integer-encoded train/valid/test triples plus dictionaries.

    Splits are ``(N, 3)`` int64 arrays of ``(head, relation, tail)``.
    """

    entities: dict[str, int]
    relations: dict[str, int]
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    path: Path | None = None
    warnings: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in SPLITS:
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 3)
            setattr(self, name, arr)
        self._filter = None
        self._index = None

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    @property
    def entity_labels(self) -> list[str]:
        return _inverse(self.entities)

    @property
    def relation_labels(self) -> list[str]:
        return _inverse(self.relations)

    @property
    def filter(self) -> set[tuple[int, int, int]]:
        """Every triple in train ∪ valid ∪ test."""
        if self._filter is None:
            all_triples = np.concatenate([self.train, self.valid, self.test])
            self._filter = set(map(tuple, all_triples.tolist()))
        return self._filter

    @property
    def index(self) -> "KnownTriples":
        if self._index is None:
            self._index = KnownTriples(self.filter)
        return self._index

    def known_tails(self, h: int, r: int) -> np.ndarray:
        return self.index.known_tails(h, r)

    def known_heads(self, r: int, t: int) -> np.ndarray:
        return self.index.known_heads(r, t)


class KnownTriples:
    """Lookup of known tails for ``(h, r)`` and known heads for ``(r, t)``."""

    _EMPTY = np.empty(0, dtype=np.intp)

    def __init__(self, triples):
        self._known = {(int(h), int(r), int(t)) for h, r, t in triples}
        tails, heads = defaultdict(set), defaultdict(set)
        for h, r, t in self._known:
            tails[int(h), int(r)].add(int(t))
            heads[int(r), int(t)].add(int(h))
        self._tails = {k: np.array(sorted(v), dtype=np.intp) for k, v in tails.items()}
        self._heads = {k: np.array(sorted(v), dtype=np.intp) for k, v in heads.items()}

    def known_tails(self, h: int, r: int) -> np.ndarray:
        return self._tails.get((h, r), self._EMPTY)

    def known_heads(self, r: int, t: int) -> np.ndarray:
        return self._heads.get((r, t), self._EMPTY)

    def __contains__(self, triple) -> bool:
        return tuple(int(x) for x in triple) in self._known


def _inverse(mapping):
    labels = [None] * len(mapping)
    for label, i in mapping.items():
        labels[i] = label
    return labels


def read_triples(path):
    """Parse a TAB-separated ``head<TAB>relation<TAB>tail`` file into label tuples."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"triple file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, line, f"expected 3 TAB-separated fields, got {len(parts)}")
            if not all(parts):
                raise ParseError(path, lineno, line, "empty field")
            out.append(tuple(parts))
    return out


def load_dataset(directory, entities=None, relations=None) -> Dataset:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from ``directory``.

    Ids are assigned in first-appearance order over train, then valid, then
    test, unless ``entities``/``relations`` dictionaries are given (new labels
    are then appended after the existing ids). Duplicate triples inside a
    split are dropped and counted; labels seen only outside train are kept.
    """
    directory = Path(directory)
    entities = dict(entities or {})
    relations = dict(relations or {})
    counts = {"duplicates": 0, "unseen_entities": 0, "unseen_relations": 0}
    splits = {}
    for name in SPLITS:
        rows, seen = [], set()
        for h, r, t in read_triples(directory / f"{name}.txt"):
            for label in (h, t):
                if label not in entities:
                    entities[label] = len(entities)
                    if name != "train":
                        counts["unseen_entities"] += 1
            if r not in relations:
                relations[r] = len(relations)
                if name != "train":
                    counts["unseen_relations"] += 1
            triple = (entities[h], relations[r], entities[t])
            if triple in seen:
                counts["duplicates"] += 1
                continue
            seen.add(triple)
            rows.append(triple)
        splits[name] = np.array(rows, dtype=np.int64).reshape(-1, 3)

    if counts["duplicates"]:
        logger.warning("%s: dropped %d duplicate triples", directory, counts["duplicates"])
    if counts["unseen_entities"] or counts["unseen_relations"]:
        logger.warning(
            "%s: %d entities and %d relations appear only outside train",
            directory, counts["unseen_entities"], counts["unseen_relations"],
        )
    return Dataset(entities, relations, path=directory, warnings=counts, **splits)


def save_dictionaries(ds: Dataset, directory) -> None:
    """Write ``entities.tsv`` and ``relations.tsv`` as ``id<TAB>label`` lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for fname, labels in (("entities.tsv", ds.entity_labels), ("relations.tsv", ds.relation_labels)):
        with open(directory / fname, "w", encoding="utf-8") as f:
            for i, label in enumerate(labels):
                f.write(f"{i}\t{label}\n")


def load_dictionary(path) -> dict[str, int]:
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            try:
                i, label = line.split("\t", 1)
                mapping[label] = int(i)
            except ValueError:
                raise ParseError(path, lineno, line, "expected id<TAB>label") from None
    if sorted(mapping.values()) != list(range(len(mapping))):
        raise ValueError(f"{path}: ids are not dense in [0, {len(mapping)})")
    return mapping


def save_triples(path, triples, ds: Dataset) -> None:
    ent, rel = ds.entity_labels, ds.relation_labels
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in np.asarray(triples).tolist():
            f.write(f"{ent[h]}\t{rel[r]}\t{ent[t]}\n")


def save_dataset(ds: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        save_triples(directory / f"{name}.txt", ds.split(name), ds)
    save_dictionaries(ds, directory)


@dataclass(frozen=True)
class RelationStats:
    count: int
    eta_h: float | None
    eta_t: float | None
    category: str | None  # None when the relation never occurs in train


def categorize(eta_h: float, eta_t: float) -> str:
    many_heads = eta_h >= CARDINALITY_THRESHOLD
    many_tails = eta_t >= CARDINALITY_THRESHOLD
    return {(False, False): "1-1", (False, True): "1-M", (True, False): "M-1", (True, True): "M-M"}[
        many_heads, many_tails
    ]


def relation_cardinality(ds: Dataset) -> dict[int, RelationStats]:
    """Averaged heads-per-tail and tails-per-head for every relation, from train only."""
    count = np.zeros(ds.n_relations, dtype=np.int64)
    heads = defaultdict(set)
    tails = defaultdict(set)
    for h, r, t in ds.train.tolist():
        count[r] += 1
        heads[r].add(h)
        tails[r].add(t)
    stats = {}
    for r in range(ds.n_relations):
        if count[r] == 0:
            stats[r] = RelationStats(0, None, None, None)
            continue
        eta_h = count[r] / len(tails[r])
        eta_t = count[r] / len(heads[r])
        stats[r] = RelationStats(int(count[r]), float(eta_h), float(eta_t), categorize(eta_h, eta_t))
    return stats
