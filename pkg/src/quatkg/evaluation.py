"""Filtered link-prediction ranking and MR / MRR / Hits@k reports."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import CATEGORIES, KnownTriples
from .model import HEAD, TAIL, ParamStore, Variant, score, score_batch, score_linear_probe

#: ``average`` adds half the tied competitors (rounded down); ``random`` adds
#: a uniform draw from ``0..ties`` seeded per query.
TIE_MODES = ("average", "optimistic", "pessimistic", "random")
SCORING_MODES = ("exact", "probe")
HITS_AT = (1, 3, 10)


def thread_count() -> int:
    """Worker cap from ``QUATKG_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("QUATKG_THREADS", "1")))
    except ValueError:
        return 1


def resolve_rank(n_greater: int, n_equal: int, ties: str = "average", rng=None) -> int:
    """Rank of a target with ``n_greater`` better and ``n_equal`` tied competitors."""
    if ties == "average":
        return 1 + n_greater + n_equal // 2
    if ties == "optimistic":
        return 1 + n_greater
    if ties == "pessimistic":
        return 1 + n_greater + n_equal
    if ties == "random":
        if rng is None:
            raise ValueError("random tie-breaking needs an rng")
        return 1 + n_greater + int(rng.integers(0, n_equal + 1))
    raise ValueError(f"unknown tie mode {ties!r}; choose from {TIE_MODES}")


def query_rng(seed: int, index: int, side: int):
    """Per-query stream for random tie-breaking; independent of evaluation order."""
    return np.random.default_rng([seed, index, side])


def _known(filt, triple, side):
    if filt is None:
        return np.empty(0, dtype=np.intp)
    if not isinstance(filt, KnownTriples) and not hasattr(filt, "known_tails"):
        filt = KnownTriples(filt)
    h, r, t = triple
    return filt.known_heads(r, t) if side == HEAD else filt.known_tails(h, r)


def rank(params: ParamStore, variant, triple, side, filt=None, ties="average", *, scoring="exact",
         rng=None) -> int:
    """Filtered rank of ``triple`` when predicting its ``side`` entity.

    ``filt`` is a :class:`~quatkg.data.Dataset`, a :class:`KnownTriples` or any
    iterable of known triples; candidates that form a known triple (other than
    ``triple`` itself) are excluded. ``None`` gives the raw rank.
    """
    side = {"head": HEAD, "tail": TAIL}.get(side, side)
    triple = tuple(int(x) for x in triple)
    target = triple[0] if side == HEAD else triple[2]
    if scoring == "exact":
        scores = score_batch(params, variant, triple, side)
    elif scoring == "probe":
        scores = score_linear_probe(params, variant, triple, side)
    else:
        raise ValueError(f"unknown scoring mode {scoring!r}; choose from {SCORING_MODES}")
    return rank_from_scores(scores, target, _known(filt, triple, side), ties, rng)


def rank_from_scores(scores, target: int, excluded=(), ties="average", rng=None) -> int:
    """Rank of ``scores[target]`` among all entries except ``excluded`` (descending)."""
    scores = np.asarray(scores)
    competitors = np.ones(scores.shape[0], dtype=bool)
    competitors[np.asarray(excluded, dtype=np.intp)] = False
    competitors[target] = False
    target_score = scores[target]
    others = scores[competitors]
    n_greater = int(np.count_nonzero(others > target_score))
    n_equal = int(np.count_nonzero(others == target_score))
    return resolve_rank(n_greater, n_equal, ties, rng)


@dataclass(frozen=True)
class Metrics:
    mr: float
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int

    @classmethod
    def from_ranks(cls, ranks) -> "Metrics | None":
        ranks = np.asarray(ranks, dtype=np.float64)
        if ranks.size == 0:
            return None
        return cls(
            mr=float(ranks.mean()),
            mrr=float((1.0 / ranks).mean()),
            hits1=float((ranks <= 1).mean()),
            hits3=float((ranks <= 3).mean()),
            hits10=float((ranks <= 10).mean()),
            count=int(ranks.size),
        )

    def as_dict(self) -> dict:
        """Hits are given in percent, as in the printed tables."""
        return {
            "MR": self.mr,
            "MRR": self.mrr,
            "H@10": 100.0 * self.hits10,
            "H@3": 100.0 * self.hits3,
            "H@1": 100.0 * self.hits1,
            "count": self.count,
        }


def _metrics_dict(m):
    return None if m is None else m.as_dict()


@dataclass
class EvalReport:
    """Per-triple head/tail ranks for one split, with aggregated views."""

    split: str
    triples: np.ndarray
    head_ranks: np.ndarray
    tail_ranks: np.ndarray
    ties: str = "average"
    relation_labels: list[str] | None = None
    extra: dict = field(default_factory=dict)

    def ranks(self, side="both") -> np.ndarray:
        if side == "head":
            return self.head_ranks
        if side == "tail":
            return self.tail_ranks
        if side == "both":
            return np.concatenate([self.head_ranks, self.tail_ranks])
        raise ValueError(f"side must be head, tail or both, got {side!r}")

    def metrics(self, side="both") -> Metrics | None:
        return Metrics.from_ranks(self.ranks(side))

    def _relation_name(self, r):
        return self.relation_labels[r] if self.relation_labels else str(r)

    def per_relation(self) -> dict[str, dict]:
        """MRR over both prediction sides, per relation present in the split."""
        out = {}
        rels = self.triples[:, 1] if len(self.triples) else np.empty(0, dtype=np.int64)
        for r in sorted(set(rels.tolist())):
            sel = rels == r
            ranks = np.concatenate([self.head_ranks[sel], self.tail_ranks[sel]])
            out[self._relation_name(r)] = {
                "relation_id": int(r),
                "MRR": float((1.0 / ranks).mean()),
                "count": int(sel.sum()),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "ties": self.ties,
            "overall": _metrics_dict(self.metrics("both")),
            "head": _metrics_dict(self.metrics("head")),
            "tail": _metrics_dict(self.metrics("tail")),
            "per_relation": self.per_relation(),
            **self.extra,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_table(self) -> str:
        return format_metrics_table(
            [(side, self.metrics(side)) for side in ("head", "tail", "both")],
            title=f"split: {self.split}  (ties: {self.ties})",
        )


def format_metrics_table(rows, title=None) -> str:
    """Columns MR, MRR, H@10, H@3, H@1; MR to one decimal, hits in percent."""
    lines = [title] if title else []
    width = max([len(str(name)) for name, _ in rows] + [6])
    lines.append(f"{'':<{width}}  {'MR':>9} {'MRR':>6} {'H@10':>6} {'H@3':>6} {'H@1':>6} {'n':>7}")
    for name, m in rows:
        if m is None:
            lines.append(f"{name:<{width}}  {'--':>9} {'--':>6} {'--':>6} {'--':>6} {'--':>6} {0:>7}")
            continue
        lines.append(
            f"{name:<{width}}  {m.mr:9.1f} {m.mrr:6.3f} {100 * m.hits10:6.1f} "
            f"{100 * m.hits3:6.1f} {100 * m.hits1:6.1f} {m.count:7d}"
        )
    return "\n".join(lines)


def evaluate(params: ParamStore, variant, ds, split="test", ties="average", *, scoring="exact", seed=0,
             workers=None, triples=None, filt=None) -> EvalReport:
    """Filtered head and tail ranks for every triple of ``split``.

    The filter defaults to all triples of ``ds``. ``triples`` overrides the
    split contents (``split`` then only labels the report).
    """
    variant = Variant.parse(variant)
    if ties not in TIE_MODES:
        raise ValueError(f"unknown tie mode {ties!r}; choose from {TIE_MODES}")
    triples = np.asarray(ds.split(split) if triples is None else triples, dtype=np.int64).reshape(-1, 3)
    filt = ds.index if filt is None else filt
    head = np.zeros(len(triples), dtype=np.int64)
    tail = np.zeros(len(triples), dtype=np.int64)

    def work(indices):
        for i in indices:
            tr = triples[i]
            for side, out in ((HEAD, head), (TAIL, tail)):
                rng = query_rng(seed, i, side) if ties == "random" else None
                out[i] = rank(params, variant, tr, side, filt, ties, scoring=scoring, rng=rng)

    workers = workers or thread_count()
    if workers > 1 and len(triples) > 1:
        chunks = np.array_split(np.arange(len(triples)), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))
    else:
        work(range(len(triples)))
    labels = ds.relation_labels if hasattr(ds, "relation_labels") else None
    return EvalReport(split, triples, head, tail, ties=ties, relation_labels=labels)


def evaluate_bruteforce(params: ParamStore, variant, ds, split="test", ties="average", *, seed=0,
                        triples=None) -> EvalReport:
    """Reference ranking: rescore every candidate triple one by one and sort.

    Slow; intended for small graphs as an oracle for :func:`evaluate`.
    """
    variant = Variant.parse(variant)
    triples = np.asarray(ds.split(split) if triples is None else triples, dtype=np.int64).reshape(-1, 3)
    known = ds.filter
    ranks = {HEAD: [], TAIL: []}
    for i, (h, r, t) in enumerate(triples.tolist()):
        for side in (HEAD, TAIL):
            target_score = None
            pool = []
            for e in range(params.n_entities):
                cand = (e, r, t) if side == HEAD else (h, r, e)
                is_target = e == (h if side == HEAD else t)
                if cand in known and not is_target:
                    continue
                s = score(params, variant, cand)
                if is_target:
                    target_score = s
                pool.append((s, is_target))
            ordered = sorted(pool, key=lambda item: -item[0])
            group = [k for k, (s, _) in enumerate(ordered) if s == target_score]
            n_greater = group[0]
            n_equal = len(group) - 1
            rng = query_rng(seed, i, side) if ties == "random" else None
            ranks[side].append(resolve_rank(n_greater, n_equal, ties, rng))
    labels = ds.relation_labels if hasattr(ds, "relation_labels") else None
    return EvalReport(split, triples, np.array(ranks[HEAD], dtype=np.int64),
                      np.array(ranks[TAIL], dtype=np.int64), ties=ties, relation_labels=labels)


def category_report(report: EvalReport, cardinalities) -> dict[str, dict]:
    """Head/tail metrics grouped by the category of each triple's relation.

    Empty cells are ``None``; relations with no category (absent from train)
    are grouped under ``"undefined"``.
    """
    cats = np.array(
        [cardinalities[r].category or "undefined" for r in report.triples[:, 1].tolist()], dtype=object
    )
    out = {}
    for cat in CATEGORIES + ("undefined",):
        sel = cats == cat if len(cats) else np.zeros(0, dtype=bool)
        out[cat] = {
            "head": Metrics.from_ranks(report.head_ranks[sel]),
            "tail": Metrics.from_ranks(report.tail_ranks[sel]),
        }
    return out


def category_report_dict(cells) -> dict:
    return {cat: {side: _metrics_dict(m) for side, m in sides.items()} for cat, sides in cells.items()}
