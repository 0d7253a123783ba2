"""Negative sampling, logistic loss with L2, sparse Adagrad and the epoch loop."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .evaluation import evaluate
from .model import ParamStore, Variant, init_params

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-10

# named sub-streams derived from the single run seed
STREAM_INIT, STREAM_SHUFFLE, STREAM_SAMPLE = 0, 1, 2


class ConfigError(ValueError):
    pass


class TrainingError(FloatingPointError):
    """Non-finite score or parameter during training."""


@dataclass
class TrainConfig:
    lr: float = 0.1
    negatives: int = 5
    dim: int = 128
    l2: float = 0.1
    batches: int = 100
    epochs: int = 8000
    eval_every: int = 400
    seed: int = 0
    float_width: int = 64
    init_rot: str = "uniform"
    filter_negatives: bool = False
    dense_l2: bool = False
    monitor_split: str = "valid"
    ties: str = "average"

    def validate(self) -> "TrainConfig":
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")
        if self.batches < 1:
            raise ConfigError("batches must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.float_width not in (32, 64):
            raise ConfigError("float_width must be 32 or 64")
        if self.init_rot not in ("uniform", "identity"):
            raise ConfigError("init_rot must be 'uniform' or 'identity'")
        if self.monitor_split not in ("train", "valid", "test"):
            raise ConfigError("monitor_split must be train, valid or test")
        return self

    @property
    def dtype(self):
        return np.float64 if self.float_width == 64 else np.float32

    def to_dict(self) -> dict:
        return asdict(self)


def stream(seed: int, name: int) -> np.random.Generator:
    return np.random.default_rng([seed, name])


def corrupt(triples, negatives: int, rng, n_entities: int, known=None, max_tries: int = 100) -> np.ndarray:
    """``negatives`` corruptions of every triple, as a ``(B * negatives, 3)`` array.

    Row ``k * negatives + j`` corrupts triple ``k``. Each corruption swaps the
    head or the tail (50/50) for a different, uniformly drawn entity. With
    ``known`` (a set of triples), corruptions that hit a known triple are
    redrawn up to ``max_tries`` times.
    """
    if n_entities < 2:
        raise ConfigError("need at least 2 entities to corrupt a triple")
    if negatives < 1:
        raise ConfigError("negatives must be >= 1")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    out = np.repeat(triples, negatives, axis=0)
    todo = np.arange(len(out))
    for _ in range(max_tries):
        if not len(todo):
            break
        orig = triples[todo // negatives]
        col = np.where(rng.random(len(todo)) < 0.5, 0, 2)
        current = orig[np.arange(len(todo)), col]
        # uniform over the other n-1 entities
        draw = rng.integers(0, n_entities - 1, size=len(todo))
        draw = draw + (draw >= current)
        out[todo] = orig
        out[todo, col] = draw
        if known is None:
            break
        todo = todo[np.fromiter((tuple(row) in known for row in out[todo].tolist()), bool, len(todo))]
    return out


def sample_negatives(triple, s: int, rng, n_entities: int, known=None) -> np.ndarray:
    return corrupt([triple], s, rng, n_entities, known=known)


def _segment_sum(rows, values):
    """Sum ``values`` over equal ``rows``; returns unique rows and their sums."""
    order = np.argsort(rows, kind="stable")
    rows, values = rows[order], values[order]
    uniq, starts = np.unique(rows, return_index=True)
    return uniq, np.add.reduceat(values, starts, axis=0)


def loss_and_grad(params: ParamStore, variant, triples, labels, l2: float, dense_l2: bool = False):
    """Total loss and sparse gradients for one batch of labelled triples.

    Loss is ``sum softplus(-l * f) + l2 * sum(row ** 2)`` over every row read
    by the batch (every row of the variant's tables with ``dense_l2``).
    Gradients map table name to ``(rows, values)`` with unique, sorted rows.
    """
    variant = Variant.parse(variant)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if not len(triples):
        raise ValueError("empty batch")
    scores, losses, gh, gt, grel, grot1, grot2 = kernels.logistic_grad(
        params.tables, triples, labels, variant.uses_rot1, variant.uses_rot2
    )
    if not np.isfinite(scores).all():
        bad = int(np.flatnonzero(~np.isfinite(scores))[0])
        raise TrainingError(f"non-finite score for triple {tuple(triples[bad].tolist())}")
    total = float(losses.sum(dtype=np.float64))
    rel_rows = triples[:, 1]
    per_table = {
        "entity": (np.concatenate([triples[:, 0], triples[:, 2]]), np.concatenate([gh, gt])),
        "relation": (rel_rows, grel),
        "rot1": (rel_rows, grot1),
        "rot2": (rel_rows, grot2),
    }
    grads = {}
    for name in variant.tables:
        rows, values = _segment_sum(*per_table[name])
        table = params.table(name)
        if l2 > 0:
            if dense_l2:
                rows_all = np.arange(table.shape[0])
                dense = np.zeros_like(table)
                dense[rows] = values
                rows, values = rows_all, dense
            block = table[rows]
            total += l2 * float(np.square(block, dtype=np.float64).sum())
            values = values + 2.0 * l2 * block
        grads[name] = (rows, values)
    return total, grads


def adagrad_step(params: ParamStore, grads, lr: float, eps: float = ADAGRAD_EPS) -> None:
    """In-place sparse Adagrad: ``acc += g**2; theta -= lr * g / (sqrt(acc) + eps)``."""
    for name, (rows, g) in grads.items():
        table = params.table(name)
        acc = params.accumulators[name]
        if g.shape[1:] != table.shape[1:]:
            raise ValueError(f"gradient for {name} has shape {g.shape}, table rows are {table.shape[1:]}")
        acc_rows = acc[rows] + g * g
        acc[rows] = acc_rows
        table[rows] -= lr * g / (np.sqrt(acc_rows) + eps)


@dataclass
class TrainLog:
    header: dict
    entries: list[dict] = field(default_factory=list)

    def lines(self) -> list[str]:
        return [json.dumps({"header": self.header})] + [json.dumps(e) for e in self.entries]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(self.lines()) + "\n")

    @classmethod
    def read(cls, path) -> "TrainLog":
        with open(path, encoding="utf-8") as f:
            rows = [json.loads(line) for line in f if line.strip()]
        return cls(rows[0]["header"], rows[1:])


@dataclass
class TrainResult:
    params: ParamStore  # best checkpoint by monitored Hits@10
    final: ParamStore
    log: TrainLog
    best_epoch: int
    best_hits10: float | None


def batches_for_epoch(n: int, n_batches: int, rng) -> list[np.ndarray]:
    """Shuffle ``0..n-1`` and cut into contiguous batches of ``ceil(n / n_batches)``."""
    size = max(1, math.ceil(n / n_batches))
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def train(ds, config: TrainConfig, variant=Variant.QUATRE, *, params=None, on_monitor=None) -> TrainResult:
    """Train ``variant`` on ``ds.train``.

    Every ``eval_every`` epochs (and after the last epoch) the filtered
    Hits@10 and MRR on ``config.monitor_split`` are recorded; the parameters
    with the best Hits@10 are returned. When the monitored split is empty the
    latest parameters win.
    """
    config.validate()
    variant = Variant.parse(variant)
    if ds.n_entities < 2:
        raise ConfigError("need at least 2 entities")
    if params is None:
        params = init_params(ds.n_entities, ds.n_relations, config.dim, None, dtype=config.dtype,
                             init_rot=config.init_rot, rng=stream(config.seed, STREAM_INIT))
    shuffle_rng = stream(config.seed, STREAM_SHUFFLE)
    sample_rng = stream(config.seed, STREAM_SAMPLE)
    known = set(map(tuple, ds.train.tolist())) if config.filter_negatives else None
    train_triples = ds.train
    monitor = ds.split(config.monitor_split)

    log = TrainLog(header={
        "variant": variant.value,
        "config": config.to_dict(),
        "n_entities": ds.n_entities,
        "n_relations": ds.n_relations,
        "n_params": params.n_params(variant),
        "backend": kernels.BACKEND,
    })
    best, best_epoch, best_hits = params.copy(), 0, None
    start = time.perf_counter()
    s = config.negatives

    for epoch in range(1, config.epochs + 1):
        epoch_loss, epoch_count = 0.0, 0
        for idx in batches_for_epoch(len(train_triples), config.batches, shuffle_rng):
            pos = train_triples[idx]
            neg = corrupt(pos, s, sample_rng, ds.n_entities, known=known)
            batch = np.concatenate([pos, neg])
            labels = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
            loss, grads = loss_and_grad(params, variant, batch, labels, config.l2, config.dense_l2)
            adagrad_step(params, grads, config.lr)
            epoch_loss += loss
            epoch_count += len(batch)
        if epoch % config.eval_every and epoch != config.epochs:
            continue
        if not params.all_finite():
            raise TrainingError(f"non-finite parameters after epoch {epoch}")
        entry = {"epoch": epoch, "mean_loss": epoch_loss / max(epoch_count, 1),
                 "valid_hits10": None, "valid_mrr": None}
        if len(monitor):
            m = evaluate(params, variant, ds, config.monitor_split, ties=config.ties).metrics()
            entry["valid_hits10"], entry["valid_mrr"] = m.hits10, m.mrr
        entry["wall_seconds"] = round(time.perf_counter() - start, 3)
        log.entries.append(entry)
        logger.info("epoch %d loss %.5f hits10 %s mrr %s", epoch, entry["mean_loss"],
                    entry["valid_hits10"], entry["valid_mrr"])
        hits = entry["valid_hits10"]
        if hits is None or best_hits is None or hits > best_hits:
            best, best_epoch, best_hits = params.copy(), epoch, hits
        if on_monitor is not None:
            on_monitor(entry, params)
    return TrainResult(params=best, final=params, log=log, best_epoch=best_epoch, best_hits10=best_hits)
