"""Command-line entry points: train, eval, analyze, export, grid, synth.

Exit codes: 0 success, 2 usage/config error, 3 I/O or data-format error,
4 numeric failure during training.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .checkpoint import CheckpointError, check_compatible, export_text, load_checkpoint, save_checkpoint
from .data import ParseError, load_dataset, load_dictionary, relation_cardinality, save_dataset, \
    save_dictionaries
from .evaluation import SCORING_MODES, TIE_MODES, category_report, category_report_dict, \
    evaluate, format_metrics_table
from .model import Variant
from .synthetic import planted_kg, random_kg
from .train import ConfigError, TrainConfig, TrainingError, train

logger = logging.getLogger("quatkg")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULT_GRID = {"lr": [0.02, 0.05, 0.1], "negatives": [1, 5, 10], "dim": [128, 256, 384],
              "l2": [0.05, 0.1, 0.2, 0.5]}

CHECKPOINT = "checkpoint.bin"
TRAIN_LOG = "train_log.jsonl"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


def default_schedule(data_path) -> tuple[int, int]:
    """Epoch budget and monitor cadence: 2000/200 for FB15k-style data, else 8000/400."""
    return (2000, 200) if "fb" in Path(data_path).name.lower() else (8000, 400)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def _read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _run_training(data, variant, config: TrainConfig, out: Path) -> dict:
    ds = load_dataset(data)
    out.mkdir(parents=True, exist_ok=True)
    result = train(ds, config, variant)
    save_checkpoint(out / CHECKPOINT, result.params)
    result.log.write(out / TRAIN_LOG)
    save_dictionaries(ds, out)
    best = next((e for e in result.log.entries if e["epoch"] == result.best_epoch), None)
    manifest = {
        "command": "train",
        "data": str(Path(data)),
        "variant": variant.value,
        "seed": config.seed,
        "config": config.to_dict(),
        "checkpoint": str(out / CHECKPOINT),
        "log": str(out / TRAIN_LOG),
        "n_params": result.params.n_params(variant),
        "n_entities": ds.n_entities,
        "n_relations": ds.n_relations,
        "backend": kernels.BACKEND,
        "metrics": {
            "best_epoch": result.best_epoch,
            "valid_hits10": best["valid_hits10"] if best else None,
            "valid_mrr": best["valid_mrr"] if best else None,
            "final_mean_loss": result.log.entries[-1]["mean_loss"] if result.log.entries else None,
        },
    }
    _write_json(out / MANIFEST, manifest)
    return manifest


def _config_from_args(args) -> TrainConfig:
    epochs, every = default_schedule(args.data)
    return TrainConfig(
        lr=args.lr, negatives=args.neg, dim=args.dim, l2=args.l2, batches=args.batches,
        epochs=epochs if args.epochs is None else args.epochs,
        eval_every=every if args.eval_every is None else args.eval_every,
        seed=args.seed, float_width=args.float, init_rot=args.init_rot,
        filter_negatives=args.filter_negatives, dense_l2=args.dense_l2,
        monitor_split=args.monitor_split, ties=args.ties,
    ).validate()


def cmd_train(args) -> int:
    if args.from_manifest:
        m = _read_manifest(args.from_manifest)
        config = TrainConfig(**m["config"]).validate()
        data, variant = m["data"], Variant.parse(m["variant"])
    else:
        if not args.data:
            raise UsageError("train: --data is required (or --from-manifest)")
        config, data, variant = _config_from_args(args), args.data, Variant.parse(args.variant)
    manifest = _run_training(data, variant, config, Path(args.out))
    print(json.dumps({k: manifest[k] for k in ("variant", "n_params", "checkpoint", "metrics")}, indent=2))
    return EXIT_OK


def _resolve_checkpoint(args):
    """Checkpoint path and variant, from --checkpoint/--run and an adjacent manifest."""
    if args.run:
        ckpt = Path(args.run) / CHECKPOINT
    elif args.checkpoint:
        ckpt = Path(args.checkpoint)
    else:
        raise UsageError("one of --checkpoint or --run is required")
    manifest_path = ckpt.parent / MANIFEST
    manifest = _read_manifest(manifest_path) if manifest_path.is_file() else {}
    variant = args.variant or manifest.get("variant", "quatre")
    return ckpt, Variant.parse(variant), manifest


def cmd_eval(args) -> int:
    ckpt, variant, _ = _resolve_checkpoint(args)
    ds = load_dataset(args.data)
    params = load_checkpoint(ckpt)
    check_compatible(params, ds.n_entities, ds.n_relations, source=str(ckpt))
    report = evaluate(params, variant, ds, args.split, ties=args.ties, scoring=args.scoring, seed=args.seed)
    cells = category_report(report, relation_cardinality(ds))
    doc = report.to_dict()
    doc["per_category"] = category_report_dict(cells)
    doc["variant"] = variant.value
    doc["checkpoint"] = str(ckpt)
    doc["args"] = {"data": args.data, "split": args.split, "ties": args.ties, "scoring": args.scoring,
                   "seed": args.seed}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / f"eval_{args.split}.json", doc)
    table = f"variant: {variant.value}\n" + report.to_table()
    (out / f"eval_{args.split}.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def _relation_table(rows) -> str:
    width = max([len(r["relation"]) for r in rows] + [8])
    lines = [f"{'relation':<{width}}  {'count':>7} {'eta_h':>8} {'eta_t':>8} {'category':>9} {'MRR':>7}"]
    for r in rows:
        eta_h = "--" if r["eta_h"] is None else f"{r['eta_h']:.3f}"
        eta_t = "--" if r["eta_t"] is None else f"{r['eta_t']:.3f}"
        mrr = "--" if r.get("MRR") is None else f"{r['MRR']:.3f}"
        lines.append(f"{r['relation']:<{width}}  {r['count']:>7} {eta_h:>8} {eta_t:>8} "
                     f"{r['category'] or 'undefined':>9} {mrr:>7}")
    return "\n".join(lines)


def cmd_analyze(args) -> int:
    ds = load_dataset(args.data)
    stats = relation_cardinality(ds)
    labels = ds.relation_labels
    per_rel = {}
    cells = None
    if args.checkpoint or args.run:
        ckpt, variant, _ = _resolve_checkpoint(args)
        params = load_checkpoint(ckpt)
        check_compatible(params, ds.n_entities, ds.n_relations, source=str(ckpt))
        report = evaluate(params, variant, ds, args.split, ties=args.ties, scoring=args.scoring)
        per_rel = report.per_relation()
        cells = category_report(report, stats)
    rows = []
    for r, st in stats.items():
        rows.append({
            "relation": labels[r],
            "count": st.count,
            "eta_h": st.eta_h,
            "eta_t": st.eta_t,
            "category": st.category,
            "MRR": per_rel.get(labels[r], {}).get("MRR"),
        })
    doc = {"data": args.data, "relations": rows}
    text = _relation_table(rows)
    if cells is not None:
        doc["split"] = args.split
        doc["per_category"] = category_report_dict(cells)
        for side in ("head", "tail"):
            text += "\n\n" + format_metrics_table(
                [(cat, sides[side]) for cat, sides in cells.items()], title=f"predicting {side}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "analysis.json", doc)
    (out / "analysis.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_export(args) -> int:
    ckpt, _, _ = _resolve_checkpoint(args)
    params = load_checkpoint(ckpt)
    ent_labels = rel_labels = None
    dict_dir = Path(args.data) if args.data else ckpt.parent
    if (dict_dir / "entities.tsv").is_file():
        ent = load_dictionary(dict_dir / "entities.tsv")
        rel = load_dictionary(dict_dir / "relations.tsv")
    elif args.data:
        ds = load_dataset(args.data)
        ent, rel = ds.entities, ds.relations
    else:
        ent = rel = None
    if ent is not None:
        check_compatible(params, len(ent), len(rel), source=str(ckpt))
        ent_labels = sorted(ent, key=ent.get)
        rel_labels = sorted(rel, key=rel.get)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "embeddings.txt"
    export_text(path, params, ent_labels, rel_labels, relations=args.relations)
    print(path)
    return EXIT_OK


def _floats(text):
    return [float(x) for x in text.split(",")]


def _ints(text):
    return [int(x) for x in text.split(",")]


def cmd_grid(args) -> int:
    epochs, every = default_schedule(args.data)
    variant = Variant.parse(args.variant)
    out = Path(args.out)
    cells = []
    for i, (lr, neg, dim, l2) in enumerate(itertools.product(args.lrs, args.negs, args.dims, args.lambdas)):
        config = TrainConfig(
            lr=lr, negatives=neg, dim=dim, l2=l2, batches=args.batches,
            epochs=epochs if args.epochs is None else args.epochs,
            eval_every=every if args.eval_every is None else args.eval_every,
            seed=args.seed, float_width=args.float,
        ).validate()
        cell_dir = out / f"cell_{i:03d}_lr{lr}_s{neg}_n{dim}_l{l2}"
        logger.info("grid cell %d: %s", i, cell_dir.name)
        manifest = _run_training(args.data, variant, config, cell_dir)
        cells.append({"dir": str(cell_dir), "lr": lr, "negatives": neg, "dim": dim, "l2": l2,
                      **manifest["metrics"]})
    ranked = [c for c in cells if c["valid_hits10"] is not None]
    best = max(ranked, key=lambda c: c["valid_hits10"]) if ranked else None
    _write_json(out / "grid_summary.json", {"variant": variant.value, "cells": cells, "best": best})
    print(json.dumps({"best": best}, indent=2))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.kind == "random":
        ds = random_kg(args.entities, args.relations, args.train, args.valid, args.test, seed=args.seed)
    else:
        ds = planted_kg(args.entities, args.relations, args.train, args.valid, args.test, seed=args.seed)
    save_dataset(ds, args.out)
    print(args.out)
    return EXIT_OK


def _add_checkpoint_args(p):
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("--run", help="training output directory (uses its checkpoint and manifest)")
    p.add_argument("--variant", choices=[v.value for v in Variant],
                   help="score function (default: from the run manifest, else quatre)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quatkg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and keep the best validation checkpoint")
    p.add_argument("--data", help="directory with train.txt, valid.txt, test.txt")
    p.add_argument("--from-manifest", help="re-run the training recorded in a manifest.json")
    p.add_argument("--variant", default="quatre", choices=[v.value for v in Variant])
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--neg", type=int, default=5, help="negatives per training triple")
    p.add_argument("--lambda", dest="l2", type=float, default=0.1, help="L2 regularization rate")
    p.add_argument("--batches", type=int, default=100, help="batches per epoch")
    p.add_argument("--epochs", type=int, default=None, help="default: 2000 for FB*, else 8000")
    p.add_argument("--eval-every", type=int, default=None, help="default: 200 for FB*, else 400")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--float", type=int, choices=(32, 64), default=64)
    p.add_argument("--init-rot", choices=("uniform", "identity"), default="uniform")
    p.add_argument("--filter-negatives", action="store_true", help="redraw corruptions that are train triples")
    p.add_argument("--dense-l2", action="store_true", help="regularize every row at every step")
    p.add_argument("--monitor-split", choices=("train", "valid", "test"), default="valid")
    p.add_argument("--ties", choices=TIE_MODES, default="average")
    p.add_argument("--out", default="quatkg_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered MR/MRR/Hits@k of a checkpoint")
    p.add_argument("--data", required=True)
    _add_checkpoint_args(p)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--ties", choices=TIE_MODES, default="average")
    p.add_argument("--scoring", choices=SCORING_MODES, default="exact")
    p.add_argument("--seed", type=int, default=0, help="seed for --ties random")
    p.add_argument("--out", default="quatkg_out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="relation categories, per-relation and per-category metrics")
    p.add_argument("--data", required=True)
    _add_checkpoint_args(p)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--ties", choices=TIE_MODES, default="average")
    p.add_argument("--scoring", choices=SCORING_MODES, default="exact")
    p.add_argument("--out", default="quatkg_out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export", help="write embeddings as text for external tools")
    _add_checkpoint_args(p)
    p.add_argument("--data", help="dataset or dictionary directory for labels")
    p.add_argument("--relations", action="store_true", help="also export relation and rotation tables")
    p.add_argument("--out", default="quatkg_out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("grid", help="train every cell of a hyper-parameter grid")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", default="quatre", choices=[v.value for v in Variant])
    p.add_argument("--lrs", type=_floats, default=DEFAULT_GRID["lr"])
    p.add_argument("--negs", type=_ints, default=DEFAULT_GRID["negatives"])
    p.add_argument("--dims", type=_ints, default=DEFAULT_GRID["dim"])
    p.add_argument("--lambdas", type=_floats, default=DEFAULT_GRID["l2"])
    p.add_argument("--batches", type=int, default=100)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--float", type=int, choices=(32, 64), default=64)
    p.add_argument("--out", default="quatkg_grid")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="write a small synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("random", "planted"), default="planted")
    p.add_argument("--entities", type=int, default=50)
    p.add_argument("--relations", type=int, default=5)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--valid", type=int, default=50)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"quatkg {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError, CheckpointError) as exc:
        print(f"quatkg {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingError, FloatingPointError) as exc:
        print(f"quatkg {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
