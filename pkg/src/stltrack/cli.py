"""Command-line front end: ``stltrack generate|train|evaluate|ablate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .assoc import write_neighbor_dump
from .config import ConfigError, RunManifest, config_hash, load_gen_config, load_grid, load_train_config
from .core import DatasetError, load_dataset, save_dataset
from .embed import load_checkpoint, save_checkpoint
from .evaluation import AblationRow, ablation_csv, evaluate_retrieval
from .synthgen import generate
from .trainer import TrainingError, run_training

log = logging.getLogger("stltrack")

CHECKPOINT = "model.ckpt"
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"
NEIGHBORS_CSV = "neighbors.csv"
METRICS_JSON = "metrics.json"
ABLATION_CSV = "ablation.csv"


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(config_path, out_dir, seed=None) -> Path:
    cfg = load_gen_config(config_path, seed)
    out = _out_dir(out_dir)
    manifest = RunManifest("generate", config_hash(cfg), cfg.seed, cfg.to_dict())
    ds = generate(cfg)
    data_path = save_dataset(ds, out)
    manifest.artifacts = {"dataset": data_path.name, "payload": data_path.with_suffix(".bin").name}
    manifest.finish(out)
    log.info("wrote %d tracklets / %d frames to %s", len(ds), ds.num_frames, out)
    return out


def _train_into(ds, cfg, out: Path):
    gt = ds.ground_truth() if ds.has_ground_truth else None
    model, report = run_training(ds, cfg, gt)
    save_checkpoint(model, out / CHECKPOINT)
    (out / REPORT_CSV).write_text(report.to_csv())
    (out / REPORT_JSON).write_text(report.to_json())
    write_neighbor_dump(report.neighbor_rows, out / NEIGHBORS_CSV)
    return model, report


def cmd_train(dataset_dir, config_path, out_dir, seed=None) -> Path:
    cfg = load_train_config(config_path, seed)
    ds = load_dataset(dataset_dir)
    out = _out_dir(out_dir)
    manifest = RunManifest(
        "train", config_hash(cfg), cfg.seed, cfg.to_dict(), inputs={"dataset": str(Path(dataset_dir).resolve())}
    )
    manifest.artifacts = {
        "checkpoint": CHECKPOINT,
        "report_csv": REPORT_CSV,
        "report_json": REPORT_JSON,
        "neighbors": NEIGHBORS_CSV,
    }
    try:
        _train_into(ds, cfg, out)
    except TrainingError as exc:
        (out / "failure.json").write_text(json.dumps({"error": str(exc), "state": exc.state}) + "\n")
        manifest.artifacts = {"failure": "failure.json"}
        manifest.finish(out, "failed")
        raise
    manifest.finish(out)
    return out


def _evaluate_into(ds, checkpoint, out: Path):
    res = evaluate_retrieval(load_checkpoint(checkpoint), ds)
    (out / METRICS_JSON).write_text(res.to_json())
    return res


def cmd_evaluate(dataset_dir, checkpoint, out_dir) -> Path:
    ckpt = Path(checkpoint)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    ds = load_dataset(dataset_dir)
    out = _out_dir(out_dir)
    manifest = RunManifest(
        "evaluate",
        "",
        None,
        {},
        inputs={"dataset": str(Path(dataset_dir).resolve()), "checkpoint": str(ckpt.resolve())},
    )
    manifest.artifacts = {"metrics": METRICS_JSON}
    res = _evaluate_into(ds, ckpt, out)
    manifest.finish(out)
    log.info("rank-1 %.4f  mAP %.4f over %d queries", res.rank1, res.map, len(res.ap))
    return out


def cmd_ablate(dataset_dir, config_path, grid_path, out_dir, seed=None) -> Path:
    """One sub-run per grid point; a failing point is recorded and the rest
    still run. Raises at the end if any point failed."""
    base = load_train_config(config_path, seed)
    points = load_grid(grid_path, base)  # rejects a bad grid before any training
    ds = load_dataset(dataset_dir)
    out = _out_dir(out_dir)
    manifest = RunManifest(
        "ablate",
        config_hash(base),
        base.seed,
        base.to_dict(),
        inputs={"dataset": str(Path(dataset_dir).resolve()), "grid": str(Path(grid_path).resolve())},
    )
    rows, failed = [], []
    width = len(str(len(points) - 1))
    for i, overrides in enumerate(points):
        cfg = base.with_overrides(**overrides)
        sub = _out_dir(out / f"point_{i:0{width}d}")
        sub_manifest = RunManifest("ablate-point", config_hash(cfg), cfg.seed, cfg.to_dict(), inputs={"overrides": overrides})
        sub_manifest.artifacts = {
            "checkpoint": CHECKPOINT,
            "report_csv": REPORT_CSV,
            "report_json": REPORT_JSON,
            "neighbors": NEIGHBORS_CSV,
            "metrics": METRICS_JSON,
        }
        try:
            _train_into(ds, cfg, sub)
            res = _evaluate_into(ds, sub / CHECKPOINT, sub)
        except (TrainingError, ValueError, FloatingPointError) as exc:
            log.error("grid point %d (%s) failed: %s", i, overrides, exc)
            (sub / "FAILED").write_text(f"{exc}\n")
            sub_manifest.artifacts = {"failure": "FAILED"}
            sub_manifest.finish(sub, "failed")
            rows.append(AblationRow(dict(overrides), None, None, error=str(exc)))
            failed.append(i)
            continue
        sub_manifest.finish(sub)
        rows.append(AblationRow(dict(overrides), res.rank1, res.map, res.cmc.tolist()))
        (out / ABLATION_CSV).write_text(ablation_csv(rows))  # keep partial results on disk
    (out / ABLATION_CSV).write_text(ablation_csv(rows))
    manifest.artifacts = {"table": ABLATION_CSV}
    manifest.artifacts.update({f"point_{i}": f"point_{i:0{width}d}/run.json" for i in range(len(points))})
    manifest.finish(out, "failed" if failed else "ok")
    if failed:
        raise RuntimeError(f"{len(failed)} of {len(points)} grid points failed: {failed}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stltrack", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic tracklet dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train an embedding head")
    t.add_argument("--dataset", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)

    e = sub.add_parser("evaluate", help="cross-camera retrieval metrics of a checkpoint")
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True)

    a = sub.add_parser("ablate", help="train and evaluate one model per grid point")
    a.add_argument("--dataset", required=True)
    a.add_argument("--config", required=True)
    a.add_argument("--grid", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "generate":
            cmd_generate(args.config, args.out, args.seed)
        elif args.command == "train":
            cmd_train(args.dataset, args.config, args.out, args.seed)
        elif args.command == "evaluate":
            cmd_evaluate(args.dataset, args.checkpoint, args.out)
        else:
            cmd_ablate(args.dataset, args.config, args.grid, args.out, args.seed)
    except ConfigError as exc:
        print(f"stltrack: config error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, FileNotFoundError, TrainingError, RuntimeError, ValueError) as exc:
        print(f"stltrack: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
