"""``hypoxmil`` command-line interface.

Each subcommand wraps one module operation chain. Inputs are checked before
anything is written. On failure a single line goes to stderr::

    hypoxmil: error kind=<kind> exit=<code>: <message>

and the process exits with the code for that kind (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import config as cfgmod
from .config import CONFIG_ENV, ConfigError, PipelineConfig, load_config, parse_override, write_run_files

log = logging.getLogger("hypoxmil")

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "usage": 2,
    "missing_file": 3,
    "malformed_input": 4,
    "config": 5,
    "checkpoint": 6,
    "gradcheck_failed": 7,
    "invalid_data": 8,
}

EPILOG = f"""exit codes:
  0 success            4 malformed input file   7 gradient check failed
  1 internal error     5 config violation       8 data unusable for the request
  2 usage error        6 checkpoint load error
  3 missing/unreadable input file

The default config file is taken from ${CONFIG_ENV} when --config is not
given. Flags override config values; --set section.key=value overrides any
config entry (values parsed as JSON).
"""


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _fail(kind: str, message: str) -> CliError:
    return CliError(kind, message)


def _require_files(*paths) -> None:
    for p in paths:
        if p is None:
            continue
        if not Path(p).exists():
            raise _fail("missing_file", f"input not found: {p}")


def _parse(fn, path):
    """Run a file reader, reporting content errors as malformed input."""
    try:
        return fn(path)
    except (ValueError, KeyError, IndexError) as exc:
        msg = str(exc)
        raise _fail("malformed_input", msg if str(path) in msg else f"{path}: {msg}") from None


def _require_dir(path) -> None:
    if not Path(path).is_dir():
        raise _fail("missing_file", f"input directory not found: {path}")


# ---------------------------------------------------------------------------
# config resolution


def _resolve_config(args, extra: Optional[dict] = None, base: Optional[dict] = None) -> PipelineConfig:
    overrides = {}
    for item in getattr(args, "set", None) or []:
        k, v = parse_override(item)
        overrides[k] = v
    for key, value in (extra or {}).items():
        if value is not None:
            overrides[key] = value
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_config(getattr(args, "config", None), overrides, base=base)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    from .slideio import tile_slides, write_manifest
    from .synth import SynthConfig, make_dataset, write_dataset

    scfg = SynthConfig(
        n_per_class=args.n_per_class, tiles_per_sample=args.tiles_per_sample, tile_size=args.tile_size
    )
    cfg = _resolve_config(
        args,
        {"model.tile_size": args.tile_size, "tiling.tile_size": args.tile_size},
        base=cfgmod.SYNTHETIC_PRESET,
    )
    out = Path(args.out)
    ds = make_dataset(cfg.seed, scfg)
    paths = write_dataset(ds, out)
    manifest = tile_slides(
        [ds.slides[s] for s in ds.sample_ids],
        tile_size=cfg.tiling.tile_size,
        min_tissue=cfg.tiling.min_tissue,
        out_dir=out,
        seed=cfg.seed,
    )
    write_manifest(manifest, out / "manifest.csv")
    (out / "config.json").write_text(cfg.to_json())
    write_run_files(out, cfg, "synth")
    print(f"wrote {len(ds.sample_ids)} samples, {len(manifest.records)} tiles to {out}")
    for k, p in paths.items():
        print(f"{k}\t{p}")
    return 0


def cmd_tile(args) -> int:
    from .slideio import tile_slides, write_manifest

    inputs = []
    for p in args.slides:
        p = Path(p)
        _require_files(p)
        inputs += sorted(q for q in p.iterdir() if q.suffix.lower() in (".png", ".ppm")) if p.is_dir() else [p]
    if not inputs:
        raise _fail("missing_file", "no slide images found")
    cfg = _resolve_config(args, {"tiling.tile_size": args.tile_size, "tiling.min_tissue": args.min_tissue})
    out = Path(args.out)
    m = tile_slides(inputs, cfg.tiling.tile_size, cfg.tiling.min_tissue, out, cfg.seed, args.workers)
    write_manifest(m, out / "manifest.csv")
    write_run_files(out, cfg, "tile", {f"slide{i}": p for i, p in enumerate(inputs)})
    print(f"{len(m.records)} tiles from {len(inputs)} slides -> {out / 'manifest.csv'}")
    return 0


def cmd_label(args) -> int:
    from .sigstrat import parse_gmt, read_expression_tsv, signature_scores, stratify, write_labels

    _require_files(args.expression, args.gmt)
    cfg = _resolve_config(args, {"label.gene_set": args.gene_set, "label.mode": args.mode, "label.k": args.k})
    sets = {gs.name: gs for gs in parse_gmt(args.gmt)}
    if cfg.label.gene_set not in sets:
        raise _fail("invalid_data", f"gene set {cfg.label.gene_set!r} not in {args.gmt} (have {sorted(sets)})")
    expr = read_expression_tsv(args.expression)
    labels = stratify(signature_scores(expr, sets[cfg.label.gene_set]), cfg.label.mode, cfg.label.k)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_labels(labels, out)
    write_run_files(out.parent, cfg, "label", {"expression": args.expression, "gmt": args.gmt})
    n_h = sum(1 for lab in labels if lab.target == 1)
    n_n = sum(1 for lab in labels if lab.target == 0)
    print(f"{n_h} hypoxic, {n_n} normoxic, {len(labels) - n_h - n_n} unlabeled -> {out}")
    return 0


def _load_inputs(manifest_path, labels_path):
    from .sigstrat import label_targets, read_labels
    from .slideio import load_manifest_tiles, read_manifest

    _require_files(manifest_path, labels_path)
    labels = label_targets(read_labels(labels_path))
    manifest = read_manifest(manifest_path)
    tiles = load_manifest_tiles(manifest, samples=set(labels))
    missing = sorted(set(labels) - set(tiles))
    if missing:
        raise _fail("invalid_data", f"{len(missing)} labeled samples have no tiles, e.g. {missing[:3]}")
    return manifest, labels, tiles


def _train_cfg_overrides(args) -> dict:
    return {"train.epochs": args.epochs, "train.lr": args.lr, "train.bag_size": args.bag_size}


def cmd_train(args) -> int:
    from .evalstat import make_splits, read_splits, splits_table
    from .milnet import save_checkpoint
    from .milnet.train import train_on_tiles, write_loss_log
    from .protocol import repeat_rng

    _require_files(args.splits)
    cfg = _resolve_config(args, _train_cfg_overrides(args))
    manifest, labels, tiles = _load_inputs(args.manifest, args.labels)
    if manifest.tile_size != cfg.model.tile_size:
        raise _fail(
            "config",
            f"manifest tiles are {manifest.tile_size} px but model.tile_size is {cfg.model.tile_size}; "
            "pass the dataset config or --set model.tile_size=...",
        )
    out = Path(args.out)
    if args.all:
        jobs = [("model", sorted(labels), np.random.default_rng(cfg.seed))]
    else:
        plans = _parse(read_splits, args.splits) if args.splits else make_splits(
            labels, cfg.eval.n_repeats, cfg.eval.test_fraction, cfg.seed
        )
        unknown = sorted({s for p in plans for s in p.train + p.test} - set(labels))
        if unknown:
            raise _fail("invalid_data", f"split plan names unlabeled samples, e.g. {unknown[:3]}")
        out.mkdir(parents=True, exist_ok=True)
        (out / "splits.csv").write_text(splits_table(plans))
        jobs = [(f"repeat{p.repeat}/model", p.train, repeat_rng(cfg.seed, p.repeat)) for p in plans]
    write_run_files(out, cfg, "train", {"manifest": args.manifest, "labels": args.labels, "splits": args.splits})
    for stem, ids, rng in jobs:
        res = train_on_tiles(cfg.model, cfg.train, {s: tiles[s] for s in ids}, {s: labels[s] for s in ids}, rng)
        path = out / f"{stem}.hxnc"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(res.model, path, res.metadata)
        write_loss_log(res.loss_log, path.parent / "loss.csv")
        print(f"{path}\tfinal_loss={res.loss_log[-1][1]:.6f}" if res.loss_log else str(path))
    return 0


def _repeat_checkpoints(run: Path):
    from .evalstat import read_splits

    _require_files(run / "splits.csv")
    plans = _parse(read_splits, run / "splits.csv")
    for p in plans:
        _require_files(run / f"repeat{p.repeat}" / "model.hxnc")
    return plans


def cmd_eval(args) -> int:
    from .evalstat import Metrics, metrics_table
    from .figures import auc_svg, confusion_svg
    from .milnet import load_checkpoint
    from .protocol import evaluate_model, scores_table, write_text

    run = Path(args.run)
    _require_dir(run)
    plans = _repeat_checkpoints(run)
    cfg = _resolve_config(args)
    _, labels, tiles = _load_inputs(args.manifest, args.labels)
    out = Path(args.out or run)
    aucs, confs, rows = [], [], []
    for p in plans:
        model = load_checkpoint(run / f"repeat{p.repeat}" / "model.hxnc").model
        scores, auc, conf = evaluate_model(model, tiles, labels, p.test, cfg.eval.threshold)
        aucs.append(auc)
        confs.append(conf)
        rows += [(p.repeat, sid, labels[sid], scores[sid]) for sid in sorted(scores)]
    metrics = Metrics(aucs, confs)
    write_text(out / "metrics.csv", metrics_table(metrics))
    write_text(out / "scores.csv", scores_table(rows))
    write_text(out / "auc.svg", auc_svg(metrics))
    c = confs[0]
    write_text(out / "confusion.svg", confusion_svg(c.tp, c.fp, c.tn, c.fn, f"Confusion matrix, split {plans[0].repeat}"))
    write_run_files(out, cfg, "eval", {"manifest": args.manifest, "labels": args.labels, "splits": run / "splits.csv"})
    for rep, auc in zip((p.repeat for p in plans), aucs):
        print(f"repeat {rep}\tAUC {auc:.4f}")
    print(f"mean AUC {metrics.mean:.4f} +/- {metrics.sd:.4f}")
    return 0


def _select_samples(args, manifest) -> list[str]:
    from .evalstat import read_splits

    if args.splits:
        _require_files(args.splits)
        plans = {p.repeat: p for p in _parse(read_splits, args.splits)}
        if args.repeat not in plans:
            raise _fail("invalid_data", f"repeat {args.repeat} not in {args.splits}")
        return plans[args.repeat].test
    if args.samples:
        return args.samples
    return manifest.samples()


def cmd_score_tiles(args) -> int:
    from .milnet import load_checkpoint
    from .protocol import single_tile_calls, tile_calls_table, write_text
    from .slideio import load_manifest_tiles, read_manifest

    _require_files(args.checkpoint, args.manifest)
    cfg = _resolve_config(args, {"eval.tile_threshold": args.threshold})
    model = load_checkpoint(args.checkpoint).model
    manifest = read_manifest(args.manifest)
    ids = _select_samples(args, manifest)
    tiles = load_manifest_tiles(manifest, samples=set(ids))
    missing = sorted(set(ids) - set(tiles))
    if missing:
        raise _fail("invalid_data", f"samples without tiles in manifest: {missing[:3]}")
    calls = single_tile_calls(model, tiles, ids, cfg.eval.tile_threshold)
    out = Path(args.out)
    write_text(out, tile_calls_table(calls))
    write_run_files(out.parent, cfg, "score-tiles", {"checkpoint": args.checkpoint, "manifest": args.manifest})
    n_h = sum(c.label == 1 for c in calls)
    print(f"{len(calls)} confident tiles ({n_h} hypoxic, {len(calls) - n_h} normoxic) -> {out}")
    return 0


def cmd_cam(args) -> int:
    from .milnet import load_checkpoint
    from .milnet.cam import grad_cam, overlay
    from .slideio import read_image, write_png

    _require_files(args.checkpoint, *args.tiles)
    if not args.tiles:
        raise _fail("usage", "give at least one --tile")
    model = load_checkpoint(args.checkpoint).model
    out = Path(args.out)
    for p in args.tiles:
        tile = read_image(p)
        if tile.shape[0] != model.config.tile_size or tile.shape[1] != model.config.tile_size:
            raise _fail("invalid_data", f"{p}: tile is {tile.shape[:2]}, model expects {model.config.tile_size}")
        heat = grad_cam(model, tile)
        stem = Path(p).stem
        write_png(out / f"{stem}_cam.png", np.rint(heat * 255).astype(np.uint8))
        write_png(out / f"{stem}_overlay.png", overlay(tile, heat))
        print(out / f"{stem}_overlay.png")
    return 0


def cmd_texture(args) -> int:
    from .protocol import read_tile_calls
    from .slideio import TileManifest, read_manifest
    from .texfeat import batch_features

    _require_files(args.manifest, args.tile_scores)
    cfg = _resolve_config(args)
    manifest = read_manifest(args.manifest)
    if args.tile_scores:
        keep = {(c.sample_id, c.tile_index) for c in _parse(read_tile_calls, args.tile_scores)}
        recs = [r for r in manifest.records if (r.sample_id, r.tile_index) in keep]
        manifest = TileManifest(manifest.tile_size, manifest.min_tissue, manifest.seed, recs, manifest.root)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = batch_features(manifest, out, workers=args.workers)
    write_run_files(out.parent, cfg, "texture", {"manifest": args.manifest, "tile_scores": args.tile_scores})
    print(f"{len(rows)} tiles -> {out}")
    return 0


def cmd_shape(args) -> int:
    from .morpho import describe_mask, read_cell_types, read_label_mask, write_shape_table

    specs = []
    for item in args.mask:
        group, sep, path = item.partition("=")
        if not sep:
            group, path = Path(item).stem, item
        specs.append((group, path))
    _require_files(*(p for _, p in specs), args.cell_types)
    cfg = _resolve_config(args)
    types = read_cell_types(args.cell_types) if args.cell_types else None
    if args.keep_type and types is None:
        raise _fail("usage", "--keep-type needs --cell-types")
    rows = []
    for group, path in specs:
        for props in describe_mask(read_label_mask(path), types, args.keep_type):
            rows.append((group, props))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_shape_table(rows, out)
    write_run_files(out.parent, cfg, "shape", {f"mask:{g}": p for g, p in specs} | {"cell_types": args.cell_types})
    print(f"{len(rows)} regions -> {out}")
    return 0


def _read_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    from itertools import combinations

    from .evalstat import Metrics, Confusion, mann_whitney
    from .figures import auc_svg, boxplot_svg
    from .morpho import RegionProps
    from .protocol import GroupComparison, comparison_table, read_tile_calls, write_text
    from .texfeat import FEATURE_NAMES

    _require_files(args.texture, args.tile_scores, args.shape, args.metrics)
    if not (args.texture or args.shape or args.metrics):
        raise _fail("usage", "give --texture with --tile-scores, --shape, or --metrics")
    if bool(args.texture) != bool(args.tile_scores):
        raise _fail("usage", "--texture and --tile-scores go together")
    cfg = _resolve_config(args)
    out = Path(args.out)
    written = []
    if args.texture:
        calls = {c.tile_id: c for c in _parse(read_tile_calls, args.tile_scores)}
        feats = _parse(_read_csv, args.texture)
        groups: dict[int, dict[str, list[float]]] = {1: {}, 0: {}}
        for row in feats:
            c = calls.get(row.get("tile_id", ""))
            if c is None:
                continue
            for name in FEATURE_NAMES:
                groups[c.label].setdefault(name, []).append(float(row[name]))
        if not groups[1] or not groups[0]:
            raise _fail("invalid_data", "texture comparison needs tiles called both hypoxic and normoxic")
        comps = []
        for name in FEATURE_NAMES:
            a, b = groups[1][name], groups[0][name]
            comps.append(GroupComparison(name, a, b, mann_whitney(a, b)))
            svg = boxplot_svg([("hypoxic", a), ("normoxic", b)], [(0, 1, comps[-1].test)], name, name)
            written.append(write_text(out / f"texture_{name}.svg", svg))
        written.append(write_text(out / "texture_stats.csv", comparison_table(comps)))
    if args.shape:
        rows = _parse(_read_csv, args.shape)
        by_group: dict[str, list[dict]] = {}
        for r in rows:
            by_group.setdefault(r["source"], []).append(r)
        names = sorted(by_group)
        if len(names) < 2:
            raise _fail("invalid_data", "shape report needs at least two source groups")
        import csv
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["descriptor", "group_a", "group_b", "n_a", "n_b", "u", "p", "stars", "method"])
        for col in RegionProps.columns()[1:]:
            vals = {g: [float(r[col]) for r in by_group[g] if r[col] != ""] for g in names}
            pairs = []
            for i, j in combinations(range(len(names)), 2):
                a, b = vals[names[i]], vals[names[j]]
                if not a or not b:
                    continue
                t = mann_whitney(a, b)
                pairs.append((i, j, t))
                w.writerow([col, names[i], names[j], len(a), len(b), repr(t.u), repr(t.p), t.stars, t.method])
            if all(vals[g] for g in names):
                svg = boxplot_svg([(g, vals[g]) for g in names], pairs, col, col)
                written.append(write_text(out / f"shape_{col}.svg", svg))
        written.append(write_text(out / "shape_stats.csv", buf.getvalue()))
    if args.metrics:
        rows = [r for r in _parse(_read_csv, args.metrics) if r["repeat"] != "mean"]
        m = Metrics(
            [float(r["auc"]) for r in rows],
            [Confusion(int(r["tp"]), int(r["fp"]), int(r["tn"]), int(r["fn"])) for r in rows if r["tp"] != ""],
        )
        written.append(write_text(out / "auc.svg", auc_svg(m)))
    write_run_files(
        out, cfg, "report",
        {"texture": args.texture, "tile_scores": args.tile_scores, "shape": args.shape, "metrics": args.metrics},
    )
    for p in written:
        print(p)
    return 0


def cmd_gradcheck(args) -> int:
    from .milnet.checks import model_gradient_check, small_config

    cfg = small_config(args.tile_size, [int(c) for c in args.backbone.split(",")])
    worst = 0.0
    failed = []
    for seed in range(args.seed_start, args.seed_start + args.seeds):
        rep = model_gradient_check(seed, cfg, bag_size=args.bag_size, tolerance=args.tolerance)
        worst = max(worst, rep.max_rel_error)
        print(f"seed {seed}\t{'PASS' if rep.passed else 'FAIL'}\tmax_rel_error={rep.max_rel_error:.3e}")
        if not rep.passed:
            failed.append(seed)
            if args.verbose:
                print(rep.summary())
    print(f"{'PASS' if not failed else 'FAIL'} seeds={args.seeds} worst={worst:.3e} tol={args.tolerance:g}")
    if failed:
        raise _fail("gradcheck_failed", f"gradient check failed for seeds {failed}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help=f"pipeline config JSON (default: ${CONFIG_ENV})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry, e.g. train.lr=0.01")
    if seed:
        p.add_argument("--seed", type=int, help="master seed (splits and training)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypoxmil",
        description="Attention-MIL hypoxia classification of H&E tiles: tiling, weak labels, training, "
        "evaluation, single-tile scoring, CAM, texture and shape analysis.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name: str, fn: Callable, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_, description=help_, epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate the synthetic benchmark (slides, tiles, expression, gene sets)")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--tiles-per-sample", type=int, default=20)
    p.add_argument("--tile-size", type=int, default=64)
    _common(p)

    p = add("tile", cmd_tile, "cut slides into tiles and write a manifest")
    p.add_argument("--slides", nargs="+", required=True, help="slide images or directories of them")
    p.add_argument("--out", required=True)
    p.add_argument("--tile-size", type=int)
    p.add_argument("--min-tissue", type=float)
    p.add_argument("--workers", type=int, default=1)
    _common(p)

    p = add("label", cmd_label, "score a gene signature and write weak labels")
    p.add_argument("--expression", required=True, help="expression TSV (genes x samples)")
    p.add_argument("--gmt", required=True)
    p.add_argument("--out", required=True, help="labels CSV")
    p.add_argument("--gene-set")
    p.add_argument("--mode", choices=["median_split", "top_bottom_k"])
    p.add_argument("--k", type=int)
    _common(p)

    p = add("train", cmd_train, "train one model per split repeat (or one on all samples with --all)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--splits", help="split plan CSV; generated from the seed when omitted")
    p.add_argument("--all", action="store_true", help="train a single model on every labeled sample")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--bag-size", type=int)
    _common(p)

    p = add("eval", cmd_eval, "score held-out samples of each repeat; write metrics and figures")
    p.add_argument("--run", required=True, help="output directory of 'train'")
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", help="default: the run directory")
    _common(p, seed=False)

    p = add("score-tiles", cmd_score_tiles, "score tiles as singleton bags and keep confident calls")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="tile scores CSV")
    p.add_argument("--threshold", type=float)
    p.add_argument("--splits", help="restrict to the test samples of --repeat")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--samples", nargs="+")
    _common(p, seed=False)

    p = add("cam", cmd_cam, "grad-CAM heat maps and overlays for tiles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tile", dest="tiles", action="append", default=[], required=True)
    p.add_argument("--out", required=True)
    _common(p, seed=False)

    p = add("texture", cmd_texture, "GLCM features for tiles of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="texture CSV")
    p.add_argument("--tile-scores", help="only tiles listed in this score-tiles CSV")
    p.add_argument("--workers", type=int, default=1)
    _common(p, seed=False)

    p = add("shape", cmd_shape, "shape descriptors of labelled regions")
    p.add_argument("--mask", action="append", required=True, metavar="[GROUP=]PNG", help="16-bit label mask")
    p.add_argument("--cell-types", help="CSV instance_id,cell_type")
    p.add_argument("--keep-type", help="only regions of this cell type")
    p.add_argument("--out", required=True, help="shape CSV")
    _common(p, seed=False)

    p = add("report", cmd_report, "boxplot figures with rank-test stars from texture/shape/metric CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--texture")
    p.add_argument("--tile-scores")
    p.add_argument("--shape")
    p.add_argument("--metrics")
    _common(p, seed=False)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of the full model in 64-bit")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed-start", type=int, default=0)
    p.add_argument("--tile-size", type=int, default=16)
    p.add_argument("--bag-size", type=int, default=3)
    p.add_argument("--backbone", default="3,4", help="comma-separated block widths")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _classify(exc: BaseException) -> str:
    from .milnet import CheckpointError, ConfigurationError
    from .sigstrat import ParseError
    from .slideio import ManifestError

    if isinstance(exc, CliError):
        return exc.kind
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return "missing_file"
    if isinstance(exc, CheckpointError):
        return "checkpoint"
    if isinstance(exc, (ConfigError, ConfigurationError)):
        return "config"
    if isinstance(exc, (ManifestError, ParseError, UnicodeDecodeError)):
        return "malformed_input"
    if isinstance(exc, OSError):
        return "missing_file"
    if isinstance(exc, (ValueError, KeyError, IndexError)):
        return "invalid_data" if not isinstance(exc, KeyError) else "malformed_input"
    return "internal"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.func(args) or 0)
    except Exception as exc:  # one line per failure, mapped to an exit code
        kind = _classify(exc)
        code = EXIT_CODES[kind]
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"hypoxmil: error kind={kind} exit={code}: {msg}", file=sys.stderr)
        if kind == "internal" and getattr(args, "verbose", False):
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
