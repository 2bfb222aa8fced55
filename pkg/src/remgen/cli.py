"""Command-line pipeline: ingest -> fit-eirp -> extract -> train -> rem/evaluate.

Every command takes --seed, --config (JSON overrides), and --out; option
precedence is CLI flag > config file > built-in default, logged at
startup. Commands never mutate their inputs; each writes a manifest
(inputs digests, seed, version) next to its outputs. Exit codes:
0 success, 2 usage/validation, 3 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, channels, features, geo, rem, synth
from .errors import (CheckpointError, InsufficientDataError,
                     MissingPrerequisiteError, NumericError, OutOfBoundsError,
                     RemgenError, ScenarioFormatError, TrainingError,
                     ValidationError)
from .neural import (ArchitectureConfig, TrainConfig, load_checkpoint,
                     save_checkpoint, train)
from .predictors import ANALYTICAL_KINDS, DragonPredictor, make_predictor

log = logging.getLogger("remgen")

PREDICTOR_CHOICES = ANALYTICAL_KINDS + ("dragon",)

DEFAULTS = {
    "seed": 0,
    "jobs": 0,  # 0 = available parallelism
    "los_mode": "geometric",
    "resolution_m": 50.0,
    "rx_height_m": 1.5,
    "outdoor_only": False,
    "learning_rate": 0.001,
    "weight_decay": 0.0005,
    "batch_size": 128,
    "max_epochs": 100,
    "early_stop_patience": 10,
    "n_trials": 8,
    "search_max_epochs": 6,
    "synth": asdict(synth.SynthParams()),
}


def _defaults_digest():
    blob = json.dumps(DEFAULTS, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:8]


def version_string():
    return f"{__version__}+cfg.{_defaults_digest()}"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_jobs(jobs):
    if jobs and jobs > 0:
        return jobs
    return max(os.cpu_count() or 1, 1)


class Settings:
    """Merged option view: CLI flag > config file > defaults."""

    def __init__(self, args):
        self.config = {}
        self.config_path = getattr(args, "config", None)
        if self.config_path:
            try:
                with open(self.config_path, "r", encoding="utf-8") as fh:
                    self.config = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ScenarioFormatError(f"{self.config_path}: bad config ({exc})") from exc
            if not isinstance(self.config, dict):
                raise ScenarioFormatError(f"{self.config_path}: config must be a JSON object")
        self.args = args

    def get(self, key, default=None):
        cli = getattr(self.args, key.replace("-", "_"), None)
        if cli is not None:
            log.info("config: %s = %r (cli)", key, cli)
            return cli
        if key in self.config:
            log.info("config: %s = %r (config file)", key, self.config[key])
            return self.config[key]
        value = DEFAULTS.get(key, default) if default is None else default
        log.info("config: %s = %r (default)", key, value)
        return value


def write_manifest(out_dir, command, settings, inputs, outputs):
    doc = {
        "command": command,
        "version": version_string(),
        "seed": settings.get("seed"),
        "config_file": str(settings.config_path) if settings.config_path else None,
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).exists()},
        "outputs": [str(p) for p in outputs],
    }
    path = Path(out_dir) / f"manifest-{command}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args):
    settings = Settings(args)
    out = _out_dir(args)
    scenario = geo.load_scenario(args.scenario, args.terrain, args.heights)
    bundle = out / "bundle.json"
    geo.save_bundle(scenario, bundle)
    write_manifest(out, "ingest", settings,
                   [args.scenario, args.terrain, args.heights], [bundle])
    groups = scenario.cells_by_mno()
    print(f"ingested {len(scenario.buildings)} buildings, "
          f"{len(scenario.cells)} cells ({len(groups)} MNOs), "
          f"terrain {scenario.terrain.rows}x{scenario.terrain.cols}")
    print(f"bundle: {bundle}")
    return 0


def cmd_fit_eirp(args):
    settings = Settings(args)
    out = _out_dir(args)
    scenario = geo.load_bundle(args.bundle)
    measurements = geo.load_measurements(args.measurements, scenario)
    fitted = channels.fit_all_eirp(scenario, measurements,
                                   los_mode=settings.get("los_mode"))
    bundle = out / "bundle.json"
    geo.save_bundle(fitted, bundle)
    for cell in fitted.cells:
        if cell.eirp_dbm is None:
            print(f"{cell.id}: no measurements, EIRP left unset")
        else:
            print(f"{cell.id}: eirp = {cell.eirp_dbm:.2f} dBm")
    write_manifest(out, "fit-eirp", settings,
                   [args.bundle, args.measurements], [bundle])
    return 0


def cmd_synth(args):
    settings = Settings(args)
    out = _out_dir(args)
    base = dict(DEFAULTS["synth"])
    base.update({k: v for k, v in settings.config.items() if k in base})
    for key in ("n_buildings", "n_cells", "n_measurements", "noise_sigma_db",
                "width_m", "height_m", "terrain_amplitude_m"):
        cli = getattr(args, key, None)
        if cli is not None:
            base[key] = cli
    base["seed"] = settings.get("seed")
    for key in ("building_size_m", "building_height_m", "antenna_height_m",
                "eirp_dbm_range"):
        base[key] = tuple(base[key])
    params = synth.SynthParams(**base)
    paths = synth.generate(params, out)
    write_manifest(out, "synth", settings, [], list(paths.values()))
    print(f"synthetic scenario: {params.n_buildings} buildings, "
          f"{params.n_cells} cells, {params.n_measurements} measurements, "
          f"sigma={params.noise_sigma_db} dB")
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_extract(args):
    settings = Settings(args)
    out = _out_dir(args)
    scenario = geo.load_bundle(args.bundle)
    measurements = geo.load_measurements(args.measurements, scenario)
    jobs = _resolve_jobs(settings.get("jobs"))
    samples = features.build_dataset(scenario, measurements,
                                     los_mode=settings.get("los_mode"), jobs=jobs)
    dataset = out / "dataset.jsonl"
    features.save_dataset(samples, dataset)
    write_manifest(out, "extract", settings,
                   [args.bundle, args.measurements], [dataset])
    print(f"extracted {len(samples)} samples -> {dataset}")
    return 0


def cmd_train(args):
    settings = Settings(args)
    out = _out_dir(args)
    samples = features.load_dataset(args.dataset)
    seed = settings.get("seed")
    split = features.split_dataset(samples, seed=seed)
    norm_stats = features.fit_normalization(split.train)
    cfg = TrainConfig(
        learning_rate=settings.get("learning_rate"),
        weight_decay=settings.get("weight_decay"),
        batch_size=settings.get("batch_size"),
        max_epochs=settings.get("max_epochs"),
        early_stop_patience=settings.get("early_stop_patience"),
        seed=seed,
    )
    arch_overrides = settings.config.get("architecture", {})
    arch = (ArchitectureConfig.from_dict({**ArchitectureConfig().to_dict(),
                                          **arch_overrides})
            if arch_overrides else ArchitectureConfig())
    model, history = train(split, arch, cfg, norm_stats)

    report = _heldout_report(model, norm_stats, split,
                             history["target_mean"], history["target_std"])
    report["best_epoch"] = history["best_epoch"]
    report["epochs_run"] = len(history["train_mse"])
    checkpoint = out / "checkpoint.json"
    save_checkpoint(model, norm_stats, {
        "seed": seed,
        "epochs_run": len(history["train_mse"]),
        "best_epoch": history["best_epoch"],
        "final_train_mse": history["train_mse"][-1],
        "best_val_mse": history["best_val_mse"],
    }, checkpoint, target_mean=history["target_mean"],
        target_std=history["target_std"])
    history_path = out / "history.json"
    with open(history_path, "w", encoding="utf-8") as fh:
        json.dump(history, fh, sort_keys=True, indent=1)
        fh.write("\n")
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_manifest(out, "train", settings, [args.dataset],
                   [checkpoint, history_path, report_path])
    print(f"trained {report['epochs_run']} epochs (best epoch {report['best_epoch']})")
    print(f"held-out rmse: dragon {report['test_rmse_db']:.2f} dB | "
          f"uma-b baseline {report['baseline_test_rmse_db']:.2f} dB "
          f"(n={report['n_test']})")
    print(f"checkpoint: {checkpoint}")
    return 0


def _heldout_report(model, norm_stats, split, target_mean, target_std):
    """RSRP RMSE on the test partition for the model and the delta=0 baseline."""
    from .imaging import concat_vertical

    preds = []
    targets = []
    bs = 128
    for i in range(0, len(split.test), bs):
        chunk = split.test[i:i + bs]
        imgs = np.stack([concat_vertical(s.images) for s in chunk])[:, None, :, :]
        feats = np.stack([features.apply_normalization(s.features, norm_stats)
                          for s in chunk])
        out = model.forward(imgs, feats, training=False).astype(np.float64)
        preds.extend((out * target_std + target_mean).tolist())
        targets.extend(s.target_delta_db for s in chunk)
    preds = np.asarray(preds)
    targets = np.asarray(targets)
    # identical link-budget terms cancel: RSRP error == correction error
    dragon = rem.evaluate(preds, targets)
    baseline = rem.evaluate(np.zeros_like(targets), targets)
    return {
        "test_rmse_db": dragon.rmse_db,
        "test_mae_db": dragon.mae_db,
        "test_bias_db": dragon.bias_db,
        "baseline_test_rmse_db": baseline.rmse_db,
        "baseline_test_mae_db": baseline.mae_db,
        "n_test": dragon.n,
    }


def _load_positions(path, scenario):
    """lat,lon[,alt_m],cell_id rows; rsrp column optional and ignored."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"lat", "lon", "cell_id"}.issubset(reader.fieldnames):
            raise ScenarioFormatError(f"{path}: need header lat,lon[,alt_m],cell_id")
        for lineno, row in enumerate(reader, start=2):
            try:
                gp = geo.GeoPoint(float(row["lat"]), float(row["lon"]))
                alt = (row.get("alt_m") or "").strip()
                agl = float(alt) if alt else geo.DEFAULT_RX_HEIGHT_M
                cell_id = row["cell_id"].strip()
            except (TypeError, ValueError) as exc:
                raise ScenarioFormatError(f"{path}:{lineno}: malformed row") from exc
            p2 = geo.project(gp, scenario.projection, z=0.0)
            ground = geo.terrain_elevation(scenario.terrain, p2.x, p2.y)
            out.append((geo.LocalPoint(p2.x, p2.y, ground + agl), cell_id))
    return out


def _predict_rows(scenario, predictor, rows):
    """rows: [(LocalPoint, cell_id)]; returns per-row RSRP preserving order."""
    by_cell = {}
    for i, (pt, cid) in enumerate(rows):
        by_cell.setdefault(cid, []).append((i, pt))
    values = np.empty(len(rows), dtype=np.float64)
    for cid, items in by_cell.items():
        cell = scenario.cell_by_id(cid)
        pts = [pt for _, pt in items]
        vals = predictor.predict_batch(scenario, cell, pts)
        for (i, _), v in zip(items, vals):
            values[i] = v
    return values


def cmd_predict(args):
    settings = Settings(args)
    out = _out_dir(args)
    scenario = geo.load_bundle(args.bundle)
    predictor = make_predictor(args.predictor, checkpoint=args.checkpoint)
    rows = _load_positions(args.positions, scenario)
    values = _predict_rows(scenario, predictor, rows)
    pred_path = out / "predictions.csv"
    with open(pred_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lat", "lon", "alt_m", "cell_id", "rsrp_pred_dbm"])
        for (pt, cid), v in zip(rows, values):
            gp = geo.unproject(pt, scenario.projection)
            ground = geo.terrain_elevation(scenario.terrain, pt.x, pt.y)
            writer.writerow([f"{gp.lat:.8f}", f"{gp.lon:.8f}",
                             f"{pt.z - ground:.2f}", cid, f"{v:.4f}"])
    write_manifest(out, "predict", settings,
                   [args.bundle, args.positions, args.checkpoint], [pred_path])
    print(f"wrote {len(rows)} predictions -> {pred_path}")
    return 0


def cmd_rem(args):
    settings = Settings(args)
    out = _out_dir(args)
    scenario = geo.load_bundle(args.bundle)
    predictor = make_predictor(args.predictor, checkpoint=args.checkpoint)
    resolution = settings.get("resolution_m")
    rx_height = settings.get("rx_height_m")
    outdoor_only = bool(settings.get("outdoor_only", False) or args.outdoor_only)
    jobs = _resolve_jobs(settings.get("jobs"))
    grid = rem.make_grid(scenario.bbox, resolution, rx_height)
    cells = [c for c in scenario.cells if c.eirp_dbm is not None]
    if not cells:
        raise MissingPrerequisiteError("no cell has a fitted EIRP; run fit-eirp first")
    for cell in cells:
        rem.generate_rem(scenario, predictor, cell, resolution, rx_height,
                         grid=grid, outdoor_only=outdoor_only, jobs=jobs)
    outputs = []
    csv_path = out / "rem.csv"
    rem.rem_to_csv(grid, scenario, csv_path)
    outputs.append(csv_path)
    if args.heatmap:
        for cid, layer in grid.layers.items():
            p = out / f"rem_{cid}.pgm"
            rem.heatmap_pgm(layer, p)
            outputs.append(p)
    if args.best_server:
        per_mno, mno_map, cell_map = rem.best_server(grid, scenario.cells_by_mno())
        bs_path = out / "best_server.csv"
        xs, ys = grid.cell_centers()
        with open(bs_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x_m", "y_m", "mno", "cell_id", "rsrp_dbm"])
            for i in range(grid.rows):
                for j in range(grid.cols):
                    mno = mno_map[i, j]
                    writer.writerow([f"{xs[j]:.3f}", f"{ys[i]:.3f}", mno,
                                     cell_map[i, j],
                                     f"{per_mno[mno][i, j]:.4f}"])
        outputs.append(bs_path)
    write_manifest(out, "rem", settings, [args.bundle, args.checkpoint], outputs)
    print(f"REM {grid.rows}x{grid.cols} at {resolution} m for "
          f"{len(cells)} cells -> {csv_path}")
    return 0


def cmd_evaluate(args):
    settings = Settings(args)
    out = _out_dir(args)
    scenario = geo.load_bundle(args.bundle)
    measurements = geo.load_measurements(args.measurements, scenario)
    rows = [(m.position, m.cell_id) for m in measurements]
    observed = np.array([m.rsrp_dbm for m in measurements])
    report = {}
    print(f"{'predictor':<12} {'n':>6} {'rmse_db':>9} {'mae_db':>8} {'bias_db':>8}")
    outputs = []
    for kind in args.predictors:
        predictor = make_predictor(kind, checkpoint=args.checkpoint)
        values = _predict_rows(scenario, predictor, rows)
        ev = rem.evaluate(values, observed)
        print(f"{kind:<12} {ev.n:>6} {ev.rmse_db:>9.2f} {ev.mae_db:>8.2f} "
              f"{ev.bias_db:>8.2f}")
        ecdf_path = out / f"ecdf_{kind}.csv"
        rem.ecdf_to_csv(ev, ecdf_path)
        outputs.append(ecdf_path)
        report[kind] = {"n": ev.n, "rmse_db": ev.rmse_db, "mae_db": ev.mae_db,
                        "bias_db": ev.bias_db}
    report_path = out / "evaluation.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    outputs.append(report_path)
    write_manifest(out, "evaluate", settings,
                   [args.bundle, args.measurements, args.checkpoint], outputs)
    return 0


def cmd_search(args):
    """Seeded random search over training hyperparameters."""
    settings = Settings(args)
    out = _out_dir(args)
    samples = features.load_dataset(args.dataset)
    seed = settings.get("seed")
    n_trials = settings.get("n_trials")
    max_epochs = settings.get("search_max_epochs")
    split = features.split_dataset(samples, seed=seed)
    norm_stats = features.fit_normalization(split.train)
    rng = np.random.default_rng(seed)
    feature_widths = [(256, 128, 64, 32), (128, 64, 32), (64, 32)]
    trials = []
    for t in range(n_trials):
        lr = float(10.0 ** rng.uniform(-3.5, -2.5))
        widths = feature_widths[int(rng.integers(len(feature_widths)))]
        wd = float(10.0 ** rng.uniform(-4.0, -3.0))
        arch = ArchitectureConfig(feature_nn=widths)
        cfg = TrainConfig(learning_rate=lr, weight_decay=wd,
                          max_epochs=max_epochs, early_stop_patience=max_epochs,
                          seed=seed + t)
        _, history = train(split, arch, cfg, norm_stats)
        val = history["best_val_mse"]
        trials.append({"trial": t, "learning_rate": lr, "weight_decay": wd,
                       "feature_nn": list(widths), "best_val_mse": val})
        print(f"trial {t}: lr={lr:.2e} wd={wd:.2e} feature_nn={list(widths)} "
              f"val_mse={val:.4f}")
    best = min(trials, key=lambda d: d["best_val_mse"])
    result = {"trials": trials, "best": best}
    search_path = out / "search.json"
    with open(search_path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_manifest(out, "search", settings, [args.dataset], [search_path])
    print(f"best: lr={best['learning_rate']:.2e} feature_nn={best['feature_nn']} "
          f"val_mse={best['best_val_mse']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None, help="run seed")
    sub.add_argument("--config", default=None, help="JSON config overrides")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--jobs", type=int, default=None,
                     help="worker processes (0 = all cores)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="remgen",
        description="RSRP prediction and radio environmental map toolkit")
    parser.add_argument("--version", action="version", version=version_string())
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="INFO-level logging")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("ingest", help="validate raw inputs into a bundle")
    p.add_argument("--scenario", required=True)
    p.add_argument("--terrain", required=True)
    p.add_argument("--heights", default=None, help="optional height raster")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = subs.add_parser("fit-eirp", help="estimate per-cell EIRP from measurements")
    p.add_argument("--bundle", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--los-mode", choices=("geometric", "probabilistic_expected"),
                   default=None)
    _add_common(p)
    p.set_defaults(func=cmd_fit_eirp)

    p = subs.add_parser("synth", help="generate a synthetic scenario with truth")
    p.add_argument("--n-buildings", type=int, default=None, dest="n_buildings")
    p.add_argument("--n-cells", type=int, default=None, dest="n_cells")
    p.add_argument("--n-measurements", type=int, default=None, dest="n_measurements")
    p.add_argument("--noise-sigma-db", type=float, default=None, dest="noise_sigma_db")
    p.add_argument("--width-m", type=float, default=None, dest="width_m")
    p.add_argument("--height-m", type=float, default=None, dest="height_m")
    p.add_argument("--terrain-amplitude-m", type=float, default=None,
                   dest="terrain_amplitude_m")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("extract", help="assemble the training dataset")
    p.add_argument("--bundle", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--los-mode", choices=("geometric", "probabilistic_expected"),
                   default=None)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = subs.add_parser("train", help="train the correction network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("predict", help="predict RSRP at positions")
    p.add_argument("--bundle", required=True)
    p.add_argument("--positions", required=True,
                   help="CSV lat,lon[,alt_m],cell_id")
    p.add_argument("--predictor", choices=PREDICTOR_CHOICES, default="dragon")
    p.add_argument("--checkpoint", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("rem", help="generate radio environmental maps")
    p.add_argument("--bundle", required=True)
    p.add_argument("--predictor", choices=PREDICTOR_CHOICES, default="dragon")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--resolution-m", type=float, default=None)
    p.add_argument("--rx-height-m", type=float, default=None)
    p.add_argument("--outdoor-only", action="store_true", default=False)
    p.add_argument("--heatmap", action="store_true", help="also write PGM layers")
    p.add_argument("--best-server", action="store_true",
                   help="also write the multi-MNO best-server map")
    _add_common(p)
    p.set_defaults(func=cmd_rem)

    p = subs.add_parser("evaluate", help="compare predictors against measurements")
    p.add_argument("--bundle", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--predictors", nargs="+", choices=PREDICTOR_CHOICES,
                   required=True)
    p.add_argument("--checkpoint", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("search", help="seeded random hyperparameter search")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n-trials", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_search)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ScenarioFormatError, ValidationError, InsufficientDataError,
            MissingPrerequisiteError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (NumericError, TrainingError, OutOfBoundsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RemgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
