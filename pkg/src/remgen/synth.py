"""Synthetic prism-city generator with known ground truth.

The generated world uses the urban-macro baseline plus the
obstacle-shadowing excess as its true propagation law, so the learned
correction has a well-posed target: the Bayes-optimal prediction RMSE
equals the injected measurement noise. Outputs are byte-identical for a
fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import channels, kernels, raypath
from .errors import ValidationError
from .geo import (GeoPoint, M_PER_DEG, Projection, load_scenario, project,
                  unproject, LocalPoint)

RSRP_SAFE_RANGE_DBM = (-150.0, -35.0)  # keep clear of the plausibility gate
RSRP_CLAMP_DBM = (-159.5, -30.5)       # hard clamp for extreme noise draws


@dataclass(frozen=True)
class SynthParams:
    width_m: float = 500.0
    height_m: float = 500.0
    n_buildings: int = 50
    building_size_m: tuple = (15.0, 35.0)
    building_height_m: tuple = (8.0, 20.0)
    n_cells: int = 2
    antenna_height_m: tuple = (30.0, 40.0)
    freq_mhz: float = 2600.0
    bandwidth_mhz: float = 20.0
    eirp_dbm_range: tuple = (70.0, 74.0)
    n_measurements: int = 5000
    noise_sigma_db: float = 2.0
    rx_height_m: float = 1.5
    min_cell_distance_m: float = 30.0
    terrain_base_z_m: float = 100.0
    terrain_amplitude_m: float = 4.0
    terrain_scale_m: float = 250.0
    lat0: float = 51.48
    lon0: float = 7.45
    seed: int = 0


def generate(params: SynthParams, out_dir):
    """Write scenario.json, terrain.asc, measurements.csv, truth.csv,
    bundle.json, and params.json under out_dir; returns the file map."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(params.seed)

    dlat = params.height_m / M_PER_DEG
    dlon = params.width_m / (M_PER_DEG * math.cos(math.radians(params.lat0)))
    lat_min = params.lat0 - dlat / 2
    lat_max = params.lat0 + dlat / 2
    lon_min = params.lon0 - dlon / 2
    lon_max = params.lon0 + dlon / 2
    proj = Projection.centered_at(0.5 * (lat_min + lat_max), 0.5 * (lon_min + lon_max))
    sw = project(GeoPoint(lat_min, lon_min), proj, z=0.0)
    ne = project(GeoPoint(lat_max, lon_max), proj, z=0.0)
    bbox = (sw.x, sw.y, ne.x, ne.y)

    terrain_path = out / "terrain.asc"
    _write_terrain(terrain_path, params, rng, lat_min, lon_min, dlat, dlon, proj)

    buildings = _make_buildings(params, rng, bbox)
    cells = _make_cells(params, rng, bbox)

    scenario_path = out / "scenario.json"
    doc = {
        "bbox": {"lat_min": lat_min, "lat_max": lat_max,
                 "lon_min": lon_min, "lon_max": lon_max},
        "buildings": [
            {"id": bid,
             "outline": [[unproject(LocalPoint(x, y, 0.0), proj).lat,
                          unproject(LocalPoint(x, y, 0.0), proj).lon]
                         for x, y in corners],
             "height_m": h}
            for bid, corners, h in buildings
        ],
        "cells": [
            {"id": cid, "mno": mno,
             "lat": unproject(LocalPoint(x, y, 0.0), proj).lat,
             "lon": unproject(LocalPoint(x, y, 0.0), proj).lon,
             "antenna_height_m": ant,
             "freq_mhz": params.freq_mhz,
             "bandwidth_mhz": params.bandwidth_mhz}
            for cid, mno, x, y, ant in cells
        ],
    }
    with open(scenario_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")

    scenario = load_scenario(scenario_path, terrain_path)

    true_eirp = {}
    lo, hi = params.eirp_dbm_range
    for cid, _, _, _, _ in cells:
        true_eirp[cid] = float(lo + (hi - lo) * rng.random())

    meas_rows, truth_rows = _make_measurements(params, rng, scenario, true_eirp)

    meas_path = out / "measurements.csv"
    truth_path = out / "truth.csv"
    _write_measurement_csv(meas_path, meas_rows)
    _write_measurement_csv(truth_path, truth_rows)

    bundle_path = out / "bundle.json"
    from .geo import save_bundle
    save_bundle(scenario, bundle_path)

    params_path = out / "params.json"
    with open(params_path, "w", encoding="utf-8") as fh:
        json.dump({"params": asdict(params), "true_eirp_dbm": true_eirp},
                  fh, sort_keys=True, indent=1)
        fh.write("\n")

    return {"scenario": scenario_path, "terrain": terrain_path,
            "measurements": meas_path, "truth": truth_path,
            "bundle": bundle_path, "params": params_path}


def _write_terrain(path, params, rng, lat_min, lon_min, dlat, dlon, proj):
    cs_deg = 25.0 / M_PER_DEG
    margin = 4
    ncols = int(math.ceil(dlon / cs_deg)) + 2 * margin
    nrows = int(math.ceil(dlat / cs_deg)) + 2 * margin
    xll = lon_min - margin * cs_deg
    yll = lat_min - margin * cs_deg
    # smooth random field: a few seeded cosine waves
    jj, ii = np.meshgrid(np.arange(ncols), np.arange(nrows))
    x_m = (xll + (jj + 0.5) * cs_deg - proj.lon0) * proj.m_per_deg_lon
    y_m = (yll + (ii + 0.5) * cs_deg - proj.lat0) * proj.m_per_deg_lat
    z = np.full((nrows, ncols), params.terrain_base_z_m, dtype=np.float64)
    if params.terrain_amplitude_m > 0:
        for _ in range(3):
            th = rng.random() * math.pi
            phase = rng.random() * 2 * math.pi
            amp = params.terrain_amplitude_m * (0.5 + 0.5 * rng.random())
            k = 2 * math.pi / (params.terrain_scale_m * (0.75 + 0.5 * rng.random()))
            z += amp * np.cos(k * (x_m * math.cos(th) + y_m * math.sin(th)) + phase) / 3.0
    lines = [f"ncols {ncols}", f"nrows {nrows}", f"xllcorner {xll!r}",
             f"yllcorner {yll!r}", f"cellsize {cs_deg!r}", "NODATA_value -9999"]
    for r in range(nrows - 1, -1, -1):  # file rows run north to south
        lines.append(" ".join(f"{v:.4f}" for v in z[r]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def _make_buildings(params, rng, bbox):
    xmin, ymin, xmax, ymax = bbox
    out = []
    attempts = 0
    smin, smax = params.building_size_m
    hmin, hmax = params.building_height_m
    while len(out) < params.n_buildings:
        attempts += 1
        if attempts > params.n_buildings * 200:
            raise ValidationError("synth: cannot place buildings (bbox too crowded)")
        w = smin + (smax - smin) * rng.random()
        h = smin + (smax - smin) * rng.random()
        cx = xmin + (xmax - xmin) * rng.random()
        cy = ymin + (ymax - ymin) * rng.random()
        th = rng.random() * math.pi
        c, s = math.cos(th), math.sin(th)
        corners = []
        ok = True
        for ux, uy in ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)):
            px = cx + (ux * w) * c - (uy * h) * s
            py = cy + (ux * w) * s + (uy * h) * c
            if not (xmin + 1 <= px <= xmax - 1 and ymin + 1 <= py <= ymax - 1):
                ok = False
                break
            corners.append((px, py))
        if not ok:
            continue
        height = hmin + (hmax - hmin) * rng.random()
        out.append((f"b{len(out):03d}", corners, height))
    return out


def _make_cells(params, rng, bbox):
    xmin, ymin, xmax, ymax = bbox
    amin, amax = params.antenna_height_m
    margin = 0.15
    out = []
    for i in range(params.n_cells):
        cx = xmin + (xmax - xmin) * (margin + (1 - 2 * margin) * rng.random())
        cy = ymin + (ymax - ymin) * (margin + (1 - 2 * margin) * rng.random())
        ant = amin + (amax - amin) * rng.random()
        out.append((f"cell{i:02d}", f"op{i % 2 + 1}", cx, cy, ant))
    return out


def _make_measurements(params, rng, scenario, true_eirp):
    xmin, ymin, xmax, ymax = scenario.bbox
    pad = 2.0
    n_prb = channels.n_prb_from_bandwidth(params.bandwidth_mhz)
    prb_term = 10.0 * math.log10(n_prb * channels.N_SC)
    lo, hi = RSRP_SAFE_RANGE_DBM

    meas_rows = []
    truth_rows = []
    count = 0
    attempts = 0
    while count < params.n_measurements:
        attempts += 1
        if attempts > params.n_measurements * 100:
            raise ValidationError("synth: cannot place measurements "
                                  "(coverage window too tight)")
        x = xmin + pad + (xmax - xmin - 2 * pad) * rng.random()
        y = ymin + pad + (ymax - ymin - 2 * pad) * rng.random()
        noise = rng.standard_normal()
        cell = scenario.cells[count % len(scenario.cells)]
        dx = x - cell.position.x
        dy = y - cell.position.y
        if math.hypot(dx, dy) < params.min_cell_distance_m:
            continue
        if _inside_any_building(scenario, x, y):
            continue
        ground = scenario.ground_z(x, y)
        rx = LocalPoint(x, y, ground + params.rx_height_m)
        profile = raypath.trace(scenario, cell.position, rx)
        base = channels.baseline_path_loss(scenario, cell, rx, profile=profile)
        loss = channels.obstacle_shadowing(base, profile)
        rsrp_true = true_eirp[cell.id] - prb_term - loss
        if not lo <= rsrp_true <= hi:
            continue
        rsrp_noisy = rsrp_true + params.noise_sigma_db * noise
        rsrp_noisy = min(max(rsrp_noisy, RSRP_CLAMP_DBM[0]), RSRP_CLAMP_DBM[1])
        gp = unproject(LocalPoint(x, y, 0.0), scenario.projection)
        meas_rows.append((gp.lat, gp.lon, params.rx_height_m, cell.id, rsrp_noisy))
        truth_rows.append((gp.lat, gp.lon, params.rx_height_m, cell.id, rsrp_true))
        count += 1
    return meas_rows, truth_rows


def _inside_any_building(scenario, x, y):
    px = np.array([x])
    py = np.array([y])
    for b in scenario.buildings:
        bx0, by0, bx1, by1 = b.aabb
        if not (bx0 <= x <= bx1 and by0 <= y <= by1):
            continue
        if kernels.points_in_polygon(px, py, b.footprint)[0]:
            return True
    return False


def _write_measurement_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("lat,lon,alt_m,cell_id,rsrp_dbm\n")
        for lat, lon, alt, cid, rsrp in rows:
            fh.write(f"{lat:.8f},{lon:.8f},{alt:.2f},{cid},{rsrp:.6f}\n")
