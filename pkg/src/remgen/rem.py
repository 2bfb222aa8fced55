"""Radio environmental maps, multi-MNO aggregation, and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InsufficientDataError, ValidationError
from .geo import LocalPoint, Scenario, unproject

NO_COVERAGE = float("nan")
DEFAULT_REM_RX_HEIGHT_M = 1.5


@dataclass
class REMGrid:
    bbox: tuple                 # (xmin, ymin, xmax, ymax) local meters
    resolution_m: float
    rows: int
    cols: int
    rx_height_m: float
    layers: dict = field(default_factory=dict)  # cell_id -> (rows, cols) dBm

    def cell_centers(self):
        """(x, y) arrays of evaluated grid centers, clamped into the bbox."""
        xmin, ymin, xmax, ymax = self.bbox
        xs = xmin + (np.arange(self.cols) + 0.5) * self.resolution_m
        ys = ymin + (np.arange(self.rows) + 0.5) * self.resolution_m
        return np.clip(xs, xmin, xmax), np.clip(ys, ymin, ymax)


def make_grid(bbox, resolution_m, rx_height_m=DEFAULT_REM_RX_HEIGHT_M) -> REMGrid:
    if resolution_m <= 0:
        raise ValidationError("REM resolution must be > 0")
    xmin, ymin, xmax, ymax = bbox
    cols = int(math.ceil((xmax - xmin) / resolution_m))
    rows = int(math.ceil((ymax - ymin) / resolution_m))
    if rows < 1 or cols < 1:
        raise ValidationError("REM bbox is empty")
    return REMGrid(bbox=tuple(bbox), resolution_m=resolution_m, rows=rows,
                   cols=cols, rx_height_m=rx_height_m)


def generate_rem(s: Scenario, predictor, cell, resolution_m,
                 rx_height_m=DEFAULT_REM_RX_HEIGHT_M, grid: REMGrid = None,
                 outdoor_only=False, jobs=1) -> REMGrid:
    """Predict RSRP at every grid cell center for one radio cell.

    Cell centers sit rx_height_m above the terrain. With outdoor_only,
    centers inside a building footprint get the no-coverage sentinel.
    """
    if grid is None:
        grid = make_grid(s.bbox, resolution_m, rx_height_m)
    xs, ys = grid.cell_centers()
    jj, ii = np.meshgrid(np.arange(grid.cols), np.arange(grid.rows))
    px = xs[jj.ravel()]
    py = ys[ii.ravel()]
    ground = kernels.bilinear_batch(s.terrain.elevation, s.terrain.origin.x,
                                    s.terrain.origin.y, s.terrain.cell_size_m,
                                    np.ascontiguousarray(px), np.ascontiguousarray(py))
    points = [LocalPoint(x, y, g + grid.rx_height_m)
              for x, y, g in zip(px, py, ground)]

    masked = np.zeros(len(points), dtype=bool)
    if outdoor_only:
        for b in s.buildings:
            hit = kernels.points_in_polygon(np.ascontiguousarray(px),
                                            np.ascontiguousarray(py), b.footprint)
            masked |= hit

    if jobs and jobs > 1:
        values = _predict_parallel(s, predictor, cell, points, jobs)
    else:
        values = predictor.predict_batch(s, cell, points)
    values = np.asarray(values, dtype=np.float64)
    values[masked] = NO_COVERAGE
    grid.layers[cell.id] = values.reshape(grid.rows, grid.cols)
    return grid


def _predict_parallel(s, predictor, cell, points, jobs):
    from concurrent.futures import ProcessPoolExecutor

    chunks = [points[i::jobs] for i in range(jobs)]
    order = [list(range(len(points)))[i::jobs] for i in range(jobs)]
    values = np.empty(len(points), dtype=np.float64)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(predictor.predict_batch, s, cell, chunk)
                   for chunk in chunks]
        for idxs, fut in zip(order, futures):
            values[idxs] = fut.result()
    return values


def best_server(rem: REMGrid, cells_by_mno: dict):
    """Per-MNO best layers and the cross-MNO argmax map.

    Returns (per_mno, mno_map, cell_map): per_mno maps MNO -> best RSRP
    array; mno_map / cell_map carry the winning MNO / cell id per grid
    cell. Ties resolve to the lexicographically smaller cell id (and MNO
    id across operators).
    """
    if not cells_by_mno:
        raise ValidationError("best_server: no MNO groups given")
    per_mno = {}
    per_mno_cell = {}
    for mno in sorted(cells_by_mno):
        cells = cells_by_mno[mno]
        ids = sorted(c.id for c in cells)
        if not ids:
            raise ValidationError(f"best_server: MNO {mno!r} has no cells")
        missing = [cid for cid in ids if cid not in rem.layers]
        if missing:
            raise ValidationError(f"best_server: missing REM layers for {missing}")
        stack = np.stack([rem.layers[cid] for cid in ids])
        arg = _nanargmax_first(stack)
        best = np.take_along_axis(stack, arg[None], axis=0)[0]
        per_mno[mno] = best
        per_mno_cell[mno] = np.array(ids, dtype=object)[arg]
    mnos = sorted(per_mno)
    all_best = np.stack([per_mno[m] for m in mnos])
    arg = _nanargmax_first(all_best)
    mno_map = np.array(mnos, dtype=object)[arg]
    cell_map = np.empty(mno_map.shape, dtype=object)
    for m in mnos:
        sel = mno_map == m
        cell_map[sel] = per_mno_cell[m][sel]
    return per_mno, mno_map, cell_map


def _nanargmax_first(stack):
    """argmax over axis 0, first index winning ties, NaN treated as -inf."""
    filled = np.where(np.isnan(stack), -np.inf, stack)
    return np.argmax(filled, axis=0)


@dataclass(frozen=True)
class EvalReport:
    rmse_db: float
    mae_db: float
    bias_db: float
    abs_error_ecdf: np.ndarray  # sorted ascending, length n
    n: int


def evaluate(predictions, measurements) -> EvalReport:
    """Error metrics for aligned prediction/measurement pairs (pred - meas)."""
    pred = np.asarray(predictions, dtype=np.float64)
    meas = np.asarray(measurements, dtype=np.float64)
    if pred.shape != meas.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {meas.shape}")
    if pred.size == 0:
        raise InsufficientDataError("evaluate: no prediction/measurement pairs")
    err = pred - meas
    abs_err = np.sort(np.abs(err))
    return EvalReport(
        rmse_db=float(np.sqrt(np.mean(err * err))),
        mae_db=float(np.mean(np.abs(err))),
        bias_db=float(np.mean(err)),
        abs_error_ecdf=abs_err,
        n=int(err.size),
    )


# ---------------------------------------------------------------------------
# exports


def rem_to_csv(grid: REMGrid, scenario: Scenario, path):
    """CSV rows south-to-north, west-to-east; one rsrp column per layer."""
    import csv

    xs, ys = grid.cell_centers()
    cell_ids = list(grid.layers)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_m", "y_m", "lat", "lon"]
                        + [f"rsrp_{cid}" for cid in cell_ids])
        for i in range(grid.rows):
            for j in range(grid.cols):
                gp = unproject(LocalPoint(xs[j], ys[i], 0.0), scenario.projection)
                row = [f"{xs[j]:.3f}", f"{ys[i]:.3f}", f"{gp.lat:.8f}", f"{gp.lon:.8f}"]
                for cid in cell_ids:
                    v = grid.layers[cid][i, j]
                    row.append("" if np.isnan(v) else f"{v:.4f}")
                writer.writerow(row)


def heatmap_pgm(layer: np.ndarray, path):
    """PGM export; intensity = clamp((rsrp + 140) / 80, 0, 1) * 255 rounded."""
    vals = np.asarray(layer, dtype=np.float64)
    scaled = np.clip((vals + 140.0) / 80.0, 0.0, 1.0)
    scaled = np.where(np.isnan(scaled), 0.0, scaled)
    data = np.rint(scaled * 255.0).astype(np.uint8)[::-1]  # row 0 at top = north
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n# intensity = round(clamp((rsrp_dbm + 140)/80, 0, 1) * 255)\n")
        fh.write(f"{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def ecdf_to_csv(report: EvalReport, path):
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["abs_error_db", "cum_probability"])
        for i, e in enumerate(report.abs_error_ecdf):
            writer.writerow([f"{e:.6f}", f"{(i + 1) / report.n:.6f}"])
