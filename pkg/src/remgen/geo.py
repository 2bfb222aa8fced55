"""Geographic ingestion: projections, buildings, terrain, cells, measurements.

Input formats:
  * scenario JSON: bbox {lat_min, lat_max, lon_min, lon_max},
    buildings [{id, outline: [[lat, lon], ...], height_m?}],
    cells [{id, mno, lat, lon, antenna_height_m, freq_mhz, bandwidth_mhz, eirp_dbm?}]
  * terrain / height raster: ESRI ASCII grid georeferenced in degrees,
    resampled onto a square local-frame grid at load
  * measurements CSV: lat,lon,alt_m,cell_id,rsrp_dbm

All downstream computation happens in a local tangent-plane frame:
x east, y north (meters), z meters above sea level.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import OutOfBoundsError, ScenarioFormatError, ValidationError

# Equirectangular scale; semi-major axis so one longitude degree at the
# equator measures ~111319.5 m.
WGS84_SEMI_MAJOR_M = 6378137.0
M_PER_DEG = math.pi * WGS84_SEMI_MAJOR_M / 180.0

DEFAULT_BUILDING_HEIGHT_M = 8.0
DEFAULT_RX_HEIGHT_M = 1.5

VALID_BANDWIDTHS_MHZ = (1.4, 3.0, 5.0, 10.0, 15.0, 20.0)
RSRP_PLAUSIBLE_DBM = (-160.0, -30.0)


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic position; alt_m is tagged by `alt_frame` (agl or asl)."""

    lat: float
    lon: float
    alt_m: float = 0.0
    alt_frame: str = "agl"

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class Projection:
    lat0: float
    lon0: float
    m_per_deg_lat: float
    m_per_deg_lon: float

    @classmethod
    def centered_at(cls, lat0, lon0):
        m_lat = M_PER_DEG
        return cls(lat0, lon0, m_lat, m_lat * math.cos(math.radians(lat0)))


@dataclass(frozen=True)
class LocalPoint:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValidationError(f"non-finite local point ({self.x}, {self.y}, {self.z})")


def project(p: GeoPoint, proj: Projection, z: float = None) -> LocalPoint:
    """Map a geodetic point into the local frame (altitude passed through)."""
    x = (p.lon - proj.lon0) * proj.m_per_deg_lon
    y = (p.lat - proj.lat0) * proj.m_per_deg_lat
    return LocalPoint(x, y, p.alt_m if z is None else z)


def unproject(p: LocalPoint, proj: Projection) -> GeoPoint:
    lat = p.y / proj.m_per_deg_lat + proj.lat0
    lon = p.x / proj.m_per_deg_lon + proj.lon0
    return GeoPoint(lat, lon, p.z, alt_frame="asl")


@dataclass
class Building:
    """Vertical prism: footprint at base_z_m, top at base_z_m + height_m."""

    id: str
    footprint: np.ndarray  # (V, 2) local x/y, CCW, simple
    height_m: float
    height_source: str = "annotated"  # annotated | calibrated | default
    base_z_m: float = 0.0

    def __post_init__(self):
        self.footprint = np.asarray(self.footprint, dtype=np.float64)
        if self.footprint.ndim != 2 or self.footprint.shape[1] != 2 or self.footprint.shape[0] < 3:
            raise ValidationError(f"building {self.id}: footprint needs >= 3 (x, y) vertices")
        if not np.isfinite(self.footprint).all():
            raise ValidationError(f"building {self.id}: non-finite footprint vertex")
        if _signed_area(self.footprint) < 0:
            self.footprint = self.footprint[::-1].copy()
        if _is_self_intersecting(self.footprint):
            raise ValidationError(f"building {self.id}: footprint is self-intersecting")
        if self.height_m is not None and self.height_m <= 0:
            raise ValidationError(f"building {self.id}: height_m must be > 0")

    @property
    def aabb(self):
        return (
            float(self.footprint[:, 0].min()),
            float(self.footprint[:, 1].min()),
            float(self.footprint[:, 0].max()),
            float(self.footprint[:, 1].max()),
        )

    @property
    def centroid(self):
        return (float(self.footprint[:, 0].mean()), float(self.footprint[:, 1].mean()))

    @property
    def top_z_m(self):
        return self.base_z_m + self.height_m


def _signed_area(poly: np.ndarray) -> float:
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_properly_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1 = orient(a, b, c)
    o2 = orient(a, b, d)
    o3 = orient(c, d, a)
    o4 = orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def _is_self_intersecting(poly: np.ndarray) -> bool:
    n = poly.shape[0]
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            c, d = poly[j], poly[(j + 1) % n]
            if _segments_properly_cross(a, b, c, d):
                return True
    return False


@dataclass(frozen=True)
class TerrainGrid:
    """Square-cell elevation grid; node (r, c) is the center of cell (r, c)."""

    origin: LocalPoint  # southwest corner of the southwest cell
    cell_size_m: float
    rows: int
    cols: int
    elevation: np.ndarray  # (rows, cols) float64, meters ASL, row 0 = south

    def __post_init__(self):
        if self.cell_size_m <= 0:
            raise ValidationError("terrain cell size must be > 0")
        if self.elevation.shape != (self.rows, self.cols):
            raise ValidationError("terrain elevation shape mismatch")
        if not np.isfinite(self.elevation).all():
            raise ValidationError("terrain contains non-finite elevations")

    @property
    def extent(self):
        """Interpolable extent (xmin, ymin, xmax, ymax): the node hull."""
        cs = self.cell_size_m
        return (
            self.origin.x + 0.5 * cs,
            self.origin.y + 0.5 * cs,
            self.origin.x + (self.cols - 0.5) * cs,
            self.origin.y + (self.rows - 0.5) * cs,
        )

    @classmethod
    def flat(cls, z, xmin, ymin, xmax, ymax, cell_size_m=25.0, margin_cells=2):
        """Constant-elevation grid covering the given rectangle with margin."""
        cs = cell_size_m
        ox = xmin - margin_cells * cs
        oy = ymin - margin_cells * cs
        cols = int(math.ceil((xmax - ox) / cs)) + margin_cells + 1
        rows = int(math.ceil((ymax - oy) / cs)) + margin_cells + 1
        return cls(LocalPoint(ox, oy, 0.0), cs, rows, cols,
                   np.full((rows, cols), float(z), dtype=np.float64))


def terrain_elevation(t: TerrainGrid, x, y):
    """Bilinear elevation at (x, y); raises OutOfBoundsError outside the node hull."""
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(y, dtype=np.float64))
    xmin, ymin, xmax, ymax = t.extent
    if (xs < xmin).any() or (xs > xmax).any() or (ys < ymin).any() or (ys > ymax).any():
        raise OutOfBoundsError(
            f"terrain query outside interpolable extent "
            f"[{xmin:.1f}, {xmax:.1f}] x [{ymin:.1f}, {ymax:.1f}]")
    z = kernels.bilinear_batch(t.elevation, t.origin.x, t.origin.y, t.cell_size_m,
                               np.ascontiguousarray(xs), np.ascontiguousarray(ys))
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(z[0])
    return z


@dataclass(frozen=True)
class Cell:
    id: str
    mno: str
    position: LocalPoint  # z = antenna height ASL
    freq_mhz: float
    bandwidth_mhz: float
    eirp_dbm: float | None = None

    def __post_init__(self):
        if self.freq_mhz <= 0:
            raise ValidationError(f"cell {self.id}: freq_mhz must be > 0")
        if not any(abs(self.bandwidth_mhz - b) < 1e-9 for b in VALID_BANDWIDTHS_MHZ):
            raise ValidationError(
                f"cell {self.id}: bandwidth {self.bandwidth_mhz} MHz not in {VALID_BANDWIDTHS_MHZ}")


@dataclass(frozen=True)
class Measurement:
    position: LocalPoint
    cell_id: str
    rsrp_dbm: float

    def __post_init__(self):
        lo, hi = RSRP_PLAUSIBLE_DBM
        if not lo <= self.rsrp_dbm <= hi:
            raise ValidationError(
                f"rsrp {self.rsrp_dbm} dBm outside plausible range [{lo}, {hi}]")


@dataclass(frozen=True)
class Scenario:
    """Immutable 3D environment; safe to share across workers."""

    projection: Projection
    bbox: tuple  # (xmin, ymin, xmax, ymax) local frame
    buildings: tuple
    terrain: TerrainGrid
    cells: tuple

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bbox
        for b in self.buildings:
            bx0, by0, bx1, by1 = b.aabb
            if bx0 < xmin - 1e-6 or by0 < ymin - 1e-6 or bx1 > xmax + 1e-6 or by1 > ymax + 1e-6:
                raise ValidationError(f"building {b.id} lies outside the scenario bbox")
        for c in self.cells:
            if not (xmin - 1e-6 <= c.position.x <= xmax + 1e-6
                    and ymin - 1e-6 <= c.position.y <= ymax + 1e-6):
                raise ValidationError(f"cell {c.id} lies outside the scenario bbox")
        tx0, ty0, tx1, ty1 = self.terrain.extent
        if tx0 > xmin or ty0 > ymin or tx1 < xmax or ty1 < ymax:
            raise ValidationError("terrain grid does not cover the scenario bbox")

    def cell_by_id(self, cell_id: str) -> Cell:
        for c in self.cells:
            if c.id == cell_id:
                return c
        raise KeyError(f"unknown cell id {cell_id!r}")

    def cells_by_mno(self):
        groups = {}
        for c in self.cells:
            groups.setdefault(c.mno, []).append(c)
        return groups

    def ground_z(self, x, y):
        return terrain_elevation(self.terrain, x, y)

    def with_cells(self, cells) -> "Scenario":
        return replace(self, cells=tuple(cells))


# ---------------------------------------------------------------------------
# file parsing


def read_ascii_grid(path):
    """Parse an ESRI ASCII grid; returns (header dict, values array north-first)."""
    header = {}
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    row = 0
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) == 2 and parts[0].lower() in (
                "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"):
            try:
                header[parts[0].lower()] = float(parts[1])
            except ValueError as exc:
                raise ScenarioFormatError(f"{path}:{lineno}: bad header value {parts[1]!r}") from exc
            continue
        try:
            values.append([float(v) for v in parts])
        except ValueError as exc:
            raise ScenarioFormatError(f"{path}:{lineno}: bad grid value") from exc
        row += 1
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise ScenarioFormatError(f"{path}: missing ASCII grid header field {key!r}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if len(values) != nrows or any(len(r) != ncols for r in values):
        raise ScenarioFormatError(f"{path}: grid body does not match ncols/nrows header")
    return header, np.asarray(values, dtype=np.float64)


def _grid_to_local(header, values, proj: Projection, what: str) -> TerrainGrid:
    """Resample a degree-referenced ASCII grid onto a square metric grid."""
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    cs_deg = header["cellsize"]
    nodata = header.get("nodata_value")
    vals = values[::-1].copy()  # row 0 = southmost
    if nodata is not None:
        mask = vals == nodata
        if mask.any():
            if mask.all():
                raise ScenarioFormatError(f"{what}: grid contains only NODATA values")
            fill = float(np.median(vals[~mask]))
            vals[mask] = fill
    lon0 = header["xllcorner"]
    lat0 = header["yllcorner"]
    # degree-space node centers
    node_lon0 = lon0 + 0.5 * cs_deg
    node_lat0 = lat0 + 0.5 * cs_deg
    # target square grid, anchored at the projected SW corner
    sw = project(GeoPoint(lat0, lon0), proj, z=0.0)
    ne = project(GeoPoint(lat0 + nrows * cs_deg, lon0 + ncols * cs_deg), proj, z=0.0)
    cell_m = cs_deg * proj.m_per_deg_lat
    out_cols = max(2, int(math.ceil((ne.x - sw.x) / cell_m)))
    out_rows = max(2, int(math.ceil((ne.y - sw.y) / cell_m)))
    jj, ii = np.meshgrid(np.arange(out_cols), np.arange(out_rows))
    cx = sw.x + (jj.ravel() + 0.5) * cell_m
    cy = sw.y + (ii.ravel() + 0.5) * cell_m
    # back to degree space, clamped to the source node hull
    q_lon = cx / proj.m_per_deg_lon + proj.lon0
    q_lat = cy / proj.m_per_deg_lat + proj.lat0
    q_lon = np.clip(q_lon, node_lon0, node_lon0 + (ncols - 1) * cs_deg)
    q_lat = np.clip(q_lat, node_lat0, node_lat0 + (nrows - 1) * cs_deg)
    z = kernels.bilinear_batch(np.ascontiguousarray(vals), lon0, lat0, cs_deg,
                               np.ascontiguousarray(q_lon), np.ascontiguousarray(q_lat))
    return TerrainGrid(LocalPoint(sw.x, sw.y, 0.0), cell_m, out_rows, out_cols,
                       z.reshape(out_rows, out_cols))


def calibrate_heights(buildings, height_raster: TerrainGrid | None):
    """Fill missing building heights from an above-ground height raster.

    Buildings with annotated heights are untouched. Uncovered buildings
    fall back to DEFAULT_BUILDING_HEIGHT_M with height_source="default".
    The raster statistic is the median of cells whose centers fall inside
    the footprint's axis-aligned bounding box. Idempotent.
    """
    out = []
    for b in buildings:
        if b.height_m is not None and b.height_source == "annotated":
            out.append(b)
            continue
        height = None
        source = "default"
        if height_raster is not None:
            covered = _raster_values_in_aabb(height_raster, b.aabb)
            if covered.size:
                height = float(np.median(covered))
                source = "calibrated"
        if height is None or height <= 0:
            height = DEFAULT_BUILDING_HEIGHT_M
            source = "default"
        out.append(Building(b.id, b.footprint, height, source, b.base_z_m))
    return out


def _raster_values_in_aabb(raster: TerrainGrid, aabb):
    xmin, ymin, xmax, ymax = aabb
    cs = raster.cell_size_m
    j0 = int(math.ceil((xmin - raster.origin.x) / cs - 0.5))
    j1 = int(math.floor((xmax - raster.origin.x) / cs - 0.5))
    i0 = int(math.ceil((ymin - raster.origin.y) / cs - 0.5))
    i1 = int(math.floor((ymax - raster.origin.y) / cs - 0.5))
    j0 = max(j0, 0)
    i0 = max(i0, 0)
    j1 = min(j1, raster.cols - 1)
    i1 = min(i1, raster.rows - 1)
    if j0 > j1 or i0 > i1:
        return np.empty(0)
    return raster.elevation[i0:i1 + 1, j0:j1 + 1].ravel()


def load_scenario(scenario_file, terrain_file, height_raster_file=None) -> Scenario:
    """Build an immutable Scenario from the raw input files."""
    try:
        with open(scenario_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{scenario_file}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ScenarioFormatError(f"{scenario_file}: {exc}") from exc

    try:
        bbox_deg = doc["bbox"]
        lat_min = float(bbox_deg["lat_min"])
        lat_max = float(bbox_deg["lat_max"])
        lon_min = float(bbox_deg["lon_min"])
        lon_max = float(bbox_deg["lon_max"])
    except (KeyError, TypeError) as exc:
        raise ScenarioFormatError(f"{scenario_file}: missing or malformed 'bbox'") from exc
    if lat_min >= lat_max or lon_min >= lon_max:
        raise ScenarioFormatError(f"{scenario_file}: empty bbox")

    proj = Projection.centered_at(0.5 * (lat_min + lat_max), 0.5 * (lon_min + lon_max))
    sw = project(GeoPoint(lat_min, lon_min), proj, z=0.0)
    ne = project(GeoPoint(lat_max, lon_max), proj, z=0.0)
    bbox = (sw.x, sw.y, ne.x, ne.y)

    header, vals = read_ascii_grid(terrain_file)
    terrain = _grid_to_local(header, vals, proj, what=str(terrain_file))

    height_raster = None
    if height_raster_file is not None:
        h_header, h_vals = read_ascii_grid(height_raster_file)
        height_raster = _grid_to_local(h_header, h_vals, proj, what=str(height_raster_file))

    buildings = []
    for i, b in enumerate(doc.get("buildings", [])):
        try:
            bid = str(b.get("id", f"b{i}"))
            outline = b["outline"]
        except (KeyError, TypeError) as exc:
            raise ScenarioFormatError(f"{scenario_file}: buildings[{i}]: missing 'outline'") from exc
        if not isinstance(outline, list) or len(outline) < 3:
            raise ValidationError(f"{scenario_file}: buildings[{i}]: outline needs >= 3 vertices")
        pts = np.empty((len(outline), 2), dtype=np.float64)
        for k, (lat, lon) in enumerate(outline):
            p = project(GeoPoint(float(lat), float(lon)), proj, z=0.0)
            pts[k, 0] = p.x
            pts[k, 1] = p.y
        height = b.get("height_m")
        if height is not None:
            building = Building(bid, pts, float(height), "annotated")
        else:
            building = Building(bid, pts, DEFAULT_BUILDING_HEIGHT_M, "uncalibrated")
        buildings.append(building)
    buildings = calibrate_heights(buildings, height_raster)

    cells = []
    for i, c in enumerate(doc.get("cells", [])):
        try:
            pos_deg = GeoPoint(float(c["lat"]), float(c["lon"]))
            ant_h = float(c["antenna_height_m"])
            cell = dict(id=str(c["id"]), mno=str(c["mno"]), freq_mhz=float(c["freq_mhz"]),
                        bandwidth_mhz=float(c["bandwidth_mhz"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioFormatError(f"{scenario_file}: cells[{i}]: missing/malformed field") from exc
        p2 = project(pos_deg, proj, z=0.0)
        ground = terrain_elevation(terrain, p2.x, p2.y)
        eirp = c.get("eirp_dbm")
        cells.append(Cell(position=LocalPoint(p2.x, p2.y, ground + ant_h),
                          eirp_dbm=None if eirp is None else float(eirp), **cell))

    # prism bases: terrain elevation at the footprint centroid
    based = []
    for b in buildings:
        cx, cy = b.centroid
        try:
            base = terrain_elevation(terrain, cx, cy)
        except OutOfBoundsError as exc:
            raise ValidationError(f"building {b.id}: centroid outside terrain extent") from exc
        based.append(Building(b.id, b.footprint, b.height_m, b.height_source, base))

    return Scenario(projection=proj, bbox=bbox, buildings=tuple(based),
                    terrain=terrain, cells=tuple(cells))


BUNDLE_FORMAT = "remgen-bundle"
BUNDLE_VERSION = 1


def save_bundle(scenario: Scenario, path):
    """Persist a validated scenario as a single JSON bundle."""
    import base64

    doc = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "projection": {
            "lat0": scenario.projection.lat0,
            "lon0": scenario.projection.lon0,
            "m_per_deg_lat": scenario.projection.m_per_deg_lat,
            "m_per_deg_lon": scenario.projection.m_per_deg_lon,
        },
        "bbox_local": list(scenario.bbox),
        "buildings": [
            {
                "id": b.id,
                "footprint": b.footprint.tolist(),
                "height_m": b.height_m,
                "height_source": b.height_source,
                "base_z_m": b.base_z_m,
            }
            for b in scenario.buildings
        ],
        "terrain": {
            "origin": [scenario.terrain.origin.x, scenario.terrain.origin.y],
            "cell_size_m": scenario.terrain.cell_size_m,
            "rows": scenario.terrain.rows,
            "cols": scenario.terrain.cols,
            "elevation_b64": base64.b64encode(
                np.ascontiguousarray(scenario.terrain.elevation, dtype="<f8").tobytes()
            ).decode("ascii"),
        },
        "cells": [
            {
                "id": c.id,
                "mno": c.mno,
                "x": c.position.x,
                "y": c.position.y,
                "z": c.position.z,
                "freq_mhz": c.freq_mhz,
                "bandwidth_mhz": c.bandwidth_mhz,
                "eirp_dbm": c.eirp_dbm,
            }
            for c in scenario.cells
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_bundle(path) -> Scenario:
    import base64

    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from exc
    if doc.get("format") != BUNDLE_FORMAT:
        raise ScenarioFormatError(f"{path}: not a {BUNDLE_FORMAT} file")
    if doc.get("version") != BUNDLE_VERSION:
        raise ScenarioFormatError(f"{path}: unsupported bundle version {doc.get('version')!r}")
    try:
        pj = doc["projection"]
        proj = Projection(pj["lat0"], pj["lon0"], pj["m_per_deg_lat"], pj["m_per_deg_lon"])
        t = doc["terrain"]
        elev = np.frombuffer(base64.b64decode(t["elevation_b64"]), dtype="<f8").astype(np.float64)
        terrain = TerrainGrid(LocalPoint(t["origin"][0], t["origin"][1], 0.0),
                              t["cell_size_m"], int(t["rows"]), int(t["cols"]),
                              elev.reshape(int(t["rows"]), int(t["cols"])))
        buildings = tuple(
            Building(b["id"], np.asarray(b["footprint"], dtype=np.float64),
                     b["height_m"], b["height_source"], b["base_z_m"])
            for b in doc["buildings"])
        cells = tuple(
            Cell(c["id"], c["mno"], LocalPoint(c["x"], c["y"], c["z"]),
                 c["freq_mhz"], c["bandwidth_mhz"], c.get("eirp_dbm"))
            for c in doc["cells"])
        bbox = tuple(doc["bbox_local"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{path}: malformed bundle field ({exc})") from exc
    return Scenario(projection=proj, bbox=bbox, buildings=buildings,
                    terrain=terrain, cells=cells)


def load_measurements(path, scenario: Scenario):
    """Read the measurement CSV; altitudes (above ground) resolved to ASL."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"lat", "lon", "alt_m", "cell_id", "rsrp_dbm"}
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise ScenarioFormatError(
                f"{path}: measurement CSV must carry header lat,lon,alt_m,cell_id,rsrp_dbm")
        for lineno, row in enumerate(reader, start=2):
            try:
                gp = GeoPoint(float(row["lat"]), float(row["lon"]))
                alt = row["alt_m"].strip()
                agl = float(alt) if alt else DEFAULT_RX_HEIGHT_M
                rsrp = float(row["rsrp_dbm"])
                cell_id = row["cell_id"].strip()
            except (TypeError, ValueError) as exc:
                raise ScenarioFormatError(f"{path}:{lineno}: malformed measurement row") from exc
            p2 = project(gp, scenario.projection, z=0.0)
            try:
                ground = terrain_elevation(scenario.terrain, p2.x, p2.y)
            except OutOfBoundsError as exc:
                raise ValidationError(f"{path}:{lineno}: measurement outside terrain extent") from exc
            out.append(Measurement(LocalPoint(p2.x, p2.y, ground + agl), cell_id, rsrp))
    return out
