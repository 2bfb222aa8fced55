import math

import numpy as np
import pytest

from remgen.geo import (Building, Cell, LocalPoint, Projection, Scenario,
                        TerrainGrid)


def rect_footprint(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def make_building(bid, x0, y0, x1, y1, height, base_z=0.0):
    return Building(bid, rect_footprint(x0, y0, x1, y1), height,
                    "annotated", base_z)


def make_scenario(buildings=(), cells=(), bbox=(-200.0, -200.0, 600.0, 600.0),
                  ground_z=0.0, terrain=None):
    """Flat-terrain scenario covering bbox with margin."""
    if terrain is None:
        terrain = TerrainGrid.flat(ground_z, *bbox, cell_size_m=25.0, margin_cells=3)
    return Scenario(
        projection=Projection.centered_at(51.5, 7.4),
        bbox=tuple(float(v) for v in bbox),
        buildings=tuple(buildings),
        terrain=terrain,
        cells=tuple(cells),
    )


def make_cell(cid="c1", mno="op1", x=0.0, y=0.0, z=30.0, freq_mhz=2600.0,
              bandwidth_mhz=20.0, eirp_dbm=None):
    return Cell(cid, mno, LocalPoint(x, y, z), freq_mhz, bandwidth_mhz, eirp_dbm)


@pytest.fixture
def flat_scenario():
    b = make_building("b1", 0.0, 0.0, 10.0, 10.0, 20.0)
    return make_scenario(buildings=[b])


def sample_points_inside_polygon(poly, n, rng):
    """Rejection-sample n points inside a polygon (for oracles)."""
    from remgen import kernels

    x0, y0 = poly.min(axis=0)
    x1, y1 = poly.max(axis=0)
    out = []
    while len(out) < n:
        px = rng.uniform(x0, x1, n)
        py = rng.uniform(y0, y1, n)
        hit = kernels.points_in_polygon(px, py, poly)
        out.extend(zip(px[hit], py[hit]))
    return np.array(out[:n])
