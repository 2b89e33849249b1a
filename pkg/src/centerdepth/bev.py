"""Bird's-eye-view obstacle mapping and A* planning.

The ego frame is the camera origin with x to the right and z forward; the
vertical axis is dropped (flat ground). Grid rows index z, columns index x.
"""
import json
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import kernels
from .camera import CameraIntrinsics, back_project
from .errors import InvalidEndpoint, NonPositiveDepth, Unreachable


@dataclass(frozen=True)
class GroundPoint:
    x: float
    z: float
    radius: float


def detection_to_bev(center, box_width, depth, k: CameraIntrinsics) -> GroundPoint:
    """Ground position of a detection centered at pixel ``center`` seen at ``depth``."""
    if not depth > 0:
        raise NonPositiveDepth("detection depth must be positive")
    p = back_project((center[0], center[1], depth), k)
    return GroundPoint(float(p[0]), float(p[2]), float(box_width) * depth / (2.0 * k.fx))


@dataclass(frozen=True)
class GridSpec:
    resolution: float = 0.5
    x_min: float = -20.0
    x_max: float = 20.0
    z_min: float = 0.0
    z_max: float = 60.0

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution > 0")
        if not (self.x_max > self.x_min and self.z_max > self.z_min):
            raise ValueError("grid extents must be non-empty")

    @property
    def shape(self):
        nz = int(math.ceil((self.z_max - self.z_min) / self.resolution - 1e-9))
        nx = int(math.ceil((self.x_max - self.x_min) / self.resolution - 1e-9))
        return nz, nx

    def cell_of(self, x, z):
        """``(row, col)`` of the cell containing ground point (x, z)."""
        return (
            int(math.floor((z - self.z_min) / self.resolution)),
            int(math.floor((x - self.x_min) / self.resolution)),
        )

    def cell_center(self, row, col):
        return (self.x_min + (col + 0.5) * self.resolution, self.z_min + (row + 0.5) * self.resolution)


@dataclass
class OccupancyGrid:
    spec: GridSpec
    cells: np.ndarray

    @property
    def shape(self):
        return self.cells.shape

    def to_dict(self):
        rows, cols = np.nonzero(self.cells)
        return {
            "resolution": self.spec.resolution,
            "extents": [self.spec.x_min, self.spec.x_max, self.spec.z_min, self.spec.z_max],
            "shape": list(self.cells.shape),
            "occupied": [[int(r), int(c)] for r, c in zip(rows, cols)],
        }

    @classmethod
    def from_dict(cls, d):
        x0, x1, z0, z1 = d["extents"]
        spec = GridSpec(d["resolution"], x0, x1, z0, z1)
        cells = np.zeros(tuple(d["shape"]), dtype=bool)
        for r, c in d["occupied"]:
            cells[r, c] = True
        return cls(spec, cells)


def rasterize_obstacles(points: Sequence[GroundPoint], spec: GridSpec, inflation=0.5) -> OccupancyGrid:
    """Mark cells whose center lies within ``radius + inflation`` of any point."""
    if inflation < 0:
        raise ValueError("inflation must be non-negative")
    nz, nx = spec.shape
    xs = np.array([p.x for p in points], dtype=np.float64)
    zs = np.array([p.z for p in points], dtype=np.float64)
    radii = np.array([p.radius + inflation for p in points], dtype=np.float64)
    cells = kernels.disk_occupancy(xs, zs, radii, spec.x_min, spec.z_min, spec.resolution, nz, nx)
    return OccupancyGrid(spec, np.asarray(cells, dtype=bool))


@dataclass
class PlannedPath:
    cells: List[Tuple[int, int]]
    cost: float
    length: float

    def to_dict(self):
        return {"cells": [list(c) for c in self.cells], "cost": self.cost, "length_m": self.length}


def astar(grid, start, goal, resolution=None) -> PlannedPath:
    """Minimum-cost 8-connected path between ``(row, col)`` cells.

    Straight moves cost 1 and diagonal moves sqrt(2); a diagonal move needs
    both orthogonal neighbors free. ``grid`` is an :class:`OccupancyGrid` or a
    boolean array.
    """
    if isinstance(grid, OccupancyGrid):
        occ, res = grid.cells, grid.spec.resolution
    else:
        occ, res = np.asarray(grid, dtype=bool), 1.0
    if resolution is not None:
        res = resolution
    nr, nc = occ.shape
    for name, (r, c) in (("start", start), ("goal", goal)):
        if not (0 <= r < nr and 0 <= c < nc):
            raise InvalidEndpoint(f"{name} {(r, c)} outside {nr}x{nc} grid")
        if occ[r, c]:
            raise InvalidEndpoint(f"{name} {(r, c)} is occupied")
    cost, parent = kernels.astar_search(occ, int(start[0]), int(start[1]), int(goal[0]), int(goal[1]))
    if not np.isfinite(cost):
        raise Unreachable(f"no path from {tuple(start)} to {tuple(goal)}")
    node = goal[0] * nc + goal[1]
    first = start[0] * nc + start[1]
    cells = [(int(goal[0]), int(goal[1]))]
    while node != first:
        node = int(parent[node])
        cells.append(divmod(node, nc))
    cells.reverse()
    return PlannedPath(cells, float(cost), float(cost) * res)


def nearest_free_cell(occ, cell):
    """Closest unoccupied cell to ``cell`` (Euclidean, ties by row-major order)."""
    occ = np.asarray(occ, dtype=bool)
    r, c = cell
    if 0 <= r < occ.shape[0] and 0 <= c < occ.shape[1] and not occ[r, c]:
        return (r, c)
    free_r, free_c = np.nonzero(~occ)
    if free_r.size == 0:
        raise InvalidEndpoint("grid has no free cell")
    d2 = (free_r - r) ** 2 + (free_c - c) ** 2
    i = int(np.argmin(d2))
    return (int(free_r[i]), int(free_c[i]))


def export_plan(grid: OccupancyGrid, path=None, points=()):
    """JSON-ready record of the grid, obstacles and (optional) path."""
    return {
        "grid": grid.to_dict(),
        "obstacles": [{"x": p.x, "z": p.z, "radius": p.radius} for p in points],
        "path": None if path is None else path.to_dict(),
    }


def dumps(obj):
    return json.dumps(obj, indent=2) + "\n"
