"""Uniform-grid index over 2D points for nearest-neighbour and radius queries."""
from __future__ import annotations

import math

import numpy as np


def squared_distance(points: np.ndarray, x: float, y: float) -> np.ndarray:
    """Squared planar distance from (x, y) to each row of ``points``.

    Every consumer uses this one expression so that ties resolve identically.
    """
    dx = points[..., 0] - x
    dy = points[..., 1] - y
    return dx * dx + dy * dy


class GridIndex:
    """Bucket points into square cells of side ``cell_size`` covering ``bounds``.

    Points are stored cell-major (CSR layout) so the cells of one grid column
    inside a query block form a contiguous slice.
    """

    def __init__(self, points, cell_size: float, bounds: tuple[float, float, float, float] | None = None):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        if bounds is None:
            if len(pts):
                x0, y0 = pts.min(axis=0)
                x1, y1 = pts.max(axis=0)
            else:
                x0 = y0 = 0.0
                x1 = y1 = cell_size
            bounds = (x0, y0, x1, y1)
        x0, y0, x1, y1 = map(float, bounds)
        self.points = pts
        self.cell = float(cell_size)
        self.x0, self.y0 = x0, y0
        self.nx = max(1, math.ceil((x1 - x0) / self.cell))
        self.ny = max(1, math.ceil((y1 - y0) / self.cell))
        ix, iy = self._cells(pts[:, 0], pts[:, 1])
        cell_id = ix * self.ny + iy
        order = np.argsort(cell_id, kind="stable")
        self.order = order
        self.sorted_points = pts[order]
        self.starts = np.searchsorted(cell_id[order], np.arange(self.nx * self.ny + 1))

    def __len__(self):
        return len(self.points)

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        ix = min(max(math.floor((x - self.x0) / self.cell), 0), self.nx - 1)
        iy = min(max(math.floor((y - self.y0) / self.cell), 0), self.ny - 1)
        return ix, iy

    def _cells(self, x, y):
        ix = ((x - self.x0) // self.cell).astype(np.int64)
        iy = ((y - self.y0) // self.cell).astype(np.int64)
        np.minimum(np.maximum(ix, 0, out=ix), self.nx - 1, out=ix)
        np.minimum(np.maximum(iy, 0, out=iy), self.ny - 1, out=iy)
        return ix, iy

    def _block(self, ix0, ix1, iy0, iy1) -> np.ndarray:
        """Positions (into the sorted arrays) of all points in a block of cells."""
        s = self.starts
        parts = [np.arange(s[ix * self.ny + iy0], s[ix * self.ny + iy1 + 1]) for ix in range(ix0, ix1 + 1)]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def _clearance(self, x, y, ix0, ix1, iy0, iy1) -> float:
        """Distance from (x, y) to the nearest point that could lie outside the block."""
        gaps = []
        if ix0 > 0:
            gaps.append(x - (self.x0 + ix0 * self.cell))
        if ix1 < self.nx - 1:
            gaps.append(self.x0 + (ix1 + 1) * self.cell - x)
        if iy0 > 0:
            gaps.append(y - (self.y0 + iy0 * self.cell))
        if iy1 < self.ny - 1:
            gaps.append(self.y0 + (iy1 + 1) * self.cell - y)
        return max(min(gaps), 0.0) if gaps else math.inf

    def nearest(self, x: float, y: float) -> tuple[int, float]:
        """Index and squared distance of the nearest point; lowest index on ties."""
        if not len(self.points):
            raise ValueError("empty index")
        cx, cy = self._cell(x, y)
        k = 1
        while True:
            ix0, ix1 = max(cx - k, 0), min(cx + k, self.nx - 1)
            iy0, iy1 = max(cy - k, 0), min(cy + k, self.ny - 1)
            pos = self._block(ix0, ix1, iy0, iy1)
            clearance = self._clearance(x, y, ix0, ix1, iy0, iy1)
            if len(pos):
                d2 = squared_distance(self.sorted_points[pos], x, y)
                best = d2.min()
                if best <= clearance * clearance:
                    idx = self.order[pos[d2 == best]].min()
                    return int(idx), float(best)
                k = max(k + 1, math.ceil(math.sqrt(best) / self.cell))
            else:
                k += 1

    def within(self, x: float, y: float, radius: float) -> np.ndarray:
        """Sorted indices of the points with planar distance <= ``radius``."""
        if not len(self.points):
            return np.empty(0, dtype=np.int64)
        k = math.ceil(radius / self.cell)
        cx, cy = self._cell(x, y)
        # query points outside the grid were clamped to an edge cell
        kx = k + abs(math.floor((x - self.x0) / self.cell) - cx)
        ky = k + abs(math.floor((y - self.y0) / self.cell) - cy)
        pos = self._block(max(cx - kx, 0), min(cx + kx, self.nx - 1),
                          max(cy - ky, 0), min(cy + ky, self.ny - 1))
        d2 = squared_distance(self.sorted_points[pos], x, y)
        return np.sort(self.order[pos[d2 <= radius * radius]])
