"""Uniform voxel-hash grid for fixed-radius and nearest-neighbor queries."""

from __future__ import annotations

import numpy as np

# 27 neighboring cell offsets, including the cell itself
_OFFSETS = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)], dtype=np.int64)
_BITS = 21
_BIAS = 1 << (_BITS - 1)
_QUERY_CHUNK = 4096
_PAIR_BUDGET = 2_000_000


def _cell_keys(cells: np.ndarray) -> np.ndarray:
    c = cells + _BIAS
    return (c[..., 0] << (2 * _BITS)) | (c[..., 1] << _BITS) | c[..., 2]


class VoxelGrid:
    """Points bucketed into cubic cells of edge ``cell_size``.

    Any point within ``cell_size`` of a query lies in one of the 27 cells around
    the query's cell, so a radius query with ``radius <= cell_size`` is exact.
    Cell coordinates are packed into one int64 key; the bucket contents are a
    sorted permutation of the input indices.
    """

    def __init__(self, points: np.ndarray, cell_size: float):
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell_size = float(cell_size)
        self.origin = self.points.min(axis=0) if len(self.points) else np.zeros(3)
        cells = self._cells(self.points)
        if len(cells) and cells.max() >= _BIAS - 2:
            raise ValueError("point extent too large for the chosen cell size")
        keys = _cell_keys(cells)
        self.order = np.argsort(keys, kind="stable")
        self.sorted_keys = keys[self.order]
        occupied = int(np.count_nonzero(np.diff(self.sorted_keys))) + 1 if len(keys) else 1
        # bound the candidate pairs materialized per chunk
        per_query = len(_OFFSETS) * len(keys) / occupied
        self._chunk = int(min(_QUERY_CHUNK, max(16, _PAIR_BUDGET // max(per_query, 1.0))))

    def _cells(self, xyz: np.ndarray) -> np.ndarray:
        return np.floor((xyz - self.origin) / self.cell_size).astype(np.int64)

    def __len__(self) -> int:
        return len(self.points)

    def nearest_within(self, queries: np.ndarray, radius: float | None = None):
        """Nearest indexed point to each query, searching up to ``radius``.

        Returns ``(dist, index)``; queries with no point within the radius get
        ``inf`` and ``-1``. Ties resolve to the lowest point index.
        """
        radius = self.cell_size if radius is None else float(radius)
        if radius > self.cell_size * (1 + 1e-12):
            raise ValueError("radius must not exceed the cell size")
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        dist = np.full(len(queries), np.inf)
        index = np.full(len(queries), -1, dtype=np.int64)
        if len(self.points) == 0 or len(queries) == 0:
            return dist, index
        for start in range(0, len(queries), self._chunk):
            sl = slice(start, start + self._chunk)
            d, i = self._query_chunk(queries[sl], radius)
            dist[sl] = d
            index[sl] = i
        return dist, index

    def _query_chunk(self, q: np.ndarray, radius: float):
        n = len(q)
        cells = self._cells(q)
        # cells outside the representable range cannot contain indexed points
        cells = np.clip(cells, -_BIAS + 2, _BIAS - 2)
        keys = _cell_keys(cells[:, None, :] + _OFFSETS[None, :, :]).reshape(-1)
        lo = np.searchsorted(self.sorted_keys, keys, side="left")
        hi = np.searchsorted(self.sorted_keys, keys, side="right")
        counts = hi - lo
        total = int(counts.sum())
        dist = np.full(n, np.inf)
        index = np.full(n, -1, dtype=np.int64)
        if total == 0:
            return dist, index
        # expand each (query, cell) range into explicit candidate slots
        owner = np.repeat(np.arange(len(keys)) // len(_OFFSETS), counts)
        starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
        slots = starts + np.arange(total)
        cand = self.order[slots]
        diff = self.points[cand] - q[owner]
        d2 = np.einsum("ij,ij->i", diff, diff)
        ok = d2 <= radius * radius
        owner, cand, d2 = owner[ok], cand[ok], d2[ok]
        if len(owner) == 0:
            return dist, index
        # sort by (owner, d2, cand) and keep the first entry of each owner
        sel = np.lexsort((cand, d2, owner))
        owner, cand, d2 = owner[sel], cand[sel], d2[sel]
        first = np.ones(len(owner), dtype=bool)
        first[1:] = owner[1:] != owner[:-1]
        dist[owner[first]] = np.sqrt(d2[first])
        index[owner[first]] = cand[first]
        return dist, index

    def has_neighbor(self, queries: np.ndarray, radius: float) -> np.ndarray:
        """Whether each query has at least one indexed point within ``radius``."""
        d, _ = self.nearest_within(queries, radius)
        return np.isfinite(d)


def nearest_neighbors(points: np.ndarray, queries: np.ndarray, initial_radius: float | None = None):
    """Unbounded nearest neighbor of every query among ``points``.

    Runs exact radius queries on voxel grids of doubling cell size until every
    query has found its neighbor.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("cannot search an empty point set")
    dist = np.full(len(queries), np.inf)
    index = np.full(len(queries), -1, dtype=np.int64)
    if len(queries) == 0:
        return dist, index
    if initial_radius is None:
        extent = np.ptp(points, axis=0).max() if len(points) > 1 else 0.0
        # roughly a few points per occupied cell on a surface-like cloud
        initial_radius = extent / max(np.sqrt(len(points)), 1.0) if extent > 0 else 1.0
    radius = max(float(initial_radius), 1e-6)
    todo = np.arange(len(queries))
    while len(todo):
        grid = VoxelGrid(points, radius)
        d, i = grid.nearest_within(queries[todo], radius)
        found = np.isfinite(d)
        dist[todo[found]] = d[found]
        index[todo[found]] = i[found]
        todo = todo[~found]
        radius *= 2.0
    return dist, index


class RadiusIndex:
    """Exact nearest-within-radius search over a cascade of voxel grids.

    The coarsest grid has cell size ``radius``; finer grids halve it. A query is
    tried on the finest grid first and only passed up when nothing lies within
    that grid's cell size, so the answer matches a single grid of cell size
    ``radius`` while dense clouds touch far fewer candidates.
    """

    def __init__(self, points: np.ndarray, radius: float, levels: int = 4):
        self.radius = float(radius)
        sizes = [self.radius * 0.5**k for k in range(levels - 1, -1, -1)]
        self.grids = [VoxelGrid(points, s) for s in sizes]

    def nearest_within(self, queries: np.ndarray, radius: float | None = None):
        radius = self.radius if radius is None else min(float(radius), self.radius)
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        dist = np.full(len(queries), np.inf)
        index = np.full(len(queries), -1, dtype=np.int64)
        todo = np.arange(len(queries))
        for grid in self.grids:
            if len(todo) == 0:
                break
            r = min(grid.cell_size, radius)
            d, i = grid.nearest_within(queries[todo], r)
            found = np.isfinite(d)
            dist[todo[found]] = d[found]
            index[todo[found]] = i[found]
            todo = todo[~found]
        return dist, index
