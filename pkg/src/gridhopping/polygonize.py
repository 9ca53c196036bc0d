"""The three mesh-extraction strategies: enumeration, continuation, and
gridhopping (sphere tracing one ray per grid column).

All three feed identical corner values to the same per-cell marching cubes
routine, so on a valid distance bound they produce exactly the same
canonical mesh.  Each run is instrumented with :class:`TraceStats`; field
evaluation counts are deterministic and independent of batch size and
worker count.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from typing import Sequence

import numpy as np

from .fields import Field
from .geometry import (CellIndex, GridSpec, Mesh, TraceStats, Triangle, Vec3,
                       canonicalize, cell_hit_threshold, cell_of_point)
from .marching_cubes import CellCorners, polygonize_cell, surface_crosses_cell

__all__ = [
    "PolygonizeConfig",
    "PolygonizeResult",
    "MarchBudgetError",
    "MarchRecorder",
    "enumerate_all",
    "continuation",
    "gridhop",
]

# Canonical corner order: bit 0 -> +x, bit 1 -> +y, bit 2 -> +z.
_CORNER_OFFSETS = np.array([((s & 1), ((s >> 1) & 1), ((s >> 2) & 1))
                            for s in range(8)], dtype=np.int64)


class MarchBudgetError(RuntimeError):
    """A ray exhausted its step budget; the field is probably not a valid
    distance bound (its values stay near zero without reaching it)."""

    def __init__(self, i: int, j: int, last_abs_value: float, budget: int):
        self.i, self.j = i, j
        self.last_abs_value = last_abs_value
        self.budget = budget
        super().__init__(
            f"ray ({i}, {j}) exhausted its budget of {budget} steps; "
            f"last |f| = {last_abs_value!r}")


@dataclass(frozen=True, slots=True)
class PolygonizeConfig:
    """Run parameters shared by the three strategies.

    ``max_steps_per_ray`` defaults to 64*n, far above the logarithmic cost
    of a valid bound; it only triggers on fields that stall.  Points are
    submitted to the evaluator in chunks of ``batch_size``; batching never
    changes any result.
    """

    grid: GridSpec
    max_steps_per_ray: int | None = None
    hit_threshold_override: float | None = None
    batch_size: int = 10_000
    workers: int = 1

    def __post_init__(self) -> None:
        if self.max_steps_per_ray is not None and self.max_steps_per_ray < self.grid.n:
            raise ValueError("max_steps_per_ray must be at least the grid resolution")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    @property
    def step_budget(self) -> int:
        return self.max_steps_per_ray if self.max_steps_per_ray is not None else 64 * self.grid.n

    @property
    def hit_threshold(self) -> float:
        if self.hit_threshold_override is not None:
            return self.hit_threshold_override
        return cell_hit_threshold(self.grid)


@dataclass(frozen=True, slots=True)
class PolygonizeResult:
    mesh: Mesh  # canonical
    stats: TraceStats


class MarchRecorder:
    """Optional per-step instrumentation for gridhopping.

    Records, for every ray and marching step, the z position and the signed
    field value, plus every threshold trigger with the cell it identified.
    Only meant for analysis runs; requires workers == 1.
    """

    def __init__(self) -> None:
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self.triggers: list[tuple[np.ndarray, np.ndarray]] = []

    def observe(self, ray_ids: np.ndarray, z: np.ndarray, f: np.ndarray) -> None:
        self._chunks.append((ray_ids.copy(), z.copy(), f.copy()))

    def observe_triggers(self, ray_ids: np.ndarray, cells_k: np.ndarray) -> None:
        self.triggers.append((ray_ids.copy(), cells_k.copy()))

    def ray_steps(self, grid: GridSpec, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(z positions, signed field values) for ray (i, j), in step order."""
        rid = i * grid.n + j
        zs, fs = [], []
        for ids, z, f in self._chunks:
            m = ids == rid
            zs.append(z[m])
            fs.append(f[m])
        return np.concatenate(zs), np.concatenate(fs)

    def steps_per_ray(self, grid: GridSpec) -> np.ndarray:
        counts = np.zeros(grid.n * grid.n, dtype=np.int64)
        for ids, _, _ in self._chunks:
            np.add.at(counts, ids, 1)
        return counts


def _eval_batched(field: Field, pts: np.ndarray, stats: TraceStats, batch_size: int,
                  march: bool = False) -> np.ndarray:
    out = np.empty(len(pts))
    for s in range(0, len(pts), batch_size):
        out[s:s + batch_size] = field.values(pts[s:s + batch_size])
    stats.add(field_evals=len(pts), march_steps=len(pts) if march else 0)
    return out


def _polygonize_cells(field: Field, cfg: PolygonizeConfig, cells: np.ndarray,
                      stats: TraceStats) -> list[Triangle]:
    """Evaluate the 8 corners of every cell directly and run marching cubes.

    Corners shared between neighboring cells are evaluated once per cell on
    purpose: the same lattice positions through the same evaluator give the
    same values, and the cost stays a deterministic 8 per cell.
    """
    if len(cells) == 0:
        return []
    grid = cfg.grid
    corners_idx = cells[:, None, :] + _CORNER_OFFSETS[None, :, :]
    pts = grid.corner_coord(corners_idx.reshape(-1, 3).astype(np.float64))
    vals = _eval_batched(field, pts, stats, cfg.batch_size).reshape(len(cells), 8)
    tris: list[Triangle] = []
    for row in range(len(cells)):
        i, j, k = (int(v) for v in cells[row])
        tris.extend(polygonize_cell(grid, CellIndex(i, j, k),
                                    CellCorners(tuple(float(v) for v in vals[row]))))
    stats.add(cells_polygonized=len(cells))
    return tris


def enumerate_all(field: Field, cfg: PolygonizeConfig) -> PolygonizeResult:
    """Visit all n^3 cells.

    The (n+1)^3 corner lattice is evaluated exactly once, streamed two
    z-slabs at a time so memory stays O(n^2); cells whose corner signs are
    mixed go through marching cubes.
    """
    grid, n = cfg.grid, cfg.grid.n
    stats = TraceStats()
    axis = grid.corner_coord(np.arange(n + 1, dtype=np.float64))
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    slab_xy = np.stack([gx.ravel(), gy.ravel()], axis=1)

    def eval_slab(kc: int) -> np.ndarray:
        pts = np.concatenate(
            [slab_xy, np.full((len(slab_xy), 1), grid.corner_coord(kc))], axis=1)
        return _eval_batched(field, pts, stats, cfg.batch_size).reshape(n + 1, n + 1)

    tris: list[Triangle] = []
    below = eval_slab(0)
    for kc in range(n):
        above = eval_slab(kc + 1)
        inside_lo = below < 0.0
        inside_hi = above < 0.0
        count = np.zeros((n, n), dtype=np.int8)
        for sl in (inside_lo, inside_hi):
            count += sl[:-1, :-1]
            count += sl[1:, :-1]
            count += sl[:-1, 1:]
            count += sl[1:, 1:]
        crossing = np.argwhere((count > 0) & (count < 8))
        for i, j in crossing:
            corner_values = (float(below[i, j]), float(below[i + 1, j]),
                             float(below[i, j + 1]), float(below[i + 1, j + 1]),
                             float(above[i, j]), float(above[i + 1, j]),
                             float(above[i, j + 1]), float(above[i + 1, j + 1]))
            tris.extend(polygonize_cell(grid, CellIndex(int(i), int(j), kc),
                                        CellCorners(corner_values)))
        stats.add(cells_polygonized=len(crossing))
        below = above

    return PolygonizeResult(canonicalize(Mesh(tuple(tris))), stats)


def _march_band(field: Field, cfg: PolygonizeConfig, ray_i: np.ndarray,
                ray_j: np.ndarray, recorder: MarchRecorder | None
                ) -> tuple[np.ndarray, TraceStats]:
    """Sphere trace one band of rays in lockstep; returns the cells to
    polygonize as an (m, 3) index array."""
    grid, n = cfg.grid, cfg.grid.n
    thr = cfg.hit_threshold
    budget = cfg.step_budget
    stats = TraceStats()

    ids = ray_i * n + ray_j
    x = grid.centroid_coord(ray_i.astype(np.float64))
    y = grid.centroid_coord(ray_j.astype(np.float64))
    z = np.full(len(ids), grid.centroid_coord(0))
    last_k = np.full(len(ids), -1, dtype=np.int64)
    steps = np.zeros(len(ids), dtype=np.int64)

    out_i: list[np.ndarray] = []
    out_j: list[np.ndarray] = []
    out_k: list[np.ndarray] = []

    while len(ids) > 0:
        pts = np.stack([x, y, z], axis=1)
        f = _eval_batched(field, pts, stats, cfg.batch_size, march=True)
        steps += 1
        if recorder is not None:
            recorder.observe(ids, z, f)

        absf = np.abs(f)
        trig = absf <= thr
        if np.any(trig):
            zt = z[trig]
            k = np.clip(np.floor((zt + 0.5) * n).astype(np.int64), 0, n - 1)
            if recorder is not None:
                recorder.observe_triggers(ids[trig], k)
            lk = last_k[trig]
            # Cover the cell behind as well: a step of size |f| can land up
            # to the transverse cell half-diagonal past a surface point, so
            # the surface may extend just below the trigger cell.
            k0 = k - 1
            k2 = k + 1
            emits = (((k0 >= 0) & (k0 > lk), k0),
                     (k > lk, k),
                     ((k2 <= n - 1) & (k2 > lk), k2))
            for emit, kk in emits:
                if np.any(emit):
                    out_i.append(ray_i[trig][emit])
                    out_j.append(ray_j[trig][emit])
                    out_k.append(kk[emit])
            last_k[trig] = np.minimum(k + 1, n - 1)
            # Hop: resume at the near face of the cell after the pair the
            # threshold just implicated.
            z[trig] = grid.corner_coord(k + 2)
        adv = ~trig
        z[adv] = z[adv] + absf[adv]

        alive = z <= 0.5
        exhausted = alive & (steps >= budget)
        if np.any(exhausted):
            r = int(np.argmax(exhausted))
            raise MarchBudgetError(int(ray_i[r]), int(ray_j[r]), float(absf[r]), budget)
        if not alive.all():
            ids, x, y, z = ids[alive], x[alive], y[alive], z[alive]
            ray_i, ray_j = ray_i[alive], ray_j[alive]
            last_k, steps = last_k[alive], steps[alive]

    if out_i:
        cells = np.stack([np.concatenate(out_i), np.concatenate(out_j),
                          np.concatenate(out_k)], axis=1)
    else:
        cells = np.empty((0, 3), dtype=np.int64)
    return cells, stats


def gridhop(field: Field, cfg: PolygonizeConfig,
            recorder: MarchRecorder | None = None) -> PolygonizeResult:
    """Cast the n^2 grid rays in +z and sphere trace each one.

    Along a ray the iterate advances by |f| at the current point.  Whenever
    |f| drops to the cell-hit threshold sqrt(6)/(2n), the surface is about
    to share a cell with the iterate: the current cell and the next one
    along the ray are polygonized, plus the cell just behind (a step can
    overshoot a grazing surface by up to the transverse cell half-diagonal,
    which may leave surface slivers below the trigger cell).  Each cell is
    polygonized at most once per ray, tracked monotonically, and the ray
    then hops to the start of the cell past the covered pair.  A ray ends
    when it leaves the volume or exhausts its step budget, the latter
    signalling an invalid bound.
    """
    grid, n = cfg.grid, cfg.grid.n
    if recorder is not None and cfg.workers != 1:
        raise ValueError("march recording requires workers == 1")

    all_i, all_j = np.meshgrid(np.arange(n, dtype=np.int64),
                               np.arange(n, dtype=np.int64), indexing="ij")
    all_i, all_j = all_i.ravel(), all_j.ravel()

    stats = TraceStats()
    stats.add(rays_cast=n * n)

    if cfg.workers == 1:
        band_results = [_march_band(field, cfg, all_i, all_j, recorder)]
    else:
        bounds = np.linspace(0, n * n, cfg.workers + 1, dtype=np.int64)
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_march_band, field, cfg,
                                   all_i[lo:hi], all_j[lo:hi], None)
                       for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            band_results = [f.result() for f in futures]

    cell_arrays = []
    for cells, band_stats in band_results:
        cell_arrays.append(cells)
        stats.merge(band_stats)
    cells = np.concatenate(cell_arrays, axis=0) if cell_arrays else np.empty((0, 3), np.int64)

    tris = _polygonize_cells(field, cfg, cells, stats)
    return PolygonizeResult(canonicalize(Mesh(tuple(tris))), stats)


class _CornerCache:
    """Lazily evaluated corner lattice with one evaluation per lattice point."""

    def __init__(self, field: Field, cfg: PolygonizeConfig, stats: TraceStats):
        self.field = field
        self.cfg = cfg
        self.stats = stats
        self.cache: dict[tuple[int, int, int], float] = {}

    def cell_corners(self, cell: CellIndex) -> CellCorners:
        i, j, k = cell.i, cell.j, cell.k
        keys = [(i + ox, j + oy, k + oz) for ox, oy, oz in _CORNER_OFFSETS]
        missing = [key for key in keys if key not in self.cache]
        if missing:
            grid = self.cfg.grid
            pts = grid.corner_coord(np.array(missing, dtype=np.float64))
            vals = _eval_batched(self.field, pts, self.stats, self.cfg.batch_size)
            for key, v in zip(missing, vals):
                self.cache[key] = float(v)
        return CellCorners(tuple(self.cache[key] for key in keys))


# Face index -> (canonical corner indices on that face, neighbor cell delta).
_FACES = (
    ((1, 3, 5, 7), (1, 0, 0)),
    ((0, 2, 4, 6), (-1, 0, 0)),
    ((2, 3, 6, 7), (0, 1, 0)),
    ((0, 1, 4, 5), (0, -1, 0)),
    ((4, 5, 6, 7), (0, 0, 1)),
    ((0, 1, 2, 3), (0, 0, -1)),
)


def _walk_to_crossing(field: Field, cfg: PolygonizeConfig, seed: Vec3,
                      cache: _CornerCache, stats: TraceStats) -> CellIndex | None:
    """Move a seed toward the surface by probing the six axis directions and
    stepping f(p) along the direction of steepest decrease, until the
    containing cell crosses the surface or the probe budget runs out."""
    grid, n = cfg.grid, cfg.grid.n
    probe_h = 0.5 / n
    min_step = 1.0 / (8 * n)  # keeps degenerate f(p)=0 seeds from stalling
    p = np.array([seed.x, seed.y, seed.z])
    for _ in range(4 * n):
        cell = cell_of_point(grid, Vec3(*p))
        if surface_crosses_cell(cache.cell_corners(cell)):
            return cell
        probes = np.concatenate([p[None, :] + probe_h * np.eye(3),
                                 p[None, :] - probe_h * np.eye(3)])
        vals = _eval_batched(field, np.concatenate([p[None, :], probes]),
                             stats, cfg.batch_size)
        f0 = vals[0]
        direction = np.zeros(3)
        best = int(np.argmin(vals[1:]))
        direction[best % 3] = 1.0 if best < 3 else -1.0
        step = f0 if abs(f0) >= min_step else np.copysign(min_step, f0 if f0 != 0 else 1.0)
        p = np.clip(p + step * direction, -0.5, 0.5)
    stats.warn(f"seed ({seed.x}, {seed.y}, {seed.z}) did not reach a crossing "
               f"cell within {4 * n} probe rounds")
    return None


def continuation(field: Field, cfg: PolygonizeConfig,
                 seeds: Sequence[Vec3]) -> PolygonizeResult:
    """Grow the polygonized set outward across the surface from seed cells.

    Each seed is walked to a surface-crossing cell, then a breadth-first
    propagation visits face-adjacent cells whose shared face shows a corner
    sign change.  Every visited crossing cell is polygonized exactly once;
    corner values are cached so shared lattice corners are evaluated once.
    One connected surface component is produced per seeded region; a seed
    that never reaches the surface only leaves a warning in the stats.
    """
    if not seeds:
        raise ValueError("continuation requires at least one seed point")
    seeds = [s if isinstance(s, Vec3) else Vec3(*s) for s in seeds]
    for s in seeds:
        if not (-0.5 <= s.x <= 0.5 and -0.5 <= s.y <= 0.5 and -0.5 <= s.z <= 0.5):
            raise ValueError(f"seed {s.as_tuple()} outside the closed unit cube")

    grid, n = cfg.grid, cfg.grid.n
    stats = TraceStats()
    cache = _CornerCache(field, cfg, stats)

    queue: deque[CellIndex] = deque()
    for seed in seeds:
        start = _walk_to_crossing(field, cfg, seed, cache, stats)
        if start is not None:
            queue.append(start)

    visited: set[tuple[int, int, int]] = set()
    tris: list[Triangle] = []
    while queue:
        cell = queue.popleft()
        key = (cell.i, cell.j, cell.k)
        if key in visited:
            continue
        visited.add(key)
        corners = cache.cell_corners(cell)
        if not surface_crosses_cell(corners):
            continue
        tris.extend(polygonize_cell(grid, cell, corners))
        stats.add(cells_polygonized=1)
        vals = corners.values
        for face_corners, delta in _FACES:
            ni, nj, nk = cell.i + delta[0], cell.j + delta[1], cell.k + delta[2]
            if not (0 <= ni < n and 0 <= nj < n and 0 <= nk < n):
                continue
            if (ni, nj, nk) in visited:
                continue
            inside = sum(vals[fc] < 0.0 for fc in face_corners)
            if 0 < inside < 4:
                queue.append(CellIndex(ni, nj, nk))

    return PolygonizeResult(canonicalize(Mesh(tuple(tris))), stats)
