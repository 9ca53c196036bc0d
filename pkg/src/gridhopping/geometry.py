"""Grid, mesh and bookkeeping types shared by every polygonization strategy.

The polygonization volume is always the unit cube centered at the origin,
split into ``n`` cells per axis.  Everything here is an immutable value
type except :class:`TraceStats`, which supports concurrent increments.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

__all__ = [
    "Vec3",
    "GridSpec",
    "CellIndex",
    "Ray",
    "Triangle",
    "Mesh",
    "TraceStats",
    "cell_centroid",
    "ray_origin",
    "cell_hit_threshold",
    "cell_of_point",
    "canonicalize",
]

# Sort-key quantization step (2**-30).  Far below any geometric tolerance;
# only used to stabilize canonical ordering.
_QUANT = float(2**30)


@dataclass(frozen=True, slots=True)
class Vec3:
    """A point or direction in unit-cube coordinates."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError("Vec3 components must be finite, got "
                             f"({self.x!r}, {self.y!r}, {self.z!r})")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True, slots=True)
class GridSpec:
    """An n x n x n cell grid spanning [-1/2, 1/2]^3 exactly."""

    n: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            raise ValueError(f"grid resolution must be a positive integer, got {self.n!r}")

    @property
    def cell_size(self) -> float:
        return 1.0 / self.n

    def centroid_coord(self, idx):
        """Axis coordinate of cell centroid ``idx``; accepts scalars or arrays.

        All marching code derives centroid coordinates through this single
        expression so that values agree bitwise across strategies.
        """
        return (-0.5 + 1.0 / (2 * self.n)) + idx / self.n

    def corner_coord(self, idx):
        """Axis coordinate of lattice corner ``idx`` (0..n); scalar or array."""
        return idx / self.n - 0.5


@dataclass(frozen=True, slots=True)
class CellIndex:
    """Integer triple addressing one grid cell, 0 <= i,j,k <= n-1."""

    i: int
    j: int
    k: int


@dataclass(frozen=True, slots=True)
class Ray:
    origin: Vec3
    direction: Vec3

    def __post_init__(self) -> None:
        if abs(self.direction.norm() - 1.0) > 1e-12:
            raise ValueError(f"ray direction must be unit length, |d| = {self.direction.norm()!r}")


@dataclass(frozen=True, slots=True)
class Triangle:
    """One output triangle together with the cell that produced it."""

    a: Vec3
    b: Vec3
    c: Vec3
    cell: CellIndex


@dataclass(frozen=True, slots=True)
class Mesh:
    """An ordered collection of triangles.

    Two meshes compare equal iff their triangle sequences are identical,
    so exact cross-method comparison is ``canonicalize(m1) == canonicalize(m2)``.
    """

    triangles: tuple[Triangle, ...] = ()

    def __len__(self) -> int:
        return len(self.triangles)

    def __iter__(self):
        return iter(self.triangles)


class TraceStats:
    """Monotone work counters, safe for concurrent increments.

    Counters are the primary complexity metric: they are deterministic
    and hardware independent, unlike wall time.
    """

    __slots__ = ("_lock", "field_evals", "march_steps", "cells_polygonized",
                 "rays_cast", "warnings")

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.field_evals = 0
        self.march_steps = 0
        self.cells_polygonized = 0
        self.rays_cast = 0
        self.warnings: list[str] = []

    def add(self, field_evals: int = 0, march_steps: int = 0,
            cells_polygonized: int = 0, rays_cast: int = 0) -> None:
        if min(field_evals, march_steps, cells_polygonized, rays_cast) < 0:
            raise ValueError("counters are monotone; negative increments rejected")
        with self._lock:
            self.field_evals += field_evals
            self.march_steps += march_steps
            self.cells_polygonized += cells_polygonized
            self.rays_cast += rays_cast

    def warn(self, message: str) -> None:
        with self._lock:
            self.warnings.append(message)

    def merge(self, other: "TraceStats") -> None:
        self.add(other.field_evals, other.march_steps,
                 other.cells_polygonized, other.rays_cast)
        with self._lock:
            self.warnings.extend(other.warnings)

    def __repr__(self) -> str:
        return (f"TraceStats(field_evals={self.field_evals}, march_steps={self.march_steps}, "
                f"cells_polygonized={self.cells_polygonized}, rays_cast={self.rays_cast})")


def cell_centroid(grid: GridSpec, c: CellIndex) -> Vec3:
    """Centroid of cell ``c``: each axis at -1/2 + 1/(2n) + idx/n."""
    _check_cell(grid, c)
    return Vec3(grid.centroid_coord(c.i), grid.centroid_coord(c.j), grid.centroid_coord(c.k))


def ray_origin(grid: GridSpec, i: int, j: int) -> Ray:
    """The +z grid ray for column (i, j), starting on the near face plane."""
    n = grid.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"ray column ({i}, {j}) outside grid of resolution {n}")
    origin = Vec3(grid.centroid_coord(i), grid.centroid_coord(j), grid.centroid_coord(0))
    return Ray(origin, Vec3(0.0, 0.0, 1.0))


def cell_hit_threshold(grid: GridSpec) -> float:
    """Distance below which the current point may share a cell (or the next
    cell along the ray) with the surface: sqrt(6)/(2n)."""
    return math.sqrt(6.0) / (2.0 * grid.n)


def cell_of_point(grid: GridSpec, p: Vec3) -> CellIndex:
    """Cell containing ``p``.

    Points exactly on internal boundaries belong to the higher-index cell;
    points on the +1/2 faces are clamped to the last cell.
    """
    for v in (p.x, p.y, p.z):
        if not -0.5 <= v <= 0.5:
            raise ValueError(f"point {p.as_tuple()} outside the closed unit cube")
    n = grid.n
    return CellIndex(*(min(max(int(math.floor((v + 0.5) * n)), 0), n - 1)
                       for v in (p.x, p.y, p.z)))


def _check_cell(grid: GridSpec, c: CellIndex) -> None:
    n = grid.n
    if not (0 <= c.i < n and 0 <= c.j < n and 0 <= c.k < n):
        raise IndexError(f"cell {(c.i, c.j, c.k)} outside grid of resolution {n}")


def _triangle_sort_key(t: Triangle):
    c = t.cell
    key: list = [c.i, c.j, c.k]
    for v in (t.a, t.b, t.c):
        key.append(round(v.x * _QUANT))
        key.append(round(v.y * _QUANT))
        key.append(round(v.z * _QUANT))
    # Raw coordinates as the final tiebreak make the order a deterministic
    # function of the triangle multiset even under quantization collisions.
    for v in (t.a, t.b, t.c):
        key.extend((v.x, v.y, v.z))
    return tuple(key)


def canonicalize(m: Mesh) -> Mesh:
    """Deterministic ordering of a triangle multiset.

    Triangles are sorted by producing cell in row-major (i, j, k) order and
    then by vertex coordinates quantized to multiples of 2**-30.  Vertex
    order within each triangle (winding) is preserved.  Idempotent and
    permutation invariant.
    """
    return Mesh(tuple(sorted(m.triangles, key=_triangle_sort_key)))
