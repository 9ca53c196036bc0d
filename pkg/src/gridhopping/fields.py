"""Signed-distance-bound evaluators: primitives, CSG combinators, transforms.

Every evaluator maps a 3D point to a value whose magnitude never exceeds
the true Euclidean distance to its zero set (negative inside, non-negative
outside).  All bundled evaluators are 1-Lipschitz, which is what makes
sphere tracing along grid rays unable to overshoot the surface.

Evaluators are immutable after construction, pure, and evaluate batches of
points as ``(m, 3)`` float64 arrays.  Formula shapes for the closed-form
primitives follow the usual distance-function repertoire (exact where an
exact form exists, conservative otherwise).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .geometry import Vec3

__all__ = [
    "Field",
    "PlaneField",
    "LipschitzNormalized",
    "plane_distance",
    "sphere",
    "box",
    "box_exact",
    "box_distance",
    "union",
    "intersection",
    "translate",
    "shrink",
    "scale_uniform",
    "torus",
    "cylinder",
    "cone",
    "capsule",
    "hex_prism",
    "genus2",
    "knot_tube",
    "sierpinski_tetra",
    "estimate_lipschitz",
]


def _as_vec3(v) -> Vec3:
    if isinstance(v, Vec3):
        return v
    x, y, z = v
    return Vec3(float(x), float(y), float(z))


class Field:
    """Base contract for signed distance bounds.

    Subclasses implement :meth:`values` for a batch of points; single-point
    evaluation is derived from it so both paths agree bitwise.
    """

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at ``pts`` of shape (m, 3); returns shape (m,)."""
        raise NotImplementedError

    def evaluate(self, p) -> float:
        p = _as_vec3(p)
        return float(self.values(np.array([[p.x, p.y, p.z]], dtype=np.float64))[0])

    def __call__(self, x: float, y: float, z: float) -> float:
        return self.evaluate(Vec3(float(x), float(y), float(z)))

    def __or__(self, other: "Field") -> "Field":
        return union([self, other])

    def __and__(self, other: "Field") -> "Field":
        return intersection([self, other])


class PlaneField(Field):
    """Exact signed distance to a plane given by unit normal and a point on it."""

    def __init__(self, normal, point_on_plane=(0.0, 0.0, 0.0)):
        n = _as_vec3(normal)
        length = n.norm()
        if length < 1e-12:
            raise ValueError("plane normal must be non-zero")
        self.normal = Vec3(n.x / length, n.y / length, n.z / length)
        self.point_on_plane = _as_vec3(point_on_plane)

    def values(self, pts: np.ndarray) -> np.ndarray:
        n, q = self.normal, self.point_on_plane
        return ((pts[:, 0] - q.x) * n.x
                + (pts[:, 1] - q.y) * n.y
                + (pts[:, 2] - q.z) * n.z)


def plane_distance(f: PlaneField, p) -> float:
    """Signed distance n . (p - point_on_plane); exact."""
    return f.evaluate(p)


class _Sphere(Field):
    def __init__(self, radius: float):
        if not radius > 0:
            raise ValueError(f"sphere radius must be positive, got {radius!r}")
        self.radius = float(radius)

    def values(self, pts):
        return np.sqrt(pts[:, 0]**2 + pts[:, 1]**2 + pts[:, 2]**2) - self.radius


def sphere(radius: float) -> Field:
    """Exact signed distance to a sphere of given radius centered at the origin."""
    return _Sphere(radius)


class _BoxBound(Field):
    """Distance bound for an axis-aligned box: max of its six face-plane
    distances.  Conservative outside edge/corner regions."""

    def __init__(self, half_extents):
        h = _as_vec3(half_extents)
        if not (h.x > 0 and h.y > 0 and h.z > 0):
            raise ValueError(f"box half extents must be positive, got {h.as_tuple()}")
        self.half_extents = h

    def values(self, pts):
        h = self.half_extents
        dx = np.abs(pts[:, 0]) - h.x
        dy = np.abs(pts[:, 1]) - h.y
        dz = np.abs(pts[:, 2]) - h.z
        return np.maximum(np.maximum(dx, dy), dz)


class _BoxExact(Field):
    """Exact box distance; tighter than the plane-intersection bound, which
    makes marching faster by a constant factor."""

    def __init__(self, half_extents):
        h = _as_vec3(half_extents)
        if not (h.x > 0 and h.y > 0 and h.z > 0):
            raise ValueError(f"box half extents must be positive, got {h.as_tuple()}")
        self.half_extents = h

    def values(self, pts):
        h = self.half_extents
        q = np.abs(pts) - np.array([h.x, h.y, h.z])
        outside = np.sqrt(np.sum(np.maximum(q, 0.0)**2, axis=1))
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside


def box(hx: float, hy: float, hz: float) -> Field:
    return _BoxBound(Vec3(float(hx), float(hy), float(hz)))


def box_exact(hx: float, hy: float, hz: float) -> Field:
    return _BoxExact(Vec3(float(hx), float(hy), float(hz)))


def box_distance(half_extents, p) -> float:
    """The max-of-six-plane-distances bound at a single point."""
    return _BoxBound(half_extents).evaluate(p)


class _Union(Field):
    def __init__(self, members: Sequence[Field]):
        members = list(members)
        if not members:
            raise ValueError("union requires at least one member field")
        self.members = tuple(members)

    def values(self, pts):
        out = self.members[0].values(pts)
        for m in self.members[1:]:
            out = np.minimum(out, m.values(pts))
        return out


class _Intersection(Field):
    def __init__(self, members: Sequence[Field]):
        members = list(members)
        if not members:
            raise ValueError("intersection requires at least one member field")
        self.members = tuple(members)

    def values(self, pts):
        out = self.members[0].values(pts)
        for m in self.members[1:]:
            out = np.maximum(out, m.values(pts))
        return out


def union(fields: Sequence[Field]) -> Field:
    """Pointwise min of the member bounds; combines shapes into their union."""
    return _Union(fields)


def intersection(fields: Sequence[Field]) -> Field:
    """Pointwise max of the member bounds; combines shapes into their intersection."""
    return _Intersection(fields)


class _Translate(Field):
    def __init__(self, inner: Field, offset):
        self.inner = inner
        self.offset = _as_vec3(offset)

    def values(self, pts):
        o = self.offset
        return self.inner.values(pts - np.array([o.x, o.y, o.z]))


def translate(f: Field, offset) -> Field:
    """g(p) = f(p - offset); preserves the bound property."""
    return _Translate(f, offset)


class _Shrink(Field):
    def __init__(self, inner: Field, lam: float):
        if not lam >= 1.0:
            raise ValueError(f"shrink factor must be >= 1, got {lam!r}")
        self.inner = inner
        self.lam = float(lam)

    def values(self, pts):
        return self.inner.values(pts) / self.lam


def shrink(f: Field, lam: float) -> Field:
    """g(p) = f(p)/lambda with lambda >= 1.

    The zero set is unchanged; dividing restores the underestimation
    property for mildly overestimating fields (e.g. learned ones).
    """
    return _Shrink(f, lam)


class _ScaleUniform(Field):
    def __init__(self, inner: Field, s: float):
        if not s > 0:
            raise ValueError(f"scale factor must be positive, got {s!r}")
        self.inner = inner
        self.s = float(s)

    def values(self, pts):
        return self.inner.values(pts / self.s) * self.s


def scale_uniform(f: Field, s: float) -> Field:
    """Uniform scaling by s; the field value scales with the geometry, so
    the bound property is preserved.  Non-uniform scaling is not offered
    because it would break it."""
    return _ScaleUniform(f, s)


class _Torus(Field):
    """Ring in the xy-plane (axis +z); exact."""

    def __init__(self, ring_radius: float, tube_radius: float):
        if not (ring_radius > 0 and tube_radius > 0):
            raise ValueError("torus radii must be positive")
        self.ring_radius = float(ring_radius)
        self.tube_radius = float(tube_radius)

    def values(self, pts):
        q = np.sqrt(pts[:, 0]**2 + pts[:, 1]**2) - self.ring_radius
        return np.sqrt(q*q + pts[:, 2]**2) - self.tube_radius


def torus(ring_radius: float, tube_radius: float) -> Field:
    return _Torus(ring_radius, tube_radius)


class _Cylinder(Field):
    """Capped cylinder, axis +z, full height h; exact."""

    def __init__(self, radius: float, height: float):
        if not (radius > 0 and height > 0):
            raise ValueError("cylinder dimensions must be positive")
        self.radius = float(radius)
        self.height = float(height)

    def values(self, pts):
        dr = np.sqrt(pts[:, 0]**2 + pts[:, 1]**2) - self.radius
        dz = np.abs(pts[:, 2]) - 0.5 * self.height
        outside = np.sqrt(np.maximum(dr, 0.0)**2 + np.maximum(dz, 0.0)**2)
        inside = np.minimum(np.maximum(dr, dz), 0.0)
        return outside + inside


def cylinder(radius: float, height: float) -> Field:
    return _Cylinder(radius, height)


class _Cone(Field):
    """Capped cone, apex at (0,0,+h/2) opening toward -z, half-angle in
    radians; exact."""

    def __init__(self, angle: float, height: float):
        if not (0 < angle < math.pi / 2 and height > 0):
            raise ValueError("cone needs 0 < angle < pi/2 and positive height")
        self.angle = float(angle)
        self.height = float(height)

    def values(self, pts):
        h = self.height
        # 2D reduction in (radial, axial) with the apex at the origin.
        wx = np.sqrt(pts[:, 0]**2 + pts[:, 1]**2)
        wy = pts[:, 2] - 0.5 * h
        qx = h * math.tan(self.angle)
        qy = -h
        qq = qx*qx + qy*qy
        t = np.clip((wx*qx + wy*qy) / qq, 0.0, 1.0)
        ax = wx - qx*t
        ay = wy - qy*t
        bx = wx - qx*np.clip(wx / qx, 0.0, 1.0)
        by = wy - qy
        d2 = np.minimum(ax*ax + ay*ay, bx*bx + by*by)
        # qy < 0, so k = -1 in the orientation test.
        s = np.maximum(-(wx*qy - wy*qx), -(wy - qy))
        return np.sqrt(d2) * np.sign(s)


def cone(angle: float, height: float) -> Field:
    return _Cone(angle, height)


class _Capsule(Field):
    """Segment from a to b inflated by radius; exact."""

    def __init__(self, a, b, radius: float):
        a, b = _as_vec3(a), _as_vec3(b)
        if not radius > 0:
            raise ValueError("capsule radius must be positive")
        if a == b:
            raise ValueError("capsule endpoints must be distinct")
        self.a, self.b = a, b
        self.radius = float(radius)
        self._ab = np.array([b.x - a.x, b.y - a.y, b.z - a.z])
        self._ab2 = float(self._ab @ self._ab)

    def values(self, pts):
        a = np.array([self.a.x, self.a.y, self.a.z])
        pa = pts - a
        t = np.clip((pa @ self._ab) / self._ab2, 0.0, 1.0)
        d = pa - t[:, None] * self._ab
        return np.sqrt(np.sum(d*d, axis=1)) - self.radius


def capsule(a, b, radius: float) -> Field:
    return _Capsule(a, b, radius)


class _HexPrism(Field):
    """Hexagonal prism, axis +z, flat-to-flat inradius r, full height h; exact."""

    _KX, _KY, _KZ = -0.8660254037844386, 0.5, 0.5773502691896258

    def __init__(self, inradius: float, height: float):
        if not (inradius > 0 and height > 0):
            raise ValueError("hex prism dimensions must be positive")
        self.inradius = float(inradius)
        self.height = float(height)

    def values(self, pts):
        r, hh = self.inradius, 0.5 * self.height
        px = np.abs(pts[:, 0])
        py = np.abs(pts[:, 1])
        pz = np.abs(pts[:, 2])
        t = 2.0 * np.minimum(self._KX*px + self._KY*py, 0.0)
        px = px - t * self._KX
        py = py - t * self._KY
        ex = px - np.clip(px, -self._KZ * r, self._KZ * r)
        ey = py - r
        d1 = np.sqrt(ex*ex + ey*ey) * np.sign(ey)
        d2 = pz - hh
        outside = np.sqrt(np.maximum(d1, 0.0)**2 + np.maximum(d2, 0.0)**2)
        return outside + np.minimum(np.maximum(d1, d2), 0.0)


def hex_prism(inradius: float, height: float) -> Field:
    return _HexPrism(inradius, height)


class LipschitzNormalized(Field):
    """Turns an implicit function g into a distance bound g/L, where L is an
    upper bound on |grad g| over the region where g gets evaluated."""

    def __init__(self, inner: Callable[[np.ndarray], np.ndarray], lipschitz_bound: float):
        if not lipschitz_bound > 0:
            raise ValueError("Lipschitz bound must be positive")
        self.inner = inner
        self.lipschitz_bound = float(lipschitz_bound)

    def values(self, pts):
        return self.inner(pts) / self.lipschitz_bound


def estimate_lipschitz(g: Callable[[np.ndarray], np.ndarray],
                       lo: float, hi: float,
                       grid_n: int = 64, h: float = 1e-4,
                       safety: float = 1.5) -> float:
    """Estimate sup |grad g| over [lo, hi]^3 by central differences on a
    grid_n^3 lattice, multiplied by a safety factor."""
    c = lo + (np.arange(grid_n) + 0.5) * (hi - lo) / grid_n
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    grad2 = np.zeros(len(pts))
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        d = (g(pts + e) - g(pts - e)) / (2.0 * h)
        grad2 += d * d
    return float(np.sqrt(grad2.max()) * safety)


def _genus2_implicit(pts: np.ndarray) -> np.ndarray:
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    return (2.0*y*(y*y - 3.0*x*x)*(1.0 - z*z)
            + (x*x + y*y)**2
            - (9.0*z*z - 1.0)*(1.0 - z*z))


# The raw genus-2 surface extends to radius ~1.84, so scenes shrink it with
# scale_uniform; the gradient bound therefore has to cover the stretched
# evaluation domain, not just the unit cube.
_GENUS2_DOMAIN = 2.05
_genus2_lipschitz_cache: float | None = None


def genus2() -> LipschitzNormalized:
    """The two-holed implicit surface
    2y(y^2-3x^2)(1-z^2) + (x^2+y^2)^2 - (9z^2-1)(1-z^2) = 0,
    normalized into a distance bound by an estimated gradient bound."""
    global _genus2_lipschitz_cache
    if _genus2_lipschitz_cache is None:
        _genus2_lipschitz_cache = estimate_lipschitz(
            _genus2_implicit, -_GENUS2_DOMAIN, _GENUS2_DOMAIN)
    return LipschitzNormalized(_genus2_implicit, _genus2_lipschitz_cache)


def _segment_distances_numpy(pts, starts, dirs, len2):
    out = np.empty(len(pts))
    for s in range(0, len(pts), 4096):
        q = pts[s:s + 4096]
        diff = q[:, None, :] - starts[None, :, :]
        t = np.clip(np.einsum("psk,sk->ps", diff, dirs) / len2, 0.0, 1.0)
        closest = diff - t[:, :, None] * dirs[None, :, :]
        d2 = np.einsum("psk,psk->ps", closest, closest)
        out[s:s + 4096] = np.sqrt(d2.min(axis=1))
    return out


def _make_segment_kernel():
    try:
        from numba import njit
    except ImportError:
        return None

    @njit(cache=True)
    def kernel(pts, starts, dirs, len2):
        out = np.empty(pts.shape[0])
        for i in range(pts.shape[0]):
            px, py, pz = pts[i, 0], pts[i, 1], pts[i, 2]
            best = np.inf
            for s in range(starts.shape[0]):
                ax = px - starts[s, 0]
                ay = py - starts[s, 1]
                az = pz - starts[s, 2]
                t = (ax*dirs[s, 0] + ay*dirs[s, 1] + az*dirs[s, 2]) / len2[s]
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                dx = ax - dirs[s, 0]*t
                dy = ay - dirs[s, 1]*t
                dz = az - dirs[s, 2]*t
                d2 = dx*dx + dy*dy + dz*dz
                if d2 < best:
                    best = d2
            out[i] = np.sqrt(best)
        return out

    return kernel


_segment_kernel = None


def _polyline_distance(pts, starts, dirs, len2):
    """Exact distance from each point to the nearest polyline segment."""
    global _segment_kernel
    if _segment_kernel is None:
        _segment_kernel = _make_segment_kernel() or _segment_distances_numpy
    return _segment_kernel(np.ascontiguousarray(pts), starts, dirs, len2)


# Trefoil curve parameters, sized so the tube fits the unit cube.
_KNOT_RING = 0.30
_KNOT_WOBBLE = 0.12


def _trefoil_points(samples: int) -> np.ndarray:
    t = np.arange(samples) * (2.0 * np.pi / samples)
    radial = _KNOT_RING + _KNOT_WOBBLE * np.cos(3.0 * t)
    return np.stack([radial * np.cos(2.0 * t),
                     radial * np.sin(2.0 * t),
                     _KNOT_WOBBLE * np.sin(3.0 * t)], axis=1)


class _KnotTube(Field):
    """Trefoil tube: distance to an inscribed closed polyline, minus the tube
    radius, minus the maximum chord sagitta delta of the sampling.

    Subtracting delta keeps the value an underestimate of the distance to
    the field's own (slightly inflated) zero set while staying conservative
    with respect to the smooth tube.
    """

    def __init__(self, curve_samples: int, tube_radius: float):
        if curve_samples < 8:
            raise ValueError(f"need at least 8 curve samples, got {curve_samples}")
        if not tube_radius > 0:
            raise ValueError("tube radius must be positive")
        self.curve_samples = int(curve_samples)
        self.tube_radius = float(tube_radius)
        pts = _trefoil_points(self.curve_samples)
        self._starts = pts
        self._dirs = np.roll(pts, -1, axis=0) - pts
        self._len2 = np.einsum("ij,ij->i", self._dirs, self._dirs)
        self.delta = self._max_sagitta()
        if not tube_radius > self.delta:
            raise ValueError(
                f"tube radius {tube_radius!r} does not exceed the chord sagitta "
                f"{self.delta!r}; increase curve_samples")

    def _max_sagitta(self, dense_factor: int = 100) -> float:
        # Max deviation of densely sampled arc points from their own chord,
        # padded 20% for curvature between the dense samples.
        m = self.curve_samples * dense_factor
        fine = _trefoil_points(m)
        seg = np.repeat(np.arange(self.curve_samples), dense_factor)
        rel = fine - self._starts[seg]
        t = np.clip(np.einsum("ij,ij->i", rel, self._dirs[seg]) / self._len2[seg], 0.0, 1.0)
        d = rel - t[:, None] * self._dirs[seg]
        return float(np.sqrt(np.sum(d*d, axis=1)).max() * 1.2)

    def values(self, pts):
        d = _polyline_distance(pts, self._starts, self._dirs, self._len2)
        return d - self.tube_radius - self.delta


def knot_tube(curve_samples: int = 512, tube_radius: float = 0.055) -> Field:
    return _KnotTube(curve_samples, tube_radius)


# Tetrahedron vertices on alternating cube corners; each is a fixed point of
# its own contraction map, so the depth-k orbit sets are nested increasing.
_TETRA_VERTS = np.array([[0.5, 0.5, 0.5],
                         [-0.5, -0.5, 0.5],
                         [0.5, -0.5, -0.5],
                         [-0.5, 0.5, -0.5]])


class _SierpinskiTetra(Field):
    """Distance estimate for the Sierpinski tetrahedron: the exact distance
    to the depth-k orbit of the vertex set, computed by fold-and-expand.

    The value is non-negative everywhere (the target is a point set), it is
    1-Lipschitz, it decreases monotonically as iterations grow, and it is a
    stress scene for the marchers rather than a meshable solid.
    """

    def __init__(self, iterations: int):
        if not 1 <= iterations <= 24:
            raise ValueError(f"iterations must be in [1, 24], got {iterations}")
        self.iterations = int(iterations)

    def values(self, pts):
        z = np.array(pts, dtype=np.float64, copy=True)
        top = _TETRA_VERTS[0]
        for _ in range(self.iterations):
            # Fold across the three mirror planes x+y=0, x+z=0, y+z=0;
            # each fold is continuous and norm preserving.
            for a, b in ((0, 1), (0, 2), (1, 2)):
                m = z[:, a] + z[:, b] < 0.0
                za = z[m, a].copy()
                z[m, a] = -z[m, b]
                z[m, b] = -za
            z = 2.0 * z - top
        d2 = np.full(len(z), np.inf)
        for v in _TETRA_VERTS:
            dv = z - v
            d2 = np.minimum(d2, np.einsum("ij,ij->i", dv, dv))
        return np.sqrt(d2) * (0.5 ** self.iterations)


def sierpinski_tetra(iterations: int) -> Field:
    return _SierpinskiTetra(iterations)
