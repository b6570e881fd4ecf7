"""Convex polygon primitives used by the outer-approximation and the sampler.

Polygons are stored as counter-clockwise vertex arrays with a cached
halfspace view ``normals @ x <= offsets``.  Intersections that collapse to
zero area are reported as ``None`` rather than as sliver polygons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

REL_TOL = 1e-9
ABS_TOL = 1e-12
# sine of the turning angle below which a vertex is treated as collinear
COLLINEAR_SIN = 1e-12


class GeometryError(ValueError):
    """Raised for invalid polygon input or a degenerate construction."""


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Halfspace:
    """The closed set ``normal . p <= offset`` with a unit outward normal."""

    normal: tuple[float, float]
    offset: float

    def __post_init__(self):
        if abs(math.hypot(*self.normal) - 1.0) > 1e-12:
            raise GeometryError(f"halfspace normal {self.normal} is not unit length")

    def contains(self, p: Sequence[float], slack: float = 0.0) -> bool:
        return self.normal[0] * p[0] + self.normal[1] * p[1] <= self.offset + slack


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise GeometryError(f"inverted rectangle {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, p: Sequence[float]) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    def to_polygon(self) -> ConvexPolygon:
        return ConvexPolygon(
            [
                (self.xmin, self.ymin),
                (self.xmax, self.ymin),
                (self.xmax, self.ymax),
                (self.xmin, self.ymax),
            ]
        )


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _bbox_diagonal(v: np.ndarray) -> float:
    span = v.max(axis=0) - v.min(axis=0)
    return float(math.hypot(span[0], span[1]))


class ConvexPolygon:
    """Counter-clockwise convex polygon with vertex and halfspace views.

    Construction validates orientation and convexity; tolerances scale with
    the bounding-box diagonal of the vertex set.
    """

    __slots__ = ("_v", "_normals", "_offsets", "_scale", "_area")

    def __init__(self, vertices: Iterable[Sequence[float]], *, validate: bool = True):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError(f"expected an (n, 2) vertex array, got shape {v.shape}")
        if len(v) < 3:
            raise GeometryError(f"a polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon vertices must be finite")
        v.setflags(write=False)
        self._v = v
        self._scale = max(_bbox_diagonal(v), ABS_TOL)
        self._area = _signed_area(v)

        edges = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        if validate:
            if self._area <= 0.0:
                raise GeometryError("polygon must be counter-clockwise with positive area")
            if np.any(lengths <= 0.0):
                raise GeometryError("polygon has repeated consecutive vertices")
            nxt = np.roll(edges, -1, axis=0)
            cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
            if np.any(cross < -REL_TOL * self._scale**2):
                raise GeometryError("polygon is not convex")
        normals = np.column_stack((edges[:, 1], -edges[:, 0])) / lengths[:, None]
        normals.setflags(write=False)
        self._normals = normals
        offsets = np.einsum("ij,ij->i", normals, v)
        offsets.setflags(write=False)
        self._offsets = offsets

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    @property
    def normals(self) -> np.ndarray:
        """Unit outward normal of edge ``m`` (from vertex ``m`` to ``m + 1``)."""
        return self._normals

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    @property
    def scale(self) -> float:
        return self._scale

    @property
    def tolerance(self) -> float:
        return max(REL_TOL * self._scale, ABS_TOL)

    def halfspaces(self) -> list[Halfspace]:
        return [
            Halfspace((float(n[0]), float(n[1])), float(c))
            for n, c in zip(self._normals, self._offsets)
        ]

    def __len__(self) -> int:
        return len(self._v)

    def __repr__(self) -> str:
        return f"ConvexPolygon(n={len(self._v)}, area={self._area:.6g})"


def area(poly: ConvexPolygon) -> float:
    return poly._area


def contains(poly: ConvexPolygon, p: Sequence[float]) -> bool:
    """Boundary-inclusive membership test."""
    slack = poly.tolerance
    px, py = float(p[0]), float(p[1])
    return bool(np.all(poly.normals[:, 0] * px + poly.normals[:, 1] * py - poly.offsets <= slack))


def contains_points(poly: ConvexPolygon, points: np.ndarray) -> np.ndarray:
    """Vectorised :func:`contains` over an ``(m, 2)`` array."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.all(pts @ poly.normals.T - poly.offsets <= poly.tolerance, axis=1)


def bounding_rect(poly: ConvexPolygon) -> Rect:
    lo = poly.vertices.min(axis=0)
    hi = poly.vertices.max(axis=0)
    return Rect(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def circumscribed_disk_polygon(
    center: Sequence[float], radius: float, n_edges: int, angle_offset: float = 0.0
) -> ConvexPolygon:
    """Regular ``n_edges``-gon whose inscribed circle is the given disk.

    Vertices sit at circumradius ``radius / cos(pi / n_edges)`` and angles
    ``angle_offset + m * 2 pi / n_edges``.
    """
    if not (radius > 0.0 and math.isfinite(radius)):
        raise GeometryError(f"radius must be positive and finite, got {radius}")
    if n_edges < 3:
        raise GeometryError(f"n_edges must be at least 3, got {n_edges}")
    step = 2.0 * math.pi / n_edges
    r = radius / math.cos(step / 2.0)
    angles = angle_offset + step * np.arange(n_edges)
    v = np.column_stack((center[0] + r * np.cos(angles), center[1] + r * np.sin(angles)))
    return ConvexPolygon(v, validate=False)


def _clean(points: list[tuple[float, float]], scale: float) -> list[tuple[float, float]]:
    """Merge near-duplicate vertices and drop collinear or reflex ones."""
    tol = max(REL_TOL * scale, ABS_TOL)
    pts = points
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        out: list[tuple[float, float]] = []
        for p in pts:
            if out and math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) < tol:
                changed = True
                continue
            out.append(p)
        while len(out) > 1 and math.hypot(out[0][0] - out[-1][0], out[0][1] - out[-1][1]) < tol:
            out.pop()
            changed = True
        pts = out
        if len(pts) < 3:
            break
        kept = []
        n = len(pts)
        for k in range(n):
            ax, ay = pts[k - 1]
            bx, by = pts[k]
            cx, cy = pts[(k + 1) % n]
            ux, uy = bx - ax, by - ay
            wx, wy = cx - bx, cy - by
            norm = math.hypot(ux, uy) * math.hypot(wx, wy)
            if norm == 0.0 or (ux * wy - uy * wx) / norm < COLLINEAR_SIN:
                changed = True
                continue
            kept.append(pts[k])
        pts = kept
    return pts


def _sutherland_hodgman(
    subject: list[tuple[float, float]], clipper: np.ndarray
) -> list[tuple[float, float]]:
    out = subject
    clip_pts = [(float(x), float(y)) for x, y in clipper]
    n = len(clip_pts)
    for k in range(n):
        if not out:
            break
        ax, ay = clip_pts[k]
        bx, by = clip_pts[(k + 1) % n]
        ex, ey = bx - ax, by - ay
        inp, out = out, []
        px, py = inp[-1]
        dp = ex * (py - ay) - ey * (px - ax)
        for qx, qy in inp:
            dq = ex * (qy - ay) - ey * (qx - ax)
            if dq >= 0.0:
                if dp < 0.0:
                    t = dp / (dp - dq)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
            elif dp > 0.0:
                t = dp / (dp - dq)
                out.append((px + t * (qx - px), py + t * (qy - py)))
            px, py, dp = qx, qy, dq
    return out


def clip(subject: ConvexPolygon, clipper: ConvexPolygon) -> ConvexPolygon | None:
    """Intersect two convex polygons (Sutherland-Hodgman).

    Returns ``None`` when the intersection has no interior.
    """
    scale = max(subject.scale, clipper.scale)
    pts = _sutherland_hodgman([(float(x), float(y)) for x, y in subject.vertices], clipper.vertices)
    pts = _clean(pts, scale)
    if len(pts) < 3:
        return None
    poly = ConvexPolygon(pts, validate=False)
    if poly._area < max(ABS_TOL**2, 1e-12 * scale**2):
        return None
    return poly


def intersect_all(polys: Sequence[ConvexPolygon]) -> ConvexPolygon | None:
    if not polys:
        raise GeometryError("intersect_all needs at least one polygon")
    result = polys[0]
    for other in polys[1:]:
        result = clip(result, other)
        if result is None:
            return None
    return result


def offset_outward(poly: ConvexPolygon, distance: float) -> ConvexPolygon:
    """Shift every edge line outward by ``distance`` and re-intersect neighbours.

    Vertex ``m`` lies on edges ``m - 1`` and ``m``; with unit normals
    ``a, b`` the shifted lines meet at ``v + d (a + b) / (1 + a . b)``.
    The result contains the Minkowski sum of ``poly`` and the disk of
    radius ``distance``.
    """
    if not distance >= 0.0:
        raise GeometryError(f"offset distance must be non-negative, got {distance}")
    if distance == 0.0:
        return poly
    a = np.roll(poly.normals, 1, axis=0)
    b = poly.normals
    denom = 1.0 + np.einsum("ij,ij->i", a, b)
    if np.any(denom < 1e-12):
        raise GeometryError("adjacent edges are anti-parallel; cannot offset")
    v = poly.vertices + distance * (a + b) / denom[:, None]
    return ConvexPolygon(v, validate=False)


def rejection_sample(
    poly: ConvexPolygon, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Uniform draws over ``poly`` via its bounding rectangle.

    Returns the ``(n, 2)`` accepted points and the number of rectangle draws
    consumed to obtain them.
    """
    if n < 1:
        raise GeometryError(f"sample count must be positive, got {n}")
    rect = bounding_rect(poly)
    expected_rate = max(area(poly) / max(rect.area, ABS_TOL), 1e-3)
    chunks = []
    have = 0
    drawn = 0
    while have < n:
        batch = int((n - have) / expected_rate * 1.1) + 16
        u = rng.random((batch, 2))
        cand = np.column_stack(
            (rect.xmin + rect.width * u[:, 0], rect.ymin + rect.height * u[:, 1])
        )
        ok = contains_points(poly, cand)
        idx = np.flatnonzero(ok)
        need = n - have
        if len(idx) >= need:
            idx = idx[:need]
            drawn += int(idx[-1]) + 1
        else:
            drawn += batch
        chunks.append(cand[idx])
        have += len(idx)
    return np.concatenate(chunks), drawn


def sample_uniform(poly: ConvexPolygon, n: int, rng: np.random.Generator) -> np.ndarray:
    points, _ = rejection_sample(poly, n, rng)
    return points
