"""Flat model geometries, set representations, boundary meshes.

Geometries are a circle of length L, the flat torus T^n with side L, or a
Euclidean box.  Sets carry exact descriptions (arcs, balls, half-spaces,
periodic graph layers, or a raw grid indicator); graph layers are stored as
real trigonometric coefficients so their derivatives are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Geometry:
    """Flat ambient space: kind in {"circle", "torus", "box"}."""

    kind: str
    dim: int
    lengths: tuple

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "box"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.kind == "circle" and self.dim != 1:
            raise ValueError("circle geometry is one-dimensional")
        if not (1 <= self.dim <= 3):
            raise ValueError("dim must be 1, 2 or 3")
        if len(self.lengths) != self.dim or any(L <= 0 for L in self.lengths):
            raise ValueError("need one positive length per dimension")
        if self.kind == "torus" and len(set(self.lengths)) != 1:
            raise ValueError("torus uses a single side length")

    @property
    def periodic(self) -> bool:
        return self.kind in ("circle", "torus")

    @property
    def L(self) -> float:
        return self.lengths[0]

    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def wrap(self, delta):
        """Reduce coordinate differences to the nearest lattice representative."""
        delta = np.asarray(delta, dtype=float)
        if not self.periodic:
            return delta
        L = np.asarray(self.lengths)
        return delta - L * np.round(delta / L)

    def distance(self, x, y):
        """Geodesic distance (min over lattice translates on the torus)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = self.wrap(x - y)
        if self.dim == 1:
            return np.abs(d) if d.ndim == 0 or d.shape[-1:] != (1,) else np.abs(d[..., 0])
        return np.sqrt((d * d).sum(axis=-1))


def circle(L: float = 1.0) -> Geometry:
    return Geometry("circle", 1, (float(L),))


def torus(n: int, L: float = 1.0) -> Geometry:
    return Geometry("torus", n, (float(L),) * n)


def box(lengths) -> Geometry:
    lengths = tuple(float(L) for L in np.atleast_1d(lengths))
    return Geometry("box", len(lengths), lengths)


# ---------------------------------------------------------------------------
# shape sets


@dataclass(frozen=True)
class ArcUnion:
    """Disjoint arcs (a_i, b_i) on the circle, or intervals on the line."""

    arcs: tuple

    def __post_init__(self):
        arcs = tuple((float(a), float(b)) for a, b in self.arcs)
        object.__setattr__(self, "arcs", arcs)
        for a, b in arcs:
            if b <= a:
                raise ValueError("arc endpoints must satisfy a < b")
        for (a1, b1), (a2, b2) in zip(arcs, arcs[1:]):
            if a2 < b1:
                raise ValueError("arcs must be disjoint and sorted")


@dataclass(frozen=True)
class Ball:
    center: tuple
    r: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if self.r <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class HalfSpace:
    """{x : <x - offset*normal, normal> < 0}, |normal| = 1."""

    normal: tuple
    offset: float = 0.0

    def __post_init__(self):
        nu = np.atleast_1d(np.asarray(self.normal, dtype=float))
        nrm = float(np.linalg.norm(nu))
        if nrm == 0:
            raise ValueError("normal must be nonzero")
        object.__setattr__(self, "normal", tuple(nu / nrm))


class TrigGraph:
    """Periodic graph function over [0, L) stored as real trig coefficients.

    g(x) = c0 + sum_m [a_m cos(2 pi m x / L) + b_m sin(2 pi m x / L)].
    Derivatives are exact.
    """

    def __init__(self, coeffs_cos, coeffs_sin, L: float, c0: float = 0.0):
        self.a = np.atleast_1d(np.asarray(coeffs_cos, dtype=float))
        self.b = np.atleast_1d(np.asarray(coeffs_sin, dtype=float))
        if self.a.shape != self.b.shape:
            raise ValueError("cos/sin coefficient arrays must match")
        self.L = float(L)
        self.c0 = float(c0)

    @classmethod
    def constant(cls, value: float, L: float) -> "TrigGraph":
        return cls([0.0], [0.0], L, c0=value)

    @classmethod
    def from_samples(cls, values, L: float) -> "TrigGraph":
        values = np.asarray(values, dtype=float)
        N = values.size
        c = np.fft.rfft(values) / N
        a = 2.0 * c.real
        b = -2.0 * c.imag
        c0 = c[0].real
        if N % 2 == 0:
            a[-1] *= 0.5
        return cls(a[1:], b[1:], L, c0=c0)

    def _phases(self, x, deriv: int):
        x = np.asarray(x, dtype=float)
        m = np.arange(1, self.a.size + 1)
        w = 2.0 * np.pi * m / self.L
        th = np.multiply.outer(x, w)
        if deriv == 0:
            return np.cos(th) @ self.a + np.sin(th) @ self.b + self.c0
        if deriv == 1:
            return (-np.sin(th) * w) @ self.a + (np.cos(th) * w) @ self.b
        if deriv == 2:
            return (-np.cos(th) * w**2) @ self.a + (-np.sin(th) * w**2) @ self.b
        if deriv == 3:
            return (np.sin(th) * w**3) @ self.a + (-np.cos(th) * w**3) @ self.b
        raise ValueError("deriv must be 0, 1, 2 or 3")

    def __call__(self, x):
        return self._phases(x, 0)

    def d1(self, x):
        return self._phases(x, 1)

    def d2(self, x):
        return self._phases(x, 2)

    def d3(self, x):
        return self._phases(x, 3)

    def shifted(self, dz: float) -> "TrigGraph":
        return TrigGraph(self.a, self.b, self.L, c0=self.c0 + dz)

    def minus(self, other: "TrigGraph") -> "TrigGraph":
        n = max(self.a.size, other.a.size)
        a = np.zeros(n)
        b = np.zeros(n)
        a[: self.a.size] += self.a
        b[: self.b.size] += self.b
        a[: other.a.size] -= other.a
        b[: other.b.size] -= other.b
        return TrigGraph(a, b, self.L, c0=self.c0 - other.c0)

    def sup_norm(self, nsamp: int = 4096) -> float:
        x = np.linspace(0.0, self.L, nsamp, endpoint=False)
        return float(np.max(np.abs(self(x))))


@dataclass(frozen=True)
class GraphLayers:
    """Ordered periodic layers g_1 < ... < g_N over the one-dimensional base.

    On T^2 the enclosed set alternates: E = {g_1 < y < g_2} u {g_3 < y < g_4}
    ... so the layer count must be even on the torus.
    """

    layers: tuple  # of TrigGraph

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("need at least one layer")
        L = self.layers[0].L
        if any(g.L != L for g in self.layers):
            raise ValueError("layers must share the base period")
        x = np.linspace(0.0, L, 512, endpoint=False)
        vals = np.array([g(x) for g in self.layers])
        gaps = np.diff(vals, axis=0)
        if gaps.size and np.min(gaps) <= 0:
            raise ValueError("layers must be strictly ordered")

    @property
    def base_period(self) -> float:
        return self.layers[0].L

    def min_separation(self) -> float:
        x = np.linspace(0.0, self.base_period, 1024, endpoint=False)
        vals = np.array([g(x) for g in self.layers])
        if len(self.layers) < 2:
            return math.inf
        return float(np.min(np.diff(vals, axis=0)))


@dataclass(frozen=True)
class GridIndicator:
    """Binary field on the geometry grid with values in {-1, +1} (chi_E - chi_{E^c})."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.all(np.isin(v, (-1, 1))):
            raise ValueError("grid indicator values must be -1 or +1")
        object.__setattr__(self, "values", v.astype(float))


# ---------------------------------------------------------------------------
# classical quantities


def classical_perimeter(shape, geom: Geometry) -> float:
    """Exact classical perimeter (counting measure of endpoints in 1D)."""
    if isinstance(shape, ArcUnion):
        return 2.0 * len(shape.arcs)
    if isinstance(shape, Ball):
        if geom.dim == 2:
            return 2.0 * math.pi * shape.r
        if geom.dim == 3:
            return 4.0 * math.pi * shape.r**2
        return 2.0
    if isinstance(shape, HalfSpace):
        if geom.kind != "box":
            raise ValueError("half-spaces live in box geometry")
        nu = np.asarray(shape.normal)
        axis = int(np.argmax(np.abs(nu)))
        if abs(abs(nu[axis]) - 1.0) > 1e-12:
            raise ValueError("half-space perimeter: only axis-aligned normals are exact")
        return float(np.prod([L for i, L in enumerate(geom.lengths) if i != axis]))
    if isinstance(shape, GraphLayers):
        L = shape.base_period
        x = np.linspace(0.0, L, 4096, endpoint=False)
        h = L / x.size
        total = 0.0
        for g in shape.layers:
            total += float(np.sum(np.sqrt(1.0 + g.d1(x) ** 2)) * h)
        return total
    if isinstance(shape, GridIndicator):
        raise ValueError("grid indicators only have the approximate estimator; "
                         "use grid_perimeter_estimate")
    raise TypeError(f"unsupported shape {type(shape)}")


def grid_perimeter_estimate(shape: GridIndicator, geom: Geometry) -> float:
    """Finite-difference perimeter estimate for grid indicators (approximate)."""
    v = (shape.values + 1.0) / 2.0
    total = 0.0
    for ax in range(v.ndim):
        h = geom.lengths[ax] / v.shape[ax]
        jumps = np.abs(np.diff(v, axis=ax, append=np.take(v, [0], axis=ax)))
        cell_area = geom.volume() / v.size / h
        total += float(jumps.sum() * cell_area)
    return total


def volume(shape, geom: Geometry) -> float:
    if isinstance(shape, ArcUnion):
        return float(sum(b - a for a, b in shape.arcs))
    if isinstance(shape, Ball):
        from .constants import ball_volume

        return ball_volume(geom.dim) * shape.r**geom.dim
    if isinstance(shape, HalfSpace):
        raise ValueError("half-spaces have infinite volume; intersect with a region")
    if isinstance(shape, GraphLayers):
        L = shape.base_period
        x = np.linspace(0.0, L, 4096, endpoint=False)
        h = L / x.size
        vals = [g(x) for g in shape.layers]
        tot = 0.0
        for lo, hi in zip(vals[0::2], vals[1::2]):
            tot += float(np.sum(hi - lo) * h)
        return tot
    if isinstance(shape, GridIndicator):
        frac = float(np.mean((shape.values + 1.0) / 2.0))
        return frac * geom.volume()
    raise TypeError(f"unsupported shape {type(shape)}")


# ---------------------------------------------------------------------------
# surface meshes


@dataclass
class SurfaceMesh:
    nodes: np.ndarray    # (m, dim)
    normals: np.ndarray  # (m, dim), unit outward
    weights: np.ndarray  # (m,), sums to the classical perimeter
    patch: np.ndarray    # (m,) integer patch-of-origin labels

    def __post_init__(self):
        nrm = np.linalg.norm(self.normals, axis=1)
        if np.max(np.abs(nrm - 1.0)) > 1e-12:
            raise ValueError("mesh normals must be unit vectors")


def build_surface_mesh(shape, geom: Geometry, resolution: int) -> SurfaceMesh:
    """Quadrature mesh on the boundary of the shape.

    resolution = node count per angular/base dimension; must be >= 8.
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    if isinstance(shape, ArcUnion):
        nodes, normals, patch = [], [], []
        for i, (a, b) in enumerate(shape.arcs):
            nodes += [[a], [b]]
            normals += [[-1.0], [1.0]]
            patch += [i, i]
        return SurfaceMesh(np.array(nodes), np.array(normals),
                           np.ones(2 * len(shape.arcs)), np.array(patch))
    if isinstance(shape, Ball) and geom.dim == 2:
        th = (np.arange(resolution) + 0.5) * 2.0 * math.pi / resolution
        nu = np.stack([np.cos(th), np.sin(th)], axis=1)
        nodes = np.asarray(shape.center) + shape.r * nu
        w = np.full(resolution, 2.0 * math.pi * shape.r / resolution)
        return SurfaceMesh(nodes, nu, w, np.zeros(resolution, dtype=int))
    if isinstance(shape, Ball) and geom.dim == 3:
        # latitude bands with exact band areas, equal longitude spacing
        nth, nph = resolution, resolution
        edges = np.linspace(0.0, math.pi, nth + 1)
        th = 0.5 * (edges[:-1] + edges[1:])
        band = (np.cos(edges[:-1]) - np.cos(edges[1:])) * shape.r**2  # per unit phi
        ph = (np.arange(nph) + 0.5) * 2.0 * math.pi / nph
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        nu = np.stack(
            [np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], axis=-1
        ).reshape(-1, 3)
        nodes = np.asarray(shape.center) + shape.r * nu
        w = np.repeat(band, nph) * (2.0 * math.pi / nph)
        return SurfaceMesh(nodes, nu, w, np.zeros(nodes.shape[0], dtype=int))
    if isinstance(shape, GraphLayers):
        L = shape.base_period
        x = (np.arange(resolution) + 0.5) * L / resolution
        h = L / resolution
        nodes, normals, weights, patch = [], [], [], []
        for i, g in enumerate(shape.layers):
            gx, gp = g(x), g.d1(x)
            sq = np.sqrt(1.0 + gp**2)
            sgn = -1.0 if i % 2 == 0 else 1.0  # outward normal of the alternating set
            nodes.append(np.stack([x, gx], axis=1))
            normals.append(np.stack([-sgn * gp / sq, sgn / sq], axis=1))
            weights.append(sq * h)
            patch.append(np.full(resolution, i))
        return SurfaceMesh(
            np.concatenate(nodes), np.concatenate(normals),
            np.concatenate(weights), np.concatenate(patch),
        )
    raise TypeError(f"no mesh builder for {type(shape)} in dim {geom.dim}")
