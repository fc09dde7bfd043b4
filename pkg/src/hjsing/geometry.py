"""Closed-form Riemannian manifolds: Euclidean space, flat tori, the round 2-sphere and products.

Points are numpy arrays in a canonical chart. Torus coordinates are reduced mod
the periods, sphere points live in R^3 on the sphere of the given radius and
product points are the concatenation of the factor coordinates. Every function
broadcasts over leading axes unless stated otherwise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

# Relative tolerance used to decide that two geodesics have the same length.
TIE_RTOL = 1e-9
# Normalized initial velocities closer than this are the same geodesic.
DISTINCT_TOL = 1e-6


class Manifold:
    """Common interface. Subclasses fill in the metric operations."""

    dim: int
    ambient: int

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient:
            raise ValueError(f"point has {x.shape[-1]} coordinates, manifold expects {self.ambient}")
        return x

    def normalize(self, x):
        return self.check(x)

    def norm(self, x, v):
        return np.linalg.norm(np.asarray(v, dtype=float), axis=-1)

    def project_tangent(self, x, v):
        return np.asarray(v, dtype=float)

    def geodesic(self, x, v, s):
        """Position and velocity at time s of the geodesic with initial state (x, v)."""
        raise NotImplementedError

    def exp(self, x, v):
        return self.geodesic(x, v, 1.0)[0]

    def logs(self, x, y, slack=0.0, cap=8):
        """Initial velocities of geodesics x -> y (unit time) whose length is within
        `slack` of the distance, plus a flag telling whether the list is complete."""
        raise NotImplementedError

    def is_flat(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(Manifold):
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be at least 1")

    @property
    def dim(self):
        return self.n

    @property
    def ambient(self):
        return self.n

    def distance(self, x, y):
        return np.linalg.norm(np.asarray(y, float) - np.asarray(x, float), axis=-1)

    def log(self, x, y):
        return np.asarray(y, float) - np.asarray(x, float)

    def geodesic(self, x, v, s):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        return x + s * v, v.copy()

    def logs(self, x, y, slack=0.0, cap=8):
        return [self.log(x, y)], True

    def is_flat(self):
        return True

    def to_dict(self):
        return {"kind": "euclidean", "n": self.n}


@dataclass(frozen=True)
class FlatTorus(Manifold):
    periods: tuple

    def __post_init__(self):
        if len(self.periods) < 1 or min(self.periods) <= 0:
            raise ValueError("torus needs at least one strictly positive period")
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))

    @property
    def n(self):
        return len(self.periods)

    @property
    def dim(self):
        return self.n

    @property
    def ambient(self):
        return self.n

    @property
    def period_array(self):
        return np.array(self.periods)

    def normalize(self, x):
        x = self.check(x)
        p = self.period_array
        x = np.mod(x, p)
        # np.mod can return p itself for tiny negative inputs
        return np.where(x >= p, x - p, x)

    def log(self, x, y):
        p = self.period_array
        d = np.asarray(y, float) - np.asarray(x, float)
        return d - p * np.round(d / p)

    def distance(self, x, y):
        return np.linalg.norm(self.log(x, y), axis=-1)

    def geodesic(self, x, v, s):
        v = np.asarray(v, float)
        return self.normalize(np.asarray(x, float) + s * v), v.copy()

    def logs(self, x, y, slack=0.0, cap=8):
        p = self.period_array
        base = self.log(x, y)
        best = np.linalg.norm(base)
        found = []
        for k in itertools.product(range(-2, 3), repeat=self.n):
            lift = base + np.array(k) * p
            if np.linalg.norm(lift) <= best * (1 + TIE_RTOL) + slack + 1e-15:
                found.append(lift)
        found.sort(key=lambda w: (np.linalg.norm(w), tuple(w)))
        out = _distinct(found)
        return out[:cap], len(out) <= cap

    def is_flat(self):
        return True

    def to_dict(self):
        return {"kind": "torus", "periods": list(self.periods)}


@dataclass(frozen=True)
class Sphere2(Manifold):
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be strictly positive")

    dim = 2
    ambient = 3

    def normalize(self, x):
        x = self.check(x)
        return self.radius * x / np.linalg.norm(x, axis=-1, keepdims=True)

    def _angle(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
        y0, y1, y2 = y[..., 0], y[..., 1], y[..., 2]
        cross = np.sqrt((x1 * y2 - x2 * y1) ** 2 + (x2 * y0 - x0 * y2) ** 2 + (x0 * y1 - x1 * y0) ** 2)
        dot = np.sum(x * y, axis=-1)
        return np.arctan2(cross, dot)

    def distance(self, x, y):
        return self.radius * self._angle(x, y)

    def project_tangent(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        return v - np.sum(x * v, axis=-1, keepdims=True) * x / self.radius**2

    def log(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        theta = self._angle(x, y)[..., None]
        u = self.project_tangent(x, y)
        nu = np.linalg.norm(u, axis=-1, keepdims=True)
        if x.ndim == 1 and nu[0] == 0.0 and theta[0] > 1.0:
            # exact antipodes: any meridian minimizes, take a deterministic one
            u = _orthogonal(x)
            nu = np.ones(1)
        return self.radius * theta * u / np.where(nu > 0, nu, 1.0)

    def geodesic(self, x, v, s):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        r = self.radius
        speed = np.linalg.norm(v, axis=-1, keepdims=True)
        w = speed / r
        c = np.cos(s * w)
        sn = np.sin(s * w)
        unit = np.where(speed > 0, v / np.where(speed > 0, speed, 1.0), 0.0)
        pos = x * c + r * sn * unit
        vel = -x * w * sn + v * c
        return pos, vel

    def logs(self, x, y, slack=0.0, cap=8):
        theta = float(self._angle(x, y))
        if theta == 0.0:
            return [np.zeros(3)], True
        # the second arc around the great circle has length r(2pi - theta)
        if self.radius * (2 * np.pi - 2 * theta) > slack + TIE_RTOL * self.radius * np.pi:
            return [self.log(x, y)], True
        x = np.asarray(x, float)
        e1 = _orthogonal(x)
        e2 = np.cross(x / self.radius, e1)
        fan = []
        for k in range(cap):
            a = 2 * np.pi * k / cap
            fan.append(self.radius * theta * (np.cos(a) * e1 + np.sin(a) * e2))
        return fan, False

    def to_dict(self):
        return {"kind": "sphere", "radius": self.radius}


@dataclass(frozen=True)
class Product(Manifold):
    left: Manifold
    right: Manifold

    @property
    def dim(self):
        return self.left.dim + self.right.dim

    @property
    def ambient(self):
        return self.left.ambient + self.right.ambient

    def split(self, x):
        x = np.asarray(x, float)
        k = self.left.ambient
        return x[..., :k], x[..., k:]

    def join(self, a, b):
        return np.concatenate([np.asarray(a, float), np.asarray(b, float)], axis=-1)

    def normalize(self, x):
        a, b = self.split(self.check(x))
        return self.join(self.left.normalize(a), self.right.normalize(b))

    def distance(self, x, y):
        xa, xb = self.split(x)
        ya, yb = self.split(y)
        return np.hypot(self.left.distance(xa, ya), self.right.distance(xb, yb))

    def norm(self, x, v):
        xa, xb = self.split(x)
        va, vb = self.split(v)
        return np.hypot(self.left.norm(xa, va), self.right.norm(xb, vb))

    def project_tangent(self, x, v):
        xa, xb = self.split(x)
        va, vb = self.split(v)
        return self.join(self.left.project_tangent(xa, va), self.right.project_tangent(xb, vb))

    def log(self, x, y):
        xa, xb = self.split(x)
        ya, yb = self.split(y)
        return self.join(self.left.log(xa, ya), self.right.log(xb, yb))

    def geodesic(self, x, v, s):
        xa, xb = self.split(x)
        va, vb = self.split(v)
        pa, wa = self.left.geodesic(xa, va, s)
        pb, wb = self.right.geodesic(xb, vb, s)
        return self.join(pa, pb), self.join(wa, wb)

    def logs(self, x, y, slack=0.0, cap=8):
        xa, xb = self.split(x)
        ya, yb = self.split(y)
        la, ea = self.left.logs(xa, ya, slack, cap)
        lb, eb = self.right.logs(xb, yb, slack, cap)
        pairs = [self.join(a, b) for a, b in itertools.product(la, lb)]
        return pairs[:cap], ea and eb and len(pairs) <= cap

    def is_flat(self):
        return self.left.is_flat() and self.right.is_flat()

    def to_dict(self):
        return {"kind": "product", "left": self.left.to_dict(), "right": self.right.to_dict()}


def _orthogonal(x):
    """A deterministic unit vector orthogonal to x in R^3."""
    x = np.asarray(x, float)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(x)))] = 1.0
    u = np.cross(x, axis)
    return u / np.linalg.norm(u)


def _distinct(vectors):
    out = []
    for v in vectors:
        nv = np.linalg.norm(v)
        dv = v / nv if nv > 0 else v
        if all(np.linalg.norm(dv - (w / np.linalg.norm(w) if np.linalg.norm(w) > 0 else w)) > DISTINCT_TOL
               for w in out):
            out.append(v)
    return out


def manifold_from_dict(block: dict) -> Manifold:
    kind = block.get("kind")
    if kind == "euclidean":
        return Euclidean(int(block["n"]))
    if kind == "torus":
        if "periods" in block:
            return FlatTorus(tuple(block["periods"]))
        return FlatTorus((1.0,) * int(block["n"]))
    if kind == "sphere":
        return Sphere2(float(block.get("radius", 1.0)))
    if kind == "product":
        return Product(manifold_from_dict(block["left"]), manifold_from_dict(block["right"]))
    raise ValueError(f"unknown manifold kind {kind!r}")


@dataclass
class GeodesicSegment:
    manifold: Manifold
    start: np.ndarray
    initial_velocity: np.ndarray
    duration: float = 1.0

    def at(self, s):
        return self.manifold.geodesic(self.start, self.initial_velocity, s)[0]

    def velocity_at(self, s):
        return self.manifold.geodesic(self.start, self.initial_velocity, s)[1]

    @property
    def speed(self):
        return float(self.manifold.norm(self.start, self.initial_velocity))

    @property
    def length(self):
        return self.speed * self.duration

    def polyline(self, n):
        s = np.linspace(0.0, self.duration, n + 1)
        return np.array([self.at(si) for si in s])


def distance(m: Manifold, x, y) -> float:
    return float(m.distance(m.check(x), m.check(y)))


def minimizing_geodesics(m: Manifold, x, y, cap: int = 8):
    """All distinct minimizing geodesics from x to y on [0, 1], up to `cap`.

    Returns (segments, exhaustive). `exhaustive` is False when a continuum of
    minimizers exists (antipodal points on the sphere) or the cap truncated the list.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    x = m.check(x)
    y = m.check(y)
    vels, exhaustive = m.logs(x, y, 0.0, cap)
    return [GeodesicSegment(m, x, v, 1.0) for v in vels], exhaustive


def diagonal_distance(m: Manifold, x, y) -> float:
    """Distance from (x, y) to the diagonal of M x M."""
    return distance(m, x, y) / np.sqrt(2.0)


def midpoint_diagonal_distance(m: Manifold, x, y, samples: int = 2001) -> float:
    """Brute-force min over c of sqrt(d(x,c)^2 + d(y,c)^2) along a minimizing geodesic."""
    segs, _ = minimizing_geodesics(m, x, y, cap=1)
    s = np.linspace(0.0, 1.0, samples)
    pts = np.array([segs[0].at(si) for si in s])
    vals = np.sqrt(m.distance(x, pts) ** 2 + m.distance(y, pts) ** 2)
    i = int(np.argmin(vals))
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, samples - 1)]
    for _ in range(100):
        a = lo + (hi - lo) / 3
        b = hi - (hi - lo) / 3
        fa = np.hypot(m.distance(x, segs[0].at(a)), m.distance(y, segs[0].at(a)))
        fb = np.hypot(m.distance(x, segs[0].at(b)), m.distance(y, segs[0].at(b)))
        if fa < fb:
            hi = b
        else:
            lo = a
    c = segs[0].at(0.5 * (lo + hi))
    return float(np.hypot(m.distance(x, c), m.distance(y, c)))


def random_points(m: Manifold, rng: np.random.Generator, count: int, lo=None, hi=None) -> np.ndarray:
    """Uniform samples: box [lo, hi] for Euclidean, period cell for tori, uniform on spheres."""
    if isinstance(m, Euclidean):
        lo = -np.ones(m.n) if lo is None else np.asarray(lo, float)
        hi = np.ones(m.n) if hi is None else np.asarray(hi, float)
        return lo + (hi - lo) * rng.random((count, m.n))
    if isinstance(m, FlatTorus):
        return m.normalize(rng.random((count, m.n)) * m.period_array)
    if isinstance(m, Sphere2):
        return m.normalize(rng.standard_normal((count, 3)))
    if isinstance(m, Product):
        def part(lim, a, b):
            return None if lim is None else np.asarray(lim, float)[a:b]
        k = m.left.ambient
        a = random_points(m.left, rng, count, part(lo, 0, k), part(hi, 0, k))
        b = random_points(m.right, rng, count, part(lo, k, None), part(hi, k, None))
        return m.join(a, b)
    raise TypeError(type(m))


def grid_points(m: Manifold, h: float, lo=None, hi=None) -> np.ndarray:
    """Candidate grid with spacing close to h covering the window (or the whole compact manifold)."""
    if isinstance(m, Euclidean):
        axes = [np.linspace(a, b, max(int(round((b - a) / h)), 1) + 1) for a, b in zip(lo, hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.n)
    if isinstance(m, FlatTorus):
        axes = []
        for p in m.periods:
            k = max(int(round(p / h)), 1)
            axes.append(np.arange(k) * (p / k))
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.n)
    if isinstance(m, Sphere2):
        count = max(int(np.ceil(4 * np.pi * m.radius**2 / h**2)), 8)
        return m.radius * fibonacci_sphere(count)
    if isinstance(m, Product):
        k = m.left.ambient
        a = grid_points(m.left, h, None if lo is None else lo[:k], None if hi is None else hi[:k])
        b = grid_points(m.right, h, None if lo is None else lo[k:], None if hi is None else hi[k:])
        ia, ib = np.meshgrid(np.arange(len(a)), np.arange(len(b)), indexing="ij")
        return m.join(a[ia.ravel()], b[ib.ravel()])
    raise TypeError(type(m))


def fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def window_diameter(m: Manifold, lo=None, hi=None) -> float:
    """Longest side of the window box (longest period on tori, half circumference on spheres)."""
    if isinstance(m, Euclidean):
        return float(np.max(np.asarray(hi, float) - np.asarray(lo, float)))
    if isinstance(m, FlatTorus):
        return float(np.max(m.period_array))
    if isinstance(m, Sphere2):
        return float(np.pi * m.radius)
    if isinstance(m, Product):
        k = m.left.ambient
        a = window_diameter(m.left, None if lo is None else lo[:k], None if hi is None else hi[:k])
        b = window_diameter(m.right, None if lo is None else lo[k:], None if hi is None else hi[k:])
        return float(max(a, b))
    raise TypeError(type(m))
