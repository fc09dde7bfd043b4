"""Closed sets, initial data and the negative/positive Lax-Oleinik operators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .expr import Potential
from .geometry import (Euclidean, FlatTorus, Manifold, Product, Sphere2, _orthogonal, grid_points,
                       window_diameter)
from .tonelli import (Kinetic, Lagrangian, NonConvergence, _direct, _lifted_targets, DiscreteCurve,
                      minimal_action, minimal_action_values, terminal_velocity)

INF = math.inf
ON_SET_TOL = 1e-10


# ---------------------------------------------------------------- closed sets

class ClosedSet:
    manifold: Manifold

    def distance(self, X):
        raise NotImplementedError

    def projections(self, x, slack=0.0, cap=8):
        """Displacements w at x with exp_x(w) in C and |w| <= d_C(x) + slack."""
        raise NotImplementedError

    def samples(self, h):
        """Points of C at spacing about h (used when no closed-form action is available)."""
        raise NotImplementedError

    def contains(self, x, tol=ON_SET_TOL):
        return bool(self.distance(x) <= tol)


@dataclass
class EmptySet(ClosedSet):
    manifold: Manifold

    def distance(self, X):
        return np.full(np.shape(X)[:-1], INF)

    def projections(self, x, slack=0.0, cap=8):
        return [], True

    def samples(self, h):
        return np.zeros((0, self.manifold.ambient))

    def to_dict(self):
        return {"kind": "empty"}


@dataclass
class FinitePoints(ClosedSet):
    manifold: Manifold
    points: np.ndarray

    def __post_init__(self):
        self.points = self.manifold.normalize(np.atleast_2d(np.asarray(self.points, float)))

    def distance(self, X):
        X = np.asarray(X, float)
        d = self.manifold.distance(X[..., None, :], self.points)
        return np.min(d, axis=-1)

    def projections(self, x, slack=0.0, cap=8):
        m = self.manifold
        d = m.distance(x, self.points)
        best = float(np.min(d))
        out, exhaustive = [], True
        for i in np.argsort(d, kind="stable"):
            if d[i] > best + slack:
                break
            logs, ex = m.logs(x, self.points[i], slack=best + slack - d[i], cap=cap)
            exhaustive &= ex
            out.extend(w for w in logs if m.norm(x, w) <= best + slack + 1e-15)
        return out[:cap], exhaustive and len(out) <= cap

    def samples(self, h):
        return self.points.copy()

    def to_dict(self):
        return {"kind": "points", "points": self.points.tolist()}


@dataclass
class Circle(ClosedSet):
    """Circle of the given radius in the Euclidean plane."""

    center: np.ndarray
    radius: float
    manifold: Manifold = field(default_factory=lambda: Euclidean(2))

    def __post_init__(self):
        self.center = np.asarray(self.center, float)

    def distance(self, X):
        rho = np.linalg.norm(np.asarray(X, float) - self.center, axis=-1)
        return np.abs(rho - self.radius)

    def projections(self, x, slack=0.0, cap=8):
        rel = np.asarray(x, float) - self.center
        rho = float(np.linalg.norm(rel))
        R = self.radius
        d = abs(rho - R)
        if rho * R > 0:
            c = (rho * rho + R * R - (d + slack) ** 2) / (2 * rho * R)
            half = math.acos(max(-1.0, min(1.0, c)))
        else:
            half = math.pi
        if half >= math.pi:
            angles = [2 * math.pi * k / cap for k in range(cap)]
            base = 0.0
            exhaustive = False
        else:
            base = math.atan2(rel[1], rel[0])
            angles = [0.0] if half == 0.0 else [0.0, -half / 2, half / 2, -half, half]
            exhaustive = True
        pts = [self.center + R * np.array([math.cos(base + a), math.sin(base + a)]) for a in angles]
        return [p - x for p in pts], exhaustive

    def samples(self, h):
        k = max(int(math.ceil(2 * math.pi * self.radius / h)), 8)
        a = 2 * math.pi * np.arange(k) / k
        return self.center + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def to_dict(self):
        return {"kind": "circle", "center": self.center.tolist(), "radius": self.radius}


@dataclass
class Polyline(ClosedSet):
    """Union of straight segments in the Euclidean plane (closed loop when `closed`)."""

    vertices: np.ndarray
    closed: bool = True
    manifold: Manifold = field(default_factory=lambda: Euclidean(2))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, float)
        v = self.vertices
        ends = np.roll(v, -1, axis=0) if self.closed else v[1:]
        starts = v if self.closed else v[:-1]
        self._a = starts
        self._b = ends

    def _project(self, X):
        X = np.asarray(X, float)[..., None, :]
        ab = self._b - self._a
        s = np.sum((X - self._a) * ab, axis=-1) / np.sum(ab * ab, axis=-1)
        s = np.clip(s, 0.0, 1.0)
        foot = self._a + s[..., None] * ab
        return foot, np.linalg.norm(X - foot, axis=-1)

    def distance(self, X):
        return np.min(self._project(X)[1], axis=-1)

    def projections(self, x, slack=0.0, cap=8):
        x = np.asarray(x, float)
        foot, d = self._project(x)
        best = float(np.min(d))
        ab = self._b - self._a
        pts = []
        for i in np.argsort(d, kind="stable"):
            if d[i] > best + slack:
                break
            # near-optimal stretch of this segment around its foot point
            along = math.sqrt(max((best + slack) ** 2 - d[i] ** 2, 0.0))
            unit = ab[i] / np.linalg.norm(ab[i])
            for off in (0.0, -along, along):
                p = foot[i] + off * unit
                t = float(np.dot(p - self._a[i], unit))
                if -1e-12 <= t <= np.linalg.norm(ab[i]) + 1e-12:
                    pts.append(p)
        out = []
        for p in pts:
            if all(np.linalg.norm(p - q) > 1e-12 for q in out):
                out.append(p)
        return [p - x for p in out[:cap]], len(out) <= cap

    def samples(self, h):
        pts = []
        for a, b in zip(self._a, self._b):
            k = max(int(math.ceil(np.linalg.norm(b - a) / h)), 1)
            s = np.arange(k) / k
            pts.append(a + s[:, None] * (b - a))
        if not self.closed:
            pts.append(self._b[-1:])
        return np.concatenate(pts)

    def to_dict(self):
        return {"kind": "polyline", "vertices": self.vertices.tolist(), "closed": self.closed}


@dataclass
class BoxComplement(ClosedSet):
    """Everything outside the open box (lo, hi) in Euclidean space, so d_C is the depth inside the box."""

    lo: np.ndarray
    hi: np.ndarray
    manifold: Manifold | None = None

    def __post_init__(self):
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("box needs lo < hi componentwise")
        if self.manifold is None:
            self.manifold = Euclidean(len(self.lo))

    def _depths(self, X):
        X = np.asarray(X, float)
        return np.concatenate([X - self.lo, self.hi - X], axis=-1)

    def distance(self, X):
        return np.maximum(np.min(self._depths(X), axis=-1), 0.0)

    def projections(self, x, slack=0.0, cap=8):
        x = np.asarray(x, float)
        n = len(x)
        depths = self._depths(x)
        best = float(np.min(depths))
        if best <= 0:
            return [np.zeros(n)], True
        out = []
        for i in np.flatnonzero(depths <= best + slack):
            w = np.zeros(n)
            w[i % n] = -depths[i] if i < n else depths[i]
            out.append(w)
        return out[:cap], len(out) <= cap

    def samples(self, h):
        """Points on the box boundary, which is where every inside point first meets the set."""
        axes = [np.linspace(a, b, max(int(math.ceil((b - a) / h)), 1) + 1) for a, b in zip(self.lo, self.hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(self.lo))
        on_face = np.any(np.isclose(pts, self.lo) | np.isclose(pts, self.hi), axis=1)
        return pts[on_face]

    def to_dict(self):
        return {"kind": "box-complement", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass
class Diagonal(ClosedSet):
    """The diagonal of M x M. Projections come from a grid search for midpoints."""

    base: Manifold
    h: float = 0.05
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.manifold = Product(self.base, self.base)
        self._grid = None

    def distance(self, X):
        a, b = self.manifold.split(np.asarray(X, float))
        return self.base.distance(a, b) / math.sqrt(2.0)

    def _candidates(self, x, y):
        m = self.base
        if isinstance(m, Euclidean):
            return np.atleast_2d(0.5 * (x + y))
        if self._grid is None:
            self._grid = grid_points(m, self.h, self.lo, self.hi)
        g = self._grid
        f = m.distance(x, g) ** 2 + m.distance(y, g) ** 2
        keep = f <= np.min(f) + 4 * m.dim * self.h**2 + 1e-12
        return g[keep][np.argsort(f[keep], kind="stable")]

    def _refine(self, x, y, c):
        m = self.base
        for _ in range(200):
            step = 0.5 * (m.log(c, x) + m.log(c, y))
            c = m.normalize(m.exp(c, step))
            if np.linalg.norm(step) < 1e-15:
                break
        return c

    def projections(self, x, slack=0.0, cap=8):
        m = self.base
        x, y = self.manifold.split(np.asarray(x, float))
        found = []
        for c in self._candidates(x, y):
            if any(m.distance(c, q) < 3 * self.h for q, _ in found):
                continue
            c = self._refine(x, y, c)
            w = np.concatenate([m.log(x, c), m.log(y, c)])
            found.append((c, w))
        if not found:
            return [], True
        norms = [float(np.linalg.norm(w)) for _, w in found]
        best = min(norms)
        out = []
        for (c, w), n in zip(found, norms):
            if n <= best + slack and all(np.linalg.norm(w - q) > 1e-9 for q in out):
                out.append(w)
        return out[:cap], len(out) <= cap and not _continuum(m, x, y)

    def samples(self, h):
        g = grid_points(self.base, h, self.lo, self.hi)
        return self.manifold.join(g, g)

    def to_dict(self):
        return {"kind": "diagonal", "h": self.h}


def _continuum(m, x, y):
    return isinstance(m, Sphere2) and m.distance(x, y) >= m.radius * math.pi * (1 - 1e-9)


def closed_set_from_dict(block: dict, manifold: Manifold, h: float = 0.05) -> ClosedSet:
    kind = block.get("kind")
    if kind == "points":
        return FinitePoints(manifold, np.asarray(block["points"], float))
    if kind == "circle":
        return Circle(np.asarray(block["center"], float), float(block["radius"]))
    if kind == "polyline":
        return Polyline(np.asarray(block["vertices"], float), bool(block.get("closed", True)))
    if kind == "diagonal":
        if not isinstance(manifold, Product):
            raise ValueError("diagonal needs a product manifold")
        return Diagonal(manifold.left, float(block.get("h", h)))
    if kind == "empty":
        return EmptySet(manifold)
    if kind == "box-complement":
        if not isinstance(manifold, Euclidean):
            raise ValueError("box-complement needs a Euclidean manifold")
        return BoxComplement(block["lo"], block["hi"], manifold)
    raise ValueError(f"unknown set kind {kind!r}")


# ---------------------------------------------------------------- initial data

class InitialDatum:
    smooth = False

    def value(self, X):
        raise NotImplementedError


@dataclass
class CharacteristicOfSet(InitialDatum):
    closed_set: ClosedSet

    def value(self, X):
        d = self.closed_set.distance(X)
        return np.where(d <= ON_SET_TOL, 0.0, INF)

    def to_dict(self):
        return {"kind": "characteristic", "set": self.closed_set.to_dict()}


@dataclass
class Sampled(InitialDatum):
    """Values on a finite sample; +inf away from the samples."""

    manifold: Manifold
    points: np.ndarray
    values: np.ndarray
    neighbor_radius: float | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, float))
        self.values = np.asarray(self.values, float)
        if self.neighbor_radius is None:
            tree = cKDTree(self.points)
            d, _ = tree.query(self.points, k=2)
            self.neighbor_radius = 1.5 * float(np.max(d[:, 1])) if len(self.points) > 1 else 0.0
        if np.all(np.isinf(self.values)):
            raise ValueError("sampled datum is identically +inf")

    def _index(self, x):
        d = self.manifold.distance(np.asarray(x, float)[None, :], self.points)
        i = int(np.argmin(d))
        return i if d[i] <= 1e-12 else None

    def value(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        out = np.empty(len(X))
        for k, x in enumerate(X):
            i = self._index(x)
            out[k] = INF if i is None else self.values[i]
        return out

    def neighbors(self, x):
        d = self.manifold.distance(np.asarray(x, float)[None, :], self.points)
        return np.nonzero((d <= self.neighbor_radius) & (d > 1e-12))[0]

    def to_dict(self):
        return {"kind": "sampled", "points": self.points.tolist(),
                "values": [v if math.isfinite(v) else "inf" for v in self.values.tolist()]}


@dataclass
class Expression(InitialDatum):
    manifold: Manifold
    text: str
    smooth = True

    def __post_init__(self):
        self._f = Potential(self.text, self.manifold.ambient)

    def value(self, X):
        return self._f.value(np.asarray(X, float))

    def to_dict(self):
        return {"kind": "expression", "expression": self.text}


@dataclass
class Field(InitialDatum):
    """The evolution of another datum frozen at time t, used as a new datum."""

    evolution: "Evolution"
    t: float
    smooth = True

    def value(self, X):
        return self.evolution.value(self.t, X)


def datum_from_dict(block: dict, manifold: Manifold, h: float = 0.05) -> InitialDatum:
    kind = block.get("kind")
    if kind == "characteristic":
        return CharacteristicOfSet(closed_set_from_dict(block["set"], manifold, h))
    if kind == "expression":
        return Expression(manifold, block["expression"])
    if kind == "sampled":
        vals = [INF if v == "inf" else float(v) for v in block["values"]]
        return Sampled(manifold, np.asarray(block["points"], float), np.asarray(vals))
    raise ValueError(f"unknown datum kind {kind!r}")


def lsc_regularize(datum: InitialDatum, x) -> float:
    """Lower semicontinuous regularization: a sample value is lowered to the largest
    neighboring value when it exceeds all of them (isolated spikes disappear)."""
    if isinstance(datum, Sampled):
        i = datum._index(x)
        own = INF if i is None else float(datum.values[i])
        nb = datum.neighbors(x)
        if len(nb) == 0:
            return own
        return min(own, float(np.max(datum.values[nb])))
    return float(np.asarray(datum.value(np.atleast_2d(x)))[0])


def regularized(datum: Sampled) -> Sampled:
    vals = np.array([lsc_regularize(datum, p) for p in datum.points])
    return Sampled(datum.manifold, datum.points, vals, datum.neighbor_radius)


# ---------------------------------------------------------------- evolutions

@dataclass
class Window:
    t_min: float
    t_max: float
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ValueError("window needs 0 < t_min < t_max")
        if self.lo is not None:
            self.lo = np.asarray(self.lo, float)
            self.hi = np.asarray(self.hi, float)
            if np.any(self.hi <= self.lo):
                raise ValueError("empty spatial window")


@dataclass
class Optimum:
    source: np.ndarray
    velocity: np.ndarray  # terminal velocity at x
    value: float
    curve: DiscreteCurve | None = None


@dataclass
class MinusResult:
    value: float
    optima: list
    exhaustive: bool = True


@dataclass
class PlusResult:
    value: float
    argmax: np.ndarray | None
    margin: float
    candidates: list


class InfiniteValue(ValueError):
    """The evolution is +inf at the requested point (the datum is not finite there)."""


def chart(m: Manifold, x):
    """Local parametrization z -> point near x, with its inverse for points near x."""
    x = np.asarray(x, float)
    if isinstance(m, (Euclidean, FlatTorus)):
        return m.dim, (lambda z: m.normalize(x + z)), (lambda y: m.log(x, y))
    if isinstance(m, Sphere2):
        e1 = _orthogonal(x)
        e2 = np.cross(x / m.radius, e1)
        basis = np.stack([e1, e2], axis=-1)
        return 2, (lambda z: m.exp(x, basis @ z)), (lambda y: basis.T @ m.log(x, y))
    if isinstance(m, Product):
        a, b = m.split(x)
        na, fa, ia = chart(m.left, a)
        nb, fb, ib = chart(m.right, b)
        return (na + nb, (lambda z: m.join(fa(z[:na]), fb(z[na:]))),
                (lambda y: np.concatenate([ia(m.split(y)[0]), ib(m.split(y)[1])])))
    raise TypeError(type(m))


class Evolution:
    """Evaluator for T-_t u over a window, with minimizer diagnostics."""

    def __init__(self, datum: InitialDatum, lagrangian: Lagrangian, manifold: Manifold, window: Window,
                 h: float | None = None, eps_opt: float = 1e-6, refine: bool = True, cap: int = 8,
                 n_segments: int = 128):
        self.datum = datum
        self.L = lagrangian
        self.m = manifold
        self.window = window
        self.diameter = window_diameter(manifold, window.lo, window.hi)
        self.h = self.diameter / 64 if h is None else float(h)
        self.eps_opt = eps_opt
        self.refine = refine
        self.cap = cap
        self.n_segments = n_segments
        self._grid = None
        self._cache = {}

    # candidate set used by the outer inf / sup
    @property
    def grid(self):
        if self._grid is None:
            if isinstance(self.datum, Sampled):
                self._grid = self.datum.points
            else:
                self._grid = grid_points(self.m, self.h, self.window.lo, self.window.hi)
        return self._grid

    def _closed_form(self):
        return isinstance(self.datum, CharacteristicOfSet) and self.L.kind == "kinetic"

    def eps_abs(self, value):
        return self.eps_opt * max(1.0, abs(value))

    def value(self, t, X):
        """Vectorized T-_t u over rows of X."""
        X = np.asarray(X, float)
        if self._closed_form():
            d = self.datum.closed_set.distance(X)
            return d * d / (2 * t)
        flat = np.atleast_2d(X)
        vals = np.array([self.evaluate_minus(t, x).value for x in flat])
        return vals.reshape(X.shape[:-1])

    def evaluate_minus(self, t: float, x) -> MinusResult:
        if t <= 0:
            raise ValueError("t must be positive")
        x = self.m.normalize(np.asarray(x, float))
        if self._closed_form():
            return self._minus_closed_form(t, x)
        if isinstance(self.datum, CharacteristicOfSet):
            return self._minus_set_direct(t, x)
        return self._minus_grid(t, x)

    def _minus_closed_form(self, t, x):
        C = self.datum.closed_set
        d = float(C.distance(x))
        if not math.isfinite(d):
            return MinusResult(INF, [], True)
        value = d * d / (2 * t)
        slack = math.sqrt(d * d + 2 * t * self.eps_abs(value)) - d
        ws, exhaustive = C.projections(x, slack, self.cap)
        optima = []
        for w in ws:
            src = self.m.normalize(self.m.exp(x, w))
            # velocity at x of the geodesic from the source, run for time t
            optima.append(Optimum(src, -np.asarray(w) / t, float(np.dot(w, w)) / (2 * t)))
        return MinusResult(value, optima, exhaustive)

    def _minus_set_direct(self, t, x):
        key = ("set", t, tuple(x))
        if key in self._cache:
            return self._cache[key]
        C = self.datum.closed_set
        cands = C.samples(self.h)
        if len(cands) == 0:
            return MinusResult(INF, [], True)
        found = []
        for c in cands:
            for disp in _lifted_targets(self.L, self.m, c, x, t):
                q, val, ok = _direct(self.L, c, disp, t, self.n_segments)
                curve = DiscreteCurve(self.m, np.linspace(0, t, self.n_segments + 1), self.m.normalize(q))
                found.append(Optimum(c, terminal_velocity(self.L, curve), val, curve))
        best = min(o.value for o in found)
        optima = [o for o in found if o.value <= best + self.eps_abs(best)]
        res = MinusResult(best, optima, True)
        self._cache[key] = res
        return res

    def _minus_grid(self, t, x):
        Y = self.grid
        u = self.datum.value(Y)
        ok = np.isfinite(u)
        if not np.any(ok):
            return MinusResult(INF, [], True)
        Y, u = Y[ok], u[ok]
        f = u + minimal_action_values(self.L, self.m, Y, x, t, self.n_segments)
        best = float(np.min(f))
        if not self.refine or not self.datum.smooth:
            idx = np.nonzero(f <= best + self.eps_abs(best))[0]
            optima = [self._optimum_from_source(t, x, Y[i], float(f[i])) for i in idx[: self.cap]]
            return MinusResult(best, optima, len(idx) <= self.cap)
        starts = _local_extrema(Y, f, self.h, minimum=True, limit=self.cap)
        dim, to_point, to_chart = chart(self.m, x)
        refined = []
        for i in starts:
            def obj(z):
                y = to_point(z)
                return float(self.datum.value(y[None])[0] + minimal_action_values(self.L, self.m, y[None], x, t,
                                                                                 self.n_segments)[0])
            z0 = to_chart(Y[i])
            r = _nelder_mead(obj, z0, self.h)
            refined.append((min(r.fun, float(f[i])), to_point(r.x) if r.fun <= f[i] else Y[i]))
        best = min(v for v, _ in refined)
        optima = []
        for v, y in refined:
            if v <= best + self.eps_abs(best) and all(self.m.distance(y, o.source) > 1e-7 for o in optima):
                optima.append(self._optimum_from_source(t, x, y, v))
        return MinusResult(best, optima, True)

    def _optimum_from_source(self, t, x, y, value):
        if self.L.kind == "kinetic":
            return Optimum(np.asarray(y), -self.m.log(x, y) / t, value)
        _, curve = minimal_action(self.L, self.m, y, x, t, self.n_segments)
        return Optimum(np.asarray(y), terminal_velocity(self.L, curve), value, curve)

    def gradient(self, t, x, optimum: Optimum | None = None):
        """(d/dt, d/dx) of the evolution at a differentiable point, from its characteristic."""
        if optimum is None:
            res = self.evaluate_minus(t, x)
            if not res.optima:
                raise InfiniteValue("no minimizer")
            optimum = res.optima[0]
        p = self.L.dv(x, optimum.velocity)
        return -float(self.L.hamiltonian(x, p)), p

    def evaluate_plus(self, t: float, s: float, x, radius: float | None = None, inner=None) -> PlusResult:
        """sup_y w(y) - h_s(x, y) with w = T-_{t+s} u by default, optionally over the ball B(x, radius)."""
        if s <= 0:
            raise ValueError("s must be positive")
        m = self.m
        x = m.normalize(np.asarray(x, float))
        w = inner if inner is not None else (lambda Y: self.value(t + s, Y))
        cands = self._plus_candidates(t, s, x, radius)
        if len(cands) == 0:
            raise ValueError("restricted ball contains no candidate")
        f = w(cands) - minimal_action_values(self.L, m, cands, x, s, self.n_segments)
        f = np.where(np.isfinite(f), f, -INF)
        dim, to_point, to_chart = chart(m, x)

        def obj(z):
            y = to_point(z)
            if radius is not None and m.distance(x, y) > radius:
                return INF
            v = w(y[None])[0] - minimal_action_values(self.L, m, y[None], x, s, self.n_segments)[0]
            return -float(v) if math.isfinite(v) else INF

        starts = _local_extrema(cands, f, self.h, minimum=False, limit=3)
        refined = []
        for i in starts:
            r = _nelder_mead(obj, to_chart(cands[i]), self.h)
            if -r.fun >= f[i]:
                refined.append((-float(r.fun), to_point(r.x)))
            else:
                refined.append((float(f[i]), cands[i]))
        refined.sort(key=lambda p: -p[0])
        best_v, best_y = refined[0]
        margin = INF
        for v, y in refined[1:]:
            if m.distance(y, best_y) > self.h:
                margin = min(margin, best_v - v)
        return PlusResult(best_v, best_y, margin, refined)

    def _plus_candidates(self, t, s, x, radius):
        m = self.m
        extra = [x]
        if self._closed_form():
            for o in self.evaluate_minus(t, x).optima:
                extra.append(m.normalize(m.geodesic(x, o.velocity, s)[0]))
        if radius is None:
            base = self.grid
        elif isinstance(m, Euclidean):
            base = grid_points(m, self.h, x - radius, x + radius)
        else:
            base = self.grid
        cands = np.concatenate([base, np.array(extra)])
        if radius is not None:
            cands = cands[m.distance(x, cands) <= radius]
        return cands


def _nelder_mead(obj, z0, h):
    z0 = np.asarray(z0, float)
    n = len(z0)
    simplex = np.vstack([z0] + [z0 + 0.5 * h * e for e in np.eye(n)])
    return minimize(obj, z0, method="Nelder-Mead",
                    options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000 * n, "maxfev": 4000 * n,
                             "initial_simplex": simplex})


def _local_extrema(Y, f, h, minimum=True, limit=8):
    """Indices of grid points that are local extrema of f among neighbors within 1.6 h, best first."""
    g = f if minimum else -f
    order = np.argsort(g, kind="stable")
    finite = np.isfinite(g)
    if len(Y) <= 1:
        return list(order[:1])
    tree = cKDTree(Y)
    picked = []
    for i in order:
        if not finite[i]:
            break
        nb = tree.query_ball_point(Y[i], 1.6 * h)
        if all(g[i] <= g[j] for j in nb):
            if all(np.linalg.norm(Y[i] - Y[j]) > 1.6 * h for j in picked):
                picked.append(int(i))
        if len(picked) >= limit:
            break
    return picked or [int(order[0])]


# ---------------------------------------------------------------- checks

@dataclass
class DominationReport:
    pairs: int
    max_violation: float
    violations: int


def domination_check(ev: Evolution, pairs, tol: float = 1e-8) -> DominationReport:
    """U(t', x') - U(t, x) <= h_{t'-t}(x, x') over (t, x, t', x') tuples with t < t'."""
    worst = -INF
    bad = 0
    for t, x, t2, x2 in pairs:
        if not t < t2:
            raise ValueError("domination needs t < t'")
        lhs = ev.value(t2, np.asarray(x2)[None])[0] - ev.value(t, np.asarray(x)[None])[0]
        rhs = minimal_action_values(ev.L, ev.m, np.asarray(x)[None], np.asarray(x2), t2 - t, ev.n_segments)[0]
        v = float(lhs - rhs)
        worst = max(worst, v)
        bad += v > tol
    return DominationReport(len(pairs), worst, int(bad))
