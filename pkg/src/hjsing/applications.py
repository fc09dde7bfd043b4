"""Packaged experiments: medial axes, the non-uniqueness set and homotopy evidence."""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import Euclidean, FlatTorus, Manifold, Product, Sphere2, grid_points, minimizing_geodesics
from .homotopy import StepSettings, rescaled_retraction
from .laxoleinik import (CharacteristicOfSet, Circle, ClosedSet, Diagonal, Evolution, FinitePoints, Polyline,
                         Window)
from .singularity import (IN_AUBRY, IN_C, OUTSIDE, REGULAR, SINGULAR, UNDECIDED, Tolerances,
                          aubry_set_membership, au_set_membership, classify)
from .tonelli import Kinetic, Lagrangian, Mechanical


@dataclass
class ExperimentFixture:
    name: str
    manifold: Manifold
    lagrangian: Lagrangian
    closed_set: ClosedSet
    window: Window
    h: float | None = None
    seed_sampler: object = None
    truth: dict = field(default_factory=dict)

    def evolution(self, h: float | None = None, **kw) -> Evolution:
        return Evolution(CharacteristicOfSet(self.closed_set), self.lagrangian, self.manifold, self.window,
                         h=h if h is not None else self.h, **kw)

    def seeds(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.seed_sampler(rng, count)


def _strip_seeds(rng, n):
    # the retraction maps (a, b) to (0, b / (1 - |a|)); keep the image inside the window
    side = rng.choice([-1.0, 1.0], n)
    a = rng.uniform(0.05, 0.7, n)
    b = rng.uniform(-1.5, 1.5, n) * (1 - a)
    return np.stack([side * a, b], axis=-1)


def _disk_seeds(rng, n):
    rho = rng.uniform(0.05, 0.7, n)
    a = rng.uniform(0, 2 * np.pi, n)
    return np.stack([rho * np.cos(a), rho * np.sin(a)], axis=-1)


def _circle_seeds(rng, n):
    x = rng.uniform(0.1, 0.9, n)
    return x[:, None]


def _square_seeds(rng, n):
    return rng.uniform(-0.7, 0.7, (n, 2))


def fixture(name: str) -> ExperimentFixture:
    E2 = Euclidean(2)
    K = Kinetic()
    box = Window(0.25, 20.0, [-2.0, -2.0], [2.0, 2.0])
    if name == "two-points":
        return ExperimentFixture(name, E2, K, FinitePoints(E2, [[-1.0, 0.0], [1.0, 0.0]]), box,
                                 seed_sampler=_strip_seeds,
                                 truth={"medial": lambda p: np.abs(p[..., 0]),
                                        "aubry": lambda p: np.abs(p[..., 0]) >= 1})
    if name == "circle":
        return ExperimentFixture(name, E2, K, Circle(np.zeros(2), 1.0), box, seed_sampler=_disk_seeds,
                                 truth={"medial": lambda p: np.linalg.norm(p, axis=-1),
                                        "aubry": lambda p: np.linalg.norm(p, axis=-1) >= 1})
    if name == "square":
        sq = Polyline(np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]), True)
        return ExperimentFixture(name, E2, K, sq, Window(0.25, 20.0, [-1.5, -1.5], [1.5, 1.5]), h=3 / 64,
                                 seed_sampler=_square_seeds)
    if name == "torus-point":
        T1 = FlatTorus((1.0,))
        return ExperimentFixture(name, T1, K, FinitePoints(T1, [[0.0]]), Window(0.25, 20.0),
                                 seed_sampler=_circle_seeds,
                                 truth={"medial": lambda p: np.abs(p[..., 0] - 0.5)})
    if name == "torus-diagonal":
        T2 = FlatTorus((1.0, 1.0))
        return ExperimentFixture(name, Product(T2, T2), K, Diagonal(T2, 1 / 16), Window(0.25, 4.0))
    if name == "sphere-diagonal":
        S = Sphere2(1.0)
        return ExperimentFixture(name, Product(S, S), K, Diagonal(S, 0.2), Window(0.25, 4.0))
    if name == "mechanical-torus":
        T1 = FlatTorus((1.0,))
        return ExperimentFixture(name, T1, Mechanical("0.1*cos(2*pi*x0)", T1), FinitePoints(T1, [[0.0]]),
                                 Window(0.25, 4.0), seed_sampler=_circle_seeds)
    raise KeyError(f"unknown fixture {name!r}")


FIXTURES = ("two-points", "circle", "square", "torus-point", "torus-diagonal", "sphere-diagonal",
            "mechanical-torus")


# ---------------------------------------------------------------- grids and components

@dataclass
class SpatialGrid:
    points: np.ndarray
    shape: tuple
    wrap: bool


def spatial_grid(ev: Evolution) -> SpatialGrid:
    m = ev.m
    if isinstance(m, Euclidean):
        lo, hi = ev.window.lo, ev.window.hi
        counts = np.maximum(np.round((hi - lo) / ev.h).astype(int), 1)
        axes = [np.linspace(a, b, c + 1) for a, b, c in zip(lo, hi, counts)]
        wrap = False
    elif isinstance(m, FlatTorus):
        counts = np.maximum(np.round(m.period_array / ev.h).astype(int), 1)
        axes = [np.arange(c) * (p / c) for p, c in zip(m.periods, counts)]
        wrap = True
    else:
        # scattered samples: masks still work, component counts do not
        pts = grid_points(m, ev.h, ev.window.lo, ev.window.hi)
        return SpatialGrid(pts, (len(pts),), False)
    mesh = np.meshgrid(*axes, indexing="ij")
    return SpatialGrid(np.stack(mesh, axis=-1).reshape(-1, m.n), tuple(len(a) for a in axes), wrap)


def label_components(mask: np.ndarray, wrap: bool = False):
    """4-adjacency (axis neighbors) component labels of a boolean grid; -1 off the mask."""
    labels = -np.ones(mask.shape, dtype=int)
    count = 0
    dims = mask.ndim
    for start in zip(*np.nonzero(mask)):
        if labels[start] >= 0:
            continue
        labels[start] = count
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for axis in range(dims):
                for step in (-1, 1):
                    nxt = list(cur)
                    nxt[axis] += step
                    if wrap:
                        nxt[axis] %= mask.shape[axis]
                    elif not 0 <= nxt[axis] < mask.shape[axis]:
                        continue
                    nxt = tuple(nxt)
                    if mask[nxt] and labels[nxt] < 0:
                        labels[nxt] = count
                        queue.append(nxt)
        count += 1
    return labels, count


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------- medial axis

@dataclass
class MedialAxis:
    grid: SpatialGrid
    classes: np.ndarray
    classes_recheck: np.ndarray
    in_set: np.ndarray

    @property
    def mask(self):
        return (self.classes == SINGULAR).reshape(self.grid.shape)

    @property
    def sigma(self):
        return np.isin(self.classes, [SINGULAR, UNDECIDED]).reshape(self.grid.shape)

    @property
    def slice_agreement(self):
        """True when the two time slices differ only at Undecided nodes."""
        a, b = self.classes, self.classes_recheck
        differ = a != b
        return bool(np.all(~differ | (a == UNDECIDED) | (b == UNDECIDED)))

    def points(self):
        return self.grid.points[self.classes == SINGULAR]

    def polylines(self):
        """Segments joining 8-adjacent singular nodes (2D grids)."""
        mask = self.mask
        if mask.ndim != 2:
            return [[p.tolist()] for p in self.points()]
        pts = self.grid.points.reshape(mask.shape + (-1,))
        lines = []
        for i, j in zip(*np.nonzero(mask)):
            for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
                a, b = i + di, j + dj
                if 0 <= a < mask.shape[0] and 0 <= b < mask.shape[1] and mask[a, b]:
                    lines.append([pts[i, j].tolist(), pts[a, b].tolist()])
        return lines


def medial_axis(fix: ExperimentFixture, t: float = 1.0, t_check: float = 2.0, threads: int = 1,
                ev: Evolution | None = None) -> MedialAxis:
    ev = ev or fix.evolution()
    tol = Tolerances.for_evolution(ev)
    grid = spatial_grid(ev)
    in_set = fix.closed_set.distance(grid.points) <= 1e-10

    def one(args):
        p, inside, tt = args
        return REGULAR if inside else classify(ev, tt, p, tol).classification

    first = _map(one, [(p, s, t) for p, s in zip(grid.points, in_set)], threads)
    second = _map(one, [(p, s, t_check) for p, s in zip(grid.points, in_set)], threads)
    return MedialAxis(grid, np.array(first), np.array(second), in_set)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return 0.0 if len(a) == len(b) else math.inf
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    return float(max(np.max(np.min(d, axis=1)), np.max(np.min(d, axis=0))))


def brute_force_medial_axis(boundary: np.ndarray, points: np.ndarray, spacing: float, gap: float) -> np.ndarray:
    """Points whose two nearest boundary samples lie far apart yet at nearly equal distance."""
    out = []
    for p in points:
        d = np.linalg.norm(boundary - p, axis=1)
        i = int(np.argmin(d))
        far = np.linalg.norm(boundary - boundary[i], axis=1) > gap
        if np.any(far) and np.min(d[far]) - d[i] <= spacing:
            out.append(p)
    return np.array(out).reshape(-1, points.shape[1])


# ---------------------------------------------------------------- non-uniqueness set

@dataclass
class NuResult:
    points: np.ndarray
    classifier: np.ndarray
    enumeration: np.ndarray
    undecided: np.ndarray

    @property
    def off_band(self):
        return ~self.undecided

    @property
    def agreement(self):
        ok = self.off_band
        if not np.any(ok):
            return 1.0
        return float(np.mean(self.classifier[ok] == self.enumeration[ok]))

    @property
    def matrix(self):
        ok = self.off_band
        c, e = self.classifier[ok], self.enumeration[ok]
        return [[int(np.sum(~c & ~e)), int(np.sum(~c & e))], [int(np.sum(c & ~e)), int(np.sum(c & e))]]


def nu_grid(m: Manifold, per_axis: int, lo=None, hi=None) -> np.ndarray:
    """Sample of M used for pair grids; symmetric under the antipodal map on spheres."""
    if isinstance(m, Euclidean):
        axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, m.n)
    if isinstance(m, FlatTorus):
        axes = [np.arange(per_axis) * (p / per_axis) for p in m.periods]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, m.n)
    if isinstance(m, Sphere2):
        theta = (np.arange(per_axis // 2) + 0.5) * np.pi / per_axis
        phi = np.arange(per_axis) * 2 * np.pi / per_axis
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        upper = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1).reshape(-1, 3)
        return m.radius * np.concatenate([upper, -upper])
    raise TypeError(type(m))


def nu_set(m: Manifold, points: np.ndarray, h: float | None = None, t: float = 1.0, cap: int = 8,
           threads: int = 1) -> NuResult:
    """Classifier on the diagonal evolution versus geodesic enumeration over all pairs of `points`."""
    P = Product(m, m)
    if isinstance(m, Euclidean):
        lo = np.min(points, axis=0) - 1.0
        hi = np.max(points, axis=0) + 1.0
        window = Window(0.25, 4.0, np.concatenate([lo, lo]), np.concatenate([hi, hi]))
        diag = Diagonal(m, h or 0.1, lo, hi)
    else:
        window = Window(0.25, 4.0)
        diag = Diagonal(m, h or (0.2 if isinstance(m, Sphere2) else 1 / 32))
    ev = Evolution(CharacteristicOfSet(diag), Kinetic(), P, window, h=h or diag.h, cap=cap)
    tol = Tolerances.for_evolution(ev)
    pairs = [(a, b) for a in points for b in points]

    def one(pair):
        a, b = pair
        rep = classify(ev, t, np.concatenate([a, b]), tol)
        segs, exhaustive = minimizing_geodesics(m, a, b, cap)
        return rep.classification, len(segs) >= 2 or not exhaustive

    out = _map(one, pairs, threads)
    cls = np.array([c for c, _ in out])
    enum = np.array([e for _, e in out])
    return NuResult(np.array([np.concatenate(p) for p in pairs]), cls == SINGULAR, enum, cls == UNDECIDED)


def au_mask(m: Manifold, points: np.ndarray, horizon: float) -> np.ndarray:
    return np.array([[au_set_membership(m, a, b, horizon) for b in points] for a in points])


# ---------------------------------------------------------------- homotopy evidence

@dataclass
class TopologyEvidence:
    fixture: str
    sigma_components: int
    complement_components: int
    coverage: float
    correspondence: bool
    passed: bool
    seeds: int = 0
    retraction: object = None
    axis: MedialAxis | None = None

    def to_dict(self):
        return {"fixture": self.fixture, "sigma_components": self.sigma_components,
                "complement_components": self.complement_components, "coverage": self.coverage,
                "pass": self.passed}


def aubry_classes(fix: ExperimentFixture, grid: SpatialGrid, horizon: float) -> np.ndarray:
    return np.array([aubry_set_membership(fix.closed_set, p, horizon) for p in grid.points])


def homotopy_evidence(fix: ExperimentFixture, seeds: np.ndarray, t0: float = 1.0, threads: int = 1,
                      settings: StepSettings | None = None, axis: MedialAxis | None = None) -> TopologyEvidence:
    ev = fix.evolution()
    tol = Tolerances.for_evolution(ev)
    axis = axis or medial_axis(fix, t0, 2 * t0, threads, ev)
    grid = axis.grid
    sigma = axis.sigma
    aub = aubry_classes(fix, grid, tol.horizon)
    complement = (aub == OUTSIDE).reshape(grid.shape)
    sig_lab, n_sig = label_components(sigma, grid.wrap)
    comp_lab, n_comp = label_components(complement, grid.wrap)
    if len(seeds) == 0:
        return TopologyEvidence(fix.name, n_sig, n_comp, 1.0, True, n_sig == n_comp, 0, None, axis)
    res = rescaled_retraction(ev, t0, seeds, settings=settings, tol=tol, threads=threads)
    ended = [c in (SINGULAR, UNDECIDED) for c in res.final]
    coverage = float(np.mean(ended))
    flat_sig = sig_lab.reshape(-1)
    flat_comp = comp_lab.reshape(-1)
    sig_nodes = np.nonzero(flat_sig >= 0)[0]
    correspondence = True
    for x0, tr in zip(seeds, res.traces):
        start = int(np.argmin(ev.m.distance(x0, grid.points)))
        end = tr.points[-1]
        d = ev.m.distance(end, grid.points[sig_nodes])
        if len(d) == 0 or np.min(d) > tol.delta_sep:
            correspondence = False
            continue
        target = flat_sig[sig_nodes[int(np.argmin(d))]]
        members = np.nonzero(flat_sig == target)[0]
        if flat_comp[start] < 0 or np.any(flat_comp[members] != flat_comp[start]):
            correspondence = False
    passed = n_sig == n_comp and coverage == 1.0 and correspondence
    return TopologyEvidence(fix.name, n_sig, n_comp, coverage, correspondence, passed, len(seeds), res, axis)
