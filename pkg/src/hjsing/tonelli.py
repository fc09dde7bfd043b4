"""Tonelli Lagrangians, discrete curves, actions and minimal actions.

Two Lagrangian kinds are supported: the kinetic one L = |v|^2/2 and the
mechanical one L = |v|^2/2 - V(x) with a bounded closed-form potential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import Potential
from .geometry import Euclidean, FlatTorus, Manifold, Product, Sphere2, grid_points


class NonConvergence(RuntimeError):
    """Raised when the direct method stalls; carries the best value and residual."""

    def __init__(self, message, value=None, curve=None, residual=None):
        super().__init__(message)
        self.value = value
        self.curve = curve
        self.residual = residual


class Lagrangian:
    kind = "abstract"

    def potential(self, x):
        return np.zeros(np.shape(x)[:-1])

    def potential_gradient(self, x):
        return np.zeros(np.shape(x))

    def potential_hessian(self, x):
        x = np.asarray(x, float)
        return np.zeros(x.shape + (x.shape[-1],))

    def value(self, x, v):
        v = np.asarray(v, float)
        return 0.5 * np.sum(v * v, axis=-1) - self.potential(x)

    def dv(self, x, v):
        return np.array(v, dtype=float)

    def dx(self, x, v):
        return -self.potential_gradient(x)

    def hamiltonian(self, x, p):
        p = np.asarray(p, float)
        return 0.5 * np.sum(p * p, axis=-1) + self.potential(x)

    def max_potential(self) -> float:
        return 0.0

    def min_potential(self) -> float:
        return 0.0

    def superlinearity(self, K: float) -> float:
        """C(K) = sup K|v| - L(x, v)."""
        raise NotImplementedError

    def fiber_bound(self, R: float) -> float:
        """A(R) = sup {L(x, v) : |v| <= R}."""
        raise NotImplementedError


@dataclass(frozen=True)
class Kinetic(Lagrangian):
    kind = "kinetic"

    def superlinearity(self, K):
        return 0.5 * K * K

    def fiber_bound(self, R):
        return 0.5 * R * R

    def to_dict(self):
        return {"kind": "kinetic"}


class Mechanical(Lagrangian):
    """L = |v|^2/2 - V(x). The sup and inf of V are searched over `domain`."""

    kind = "mechanical"

    def __init__(self, text: str, manifold: Manifold, lo=None, hi=None):
        self.text = text
        self.manifold = manifold
        self.V = Potential(text, manifold.ambient)
        self._lo = lo
        self._hi = hi
        self._range = None

    def potential(self, x):
        return self.V.value(x)

    def potential_gradient(self, x):
        g = self.V.gradient(x)
        return self.manifold.project_tangent(x, g)

    def potential_hessian(self, x):
        return self.V.hessian(x)

    def _potential_range(self):
        if self._range is None:
            m = self.manifold
            if isinstance(m, Euclidean):
                lo = -2 * np.pi * np.ones(m.n) if self._lo is None else np.asarray(self._lo, float)
                hi = 2 * np.pi * np.ones(m.n) if self._hi is None else np.asarray(self._hi, float)
                count = 10_000 ** (1 / m.n)
                pts = grid_points(m, float(np.max(hi - lo)) / count, lo, hi)
            else:
                pts = grid_points(m, _cell_spacing(m), self._lo, self._hi)
            vals = self.V.value(pts)
            self._range = (float(_polish(self, pts[np.argmin(vals)], -1.0)),
                           float(_polish(self, pts[np.argmax(vals)], 1.0)))
        return self._range

    def max_potential(self):
        return self._potential_range()[1]

    def min_potential(self):
        return self._potential_range()[0]

    def superlinearity(self, K):
        # sup over a radial grid |v| <= 10 K; the exact sup sits at |v| = K
        rho = np.linspace(0.0, 10.0 * max(K, 1e-12), 10_000)
        # the sampled max of a curvature-1 concave profile misses the peak by at most spacing^2 / 8
        slack = (rho[1] - rho[0]) ** 2 / 8
        return float(np.max(K * rho - 0.5 * rho * rho)) + slack + self.max_potential()

    def fiber_bound(self, R):
        rho = np.linspace(0.0, R, 10_000)
        return float(np.max(0.5 * rho * rho)) - self.min_potential()

    def to_dict(self):
        return {"kind": "mechanical", "potential": self.text}


def _cell_spacing(m):
    if isinstance(m, FlatTorus):
        return float(np.max(m.period_array)) / 10_000 ** (1 / m.n)
    if isinstance(m, Sphere2):
        return m.radius * 0.03
    return 0.05


def _polish(lag, x0, sign):
    """Local refinement of an extremum of V starting at a grid point."""
    x = np.array(x0, float)
    v = lag.V.value(x)
    step = 1e-2
    for _ in range(200):
        g = lag.V.gradient(x)
        if np.linalg.norm(g) < 1e-13:
            break
        trial = x + sign * step * g / np.linalg.norm(g)
        vt = lag.V.value(trial)
        if sign * (vt - v) > 0:
            x, v = trial, vt
            step *= 1.5
        else:
            step *= 0.5
            if step < 1e-14:
                break
    return v


def lagrangian_from_dict(block: dict, manifold: Manifold) -> Lagrangian:
    kind = block.get("kind")
    if kind == "kinetic":
        return Kinetic()
    if kind == "mechanical":
        return Mechanical(block["potential"], manifold, block.get("lo"), block.get("hi"))
    raise ValueError(f"unknown lagrangian kind {kind!r}")


@dataclass
class TonelliConstants:
    C: dict
    A: dict
    A0: float


def constants(L: Lagrangian, K_list=(0.0, 1.0, 2.0, 5.0), R_list=(0.0, 1.0)) -> TonelliConstants:
    return TonelliConstants(C={K: L.superlinearity(K) for K in K_list},
                            A={R: L.fiber_bound(R) for R in R_list},
                            A0=L.fiber_bound(0.0))


def eta(L: Lagrangian, A: float, r: float) -> float:
    """Time below which a curve of action at most A cannot have length r."""
    if r <= 0:
        raise ValueError("r must be positive")
    a = abs(A)
    c = L.superlinearity(2 * a / r)
    if c == 0.0:
        return math.inf
    return a / c


def s0(L: Lagrangian, A: float, B: float, t: float, r: float) -> float:
    """Largest step for which T+ maximizers stay in the r-ball (A <= u, T+_t u <= B)."""
    if t <= 0 or r <= 0:
        raise ValueError("t and r must be positive")
    a0 = abs(L.fiber_bound(0.0))
    a_low = A - a0 * t
    b_high = B + a0 * t
    return min(eta(L, b_high - a_low + 1.0, r / 2), t)


@dataclass
class DiscreteCurve:
    manifold: Manifold
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.points = np.asarray(self.points, float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("a curve needs at least one segment")
        if len(self.points) != len(self.times):
            raise ValueError("times and points differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_segments(self):
        return len(self.times) - 1

    def segments(self):
        """Per segment: dt, start velocity, end velocity, midpoint, midpoint velocity."""
        m = self.manifold
        p = self.points
        dt = np.diff(self.times)
        w = np.stack([m.log(p[i], p[i + 1]) for i in range(len(dt))])
        vel = w / dt[:, None]
        mid = np.empty_like(p[:-1])
        vmid = np.empty_like(vel)
        vend = np.empty_like(vel)
        for i in range(len(dt)):
            mid[i], vmid[i] = m.geodesic(p[i], vel[i], 0.5 * dt[i])
            vend[i] = m.geodesic(p[i], vel[i], dt[i])[1]
        return dt, vel, vend, mid, vmid

    def length(self):
        dt, vel, _, _, _ = self.segments()
        return float(np.sum(dt * self.manifold.norm(self.points[:-1], vel)))

    def restrict(self, k0, k1):
        return DiscreteCurve(self.manifold, self.times[k0:k1 + 1], self.points[k0:k1 + 1])


def action(L: Lagrangian, curve: DiscreteCurve) -> float:
    """Midpoint-rule action with segment velocities."""
    dt, _, _, mid, vmid = curve.segments()
    return float(np.sum(dt * L.value(mid, vmid)))


def euler_lagrange_residual(L: Lagrangian, curve: DiscreteCurve) -> float:
    """Sup norm of d/dt dL/dv - dL/dx at interior nodes (discrete Euler-Lagrange form)."""
    if curve.n_segments < 2:
        raise ValueError("need at least two segments")
    m = curve.manifold
    dt, vel, vend, mid, vmid = curve.segments()
    p = curve.points
    worst = 0.0
    for i in range(1, curve.n_segments):
        tau = 0.5 * (dt[i - 1] + dt[i])
        jump = (L.dv(p[i], vel[i]) - L.dv(p[i], vend[i - 1])) / tau
        force = (dt[i - 1] * L.dx(mid[i - 1], vmid[i - 1]) + dt[i] * L.dx(mid[i], vmid[i])) / (2 * tau)
        r = m.project_tangent(p[i], jump - force)
        worst = max(worst, float(m.norm(p[i], r)))
    return worst


def geodesic_curve(m: Manifold, x, v, t0: float, t1: float, n: int) -> DiscreteCurve:
    """Polyline samples of the geodesic passing through x at time t0 with velocity v."""
    times = np.linspace(t0, t1, n + 1)
    pts = np.array([m.geodesic(x, v, s - t0)[0] for s in times])
    return DiscreteCurve(m, times, pts)


def _lifted_targets(L, m, x, y, t):
    """Displacements x -> y worth trying in the direct method."""
    d = float(m.distance(x, y))
    slack = 2 * t * t * (L.max_potential() - L.min_potential())
    bound = math.sqrt(d * d + slack) - d + 1e-12
    if isinstance(m, (Euclidean,)):
        return [m.log(x, y)]
    if isinstance(m, (FlatTorus, Product)):
        if not m.is_flat():
            raise ValueError("direct method supports flat manifolds only")
        logs, _ = m.logs(x, y, slack=bound, cap=64)
        return logs
    raise ValueError("direct method supports flat manifolds only")


def _direct(L, x, disp, t, n, tol=1e-10, max_iter=100):
    """Damped Newton on the interior nodes of a lifted polyline from x to x + disp."""
    dim = len(x)
    dt = t / n
    s = np.linspace(0.0, 1.0, n + 1)[:, None]
    q = x + s * disp

    def objective(q):
        mid = 0.5 * (q[1:] + q[:-1])
        vel = np.diff(q, axis=0) / dt
        return dt * float(np.sum(L.value(mid, vel)))

    def gradient(q):
        mid = 0.5 * (q[1:] + q[:-1])
        vel = np.diff(q, axis=0) / dt
        pv = L.dv(mid, vel)
        px = L.dx(mid, vel)
        return pv[:-1] - pv[1:] + 0.5 * dt * (px[:-1] + px[1:])

    def hessian(q):
        mid = 0.5 * (q[1:] + q[:-1])
        hv = L.potential_hessian(mid)
        k = n - 1
        H = np.zeros((k * dim, k * dim))
        eye = np.eye(dim)
        for i in range(k):
            blk = 2 * eye / dt - 0.25 * dt * (hv[i] + hv[i + 1])
            H[i * dim:(i + 1) * dim, i * dim:(i + 1) * dim] = blk
            if i + 1 < k:
                off = -eye / dt - 0.25 * dt * hv[i + 1]
                H[i * dim:(i + 1) * dim, (i + 1) * dim:(i + 2) * dim] = off
                H[(i + 1) * dim:(i + 2) * dim, i * dim:(i + 1) * dim] = off.T
        return H

    val = objective(q)
    g = gradient(q)
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= tol:
            return q, val, True
        H = hessian(q)
        shift = 0.0
        while True:
            try:
                c = np.linalg.cholesky(H + shift * np.eye(len(H)))
                break
            except np.linalg.LinAlgError:
                shift = max(2 * shift, 1e-6 / dt)
        step = -np.linalg.solve(c.T, np.linalg.solve(c, g.ravel())).reshape(g.shape)
        slope = float(np.sum(g * step))
        alpha = 1.0
        while True:
            trial = q.copy()
            trial[1:-1] += alpha * step
            tv = objective(trial)
            if tv <= val + 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        q, val = trial, tv
        g = gradient(q)
    return q, val, bool(np.max(np.abs(g)) <= tol)


def minimal_action(L: Lagrangian, m: Manifold, x, y, t: float, n_segments: int = 128,
                   direct: bool | None = None, tol: float = 1e-10):
    """h_t(x, y) and a minimizing curve.

    Kinetic uses the closed form d^2/(2t) unless `direct` is set; mechanical
    always runs the direct method from the geodesic initial guess.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x = m.check(x)
    y = m.check(y)
    if direct is None:
        direct = L.kind != "kinetic"
    if not direct:
        v = m.log(x, y) / t
        d = float(m.distance(x, y))
        curve = geodesic_curve(m, x, v, 0.0, t, n_segments)
        return d * d / (2 * t), curve
    best = None
    for disp in _lifted_targets(L, m, x, y, t):
        q, val, ok = _direct(L, x, disp, t, n_segments, tol)
        if best is None or val < best[0]:
            best = (val, q, ok)
    val, q, ok = best
    curve = DiscreteCurve(m, np.linspace(0.0, t, n_segments + 1), m.normalize(q))
    if not ok:
        raise NonConvergence("direct method did not converge", val, curve, euler_lagrange_residual(L, curve))
    return val, curve


def minimal_action_values(L: Lagrangian, m: Manifold, Y, x, t: float, n_segments: int = 128):
    """h_t(y, x) for every row y of Y."""
    Y = np.atleast_2d(Y)
    if L.kind == "kinetic":
        d = m.distance(Y, x)
        return d * d / (2 * t)
    return np.array([minimal_action(L, m, y, x, t, n_segments)[0] for y in Y])


def terminal_velocity(L: Lagrangian, curve: DiscreteCurve):
    """Velocity at the final node from the discrete Legendre transform of the last segment."""
    dt, vel, vend, mid, _ = curve.segments()
    v = vend[-1]
    if L.kind != "kinetic":
        v = v + 0.5 * dt[-1] * L.dx(mid[-1], vel[-1])
    return v


def initial_velocity(L: Lagrangian, curve: DiscreteCurve):
    dt, vel, _, mid, _ = curve.segments()
    v = vel[0]
    if L.kind != "kinetic":
        v = v - 0.5 * dt[0] * L.dx(mid[0], vel[0])
    return v


def integrate_extremal(L: Lagrangian, m: Manifold, x, v, duration: float, n_steps: int):
    """Fixed-step RK4 for the Euler-Lagrange flow; exact geodesic flow for the kinetic kind.

    Returns (times, positions, velocities) with times starting at 0.
    """
    if n_steps < 1 or duration / n_steps < 1e-12:
        raise ValueError("step size underflow")
    times = np.linspace(0.0, duration, n_steps + 1)
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    if L.kind == "kinetic":
        pos, vel = m.geodesic(x, v, times[:, None])
        return times, pos, vel
    if not m.is_flat():
        raise ValueError("mechanical extremals are integrated on flat manifolds only")
    h = duration / n_steps
    pos = np.empty((n_steps + 1, len(x)))
    vel = np.empty_like(pos)
    pos[0], vel[0] = x, v
    cx, cv = x.copy(), v.copy()
    for k in range(n_steps):
        a1 = L.dx(cx, cv)
        a2 = L.dx(cx + 0.5 * h * cv, cv + 0.5 * h * a1)
        a3 = L.dx(cx + 0.5 * h * (cv + 0.5 * h * a1), cv + 0.5 * h * a2)
        a4 = L.dx(cx + h * (cv + 0.5 * h * a2), cv + h * a3)
        cx = cx + h * cv + h * h / 6 * (a1 + a2 + a3)
        cv = cv + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        pos[k + 1], vel[k + 1] = cx, cv
    return times, m.normalize(pos), vel


def extend_extremal(L: Lagrangian, curve: DiscreteCurve, extra: float, step: float | None = None) -> DiscreteCurve:
    """Continue an extremal past its endpoint for `extra` time units."""
    if extra <= 0:
        raise ValueError("extra must be positive")
    m = curve.manifold
    if step is None:
        step = float(np.diff(curve.times)[-1])
    n = max(int(math.ceil(extra / step - 1e-9)), 1)
    times, pos, vel = integrate_extremal(L, m, curve.points[-1], terminal_velocity(L, curve), extra, n)
    all_t = np.concatenate([curve.times, curve.times[-1] + times[1:]])
    all_p = np.concatenate([curve.points, pos[1:]])
    out = DiscreteCurve(m, all_t, all_p)
    out.velocities = vel
    return out


def simpson_action(L: Lagrangian, times, pos, vel) -> float:
    """Action of an integrated extremal from its node states (composite Simpson or trapezoid)."""
    vals = L.value(pos, vel)
    n = len(times) - 1
    if n % 2 == 0 and n > 0:
        h = (times[-1] - times[0]) / n
        return float(h / 3 * (vals[0] + vals[-1] + 4 * np.sum(vals[1:-1:2]) + 2 * np.sum(vals[2:-1:2])))
    return float(np.trapezoid(vals, times))
