"""Backward characteristics, singularity classification, cut times and Aubry sets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Manifold, minimizing_geodesics
from .laxoleinik import ClosedSet, Evolution, InfiniteValue, Optimum
from .tonelli import DiscreteCurve, action, euler_lagrange_residual, integrate_extremal, simpson_action

REGULAR = "Regular"
SINGULAR = "Singular"
UNDECIDED = "Undecided"

IN_C = "InC"
IN_AUBRY = "InAubry"
OUTSIDE = "Outside"
AUBRY_CODE = {OUTSIDE: 0, IN_AUBRY: 1, IN_C: 2}


@dataclass
class Tolerances:
    delta_sep: float
    delta_noise: float
    eps_cal: float = 1e-6
    eps_ray: float = 1e-4
    horizon: float = 8.0

    @classmethod
    def for_evolution(cls, ev: Evolution, **over):
        base = dict(delta_sep=5 * ev.h, delta_noise=ev.h, horizon=8 * ev.diameter)
        base.update({k: v for k, v in over.items() if v is not None})
        return cls(**base)


class CalibrationError(RuntimeError):
    """No minimizer cluster reproduces the value within the calibration tolerance."""


@dataclass
class BackwardCharacteristic:
    curve: DiscreteCurve
    momentum: np.ndarray
    defect: float
    residual: float


@dataclass
class SingularityReport:
    t: float
    x: np.ndarray
    representatives: list
    separation: float
    classification: str
    gradient: tuple | None
    exhaustive: bool
    value: float

    @property
    def n_optima(self):
        return len(self.representatives)


def cluster_optima(optima, t, delta_noise):
    """Greedy clustering of minimizers by their lifted source t * velocity at x."""
    reps = []
    for o in sorted(optima, key=lambda o: o.value):
        key = t * np.asarray(o.velocity)
        if all(np.linalg.norm(key - t * r.velocity) > delta_noise for r in reps):
            reps.append(o)
    return reps


def _separation(reps, t):
    sep = 0.0
    for i in range(len(reps)):
        for j in range(i + 1, len(reps)):
            sep = max(sep, float(np.linalg.norm(t * (reps[i].velocity - reps[j].velocity))))
    return sep


def classify(ev: Evolution, t: float, x, tol: Tolerances | None = None) -> SingularityReport:
    tol = tol or Tolerances.for_evolution(ev)
    x = ev.m.normalize(np.asarray(x, float))
    res = ev.evaluate_minus(t, x)
    if not res.optima:
        raise InfiniteValue(f"evolution is +inf at t={t}, x={x.tolist()}")
    reps = cluster_optima(res.optima, t, tol.delta_noise)
    sep = _separation(reps, t)
    if len(reps) == 1 and res.exhaustive:
        return SingularityReport(t, x, reps, 0.0, REGULAR, ev.gradient(t, x, reps[0]), True, res.value)
    kind = SINGULAR if sep >= tol.delta_sep else UNDECIDED
    return SingularityReport(t, x, reps, sep, kind, None, res.exhaustive, res.value)


def _characteristic_curve(ev: Evolution, t, x, o: Optimum, n=64):
    if o.curve is not None:
        return o.curve
    times = np.linspace(0.0, t, n + 1)
    pts = ev.m.geodesic(x, o.velocity, (times - t)[:, None])[0]
    return DiscreteCurve(ev.m, times, ev.m.normalize(pts))


def backward_characteristics(ev: Evolution, t: float, x, cap: int = 8, tol: Tolerances | None = None):
    """Calibrated minimizers ending at (t, x), one per minimizer cluster. Returns (list, exhaustive)."""
    tol = tol or Tolerances.for_evolution(ev)
    x = ev.m.normalize(np.asarray(x, float))
    res = ev.evaluate_minus(t, x)
    if not res.optima:
        raise InfiniteValue("no minimizer")
    reps = cluster_optima(res.optima, t, tol.delta_noise)
    out = []
    eps = tol.eps_cal * (1 + abs(res.value))
    for o in reps[:cap]:
        curve = _characteristic_curve(ev, t, x, o)
        u0 = float(ev.datum.value(curve.points[:1])[0])
        defect = abs(res.value - u0 - action(ev.L, curve))
        resid = euler_lagrange_residual(ev.L, curve)
        if defect <= eps and resid <= 1e-5:
            out.append(BackwardCharacteristic(curve, ev.L.dv(x, o.velocity), defect, resid))
    if not out:
        raise CalibrationError("no minimizer cluster is calibrated; refine the candidate grid")
    return out, res.exhaustive and len(reps) <= cap


@dataclass
class CutTimeValue:
    tau: float
    at_horizon: bool
    witness: np.ndarray | None = None


def _extension(ev: Evolution, x, v, durations):
    """Positions and actions of the extremal through (x, v) after each duration."""
    durations = np.asarray(durations, float)
    if ev.L.kind == "kinetic":
        pos = ev.m.geodesic(x, v, durations[:, None])[0]
        act = float(ev.L.value(x, v)) * durations
        return ev.m.normalize(pos), act
    pos, act = [], []
    for d in durations:
        n = max(2 * int(math.ceil(d / 0.005 / 2)), 2)
        times, p, w = integrate_extremal(ev.L, ev.m, x, v, d, n)
        pos.append(p[-1])
        act.append(simpson_action(ev.L, times, p, w))
    return np.array(pos), np.array(act)


def cut_time(ev: Evolution, t: float, x, horizon: float | None = None, step: float = 0.05,
             tol: Tolerances | None = None, report: SingularityReport | None = None) -> CutTimeValue:
    """Supremum of the times up to which the backward characteristic stays calibrated.

    `horizon` is the longest extension tested beyond t.
    """
    tol = tol or Tolerances.for_evolution(ev)
    horizon = tol.horizon if horizon is None else horizon
    x = ev.m.normalize(np.asarray(x, float))
    rep = report or classify(ev, t, x, tol)
    if rep.classification == SINGULAR:
        return CutTimeValue(t, False, x)
    o = rep.representatives[0]
    u0 = rep.value
    eps = tol.eps_cal * (1 + abs(u0))

    def passes(durs):
        pos, act = _extension(ev, x, o.velocity, durs)
        vals = ev.value(t + np.asarray(durs), pos) if ev._closed_form() else \
            np.array([ev.value(t + d, p[None])[0] for d, p in zip(durs, pos)])
        return vals >= u0 + act - eps, pos

    n = int(math.ceil(horizon / step))
    durs = step * np.arange(1, n + 1)
    ok, pos = passes(durs)
    if np.all(ok):
        return CutTimeValue(t + horizon, True, pos[-1])
    k = int(np.argmin(ok))
    lo = 0.0 if k == 0 else durs[k - 1]
    hi = durs[k]
    while hi - lo > step / 8:
        mid = 0.5 * (lo + hi)
        if passes([mid])[0][0]:
            lo = mid
        else:
            hi = mid
    witness = _extension(ev, x, o.velocity, [max(lo, 1e-300)])[0][0] if lo > 0 else x
    return CutTimeValue(t + lo, False, witness)


def aubry_set_membership(C: ClosedSet, x, horizon: float, eps_ray: float = 1e-4, samples: int = 400,
                         tol: float = 1e-10) -> str:
    """InC, InAubry (some projection ray satisfies d_C(ray(s)) = s up to the horizon) or Outside."""
    m = C.manifold
    x = m.normalize(np.asarray(x, float))
    d = float(C.distance(x))
    if d <= tol:
        return IN_C
    ws, _ = C.projections(x, 1e-9, 8)
    s = np.linspace(d, max(horizon, d), samples)
    for w in ws:
        u = -np.asarray(w) / m.norm(x, w)
        pts = m.normalize(m.geodesic(x, u, (s - d)[:, None])[0])
        if np.all(np.abs(C.distance(pts) - s) <= eps_ray):
            return IN_AUBRY
    return OUTSIDE


def au_set_membership(m: Manifold, x, y, horizon: float, tol: float = 1e-8) -> bool:
    """True when some minimizing geodesic through x and y stays minimizing after extending it by
    `horizon` on both sides."""
    x = m.normalize(np.asarray(x, float))
    y = m.normalize(np.asarray(y, float))
    d = float(m.distance(x, y))
    if d <= 1e-15:
        return True
    segs, _ = minimizing_geodesics(m, x, y, cap=8)
    for seg in segs:
        u = seg.initial_velocity / d
        back = m.geodesic(x, u, -horizon)[0]
        ahead = m.geodesic(x, u, d + horizon)[0]
        total = d + 2 * horizon
        if m.distance(back, ahead) >= total - tol * max(1.0, total):
            return True
    return False
