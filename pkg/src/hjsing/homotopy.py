"""Adapted homotopy steps, their composition, the rescaled retraction and the bound checks."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import Euclidean, FlatTorus
from .laxoleinik import CharacteristicOfSet, Evolution
from .singularity import REGULAR, SINGULAR, UNDECIDED, Tolerances, classify, cut_time
from .tonelli import minimal_action_values, s0 as s0_bound


class StepTooLarge(ValueError):
    pass


class WindowExit(RuntimeError):
    pass


@dataclass
class StepSettings:
    radius: float = 2.0
    strict: bool = False
    split: bool = True


@dataclass
class BoundRecord:
    name: str
    lhs: float
    rhs: float

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def ok(self):
        return self.lhs <= self.rhs + 1e-12 * max(1.0, abs(self.rhs))


@dataclass
class HomotopyStep:
    t: float
    x: np.ndarray
    s: float
    y: np.ndarray
    value: float
    value_gap: float
    margin: float
    s0: float
    length: float
    bounds: list
    classification: str
    advisory: str | None = None

    @property
    def within_s0(self):
        return self.s <= self.s0 * (1 + 1e-12)


@dataclass
class HomotopyTrace:
    t0: float
    x0: np.ndarray
    steps: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    reason: str = "Exhausted"
    tau: float | None = None
    calibrated: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def points(self):
        return np.array([self.x0] + [st.y for st in self.steps])

    @property
    def times(self):
        return np.array([self.t0] + [st.t + st.s for st in self.steps])

    @property
    def final_classification(self):
        return self.steps[-1].classification if self.steps else None


def _set_of(ev):
    return ev.datum.closed_set if isinstance(ev.datum, CharacteristicOfSet) else None


def step_s0(ev: Evolution, t: float, x, radius: float) -> float:
    """Largest step for which the maximizers at (t, x) stay within `radius`."""
    C = _set_of(ev)
    vmax = max(ev.L.max_potential(), 0.0)
    if C is not None:
        lower = -vmax * ev.window.t_max
        if ev.L.kind == "kinetic":
            upper = (float(C.distance(x)) + radius) ** 2 / (2 * t)
        else:
            upper = float(np.max(ev.value(t, _ball_samples(ev, x, radius))))
    else:
        lower = float(np.min(ev.datum.value(ev.grid)[np.isfinite(ev.datum.value(ev.grid))])) - vmax * ev.window.t_max
        upper = float(np.max(ev.value(t, _ball_samples(ev, x, radius))))
    return s0_bound(ev.L, lower, upper, t, radius)


def _ball_samples(ev, x, radius):
    m = ev.m
    if isinstance(m, Euclidean):
        from .geometry import grid_points
        pts = grid_points(m, max(ev.h, radius / 8), x - radius, x + radius)
    else:
        pts = ev.grid
    return pts[m.distance(x, pts) <= radius]


def adapted_step(ev: Evolution, t: float, x, s: float, settings: StepSettings | None = None,
                 tol: Tolerances | None = None) -> HomotopyStep:
    """One step y = argmax_z T-_{t+s}u(z) - h_s(x, z) over the ball B(x, r), with its bound records."""
    settings = settings or StepSettings()
    tol = tol or Tolerances.for_evolution(ev)
    m = ev.m
    x = m.normalize(np.asarray(x, float))
    bound = step_s0(ev, t, x, settings.radius)
    if settings.strict and s > bound * (1 + 1e-12):
        raise StepTooLarge(f"s={s} exceeds s0={bound}")
    plus = ev.evaluate_plus(t, s, x, radius=settings.radius)
    y = plus.argmax
    direct = float(ev.value(t + s, y[None])[0] - minimal_action_values(ev.L, m, y[None], x, s, ev.n_segments)[0])
    length = float(m.distance(x, y))
    records = [BoundRecord("localization", length, settings.radius)] if s <= bound * (1 + 1e-12) else []
    C = _set_of(ev)
    if C is not None and ev.L.kind == "kinetic":
        dcx = float(C.distance(x))
        records.append(BoundRecord("step_distance", length, 2 * s / t * dcx))
        records.append(BoundRecord("step_dC", float(C.distance(y)), (1 + 2 * s / t) * dcx))
    target = classify(ev, t + s, y, tol)
    advisory = None
    if target.classification == REGULAR and plus.margin <= ev.eps_abs(plus.value):
        advisory = "two maximizer clusters at a regular target"
    return HomotopyStep(t, x, s, y, plus.value, plus.value - direct, plus.margin, bound, length, records,
                        target.classification, advisory)


def compose_trace(ev: Evolution, t0: float, x0, durations, settings: StepSettings | None = None,
                  tol: Tolerances | None = None, cut_step: float = 0.05, check_curve: bool = True) -> HomotopyTrace:
    """Chain adapted steps over the given durations, splitting each at the local s0 bound."""
    settings = settings or StepSettings()
    tol = tol or Tolerances.for_evolution(ev)
    m = ev.m
    x0 = m.normalize(np.asarray(x0, float))
    trace = HomotopyTrace(t0, x0)
    if len(durations) == 0:
        return trace
    start = classify(ev, t0, x0, tol)
    tau = cut_time(ev, t0, x0, step=cut_step, tol=tol, report=start)
    trace.tau = float(tau.tau)
    u0 = start.value
    t, x = t0, x0
    action_sum = 0.0
    velocity = start.representatives[0].velocity if start.classification == REGULAR else None
    for total in durations:
        remaining = float(total)
        while remaining > 1e-12:
            s = min(remaining, step_s0(ev, t, x, settings.radius)) if settings.split else remaining
            if t + s > ev.window.t_max * (1 + 1e-12):
                trace.reason = "WindowExit"
                raise WindowExit(f"trace leaves the time window at t={t + s}")
            st = adapted_step(ev, t, x, s, settings, tol)
            trace.steps.append(st)
            action_sum += float(minimal_action_values(ev.L, m, x[None], st.y, s, ev.n_segments)[0])
            t, x = t + s, st.y
            remaining -= s
            k = len(trace.steps)
            if st.classification == REGULAR:
                # adaptedness: the chained curve must be calibrated up to a regular target
                value = float(ev.value(t, x[None])[0])
                ok = value >= u0 + action_sum - tol.eps_cal * (1 + abs(value)) * (k + 1)
                trace.calibrated.append(bool(ok))
                if not ok:
                    trace.violations.append(f"step {k}: regular target off the calibrated chain")
            else:
                trace.calibrated.append(False)
            if check_curve and velocity is not None and t <= tau.tau:
                expected = m.normalize(m.geodesic(x0, velocity, t - t0)[0]) if ev.L.kind == "kinetic" else None
                if expected is not None and m.distance(expected, x) > 2 * ev.h:
                    trace.violations.append(f"step {k}: left the calibrated characteristic")
            if t > tau.tau + 2 * cut_step:
                if st.classification == REGULAR:
                    trace.violations.append(f"step {k}: regular after the cut time")
                elif st.classification == UNDECIDED:
                    trace.warnings.append(f"step {k}: undecided after the cut time")
            if st.advisory:
                trace.warnings.append(f"step {k}: {st.advisory}")
        trace.checkpoints.append(len(trace.steps))
    return trace


# ---------------------------------------------------------------- rescaled retraction

class AubryCandidate(ValueError):
    """A grid node near the seed keeps its characteristic calibrated up to the horizon."""


class _AlphaField:
    """Neighborhood max of (tau - t)+ on the spatial grid, multilinearly interpolated."""

    def __init__(self, ev, t0, tol, cut_step):
        m = ev.m
        if isinstance(m, Euclidean):
            self.lo = ev.window.lo
            self.counts = np.maximum(np.round((ev.window.hi - ev.window.lo) / ev.h).astype(int), 1)
            self.spacing = (ev.window.hi - ev.window.lo) / self.counts
            self.wrap = False
        elif isinstance(m, FlatTorus):
            self.lo = np.zeros(m.n)
            self.counts = np.maximum(np.round(m.period_array / ev.h).astype(int), 1)
            self.spacing = m.period_array / self.counts
            self.wrap = True
        else:
            raise ValueError("rescaled retraction needs a Euclidean or flat torus window")
        self.ev, self.t0, self.tol, self.cut_step = ev, t0, tol, cut_step
        self.raw = {}
        self.smooth = {}

    def _key(self, idx):
        return tuple(int(i) % int(c) for i, c in zip(idx, self.counts)) if self.wrap else tuple(int(i) for i in idx)

    def node(self, idx):
        return self.lo + np.asarray(idx, float) * self.spacing

    def tau_excess(self, idx):
        key = self._key(idx)
        if key not in self.raw:
            x = self.node(key)
            C = _set_of(self.ev)
            if C is not None and C.contains(x):
                self.raw[key] = 0.0
            else:
                ct = cut_time(self.ev, self.t0, x, step=self.cut_step, tol=self.tol)
                if ct.at_horizon:
                    raise AubryCandidate(f"grid node {x.tolist()} is an Aubry candidate; the region must avoid it")
                self.raw[key] = max(float(ct.tau) - self.t0, 0.0)
        return self.raw[key]

    def smoothed(self, idx):
        key = self._key(idx)
        if key not in self.smooth:
            n = len(idx)
            self.smooth[key] = max(self.tau_excess(np.asarray(idx) + np.array(off))
                                   for off in itertools.product((-1, 0, 1), repeat=n))
        return self.smooth[key]

    def __call__(self, x):
        rel = (np.asarray(x, float) - self.lo) / self.spacing
        base = np.floor(rel).astype(int)
        frac = rel - base
        total = 0.0
        for corner in itertools.product((0, 1), repeat=len(base)):
            w = float(np.prod([f if c else 1 - f for f, c in zip(frac, corner)]))
            if w > 0:
                total += w * self.smoothed(base + np.array(corner))
        return total


@dataclass
class RetractionResult:
    traces: list
    alphas: list
    final: list
    dropped: list = field(default_factory=list)


def rescaled_retraction(ev: Evolution, t0: float, seeds, margin: float | None = None,
                        settings: StepSettings | None = None, tol: Tolerances | None = None,
                        cut_step: float = 0.05, threads: int = 1, drop_inadmissible: bool = False) -> RetractionResult:
    """Run every seed for the rescaled duration alpha(t0, x) > tau(t0, x) - t0.

    Seeds whose alpha neighborhood touches an Aubry candidate raise AubryCandidate, or are
    skipped and listed in `dropped` when `drop_inadmissible` is set.
    """
    settings = settings or StepSettings()
    tol = tol or Tolerances.for_evolution(ev)
    seeds = [ev.m.normalize(np.asarray(x, float)) for x in seeds]
    alpha = _AlphaField(ev, t0, tol, cut_step)
    kept, alphas, dropped = [], [], []
    for i, x in enumerate(seeds):
        extra = 0.1 * step_s0(ev, t0, x, settings.radius) if margin is None else margin
        try:
            a = alpha(x) + extra
        except AubryCandidate:
            if not drop_inadmissible:
                raise
            dropped.append(i)
            continue
        kept.append(x)
        alphas.append(a)

    def run(args):
        x, a = args
        return compose_trace(ev, t0, x, [a], settings, tol, cut_step)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            traces = list(pool.map(run, zip(kept, alphas)))
    else:
        traces = [run(a) for a in zip(kept, alphas)]
    final = [tr.final_classification for tr in traces]
    return RetractionResult(traces, alphas, final, dropped)


# ---------------------------------------------------------------- bound verification

@dataclass
class BoundsReport:
    checked: int = 0
    violations: list = field(default_factory=list)
    min_margin: float = math.inf

    def add(self, rec: BoundRecord, where: str):
        self.checked += 1
        self.min_margin = min(self.min_margin, rec.margin)
        if not rec.ok:
            self.violations.append(f"{where}: {rec.name} {rec.lhs:.6g} > {rec.rhs:.6g}")


def lipschitz_constant(ev: Evolution, t: float, samples: int = 400, rng=None) -> float:
    """Measured Lipschitz constant of x -> T-_t u(x) on the window grid."""
    Y = ev.grid
    if len(Y) > samples:
        rng = rng or np.random.default_rng(0)
        Y = Y[rng.choice(len(Y), samples, replace=False)]
    vals = ev.value(t, Y)
    best = 0.0
    for i in range(len(Y)):
        d = ev.m.distance(Y[i], Y)
        ok = d > 1e-12
        best = max(best, float(np.max(np.abs(vals[ok] - vals[i]) / d[ok])))
    return best


def cumulative_records(trace: HomotopyTrace, C):
    """Per visited point: the two cumulative distance bounds along the trace."""
    m = C.manifold
    d0 = float(C.distance(trace.x0))
    out = []
    for st in trace.steps:
        tn = st.t + st.s
        out.append([BoundRecord("cum_dC", float(C.distance(st.y)), math.exp(2 * tn / trace.t0) * d0),
                    BoundRecord("cum_distance", float(m.distance(st.y, trace.x0)),
                                2 * math.exp(3 * tn / trace.t0) * d0)])
    return out


def verify_suite_bounds(ev: Evolution, traces, lipschitz_in_large: bool = False) -> BoundsReport:
    """Check per-step, cumulative, localization, kappa-per-step and confinement bounds."""
    report = BoundsReport()
    C = _set_of(ev)
    if not traces:
        return report
    kappa_t0 = None
    if lipschitz_in_large:
        t_first = min(tr.t0 for tr in traces)
        lam = lipschitz_constant(ev, t_first)
        kappa_t0 = ev.L.superlinearity(lam + 1) + ev.L.fiber_bound(0.0)
    for i, tr in enumerate(traces):
        for k, st in enumerate(tr.steps):
            for rec in st.bounds:
                report.add(rec, f"trace {i} step {k}")
            if kappa_t0 is not None:
                report.add(BoundRecord("kappa_step", st.length, kappa_t0 * st.s), f"trace {i} step {k}")
        if C is not None:
            for k, recs in enumerate(cumulative_records(tr, C)):
                for rec in recs:
                    report.add(rec, f"trace {i} step {k}")
    if C is not None:
        a = min(tr.t0 for tr in traces)
        b = max(tr.t0 for tr in traces)
        starts = np.array([tr.x0 for tr in traces])
        kappa = math.exp(3 * (b + 1) / a) * float(np.max(C.distance(starts)))
        for i, tr in enumerate(traces):
            for p in tr.points:
                report.add(BoundRecord("confinement", float(np.min(ev.m.distance(p, starts))), kappa), f"trace {i}")
    return report
