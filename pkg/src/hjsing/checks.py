"""The acceptance suite as plain functions returning metrics and a verdict.

Each check builds its own inputs from a seeded generator, so a report depends only on
the scale profile and the seed, never on the thread count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .applications import (brute_force_medial_axis, fixture, hausdorff, homotopy_evidence, medial_axis, nu_grid,
                           nu_set, au_mask)
from .expr import Potential
from .geometry import Euclidean, FlatTorus, Product, Sphere2, random_points
from .homotopy import adapted_step, compose_trace, verify_suite_bounds
from .laxoleinik import (CharacteristicOfSet, Evolution, Expression, Field, FinitePoints, Window,
                         domination_check)
from .singularity import REGULAR, SINGULAR, UNDECIDED, Tolerances, classify, cut_time
from .tonelli import Kinetic, Mechanical, action, minimal_action


@dataclass(frozen=True)
class Scale:
    actions: int = 1000
    exact: int = 200
    direct: int = 100
    domination: int = 1000
    plus: int = 60
    gradient: int = 200
    seeds: int = 100
    nu_torus1: int = 32
    nu_torus2: int = 8
    nu_sphere: int = 6
    lipschitz_trace: bool = True


FULL = Scale()
QUICK = Scale(actions=50, exact=20, direct=10, domination=50, plus=6, gradient=10, seeds=4, nu_torus1=8,
              nu_torus2=4, nu_sphere=4, lipschitz_trace=False)
PROFILES = {"full": FULL, "quick": QUICK}


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}"

    def to_dict(self):
        return {"criterion": self.number, "name": self.name, "pass": bool(self.passed), "metrics": self.metrics}


class Context:
    """Shared state between checks (the retraction traces feed two criteria)."""

    def __init__(self, scale: Scale = FULL, seed: int = 0, threads: int = 1):
        self.scale = scale
        self.seed = seed
        self.threads = threads
        self._evidence = {}
        self._extra_traces = []

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def evidence(self, name: str):
        if name not in self._evidence:
            fx = fixture(name)
            seeds = fx.seeds(self.rng(1100 + len(name)), self.scale.seeds)
            self._evidence[name] = homotopy_evidence(fx, seeds, threads=self.threads)
        return self._evidence[name]


# ---------------------------------------------------------------- reference formulas

def reference_distance(m, x, y):
    """Distances by formulas written independently of the geometry module."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if isinstance(m, Euclidean):
        return float(np.sqrt(np.sum((x - y) ** 2)))
    if isinstance(m, FlatTorus):
        p = np.asarray(m.periods)
        best = math.inf
        for shift in np.array(np.meshgrid(*[[-1, 0, 1]] * m.n)).reshape(m.n, -1).T:
            best = min(best, float(np.linalg.norm(x - y + shift * p)))
        d = np.abs(x - y) % p
        return min(best, float(np.linalg.norm(np.minimum(d, p - d))))
    if isinstance(m, Sphere2):
        c = float(np.dot(x, y)) / m.radius**2
        return m.radius * math.acos(min(1.0, max(-1.0, c)))
    if isinstance(m, Product):
        k = m.left.ambient
        return math.hypot(reference_distance(m.left, x[:k], y[:k]), reference_distance(m.right, x[k:], y[k:]))
    raise TypeError(type(m))


def _segment_distance(P, a, b):
    ab = b - a
    s = np.clip(((P - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(P - (a + s[:, None] * ab), axis=1)


def reference_set_distance(name: str, X: np.ndarray) -> np.ndarray:
    if name == "two-points":
        return np.minimum(np.linalg.norm(X - [1, 0], axis=1), np.linalg.norm(X + [1, 0], axis=1))
    if name == "circle":
        return np.abs(np.linalg.norm(X, axis=1) - 1.0)
    if name == "square":
        V = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float)
        return np.min([_segment_distance(X, V[i], V[(i + 1) % 4]) for i in range(4)], axis=0)
    if name == "torus-point":
        f = X[:, 0] % 1.0
        return np.minimum(f, 1 - f)
    raise KeyError(name)


def brute_force_mechanical_action(potential: Potential, x: float, y: float, t: float, period: float = 1.0,
                                  spacing: float = 0.01, coarse: int = 16, fine: int = 64) -> float:
    """Minimal action of |v|^2/2 - V on a circle by dynamic programming on a lattice, then descent.

    The coarse lattice search picks the homotopy class and a starting path; gradient descent on
    a finer time discretization polishes it.
    """
    V = lambda z: potential.value(np.asarray(z)[..., None])
    dV = lambda z: potential.gradient(np.asarray(z)[..., None])[..., 0]
    best = math.inf
    for k in (-1, 0, 1):
        target = y + k * period
        lo, hi = min(x, target) - 0.5 * period, max(x, target) + 0.5 * period
        nodes = x + spacing * np.arange(math.floor((lo - x) / spacing), math.ceil((hi - x) / spacing) + 1)
        tau = t / coarse
        step_cost = lambda a, b: (b - a) ** 2 / (2 * tau) - tau * V(0.5 * (a + b))
        cost = step_cost(x, nodes)
        parents = []
        for _ in range(coarse - 2):
            total = cost[:, None] + step_cost(nodes[:, None], nodes[None, :])
            parents.append(np.argmin(total, axis=0))
            cost = np.min(total, axis=0)
        total = cost + step_cost(nodes, target)
        j = int(np.argmin(total))
        path = [nodes[j]]
        for par in reversed(parents):
            j = int(par[j])
            path.append(nodes[j])
        path = np.array([x] + path[::-1] + [target])
        coarse_times = np.linspace(0, t, coarse + 1)
        times = np.linspace(0, t, fine + 1)
        q0 = np.interp(times, coarse_times, path)[1:-1]
        dt = t / fine

        def fun(q):
            z = np.concatenate([[x], q, [target]])
            dz = np.diff(z)
            mid = 0.5 * (z[1:] + z[:-1])
            val = np.sum(dz**2 / (2 * dt) - dt * V(mid))
            g_seg = dz / dt
            g_mid = -dt * dV(mid) * 0.5
            grad = g_seg[:-1] - g_seg[1:] + g_mid[:-1] + g_mid[1:]
            return val, grad

        res = minimize(fun, q0, jac=True, method="BFGS", options={"gtol": 1e-11, "maxiter": 2000})
        best = min(best, float(res.fun))
    return best


# ---------------------------------------------------------------- criteria

def check_closed_form_action(ctx: Context) -> CheckResult:
    K = Kinetic()
    manifolds = {"R2": Euclidean(2), "T2": FlatTorus((1.0, 1.5)), "S2": Sphere2(1.0),
                 "T1xS2": Product(FlatTorus((1.0,)), Sphere2(1.0))}
    worst = {}
    for i, (label, m) in enumerate(manifolds.items()):
        rng = ctx.rng(100 + i)
        X = random_points(m, rng, ctx.scale.actions, -3 * np.ones(m.ambient), 3 * np.ones(m.ambient))
        Y = random_points(m, rng, ctx.scale.actions, -3 * np.ones(m.ambient), 3 * np.ones(m.ambient))
        T = rng.uniform(0.1, 5.0, ctx.scale.actions)
        err = 0.0
        for x, y, t in zip(X, Y, T):
            ref = reference_distance(m, x, y) ** 2 / (2 * t)
            value, curve = minimal_action(K, m, x, y, t, n_segments=16)
            err = max(err, abs(value - ref), abs(action(K, curve) - ref))
        worst[label] = err
    return CheckResult(1, "closed-form action", max(worst.values()) <= 1e-8, {"max_error": worst})


def check_evolution_exactness(ctx: Context) -> CheckResult:
    worst = {}
    for i, name in enumerate(["two-points", "circle", "square", "torus-point"]):
        fx = fixture(name)
        ev = fx.evolution()
        rng = ctx.rng(200 + i)
        X = random_points(ev.m, rng, ctx.scale.exact, ev.window.lo, ev.window.hi)
        T = rng.uniform(ev.window.t_min, ev.window.t_max, ctx.scale.exact)
        ref = reference_set_distance(name, X) ** 2 / (2 * T)
        vals = np.array([ev.evaluate_minus(t, x).value for t, x in zip(T, X)])
        worst[name] = float(np.max(np.abs(vals - ref)))
    for i, name in enumerate(["torus-diagonal", "sphere-diagonal"]):
        fx = fixture(name)
        ev = fx.evolution()
        base = fx.closed_set.base
        rng = ctx.rng(210 + i)
        n = max(ctx.scale.exact // 4, 5)
        A = random_points(base, rng, n)
        B = random_points(base, rng, n)
        T = rng.uniform(0.5, 2.0, n)
        err = 0.0
        for a, b, t in zip(A, B, T):
            v = ev.evaluate_minus(t, np.concatenate([a, b])).value
            err = max(err, abs(v - reference_distance(base, a, b) ** 2 / (4 * t)))
        worst[name] = err
    return CheckResult(2, "evolution exactness", max(worst.values()) <= 1e-8, {"max_error": worst})


def check_oracle_equivalence(ctx: Context) -> CheckResult:
    K = Kinetic()
    rng = ctx.rng(300)
    rel = 0.0
    cases = [Euclidean(2), FlatTorus((1.0, 1.0))]
    for k in range(ctx.scale.direct):
        m = cases[k % 2]
        x, y = random_points(m, rng, 2, [-2, -2], [2, 2])
        t = float(rng.uniform(0.2, 3.0))
        ref = reference_distance(m, x, y) ** 2 / (2 * t)
        value, _ = minimal_action(K, m, x, y, t, direct=True)
        rel = max(rel, abs(value - ref) / max(ref, 1e-12))
    T1 = FlatTorus((1.0,))
    L = Mechanical("0.1*cos(2*pi*x0)", T1)
    mech = []
    for x, y, t in [(0.0, 0.5, 1.0), (0.1, 0.3, 0.5), (0.2, 0.9, 2.0), (0.0, 0.25, 1.5), (0.4, 0.45, 0.7)]:
        value, _ = minimal_action(L, T1, [x], [y], t)
        mech.append(abs(value - brute_force_mechanical_action(L.V, x, y, t)))
    ok = rel <= 1e-5 and max(mech) <= 1e-4
    return CheckResult(3, "oracle equivalence", ok, {"direct_max_relative": rel, "mechanical_max_abs": max(mech)})


def check_semigroup_domination(ctx: Context) -> CheckResult:
    ratios = {}
    for i, name in enumerate(["two-points", "circle", "torus-point"]):
        ev = fixture(name).evolution()
        rng = ctx.rng(400 + i)
        lo = None if ev.window.lo is None else 0.5 * ev.window.lo
        hi = None if ev.window.hi is None else 0.5 * ev.window.hi
        X = random_points(ev.m, rng, 40, lo, hi)
        defects = []
        for h in (1 / 16, 1 / 32):
            nested = Evolution(Field(ev, 1.0), Kinetic(), ev.m, ev.window, h=h, refine=False)
            defects.append(float(np.max(np.abs(nested.value(0.5, X) - ev.value(1.5, X)))))
        ratios[name] = defects[1] / defects[0]
    per = max(ctx.scale.domination // 4, 1)
    worst, bad = -math.inf, 0
    for i, name in enumerate(["two-points", "circle", "square", "torus-point"]):
        ev = fixture(name).evolution()
        rng = ctx.rng(410 + i)
        X = random_points(ev.m, rng, per, ev.window.lo, ev.window.hi)
        Y = random_points(ev.m, rng, per, ev.window.lo, ev.window.hi)
        t1 = rng.uniform(0.25, 3.0, per)
        t2 = t1 + rng.uniform(0.01, 3.0, per)
        rep = domination_check(ev, list(zip(t1, X, t2, Y)))
        worst, bad = max(worst, rep.max_violation), bad + rep.violations
    ok = max(ratios.values()) <= 0.6 and bad == 0
    return CheckResult(4, "semigroup and domination", ok,
                       {"defect_ratio": ratios, "domination_pairs": 4 * per, "domination_violations": bad,
                        "domination_max": worst})


def check_composed_inequality(ctx: Context) -> CheckResult:
    worst_gap, eq_err, eq_count, total = -math.inf, 0.0, 0, 0
    for i, name in enumerate(["two-points", "circle", "torus-point"]):
        ev = fixture(name).evolution()
        tol = Tolerances.for_evolution(ev)
        rng = ctx.rng(500 + i)
        lo = None if ev.window.lo is None else 0.5 * ev.window.lo
        hi = None if ev.window.hi is None else 0.5 * ev.window.hi
        X = random_points(ev.m, rng, ctx.scale.plus, lo, hi)
        for x in X:
            t = float(rng.uniform(0.5, 2.0))
            s = float(rng.uniform(0.05, 0.5))
            plus = ev.evaluate_plus(t, s, x)
            here = float(ev.value(t, x[None])[0])
            worst_gap = max(worst_gap, plus.value - here)
            total += 1
            rep = classify(ev, t, x, tol)
            if rep.classification == REGULAR and float(fixture(name).closed_set.distance(x)) > ev.h:
                tau = cut_time(ev, t, x, tol=tol, report=rep)
                if tau.tau > t + s + 0.1:
                    eq_err = max(eq_err, abs(plus.value - here))
                    eq_count += 1
    ok = worst_gap <= 1e-9 and eq_err <= 1e-8 and eq_count > 0
    return CheckResult(5, "composed-operator inequality", ok,
                       {"samples": total, "max_excess": worst_gap, "calibrated_samples": eq_count,
                        "max_equality_error": eq_err})


def _fd_gradient(ev, t, x, delta, tol):
    """Central differences of (t, x) -> value, or None when the stencil crosses the singular set."""
    m = ev.m
    rows = [(t + delta, x), (t - delta, x)]
    for k in range(m.ambient):
        e = np.zeros(m.ambient)
        e[k] = delta
        rows += [(t, x + e), (t, x - e)]
    vals = []
    for tt, p in rows:
        rep = classify(ev, tt, p, tol)
        if rep.classification != REGULAR:
            return None
        vals.append(rep.value)
    vals = np.array(vals)
    return (vals[0::2] - vals[1::2]) / (2 * delta)


def check_gradient_identity(ctx: Context) -> CheckResult:
    worst = {}
    counts = {}
    for i, name in enumerate(["two-points", "circle", "square", "torus-point", "mechanical-torus"]):
        fx = fixture(name)
        ev = fx.evolution()
        tol = Tolerances.for_evolution(ev)
        rng = ctx.rng(600 + i)
        delta = 1e-5 if ev.L.kind == "kinetic" else 1e-4
        err, found, tries = 0.0, 0, 0
        while found < ctx.scale.gradient and tries < 20 * ctx.scale.gradient:
            tries += 1
            x = random_points(ev.m, rng, 1, ev.window.lo, ev.window.hi)[0]
            t = float(rng.uniform(0.5, 2.0))
            if float(fx.closed_set.distance(x)) < ev.h:
                continue
            rep = classify(ev, t, x, tol)
            if rep.classification != REGULAR:
                continue
            fd = _fd_gradient(ev, t, x, delta, tol)
            if fd is None:
                continue
            g = np.concatenate([[rep.gradient[0]], np.asarray(rep.gradient[1], float)])
            err = max(err, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
            found += 1
        worst[name] = err
        counts[name] = found
    ok = max(worst.values()) <= 1e-4 and min(counts.values()) >= ctx.scale.gradient
    return CheckResult(6, "gradient identity", ok, {"max_relative_error": worst, "regular_points": counts})


def check_medial_axis(ctx: Context) -> CheckResult:
    metrics = {}
    ok = True
    two = fixture("two-points")
    ax = medial_axis(two, threads=ctx.threads)
    h = ax.grid.points[1, 1] - ax.grid.points[0, 1]
    line = np.stack([np.zeros(257), np.linspace(-2, 2, 257)], axis=-1)
    metrics["two_points_hausdorff"] = hausdorff(ax.points(), line)
    metrics["two_points_slices_agree"] = ax.slice_agreement
    ok &= metrics["two_points_hausdorff"] <= 2 * h and ax.slice_agreement

    circ = fixture("circle")
    ax = medial_axis(circ, threads=ctx.threads)
    tol = Tolerances.for_evolution(circ.evolution())
    pts = ax.points()
    metrics["circle_points"] = len(pts)
    metrics["circle_max_offset"] = float(np.max(np.linalg.norm(pts, axis=1))) if len(pts) else math.inf
    metrics["circle_slices_agree"] = ax.slice_agreement
    ok &= len(pts) > 0 and metrics["circle_max_offset"] <= tol.delta_sep and ax.slice_agreement

    sq = fixture("square")
    ev = sq.evolution()
    ax = medial_axis(sq, threads=ctx.threads, ev=ev)
    s = np.linspace(0, 1, 400, endpoint=False)
    V = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float)
    boundary = np.concatenate([V[i] + np.outer(s, V[(i + 1) % 4] - V[i]) for i in range(4)])
    g = np.linspace(-1.5, 1.5, 121)
    fine = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    inside = fine[np.max(np.abs(fine), axis=1) < 1]
    brute = brute_force_medial_axis(boundary, inside, 0.5 * (g[1] - g[0]), 5 * ev.h)
    metrics["square_hausdorff"] = hausdorff(ax.points(), brute)
    metrics["square_slices_agree"] = ax.slice_agreement
    ok &= metrics["square_hausdorff"] <= 2 * ev.h and ax.slice_agreement
    return CheckResult(7, "medial-axis fixtures", bool(ok), metrics)


def check_cut_time(ctx: Context) -> CheckResult:
    ev = fixture("circle").evolution()
    taus = {}
    for label, x in {"east": [0.5, 0.0], "north": [0.0, 0.5], "diagonal": [0.5 / math.sqrt(2)] * 2}.items():
        taus[label] = cut_time(ev, 1.0, np.array(x)).tau
    ev2 = fixture("two-points").evolution()
    bis = [cut_time(ev2, 1.0, np.array([0.0, y])).tau for y in (-1.5, -0.5, 0.0, 0.25, 1.0)]
    ok = all(abs(v - 2.0) <= 0.04 for v in taus.values()) and all(v == 1.0 for v in bis)
    return CheckResult(8, "cut time", ok, {"circle_tau": taus, "bisector_tau": bis})


def single_point_evolution():
    E2 = Euclidean(2)
    return Evolution(CharacteristicOfSet(FinitePoints(E2, [[0.0, 0.0]])), Kinetic(), E2,
                     Window(0.25, 20.0, [-10.0, -10.0], [10.0, 10.0]))


def check_adapted_step(ctx: Context) -> CheckResult:
    ev = single_point_evolution()
    step = adapted_step(ev, 1.0, np.array([1.0, 0.0]), 1.0)
    one = float(np.linalg.norm(step.y - [2.0, 0.0]))
    # s_k = t_k doubles the distance at every step
    trace = compose_trace(ev, 1.0, np.array([1.0, 0.0]), [1.0, 2.0, 4.0])
    marks = [trace.steps[k - 1].y for k in trace.checkpoints]
    errs = [float(np.linalg.norm(p - [2.0 ** (i + 1), 0.0])) for i, p in enumerate(marks)]
    ctx._extra_traces.append((ev, trace))
    ok = one <= 1e-6 and errs[-1] <= 1e-5 and not trace.violations
    return CheckResult(9, "adapted step closed form", ok,
                       {"single_step_error": one, "checkpoint_errors": errs, "substeps": len(trace.steps)})


def check_bounds(ctx: Context) -> CheckResult:
    checked, bad, margin = 0, [], math.inf
    groups = []
    for name in ["two-points", "circle", "torus-point"]:
        evd = ctx.evidence(name)
        groups.append((fixture(name).evolution(), evd.retraction.traces, False))
    groups += [(ev, [tr], False) for ev, tr in ctx._extra_traces]
    if ctx.scale.lipschitz_trace:
        T1 = FlatTorus((1.0,))
        ev = Evolution(Expression(T1, "0.05*cos(2*pi*x0)"), Kinetic(), T1, Window(0.25, 4.0))
        groups.append((ev, [compose_trace(ev, 1.0, [0.3], [0.5, 0.5])], True))
    kinds = set()
    for ev, traces, lip in groups:
        rep = verify_suite_bounds(ev, traces, lipschitz_in_large=lip)
        checked += rep.checked
        bad += rep.violations
        margin = min(margin, rep.min_margin)
        for tr in traces:
            for st in tr.steps:
                kinds.update(b.name for b in st.bounds)
        if lip:
            kinds.add("kappa_step")
    needed = {"localization", "step_distance", "step_dC"} | ({"kappa_step"} if ctx.scale.lipschitz_trace else set())
    ok = not bad and checked > 0 and needed <= kinds
    return CheckResult(10, "bounds suite", ok, {"checked": checked, "violations": len(bad),
                                                "min_margin": margin, "bound_kinds": sorted(kinds)})


def check_retraction(ctx: Context) -> CheckResult:
    metrics = {}
    ok = True
    for name in ["two-points", "circle", "torus-point"]:
        evd = ctx.evidence(name)
        post_regular = 0
        for tr in evd.retraction.traces:
            for st in tr.steps:
                if st.t + st.s > tr.tau + 2 * 0.05 and st.classification == REGULAR:
                    post_regular += 1
        metrics[name] = dict(evd.to_dict(), seeds=evd.seeds, correspondence=evd.correspondence,
                             post_cut_regular=post_regular)
        ok &= evd.passed and post_regular == 0 and evd.seeds >= ctx.scale.seeds
    return CheckResult(11, "retraction evidence", bool(ok), metrics)


def check_nu_agreement(ctx: Context) -> CheckResult:
    metrics = {}
    ok = True
    for label, m, k in [("T1", FlatTorus((1.0,)), ctx.scale.nu_torus1), ("T2", FlatTorus((1.0, 1.0)), ctx.scale.nu_torus2),
                        ("S2", Sphere2(1.0), ctx.scale.nu_sphere)]:
        res = nu_set(m, nu_grid(m, k), threads=ctx.threads)
        metrics[label] = {"agreement": res.agreement, "matrix": res.matrix, "undecided": int(res.undecided.sum())}
        ok &= res.agreement == 1.0
    pts = nu_grid(Euclidean(2), 5, [-1, -1], [1, 1])
    res = nu_set(Euclidean(2), pts, threads=ctx.threads)
    metrics["R2_singular"] = int(res.classifier.sum() + res.enumeration.sum())
    ok &= metrics["R2_singular"] == 0
    for label, m, k in [("T1", FlatTorus((1.0,)), 8), ("T2", FlatTorus((1.0, 1.0)), 4), ("S2", Sphere2(1.0), 4)]:
        pts = nu_grid(m, k)
        mask = au_mask(m, pts, horizon=4.0)
        same = np.array([[float(m.distance(a, b)) < 1e-12 for b in pts] for a in pts])
        metrics[f"AU_{label}_off_diagonal"] = int(np.sum(mask != same))
        ok &= bool(np.all(mask == same))
    return CheckResult(12, "NU agreement", bool(ok), metrics)


CHECKS = [check_closed_form_action, check_evolution_exactness, check_oracle_equivalence, check_semigroup_domination,
          check_composed_inequality, check_gradient_identity, check_medial_axis, check_cut_time, check_adapted_step,
          check_bounds, check_retraction, check_nu_agreement]


def run_suite(scale: Scale = FULL, seed: int = 0, threads: int = 1, only=None, log=None) -> list:
    """Criteria 1-12. Determinism (13) compares whole reports and lives with the CLI."""
    ctx = Context(scale, seed, threads)
    results = []
    for fn in CHECKS:
        if only and fn.__name__ not in only:
            continue
        res = fn(ctx)
        if log:
            log(res.line())
        results.append(res)
    return results
