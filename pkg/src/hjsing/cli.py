"""Command line entry point: hjsing <subcommand> [--config F | --fixture NAME] --out DIR."""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import io as hio
from .applications import FIXTURES, medial_axis, nu_grid, nu_set, spatial_grid
from .checks import PROFILES, run_suite
from .config import ConfigError, ExperimentConfig, config_for_fixture
from .geometry import Euclidean, FlatTorus, Product, random_points
from .homotopy import StepSettings, cumulative_records, rescaled_retraction
from .laxoleinik import CharacteristicOfSet, Diagonal, InfiniteValue
from .singularity import SINGULAR, UNDECIDED, CalibrationError, aubry_set_membership, classify, cut_time
from .tonelli import NonConvergence

EXIT_OK, EXIT_FAILURE, EXIT_SCHEMA, EXIT_ADVISORY = 0, 1, 2, 3


def _load(args) -> ExperimentConfig | None:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = ExperimentConfig.from_json(text)
    elif args.fixture:
        cfg = config_for_fixture(args.fixture)
    else:
        return None
    if args.rng_seed is not None:
        cfg.rng_seed = args.rng_seed
    return cfg


def _out(cfg, key, default):
    return (cfg.outputs or {}).get(key, default) if cfg else default


def _box(ev):
    if ev.window.lo is not None:
        return ev.window.lo, ev.window.hi
    if isinstance(ev.m, FlatTorus):
        return np.zeros(ev.m.n), ev.m.period_array
    return None, None


def _planar(ev):
    return isinstance(ev.m, (Euclidean, FlatTorus)) and ev.m.ambient == 2


def _config_hash(cfg):
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()


def _map(fn, items, threads):
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def cmd_evolve(cfg, out: Path, threads: int) -> dict:
    ev = cfg.build()
    tol = cfg.tolerances_for(ev)
    pts = spatial_grid(ev).points
    vals = ev.value(cfg.t, pts)
    if not np.all(np.isfinite(vals)):
        bad = int(np.sum(~np.isfinite(vals)))
        raise InfiniteValue(f"value is +inf at {bad} of {len(pts)} grid points at t={cfg.t}; "
                            "the datum is not finite on this window")
    reports = _map(lambda p: classify(ev, cfg.t, p, tol), pts, threads)
    (out / _out(cfg, "field", "field.csv")).write_text(hio.field_csv(reports, ev.m.ambient))
    counts = {c: sum(r.classification == c for r in reports) for c in ("Regular", "Singular", "Undecided")}
    return {"points": len(pts), "classes": counts}


def cmd_medial_axis(cfg, out: Path, threads: int) -> dict:
    fx = cfg.fixture()
    ev = cfg.build()
    tol = cfg.tolerances_for(ev)
    ax = medial_axis(fx, cfg.t, cfg.t_check, threads, ev)
    reports = []
    aubry = []
    for p, inside in zip(ax.grid.points, ax.in_set):
        aubry.append(aubry_set_membership(fx.closed_set, p, tol.horizon, tol.eps_ray))
        reports.append(None if inside else classify(ev, cfg.t, p, tol))
    keep = [i for i, r in enumerate(reports) if r is not None]
    text = hio.singularity_csv([reports[i] for i in keep], ev.m.ambient, None, [aubry[i] for i in keep])
    (out / _out(cfg, "mask", "mask.csv")).write_text(text)
    if _planar(ev):
        lo, hi = _box(ev)
        (out / _out(cfg, "svg", "mask.svg")).write_text(
            hio.svg(lo, hi, ax.points(), ev.h, ax.polylines()))
    return {"points": len(ax.grid.points), "singular": int(np.sum(ax.classes == SINGULAR)),
            "undecided": int(np.sum(ax.classes == UNDECIDED)), "slices_agree": ax.slice_agreement,
            "horizon_limited": True}


def cmd_cut_time(cfg, out: Path, threads: int) -> dict:
    fx = cfg.fixture()
    ev = cfg.build()
    tol = cfg.tolerances_for(ev)
    pts = spatial_grid(ev).points
    pts = pts[fx.closed_set.distance(pts) > 1e-10]

    def one(p):
        rep = classify(ev, cfg.t, p, tol)
        tau = cut_time(ev, cfg.t, p, step=cfg.cut_step, tol=tol, report=rep)
        return rep, -1.0 if tau.at_horizon else tau.tau, aubry_set_membership(fx.closed_set, p, tol.horizon,
                                                                               tol.eps_ray)

    rows = _map(one, pts, threads)
    text = hio.singularity_csv([r for r, _, _ in rows], ev.m.ambient, [t for _, t, _ in rows],
                               [a for _, _, a in rows])
    (out / _out(cfg, "tau", "tau.csv")).write_text(text)
    return {"points": len(pts), "at_horizon": sum(t == -1.0 for _, t, _ in rows), "horizon_limited": True}


def cmd_retract(cfg, out: Path, threads: int) -> dict:
    fx = cfg.fixture()
    ev = cfg.build()
    tol = cfg.tolerances_for(ev)
    rng = np.random.default_rng(cfg.rng_seed)
    if cfg.seeds == 0:
        seeds = np.zeros((0, ev.m.ambient))
    elif fx.seed_sampler is not None:
        seeds = fx.seeds(rng, cfg.seeds)
    else:
        seeds = random_points(ev.m, rng, cfg.seeds, ev.window.lo, ev.window.hi)
    seeds = seeds[fx.closed_set.distance(seeds) > ev.h] if len(seeds) else seeds
    res = rescaled_retraction(ev, cfg.t, seeds, settings=StepSettings(), tol=tol, cut_step=cfg.cut_step,
                              threads=threads, drop_inadmissible=True)
    cum = [cumulative_records(tr, fx.closed_set) for tr in res.traces]
    (out / _out(cfg, "traces", "traces.csv")).write_text(hio.trace_csv(res.traces, ev.m.ambient, ev.m, cum))
    if _planar(ev):
        ax = medial_axis(fx, cfg.t, cfg.t_check, threads, ev)
        lo, hi = _box(ev)
        (out / _out(cfg, "svg", "traces.svg")).write_text(
            hio.svg(lo, hi, ax.points(), ev.h, traces=[tr.points for tr in res.traces]))
    advisories = [w for tr in res.traces for w in tr.warnings if "maximizer" in w]
    violations = [v for tr in res.traces for v in tr.violations]
    summary = {"seeds": len(seeds), "dropped_near_aubry": len(res.dropped), "final": res.final,
               "violations": violations, "advisories": advisories}
    if violations:
        summary["status"] = "failure"
    elif advisories:
        summary["status"] = "advisory"
    return summary


def cmd_nu_set(cfg, out: Path, threads: int) -> dict:
    ev = cfg.build()
    base = ev.m
    if isinstance(ev.m, Product) and isinstance(ev.datum, CharacteristicOfSet) \
            and isinstance(ev.datum.closed_set, Diagonal):
        base = ev.datum.closed_set.base
    per_axis = 8
    if isinstance(base, Euclidean):
        lo = ev.window.lo[: base.n] if ev.window.lo is not None else -np.ones(base.n)
        hi = ev.window.hi[: base.n] if ev.window.hi is not None else np.ones(base.n)
        pts = nu_grid(base, 5, lo, hi)
    else:
        pts = nu_grid(base, per_axis)
    res = nu_set(base, pts, threads=threads)
    return {"pairs": len(res.points), "agreement": res.agreement, "matrix": res.matrix,
            "undecided": int(res.undecided.sum()), "status": "ok" if res.agreement == 1.0 else "failure"}


def cmd_verify(args, out: Path, threads: int) -> dict:
    seed = 0 if args.rng_seed is None else args.rng_seed
    results = run_suite(PROFILES[args.profile], seed, threads, log=lambda line: print(line, file=sys.stderr))
    return {"profile": args.profile, "rng_seed": seed, "criteria": [r.to_dict() for r in results],
            "status": "ok" if all(r.passed for r in results) else "failure"}


COMMANDS = {"evolve": cmd_evolve, "medial-axis": cmd_medial_axis, "cut-time": cmd_cut_time,
            "retract": cmd_retract, "nu-set": cmd_nu_set}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjsing", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS) + ["verify"])
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", help="experiment config (JSON)")
    src.add_argument("--fixture", choices=FIXTURES, help="use a registered fixture instead of a config file")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--rng-seed", type=int, default=None)
    ap.add_argument("--profile", choices=sorted(PROFILES), default="full", help="verify sample sizes")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    threads = max(1, args.threads)
    if args.rng_seed is not None and not 0 <= args.rng_seed < 2**64:
        print("error: --rng-seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out.mkdir(parents=True, exist_ok=True)
    report = {"command": args.command}
    try:
        if args.command == "verify":
            report.update(cmd_verify(args, out, threads))
        else:
            if cfg is None:
                print("error: this command needs --config or --fixture", file=sys.stderr)
                return EXIT_SCHEMA
            report["config_sha256"] = _config_hash(cfg)
            report.update(COMMANDS[args.command](cfg, out, threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except InfiniteValue as exc:
        report.update(status="failure", error=f"+inf: {exc}")
    except (CalibrationError, NonConvergence) as exc:
        report.update(status="advisory", error=str(exc))
    except Exception as exc:  # noqa: BLE001 - surfaced as a failed run with its message
        report.update(status="failure", error=f"{type(exc).__name__}: {exc}")
    report.setdefault("status", "ok")
    (out / (args.command.replace("-", "_") + ".json")).write_text(hio.dumps(report))
    if report.get("error"):
        print(report["error"], file=sys.stderr)
    return {"ok": EXIT_OK, "failure": EXIT_FAILURE, "advisory": EXIT_ADVISORY}[report["status"]]


if __name__ == "__main__":
    sys.exit(main())
