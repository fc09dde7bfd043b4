"""CSV, JSON and SVG writers. Every writer is deterministic: same input, same bytes."""
from __future__ import annotations

import csv
import io
import json
import math
from xml.sax.saxutils import quoteattr

import numpy as np

from .singularity import AUBRY_CODE, REGULAR, SINGULAR

SINGULAR_FLAG = {REGULAR: 0, SINGULAR: 1}  # Undecided is written as -1
TAU_UNKNOWN = -1.0


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def field_header(n: int, extra=()) -> list:
    return (["t"] + [f"x{i}" for i in range(n)] + ["u"] + [f"grad{i}" for i in range(n)]
            + ["n_optima", "singular"] + list(extra))


def field_row(report, n: int) -> list:
    """One row from a SingularityReport; gradient columns stay empty unless Regular."""
    grad = [None] * n
    if report.gradient is not None:
        grad = list(np.asarray(report.gradient[1], float))
    flag = SINGULAR_FLAG.get(report.classification, -1)
    return [report.t, *np.asarray(report.x, float), report.value, *grad, report.n_optima, flag]


def field_csv(reports, n: int) -> str:
    return _csv(field_header(n), [field_row(r, n) for r in reports])


def singularity_csv(reports, n: int, taus=None, aubry=None) -> str:
    """Field schema plus tau (-1 when not computed) and the Aubry code (0 outside, 1 Aubry, 2 in C)."""
    rows = []
    for i, r in enumerate(reports):
        tau = TAU_UNKNOWN if taus is None or taus[i] is None else taus[i]
        code = "" if aubry is None else AUBRY_CODE[aubry[i]]
        rows.append(field_row(r, n) + [tau, code])
    return _csv(field_header(n, ("tau", "aubry")), rows)


TRACE_HEADER_TAIL = ["s", "singular", "d_to_source", "bound_margin_point", "bound_margin_cum"]


def trace_csv(traces, n: int, manifold, cumulative=None) -> str:
    """One row per visited point; row k = 0 is the seed itself.

    `cumulative[i][k]` holds the cumulative BoundRecords after step k of trace i.
    """
    header = ["seed_id", "k", "t"] + [f"x{i}" for i in range(n)] + TRACE_HEADER_TAIL
    rows = []
    for i, tr in enumerate(traces):
        x0 = np.asarray(tr.x0, float)
        rows.append([i, 0, tr.t0, *x0, 0.0, "", 0.0, "", ""])
        for k, st in enumerate(tr.steps, start=1):
            point = min((b.margin for b in st.bounds), default=None)
            cum = None
            if cumulative is not None:
                cum = min(b.margin for b in cumulative[i][k - 1])
            rows.append([i, k, st.t + st.s, *np.asarray(st.y, float), st.s,
                         SINGULAR_FLAG.get(st.classification, -1), float(manifold.distance(st.y, x0)), point, cum])
    return _csv(header, rows)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return v
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, non-finite floats as strings."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def svg(lo, hi, mask_points=(), mask_size=0.0, polylines=(), traces=(), size: int = 512) -> str:
    """2D drawing: one <polyline> per trace plus a group holding the singular mask."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    scale = size / float(np.max(hi - lo))
    height = scale * (hi[1] - lo[1])

    def px(p):
        return f"{scale * (p[0] - lo[0]):.4f},{height - scale * (p[1] - lo[1]):.4f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{scale * (hi[0] - lo[0]):.4f}" '
           f'height="{height:.4f}">']
    out.append('<g id="singular-mask" fill="black">')
    half = 0.5 * mask_size * scale
    for p in mask_points:
        x, y = map(float, px(p).split(","))
        out.append(f'<rect x="{x - half:.4f}" y="{y - half:.4f}" width="{2 * half:.4f}" height="{2 * half:.4f}"/>')
    for line in polylines:
        pts = " ".join(px(p) for p in line)
        out.append(f'<polyline class="mask" points={quoteattr(pts)} fill="none" stroke="black"/>')
    out.append("</g>")
    out.append('<g id="traces" fill="none" stroke="red">')
    for i, tr in enumerate(traces):
        pts = " ".join(px(p) for p in tr)
        out.append(f'<polyline class="trace" data-seed="{i}" points={quoteattr(pts)}/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
