"""Declarative experiments: JSON specs in, CSV tables and JSON records out.

A spec names one experiment, the group and element it acts on, the sofic
levels and the parameters. Each level is an independent task; tasks run on
a thread pool and are merged back in level order, so the rows do not depend
on the thread budget.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import resource
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import jsonschema

from . import __version__
from .errors import SchemaError
from .fk_reference import mahler_quadrature, series_log_det
from .group_ring import parse_group, parse_matrix
from .lattice import (
    det_exact,
    quotient_order,
    rank_info,
    rank_perturbation,
    smith_normal_form,
    submodule_test,
)
from .sofic import SoficApprox, lift, sofic_from_config
from .spectral import log_det_plus_rate, matrix_hash, singular_spectrum, weak_star_report
from .entropy import ball_shift_overlap, det_approx_row, entropy_bounds_for_lift, reference_for

EXPERIMENTS = (
    "detapprox",
    "weakstar",
    "entropy-bounds",
    "lattice",
    "submodule",
    "overlap",
    "mahler",
    "series",
    "spectrum",
    "perturb",
)

_SOFIC = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "cyclic"},
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
            "required": ["kind", "sizes"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "random-hom"},
                "rank": {"type": "integer", "minimum": 1},
                "degree": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["kind", "rank", "degree", "seed"],
            "additionalProperties": False,
        },
    ]
}

_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_LIST = {"oneOf": [_POS, {"type": "array", "items": _POS, "minItems": 1}]}
_INT_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}, "minItems": 1}

SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "experiment": {"enum": list(EXPERIMENTS)},
        "group": {"type": "string", "pattern": r"^\s*(Zd|Free)\s*\(\s*[1-9][0-9]*\s*\)\s*$"},
        "element": {"type": "string", "minLength": 1},
        "alpha": {"type": "string", "minLength": 1},
        "sofic": {"type": "array", "items": _SOFIC, "minItems": 1},
        "params": {
            "type": "object",
            "properties": {
                "delta": _POS_LIST,
                "eps": _POS_LIST,
                "k_max": {"type": "integer", "minimum": 1},
                "tol": _POS,
                "C": _POS,
                "seed": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer", "minimum": 10000},
                "n": {"type": "integer", "minimum": 1},
                "R": _POS,
                "s": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "array", "items": {"type": "number", "minimum": 0}}]},
                "perturb": {"type": "boolean"},
                "M": _POS,
                "mode": {"enum": ["square-invertible", "dense-image"]},
                "matrices": {"type": "array", "items": _INT_MATRIX, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "output": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
    },
    "required": ["name", "experiment"],
    "additionalProperties": False,
    "allOf": [
        {
            "if": {"properties": {"experiment": {"enum": ["detapprox", "weakstar", "entropy-bounds", "spectrum", "perturb"]}}},
            "then": {"required": ["group", "element", "sofic"]},
        },
        {"if": {"properties": {"experiment": {"const": "submodule"}}}, "then": {"required": ["group", "element", "alpha", "sofic"]}},
        {"if": {"properties": {"experiment": {"enum": ["mahler", "series"]}}}, "then": {"required": ["group", "element"]}},
        {
            "if": {"properties": {"experiment": {"const": "weakstar"}}},
            "then": {"required": ["params"], "properties": {"params": {"required": ["k_max"]}}},
        },
        {
            "if": {"properties": {"experiment": {"const": "entropy-bounds"}}},
            "then": {"required": ["params"], "properties": {"params": {"required": ["delta", "eps"]}}},
        },
        {
            "if": {"properties": {"experiment": {"const": "overlap"}}},
            "then": {"required": ["params"], "properties": {"params": {"required": ["n", "R", "s"]}}},
        },
        {
            "if": {"properties": {"experiment": {"const": "lattice"}}},
            "then": {"required": ["params"], "properties": {"params": {"required": ["matrices"]}}},
        },
        {
            "if": {"properties": {"experiment": {"const": "submodule"}}},
            "then": {"required": ["params"], "properties": {"params": {"required": ["C"]}}},
        },
    ],
}


def _error_field(err: jsonschema.ValidationError) -> str:
    path = list(err.absolute_path)
    if err.validator == "required":
        # the missing key is named in the message: "'x' is a required property"
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path.append(missing)
    return ".".join(str(p) for p in path) or "<root>"


def validate_spec(spec: dict) -> dict:
    """Validate against :data:`SPEC_SCHEMA` and the cross-field rules; raise :class:`SchemaError` naming the field."""
    if not isinstance(spec, dict):
        raise SchemaError("spec must be a JSON object", "<root>")
    validator = jsonschema.Draft202012Validator(SPEC_SCHEMA)
    errors = sorted(validator.iter_errors(spec), key=lambda e: (len(list(e.absolute_path)), list(map(str, e.absolute_path))))
    if errors:
        # prefer the most specific error
        err = max(errors, key=lambda e: len(list(e.absolute_path)))
        best = jsonschema.exceptions.best_match([err]) or err
        raise SchemaError(best.message, _error_field(best))
    params = spec.get("params", {})
    if spec["experiment"] == "entropy-bounds":
        deltas, epss = _as_list(params["delta"]), _as_list(params["eps"])
        if len(deltas) not in (1, len(epss)):
            raise SchemaError("delta must be a single value or match the length of eps", "params.delta")
    return spec


def _as_list(v) -> list:
    return list(v) if isinstance(v, list) else [v]


def load_spec(path) -> dict:
    try:
        spec = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} (line {exc.lineno})", "<root>") from exc
    return validate_spec(spec)


# --- experiment tasks ------------------------------------------------------


@dataclass
class _Context:
    spec: dict

    @property
    def params(self) -> dict:
        return self.spec.get("params", {})

    def group(self):
        return parse_group(self.spec["group"])

    def element(self):
        return parse_matrix(self.spec["element"], self.group())

    def sofics(self) -> list[SoficApprox]:
        g = self.group()
        return [sofic_from_config(cfg, g) for cfg in self.spec["sofic"]]


def _tasks_detapprox(ctx: _Context) -> list[Callable[[], list[dict]]]:
    F = ctx.element()
    ref = reference_for(F, ctx.params.get("tol", 1e-8))
    perturb = ctx.params.get("perturb", False)
    return [
        (lambda S=S, i=i: [det_approx_row(F, S, perturb=perturb, reference=ref, level=i)]) for i, S in enumerate(ctx.sofics())
    ]


def _tasks_weakstar(ctx: _Context):
    F = ctx.element()
    k_max = ctx.params["k_max"]

    def task(S, i):
        return [
            {
                "level": i,
                "sofic": r.sofic,
                "degree": r.degree,
                "k": r.k,
                "empirical": r.empirical,
                "exact": r.exact,
                "gap": r.gap,
                "method": r.method,
            }
            for r in weak_star_report(F, [S], k_max)
        ]

    return [(lambda S=S, i=i: task(S, i)) for i, S in enumerate(ctx.sofics())]


def _tasks_entropy(ctx: _Context):
    F = ctx.element()
    epss = _as_list(ctx.params["eps"])
    deltas = _as_list(ctx.params["delta"])
    if len(deltas) == 1:
        deltas = deltas * len(epss)
    M = ctx.params.get("M")

    def task(S, i):
        rows = []
        for eps, delta in zip(epss, deltas):
            b = entropy_bounds_for_lift(F, S, delta, eps, level=i, M=M)
            rows.append({"sofic": S.tag, **b.as_row()})
        return rows

    return [(lambda S=S, i=i: task(S, i)) for i, S in enumerate(ctx.sofics())]


def _tasks_lattice(ctx: _Context):
    def task(T, i):
        info = rank_info(T)
        square = len(T) == len(T[0])
        snf = smith_normal_form(T)
        det = det_exact(T) if square else None
        return [
            {
                "level": i,
                "rows": len(T),
                "cols": len(T[0]),
                "rank": info.rank,
                "rank_method": info.method,
                "det": det,
                "invariant_factors": " ".join(str(a) for a in snf.invariant_factors),
                "quotient_order": quotient_order(T) if square and det else None,
            }
        ]

    return [(lambda T=T, i=i: task(T, i)) for i, T in enumerate(ctx.params["matrices"])]


def _tasks_submodule(ctx: _Context):
    F = ctx.element()
    alpha = parse_matrix(ctx.spec["alpha"], ctx.group())
    C = ctx.params["C"]
    mode = ctx.params.get("mode", "square-invertible" if F.m == F.n else "dense-image")

    def task(S, i):
        X = rank_perturbation(lift(S, F), mode)
        r = submodule_test(F, alpha, S, X, C)
        return [
            {
                "level": i,
                "sofic": S.tag,
                "degree": S.degree,
                "fraction": str(r.fraction),
                "members": r.members,
                "non_members": r.non_members,
                "undecided": r.undecided,
                "method": r.method,
            }
        ]

    return [(lambda S=S, i=i: task(S, i)) for i, S in enumerate(ctx.sofics())]


def _tasks_overlap(ctx: _Context):
    p = ctx.params
    n, R = p["n"], p["R"]
    samples, seed = p.get("samples", 100_000), p.get("seed", 0)

    def task(s, i):
        est = ball_shift_overlap(n, R, s, samples, seed)
        return [{"level": i, "n": n, "R": R, "s": s, "samples": samples, "seed": seed, "estimate": est.estimate, "stderr": est.stderr}]

    return [(lambda s=s, i=i: task(s, i)) for i, s in enumerate(_as_list(p["s"]))]


def _tasks_mahler(ctx: _Context):
    F = ctx.element()
    tol = ctx.params.get("tol", 1e-8)

    def task():
        r = mahler_quadrature(F, tol)
        return [{"level": 0, "method": r.method, "value_log": r.value, "error": r.error, "tol": tol, "tolerance_met": int(r.tolerance_met)}]

    return [task]


def _tasks_series(ctx: _Context):
    F = ctx.element()
    tol = ctx.params.get("tol", 1e-8)
    k_max = ctx.params.get("k_max")

    def task():
        r = series_log_det(F, k_max, tol=tol)
        return [
            {
                "level": 0,
                "method": r.method,
                "value_log": r.value,
                "error": r.error,
                "k_max": r.params["k_max"],
                "lambda": r.params["lambda"],
                "tolerance_met": int(r.tolerance_met),
            }
        ]

    return [task]


def _tasks_spectrum(ctx: _Context):
    F = ctx.element()

    def task(S, i):
        A = lift(S, F)
        M = singular_spectrum(A)
        pos = M.values[M.zero_count :]
        return [
            {
                "level": i,
                "sofic": S.tag,
                "degree": S.degree,
                "atoms": int(M.values.size),
                "zero_count": M.zero_count,
                "min_positive": float(pos[0]) if pos.size else None,
                "max": float(M.values[-1]) if M.values.size else None,
                "rate_log": log_det_plus_rate(M),
                "rank_method": M.provenance["rank_method"],
                "matrix_sha256": matrix_hash(A),
            }
        ]

    return [(lambda S=S, i=i: task(S, i)) for i, S in enumerate(ctx.sofics())]


def _tasks_perturb(ctx: _Context):
    F = ctx.element()
    mode = ctx.params.get("mode", "square-invertible")

    def task(S, i):
        X = rank_perturbation(lift(S, F), mode)
        return [
            {
                "level": i,
                "sofic": S.tag,
                "degree": S.degree,
                "rank": X.rank,
                "rank_method": X.rank_method,
                "rows_excluded": X.rows_excluded,
                "cols_excluded": X.cols_excluded,
                "agreement_fraction": X.agreement_fraction,
                "perturbation_bound": X.perturbation_bound,
                "det_certified_nonzero": None if X.det_certified_nonzero is None else int(X.det_certified_nonzero),
            }
        ]

    return [(lambda S=S, i=i: task(S, i)) for i, S in enumerate(ctx.sofics())]


_TASKS = {
    "detapprox": _tasks_detapprox,
    "weakstar": _tasks_weakstar,
    "entropy-bounds": _tasks_entropy,
    "lattice": _tasks_lattice,
    "submodule": _tasks_submodule,
    "overlap": _tasks_overlap,
    "mahler": _tasks_mahler,
    "series": _tasks_series,
    "spectrum": _tasks_spectrum,
    "perturb": _tasks_perturb,
}


# --- records ----------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, int) and not isinstance(v, bool) and abs(v) > 2**53:
        return str(v)
    return v


def columns_of(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def rows_to_csv(rows: list[dict]) -> str:
    cols = columns_of(rows)
    out = io.StringIO()
    out.write(",".join(cols) + "\n")
    for r in rows:
        out.write(",".join(_quote(_cell(r.get(c))) for c in cols) + "\n")
    return out.getvalue()


def _quote(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def spec_hash(spec: dict) -> str:
    return hashlib.sha256(json.dumps(spec, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass
class ExperimentRecord:
    name: str
    experiment: str
    config: dict
    rows: list[dict]
    provenance: dict
    timing: dict

    @property
    def csv(self) -> str:
        return rows_to_csv(self.rows)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "experiment": self.experiment,
            "config": self.config,
            "columns": columns_of(self.rows),
            "rows": [{k: _jsonable(v) for k, v in r.items()} for r in self.rows],
            "provenance": self.provenance,
            "timing": self.timing,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentRecord":
        return cls(data["name"], data["experiment"], data["config"], data["rows"], data.get("provenance", {}), data.get("timing", {}))


def run(spec: dict, out: str | Path | None = None, threads: int | None = None) -> ExperimentRecord:
    """Execute a validated spec; write ``<name>.csv`` and ``<name>.json`` under ``out`` when given."""
    spec = validate_spec(spec)
    threads = threads or spec.get("threads", 1)
    out = out if out is not None else spec.get("output")
    start = time.perf_counter()
    tasks = _TASKS[spec["experiment"]](_Context(spec))
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda t: t(), tasks))  # map keeps task order
    else:
        parts = [t() for t in tasks]
    rows = [r for part in parts for r in part]
    wall = time.perf_counter() - start
    csv_text = rows_to_csv(rows)
    record = ExperimentRecord(
        name=spec["name"],
        experiment=spec["experiment"],
        config=spec,
        rows=rows,
        provenance={
            "spec_sha256": spec_hash(spec),
            "csv_sha256": hashlib.sha256(csv_text.encode()).hexdigest(),
            "version": __version__,
        },
        timing={
            "wall_seconds": wall,
            "peak_rss_kib": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
            "threads": threads,
        },
    )
    if out is not None:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{record.name}.csv").write_text(csv_text)
        (d / f"{record.name}.json").write_text(json.dumps(record.to_json(), indent=2) + "\n")
    return record


def load_record(path) -> ExperimentRecord:
    return ExperimentRecord.from_json(json.loads(Path(path).read_text()))


# --- report -----------------------------------------------------------------

_Y_COLUMNS = ("rate_log", "exact_rate_log", "upper_log", "empirical", "fraction", "estimate", "value_log")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v) -> float | None:
    if v is None or v == "":
        return None
    try:
        return float(Fraction(v)) if isinstance(v, str) and "/" in v else float(v)
    except (TypeError, ValueError):
        return None


def _series(record: ExperimentRecord) -> tuple[list[tuple[float, float]], float | None, str]:
    rows = record.rows
    ycol = next((c for c in _Y_COLUMNS if any(_num(r.get(c)) is not None for r in rows)), None)
    if ycol is None:
        return [], None, ""
    xcol = "degree" if any("degree" in r for r in rows) else "level"
    pts = [(_num(r.get(xcol)), _num(r.get(ycol))) for r in rows]
    pts = [(x, y) for x, y in pts if x is not None and y is not None]
    ref = next((_num(r.get("reference_log")) for r in rows if _num(r.get("reference_log")) is not None), None)
    return pts, ref, ycol


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(records: list[ExperimentRecord], width: int = 640, height: int = 400) -> str | None:
    """Line plot of the main column against degree; ``None`` when there is nothing to draw."""
    series = [(rec.name, *_series(rec)) for rec in records]
    series = [s for s in series if s[1]]
    if not series:
        return None
    xs = [x for s in series for x, _ in s[1]]
    ys = [y for s in series for _, y in s[1]] + [s[2] for s in series if s[2] is not None]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = 70, 20, 20, 50
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (y1 - y) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        parts.append(f'<text x="{_fmt(sx(xv))}" y="{top + ph + 15}" text-anchor="middle">{xv:.4g}</text>')
        parts.append(f'<text x="{left - 5}" y="{_fmt(sy(yv) + 4)}" text-anchor="end">{yv:.4g}</text>')
    ylabel = series[0][3]
    parts.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">degree</text>')
    parts.append(f'<text x="15" y="{top + ph / 2:.2f}" text-anchor="middle" transform="rotate(-90 15 {top + ph / 2:.2f})">{ylabel}</text>')
    for idx, (name, pts, ref, _) in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        pts = sorted(pts)
        path = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" fill="{color}"/>')
        if ref is not None:
            parts.append(
                f'<line x1="{left}" y1="{_fmt(sy(ref))}" x2="{left + pw}" y2="{_fmt(sy(ref))}" stroke="{color}" stroke-dasharray="4 3"/>'
            )
        ly = top + 15 + 15 * idx
        parts.append(f'<line x1="{left + pw - 150}" y1="{ly - 4}" x2="{left + pw - 130}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw - 125}" y="{ly}">{_escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def report(records: list[ExperimentRecord]) -> tuple[str | None, str]:
    """``(svg, text)`` summary; the SVG is None and the text ``"no data"`` when no record has rows."""
    if not any(rec.rows for rec in records):
        return None, "no data\n"
    lines = []
    for rec in records:
        pts, ref, ycol = _series(rec)
        lines.append(f"{rec.name} ({rec.experiment}): {len(rec.rows)} rows")
        if pts:
            last_x, last_y = sorted(pts)[-1]
            line = f"  {ycol} at degree {last_x:g}: {last_y!r}"
            if ref is not None:
                line += f"; reference {ref!r}; gap {abs(last_y - ref)!r}"
            lines.append(line)
    return render_svg(records), "\n".join(lines) + "\n"


__all__ = [
    "EXPERIMENTS",
    "SPEC_SCHEMA",
    "validate_spec",
    "load_spec",
    "run",
    "ExperimentRecord",
    "load_record",
    "rows_to_csv",
    "report",
    "render_svg",
]
