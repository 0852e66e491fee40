"""Config-driven batch front end.

    invmetric --config exp.json --command build-metric --out results/

Exit status: 0 success, 1 error (bad config, numerical failure), 2 a checked
property failed its tolerance.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import platform
import sys
import time
import warnings
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .automorphism import disc_sequence
from .bergman import NumericBasis, bergman_metric_field, bergman_model, write_kernel_csv
from .blend import build_pipeline, classify_layer, default_delta, write_layers_csv
from .domain import Disc, GridSpec, from_json as domain_from_json
from .errors import ConfigError, InvMetricError
from .geometry import (boundary_rigidity_check, common_fixed_point, gauss_curvature, general_position_fix_check,
                       geodesic, jaccard, metric_ball, transported_indicator, write_ball_csv, write_ball_pgm,
                       write_geodesic_csv)
from .group import group_from_json, haar_nodes
from .metric import average, euclidean, fmt, invariance_residual, poincare, write_metric_csv

COMMANDS = ("build-metric", "invariance-report", "layers", "geodesic", "ball", "kernel-check",
            "fixed-point", "rigidity", "curvature", "demo-noncompact")

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["domain"],
    "properties": {
        "domain": {"type": "object"},
        "group": {"type": "object"},
        "base_metric": {"enum": ["euclidean", "poincare"]},
        "quadrature_n": {"type": "integer", "minimum": 1},
        "grid": {"type": "integer", "minimum": 16},
        "delta": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "stencil_radius": {"type": "integer", "minimum": 1, "maximum": 12},
        "bergman": {
            "type": "object", "additionalProperties": False,
            "properties": {"model": {"enum": ["auto", "numeric"]}, "degree": {"type": "integer", "minimum": 1},
                           "truncation": {"type": "integer", "minimum": 1}},
        },
        "commands": {"type": "array", "items": {"enum": list(COMMANDS)}},
        "output_dir": {"type": "string"},
        "samples": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in
                           ("invariance", "speed_drift", "jaccard", "kernel", "curvature")},
        },
        "geodesic": {
            "type": "object", "additionalProperties": False,
            "properties": {"start": _POINT, "velocity": _POINT, "length": {"type": "number"},
                           "steps": {"type": "integer", "minimum": 1}, "field": {"enum": ["base", "h", "htilde"]}},
        },
        "ball": {
            "type": "object", "additionalProperties": False,
            "properties": {"center": {"anyOf": [_POINT, {"type": "null"}]}, "radius": {"type": "number"},
                           "field": {"enum": ["base", "h", "htilde"]}},
        },
        "kernel_check": {"type": "object", "additionalProperties": False,
                         "properties": {"pairs": {"type": "integer", "minimum": 1},
                                        "degree": {"type": "integer", "minimum": 1}}},
        "fixed_point": {"type": "object", "additionalProperties": False,
                        "properties": {"seed": _POINT, "field": {"enum": ["base", "h", "htilde"]}}},
        "rigidity": {"type": "object", "additionalProperties": False,
                     "properties": {"boundary_point": _POINT, "points": {"type": "array", "items": _POINT},
                                    "min_points": {"type": "integer", "minimum": 1},
                                    "tol": {"type": "number", "exclusiveMinimum": 0}}},
        "curvature": {"type": "object", "additionalProperties": False,
                      "properties": {"points": {"type": "integer", "minimum": 1},
                                     "max_radius": {"type": "number", "exclusiveMinimum": 0},
                                     "expected": {"type": ["number", "null"]},
                                     "field": {"enum": ["base", "h", "htilde"]}}},
        "demo_noncompact": {"type": "object", "additionalProperties": False,
                            "properties": {"j": {"type": "array", "items": {"type": "integer", "minimum": 1}}}},
    },
}

DEFAULTS = {
    "group": {"structure": "trivial"},
    "base_metric": "euclidean",
    "quadrature_n": 64,
    "grid": 256,
    "delta": None,
    "stencil_radius": 5,
    "bergman": {"model": "auto", "degree": 30, "truncation": 400},
    "commands": [],
    "output_dir": "out",
    "samples": 200,
    "tolerances": {"invariance": 1e-8, "speed_drift": 1e-4, "jaccard": 0.99, "kernel": 1e-6, "curvature": 1e-3},
    "geodesic": {"start": None, "velocity": [1.0, 0.0], "length": 0.5, "steps": 500, "field": "h"},
    "ball": {"center": None, "radius": 0.5, "field": "htilde"},
    "kernel_check": {"pairs": 20, "degree": 120},
    "fixed_point": {"seed": None, "field": "h"},
    "rigidity": {"boundary_point": None, "points": None, "min_points": 2, "tol": 1e-6},
    "curvature": {"points": 50, "max_radius": None, "expected": None, "field": "base"},
    "demo_noncompact": {"j": [2, 10, 100]},
}


class ToleranceFailure(Exception):
    def __init__(self, invariant, value, tol):
        super().__init__(f"{invariant}: {value!r} violates tolerance {tol!r}")
        self.invariant = invariant


# ---------------------------------------------------------------- config


def _line_of(text: str, key) -> int | None:
    needle = f'"{key}"'
    pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def load_config(path) -> tuple[dict, list, str]:
    """(config with defaults, list of defaulted field paths, raw text)."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if isinstance(raw, dict) and ("eps" in raw or "epsilon" in raw):
        key = "eps" if "eps" in raw else "epsilon"
        raise ConfigError(f"{path}:{_line_of(text, key)}: field '{key}': eps is always 2*delta and cannot be set")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        field = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        key = next((p for p in reversed(list(exc.absolute_path)) if isinstance(p, str)), None)
        if key is None and exc.validator == "additionalProperties":
            extra = sorted(set(exc.instance) - set(exc.schema.get("properties", {})))
            key = extra[0] if extra else None
            field = key or field
        line = _line_of(text, key) if key else None
        where = f"{path}:{line}" if line else str(path)
        raise ConfigError(f"{where}: field '{field}': {exc.message}") from None
    cfg, defaulted = _with_defaults(raw)
    return cfg, defaulted, text


def _with_defaults(raw):
    cfg = copy.deepcopy(raw)
    defaulted = []
    for key, val in DEFAULTS.items():
        if key not in cfg:
            cfg[key] = copy.deepcopy(val)
            defaulted.append(key)
        elif isinstance(val, dict) and isinstance(cfg[key], dict) and key != "group":
            for sub, sval in val.items():
                if sub not in cfg[key]:
                    cfg[key][sub] = copy.deepcopy(sval)
                    defaulted.append(f"{key}.{sub}")
    return cfg, defaulted


def _pt(v):
    return None if v is None else complex(v[0], v[1])


# ---------------------------------------------------------------- context


class Context:
    """Lazily built objects shared by the commands of one run."""

    def __init__(self, cfg, seed):
        self.cfg = cfg
        self.seed = seed
        self.domain = domain_from_json(cfg["domain"])
        self.group = group_from_json(cfg["group"], self.domain)
        self.spec = GridSpec.for_domain(self.domain, cfg["grid"])
        self.delta = cfg["delta"] if cfg["delta"] is not None else default_delta(self.domain)
        self._cache = {}

    def base(self):
        if self.cfg["base_metric"] == "poincare":
            if not (isinstance(self.domain, Disc) and self.domain.center == 0 and self.domain.radius == 1):
                raise ConfigError("the poincare base metric needs the unit disc domain")
            return poincare(self.domain)
        return euclidean(self.domain)

    def h(self):
        if "h" not in self._cache:
            self._cache["h"] = average(self.group, self.base(), self.cfg["quadrature_n"])
        return self._cache["h"]

    def bergman(self):
        if "b" not in self._cache:
            bc = self.cfg["bergman"]
            if bc["model"] == "numeric":
                model = NumericBasis(self.domain, bc["degree"])
            else:
                model = bergman_model(self.domain, bc["truncation"], bc["degree"])
            self._cache["b"] = bergman_metric_field(model, self.domain)
        return self._cache["b"]

    def pipeline(self):
        if "pipe" not in self._cache:
            self._cache["pipe"] = build_pipeline(self.h(), self.bergman(), self.spec, delta=self.delta,
                                                 radius=max(self.cfg["stencil_radius"], 5))
        return self._cache["pipe"]

    def field(self, name):
        if name == "base":
            return self.base()
        if name == "h":
            return self.h()
        return self.pipeline().Htilde

    def samples(self, count=None, margin_frac=0.02):
        count = count or self.cfg["samples"]
        rng = np.random.default_rng(self.seed)
        oc = self.domain.outer_circle
        margin = margin_frac * oc.radius
        out = []
        while len(out) < count:
            z = oc.center + oc.radius * complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
            if self.domain.rho(z) < -margin:
                out.append(z)
        return np.array(out)


# ---------------------------------------------------------------- commands


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def cmd_build_metric(ctx: Context, out: Path):
    pipe = ctx.pipeline()
    n1 = write_metric_csv(out / "metric_htilde.csv", pipe.Htilde, ctx.spec)
    n2 = write_metric_csv(out / "metric_h.csv", pipe.h, ctx.spec)
    n3 = write_layers_csv(out / "layers.csv", pipe.dist, pipe.delta)
    return {"rows": {"metric_htilde.csv": n1, "metric_h.csv": n2, "layers.csv": n3},
            "delta": pipe.delta, "eps": pipe.eps}


def cmd_invariance_report(ctx: Context, out: Path):
    z = ctx.samples()
    n_test = 97 if ctx.group.structure != "finite" else 1
    res_h = invariance_residual(ctx.h(), ctx.group, z, n_test)
    res_base = invariance_residual(ctx.base(), ctx.group, z, n_test)
    report = {"averaged_residual": res_h, "base_residual": res_base, "samples": len(z),
              "quadrature_n": ctx.cfg["quadrature_n"], "test_nodes": n_test}
    _write_json(out / "invariance.json", report)
    tol = ctx.cfg["tolerances"]["invariance"]
    if not res_h < tol:
        raise ToleranceFailure("averaged-metric invariance", res_h, tol)
    return report


def cmd_layers(ctx: Context, out: Path):
    pipe = ctx.pipeline()
    n = write_layers_csv(out / "layers.csv", pipe.dist, pipe.delta)
    d = pipe.dist.dist[ctx.domain.rho(ctx.spec.nodes()) < 0]
    labels, counts = np.unique(classify_layer(d, pipe.delta), return_counts=True)
    report = {"rows": n, "delta": pipe.delta, "eps": pipe.eps, "counts": dict(zip(labels.tolist(), counts.tolist()))}
    _write_json(out / "layers.json", report)
    return report


def cmd_geodesic(ctx: Context, out: Path):
    gc = ctx.cfg["geodesic"]
    field = ctx.field(gc["field"])
    start = _pt(gc["start"]) if gc["start"] is not None else ctx.domain.interior_point
    gp = geodesic(field, start, gc["velocity"], gc["length"], gc["steps"])
    write_geodesic_csv(out / "geodesic.csv", gp)
    sp = gp.speeds(field)
    drift = float(np.max(np.abs(sp - sp[0])) / sp[0])
    report = {"points": len(gp.t), "speed_drift": drift, "end": complex(gp.points[-1]), "step": gp.step}
    _write_json(out / "geodesic.json", report)
    tol = ctx.cfg["tolerances"]["speed_drift"]
    if not drift < tol:
        raise ToleranceFailure("geodesic speed conservation", drift, tol)
    return report


def cmd_ball(ctx: Context, out: Path):
    bc = ctx.cfg["ball"]
    field = ctx.field(bc["field"])
    center = _pt(bc["center"])
    if center is None:
        center = common_fixed_point(ctx.group, ctx.h(), ctx.domain.interior_point)
        if center is None:
            raise ConfigError("ball center not given and the group has no common fixed point")
    ind = metric_ball(field, center, bc["radius"], ctx.spec, max(ctx.cfg["stencil_radius"], 1))
    write_ball_pgm(out / "ball.pgm", ind)
    write_ball_csv(out / "ball.csv", ind, ctx.spec)
    scores = [jaccard(ind, transported_indicator(ind, ctx.spec, a, ctx.domain))
              for a, _ in haar_nodes(ctx.group, 16)]
    report = {"center": complex(center), "radius": bc["radius"], "nodes": int(ind.sum()),
              "jaccard_min": min(scores), "jaccard": scores}
    _write_json(out / "ball.json", report)
    tol = ctx.cfg["tolerances"]["jaccard"]
    if not min(scores) >= tol:
        raise ToleranceFailure("ball equivariance (Jaccard)", min(scores), tol)
    return report


def cmd_kernel_check(ctx: Context, out: Path):
    kc = ctx.cfg["kernel_check"]
    model = bergman_model(ctx.domain, ctx.cfg["bergman"]["truncation"], ctx.cfg["bergman"]["degree"])
    if isinstance(model, NumericBasis):
        raise ConfigError("kernel-check needs a domain with a closed-form kernel")
    oracle = NumericBasis(ctx.domain, kc["degree"])
    z = ctx.samples(2 * kc["pairs"], margin_frac=0.1)
    zz, ww = z[: kc["pairs"]], z[kc["pairs"]:]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        k1 = model.kernel(zz, ww)
    k2 = oracle.kernel(zz, ww)
    rel = np.abs(k1 - k2) / np.abs(k2)
    write_kernel_csv(out / "kernel.csv", zz, ww, k1)
    write_kernel_csv(out / "kernel_oracle.csv", zz, ww, k2)
    report = {"model": type(model).__name__, "oracle_degree": kc["degree"], "max_rel_err": float(rel.max())}
    _write_json(out / "kernel_check.json", report)
    tol = ctx.cfg["tolerances"]["kernel"]
    if not rel.max() < tol:
        raise ToleranceFailure("Bergman kernel oracle agreement", float(rel.max()), tol)
    return report


def cmd_fixed_point(ctx: Context, out: Path):
    fc = ctx.cfg["fixed_point"]
    seed = _pt(fc["seed"]) if fc["seed"] is not None else ctx.domain.interior_point
    x = common_fixed_point(ctx.group, ctx.field(fc["field"]), seed, spec=GridSpec.for_domain(ctx.domain, 128))
    report = {"seed": seed, "fixed_point": None if x is None else complex(x)}
    _write_json(out / "fixed_point.json", report)
    return report


def cmd_rigidity(ctx: Context, out: Path):
    rc = ctx.cfg["rigidity"]
    p = _pt(rc["boundary_point"])
    if p is None:
        oc = ctx.domain.outer_circle
        p = oc.center + oc.radius
    pts = [_pt(q) for q in rc["points"]] if rc["points"] is not None else [p]
    r1 = boundary_rigidity_check(ctx.group, p, rc["tol"])
    r2 = general_position_fix_check(ctx.group, pts, rc["tol"], min_points=rc["min_points"])
    report = {"boundary_rigidity": json.loads(r1.to_json()), "general_position": json.loads(r2.to_json())}
    _write_json(out / "rigidity.json", report)
    if not (r1.consistent and r2.consistent):
        raise ToleranceFailure("rigidity: non-identity element fixes the boundary data", False, True)
    return {"consistent": True, "fixers": [len(r1.fixers), len(r2.fixers)]}


def cmd_curvature(ctx: Context, out: Path):
    cc = ctx.cfg["curvature"]
    field = ctx.field(cc["field"])
    rng = np.random.default_rng(ctx.seed)
    if cc["max_radius"] is not None:
        oc = ctx.domain.outer_circle
        r = cc["max_radius"] * np.sqrt(rng.uniform(0, 1, cc["points"]))
        z = oc.center + r * np.exp(2j * np.pi * rng.uniform(0, 1, cc["points"]))
        z = z[ctx.domain.rho(z) < 0]
    else:
        z = ctx.samples(cc["points"], margin_frac=0.05)
    k = np.atleast_1d(gauss_curvature(field, z))
    with open(out / "curvature.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "K"])
        for p, v in zip(z, k):
            w.writerow([fmt(p.real), fmt(p.imag), fmt(v)])
    report = {"points": len(z), "min": float(k.min()), "max": float(k.max())}
    if cc["expected"] is not None:
        report["max_abs_dev"] = float(np.max(np.abs(k - cc["expected"])))
    _write_json(out / "curvature.json", report)
    if cc["expected"] is not None:
        tol = ctx.cfg["tolerances"]["curvature"]
        if not report["max_abs_dev"] < tol:
            raise ToleranceFailure("curvature", report["max_abs_dev"], tol)
    return report


def cmd_demo_noncompact(ctx: Context, out: Path):
    rows = []
    for j in ctx.cfg["demo_noncompact"]["j"]:
        v = complex(disc_sequence(j).apply(0j))
        rows.append((j, v.real, 1.0 - abs(v), v == complex(1 - 1 / j)))
    with open(out / "noncompact.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "phi_j_of_0", "boundary_distance"])
        for j, v, d, _ in rows:
            w.writerow([j, fmt(v), fmt(d)])
    report = {"rows": [{"j": j, "phi_j_of_0": v, "boundary_distance": d, "exact": ok} for j, v, d, ok in rows]}
    _write_json(out / "noncompact.json", report)
    if not all(r[3] for r in rows):
        raise ToleranceFailure("phi_j(0) = 1 - 1/j", [r[1] for r in rows], "exact")
    return report


HANDLERS = {
    "build-metric": cmd_build_metric,
    "invariance-report": cmd_invariance_report,
    "layers": cmd_layers,
    "geodesic": cmd_geodesic,
    "ball": cmd_ball,
    "kernel-check": cmd_kernel_check,
    "fixed-point": cmd_fixed_point,
    "rigidity": cmd_rigidity,
    "curvature": cmd_curvature,
    "demo-noncompact": cmd_demo_noncompact,
}


# ---------------------------------------------------------------- driver


def _manifest(cfg, text, defaulted, command, seed, status, timings, result, error=None):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return {
        "command": command,
        "status": status,
        "seed": seed,
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "resolved_config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "defaults_applied": {k: _lookup(cfg, k) for k in defaulted},
        "versions": {"invmetric": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timings_s": timings,
        "result": result,
        "error": error,
    }


def _lookup(cfg, dotted):
    cur = cfg
    for part in dotted.split("."):
        cur = cur[part]
    return cur


def run(config_path, command=None, out=None, seed=0) -> int:
    try:
        cfg, defaulted, text = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    commands = [command] if command else cfg["commands"]
    if not commands:
        print("config error: no command given and the config lists none", file=sys.stderr)
        return 1
    bad = [c for c in commands if c not in HANDLERS]
    if bad:
        print(f"config error: unknown command {bad[0]!r}; choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return 1
    outdir = Path(out if out is not None else cfg["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    status = 0
    timings = {}
    results = {}
    error = None
    t0 = time.perf_counter()
    try:
        ctx = Context(cfg, seed)
        timings["setup"] = time.perf_counter() - t0
        for c in commands:
            t = time.perf_counter()
            try:
                results[c] = HANDLERS[c](ctx, outdir)
            except ToleranceFailure as exc:
                status = max(status, 2)
                results[c] = {"tolerance_failure": exc.invariant}
                print(f"{c}: tolerance failure: {exc}", file=sys.stderr)
            timings[c] = time.perf_counter() - t
    except (InvMetricError, ValueError, KeyError) as exc:
        status = 1
        error = f"{type(exc).__name__}: {exc}"
        print(f"error: {error}", file=sys.stderr)
    label = commands[0] if len(commands) == 1 else "+".join(commands)
    _write_json(outdir / "manifest.json", _manifest(cfg, text, defaulted, label, seed, status, timings,
                                                    results, error))
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="invmetric", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--command", choices=COMMANDS, help="command to run (default: the config's list)")
    ap.add_argument("--out", help="output directory (default: the config's output_dir)")
    ap.add_argument("--seed", type=int, default=0, help="seed for sample points (u64)")
    args = ap.parse_args(argv)
    if not 0 <= args.seed < 2**64:
        ap.error("--seed must be an unsigned 64-bit integer")
    return run(args.config, args.command, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
