"""Command-line driver.

    anigraph --config run.yaml [--out DIR] [--seed N] [--threads N] [--quiet]

The config is YAML; its ``command`` key selects the pipeline.  Every run
writes ``manifest.json`` (config echo, version, wall time) and a
deterministic ``report.json`` plus pipeline CSVs.  Exit status: 0 when all
checks pass, 1 when a check fails, 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, SetupError
from .io import write_csv, write_grid, write_json, atomic_write_text, grid_to_csv, read_grid

logger = logging.getLogger("anigraph")

COMMANDS = ("verify-wulff", "solve", "barrier-check", "contact", "rigidity")
MIN_RESOLUTION = 17


# -- schema -------------------------------------------------------------------

def _f(default=None, lo=None, hi=None, required=False):
    return {"type": "float", "default": default, "min": lo, "max": hi, "required": required}


def _i(default=None, lo=None, required=False):
    return {"type": "int", "default": default, "min": lo, "required": required}


def _s(default=None, choices=None, required=False):
    return {"type": "str", "default": default, "choices": choices, "required": required}


def _b(default=False):
    return {"type": "bool", "default": default}


def _l(default=None, length=None):
    return {"type": "floats", "default": default, "length": length}


def _m(fields, default=None):
    return {"type": "map", "fields": fields, "default": default if default is not None else {}}


INTEGRAND = _m({
    "family": _s("isotropic", ("isotropic", "ellipsoidal", "perturbed-isotropic")),
    "dim": _i(3, 2),
    "matrix": {"type": "matrix", "default": None},
    "amplitude": _f(0.05, 0.0),
    "frequency": _f(2.0),
    "axis": _l(None),
    "phase": _f(0.0),
    "flip": _b(False),
})

SCHEMA = _m({
    "command": _s(None, COMMANDS, required=True),
    "integrand": INTEGRAND,
    "resolution": _i(None, MIN_RESOLUTION),
    "seed": _i(0, 0),
    "output": _s("out"),
    "tolerances": _m({"tol_res": _f(None, 0.0), "tol_step": _f(None, 0.0),
                      "max_iter": _i(60, 1)}),
    "verify": _m({"directions": _i(1000, 10), "calibration_a": _i(500, 1),
                  "calibration_b": _i(100, 1), "ellipticity_bound": _f(1.0, 0.0),
                  "tolerance": _f(1e-5, 0.0)}),
    "solve": _m({
        "domain": _m({"kind": _s("rectangle", ("interval", "rectangle", "disk", "half-disk",
                                               "slab", "wedge")),
                      "bounds": _l([-1.0, 1.0, -1.0, 1.0]), "radius": _f(1.0, 0.0),
                      "width": _f(4.0, 0.0), "opening": _f(np.pi / 2, 0.0, np.pi)}),
        "data": _m({"kind": _s("affine", ("affine", "scherk", "grid")),
                    "constant": _f(0.0), "slope": _l([0.0, 0.0]), "scale": _f(1.0, 0.0),
                    "path": _s(None)}),
        "placement": _s("node", ("node", "project")),
        "tolerance": _f(1e-9, 0.0),
    }),
    "barrier": _m({"lam": _f(None, 0.0, 1.0), "gradient_bound": _f(1.0, 0.0),
                   "n": _i(2, 1), "delta": _f(0.1, 0.0, 1.0 / 3.0), "sweep": _i(1000, 10),
                   "lams": _l([0.3, 0.5, 0.8]), "epsilon": _b(True)}),
    "contact": _m({"delta": _f(0.05, 0.0), "C2": _f(0.1, 0.0), "C3": _f(None, 0.0),
                   "amplitude": _f(1e-3, 0.0), "band": _l([0.1, 2.0], 2),
                   "surface": _s("pinched", ("pinched", "flat")),
                   "slope_cap": _f(4.0, 0.0)}),
    "rigidity": _m({
        "case": _s("C", ("A", "B", "C")), "radii": _l([4.0, 8.0, 16.0]), "R0": _f(4.0, 0.0),
        "slope": _l([0.0, 0.0], 2), "A": _f(0.0), "far_kind": _s("bounded", ("none", "bounded",
                                                                           "superlinear")),
        "amplitude": _f(1.0), "width": _f(4.0, 0.0), "opening": _f(np.pi / 2, 0.0, np.pi),
        "hopf": _b(False),
        "excision": _m({"enabled": _b(False), "eps": _f(0.02, 0.0), "half_width": _f(0.1, 0.0),
                        "radius": _f(1.0, 0.0), "h": _f(0.002, 0.0)}),
    }),
})


def schema_text(spec=SCHEMA, indent=0):
    """Human-readable schema listing."""
    lines = []
    for key, sub in spec["fields"].items():
        pad = "  " * indent
        if sub["type"] == "map":
            lines.append(f"{pad}{key}:")
            lines.append(schema_text(sub, indent + 1))
            continue
        extra = []
        if sub.get("choices"):
            extra.append("one of " + "|".join(sub["choices"]))
        if sub.get("min") is not None:
            extra.append(f">= {sub['min']}")
        if sub.get("max") is not None:
            extra.append(f"<= {sub['max']}")
        if sub.get("required"):
            extra.append("required")
        else:
            extra.append(f"default {sub.get('default')!r}")
        lines.append(f"{pad}{key}: {sub['type']}  ({', '.join(extra)})")
    return "\n".join(lines)


def _line(node):
    return node.start_mark.line + 1


def _scalar(node, spec, path):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{path}: expected a scalar", _line(node))
    value = yaml.safe_load(yaml.serialize(node))
    t = spec["type"]
    if t == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false", _line(node))
        return value
    if t == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer", _line(node))
    elif t == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number", _line(node))
        value = float(value)
    elif t == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string", _line(node))
        if spec.get("choices") and value not in spec["choices"]:
            raise ConfigError(f"{path}: {value!r} is not one of {', '.join(spec['choices'])}",
                              _line(node))
    if spec.get("min") is not None and value < spec["min"]:
        raise ConfigError(f"{path}: {value} is below the minimum {spec['min']}", _line(node))
    if spec.get("max") is not None and value > spec["max"]:
        raise ConfigError(f"{path}: {value} is above the maximum {spec['max']}", _line(node))
    return value


def _floats(node, path):
    if not isinstance(node, yaml.SequenceNode):
        raise ConfigError(f"{path}: expected a list of numbers", _line(node))
    out = []
    for item in node.value:
        out.append(_scalar(item, {"type": "float"}, path))
    return out


def _check(node, spec, path):
    t = spec["type"]
    if isinstance(node, yaml.ScalarNode) and node.tag == "tag:yaml.org,2002:null":
        if spec.get("required"):
            raise ConfigError(f"{path}: value required", _line(node))
        return spec.get("default") if t != "map" else _defaults(spec)
    if t == "map":
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{path or 'config'}: expected a mapping", _line(node))
        out = {}
        seen = set()
        for knode, vnode in node.value:
            key = knode.value
            sub_path = f"{path}.{key}" if path else key
            if key in seen:
                raise ConfigError(f"duplicate key {sub_path!r}", _line(knode))
            seen.add(key)
            if key not in spec["fields"]:
                raise ConfigError(f"unknown key {sub_path!r}", _line(knode))
            out[key] = _check(vnode, spec["fields"][key], sub_path)
        for key, sub in spec["fields"].items():
            if key not in out:
                if sub.get("required"):
                    raise ConfigError(f"missing required key {(path + '.' if path else '') + key!r}",
                                      _line(node))
                out[key] = _defaults(sub) if sub["type"] == "map" else sub.get("default")
        return out
    if t == "floats":
        vals = _floats(node, path)
        if spec.get("length") is not None and len(vals) != spec["length"]:
            raise ConfigError(f"{path}: expected {spec['length']} numbers", _line(node))
        return vals
    if t == "matrix":
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{path}: expected a list of rows", _line(node))
        rows = [_floats(r, path) for r in node.value]
        if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
            raise ConfigError(f"{path}: matrix must be square", _line(node))
        return rows
    return _scalar(node, spec, path)


def _defaults(spec):
    return {k: (_defaults(s) if s["type"] == "map" else s.get("default"))
            for k, s in spec["fields"].items()}


def parse_config(text):
    """Validate YAML text against the schema; returns a plain dict with defaults filled in."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError("empty config", 1)
    cfg = _check(node, SCHEMA, "")
    if cfg["command"] == "solve" and cfg["solve"]["data"]["kind"] == "grid":
        path = cfg["solve"]["data"]["path"]
        if not path or not Path(path).is_file():
            raise ConfigError(f"solve.data.path: file {path!r} does not exist", _find_line(node, "path"))
    if cfg["integrand"]["family"] == "ellipsoidal" and cfg["integrand"]["matrix"] is None:
        raise ConfigError("integrand.matrix is required for the ellipsoidal family",
                          _find_line(node, "integrand"))
    return cfg


def _find_line(node, key):
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            if k.value == key:
                return _line(k)
            found = _find_line(v, key)
            if found:
                return found
    return None


# -- pipelines ----------------------------------------------------------------

class Checks:
    """Named pass/fail assertions collected during a run."""

    def __init__(self):
        self.items = {}

    def add(self, name, ok, detail=None):
        self.items[name] = {"pass": bool(ok), "detail": detail}
        if not ok:
            logger.error("check failed: %s (%s)", name, detail)

    @property
    def ok(self):
        return all(v["pass"] for v in self.items.values())

    def failed(self):
        return [k for k, v in self.items.items() if not v["pass"]]


def build_integrand(spec):
    from .wulff import AnisotropyIntegrand

    fam = spec["family"]
    if fam == "isotropic":
        phi = AnisotropyIntegrand.isotropic(spec["dim"])
    elif fam == "ellipsoidal":
        phi = AnisotropyIntegrand.ellipsoidal(np.array(spec["matrix"]))
    else:
        phi = AnisotropyIntegrand.perturbed(spec["dim"], spec["amplitude"], spec["frequency"],
                                            spec["axis"], spec["phase"])
    return phi.flipped() if spec["flip"] else phi


def _solver_kwargs(cfg):
    t = cfg["tolerances"]
    return {"tol_res": t["tol_res"], "tol_step": t["tol_step"], "max_iter": t["max_iter"]}


def run_verify(cfg, phi, rng, out, checks):
    from . import wulff as W

    v = cfg["verify"]
    tol = v["tolerance"]
    d = phi.dim
    X = rng.normal(size=(v["directions"], d))
    U = X / np.linalg.norm(X, axis=-1, keepdims=True)
    report = {}
    hom = 0.0
    for t in (0.5, 2.0, 10.0):
        hom = max(hom, float(np.max(np.abs(phi.value(t * U) - t * phi.value(U)) / (t * phi.value(U)))))
    checks.add("one-homogeneity", hom <= 1e-10, hom)
    Hs = phi.hessian(U)
    ker = float(np.max(np.linalg.norm(np.einsum("...ij,...j->...i", Hs, U), axis=-1)
                       / np.linalg.norm(Hs, axis=(-2, -1))))
    checks.add("hessian kernel", ker <= 1e-8, ker)
    sample = U[: min(len(U), 50)]
    nerr = max(float(np.linalg.norm(W.wulff_normal_fd(phi, nu) - nu)) for nu in sample[:20])
    checks.add("wulff normal identity", nerr <= tol, nerr)
    ff = 0.0
    for nu in sample[:10]:
        T = W.tangential_hessian(phi, nu).matrix
        II = W.wulff_second_fundamental_form_fd(phi, nu)
        ff = max(ff, float(np.max(np.abs(T @ II - np.eye(d - 1)))))
    checks.add("second fundamental form inverse", ff <= tol, ff)
    A = rng.normal(size=(v["calibration_a"], d))
    A /= np.linalg.norm(A, axis=-1, keepdims=True)
    B = rng.normal(size=(v["calibration_b"], d))
    B /= np.linalg.norm(B, axis=-1, keepdims=True)
    slack = float(np.min(phi.value(A)[:, None] - A @ phi.gradient(B).T))
    checks.add("calibration inequality", slack >= -1e-10, slack)
    eq = float(np.max(np.abs(np.einsum("ij,ij->i", phi.gradient(A), A) - phi.value(A))))
    checks.add("calibration equality at b = a", eq <= 1e-10, eq)
    Z = rng.normal(size=(100, d - 1))
    step = 1e-4
    _, G, H = W.graph_integrand(phi, Z)
    fd_err = 0.0
    for k in range(d - 1):
        e = np.zeros(d - 1)
        e[k] = step
        Gp = W.graph_integrand(phi, Z + e)[1]
        Gm = W.graph_integrand(phi, Z - e)[1]
        fd = (Gp - Gm) / (2 * step)
        fd_err = max(fd_err, float(np.max(np.abs(fd - H[:, :, k]) / np.linalg.norm(H, axis=(-2, -1))[:, None])))
    checks.add("graph integrand derivatives", fd_err <= 1e-6, fd_err)
    bounds = W.ellipticity_bounds(phi, v["ellipticity_bound"])
    report.update({"homogeneity_error": hom, "kernel_error": ker, "normal_error": nerr,
                   "second_form_error": ff, "calibration_slack": slack,
                   "calibration_equality_error": eq, "graph_derivative_error": fd_err,
                   "ellipticity": {"lam_min": bounds.lam_min, "lam_max": bounds.lam_max,
                                   "pucci_lambda": bounds.pucci_lambda},
                   "curvature_radius_bounds": list(W.curvature_radius_bounds(phi))})
    return report


def _solve_domain(spec):
    from . import graph_pde as G

    kind = spec["kind"]
    b = spec["bounds"]
    if kind == "interval":
        return G.interval_domain(b[0], b[1])
    if kind == "rectangle":
        if len(b) != 4:
            raise SetupError("rectangle bounds need 4 numbers")
        return G.rectangle_domain(*b)
    if kind == "disk":
        return G.disk_domain(spec["radius"])
    if kind == "half-disk":
        return G.half_disk_domain(spec["radius"])
    if kind == "slab":
        return G.slab_domain(spec["width"], spec["radius"])
    return G.wedge_domain(spec["opening"], spec["radius"])


def run_solve(cfg, phi, rng, out, checks):
    from . import graph_pde as G

    s = cfg["solve"]
    dom = _solve_domain(s["domain"])
    n = len(dom.lo)
    if phi.dim != n + 1:
        raise SetupError(f"integrand dimension {phi.dim} does not match a {n}-dimensional domain")
    res = cfg["resolution"] or 65
    h = float(max(np.subtract(dom.hi, dom.lo))) / (res - 1)
    data = s["data"]
    exact = None
    if data["kind"] == "affine":
        slope = np.asarray(data["slope"][:n])
        exact = lambda X: data["constant"] + X @ slope  # noqa: E731
        fn = exact
    elif data["kind"] == "scherk":
        if phi.family != "isotropic":
            raise SetupError("Scherk data is an exact solution only for the isotropic integrand")
        a = data["scale"]
        exact = lambda X: (np.log(np.cos(a * X[..., 0])) - np.log(np.cos(a * X[..., 1]))) / a  # noqa: E731
        fn = exact
    else:
        src = read_grid(data["path"])

        def fn(X):
            vals, ok = G.interpolate(src, X)
            if not np.all(ok):
                raise SetupError("boundary nodes fall outside the data grid")
            return vals
    g = G.discretize(dom, h, fn, s["placement"])
    sol, rep = G.solve_dirichlet(phi, g, **_solver_kwargs(cfg))
    checks.add("solver convergence", rep.converged, rep.message)
    excess = G.max_principle_excess(sol)
    checks.add("discrete maximum principle", excess <= 1e-9 * max(sol.data_range(), 1.0), excess)
    report = {"h": h, "shape": list(sol.shape), "solve": rep.to_dict(), "max_principle_excess": excess}
    if exact is not None:
        X = sol.coords()[sol.valid]
        err = float(np.max(np.abs(sol.values[sol.valid] - exact(X))))
        report["max_error"] = err
        if data["kind"] == "affine":
            checks.add("affine exactness", err <= s["tolerance"], err)
    write_grid(out / "solution.wgrf", sol)
    grid_to_csv(out / "solution.csv", sol)
    return report


def run_barrier(cfg, phi, rng, out, checks):
    from . import elliptic as E
    from .wulff import ellipticity_bounds

    b = cfg["barrier"]
    lam = b["lam"]
    if lam is None:
        lam = ellipticity_bounds(phi, b["gradient_bound"]).pucci_lambda
    params = E.PucciParams(lam)
    spec = E.choose_barrier_exponent(params, b["n"], b["delta"], count=b["sweep"])
    radii, vals, pv = E.barrier_sweep(params, spec, count=b["sweep"])
    checks.add("pucci sweep positive", bool(np.all(pv > 0)), float(pv.min()))
    ring = float(spec.radial(1.0 / 3.0))
    checks.add("barrier exceeds 1 on the 1/3 sphere", ring > 1.0, ring)
    consistency = {}
    for L in b["lams"]:
        m = E.choose_barrier_exponent(E.PucciParams(L), b["n"], b["delta"], count=b["sweep"]).M
        thr = E.analytic_exponent_threshold(L, b["n"])
        consistency[fmt_key(L)] = {"numeric": m, "analytic": thr}
        checks.add(f"analytic threshold lam={fmt_key(L)}", m == thr, {"numeric": m, "analytic": thr})
    report = {"lam": lam, "M": spec.M, "delta": spec.delta, "n": b["n"],
              "phi0_on_third_sphere": ring, "pucci_min": float(pv.min()),
              "threshold_consistency": consistency}
    if b["epsilon"] and b["n"] == phi.dim - 1:
        res = cfg["resolution"] or 129
        report["epsilon0"] = E.barrier_epsilon0(phi, spec, h=2.0 / (res - 1))
    write_csv(out / "barrier_sweep.csv", ["radius", "phi0", "pucci"],
              [[r, v, p] for r, v, p in zip(radii.tolist(), vals.tolist(), pv.tolist())])
    atomic_write_text(out / "barrier_sweep.gp", _gnuplot("barrier_sweep.csv", "radius", [2, 3],
                                                         ["phi0", "Pucci"]))
    return report


def fmt_key(x):
    return format(float(x), "g")


def run_contact(cfg, phi, rng, out, checks):
    from . import contact as C
    from .graph_pde import discretize, disk_domain

    c = cfg["contact"]
    res = cfg["resolution"] or 257
    h = 2.0 / (res - 1)
    if c["surface"] == "flat":
        g = discretize(disk_domain(1.0), h, lambda X: np.full(len(X), c["amplitude"]))
        g.values[g.valid] = c["amplitude"]
    else:
        g, rep = C.pinched_test_surface(phi, h, c["amplitude"])
        checks.add("surface solve", rep.converged, rep.message)
    try:
        records, summary = C.run_contact_experiment(phi, g, c["delta"], c["C2"], c["C3"],
                                                    slope_cap=c["slope_cap"])
    except SetupError as exc:
        checks.add("contacts stay in the cylinder over B_1/3", False, str(exc))
        return {"error": str(exc)}
    good = [r for r in records if not r.flagged]
    det_max = max((r.jacobian_det for r in good), default=0.0)
    checks.add("det D_x y <= 1", det_max <= 1 + 1e-6 + 10 * h, det_max)
    rel = max((float(np.linalg.norm(r.center - (r.contact - summary.r * phi.gradient(r.normal))))
               for r in records), default=0.0)
    checks.add("center relation y = x - r grad Phi(nu)", rel <= 1e-8 * summary.r, rel)
    ratio = summary.deficit / np.sqrt(c["delta"])
    lo, hi = c["band"]
    checks.add("deficit / sqrt(delta) within band", lo <= ratio <= hi, ratio)
    write_csv(out / "contacts.csv", C.CSV_HEADER, [r.row() for r in records])
    summ = summary.to_dict()
    write_json(out / "contact_summary.json", summ)
    return {"h": h, "summary": summ, "records": len(records), "unflagged": len(good)}


def run_rigidity(cfg, phi, rng, out, checks):
    from . import rigidity as Rg
    from .io import write_csv as wcsv

    r = cfg["rigidity"]
    R0 = r["R0"]
    res = cfg["resolution"] or 65
    h = 2.0 * R0 / (res - 1)
    base = Rg.HalfSpaceSetup(r["case"], float(r["radii"][0]), tuple(r["slope"]), 0.0, r["A"],
                             r["far_kind"], r["amplitude"], r["width"], r["opening"])
    rows = []
    for R in r["radii"]:
        s = Rg.HalfSpaceSetup(base.case, float(R), base.slope, 0.0, base.A, base.far_kind,
                              base.amplitude, base.width, base.opening)
        rep, _ = Rg.bernstein_experiment(phi, s, h=h, R0=R0, hopf=r["hopf"],
                                         solver_options=_solver_kwargs(cfg))
        checks.add(f"solver convergence R={fmt_key(R)}", rep.converged, rep.solve["message"])
        rows.append(rep)
    dev = [rep.deviation for rep in rows]
    if r["far_kind"] == "none" or r["amplitude"] == 0.0:
        for rep in rows:
            tol = 10 * rep.solve["tol_res"]
            checks.add(f"affine deviation R={fmt_key(rep.setup['R'])}", rep.deviation <= tol,
                       rep.deviation)
    elif r["far_kind"] == "bounded" and len(rows) > 1:
        checks.add("d(R) strictly decreasing", Rg.strictly_decreasing(dev), dev)
        widths = [rep.core_envelope.get("width", np.nan) for rep in rows]
        checks.add("slope envelope width decreasing", Rg.strictly_decreasing(widths), widths)
    if r["hopf"]:
        for rep in rows:
            for k, hres in rep.hopf.items():
                checks.add(f"hopf improvement R={fmt_key(rep.setup['R'])} k={k}", hres["improved"],
                           hres["eps"])
    table = Rg.decay_table(rows)
    report = {"h": h, "experiments": [rep.to_dict() for rep in rows], "decay": table}
    ex = r["excision"]
    if ex["enabled"]:
        res_ex = Rg.sigmoid_excision(phi, ex["eps"], ex["half_width"], ex["radius"], ex["h"])
        ref = np.pi * ex["radius"] ** 2 * float(phi.value(np.array([-1.0, 0.0, 0.0])))
        checks.add("sheet area >= 0.9 |B| Phi(-e1)", res_ex.sheet_area >= 0.9 * ref,
                   res_ex.sheet_area / ref)
        face_err = abs(res_ex.replacement_area - res_ex.lateral_area - ref)
        checks.add("replacement minus lateral equals |B| Phi(-e1)", face_err <= res_ex.budget, face_err)
        report["excision"] = res_ex.to_dict()
        wcsv(out / "excision.csv", ["sheet_area", "replacement_area", "face_area", "lateral_area",
                                    "gap", "h", "budget"],
             [[res_ex.sheet_area, res_ex.replacement_area, res_ex.face_area, res_ex.lateral_area,
               res_ex.gap, res_ex.half_width, res_ex.budget]])
    wcsv(out / "decay.csv", ["R", "d", "A_minus", "A_plus"], table)
    atomic_write_text(out / "decay.gp", _gnuplot("decay.csv", "R", [2], ["d(R)"], logy=True))
    return report


def _gnuplot(csv_name, xlabel, columns, titles, logy=False):
    lines = ["set datafile separator ','", "set key autotitle columnhead", f"set xlabel '{xlabel}'"]
    if logy:
        lines.append("set logscale y")
    plots = [f"'{csv_name}' using 1:{c} with linespoints title '{t}'" for c, t in zip(columns, titles)]
    lines.append("plot " + ", ".join(plots))
    return "\n".join(lines) + "\n"


PIPELINES = {"verify-wulff": run_verify, "solve": run_solve, "barrier-check": run_barrier,
             "contact": run_contact, "rigidity": run_rigidity}


def run(cfg, out, seed=None, threads=None):
    """Execute a validated config; returns ``(status, report)``."""
    from threadpoolctl import threadpool_limits

    seed = cfg["seed"] if seed is None else seed
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    checks = Checks()
    t0 = time.perf_counter()
    with threadpool_limits(limits=threads):
        phi = build_integrand(cfg["integrand"])
        body = PIPELINES[cfg["command"]](cfg, phi, rng, out, checks)
    wall = time.perf_counter() - t0
    report = {"command": cfg["command"], "seed": seed, "integrand": phi.to_dict(),
              "results": body, "checks": checks.items, "pass": checks.ok,
              "failed": checks.failed()}
    write_json(out / "report.json", report)
    manifest = {"config": cfg, "version": __version__, "seed": seed, "threads": threads,
                "wall_time_s": wall, "python": platform.python_version(),
                "numpy": np.__version__, "artifacts": sorted(p.name for p in out.iterdir()
                                                            if p.name != "manifest.json")}
    write_json(out / "manifest.json", manifest)
    return (0 if checks.ok else 1), report


def main(argv=None):
    ap = argparse.ArgumentParser(prog="anigraph", description="Anisotropic minimal graph experiments.")
    ap.add_argument("--config", type=Path, help="YAML run configuration")
    ap.add_argument("--out", type=Path, help="output directory (overrides config 'output')")
    ap.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
    ap.add_argument("--threads", type=int, help="cap on BLAS/LAPACK threads")
    ap.add_argument("--quiet", action="store_true", help="only print errors")
    ap.add_argument("--print-schema", action="store_true", help="print the config schema and exit")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_schema:
        print(schema_text())
        return 0
    if args.config is None:
        ap.print_usage(sys.stderr)
        print("anigraph: error: --config is required", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("anigraph: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"anigraph: error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else Path(cfg["output"])
    try:
        status, report = run(cfg, out, args.seed, args.threads)
    except (SetupError, ValueError) as exc:
        print(f"anigraph: setup error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        for name, item in report["checks"].items():
            print(f"{'PASS' if item['pass'] else 'FAIL'}  {name}")
    if status:
        print("failed: " + ", ".join(report["failed"]), file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
