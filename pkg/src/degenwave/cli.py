"""Configuration-driven experiments.

A run is described by one INI file::

    [experiment]
    kind = hum            ; analyze-weight | simulate | observability-sweep
                          ; | hum | convergence | decoupling
    seed = 0

    [weight]
    variant = SymmetricPower
    p = 0.5

    [parameters]
    T_factor = 1.2        ; T = T_factor * Ta (or give T directly)

Usage::

    degenwave run config.ini [--out DIR]
    degenwave validate config.ini

Every run writes ``manifest.json`` next to its outputs.  On failure the
process exits with status 1 and prints a JSON error record (also saved as
``error.json`` when the output directory is writable).
"""
from __future__ import annotations

import argparse
import ast
import configparser
import csv
import hashlib
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenwaveError

KINDS = ("analyze-weight", "simulate", "observability-sweep", "hum", "convergence", "decoupling")
VARIANTS = ("SymmetricPower", "TwoSidedPower", "Tabulated", "Constant")
DATA_KINDS = ("lowfreq", "smooth", "bump-left", "bump-right")

_SCHEMA = {
    "experiment": {"kind", "seed", "workers"},
    "weight": {"variant", "p", "p1", "p2", "file", "value"},
    "domain": {"c", "d", "x1star", "x2star"},
    "mesh": {"n", "grading", "interface", "a_floor"},
    "solver": {"scheme", "cfl_safety", "tol", "linear_solver", "nsteps"},
    "parameters": {"t", "t_factor", "p_list", "t_list", "n_list", "ensemble_size", "filter_frac",
                   "tol", "maxiter", "active", "data", "side"},
    "output": {"directory", "snapshot_stride"},
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    workers: int = 0
    weight: dict = field(default_factory=dict)
    domain: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    text: str = ""
    base_dir: str = "."

    @property
    def sha256(self):
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# parsing


def _read_ini(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: key outside of any [section]") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"line {exc.lineno}: {exc.message.splitlines()[0]}") from None
    except configparser.ParsingError as exc:
        raise ConfigError([f"line {ln}: expected 'key = value', got {_unrepr(line)!r}"
                           for ln, line in exc.errors]) from None
    return cp


def _unrepr(line):
    # configparser stores offending lines as repr strings
    try:
        return str(ast.literal_eval(line)).strip()
    except (ValueError, SyntaxError):
        return line.strip()


class _Collector:
    """Typed accessors that record problems instead of raising at the first one."""

    def __init__(self, cp):
        self.cp = cp
        self.problems = []

    def get(self, section, key, conv, default=None, required=False):
        if not self.cp.has_option(section, key):
            if required:
                self.problems.append(f"[{section}] {key} is required")
            return default
        raw = self.cp.get(section, key).strip()
        try:
            return conv(raw)
        except (TypeError, ValueError):
            self.problems.append(f"[{section}] {key} = {raw!r} is not a valid {conv.__name__}")
            return default


def _float_list(raw):
    return [float(v) for v in raw.replace(",", " ").split()]


_float_list.__name__ = "list of numbers"


def _int_list(raw):
    return [int(v) for v in raw.replace(",", " ").split()]


_int_list.__name__ = "list of integers"


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    cp = _read_ini(text)
    problems = []
    for sec in cp.sections():
        allowed = _SCHEMA.get(sec)
        if allowed is None:
            problems.append(f"unknown section [{sec}]")
            continue
        for key in cp.options(sec):
            if key not in allowed:
                problems.append(f"unknown key {key!r} in [{sec}]")
    g = _Collector(cp)
    kind = g.get("experiment", "kind", str, required=True)
    if kind is not None and kind not in KINDS:
        problems.append(f"[experiment] kind must be one of {', '.join(KINDS)}, got {kind!r}")
    cfg = ExperimentConfig(kind=kind or "", text=text, base_dir=str(base_dir))
    cfg.seed = g.get("experiment", "seed", int, 0)
    cfg.workers = g.get("experiment", "workers", int, 0)

    variant = g.get("weight", "variant", str, "SymmetricPower")
    cfg.weight = {"variant": variant}
    for key in ("p", "p1", "p2", "value"):
        val = g.get("weight", key, float)
        if val is not None:
            cfg.weight[key] = val
    if cp.has_option("weight", "file"):
        cfg.weight["file"] = cp.get("weight", "file").strip()

    for key in ("c", "d", "x1star", "x2star"):
        val = g.get("domain", key, float)
        if val is not None:
            cfg.domain[key] = val
    cfg.mesh = {
        "N": g.get("mesh", "n", int, 512),
        "grading": g.get("mesh", "grading", float, 1.0),
        "interface": g.get("mesh", "interface", str, "auto"),
        "a_floor": g.get("mesh", "a_floor", float, 0.0),
    }
    cfg.solver = {
        "scheme": g.get("solver", "scheme", str, "midpoint"),
        "cfl_safety": g.get("solver", "cfl_safety", float, 0.9),
        "tol": g.get("solver", "tol", float, 1e-12),
        "linear_solver": g.get("solver", "linear_solver", str, "direct"),
        "nsteps": g.get("solver", "nsteps", int),
    }
    cfg.params = {
        "T": g.get("parameters", "t", float),
        "T_factor": g.get("parameters", "t_factor", float),
        "p_list": g.get("parameters", "p_list", _float_list),
        "T_list": g.get("parameters", "t_list", _float_list),
        "N_list": g.get("parameters", "n_list", _int_list),
        "ensemble_size": g.get("parameters", "ensemble_size", int, 16),
        "filter_frac": g.get("parameters", "filter_frac", float, 0.25),
        "tol": g.get("parameters", "tol", float, 1e-8),
        "maxiter": g.get("parameters", "maxiter", int, 500),
        "active": g.get("parameters", "active", str, "Both"),
        "data": g.get("parameters", "data", str, "lowfreq"),
        "side": g.get("parameters", "side", str, "right"),
    }
    cfg.output = {
        "directory": g.get("output", "directory", str, "degenwave-out"),
        "snapshot_stride": g.get("output", "snapshot_stride", int, 0),
    }
    if (cfg.kind == "observability-sweep" and cfg.params["p_list"]
            and not cp.has_section("weight")):
        # the family comes from p_list; no separate weight is needed
        cfg.weight = {"variant": "SymmetricPower", "p": cfg.params["p_list"][0]}
    problems += g.problems
    problems += _semantic_problems(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _semantic_problems(cfg):
    out = []
    w = cfg.weight
    v = w.get("variant")
    if v not in VARIANTS:
        out.append(f"[weight] variant must be one of {', '.join(VARIANTS)}, got {v!r}")
    elif v == "SymmetricPower":
        p = w.get("p")
        if p is None:
            out.append("[weight] p is required for SymmetricPower")
        elif not 0 < p < 2:
            out.append(f"[weight] p = {p}: the degeneracy exponent mu = p must lie in (0, 2)")
    elif v == "TwoSidedPower":
        for key in ("p1", "p2"):
            val = w.get(key)
            if val is None:
                out.append(f"[weight] {key} is required for TwoSidedPower")
            elif not 0 < val < 1:
                out.append(f"[weight] {key} = {val}: the degeneracy exponent mu = 2*{key} "
                           f"must lie in (0, 2)")
    elif v == "Tabulated" and "file" not in w:
        out.append("[weight] file is required for Tabulated")
    elif v == "Constant" and not w.get("value", 1.0) > 0:
        out.append("[weight] value must be positive")
    if v != "Tabulated" and "file" in w:
        out.append("[weight] file is only meaningful for Tabulated")

    from .weights import DomainSpec
    try:
        DomainSpec(**cfg.domain)
    except DegenwaveError as exc:
        out.append(f"[domain] {exc}")

    N = cfg.mesh["N"]
    if N is not None and (N < 8 or N % 2):
        out.append(f"[mesh] N = {N}: N must be an even integer >= 8 so that x = 1 is a mesh node")
    if cfg.mesh["grading"] is not None and cfg.mesh["grading"] < 1:
        out.append("[mesh] grading must be >= 1")
    if cfg.mesh["interface"] not in ("auto", "shared", "split"):
        out.append("[mesh] interface must be auto, shared or split")
    if cfg.solver["scheme"] not in (None, "midpoint", "leapfrog"):
        out.append("[solver] scheme must be midpoint or leapfrog")
    if cfg.solver["linear_solver"] not in (None, "direct", "pcg"):
        out.append("[solver] linear_solver must be direct or pcg")
    cs = cfg.solver["cfl_safety"]
    if cs is not None and not 0 < cs <= 1:
        out.append("[solver] cfl_safety must lie in (0, 1]")

    p = cfg.params
    kind = cfg.kind
    if p["T"] is not None and p["T_factor"] is not None:
        out.append("[parameters] give either T or T_factor, not both")
    if p["T"] is not None and not p["T"] > 0:
        out.append("[parameters] T must be positive")
    if p["T_factor"] is not None and not p["T_factor"] > 0:
        out.append("[parameters] T_factor must be positive")
    if kind in ("simulate", "hum", "convergence", "decoupling") and p["T"] is None \
            and p["T_factor"] is None:
        out.append(f"[parameters] T or T_factor is required for {kind}")
    if p["T_factor"] is not None and v == "Constant":
        out.append("[parameters] T_factor needs a degenerate weight (Ta is undefined otherwise)")
    if p["ensemble_size"] is not None and p["ensemble_size"] < 1:
        out.append("[parameters] ensemble_size must be >= 1")
    ff = p["filter_frac"]
    if ff is not None and not 0 < ff <= 1:
        out.append("[parameters] filter_frac must lie in (0, 1]")
    if p["maxiter"] is not None and p["maxiter"] < 1:
        out.append("[parameters] maxiter must be >= 1")
    if p["active"] not in (None, "Both", "RightOnly"):
        out.append("[parameters] active must be Both or RightOnly")
    if p["data"] not in (None,) + DATA_KINDS:
        out.append(f"[parameters] data must be one of {', '.join(DATA_KINDS)}")
    if p["side"] not in (None, "left", "right"):
        out.append("[parameters] side must be left or right")
    if kind == "observability-sweep":
        if not p["T_list"]:
            out.append("[parameters] T_list is required for observability-sweep")
        for val in p["p_list"] or []:
            if not 0 < val < 2:
                out.append(f"[parameters] p_list entry {val}: mu = p must lie in (0, 2)")
        if v == "Constant":
            out.append("observability-sweep needs a degenerate weight")
    if kind in ("convergence", "decoupling"):
        Ns = p["N_list"]
        if Ns is not None:
            if len(set(Ns)) != len(Ns):
                out.append("[parameters] N_list entries must be distinct")
            if any(n < 8 or n % 2 for n in Ns):
                out.append("[parameters] N_list entries must be even integers >= 8 so that "
                           "x = 1 is a mesh node")
        if kind == "convergence" and Ns is not None and len(Ns) < 3:
            out.append("[parameters] convergence needs at least three N_list entries")
    if cfg.workers is not None and cfg.workers < 0:
        out.append("[experiment] workers must be >= 0")
    if cfg.output["snapshot_stride"] is not None and cfg.output["snapshot_stride"] < 0:
        out.append("[output] snapshot_stride must be >= 0")
    return out


# --------------------------------------------------------------------------
# building blocks


def build_weight(cfg: ExperimentConfig):
    from .weights import ConstantWeight, SymmetricPower, Tabulated, TwoSidedPower

    w = cfg.weight
    v = w["variant"]
    if v == "SymmetricPower":
        return SymmetricPower(w["p"])
    if v == "TwoSidedPower":
        return TwoSidedPower(w["p1"], w["p2"])
    if v == "Constant":
        return ConstantWeight(w.get("value", 1.0))
    path = Path(cfg.base_dir) / w["file"]
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"[weight] cannot read {path}: {exc.strerror}") from None
    return Tabulated.from_text(text)


def build_domain(cfg):
    from .weights import DomainSpec
    return DomainSpec(**cfg.domain)


def _horizon(cfg, w, dom):
    p = cfg.params
    if p["T"] is not None:
        return p["T"]
    from .weights import analyze
    return p["T_factor"] * analyze(w, dom).Ta


def _mesh(cfg, w, dom, N=None):
    from .mesh import build_mesh
    m = cfg.mesh
    return build_mesh(dom, N or m["N"], w, m["grading"], m["a_floor"], m["interface"])


def _initial_data(cfg, ops, kind=None):
    from .observability import low_frequency_ensemble
    from .oracle import one_sided_bump

    kind = kind or cfg.params["data"]
    if kind == "lowfreq":
        Y0, Y1 = low_frequency_ensemble(ops, 1, cfg.seed, cfg.params["filter_frac"])
        return Y0[0], Y1[0]
    if kind == "smooth":
        return smooth_data(ops.x, ops.mesh.dom)
    side = "left" if kind == "bump-left" else "right"
    y0 = one_sided_bump(ops, side)
    return y0, np.zeros_like(y0)


def smooth_data(x, dom):
    """Fixed smooth data vanishing at both ends (mesh independent)."""
    s = (np.asarray(x) - dom.c) / (dom.d - dom.c)
    y0 = np.sin(math.pi * s) + 0.5 * np.sin(3 * math.pi * s)
    y1 = 0.7 * np.sin(2 * math.pi * s)
    y0[[0, -1]] = 0.0
    y1[[0, -1]] = 0.0
    return y0, y1


class _Writer:
    """Creates output files and remembers them for the manifest."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for row in rows:
                wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        elif isinstance(v, np.bool_):
            v = bool(v)
        out[k] = v
    return out


# --------------------------------------------------------------------------
# experiments


def _run_analyze(cfg, out):
    from .weights import analyze, envelope_lower_bounds

    w = build_weight(cfg)
    dom = build_domain(cfg)
    rep = analyze(w, dom)
    out.json("report.json", _jsonable(rep.to_dict()))
    x = np.linspace(dom.c, dom.d, 257)
    a = np.asarray(w.eval(x)[0])
    glob, inner = envelope_lower_bounds(w, dom, x)
    out.csv("envelope.csv", ["x", "a", "bound_global", "bound_inner"], zip(x, a, glob, inner))


def _run_simulate(cfg, out):
    from .mesh import DiscreteOperators
    from .observability import observe
    from .solver import default_dt, solve_forward

    w = build_weight(cfg)
    dom = build_domain(cfg)
    T = _horizon(cfg, w, dom)
    ops = DiscreteOperators(_mesh(cfg, w, dom))
    y0, y1 = _initial_data(cfg, ops)
    s = cfg.solver
    stride = cfg.output["snapshot_stride"] or None
    dt = default_dt(ops, s["cfl_safety"])
    tr = solve_forward(ops, y0, y1, T, scheme=s["scheme"], dt=dt, nsteps=s["nsteps"],
                       store_stride=stride, linear_solver=s["linear_solver"], tol=s["tol"])
    tr.to_csv(out.path("trajectory.csv"))
    if stride:
        tr.dump_snapshots(out.path("snapshots.npz"))
    summary = {"T": T, "dt": tr.dt, "nsteps": len(tr.times) - 1, "scheme": tr.scheme,
               "E0": float(tr.energy[0]), "energy_drift": tr.energy_drift()}
    if tr.energy[0] > 0:
        summary["observation"] = observe(tr, w, dom).to_dict()
    out.json("summary.json", _jsonable(summary))


def _run_sweep(cfg, out):
    from .observability import strictly_decreasing, sweep, write_sweep
    from .weights import SymmetricPower

    dom = build_domain(cfg)
    p = cfg.params
    if p["p_list"]:
        family = [SymmetricPower(v) for v in p["p_list"]]
    else:
        family = [build_weight(cfg)]
    workers = cfg.workers or os.cpu_count() or 1
    kwargs = dict(N=cfg.mesh["N"], grading=cfg.mesh["grading"], ensemble_size=p["ensemble_size"],
                  seed=cfg.seed, filter_frac=p["filter_frac"])
    if workers > 1 and len(family) * len(p["T_list"]) > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = sweep(family, p["T_list"], dom, mapper=ex.map, **kwargs)
    else:
        rows = sweep(family, p["T_list"], dom, **kwargs)
    write_sweep(rows, out.path("sweep.csv"), out.path("Ta_curve.txt"))
    diag = {}
    for T in p["T_list"]:
        vals = [r.C_emp for r in rows if r.T == T]
        diag[repr(T)] = {"C_emp": vals, "strictly_decreasing": strictly_decreasing(vals)}
    out.json("sweep_summary.json", diag)


def _run_hum(cfg, out):
    from .hum import solve_hum
    from .mesh import DiscreteOperators

    w = build_weight(cfg)
    dom = build_domain(cfg)
    T = _horizon(cfg, w, dom)
    ops = DiscreteOperators(_mesh(cfg, w, dom))
    y0, y1 = _initial_data(cfg, ops)
    p = cfg.params
    controls, report = solve_hum(ops, y0, y1, T, tol=p["tol"], maxiter=p["maxiter"],
                                 filter_frac=p["filter_frac"], active=p["active"],
                                 nsteps=cfg.solver["nsteps"], weight=w)
    controls.to_csv(out.path("controls.csv"))
    d = report.to_dict()
    # keep the JSON flat: histories go to their own CSV
    hist = d.pop("residual_history")
    func = d.pop("functional_history")
    out.json("hum_report.json", _jsonable(d))
    out.csv("cg_history.csv", ["iteration", "relative_residual", "functional"],
            ((i, r, f) for i, (r, f) in enumerate(zip(hist, func))))


def _run_convergence(cfg, out):
    from .mesh import DiscreteOperators
    from .oracle import self_convergence, string_series
    from .solver import solve_forward

    w = build_weight(cfg)
    dom = build_domain(cfg)
    T = _horizon(cfg, w, dom)
    Ns = cfg.params["N_list"] or [128, 256, 512, 1024]

    def run(N):
        ops = DiscreteOperators(_mesh(cfg, w, dom, N))
        y0, y1 = smooth_data(ops.x, dom)
        tr = solve_forward(ops, y0, y1, T, scheme=cfg.solver["scheme"],
                           nsteps=cfg.solver["nsteps"] or N)
        return ops.x, tr.y_final, ops.mass

    reference = None
    if not getattr(w, "degenerate", True):
        series = string_series(dom, math.sqrt(w.value), lambda x: smooth_data(x, dom)[0],
                               lambda x: smooth_data(x, dom)[1])

        def reference(x):
            return series(T, x)

    tab = self_convergence(run, Ns, reference)
    rows = [(n, e, tab.orders[i - 1] if i else "")
            for i, (n, e) in enumerate(zip(tab.N, tab.errors))]
    out.csv("convergence.csv", ["N", "error", "order"], rows)
    out.json("convergence_summary.json",
              {"order": tab.order, "monotone": tab.monotone,
               "reference": "series" if reference else "successive-refinements"})


def _run_decoupling(cfg, out):
    from .oracle import decoupling_check

    w = build_weight(cfg)
    dom = build_domain(cfg)
    T = _horizon(cfg, w, dom)
    Ns = cfg.params["N_list"] or [256, 512, 1024]
    rows = []
    for N in Ns:
        mesh = _mesh(cfg, w, dom, N)
        res = decoupling_check(w, dom, mesh, T, side=cfg.params["side"])
        rows.append((N, "split" if mesh.split else "shared", res.max_leak, res.total_energy,
                     res.relative))
    out.csv("decoupling.csv", ["N", "interface", "max_leak", "total_energy", "relative"], rows)


_DISPATCH = {
    "analyze-weight": _run_analyze,
    "simulate": _run_simulate,
    "observability-sweep": _run_sweep,
    "hum": _run_hum,
    "convergence": _run_convergence,
    "decoupling": _run_decoupling,
}


def _versions():
    import scipy

    from . import __version__
    return {"degenwave": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Execute the experiment; returns the manifest (also written to disk)."""
    out = _Writer(out_dir or Path(cfg.base_dir) / cfg.output["directory"])
    _DISPATCH[cfg.kind](cfg, out)
    files = []
    for name in out.files:
        digest = hashlib.sha256((out.dir / name).read_bytes()).hexdigest()
        files.append({"path": name, "sha256": digest})
    manifest = {"experiment": cfg.kind, "config_sha256": cfg.sha256, "seed": cfg.seed,
                "versions": _versions(), "files": files}
    with open(out.dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _load(path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=p.parent)


def _fail(exc, out_dir=None):
    if isinstance(exc, DegenwaveError):
        rec = exc.to_dict()
    else:
        rec = {"error": type(exc).__name__, "message": str(exc)}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass
    return 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="degenwave", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run the experiment described by a config file")
    pr.add_argument("config")
    pr.add_argument("--out", help="output directory (overrides [output] directory)")
    pv = sub.add_parser("validate", help="check a config file and report every problem")
    pv.add_argument("config")
    args = ap.parse_args(argv)

    if args.command == "validate":
        try:
            cfg = _load(args.config)
        except DegenwaveError as exc:
            return _fail(exc)
        print(json.dumps({"valid": True, "experiment": cfg.kind}))
        return 0

    out_dir = args.out
    try:
        cfg = _load(args.config)
        if out_dir is None:
            out_dir = Path(cfg.base_dir) / cfg.output["directory"]
        manifest = run(cfg, out_dir)
    except (DegenwaveError, ValueError, ArithmeticError) as exc:
        return _fail(exc, out_dir)
    print(json.dumps({"ok": True, "out": str(out_dir), "files": [f["path"] for f in manifest["files"]]}))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
