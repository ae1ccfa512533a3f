"""Boundary observation energies, the weighted observability inequality and
empirical observability constants.

The central quantity is the weighted observation

    (1 - c) a(c) int_0^T y_x(t, c)^2 dt + (d - 1) a(d) int_0^T y_x(t, d)^2 dt,

compared with the initial energy E(0).  For T above the critical time the
ratio is bounded below by (2 - mu) T - max(4, Ca^2) - poincare * mu.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import DegenwaveError
from .mesh import DiscreteOperators, Mesh
from .solver import MIDPOINT, Trajectory, default_nsteps, solve_forward
from .weights import DomainSpec, WeightSpec, analyze, observability_bound, observability_constant


class UndefinedRatioError(DegenwaveError, ValueError):
    kind = "undefined-ratio"


@dataclass(frozen=True)
class ObservabilityResult:
    """Observation energies of one trajectory.

    ``bound`` is the coefficient of E0 on the right of the weighted
    inequality (``nan`` for a nondegenerate weight), so the inequality reads
    ``weighted_obs >= bound * E0``.
    """

    obs_energy: float
    weighted_obs: float
    E0: float
    ratio: float
    bound: float

    def satisfied(self, slack=0.0):
        return self.weighted_obs >= (1.0 - slack) * self.bound * self.E0

    def to_dict(self):
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}


def _end_values(w, dom):
    a_c = float(w.eval(dom.c)[0])
    a_d = float(w.eval(dom.d)[0])
    return a_c, a_d


def _report_or_none(w, dom):
    if not getattr(w, "degenerate", True):
        return None
    return analyze(w, dom)


def observe(traj: Trajectory, w: WeightSpec, dom: DomainSpec, report=None) -> ObservabilityResult:
    """Trapezoidal time quadrature of the squared boundary derivative traces."""
    E0 = float(traj.energy[0])
    if not E0 > 0:
        raise UndefinedRatioError("initial energy is zero; the observation ratio is undefined")
    a_c, a_d = _end_values(w, dom)
    ic = trapezoid(traj.flux_c ** 2, traj.times)
    id_ = trapezoid(traj.flux_d ** 2, traj.times)
    weighted = (1.0 - dom.c) * a_c * ic + (dom.d - 1.0) * a_d * id_
    if report is None:
        report = _report_or_none(w, dom)
    bound = observability_bound(report, traj.T) if report is not None else math.nan
    return ObservabilityResult(obs_energy=float(ic + id_), weighted_obs=float(weighted), E0=E0,
                               ratio=float(weighted / E0), bound=float(bound))


def low_frequency_ensemble(ops: DiscreteOperators, size: int, seed: int, filter_frac: float = 0.25):
    """Random initial data built from the lowest ceil(filter_frac * N) eigenmodes.

    Each mode receives a standard normal displacement coefficient scaled by
    1/sqrt(lambda) and a standard normal velocity coefficient, so every mode
    carries the same expected energy.  Returns arrays ``Y0, Y1`` of shape
    (size, ndof); deterministic in ``seed``.
    """
    if size < 1:
        raise ValueError("ensemble_size must be at least 1")
    if not (0.0 < filter_frac <= 1.0):
        raise ValueError("filter_frac must lie in (0, 1]")
    count = math.ceil(filter_frac * ops.N)
    lam, phi = ops.eigenmodes(count)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((size, len(lam))) / np.sqrt(lam)
    b = rng.standard_normal((size, len(lam)))
    return a @ phi.T, b @ phi.T


def ensemble_results(w: WeightSpec, dom: DomainSpec, mesh: Mesh, T: float, ensemble_size: int,
                     seed: int, filter_frac: float = 0.25, nsteps: int | None = None,
                     scheme: str = MIDPOINT, mapper=map) -> list[ObservabilityResult]:
    """Observe every member of a low-frequency ensemble.

    ``mapper`` lets callers fan members out (for instance an executor's
    ``map``); results keep ensemble order.
    """
    ops = DiscreteOperators(mesh)
    Y0, Y1 = low_frequency_ensemble(ops, ensemble_size, seed, filter_frac)
    report = _report_or_none(w, dom)
    nsteps = nsteps or default_nsteps(ops, T)

    def member(i):
        tr = solve_forward(ops, Y0[i], Y1[i], T, scheme=scheme, nsteps=nsteps)
        return observe(tr, w, dom, report)

    return list(mapper(member, range(ensemble_size)))


def empirical_constant(w: WeightSpec, dom: DomainSpec, mesh: Mesh, T: float, ensemble_size: int,
                       seed: int, filter_frac: float = 0.25, **kw) -> float:
    """Smallest weighted_obs / E0 over a seeded low-frequency ensemble."""
    return min(r.ratio for r in ensemble_results(w, dom, mesh, T, ensemble_size, seed,
                                                 filter_frac, **kw))


@dataclass(frozen=True)
class SweepRow:
    label: str
    p: float
    T: float
    Ta: float
    C_T_theory: float
    C_emp: float
    slack: float


def _label(w):
    for attr in ("p", "p1"):
        if hasattr(w, attr):
            return float(getattr(w, attr))
    return math.nan


def _sweep_member(job):
    w, T, dom, N, grading, ensemble_size, seed, filter_frac = job
    from .mesh import build_mesh

    mesh = build_mesh(dom, N, w, grading)
    c_emp = empirical_constant(w, dom, mesh, T, ensemble_size, seed, filter_frac)
    rep = analyze(w, dom)
    theory = observability_bound(rep, T)
    return SweepRow(label=type(w).__name__, p=_label(w), T=float(T), Ta=rep.Ta,
                    C_T_theory=float(theory), C_emp=float(c_emp), slack=float(c_emp - theory))


def sweep(w_family, T_list, dom: DomainSpec, N: int = 512, grading: float = 1.0,
          ensemble_size: int = 16, seed: int = 0, filter_frac: float = 0.25,
          mapper=map) -> list[SweepRow]:
    """Empirical against theoretical observability constants over weights and horizons.

    ``C_T_theory`` is the coefficient of E0 in the weighted inequality;
    ``C_emp`` is the ensemble minimum of weighted_obs / E0 and
    ``slack = C_emp - C_T_theory``.  Rows come out in (weight, T) order
    whatever the execution order; ``mapper`` may be a process pool's ``map``.
    """
    w_family = list(w_family)
    T_list = list(T_list)
    if not w_family or not T_list:
        raise ValueError("sweep needs at least one weight and one horizon")
    jobs = [(w, float(T), dom, N, grading, ensemble_size, seed, filter_frac)
            for w in w_family for T in T_list]
    return list(mapper(_sweep_member, jobs))


def strictly_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))


def write_sweep(rows, csv_path, curve_path=None):
    """CSV (p, T, Ta, C_T_theory, C_emp, slack) and optionally a two-column Ta(p) file."""
    import csv
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["p", "T", "Ta", "C_T_theory", "C_emp", "slack"])
        for r in rows:
            wr.writerow([repr(x) for x in (r.p, r.T, r.Ta, r.C_T_theory, r.C_emp, r.slack)])
    if curve_path is not None:
        seen = {}
        for r in rows:
            seen.setdefault(r.p, r.Ta)
        np.savetxt(curve_path, np.array(sorted(seen.items())), header="p Ta", fmt="%.17g")


# --------------------------------------------------------------------------
# space-time identities


@dataclass(frozen=True)
class IdentityResiduals:
    """Both sides of the multiplier identity and the virial identity."""

    multiplier_lhs: float
    multiplier_rhs: float
    virial: float
    virial_scale: float

    @property
    def multiplier_relative(self):
        return abs(self.multiplier_lhs - self.multiplier_rhs) / abs(self.multiplier_lhs)

    @property
    def virial_relative(self):
        return abs(self.virial) / self.virial_scale


def identity_residuals(ops: DiscreteOperators, w: WeightSpec, y0, y1, T: float,
                       nsteps: int | None = None) -> IdentityResiduals:
    """Evaluate the boundary multiplier identity and the virial identity on a run.

    Multiplier identity (multiplier (x - 1) y_x):

        (1-c) a(c) int y_x(c)^2 + (d-1) a(d) int y_x(d)^2
            = 2 [int (x-1) y_x y_t dx]_0^T
              + int int (y_t^2 + [1 - (x-1) a'/a] a y_x^2) dx dt

    Virial identity (multiplier y):

        int int (a y_x^2 - y_t^2) dx dt + [int y y_t dx]_0^T = 0

    Space integrals use midpoint values per cell (lumped mass for y_t^2),
    time integrals the trapezoidal rule.  Homogeneous boundary data only.
    """
    mesh = ops.mesh
    dom = mesh.dom
    nsteps = nsteps or default_nsteps(ops, T)
    xm = 0.5 * (ops.x[1:] + ops.x[:-1])
    live = ops.h > 0
    a_m, da_m = (np.zeros_like(xm) for _ in range(2))
    a_m[live], da_m[live] = (np.asarray(q, dtype=float) for q in w.eval(xm[live]))
    # [1 - (x-1) a'/a] a  evaluated as a - (x-1) a'
    g = np.where(live, a_m - (xm - 1.0) * np.where(live, da_m, 0.0), 0.0)
    hsafe = np.where(live, ops.h, 1.0)
    n_t = nsteps + 1
    kin = np.empty(n_t)
    pot = np.empty(n_t)
    weighted_pot = np.empty(n_t)
    first = {}
    last = {}

    def cb(n, y, v):
        dy = np.diff(y)
        kin[n] = np.dot(ops.mass * v, v)
        pot[n] = np.dot(ops.coupling * dy, dy)
        weighted_pot[n] = np.sum(np.where(live, g * dy * dy / hsafe, 0.0))
        if n == 0 or n == nsteps:
            vm = 0.5 * (v[1:] + v[:-1])
            rec = first if n == 0 else last
            rec["xyv"] = float(np.sum((xm - 1.0) * dy * vm))
            rec["yv"] = float(np.dot(ops.mass * y, v))

    tr = solve_forward(ops, y0, y1, T, nsteps=nsteps, callback=cb)
    a_c, a_d = _end_values(w, dom)
    lhs = ((1 - dom.c) * a_c * trapezoid(tr.flux_c ** 2, tr.times)
           + (dom.d - 1) * a_d * trapezoid(tr.flux_d ** 2, tr.times))
    rhs = 2.0 * (last["xyv"] - first["xyv"]) + trapezoid(kin + weighted_pot, tr.times)
    virial = trapezoid(pot - kin, tr.times) + (last["yv"] - first["yv"])
    scale = trapezoid(pot + kin, tr.times)
    return IdentityResiduals(float(lhs), float(rhs), float(virial), float(scale))


def trace_upper_bounds(report, dom: DomainSpec, T: float, E0: float):
    """Right-hand sides of the a priori trace bounds at x = c and x = d."""
    k = max(1.0, report.Ca2) + 2.0 * T + 2.0 * T * max(report.kappa1 * report.mu1,
                                                       report.kappa2 * report.mu2)
    return k * E0 / (1.0 - dom.c), k * E0 / (dom.d - 1.0)


__all__ = [
    "ObservabilityResult", "UndefinedRatioError", "observe", "low_frequency_ensemble",
    "ensemble_results", "empirical_constant", "SweepRow", "sweep", "strictly_decreasing",
    "write_sweep", "IdentityResiduals", "identity_residuals", "trace_upper_bounds",
    "observability_constant",
]
