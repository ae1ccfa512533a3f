"""Boundary null control by the Hilbert Uniqueness Method.

For final data Z = (w0, w1) of the homogeneous backward problem, the
controls f_c = -w_x(t, c), f_d = w_x(t, d) drive the forward problem from
rest to a terminal state whose duality pairing with any other final data
reproduces the bilinear form

    Lambda(Z, Zh) = a(c) int_0^T w_x zh_x (t, c) dt + a(d) int_0^T w_x zh_x (t, d) dt.

Null control of (y0, y1) is then the linear problem Lambda(Z, .) = l(.) with
l given by the uncontrolled evolution of (y0, y1), solved by conjugate
gradients in the V1 x L2 inner product  w0.K.w0h + w1.M.w1h.

Discrete conventions
--------------------
* Boundary derivatives entering Lambda and the controls are the conservative
  end fluxes of the stiffness rows divided by a(c), a(d).
* Time integrals in Lambda pair the step averages of the two traces,
  sum_n dt avg(g)_n avg(gh)_n.  With the implicit midpoint scheme this makes
  the discrete Green identity exact, hence the Gramian symmetric to round-off.
* The Gramian output is stored in dual form (-M y_t(T), M y(T)) on interior
  nodes and mapped to the V1 x L2 Riesz representative before CG uses it.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import cho_solve_banded, cholesky_banded, eigvalsh_tridiagonal

from .errors import SolverError
from .mesh import DiscreteOperators
from .solver import (MIDPOINT, BoundaryData, Trajectory, default_nsteps, solve_backward,
                     solve_forward)
from .weights import STRONG, classify

BOTH = "Both"
RIGHT_ONLY = "RightOnly"


def _active(active):
    key = str(active).lower().replace("-", "").replace("_", "")
    if key == "both":
        return BOTH
    if key in ("rightonly", "right"):
        return RIGHT_ONLY
    raise ValueError(f"active must be 'Both' or 'RightOnly', got {active!r}")


@dataclass(frozen=True, eq=False)
class FinalData:
    """Final data (w0, w1) of the backward problem; w0 vanishes at both ends."""

    w0: np.ndarray
    w1: np.ndarray

    def __post_init__(self):
        w0 = np.asarray(self.w0, dtype=float)
        w1 = np.asarray(self.w1, dtype=float)
        if w0.shape != w1.shape or w0.ndim != 1:
            raise ValueError("w0 and w1 must be node vectors of equal length")
        if w0[0] != 0.0 or w0[-1] != 0.0:
            raise ValueError("w0 must vanish at both ends")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_interior(cls, u0, u1):
        return cls(np.pad(u0, 1), np.pad(u1, 1))

    def interior(self):
        return self.w0[1:-1], self.w1[1:-1]


@dataclass(frozen=True, eq=False)
class ControlPair:
    f_c: np.ndarray
    f_d: np.ndarray
    dt: float
    active: str = BOTH

    @property
    def times(self):
        return self.dt * np.arange(len(self.f_c))

    def boundary_data(self):
        return BoundaryData(self.f_c, self.f_d, self.dt)

    def l2_norm(self):
        t = self.times
        return math.sqrt(trapezoid(self.f_c ** 2, t) + trapezoid(self.f_d ** 2, t))

    def __add__(self, other):
        if len(self.f_c) != len(other.f_c) or self.dt != other.dt:
            raise ValueError("controls live on different time grids")
        return ControlPair(self.f_c + other.f_c, self.f_d + other.f_d, self.dt, self.active)

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "f_c", "f_d"])
            for row in zip(self.times, self.f_c, self.f_d):
                wr.writerow([repr(float(v)) for v in row])


@dataclass
class HUMReport:
    iterations: int = 0
    cg_residual: float = 0.0
    terminal_energy: float = 0.0
    terminal_state_norm: float = 0.0
    initial_state_norm: float = 0.0
    uncontrolled_terminal_energy: float = 0.0
    control_l2: float = 0.0
    lambda_coercivity_estimate: float = math.nan
    decoupled: bool = False
    converged: bool = True
    active: str = BOTH
    T: float = 0.0
    nsteps: int = 0
    final_data_norm: float = 0.0
    residual_history: list = field(default_factory=list)
    functional_history: list = field(default_factory=list)

    @property
    def terminal_ratio(self):
        if self.initial_state_norm == 0:
            return 0.0
        return self.terminal_state_norm / self.initial_state_norm

    @property
    def energy_ratio(self):
        if self.uncontrolled_terminal_energy == 0:
            return 0.0
        return self.terminal_energy / self.uncontrolled_terminal_energy

    def to_dict(self):
        out = asdict(self)
        out["terminal_ratio"] = self.terminal_ratio
        out["energy_ratio"] = self.energy_ratio
        return {k: (float(v) if isinstance(v, np.floating) else v) for k, v in out.items()}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=True)
            fh.write("\n")


# --------------------------------------------------------------------------
# norms


class _InteriorStiffness:
    """Cholesky factor of the Dirichlet stiffness block, for V^-1 norms."""

    def __init__(self, ops):
        d, e = ops.interior_bands()
        ab = np.zeros((2, len(d)))
        ab[0, 1:] = e
        ab[1] = d
        try:
            self.cho = cholesky_banded(ab, lower=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError("stiffness matrix with Dirichlet ends is singular") from exc

    def solve(self, b):
        return cho_solve_banded((self.cho, False), b)


def vminus_norm(ops: DiscreteOperators, g, _stiff=None) -> float:
    """Discrete V^-1 norm: ||g||^2 = <z, g> (lumped) with A z = g, z = 0 at the ends."""
    g = np.asarray(g, dtype=float)
    if len(g) != ops.ndof:
        raise ValueError(f"expected node vector of length {ops.ndof}")
    mg = ops.mass[1:-1] * g[1:-1]
    if not np.any(mg):
        return 0.0
    stiff = _stiff or _InteriorStiffness(ops)
    return math.sqrt(max(float(stiff.solve(mg) @ mg), 0.0))


def state_norm(ops: DiscreteOperators, y, v, _stiff=None) -> float:
    """L2 x V^-1 norm of the state (y, y_t)."""
    y = np.asarray(y, dtype=float)
    return math.sqrt(float(np.dot(ops.mass * y, y)) + vminus_norm(ops, v, _stiff) ** 2)


# --------------------------------------------------------------------------
# Gramian


def _controls_from_fluxes(cflux_c, cflux_d, a_c, a_d, dt, active):
    f_c = -np.asarray(cflux_c) / a_c
    f_d = np.asarray(cflux_d) / a_d
    if active == RIGHT_ONLY:
        f_c = np.zeros_like(f_c)
    return ControlPair(f_c, f_d, dt, active)


def extract_controls(backward_traj: Trajectory, active=BOTH) -> ControlPair:
    """f_c = -w_x(t, c), f_d = +w_x(t, d) on the solver grid; RightOnly zeroes f_c."""
    m = backward_traj.meta
    return _controls_from_fluxes(backward_traj.cflux_c, backward_traj.cflux_d, m["a_c"], m["a_d"],
                                 backward_traj.dt, _active(active))


def lambda_form(bt: Trajectory, bth: Trajectory, active=BOTH) -> float:
    """Lambda(W, Wh) from the recorded end fluxes of two backward runs."""
    if len(bt.times) != len(bth.times):
        raise ValueError("trajectories live on different time grids")

    def avg(u):
        return 0.5 * (u[1:] + u[:-1])

    m = bt.meta
    val = bt.dt * np.dot(avg(bt.cflux_d), avg(bth.cflux_d)) / m["a_d"]
    if _active(active) == BOTH:
        val += bt.dt * np.dot(avg(bt.cflux_c), avg(bth.cflux_c)) / m["a_c"]
    return float(val)


def control_pairing(controls: ControlPair, bth: Trajectory) -> float:
    """Lambda(Z, Wh) from the controls of Z and the backward run of Wh.

    Since f_c = -w_x(c) and f_d = w_x(d), the form is rebuilt from the
    controls alone; this is what the duality identity is checked against.
    """
    if len(controls.f_c) != len(bth.times):
        raise ValueError("controls and trajectory live on different time grids")

    def avg(u):
        return 0.5 * (u[1:] + u[:-1])

    val = np.dot(avg(controls.f_d), avg(bth.cflux_d))
    if controls.active == BOTH:
        val -= np.dot(avg(controls.f_c), avg(bth.cflux_c))
    return float(controls.dt * val)


@dataclass(frozen=True, eq=False)
class GramianImage:
    """Dual element (-M y_t(T), M y(T)) together with the run that produced it."""

    g0: np.ndarray
    g1: np.ndarray
    controls: ControlPair
    backward: Trajectory

    def pair(self, z: FinalData) -> float:
        return float(self.g0 @ z.w0 + self.g1 @ z.w1)


def gramian_apply(ops: DiscreteOperators, T: float, z: FinalData, active=BOTH,
                  nsteps: int | None = None) -> GramianImage:
    """Backward solve from z, extract controls, forward solve from rest.

    The returned dual element satisfies <G z, zh> = Lambda(z, zh) for every
    final datum zh (exactly, up to round-off, for the midpoint scheme).
    """
    active = _active(active)
    nsteps = nsteps or default_nsteps(ops, T)
    bt = solve_backward(ops, z.w0, z.w1, T, scheme=MIDPOINT, nsteps=nsteps)
    ctrl = extract_controls(bt, active)
    zero = np.zeros(ops.ndof)
    ft = solve_forward(ops, zero, zero, T, ctrl.boundary_data(), scheme=MIDPOINT, nsteps=nsteps,
                       allow_jump=True)
    m = ops.mass
    g0 = -m * ft.v_final
    g1 = m * ft.y_final
    g0[0] = g0[-1] = g1[0] = g1[-1] = 0.0
    return GramianImage(g0, g1, ctrl, bt)


# --------------------------------------------------------------------------
# null control


def spectral_filter(ops: DiscreteOperators, y0, y1, filter_frac: float):
    """Lumped-L2 projection of (y0, y1) onto the lowest ceil(filter_frac * N) Dirichlet modes."""
    if not (0.0 < filter_frac <= 1.0):
        raise ValueError("filter_frac must lie in (0, 1]")
    _, phi = ops.eigenmodes(math.ceil(filter_frac * ops.N))
    m = ops.mass

    def proj(u):
        return phi @ (phi.T @ (m * np.asarray(u, dtype=float)))

    return proj(y0), proj(y1)


class _Hspace:
    """Interior V1 x L2 geometry on stacked vectors (w0 interior, w1 interior)."""

    def __init__(self, ops):
        self.ops = ops
        self.m = ops.mass[1:-1]
        self.n = len(self.m)
        self.d, self.e = ops.interior_bands()
        self.stiff = _InteriorStiffness(ops)

    def weight(self, u):
        """Apply the metric: (K u0, M u1)."""
        u0, u1 = u[:self.n], u[self.n:]
        k = self.d * u0
        k[:-1] += self.e * u0[1:]
        k[1:] += self.e * u0[:-1]
        return np.concatenate([k, self.m * u1])

    def inner(self, a, b):
        return float(a @ self.weight(b))

    def riesz(self, g0, g1):
        return np.concatenate([self.stiff.solve(g0), g1 / self.m])

    def final_data(self, u):
        return FinalData.from_interior(u[:self.n], u[self.n:])


def solve_hum(ops: DiscreteOperators, y0, y1, T: float, tol: float = 1e-8, maxiter: int = 500,
              filter_frac: float | None = 0.25, active=BOTH, nsteps: int | None = None,
              weight=None, raise_on_failure: bool = True):
    """Null controls for (y0, y1) on [0, T].

    Conjugate gradients on Lambda(Z, .) = l(.) in the V1 x L2 metric, stopped
    when the relative residual drops below ``tol``.  The residual of an
    iterate equals the L2 x V^-1 norm of the terminal state it produces, so
    ``cg_residual`` doubles as a predicted terminal ratio; the report itself
    comes from an independent verification run.  ``filter_frac=None``
    disables the spectral projection of the data.

    A vanishing Gramian direction ends the iteration early; this is how the
    decoupled strong regime with one-sided control shows up.  Returns
    ``(controls, report)``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    active = _active(active)
    nsteps = nsteps or default_nsteps(ops, T)
    decoupled = False
    if weight is not None:
        from .weights import analyze
        if getattr(weight, "degenerate", True):
            rep = analyze(weight, ops.mesh.dom)
            if T <= rep.Ta:
                warnings.warn(f"T = {T:.4g} does not exceed the critical time {rep.Ta:.4g}",
                              stacklevel=2)
            decoupled = classify(weight, ops.mesh.dom) == STRONG
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    if filter_frac is not None:
        y0, y1 = spectral_filter(ops, y0, y1, filter_frac)
    H = _Hspace(ops)

    free = solve_forward(ops, y0, y1, T, scheme=MIDPOINT, nsteps=nsteps, allow_jump=True)
    m = H.m
    # l(Zh) = (M y_t(T)).wh0 - (M y(T)).wh1 for the uncontrolled evolution
    b = H.riesz(m * free.v_final[1:-1], -m * free.y_final[1:-1])
    bnorm = math.sqrt(H.inner(b, b))
    Z = np.zeros_like(b)
    # zero data are already controlled
    history = [1.0 if bnorm > 0 else 0.0]
    functional = [0.0]
    alphas, betas = [], []
    it = 0
    if bnorm > 0:
        # Residuals are kept H-orthogonal explicitly.  The discrete Gramian is
        # badly conditioned (spurious high-frequency modes), and without this
        # the recursive residual drifts away from the true one.
        basis = np.empty((maxiter + 1, len(b)))
        wbasis = np.empty_like(basis)
        r = b.copy()
        p = r.copy()
        rr = bnorm * bnorm
        basis[0] = r / bnorm
        wbasis[0] = H.weight(basis[0])
        while history[-1] > tol and it < maxiter:
            img = gramian_apply(ops, T, H.final_data(p), active, nsteps)
            q = H.riesz(img.g0[1:-1], img.g1[1:-1])
            pq = H.inner(p, q)
            if pq <= 0.0:
                # the Gramian annihilates the search direction: unreachable component
                decoupled = True
                break
            alpha = rr / pq
            Z += alpha * p
            r -= alpha * q
            for _ in range(2):
                r -= basis[:it + 1].T @ (wbasis[:it + 1] @ r)
            rr_new = H.inner(r, r)
            beta = rr_new / rr
            alphas.append(alpha)
            betas.append(beta)
            # J(Z) = 1/2 <GZ, Z> - l(Z) decreases by alpha * rr / 2 per step
            functional.append(functional[-1] - 0.5 * alpha * rr)
            rr = rr_new
            it += 1
            history.append(math.sqrt(max(rr, 0.0)) / bnorm)
            if it <= maxiter and rr > 0:
                basis[it] = r / math.sqrt(rr)
                wbasis[it] = H.weight(basis[it])
            p = r + beta * p
    converged = history[-1] <= tol
    if not converged and not decoupled and raise_on_failure:
        raise SolverError(f"HUM conjugate gradients stopped after {it} iterations at relative "
                          f"residual {history[-1]:.3e} > {tol}", history)
    zfin = H.final_data(Z)
    bt = solve_backward(ops, zfin.w0, zfin.w1, T, scheme=MIDPOINT, nsteps=nsteps)
    controls = extract_controls(bt, active)
    report = verify_null(ops, y0, y1, controls, T, _free=free, _stiff=H.stiff)
    report.iterations = it
    report.cg_residual = history[-1]
    report.residual_history = history
    report.functional_history = functional
    report.final_data_norm = math.sqrt(H.inner(Z, Z))
    report.lambda_coercivity_estimate = _ritz_min(alphas, betas)
    report.decoupled = decoupled
    report.converged = converged
    return controls, report


def _ritz_min(alphas, betas):
    """Smallest Ritz value of the Lanczos matrix implied by the CG coefficients."""
    k = len(alphas)
    if k == 0:
        return math.nan
    a = np.asarray(alphas)
    bt = np.asarray(betas)
    diag = 1.0 / a
    diag[1:] += bt[:-1] / a[:-1]
    off = np.sqrt(bt[:-1]) / a[:-1]
    if k == 1:
        return float(diag[0])
    return float(eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0])


def verify_null(ops: DiscreteOperators, y0, y1, controls: ControlPair, T: float, _free=None,
                _stiff=None) -> HUMReport:
    """Forward run with ``controls`` from (y0, y1); terminal energy and norms."""
    nsteps = len(controls.f_c) - 1
    if abs(controls.dt * nsteps - T) > 1e-9 * T:
        raise ValueError("controls do not cover [0, T] on a uniform grid")
    stiff = _stiff or _InteriorStiffness(ops)
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    tr = solve_forward(ops, y0, y1, T, controls.boundary_data(), scheme=MIDPOINT, nsteps=nsteps,
                       allow_jump=True)
    if _free is None:
        _free = solve_forward(ops, y0, y1, T, scheme=MIDPOINT, nsteps=nsteps, allow_jump=True)
    # The end nodes carry the last control samples, which the scheme only ever
    # uses through step averages; the state at T is the interior part with the
    # ends back at zero once the controls stop.
    yT = tr.y_final.copy()
    vT = tr.v_final.copy()
    yT[0] = yT[-1] = vT[0] = vT[-1] = 0.0
    y0h = y0.copy()
    y0h[0] = y0h[-1] = 0.0
    return HUMReport(
        terminal_energy=float(ops.discrete_energy(yT, vT)),
        terminal_state_norm=state_norm(ops, yT, vT, stiff),
        initial_state_norm=state_norm(ops, y0h, y1, stiff),
        uncontrolled_terminal_energy=float(_free.energy[-1]),
        control_l2=controls.l2_norm(),
        active=controls.active,
        T=float(T),
        nsteps=nsteps,
    )
