"""Time integration of the degenerate wave transmission problem.

Two schemes act on the finite-volume semi-discretisation M y'' + K y = 0 with
Dirichlet data imposed strongly at the end nodes:

* ``"midpoint"`` -- implicit midpoint rule.  Unconditionally stable, exactly
  conserves the discrete energy for homogeneous data and is time-reversible.
  Boundary data enter through the average of consecutive nodal samples,
  which makes the discrete Green identity between a controlled forward run
  and a homogeneous backward run hold exactly (see :mod:`degenwave.hum`).
* ``"leapfrog"`` -- explicit central differences, CFL-limited.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigvalsh_tridiagonal

from .errors import SolverError, StabilityError
from .mesh import DiscreteOperators, Mesh

MIDPOINT = "midpoint"
LEAPFROG = "leapfrog"
_SCHEME_ALIASES = {"midpoint": MIDPOINT, "implicitmidpoint": MIDPOINT, "implicit_midpoint": MIDPOINT,
                   "leapfrog": LEAPFROG}


def _scheme(name):
    try:
        return _SCHEME_ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; use 'midpoint' or 'leapfrog'") from None


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Dirichlet samples f_c(t_n), f_d(t_n) at t_n = n dt, linear in between."""

    f_c: np.ndarray
    f_d: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "f_c", np.asarray(self.f_c, dtype=float))
        object.__setattr__(self, "f_d", np.asarray(self.f_d, dtype=float))
        if self.f_c.shape != self.f_d.shape or self.f_c.ndim != 1:
            raise ValueError("f_c and f_d must be 1-D arrays of equal length")

    @classmethod
    def zero(cls, T, dt):
        n = int(math.ceil(T / dt - 1e-9)) + 1
        return cls(np.zeros(n), np.zeros(n), dt)

    @classmethod
    def from_functions(cls, fc, fd, T, dt):
        t = dt * np.arange(int(math.ceil(T / dt - 1e-9)) + 1)
        return cls(np.broadcast_to(fc(t), t.shape).copy(), np.broadcast_to(fd(t), t.shape).copy(), dt)

    @property
    def t_end(self):
        return self.dt * (len(self.f_c) - 1)

    def at(self, t):
        """Piecewise-linear interpolation; returns (f_c, f_d)."""
        grid = self.dt * np.arange(len(self.f_c))
        if np.any(np.asarray(t) > grid[-1] * (1 + 1e-12) + 1e-14):
            raise ValueError("boundary data do not cover the requested time")
        return np.interp(t, grid, self.f_c), np.interp(t, grid, self.f_d)

    def is_zero(self):
        return not (np.any(self.f_c) or np.any(self.f_d))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time history of a run.

    ``flux_c``/``flux_d`` hold the one-sided second-order y_x at the ends;
    ``cflux_c``/``cflux_d`` hold the conservative boundary fluxes a y_x read
    off the stiffness end rows.  ``ys``/``vs`` are snapshots every ``stride``
    steps (``None`` when not stored); ``y_final``/``v_final`` always exist.
    """

    times: np.ndarray
    flux_c: np.ndarray
    flux_d: np.ndarray
    cflux_c: np.ndarray
    cflux_d: np.ndarray
    energy: np.ndarray
    y_final: np.ndarray
    v_final: np.ndarray
    dt: float
    scheme: str
    ys: np.ndarray | None = None
    vs: np.ndarray | None = None
    stride: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def snapshot_times(self):
        if self.ys is None:
            return None
        return self.times[::self.stride]

    def energy_drift(self):
        e0 = self.energy[0]
        if e0 == 0:
            return float(np.max(np.abs(self.energy)))
        return float(np.max(np.abs(self.energy - e0)) / e0)

    def to_csv(self, path):
        """Columns t, E, flux_c, flux_d."""
        import csv
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "E", "flux_c", "flux_d"])
            for row in zip(self.times, self.energy, self.flux_c, self.flux_d):
                wr.writerow([repr(float(v)) for v in row])

    def dump_snapshots(self, path):
        """Binary ``.npz`` dump of (t, y, v) snapshots."""
        if self.ys is None:
            raise ValueError("trajectory stored no snapshots")
        np.savez(path, t=self.snapshot_times, y=self.ys, v=self.vs)


def cfl_dt(mesh: Mesh, safety: float = 1.0) -> float:
    """safety * min over cells of h / sqrt(a_mid)."""
    if not (0.0 < safety <= 1.0):
        raise ValueError("CFL safety factor must lie in (0, 1]")
    return float(safety * np.min(mesh.h / np.sqrt(mesh.a_mid)))


def _leapfrog_limit(ops):
    d, e = ops.interior_bands()
    s = 1.0 / np.sqrt(ops.mass[1:-1])
    lam = eigvalsh_tridiagonal(d * s * s, e * s[:-1] * s[1:], select="i",
                               select_range=(len(d) - 1, len(d) - 1))[0]
    return 2.0 / math.sqrt(lam)


def pcg(matvec, b, diag, tol=1e-12, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Raises :class:`SolverError` (with the residual history) if the relative
    residual does not fall below ``tol`` within ``maxiter`` iterations.
    """
    n = len(b)
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - matvec(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    z = r / diag
    p = z.copy()
    rz = r @ z
    hist = [np.linalg.norm(r) / bnorm]
    for _ in range(maxiter):
        if hist[-1] <= tol:
            return x
        Ap = matvec(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        hist.append(np.linalg.norm(r) / bnorm)
        z = r / diag
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if hist[-1] <= tol:
        return x
    raise SolverError(f"PCG did not reach tol={tol} in {maxiter} iterations "
                      f"(residual {hist[-1]:.3e})", hist)


class _SPDTridiag:
    """alpha*M + beta*K on interior nodes, solved by banded Cholesky or PCG."""

    def __init__(self, ops, alpha, beta, method="direct", tol=1e-12):
        d, e = ops.interior_bands()
        self.diag = alpha * ops.mass[1:-1] + beta * d
        self.off = beta * e
        self.method = method
        self.tol = tol
        if method == "direct":
            ab = np.zeros((2, len(self.diag)))
            ab[0, 1:] = self.off
            ab[1] = self.diag
            self.cho = cholesky_banded(ab, lower=False)
        elif method != "pcg":
            raise ValueError(f"unknown linear solver {method!r}")

    def matvec(self, x):
        out = self.diag * x
        out[:-1] += self.off * x[1:]
        out[1:] += self.off * x[:-1]
        return out

    def solve(self, b):
        if self.method == "direct":
            return cho_solve_banded((self.cho, False), b)
        return pcg(self.matvec, b, self.diag, tol=self.tol, maxiter=10 * len(b))


def _steps(T, dt):
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return n, T / n


def default_dt(ops: DiscreteOperators, safety: float = 0.9) -> float:
    return cfl_dt(ops.mesh, safety)


def default_nsteps(ops: DiscreteOperators, T: float) -> int:
    """Two implicit steps per shortest cell transit time h / sqrt(a_mid)."""
    return max(64, int(math.ceil(2.0 * T / cfl_dt(ops.mesh, 1.0))))


def solve_forward(ops: DiscreteOperators, y0, y1, T: float, bdata: BoundaryData | None = None,
                  scheme: str = MIDPOINT, dt: float | None = None, nsteps: int | None = None,
                  store_stride: int | None = None, linear_solver: str = "direct",
                  tol: float = 1e-12, callback=None, allow_jump: bool = False) -> Trajectory:
    """Integrate from (y0, y1) over [0, T] with Dirichlet data ``bdata``.

    The step is ``T / nsteps`` if ``nsteps`` is given, else the largest
    T/n <= ``dt`` (default: 0.9 of the CFL step).  With ``bdata`` given its
    sampling step must equal the solver step.  ``store_stride`` keeps every
    k-th state.  ``callback(n, y, v)``, if given, sees every time level
    (the arrays are reused between calls; copy them to keep them).
    ``allow_jump`` accepts end values of ``y0`` that differ from the data at
    t = 0 (the data win); the midpoint update never reads the level-0
    boundary values, so this is harmless for controls synthesised by HUM.
    """
    scheme = _scheme(scheme)
    if not T > 0:
        raise ValueError("T must be positive")
    if nsteps is None:
        if dt is None:
            dt = bdata.dt if bdata is not None else default_dt(ops)
        nsteps, dt = _steps(T, dt)
    else:
        dt = T / nsteps
    if bdata is None:
        fc = np.zeros(nsteps + 1)
        fd = np.zeros(nsteps + 1)
    else:
        if len(bdata.f_c) < nsteps + 1 or abs(bdata.dt - dt) > 1e-12 * dt:
            raise ValueError(f"boundary data (dt={bdata.dt}, {len(bdata.f_c)} samples) do not match "
                             f"the solver grid (dt={dt}, {nsteps + 1} samples)")
        fc, fd = bdata.f_c[:nsteps + 1], bdata.f_d[:nsteps + 1]

    y = np.array(y0, dtype=float)
    v = np.array(y1, dtype=float)
    n1 = ops.ndof
    if y.shape != (n1,) or v.shape != (n1,):
        raise ValueError(f"initial data must have length {n1}")
    scale = max(1.0, float(np.max(np.abs(y))))
    if not allow_jump and (abs(y[0] - fc[0]) > 1e-10 * scale or abs(y[-1] - fd[0]) > 1e-10 * scale):
        raise ValueError("initial displacement does not match the boundary data at t = 0")
    y[0], y[-1] = fc[0], fd[0]

    # boundary velocities: slope of the piecewise-linear data
    gc = np.gradient(fc, dt) if len(fc) > 1 else np.zeros_like(fc)
    gd = np.gradient(fd, dt) if len(fd) > 1 else np.zeros_like(fd)
    v[0], v[-1] = gc[0], gd[0]

    stride = store_stride or 0
    times = dt * np.arange(nsteps + 1)
    flux_c = np.empty(nsteps + 1)
    flux_d = np.empty(nsteps + 1)
    cflux_c = np.empty(nsteps + 1)
    cflux_d = np.empty(nsteps + 1)
    energy = np.empty(nsteps + 1)
    ys = vs = None
    if stride:
        nsnap = nsteps // stride + 1
        ys = np.empty((nsnap, n1))
        vs = np.empty((nsnap, n1))

    def record(n, y, v):
        flux_c[n], flux_d[n] = ops.boundary_flux(y)
        cflux_c[n], cflux_d[n] = ops.conservative_flux(y)
        energy[n] = ops.discrete_energy(y, v)
        if stride and n % stride == 0:
            ys[n // stride] = y
            vs[n // stride] = v
        if callback is not None:
            callback(n, y, v)

    m = ops.mass[1:-1]
    k0, kN = ops.coupling[0], ops.coupling[-1]

    if scheme == MIDPOINT:
        S = _SPDTridiag(ops, 1.0, 0.25 * dt * dt, linear_solver, tol)
        record(0, y, v)
        for n in range(nsteps):
            fbar_c = 0.5 * (fc[n] + fc[n + 1])
            fbar_d = 0.5 * (fd[n] + fd[n + 1])
            rhs = m * (y[1:-1] + 0.5 * dt * v[1:-1])
            # -K_Ib fbar moves to the right-hand side with a plus sign
            rhs[0] += 0.25 * dt * dt * k0 * fbar_c
            rhs[-1] += 0.25 * dt * dt * kN * fbar_d
            ybar = S.solve(rhs)
            ynew = 2.0 * ybar - y[1:-1]
            v[1:-1] = 2.0 * (ynew - y[1:-1]) / dt - v[1:-1]
            y[1:-1] = ynew
            y[0], y[-1] = fc[n + 1], fd[n + 1]
            v[0], v[-1] = gc[n + 1], gd[n + 1]
            record(n + 1, y, v)
    else:
        limit = min(_leapfrog_limit(ops), cfl_dt(ops.mesh, 1.0))
        if dt > limit * (1 + 1e-12):
            raise StabilityError(f"leapfrog step {dt:.4g} exceeds the CFL limit {limit:.4g}")
        minv = 1.0 / ops.mass

        def accel(yy):
            acc = -ops.stiffness_matvec(yy) * minv
            acc[0] = acc[-1] = 0.0
            return acc

        y_prev = y.copy()
        a0 = accel(y)
        y_cur = y + dt * v + 0.5 * dt * dt * a0
        y_cur[0], y_cur[-1] = fc[1], fd[1]
        record(0, y_prev, v)
        for n in range(1, nsteps + 1):
            if n < nsteps:
                y_next = 2.0 * y_cur - y_prev + dt * dt * accel(y_cur)
                y_next[0], y_next[-1] = fc[n + 1], fd[n + 1]
                vel = (y_next - y_prev) / (2.0 * dt)
            else:
                # last level: velocity from the half-step difference plus half an acceleration
                vel = (y_cur - y_prev) / dt + 0.5 * dt * accel(y_cur)
                y_next = None
            vel[0], vel[-1] = gc[n], gd[n]
            record(n, y_cur, vel)
            if y_next is not None:
                y_prev, y_cur = y_cur, y_next
        y, v = y_cur, vel

    return Trajectory(times=times, flux_c=flux_c, flux_d=flux_d, cflux_c=cflux_c, cflux_d=cflux_d,
                      energy=energy, y_final=y.copy(), v_final=v.copy(), dt=dt, scheme=scheme,
                      ys=ys, vs=vs, stride=stride,
                      meta={"a_c": float(ops.mesh.a_node[0]), "a_d": float(ops.mesh.a_node[-1])})


def solve_backward(ops: DiscreteOperators, wT0, wT1, T: float, scheme: str = MIDPOINT,
                   dt: float | None = None, nsteps: int | None = None,
                   store_stride: int | None = None, **kw) -> Trajectory:
    """Homogeneous Dirichlet problem with data prescribed at the final time T.

    Runs the forward solver on u(t) = w(T - t) and maps back, so every array
    of the result is indexed by the original time t (``y_final``/``v_final``
    hold w(0), w_t(0)).
    """
    wT0 = np.asarray(wT0, dtype=float)
    if abs(wT0[0]) > 0 or abs(wT0[-1]) > 0:
        raise ValueError("final displacement must vanish at both ends")
    u = solve_forward(ops, wT0, -np.asarray(wT1, dtype=float), T, None, scheme=scheme, dt=dt,
                      nsteps=nsteps, store_stride=store_stride, **kw)
    ys = vs = None
    if u.ys is not None:
        if len(u.times) - 1 != (len(u.ys) - 1) * u.stride:
            raise ValueError("store_stride must divide the number of steps for backward runs")
        ys = u.ys[::-1].copy()
        vs = -u.vs[::-1]
    return Trajectory(times=u.times, flux_c=u.flux_c[::-1].copy(), flux_d=u.flux_d[::-1].copy(),
                      cflux_c=u.cflux_c[::-1].copy(), cflux_d=u.cflux_d[::-1].copy(),
                      energy=u.energy[::-1].copy(), y_final=u.y_final, v_final=-u.v_final,
                      dt=u.dt, scheme=u.scheme, ys=ys, vs=vs, stride=u.stride,
                      meta={**u.meta, "direction": "backward"})
