"""Independent reference computations.

* :func:`uniform_string_reference` -- sine-series solution of the
  constant-coefficient string with homogeneous Dirichlet ends.
* :func:`self_convergence` -- observed order of convergence from a sequence of
  mesh sizes, against a closed-form reference or the finest run.
* :func:`decoupling_check` -- energy crossing the singular point when the
  degeneration is strong.
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import roots_legendre

from .errors import ClassificationError
from .mesh import DiscreteOperators, Mesh
from .solver import MIDPOINT, solve_forward
from .weights import STRONG, DomainSpec, WeightSpec, classify


@dataclass(frozen=True)
class StringSeries:
    """Truncated eigen-expansion of y_tt = s^2 y_xx on [c, d], y = 0 at the ends.

    ``A[k-1]`` and ``B[k-1]`` are the coefficients of y0 and y1 on the
    L2-normalised mode sqrt(2/L) sin(k pi (x - c)/L).  ``tail_bound`` bounds the
    L2 norm of the discarded part of y(t) for every t.
    """

    c: float
    d: float
    speed: float
    A: np.ndarray
    B: np.ndarray
    tail_bound: float

    @property
    def length(self):
        return self.d - self.c

    @property
    def omegas(self):
        k = np.arange(1, len(self.A) + 1)
        return self.speed * k * math.pi / self.length

    def modes(self, x):
        k = np.arange(1, len(self.A) + 1)
        x = np.asarray(x, dtype=float)
        return math.sqrt(2.0 / self.length) * np.sin(np.multiply.outer(x - self.c, k) * math.pi / self.length)

    def __call__(self, t, x):
        om = self.omegas
        coef = self.A * np.cos(om * t) + self.B / om * np.sin(om * t)
        return self.modes(x) @ coef

    def velocity(self, t, x):
        om = self.omegas
        coef = -self.A * om * np.sin(om * t) + self.B * np.cos(om * t)
        return self.modes(x) @ coef

    def energy(self, t=0.0):
        """1/2 int (y_t^2 + s^2 y_x^2) of the truncated series (constant in t)."""
        om = self.omegas
        y = self.A * np.cos(om * t) + self.B / om * np.sin(om * t)
        v = -self.A * om * np.sin(om * t) + self.B * np.cos(om * t)
        return 0.5 * float(np.sum(v * v + (om * y) ** 2))


@lru_cache(maxsize=8)
def _gauss_legendre(n):
    return roots_legendre(n)


def _coefficients(f, c, d, modes, nquad):
    if f is None:
        return np.zeros(modes), 0.0
    if not callable(f):
        coef = np.zeros(modes)
        given = np.asarray(f, dtype=float)[:modes]
        coef[:len(given)] = given
        return coef, float(np.sum(np.asarray(f, dtype=float) ** 2))
    xg, wg = _gauss_legendre(nquad)
    L = d - c
    x = c + 0.5 * L * (xg + 1.0)
    wq = 0.5 * L * wg
    fx = np.asarray(f(x), dtype=float)
    k = np.arange(1, modes + 1)
    phi = math.sqrt(2.0 / L) * np.sin(np.outer(x - c, k) * math.pi / L)
    return phi.T @ (wq * fx), float(wq @ (fx * fx))


def string_series(dom: DomainSpec, wave_speed: float, y0=None, y1=None, modes: int = 256,
                  nquad: int = 4096) -> StringSeries:
    """Build the eigen-expansion for data given as callables or as mode coefficients."""
    A, n0 = _coefficients(y0, dom.c, dom.d, modes, nquad)
    B, n1 = _coefficients(y1, dom.c, dom.d, modes, nquad)
    L = dom.d - dom.c
    om_next = wave_speed * (modes + 1) * math.pi / L
    tail0 = math.sqrt(max(n0 - float(A @ A), 0.0))
    tail1 = math.sqrt(max(n1 - float(B @ B), 0.0)) / om_next
    return StringSeries(dom.c, dom.d, float(wave_speed), A, B, tail0 + tail1)


def uniform_string_reference(dom: DomainSpec, wave_speed: float, y0=None, y1=None, t=0.0, x=None,
                             modes: int = 256):
    """Evaluate the series solution at time ``t`` and points ``x``.

    Returns ``(values, tail_bound)``.
    """
    s = string_series(dom, wave_speed, y0, y1, modes)
    x = np.linspace(dom.c, dom.d, 257) if x is None else x
    return s(t, x), s.tail_bound


class ConvergenceTable(NamedTuple):
    N: list
    errors: list
    orders: list
    order: float
    monotone: bool


def self_convergence(run_fn: Callable, N_list, reference: Callable | None = None) -> ConvergenceTable:
    """Observed order of convergence.

    ``run_fn(N)`` returns ``(x, y, weights)``: node positions, a nodal field and
    quadrature weights (for instance the lumped mass).  The error of each run
    is the weighted L2 distance to ``reference(x)`` when given.  Without a
    reference the error of run i is its distance to run i + 1, interpolated
    linearly onto the coarser nodes; these successive differences shrink at
    the same rate as the true error, whereas distances to one fixed finest
    run overstate the order of the last pair.  The finest run then drops out
    of the table.  ``order`` is the estimate from the two finest entries.
    """
    N_list = [int(n) for n in N_list]
    if len(set(N_list)) != len(N_list):
        raise ValueError("mesh sizes must be distinct")
    if len(N_list) < 3:
        raise ValueError("need at least three mesh sizes")
    N_list = sorted(N_list)
    runs = {n: run_fn(n) for n in N_list}
    if reference is None:
        used = N_list[:-1]
        refs = {n: runs[m] for n, m in zip(N_list, N_list[1:])}
    else:
        used = N_list
    errors = []
    for n in used:
        x, y, wq = runs[n]
        if reference is None:
            xf, yf, _ = refs[n]
            e = y - np.interp(x, xf, yf)
        else:
            e = y - reference(x)
        errors.append(math.sqrt(float(np.dot(wq * e, e))))
    orders = [math.log(errors[i] / errors[i + 1]) / math.log(used[i + 1] / used[i])
              for i in range(len(used) - 1)]
    monotone = all(errors[i + 1] < errors[i] for i in range(len(errors) - 1))
    if not monotone:
        warnings.warn("errors do not decrease monotonically; inspect the raw table", stacklevel=2)
    return ConvergenceTable(used, errors, orders, orders[-1], monotone)


class LeakResult(NamedTuple):
    max_leak: float
    total_energy: float

    @property
    def relative(self):
        return self.max_leak / self.total_energy if self.total_energy > 0 else 0.0


def one_sided_bump(ops: DiscreteOperators, side: str = "right"):
    """sin^4 bump supported in the middle 60% of one side of x = 1."""
    dom = ops.mesh.dom
    x = ops.x
    if side == "right":
        lo, hi = 1.0 + 0.2 * (dom.d - 1.0), 1.0 + 0.8 * (dom.d - 1.0)
    elif side == "left":
        lo, hi = 1.0 - 0.8 * (1.0 - dom.c), 1.0 - 0.2 * (1.0 - dom.c)
    else:
        raise ValueError("side must be 'left' or 'right'")
    s = (x - lo) / (hi - lo)
    return np.where((s > 0) & (s < 1), np.sin(math.pi * s) ** 4, 0.0)


def decoupling_check(w: WeightSpec, dom: DomainSpec, mesh: Mesh, T: float, side: str = "right",
                     y0=None, y1=None, nsteps: int | None = None) -> LeakResult:
    """Largest energy found on the far side of x = 1 during [0, T].

    The data default to a bump at rest on ``side``.  Only meaningful for a
    strong degeneration; a weak weight raises :class:`ClassificationError`.
    """
    if classify(w, dom) != STRONG:
        raise ClassificationError("decoupling check needs a strongly degenerate weight")
    ops = DiscreteOperators(mesh)
    y0 = one_sided_bump(ops, side) if y0 is None else np.asarray(y0, dtype=float)
    y1 = np.zeros(ops.ndof) if y1 is None else np.asarray(y1, dtype=float)
    far = 0 if side == "right" else 1
    leak = [0.0]

    def cb(n, y, v):
        leak[0] = max(leak[0], ops.side_energies(y, v)[far])

    nsteps = nsteps or 4 * mesh.N
    tr = solve_forward(ops, y0, y1, T, scheme=MIDPOINT, nsteps=nsteps, callback=cb)
    return LeakResult(float(leak[0]), float(tr.energy[0]))
