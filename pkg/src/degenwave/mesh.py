"""Graded 1D grids with a node at the singular point and finite-volume operators.

The flux a(x) y_x is evaluated only at cell midpoints, so the vanishing
coefficient at x = 1 never enters a stencil directly.  With cell widths h_k
and midpoint coefficients a_k, the stiffness matrix is the usual three-point

    (K y)_i = -a_i (y_{i+1} - y_i)/h_i + a_{i-1} (y_i - y_{i-1})/h_{i-1}

paired with the lumped mass m_i = (h_{i-1} + h_i)/2.  ``K`` is assembled with
natural (Neumann) end rows; Dirichlet data are imposed by the time integrators.

Two interface treatments are available.  With a *shared* node at x = 1 the
discrete state is continuous there, which is the right transmission condition
for a weak degeneration.  With a *split* node the point x = 1 carries two
degrees of freedom, one per side, each holding the half-cell mass of its own
side and no flux between them: the zero-flux transmission condition of a
strong degeneration, imposed exactly instead of being approached at the slow
rate h**(p - 1) of the shared discretisation.  Operators and solvers work on
the degree-of-freedom layout ``ops.x`` (length N + 1 or N + 2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import MeshError
from .weights import STRONG, DomainSpec, WeightSpec, classify


def _side_widths(length, n, grading, fine_last):
    if grading == 1.0:
        w = np.full(n, length / n)
    else:
        w = grading ** -np.arange(n, dtype=float)
        w *= length / w.sum()
    return w if fine_last else w[::-1]


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    h: np.ndarray
    j1: int
    grading: float
    a_mid: np.ndarray
    a_node: np.ndarray
    dom: DomainSpec
    split: bool = False

    @property
    def N(self):
        return len(self.h)

    @property
    def midpoints(self):
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def mass(self):
        m = np.zeros(self.N + 1)
        m[:-1] += 0.5 * self.h
        m[1:] += 0.5 * self.h
        return m

    def dump(self, path):
        """Write two-column text (node, a_node)."""
        np.savetxt(path, np.column_stack([self.nodes, self.a_node]), header="x a", fmt="%.17g")


def build_mesh(dom: DomainSpec, N: int, weight: WeightSpec, grading: float = 1.0,
               a_floor: float = 0.0, interface: str = "auto") -> Mesh:
    """Grid on [c, d] with N cells, N/2 on each side of x = 1.

    Cell widths form a geometric sequence with ratio ``grading`` between
    neighbours, shrinking toward x = 1 on both sides; ``grading = 1`` gives a
    uniform grid on each side.  ``a_floor`` lifts the midpoint coefficients for
    diagnostic runs only.  ``interface`` is ``"shared"``, ``"split"`` or
    ``"auto"`` (split exactly when the weight is strongly degenerate).
    """
    if interface not in ("auto", "shared", "split"):
        raise MeshError(f"interface must be 'auto', 'shared' or 'split', got {interface!r}")
    if int(N) != N or N < 8 or N % 2:
        raise MeshError(f"N must be an even integer >= 8 so that x = 1 is a node, got {N}")
    if not grading >= 1.0:
        raise MeshError(f"grading must be >= 1, got {grading}")
    N = int(N)
    n = N // 2
    hl = _side_widths(1.0 - dom.c, n, grading, fine_last=True)
    hr = _side_widths(dom.d - 1.0, n, grading, fine_last=False)
    nodes = np.concatenate([dom.c + np.concatenate([[0.0], np.cumsum(hl)]),
                            1.0 + np.cumsum(hr)])
    nodes[n] = 1.0
    nodes[-1] = dom.d
    h = np.diff(nodes)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    a_mid = np.maximum(np.asarray(weight.eval(mid)[0], dtype=float), a_floor)
    a_node = np.asarray(weight.eval(nodes)[0], dtype=float)
    if getattr(weight, "degenerate", True):
        a_node[n] = 0.0
    if np.any(a_mid <= 0):
        raise MeshError("weight vanishes at a cell midpoint")
    if interface == "auto":
        split = bool(getattr(weight, "degenerate", True)) and classify(weight, dom) == STRONG
    else:
        split = interface == "split"
    return Mesh(nodes=nodes, h=h, j1=n, grading=float(grading), a_mid=a_mid, a_node=a_node,
                dom=dom, split=split)


class DiscreteOperators:
    """Stiffness, lumped mass and energy of the finite-volume discretisation."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        j = mesh.j1
        k = mesh.a_mid / mesh.h
        if mesh.split:
            # duplicate x = 1; the zero-length edge between the copies carries no flux
            self.x = np.insert(mesh.nodes, j, 1.0)
            self.h = np.insert(mesh.h, j, 0.0)
            k = np.insert(k, j, 0.0)
        else:
            self.x = mesh.nodes.copy()
            self.h = mesh.h.copy()
        self.coupling = k
        m = np.zeros(len(self.x))
        m[:-1] += 0.5 * self.h
        m[1:] += 0.5 * self.h
        self.mass = m
        diag = np.zeros(len(self.x))
        diag[:-1] += k
        diag[1:] += k
        self.k_diag = diag
        self.k_off = -k
        # last degree of freedom of the left side, first of the right side
        self.left_end = j
        self.right_start = j + 1 if mesh.split else j

    @property
    def N(self):
        """Number of cells."""
        return self.mesh.N

    @property
    def ndof(self):
        return len(self.x)

    @property
    def split(self):
        return self.mesh.split

    def _check(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.ndof:
            raise MeshError(f"expected node vector of length {self.ndof}, got {y.shape[0]}")
        return y

    def stiffness_matvec(self, y):
        """K y with natural end rows (no division by the mass)."""
        y = self._check(y)
        flux = self.coupling * np.diff(y, axis=0) if y.ndim == 1 else \
            self.coupling[:, None] * np.diff(y, axis=0)
        out = np.zeros_like(y)
        out[:-1] -= flux
        out[1:] += flux
        return out

    def apply_stiffness(self, y):
        """Discrete -(a y_x)_x at interior nodes; rows 0 and N are returned as 0."""
        Ky = self.stiffness_matvec(y)
        out = Ky / (self.mass if Ky.ndim == 1 else self.mass[:, None])
        out[0] = 0.0
        out[-1] = 0.0
        return out

    def inner(self, y, z):
        """Lumped-mass L2 inner product."""
        return float(np.dot(self.mass * self._check(y), self._check(z)))

    def energy_form(self, y, z=None):
        """sum_k a_k (dy/h)(dz/h) h over cells."""
        y = self._check(y)
        z = y if z is None else self._check(z)
        return float(np.sum(self.coupling * np.diff(y) * np.diff(z)))

    def discrete_energy(self, y, v):
        """E = 1/2 sum m_i v_i^2 + 1/2 sum_k a_k ((y_{k+1} - y_k)/h_k)^2 h_k."""
        v = self._check(v)
        return 0.5 * float(np.dot(self.mass * v, v)) + 0.5 * self.energy_form(y)

    def side_energies(self, y, v):
        """Energy split into (left of x = 1, right of x = 1).

        A shared node at x = 1 gives half its kinetic energy to each side;
        cells are assigned to the side they lie on.
        """
        y, v = self._check(y), self._check(v)
        kin = 0.5 * self.mass * v * v
        pot = 0.5 * self.coupling * np.diff(y) ** 2
        jl, jr = self.left_end, self.right_start
        if self.split:
            left = kin[:jl + 1].sum() + pot[:jl].sum()
            right = kin[jr:].sum() + pot[jr:].sum()
        else:
            left = kin[:jl].sum() + 0.5 * kin[jl] + pot[:jl].sum()
            right = kin[jr + 1:].sum() + 0.5 * kin[jr] + pot[jr:].sum()
        return float(left), float(right)

    def boundary_flux(self, y):
        """Second-order one-sided y_x at x = c and x = d.

        Uses the three nodes nearest each end; on a uniform end patch this is
        (-3 y0 + 4 y1 - y2) / (2h).
        """
        y = self._check(y)
        if self.ndof < 3:
            raise MeshError("need at least two cells for a boundary derivative")
        h = self.h
        h0, h1 = h[0], h[1]
        yc = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * y[0] + (h0 + h1) / (h0 * h1) * y[1]
              - h0 / (h1 * (h0 + h1)) * y[2])
        g0, g1 = h[-1], h[-2]
        yd = ((2 * g0 + g1) / (g0 * (g0 + g1)) * y[-1] - (g0 + g1) / (g0 * g1) * y[-2]
              + g0 / (g1 * (g0 + g1)) * y[-3])
        return yc, yd

    def conservative_flux(self, y):
        """Discrete boundary fluxes a y_x at c and d read off the stiffness end rows.

        Returns ``(-(K y)_0, (K y)_N)``; these are the quantities that pair
        exactly with Dirichlet data in the discrete Green identity.
        """
        y = self._check(y)
        k = self.coupling
        fc = k[0] * (y[1] - y[0])
        fd = k[-1] * (y[-1] - y[-2])
        return fc, fd

    # interior (Dirichlet) blocks ------------------------------------------------

    def interior_bands(self):
        """(diag, offdiag) of K restricted to nodes 1..N-1."""
        return self.k_diag[1:-1].copy(), self.k_off[1:-1].copy()

    def eigenmodes(self, count):
        """Lowest ``count`` Dirichlet eigenpairs of K phi = lam M phi.

        Modes are returned as full node vectors (zero at both ends), normalised
        in the lumped inner product.
        """
        d, e = self.interior_bands()
        mi = self.mass[1:-1]
        s = 1.0 / np.sqrt(mi)
        dd = d * s * s
        ee = e * s[:-1] * s[1:]
        count = int(min(max(count, 1), len(dd)))
        lam, vec = eigh_tridiagonal(dd, ee, select="i", select_range=(0, count - 1))
        phi = np.zeros((self.ndof, count))
        phi[1:-1] = vec * s[:, None]
        return lam, phi
