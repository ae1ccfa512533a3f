"""Degenerate stiffness coefficients a(x) and the constants derived from them.

A weight vanishes at the interior point x = 1 of the interval [c, d] and is
positive elsewhere.  Three variants are supported:

``SymmetricPower``   a(x) = |x - 1|**p
``TwoSidedPower``    a(x) = (1 - x)**(2 p1) left of 1, (x - 1)**(2 p2) right of 1
``Tabulated``        samples (x_i, a_i[, a'_i]) interpolated by monotone cubics
                     in log-log coordinates on each side of the singularity

``ConstantWeight`` (a = const, no degeneracy) exists only to calibrate the
discretisation against the classical string; the constant-producing functions
below refuse it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import (ClassificationError, DomainError, InvalidExponentError,
                     WeightError)

WEAK = "Weak"
STRONG = "Strong"

# |x - 1| below this is treated as the singular point itself
SINGULAR_EXCLUSION = 1e-12


@dataclass(frozen=True)
class DomainSpec:
    """Interval [c, d] around the singular point plus the monotonicity onsets.

    ``x1star`` and ``x2star`` default to ``c`` and ``d``.
    """

    c: float = 0.0
    d: float = 2.0
    x1star: float | None = None
    x2star: float | None = None

    def __post_init__(self):
        if self.x1star is None:
            object.__setattr__(self, "x1star", float(self.c))
        if self.x2star is None:
            object.__setattr__(self, "x2star", float(self.d))
        problems = self.violations()
        if problems:
            raise DomainError("; ".join(problems))

    def violations(self):
        out = []
        if not (0.0 <= self.c < 1.0 < self.d <= 2.0):
            out.append(f"need 0 <= c < 1 < d <= 2, got c={self.c}, d={self.d}")
        if not (self.c <= self.x1star < 1.0):
            out.append(f"need c <= x1star < 1, got x1star={self.x1star}")
        if not (1.0 < self.x2star <= self.d):
            out.append(f"need 1 < x2star <= d, got x2star={self.x2star}")
        return out

    def contains(self, x, rtol=1e-14):
        x = np.asarray(x, dtype=float)
        tol = rtol * (self.d - self.c)
        return (x >= self.c - tol) & (x <= self.d + tol)


class WeightSpec:
    """Common interface: ``eval(x) -> (a, da)`` for scalar or array ``x``."""

    degenerate = True

    def eval(self, x):
        raise NotImplementedError

    def a(self, x):
        return self.eval(x)[0]


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


@dataclass(frozen=True)
class SymmetricPower(WeightSpec):
    """a(x) = |x - 1|**p with 0 < p < 2."""

    p: float

    def __post_init__(self):
        if not (0.0 < self.p < 2.0):
            raise WeightError(f"SymmetricPower exponent must lie in (0, 2), got p={self.p}")

    def eval(self, x):
        x, scalar = _as_array(x)
        s = x - 1.0
        r = np.abs(s)
        a = r ** self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(r > 0, self.p * np.sign(s) * r ** (self.p - 1.0), np.nan)
        if scalar:
            return float(a), float(da)
        return a, da

    def side_exponents(self):
        return self.p, self.p


@dataclass(frozen=True)
class TwoSidedPower(WeightSpec):
    """a(x) = (1 - x)**(2 p1) on [c, 1], (x - 1)**(2 p2) on (1, d].

    Both exponents must satisfy 0 < p_i < 1 so that the degeneracy exponent
    2 p_i stays below 2.
    """

    p1: float
    p2: float

    def __post_init__(self):
        for name, val in (("p1", self.p1), ("p2", self.p2)):
            if not (0.0 < val < 1.0):
                raise WeightError(f"TwoSidedPower {name} must lie in (0, 1) so that 2*{name} < 2, got {val}")

    def eval(self, x):
        x, scalar = _as_array(x)
        s = x - 1.0
        r = np.abs(s)
        e = np.where(s < 0, 2.0 * self.p1, 2.0 * self.p2)
        a = r ** e
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(r > 0, e * np.sign(s) * r ** (e - 1.0), np.nan)
        if scalar:
            return float(a), float(da)
        return a, da

    def side_exponents(self):
        return 2.0 * self.p1, 2.0 * self.p2


@dataclass(frozen=True)
class ConstantWeight(WeightSpec):
    """Non-degenerate a(x) = value; calibration only."""

    value: float = 1.0
    degenerate = False

    def __post_init__(self):
        if not self.value > 0:
            raise WeightError("ConstantWeight value must be positive")

    def eval(self, x):
        x, scalar = _as_array(x)
        a = np.full_like(x, self.value)
        da = np.zeros_like(x)
        if scalar:
            return float(a), float(da)
        return a, da


class _LogLogSide:
    """Interpolant of log a against log|x - 1| on one side of the singularity.

    Between the innermost sample and x = 1 the weight is continued as the
    power law matching value and log-slope at that sample.
    """

    def __init__(self, r, a, da=None, sign=1.0):
        order = np.argsort(r)
        r, a = r[order], a[order]
        t = np.log(r)
        L = np.log(a)
        if da is None:
            self.interp = PchipInterpolator(t, L, extrapolate=False)
        else:
            # log-slope dL/dt = (x - 1) a' / a
            slopes = sign * r * da[order] / a
            self.interp = CubicHermiteSpline(t, L, slopes, extrapolate=False)
        self.t0, self.t1 = t[0], t[-1]
        self.L0 = L[0]
        self.s0 = float(self.interp(self.t0, 1))
        self.sign = sign

    def eval(self, r):
        """Return (a, log-slope) at distances ``r > 0`` from the singularity."""
        t = np.log(r)
        inner = t < self.t0
        tc = np.clip(t, self.t0, self.t1)
        L = np.where(inner, self.L0 + self.s0 * (t - self.t0), self.interp(tc))
        s = np.where(inner, self.s0, self.interp(tc, 1))
        return np.exp(L), s


@dataclass(frozen=True, eq=False)
class Tabulated(WeightSpec):
    """Weight given by samples.

    ``nodes`` must be strictly increasing, contain a node at x = 1 (to within
    1e-9, snapped to 1) where ``a_values`` is exactly zero, and ``a`` must be
    positive at every other node.  ``da_values`` are optional; when supplied
    they fix the node slopes of the interpolant (the value at the singular
    node is ignored).
    """

    nodes: np.ndarray
    a_values: np.ndarray
    da_values: np.ndarray | None = None
    _left: _LogLogSide = field(init=False, repr=False)
    _right: _LogLogSide = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float).copy()
        a = np.asarray(self.a_values, dtype=float)
        da = None if self.da_values is None else np.asarray(self.da_values, dtype=float)
        if x.ndim != 1 or a.shape != x.shape or (da is not None and da.shape != x.shape):
            raise WeightError("nodes, a_values (and da_values) must be 1-D arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise WeightError("tabulated nodes must be strictly increasing")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise WeightError("tabulated weight values must be finite and nonnegative")
        j = int(np.argmin(np.abs(x - 1.0)))
        if abs(x[j] - 1.0) > 1e-9:
            raise WeightError("tabulated weight needs a node at x = 1")
        x[j] = 1.0
        if a[j] != 0.0:
            raise WeightError("tabulated weight must vanish exactly at the node x = 1")
        zeros = np.flatnonzero(a == 0.0)
        if zeros.size != 1:
            bad = [float(x[k]) for k in zeros if k != j]
            raise WeightError(f"tabulated weight vanishes away from x = 1 at {bad}")
        if j < 2 or len(x) - j - 1 < 2:
            raise WeightError("tabulated weight needs at least two nodes on each side of x = 1")
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "a_values", a)
        object.__setattr__(self, "da_values", da)
        left = _LogLogSide(1.0 - x[:j], a[:j], None if da is None else da[:j], sign=-1.0)
        right = _LogLogSide(x[j + 1:] - 1.0, a[j + 1:], None if da is None else da[j + 1:], sign=1.0)
        for side, name in ((left, "left"), (right, "right")):
            if not side.s0 > 0:
                raise WeightError(f"tabulated weight does not decay toward x = 1 on the {name} side")
        object.__setattr__(self, "_left", left)
        object.__setattr__(self, "_right", right)

    @property
    def singular_index(self):
        return int(np.flatnonzero(self.a_values == 0.0)[0])

    def eval(self, x):
        x, scalar = _as_array(x)
        lo, hi = self.nodes[0], self.nodes[-1]
        tol = 1e-14 * (hi - lo)
        if np.any((x < lo - tol) | (x > hi + tol)):
            raise DomainError(f"x outside tabulated range [{lo}, {hi}]")
        s = x - 1.0
        r = np.abs(s)
        a = np.zeros_like(x)
        da = np.full_like(x, np.nan)
        for mask, side in ((s < 0, self._left), (s > 0, self._right)):
            if np.any(mask):
                rr = np.maximum(r[mask], 1e-300)
                av, slope = side.eval(rr)
                a[mask] = av
                # slope = (x - 1) a'/a  =>  a' = slope * a / (x - 1)
                da[mask] = slope * av / s[mask]
        if scalar:
            return float(a), float(da)
        return a, da

    @classmethod
    def from_function(cls, f, x, with_derivative=None):
        """Sample ``f`` at ``x`` (which must contain 1); ``with_derivative`` adds a' samples."""
        x = np.asarray(x, dtype=float)
        a = np.asarray(f(x), dtype=float)
        da = None if with_derivative is None else np.asarray(with_derivative(x), dtype=float)
        return cls(x, a, da)

    @classmethod
    def from_text(cls, text):
        """Parse two- or three-column whitespace/comma separated numeric text."""
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                vals = [float(v) for v in line.replace(",", " ").split()]
            except ValueError as exc:
                raise WeightError(f"line {lineno}: {exc}") from None
            if len(vals) not in (2, 3):
                raise WeightError(f"line {lineno}: expected 2 or 3 columns, got {len(vals)}")
            rows.append(vals)
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise WeightError("tabulated weight file mixes 2- and 3-column rows")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2] if arr.shape[1] == 3 else None)


def _require_degenerate(w):
    if not getattr(w, "degenerate", True):
        raise WeightError(f"{type(w).__name__} is not degenerate at x = 1; constants undefined")


def evaluate(w: WeightSpec, x, dom: DomainSpec | None = None):
    """Return ``(a, da)`` at ``x``; raises :class:`DomainError` outside ``dom``."""
    if dom is not None and not np.all(dom.contains(x)):
        raise DomainError(f"x outside [{dom.c}, {dom.d}]")
    return w.eval(x)


# ---------------------------------------------------------------------------
# sampling helpers for tabulated weights

def _side_samples(w: Tabulated, lo, hi, per_cell=10):
    """Dense grid on [lo, hi] refining every tabulation cell ``per_cell`` times."""
    x = w.nodes
    inside = x[(x > lo) & (x < hi)]
    pts = np.unique(np.concatenate(([lo], inside, [hi])))
    grid = [np.linspace(pts[k], pts[k + 1], per_cell + 1)[:-1] for k in range(len(pts) - 1)]
    grid.append([hi])
    g = np.concatenate(grid)
    return g[np.abs(g - 1.0) >= SINGULAR_EXCLUSION]


def _log_slope_ratio(w, x):
    a, da = w.eval(x)
    return np.abs(x - 1.0) * np.abs(da) / a


def _sampled_min(w, lo, hi):
    if hi <= lo:
        return float(w.eval(lo)[0])
    g = _side_samples(w, lo, hi)
    return float(np.min(w.eval(g)[0]))


class MuKappa(NamedTuple):
    mu1: float
    kappa1: float
    mu2: float
    kappa2: float


def _mu_kappa_sampled(w, dom, per_cell):
    g_in1 = _side_samples(w, dom.x1star, 1.0, per_cell)
    g_all1 = _side_samples(w, dom.c, 1.0, per_cell)
    g_in2 = _side_samples(w, 1.0, dom.x2star, per_cell)
    g_all2 = _side_samples(w, 1.0, dom.d, per_cell)
    mu1 = float(np.max(_log_slope_ratio(w, g_in1)))
    mu2 = float(np.max(_log_slope_ratio(w, g_in2)))
    sup1 = float(np.max(_log_slope_ratio(w, g_all1)))
    sup2 = float(np.max(_log_slope_ratio(w, g_all2)))
    return MuKappa(mu1, max(1.0, sup1 / mu1), mu2, max(1.0, sup2 / mu2))


def compute_mu_kappa(w: WeightSpec, dom: DomainSpec) -> MuKappa:
    """Degeneracy exponents mu_i (inner suprema) and the ratios kappa_i >= 1.

    mu_i is the supremum of |x - 1| |a'(x)| / a(x) over the inner interval
    adjacent to the singularity, kappa_i mu_i the same supremum over the whole
    side.  Power-law weights have a constant ratio, so kappa_i = 1 exactly.
    """
    _require_degenerate(w)
    if isinstance(w, (SymmetricPower, TwoSidedPower)):
        e1, e2 = w.side_exponents()
        return MuKappa(e1, 1.0, e2, 1.0)
    return _mu_kappa_sampled(w, dom, per_cell=10)


def mu_kappa_sampling_tolerance(w: WeightSpec, dom: DomainSpec) -> float:
    """Change in the sampled mu/kappa between 5x and 10x refinement (0 for closed forms)."""
    if isinstance(w, (SymmetricPower, TwoSidedPower)):
        return 0.0
    fine = _mu_kappa_sampled(w, dom, 10)
    coarse = _mu_kappa_sampled(w, dom, 5)
    return float(max(abs(f - c) for f, c in zip(fine, coarse)))


def local_exponents(w: WeightSpec, nnear: int = 8):
    """Exponent sigma of a ~ C |x - 1|**sigma on each side of the singularity.

    Tabulated weights: least-squares fit in log-log coordinates over the
    ``nnear`` nodes nearest to x = 1 on each side.
    """
    _require_degenerate(w)
    if isinstance(w, (SymmetricPower, TwoSidedPower)):
        return w.side_exponents()
    j = w.singular_index
    x, a = w.nodes, w.a_values
    out = []
    for idx in (np.arange(j - 1, -1, -1)[:nnear], np.arange(j + 1, len(x))[:nnear]):
        use = idx[a[idx] > 0]
        if use.size < 4:
            raise ClassificationError(
                f"need at least 4 usable nodes per side for exponent regression, got {use.size}")
        lr = np.log(np.abs(x[use] - 1.0))
        la = np.log(a[use])
        if np.ptp(lr) < 1e-12:
            raise ClassificationError("exponent regression is ill-conditioned")
        slope = np.polyfit(lr, la, 1)[0]
        out.append(float(slope))
    return tuple(out)


def classify(w: WeightSpec, dom: DomainSpec | None = None) -> str:
    """``"Weak"`` if 1/a is integrable over the domain, else ``"Strong"``.

    Integrability is decided by the local exponent on each side: Weak iff
    both exponents are < 1.  A fitted exponent within 1e-9 of 1 counts as
    Strong because |x - 1|**-1 is not integrable.
    """
    s1, s2 = local_exponents(w)
    return WEAK if max(s1, s2) < 1.0 - 1e-9 else STRONG


class FriedrichsConstants(NamedTuple):
    D1a: float
    D2a: float
    Ca: float
    Da: float
    poincare: float


def _inner_minima(w, dom):
    """min a on [c, x1*] and [x2*, d], plus a(x1*), a(x2*)."""
    a1s = float(w.eval(dom.x1star)[0])
    a2s = float(w.eval(dom.x2star)[0])
    if isinstance(w, (SymmetricPower, TwoSidedPower)):
        # power weights decrease toward 1 on each whole side
        return a1s, a2s, a1s, a2s
    return _sampled_min(w, dom.c, dom.x1star), _sampled_min(w, dom.x2star, dom.d), a1s, a2s


def friedrichs_constants(w: WeightSpec, dom: DomainSpec, mu1=None, mu2=None) -> FriedrichsConstants:
    """Explicit Friedrichs/Poincare constants of the weighted energy seminorm.

    Returns D1a, D2a (squared side constants of the first estimate), Ca (not
    squared) of the second estimate, Da = max(sqrt(D1a), sqrt(D2a)) and the
    Poincare constant min(Da, Ca).
    """
    _require_degenerate(w)
    if mu1 is None or mu2 is None:
        mk = compute_mu_kappa(w, dom)
        mu1 = mk.mu1 if mu1 is None else mu1
        mu2 = mk.mu2 if mu2 is None else mu2
    for name, mu in (("mu1", mu1), ("mu2", mu2)):
        if not (0.0 < mu < 2.0):
            raise InvalidExponentError(f"{name}={mu} outside (0, 2); constants blow up")
    c, d, x1, x2 = dom.c, dom.d, dom.x1star, dom.x2star
    min1, min2, a1s, a2s = _inner_minima(w, dom)
    D1a = (x1 - c) * (2.0 - x1 - c) / (2.0 * min1) + (1.0 - x1) ** 2 / (a1s * (2.0 - mu1))
    D2a = (d - x2) * (d + x2 - 2.0) / (2.0 * min2) + (x2 - 1.0) ** 2 / (a2s * (2.0 - mu2))
    Ca2 = 4.0 * max((1.0 - c) ** mu1 / min1, (1.0 - x1) ** mu1 / a1s,
                    (d - 1.0) ** mu2 / min2, (x2 - 1.0) ** mu2 / a2s)
    Ca = math.sqrt(Ca2)
    Da = max(math.sqrt(D1a), math.sqrt(D2a))
    return FriedrichsConstants(D1a, D2a, Ca, Da, min(Da, Ca))


def _time_from(mu_max, Ca, poincare):
    return (max(4.0, Ca * Ca) + poincare * mu_max) / (2.0 - mu_max)


def observability_time(w: WeightSpec, dom: DomainSpec) -> float:
    """Minimal horizon T_a beyond which boundary observability is guaranteed."""
    mk = compute_mu_kappa(w, dom)
    fc = friedrichs_constants(w, dom, mk.mu1, mk.mu2)
    return _time_from(max(mk.mu1, mk.mu2), fc.Ca, fc.poincare)


def check_slope_conditions(w: WeightSpec, dom: DomainSpec, n: int = 256, mu1=None, mu2=None,
                           rtol: float = 1e-12) -> bool:
    """Log-slope conditions on the outer intervals [c, x1*] and [x2*, d].

    Checks a'/a >= -mu1/(1 - x) on [c, x1*] and a'/a <= mu2/(x - 1) on
    [x2*, d] at ``n`` points each; degenerate intervals pass vacuously.
    """
    if mu1 is None or mu2 is None:
        mk = compute_mu_kappa(w, dom)
        mu1, mu2 = mk.mu1, mk.mu2
    ok = True
    if dom.x1star > dom.c:
        x = np.linspace(dom.c, dom.x1star, n)
        a, da = w.eval(x)
        lhs, rhs = da / a, -mu1 / (1.0 - x)
        ok &= bool(np.all(lhs >= rhs - rtol * np.abs(rhs)))
    if dom.x2star < dom.d:
        x = np.linspace(dom.x2star, dom.d, n)
        a, da = w.eval(x)
        lhs, rhs = da / a, mu2 / (x - 1.0)
        ok &= bool(np.all(lhs <= rhs + rtol * np.abs(rhs)))
    return ok


def envelope_lower_bounds(w: WeightSpec, dom: DomainSpec, x, mk: MuKappa | None = None):
    """Power-law lower envelopes of a at ``x``.

    Returns ``(bound_global, bound_inner)``.  The global envelope uses the
    exponent kappa_i mu_i anchored at a(c) / a(d) and holds on each whole
    side; the inner one uses mu_i anchored at a(x1*) / a(x2*) and is NaN
    outside [x1*, x2*], where it makes no claim.
    """
    if mk is None:
        mk = compute_mu_kappa(w, dom)
    xa, scalar = _as_array(x)
    if not np.all(dom.contains(xa)):
        raise DomainError(f"x outside [{dom.c}, {dom.d}]")
    c, d, x1, x2 = dom.c, dom.d, dom.x1star, dom.x2star
    ac, ad = w.eval(c)[0], w.eval(d)[0]
    a1s, a2s = w.eval(x1)[0], w.eval(x2)[0]
    left = xa <= 1.0
    r = np.abs(xa - 1.0)
    e1, e2 = mk.kappa1 * mk.mu1, mk.kappa2 * mk.mu2
    glob = np.where(left, ac * (r / (1.0 - c)) ** e1, ad * (r / (d - 1.0)) ** e2)
    inner = np.where(left, a1s * (r / (1.0 - x1)) ** mk.mu1, a2s * (r / (x2 - 1.0)) ** mk.mu2)
    inner = np.where((xa >= x1) & (xa <= x2), inner, np.nan)
    if scalar:
        return float(glob), float(inner)
    return glob, inner


@dataclass(frozen=True)
class DegeneracyReport:
    mu1: float
    mu2: float
    kappa1: float
    kappa2: float
    degeneracy_class: str
    D1a: float
    D2a: float
    Ca: float
    Da: float
    poincare: float
    Ta: float
    slope_conditions_ok: bool
    exact: bool
    a_c: float
    a_d: float
    sampling_tolerance: float = 0.0

    @property
    def mu_max(self):
        return max(self.mu1, self.mu2)

    @property
    def Ca2(self):
        return self.Ca * self.Ca

    @property
    def Da2(self):
        return self.Da * self.Da

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["class"] = out.pop("degeneracy_class")
        out["Ca2"] = self.Ca2
        out["Da2"] = self.Da2
        return out


def analyze(w: WeightSpec, dom: DomainSpec) -> DegeneracyReport:
    """Every closed-form constant for ``w`` on ``dom`` in one report."""
    mk = compute_mu_kappa(w, dom)
    fc = friedrichs_constants(w, dom, mk.mu1, mk.mu2)
    Ta = _time_from(max(mk.mu1, mk.mu2), fc.Ca, fc.poincare)
    exact = isinstance(w, (SymmetricPower, TwoSidedPower))
    return DegeneracyReport(
        mu1=mk.mu1, mu2=mk.mu2, kappa1=mk.kappa1, kappa2=mk.kappa2,
        degeneracy_class=classify(w, dom),
        D1a=fc.D1a, D2a=fc.D2a, Ca=fc.Ca, Da=fc.Da, poincare=fc.poincare, Ta=Ta,
        slope_conditions_ok=check_slope_conditions(w, dom, mu1=mk.mu1, mu2=mk.mu2),
        exact=exact,
        a_c=float(w.eval(dom.c)[0]), a_d=float(w.eval(dom.d)[0]),
        sampling_tolerance=0.0 if exact else mu_kappa_sampling_tolerance(w, dom),
    )


def observability_constant(report: DegeneracyReport, dom: DomainSpec, T: float) -> float:
    """Lower bound C_T for the unweighted observability constant at horizon ``T``.

    Nonpositive for T <= T_a, where no observability is guaranteed.
    """
    scale = max((1.0 - dom.c) * report.a_c, (dom.d - 1.0) * report.a_d)
    return observability_bound(report, T) / scale


def observability_bound(report: DegeneracyReport, T: float) -> float:
    """Coefficient of E(0) on the right of the weighted observability inequality."""
    mu = report.mu_max
    return (2.0 - mu) * T - max(4.0, report.Ca2) - report.poincare * mu
