"""Null control by the Hilbert Uniqueness Method, and where it fails.

Two boundary controls drive random low-frequency data to rest for a weak
degeneration.  With a strong degeneration and the right control only, data
on the left of x = 1 cannot be reached at all: the conjugate gradient
iteration finds that the Gramian annihilates them and stops.

Run:  python3 demos/04_null_control.py   (about ten seconds)
"""
import numpy as np

from degenwave import DiscreteOperators, DomainSpec, SymmetricPower, analyze, build_mesh, solve_hum
from degenwave.observability import low_frequency_ensemble
from degenwave.oracle import one_sided_bump

dom = DomainSpec(0.0, 2.0)

w = SymmetricPower(0.5)
ops = DiscreteOperators(build_mesh(dom, 128, w))
T = 1.2 * analyze(w, dom).Ta
Y0, Y1 = low_frequency_ensemble(ops, 1, seed=3)
controls, rep = solve_hum(ops, Y0[0], Y1[0], T, weight=w)
print(f"weak, both ends: {rep.iterations} CG iterations, terminal/initial norm "
      f"{rep.terminal_ratio:.1e}, ||f||_L2 = {controls.l2_norm():.3f}")

w = SymmetricPower(1.5)
ops = DiscreteOperators(build_mesh(dom, 128, w))
T = 1.2 * analyze(w, dom).Ta
y0 = one_sided_bump(ops, "left")
_, rep = solve_hum(ops, y0, np.zeros(ops.ndof), T, active="RightOnly", weight=w, filter_frac=None,
                   raise_on_failure=False)
print(f"strong, right end only: decoupled = {rep.decoupled}, terminal/initial norm "
      f"{rep.terminal_ratio:.3f}")
