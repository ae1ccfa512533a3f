"""Degeneracy constants of power weights and the blow-up of the critical time.

For a(x) = |x - 1|**p on (0, 2) the critical time T_a grows without bound as
p approaches 2, while for small p it drops to 2, the classical crossing time
of two joined strings.  The table below shows this together with the
weak/strong split at p = 1.

Run:  python3 demos/01_weight_constants.py
"""
import numpy as np

from degenwave import DomainSpec, SymmetricPower, analyze, envelope_lower_bounds

dom = DomainSpec(0.0, 2.0)

print(f"{'p':>6} {'class':>7} {'Ca^2':>6} {'Da^2':>8} {'poincare':>9} {'Ta':>9}")
for p in (1e-6, 0.25, 0.5, 1.0, 1.5, 1.75, 1.9, 1.99):
    r = analyze(SymmetricPower(p), dom)
    print(f"{p:6g} {r.degeneracy_class:>7} {r.Ca2:6.2f} {r.Da2:8.3f} {r.poincare:9.4f} {r.Ta:9.3f}")

# the power weight sits exactly on its own lower envelope
w = SymmetricPower(0.8)
x = np.linspace(0, 2, 9)
glob, inner = envelope_lower_bounds(w, dom, x)
print("\nx        a(x)     envelope")
for xi, ai, gi in zip(x, w.eval(x)[0], glob):
    print(f"{xi:4.2f}  {ai:8.5f}  {gi:8.5f}")
