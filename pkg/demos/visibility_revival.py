"""Visibility of the interference pattern over two mirror periods.

Without collapse noise the mirror returns to its initial state after each
period and the visibility revives to one.  Collapse noise damps the revival
by a fixed factor per period.  The master equation is integrated alongside
the closed form as a cross-check.
"""

import numpy as np

from mirror_collapse import ExperimentParams, damping_exponent, eta_for_damping, solve_visibility
from mirror_collapse import visibility_collapse, visibility_qm

p = ExperimentParams.from_kappa(1.0)
eta = eta_for_damping(p, 0.3)
t = np.linspace(0, 2 * p.period, 17)

numeric = solve_visibility(p, eta, t)
print(f"kappa = 1, damping per period Lambda = {damping_exponent(p, eta):.3f}, "
      f"Fock truncation N = {numeric.n_levels}")
print(f"{'t/T':>6} {'nu (no noise)':>14} {'nu (closed)':>12} {'nu (master)':>12}")
for ti, q, c, m in zip(t / p.period, visibility_qm(p, t), visibility_collapse(p, eta, t), numeric.nu):
    print(f"{ti:6.3f} {q:14.6f} {c:12.6f} {m:12.6f}")
print(f"revival after one period: {visibility_collapse(p, eta, p.period):.6f} "
      f"= exp(-Lambda) = {np.exp(-damping_exponent(p, eta)):.6f}")
