"""Collapse rate of a small cube and its effect on the interferometer.

Shows the quadratic-to-linear crossover of the localization rate against
displacement, then the damping exponent per mirror period for a 10 micron
cube under a weak CSL rate (cm units throughout).
"""

import math

import numpy as np

from mirror_collapse import ExperimentParams, csl

params = csl.CslParams(1.0, 1.0)
cube = csl.DensityProfile(1.0, 100.0)
dc = csl.crossover_displacement(params.alpha)
print(f"crossover displacement 2 sqrt(pi/alpha) = {dc:.4f}")
print(f"{'d sqrt(alpha)':>14} {'exact':>12} {'quadratic':>12} {'linear':>12}")
for d in np.geomspace(0.01, 30, 10):
    print(f"{d:14.4g} {csl.gamma_exact([d, 0, 0], cube, params):12.5g} "
          f"{csl.gamma_quadratic(d, cube, params):12.5g} "
          f"{csl.gamma_linear_regime(d, params, cube):12.5g}")

weak = csl.CslParams(1e-30, 1e10, "cm")
mirror = csl.DensityProfile(6e24, 1e-3, length_unit="cm")
p = ExperimentParams.from_kappa(1.0, omega_m=2 * math.pi * 1e3, sigma=1e-12, length_unit="cm")
eta = csl.eta_csl(weak, mirror)
print(f"\neta = {eta.value:.4g} ({eta.method}), "
      f"damping per period Lambda = {csl.lambda_csl(weak, mirror, p):.3g}")
