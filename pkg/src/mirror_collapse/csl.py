"""CSL decay rate of a displaced uniform cube, and the QMUPL strength it implies.

Lengths carry a ``length_unit`` tag (``"cm"``, ``"m"``, ``"arb"``...); any
combination of objects with different tags raises :class:`UnitError`.
Times are whatever unit ``gamma`` uses.

The smeared density of a cube is a product of per-axis error-function
profiles ``phi``, so every overlap integral factorizes into 1D integrals:
``Gamma(d) = gamma D0^2 [A(0)^3 - A(d_x) A(d_y) A(d_z)]`` with
``A(s) = int phi(u + s) phi(u) du``.  This holds for any direction of ``d``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import brentq

from .experiment import UnitError, damping_exponent

GL_ORDER = 64
#: S*sqrt(alpha) at and above which eta_csl uses the asymptotic coefficient
ASYMPTOTIC_THRESHOLD = 10.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class CslParams:
    gamma: float  # length^3 / time
    alpha: float  # 1 / length^2
    length_unit: str = "arb"

    def __post_init__(self):
        if not (self.gamma > 0 and self.alpha > 0):
            raise ValueError("gamma and alpha must be positive")


@dataclass(frozen=True)
class DensityProfile:
    D0: float  # 1 / length^3
    S: float  # length
    kind: str = "uniform_cube"
    length_unit: str = "arb"

    def __post_init__(self):
        if self.kind != "uniform_cube":
            raise ValueError(f"unsupported profile kind {self.kind!r}")
        if not (self.D0 > 0 and self.S > 0):
            raise ValueError("D0 and S must be positive")

    @property
    def mass(self):
        """Total number ``D0 S^3``."""
        return self.D0 * self.S ** 3


@dataclass(frozen=True)
class EtaResult:
    value: float
    method: str  # "asymptotic" | "exact"


def check_units(*objs):
    units = {o.length_unit for o in objs}
    if len(units) > 1:
        raise UnitError(f"mixed length units: {sorted(units)}")
    return units.pop()


def axis_profile(u, S, alpha):
    """Per-axis smeared indicator of ``[-S/2, S/2]``."""
    r = math.sqrt(alpha / 2)
    u = np.asarray(u, dtype=float)
    return 0.5 * (special.erf(r * (u + S / 2)) - special.erf(r * (u - S / 2)))


def _axis_profile_derivative(u, S, alpha):
    c = math.sqrt(alpha / (2 * math.pi))
    u = np.asarray(u, dtype=float)
    return c * (np.exp(-alpha / 2 * (u + S / 2) ** 2) - np.exp(-alpha / 2 * (u - S / 2) ** 2))


def smeared_density(z, profile, alpha):
    """``F(z)`` for the cube; ``z`` has shape ``(..., 3)``."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 3:
        raise ValueError("z must have a trailing axis of length 3")
    return profile.D0 * np.prod(axis_profile(z, profile.S, alpha), axis=-1)


def _panels(edges, width, lo, hi):
    """Breakpoints on ``[lo, hi]``: each edge plus geometric rings of ``width``."""
    pts = {lo, hi}
    for e in edges:
        for k in (0, 0.5, 1, 2, 4, 8):
            for sgn in (-1, 1):
                x = e + sgn * k * width
                if lo < x < hi:
                    pts.add(x)
    pts = np.array(sorted(pts))
    # split long flat stretches too; the integrand is smooth there
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, math.ceil((b - a) / (32 * width)))
        out.extend(np.linspace(a, b, m + 1)[1:])
    return np.array(out)


def _integrate(func, edges, width, lo, hi):
    """Composite Gauss-Legendre over panels refined around ``edges``."""
    pts = _panels(edges, width, lo, hi)
    a, b = pts[:-1, None], pts[1:, None]
    x = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
    w = 0.5 * (b - a) * _GL_WEIGHTS
    return float(np.sum(w * func(x)))


def _support(S, alpha, shift=0.0):
    reach = S / 2 + abs(shift) + 12.0 / math.sqrt(alpha)
    return -reach, reach


def overlap_self(S, alpha):
    """``A(0) = int phi(u)^2 du``."""
    lo, hi = _support(S, alpha)
    return _integrate(lambda u: axis_profile(u, S, alpha) ** 2, (-S / 2, S / 2),
                      1 / math.sqrt(alpha), lo, hi)


def overlap_deficit(s, S, alpha):
    """``B(s) = A(0) - A(s) = 1/2 int [phi(u + s) - phi(u)]^2 du`` (non-negative)."""
    if s == 0:
        return 0.0
    lo, hi = _support(S, alpha, s)
    edges = (-S / 2, S / 2, -S / 2 - s, S / 2 - s)
    return 0.5 * _integrate(lambda u: (axis_profile(u + s, S, alpha) - axis_profile(u, S, alpha)) ** 2,
                            edges, 1 / math.sqrt(alpha), lo, hi)


def gamma_exact(d, profile, csl):
    """``Gamma(d) = 1/2 gamma int [F(x + d) - F(x)]^2 d^3x``.

    ``A0^3 - prod(A0 - B_i)`` is expanded so that small displacements do
    not lose digits to cancellation.
    """
    check_units(profile, csl)
    d = np.asarray(d, dtype=float).reshape(3)
    if not np.all(np.isfinite(d)):
        raise ValueError("displacement must be finite")
    S, alpha = profile.S, csl.alpha
    a0 = overlap_self(S, alpha)
    b = [overlap_deficit(abs(di), S, alpha) for di in d]
    diff = (a0 * a0 * (b[0] + b[1] + b[2])
            - a0 * (b[0] * b[1] + b[0] * b[2] + b[1] * b[2])
            + b[0] * b[1] * b[2])
    return csl.gamma * profile.D0 ** 2 * diff


def cube_integral_I3(S, alpha):
    return 2.0 - 2.0 * math.exp(-alpha * S * S / 4)


def cube_integral_I12(S, alpha):
    """Two transverse-axis integrals; each equals ``J`` below."""
    j = (2 * S * math.sqrt(math.pi / alpha) * math.erf(S * math.sqrt(alpha) / 2)
         - 4 * (1 - math.exp(-alpha * S * S / 4)) / alpha)
    return j * j


def taylor_coefficient_C(profile, alpha):
    """Exact small-displacement coefficient ``C`` with ``Gamma ~ gamma C d^2 / 2``."""
    S = profile.S
    return (profile.D0 ** 2 / 8 * (alpha / math.pi) ** 1.5
            * cube_integral_I12(S, alpha) * cube_integral_I3(S, alpha))


def taylor_coefficient_asymptotic(profile, alpha):
    """Large-cube limit ``D0^2 S^2 sqrt(alpha / pi)``."""
    return profile.D0 ** 2 * profile.S ** 2 * math.sqrt(alpha / math.pi)


def taylor_coefficient_quadrature(profile, alpha):
    """``int (d F / dx)^2 d^3x`` by 1D quadrature (independent of the closed form)."""
    S = profile.S
    lo, hi = _support(S, alpha)
    width = 1 / math.sqrt(alpha)
    deriv = _integrate(lambda u: _axis_profile_derivative(u, S, alpha) ** 2,
                       (-S / 2, S / 2), width, lo, hi)
    return profile.D0 ** 2 * overlap_self(S, alpha) ** 2 * deriv


def eta_csl(csl, profile, threshold=ASYMPTOTIC_THRESHOLD, method=None):
    """QMUPL strength ``eta = gamma C``.

    The asymptotic ``C`` is used when ``S sqrt(alpha) >= threshold``, the
    exact one otherwise; ``method`` forces either.
    """
    check_units(csl, profile)
    if method is None:
        method = "asymptotic" if profile.S * math.sqrt(csl.alpha) >= threshold else "exact"
    if method == "asymptotic":
        c = taylor_coefficient_asymptotic(profile, csl.alpha)
    elif method == "exact":
        c = taylor_coefficient_C(profile, csl.alpha)
    else:
        raise ValueError(f"unknown method {method!r}")
    return EtaResult(csl.gamma * c, method)


def gamma_quadratic(d_mag, profile, csl, exact=True):
    """Small-displacement form ``gamma C d^2 / 2``."""
    check_units(profile, csl)
    c = (taylor_coefficient_C if exact else taylor_coefficient_asymptotic)(profile, csl.alpha)
    return 0.5 * csl.gamma * c * d_mag ** 2


def gamma_linear_regime(d_mag, csl, profile):
    """Large-displacement form ``gamma |d| S^2 D0^2``."""
    check_units(csl, profile)
    return csl.gamma * abs(d_mag) * profile.S ** 2 * profile.D0 ** 2


def crossover_displacement(alpha):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return 2 * math.sqrt(math.pi / alpha)


def _axis(d_mag):
    return np.array([d_mag, 0.0, 0.0])


def crossover_report(profile, csl, far=(10.0, 20.0)):
    """Locate the quadratic-to-linear transition on the exact curve.

    ``slope_intersection``: the quadratic asymptote (exact ``C``) meets the
    line through the origin with the exact curve's large-``d`` slope,
    measured between ``far[0]/sqrt(alpha)`` and ``far[1]/sqrt(alpha)``.
    ``log_slope_point``: where ``d ln Gamma / d ln d`` crosses 3/2.
    """
    alpha = csl.alpha
    dc = crossover_displacement(alpha)
    c = taylor_coefficient_C(profile, alpha)
    d1, d2 = (x / math.sqrt(alpha) for x in far)
    slope = (gamma_exact(_axis(d2), profile, csl) - gamma_exact(_axis(d1), profile, csl)) / (
        (d2 - d1) * csl.gamma)
    d_int = 2 * slope / c

    def log_slope(d, h=1e-3):
        g_hi = gamma_exact(_axis(d * (1 + h)), profile, csl)
        g_lo = gamma_exact(_axis(d * (1 - h)), profile, csl)
        return math.log(g_hi / g_lo) / math.log((1 + h) / (1 - h)) - 1.5

    d_log = brentq(log_slope, 0.1 * dc, d2, xtol=1e-6 * dc)
    within = lambda x: 0.5 * dc <= x <= 2 * dc  # noqa: E731
    return {
        "crossover": dc,
        "slope_intersection": d_int,
        "log_slope_point": d_log,
        "passed": bool(within(d_int) and within(d_log)),
    }


def lambda_csl(csl, profile, p, threshold=ASYMPTOTIC_THRESHOLD):
    """Damping exponent per mirror period with the CSL-derived ``eta``."""
    check_units(csl, profile, p)
    return damping_exponent(p, eta_csl(csl, profile, threshold).value)
