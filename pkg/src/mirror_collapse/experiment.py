"""Mirror interferometer: parameters, Hamiltonians and closed-form visibilities.

Units: hbar = 1 internally, so Hamiltonians are angular frequencies.  The
mirror position is ``q = sigma (b + b^dagger)`` and carries the length unit
named by ``ExperimentParams.length_unit``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import fock

HBAR = 1.0


class UnitError(ValueError):
    """Quantities with different length units were combined."""


@dataclass(frozen=True)
class ExperimentParams:
    """Interferometer + mirror constants.

    ``G`` may be given directly, or derived as ``omega_c * sigma / L``.  When
    ``M`` is given, ``sigma`` must equal ``sqrt(hbar / (2 M omega_m))``.
    """

    omega_m: float
    G: float = None
    sigma: float = 1.0
    omega_c: float = 1.0
    M: float = None
    L: float = None
    length_unit: str = "arb"
    rtol: float = 1e-9

    def __post_init__(self):
        for name in ("omega_m", "sigma", "omega_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("M", "L"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.L is not None:
            derived = self.omega_c * self.sigma / self.L
            if self.G is None:
                object.__setattr__(self, "G", derived)
            elif not math.isclose(self.G, derived, rel_tol=self.rtol):
                raise ValueError(
                    f"G={self.G} inconsistent with omega_c*sigma/L={derived}")
        if self.G is None:
            raise ValueError("either G or L must be supplied")
        if not self.G >= 0:
            raise ValueError(f"G must be non-negative, got {self.G!r}")
        if self.M is not None:
            expected = math.sqrt(HBAR / (2 * self.M * self.omega_m))
            if not math.isclose(self.sigma, expected, rel_tol=self.rtol):
                raise ValueError(
                    f"sigma={self.sigma} inconsistent with sqrt(hbar/2M omega_m)={expected}")

    @classmethod
    def from_kappa(cls, kappa, omega_m=1.0, sigma=1.0, **kwargs):
        return cls(omega_m=omega_m, G=kappa * omega_m, sigma=sigma, **kwargs)

    @property
    def kappa(self):
        return self.G / self.omega_m

    @property
    def ell(self):
        """Maximum excursion of the mirror, ``4 kappa sigma``."""
        return 4.0 * self.kappa * self.sigma

    @property
    def g(self):
        return self.G / self.sigma

    @property
    def mass(self):
        """Mirror mass; derived from ``sigma`` when not supplied."""
        if self.M is not None:
            return self.M
        return HBAR / (2 * self.omega_m * self.sigma ** 2)

    @property
    def period(self):
        return 2 * math.pi / self.omega_m

    def n_levels(self, eta=0.0, t_end=0.0, spread=2.5):
        """Fock truncation for this experiment.

        The coherent excursion reaches ``2 kappa``; collapse noise adds a
        momentum diffusion with amplitude spread ``sqrt(eta sigma^2 t)``, of
        which ``spread`` standard deviations are retained.
        """
        diffusion = math.sqrt(max(eta, 0.0) * self.sigma ** 2 * max(t_end, 0.0))
        return fock.truncation_levels(2 * self.kappa + spread * diffusion)


@dataclass(frozen=True)
class BakerHausdorffFactors:
    N_t: complex
    alpha_t: complex
    beta_t: complex


@dataclass(frozen=True)
class VisibilityRecord:
    t: float
    f: complex
    nu: float
    source: str  # "closed_form" | "master_equation" | "monte_carlo"


def build_hamiltonian(p, n_levels, include_photon_energy=True):
    """Joint Hamiltonian on the one-photon sector (angular-frequency units)."""
    n = fock.check_levels(n_levels)
    b = fock.annihilation(n)
    mirror = p.omega_m * fock.number(n)
    proj_a = np.diag([0.0, 1.0])
    h = fock.tensor(np.eye(2), mirror) - p.G * fock.tensor(proj_a, b + b.conj().T)
    if include_photon_energy:
        # a_A^+ a_A + a_B^+ a_B = 1 on the one-photon sector
        h = h + p.omega_c * np.eye(2 * n)
    return h


def arm_hamiltonians(p, n_levels):
    """Mirror Hamiltonians ``(H_A, H_B)`` for the photon in arm A or arm B."""
    n = fock.check_levels(n_levels)
    h_b = p.omega_m * fock.number(n)
    h_a = h_b - p.G * fock.quadrature(n)
    return h_a, h_b


def position_operator(p, n_levels):
    return p.sigma * fock.quadrature(n_levels)


def coherent_amplitude(p, t):
    return p.kappa * (1 - np.exp(-1j * p.omega_m * np.asarray(t)))


def qm_phase(p, t):
    wt = p.omega_m * np.asarray(t)
    return p.kappa ** 2 * (wt - np.sin(wt))


def initial_state(n_levels):
    vac = fock.basis(n_levels, 0)
    return fock.tensor_state(np.array([1.0, 1.0]) / math.sqrt(2), vac)


def analytic_state(p, t, n_levels=None):
    """Exact state at time ``t`` from the vacuum-mirror initial state.

    Returns ``(phase, alpha_t, psi)``: the arm-A branch phase factor, its
    coherent amplitude, and the joint state vector (including the global
    photon phase ``exp(-i omega_c t)``).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if n_levels is None:
        n_levels = p.n_levels()
    phase = np.exp(1j * qm_phase(p, t))
    alpha_t = complex(coherent_amplitude(p, t))
    branch_b = fock.basis(n_levels, 0)
    branch_a = phase * fock.coherent_state(alpha_t, n_levels)
    psi = np.exp(-1j * p.omega_c * t) / math.sqrt(2) * (
        fock.tensor_state(np.array([1.0, 0.0]), branch_b)
        + fock.tensor_state(np.array([0.0, 1.0]), branch_a))
    return complex(phase), alpha_t, psi


def bh_factors(p, t):
    wt = p.omega_m * t
    k2 = p.kappa ** 2
    n_t = np.exp(-k2 * (1 - 1j * wt - np.exp(-1j * wt)))
    alpha_t = p.kappa * (1 - np.exp(-1j * wt))
    beta_t = -p.kappa * (1 - np.exp(1j * wt))
    return BakerHausdorffFactors(complex(n_t), complex(alpha_t), complex(beta_t))


def verify_baker_hausdorff(p, t, n_levels, adjoint=False, pad=None):
    """Relative Frobenius residual of the normal-ordered factorization.

    ``exp(-i H_A t) exp(i H_B t) = N_t exp(alpha_t b^+) exp(beta_t b)``, or with
    ``adjoint=True`` the companion form
    ``exp(i H_B t) exp(-i H_A t) = N_t exp(beta_t b^+) exp(alpha_t b)``.

    Only columns below ``n_levels // 2`` are compared.  The right-hand side
    is exact in any truncation (``exp(beta b)`` only lowers), but the
    truncated ``exp(-i H_A t)`` is corrupted near the edge, so the left-hand
    side is exponentiated in a space padded by ``pad`` extra levels
    (default ``n_levels``) and cut back to ``n_levels`` rows.
    """
    n = fock.check_levels(n_levels)
    work = n + (n if pad is None else int(pad))
    h_a, h_b = arm_hamiltonians(p, work)
    u_a = fock.matrix_exp(-1j * h_a * t)
    u_b = np.diag(np.exp(1j * np.diag(h_b).real * t))
    lhs = (u_b @ u_a if adjoint else u_a @ u_b)[:n, :n]
    b = fock.annihilation(n)
    bd = b.conj().T
    fac = bh_factors(p, t)
    if adjoint:
        rhs = fac.N_t * fock.matrix_exp(fac.beta_t * bd) @ fock.matrix_exp(fac.alpha_t * b)
    else:
        rhs = fac.N_t * fock.matrix_exp(fac.alpha_t * bd) @ fock.matrix_exp(fac.beta_t * b)
    cols = slice(0, n // 2)
    return float(np.linalg.norm(lhs[:, cols] - rhs[:, cols]) / np.linalg.norm(lhs[:, cols]))


def visibility_qm(p, t):
    return np.exp(-p.kappa ** 2 * (1 - np.cos(p.omega_m * np.asarray(t))))


def collapse_exponent(p, eta, t):
    """Extra decay exponent of the off-diagonal factor due to collapse noise."""
    t = np.asarray(t, dtype=float)
    w = p.omega_m
    shape = t - 4.0 / 3.0 * np.sin(w * t) / w + np.sin(2 * w * t) / (6 * w)
    return 3.0 / 16.0 * eta * p.ell ** 2 * shape


def f_closed_form(p, eta, t):
    """Off-diagonal factor ``f = Tr_m rho_OD(t)`` in closed form."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    wt = p.omega_m * np.asarray(t, dtype=float)
    k2 = p.kappa ** 2
    log_f = 1j * k2 * (wt - np.sin(wt)) - k2 * (1 - np.cos(wt)) - collapse_exponent(p, eta, t)
    return np.exp(log_f)


def visibility_collapse(p, eta, t):
    return np.abs(f_closed_form(p, eta, t))


def damping_exponent(p, eta):
    """Visibility loss exponent over one mirror period."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return 3.0 / 16.0 * eta * p.ell ** 2 * p.period


def eta_for_damping(p, lam):
    """Inverse of :func:`damping_exponent`."""
    return lam / (3.0 / 16.0 * p.ell ** 2 * p.period)


def closed_form_records(p, eta, t_grid):
    f = np.atleast_1d(f_closed_form(p, eta, t_grid))
    return [VisibilityRecord(float(t), complex(fv), float(abs(fv)), "closed_form")
            for t, fv in zip(np.atleast_1d(t_grid), f)]
