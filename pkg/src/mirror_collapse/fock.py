"""Dense operators on the one-photon sector tensored with a truncated mirror Fock space.

Joint-space layout: the photon index is outermost, so a joint vector is
``np.kron(photon, mirror)``.  Photon index 0 is ``|0>_A |1>_B`` (photon in
arm B), index 1 is ``|1>_A |0>_B`` (photon in arm A).
"""

import math

import numpy as np
import scipy.linalg

# photon basis indices
ARM_B = 0
ARM_A = 1

#: pre-renormalization probability allowed outside the truncated space
LEAKAGE_BUDGET = 1e-8


class TruncationError(ValueError):
    """A state does not fit in the retained Fock levels."""


def check_levels(n_levels):
    if int(n_levels) != n_levels or n_levels < 2:
        raise ValueError(f"n_levels must be an integer >= 2, got {n_levels!r}")
    return int(n_levels)


def truncation_levels(alpha_max):
    """Fock levels needed to hold coherent amplitudes up to ``alpha_max``.

    Poisson-tail rule ``ceil(a**2 + 8 a + 12)``; keeps the leakage of
    ``|alpha|`` <= ``alpha_max`` below about 1e-12.
    """
    a = abs(alpha_max)
    return max(2, math.ceil(a * a + 8 * a + 12))


def annihilation(n_levels):
    n = check_levels(n_levels)
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def creation(n_levels):
    return annihilation(n_levels).conj().T


def number(n_levels):
    n = check_levels(n_levels)
    return np.diag(np.arange(n, dtype=float)).astype(complex)


def quadrature(n_levels):
    """``b + b^dagger``; the mirror position is ``sigma`` times this."""
    b = annihilation(n_levels)
    return b + b.conj().T


def basis(n_levels, k):
    n = check_levels(n_levels)
    v = np.zeros(n, dtype=complex)
    v[k] = 1.0
    return v


def coherent_state(amplitude, n_levels, max_leakage=LEAKAGE_BUDGET, return_leakage=False):
    """Truncated, renormalized coherent state ``|amplitude>``.

    The probability weight that falls outside the kept levels is computed
    before renormalization; above ``max_leakage`` a :class:`TruncationError`
    is raised.
    """
    n = check_levels(n_levels)
    amplitude = complex(amplitude)
    k = np.arange(n)
    r2 = abs(amplitude) ** 2
    if amplitude == 0:
        c = np.zeros(n, dtype=complex)
        c[0] = 1.0
        leakage = 0.0
    else:
        # log-space to avoid overflow of amplitude**k / sqrt(k!)
        logmag = -0.5 * r2 + k * math.log(abs(amplitude)) - 0.5 * np.array(
            [math.lgamma(j + 1) for j in k])
        c = np.exp(logmag) * np.exp(1j * k * np.angle(amplitude))
        leakage = max(0.0, 1.0 - float(np.sum(np.abs(c) ** 2)))
    if leakage > max_leakage:
        raise TruncationError(
            f"coherent amplitude {abs(amplitude):.3g} leaks {leakage:.2e} "
            f"outside {n} levels (budget {max_leakage:.1e})")
    c = c / np.linalg.norm(c)
    if return_leakage:
        return c, leakage
    return c


def matrix_exp(a):
    """Matrix exponential by scaling and squaring (Pade core)."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix_exp needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix_exp input has non-finite entries")
    # ||exp(a)|| <= exp(mu(a)), mu the log-norm: largest eigenvalue of the Hermitian part
    mu = np.linalg.eigvalsh(0.5 * (a + a.conj().T))[-1]
    if mu > 700:
        raise ValueError(f"matrix_exp would overflow (log-norm {mu:.3g})")
    return scipy.linalg.expm(a)


def tensor(photon_part, mirror_part):
    photon_part = np.asarray(photon_part)
    mirror_part = np.asarray(mirror_part)
    if photon_part.shape != (2, 2):
        raise ValueError(f"photon operator must be 2x2, got {photon_part.shape}")
    if mirror_part.ndim != 2 or mirror_part.shape[0] != mirror_part.shape[1]:
        raise ValueError(f"mirror operator must be square, got {mirror_part.shape}")
    return np.kron(photon_part, mirror_part)


def tensor_state(photon_vec, mirror_vec):
    photon_vec = np.asarray(photon_vec)
    if photon_vec.shape != (2,):
        raise ValueError(f"photon state must have length 2, got {photon_vec.shape}")
    return np.kron(photon_vec, mirror_vec)


def embed_mirror(op):
    """``I_photon (x) op``."""
    return tensor(np.eye(2), op)


def joint_levels(op):
    """Mirror dimension of a joint-space operator or state."""
    size = np.shape(op)[-1]
    if size % 2:
        raise ValueError(f"joint dimension {size} is not 2 * n_levels")
    return size // 2


def partial_trace_mirror(rho):
    """Reduce a joint operator to the 2x2 photon matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square joint matrix, got {rho.shape}")
    n = joint_levels(rho)
    return np.einsum("ajbj->ab", rho.reshape(2, n, 2, n))


def trace(a):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"trace needs a square matrix, got {a.shape}")
    return complex(np.trace(a))


def offdiag_block(rho):
    """Mirror operator ``rho_OD`` with ``<1_A 0_B| rho |0_A 1_B> = rho_OD / 2``."""
    n = joint_levels(rho)
    return 2.0 * np.asarray(rho)[ARM_A * n:(ARM_A + 1) * n, ARM_B * n:(ARM_B + 1) * n]


def is_hermitian(a, atol=1e-12):
    a = np.asarray(a)
    return a.shape[0] == a.shape[1] and np.allclose(a, a.conj().T, rtol=0.0, atol=atol)


def commutator(a, b):
    return a @ b - b @ a
