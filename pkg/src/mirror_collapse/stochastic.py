"""Monte Carlo unravellings of the collapse dynamics and the Gaussian-ansatz route.

Three ways to estimate ``f(t)``:

``nonlinear``
    norm-preserving collapse equation ``d psi = [-iH dt + sqrt(eta)(q - <q>) dW
    - eta/2 (q - <q>)^2 dt] psi``; ``f`` is the ensemble mean of ``Tr rho_OD``.
``linear``
    linear unravelling ``d psi = [-iH dt + i sqrt(eta) q dW - eta/2 q^2 dt] psi``;
    ``f`` is the ensemble mean of the branch overlap.
``gaussian``
    the linear unravelling solved in position space with a Gaussian trial
    wavefunction; only the coefficient processes are simulated.

All Ito integrals use the left endpoint.  Trajectory ``i`` of an ensemble is
driven by the Wiener path keyed by ``seed_base + i`` (Philox, counter based),
so results do not depend on batching or thread scheduling.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fock
from .experiment import (
    HBAR,
    VisibilityRecord,
    arm_hamiltonians,
    build_hamiltonian,
    collapse_exponent,
)
from .master import NumericalError

SCHEMES = ("nonlinear", "linear", "gaussian")

#: nonlinear trajectories whose squared norm drops below this are aborted
NORM_FLOOR = 1e-24
#: linear trajectories whose squared norm exceeds this are aborted
NORM_CEILING = 1e12
#: maximum tolerated fraction of aborted trajectories
MAX_ABORT_FRACTION = 0.01


def rng(seed):
    """Counter-based generator keyed directly by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


@dataclass(frozen=True)
class WienerPath:
    t_grid: np.ndarray
    dW: np.ndarray
    seed: int

    @property
    def dt(self):
        return np.diff(self.t_grid)

    @property
    def W(self):
        return np.concatenate([[0.0], np.cumsum(self.dW)])


def _check_grid(t_grid):
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing with at least 2 points")
    return t_grid


def generate_path(seed, t_grid):
    t_grid = _check_grid(t_grid)
    dW = rng(seed).standard_normal(len(t_grid) - 1) * np.sqrt(np.diff(t_grid))
    return WienerPath(t_grid, dW, int(seed))


def wiener_increments(seeds, t_grid):
    """Increments for several seeds, shape ``(len(seeds), len(t_grid) - 1)``.

    Row ``k`` equals ``generate_path(seeds[k], t_grid).dW`` bit for bit.
    """
    t_grid = _check_grid(t_grid)
    sd = np.sqrt(np.diff(t_grid))
    out = np.empty((len(seeds), len(sd)))
    for k, seed in enumerate(seeds):
        rng(seed).standard_normal(out=out[k])
    out *= sd
    return out


@dataclass(frozen=True)
class EnsembleEstimate:
    mean: np.ndarray
    std_error: np.ndarray
    n_trajectories: int

    @classmethod
    def from_moments(cls, mean, m2, n):
        """From the sample mean and ``m2 = sum |x - mean|^2`` over ``n`` samples."""
        if n < 2:
            raise ValueError("need at least two samples")
        return cls(mean, np.sqrt(np.maximum(m2, 0.0) / ((n - 1) * n)), n)

    @classmethod
    def from_samples(cls, samples, axis=0):
        samples = np.asarray(samples)
        return cls.from_moments(*_moments(samples, axis), samples.shape[axis])


def _moments(samples, axis=0):
    mean = samples.mean(axis=axis)
    dev = samples - np.expand_dims(mean, axis)
    return mean, (np.abs(dev) ** 2).sum(axis=axis)


def merge_moments(parts):
    """Combine ``(n, mean, m2)`` batch moments in the given order (Chan et al.).

    Returns ``(mean, m2, n)``, the argument order of
    :meth:`EnsembleEstimate.from_moments`.
    """
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        if nb == 0:
            continue
        total = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / total)
        m2 = m2 + m2b + np.abs(delta) ** 2 * (n * nb / total)
        n = total
    return mean, m2, n


# -- single-step Euler-Maruyama updates on the joint Fock space --------------------


def _engine_hamiltonian(p, n):
    # a_A^+ a_A + a_B^+ a_B = 1 on the one-photon sector: omega_c is a global phase
    return build_hamiltonian(p, n, include_photon_energy=False)


def step_nonlinear(psi, dW, dt, p, eta, hamiltonian=None):
    """One Euler-Maruyama step of the collapse equation, then renormalization.

    ``psi`` may carry leading batch axes (``(..., 2N)``) with ``dW`` broadcast
    against them.  ``<q>`` is taken from the pre-step state.
    """
    psi = np.asarray(psi, dtype=complex)
    n = fock.joint_levels(psi)
    h = _engine_hamiltonian(p, n) if hamiltonian is None else hamiltonian
    q = fock.embed_mirror(p.sigma * fock.quadrature(n))
    dW = np.asarray(dW, dtype=float)[..., None]
    norm2 = np.sum(np.abs(psi) ** 2, axis=-1, keepdims=True)
    if np.any(norm2 < NORM_FLOOR):
        raise NumericalError("nonlinear step needs a normalizable state")
    q_psi = psi @ q.T
    mean_q = np.sum(psi.conj() * q_psi, axis=-1, keepdims=True).real / norm2
    shifted = q_psi - mean_q * psi
    shifted2 = shifted @ q.T - mean_q * shifted
    new = (psi - 1j * dt * (psi @ h.T) + math.sqrt(eta) * dW * shifted
           - 0.5 * eta * dt * shifted2)
    norm2 = np.sum(np.abs(new) ** 2, axis=-1, keepdims=True)
    if np.any(norm2 < NORM_FLOOR) or not np.all(np.isfinite(norm2)):
        raise NumericalError("state norm collapsed during nonlinear step")
    return new / np.sqrt(norm2)


def step_linear(psi, dW, dt, p, eta, hamiltonian=None):
    """One Euler-Maruyama step of the linear unravelling (no renormalization)."""
    psi = np.asarray(psi, dtype=complex)
    n = fock.joint_levels(psi)
    h = _engine_hamiltonian(p, n) if hamiltonian is None else hamiltonian
    q = fock.embed_mirror(p.sigma * fock.quadrature(n))
    dW = np.asarray(dW, dtype=float)[..., None]
    q_psi = psi @ q.T
    new = (psi - 1j * dt * (psi @ h.T) + 1j * math.sqrt(eta) * dW * q_psi
           - 0.5 * eta * dt * (q_psi @ q.T))
    norm2 = np.sum(np.abs(new) ** 2, axis=-1)
    if np.any(norm2 > NORM_CEILING) or not np.all(np.isfinite(norm2)):
        raise NumericalError("state norm overflowed during linear step")
    return new


# -- batched split-step engine ----------------------------------------------------


class SplitStepper:
    """Batched trajectory integrator in the eigenbasis of the mirror position.

    Each step applies the Euler-Maruyama noise factor, which is diagonal in
    the position eigenbasis, and then the exact free propagator
    ``exp(-i H_arm dt)`` of each photon branch.  With the Hamiltonian part
    exact, the explicit-Euler norm drift ``exp(<H^2> dt t)`` disappears; the
    scheme stays weak order one.
    """

    def __init__(self, p, eta, n_levels):
        self.p = p
        self.eta = eta
        self.n = fock.check_levels(n_levels)
        x, v = np.linalg.eigh(fock.quadrature(self.n))
        self.v = v
        self.q = p.sigma * x
        self.h_a, self.h_b = arm_hamiltonians(p, self.n)
        self._props = {}

    def propagators(self, dt):
        key = round(dt, 15)
        if key not in self._props:
            vh = self.v.conj().T
            u_a = vh @ fock.matrix_exp(-1j * self.h_a * dt) @ self.v
            u_b = vh @ fock.matrix_exp(-1j * self.h_b * dt) @ self.v
            # row-vector convention: psi <- psi @ U^T
            self._props[key] = (np.ascontiguousarray(u_a.T), np.ascontiguousarray(u_b.T))
        return self._props[key]

    def initial(self, batch):
        """Both branches in the mirror vacuum, amplitude 1/sqrt(2) each."""
        vac = self.v[0].conj() / math.sqrt(2)
        return np.tile(vac, (batch, 1)), np.tile(vac, (batch, 1))

    def to_fock(self, psi):
        return psi @ self.v.T

    def step(self, psi_a, psi_b, dW, dt, scheme, alive, check=True):
        """Advance every trajectory by ``dt``; returns ``(psi_a, psi_b, alive)``.

        Aborted trajectories are zeroed and dropped from ``alive``.  The
        linear scheme only tests for overflow when ``check`` is set.
        """
        sq_eta = math.sqrt(self.eta)
        if scheme == "linear":
            factor = np.multiply.outer(dW, 1j * sq_eta * self.q)
            factor += 1 - 0.5 * self.eta * dt * self.q ** 2
            psi_a = psi_a * factor
            psi_b = psi_b * factor
            bad = None
            if check:
                bad = ~(_weights(psi_a, psi_b).sum(axis=1) < NORM_CEILING)
        else:
            w = _weights(psi_a, psi_b)
            norm2 = w.sum(axis=1)
            mean_q = (w @ self.q) / np.where(norm2 > 0, norm2, 1.0)
            shift = self.q - mean_q[:, None]
            factor = shift * (sq_eta * dW)[:, None]
            factor -= (0.5 * self.eta * dt) * shift * shift
            factor += 1
            # norm after the noise factor; the propagator that follows is unitary
            new_norm2 = np.einsum("bk,bk,bk->b", w, factor, factor)
            bad = ~(new_norm2 > NORM_FLOOR)
            factor *= (1.0 / np.sqrt(np.where(bad, 1.0, new_norm2)))[:, None]
            psi_a = psi_a * factor
            psi_b = psi_b * factor
        if bad is not None and bad.any():
            alive = alive & ~bad
            psi_a[bad] = 0
            psi_b[bad] = 0
        u_a, u_b = self.propagators(dt)
        return psi_a @ u_a, psi_b @ u_b, alive


def _weights(psi_a, psi_b):
    """``|psi_a|^2 + |psi_b|^2`` per basis state."""
    return psi_a.real ** 2 + psi_a.imag ** 2 + psi_b.real ** 2 + psi_b.imag ** 2


def offdiag_trace(psi_a, psi_b):
    """Per-trajectory ``Tr rho_OD = 2 <psi_B|psi_A>`` for branch-amplitude arrays."""
    return 2.0 * np.sum(psi_b.conj() * psi_a, axis=-1)


def fine_grid(t_out, dt_max):
    """Refine output times so each interval has equal steps no longer than ``dt_max``.

    Returns ``(grid, out_index)`` with ``grid[out_index] == t_out``.
    """
    t_out = _check_grid(t_out)
    pieces = [t_out[:1]]
    index = [0]
    for t0, t1 in zip(t_out[:-1], t_out[1:]):
        steps = max(1, math.ceil((t1 - t0) / dt_max - 1e-9))
        pieces.append(np.linspace(t0, t1, steps + 1)[1:])
        index.append(index[-1] + steps)
    grid = np.concatenate(pieces)
    grid[np.array(index)] = t_out
    return grid, np.array(index)


# -- Gaussian ansatz --------------------------------------------------------------


@dataclass(frozen=True)
class GaussianAnsatz:
    """``phi(x) = (2 scale / pi)^(1/4) exp(-a x^2 + b x + c)``.

    ``scale`` is ``M omega_m / (2 hbar)``; for the free mirror ``a == scale``.
    Fields may be scalars or arrays over a time grid.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    branch: int
    scale: float

    def __post_init__(self):
        if np.any(np.real(self.a) <= 0):
            raise ValueError("Gaussian ansatz needs Re(a) > 0")

    def at(self, k):
        return GaussianAnsatz(np.asarray(self.a)[..., k], np.asarray(self.b)[..., k],
                              np.asarray(self.c)[..., k], self.branch, self.scale)

    def wavefunction(self, x):
        x = np.asarray(x)
        return (2 * self.scale / math.pi) ** 0.25 * np.exp(-self.a * x * x + self.b * x + self.c)


def _riccati_rk4(a0, coef_sq, const, t_grid):
    """Integrate ``da = coef_sq a^2 dt + const dt`` with RK4 along the grid."""
    a = np.empty(len(t_grid), dtype=complex)
    a[0] = a0
    rhs = lambda y: coef_sq * y * y + const  # noqa: E731
    for k, h in enumerate(np.diff(t_grid)):
        y = a[k]
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        a[k + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return a


def stochastic_convolution(dW, t_grid, omega):
    """Left-point ``int_0^t exp(-i omega (t - s)) dW_s`` on the grid (last axis = time)."""
    t_grid = np.asarray(t_grid, dtype=float)
    dW = np.asarray(dW, dtype=float)
    weighted = np.exp(1j * omega * t_grid[:-1]) * dW
    acc = np.concatenate([np.zeros(dW.shape[:-1] + (1,), dtype=complex),
                          np.cumsum(weighted, axis=-1)], axis=-1)
    return np.exp(-1j * omega * t_grid) * acc


def _left_cumulative(values, t_grid):
    dt = np.diff(t_grid)
    inc = values[..., :-1] * dt
    return np.concatenate([np.zeros(values.shape[:-1] + (1,), dtype=complex),
                           np.cumsum(inc, axis=-1)], axis=-1)


def _trapezoid_cumulative(values, t_grid):
    dt = np.diff(t_grid)
    inc = 0.5 * (values[..., :-1] + values[..., 1:]) * dt
    return np.concatenate([np.zeros(values.shape[:-1] + (1,), dtype=complex),
                           np.cumsum(inc, axis=-1)], axis=-1)


def gaussian_coefficients(branch, dW, t_grid, p, eta, integrate_a=False):
    """Coefficient series ``(a, b, c)`` for a batch of paths (last axis = time)."""
    w = p.omega_m
    m = p.mass
    scale = m * w / (2 * HBAR)
    t_grid = np.asarray(t_grid, dtype=float)
    if integrate_a:
        a = _riccati_rk4(scale, -2j * HBAR / m, 1j * m * w ** 2 / (2 * HBAR), t_grid)
    else:
        a = np.full(len(t_grid), scale, dtype=complex)
    b = branch * p.g / w * (1 - np.exp(-1j * w * t_grid)) + 1j * math.sqrt(eta) * (
        stochastic_convolution(dW, t_grid, w))
    # a plain time integral of a continuous process: the trapezoid rule is
    # consistent with the Ito reading and second order on the drift part
    c = _trapezoid_cumulative(1j * HBAR / (2 * m) * (b * b - 2 * a), t_grid)
    return a, b, c, scale


def gaussian_evolve(branch, path, p, eta):
    """Gaussian-ansatz coefficients of one branch along one Wiener path.

    ``a`` is integrated from its Riccati equation (it sits on the fixed point
    ``M omega_m / 2 hbar``); ``b`` is the closed-form stochastic convolution;
    ``c`` is the trapezoid quadrature of its ODE.
    """
    if branch not in (0, 1):
        raise ValueError("branch must be 0 or 1")
    a, b, c, scale = gaussian_coefficients(branch, path.dW, path.t_grid, p, eta, integrate_a=True)
    return GaussianAnsatz(a, b, c, branch, scale)


def branch_overlap(phi0, phi1):
    """``int phi0(x)^* phi1(x) dx`` in closed form."""
    a_sum = np.conj(phi0.a) + phi1.a
    if np.any(np.real(a_sum) <= 0):
        raise ValueError("overlap diverges: Re(a0* + a1) <= 0")
    b_sum = np.conj(phi0.b) + phi1.b
    c_sum = np.conj(phi0.c) + phi1.c
    pref = math.sqrt(2 * phi0.scale / math.pi) ** 0.5 * math.sqrt(2 * phi1.scale / math.pi) ** 0.5
    return pref * np.sqrt(math.pi / a_sum) * np.exp(b_sum ** 2 / (4 * a_sum) + c_sum)


def overlap_exponent(a, b0, c0, b1, c1):
    """Exponent of the branch overlap when both branches share a real ``a``."""
    return (np.conj(b0) + b1) ** 2 / (8 * a) + np.conj(c0) + c1


def overlap_exponent_increment(p, eta, t_grid, z):
    """Left-point integral of the closed-form differential of the overlap exponent.

    ``d E = i hbar g^2 / (2 M omega^2) (1 - e^{-i omega t}) dt
    + i sqrt(eta) hbar g / (M omega) z_t dt``.
    """
    w = p.omega_m
    m = p.mass
    det = 1j * HBAR * p.g ** 2 / (2 * m * w ** 2) * (1 - np.exp(-1j * w * np.asarray(t_grid)))
    sto = 1j * math.sqrt(eta) * HBAR * p.g / (m * w) * np.asarray(z)
    return _left_cumulative(det + sto, t_grid)


# -- noise kernel and factorized visibility ----------------------------------------


def z_process(path, omega_m):
    """``z_t = int_0^t sin(omega (t - s)) dW_s`` on the path grid (left point)."""
    return -np.imag(stochastic_convolution(path.dW, path.t_grid, omega_m))


def correlation_kernel(t, s, omega_m):
    """``K(t, s) = E[z_t z_s]`` in closed form."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    m = np.minimum(t, s)
    w = omega_m
    return 0.5 * (m * np.cos(w * (t - s))
                  - (np.sin(w * (t + s)) - np.sin(w * (t + s - 2 * m))) / (2 * w))


def f_deterministic(p, t):
    wt = p.omega_m * np.asarray(t, dtype=float)
    k2 = p.kappa ** 2
    return np.exp(1j * k2 * (wt - np.sin(wt)) - k2 * (1 - np.cos(wt)))


def f_factorized(p, eta, t):
    """``(f_D, f_S, f)``: noise-free factor, noise average, and their product."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    f_d = f_deterministic(p, t)
    f_s = np.exp(-collapse_exponent(p, eta, t))
    return f_d, f_s, f_d * f_s


def noise_coupling(p, eta):
    """``sqrt(eta) hbar g / (M omega_m)``, the coefficient of ``int z ds``."""
    return math.sqrt(eta) * HBAR * p.g / (p.mass * p.omega_m)


def sample_noise_factor(p, eta, t, n_paths, seed_base=0, dt=None, batch=2000):
    """Monte Carlo estimate of ``E[exp(i k int_0^t z_s ds)]`` with ``k`` from :func:`noise_coupling`."""
    dt = 1e-3 / p.omega_m if dt is None else dt
    steps = max(1, math.ceil(t / dt))
    grid = np.linspace(0.0, t, steps + 1)
    k = noise_coupling(p, eta)
    parts = []
    for start in range(0, n_paths, batch):
        seeds = range(seed_base + start, seed_base + min(n_paths, start + batch))
        dW = wiener_increments(seeds, grid)
        z = -np.imag(stochastic_convolution(dW, grid, p.omega_m))
        integral = (z[:, :-1] * np.diff(grid)).sum(axis=1)
        x = np.exp(1j * k * integral)
        parts.append((len(x),) + _moments(x))
    return EnsembleEstimate.from_moments(*merge_moments(parts))


# -- ensembles --------------------------------------------------------------------


@dataclass
class EnsembleSeries:
    t: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    n_traj: int
    n_aborted: int
    scheme: str
    n_levels: int = None

    @property
    def nu(self):
        return np.abs(self.mean)

    def estimate(self, k):
        return EnsembleEstimate(self.mean[k], self.std_error[k], self.n_traj - self.n_aborted)

    def records(self):
        return [VisibilityRecord(float(t), complex(f), float(abs(f)), "monte_carlo")
                for t, f in zip(self.t, self.mean)]


def _run_batch(seeds, grid, out_index, p, eta, scheme, stepper):
    dW = wiener_increments(seeds, grid)
    batch = len(seeds)
    if scheme == "gaussian":
        a, b0, c0, _ = gaussian_coefficients(0, dW, grid, p, eta)
        _, b1, c1, _ = gaussian_coefficients(1, dW, grid, p, eta)
        expo = overlap_exponent(a[out_index], b0[:, out_index], c0[:, out_index],
                                b1[:, out_index], c1[:, out_index])
        vals = np.exp(expo)
        alive = np.isfinite(vals).all(axis=1)
    else:
        psi_a, psi_b = stepper.initial(batch)
        alive = np.ones(batch, dtype=bool)
        vals = np.empty((batch, len(out_index)), dtype=complex)
        vals[:, 0] = offdiag_trace(psi_a, psi_b)
        col = 1
        dts = np.diff(grid)
        for k in range(len(dts)):
            hit = col < len(out_index) and k + 1 == out_index[col]
            psi_a, psi_b, alive = stepper.step(psi_a, psi_b, dW[:, k], dts[k], scheme, alive,
                                               check=hit or k % 32 == 31)
            if hit:
                vals[:, col] = offdiag_trace(psi_a, psi_b)
                col += 1
    vals = vals[alive]
    if len(vals) == 0:
        return 0, 0.0, 0.0, batch
    return (len(vals),) + _moments(vals) + (int(batch - len(vals)),)


def ensemble_offdiag(n_traj, seed_base, p, eta, t_grid, scheme="linear", dt=None,
                     n_levels=None, batch=1000, threads=1):
    """Ensemble estimate of ``f`` at the times ``t_grid`` (which must start at 0).

    The engine steps on a refinement of ``t_grid`` with steps no longer than
    ``dt`` (default ``1e-3 / omega_m``).  Per-batch sums are combined in
    batch order, so the result is independent of ``threads``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if n_traj < 100:
        raise ValueError("n_traj must be at least 100")
    t_grid = _check_grid(t_grid)
    if t_grid[0] != 0:
        raise ValueError("t_grid must start at 0")
    dt = 1e-3 / p.omega_m if dt is None else dt
    grid, out_index = fine_grid(t_grid, dt)
    stepper = None
    if scheme != "gaussian":
        if n_levels is None:
            n_levels = p.n_levels(eta, t_grid[-1], spread=2.0)
        stepper = SplitStepper(p, eta, n_levels)
        for h in np.unique(np.round(np.diff(grid), 15)):
            stepper.propagators(h)
    starts = list(range(0, n_traj, batch))
    jobs = [range(seed_base + s, seed_base + min(n_traj, s + batch)) for s in starts]
    run = lambda seeds: _run_batch(seeds, grid, out_index, p, eta, scheme, stepper)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(seeds) for seeds in jobs]
    aborted = sum(part[3] for part in parts)
    if aborted > MAX_ABORT_FRACTION * n_traj:
        raise NumericalError(f"{aborted} of {n_traj} trajectories aborted")
    est = EnsembleEstimate.from_moments(*merge_moments(part[:3] for part in parts))
    return EnsembleSeries(t_grid, est.mean, est.std_error, n_traj, aborted, scheme, n_levels)


def ensemble_density_matrix(n_traj, seed_base, p, eta, t, scheme="linear", dt=None,
                            n_levels=None, batch=1000):
    """Ensemble mean of ``|psi><psi|`` (joint Fock basis) at time ``t``."""
    if scheme not in ("linear", "nonlinear"):
        raise ValueError("density matrices need a state-vector scheme")
    dt = 1e-3 / p.omega_m if dt is None else dt
    grid, _ = fine_grid(np.array([0.0, t]), dt)
    if n_levels is None:
        n_levels = p.n_levels(eta, t, spread=2.0)
    stepper = SplitStepper(p, eta, n_levels)
    parts = []
    for start in range(0, n_traj, batch):
        seeds = range(seed_base + start, seed_base + min(n_traj, start + batch))
        dW = wiener_increments(seeds, grid)
        psi_a, psi_b = stepper.initial(len(seeds))
        alive = np.ones(len(seeds), dtype=bool)
        for k, h in enumerate(np.diff(grid)):
            psi_a, psi_b, alive = stepper.step(psi_a, psi_b, dW[:, k], h, scheme, alive)
        psi = np.concatenate([stepper.to_fock(psi_b), stepper.to_fock(psi_a)], axis=1)[alive]
        outer = psi[:, :, None] * psi[:, None, :].conj()
        parts.append((len(outer),) + _moments(outer))
    return EnsembleEstimate.from_moments(*merge_moments(parts))
