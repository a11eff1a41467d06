"""Deterministic integration of the ensemble density-matrix equation.

Two routes produce the off-diagonal factor ``f(t) = Tr_m rho_OD(t)``:

* :func:`evolve_offdiag` integrates the mirror-space block ``rho_OD`` only.
  The generator is applied in O(N^2) with tridiagonal ladder kernels, which
  is what makes high truncations affordable when the collapse noise drives
  ``rho_OD`` far up the Fock ladder.
* :func:`evolve_joint` integrates the full photon (x) mirror ``rho`` with
  dense operators and projects at the end; it exists as an oracle.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import fock
from .experiment import VisibilityRecord, arm_hamiltonians, build_hamiltonian


class NumericalError(RuntimeError):
    """Integration became unstable or produced non-finite values."""


@dataclass(frozen=True)
class MasterConfig:
    t_end: float
    dt: float = None
    integrator: str = "rk4"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    n_levels: int = None

    def __post_init__(self):
        if self.integrator not in ("rk4", "rk45_adaptive"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")


def master_rhs(rho, p, eta, hamiltonian=None):
    """``-i[H, rho] - (eta sigma^2 / 2) [X, [X, rho]]`` on the joint space, X = b + b^+."""
    rho = np.asarray(rho)
    n = fock.joint_levels(rho)
    if rho.shape != (2 * n, 2 * n):
        raise ValueError(f"joint density matrix must be square, got {rho.shape}")
    h = build_hamiltonian(p, n) if hamiltonian is None else hamiltonian
    x = fock.embed_mirror(fock.quadrature(n))
    inner = x @ rho - rho @ x
    return -1j * (h @ rho - rho @ h) - 0.5 * eta * p.sigma ** 2 * (x @ inner - inner @ x)


def offdiag_rhs(rho_od, p, eta):
    """``-i H_A rho_OD + i rho_OD H_B - (eta sigma^2 / 2) [X, [X, rho_OD]]``."""
    rho_od = np.asarray(rho_od)
    if rho_od.ndim != 2 or rho_od.shape[0] != rho_od.shape[1]:
        raise ValueError(f"rho_OD must be square, got {rho_od.shape}")
    n = rho_od.shape[0]
    h_a, h_b = arm_hamiltonians(p, n)
    x = fock.quadrature(n)
    inner = x @ rho_od - rho_od @ x
    return (-1j * (h_a @ rho_od) + 1j * (rho_od @ h_b)
            - 0.5 * eta * p.sigma ** 2 * (x @ inner - inner @ x))


class OffdiagGenerator:
    """Banded evaluation of :func:`offdiag_rhs` for a fixed truncation."""

    def __init__(self, p, eta, n_levels):
        self.n = fock.check_levels(n_levels)
        self.sq = np.sqrt(np.arange(1, self.n, dtype=float))
        self.sq_col = self.sq[:, None]
        energies = p.omega_m * np.arange(self.n, dtype=float)
        self.top = energies[-1]
        # -i (H_B-part of H_A) rho + i rho H_B, diagonal in the Fock basis
        self.phase = -1j * (energies[:, None] - energies[None, :])
        self.G = p.G
        self.c = 0.5 * eta * p.sigma ** 2

        self._buf = [np.empty((self.n, self.n), dtype=complex) for _ in range(3)]

    def _x_left(self, r, out):
        np.multiply(self.sq_col, r[1:], out=out[:-1])
        out[-1] = 0
        out[1:] += self.sq_col * r[:-1]
        return out

    def _x_right(self, r, out):
        np.multiply(r[:, 1:], self.sq, out=out[:, :-1])
        out[:, -1] = 0
        out[:, 1:] += r[:, :-1] * self.sq
        return out

    def x_left(self, r):
        return self._x_left(r, np.empty_like(r))

    def x_right(self, r):
        return self._x_right(r, np.empty_like(r))

    def __call__(self, r, out=None):
        if out is None:
            out = np.empty_like(r)
        b0, b1, b2 = self._buf
        np.multiply(self.phase, r, out=out)
        xl = self._x_left(r, b0)
        if self.G:
            np.multiply(xl, 1j * self.G, out=b1)
            out += b1
        if self.c:
            inner = xl
            inner -= self._x_right(r, b1)
            dc = self._x_left(inner, b2)
            dc -= self._x_right(inner, b1)
            dc *= self.c
            out -= dc
        return out

    def spectral_bound(self):
        """Upper bound on the generator's spectral radius."""
        xmax = 2.0 * math.sqrt(self.n)
        return self.top + 2 * self.G * xmax + self.c * (2 * xmax) ** 2


def default_dt(p, eta, n_levels):
    """RK4 step: ``0.002 / omega_m``, shrunk if the generator is stiffer."""
    bound = OffdiagGenerator(p, eta, n_levels).spectral_bound()
    return min(0.002 / p.omega_m, 2.0 / bound)


@dataclass
class MasterSeries:
    t: np.ndarray
    f: np.ndarray
    rho_od: np.ndarray  # (len(t), N, N), or final state only when not kept
    n_levels: int
    dt: float

    @property
    def nu(self):
        return np.abs(self.f)

    def records(self):
        return [VisibilityRecord(float(t), complex(f), float(abs(f)), "master_equation")
                for t, f in zip(self.t, self.f)]


def _rk4_segment(gen, r, h, steps):
    r = r.copy()
    k = np.empty_like(r)
    acc = np.empty_like(r)
    stage = np.empty_like(r)
    for _ in range(steps):
        gen(r, out=k)
        np.multiply(k, h / 6.0, out=acc)
        acc += r
        np.multiply(k, 0.5 * h, out=stage)
        stage += r
        gen(stage, out=k)
        acc += (h / 3.0) * k
        np.multiply(k, 0.5 * h, out=stage)
        stage += r
        gen(stage, out=k)
        acc += (h / 3.0) * k
        np.multiply(k, h, out=stage)
        stage += r
        gen(stage, out=k)
        acc += (h / 6.0) * k
        r, acc = acc, r
    return r


def _check(r, t, scale):
    peak = np.max(np.abs(r))
    if not np.isfinite(peak) or peak > 1e3 * scale:
        raise NumericalError(
            f"integration blew up at t={t:.6g} (max |entry| {peak:.3g}); reduce dt")


def _integrate(gen, initial, t_eval, cfg, dt, keep_states):
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval[0] != 0 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be increasing and start at 0")
    r = np.array(initial, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(r))))
    states = [r.copy()] if keep_states else None
    traces = [np.trace(r)]
    if cfg.integrator == "rk45_adaptive":
        shape = r.shape
        sol = solve_ivp(lambda _t, y: gen(y.reshape(shape)).ravel().copy(), (0.0, t_eval[-1]),
                        r.ravel(), method="RK45", t_eval=t_eval,
                        rtol=cfg.rel_tol, atol=cfg.abs_tol)
        if not sol.success:
            raise NumericalError(f"adaptive integration failed: {sol.message}")
        ys = sol.y.T.reshape((len(t_eval),) + shape)
        return np.trace(ys, axis1=1, axis2=2), (ys if keep_states else ys[-1])
    for t0, t1 in zip(t_eval[:-1], t_eval[1:]):
        steps = max(1, math.ceil((t1 - t0) / dt - 1e-9))
        r = _rk4_segment(gen, r, (t1 - t0) / steps, steps)
        _check(r, t1, scale)
        traces.append(np.trace(r))
        if keep_states:
            states.append(r.copy())
    return np.array(traces), (np.array(states) if keep_states else r)


def evolve_offdiag(initial, p, eta, cfg, t_eval=None, keep_states=True):
    """Integrate the off-diagonal block from ``initial`` (normally ``|0><0|``).

    ``t_eval`` defaults to 201 points on ``[0, cfg.t_end]``; steps are fitted
    evenly between consecutive output times so every output is hit exactly.
    """
    if eta < 0:
        raise ValueError("eta must be non-negative")
    initial = np.asarray(initial, dtype=complex)
    n = initial.shape[0]
    if cfg.n_levels is not None and cfg.n_levels != n:
        raise ValueError(f"initial state has {n} levels, config says {cfg.n_levels}")
    if t_eval is None:
        t_eval = np.linspace(0.0, cfg.t_end, 201)
    gen = OffdiagGenerator(p, eta, n)
    dt = cfg.dt if cfg.dt is not None else default_dt(p, eta, n)
    f, states = _integrate(gen, initial, t_eval, cfg, dt, keep_states)
    return MasterSeries(np.asarray(t_eval, dtype=float), f, states, n, dt)


def vacuum_offdiag(n_levels):
    r = np.zeros((n_levels, n_levels), dtype=complex)
    r[0, 0] = 1.0
    return r


def solve_visibility(p, eta, t_eval, n_levels=None, dt=None, integrator="rk4"):
    """Convenience wrapper: ``f(t)`` from the vacuum initial condition."""
    t_eval = np.asarray(t_eval, dtype=float)
    if n_levels is None:
        n_levels = p.n_levels(eta, t_eval[-1])
    cfg = MasterConfig(t_end=float(t_eval[-1]), dt=dt, integrator=integrator, n_levels=n_levels)
    return evolve_offdiag(vacuum_offdiag(n_levels), p, eta, cfg, t_eval, keep_states=False)


def evolve_joint(rho0, p, eta, t_eval, dt=None):
    """Integrate the full joint ``rho``; returns ``(f(t), rho_final)``.

    ``f`` is read off the projected off-diagonal photon block.
    """
    rho = np.array(rho0, dtype=complex)
    n = fock.joint_levels(rho)
    h = build_hamiltonian(p, n)
    x = fock.embed_mirror(fock.quadrature(n))
    c = 0.5 * eta * p.sigma ** 2

    def gen(r, out=None):
        inner = x @ r - r @ x
        res = -1j * (h @ r - r @ h) - c * (x @ inner - inner @ x)
        if out is None:
            return res
        out[...] = res
        return out

    if dt is None:
        dt = default_dt(p, eta, n)
    cfg = MasterConfig(t_end=float(t_eval[-1]), dt=dt)
    traces = []
    r = rho
    t_eval = np.asarray(t_eval, dtype=float)
    traces.append(fock.trace(fock.offdiag_block(r)))
    for t0, t1 in zip(t_eval[:-1], t_eval[1:]):
        steps = max(1, math.ceil((t1 - t0) / cfg.dt - 1e-9))
        r = _rk4_segment(gen, r, (t1 - t0) / steps, steps)
        _check(r, t1, 1.0)
        traces.append(fock.trace(fock.offdiag_block(r)))
    return np.array(traces), r
