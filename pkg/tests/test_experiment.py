import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirror_collapse import experiment as ex
from mirror_collapse import fock


def params(kappa=0.7, omega=1.3, sigma=0.8):
    return ex.ExperimentParams.from_kappa(kappa, omega_m=omega, sigma=sigma)


def test_derived_quantities():
    p = ex.ExperimentParams(omega_m=2.0, G=1.0, sigma=0.5)
    assert p.kappa == 0.5
    assert p.ell == pytest.approx(1.0)
    assert p.g == pytest.approx(2.0)
    assert p.mass == pytest.approx(1.0)  # hbar / (2 omega sigma^2)
    assert p.period == pytest.approx(math.pi)


def test_coupling_from_cavity_length():
    p = ex.ExperimentParams(omega_m=1.0, sigma=0.1, omega_c=5.0, L=2.0)
    assert p.G == pytest.approx(0.25)
    with pytest.raises(ValueError):
        ex.ExperimentParams(omega_m=1.0, G=1.0, sigma=0.1, omega_c=5.0, L=2.0)


def test_validation():
    with pytest.raises(ValueError):
        ex.ExperimentParams(omega_m=-1.0, G=1.0)
    with pytest.raises(ValueError):
        ex.ExperimentParams(omega_m=1.0)
    with pytest.raises(ValueError):
        ex.ExperimentParams(omega_m=1.0, G=1.0, sigma=1.0, M=3.0)
    p = ex.ExperimentParams(omega_m=2.0, G=1.0, sigma=0.5, M=1.0)
    assert p.mass == 1.0


def test_hamiltonian_is_hermitian_and_block_diagonal():
    p = params()
    n = 10
    h = ex.build_hamiltonian(p, n)
    assert fock.is_hermitian(h)
    assert np.allclose(h[:n, n:], 0)
    h_a, h_b = ex.arm_hamiltonians(p, n)
    assert np.allclose(h[n:, n:], h_a + p.omega_c * np.eye(n))
    assert np.allclose(h[:n, :n], h_b + p.omega_c * np.eye(n))


@pytest.mark.parametrize("t", [0.0, 0.4, 2.1, 5.0])
def test_analytic_state_matches_dense_propagation(t):
    p = params(kappa=0.9)
    n = 30
    big = 80
    u = fock.matrix_exp(-1j * ex.build_hamiltonian(p, big) * t)
    psi_big = u @ ex.initial_state(big)
    _, alpha_t, psi = ex.analytic_state(p, t, n)
    assert alpha_t == pytest.approx(complex(ex.coherent_amplitude(p, t)))
    dense = np.concatenate([psi_big[:n], psi_big[big:big + n]])
    assert np.allclose(dense, psi, atol=1e-10)


def test_closed_form_without_noise_is_branch_overlap():
    p = params(kappa=1.1)
    n = 40
    for t in np.linspace(0, 2 * p.period, 9):
        _, _, psi = ex.analytic_state(p, t, n)
        f = 2 * np.vdot(psi[:n], psi[n:])
        assert ex.f_closed_form(p, 0.0, t) == pytest.approx(f, abs=1e-12)


def test_visibility_revival_and_minimum():
    p = params(kappa=0.6)
    T = p.period
    assert ex.visibility_qm(p, T) == pytest.approx(1.0, abs=1e-14)
    assert ex.visibility_qm(p, 2 * T) == pytest.approx(1.0, abs=1e-14)
    assert ex.visibility_qm(p, T / 2) == pytest.approx(math.exp(-2 * 0.36))


def test_collapse_damping_per_period():
    p = params(kappa=0.5)
    eta = 0.2
    lam = ex.damping_exponent(p, eta)
    assert lam == pytest.approx(3 / 16 * eta * p.ell ** 2 * 2 * math.pi / p.omega_m)
    assert ex.visibility_collapse(p, eta, p.period) == pytest.approx(math.exp(-lam), rel=1e-12)
    assert ex.eta_for_damping(p, lam) == pytest.approx(eta)
    with pytest.raises(ValueError):
        ex.f_closed_form(p, -1.0, 1.0)
    with pytest.raises(ValueError):
        ex.damping_exponent(p, -1.0)


@settings(max_examples=30, deadline=None)
@given(kappa=st.floats(0.05, 2), omega=st.floats(0.2, 5), eta=st.floats(0, 3), x=st.floats(0, 4))
def test_collapse_only_reduces_visibility(kappa, omega, eta, x):
    p = ex.ExperimentParams.from_kappa(kappa, omega_m=omega)
    t = x * p.period
    assert ex.visibility_collapse(p, eta, t) <= ex.visibility_qm(p, t) * (1 + 1e-12)
    # the collapse exponent is non-negative and grows with time
    assert ex.collapse_exponent(p, eta, t) >= -1e-12


@pytest.mark.parametrize("kappa", [0.3, 0.7, 1.0])
@pytest.mark.parametrize("adjoint", [False, True])
def test_baker_hausdorff(kappa, adjoint):
    p = params(kappa=kappa, omega=1.0)
    for t in np.linspace(0, 2 * p.period, 7):
        assert ex.verify_baker_hausdorff(p, t, 60, adjoint=adjoint) <= 1e-8


def test_bh_factors_at_zero_and_period():
    p = params()
    f0 = ex.bh_factors(p, 0.0)
    assert f0.N_t == 1 and f0.alpha_t == 0 and f0.beta_t == 0
    fT = ex.bh_factors(p, p.period)
    assert abs(fT.alpha_t) < 1e-14 and abs(fT.beta_t) < 1e-14
    # N_T is the pure phase exp(2 pi i kappa^2)
    assert fT.N_t == pytest.approx(np.exp(2j * math.pi * p.kappa ** 2))


def test_closed_form_records():
    p = params()
    recs = ex.closed_form_records(p, 0.1, [0.0, 1.0])
    assert [r.source for r in recs] == ["closed_form"] * 2
    assert recs[0].nu == 1.0
    assert recs[1].nu == pytest.approx(abs(recs[1].f))


def test_truncation_grows_with_noise():
    p = params(kappa=0.3)
    assert p.n_levels() == fock.truncation_levels(0.6)
    assert p.n_levels(0.5, 10.0) > p.n_levels()
