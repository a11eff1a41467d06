import numpy as np
import pytest

from mirror_collapse import experiment as ex
from mirror_collapse import fock, master


def random_matrix(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_banded_generator_matches_dense():
    p = ex.ExperimentParams.from_kappa(0.8, omega_m=1.4, sigma=0.7)
    eta = 0.3
    r = random_matrix(15)
    gen = master.OffdiagGenerator(p, eta, 15)
    assert np.allclose(gen(r), master.offdiag_rhs(r, p, eta), atol=1e-12)
    out = np.empty_like(r)
    gen(r, out=out)
    assert np.allclose(out, master.offdiag_rhs(r, p, eta), atol=1e-12)


def test_joint_rhs_preserves_trace_and_hermiticity():
    p = ex.ExperimentParams.from_kappa(0.5)
    a = random_matrix(16, seed=1)
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    d = master.master_rhs(rho, p, 0.7)
    assert abs(np.trace(d)) < 1e-12
    assert fock.is_hermitian(d, atol=1e-12)


def test_joint_rhs_projects_to_offdiag_rhs():
    p = ex.ExperimentParams.from_kappa(0.5)
    a = random_matrix(16, seed=2)
    rho = a + a.conj().T
    d = master.master_rhs(rho, p, 0.4)
    assert np.allclose(fock.offdiag_block(d), master.offdiag_rhs(fock.offdiag_block(rho), p, 0.4))


def test_offdiag_matches_joint_oracle():
    p = ex.ExperimentParams.from_kappa(0.4)
    eta = 0.2
    n = 16
    t = np.linspace(0, p.period, 11)
    psi = ex.initial_state(n)
    f_joint, _ = master.evolve_joint(np.outer(psi, psi.conj()), p, eta, t)
    series = master.solve_visibility(p, eta, t, n_levels=n)
    assert np.allclose(series.f, f_joint, atol=1e-12)


@pytest.mark.parametrize("kappa,x", [(0.3, 0.5), (1.0, 0.5), (0.7, 0.0)])
def test_master_against_closed_form(kappa, x):
    p = ex.ExperimentParams.from_kappa(kappa)
    eta = x / (p.sigma ** 2 * p.ell ** 2 * p.period)
    t = np.linspace(0, 2 * p.period, 41)
    series = master.solve_visibility(p, eta, t)
    exact = ex.f_closed_form(p, eta, t)
    assert np.max(np.abs(series.f - exact) / np.abs(exact)) < 1e-6
    recs = series.records()
    assert recs[-1].source == "master_equation"
    assert recs[-1].nu == pytest.approx(abs(series.f[-1]))


def test_adaptive_integrator_agrees():
    p = ex.ExperimentParams.from_kappa(0.5)
    eta = 0.05
    t = np.linspace(0, p.period, 5)
    rk4 = master.solve_visibility(p, eta, t, n_levels=24)
    rk45 = master.solve_visibility(p, eta, t, n_levels=24, integrator="rk45_adaptive")
    assert np.allclose(rk4.f, rk45.f, atol=1e-8)


def test_keep_states_and_trace():
    p = ex.ExperimentParams.from_kappa(0.5)
    cfg = master.MasterConfig(t_end=1.0, n_levels=20)
    series = master.evolve_offdiag(master.vacuum_offdiag(20), p, 0.1, cfg,
                                   t_eval=np.linspace(0, 1, 4))
    assert series.rho_od.shape == (4, 20, 20)
    assert np.allclose(np.trace(series.rho_od, axis1=1, axis2=2), series.f)


def test_config_validation():
    with pytest.raises(ValueError):
        master.MasterConfig(t_end=1.0, integrator="euler")
    with pytest.raises(ValueError):
        master.MasterConfig(t_end=-1.0)
    with pytest.raises(ValueError):
        master.MasterConfig(t_end=1.0, dt=0.0)
    p = ex.ExperimentParams.from_kappa(0.5)
    with pytest.raises(ValueError):
        cfg = master.MasterConfig(t_end=1.0, n_levels=10)
        master.evolve_offdiag(master.vacuum_offdiag(12), p, 0.0, cfg)
    with pytest.raises(ValueError):
        master.solve_visibility(p, -0.1, [0.0, 1.0])


def test_unstable_step_is_reported():
    p = ex.ExperimentParams.from_kappa(1.0)
    with pytest.raises(master.NumericalError):
        master.solve_visibility(p, 2.0, np.linspace(0, 20, 3), n_levels=40, dt=5.0)
