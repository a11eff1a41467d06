import json
import math

import numpy as np
import pytest

from mirror_collapse import ito
from mirror_collapse.experiment import ExperimentParams, collapse_exponent
from mirror_collapse.stochastic import correlation_kernel, wiener_increments

N_PATHS = 20_000


def test_integrand_support():
    f = ito.DeterministicIntegrand(lambda u: u ** 2, (1.0, 2.0))
    assert np.array_equal(f(np.array([0.5, 1.0, 1.5, 2.0])), [0.0, 1.0, 2.25, 0.0])
    with pytest.raises(ValueError):
        ito.DeterministicIntegrand(np.sin, (1.0, 1.0))


def test_isometry_constant():
    one = ito.DeterministicIntegrand.constant(1.0)
    r = ito.check_ito_isometry(one, one, N_PATHS, 1.0)
    assert r.expected == pytest.approx(1.0)
    assert r.passed, r


def test_isometry_gives_kernel():
    w, t, s = 1.0, 2.0, 1.0
    a = ito.DeterministicIntegrand(lambda u: np.sin(w * (t - u)), (0.0, t))
    b = ito.DeterministicIntegrand(lambda u: np.sin(w * (s - u)), (0.0, s))
    r = ito.check_ito_isometry(a, b, N_PATHS, t, seed_base=1)
    assert r.expected == pytest.approx(float(correlation_kernel(t, s, w)), abs=1e-10)
    assert r.passed, r


def test_isometry_disjoint_supports():
    a = ito.DeterministicIntegrand(lambda u: np.ones_like(u), (0.0, 0.4))
    b = ito.DeterministicIntegrand(lambda u: np.cos(u), (0.4, 1.0))
    r = ito.check_ito_isometry(a, b, N_PATHS, 1.0, seed_base=2)
    assert r.expected == 0.0
    assert r.passed, r


def test_exponential_martingale_zero_is_exact():
    r = ito.check_exponential_martingale(ito.DeterministicIntegrand.constant(0.0), 200, 1.0)
    assert r.estimate == 1 and r.std_error == 0 and r.z == 0 and r.passed


@pytest.mark.parametrize("c", [0.5, 0.5j])
def test_exponential_martingale_constant(c):
    r = ito.check_exponential_martingale(ito.DeterministicIntegrand.constant(c), N_PATHS, 1.0,
                                         seed_base=3)
    assert r.expected == pytest.approx(math.exp((c * c).real / 2))
    assert r.passed, r


def test_exponential_martingale_kernel_form():
    w, cc, t = 1.0, 0.8, 1.5
    phi = ito.DeterministicIntegrand(lambda v: 1j * cc / w * (1 - np.cos(w * (t - v))), (0.0, t))
    r = ito.check_exponential_martingale(phi, N_PATHS, t, seed_base=4)
    g = math.exp(-cc ** 2 / 2 * ito.kernel_double_integral(t, w))
    assert r.expected == pytest.approx(g, rel=1e-9)
    assert r.passed, r


def test_exponential_martingale_rejects_mixed():
    phi = ito.DeterministicIntegrand.constant(1 + 1j)
    with pytest.raises(ValueError):
        ito.check_exponential_martingale(phi, 200, 1.0)


def test_fubini_single_path():
    grid = np.linspace(0, 2.0, 2001)
    dW = wiener_increments([9], grid)
    lhs, rhs = ito.fubini_sides(dW, grid, 1.0)
    assert abs(lhs - rhs)[0] <= 5 * 1e-3 * ito.fubini_bound(dW, grid, 1.0)[0]
    # short horizon: both sides vanish with t
    grid = np.linspace(0, 1e-4, 11)
    lhs, rhs = ito.fubini_sides(wiener_increments([9], grid), grid, 1.0)
    assert abs(lhs[0]) < 1e-6 and abs(rhs[0]) < 1e-6


def test_fubini_check():
    r = ito.check_stochastic_fubini(1.0, N_PATHS, 2.0)
    assert r.passed, r
    assert r.details["worst_gap_over_bound"] <= 1


def test_increment_properties():
    assert ito.check_quadratic_variation(N_PATHS, 1.0).passed
    assert ito.check_non_anticipation(N_PATHS, 1.0).passed


def test_kernel_correlation_check():
    assert ito.check_kernel_correlation(1.0, 2.0, 1.0, N_PATHS, seed_base=5).passed


def test_kernel_double_integral_forms():
    assert ito.kernel_double_integral(0.0, 1.0) == 0.0
    for method in ("closed", "single", "double"):
        assert ito.kernel_double_integral(0.0, 2.0, method) == 0.0
    closed = ito.kernel_double_integral(3.0, 1.0)
    assert ito.kernel_double_integral(3.0, 1.0, "single") == pytest.approx(closed, rel=1e-10)
    assert ito.kernel_double_integral(3.0, 1.0, "double") == pytest.approx(closed, rel=1e-10)
    with pytest.raises(ValueError):
        ito.kernel_double_integral(-1.0, 1.0)
    with pytest.raises(ValueError):
        ito.kernel_double_integral(1.0, 1.0, "simpson")


@pytest.mark.parametrize("t", [0.7, 3.0, 11.0])
def test_kernel_integral_is_collapse_exponent(t):
    p = ExperimentParams.from_kappa(0.6, omega_m=1.4, sigma=0.9)
    eta = 0.25
    coupling = math.sqrt(eta) * p.g / (p.mass * p.omega_m)
    exponent = 0.5 * coupling ** 2 * ito.kernel_double_integral(t, p.omega_m)
    assert exponent == pytest.approx(float(collapse_exponent(p, eta, t)), rel=1e-12)


def test_report_json_roundtrip():
    reports = [ito.check_kernel_forms(),
               ito.check_exponential_martingale(ito.DeterministicIntegrand.constant(0.5j), 500, 1.0)]
    body = json.loads(ito.report_json(reports))
    assert body["passed"] is True
    assert body["checks"][1]["estimate"].keys() == {"re", "im"}


def test_threads_do_not_change_results():
    one = ito.DeterministicIntegrand.constant(1.0)
    a = ito.check_ito_isometry(one, one, 4_000, 0.5, batch=500)
    b = ito.check_ito_isometry(one, one, 4_000, 0.5, batch=500, threads=3)
    assert a.estimate == b.estimate and a.std_error == b.std_error
