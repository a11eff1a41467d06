"""Monte Carlo property checks of the Ito identities used by the noise analysis.

Every check draws Wiener increments from :func:`stochastic.wiener_increments`
(Philox keyed by ``seed_base + path index``), compares a sample estimate with
an exact or quadrature value, and returns a :class:`CheckReport` carrying the
z-score.  Stochastic integrals use the left endpoint throughout.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .stochastic import correlation_kernel, merge_moments, stochastic_convolution, wiener_increments

Z_THRESHOLD = 4.0
QUAD_TOL = 1e-10


class DeterministicIntegrand:
    """A bounded function of time, zero outside ``support``.

    ``evaluator`` must accept numpy arrays; it may return complex values.
    """

    def __init__(self, evaluator, support=(0.0, math.inf), name=None):
        lo, hi = support
        if not hi > lo:
            raise ValueError("support must be a non-empty interval")
        self.evaluator = evaluator
        self.support = (float(lo), float(hi))
        self.name = name or getattr(evaluator, "__name__", "integrand")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        inside = (u >= lo) & (u < hi)
        return np.where(inside, self.evaluator(u), 0.0)

    @classmethod
    def constant(cls, c, support=(0.0, math.inf)):
        return cls(lambda u: np.full(np.shape(u), c), support, name=f"const({c})")


@dataclass
class CheckReport:
    name: str
    estimate: object
    expected: object
    std_error: object
    z: float
    passed: bool
    threshold: float = Z_THRESHOLD
    n_paths: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        for key in ("estimate", "expected", "std_error"):
            value = out[key]
            if isinstance(value, complex):
                out[key] = {"re": value.real, "im": value.imag}
        return out


def report_json(reports, indent=2):
    body = {
        "passed": all(r.passed for r in reports),
        "checks": [r.to_dict() for r in reports],
    }
    return json.dumps(body, indent=indent, sort_keys=True)


def _grid(t, dt):
    if not t > 0:
        raise ValueError("t must be positive")
    steps = max(1, math.ceil(t / dt - 1e-9))
    return np.linspace(0.0, t, steps + 1)


def _moments(x):
    mean = x.mean(axis=0)
    return len(x), mean, ((x - mean) ** 2).sum(axis=0), x.max(axis=0)


def _sample_moments(stat, n_paths, grid, seed_base, batch, threads, track_max=False):
    """Mean and standard error of the real columns ``stat(dW)`` over all paths.

    Per-batch moments are merged in batch order, so the result is the same
    for any thread count.  With ``track_max`` the column maxima are returned
    as well.
    """
    jobs = [range(seed_base + s, seed_base + min(n_paths, s + batch))
            for s in range(0, n_paths, batch)]
    run = lambda seeds: _moments(np.atleast_2d(stat(wiener_increments(seeds, grid)).T).T)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(seeds) for seeds in jobs]
    mean, m2, n = merge_moments(part[:3] for part in parts)
    se = np.sqrt(m2 / ((n - 1) * n))
    if track_max:
        return mean, se, np.max([part[3] for part in parts], axis=0)
    return mean, se


def _zscore(estimate, expected, se):
    diff = abs(estimate - expected)
    if se == 0:
        return 0.0 if diff < 1e-14 else math.inf
    return float(diff / se)


def _real_report(name, estimate, expected, se, n_paths, **details):
    z = _zscore(estimate, expected, se)
    return CheckReport(name, float(estimate), float(expected), float(se), z,
                       bool(z <= Z_THRESHOLD), n_paths=n_paths, details=details)


def _complex_report(name, est, expected, se, n_paths, **details):
    """``est`` and ``se`` are ``(re, im)`` pairs; z is the worse of the two parts."""
    z = max(_zscore(est[0], expected.real, se[0]), _zscore(est[1], expected.imag, se[1]))
    return CheckReport(name, complex(est[0], est[1]), complex(expected), complex(se[0], se[1]),
                       z, bool(z <= Z_THRESHOLD), n_paths=n_paths, details=details)


def _quad(func, lo, hi, points=None):
    if hi <= lo:
        return 0.0
    pts = None if not points else sorted(p for p in points if lo < p < hi) or None
    value, _ = integrate.quad(func, lo, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500,
                              points=pts)
    return value


def check_ito_isometry(A, B, n_paths, t, dt=1e-3, seed_base=0, batch=2000, threads=1):
    """``E[int A dW int B dW] = int A B du`` on ``[0, t]`` for real deterministic A, B."""
    grid = _grid(t, dt)
    u = grid[:-1]
    a, b = np.real(A(u)), np.real(B(u))

    def stat(dW):
        return (dW @ a) * (dW @ b)

    mean, se = _sample_moments(stat, n_paths, grid, seed_base, batch, threads)
    lo = max(A.support[0], B.support[0], 0.0)
    hi = min(A.support[1], B.support[1], t)
    rhs = _quad(lambda x: float(np.real(A(x) * B(x))), lo, hi)
    return _real_report(f"ito_isometry[{A.name},{B.name}]", mean[0], rhs, se[0], n_paths,
                        t=t, dt=dt)


def check_exponential_martingale(Phi, n_paths, t, dt=1e-3, seed_base=0, batch=2000, threads=1):
    """``E[exp(int Phi dW)] = exp(1/2 int Phi^2 dv)`` for real or purely imaginary Phi.

    ``Phi`` is a function of ``v`` only (``t`` is fixed for the check).  Real
    and imaginary parts of the estimate are tested separately.
    """
    grid = _grid(t, dt)
    phi = np.asarray(Phi(grid[:-1]), dtype=complex)
    if np.any(phi.real != 0) and np.any(phi.imag != 0):
        raise ValueError("Phi must be purely real or purely imaginary")

    def stat(dW):
        x = np.exp(dW @ phi)
        return np.stack([x.real, x.imag], axis=-1)

    mean, se = _sample_moments(stat, n_paths, grid, seed_base, batch, threads)
    sq_re = _quad(lambda v: float(np.real(Phi(v)) ** 2), 0.0, t, Phi.support)
    sq_im = _quad(lambda v: float(np.imag(Phi(v)) ** 2), 0.0, t, Phi.support)
    expected = math.exp(0.5 * (sq_re - sq_im))
    return _complex_report(f"exponential_martingale[{Phi.name}]", mean, complex(expected), se,
                           n_paths, t=t, dt=dt)


def fubini_sides(dW, grid, omega_m):
    """Both discretizations of ``int_0^t z_s ds`` for each path (rows of ``dW``).

    Left: Riemann sum of the left-point ``z`` series.  Right: single Ito sum
    ``sum_k [1 - cos omega (t - v_k)] / omega dW_k``.
    """
    z = -np.imag(stochastic_convolution(dW, grid, omega_m))
    lhs = z[..., :-1] @ np.diff(grid)
    t = grid[-1]
    weight = (1 - np.cos(omega_m * (t - grid[:-1]))) / omega_m
    return lhs, dW @ weight


def fubini_bound(dW, grid, omega_m):
    """Per-path bound ``(1 + omega t) sum |dW_k|`` on the discretization gap divided by dt."""
    return (1 + omega_m * grid[-1]) * np.abs(dW).sum(axis=-1)


def check_stochastic_fubini(omega_m, n_paths, t, dt=1e-3, seed_base=0, batch=2000, threads=1):
    """Pathwise agreement of the two forms of ``int z ds`` and their zero means.

    The gap on each path is at most ``dt * fubini_bound``; the check allows
    five times that.
    """
    grid = _grid(t, dt)
    h = float(np.max(np.diff(grid)))

    def stat(dW):
        lhs, rhs = fubini_sides(dW, grid, omega_m)
        ratio = np.abs(lhs - rhs) / (h * fubini_bound(dW, grid, omega_m))
        return np.stack([lhs, rhs, ratio], axis=-1)

    mean, se, worst = _sample_moments(stat, n_paths, grid, seed_base, batch, threads,
                                      track_max=True)
    worst = float(worst[2])
    z = max(_zscore(mean[0], 0.0, se[0]), _zscore(mean[1], 0.0, se[1]))
    passed = bool(z <= Z_THRESHOLD and worst <= 5.0)
    return CheckReport("stochastic_fubini", float(mean[0] - mean[1]), 0.0, float(se[0]), z, passed,
                       n_paths=n_paths,
                       details={"t": t, "dt": dt, "mean_lhs": float(mean[0]),
                                "mean_rhs": float(mean[1]), "worst_gap_over_bound": worst})


def check_quadratic_variation(n_paths, t, dt=1e-3, seed_base=0, batch=2000, threads=1):
    """Mean of ``dW^2 / dt`` over all increments equals 1."""
    grid = _grid(t, dt)
    h = np.diff(grid)
    mean, se = _sample_moments(lambda dW: (dW ** 2 / h).mean(axis=1), n_paths, grid, seed_base,
                               batch, threads)
    return _real_report("quadratic_variation", mean[0], 1.0, se[0], n_paths, t=t, dt=dt)


def check_non_anticipation(n_paths, t, dt=1e-3, seed_base=0, batch=2000, threads=1):
    """``E[dW_k f(W_{t_k})] = 0`` with ``f = cos``, for ``k`` at mid-horizon."""
    grid = _grid(t, dt)
    k = (len(grid) - 1) // 2

    def stat(dW):
        return dW[:, k] * np.cos(dW[:, :k].sum(axis=1)) / math.sqrt(grid[k + 1] - grid[k])

    mean, se = _sample_moments(stat, n_paths, grid, seed_base, batch, threads)
    return _real_report("non_anticipation", mean[0], 0.0, se[0], n_paths, t=t, dt=dt, index=k)


def check_kernel_correlation(omega_m, t, s, n_paths, dt=1e-3, seed_base=0, batch=2000, threads=1):
    """Sample ``E[z_t z_s]`` against the closed-form kernel."""
    t_end = max(t, s)
    grid = _grid(t_end, dt)
    it = int(np.argmin(np.abs(grid - t)))
    is_ = int(np.argmin(np.abs(grid - s)))

    def stat(dW):
        z = -np.imag(stochastic_convolution(dW, grid, omega_m))
        return z[:, it] * z[:, is_]

    mean, se = _sample_moments(stat, n_paths, grid, seed_base, batch, threads)
    expected = float(correlation_kernel(grid[it], grid[is_], omega_m))
    return _real_report("kernel_correlation", mean[0], expected, se[0], n_paths, t=t, s=s, dt=dt)


def kernel_double_integral(t, omega_m, method="closed"):
    """``int_0^t int_0^t K(s1, s2) ds1 ds2``.

    ``method``: ``"closed"`` (exact), ``"single"`` (quadrature of
    ``omega^-2 [1 - cos omega (t - v)]^2``) or ``"double"`` (2D quadrature of
    the kernel, split along the diagonal where it has a kink).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    w = omega_m
    if t == 0:
        return 0.0
    if method == "closed":
        return (1.5 * t - 2 * math.sin(w * t) / w + math.sin(2 * w * t) / (4 * w)) / w ** 2
    if method == "single":
        return _quad(lambda v: (1 - math.cos(w * (t - v))) ** 2, 0.0, t) / w ** 2
    if method == "double":
        value, _ = integrate.dblquad(lambda s2, s1: float(correlation_kernel(s1, s2, w)),
                                     0.0, t, 0.0, lambda s1: s1,
                                     epsabs=QUAD_TOL * 1e-2, epsrel=QUAD_TOL * 1e-2)
        return 2 * value
    raise ValueError(f"unknown method {method!r}")


def check_kernel_forms(t=3.0, omega_m=1.0, tol=1e-10):
    values = {m: kernel_double_integral(t, omega_m, m) for m in ("closed", "single", "double")}
    gap = max(abs(values["single"] - values["closed"]), abs(values["double"] - values["closed"]))
    rel = gap / abs(values["closed"])
    return CheckReport("kernel_double_integral", values["double"], values["closed"], 0.0,
                       0.0 if rel <= tol else math.inf, bool(rel <= tol),
                       details={"t": t, "omega_m": omega_m, "relative_gap": rel, **values})


def run_suite(n_paths=100_000, dt=1e-3, seed_base=0, omega_m=1.0, threads=1):
    """All identity checks at the standard settings; returns a list of reports."""
    w = omega_m
    one = DeterministicIntegrand.constant(1.0)
    t, s = 2.0, 1.0
    sin_t = DeterministicIntegrand(lambda u: np.sin(w * (t - u)), (0.0, t), "sin_t")
    sin_s = DeterministicIntegrand(lambda u: np.sin(w * (s - u)), (0.0, s), "sin_s")
    early = DeterministicIntegrand(lambda u: np.ones_like(u), (0.0, 0.5), "early")
    late = DeterministicIntegrand(lambda u: np.ones_like(u), (0.5, 1.0), "late")
    c = 0.5
    const_phi = DeterministicIntegrand.constant(c)
    imag_phi = DeterministicIntegrand.constant(1j * c)
    kern_phi = DeterministicIntegrand(lambda v: 1j * c / w * (1 - np.cos(w * (1.0 - v))),
                                      (0.0, 1.0), "kernel_phi")
    opts = dict(dt=dt, seed_base=seed_base, threads=threads)
    return [
        check_quadratic_variation(n_paths, 1.0, **opts),
        check_non_anticipation(n_paths, 1.0, **opts),
        check_ito_isometry(one, one, n_paths, 1.0, **opts),
        check_ito_isometry(sin_t, sin_s, n_paths, t, **opts),
        check_ito_isometry(early, late, n_paths, 1.0, **opts),
        check_exponential_martingale(const_phi, n_paths, 1.0, **opts),
        check_exponential_martingale(imag_phi, n_paths, 1.0, **opts),
        check_exponential_martingale(kern_phi, n_paths, 1.0, **opts),
        check_stochastic_fubini(w, n_paths, 2.0, **opts),
        check_kernel_forms(3.0, w),
    ]
