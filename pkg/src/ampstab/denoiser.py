"""Bernoulli-Gaussian prior and the cumulants of its Gaussian-tilted posterior.

The tilted measure is

    Q(x) ∝ P(x) exp(-(x - R)^2 / (2 sigma2)),
    P(x) = (1 - rho) delta(x) + rho N(x; slab_mean, slab_var),

which is again a two-component mixture: an atom at zero and a Gaussian with
conjugate mean and variance. Its first four connected cumulants are the
scalar denoiser (f1), its variance (f2) and the two higher cumulants needed
by the transverse stability analysis (f3, f4).

All closed-form routines broadcast over numpy arrays.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import expit

SIGMA2_FLOOR = 1e-14


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails to reach its accuracy target."""


@dataclass(frozen=True)
class Prior:
    """Bernoulli-Gaussian prior ``(1 - rho) delta(x) + rho N(slab_mean, slab_var)``."""

    rho: float
    slab_mean: float = 0.0
    slab_var: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not (np.isfinite(self.slab_mean) and np.isfinite(self.slab_var)):
            raise ValueError("slab parameters must be finite")
        if self.slab_var <= 0:
            raise ValueError(f"slab_var must be positive, got {self.slab_var}")

    @property
    def second_moment(self):
        return self.rho * (self.slab_var + self.slab_mean**2)

    @property
    def mean(self):
        return self.rho * self.slab_mean


def _check_channel(sigma2, r):
    sigma2 = np.asarray(sigma2, dtype=float)
    r = np.asarray(r, dtype=float)
    if not (np.all(np.isfinite(sigma2)) and np.all(np.isfinite(r))):
        raise ValueError("channel parameters must be finite")
    if np.any(sigma2 <= 0):
        raise ValueError("sigma2 must be strictly positive")
    return sigma2, r


def _posterior(prior, sigma2, r):
    """Slab responsibility, slab posterior mean and slab posterior variance."""
    sigma2 = np.maximum(sigma2, SIGMA2_FLOOR)
    m, s = prior.slab_mean, prior.slab_var
    tot = s + sigma2
    # log-odds of slab vs atom, normalisations of N(R; 0, sigma2) and N(R; m, s + sigma2)
    log_odds = (
        0.5 * (r * r / sigma2 - (r - m) ** 2 / tot)
        + 0.5 * np.log(sigma2 / tot)
    )
    if prior.rho < 1.0:
        log_odds = log_odds + np.log(prior.rho) - np.log1p(-prior.rho)
        pi = expit(log_odds)
    else:
        pi = np.ones_like(log_odds)
    mu = (m * sigma2 + r * s) / tot
    tau = s * sigma2 / tot
    return pi, mu, tau


def _cumulants(prior, sigma2, r):
    # central moments of the mixture; delta is the slab offset from the mixture mean
    pi, mu, tau = _posterior(prior, sigma2, r)
    c = pi * mu
    q = 1.0 - pi
    delta = q * mu
    k2 = q * c * c + pi * (delta * delta + tau)
    k3 = -q * c**3 + pi * (delta**3 + 3.0 * delta * tau)
    mu4 = q * c**4 + pi * (delta**4 + 6.0 * delta * delta * tau + 3.0 * tau * tau)
    k4 = mu4 - 3.0 * k2 * k2
    return c, k2, k3, k4


def f1_f2(prior, sigma2, r):
    """Posterior mean and variance without input validation (solver hot path)."""
    pi, mu, tau = _posterior(prior, sigma2, r)
    c = pi * mu
    q = 1.0 - pi
    var = pi * (q * mu * mu + tau)
    return c, var


def cumulants(prior, sigma2, r):
    """Return ``(f1, f2, f3, f4)`` of the tilted measure.

    Parameters
    ----------
    prior : Prior
    sigma2 : float or ndarray
        Channel variance, strictly positive. Values below ``SIGMA2_FLOOR``
        are clamped.
    r : float or ndarray
        Channel mean.
    """
    sigma2, r = _check_channel(sigma2, r)
    out = _cumulants(prior, sigma2, r)
    if np.ndim(out[0]) == 0:
        return tuple(float(x) for x in out)
    return out


def f1(prior, sigma2, r):
    return cumulants(prior, sigma2, r)[0]


def f2(prior, sigma2, r):
    return cumulants(prior, sigma2, r)[1]


def f3(prior, sigma2, r):
    return cumulants(prior, sigma2, r)[2]


def f4(prior, sigma2, r):
    return cumulants(prior, sigma2, r)[3]


def oracle_cumulant(prior, sigma2, r, k):
    """k-th connected cumulant of the tilted measure by adaptive quadrature.

    The atom at zero is handled exactly; the slab density is integrated with
    ``scipy.integrate.quad`` on a window around its numerically located mode.
    This deliberately avoids the Gaussian-conjugacy formulas used by
    :func:`cumulants`, so the two can be checked against each other.
    """
    if k not in (1, 2, 3, 4):
        raise ValueError(f"k must be in 1..4, got {k}")
    sigma2, r = _check_channel(sigma2, r)
    sigma2, r = float(sigma2), float(r)
    rho, m, s = prior.rho, prior.slab_mean, prior.slab_var

    def log_slab(x):
        return (
            np.log(rho)
            - 0.5 * (x - m) ** 2 / s
            - 0.5 * np.log(2 * np.pi * s)
            - 0.5 * (x - r) ** 2 / sigma2
        )

    log_atom = np.log1p(-rho) - 0.5 * r * r / sigma2 if rho < 1 else -np.inf

    width = np.sqrt(min(s, sigma2))
    res = optimize.minimize_scalar(
        lambda x: -log_slab(x), bracket=(min(m, r) - 1.0, max(m, r) + 1.0)
    )
    mode = res.x
    # the mode search only has to land within a few widths of the peak
    lo, hi = mode - 40 * width, mode + 40 * width
    shift = max(log_slab(mode), log_atom)

    def moment(g):
        dens = lambda x: np.exp(log_slab(x) - shift)
        val, err, info = _quad(lambda x: g(x) * dens(x), lo, hi, mode)
        scale = integrate.quad(lambda x: abs(g(x)) * dens(x), lo, hi, points=[mode], limit=500)[0]
        if err > 1e-11 * max(scale, 1e-300) and err > 1e-300:
            raise NumericalError(
                f"quadrature did not converge on [{lo:g}, {hi:g}]: value={val:g} "
                f"error estimate={err:g} evaluations={info['neval']}"
            )
        atom = np.exp(log_atom - shift) * g(0.0) if rho < 1 else 0.0
        return val + atom, err

    z, zerr = moment(lambda x: 1.0)
    mean_num, _ = moment(lambda x: x)
    mean = mean_num / z
    if k == 1:
        return mean
    cm = {}
    for j in range(2, k + 1):
        num, _ = moment(lambda x, j=j: (x - mean) ** j)
        cm[j] = num / z
    if k == 2:
        return cm[2]
    if k == 3:
        return cm[3]
    return cm[4] - 3.0 * cm[2] ** 2


def _quad(func, lo, hi, mode):
    val, err, info = integrate.quad(
        func, lo, hi, points=[mode], epsabs=0.0, epsrel=1e-13, limit=500, full_output=1
    )[:3]
    if not np.isfinite(val):
        raise NumericalError(f"non-finite quadrature on [{lo:g}, {hi:g}] after {info['neval']} evaluations")
    return val, err, info


def sample_signal(prior, n, seed):
    """Draw ``n`` iid samples from the Bernoulli-Gaussian prior.

    ``prior`` may be a :class:`Prior` or a bare sparsity in ``[0, 1]``; the
    latter is the only way to ask for the all-zero signal ``rho = 0``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if isinstance(prior, Prior):
        rho, m, s = prior.rho, prior.slab_mean, prior.slab_var
    else:
        rho, m, s = float(prior), 0.0, 1.0
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {rho}")
    rng = np.random.default_rng(seed)
    support = rng.random(n) < rho
    slab = m + np.sqrt(s) * rng.standard_normal(n)
    return np.where(support, slab, 0.0)
