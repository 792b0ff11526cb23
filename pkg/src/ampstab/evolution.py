"""Three-parameter state evolution (E, V, D) for non-zero-mean matrices.

The order parameters are the mean squared error ``E``, the average posterior
variance ``V`` and the average signed bias ``D = mean(s - a)``. With the
effective channel

    sigma2 = (delta + V) / alpha,
    R      = s + z * sqrt((E + delta + gamma^2 D^2) / alpha) + gamma^2 D,

one step of the recursion averages f2, (s - f1)^2 and (s - f1) over the
prior on ``s`` and a standard Gaussian ``z``. On the Bayes-optimal manifold
``E = V, D = 0`` (the Nishimori line) the matrix mean ``gamma`` drops out.

Transverse to that line the linearised map is diagonal for the
Bernoulli-Gaussian prior; its two eigenvalues are returned by
:func:`lambda_d` and :func:`lambda_k`.
"""
import functools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .denoiser import Prior, _cumulants, NumericalError

DIVERGENCE_FACTOR = 1e4


@dataclass(frozen=True)
class SeState:
    e: float
    v: float
    d: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.e) and np.isfinite(self.v) and np.isfinite(self.d)):
            raise ValueError("state evolution parameters must be finite")
        if self.e < 0 or self.v < 0:
            raise ValueError("E and V must be non-negative")


@dataclass(frozen=True)
class SeParams:
    alpha: float
    delta: float
    gamma: float
    prior: Prior

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.delta < 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")

    def with_gamma(self, gamma):
        return SeParams(self.alpha, self.delta, gamma, self.prior)


class Quadrature:
    """Product rule for averages over the signal prior and a standard Gaussian z.

    z is integrated with Gauss-Hermite. The slab part of the prior is
    integrated with three Gauss-Legendre panels: a narrow one around the
    signal value that the effective channel maps to the origin, and two
    outer ones. Near the fixed point the denoiser switches between the atom
    and the slab on a scale comparable to the channel width, which a
    Gauss-Hermite rule in s (whose central node sits exactly on that
    feature) resolves badly.

    ``refine=True`` re-evaluates every integral with twice the node count
    and records the largest discrepancy in ``last_refine_error``; a warning
    is issued when it exceeds ``refine_tol``.
    """

    def __init__(self, nodes=101, refine=False, refine_tol=1e-9):
        if nodes < 21:
            raise ValueError(f"at least 21 nodes required, got {nodes}")
        self.nodes = nodes
        self.refine = refine
        self.refine_tol = refine_tol
        self.last_refine_error = 0.0
        x, w = np.polynomial.hermite.hermgauss(nodes)
        # probabilists' normalisation: integrate against N(0, 1)
        self.z = x * np.sqrt(2.0)
        self.w = w / np.sqrt(np.pi)
        self.gl_x, self.gl_w = np.polynomial.legendre.leggauss(nodes)
        # the atom row switches to the slab at |z| ~ sqrt(2 log(1/sigma)); resolve it finely
        panels = [self._panel(a, a + 3.0) for a in np.arange(-12.0, 12.0, 3.0)]
        self.z_atom = np.concatenate([p[0] for p in panels])
        self.w_atom = np.concatenate([p[1] for p in panels]) * np.exp(-0.5 * self.z_atom**2) / np.sqrt(2 * np.pi)
        self._fine = None

    @property
    def fine(self):
        if self._fine is None:
            self._fine = Quadrature(2 * self.nodes)
        return self._fine

    def _panel(self, a, b):
        half = 0.5 * (b - a)
        return a + half * (self.gl_x + 1.0), half * self.gl_w

    def grid(self, prior, width=None, center=0.0):
        """Slab nodes and weights (the atom is handled separately).

        ``width`` is the half-width of the inner panel placed at ``center``
        (the signal value that lands on R = 0); ``None`` uses one panel
        over the whole slab. Returns arrays of shape (K, 1).
        """
        m, sd = prior.slab_mean, np.sqrt(prior.slab_var)
        lo, hi = m - 12.0 * sd, m + 12.0 * sd
        if width is None or center - width <= lo or center + width >= hi:
            pieces = [self._panel(lo, hi)] if width is None else [
                self._panel(lo, min(max(center, lo), hi)),
                self._panel(min(max(center, lo), hi), hi),
            ]
        else:
            pieces = [
                self._panel(lo, center - width),
                self._panel(center - width, center + width),
                self._panel(center + width, hi),
            ]
        s_slab = np.concatenate([p[0] for p in pieces])
        w_slab = np.concatenate([p[1] for p in pieces])
        w_slab = w_slab * np.exp(-0.5 * ((s_slab - m) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
        w_slab *= prior.rho
        return s_slab[:, None], w_slab[:, None]

    def average(self, prior, integrand, amp=1.0, shift=0.0):
        """Average ``integrand(s, z)`` over the prior and a standard Gaussian z.

        ``amp`` and ``shift`` describe the channel ``R = s + amp z + shift``
        and only steer where the slab panels are placed. ``integrand``
        returns an array or a tuple of arrays broadcastable to
        (K, nodes); a tuple of floats is returned.
        """
        out = self._average(prior, integrand, amp, shift)
        if self.refine:
            fine = self.fine._average(prior, integrand, amp, shift)
            err = max(abs(a - b) for a, b in zip(out, fine))
            self.last_refine_error = err
            if err > self.refine_tol:
                warnings.warn(
                    f"node doubling changed an integral by {err:.3g}",
                    RuntimeWarning,
                    stacklevel=3,
                )
        return out

    def _average(self, prior, integrand, amp, shift):
        # covers every z node plus the atom/slab switching band
        width = amp * (self.z[-1] + 10.0)
        s, ws = self.grid(prior, width, -shift)
        vals = integrand(s, self.z[None, :])
        if not isinstance(vals, tuple):
            vals = (vals,)
        weight = ws * self.w[None, :]
        out = [np.sum(weight * v) for v in vals]
        if prior.rho < 1:
            atom = integrand(np.zeros((1, 1)), self.z_atom[None, :])
            if not isinstance(atom, tuple):
                atom = (atom,)
            out = [o + (1.0 - prior.rho) * np.sum(self.w_atom * a) for o, a in zip(out, atom)]
        return tuple(float(o) for o in out)


DEFAULT_QUAD = Quadrature()


def _channel(state, params):
    sigma2 = (params.delta + state.v) / params.alpha
    g2 = params.gamma**2
    amp = np.sqrt((state.e + params.delta + g2 * state.d**2) / params.alpha)
    return sigma2, amp, g2 * state.d


def se_step(state, params, quad=DEFAULT_QUAD):
    """One iteration of the (E, V, D) state evolution."""
    sigma2, amp, shift = _channel(state, params)
    prior = params.prior

    def integrand(s, z):
        a, v, _, _ = _cumulants(prior, sigma2, s + z * amp + shift)
        err = s - a
        return v + 0 * s, err * err, err

    v_new, e_new, d_new = quad.average(prior, integrand, amp, shift)
    return SeState(e=max(e_new, 0.0), v=max(v_new, 0.0), d=d_new)


def classic_se_step(e, v, alpha, delta, prior, quad=DEFAULT_QUAD):
    """Two-parameter (E, V) state evolution of the zero-mean ensemble."""
    sigma2 = (delta + v) / alpha
    amp = np.sqrt((e + delta) / alpha)

    def integrand(s, z):
        a, var, _, _ = _cumulants(prior, sigma2, s + z * amp)
        return (s - a) ** 2, var + 0 * s

    return quad.average(prior, integrand, amp)


@dataclass
class SeTrajectory:
    states: list = field(default_factory=list)
    status: str = "max_iter"

    @property
    def e(self):
        return np.array([st.e for st in self.states])

    @property
    def v(self):
        return np.array([st.v for st in self.states])

    @property
    def d(self):
        return np.array([st.d for st in self.states])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,E,V,D\n")
            for t, st in enumerate(self.states):
                fh.write(f"{t},{st.e!r},{st.v!r},{st.d!r}\n")


def se_run(init, params, quad=DEFAULT_QUAD, max_iter=1000, tol=1e-13):
    """Iterate :func:`se_step` from ``init`` until the change in (E, V, D) is below ``tol``."""
    traj = SeTrajectory([init])
    state = init
    limit = DIVERGENCE_FACTOR * params.prior.second_moment
    for _ in range(max_iter):
        try:
            new = se_step(state, params, quad)
        except ValueError:
            traj.status = "diverged"
            return traj
        traj.states.append(new)
        if new.e > limit or new.v > limit:
            traj.status = "diverged"
            return traj
        change = max(abs(new.e - state.e), abs(new.v - state.v), abs(new.d - state.d))
        state = new
        if change < tol:
            traj.status = "converged"
            return traj
    return traj


def nishimori_step(v, params, quad=DEFAULT_QUAD):
    """Scalar recursion on the line E = V, D = 0 (independent of gamma)."""
    sigma2 = (params.delta + v) / params.alpha
    amp = np.sqrt(sigma2)
    prior = params.prior

    def integrand(s, z):
        return _cumulants(prior, sigma2, s + z * amp)[1] + 0 * s

    return quad.average(prior, integrand, amp)[0]


def nishimori_trajectory(params, quad=DEFAULT_QUAD, max_iter=2000, tol=1e-14, v_min=0.0):
    """V values visited by the scalar state evolution started at the prior variance.

    Iteration stops when successive values differ by less than ``tol`` times
    the current value (or absolutely, at ``delta > 0``), when V drops below
    ``v_min``, or after ``max_iter`` steps.
    """
    v = params.prior.rho * params.prior.slab_var
    out = [v]
    for _ in range(max_iter):
        new = nishimori_step(v, params, quad)
        if not np.isfinite(new):
            raise NumericalError(f"non-finite Nishimori iterate after V={v:g}")
        out.append(new)
        if abs(new - v) <= tol * max(new, params.delta) or new < v_min:
            break
        v = new
    return np.array(out)


def lambda_d(v, params, quad=DEFAULT_QUAD):
    """Eigenvalue of the linearised map along the bias direction D.

    ``-alpha gamma^2 / (delta + V) * <f2>`` with the channel evaluated on
    the Nishimori line at variance ``v``; ``<f2>`` is the next V.
    """
    if v < 0:
        raise ValueError("V must be non-negative")
    if params.gamma == 0:
        return 0.0
    return -params.alpha * params.gamma**2 * nishimori_step(v, params, quad) / (params.delta + v)


def lambda_k(v, params, quad=DEFAULT_QUAD):
    """Eigenvalue of the linearised map along K = V - E at fixed V.

    Moving along K changes only the noise amplitude of the effective
    channel, so by the heat-equation identity and dR f_k = f_{k+1} / sigma2
    the derivative is

        -alpha / (2 (delta + V)^2) < f4 - 2 f2^2 - 2 (f1 - s) f3 >.

    The matrix mean gamma does not enter.
    """
    if v < 0:
        raise ValueError("V must be non-negative")
    sigma2 = (params.delta + v) / params.alpha
    amp = np.sqrt(sigma2)
    prior = params.prior

    def integrand(s, z):
        a, var, k3, k4 = _cumulants(prior, sigma2, s + z * amp)
        return k4 - 2.0 * var * var - 2.0 * (a - s) * k3

    bracket = quad.average(prior, integrand, amp)[0]
    return -0.5 * bracket / (params.alpha * sigma2 * sigma2)


def transverse_map(v, k, d, params, quad=DEFAULT_QUAD):
    """(K', D') produced by one SE step from (E = V - K, V, D)."""
    out = se_step(_unchecked_state(v - k, v, d), params, quad)
    return out.v - out.e, out.d


def _unchecked_state(e, v, d):
    # finite-difference probes may step slightly below E = 0 near the fixed point
    st = object.__new__(SeState)
    object.__setattr__(st, "e", e)
    object.__setattr__(st, "v", v)
    object.__setattr__(st, "d", d)
    return st


def fd_check_matrix(v, params, quad=DEFAULT_QUAD, step=1e-5):
    """Central finite-difference Jacobian of (K, D) -> (K', D') at K = D = 0.

    Row/column order is (K, D). The K step is relative to ``v`` (so that E
    stays non-negative) and the D step relative to the channel width
    ``sqrt(delta + v)``, the scale on which D moves the channel mean.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3]")
    hk = step * v
    hd = step * np.sqrt(params.delta + v)
    jac = np.empty((2, 2))
    kp = transverse_map(v, hk, 0.0, params, quad)
    km = transverse_map(v, -hk, 0.0, params, quad)
    dp = transverse_map(v, 0.0, hd, params, quad)
    dm = transverse_map(v, 0.0, -hd, params, quad)
    jac[:, 0] = (np.subtract(kp, km)) / (2 * hk)
    jac[:, 1] = (np.subtract(dp, dm)) / (2 * hd)
    return jac


REGIMES = ("stable", "partially_unstable", "fully_unstable")


@dataclass
class StabilityReport:
    v_grid: np.ndarray
    lambda_d: np.ndarray
    lambda_k: np.ndarray
    lambda_d_fixed_point: float
    gamma_c1: float
    gamma_c2: float
    regime: str
    params: SeParams = None

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("V,lambda_D,lambda_K\n")
            for row in zip(self.v_grid, self.lambda_d, self.lambda_k):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    def summary(self):
        p = self.params
        return {
            "schema": "ampstab.stability/1",
            "rho": p.prior.rho if p else None,
            "alpha": p.alpha if p else None,
            "delta": p.delta if p else None,
            "gamma": p.gamma if p else None,
            "gamma_c1": self.gamma_c1,
            "gamma_c2": self.gamma_c2,
            "lambda_d_fixed_point": self.lambda_d_fixed_point,
            "max_abs_lambda_d": float(np.max(np.abs(self.lambda_d))),
            "max_abs_lambda_k": float(np.max(np.abs(self.lambda_k))),
            "regime": self.regime,
        }


def _aitken(x):
    """Delta-squared extrapolation of the limit of the last three terms."""
    if len(x) < 3:
        return x[-1]
    x0, x1, x2 = x[-3:]
    den = x2 - 2 * x1 + x0
    if den == 0 or not np.isfinite(den):
        return x2
    lim = x2 - (x2 - x1) ** 2 / den
    # a geometric tail cannot overshoot by more than its last increment
    if abs(lim - x2) > abs(x2 - x1) * 10:
        return x2
    return lim


def _refine_sup(vs, lam, unit, quad):
    """Continuous maximum of |lambda_D| between the neighbours of the discrete argmax.

    Returns ``(v_star, |lambda_D(v_star)|)``.
    """
    i = int(np.argmax(np.abs(lam)))
    best = (vs[i], abs(lam[i]))
    if len(vs) < 3:
        return best
    hi = vs[max(i - 1, 0)]
    lo = vs[min(i + 1, len(vs) - 1)]
    if not lo > 0 or hi <= lo:
        return best
    res = optimize.minimize_scalar(
        lambda u: -abs(lambda_d(np.exp(u), unit, quad)),
        bounds=(np.log(lo), np.log(hi)),
        method="bounded",
        options={"xatol": 1e-6},
    )
    if -res.fun > best[1]:
        return float(np.exp(res.x)), float(-res.fun)
    return best


def _unit_profile(params, quad, v_floor):
    return _unit_profile_cached(params.with_gamma(1.0), quad, v_floor)


@functools.lru_cache(maxsize=256)
def _unit_profile_cached(unit, quad, v_floor):
    """lambda_D at gamma = 1 along the Nishimori trajectory.

    Returns the trajectory, the profile on it, the refined supremum point
    ``(v, |lambda_D|)`` and the fixed-point limit of lambda_D.
    """
    exact = unit.delta == 0
    vs = nishimori_trajectory(unit, quad, v_min=v_floor if exact else 0.0)
    if exact:
        # below the floor the channel variance hits SIGMA2_FLOOR
        vs = vs[vs >= v_floor] if np.any(vs >= v_floor) else vs[:1]
    lam = np.array([lambda_d(v, unit, quad) for v in vs])
    if exact:
        tail = lam[vs < 1e-8]
        fixed = _aitken(tail) if len(tail) else lam[-1]
    else:
        # V* > 0: evaluate at the converged fixed point itself
        fixed = lam[-1]
    sup = _refine_sup(vs, lam, unit, quad)
    return vs, lam, sup, fixed


def critical_gammas(params, quad=DEFAULT_QUAD, v_floor=1e-12):
    """Return ``(gamma_c1, gamma_c2)`` from a single unit-gamma profile.

    lambda_D scales exactly as gamma^2, so ``gamma_c = 1 / sqrt(|lambda_D(gamma=1)|)``
    with the supremum over the trajectory for the first threshold and the
    fixed-point limit for the second.
    """
    _, _, (_, sup), fixed = _unit_profile(params, quad, v_floor)
    if sup == 0 or fixed == 0:
        raise ValueError("lambda_D profile vanishes identically; thresholds undefined")
    return 1.0 / np.sqrt(sup), 1.0 / np.sqrt(abs(fixed))


def _width_profile(prior, a2, quad):
    """|lambda_D| at gamma = 1 as a function of the squared channel width (noiseless)."""
    unit = SeParams(1.0, 0.0, 1.0, prior)
    return nishimori_step(a2, unit, quad) / a2


def critical_gammas_continuum(prior, quad=DEFAULT_QUAD, a2_min=1e-12, a2_max=10.0):
    """Undersampling-free thresholds of the noiseless problem.

    At ``delta = 0`` lambda_D depends on V only through the channel width
    ``A^2 = V / alpha``. ``gamma_c1`` uses the supremum over every width in
    ``[a2_min, a2_max]`` and ``gamma_c2`` the small-width limit, so neither
    depends on how much of the line a particular alpha visits.
    """
    grid = np.geomspace(a2_min, a2_max, 121)
    g = np.array([_width_profile(prior, a2, quad) for a2 in grid])
    i = int(np.argmax(g))
    lo, hi = np.log(grid[max(i - 1, 0)]), np.log(grid[min(i + 1, len(grid) - 1)])
    res = optimize.minimize_scalar(lambda u: -_width_profile(prior, np.exp(u), quad),
                                   bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    sup = max(g[i], -res.fun)
    tail = np.array([_width_profile(prior, a2, quad) for a2 in a2_min * np.array([16.0, 4.0, 1.0])])
    fixed = _aitken(tail)
    return 1.0 / np.sqrt(sup), 1.0 / np.sqrt(fixed)


def find_gamma_c(params, which, quad=DEFAULT_QUAD, xtol=1e-8, v_floor=1e-12):
    """Locate the first (``which=1``) or second (``which=2``) critical matrix mean by bisection.

    ``params.gamma`` is ignored. The bisection is run on the actual
    stability criterion at each trial gamma; :func:`critical_gammas` gives
    the same numbers through the gamma^2 scaling.
    """
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    vs, _, (v_sup, sup1), fixed1 = _unit_profile(params, quad, v_floor)
    target = sup1 if which == 1 else abs(fixed1)
    if target == 0:
        raise ValueError("lambda_D profile vanishes identically; thresholds undefined")
    probe = np.append(vs, v_sup)

    def unstable(g):
        if which == 1:
            p = params.with_gamma(g)
            return max(abs(lambda_d(v, p, quad)) for v in probe) > 1.0
        return abs(fixed1) * g * g > 1.0

    lo, hi = 0.0, 1.0
    while not unstable(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def stability_profile(params, quad=DEFAULT_QUAD, v_floor=1e-12):
    """lambda_D and lambda_K along the Nishimori trajectory and the resulting regime.

    The regime is ``stable`` if |lambda_D| < 1 everywhere on the trajectory,
    ``fully_unstable`` if |lambda_D| > 1 in the fixed-point limit and
    ``partially_unstable`` otherwise.
    """
    vs, lam1, (_, sup1), fixed1 = _unit_profile(params, quad, v_floor)
    g2 = params.gamma**2
    lam_d = g2 * lam1
    lam_k = np.array([lambda_k(v, params, quad) for v in vs])
    fixed = g2 * fixed1
    if abs(fixed) > 1:
        regime = "fully_unstable"
    elif g2 * sup1 > 1:
        regime = "partially_unstable"
    else:
        regime = "stable"
    return StabilityReport(
        v_grid=vs,
        lambda_d=lam_d,
        lambda_k=lam_k,
        lambda_d_fixed_point=float(fixed),
        gamma_c1=1.0 / np.sqrt(sup1) if sup1 > 0 else np.inf,
        gamma_c2=1.0 / np.sqrt(abs(fixed1)) if fixed1 != 0 else np.inf,
        regime=regime,
        params=params,
    )
