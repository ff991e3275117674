"""The FIN distribution: parameters, kernel, density, CDF, quantiles, moments.

The standardized kernel is piecewise around the mode at zero::

    k(z) = Gamma(a / (b k), |z|**(b k)) / k                       z <= 0
    k(z) = phi * k * Gamma(a k / b, (phi**(-1/a) z)**(b / k))      z > 0

with ``a, b, k`` the body shape, tail shape and skewness. ``phi`` makes the
two halves meet at zero and ``delta`` is the integral of the kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import comb

from .errors import ConvergenceError, DomainError
from .special import DEFAULT_POLICY, log_uig_logx_unchecked

__all__ = [
    "FinParams",
    "kernel",
    "log_kernel",
    "derivative_kernel",
    "pdf",
    "log_pdf",
    "cdf",
    "sf",
    "quantile",
    "sample",
    "raw_moment_standard",
    "raw_moment",
    "shape_stats",
    "normal",
    "laplace",
    "power_normal",
    "ftn",
    "btn",
]

MAX_CLOSED_FORM_MOMENT = 12


@dataclass(frozen=True)
class FinParams:
    """Location, scale, body shape, tail shape and skewness of a FIN law.

    ``phi`` and ``delta`` are computed once at construction and kept in log
    form (``log_phi``, ``log_delta``) because both overflow easily for
    strongly skewed shapes.
    """

    mu: float = 0.0
    sigma: float = 1.0
    alpha: float = 2.0
    beta: float = 2.0
    kappa: float = 1.0
    log_phi: float = field(init=False, repr=False, compare=False)
    log_delta: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("mu", "sigma", "alpha", "beta", "kappa"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        for name in ("sigma", "alpha", "beta", "kappa"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        a, b, k = self.alpha, self.beta, self.kappa
        log_phi = math.lgamma(a / (b * k)) - math.lgamma(a * k / b) - 2.0 * math.log(k)
        left = -math.log(k) + math.lgamma((a + 1) / (b * k))
        right = (a + 1) / a * log_phi + math.log(k) + math.lgamma((a + 1) * k / b)
        log_delta = float(np.logaddexp(left, right))
        if not (math.isfinite(log_phi) and math.isfinite(log_delta)):
            raise DomainError(f"shape parameters overflow the normalising constants: {self}")
        object.__setattr__(self, "log_phi", log_phi)
        object.__setattr__(self, "log_delta", log_delta)

    @property
    def phi(self):
        return math.exp(self.log_phi)

    @property
    def delta(self):
        return math.exp(self.log_delta)

    @property
    def left_tail(self):
        """Tail exponent of the left half (``beta * kappa``)."""
        return self.beta * self.kappa

    @property
    def right_tail(self):
        """Tail exponent of the right half (``beta / kappa``)."""
        return self.beta / self.kappa

    def as_array(self):
        return np.array([self.mu, self.sigma, self.alpha, self.beta, self.kappa])

    @classmethod
    def from_array(cls, values):
        mu, sigma, alpha, beta, kappa = (float(v) for v in values)
        return cls(mu, sigma, alpha, beta, kappa)

    def to_dict(self):
        return {"mu": self.mu, "sigma": self.sigma, "alpha": self.alpha,
                "beta": self.beta, "kappa": self.kappa}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mu"], d["sigma"], d["alpha"], d["beta"], d["kappa"])


def _unwrap(out):
    return out.item() if np.ndim(out) == 0 else out


def _branches(z, p):
    """Per-point shape argument, log of the gamma argument, and branch mask."""
    z = np.asarray(z, dtype=float)
    left = z <= 0
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(z))
    exponent = np.where(left, p.beta * p.kappa, p.beta / p.kappa)
    log_w = log_abs - np.where(left, 0.0, p.log_phi / p.alpha)
    log_v = exponent * log_w
    shape = np.where(left, p.alpha / (p.beta * p.kappa), p.alpha * p.kappa / p.beta)
    return left, shape, log_w, log_v


def log_kernel(z, p, policy=DEFAULT_POLICY):
    """Log of the unnormalised standardized kernel."""
    left, shape, _, log_v = _branches(z, p)
    const = np.where(left, -math.log(p.kappa), p.log_phi + math.log(p.kappa))
    return _unwrap(const + log_uig_logx_unchecked(shape, log_v, policy))


def kernel(z, p, policy=DEFAULT_POLICY):
    """Unnormalised standardized kernel; maximal (and continuous) at ``z = 0``."""
    return _unwrap(np.exp(log_kernel(z, p, policy)))


def derivative_kernel(z, p):
    """Derivative of the standardized kernel with respect to ``z``.

    Both halves share the factor ``beta * |z|**(alpha-1)``; only the
    exponential damping differs. ``z = 0`` belongs to the left half.
    """
    left, _, _, log_v = _branches(z, p)
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(z))
    if p.alpha == 1.0:
        body = np.zeros_like(log_abs)
    else:
        body = (p.alpha - 1.0) * np.where(z == 0, -np.inf if p.alpha > 1 else np.inf, log_abs)
    mag = np.exp(math.log(p.beta) + body - np.exp(log_v))
    return _unwrap(np.where(left, mag, -mag))


def log_pdf(x, p, policy=DEFAULT_POLICY):
    """Log-density of ``FIN(mu, sigma, alpha, beta, kappa)``."""
    z = (np.asarray(x, dtype=float) - p.mu) / p.sigma
    return _unwrap(np.asarray(log_kernel(z, p, policy)) - p.log_delta - math.log(p.sigma))


def pdf(x, p, policy=DEFAULT_POLICY):
    """Density of ``FIN(mu, sigma, alpha, beta, kappa)``."""
    return _unwrap(np.exp(log_pdf(x, p, policy)))


def _log_tails(z, p, policy):
    """Return (left mask, log mass below z for z <= 0 / above z for z > 0)."""
    left, shape, log_w, log_v = _branches(z, p)
    a, b, k = p.alpha, p.beta, p.kappa
    upper_shape = np.where(left, (a + 1) / (b * k), (a + 1) * k / b)
    log_hi = log_uig_logx_unchecked(upper_shape, log_v, policy)
    log_lo = log_uig_logx_unchecked(shape, log_v, policy)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.isneginf(log_hi), 1.0, -np.expm1(log_w + log_lo - log_hi))
        log_ratio = np.log(np.clip(ratio, 0.0, 1.0))
    const = np.where(left, -math.log(k), (a + 1) / a * p.log_phi + math.log(k)) - p.log_delta
    return left, np.minimum(const + log_hi + log_ratio, 0.0)


def _tails(z, p, policy):
    left, log_tail = _log_tails(z, p, policy)
    return left, np.exp(log_tail)


def cdf(x, p, policy=DEFAULT_POLICY):
    """Distribution function.

    Closed form in the upper incomplete gamma on each side of the mode; the
    right half carries the factor ``kappa * phi**((alpha+1)/alpha) / delta``
    so that the two halves agree at ``x = mu`` and the limit is one.
    """
    z = (np.asarray(x, dtype=float) - p.mu) / p.sigma
    left, tail = _tails(z, p, policy)
    return _unwrap(np.where(left, tail, 1.0 - tail))


def sf(x, p, policy=DEFAULT_POLICY):
    """Survival function ``1 - cdf``, accurate deep in the right tail."""
    z = (np.asarray(x, dtype=float) - p.mu) / p.sigma
    left, tail = _tails(z, p, policy)
    return _unwrap(np.where(left, 1.0 - tail, tail))


def _mass_below_mode(p):
    return math.exp(-math.log(p.kappa) + math.lgamma((p.alpha + 1) / (p.beta * p.kappa))
                    - p.log_delta)


def quantile(u, p, policy=DEFAULT_POLICY, max_iter=200):
    """Inverse distribution function.

    Each point is bracketed by doubling away from the mode, then refined by
    Newton steps that fall back to bisection whenever they leave the
    bracket. Points below the mode solve ``cdf(z) = u``; points above solve
    ``sf(z) = 1 - u`` so that upper-tail probabilities keep full precision.
    """
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("quantile levels must lie strictly inside (0, 1)")
    flat = u.ravel()
    lower = flat <= _mass_below_mode(p)
    target = np.where(lower, flat, 1.0 - flat)

    log_target = np.log(target)

    def resid(z, low, log_t):
        # log-probability residual, increasing in z on both sides
        left, log_tail = _log_tails(z, p, policy)
        log_other = np.log1p(-np.exp(log_tail))
        log_below = np.where(left, log_tail, log_other)
        log_above = np.where(left, log_other, log_tail)
        r = np.where(low, log_below - log_t, log_t - log_above)
        return r, np.where(low, log_below, log_above)

    n = flat.size
    lo = np.where(lower, -1.0, 0.0)
    hi = np.where(lower, 0.0, 1.0)
    idx = np.arange(n)
    # expand brackets
    for _ in range(1100):
        r_lo = resid(lo[idx], lower[idx], log_target[idx])[0]
        r_hi = resid(hi[idx], lower[idx], log_target[idx])[0]
        low_i = lower[idx]
        # the bracket edge at the mode cannot move; a residual of the wrong sign
        # there is rounding and the root is the mode itself
        at_mode = np.where(low_i, r_hi < 0, r_lo > 0)
        lo[idx[at_mode & low_i]] = 0.0
        hi[idx[at_mode & ~low_i]] = 0.0
        need_lo = (r_lo > 0) & ~at_mode
        need_hi = (r_hi < 0) & ~at_mode
        if not (need_lo.any() or need_hi.any()):
            break
        lo[idx[need_lo]] *= 2.0
        hi[idx[need_hi]] *= 2.0
        idx = idx[need_lo | need_hi]
    else:
        raise ConvergenceError("could not bracket quantile")

    z = 0.5 * (lo + hi)
    idx = np.arange(n)
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        if idx.size == 0:
            break
        zi = z[idx]
        r, log_prob = resid(zi, lower[idx], log_target[idx])
        pos = r > 0
        hi[idx[pos]] = zi[pos]
        lo[idx[~pos]] = zi[~pos]
        slope = np.exp(np.asarray(log_kernel(zi, p, policy)) - p.log_delta - log_prob)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = zi - r / slope
        l_i, h_i = lo[idx], hi[idx]
        bad = ~np.isfinite(step) | (step <= l_i) | (step >= h_i)
        new = np.where(r == 0, zi, np.where(bad, 0.5 * (l_i + h_i), step))
        z[idx] = new
        scale = np.maximum(1.0, np.abs(new))
        done = (r == 0) | (np.abs(new - zi) <= 2 * eps * scale) | (h_i - l_i <= 4 * eps * scale)
        idx = idx[~done]
    if idx.size:
        raise ConvergenceError("quantile refinement did not converge")
    return _unwrap((p.mu + p.sigma * z).reshape(u.shape))


def sample(n, p, seed=None, policy=DEFAULT_POLICY):
    """Draw ``n`` i.i.d. variates by inverting the CDF at uniform draws."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random(int(n))
    u[u == 0.0] = 2.0 ** -54
    return quantile(u, p, policy)


def raw_moment_standard(r, p):
    """``E(Z**r)`` for the standardized law (``mu = 0``, ``sigma = 1``).

    Closed form up to order 12; higher orders fall back to quadrature.
    """
    if int(r) != r or r < 0:
        raise DomainError(f"moment order must be a nonnegative integer, got {r}")
    r = int(r)
    if r > MAX_CLOSED_FORM_MOMENT:
        std = FinParams(0.0, 1.0, p.alpha, p.beta, p.kappa)
        f = lambda t: t ** r * pdf(t, std)  # noqa: E731
        lhs = integrate.quad(f, -np.inf, 0.0, epsabs=0, epsrel=1e-12, limit=500)[0]
        rhs = integrate.quad(f, 0.0, np.inf, epsabs=0, epsrel=1e-12, limit=500)[0]
        return lhs + rhs
    a, b, k = p.alpha, p.beta, p.kappa
    s = r + a + 1
    log_left = -math.log(k) - math.log(r + 1) + math.lgamma(s / (b * k)) - p.log_delta
    log_right = (s / a) * p.log_phi + math.log(k) - math.log(r + 1) \
        + math.lgamma(s * k / b) - p.log_delta
    return (-1) ** r * math.exp(log_left) + math.exp(log_right)


def raw_moment(r, p):
    """``E(X**r)`` by binomial expansion of ``(mu + sigma Z)**r``."""
    if int(r) != r or r < 0:
        raise DomainError(f"moment order must be a nonnegative integer, got {r}")
    r = int(r)
    return sum(comb(r, k, exact=True) * p.mu ** (r - k) * p.sigma ** k * raw_moment_standard(k, p)
               for k in range(r + 1))


def shape_stats(p):
    """Mean, variance, skewness and excess kurtosis.

    Returns
    -------
    tuple of float
        ``(mean, variance, skewness, excess_kurtosis)``
    """
    m1, m2, m3, m4 = (raw_moment_standard(r, p) for r in (1, 2, 3, 4))
    var = m2 - m1 ** 2
    c3 = m3 - 3 * m1 * m2 + 2 * m1 ** 3
    c4 = m4 - 4 * m1 * m3 + 6 * m1 ** 2 * m2 - 3 * m1 ** 4
    return (p.mu + p.sigma * m1, p.sigma ** 2 * var, c3 / var ** 1.5, c4 / var ** 2 - 3.0)


# Nested submodels. ``normal`` takes the usual standard deviation: the
# symmetric alpha = beta = 2 kernel is exp(-z**2), so the FIN scale is sd * sqrt(2).

def normal(mu=0.0, sigma=1.0):
    """``N(mu, sigma**2)`` as a FIN law."""
    return FinParams(mu, sigma * math.sqrt(2.0), 2.0, 2.0, 1.0)


def laplace(mu=0.0, sigma=1.0):
    """Laplace law with density ``exp(-|x - mu| / sigma) / (2 sigma)``."""
    return FinParams(mu, sigma, 1.0, 1.0, 1.0)


def power_normal(mu, sigma, s):
    """Exponential power law with body and tail shape ``s``."""
    return FinParams(mu, sigma, s, s, 1.0)


def ftn(mu, sigma, beta, kappa):
    """Flexible tail normal: FIN with a normal body (``alpha = 2``)."""
    return FinParams(mu, sigma, 2.0, beta, kappa)


def btn(mu, sigma, alpha, beta):
    """Body-tail generalised normal: the symmetric (``kappa = 1``) FIN."""
    return FinParams(mu, sigma, alpha, beta, 1.0)
