"""Log-likelihood, its analytic gradient, and maximum-likelihood fitting.

The gradient is assembled per observation from three ingredients:

* ``d ln Gamma(u, v) / du`` (see :func:`finflex.special.dlog_upper_inc_gamma_da`),
* ``d ln Gamma(u, v) / dv = -v**(u-1) e**-v / Gamma(u, v)``,
* the shape derivatives of ``ln phi`` and ``ln delta``, which only need
  the digamma function.

Everything is carried in log form so that far-tail observations do not
underflow.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import FinParams, _branches, raw_moment_standard
from .errors import DomainError, FitConvergenceError, SingularGradientError
from .special import DEFAULT_POLICY, digamma, dlog_uig_logx_da_unchecked, log_uig_logx_unchecked

__all__ = [
    "FitConfig",
    "FitResult",
    "FAMILIES",
    "loglik",
    "loglik_grad",
    "log_phi_grad",
    "log_delta_grad",
    "fit_mle",
    "fit_families",
    "aic",
    "out_of_sample_ll",
    "compare_models",
    "ComparisonRow",
]

logger = logging.getLogger(__name__)

PARAM_NAMES = ("mu", "sigma", "alpha", "beta", "kappa")
SHAPE_UPPER = 1e3


@dataclass(frozen=True)
class Family:
    """A nested FIN family: ``full = fixed + J @ free``."""

    name: str
    free: tuple
    jacobian: np.ndarray
    fixed: np.ndarray

    @property
    def k_params(self):
        return len(self.free)

    def full(self, q):
        return self.fixed + self.jacobian @ np.asarray(q, dtype=float)

    def project(self, full):
        """Closest free vector to a full parameter vector (tied shapes averaged)."""
        full = np.asarray(full, dtype=float)
        return (self.jacobian.T @ full) / self.jacobian.sum(axis=0)


def _family(name, free, fixed):
    cols = []
    for f in free:
        col = np.zeros(5)
        for target in f.split("="):
            col[PARAM_NAMES.index(target)] = 1.0
        cols.append(col)
    jac = np.column_stack(cols)
    base = np.zeros(5)
    for k, v in fixed.items():
        base[PARAM_NAMES.index(k)] = v
    return Family(name, tuple(free), jac, base)


FAMILIES = {
    "fin": _family("fin", ("mu", "sigma", "alpha", "beta", "kappa"), {}),
    "ftn": _family("ftn", ("mu", "sigma", "beta", "kappa"), {"alpha": 2.0}),
    "btn": _family("btn", ("mu", "sigma", "alpha", "beta"), {"kappa": 1.0}),
    "ep": _family("ep", ("mu", "sigma", "alpha=beta"), {"kappa": 1.0}),
    "normal": _family("normal", ("mu", "sigma"), {"alpha": 2.0, "beta": 2.0, "kappa": 1.0}),
    "laplace": _family("laplace", ("mu", "sigma"), {"alpha": 1.0, "beta": 1.0, "kappa": 1.0}),
}

# family -> families it is nested in
_NESTED_IN = {
    "normal": {"ep", "btn", "ftn", "fin"},
    "laplace": {"ep", "btn", "fin"},
    "ep": {"btn", "fin"},
    "btn": {"fin"},
    "ftn": {"fin"},
    "fin": set(),
}
_FIT_ORDER = ("normal", "laplace", "ep", "btn", "ftn", "fin")


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings for :func:`fit_mle`.

    ``grad_tol`` bounds the infinity norm of the gradient of the *average*
    log-likelihood in the optimizer's coordinates (location as is, positive
    parameters on the log scale).
    """

    max_iter: int = 500
    grad_tol: float = 1e-6
    param_bounds: dict = field(default_factory=lambda: {
        "sigma": 1e-4, "alpha": 1e-4, "beta": 1e-4, "kappa": 1e-4})
    gradient_mode: str = "analytic"
    starts: int = 3
    min_obs: int = 20

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if self.starts < 1:
            raise DomainError("starts must be at least 1")
        if self.gradient_mode not in ("analytic", "numeric"):
            raise DomainError("gradient_mode must be 'analytic' or 'numeric'")
        if any(v <= 0 for v in self.param_bounds.values()):
            raise DomainError("parameter lower bounds must be positive")


@dataclass(frozen=True)
class FitResult:
    family: str
    params: FinParams
    loglik: float
    grad_norm: float
    converged: bool
    n_obs: int
    iterations: int = 0
    data_hash: str = ""
    seed: int | None = None

    @property
    def k_params(self):
        return FAMILIES[self.family].k_params

    @property
    def aic(self):
        return 2.0 * self.k_params - 2.0 * self.loglik

    def to_dict(self):
        return {
            "family": self.family,
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "aic": self.aic,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "n_obs": self.n_obs,
            "seed": self.seed,
            "iterations": self.iterations,
            "data_hash": self.data_hash,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        if d.get("family") not in FAMILIES:
            raise DomainError(f"unknown family {d.get('family')!r}")
        return cls(
            family=d["family"],
            params=FinParams.from_dict(d["params"]),
            loglik=float(d["loglik"]),
            grad_norm=float(d.get("grad_norm", math.nan)),
            converged=bool(d.get("converged", False)),
            n_obs=int(d["n_obs"]),
            iterations=int(d.get("iterations", 0)),
            data_hash=d.get("data_hash", ""),
            seed=d.get("seed"),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _as_data(data):
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("data must be nonempty")
    if not np.all(np.isfinite(x)):
        raise DomainError("data must be finite")
    return x


def _data_hash(x):
    return hashlib.sha1(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()


def loglik(data, p, policy=DEFAULT_POLICY):
    """Sum of log-densities of ``data`` under ``p``."""
    x = _as_data(data)
    z = (x - p.mu) / p.sigma
    left, shape, _, log_v = _branches(z, p)
    const = np.where(left, -math.log(p.kappa), p.log_phi + math.log(p.kappa))
    lk = const + log_uig_logx_unchecked(shape, log_v, policy)
    return float(np.sum(lk) - x.size * (p.log_delta + math.log(p.sigma)))


def log_phi_grad(p):
    """Gradient of ``ln phi`` with respect to ``(alpha, beta, kappa)``."""
    a, b, k = p.alpha, p.beta, p.kappa
    ul, ur = a / (b * k), a * k / b
    dl, dr = digamma(ul), digamma(ur)
    return np.array([
        dl / (b * k) - dr * k / b,
        -dl * ul / b + dr * ur / b,
        -dl * ul / k - dr * ur / k - 2.0 / k,
    ])


def log_delta_grad(p):
    """Gradient of ``ln delta`` with respect to ``(alpha, beta, kappa)``."""
    a, b, k = p.alpha, p.beta, p.kappa
    a1, a2 = (a + 1) / (b * k), (a + 1) * k / b
    d1, d2 = digamma(a1), digamma(a2)
    e = (a + 1) / a
    log_t1 = -math.log(k) + math.lgamma(a1)
    log_t2 = e * p.log_phi + math.log(k) + math.lgamma(a2)
    dphi = log_phi_grad(p)
    dt1 = np.array([d1 / (b * k), -d1 * a1 / b, -1.0 / k - d1 * a1 / k])
    dt2 = np.array([
        -p.log_phi / a ** 2 + e * dphi[0] + d2 * k / b,
        e * dphi[1] - d2 * a2 / b,
        e * dphi[2] + 1.0 / k + d2 * a2 / k,
    ])
    w1 = math.exp(log_t1 - p.log_delta)
    w2 = math.exp(log_t2 - p.log_delta)
    return w1 * dt1 + w2 * dt2


def _zero_mu_grad(p, left_shape):
    # d ln k / dz at z = 0 (left branch) for alpha >= 1
    if p.alpha > 1:
        return 0.0
    if p.alpha == 1:
        return -p.beta * p.kappa / math.gamma(left_shape) / p.sigma
    raise SingularGradientError(
        "log-likelihood gradient is unbounded for observations at mu when alpha < 1")


def loglik_grad(data, p, policy=DEFAULT_POLICY):
    """Gradient of :func:`loglik` in ``(mu, sigma, alpha, beta, kappa)``.

    Raises
    ------
    SingularGradientError
        If an observation sits exactly at ``mu`` while ``alpha < 1``.
    """
    x = _as_data(data)
    a, b, k, s = p.alpha, p.beta, p.kappa, p.sigma
    z = (x - p.mu) / s
    left, shape, log_w, log_v = _branches(z, p)
    v = np.exp(log_v)
    log_g = log_uig_logx_unchecked(shape, log_v, policy)
    dlog_du = dlog_uig_logx_da_unchecked(shape, log_v, policy)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # g = -v * psi2(u, v) / Gamma(u, v)
        g = np.exp(shape * log_v - v - log_g)
    at_mode = z == 0
    g = np.where(at_mode, 0.0, g)
    expo = np.where(left, b * k, b / k)

    d_sigma = np.sum(expo * g - 1.0) / s
    zs = np.where(at_mode, 1.0, z)
    mu_terms = np.where(at_mode, 0.0, expo * g / (s * zs))
    d_mu = np.sum(mu_terms)
    if np.any(at_mode):
        d_mu += np.count_nonzero(at_mode) * _zero_mu_grad(p, a / (b * k))

    dphi = log_phi_grad(p)
    ddelta = log_delta_grad(p)
    log_abs = np.where(at_mode, 0.0, log_w)  # only multiplied by g == 0 at the mode

    du = np.empty((3, x.size))
    dlogv = np.empty((3, x.size))
    # left branch: u = a/(bk), log v = b k log|z|
    du_left = (1.0 / (b * k), -shape / b, -shape / k)
    dv_left = (0.0, k * log_abs, b * log_abs)
    # right branch: u = a k / b, log v = (b/k)(log z - log phi / a)
    du_right = (k / b, -shape / b, shape / k)
    dv_right = (
        (b / k) * (p.log_phi / a ** 2 - dphi[0] / a),
        log_v / b - (b / (k * a)) * dphi[1],
        -log_v / k - (b / (k * a)) * dphi[2],
    )
    for i in range(3):
        du[i] = np.where(left, du_left[i], du_right[i])
        dlogv[i] = np.where(left, dv_left[i], dv_right[i])
    with np.errstate(invalid="ignore"):
        shape_terms = dlog_du * du - np.where(at_mode, 0.0, g * dlogv)
    n_left = np.count_nonzero(left)
    n_right = x.size - n_left
    const = n_right * dphi + np.array([0.0, 0.0, (n_right - n_left) / k])
    d_shape = shape_terms.sum(axis=1) + const - x.size * ddelta
    return np.concatenate(([d_mu, d_sigma], d_shape))


def _numeric_grad(data, p, policy=DEFAULT_POLICY):
    """Central-difference gradient of :func:`loglik` (fallback/arbiter)."""
    base = p.as_array()
    out = np.empty(5)
    for i in range(5):
        h = 1e-6 * max(1.0, abs(base[i]))
        if i > 0:
            h = min(h, 0.5 * base[i])
        up, dn = base.copy(), base.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (loglik(data, FinParams.from_array(up), policy)
                  - loglik(data, FinParams.from_array(dn), policy)) / (2 * h)
    return out


def aic(fit):
    """Akaike information criterion ``2k - 2 LL`` of a fit."""
    return 2.0 * fit.k_params - 2.0 * fit.loglik


def out_of_sample_ll(fit, test_data):
    """Log-likelihood of held-out data under the fitted parameters."""
    return loglik(test_data, fit.params)


def _moment_start(x, alpha, beta, kappa):
    shape = FinParams(0.0, 1.0, alpha, beta, kappa)
    m1 = raw_moment_standard(1, shape)
    var_z = raw_moment_standard(2, shape) - m1 ** 2
    sigma = np.std(x) / math.sqrt(var_z)
    if sigma <= 0:
        raise DomainError("data have zero spread")
    return np.array([np.mean(x) - sigma * m1, sigma, alpha, beta, kappa])


def _default_starts(x, fam):
    if fam.name == "laplace":
        med = float(np.median(x))
        return [np.array([med, max(np.mean(np.abs(x - med)), 1e-12), 1.0, 1.0, 1.0])]
    base = fam.full(fam.project(np.array([0.0, 1.0, 2.0, 2.0, 1.0])))
    starts = [_moment_start(x, base[2], base[3], base[4])]
    if "kappa" in fam.free:
        for kappa in (0.7, 1.4):
            starts.append(_moment_start(x, base[2], base[3], kappa))
    return starts


class _Objective:
    """Mean negative log-likelihood in unconstrained coordinates."""

    def __init__(self, x, fam, cfg, policy):
        self.x, self.fam, self.cfg, self.policy = x, fam, cfg, policy
        self.n = x.size
        self.warned = False

    def params(self, y):
        q = np.concatenate(([y[0]], np.exp(y[1:])))
        return q, FinParams.from_array(self.fam.full(q))

    def _data_for(self, p):
        x = self.x
        if p.alpha < 1 and np.any(x == p.mu):
            if not self.warned:
                warnings.warn("observations at the location parameter jittered by 1e-12*sigma",
                              RuntimeWarning, stacklevel=3)
                self.warned = True
            x = np.where(x == p.mu, x + 1e-12 * p.sigma, x)
        return x

    def __call__(self, y):
        try:
            q, p = self.params(y)
            x = self._data_for(p)
            ll = loglik(x, p, self.policy)
            if self.cfg.gradient_mode == "analytic":
                g = loglik_grad(x, p, self.policy)
            else:
                g = _numeric_grad(x, p, self.policy)
        except (DomainError, ArithmeticError, ValueError):
            return 1e10, np.zeros_like(y)
        if not (math.isfinite(ll) and np.all(np.isfinite(g))):
            return 1e10, np.zeros_like(y)
        gq = self.fam.jacobian.T @ g
        dq = np.concatenate(([1.0], q[1:]))
        return -ll / self.n, -(gq * dq) / self.n


def _bounds(fam, cfg):
    out = [(None, None)]
    for name in fam.free[1:]:
        lows = [cfg.param_bounds.get(t, 1e-4) for t in name.split("=")]
        upper = None if name == "sigma" else math.log(SHAPE_UPPER)
        out.append((math.log(max(lows)), upper))
    return out


def _projected_grad_norm(y, grad, bounds):
    g = np.array(grad, dtype=float)
    for i, (lo, hi) in enumerate(bounds):
        # minimisation: a component pushing against an active bound is not a KKT violation
        if lo is not None and y[i] <= lo + 1e-12 and g[i] > 0:
            g[i] = 0.0
        if hi is not None and y[i] >= hi - 1e-12 and g[i] < 0:
            g[i] = 0.0
    return float(np.max(np.abs(g))) if g.size else 0.0


def _fit_laplace(x, seed):
    # the likelihood is piecewise linear in mu, so use the closed form:
    # any median for mu, then the mean absolute deviation about it
    med = float(np.median(x))
    scale = float(np.mean(np.abs(x - med)))
    if scale <= 0:
        raise DomainError("data have zero spread")
    p = FinParams(med, scale, 1.0, 1.0, 1.0)
    ll = loglik(x, p)
    # 0 lies in the subdifferential in mu at a median; the sigma score is exactly zero
    return FitResult("laplace", p, ll, 0.0, True, x.size, 0, _data_hash(x), seed)


def fit_mle(data, cfg=None, family="fin", init=(), seed=None, policy=DEFAULT_POLICY):
    """Maximum-likelihood fit of a FIN family.

    Parameters
    ----------
    data : array_like
        Observations (at least ``cfg.min_obs``).
    cfg : FitConfig, optional
    family : str
        One of ``fin, ftn, btn, ep, normal, laplace``.
    init : sequence of FinParams
        Extra starting points, typically fits of nested families. Each is
        projected onto ``family`` before use.
    seed : int, optional
        Recorded on the result for provenance; fitting itself is
        deterministic.

    Returns
    -------
    FitResult
        The best local optimum over all starts. ``laplace`` is fitted in
        closed form (median, mean absolute deviation about it).

    Raises
    ------
    FitConvergenceError
        If no start converges; ``best`` holds the best unconverged result.
    """
    cfg = cfg or FitConfig()
    x = _as_data(data)
    if x.size < cfg.min_obs:
        raise DomainError(f"need at least {cfg.min_obs} observations, got {x.size}")
    family = family.lower()
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}")
    fam = FAMILIES[family]
    if family == "laplace":
        return _fit_laplace(x, seed)

    starts = _default_starts(x, fam)[: cfg.starts]
    starts += [fam.full(fam.project(p.as_array())) for p in init]
    bounds = _bounds(fam, cfg)
    obj = _Objective(x, fam, cfg, policy)

    best = None
    for full in starts:
        q = fam.project(full)
        y0 = np.concatenate(([q[0]], np.log(q[1:])))
        y0 = np.array([np.clip(v, lo if lo is not None else -np.inf, hi if hi is not None else np.inf)
                       for v, (lo, hi) in zip(y0, bounds)])
        res = minimize(obj, y0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.max_iter, "gtol": cfg.grad_tol,
                                "ftol": 1e-10, "maxcor": 20})
        f, g = obj(res.x)
        gnorm = _projected_grad_norm(res.x, g, bounds)
        converged = bool(res.success or gnorm < cfg.grad_tol)
        _, p = obj.params(res.x)
        ll = -f * x.size
        logger.debug("start %s -> ll=%.6f grad=%.2e converged=%s (%s)",
                     np.round(full, 4), ll, gnorm, converged, res.message)
        cand = FitResult(family, p, ll, gnorm, converged, x.size, int(res.nit), _data_hash(x), seed)
        # prefer converged runs, then higher likelihood
        if best is None or (cand.converged, cand.loglik) > (best.converged, best.loglik):
            best = cand
    if not best.converged:
        raise FitConvergenceError(
            f"no start converged for family {family!r} (best ll={best.loglik:.6g})", best)
    return best


def fit_families(data, families=("fin", "btn", "ep", "normal"), cfg=None, seed=None,
                 policy=DEFAULT_POLICY):
    """Fit several families, warm-starting each from the fits nested in it.

    A fit never ends below any of its nested fits because the optimizer is
    monotone from each start, which keeps in-sample log-likelihoods ordered
    along the nesting chain.
    """
    wanted = [f.lower() for f in families]
    unknown = set(wanted) - set(FAMILIES)
    if unknown:
        raise DomainError(f"unknown families {sorted(unknown)}")
    fits = {}
    for name in _FIT_ORDER:
        if name not in wanted:
            continue
        init = [fits[sub].params for sub in fits if name in _NESTED_IN[sub]]
        fits[name] = fit_mle(data, cfg, name, init=init, seed=seed, policy=policy)
    return {name: fits[name] for name in dict.fromkeys(wanted)}


@dataclass(frozen=True)
class ComparisonRow:
    family: str
    k_params: int
    loglik: float
    aic: float
    oos_ll: float


def compare_models(fits, test):
    """Rank fits by in-sample AIC, breaking ties by out-of-sample LL.

    All fits must come from the same training data.
    """
    fits = list(fits)
    if len(fits) < 2:
        raise DomainError("compare_models needs at least two fits")
    if len({f.data_hash for f in fits}) != 1:
        raise DomainError("fits were estimated on different data")
    rows = [ComparisonRow(f.family, f.k_params, f.loglik, f.aic, out_of_sample_ll(f, test))
            for f in fits]
    return sorted(rows, key=lambda r: (r.aic, -r.oos_ll, r.family))
