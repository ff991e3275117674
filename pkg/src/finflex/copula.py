"""Gaussian and Student-t copulas over FIN marginals.

Estimation is two-stage: marginals are fitted first, the data are pushed
through the fitted CDFs, and the copula is fitted on those
pseudo-observations.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtr, ndtri, stdtr, stdtrit
from scipy.stats import rankdata

from .core import FinParams, cdf, quantile
from .errors import DomainError
from .estimate import FitResult

__all__ = [
    "CorrelationMatrix",
    "CopulaModel",
    "nearest_correlation",
    "to_pseudo_obs",
    "fit_gaussian_copula",
    "fit_t_copula",
    "copula_loglik",
    "copula_aic",
    "sample_copula",
    "sample_joint",
    "spearman_matrix",
]

U_CLAMP = 1e-10
DF_BOUNDS = (2.1, 200.0)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric PSD matrix with unit diagonal."""

    values: np.ndarray

    def __post_init__(self):
        m = np.array(self.values, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DomainError("correlation matrix must be square and nonempty")
        if not np.all(np.isfinite(m)):
            raise DomainError("correlation matrix must be finite")
        if np.max(np.abs(m - m.T)) > 1e-12:
            raise DomainError("correlation matrix must be symmetric")
        if np.max(np.abs(np.diag(m) - 1.0)) > 1e-12:
            raise DomainError("correlation matrix must have a unit diagonal")
        if np.any(np.abs(m) > 1.0 + 1e-12):
            raise DomainError("correlations must lie in [-1, 1]")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise DomainError("correlation matrix is not positive semidefinite")
        m = 0.5 * (m + m.T)
        np.fill_diagonal(m, 1.0)
        m.setflags(write=False)
        object.__setattr__(self, "values", m)

    @property
    def dim(self):
        return self.values.shape[0]

    def __eq__(self, other):
        return isinstance(other, CorrelationMatrix) and np.array_equal(self.values, other.values)

    __hash__ = None


def nearest_correlation(matrix, floor=1e-8):
    """Project a symmetric matrix onto the correlation matrices.

    Eigenvalues below ``floor`` are clipped, then the diagonal is rescaled
    back to one.

    Returns
    -------
    corr : CorrelationMatrix
    residual : float
        Largest absolute change of any entry.
    """
    m = np.array(matrix, dtype=float)
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    # renormalising can nudge the clipped eigenvalues just under the floor;
    # the slack keeps a second projection a no-op
    if w.min() < 0.5 * floor:
        if w.min() < -1e-10:
            warnings.warn("matrix is not positive definite; eigenvalues clipped", RuntimeWarning,
                          stacklevel=2)
        w = np.maximum(w, floor)
        a = (v * w) @ v.T
        d = 1.0 / np.sqrt(np.diag(a))
        a = a * np.outer(d, d)
    else:
        a = m.copy()
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 1.0)
    a = np.clip(a, -1.0, 1.0)
    return CorrelationMatrix(a), float(np.max(np.abs(a - m)))


def _marginal_params(m):
    if isinstance(m, FitResult):
        return m.params
    if isinstance(m, FinParams):
        return m
    raise DomainError(f"marginal must be FinParams or FitResult, got {type(m).__name__}")


@dataclass(frozen=True)
class CopulaModel:
    """Fitted elliptical copula.

    ``df`` is only meaningful for ``family == "student_t"``.
    """

    family: str
    corr: CorrelationMatrix
    df: float | None = None
    marginals: tuple = ()
    loglik: float | None = None
    symbols: tuple = field(default=())

    def __post_init__(self):
        if self.family not in ("gaussian", "student_t"):
            raise DomainError(f"unknown copula family {self.family!r}")
        if self.family == "student_t" and not (self.df is not None and self.df > 2):
            raise DomainError("student_t copula needs df > 2")
        if self.marginals and len(self.marginals) != self.corr.dim:
            raise DomainError("number of marginals must match the correlation dimension")
        object.__setattr__(self, "marginals", tuple(self.marginals))
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @property
    def dim(self):
        return self.corr.dim

    @property
    def k_params(self):
        d = self.dim
        return d * (d - 1) // 2 + (1 if self.family == "student_t" else 0)

    def to_dict(self):
        refs = []
        for i, m in enumerate(self.marginals):
            ref = {"symbol": self.symbols[i] if i < len(self.symbols) else f"x{i}"}
            if isinstance(m, FitResult):
                ref["family"] = m.family
            ref["params"] = _marginal_params(m).to_dict()
            refs.append(ref)
        out = {"family": self.family, "corr": self.corr.values.tolist(), "marginal_refs": refs}
        if self.family == "student_t":
            out["df"] = self.df
        if self.loglik is not None:
            out["loglik"] = self.loglik
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        refs = d.get("marginal_refs", [])
        marginals = tuple(FinParams.from_dict(r["params"]) for r in refs)
        symbols = tuple(r.get("symbol", f"x{i}") for i, r in enumerate(refs))
        return cls(d["family"], CorrelationMatrix(np.array(d["corr"], dtype=float)),
                   d.get("df"), marginals, d.get("loglik"), symbols)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2:
        raise DomainError("pseudo-observations must be an n x d matrix")
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("pseudo-observations must lie strictly inside (0, 1)")
    return u


def to_pseudo_obs(data, marginals, min_obs=10):
    """Map each column through its fitted marginal CDF.

    Values are clamped to ``[1e-10, 1 - 1e-10]`` so that normal and t scores
    stay finite.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    marginals = list(marginals)
    if x.shape[1] != len(marginals):
        raise DomainError(f"{x.shape[1]} columns but {len(marginals)} marginals")
    if x.shape[0] < min_obs:
        raise DomainError(f"need at least {min_obs} rows, got {x.shape[0]}")
    u = np.column_stack([cdf(x[:, j], _marginal_params(m)) for j, m in enumerate(marginals)])
    return np.clip(u, U_CLAMP, 1.0 - U_CLAMP)


def _gaussian_ll(corr, z):
    d = corr.shape[0]
    if d == 1:
        return 0.0
    chol = np.linalg.cholesky(corr)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    sol = np.linalg.solve(chol, z.T)
    quad = np.sum(sol ** 2, axis=0) - np.sum(z ** 2, axis=1)
    return float(-0.5 * z.shape[0] * logdet - 0.5 * np.sum(quad))


def _t_ll(corr, x, df):
    n, d = x.shape
    if d == 1:
        return 0.0
    chol = np.linalg.cholesky(corr)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    sol = np.linalg.solve(chol, x.T)
    q = np.sum(sol ** 2, axis=0)
    const = gammaln((df + d) / 2) + (d - 1) * gammaln(df / 2) - d * gammaln((df + 1) / 2)
    joint = -0.5 * (df + d) * np.sum(np.log1p(q / df))
    margins = 0.5 * (df + 1) * np.sum(np.log1p(x ** 2 / df))
    return float(n * (const - 0.5 * logdet) + joint + margins)


def copula_loglik(model, u):
    """Copula log-density summed over the rows of ``u``."""
    u = _check_u(u)
    if u.shape[1] != model.dim:
        raise DomainError("pseudo-observation dimension does not match the model")
    r = model.corr.values
    if model.family == "gaussian":
        return _gaussian_ll(r, ndtri(u))
    return _t_ll(r, stdtrit(model.df, u), model.df)


def copula_aic(model, u):
    """``2k - 2 LL`` with ``k = d(d-1)/2`` correlations (+1 for t's df)."""
    return 2.0 * model.k_params - 2.0 * copula_loglik(model, u)


def _score_corr(scores):
    if scores.shape[1] == 1:
        return CorrelationMatrix(np.ones((1, 1)))
    return nearest_correlation(np.corrcoef(scores, rowvar=False))[0]


def fit_gaussian_copula(u, marginals=(), symbols=()):
    """Gaussian copula with the correlation of the normal scores."""
    u = _check_u(u)
    corr = _score_corr(ndtri(u))
    model = CopulaModel("gaussian", corr, None, marginals, None, symbols)
    return CopulaModel("gaussian", corr, None, marginals, copula_loglik(model, u), symbols)


def _golden_max(f, lo, hi, tol=1e-5, max_iter=200):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    # the bracket ends may beat the interior when the optimum is on the boundary
    cands = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    return max(cands)[1]


def fit_t_copula(u, marginals=(), symbols=(), df_bounds=DF_BOUNDS):
    """Student-t copula.

    For each candidate ``df`` the correlation is taken from the t scores;
    ``df`` itself maximises the resulting profile log-likelihood by
    golden-section search over ``log df`` within ``df_bounds``.
    """
    u = _check_u(u)
    lo, hi = df_bounds
    if not (2.0 < lo < hi):
        raise DomainError("df bounds must satisfy 2 < lower < upper")
    if u.shape[1] == 1:
        corr = CorrelationMatrix(np.ones((1, 1)))
        return CopulaModel("student_t", corr, hi, marginals, 0.0, symbols)

    def profile(log_df):
        df = math.exp(log_df)
        x = stdtrit(df, u)
        return _t_ll(_score_corr(x).values, x, df)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        log_df = _golden_max(profile, math.log(lo), math.log(hi))
    df = math.exp(log_df)
    corr = _score_corr(stdtrit(df, u))
    model = CopulaModel("student_t", corr, df, marginals, None, symbols)
    return CopulaModel("student_t", corr, df, marginals, copula_loglik(model, u), symbols)


def sample_copula(model, n, seed=None):
    """Draw ``n`` rows of uniforms from the copula."""
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(model.corr.values + 1e-14 * np.eye(model.dim))
    z = rng.standard_normal((int(n), model.dim)) @ chol.T
    if model.family == "gaussian":
        u = ndtr(z)
    else:
        w = rng.chisquare(model.df, size=(int(n), 1)) / model.df
        u = stdtr(model.df, z / np.sqrt(w))
    tiny = 2.0 ** -54
    return np.clip(u, tiny, 1.0 - 2.0 ** -53)


def sample_joint(model, n, seed=None):
    """Draw ``n`` rows of returns: copula uniforms through marginal quantiles."""
    if not model.marginals:
        raise DomainError("sampling returns requires marginals on the model")
    u = sample_copula(model, n, seed)
    return np.column_stack([quantile(u[:, j], _marginal_params(m))
                            for j, m in enumerate(model.marginals)])


def spearman_matrix(data):
    """Pairwise Spearman rank correlation (average ranks for ties)."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3:
        raise DomainError("need an n x d matrix with n >= 3")
    for j in range(x.shape[1]):
        if np.all(x[:, j] == x[0, j]):
            raise DomainError(f"column {j} is constant; its rank correlation is undefined")
    ranks = np.column_stack([rankdata(x[:, j]) for j in range(x.shape[1])])
    if x.shape[1] == 1:
        return CorrelationMatrix(np.ones((1, 1)))
    r = np.corrcoef(ranks, rowvar=False)
    r = np.clip(0.5 * (r + r.T), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return CorrelationMatrix(r)
