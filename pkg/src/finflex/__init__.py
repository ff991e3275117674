"""finflex: the FIN distribution family, its maximum-likelihood fitting, and
Gaussian / Student-t copulas built on FIN marginals."""

from .copula import (
    CopulaModel,
    CorrelationMatrix,
    copula_aic,
    copula_loglik,
    fit_gaussian_copula,
    fit_t_copula,
    nearest_correlation,
    sample_copula,
    sample_joint,
    spearman_matrix,
    to_pseudo_obs,
)
from .core import (
    FinParams,
    btn,
    cdf,
    derivative_kernel,
    ftn,
    kernel,
    laplace,
    log_pdf,
    normal,
    pdf,
    power_normal,
    quantile,
    raw_moment,
    raw_moment_standard,
    sample,
    sf,
    shape_stats,
)
from .data import (
    PriceSeries,
    ReturnsSeries,
    SummaryStats,
    align,
    load_csv,
    log_returns,
    summary_stats,
    train_test_split,
    write_csv,
)
from .errors import (
    ConvergenceError,
    DomainError,
    FinflexError,
    FitConvergenceError,
    ParseError,
    SingularGradientError,
    ValidationError,
)
from .estimate import (
    FAMILIES,
    ComparisonRow,
    FitConfig,
    FitResult,
    aic,
    compare_models,
    fit_families,
    fit_mle,
    loglik,
    loglik_grad,
    out_of_sample_ll,
)
from .special import (
    DEFAULT_POLICY,
    PrecisionPolicy,
    digamma,
    log_upper_inc_gamma,
    psi1,
    psi2,
    upper_inc_gamma,
)

__version__ = "0.1.0"
