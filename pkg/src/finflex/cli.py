"""Command-line front end: ``finflex {fit,compare,copula,plotdata,simulate,stats}``.

Exit codes: 0 success, 2 input/parse error, 3 convergence failure,
4 validation/domain error. Set ``FINFLEX_LOG=DEBUG`` (or INFO) for
progress logging on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .copula import (
    CopulaModel,
    copula_aic,
    copula_loglik,
    fit_gaussian_copula,
    fit_t_copula,
    sample_copula,
    sample_joint,
    spearman_matrix,
    to_pseudo_obs,
)
from .core import FinParams, cdf, derivative_kernel, kernel, pdf, quantile, sample, shape_stats
from .data import align, load_csv, log_returns, summary_stats, train_test_split
from .errors import ConvergenceError, DomainError, ParseError, ValidationError
from .estimate import (
    FAMILIES,
    FitConfig,
    FitResult,
    _NESTED_IN,
    compare_models,
    fit_families,
    fit_mle,
    out_of_sample_ll,
)

log = logging.getLogger("finflex")

EXIT_OK, EXIT_PARSE, EXIT_CONVERGENCE, EXIT_VALIDATION = 0, 2, 3, 4
ALL_FAMILIES = ("fin", "ftn", "btn", "ep", "normal", "laplace")


@dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: tuple = ()
    families: tuple = ("fin",)
    split: float = 0.2
    seed: int | None = None
    out: Path = Path(".")
    tol: float = 1e-6
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.split <= 0.9):
            raise ValidationError(f"--split must lie in (0, 0.9], got {self.split}")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ValidationError(f"unknown families {bad}; choose from {list(ALL_FAMILIES)}")
        if not self.tol > 0:
            raise ValidationError("--tol must be positive")

    @property
    def fit_config(self):
        return FitConfig(grad_tol=self.tol)


def _out_dir(cfg):
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _print_table(header, rows, stream=None):
    stream = stream or sys.stdout
    cells = [[str(h) for h in header]] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    for j, row in enumerate(cells):
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)), file=stream)
        if j == 0:
            print("  ".join("-" * w for w in widths), file=stream)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}" if abs(v) < 1e-3 or abs(v) >= 1e6 else f"{v:.4f}"
    return str(v)


def _load_returns(path):
    return log_returns(load_csv(path))


def cmd_fit(cfg):
    """Fit one family to one price CSV and write ``<symbol>.<family>.fit.json``."""
    (path,) = cfg.inputs
    family = cfg.families[0]
    rs = _load_returns(path)
    train, test = train_test_split(rs, cfg.split)
    fit = fit_mle(train.returns, cfg.fit_config, family, seed=cfg.seed)
    oos = out_of_sample_ll(fit, test.returns)
    doc = fit.to_dict()
    doc.update(symbol=rs.symbol, n_test=len(test), oos_ll=oos, split=cfg.split)
    target = _out_dir(cfg) / f"{rs.symbol}.{family}.fit.json"
    target.write_text(json.dumps(doc, indent=2) + "\n")
    p = fit.params
    _print_table(["symbol", "family", "mu", "sigma", "alpha", "beta", "kappa", "loglik", "aic",
                  "oos_ll", "converged"],
                 [[rs.symbol, family, p.mu, p.sigma, p.alpha, p.beta, p.kappa, fit.loglik,
                   fit.aic, oos, fit.converged]])
    log.info("wrote %s", target)
    return EXIT_OK


def _check_nesting(fits):
    ok = True
    for sub, fit in fits.items():
        for sup in _NESTED_IN[sub]:
            if sup in fits and fits[sup].loglik < fit.loglik - 1e-6:
                warnings.warn(f"{sup} log-likelihood {fits[sup].loglik:.6f} is below nested "
                              f"{sub} ({fit.loglik:.6f})", RuntimeWarning, stacklevel=2)
                ok = False
    return ok


def cmd_compare(cfg):
    """Fit several families to one series; rank by AIC with out-of-sample LL."""
    (path,) = cfg.inputs
    if len(cfg.families) < 2:
        raise ValidationError("compare needs at least two families")
    rs = _load_returns(path)
    train, test = train_test_split(rs, cfg.split)
    fits = fit_families(train.returns, cfg.families, cfg.fit_config, cfg.seed)
    _check_nesting(fits)
    rows = compare_models([fits[f] for f in cfg.families], test.returns)
    table = [[i + 1, r.family, r.k_params, r.loglik, r.aic, r.oos_ll] for i, r in enumerate(rows)]
    header = ["rank", "family", "k", "loglik", "aic", "oos_ll"]
    _print_table(header, table)
    target = _out_dir(cfg) / f"{rs.symbol}.compare.csv"
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    for f in dict.fromkeys(cfg.families):
        doc = fits[f].to_dict()
        doc.update(symbol=rs.symbol, n_test=len(test), oos_ll=out_of_sample_ll(fits[f], test.returns),
                   split=cfg.split)
        (cfg.out / f"{rs.symbol}.{f}.fit.json").write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_copula(cfg):
    """Best marginal per series, then Gaussian and t copulas on the aligned panel."""
    if len(cfg.inputs) < 2:
        raise ValidationError("copula needs at least two CSV files")
    chosen = cfg.extra.get("copula", "t")
    series = [_load_returns(p) for p in cfg.inputs]
    marginals = []
    for rs in series:
        fits = fit_families(rs.returns, cfg.families, cfg.fit_config, cfg.seed)
        best = min(fits.values(), key=lambda f: (f.aic, f.family))
        log.info("%s: best marginal %s (aic %.3f)", rs.symbol, best.family, best.aic)
        marginals.append(best)
    symbols = tuple(rs.symbol for rs in series)
    panel, _ = align(series)
    train, test = train_test_split(panel, cfg.split)
    u_train = to_pseudo_obs(train, marginals)
    u_test = to_pseudo_obs(test, marginals, min_obs=1)
    models = {
        "gaussian": fit_gaussian_copula(u_train, marginals, symbols),
        "t": fit_t_copula(u_train, marginals, symbols),
    }
    rows = []
    for name, m in models.items():
        rows.append([name, m.k_params, m.loglik, copula_aic(m, u_train), copula_loglik(m, u_test),
                     m.df if m.df is not None else "-"])
    rows.sort(key=lambda r: r[3])
    _print_table(["copula", "k", "loglik", "aic", "oos_ll", "df"], rows)
    out = _out_dir(cfg)
    _print_table(["symbol", "family", "aic"], [[s, m.family, m.aic] for s, m in zip(symbols, marginals)])
    model = models[chosen]
    doc = model.to_dict()
    doc["aic"] = copula_aic(model, u_train)
    doc["oos_ll"] = copula_loglik(model, u_test)
    doc["n_obs"] = int(len(train))
    (out / f"copula.{chosen}.json").write_text(json.dumps(doc, indent=2) + "\n")
    rho = spearman_matrix(panel).values
    with open(out / "spearman.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["symbol", *symbols])
        for s, row in zip(symbols, rho):
            w.writerow([s, *(f"{v:.10g}" for v in row)])
    return EXIT_OK


def _params_from_args(args):
    if args.fit:
        try:
            doc = json.loads(Path(args.fit).read_text())
        except OSError as exc:
            raise ParseError(f"cannot read {args.fit}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.fit}: invalid JSON ({exc})") from None
        return FitResult.from_dict(doc).params if "loglik" in doc else FinParams.from_dict(doc["params"])
    if args.params:
        try:
            vals = [float(v) for v in args.params.split(",")]
        except ValueError:
            raise ParseError(f"--params must be 5 comma-separated numbers, got {args.params!r}") from None
        if len(vals) != 5:
            raise ParseError("--params needs mu,sigma,alpha,beta,kappa")
        return FinParams(*vals)
    return FinParams(0.0, 1.0, 2.0, 2.0, 1.0)


def _x_grid(p, lo, hi, n):
    if lo is None or hi is None:
        lo, hi = quantile(np.array([1e-5, 1 - 1e-5]), p)
    if not hi > lo:
        raise ValidationError("--range needs lo < hi")
    x = np.linspace(lo, hi, n)
    if lo < p.mu < hi:
        # put the mode on the grid so curve features line up with it exactly
        x[np.argmin(np.abs(x - p.mu))] = p.mu
        x.sort()
    return x


def cmd_plotdata(args, cfg):
    """Emit curve or surface data as CSV."""
    n = args.gridsize
    if n < 2:
        raise ValidationError("--gridsize must be at least 2")
    lo, hi = (args.range or (None, None))
    if args.what == "kurtosis-surface":
        lo, hi = (lo, hi) if args.range else (0.5, 4.0)
        if not (0 < lo < hi):
            raise ValidationError("kurtosis-surface range must satisfy 0 < lo < hi")
        axis = np.linspace(lo, hi, n)
        header = ["alpha", "beta", "excess_kurtosis"]
        rows = []
        for a in axis:
            for b in axis:
                rows.append((a, b, shape_stats(FinParams(0.0, 1.0, a, b, args.kappa))[3]))
    else:
        p = _params_from_args(args)
        x = _x_grid(p, lo, hi, n)
        z = (x - p.mu) / p.sigma
        fn = {"pdf": lambda: pdf(x, p), "cdf": lambda: cdf(x, p),
              "kernel": lambda: kernel(z, p), "dkernel": lambda: derivative_kernel(z, p)}[args.what]
        header = ["x", args.what]
        rows = list(zip(x, np.asarray(fn())))
    stream = open(args.out_file, "w", newline="") if args.out_file else sys.stdout
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" for v in r])
    finally:
        if args.out_file:
            stream.close()
    return EXIT_OK


def cmd_simulate(args, cfg):
    """Sample from a fit.json (one column) or a copula JSON (one column per margin)."""
    try:
        doc = json.loads(Path(args.model).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {args.model}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.model}: invalid JSON ({exc})") from None
    if args.n < 1:
        raise ValidationError("-n must be positive")
    if "corr" in doc:
        model = CopulaModel.from_dict(doc)
        if model.marginals:
            x = sample_joint(model, args.n, cfg.seed)
        else:
            x = sample_copula(model, args.n, cfg.seed)
        cols = list(model.symbols) or [f"x{i}" for i in range(model.dim)]
    else:
        if "params" not in doc:
            raise ParseError(f"{args.model}: expected a fit or copula document")
        x = sample(args.n, FinParams.from_dict(doc["params"]), seed=cfg.seed)[:, None]
        cols = [doc.get("symbol", "x")]
    stream = open(args.out_file, "w", newline="") if args.out_file else sys.stdout
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(cols)
        for row in x:
            w.writerow([f"{v:.10g}" for v in row])
    finally:
        if args.out_file:
            stream.close()
    return EXIT_OK


def cmd_stats(cfg):
    """Summary statistics (mean, std, skewness, Pearson kurtosis) per series."""
    rows = []
    for path in cfg.inputs:
        rs = _load_returns(path)
        s = summary_stats(rs)
        rows.append([rs.symbol, s.n, s.avg, s.std, s.skewness, s.kurtosis])
    _print_table(["symbol", "n", "avg", "std", "skewness", "kurtosis"], rows)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="finflex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, families_default, many=False):
        if many:
            p.add_argument("--family", nargs="+", default=list(families_default),
                           choices=ALL_FAMILIES, metavar="FAMILY")
        else:
            p.add_argument("--family", default=families_default[0], choices=ALL_FAMILIES)
        p.add_argument("--split", type=float, default=0.2, help="test fraction (default 0.2)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--tol", type=float, default=1e-6, help="gradient tolerance")

    p = sub.add_parser("fit", help="fit one family to a price CSV")
    p.add_argument("csv")
    common(p, ("fin",))

    p = sub.add_parser("compare", help="rank several families on one price CSV")
    p.add_argument("csv")
    common(p, ALL_FAMILIES, many=True)

    p = sub.add_parser("copula", help="fit marginals and Gaussian/t copulas to several CSVs")
    p.add_argument("csv", nargs="+")
    common(p, ALL_FAMILIES, many=True)
    p.add_argument("--copula", choices=("t", "gaussian"), default="t",
                   help="copula written to copula.<name>.json (both are fitted)")

    p = sub.add_parser("plotdata", help="emit curve or surface data as CSV")
    p.add_argument("--what", choices=("pdf", "cdf", "kernel", "dkernel", "kurtosis-surface"),
                   default="pdf")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--params", help="mu,sigma,alpha,beta,kappa")
    src.add_argument("--fit", help="fit.json written by the fit command")
    p.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--gridsize", type=int, default=401)
    p.add_argument("--kappa", type=float, default=1.0, help="kappa for the kurtosis surface")
    p.add_argument("-o", "--out-file", help="CSV path (default stdout)")

    p = sub.add_parser("simulate", help="sample from a fit or copula JSON")
    p.add_argument("model")
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--out-file", help="CSV path (default stdout)")

    p = sub.add_parser("stats", help="summary statistics of price CSVs")
    p.add_argument("csv", nargs="+")
    return parser


def _configure_logging():
    level = os.environ.get("FINFLEX_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        fams = args.family if isinstance(getattr(args, "family", None), list) else [getattr(args, "family", "fin")]
        inputs = args.csv if isinstance(getattr(args, "csv", None), list) else [getattr(args, "csv", None)]
        cfg = RunConfig(
            command=args.command,
            inputs=tuple(i for i in inputs if i is not None),
            families=tuple(fams),
            split=getattr(args, "split", 0.2),
            seed=getattr(args, "seed", None),
            out=getattr(args, "out", Path(".")),
            tol=getattr(args, "tol", 1e-6),
            extra={"copula": getattr(args, "copula", "t")},
        )
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.command == "copula":
            return cmd_copula(cfg)
        if args.command == "plotdata":
            return cmd_plotdata(args, cfg)
        if args.command == "simulate":
            return cmd_simulate(args, cfg)
        return cmd_stats(cfg)
    except ParseError as exc:
        print(f"finflex: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConvergenceError as exc:
        print(f"finflex: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValidationError, DomainError) as exc:
        print(f"finflex: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
