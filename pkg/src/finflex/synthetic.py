"""Seeded synthetic price panels used as bundled fixtures.

The panel is a 5-stock market whose daily log-returns have skewed,
heavy-tailed FIN marginals tied together by a Student-t copula. Prices
start at 100 and compound the returns on consecutive business days.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .copula import CopulaModel, CorrelationMatrix, sample_joint
from .core import FinParams, normal, sample
from .data import PriceSeries, write_csv

__all__ = ["PANEL_SYMBOLS", "PANEL_MARGINALS", "PANEL_COPULA", "make_panel",
           "make_prices", "fixture_path", "write_fixtures"]

PANEL_SYMBOLS = ("ACME", "BOLT", "CRUX", "DYNA", "EMBR")

# alpha < 2 and beta < 2 give a peaked body and heavy tails; kappa != 1 skews
PANEL_MARGINALS = (
    FinParams(0.0006, 0.011, 1.3, 1.0, 1.25),
    FinParams(0.0002, 0.015, 1.1, 0.9, 0.80),
    FinParams(0.0004, 0.009, 1.6, 1.2, 1.15),
    FinParams(-0.0001, 0.013, 1.2, 0.8, 0.85),
    FinParams(0.0003, 0.010, 1.4, 1.1, 1.30),
)

_PANEL_CORR = np.array([
    [1.00, 0.45, 0.35, 0.30, 0.40],
    [0.45, 1.00, 0.30, 0.25, 0.35],
    [0.35, 0.30, 1.00, 0.50, 0.30],
    [0.30, 0.25, 0.50, 1.00, 0.25],
    [0.40, 0.35, 0.30, 0.25, 1.00],
])

PANEL_COPULA = CopulaModel("student_t", CorrelationMatrix(_PANEL_CORR), 8.0,
                           PANEL_MARGINALS, None, PANEL_SYMBOLS)

PANEL_SEED = 20240611
PANEL_DAYS = 2000
START_DATE = "2015-01-02"


def _business_days(n, start=START_DATE):
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


def make_prices(returns, symbol, start=START_DATE, p0=100.0):
    """Compound log-returns into a PriceSeries on business days."""
    r = np.asarray(returns, dtype=float)
    prices = p0 * np.exp(np.concatenate(([0.0], np.cumsum(r))))
    # round-trip through 10 significant digits so files reload bit-for-bit
    prices = np.array([float(f"{p:.10g}") for p in prices])
    return PriceSeries(symbol, _business_days(len(prices), start), prices)


def make_panel(n_days=PANEL_DAYS, seed=PANEL_SEED):
    """Simulate the 5-stock panel as a list of PriceSeries of length ``n_days + 1``."""
    r = sample_joint(PANEL_COPULA, n_days, seed=seed)
    return [make_prices(r[:, j], s) for j, s in enumerate(PANEL_SYMBOLS)]


def _single_series(p, symbol, n_days, seed):
    return make_prices(sample(n_days, p, seed=seed), symbol)


def write_fixtures(directory):
    """(Re)generate every bundled fixture CSV into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for ps in make_panel():
        write_csv(ps, out / f"{ps.symbol}.csv")
    write_csv(_single_series(FinParams(0.0, 0.01, 1.5, 1.5, 1.3), "SKEW", 3000, 7),
              out / "SKEW.csv")
    write_csv(_single_series(normal(0.0003, 0.01), "GAUSS", 3000, 11), out / "GAUSS.csv")
    return sorted(out.glob("*.csv"))


def fixture_path(name):
    """Path of a bundled fixture, e.g. ``fixture_path("ACME")``."""
    name = name if name.endswith(".csv") else f"{name}.csv"
    return Path(str(resources.files("finflex") / "fixtures" / name))
