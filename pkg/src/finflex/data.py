"""Price ingestion, log-returns, summary statistics, alignment and splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError, ValidationError

__all__ = [
    "PriceSeries",
    "ReturnsSeries",
    "SummaryStats",
    "load_csv",
    "write_csv",
    "write_returns_csv",
    "log_returns",
    "summary_stats",
    "align",
    "train_test_split",
]

HEADER = ("date", "adj_close")


def _as_dates(dates):
    try:
        return np.asarray(dates, dtype="datetime64[D]")
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"invalid dates: {exc}") from None


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Adjusted close prices on strictly increasing dates."""

    symbol: str
    dates: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        dates = _as_dates(self.dates)
        prices = np.asarray(self.prices, dtype=float)
        if dates.ndim != 1 or dates.shape != prices.shape:
            raise ValidationError("dates and prices must be 1-d and of equal length")
        if len(prices) < 2:
            raise ValidationError(f"{self.symbol}: need at least 2 prices, got {len(prices)}")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValidationError(f"{self.symbol}: dates must be strictly increasing")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise ValidationError(f"{self.symbol}: prices must be finite and positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True, eq=False)
class ReturnsSeries:
    """Log-returns; ``dates[i]`` is the date of the later price."""

    symbol: str
    dates: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        dates = _as_dates(self.dates)
        r = np.asarray(self.returns, dtype=float)
        if dates.ndim != 1 or dates.shape != r.shape:
            raise ValidationError("dates and returns must be 1-d and of equal length")
        if not np.all(np.isfinite(r)):
            raise ValidationError(f"{self.symbol}: returns must be finite")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", r)

    def __len__(self):
        return len(self.returns)


@dataclass(frozen=True)
class SummaryStats:
    n: int
    avg: float
    std: float
    skewness: float
    kurtosis: float  # Pearson, so 3 for a normal


def load_csv(path, symbol=None):
    """Read a ``date,adj_close`` CSV into a PriceSeries.

    Rows may appear in any order; they are sorted by date. The symbol
    defaults to the file stem.

    Raises
    ------
    ParseError
        Missing file, bad header or malformed row (message carries the line).
    ValidationError
        Duplicate dates or non-positive prices.
    """
    path = Path(path)
    symbol = symbol or path.stem
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(c.strip().lower() for c in rows[0]) != HEADER:
        raise ParseError(f"{path}:1: expected header 'date,adj_close'")
    dates, prices = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            d = np.datetime64(row[0].strip(), "D")
            p = float(row[1])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: cannot parse {','.join(row)!r}") from None
        if np.isnat(d):
            raise ParseError(f"{path}:{lineno}: missing date")
        if not math.isfinite(p) or p <= 0:
            raise ValidationError(f"{path}:{lineno}: price must be positive, got {row[1].strip()}")
        dates.append(d)
        prices.append(p)
    dates = np.array(dates, dtype="datetime64[D]")
    prices = np.array(prices)
    order = np.argsort(dates, kind="stable")
    dates, prices = dates[order], prices[order]
    dup = np.flatnonzero(dates[1:] == dates[:-1])
    if dup.size:
        raise ValidationError(f"{path}: duplicate date {dates[dup[0]]}")
    return PriceSeries(symbol, dates, prices)


def write_csv(ps, path):
    """Write a PriceSeries as ``date,adj_close`` with 10 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for d, p in zip(ps.dates, ps.prices):
            w.writerow([str(d), f"{p:.10g}"])


def write_returns_csv(dates, matrix, columns, path):
    """Write a returns panel (one column per symbol) with 10 significant digits."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *columns])
        for d, row in zip(dates, x):
            w.writerow([str(d), *(f"{v:.10g}" for v in row)])


def log_returns(ps):
    """``r_t = ln(P_t / P_{t-1})``."""
    r = np.diff(np.log(ps.prices))
    return ReturnsSeries(ps.symbol, ps.dates[1:], r)


def summary_stats(rs):
    """Mean, sample std (ddof=1), skewness and Pearson kurtosis.

    Skewness and kurtosis use the biased central moments
    ``m3 / m2**1.5`` and ``m4 / m2**2``.
    """
    x = np.asarray(rs.returns if isinstance(rs, ReturnsSeries) else rs, dtype=float)
    n = x.size
    if n < 2:
        raise DomainError("summary statistics need at least 2 observations")
    avg = float(x.mean())
    dev = x - avg
    m2 = float(np.mean(dev ** 2))
    if m2 == 0.0:
        raise DomainError("zero variance: skewness and kurtosis are undefined")
    m3 = float(np.mean(dev ** 3))
    m4 = float(np.mean(dev ** 4))
    return SummaryStats(n, avg, float(x.std(ddof=1)), m3 / m2 ** 1.5, m4 / m2 ** 2)


def align(series):
    """Inner-join several ReturnsSeries on their dates.

    Returns
    -------
    matrix : ndarray, shape (n, d)
        Columns in input order.
    dates : ndarray of datetime64[D]
    """
    series = list(series)
    if len(series) < 2:
        raise DomainError("align needs at least 2 series")
    common = series[0].dates
    for s in series[1:]:
        common = np.intersect1d(common, s.dates)
    if common.size == 0:
        raise DomainError("series share no common dates")
    cols = [s.returns[np.searchsorted(s.dates, common)] for s in series]
    return np.column_stack(cols), common


def train_test_split(data, test_fraction=0.2):
    """Chronological split: the first ``ceil((1 - f) n)`` rows train.

    Accepts a ReturnsSeries (returns two ReturnsSeries) or an array whose
    first axis is time.
    """
    if not (0.0 < test_fraction <= 0.9):
        raise DomainError(f"test fraction must lie in (0, 0.9], got {test_fraction}")
    n = len(data)
    if n < 2:
        raise DomainError("need at least 2 rows to split")
    # round first so that e.g. 0.8 * 10 does not ceil to 9
    n_train = min(max(math.ceil(round((1.0 - test_fraction) * n, 9)), 1), n - 1)
    if isinstance(data, ReturnsSeries):
        return (ReturnsSeries(data.symbol, data.dates[:n_train], data.returns[:n_train]),
                ReturnsSeries(data.symbol, data.dates[n_train:], data.returns[n_train:]))
    x = np.asarray(data)
    return x[:n_train], x[n_train:]
