"""Price-panel ingestion: cleaning, log-returns and a rolling volatility proxy."""

import csv
import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DomainError

MISSING = {"", "na", "nan", "null", "none", "#n/a"}


@dataclass
class PricePanel:
    """Cleaned price panel; ``dropped_rows`` counts rows removed for missing cells."""

    tickers: list
    dates: list
    prices: np.ndarray = field(repr=False)
    dropped_rows: int = 0

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=np.float64)
        if self.prices.ndim != 2 or self.prices.shape[1] != len(self.tickers):
            raise ValueError("price matrix shape does not match the ticker list")
        if self.dates and len(self.dates) != self.prices.shape[0]:
            raise ValueError("date count does not match the number of rows")
        if self.dates and any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    def subset(self, k, seed=None):
        """Random ``k`` tickers, kept in their original column order."""
        p = len(self.tickers)
        if not 1 <= k <= p:
            raise ValueError(f"subset size must lie in [1, {p}], got {k}")
        idx = np.sort(np.random.default_rng(seed).choice(p, size=k, replace=False))
        return PricePanel([self.tickers[i] for i in idx], list(self.dates),
                          self.prices[:, idx], self.dropped_rows)


def _is_date(token):
    try:
        date.fromisoformat(token.strip())
    except ValueError:
        return False
    return True


def read_price_panel(path):
    """Read a price CSV with a header row.

    The first column holds ISO-8601 dates when its entries parse as dates;
    every other column is one ticker. Rows with any missing cell are dropped.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty price file")
    header, body = rows[0], [r for r in rows[1:] if any(c.strip() for c in r)]
    has_dates = bool(body) and _is_date(body[0][0])
    tickers = header[1:] if has_dates else header
    dates, values, dropped = [], [], 0
    for row in body:
        cells = row[1:] if has_dates else row
        if len(cells) != len(tickers) or any(c.strip().lower() in MISSING for c in cells):
            dropped += 1
            continue
        values.append([float(c) for c in cells])
        if has_dates:
            dates.append(date.fromisoformat(row[0].strip()))
    prices = np.array(values, dtype=np.float64).reshape(len(values), len(tickers))
    return PricePanel(list(tickers), dates, prices, dropped)


def log_returns(panel, center=False):
    """``X[t, s] = log(P[t + 1, s] / P[t, s])``; optionally column-centered."""
    prices = panel.prices if isinstance(panel, PricePanel) else np.asarray(panel, dtype=np.float64)
    if prices.shape[0] < 2:
        raise ValueError("need at least two price rows")
    if not np.all(prices > 0):
        raise DomainError("prices must be strictly positive")
    out = np.diff(np.log(prices), axis=0)
    if center:
        out = out - out.mean(axis=0)
    return out


def volatility_proxy(returns, w):
    """Rolling sample standard deviation over ``w + 1`` consecutive returns.

    Row ``t`` of the output covers returns ``t .. t + w``; the output has
    ``T - w`` rows. Use :func:`volatility_index` for the cross-sectional mean.
    """
    x = np.atleast_2d(np.asarray(returns, dtype=np.float64))
    if x.shape[0] == 1 and np.ndim(returns) == 1:
        x = x.T
    if w < 1 or x.shape[0] <= w:
        raise ValueError(f"window w={w} exceeds the series length {x.shape[0]}")
    windows = sliding_window_view(x, w + 1, axis=0)
    return windows.std(axis=-1, ddof=1)


def volatility_index(vol):
    return np.asarray(vol).mean(axis=1)


def write_series_csv(path, matrix, columns, index=None, index_name="date"):
    """CSV with a header row and 17-significant-digit values."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(([index_name] if index is not None else []) + list(columns))
        for i, row in enumerate(matrix):
            cells = [format(v, ".17g") if math.isfinite(v) else "nan" for v in row]
            writer.writerow(([str(index[i])] if index is not None else []) + cells)


def read_numeric_csv(path):
    """Numeric matrix from a CSV that may carry a header row and a date column."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError("empty data file")

    def numeric(tokens):
        try:
            [float(t) for t in tokens]
        except ValueError:
            return False
        return True

    first = rows[0]
    if not numeric(first) and not (_is_date(first[0]) and numeric(first[1:])):
        rows = rows[1:]
    if rows and _is_date(rows[0][0]):
        rows = [r[1:] for r in rows]
    return np.array([[float(t) for t in r] for r in rows], dtype=np.float64)
