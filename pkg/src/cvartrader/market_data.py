"""Price ingestion, returns, smoothing and state construction.

The policy input at step ``t`` is built from filtered (smoothed) simple
returns ``y``::

    x_t = [y_t, y_{t-1}, ..., y_{t-n}, 1]

The smoothing filter is an exponential moving average applied to the raw
returns. An alternative reading is to smooth the price path first and take
returns of the smoothed prices; for an EMA the two agree to first order in
the return size, and filtering returns directly keeps the computation a
single O(1) update per tick.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from datetime import datetime
from typing import IO, Sequence, Union

import numpy as np

from .errors import (
    EmptyInputError,
    InsufficientDataError,
    OrderingError,
    ParameterError,
    ParseError,
)

Timestamp = Union[int, datetime]
Source = Union[str, os.PathLike, IO[str], IO[bytes]]


@dataclass(frozen=True)
class PriceSeries:
    """Timestamped, strictly positive prices with strictly increasing time."""

    timestamps: tuple
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 1:
            raise ParameterError("prices must be one-dimensional")
        if len(self.timestamps) != len(prices):
            raise ParameterError(
                f"{len(self.timestamps)} timestamps for {len(prices)} prices"
            )
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise ParameterError("prices must be finite and strictly positive")
        ts = tuple(self.timestamps)
        for i in range(1, len(ts)):
            if not ts[i - 1] < ts[i]:
                raise OrderingError(f"timestamps not strictly increasing at index {i}")
        prices.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.prices)

    @classmethod
    def from_prices(cls, prices: Sequence[float]) -> "PriceSeries":
        """Series with integer timestamps 0..n-1."""
        return cls(tuple(range(len(prices))), np.asarray(prices, dtype=float))


def _parse_timestamp(text: str, line: int) -> Timestamp:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        return datetime.fromisoformat(iso)
    except ValueError:
        raise ParseError(f"unparseable timestamp {text!r}", line) from None


def _parse_price(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"unparseable price {text!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite price {text!r}", line)
    if value <= 0:
        raise ParseError(f"non-positive price {value!r}", line)
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _open_text(source: Source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def load_prices(source: Source, fmt: str = "csv") -> PriceSeries:
    """Read a ``timestamp,price`` CSV into a :class:`PriceSeries`.

    The header row is optional and detected by a non-numeric price field.
    If a header names ``timestamp`` and ``price`` columns they are used,
    otherwise the first two columns are. Timestamps are integer epochs or
    ISO-8601 strings (one kind per file).

    Raises:
        ParseError: malformed row, bad timestamp, or non-positive/NaN price;
            the message carries the 1-based line number.
        OrderingError: timestamps not strictly increasing.
        EmptyInputError: no data rows.
    """
    if fmt != "csv":
        raise ParameterError(f"unsupported format {fmt!r}")
    handle, owned = _open_text(source)
    try:
        reader = csv.reader(handle)
        ts_col, px_col = 0, 1
        timestamps: list[Timestamp] = []
        prices: list[float] = []
        first = True
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if first:
                first = False
                if len(row) >= 2 and not _is_number(row[1]) and not _is_number(row[0]):
                    names = [c.strip().lower() for c in row]
                    if "timestamp" in names and "price" in names:
                        ts_col, px_col = names.index("timestamp"), names.index("price")
                    continue
            if len(row) <= max(ts_col, px_col):
                raise ParseError(f"expected at least 2 columns, got {len(row)}", line)
            ts = _parse_timestamp(row[ts_col], line)
            px = _parse_price(row[px_col].strip(), line)
            if timestamps:
                prev = timestamps[-1]
                if type(prev) is not type(ts):
                    raise ParseError("mixed timestamp kinds (epoch and ISO-8601)", line)
                try:
                    ordered = prev < ts
                except TypeError:
                    raise ParseError("mixed naive and timezone-aware timestamps", line) from None
                if not ordered:
                    raise OrderingError(f"line {line}: timestamp {row[ts_col]!r} not after previous row")
            timestamps.append(ts)
            prices.append(px)
    finally:
        if owned:
            handle.close()
    if not prices:
        raise EmptyInputError("no price rows in input")
    return PriceSeries(tuple(timestamps), np.array(prices))


def compute_returns(prices: PriceSeries | Sequence[float]) -> np.ndarray:
    """Simple returns ``p[i+1]/p[i] - 1``; one shorter than the input."""
    p = prices.prices if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=float)
    if len(p) < 2:
        raise InsufficientDataError(f"need at least 2 prices, got {len(p)}")
    return p[1:] / p[:-1] - 1.0


def ema_weight(span: int) -> float:
    if isinstance(span, bool) or not isinstance(span, (int, np.integer)) or span < 1:
        raise ParameterError(f"filter span must be a positive integer, got {span!r}")
    return 2.0 / (span + 1.0)


class EmaFilter:
    """Online EMA; ``update`` consumes one raw value and returns the filtered one."""

    def __init__(self, span: int):
        self.weight = ema_weight(span)
        self.value: float | None = None

    def update(self, x: float) -> float:
        if self.value is None:
            self.value = float(x)
        else:
            self.value += self.weight * (x - self.value)
        return self.value


def filter_returns(returns: Sequence[float], span: int) -> np.ndarray:
    """EMA with smoothing factor ``2/(span+1)`` seeded with the first return.

    ``span=1`` is the identity.
    """
    filt = EmaFilter(span)
    r = np.asarray(returns, dtype=float)
    if span == 1:
        return r.copy()
    return np.array([filt.update(v) for v in r])


def make_state(filtered: Sequence[float], t: int, n: int) -> np.ndarray:
    """State ``[y_t, y_{t-1}, ..., y_{t-n}, 1]`` of dimension ``n + 2``."""
    if n < 0:
        raise ParameterError(f"lag count must be non-negative, got {n}")
    if t < n:
        raise InsufficientDataError(f"step {t} has fewer than {n} lags of history")
    if t >= len(filtered):
        raise InsufficientDataError(f"step {t} beyond {len(filtered)} filtered returns")
    x = np.empty(n + 2)
    x[: n + 1] = np.asarray(filtered[t - n : t + 1], dtype=float)[::-1]
    x[-1] = 1.0
    return x
