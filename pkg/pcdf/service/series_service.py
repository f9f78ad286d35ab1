import csv
import io
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from pcdf.models import EPS_STD, MultichannelSeries, NormStats, WindowPair
from pcdf.service.exceptions import (
    ArgumentException,
    DataException,
    IngestionParseException,
    InsufficientDataException,
)

INGESTION_POLICIES = ("reject", "ffill")


def load_csv(path: str, policy: str = "reject") -> MultichannelSeries:
    """
    Read a multichannel series from a CSV file.

    The first row is a header of channel names; each following row is one
    timestamp with one numeric field per channel.

    Required Args:
        path: Path to the CSV file.
        policy: "reject" (default) fails on any non-finite value, "ffill"
                replaces it by the previous finite value of the same channel.

    Returns:
        A MultichannelSeries with rows in file order.

    Raises:
        IngestionParseException for malformed rows (wrong field count, a
        non-numeric field or bytes that are not UTF-8), with the 0-based data
        row index.
        DataException for an empty file or non-finite values under "reject".
    """
    if policy not in INGESTION_POLICIES:
        raise ArgumentException(f"Unknown ingestion policy {policy!r}")

    reader = csv.reader(io.StringIO(_read_text(path), newline=""), skipinitialspace=True)
    header = next(reader, None)
    if not header:
        raise DataException(f"{path}: file is empty")
    channel_names = [name.strip() for name in header]

    rows = []
    for row_index, fields in enumerate(reader):
        if not fields:
            continue
        if len(fields) != len(channel_names):
            raise IngestionParseException(
                f"{path}: row {row_index} has {len(fields)} fields, "
                f"header declares {len(channel_names)}",
                row=row_index,
            )
        try:
            rows.append([float(value) if value.strip() else np.nan for value in fields])
        except ValueError:
            raise IngestionParseException(
                f"{path}: non-numeric field in row {row_index}", row=row_index
            )

    values = np.array(rows, dtype=float).reshape(len(rows), len(channel_names))
    values = _apply_policy(values, channel_names, policy, path)

    return MultichannelSeries(values, channel_names, source_id=str(path))


def _read_text(path: str) -> str:
    with open(path, "rb") as f:
        raw = f.read()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        # line 0 is the header
        row = raw.count(b"\n", 0, e.start) - 1
        where = "header" if row < 0 else f"row {row}"
        raise IngestionParseException(
            f"{path}: {where} is not valid UTF-8", row=row if row >= 0 else None
        )


def _apply_policy(values: np.ndarray, channel_names: List[str], policy: str, path: str):
    missing = ~np.isfinite(values)
    if not missing.any():
        return values

    if policy == "reject":
        row, col = np.argwhere(missing)[0]
        raise DataException(
            f"{path}: non-finite value in channel {channel_names[col]!r} at row {row}"
        )

    if missing[0].any():
        col = int(np.flatnonzero(missing[0])[0])
        raise DataException(
            f"{path}: cannot forward-fill leading non-finite value in channel "
            f"{channel_names[col]!r} at row 0"
        )
    frame = pd.DataFrame(np.where(missing, np.nan, values))
    return frame.ffill().to_numpy(dtype=float)


def write_csv(series: MultichannelSeries, path: str):
    """
    Write a series as a header of channel names followed by one row per timestamp.

    Floats are written with full repr precision so that reading the file back
    reproduces the values exactly.
    """
    frame = pd.DataFrame(series.values, columns=series.channel_names)
    frame.to_csv(path, index=False, float_format="%.17g")


def make_windows(
    series: MultichannelSeries, lookback: int, horizon: int, stride: int = 1
) -> List[WindowPair]:
    """
    Cut a series into (history, future) window pairs.

    Windows start at t = lookback, lookback + stride, ... and there are
    floor((L_total - lookback - horizon) / stride) + 1 of them.

    Raises:
        InsufficientDataException if lookback + horizon > L_total.
        ArgumentException for non-positive sizes.
    """
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ArgumentException(
            f"lookback, horizon and stride must be positive (got {lookback}, {horizon}, {stride})"
        )
    if lookback + horizon > series.length:
        raise InsufficientDataException(
            f"Need lookback + horizon = {lookback + horizon} rows, "
            f"{series.source_id} has {series.length}"
        )

    count = (series.length - lookback - horizon) // stride + 1
    windows = []
    for i in range(count):
        t = lookback + i * stride
        windows.append(
            WindowPair(
                history=series.values[t - lookback : t],
                future=series.values[t : t + horizon],
                t_index=t,
            )
        )
    return windows


def split_series(
    series: MultichannelSeries, ratios: Sequence[float] = (0.7, 0.1, 0.2)
) -> Tuple[MultichannelSeries, MultichannelSeries, MultichannelSeries]:
    """
    Split a series into train/val/test parts in time order.

    Notes:
        - No shuffling: the parts are contiguous and follow each other.
        - When the ratios sum to 1 the test part takes every row left after
          train and val, so flooring never drops rows. Otherwise it takes
          floor(L * test_ratio) rows and the rows after it are unused.
    """
    train_ratio, val_ratio, test_ratio = ratios
    n_train = int(series.length * train_ratio)
    n_val = int(series.length * val_ratio)
    if abs(train_ratio + val_ratio + test_ratio - 1.0) <= 1e-9:
        n_test = series.length - n_train - n_val
    else:
        n_test = int(series.length * test_ratio)

    test_start = n_train + n_val
    bounds = [(0, n_train), (n_train, test_start), (test_start, test_start + n_test)]
    parts = []
    for (start, stop), suffix in zip(bounds, (":train", ":val", ":test")):
        if stop - start < 2:
            raise InsufficientDataException(
                f"Split {suffix[1:]} of {series.source_id} has {stop - start} rows; need 2"
            )
        parts.append(series.slice(start, stop, suffix))
    return tuple(parts)


def normalize(y) -> Tuple[np.ndarray, NormStats]:
    """
    Z-score a compressed series with its own population mean and std.

    A (near-)constant input gets std floored at EPS_STD and is flagged.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ArgumentException("Cannot normalize an empty vector")

    mean = float(np.mean(y))
    std = float(np.std(y))
    flagged = std < EPS_STD
    stats = NormStats(mean=mean, std=EPS_STD if flagged else std, flagged=flagged)
    return apply_norm(y, stats), stats


def apply_norm(y, stats: NormStats) -> np.ndarray:
    return (np.asarray(y, dtype=float) - stats.mean) / stats.std


def denormalize(y, stats: NormStats) -> np.ndarray:
    return np.asarray(y, dtype=float) * stats.std + stats.mean
