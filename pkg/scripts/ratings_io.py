#!/usr/bin/env python3
"""
Rating, estimate, results and report files.

Ratings CSV: header `user,item,value`, one row per non-missing rating.
Writes are canonical: rows sorted by key, floats with 12 significant
digits, LF line endings.
"""

import math
import sys
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))
import config
from scripts.completion import RatingMatrix
from scripts.dp_verify import describe_value
from scripts.mechanisms import validate_domain

RATINGS_COLUMNS = ["user", "item", "value"]
RESULTS_COLUMNS = ["trial", "seed", "mechanism", "epsilon", "s", "rho", "bound",
                   "within_bound", "recovery_error", "converged"]
REPORT_COLUMNS = ["case", "x", "y", "event", "ratio", "bound", "method", "pass"]


def normalize_stars(value, d: int):
    """Map stars 1..d onto the uniform grid of [-1, 1]: v -> 2(v-1)/(d-1) - 1."""
    d = validate_domain(d)
    if d < 2:
        raise ValueError(f"normalization needs d >= 2, got {d}")
    stars = np.asarray(value)
    if stars.size and (not np.all(np.equal(np.mod(stars, 1), 0)) or stars.min() < 1 or stars.max() > d):
        raise ValueError(f"star ratings must be integers in 1..{d}, got {value!r}")
    normalized = 2.0 * (stars.astype(float) - 1.0) / (d - 1) - 1.0
    return float(normalized) if normalized.ndim == 0 else normalized


def denormalize_stars(x, d: int):
    """Nearest star of a normalized rating, clamped to 1..d."""
    d = validate_domain(d)
    values = np.asarray(x, dtype=float)
    if d == 1:
        stars = np.ones(values.shape, dtype=np.int64)
    else:
        stars = np.clip(np.rint((values + 1.0) * (d - 1) / 2.0) + 1, 1, d).astype(np.int64)
    return int(stars) if stars.ndim == 0 else stars


def normalize_matrix(matrix: RatingMatrix) -> RatingMatrix:
    """Continuous copy of a star matrix."""
    if matrix.d is None:
        return matrix
    values = np.where(matrix.mask, matrix.values, 1.0)
    return RatingMatrix(values=normalize_stars(values.astype(np.int64), matrix.d), mask=matrix.mask,
                        users=matrix.users, items=matrix.items)


def _read_table(path: Path, columns: List[str]) -> pd.DataFrame:
    """Read a headed CSV as strings; the index is the data line number minus 2."""
    path = Path(path)
    if not path.exists():
        raise ValueError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise ValueError(f"{path}: line 1: missing header {','.join(columns)}")
    except pd.errors.ParserError as e:
        raise ValueError(f"{path}: malformed CSV: {e}")
    if list(frame.columns) != columns:
        raise ValueError(f"{path}: line 1: expected header {','.join(columns)}, got {','.join(frame.columns)}")
    # Blank lines come back as empty rows; drop them but keep their index
    blank = frame.fillna("").eq("").all(axis=1)
    return frame[~blank]


def _parse_value(text: str, line: int, d: Optional[int], unbounded: bool) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"line {line}: malformed value {text!r}")
    if not math.isfinite(value):
        raise ValueError(f"line {line}: value must be finite, got {text!r}")
    if d is not None:
        if value != int(value) or not 1 <= value <= d:
            raise ValueError(f"line {line}: star rating must be an integer in 1..{d}, got {text!r}")
    elif not unbounded and not -1.0 <= value <= 1.0:
        raise ValueError(f"line {line}: rating must lie in [-1, 1], got {text!r}")
    return value


def read_ratings(path: Path, d: Optional[int] = None, unbounded: bool = False) -> RatingMatrix:
    """Load a ratings CSV into a RatingMatrix.

    Rows and columns follow first appearance of users and items. With d the
    values are stars 1..d; otherwise reals in [-1, 1], or any finite real
    when unbounded (privatized files).
    """
    if d is not None:
        d = validate_domain(d)
    frame = _read_table(path, RATINGS_COLUMNS)
    if frame.empty:
        return RatingMatrix(values=np.zeros((0, 0)), mask=np.zeros((0, 0), dtype=bool), d=d)
    lines = frame.index.to_numpy() + 2

    # Short rows leave NaN in the trailing fields
    short = frame.isna()
    if short.to_numpy().any():
        position = int(np.flatnonzero(short.any(axis=1).to_numpy())[0])
        column = short.columns[short.iloc[position].to_numpy()][0]
        raise ValueError(f"line {lines[position]}: missing {column} field")

    for column in ("user", "item"):
        blank = frame[column].str.strip() == ""
        if blank.any():
            raise ValueError(f"line {lines[int(np.flatnonzero(blank.to_numpy())[0])]}: empty {column} id")

    duplicated = frame.duplicated(subset=["user", "item"])
    if duplicated.any():
        position = int(np.flatnonzero(duplicated.to_numpy())[0])
        row = frame.iloc[position]
        raise ValueError(f"line {lines[position]}: duplicate rating for user {row['user']!r}, item {row['item']!r}")

    values = [_parse_value(text, line, d, unbounded) for line, text in zip(lines, frame["value"])]

    users = pd.unique(frame["user"])
    items = pd.unique(frame["item"])
    rows = pd.Index(users).get_indexer(frame["user"])
    cols = pd.Index(items).get_indexer(frame["item"])

    grid = np.zeros((len(users), len(items)))
    mask = np.zeros((len(users), len(items)), dtype=bool)
    grid[rows, cols] = values
    mask[rows, cols] = True
    return RatingMatrix(values=grid, mask=mask, d=d, users=tuple(users), items=tuple(items))


def _format_rating(value: float, d: Optional[int]) -> str:
    return str(int(round(value))) if d is not None else config.format_float(value)


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator=config.CSV_LINE_TERMINATOR)
    return path


def write_ratings(path: Path, matrix: RatingMatrix) -> Path:
    """Write the observed entries, sorted by (user, item)."""
    rows, cols = np.nonzero(matrix.mask)
    frame = pd.DataFrame({
        "user": [matrix.users[i] for i in rows],
        "item": [matrix.items[j] for j in cols],
        "value": [_format_rating(matrix.values[i, j], matrix.d) for i, j in zip(rows, cols)],
    }, columns=RATINGS_COLUMNS)
    frame = frame.sort_values(["user", "item"], kind="stable")
    return _write_frame(frame, path)


def write_estimate(path: Path, estimate: np.ndarray, users: Sequence[str], items: Sequence[str]) -> Path:
    """Dense estimate grid: a `user` column, then one column per item, both sorted."""
    estimate = np.asarray(estimate, dtype=float)
    if estimate.shape != (len(users), len(items)):
        raise ValueError(f"estimate shape {estimate.shape} does not match {len(users)} users x {len(items)} items")
    row_order = sorted(range(len(users)), key=lambda i: users[i])
    col_order = sorted(range(len(items)), key=lambda j: items[j])
    frame = pd.DataFrame(
        [[users[i]] + [config.format_float(estimate[i, j]) for j in col_order] for i in row_order],
        columns=["user"] + [items[j] for j in col_order],
    )
    return _write_frame(frame, path)


def read_estimate(path: Path) -> Tuple[np.ndarray, Tuple[str, ...], Tuple[str, ...]]:
    """Inverse of write_estimate: (grid, users, items)."""
    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if not len(frame.columns) or frame.columns[0] != "user":
        raise ValueError(f"{path}: line 1: estimate files start with a user column")
    grid = frame.iloc[:, 1:].astype(float).to_numpy()
    return grid, tuple(frame["user"]), tuple(frame.columns[1:])


def _format_optional(value) -> str:
    return "" if value is None else config.format_float(value)


def _format_flag(value) -> str:
    return "" if value is None else str(bool(value)).lower()


def write_results(path: Path, records: Iterable) -> Path:
    """One row per trial record, ordered by trial index."""
    records = sorted(records, key=lambda record: record.trial)
    frame = pd.DataFrame([
        [record.trial, record.seed, record.mechanism, config.format_float(record.epsilon), record.s,
         config.format_float(record.rho), config.format_float(record.bound),
         _format_flag(record.within_bound), _format_optional(record.recovery_error),
         _format_flag(record.converged)]
        for record in records
    ], columns=RESULTS_COLUMNS)
    return _write_frame(frame, path)


def write_report(path: Path, reports: Iterable) -> Path:
    """One row per certified ratio, in the order given."""
    frame = pd.DataFrame([
        [report.case, describe_value(report.input_pair[0]), describe_value(report.input_pair[1]),
         report.event.describe(), config.format_float(report.ratio), config.format_float(report.bound),
         report.method, _format_flag(report.passed)]
        for report in reports
    ], columns=REPORT_COLUMNS)
    return _write_frame(frame, path)


if __name__ == "__main__":
    print("=" * 60)
    print("RATING FILES")
    print("=" * 60)

    for d in (2, 5):
        grid = [normalize_stars(v, d) for v in range(1, d + 1)]
        print(f"\n📊 d={d}: {grid}")
        print(f"✓ round trip: {[denormalize_stars(x, d) for x in grid]}")
