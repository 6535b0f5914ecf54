"""CSV ingestion and all file output (summaries, reports, run manifests).

All CSVs use a comma delimiter, a '.' decimal separator, and a mandatory
header row; parsing is locale-independent.  Floats are written with
``repr`` so files are byte-stable across runs and round-trip exactly.

Output schemas
--------------
fit summary      x, f_mean, f_lower, f_upper
fit scalars      parameter, value          (sigma2_mean/_lower/_upper, lambda_mean)
raw draws        iteration, parameter, index, value
mm fit           x, y, f_hat [, f_lower, f_upper]
cv curve         lambda, cv_error
bench report     one row per cell; alpha/rho empty for methods without them
bench mse rows   method, sigma, alpha, rho, replication, mse
manifest         JSON: config echo, seed, package and library versions
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """A validated (x, y) series; x strictly increasing, no missing values."""

    x: np.ndarray
    y: np.ndarray


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv_columns(path):
    """Read any of our CSVs back as {column: list of strings}."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        cols = {name: [] for name in header}
        for row in reader:
            for name, val in zip(header, row):
                cols[name].append(val)
    return cols


def ingest_csv(path, x_column=None, y_column=None):
    """Parse and validate a time-series CSV into a :class:`Dataset`.

    The y column defaults to ``y`` (or the only column of a one-column
    file); the x column defaults to ``x`` when present and otherwise to the
    regular grid 1..n.  Rows are sorted by x.  Parse failures, missing
    values, and duplicated x values are reported with their row numbers
    (1-based, counting the header as row 1).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = list(reader)

    if y_column is None:
        if "y" in header:
            y_column = "y"
        elif len(header) == 1:
            y_column = header[0]
        else:
            raise ValueError(f"{path}: no 'y' column; specify the y column explicitly")
    if y_column not in header:
        raise ValueError(f"{path}: column {y_column!r} not found in header {header}")
    if x_column is None and "x" in header and y_column != "x":
        x_column = "x"
    if x_column is not None and x_column not in header:
        raise ValueError(f"{path}: column {x_column!r} not found in header {header}")

    def parse(row_idx, row, col):
        pos = header.index(col)
        if pos >= len(row) or row[pos].strip() == "":
            raise ValueError(f"{path}: row {row_idx}: missing value in column {col!r}")
        try:
            return float(row[pos])
        except ValueError:
            raise ValueError(
                f"{path}: row {row_idx}: cannot parse {row[pos]!r} in column {col!r}"
            ) from None

    ys = []
    xs = []
    for i, row in enumerate(rows):
        row_idx = i + 2  # 1-based, after the header
        ys.append(parse(row_idx, row, y_column))
        if x_column is not None:
            xs.append(parse(row_idx, row, x_column))
    if not ys:
        raise ValueError(f"{path}: no data rows")

    y = np.asarray(ys)
    if x_column is None:
        return Dataset(x=np.arange(1.0, len(ys) + 1.0), y=y)

    x = np.asarray(xs)
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    dup = np.nonzero(np.diff(x) == 0)[0]
    if dup.size:
        offenders = sorted({int(order[d]) + 2 for d in dup} | {int(order[d + 1]) + 2 for d in dup})
        raise ValueError(f"{path}: duplicated x values at rows {offenders}")
    return Dataset(x=x, y=y)


# --------------------------------------------------------------------------
# Writers
# --------------------------------------------------------------------------

def write_fit_summary(path, x, summary):
    rows = zip(x, summary.f_mean, summary.f_lower, summary.f_upper)
    _write_rows(path, ["x", "f_mean", "f_lower", "f_upper"], rows)


def write_fit_scalars(path, summary):
    rows = [
        ("sigma2_mean", summary.sigma2_mean),
        ("sigma2_lower", summary.sigma2_lower),
        ("sigma2_upper", summary.sigma2_upper),
        ("lambda_mean", summary.lambda_mean),
    ]
    _write_rows(path, ["parameter", "value"], rows)


def write_draws(path, draws):
    from .gibbs import draws_table

    _write_rows(path, ["iteration", "parameter", "index", "value"], draws_table(draws))


def write_mm_fit(path, x, y, f_hat, band=None):
    if band is None:
        _write_rows(path, ["x", "y", "f_hat"], zip(x, y, f_hat))
    else:
        _write_rows(
            path,
            ["x", "y", "f_hat", "f_lower", "f_upper"],
            zip(x, y, f_hat, band.lower, band.upper),
        )


def write_cv_curve(path, cv):
    _write_rows(path, ["lambda", "cv_error"], zip(cv.lambda_grid, cv.cv_errors))


def write_bench_report(path, report):
    header = [
        "method", "sigma", "alpha", "rho",
        "mse_mean", "mse_sd",
        "fcov_mean", "fcov_se", "fcov_sim_mean", "fcov_sim_se",
        "varcov_mean", "varcov_se",
        "guard_fraction", "n_replications", "n_failures", "wall_time_seconds",
    ]
    rows = []
    for c in report.cells:
        k = c.key
        rows.append((
            k.method, k.sigma, k.alpha, k.rho,
            c.mse_mean, c.mse_sd,
            c.fcov_mean, c.fcov_se, c.fcov_sim_mean, c.fcov_sim_se,
            c.varcov_mean, c.varcov_se,
            c.guard_fraction, c.n_replications, c.n_failures, c.wall_time,
        ))
    _write_rows(path, header, rows)


def write_mse_rows(path, report):
    _write_rows(
        path,
        ["method", "sigma", "alpha", "rho", "replication", "mse"],
        report.mse_rows,
    )


def write_manifest(path, payload):
    """JSON run manifest: config plus versions, no timestamps."""
    import scipy

    from . import __version__

    body = dict(payload)
    body["versions"] = {
        "btrend": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
