"""CSV ingestion, deterministic categorical encoding, and atomic output.

Encoding rules: a covariate column whose every entry parses as a number is
numeric (optionally standardized, with the mean/sd recorded for later
prediction); anything else is one-hot encoded with first-appearance
category order, the first category serving as the reference level.
Indicator columns are named "col: level (Ref: ref)".  The resulting
feature schema is stored in the fit artifact so new data is encoded into
exactly the training feature space.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import DataError

__all__ = [
    "read_csv_columns",
    "build_features",
    "encode_features",
    "parse_response",
    "atomic_write_text",
    "write_csv",
    "write_json",
    "fmt",
]


def fmt(value) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def read_csv_columns(path) -> dict:
    """CSV as {column: list of raw strings}; requires a header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            cols = {name: [] for name in header}
            if len(cols) != len(header):
                raise DataError(f"{path}: duplicate column names in header")
            for i, row in enumerate(reader):
                if len(row) != len(header):
                    raise DataError(
                        f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}"
                    )
                for name, val in zip(header, row):
                    cols[name].append(val)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return cols


def _try_float(values: list):
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError:
            return None
    return out


def parse_response(cols: dict, name: str, path="data") -> np.ndarray:
    if name not in cols:
        raise DataError(f"{path}: missing response column {name!r}")
    vals = cols[name]
    out = np.empty(len(vals))
    for i, v in enumerate(vals):
        try:
            out[i] = float(v)
        except ValueError:
            raise DataError(
                f"{path}: non-numeric response {v!r} at row {i + 1}, column {name!r}"
            ) from None
        if not np.isfinite(out[i]):
            raise DataError(
                f"{path}: non-finite response at row {i + 1}, column {name!r}"
            )
    return out


def build_features(cols: dict, covariates: list, standardize=()) -> list:
    """Feature schema from training data (first-appearance category order)."""
    standardize = set(standardize)
    features = []
    for name in covariates:
        if name not in cols:
            raise DataError(f"missing covariate column {name!r}")
        numeric = _try_float(cols[name])
        if numeric is not None:
            feat = {"kind": "numeric", "name": name, "source": name,
                    "mean": None, "sd": None}
            if name in standardize:
                sd = float(np.std(numeric))
                feat["mean"] = float(np.mean(numeric))
                feat["sd"] = sd if sd > 1e-12 else 1.0
            features.append(feat)
        else:
            levels = []
            for v in cols[name]:
                if v not in levels:
                    levels.append(v)
            if len(levels) < 2:
                raise DataError(
                    f"categorical column {name!r} has a single level {levels!r}"
                )
            ref = levels[0]
            for level in levels[1:]:
                features.append({
                    "kind": "indicator",
                    "name": f"{name}: {level} (Ref: {ref})",
                    "source": name,
                    "level": level,
                    "ref": ref,
                })
    unknown = standardize - {f["source"] for f in features if f["kind"] == "numeric"}
    if unknown:
        raise DataError(f"--standardize names non-numeric or missing columns: {sorted(unknown)}")
    return features


def encode_features(cols: dict, features: list, path="data") -> np.ndarray:
    """Encode raw columns into the training feature space.

    Unseen categories encode as all-zero indicators (reference behavior).
    """
    n = len(next(iter(cols.values()))) if cols else 0
    X = np.empty((n, len(features)))
    for j, feat in enumerate(features):
        src = feat["source"]
        if src not in cols:
            raise DataError(f"{path}: missing covariate column {src!r}")
        if feat["kind"] == "numeric":
            vals = _try_float(cols[src])
            if vals is None:
                bad = next(i for i, v in enumerate(cols[src])
                           if _try_float([v]) is None)
                raise DataError(
                    f"{path}: non-numeric value at row {bad + 1}, column {src!r}"
                )
            if not np.all(np.isfinite(vals)):
                bad = int(np.flatnonzero(~np.isfinite(vals))[0])
                raise DataError(
                    f"{path}: non-finite value at row {bad + 1}, column {src!r}"
                )
            if feat["mean"] is not None:
                vals = (vals - feat["mean"]) / feat["sd"]
            X[:, j] = vals
        else:
            X[:, j] = [1.0 if v == feat["level"] else 0.0 for v in cols[src]]
    return X


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")
