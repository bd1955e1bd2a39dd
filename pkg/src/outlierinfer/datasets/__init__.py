"""Bundled classical outlier-analysis datasets.

stackloss: Brownlee's industrial plant data, 21 observations, three
covariates.  hills: the 1984 Scottish hill races, 35 races with distance
(miles) and climb (feet) explaining record time (hours; the source
records minutes, converted on file generation).
"""

from __future__ import annotations

import csv
from importlib import resources

from ..linalg import Dataset, validate_dataset


def fixture_path(name: str):
    """Filesystem path of a bundled CSV ('stackloss' or 'hills')."""
    return resources.files(__package__) / f"{name}.csv"


def _read_csv(name: str) -> dict:
    with fixture_path(name).open(newline="") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
    return {k: [row[k] for row in rows] for k in reader.fieldnames}


def load_stackloss() -> Dataset:
    cols = _read_csv("stackloss")
    return validate_dataset(cols, response="stack.loss", intercept=True)


def load_hills() -> Dataset:
    cols = _read_csv("hills")
    return validate_dataset(cols, response="time", intercept=True)
