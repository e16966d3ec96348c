"""Reading the long-format results CSV."""

import csv
import io

from ._core import RESULTS_HEADER

_INT_FIELDS = ("n", "k", "seed", "train_samples", "adapt_samples", "step")


def parse_results(text):
    """Rows of a results CSV as dicts with typed fields."""
    reader = csv.DictReader(io.StringIO(text))
    if ",".join(reader.fieldnames or []) != RESULTS_HEADER:
        raise ValueError("unexpected results header")
    rows = []
    for row in reader:
        for key in _INT_FIELDS:
            row[key] = int(row[key])
        row["value"] = float(row["value"])
        rows.append(row)
    return rows
