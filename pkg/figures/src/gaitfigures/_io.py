"""CSV loading helpers shared by the figure scripts."""

import csv
from pathlib import Path


class FigureInputError(ValueError):
    pass


def read_csv_columns(path, required):
    """Load a CSV with a header into {column: list of strings}; raises a
    clean error on missing files, empty files or absent columns."""
    path = Path(path)
    if not path.exists():
        raise FigureInputError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FigureInputError(f"input file is empty: {path}")
    header = rows[0]
    missing = [c for c in required if c not in header]
    if missing:
        raise FigureInputError(f"{path} lacks required column(s) {missing}; has {header}")
    if len(rows) == 1:
        raise FigureInputError(f"input file has a header but no data rows: {path}")
    idx = {c: header.index(c) for c in header}
    return {c: [r[idx[c]] for r in rows[1:]] for c in header}


def floats(values):
    return [float(v) for v in values]
