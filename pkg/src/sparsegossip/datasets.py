"""Dataset ingestion: LibSVM and CSV parsing, standardization, splitting.

Parsers are strict: malformed input is reported with its line (and column)
instead of being skipped, so a bad file never silently changes an experiment.
"""

from __future__ import annotations

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset input, with location information in the message."""


def parse_libsvm(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse sparse `label idx:val ...` text into a dense feature matrix.

    Indices are 1-based per the format; the feature dimension is the largest
    index seen.
    """
    rows: list[dict[int, float]] = []
    targets: list[float] = []
    width = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                targets.append(float(parts[0]))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: bad label {parts[0]!r}") from None
            entries: dict[int, float] = {}
            for tok in parts[1:]:
                if ":" not in tok:
                    raise DatasetError(f"{path}:{lineno}: expected idx:val, got {tok!r}")
                idx_s, val_s = tok.split(":", 1)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: bad entry {tok!r}") from None
                if idx < 1:
                    raise DatasetError(f"{path}:{lineno}: feature index {idx} < 1")
                entries[idx - 1] = val
                width = max(width, idx)
            rows.append(entries)
    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    features = np.zeros((len(rows), width))
    for r, entries in enumerate(rows):
        for c, v in entries.items():
            features[r, c] = v
    return features, np.array(targets)


def parse_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse numeric CSV, last column the target. Header row is optional."""
    data: list[list[float]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if lineno == 1 and any(not _is_number(c) for c in cells):
                continue  # header
            row = []
            for col, cell in enumerate(cells, start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: column {col}: non-numeric cell {cell.strip()!r}"
                    ) from None
            data.append(row)
    if not data:
        raise DatasetError(f"{path}: empty dataset")
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise DatasetError(f"{path}: ragged rows (widths {sorted(widths)})")
    if widths.pop() < 2:
        raise DatasetError(f"{path}: need at least one feature column plus the target")
    arr = np.array(data)
    return arr[:, :-1], arr[:, -1]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def write_csv(path, features: np.ndarray, targets: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row, y in zip(features, targets):
            fh.write(",".join(repr(float(v)) for v in row) + "," + repr(float(y)) + "\n")


def standardize(features: np.ndarray, targets: np.ndarray):
    """Zero-mean unit-variance columns, centered targets.

    Constant columns are left at zero rather than divided by zero. Returns the
    transformed data plus the statistics used, for provenance.
    """
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    target_mean = float(targets.mean())
    stats = {"feature_mean": mean, "feature_std": std, "target_mean": target_mean}
    return (features - mean) / safe, targets - target_mean, stats


def split_tail(features: np.ndarray, targets: np.ndarray, test):
    """Hold out the last `test` rows (or fraction) as the test set."""
    n = len(features)
    count = int(round(test * n)) if isinstance(test, float) and 0 < test < 1 else int(test)
    if count < 0 or count >= n:
        raise DatasetError(f"test split {test!r} does not leave a nonempty training set of {n} rows")
    cut = n - count
    return (features[:cut], targets[:cut]), (features[cut:], targets[cut:])


def synthetic_regression(
    rows: int, dim: int, seed: int, noise_std: float = 0.5, weight_scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Dense regression surrogate with a planted linear model plus noise."""
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((rows, dim))
    weights = weight_scale * rng.standard_normal(dim)
    targets = features @ weights + noise_std * rng.standard_normal(rows)
    return features, targets
