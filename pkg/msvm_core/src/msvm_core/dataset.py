"""Datasets: dense CSV or sparse svmlight-style text files."""
import hashlib
import logging
import re
from pathlib import Path

import numpy as np


LOGGER = logging.getLogger(__name__)

FORMATS = ("csv", "sparse")

# decimal number with '.' as the decimal point and an optional exponent
NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
INDEX = re.compile(r"^[1-9]\d*$")


class DatasetFormatError(ValueError):
    """Malformed dataset file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def content_digest(points, labels, category_map):
    """SHA-256 of the points, index labels and category names."""
    points = np.ascontiguousarray(points, dtype="<f8")
    labels = np.ascontiguousarray(labels, dtype="<i8")
    h = hashlib.sha256()
    h.update(np.array(points.shape, dtype="<i8").tobytes())
    h.update(points.tobytes())
    h.update(labels.tobytes())
    h.update("\n".join(category_map).encode("utf-8"))
    return h.hexdigest()


class Dataset:
    """Dense points with index labels in [0, Q).

    `category_map[k]` is the external label of category k; categories are
    numbered in order of first appearance.
    """

    def __init__(self, points, labels, category_map):
        points = np.array(points, dtype=float)
        labels = np.array(labels, dtype=int)
        if points.ndim != 2 or points.shape[1] == 0:
            raise DatasetFormatError("Points must form a nonempty m x n array.")
        if labels.shape != (points.shape[0],):
            raise DatasetFormatError(
                f"{points.shape[0]} points but {labels.shape[0]} labels."
            )
        category_map = tuple(str(c) for c in category_map)
        if labels.size and (labels.min() < 0 or labels.max() >= len(category_map)):
            raise DatasetFormatError("Label outside of the category map.")
        points.flags.writeable = False
        labels.flags.writeable = False

        self.points = points
        self.labels = labels
        self.category_map = category_map
        self.source_hash = content_digest(points, labels, category_map)

    @classmethod
    def from_labels(cls, points, external_labels):
        """Map external labels to indices in order of first appearance."""
        category_map = []
        index = {}
        labels = []
        for y in external_labels:
            y = str(y)
            if y not in index:
                index[y] = len(category_map)
                category_map.append(y)
            labels.append(index[y])
        return cls(points, labels, category_map)

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def n_features(self):
        return self.points.shape[1]

    @property
    def Q(self):
        return len(self.category_map)

    def external_labels(self):
        return [self.category_map[y] for y in self.labels]

    def __len__(self):
        return self.m


def infer_format(path):
    """csv for a .csv suffix, sparse otherwise."""
    return "csv" if Path(path).suffix.lower() == ".csv" else "sparse"


def _parse_value(token, line_no):
    token = token.strip()
    if not NUMBER.match(token):
        raise DatasetFormatError(f"invalid number {token!r}", line_no)
    return float(token)


def _parse_csv(lines):
    labels = []
    rows = []
    n = None
    for line_no, line in lines:
        tokens = line.split(",")
        label = tokens[0].strip()
        if not label:
            raise DatasetFormatError("missing label", line_no)
        values = [_parse_value(t, line_no) for t in tokens[1:]]
        if not values:
            raise DatasetFormatError("no features", line_no)
        if n is None:
            n = len(values)
        elif len(values) != n:
            raise DatasetFormatError(f"{len(values)} features, expected {n}", line_no)
        labels.append(label)
        rows.append(values)
    return np.array(rows, dtype=float), labels


def _parse_sparse(lines, n_features):
    labels = []
    entries = []
    max_index = 0
    for line_no, line in lines:
        tokens = line.split()
        labels.append(tokens[0])
        row = {}
        for token in tokens[1:]:
            index, sep, value = token.partition(":")
            if not sep:
                raise DatasetFormatError(f"expected index:value, got {token!r}", line_no)
            if index == "qid":
                continue
            if not INDEX.match(index):
                raise DatasetFormatError(f"invalid feature index {index!r}", line_no)
            j = int(index)
            if j in row:
                raise DatasetFormatError(f"duplicate feature index {j}", line_no)
            if n_features is not None and j > n_features:
                raise DatasetFormatError(
                    f"feature index {j} exceeds dimension {n_features}", line_no
                )
            row[j] = _parse_value(value, line_no)
            max_index = max(max_index, j)
        entries.append(row)

    n = n_features if n_features is not None else max_index
    if n == 0:
        raise DatasetFormatError("no features in file")
    points = np.zeros((len(entries), n))
    for i, row in enumerate(entries):
        for j, v in row.items():
            points[i, j - 1] = v
    return points, labels


def parse_dataset(path, format=None, n_features=None):
    """Read a dataset file.

    CSV lines are `label,x_1,...,x_n`. Sparse lines are
    `label idx:val idx:val ...` with 1-based indices; text after '#' is a
    comment and `qid` entries are ignored. Blank lines are skipped.
    """
    if format is None:
        format = infer_format(path)
    if format not in FORMATS:
        raise DatasetFormatError(f"Unknown dataset format {format}.")

    with open(path) as f:
        text = f.read()

    lines = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if format == "sparse":
            line = line.split("#", 1)[0]
        line = line.strip()
        if line:
            lines.append((line_no, line))
    if not lines:
        raise DatasetFormatError(f"Empty dataset file {path}.")

    if format == "csv":
        points, labels = _parse_csv(lines)
    else:
        points, labels = _parse_sparse(lines, n_features)

    dataset = Dataset.from_labels(points, labels)
    LOGGER.info(
        "Loaded %d points of dimension %d in %d categories from %s.",
        dataset.m,
        dataset.n_features,
        dataset.Q,
        path,
    )
    return dataset


def save_dataset(dataset, path, format=None):
    """Write a dataset so that parse_dataset reads it back unchanged.

    Values are written with repr, which round-trips exactly. Sparse output
    omits zeros but always writes the last coordinate, so the dimension is
    preserved.
    """
    if format is None:
        format = infer_format(path)
    if format not in FORMATS:
        raise DatasetFormatError(f"Unknown dataset format {format}.")

    lines = []
    for label, x in zip(dataset.external_labels(), dataset.points):
        if format == "csv":
            lines.append(",".join([label] + [repr(float(v)) for v in x]))
        else:
            n = x.shape[0]
            pairs = [
                f"{j + 1}:{float(v)!r}" for j, v in enumerate(x) if v != 0 or j == n - 1
            ]
            lines.append(" ".join([label] + pairs))

    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
