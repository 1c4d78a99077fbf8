"""Latent semantic analysis of class-vs-token count statistics.

A count matrix (classes as rows, vocabulary tokens as columns; note some
references draw the transpose) is decomposed by SVD after optional row
centering and normalization.  The top singular modes span a semantic space:
singular-value-scaled left vectors place the classes in it, right singular
vectors place the tokens.  Low-rank structure here predicts the geometry a
trained network's readouts will adopt.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ParseError


@dataclass
class CountMatrix:
    counts: np.ndarray       # (num_classes, num_tokens) nonnegative integers
    class_names: tuple
    token_names: tuple

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2:
            raise ParameterError("counts must be 2-d (classes x tokens)")
        if self.counts.shape != (len(self.class_names), len(self.token_names)):
            raise ParameterError(
                f"counts shape {self.counts.shape} does not match "
                f"{len(self.class_names)} classes x {len(self.token_names)} tokens"
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise ParameterError("duplicate class names")
        if len(set(self.token_names)) != len(self.token_names):
            raise ParameterError("duplicate token names")
        if np.any(self.counts < 0):
            raise ParameterError("counts must be nonnegative")


def build_count_matrix(dataset) -> CountMatrix:
    """Token-occurrence counts per class for a synthetic dataset.

    Multi-label phrases are grouped by their full label combination, one row
    per combination observed (named like ``label_1+label_2`` or ``none``).
    """
    if len(dataset) == 0:
        raise ParameterError("build_count_matrix needs a nonempty dataset")
    vocab = dataset.vocabulary
    if dataset.multilabel:
        combos = sorted({p.label for p in dataset.phrases})
        row_of = {c: i for i, c in enumerate(combos)}
        names = tuple(
            "+".join(dataset.class_names[i] for i, on in enumerate(c) if on) or "none"
            for c in combos
        )
        counts = np.zeros((len(combos), vocab.size), dtype=np.int64)
        for p in dataset.phrases:
            r = row_of[p.label]
            for t in p.token_indices:
                counts[r, t] += 1
    else:
        names = dataset.class_names
        counts = np.zeros((dataset.num_classes, vocab.size), dtype=np.int64)
        for p in dataset.phrases:
            for t in p.token_indices:
                counts[p.label, t] += 1
    return CountMatrix(counts, tuple(names), tuple(vocab.tokens))


@dataclass
class LsaReport:
    singular_values: np.ndarray
    variance_fractions: np.ndarray   # s_a^2 / sum s^2
    class_projections: np.ndarray    # (num_classes, num_modes), scaled by s
    token_projections: np.ndarray    # (num_tokens, num_modes), unit right vectors
    centered: bool
    normalize: str

    def top_k_fraction(self, k: int) -> float:
        return float(self.variance_fractions[:k].sum())


def lsa_analyze(matrix: CountMatrix, center: bool = True, normalize: str = "none") -> LsaReport:
    """SVD of the (optionally centered/normalized) count matrix.

    ``normalize='per_class_total'`` converts each row to rates before
    centering, removing class-size imbalance.  Centering subtracts the
    per-token mean across classes, so variance fractions behave like PCA
    variance explained.
    """
    if normalize not in ("none", "per_class_total"):
        raise ParameterError(f"unknown normalize mode {normalize!r}")
    m = matrix.counts.astype(float)
    if not np.any(m):
        raise ParameterError("count matrix is all zero")
    if normalize == "per_class_total":
        totals = m.sum(axis=1, keepdims=True)
        if np.any(totals == 0.0):
            raise ParameterError("per_class_total normalization with an empty class row")
        m = m / totals
    if center:
        m = m - m.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    total = float(np.sum(s**2))
    fractions = s**2 / total if total > 0.0 else np.zeros_like(s)
    return LsaReport(
        singular_values=s,
        variance_fractions=fractions,
        class_projections=u * s[None, :],
        token_projections=vt.T,
        centered=center,
        normalize=normalize,
    )


def export_count_csv(matrix: CountMatrix, path):
    """Write the documented CSV format: header of token names, one class row
    per line with integer cells; the top-left corner cell is blank."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(matrix.token_names))
        for name, row in zip(matrix.class_names, matrix.counts):
            writer.writerow([name] + [int(v) for v in row])


def ingest_count_csv(path) -> CountMatrix:
    """Parse the count-matrix CSV; errors carry the offending row/column."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2:
        raise ParseError(f"{path}: header must contain at least one token column")
    token_names = tuple(header[1:])
    seen = set()
    for i, name in enumerate(token_names):
        if name in seen:
            raise ParseError(f"{path}: duplicate token column {name!r} (column {i + 2})")
        seen.add(name)
    class_names = []
    data = []
    seen_classes = set()
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(
                f"{path}: row {r} has {len(row)} cells, expected {len(header)}"
            )
        name = row[0]
        if name in seen_classes:
            raise ParseError(f"{path}: duplicate class row {name!r} (row {r})")
        seen_classes.add(name)
        class_names.append(name)
        values = []
        for c, cell in enumerate(row[1:], start=2):
            try:
                v = int(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-integer cell {cell!r} at row {r}, column {c}"
                ) from None
            if v < 0:
                raise ParseError(f"{path}: negative count at row {r}, column {c}")
            values.append(v)
        data.append(values)
    if not data:
        raise ParseError(f"{path}: no class rows")
    return CountMatrix(np.array(data, dtype=np.int64), tuple(class_names), token_names)
