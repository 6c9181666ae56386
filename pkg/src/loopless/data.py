"""Sparse datasets: LIBSVM text parsing/writing and synthetic instances.

A dataset is n sparse feature rows with labels in {-1, +1}.  File indices are
1-based (LIBSVM convention) and are shifted to 0-based internally.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np


class ParseError(ValueError):
    """Malformed LIBSVM input; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class SparseRow:
    """One sample: strictly increasing 0-based indices with nonzero values."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-d and equally long")
        if self.indices.size:
            if (np.diff(self.indices) <= 0).any():
                raise ValueError("indices must be strictly increasing")
            if self.indices[0] < 0:
                raise ValueError("indices must be nonnegative")
        if (self.values == 0.0).any():
            raise ValueError("stored values must be nonzero")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseRow):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.values, other.values
        )

    def to_dense(self, d: int) -> np.ndarray:
        out = np.zeros(d)
        out[self.indices] = self.values
        return out


@dataclass
class Dataset:
    """Immutable-by-convention bundle of rows, labels, and dimensions."""

    rows: list[SparseRow]
    labels: np.ndarray
    d: int
    n: int = field(init=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.n = len(self.rows)
        if self.n < 1:
            raise ValueError("dataset needs at least one row")
        if self.labels.shape != (self.n,):
            raise ValueError("labels and rows must have equal length")
        if not np.isin(self.labels, (-1.0, 1.0)).all():
            raise ValueError("labels must be -1 or +1")
        max_index = max((int(r.indices[-1]) for r in self.rows if r.nnz), default=-1)
        if self.d < max_index + 1:
            raise ValueError(f"d={self.d} smaller than max feature index {max_index}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.d == other.d
            and np.array_equal(self.labels, other.labels)
            and self.rows == other.rows
        )


def _as_lines(source: str | TextIO | Iterable[str]) -> Iterable[str]:
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def _remap_labels(raw: list[float]) -> np.ndarray:
    distinct = sorted(set(raw))
    if all(v in (-1.0, 1.0) for v in distinct):
        return np.asarray(raw)
    if len(distinct) == 2:
        lo, hi = distinct
        return np.asarray([-1.0 if v == lo else 1.0 for v in raw])
    raise ParseError(
        f"cannot map labels {distinct} onto {{-1,+1}}: need two distinct values "
        "(or values already in {-1,+1})"
    )


def parse_libsvm(source: str | TextIO | Iterable[str], dim: int | None = None) -> Dataset:
    """Parse LIBSVM text ("label idx:val idx:val ...", 1-based indices).

    Blank lines and ``#`` comments (whole-line or trailing) are skipped.
    Labels are remapped onto {-1,+1}: a two-class raw label set maps its
    smaller value to -1; raw labels already in {-1,+1} are kept as-is.
    Explicit zero values are dropped.  ``dim`` pads the feature dimension
    beyond the largest index seen (it must not truncate).

    Raises ParseError (with the offending line number) on malformed tokens,
    non-increasing indices within a line, unmappable labels, or empty input.
    """
    rows: list[SparseRow] = []
    raw_labels: list[float] = []
    max_index = -1

    for lineno, line in enumerate(_as_lines(source), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None

        idx: list[int] = []
        val: list[float] = []
        prev = 0
        for tok in tokens[1:]:
            part = tok.split(":")
            if len(part) != 2:
                raise ParseError(f"bad feature token {tok!r}", lineno)
            try:
                j = int(part[0])
                v = float(part[1])
            except ValueError:
                raise ParseError(f"bad feature token {tok!r}", lineno) from None
            if j < 1:
                raise ParseError(f"feature index {j} not 1-based", lineno)
            if j <= prev:
                raise ParseError(
                    f"feature index {j} not increasing (previous {prev})", lineno
                )
            prev = j
            if v == 0.0:
                continue
            idx.append(j - 1)
            val.append(v)
        if idx:
            max_index = max(max_index, idx[-1])
        rows.append(SparseRow(np.array(idx, dtype=np.int64), np.array(val)))
        raw_labels.append(label)

    if not rows:
        raise ParseError("empty dataset")
    labels = _remap_labels(raw_labels)

    d = max_index + 1
    if dim is not None:
        if dim < d:
            raise ParseError(f"dim override {dim} smaller than max index + 1 = {d}")
        d = dim
    return Dataset(rows, labels, d)


def load_libsvm(path, dim: int | None = None) -> Dataset:
    with open(path, "r", encoding="utf-8", newline=None) as fh:
        return parse_libsvm(fh, dim=dim)


def _format_value(v: float) -> str:
    # repr is the shortest exact round-trip form; integral values drop ".0"
    # so already-normalized files survive a round trip byte-identically.
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def write_libsvm(dataset: Dataset) -> str:
    """Serialize to LIBSVM text (1-based indices, labels as +1/-1).

    parse_libsvm(write_libsvm(ds)) == ds whenever ds.d is the tight dimension;
    a padded dimension must be re-applied via parse_libsvm(..., dim=ds.d).
    """
    lines = []
    for row, label in zip(dataset.rows, dataset.labels):
        parts = ["+1" if label > 0 else "-1"]
        parts.extend(
            f"{j + 1}:{_format_value(v)}" for j, v in zip(row.indices, row.values)
        )
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def save_libsvm(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_libsvm(dataset))


def normalize_rows(dataset: Dataset) -> Dataset:
    """Scale every nonempty row to unit Euclidean norm (new dataset)."""
    rows = []
    for row in dataset.rows:
        if row.nnz:
            norm = float(np.linalg.norm(row.values))
            rows.append(SparseRow(row.indices.copy(), row.values / norm))
        else:
            rows.append(SparseRow(row.indices.copy(), row.values.copy()))
    return Dataset(rows, dataset.labels.copy(), dataset.d)


def _dense_to_rows(A: np.ndarray) -> list[SparseRow]:
    rows = []
    for i in range(A.shape[0]):
        nz = np.nonzero(A[i])[0]
        rows.append(SparseRow(nz.astype(np.int64), A[i, nz].copy()))
    return rows


def synthesize_quadratic(
    n: int, d: int, condition_number: float, seed: int, mu: float = 1.0
) -> tuple[Dataset, np.ndarray]:
    """Deterministic ridge instance with a prescribed condition number.

    Returns (dataset, minimizer) where the minimizer solves the ridge problem
    f(x) = (1/2n)||Ax - b||^2 + (mu/2)||x||^2 exactly (d x d linear solve).

    Every row has squared norm (condition_number - 1) * mu, so the ridge
    oracle's L/mu equals condition_number exactly.  Half of each row's mass
    lies along one shared direction (keeping the top Hessian eigenvalue at
    least half the per-row bound), the rest is spread over directions whose
    weights decay log-uniformly down to the mu scale (so the minimizer
    excites genuinely slow modes), and one direction stays empty (pinning
    the smallest Hessian eigenvalue to mu).  The measured spectral condition
    therefore lands in [(condition_number + 1)/2, condition_number] for
    d >= 2.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if condition_number < 1:
        raise ValueError(f"condition_number must be >= 1, got {condition_number}")
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")

    rng = np.random.default_rng(seed)
    rho_sq = (condition_number - 1.0) * mu
    rho = np.sqrt(rho_sq)

    if d == 1 or rho == 0.0:
        A = np.full((n, d), 0.0)
        A[:, 0] = rho
    elif d == 2:
        V, _ = np.linalg.qr(rng.standard_normal((d, d)))
        signs = rng.choice([-1.0, 1.0], size=n)
        A = np.outer(signs * rho, V[:, 0])
    else:
        V, _ = np.linalg.qr(rng.standard_normal((d, d)))
        # per-direction weights for v_2 .. v_{d-1}, log-spaced from the row
        # scale down to the regularizer scale; v_d stays empty
        scales = np.sqrt(
            np.geomspace(rho_sq / 2.0, min(mu, rho_sq / 2.0), d - 2)
        )
        G = rng.standard_normal((n, d - 2)) * scales
        G /= np.linalg.norm(G, axis=1, keepdims=True)
        A = rho * (
            np.sqrt(0.5) * np.tile(V[:, 0], (n, 1))
            + np.sqrt(0.5) * G @ V[:, 1 : d - 1].T
        )

    b = rng.choice([-1.0, 1.0], size=n)
    H = A.T @ A / n + mu * np.eye(d)
    x_star = np.linalg.solve(H, A.T @ b / n)

    dataset = Dataset(_dense_to_rows(A), b, d)
    return dataset, x_star
