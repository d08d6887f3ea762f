"""Dense linear-algebra helpers: norms, matrix norms, SPD factorization, CSV I/O.

Matrices and vectors are plain float64 numpy arrays. Everything here is a
pure function; factorizations are immutable once built.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, NumericalError

__all__ = [
    "as_matrix",
    "as_vector",
    "matvec",
    "norm",
    "matrix_max_abs",
    "matrix_max_col_l1",
    "SpdFactorization",
    "spd_factorize",
    "spd_solve",
    "write_csv",
    "read_csv",
]


def as_matrix(A, name="matrix"):
    """Return ``A`` as a finite, nonempty 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {A.shape}")
    if A.size == 0:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return A


def as_vector(x, name="vector"):
    """Return ``x`` as a finite, nonempty 1-D float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError(f"{name} must be 1-D, got shape {x.shape}")
    if x.size == 0:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return x


def matvec(A, x):
    A = as_matrix(A, "A")
    x = as_vector(x, "x")
    if A.shape[1] != x.size:
        raise InvalidArgumentError(
            f"dimension mismatch: A is {A.shape[0]}x{A.shape[1]}, x has length {x.size}"
        )
    return A @ x


def norm(x, kind="l2"):
    """Vector norm; ``kind`` is one of ``"l1"``, ``"l2"``, ``"linf"``."""
    x = as_vector(x, "x")
    if kind == "l1":
        return float(np.sum(np.abs(x)))
    if kind == "l2":
        # scale first so tiny or huge entries neither underflow nor overflow
        top = float(np.max(np.abs(x)))
        if top == 0.0 or not np.isfinite(top):
            return top
        s = x / top
        return top * float(np.sqrt(np.dot(s, s)))
    if kind == "linf":
        return float(np.max(np.abs(x)))
    raise InvalidArgumentError(f"unknown norm kind {kind!r}")


def matrix_max_abs(A):
    """Entrywise max norm, max_ij |A_ij|."""
    return float(np.max(np.abs(as_matrix(A, "A"))))


def matrix_max_col_l1(A):
    """Maximum absolute column sum, max_j sum_i |A_ij|."""
    return float(np.max(np.sum(np.abs(as_matrix(A, "A")), axis=0)))


@dataclass(frozen=True)
class SpdFactorization:
    """Lower Cholesky factor ``L`` with ``M = L @ L.T``."""

    lower: np.ndarray

    @property
    def dimension(self):
        return self.lower.shape[0]

    def solve(self, rhs):
        return spd_solve(self, rhs)

    def inverse(self):
        """Explicit inverse; only sensible for small, well-conditioned matrices."""
        return spd_solve(self, np.eye(self.dimension))


def spd_factorize(M, sym_tol=1e-12):
    """Cholesky-factorize a symmetric positive definite matrix.

    Right-looking column algorithm. Raises :class:`NumericalError` carrying the
    pivot index at the first nonpositive pivot.
    """
    M = as_matrix(M, "M")
    n = M.shape[0]
    if M.shape[1] != n:
        raise InvalidArgumentError(f"matrix must be square, got {M.shape}")
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > sym_tol * scale:
        raise InvalidArgumentError("matrix is not symmetric")

    L = np.tril(M).copy()
    for j in range(n):
        pivot = L[j, j]
        if not pivot > 0.0:
            raise NumericalError(f"nonpositive pivot {pivot!r} at index {j}", index=j)
        d = np.sqrt(pivot)
        L[j, j] = d
        col = L[j + 1 :, j]
        col /= d
        # trailing update restricted to the lower triangle
        L[j + 1 :, j + 1 :] -= np.tril(np.outer(col, col))
    return SpdFactorization(lower=L)


def spd_solve(factor, rhs):
    """Solve ``M x = rhs`` given ``factor = spd_factorize(M)``.

    ``rhs`` may be a vector or a matrix of right-hand sides.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != factor.dimension:
        raise InvalidArgumentError(
            f"rhs has leading dimension {rhs.shape[0]}, expected {factor.dimension}"
        )
    w = solve_triangular(factor.lower, rhs, lower=True, check_finite=False)
    return solve_triangular(factor.lower, w, lower=True, trans="T", check_finite=False)


def write_csv(path, data):
    """Write a matrix (or a vector, as one column) in ``rows,cols`` CSV form.

    The file is written to a temporary sibling and renamed into place.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidArgumentError("only vectors and matrices can be written")
    lines = [f"{arr.shape[0]},{arr.shape[1]}"]
    lines.extend(",".join(repr(float(v)) for v in row) for row in arr)
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path, vector=False):
    """Read a file written by :func:`write_csv`.

    With ``vector=True`` the result must have a single column and is returned
    1-D.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            rows, cols = (int(t) for t in header.split(","))
        except ValueError:
            raise InvalidArgumentError(f"{path}: bad header {header!r}") from None
        body = [line for line in fh.read().splitlines() if line.strip()]
    if len(body) != rows:
        raise InvalidArgumentError(f"{path}: expected {rows} rows, found {len(body)}")
    arr = np.empty((rows, cols))
    for i, line in enumerate(body):
        vals = line.split(",")
        if len(vals) != cols:
            raise InvalidArgumentError(f"{path}: row {i} has {len(vals)} columns, expected {cols}")
        arr[i] = [float(v) for v in vals]
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{path}: non-finite entries")
    if vector:
        if cols != 1:
            raise InvalidArgumentError(f"{path}: expected a single column, found {cols}")
        return arr[:, 0]
    return arr


def _atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
