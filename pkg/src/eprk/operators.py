"""Matrix operators with lazily cached direct factorizations.

The schemes only ever need three capabilities from the symmetric
building blocks: apply, solve (against a cached factorization), and a
definiteness check. One wrapper covers dense ndarray and scipy.sparse
storage behind that interface.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["NotSPDError", "MatrixOperator", "as_dense", "is_sparse"]


class NotSPDError(RuntimeError):
    """A matrix expected to be symmetric positive definite is not."""


def is_sparse(mat):
    return sp.issparse(mat)


def as_dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


def _check_symmetric(mat, name, rel_tol=1e-12):
    if sp.issparse(mat):
        diff = (mat - mat.T).tocoo()
        asym = np.max(np.abs(diff.data)) if diff.nnz else 0.0
        scale = np.max(np.abs(mat.data)) if mat.nnz else 1.0
    else:
        asym = np.max(np.abs(mat - mat.T)) if mat.size else 0.0
        scale = np.max(np.abs(mat)) if mat.size else 1.0
    if asym > rel_tol * max(scale, 1e-300):
        raise NotSPDError(f"{name} is not symmetric (relative asymmetry {asym/scale:.2e})")


class MatrixOperator:
    """Symmetric positive definite matrix with a cached factorization.

    Dense matrices are factorized by Cholesky (which certifies
    definiteness); sparse matrices use SuperLU, with definiteness
    screened by symmetry plus random quadratic forms. The factorization
    is created once under a lock; afterwards concurrent read-only use,
    including solves, is safe.
    """

    def __init__(self, mat, name="operator"):
        if sp.issparse(mat):
            mat = mat.tocsr()
        else:
            mat = np.asarray(mat, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square, got shape {mat.shape}")
        _check_symmetric(mat, name)
        self.mat = mat
        self.name = name
        self._factor = None
        self._lock = threading.Lock()
        self.is_spd_checked = False

    @property
    def shape(self):
        return self.mat.shape

    @property
    def n(self):
        return self.mat.shape[0]

    def apply(self, x):
        return self.mat @ x

    def _factorize(self):
        if sp.issparse(self.mat):
            rng = np.random.default_rng(0)
            for _ in range(4):
                v = rng.standard_normal(self.n)
                if v @ (self.mat @ v) <= 0.0:
                    raise NotSPDError(f"{self.name} fails a positivity probe")
            try:
                lu = spla.splu(self.mat.tocsc())
            except RuntimeError as exc:
                raise NotSPDError(f"{self.name}: sparse factorization failed: {exc}")
            self._factor = lu.solve
        else:
            try:
                c, low = sla.cho_factor(self.mat)
            except np.linalg.LinAlgError as exc:
                raise NotSPDError(f"{self.name}: Cholesky failed: {exc}")
            self._factor = lambda b: sla.cho_solve((c, low), b)
        self.is_spd_checked = True

    def ensure_factorized(self):
        if self._factor is None:
            with self._lock:
                if self._factor is None:
                    self._factorize()
        return self

    def solve(self, b):
        """Solve against the cached factorization (created on first use)."""
        self.ensure_factorized()
        b = np.asarray(b)
        if b.ndim == 1:
            return self._factor(b)
        # column-wise for stacked right-hand sides
        return np.column_stack([self._factor(b[:, j]) for j in range(b.shape[1])])

    def dense(self):
        return as_dense(self.mat)

    def __repr__(self):
        return f"MatrixOperator({self.name}, n={self.n}, sparse={sp.issparse(self.mat)})"
