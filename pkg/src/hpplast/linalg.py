"""Sparse storage and direct solves (SuperLU via scipy) plus dense checks."""

from __future__ import annotations

import re
import warnings
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, msg, pivot=None):
        self.pivot = pivot
        super().__init__(msg)


def as_csr(M) -> sp.csr_matrix:
    """Canonical CSR form: sorted, duplicate-free column indices."""
    M = sp.csr_matrix(M)
    M.sum_duplicates()
    M.sort_indices()
    return M


def is_symmetric(M, rtol: float = 1e-12) -> bool:
    M = sp.csr_matrix(M)
    if M.shape[0] != M.shape[1]:
        return False
    scale = abs(M).max() if M.nnz else 0.0
    diff = M - M.T
    return (abs(diff).max() if diff.nnz else 0.0) <= rtol * max(scale, np.finfo(float).tiny)


class Factorization:
    """LU factorization with up to two steps of iterative refinement.

    ``symmetric=True`` selects SuperLU's symmetric mode (diagonal pivots,
    ``A + A^T`` ordering), the usual choice for SPD blocks.
    """

    def __init__(self, M, symmetric: bool = False):
        self.M = sp.csc_matrix(M)
        n, m = self.M.shape
        if n != m:
            raise ValueError("matrix must be square")
        opts = {}
        if symmetric:
            opts = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
        try:
            self._lu = spla.splu(self.M, **opts)
        except RuntimeError as err:
            pivot = None
            hit = re.search(r"(\d+)", str(err))
            if hit:
                pivot = int(hit.group(1))
            raise SingularMatrixError(f"factorization failed: {err}", pivot) from None
        self.last_residual = 0.0
        self.residual_floor = 0.0

    def solve(self, rhs, trans: str = "N", rtol: float = 1e-12) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        A = self.M if trans == "N" else self.M.T
        x = self._lu.solve(rhs, trans=trans)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("solution is not finite (numerically singular matrix)")
        norm = np.linalg.norm(rhs)
        if norm == 0:
            return x
        res = np.linalg.norm(A @ x - rhs) / norm
        for _ in range(2):
            if res <= rtol:
                break
            x = x + self._lu.solve(rhs - A @ x, trans=trans)
            res = np.linalg.norm(A @ x - rhs) / norm
        self.last_residual = res
        # below this level the residual itself cannot be evaluated reliably
        self.residual_floor = 10 * np.finfo(float).eps * np.linalg.norm(abs(A) @ np.abs(x)) / norm
        if res > max(rtol, self.residual_floor):
            warnings.warn(f"direct solve relative residual {res:.2e} exceeds {rtol:.0e}", RuntimeWarning, stacklevel=2)
        return x


def factor_solve(M, rhs, symmetric: bool = False) -> np.ndarray:
    return Factorization(M, symmetric=symmetric).solve(rhs)


def smallest_eigenvalue_dense(M) -> float:
    """Smallest eigenvalue of a symmetric matrix of dimension at most 500."""
    A = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if A.shape[0] > 500:
        raise ValueError("dense eigenvalue check is limited to 500 unknowns")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(np.abs(A).max(), 1e-300)):
        raise ValueError("matrix is not symmetric")
    return float(scipy.linalg.eigvalsh(A, subset_by_index=[0, 0])[0])


def dump_coo(M, path) -> None:
    """Write ``row col value`` lines (0-based, 17 significant digits)."""
    C = sp.coo_matrix(M)
    order = np.lexsort((C.col, C.row))
    with open(Path(path), "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def load_coo(path) -> sp.csr_matrix:
    lines = Path(path).read_text().splitlines()
    n, m, _ = (int(v) for v in lines[0].lstrip("% ").split())
    data = np.loadtxt(lines[1:], ndmin=2) if len(lines) > 1 else np.zeros((0, 3))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))
