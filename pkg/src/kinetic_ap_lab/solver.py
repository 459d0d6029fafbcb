"""Sparse linear algebra engine.

Thin layer over scipy.sparse used by the time steppers: triplet assembly,
normal-equation formation with forced bitwise symmetry, a factor-once SPD
solve with iterative refinement, and a power-iteration condition estimator.

The SPD factorization rides on SuperLU configured with the symmetric-mode
settings (minimum-degree ordering on A^T + A, no partial pivoting). For a
genuinely SPD input the U factor then has positive diagonal; a nonpositive
pivot is how indefiniteness shows up, and it is reported as such.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

REFINE_TOL = 1e-12
MAX_REFINE = 3


class SolverError(RuntimeError):
    pass


class NotSpdError(SolverError):
    pass


class SparseMatrix:
    """CSR matrix plus a symmetry flag, built from triplets.

    Duplicate (row, col) pairs are summed on finalization, so assembly code
    may emit the same slot several times.
    """

    def __init__(self, n_rows: int, n_cols: int):
        self.shape = (n_rows, n_cols)
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._csr: sp.csr_matrix | None = None
        self.symmetric = False

    @classmethod
    def from_csr(cls, csr: sp.csr_matrix, symmetric: bool = False) -> "SparseMatrix":
        out = cls(*csr.shape)
        out._csr = csr.tocsr()
        out.symmetric = symmetric
        return out

    def add_entries(self, rows, cols, vals) -> None:
        if self._csr is not None:
            raise SolverError("matrix already finalized")
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        vals = np.atleast_1d(np.asarray(vals, dtype=float))
        if not (rows.size == cols.size == vals.size):
            raise SolverError("triplet arrays must have equal length")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(vals)

    def finalize(self) -> "SparseMatrix":
        if self._csr is None:
            rows = np.concatenate(self._rows) if self._rows else np.empty(0, np.int64)
            cols = np.concatenate(self._cols) if self._cols else np.empty(0, np.int64)
            vals = np.concatenate(self._vals) if self._vals else np.empty(0)
            coo = sp.coo_matrix((vals, (rows, cols)), shape=self.shape)
            self._csr = coo.tocsr()
            self._csr.sum_duplicates()
            self._rows = self._cols = self._vals = []
        if not np.all(np.isfinite(self._csr.data)):
            raise SolverError("non-finite matrix entry after assembly")
        return self

    @property
    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            self.finalize()
        return self._csr

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    @property
    def nnz(self) -> int:
        return self.csr.nnz


def normal_system(A: SparseMatrix) -> SparseMatrix:
    """A^T A, symmetrized entrywise so the symmetry is bitwise, not just
    up to rounding of the sparse product."""
    n_rows, n_cols = A.shape
    if n_rows < n_cols:
        raise SolverError("normal system needs at least as many rows as columns")
    csr = A.csr
    G = (csr.T @ csr).tocsr()
    G = (0.5 * (G + G.T)).tocsr()
    return SparseMatrix.from_csr(G, symmetric=True)


class SpdFactorization:
    """Factor-once solver for a symmetric positive definite matrix with
    iterative refinement on every solve."""

    def __init__(self, A: SparseMatrix):
        n_rows, n_cols = A.shape
        if n_rows != n_cols:
            raise SolverError("SPD factorization needs a square matrix")
        self.matrix = A
        csc = A.csr.tocsc()
        try:
            self._lu = spla.splu(csc, permc_spec="MMD_AT_PLUS_A",
                                 diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NotSpdError(f"factorization failed: {exc}") from exc
        pivots = self._lu.U.diagonal()
        bad = np.where(pivots <= 0)[0]
        if bad.size:
            raise NotSpdError(
                f"matrix is not positive definite: pivot {bad[0]} is "
                f"{pivots[bad[0]]!r}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        norm_b = np.linalg.norm(b)
        if norm_b == 0.0:
            return np.zeros_like(b)
        A = self.matrix.csr
        for _ in range(MAX_REFINE):
            r = b - A @ x
            if np.linalg.norm(r) <= REFINE_TOL * norm_b:
                return x
            x = x + self._lu.solve(r)
        resid = np.linalg.norm(b - A @ x)
        if resid > 1e-9 * norm_b:
            raise SolverError(
                f"refinement stalled at relative residual {resid / norm_b:.3e}")
        return x


def solve_spd(F: SpdFactorization, b: np.ndarray) -> np.ndarray:
    return F.solve(b)


class LuFactorization:
    """Factor-once solver for a general square matrix (default SuperLU
    pivoting), with the same refinement loop as the SPD path."""

    def __init__(self, A: SparseMatrix):
        n_rows, n_cols = A.shape
        if n_rows != n_cols:
            raise SolverError("LU factorization needs a square matrix")
        self.matrix = A
        try:
            self._lu = spla.splu(A.csr.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        norm_b = np.linalg.norm(b)
        if norm_b == 0.0:
            return np.zeros_like(b)
        A = self.matrix.csr
        for _ in range(MAX_REFINE):
            r = b - A @ x
            if np.linalg.norm(r) <= REFINE_TOL * norm_b:
                return x
            x = x + self._lu.solve(r)
        resid = np.linalg.norm(b - A @ x)
        if resid > 1e-9 * norm_b:
            raise SolverError(
                f"refinement stalled at relative residual {resid / norm_b:.3e}")
        return x


@dataclass(frozen=True)
class ConditionEstimate:
    value: float
    eig_max: float
    eig_min: float
    converged: bool


def condition_estimate(A: SparseMatrix, symmetric: bool = True,
                       max_iter: int = 200, tol: float = 1e-3,
                       seed: int = 7) -> ConditionEstimate:
    """lambda_max / lambda_min by power and inverse-power iteration.

    Meant for symmetric positive definite input, where the Rayleigh
    quotients converge to the extreme eigenvalues; within a factor ~2 is
    all callers rely on. Non-convergence is flagged, and the returned value
    is then a lower bound on the true condition number.
    """
    n_rows, n_cols = A.shape
    if n_rows != n_cols:
        raise SolverError("condition estimate needs a square matrix")
    csr = A.csr
    rng = np.random.default_rng(seed)

    def extreme(apply, n):
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        lam = 0.0
        for _ in range(max_iter):
            y = apply(x)
            ny = np.linalg.norm(y)
            if ny == 0.0:
                return 0.0, True
            y /= ny
            lam_new = float(y @ apply(y)) if symmetric else ny
            if abs(lam_new - lam) <= tol * abs(lam_new):
                return lam_new, True
            lam, x = lam_new, y
        return lam, False

    lam_max, ok_max = extreme(lambda v: csr @ v, n_cols)
    lu = spla.splu(csr.tocsc())
    lam_inv, ok_min = extreme(lambda v: lu.solve(v), n_cols)
    if lam_inv == 0.0:
        raise SolverError("inverse iteration collapsed; matrix singular?")
    lam_min = 1.0 / lam_inv
    return ConditionEstimate(value=abs(lam_max) / abs(lam_min),
                             eig_max=lam_max, eig_min=lam_min,
                             converged=ok_max and ok_min)


def dense_lstsq(A: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Dense least-squares oracle for cross-checking the sparse
    normal-equation path on small systems."""
    n_rows, n_cols = A.shape
    if n_rows * n_cols > 4_000_000:
        raise SolverError("dense oracle restricted to small systems")
    x, *_ = np.linalg.lstsq(A.toarray(), np.asarray(b, dtype=float), rcond=None)
    return x
