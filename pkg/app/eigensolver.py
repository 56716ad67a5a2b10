"""
Lowest-eigenpair backends for Hermitian Hamiltonians.

Small problems go to a dense LAPACK solve; large ones use ARPACK Lanczos in
shift-invert mode. Both finish with a Rayleigh-Ritz pass and a residual check
so that kHz-scale differences of GHz-scale eigenvalues stay meaningful.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.sparse.linalg import norm as sparse_norm

from .config import config
from .errors import EigenSolverError

# Shift below the estimated ground energy (rad/s) used for shift-invert
SHIFT_MARGIN = 2.0 * math.pi * 1e9


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude component is real and positive."""
    vectors = np.array(vectors, dtype=complex, copy=True)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    rows = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[rows, np.arange(vectors.shape[1])]
    scale = np.ones_like(pivots)
    nonzero = np.abs(pivots) > 0.0
    scale[nonzero] = np.conj(pivots[nonzero]) / np.abs(pivots[nonzero])
    return vectors * scale[None, :]


def matrix_norm(matrix) -> float:
    """1-norm, an upper bound of the spectral norm for Hermitian matrices."""
    if sp.issparse(matrix):
        return float(sparse_norm(matrix, 1))
    return float(np.linalg.norm(np.asarray(matrix), 1))


def residual_norms(matrix, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(matrix @ vectors - vectors * values[None, :], axis=0)


class EigenSolver(ABC):
    """Abstract base class for lowest-eigenpair solvers."""

    def __init__(self, tolerance: float):
        self.tolerance = tolerance
        self.logger = logging.getLogger(__name__)

    @abstractmethod
    def _raw_solve(self, matrix, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """Return approximate (values, vectors) for the `count` lowest eigenpairs."""
        pass

    @property
    @abstractmethod
    def method(self) -> str:
        pass

    def solve(self, matrix, count: int) -> EigenResult:
        """
        Compute the `count` lowest eigenpairs of a Hermitian matrix.

        Args:
            matrix: Sparse or dense Hermitian matrix
            count: Number of eigenpairs

        Returns:
            EigenResult with ascending eigenvalues and phase-fixed eigenvectors

        Raises:
            EigenSolverError: When any residual exceeds tolerance * ||H||
        """
        values, vectors = self._raw_solve(matrix, count)
        values, vectors = rayleigh_ritz(matrix, vectors)
        vectors = fix_phases(vectors)
        residuals = residual_norms(matrix, values, vectors)
        bound = self.tolerance * matrix_norm(matrix)
        if np.any(residuals > bound):
            worst = int(np.argmax(residuals))
            raise EigenSolverError(
                f"{self.method} eigensolver residual {residuals[worst]:.3e} exceeds {bound:.3e}",
                {"residuals": residuals.tolist(), "bound": bound, "method": self.method},
            )
        return EigenResult(values=values, vectors=vectors, residuals=residuals,
                           method=self.method)


class DenseEigenSolver(EigenSolver):
    """LAPACK solve of the full matrix."""

    @property
    def method(self) -> str:
        return "dense"

    def _raw_solve(self, matrix, count: int) -> Tuple[np.ndarray, np.ndarray]:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        dense = 0.5 * (dense + dense.conj().T)
        values, vectors = np.linalg.eigh(dense)
        return values[:count], vectors[:, :count]


class SparseEigenSolver(EigenSolver):
    """ARPACK Lanczos in shift-invert mode below the ground state."""

    def __init__(self, tolerance: float, max_iterations: Optional[int] = None):
        super().__init__(tolerance)
        self.max_iterations = max_iterations

    @property
    def method(self) -> str:
        return "sparse"

    def _raw_solve(self, matrix, count: int) -> Tuple[np.ndarray, np.ndarray]:
        matrix = sp.csr_matrix(matrix)
        dim = matrix.shape[0]
        ncv = min(dim - 1, max(2 * count + 1, 20))
        try:
            ground, _ = eigsh(matrix, k=1, which="SA", tol=1e-8)
            sigma = float(ground[0]) - SHIFT_MARGIN
            values, vectors = eigsh(matrix, k=count, sigma=sigma, which="LM",
                                    tol=self.tolerance, ncv=ncv, maxiter=self.max_iterations)
        except MemoryError:
            self.logger.warning("Shift-invert factorization ran out of memory; "
                                "falling back to plain Lanczos")
            values, vectors = self._plain(matrix, count, ncv)
        except ArpackNoConvergence as e:
            if e.eigenvalues is not None and len(e.eigenvalues) >= count:
                self.logger.warning(f"ARPACK partial convergence, refining "
                                    f"{len(e.eigenvalues)} vectors")
                values, vectors = e.eigenvalues, e.eigenvectors
            else:
                values, vectors = self._plain(matrix, count, ncv)
        order = np.argsort(values)
        return values[order][:count], vectors[:, order][:, :count]

    def _plain(self, matrix, count: int, ncv: int) -> Tuple[np.ndarray, np.ndarray]:
        try:
            return eigsh(matrix, k=count, which="SA", tol=self.tolerance, ncv=ncv,
                         maxiter=self.max_iterations)
        except ArpackNoConvergence as e:
            raise EigenSolverError(
                f"Lanczos did not converge for {count} eigenpairs",
                {"converged": 0 if e.eigenvalues is None else len(e.eigenvalues),
                 "method": self.method},
            ) from e


def rayleigh_ritz(matrix, vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Re-orthonormalize `vectors` and diagonalize the matrix inside their span."""
    basis, _ = np.linalg.qr(np.asarray(vectors, dtype=complex))
    projected = basis.conj().T @ (matrix @ basis)
    projected = 0.5 * (projected + projected.conj().T)
    values, rotation = np.linalg.eigh(projected)
    return values, basis @ rotation


def select_solver(dim: int, count: int, tolerance: float,
                  dense_limit: Optional[int] = None) -> EigenSolver:
    limit = config.DENSE_LIMIT if dense_limit is None else dense_limit
    if dim <= limit or count >= dim - 1:
        return DenseEigenSolver(tolerance)
    return SparseEigenSolver(tolerance)


def lowest_eigenpairs(matrix, k: int, tol: Optional[float] = None,
                      dense_limit: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lowest `k` eigenpairs of a Hermitian matrix.

    Args:
        matrix: Sparse or dense Hermitian matrix
        k: Number of eigenpairs (at most the dimension)
        tol: Relative tolerance in (0, 1e-6]
        dense_limit: Dimension at or below which the dense solver is used

    Returns:
        (eigenvalues ascending, eigenvectors as columns)
    """
    tol = config.EIGEN_TOLERANCE if tol is None else tol
    dim = matrix.shape[0]
    if not 0.0 < tol <= 1e-6:
        raise ValueError(f"Tolerance must lie in (0, 1e-6], got {tol}")
    if not 1 <= k <= dim:
        raise ValueError(f"Requested {k} eigenpairs of a {dim}-dimensional matrix")
    solver = select_solver(dim, k, tol, dense_limit)
    result = solver.solve(matrix, k)
    logging.getLogger(__name__).debug(
        f"{result.method} eigensolve: dim={dim}, k={k}, "
        f"max residual={float(result.residuals.max()):.2e}")
    return result.values, result.vectors
