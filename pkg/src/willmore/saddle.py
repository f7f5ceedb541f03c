"""Bordered saddle-point systems [[J, A^T], [A, 0]]: assembly, factorization, solves.

The bordered matrix is symmetric indefinite, so factorization uses either a
dense Bunch-Kaufman LDL^T (with 1x1/2x2 pivots, inertia and tiny-pivot
diagnostics; the default at test scale) or a sparse LU for large systems.
Every solve applies one step of iterative refinement and verifies the
residual by explicit re-multiplication.  The structural sparsity pattern is
built once and reused across refactorizations.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.io import mmwrite
from scipy.sparse.linalg import splu

DEFAULT_SOLVER_TOL = 1e-9
PIVOT_REL_TOL = 1e-12
KERNEL_HINT = (
    "the saddle matrix is singular; a zero or tiny pivot usually means the "
    "translation kernel is not removed (add a barycenter constraint or fix "
    "a Dirichlet boundary)"
)


class SaddleError(RuntimeError):
    """Base class for saddle-system failures."""


class SingularSaddleError(SaddleError):
    """Factorization hit a zero or near-zero pivot."""


class SaddleResidualError(SaddleError):
    """Solution residual exceeded the solver tolerance after refinement."""


@dataclass
class SaddleSolution:
    """Primal/multiplier pair with explicitly re-multiplied residual norms."""

    primal: np.ndarray
    multipliers: np.ndarray
    residual_primal: float
    residual_dual: float


class _DenseLDL:
    """Bunch-Kaufman LDL^T of a symmetric indefinite matrix."""

    def __init__(self, matrix, pivot_tol):
        lu, d, perm = la.ldl(matrix, lower=True)
        self._lower = lu[perm]
        self._perm = perm
        self._d = d
        eigs = []
        i, n = 0, d.shape[0]
        while i < n:
            if i + 1 < n and d[i + 1, i] != 0.0:
                a, b, c = d[i, i], d[i + 1, i], d[i + 1, i + 1]
                mean = 0.5 * (a + c)
                disc = np.hypot(0.5 * (a - c), b)
                eigs.extend([mean - disc, mean + disc])
                i += 2
            else:
                eigs.append(d[i, i])
                i += 1
        eigs = np.asarray(eigs)
        if np.abs(eigs).min(initial=np.inf) < pivot_tol:
            raise SingularSaddleError(KERNEL_HINT)
        self.inertia = (
            int((eigs > 0).sum()),
            int((eigs == 0).sum()),
            int((eigs < 0).sum()),
        )

    def solve(self, rhs):
        z = la.solve_triangular(self._lower, rhs[self._perm], lower=True)
        w = self._solve_block_diagonal(z)
        y = la.solve_triangular(self._lower.T, w, lower=False)
        out = np.empty_like(y)
        out[self._perm] = y
        return out

    def _solve_block_diagonal(self, z):
        d = self._d
        out = np.empty_like(z)
        i, n = 0, d.shape[0]
        while i < n:
            if i + 1 < n and d[i + 1, i] != 0.0:
                a, b, c = d[i, i], d[i + 1, i], d[i + 1, i + 1]
                det = a * c - b * b
                out[i] = (c * z[i] - b * z[i + 1]) / det
                out[i + 1] = (a * z[i + 1] - b * z[i]) / det
                i += 2
            else:
                out[i] = z[i] / d[i, i]
                i += 1
        return out


class _SparseLU:
    """SuperLU factorization; no inertia information."""

    inertia = None

    def __init__(self, matrix, pivot_tol):
        try:
            self._lu = splu(matrix.tocsc())
        except RuntimeError as exc:
            raise SingularSaddleError(f"{KERNEL_HINT} ({exc})") from exc
        u_diag = np.abs(self._lu.U.diagonal())
        if u_diag.size and u_diag.min() < pivot_tol:
            raise SingularSaddleError(KERNEL_HINT)

    def solve(self, rhs):
        return self._lu.solve(rhs)


class SaddleSystem:
    """Factorized bordered system over the interior DOFs.

    The structural pattern (union of the H2-operator pattern and the
    constraint rows) is frozen on the first `update` and every later
    refactorization fills the same pattern, so `pattern_hash` is invariant
    along a descent run.
    """

    def __init__(
        self,
        dofs=None,
        solver_tol=DEFAULT_SOLVER_TOL,
        backend="auto",
        dense_limit=900,
        pivot_rel_tol=PIVOT_REL_TOL,
    ):
        if backend not in ("auto", "dense", "sparse"):
            raise ValueError(f"unknown backend {backend!r}")
        self.dofs = dofs
        self.solver_tol = solver_tol
        self.backend = backend
        self.dense_limit = dense_limit
        self.pivot_rel_tol = pivot_rel_tol
        self.matrix = None
        self.n = None
        self.K = None
        self._pattern = None
        self._fact = None

    # -- assembly / factorization -----------------------------------------

    def update(self, J_int, A_int):
        """Assemble the bordered matrix with fresh values and refactorize."""
        J_int = sp.csr_matrix(J_int)
        A_int = np.atleast_2d(np.asarray(A_int, dtype=np.float64))
        n = J_int.shape[0]
        K = A_int.shape[0] if A_int.size else 0
        if K:
            A_sp = sp.csr_matrix(A_int)
            matrix = sp.bmat([[J_int, A_sp.T], [A_sp, None]], format="csc")
        else:
            matrix = J_int.tocsc()
        if self._pattern is None:
            self.n, self.K = n, K
            pattern = matrix.copy()
            pattern.data = np.zeros_like(pattern.data)
            self._pattern = pattern
        elif (n, K) != (self.n, self.K):
            raise SaddleError(
                f"system size changed: expected ({self.n}, {self.K}), got ({n}, {K})"
            )
        matrix = (matrix + self._pattern).tocsc()
        matrix.sort_indices()
        self.matrix = matrix
        self._matrix_norm_inf = float(
            np.abs(matrix).sum(axis=1).max() if matrix.nnz else 0.0
        )

        use_dense = self.backend == "dense" or (
            self.backend == "auto" and n + K <= self.dense_limit
        )
        diag = np.abs(matrix.diagonal())
        pivot_tol = self.pivot_rel_tol * (diag.max() if diag.size else 1.0)
        if use_dense:
            self._fact = _DenseLDL(matrix.toarray(), pivot_tol)
        else:
            self._fact = _SparseLU(matrix, pivot_tol)
        return self

    @property
    def pattern_hash(self):
        if self.matrix is None:
            raise SaddleError("system not assembled")
        digest = hashlib.sha256()
        digest.update(self.matrix.indptr.tobytes())
        digest.update(self.matrix.indices.tobytes())
        return digest.hexdigest()

    @property
    def inertia(self):
        """(positive, zero, negative) eigenvalue counts; None for the sparse backend."""
        if self._fact is None:
            raise SaddleError("system not factorized")
        return self._fact.inertia

    def dump_matrix(self, path):
        """Write the bordered matrix in MatrixMarket coordinate format."""
        mmwrite(str(path), self.matrix.tocoo(), symmetry="symmetric")

    # -- solves -------------------------------------------------------------

    def solve(self, rhs_primal, rhs_dual=None):
        """Solve for (x, mu) with one refinement step and a residual check."""
        if self._fact is None:
            raise SaddleError("system not factorized")
        rhs_primal = np.asarray(rhs_primal, dtype=np.float64)
        if rhs_dual is None:
            rhs_dual = np.zeros(self.K)
        rhs = np.concatenate([rhs_primal, np.asarray(rhs_dual, dtype=np.float64)])
        if rhs.shape != (self.n + self.K,):
            raise SaddleError(f"rhs has wrong length {rhs.shape}")

        x = self._fact.solve(rhs)
        residual = rhs - self.matrix @ x
        x = x + self._fact.solve(residual)
        residual = rhs - self.matrix @ x

        # Normwise backward-error scale: a residual of size eps*|S||x| is
        # the best any factorization can deliver, also when the rhs is tiny.
        scale = max(
            np.abs(rhs).max(initial=0.0),
            self._matrix_norm_inf * np.abs(x).max(initial=0.0),
        )
        res_primal = np.abs(residual[: self.n]).max(initial=0.0)
        res_dual = np.abs(residual[self.n :]).max(initial=0.0)
        if max(res_primal, res_dual) > self.solver_tol * max(scale, 1e-300):
            raise SaddleResidualError(
                f"saddle residual {max(res_primal, res_dual):.3e} exceeds "
                f"{self.solver_tol:.1e} x {scale:.3e}"
            )
        return x[: self.n], x[self.n :], res_primal, res_dual

    def _wrap(self, x, mu, res_p, res_d):
        primal = self.dofs.zero_extend(x) if self.dofs is not None else x
        return SaddleSolution(primal, mu, res_p, res_d)

    def solve_projected_gradient(self, b_int):
        """J-orthogonal projection step: solve with right-hand side (b, 0)."""
        return self._wrap(*self.solve(b_int))

    def apply_pseudoinverse(self, w):
        """v = A(f)^dagger w in the J-weighted sense: solve with rhs (0, w)."""
        w = np.atleast_1d(np.asarray(w, dtype=np.float64))
        return self._wrap(*self.solve(np.zeros(self.n), w))


# -- dense verification oracles ----------------------------------------------


def dense_pinv_oracle(J, A):
    """J-weighted pseudoinverse of a surjective A: A^+ = J^-1 A^T (A J^-1 A^T)^-1.

    Intended as an independent dense test oracle at small sizes; J must be
    symmetric positive definite and A must have full row rank.
    """
    J = np.asarray(J, dtype=np.float64)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    K = A.shape[0]
    JiAt = np.linalg.solve(J, A.T)
    gram = A @ JiAt
    if np.linalg.matrix_rank(gram) < K:
        raise np.linalg.LinAlgError("A is rank deficient; no pseudoinverse")
    return JiAt @ np.linalg.inv(gram)


def dense_projection_oracle(J, A, b):
    """J-orthogonal projection of J^-1 b onto ker A (dense reference path)."""
    x = np.linalg.solve(np.asarray(J, dtype=np.float64), np.asarray(b, dtype=np.float64))
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.shape[0] == 0:
        return x
    return x - dense_pinv_oracle(J, A) @ (A @ x)
