"""Sparse symmetric linear algebra.

CSR symmetric storage, LDL^T factorization of ``A - sigma*M`` with inertia
extraction (Sylvester eigenvalue counting), triangular solves with iterative
refinement, and a shift-invert Lanczos eigensolver for the smallest
generalized eigenpairs.  Small systems are factorized densely with
Bunch-Kaufman pivoting (1x1 and 2x2 pivot blocks); larger ones go through a
symmetric-mode sparse LU restricted to diagonal pivoting, which yields the
same unit-lower/diagonal decomposition.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_FACTOR_LIMIT = 400
DENSE_EIG_LIMIT = 200


class FactorizationError(RuntimeError):
    """Singular or broken-down factorization."""


class ResonanceError(RuntimeError):
    """The shift coincides numerically with a generalized eigenvalue."""


class EigenSolveError(RuntimeError):
    """Eigensolver failed to converge; carries the best residuals seen."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class SparseSymMatrix:
    """Symmetric sparse matrix in CSR form storing the full pattern.

    The wrapped matrix must be exactly symmetric (this is checked).  An
    optional ``dof_map`` records the embedding of this matrix's rows into a
    larger DOF set, as produced by constraining.
    """

    def __init__(self, mat, dof_map: np.ndarray | None = None):
        m = sp.csr_matrix(mat)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        d = m - m.T
        if d.nnz and abs(d).max() > 0:
            raise ValueError("matrix must be symmetric")
        self._m = m
        self.dof_map = dof_map

    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self._m.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._m.indices

    @property
    def data(self) -> np.ndarray:
        return self._m.data

    def to_scipy(self) -> sp.csr_matrix:
        return self._m

    def toarray(self) -> np.ndarray:
        return self._m.toarray()

    def __matmul__(self, other):
        return self._m @ other

    def to_matrix_market(self) -> str:
        """Serialize in MatrixMarket coordinate symmetric format."""
        buf = io.BytesIO()
        scipy.io.mmwrite(buf, sp.coo_matrix(sp.tril(self._m)),
                         symmetry="symmetric")
        return buf.getvalue().decode()

    def __repr__(self) -> str:
        return f"SparseSymMatrix(n={self.n}, nnz={self._m.nnz})"


@dataclass
class EigenSolveOptions:
    """Options for :func:`eigs_smallest`."""

    m: int = 1
    tol: float = 1e-10
    max_iter: int = 10000
    block: int | None = None     # Lanczos basis size (ncv)
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class EigenResult:
    """Ascending generalized eigenvalues with M-orthonormal eigenvectors."""

    values: np.ndarray       # (m,)
    vectors: np.ndarray      # (n, m)
    residuals: np.ndarray    # (m,) norms of A x - lambda M x


class Factorization:
    """LDL^T factorization of ``K = A - sigma*M`` with inertia.

    ``perm`` is the fill-reducing permutation, ``inertia`` the triple
    (n_neg, n_zero, n_pos) of pivot signs.  ``L`` is unit lower triangular
    and ``D`` block diagonal with 1x1 and (dense path only) 2x2 blocks.
    """

    def __init__(self, matrix: sp.csr_matrix, sigma: float, mode: str,
                 perm: np.ndarray, inertia: tuple[int, int, int], payload):
        self.matrix = matrix
        self.sigma = sigma
        self.n = matrix.shape[0]
        self.perm = perm
        self.inertia = inertia
        self._mode = mode
        self._payload = payload

    @property
    def n_neg(self) -> int:
        return self.inertia[0]

    @property
    def n_zero(self) -> int:
        return self.inertia[1]

    @property
    def n_pos(self) -> int:
        return self.inertia[2]

    @property
    def L(self):
        """Unit lower-triangular factor (rows in permuted order)."""
        if self._mode == "superlu":
            return self._payload.L
        lu, _, perm = self._payload
        return lu[perm]

    @property
    def D(self):
        """Block-diagonal factor: P K P^T = L D L^T."""
        if self._mode == "superlu":
            return sp.diags(self._payload.U.diagonal())
        _, d, _ = self._payload
        return d

    def _raw_solve(self, b: np.ndarray) -> np.ndarray:
        if self._mode == "superlu":
            return self._payload.solve(b)
        # K = lu @ d @ lu.T with lu[perm] lower triangular
        lu, d, perm = self._payload
        lo = lu[perm]
        z = sla.solve_triangular(lo, b[perm], lower=True, unit_diagonal=True)
        w = _block_diag_solve(d, z)
        y = sla.solve_triangular(lo.T, w, lower=False, unit_diagonal=True)
        x = np.empty_like(y)
        x[perm] = y
        return x


def _block_diag_solve(d: np.ndarray, z: np.ndarray) -> np.ndarray:
    n = len(z)
    w = np.empty_like(z)
    i = 0
    while i < n:
        if i + 1 < n and d[i, i + 1] != 0.0:
            a, b_, c = d[i, i], d[i, i + 1], d[i + 1, i + 1]
            det = a * c - b_ * b_
            w[i] = (c * z[i] - b_ * z[i + 1]) / det
            w[i + 1] = (a * z[i + 1] - b_ * z[i]) / det
            i += 2
        else:
            w[i] = z[i] / d[i, i]
            i += 1
    return w


def _dense_inertia(d: np.ndarray, tol: float) -> tuple[int, int, int]:
    n = len(d)
    neg = zero = pos = 0
    i = 0
    while i < n:
        if i + 1 < n and (d[i, i + 1] != 0.0 or d[i + 1, i] != 0.0):
            a, b, c = d[i, i], d[i, i + 1], d[i + 1, i + 1]
            mid = 0.5 * (a + c)
            disc = np.hypot(0.5 * (a - c), b)
            for ev in (mid + disc, mid - disc):
                if ev > tol:
                    pos += 1
                elif ev < -tol:
                    neg += 1
                else:
                    zero += 1
            i += 2
        else:
            ev = d[i, i]
            if ev > tol:
                pos += 1
            elif ev < -tol:
                neg += 1
            else:
                zero += 1
            i += 1
    return neg, zero, pos


def ldlt(A: SparseSymMatrix, sigma: float = 0.0,
         M: SparseSymMatrix | None = None) -> Factorization:
    """Factorize ``A - sigma*M`` as P^T L D L^T P and report inertia.

    When ``n_zero`` is zero, ``n_neg`` equals the number of generalized
    eigenvalues of (A, M) strictly below ``sigma``.  A zero pivot is
    reported through ``n_zero > 0`` (the shift is numerically an
    eigenvalue), not raised.
    """
    if M is None:
        if sigma != 0.0:
            raise ValueError("a mass matrix is required for nonzero shifts")
        K = A.to_scipy().copy()
        scale = abs(K.data).max() if K.nnz else 0.0
    else:
        if M.n != A.n:
            raise ValueError("A and M must have the same dimension")
        K = (A.to_scipy() - sigma * M.to_scipy()).tocsr()
        # zero detection is relative to the unshifted data, not to K,
        # which may be uniformly tiny near a resonance
        scale = max(abs(A.data).max() if len(A.data) else 0.0,
                    abs(sigma) * (abs(M.data).max() if len(M.data) else 0.0))
    n = K.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    tol = n * np.finfo(float).eps * max(scale, np.finfo(float).tiny)

    if n <= DENSE_FACTOR_LIMIT:
        lu, d, perm = sla.ldl(K.toarray(), lower=True)
        inertia = _dense_inertia(d, tol)
        return Factorization(K, sigma, "dense", np.asarray(perm), inertia,
                             (lu, d, np.asarray(perm)))

    lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A",
                   diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True, Equil=False))
    du = lu.U.diagonal()
    neg = int((du < -tol).sum())
    pos = int((du > tol).sum())
    zero = n - neg - pos
    if not np.array_equal(lu.perm_r, lu.perm_c):
        # off-diagonal pivoting was forced by an exactly singular pivot
        zero = max(zero, 1)
        pos = n - neg - zero
    # with perm = argsort(perm_c): K[perm][:, perm] == L @ U
    return Factorization(K, sigma, "superlu", np.argsort(lu.perm_c),
                         (neg, zero, pos), lu)


def solve(F: Factorization, b: np.ndarray) -> np.ndarray:
    """Solve ``(A - sigma*M) x = b`` with one step of iterative refinement."""
    if F.n_zero > 0:
        raise FactorizationError("factorization is singular "
                                 "(shift is numerically an eigenvalue)")
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    x = F._raw_solve(b)
    for _ in range(3):
        r = b - F.matrix @ x
        if np.linalg.norm(r) <= 1e-10 * nb:
            break
        x = x + F._raw_solve(r)
    return x


def count_below(A: SparseSymMatrix, M: SparseSymMatrix, sigma: float) -> int:
    """Exact number of generalized eigenvalues of (A, M) below ``sigma``.

    Uses Sylvester inertia of the LDL^T pivots, independent of any
    eigensolver convergence.  Raises :class:`ResonanceError` when ``sigma``
    is numerically an eigenvalue of the pencil.
    """
    F = ldlt(A, sigma, M)
    if F.n_zero > 0:
        raise ResonanceError(
            f"shift {sigma!r} is numerically an eigenvalue of the pencil "
            "(resonant at this mesh)")
    return F.n_neg


def _m_orthonormalize(X: np.ndarray, Msp: sp.csr_matrix) -> np.ndarray:
    G = X.T @ (Msp @ X)
    if abs(G - np.eye(G.shape[0])).max() <= 1e-13:
        return X
    R = sla.cholesky(G, lower=False)
    return sla.solve_triangular(R, X.T, lower=False, trans="T").T


def _residual_norms(Asp, Msp, vals, X) -> np.ndarray:
    R = Asp @ X - (Msp @ X) * vals
    return np.linalg.norm(R, axis=0)


def eigs_smallest(A: SparseSymMatrix, M: SparseSymMatrix,
                  opts: EigenSolveOptions | None = None) -> EigenResult:
    """The ``opts.m`` algebraically smallest eigenpairs of ``A x = l M x``.

    A must be symmetric positive semidefinite, M symmetric positive
    definite.  Eigenvalues are ascending with multiplicities; eigenvectors
    are M-orthonormal.  Shift-invert Lanczos (shift -1, strictly below the
    spectrum) with a deterministic seeded start vector; dense fallback for
    small systems.  Each returned pair satisfies
    ``|A x - l M x| <= tol * (1 + |l|)``.
    """
    opts = opts or EigenSolveOptions()
    n = A.n
    if M.n != n:
        raise ValueError("A and M must have the same dimension")
    m = opts.m
    if m > n:
        raise ValueError(f"requested {m} pairs from a dimension-{n} pencil")
    Asp, Msp = A.to_scipy(), M.to_scipy()

    if n <= DENSE_EIG_LIMIT or m >= n - 1:
        vals, X = sla.eigh(Asp.toarray(), Msp.toarray())
        vals, X = vals[:m], X[:, :m]
        X = _m_orthonormalize(X, Msp)
        res = _residual_norms(Asp, Msp, vals, X)
        return EigenResult(vals, X, res)

    F = ldlt(A, -1.0, M)
    if F.n_zero > 0:
        raise EigenSolveError("shift-invert factorization broke down; "
                              "is A positive semidefinite?")
    opinv = spla.LinearOperator((n, n), matvec=F._raw_solve)
    v0 = np.random.default_rng(opts.seed).standard_normal(n)
    ncv = opts.block or min(n, max(2 * m + 1, 20))

    best: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    for attempt in range(3):
        try:
            vals, X = spla.eigsh(Asp, k=m, M=Msp, sigma=-1.0, OPinv=opinv,
                                 v0=v0, which="LM", tol=1e-14,
                                 maxiter=opts.max_iter, ncv=ncv)
        except spla.ArpackNoConvergence as exc:
            ncv = min(n, 2 * ncv)
            if attempt == 2:
                raise EigenSolveError(
                    f"Lanczos iteration did not converge: {exc}",
                    residuals=None) from exc
            continue
        order = np.argsort(vals, kind="stable")
        vals, X = vals[order], X[:, order]
        X = _m_orthonormalize(X, Msp)
        res = _residual_norms(Asp, Msp, vals, X)
        if best is None or res.max() < best[2].max():
            best = (vals, X, res)
        if (res <= opts.tol * (1.0 + abs(vals))).all():
            return EigenResult(vals, X, res)
        ncv = min(n, 2 * ncv)
    vals, X, res = best
    if (res <= opts.tol * (1.0 + abs(vals))).all():
        return EigenResult(vals, X, res)
    raise EigenSolveError(
        "eigensolver residuals exceed tolerance "
        f"(max {res.max():.3e} vs tol {opts.tol:.1e})", residuals=res)
