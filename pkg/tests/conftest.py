"""Shared fixtures and independent oracles for the test suite.

The oracles here are deliberately written from scratch (brute force
enumeration, cyclic Jacobi, Gaussian elimination) so that they share no
code path with the implementations they verify.
"""

import math

import numpy as np
import pytest


def enumeration_spectrum(count: int) -> np.ndarray:
    """Brute-force Dirichlet spectrum of the unit square, pi^2 (i^2+j^2)."""
    vals = []
    top = 40
    for i in range(1, top):
        for j in range(1, top):
            vals.append(math.pi ** 2 * (i * i + j * j))
    vals.sort()
    assert count <= len(vals)
    return np.array(vals[:count])


def enumeration_index(k2: float) -> int:
    """Brute-force count of unit-square eigenvalues strictly below k2."""
    cnt = 0
    top = int(math.sqrt(max(k2, 0.0)) / math.pi) + 2
    for i in range(1, top):
        for j in range(1, top):
            if math.pi ** 2 * (i * i + j * j) < k2:
                cnt += 1
    return cnt


def gaussian_elimination_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense Gaussian elimination with partial pivoting, written plainly."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n - 1):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        for i in range(k + 1, n):
            m = A[i, k] / A[k, k]
            A[i, k + 1:] -= m * A[k, k + 1:]
            b[i] -= m * b[k]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


def jacobi_generalized_eigen(A: np.ndarray, M: np.ndarray,
                             sweeps: int = 60) -> np.ndarray:
    """Cyclic Jacobi eigenvalues of the pencil (A, M), ascending.

    Reduces to a standard problem with a hand-rolled Cholesky factor and
    runs classical Jacobi rotations until off-diagonal exhaustion.
    """
    A = np.array(A, dtype=float)
    M = np.array(M, dtype=float)
    n = len(A)
    # Cholesky M = L L^T, forward/back substitutions by hand
    L = np.zeros_like(M)
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j] - L[i, :j] @ L[j, :j]
            L[i, j] = math.sqrt(s) if i == j else s / L[j, j]
    # C = L^-1 A L^-T
    X = np.zeros_like(A)
    for col in range(n):
        y = A[:, col].copy()
        for i in range(n):
            y[i] = (y[i] - L[i, :i] @ y[:i]) / L[i, i]
        X[:, col] = y
    C = np.zeros_like(A)
    for row in range(n):
        y = X[row].copy()
        for i in range(n):
            y[i] = (y[i] - L[i, :i] @ y[:i]) / L[i, i]
        C[row] = y
    C = 0.5 * (C + C.T)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(C[p, q]))
                if abs(C[p, q]) < 1e-15:
                    continue
                theta = 0.5 * math.atan2(2 * C[p, q], C[q, q] - C[p, p])
                c, s = math.cos(theta), math.sin(theta)
                rows_p, rows_q = C[p].copy(), C[q].copy()
                C[p], C[q] = c * rows_p - s * rows_q, s * rows_p + c * rows_q
                cols_p, cols_q = C[:, p].copy(), C[:, q].copy()
                C[:, p] = c * cols_p - s * cols_q
                C[:, q] = s * cols_p + c * cols_q
        if off < 1e-14:
            break
    return np.sort(np.diag(C))


@pytest.fixture(scope="session")
def square_spectrum_20():
    return enumeration_spectrum(20)
