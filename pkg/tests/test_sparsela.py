import math

import numpy as np
import pytest
import scipy.sparse as sp

from helmqo.mesh import build_unit_square
from helmqo.spaces import CR, P1, assemble_mass, assemble_stiffness, \
    build_space, constrain
from helmqo.sparsela import (EigenSolveOptions, FactorizationError,
                             ResonanceError, SparseSymMatrix, count_below,
                             eigs_smallest, ldlt, solve)

from conftest import (enumeration_index, gaussian_elimination_solve,
                      jacobi_generalized_eigen)


def sym(mat):
    return SparseSymMatrix(sp.csr_matrix(np.asarray(mat, dtype=float)))


def square_pencil(n, family=P1):
    space = build_space(build_unit_square(n), family)
    A = constrain(space, assemble_stiffness(space))
    M = constrain(space, assemble_mass(space))
    return A, M


class TestSparseSymMatrix:
    def test_rejects_nonsymmetric(self):
        with pytest.raises(ValueError):
            sym([[1.0, 2.0], [0.0, 1.0]])

    def test_matrix_market_round_trip(self):
        import io
        import scipy.io
        A, _ = square_pencil(3)
        text = A.to_matrix_market()
        assert "symmetric" in text.splitlines()[0]
        B = scipy.io.mmread(io.BytesIO(text.encode())).tocsr()
        assert abs(A.to_scipy() - B).max() < 1e-15


class TestLdlt:
    def test_diagonal_inertia(self):
        A = sym(np.diag([1.0, 3.0, 5.0]))
        M = sym(np.eye(3))
        assert ldlt(A, 4.0, M).inertia == (2, 0, 1)

    def test_shift_below_spectrum(self):
        A = sym(np.diag([1.0, 3.0, 5.0]))
        M = sym(np.eye(3))
        assert ldlt(A, 0.5, M).inertia == (0, 0, 3)

    def test_exact_zero_pivot_reported(self):
        A = sym(np.diag([1.0, 3.0, 5.0]))
        M = sym(np.eye(3))
        F = ldlt(A, 3.0, M)
        assert F.n_zero >= 1
        with pytest.raises(FactorizationError):
            solve(F, np.ones(3))

    @pytest.mark.parametrize("n", [32, 64])
    def test_unit_square_inertia_at_100(self, n):
        # enumeration oracle: six square eigenvalues lie below 100
        A, M = square_pencil(n)
        assert ldlt(A, 100.0, M).n_neg == enumeration_index(100.0) == 6

    def test_reconstruction_dense_path(self):
        rng = np.random.default_rng(3)
        B = rng.standard_normal((40, 40))
        K = B + B.T
        F = ldlt(sym(K))
        L = np.asarray(F.L)
        D = np.asarray(F.D)
        P = F.perm
        assert np.allclose(L @ D @ L.T, K[np.ix_(P, P)], atol=1e-10)
        assert sum(F.inertia) == 40

    def test_reconstruction_superlu_path(self):
        A, M = square_pencil(16)   # 225 dofs... still dense; use CR
        A, M = square_pencil(16, CR)
        F = ldlt(A, 50.0, M)
        K = (A.to_scipy() - 50.0 * M.to_scipy()).toarray()
        L = F.L.toarray()
        D = F.D.toarray()
        P = F.perm
        assert np.allclose(L @ D @ L.T, K[np.ix_(P, P)], atol=1e-8)
        assert sum(F.inertia) == A.n


class TestSolve:
    def test_zero_rhs(self):
        A, M = square_pencil(8)
        F = ldlt(A, 10.0, M)
        assert np.all(solve(F, np.zeros(A.n)) == 0.0)

    def test_unit_vector(self):
        A, M = square_pencil(8)
        F = ldlt(A, 10.0, M)
        e1 = np.zeros(A.n)
        e1[0] = 1.0
        b = F.matrix @ e1
        assert np.allclose(solve(F, b), e1, atol=1e-10)

    def test_random_spd_vs_gaussian_elimination(self):
        rng = np.random.default_rng(11)
        B = rng.standard_normal((50, 50))
        K = B @ B.T + 50 * np.eye(50)
        b = rng.standard_normal(50)
        F = ldlt(sym(K))
        assert np.abs(solve(F, b)
                      - gaussian_elimination_solve(K, b)).max() < 1e-8

    def test_residual_bound(self):
        A, M = square_pencil(24)
        F = ldlt(A, 100.0, M)   # indefinite shift
        rng = np.random.default_rng(1)
        b = rng.standard_normal(A.n)
        x = solve(F, b)
        assert np.linalg.norm(F.matrix @ x - b) <= 1e-10 * np.linalg.norm(b)


class TestEigsSmallest:
    def test_diagonal(self):
        res = eigs_smallest(sym(np.diag([2.0, 1.0, 3.0])), sym(np.eye(3)),
                            EigenSolveOptions(m=2))
        assert np.allclose(res.values, [1.0, 2.0], atol=1e-12)

    def test_p1_first_eigenvalue_from_above(self):
        # conforming approximation converges to 2 pi^2 from above
        exact = 2 * math.pi ** 2
        prev = None
        for n in (16, 32, 64):
            A, M = square_pencil(n)
            val = eigs_smallest(A, M, EigenSolveOptions(m=1)).values[0]
            assert exact < val < exact + 1.0
            if prev is not None:
                assert val < prev
            prev = val

    def test_cr_first_eigenvalue_below(self):
        A, M = square_pencil(64, CR)
        val = eigs_smallest(A, M, EigenSolveOptions(m=1)).values[0]
        assert val < 2 * math.pi ** 2

    def test_against_jacobi_oracle(self):
        rng = np.random.default_rng(8)
        for n in (20, 50, 80):
            B = rng.standard_normal((n, n))
            A = B @ B.T + 0.1 * np.eye(n)
            C = rng.standard_normal((n, n))
            M = C @ C.T + n * np.eye(n)
            m = 6
            res = eigs_smallest(sym(A), sym(M), EigenSolveOptions(m=m))
            oracle = jacobi_generalized_eigen(A, M)[:m]
            assert np.abs(res.values - oracle).max() < 1e-8

    def test_m_orthonormality(self):
        A, M = square_pencil(32)
        res = eigs_smallest(A, M, EigenSolveOptions(m=8))
        G = res.vectors.T @ (M @ res.vectors)
        assert np.abs(G - np.eye(8)).max() <= 1e-8

    def test_residual_contract(self):
        A, M = square_pencil(32, CR)
        opts = EigenSolveOptions(m=6, tol=1e-10)
        res = eigs_smallest(A, M, opts)
        assert np.all(res.residuals <= opts.tol * (1 + np.abs(res.values)))

    def test_deterministic(self):
        A, M = square_pencil(32)
        v1 = eigs_smallest(A, M, EigenSolveOptions(m=5, seed=7)).values
        v2 = eigs_smallest(A, M, EigenSolveOptions(m=5, seed=7)).values
        assert np.array_equal(v1, v2)

    def test_tolerance_stability(self):
        A, M = square_pencil(32)
        v1 = eigs_smallest(A, M, EigenSolveOptions(m=5, tol=1e-10)).values
        v2 = eigs_smallest(A, M, EigenSolveOptions(m=5, tol=1e-12)).values
        assert np.abs((v1 - v2) / v1).max() < 1e-8

    def test_monotone_conforming_convergence(self, square_spectrum_20):
        prev = None
        for n in (8, 16, 32):
            A, M = square_pencil(n)
            vals = eigs_smallest(A, M, EigenSolveOptions(m=5)).values
            assert np.all(vals >= square_spectrum_20[:5])
            if prev is not None:
                assert np.all(vals <= prev + 1e-12)
            prev = vals

    def test_invalid_options(self):
        with pytest.raises(ValueError):
            EigenSolveOptions(m=0)
        with pytest.raises(ValueError):
            EigenSolveOptions(tol=0.0)
        A, M = square_pencil(2)
        with pytest.raises(ValueError):
            eigs_smallest(A, M, EigenSolveOptions(m=5))


class TestCountBelow:
    def test_below_minimum(self):
        A, M = square_pencil(16)
        assert count_below(A, M, 1.0) == 0

    def test_diagonal(self):
        assert count_below(sym(np.diag([1.0, 3.0, 5.0])), sym(np.eye(3)),
                           4.0) == 2

    def test_unit_square_400(self):
        # enumeration oracle gives 26 square eigenvalues below 400
        A, M = square_pencil(64)
        assert count_below(A, M, 400.0) == enumeration_index(400.0) == 26

    def test_resonant_shift_raises(self):
        with pytest.raises(ResonanceError):
            count_below(sym(np.diag([1.0, 3.0, 5.0])), sym(np.eye(3)), 3.0)

    def test_consistency_with_ladder(self):
        A, M = square_pencil(24)
        vals = eigs_smallest(A, M, EigenSolveOptions(m=8)).values
        for i in range(7):
            sigma = 0.5 * (vals[i] + vals[i + 1])
            if vals[i + 1] - vals[i] < 1e-8:
                continue
            assert count_below(A, M, sigma) == i + 1
