import math

import numpy as np
import pytest

from helmqo.mesh import (BoundaryTag, Mesh, build_square_with_hole,
                         build_unit_square, refine_uniform)
from helmqo.spaces import (CR, P1, P2, FeFunction, assemble_load,
                           assemble_mass, assemble_stiffness, build_space,
                           constrain, constrain_vector, cr_to_p1_average,
                           expand_free, family_from_name, interpolate,
                           l2_error, rayleigh_quotient)
from helmqo.sparsela import ldlt, solve
from helmqo.certify import GaussianBump

N = BoundaryTag.NEUMANN


def reference_mesh():
    return Mesh.from_triangulation(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]))


def laplace_solution(space, f, degree=6):
    A = constrain(space, assemble_stiffness(space))
    M = constrain(space, assemble_mass(space))
    b = constrain_vector(space, assemble_load(space, f, degree))
    x = solve(ldlt(A, 0.0, M), b)
    return FeFunction(space, expand_free(space, x))


class TestFamilies:
    def test_names(self):
        assert family_from_name("P1") == P1
        assert family_from_name("p2") == P2
        assert family_from_name("cr") == CR
        with pytest.raises(ValueError):
            family_from_name("p3")

    def test_dof_counts(self):
        assert build_space(build_unit_square(1), P1).ndof == 4
        assert build_space(build_unit_square(1), P1).n_free == 0
        s = build_space(build_unit_square(2), P1)
        assert (s.ndof, s.n_free) == (9, 1)
        s = build_space(build_unit_square(1), CR)
        assert (s.ndof, s.n_free) == (5, 1)
        m = build_unit_square(2)
        s = build_space(m, P2)
        assert s.ndof == m.n_vertices + m.n_edges
        assert sorted(np.concatenate([s.free_dofs, s.constrained_dofs])
                      .tolist()) == list(range(s.ndof))


class TestStiffness:
    def test_p1_local_reference(self):
        K = assemble_stiffness(build_space(reference_mesh(), P1)).toarray()
        expected = np.array([[1.0, -0.5, -0.5],
                             [-0.5, 0.5, 0.0],
                             [-0.5, 0.0, 0.5]])
        assert np.allclose(K, expected, atol=1e-14)

    def test_cr_is_four_times_p1_with_edge_map(self):
        m = reference_mesh()
        Kp = assemble_stiffness(build_space(m, P1)).toarray()
        Kc = assemble_stiffness(build_space(m, CR)).toarray()
        idx = m.tri2edge[0]   # edge dof opposite each vertex
        assert np.allclose(Kc[np.ix_(idx, idx)], 4.0 * Kp, atol=1e-14)

    def test_row_sums_vanish(self):
        # constants lie in the kernel before constraints
        for fam in (P1, P2):
            A = assemble_stiffness(build_space(build_unit_square(3), fam))
            assert np.allclose(A.to_scipy().sum(axis=1), 0.0, atol=1e-12)

    def test_exact_symmetry(self):
        for fam in (P1, P2, CR):
            A = assemble_stiffness(build_space(build_unit_square(4), fam))
            d = (A.to_scipy() - A.to_scipy().T)
            assert d.nnz == 0 or abs(d).max() == 0.0


class TestMass:
    def test_p1_local_reference(self):
        M = assemble_mass(build_space(reference_mesh(), P1)).toarray()
        assert np.allclose(M, (0.5 / 12) * (np.ones((3, 3)) + np.eye(3)),
                           atol=1e-15)

    def test_cr_local_diagonal(self):
        M = assemble_mass(build_space(reference_mesh(), CR)).toarray()
        assert np.allclose(M, (0.5 / 3) * np.eye(3), atol=1e-15)

    def test_cr_global_diagonal(self):
        import scipy.sparse
        M = assemble_mass(build_space(build_unit_square(4), CR)).to_scipy()
        off = M - scipy.sparse.diags(M.diagonal())
        assert (abs(off).max() if off.nnz else 0.0) == 0.0

    def test_partition_of_unity(self):
        M = assemble_mass(build_space(build_unit_square(5), P1))
        ones = np.ones(M.n)
        assert np.isclose(ones @ (M @ ones), 1.0, atol=1e-12)

    def test_positive_definite(self):
        for fam in (P1, P2, CR):
            s = build_space(build_unit_square(4), fam)
            M = constrain(s, assemble_mass(s)).toarray()
            np.linalg.cholesky(M)   # raises if not SPD


class TestLoad:
    def test_constant_sums_to_area(self):
        for fam in (P1, CR):
            s = build_space(build_unit_square(4), fam)
            b = assemble_load(s, lambda x, y: np.ones_like(x))
            assert np.isclose(b.sum(), 1.0, atol=1e-12)

    def test_zero(self):
        s = build_space(build_unit_square(2), P1)
        assert np.all(assemble_load(s, lambda x, y: 0.0 * x) == 0.0)

    def test_gaussian_bump_total_integral(self):
        # closed-form oracle: integral over the plane is amp * pi / width^2
        bump = GaussianBump(5e4, 40.0, (0.75, -0.75))
        m = build_square_with_hole(2.0, 0.5, 128)
        assert (2.0 * math.sqrt(2) / 128) < 1.0 / 40  # h below bump scale
        s = build_space(m, P1)
        b = assemble_load(s, bump)
        exact = bump.total_integral()
        assert abs(b.sum() - exact) < 0.01 * exact

    def test_scalar_callable_vectorized(self):
        s = build_space(build_unit_square(2), P1)
        b1 = assemble_load(s, lambda x, y: x + y)
        b2 = assemble_load(s, lambda x, y: float(x) + float(y)
                           if np.isscalar(x) else x + y)
        assert np.allclose(b1, b2, atol=1e-15)


class TestConstrain:
    def test_identity_when_no_dirichlet(self):
        m = build_unit_square(2, tags=N)
        s = build_space(m, P1)
        A = assemble_stiffness(s)
        assert constrain(s, A).n == A.n

    def test_all_dirichlet_single_dof(self):
        s = build_space(build_unit_square(2), P1)
        A = constrain(s, assemble_stiffness(s))
        assert A.n == 1
        assert np.array_equal(A.dof_map, s.free_dofs)

    def test_constrained_stiffness_positive_definite(self):
        s = build_space(build_unit_square(4), P1)
        A = constrain(s, assemble_stiffness(s)).toarray()
        assert np.linalg.eigvalsh(A).min() > 0


class TestAveraging:
    def test_continuous_linear_unchanged(self):
        m = build_unit_square(3, tags=N)
        s = build_space(m, CR)
        u = interpolate(s, lambda x, y: 1.0 + 2.0 * x - y)
        avg = cr_to_p1_average(u)
        assert np.allclose(avg.coefficients,
                           1.0 + 2.0 * m.vertices[:, 0] - m.vertices[:, 1],
                           atol=1e-13)

    def test_vertex_mean_of_element_limits(self):
        # oracle: recompute the per-triangle vertex limits by hand
        # (value at local vertex i is sum(edge dofs) - 2 * dof opposite i)
        # and average them per vertex
        m = build_unit_square(2, tags=N)
        s = build_space(m, CR)
        rng = np.random.default_rng(4)
        u = FeFunction(s, rng.standard_normal(s.ndof))
        avg = cr_to_p1_average(u)
        acc = np.zeros(m.n_vertices)
        cnt = np.zeros(m.n_vertices)
        for t in range(m.n_triangles):
            c = u.coefficients[s.cell_dofs[t]]
            for i, v in enumerate(m.triangles[t]):
                acc[v] += c.sum() - 2.0 * c[i]
                cnt[v] += 1
        assert np.allclose(avg.coefficients, acc / cnt, atol=1e-13)

    def test_two_element_mean_on_shared_edge(self):
        # dofs of triangle 0 set to one: the function is 1 on triangle 0
        # and equals the shared-edge basis function on triangle 1, so both
        # limits at the shared vertices are 1 and the opposite vertex of
        # triangle 1 sees -1
        m = build_unit_square(1, tags=N)
        s = build_space(m, CR)
        coeffs = np.zeros(s.ndof)
        coeffs[s.cell_dofs[0]] = 1.0
        avg = cr_to_p1_average(FeFunction(s, coeffs))
        shared = set(m.triangles[0]) & set(m.triangles[1])
        only_t1 = set(m.triangles[1]) - set(m.triangles[0])
        for v in shared:
            assert np.isclose(avg.coefficients[v], 1.0)
        for v in only_t1:
            assert np.isclose(avg.coefficients[v], -1.0)

    def test_dirichlet_constraint_exact(self):
        m = build_unit_square(3)
        s = build_space(m, CR)
        u = interpolate(s, lambda x, y: 1.0 + x * y)
        avg = cr_to_p1_average(u)
        assert np.all(avg.coefficients[avg.space.constrained_dofs] == 0.0)


class TestRayleighQuotient:
    def test_eigenvector_recovers_eigenvalue(self):
        import scipy.linalg
        s = build_space(build_unit_square(3), P1)
        A = constrain(s, assemble_stiffness(s))
        M = constrain(s, assemble_mass(s))
        w, V = scipy.linalg.eigh(A.toarray(), M.toarray())
        rq = rayleigh_quotient(V[:, 0], A, M)
        assert np.isclose(rq, w[0], rtol=1e-10)

    def test_minmax_lower_bound(self):
        import scipy.linalg
        s = build_space(build_unit_square(3), P1)
        A = constrain(s, assemble_stiffness(s))
        M = constrain(s, assemble_mass(s))
        lam_min = scipy.linalg.eigh(A.toarray(), M.toarray(),
                                    eigvals_only=True)[0]
        rng = np.random.default_rng(0)
        for _ in range(5):
            v = rng.standard_normal(A.n)
            assert rayleigh_quotient(v, A, M) >= lam_min - 1e-10

    def test_sine_interpolant_monotone_upper_bound(self):
        vals = []
        for n in (16, 32):
            s = build_space(build_unit_square(n), P1)
            u = interpolate(s, lambda x, y: np.sin(np.pi * x)
                            * np.sin(np.pi * y))
            vals.append(rayleigh_quotient(u, assemble_stiffness(s),
                                          assemble_mass(s)))
        exact = 2 * math.pi ** 2
        assert vals[0] >= exact and vals[1] >= exact
        assert vals[1] < vals[0]
        assert vals[1] - exact < 0.01 * exact

    def test_zero_norm_rejected(self):
        s = build_space(build_unit_square(2), P1)
        A = assemble_stiffness(s)
        M = assemble_mass(s)
        with pytest.raises(ValueError):
            rayleigh_quotient(np.zeros(s.ndof), A, M)


class TestL2Error:
    def test_self_distance_zero(self):
        s = build_space(build_unit_square(3), P1)
        u = interpolate(s, lambda x, y: x * y)
        assert l2_error(u, FeFunction(s, u.coefficients.copy())) == 0.0

    def test_zero_vs_sine_product(self):
        s = build_space(build_unit_square(16), P1)
        u = FeFunction(s, np.zeros(s.ndof))
        err = l2_error(u, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
                       degree=8)
        assert np.isclose(err, 0.5, atol=2e-4)   # sqrt(1/4 * 1/4 * 4) = 1/2

    def test_interpolation_rate(self):
        errs, hs = [], []
        fn = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
        for n in (4, 8, 16, 32):
            s = build_space(build_unit_square(n), P1)
            errs.append(l2_error(interpolate(s, fn), fn, degree=6))
            hs.append(math.sqrt(2) / n)
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert abs(slope - 2.0) <= 0.2

    def test_nested_reference_matches_callable(self):
        fn = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
        coarse = build_unit_square(4)
        fine = refine_uniform(refine_uniform(coarse))
        u = interpolate(build_space(coarse, P1), fn)
        ref = interpolate(build_space(fine, P1), fn)
        e_nested = l2_error(u, ref)
        e_callable = l2_error(u, fn)
        assert abs(e_nested - e_callable) < 0.15 * e_callable

    def test_nested_cr_broken_evaluation(self):
        fn = lambda x, y: x * (1 - x) * y
        coarse = build_unit_square(4)
        fine = refine_uniform(coarse)
        u = interpolate(build_space(coarse, CR), fn)
        ref = interpolate(build_space(fine, P1), fn)
        assert l2_error(u, ref) < 0.05

    def test_non_nested_rejected(self):
        u = interpolate(build_space(build_unit_square(4), P1),
                        lambda x, y: x)
        ref = interpolate(build_space(build_unit_square(6), P1),
                          lambda x, y: x)
        with pytest.raises(ValueError):
            l2_error(u, ref)


class TestGalerkinEnergy:
    exact = staticmethod(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    rhs = staticmethod(lambda x, y: 2 * math.pi ** 2 * np.sin(np.pi * x)
                       * np.sin(np.pi * y))

    def test_conforming_energy_below_interpolant(self):
        # Galerkin orthogonality: the discrete Laplace solution minimizes
        # the energy of the error, hence its own energy stays below the
        # interpolant's (conforming family)
        for n in (4, 8, 16):
            s = build_space(build_unit_square(n), P1)
            uh = laplace_solution(s, self.rhs)
            Iu = interpolate(s, self.exact).coefficients
            Iu[s.constrained_dofs] = 0.0
            A = assemble_stiffness(s)
            assert uh.coefficients @ (A @ uh.coefficients) <= \
                Iu @ (A @ Iu) + 1e-12

    def test_variational_minimality_both_families(self):
        # u_h minimizes J(v) = a(v,v)/2 - (f,v) over the discrete space,
        # which is the orthogonality surrogate valid for CR as well
        for fam in (P1, CR):
            for n in (4, 8):
                s = build_space(build_unit_square(n), fam)
                uh = laplace_solution(s, self.rhs)
                Iu = interpolate(s, self.exact).coefficients
                Iu[s.constrained_dofs] = 0.0
                A = assemble_stiffness(s)
                b = assemble_load(s, self.rhs, degree=6)
                J = lambda c: 0.5 * c @ (A @ c) - b @ c
                assert J(uh.coefficients) <= J(Iu) + 1e-12


class TestCsvExport:
    def test_fe_function_csv(self):
        s = build_space(build_unit_square(1, tags=N), P1)
        u = interpolate(s, lambda x, y: x)
        lines = u.to_csv().strip().splitlines()
        assert lines[0] == "index,value"
        assert len(lines) == 1 + s.ndof
        idx, val = lines[1].split(",")
        assert float(val) == u.coefficients[int(idx)]


class TestElementEvaluation:
    def test_gradients_of_linear_interpolant(self):
        s = build_space(build_unit_square(3, tags=N), P1)
        u = interpolate(s, lambda x, y: 2.0 * x - 3.0 * y)
        bary = np.array([[1 / 3, 1 / 3, 1 / 3]])
        g = u.gradients_on_elements(bary)
        assert np.allclose(g[:, 0, 0], 2.0, atol=1e-13)
        assert np.allclose(g[:, 0, 1], -3.0, atol=1e-13)

    def test_p2_values_reproduce_quadratic(self):
        s = build_space(build_unit_square(2, tags=N), P2)
        fn = lambda x, y: x * y + x ** 2
        u = interpolate(s, fn)
        bary = np.array([[0.2, 0.5, 0.3], [1 / 3, 1 / 3, 1 / 3]])
        pts = np.einsum("qk,tkd->tqd", bary,
                        s.mesh.vertices[s.mesh.triangles])
        vals = u.values_on_elements(bary)
        assert np.allclose(vals, fn(pts[..., 0], pts[..., 1]), atol=1e-13)
