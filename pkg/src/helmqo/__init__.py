"""Guaranteed quasi-optimal mesh refinement for self-adjoint Helmholtz
finite element problems on triangular meshes.

The toolkit assembles P1/P2 conforming and Crouzeix-Raviart discretizations,
computes the smallest Laplace eigenvalues with guaranteed bounds, and
refines meshes (uniformly or adaptively) until the wave number is bracketed
by consecutive discrete eigenvalues, which certifies stability of the
Helmholtz discretization.
"""

from .mesh import (BoundaryTag, Mesh, MeshError, MeshFormatError,
                   build_square_with_hole, build_unit_square,
                   build_unit_square_unstructured, element_diameter,
                   element_diameters, global_mesh_size, minimum_angle,
                   read_mesh, refine_bisection, refine_uniform, write_mesh)
from .quadrature import QuadratureRule, triangle_rule
from .spaces import (CR, P1, P2, DofSpace, ElementFamily, FeFunction,
                     assemble_load, assemble_mass, assemble_stiffness,
                     build_space, constrain, constrain_vector,
                     cr_to_p1_average, expand_free, family_from_name,
                     interpolate, l2_error, rayleigh_quotient)
from .sparsela import (EigenResult, EigenSolveError, EigenSolveOptions,
                       Factorization, FactorizationError, ResonanceError,
                       SparseSymMatrix, count_below, eigs_smallest, ldlt,
                       solve)
from .spectral import (BoundedEigen, Criterion, EigenSet, IndexEstimate,
                       LadderExhaustedError, check_criterion, compute_bounds,
                       cr_lower_bound, cr_upper_bound, eigen_ladder,
                       estimate_index, separation_ok, th_coercivity_constant)
from .estimator import (IndicatorField, mark_dorfler, mark_half_max,
                        residual_indicator)
from .certify import (CertificationReport, GaussianBump, IterationRecord,
                      ProblemSpec, SineProduct, StudyRecord,
                      convergence_study, run_gmr, sine_series_reference,
                      solve_helmholtz, study_to_csv, unit_square_index,
                      unit_square_spectrum)

__version__ = "0.1.0"
