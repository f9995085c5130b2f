"""Eigenvalue ladders, the stability criterion, and guaranteed CR bounds.

The central object is the ordered ladder of discrete Laplace eigenvalues on
the free (Dirichlet-constrained) space.  A wave number k^2 placed strictly
between two consecutive ladder values makes the Helmholtz bilinear form
stable (sign-flipping coercivity) with an explicit constant; for
Crouzeix-Raviart discretizations the ladder can additionally be enclosed by
guaranteed lower and upper bounds, which allows estimating and certifying
the number of continuous eigenvalues below k^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import global_mesh_size
from .spaces import (CR, P1, DofSpace, ElementFamily, FeFunction, build_space,
                     assemble_mass, assemble_stiffness, constrain,
                     cr_to_p1_average, expand_free, rayleigh_quotient)
from .sparsela import (EigenSolveOptions, SparseSymMatrix, count_below,
                       eigs_smallest)

DEFAULT_KAPPA = 0.1932


class LadderExhaustedError(RuntimeError):
    """The eigenvalue ladder is too short for the requested estimate."""


@dataclass
class EigenSet:
    """Ascending generalized eigenpairs of the constrained Laplace pencil.

    ``vectors`` holds free-dof eigenvector columns; ``eigenfunction(i)``
    embeds pair ``i`` (1-based, like the ladder) into the full dof set.
    """

    space: DofSpace
    mesh_fingerprint: str
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    stiffness: SparseSymMatrix = field(repr=False)
    mass: SparseSymMatrix = field(repr=False)

    @property
    def family(self) -> ElementFamily:
        return self.space.family

    def __len__(self) -> int:
        return len(self.values)

    def eigenfunction(self, i: int) -> FeFunction:
        if not 1 <= i <= len(self):
            raise IndexError(f"eigenpair index {i} out of range 1..{len(self)}")
        return FeFunction(self.space,
                          expand_free(self.space, self.vectors[:, i - 1]))


@dataclass(frozen=True)
class BoundedEigen:
    """A discrete eigenvalue with guaranteed lower/upper reference values."""

    lam: float
    lower: float
    upper: float
    separation_ok: bool


@dataclass(frozen=True)
class IndexEstimate:
    """Estimated index j* with certification state."""

    j_star: int
    certified: bool
    gap_to_k2: float        # k^2 - lambda_h^(j*)
    enclosure_width: float  # upper - lower at j*


@dataclass(frozen=True)
class Criterion:
    """Outcome of the two-sided ladder check at a wave number."""

    k2: float
    i_star: int
    lambda_lo: float
    lambda_hi: float
    satisfied: bool
    alpha_star: float


def eigen_ladder(space: DofSpace, k2: float, extra: int = 3,
                 opts: EigenSolveOptions | None = None,
                 min_pairs: int = 0) -> EigenSet:
    """Eigenpairs up to one past the wave number, plus ``extra`` more.

    The ladder length is ``count_below(k2) + extra + 1`` (clamped to the
    space dimension), which is enough to evaluate both the criterion and
    the averaged residual indicator.
    """
    if space.n_free == 0:
        raise ValueError("space has no free degrees of freedom")
    A = constrain(space, assemble_stiffness(space))
    M = constrain(space, assemble_mass(space))
    below = count_below(A, M, k2)
    m = min(max(below + extra + 1, min_pairs), space.n_free)
    base = opts or EigenSolveOptions()
    res = eigs_smallest(A, M, EigenSolveOptions(
        m=m, tol=base.tol, max_iter=base.max_iter, block=base.block,
        seed=base.seed))
    return EigenSet(space, space.mesh.fingerprint(), res.values, res.vectors,
                    res.residuals, A, M)


def check_criterion(E: EigenSet, k2: float, i_star: int) -> Criterion:
    """Check lambda^(i*) < k^2 < lambda^(i*+1) on the ladder.

    ``i_star = 0`` means k^2 is expected below the whole spectrum and only
    the upper comparison applies.  ``alpha_star`` is the coercivity
    constant min |lambda - k^2| / (1 + lambda) over the available pairs;
    it is meaningful when the criterion holds.
    """
    if i_star < 0:
        raise ValueError("i_star must be >= 0")
    if len(E) < i_star + 1:
        raise ValueError(f"ladder has {len(E)} pairs, need {i_star + 1}")
    lam = E.values
    lambda_lo = float(lam[i_star - 1]) if i_star >= 1 else 0.0
    lambda_hi = float(lam[i_star])
    satisfied = lambda_lo < k2 < lambda_hi if i_star >= 1 else k2 < lambda_hi
    alpha = float(np.min(np.abs(lam - k2) / (1.0 + lam)))
    return Criterion(k2, i_star, lambda_lo, lambda_hi, satisfied, alpha)


def cr_lower_bound(lam: float, h: float,
                   kappa: float = DEFAULT_KAPPA) -> float:
    """Guaranteed lower bound lambda / (1 + kappa^2 lambda h^2).

    Valid for CR eigenvalues under the separation condition; always at most
    ``lam``. ``h`` is the global mesh size (largest element diameter).
    """
    if lam < 0:
        raise ValueError("eigenvalue must be nonnegative")
    if h <= 0:
        raise ValueError("mesh size must be positive")
    return lam / (1.0 + kappa ** 2 * lam * h ** 2)


def separation_ok(h: float, j: int, lam_ref: float,
                  kappa: float = DEFAULT_KAPPA) -> bool:
    """Mesh-size condition h <= (sqrt(1 + 1/j) - 1) / (kappa sqrt(lam_ref)).

    ``lam_ref`` must be an upper reference for the j-th eigenvalue; using a
    larger value only tightens the test, preserving the guarantee.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    if lam_ref <= 0:
        raise ValueError("lam_ref must be positive")
    threshold = (np.sqrt(1.0 + 1.0 / j) - 1.0) / (kappa * np.sqrt(lam_ref))
    return h <= threshold


def cr_upper_bound(e_h: FeFunction, A_p1: SparseSymMatrix,
                   M_p1: SparseSymMatrix) -> float:
    """Upper reference value: Rayleigh quotient of the averaged companion.

    The CR eigenfunction is averaged onto the conforming P1 space (Dirichlet
    vertices zeroed) and its Rayleigh quotient with the P1 matrices is
    returned.  By the min-max principle this is an upper reference for the
    continuous spectrum; it is used for enclosure-width bookkeeping.
    """
    avg = cr_to_p1_average(e_h)
    norm2 = float(avg.coefficients @ (M_p1 @ avg.coefficients))
    if norm2 <= 0.0:
        raise ValueError("averaged eigenfunction vanishes identically")
    return rayleigh_quotient(avg, A_p1, M_p1)


def compute_bounds(E: EigenSet, kappa: float = DEFAULT_KAPPA,
                   p1_space: DofSpace | None = None) -> list[BoundedEigen]:
    """Guaranteed lower bounds and upper references for a CR ladder."""
    if E.family != CR:
        raise ValueError("guaranteed bounds require a Crouzeix-Raviart "
                         "ladder")
    mesh = E.space.mesh
    h = global_mesh_size(mesh)
    if p1_space is None:
        p1_space = build_space(mesh, P1)
    A_p1 = assemble_stiffness(p1_space)
    M_p1 = assemble_mass(p1_space)
    out = []
    for j in range(1, len(E) + 1):
        lam = float(E.values[j - 1])
        lower = cr_lower_bound(lam, h, kappa)
        upper = cr_upper_bound(E.eigenfunction(j), A_p1, M_p1)
        sep = separation_ok(h, j, max(upper, np.finfo(float).tiny),
                            kappa)
        out.append(BoundedEigen(lam, lower, upper, sep))
    return out


def estimate_index(bounds: list[BoundedEigen], k2: float) -> IndexEstimate:
    """Estimate the number of continuous eigenvalues below k^2.

    The guess ``j*`` is the first index whose successor's lower bound
    clears k^2.  The estimate is *certified* when the separation condition
    holds at ``j*`` and ``j*+1`` (so the bounds are guaranteed) and the
    j*-th enclosure is tighter than its distance to k^2: then the true
    eigenvalue lambda^(j*) lies below k^2 while lambda^(j*+1) is
    guaranteed above, so the index can no longer change under refinement.
    """
    if not bounds:
        raise ValueError("empty bounds list")
    j_star = None
    for j in range(len(bounds)):
        if bounds[j].lower >= k2:
            j_star = j
            break
    if j_star is None:
        raise LadderExhaustedError(
            "no lower bound clears k^2; increase j_max or refine the mesh")
    if j_star == 0:
        certified = bounds[0].separation_ok
        return IndexEstimate(0, certified, k2, 0.0)
    b = bounds[j_star - 1]
    gap = k2 - b.lam
    width = b.upper - b.lower
    certified = (b.separation_ok and bounds[j_star].separation_ok
                 and gap > 0.0 and width < gap)
    return IndexEstimate(j_star, certified, gap, width)


def th_coercivity_constant(E: EigenSet, k2: float) -> float:
    """Coercivity constant of the sign-flipped form when the ladder
    brackets k^2; raises when it does not."""
    lam = E.values
    i_star = int((lam < k2).sum())
    if i_star >= len(lam):
        raise ValueError("ladder does not extend past k^2")
    if (lam == k2).any():
        raise ValueError("k^2 coincides with a discrete eigenvalue")
    crit = check_criterion(E, k2, i_star)
    if not crit.satisfied:
        raise ValueError("criterion not satisfied on this ladder")
    return crit.alpha_star
