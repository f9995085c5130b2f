"""Finite element spaces and assembly on triangular meshes.

Supported families: H1-conforming Lagrange elements of order 1 and 2, and
the nonconforming Crouzeix-Raviart element (piecewise linear, continuous at
edge midpoints).  Dirichlet conditions are imposed by restricting to the
free degrees of freedom, which keeps stiffness/mass pencils symmetric
definite for the eigensolver.

All stiffness and mass entries are integrated exactly (the integrands are
polynomial); load vectors and L2 errors use quadrature of selectable degree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .quadrature import triangle_rule
from .sparsela import SparseSymMatrix

import scipy.sparse as sp


@dataclass(frozen=True)
class ElementFamily:
    """Element family: Lagrange of order p in {1, 2} or Crouzeix-Raviart."""

    kind: str       # "lagrange" | "crouzeix_raviart"
    degree: int

    def __post_init__(self):
        if self.kind == "lagrange":
            if self.degree not in (1, 2):
                raise ValueError("Lagrange order must be 1 or 2")
        elif self.kind == "crouzeix_raviart":
            if self.degree != 1:
                raise ValueError("Crouzeix-Raviart is first order only")
        else:
            raise ValueError(f"unknown element family {self.kind!r}")

    @property
    def is_conforming(self) -> bool:
        return self.kind == "lagrange"

    def __str__(self) -> str:
        if self.kind == "lagrange":
            return f"p{self.degree}"
        return "cr"


P1 = ElementFamily("lagrange", 1)
P2 = ElementFamily("lagrange", 2)
CR = ElementFamily("crouzeix_raviart", 1)

_FAMILY_NAMES = {"p1": P1, "p2": P2, "cr": CR}


def family_from_name(name: str) -> ElementFamily:
    try:
        return _FAMILY_NAMES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown element family {name!r} "
                         "(expected p1, p2 or cr)")


def shape_values(family: ElementFamily, lam: np.ndarray) -> np.ndarray:
    """Basis values at barycentric points; output shape lam.shape[:-1]+(nloc,).

    Local ordering: Lagrange(1) vertex dofs; Lagrange(2) vertex dofs then
    edge-midpoint dofs (edge k opposite vertex k); CR edge-midpoint dofs.
    """
    lam = np.asarray(lam, dtype=np.float64)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    if family == P1:
        return np.stack([l0, l1, l2], axis=-1)
    if family == CR:
        return np.stack([1 - 2 * l0, 1 - 2 * l1, 1 - 2 * l2], axis=-1)
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ], axis=-1)


def shape_gradients(family: ElementFamily, lam: np.ndarray) -> np.ndarray:
    """d(basis)/d(lambda_j) at barycentric points; shape (..., nloc, 3)."""
    lam = np.asarray(lam, dtype=np.float64)
    q = lam.shape[:-1]
    if family == P1:
        return np.broadcast_to(np.eye(3), q + (3, 3)).copy()
    if family == CR:
        return np.broadcast_to(-2.0 * np.eye(3), q + (3, 3)).copy()
    out = np.zeros(q + (6, 3))
    for i in range(3):
        out[..., i, i] = 4 * lam[..., i] - 1
        j, k = (i + 1) % 3, (i + 2) % 3
        out[..., 3 + i, j] = 4 * lam[..., k]
        out[..., 3 + i, k] = 4 * lam[..., j]
    return out


class DofSpace:
    """Degrees of freedom of one element family on a mesh.

    Attributes
    ----------
    ndof : total number of degrees of freedom
    cell_dofs : (nt, nloc) global dof indices per triangle
    locations : (ndof, 2) geometric dof positions
    free_dofs / constrained_dofs : partition induced by Dirichlet tags
    """

    def __init__(self, mesh: Mesh, family: ElementFamily):
        self.mesh = mesh
        self.family = family
        nv, ne = mesh.n_vertices, mesh.n_edges
        midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                           + mesh.vertices[mesh.edges[:, 1]])
        d_edges = np.flatnonzero(mesh.edge_tag == 0)
        if family == P1:
            self.ndof = nv
            self.cell_dofs = mesh.triangles.copy()
            self.locations = mesh.vertices.copy()
            constrained = mesh.dirichlet_vertices()
        elif family == CR:
            self.ndof = ne
            self.cell_dofs = mesh.tri2edge.copy()
            self.locations = midpoints
            constrained = d_edges
        else:  # P2
            self.ndof = nv + ne
            self.cell_dofs = np.hstack([mesh.triangles,
                                        nv + mesh.tri2edge])
            self.locations = np.vstack([mesh.vertices, midpoints])
            constrained = np.concatenate([mesh.dirichlet_vertices(),
                                          nv + d_edges])
        mask = np.zeros(self.ndof, dtype=bool)
        mask[constrained] = True
        self.constrained_dofs = np.flatnonzero(mask)
        self.free_dofs = np.flatnonzero(~mask)

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    def __repr__(self) -> str:
        return (f"DofSpace({self.family}, ndof={self.ndof}, "
                f"free={self.n_free})")


def build_space(mesh: Mesh, family: ElementFamily) -> DofSpace:
    """DOF space for ``family`` on ``mesh``, constrained on Dirichlet tags."""
    return DofSpace(mesh, family)


@dataclass
class FeFunction:
    """Finite element function: a space plus one coefficient per dof."""

    space: DofSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape != (self.space.ndof,):
            raise ValueError("coefficient length does not match the space")

    def values_on_elements(self, bary: np.ndarray) -> np.ndarray:
        """Values at barycentric points of every element; shape (nt, q)."""
        N = shape_values(self.space.family, bary)
        c = self.coefficients[self.space.cell_dofs]
        return np.einsum("qm,tm->tq", N, c)

    def gradients_on_elements(self, bary: np.ndarray) -> np.ndarray:
        """Gradients at barycentric points of every element; (nt, q, 2)."""
        dN = shape_gradients(self.space.family, bary)
        G, _ = _geometry(self.space.mesh)
        c = self.coefficients[self.space.cell_dofs]
        return np.einsum("qmj,tjd,tm->tqd", dN, G, c)

    def to_csv(self) -> str:
        lines = ["index,value"]
        lines += [f"{i},{float(v)!r}" for i, v in enumerate(self.coefficients)]
        return "\n".join(lines) + "\n"


def _geometry(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric gradients (nt, 3, 2) and areas (nt,)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    two_area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    G = np.empty((len(p), 3, 2))
    for i in range(3):
        e = p[:, (i + 1) % 3] - p[:, (i + 2) % 3]
        G[:, i, 0] = e[:, 1]
        G[:, i, 1] = -e[:, 0]
    G /= two_area[:, None, None]
    return G, 0.5 * two_area


def _scatter(space: DofSpace, local: np.ndarray) -> SparseSymMatrix:
    nloc = space.cell_dofs.shape[1]
    rows = np.repeat(space.cell_dofs, nloc, axis=1).ravel()
    cols = np.tile(space.cell_dofs, (1, nloc)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(space.ndof, space.ndof))
    return SparseSymMatrix(mat.tocsr())


def assemble_stiffness(space: DofSpace) -> SparseSymMatrix:
    """Global stiffness matrix (broken gradients for CR); exact entries."""
    mesh = space.mesh
    G, areas = _geometry(mesh)
    if (areas <= 0).any():
        raise ValueError("degenerate triangle in mesh")
    fam = space.family
    if fam == P1:
        local = np.einsum("tjd,tkd,t->tjk", G, G, areas)
    elif fam == CR:
        local = 4.0 * np.einsum("tjd,tkd,t->tjk", G, G, areas)
    else:
        rule = triangle_rule(2)   # gradients of P2 are linear
        dN = shape_gradients(fam, rule.points)          # (q, 6, 3)
        B = np.einsum("qmj,tjd->tqmd", dN, G)           # physical gradients
        local = np.einsum("tqmd,tqnd,q,t->tmn", B, B, rule.weights, areas)
    return _scatter(space, local)


def assemble_mass(space: DofSpace) -> SparseSymMatrix:
    """Global mass matrix; exact entries (diagonal for CR)."""
    _, areas = _geometry(space.mesh)
    if (areas <= 0).any():
        raise ValueError("degenerate triangle in mesh")
    fam = space.family
    if fam == P1:
        ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    elif fam == CR:
        ref = np.eye(3) / 3.0
    else:
        rule = triangle_rule(4)   # products of P2 basis are quartic
        N = shape_values(fam, rule.points)
        ref = np.einsum("qm,qn,q->mn", N, N, rule.weights)
    local = ref[None, :, :] * areas[:, None, None]
    return _scatter(space, local)


def assemble_load(space: DofSpace, f, degree: int = 4) -> np.ndarray:
    """Load vector with entries ``int f * phi_i`` by quadrature.

    ``f`` is called as ``f(x, y)`` on coordinate arrays; scalar-only
    callables are vectorized transparently.
    """
    rule = triangle_rule(max(degree, 4))
    mesh = space.mesh
    _, areas = _geometry(mesh)
    pts = np.einsum("qk,tkd->tqd", rule.points, mesh.vertices[mesh.triangles])
    fvals = _eval_rhs(f, pts[..., 0], pts[..., 1])
    N = shape_values(space.family, rule.points)
    local = np.einsum("tq,qm,q,t->tm", fvals, N, rule.weights, areas)
    b = np.zeros(space.ndof)
    np.add.at(b, space.cell_dofs.ravel(), local.ravel())
    return b


def _eval_rhs(f, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    vals = f(x, y)
    vals = np.asarray(vals, dtype=np.float64)
    if vals.shape != x.shape:
        vals = np.vectorize(f)(x, y).astype(np.float64)
    return vals


def constrain(space: DofSpace, A: SparseSymMatrix) -> SparseSymMatrix:
    """Restrict a matrix assembled on all dofs to the free x free block.

    The free-to-full index map is retained on the result (``dof_map``).
    """
    if A.n != space.ndof:
        raise ValueError("matrix dimension does not match the space")
    free = space.free_dofs
    sub = A.to_scipy()[free][:, free]
    return SparseSymMatrix(sub, dof_map=free.copy())


def constrain_vector(space: DofSpace, b: np.ndarray) -> np.ndarray:
    return np.asarray(b)[space.free_dofs]


def expand_free(space: DofSpace, x_free: np.ndarray) -> np.ndarray:
    """Embed free-dof coefficients into the full dof set (zeros elsewhere)."""
    full = np.zeros(space.ndof)
    full[space.free_dofs] = x_free
    return full


def interpolate(space: DofSpace, fn) -> FeFunction:
    """Nodal interpolant: evaluate ``fn`` at the dof locations."""
    x, y = space.locations[:, 0], space.locations[:, 1]
    return FeFunction(space, _eval_rhs(fn, x, y))


def cr_to_p1_average(u: FeFunction,
                     p1_space: DofSpace | None = None) -> FeFunction:
    """Conforming companion of a CR function by vertex averaging.

    Each vertex receives the arithmetic mean of the elementwise limits of
    ``u`` at that vertex; vertices on the Dirichlet boundary are set to 0,
    so the result satisfies the constraint exactly.
    """
    if u.space.family != CR:
        raise ValueError("input must be a Crouzeix-Raviart function")
    mesh = u.space.mesh
    if p1_space is None:
        p1_space = build_space(mesh, P1)
    elif p1_space.mesh is not mesh or p1_space.family != P1:
        raise ValueError("p1_space must be a Lagrange(1) space on the "
                         "same mesh")
    c = u.coefficients[u.space.cell_dofs]       # (nt, 3), dof i opp vertex i
    # value at local vertex i equals sum(c) - 2*c_i
    vertex_vals = c.sum(axis=1, keepdims=True) - 2.0 * c
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    np.add.at(acc, mesh.triangles.ravel(), vertex_vals.ravel())
    np.add.at(cnt, mesh.triangles.ravel(), 1.0)
    vals = acc / np.maximum(cnt, 1.0)
    vals[mesh.dirichlet_vertices()] = 0.0
    return FeFunction(p1_space, vals)


def rayleigh_quotient(u, A: SparseSymMatrix, M: SparseSymMatrix) -> float:
    """(u^T A u) / (u^T M u); fails on zero M-norm."""
    c = u.coefficients if isinstance(u, FeFunction) else np.asarray(u)
    den = float(c @ (M @ c))
    if den <= 0.0:
        raise ValueError("Rayleigh quotient of a function with zero M-norm")
    return float(c @ (A @ c)) / den


def _nesting_level(coarse: Mesh, fine: Mesh) -> int:
    ratio = fine.n_triangles / coarse.n_triangles
    k = round(np.log(ratio) / np.log(4.0)) if ratio > 1 else 0
    if coarse.n_triangles * 4 ** k != fine.n_triangles:
        raise ValueError("meshes are not a uniform refinement pair")
    if not np.array_equal(coarse.vertices,
                          fine.vertices[:coarse.n_vertices]):
        raise ValueError("meshes are not nested")
    return k


def l2_error(u: FeFunction, ref, degree: int = 4) -> float:
    """L2 distance between ``u`` and a reference.

    ``ref`` is either a callable ``ref(x, y)`` or an FeFunction living on a
    uniform refinement descendant of ``u``'s mesh; integration is always
    elementwise on the finer mesh (broken evaluation, valid for CR).
    """
    rule = triangle_rule(max(degree, 4))
    if callable(ref) and not isinstance(ref, FeFunction):
        mesh = u.space.mesh
        _, areas = _geometry(mesh)
        pts = np.einsum("qk,tkd->tqd", rule.points,
                        mesh.vertices[mesh.triangles])
        diff = u.values_on_elements(rule.points) - _eval_rhs(
            ref, pts[..., 0], pts[..., 1])
        return float(np.sqrt(np.einsum("tq,q,t->", diff ** 2,
                                       rule.weights, areas)))
    if not isinstance(ref, FeFunction):
        raise TypeError("ref must be callable or an FeFunction")
    fine = ref.space.mesh
    coarse = u.space.mesh
    level = _nesting_level(coarse, fine)
    _, areas = _geometry(fine)
    if level == 0 and u.space.family == ref.space.family:
        diff = (u.values_on_elements(rule.points)
                - ref.values_on_elements(rule.points))
        return float(np.sqrt(np.einsum("tq,q,t->", diff ** 2,
                                       rule.weights, areas)))
    pts = np.einsum("qk,tkd->tqd", rule.points, fine.vertices[fine.triangles])
    ancestors = np.arange(fine.n_triangles) // 4 ** level
    lam = _barycentric_in(coarse, ancestors, pts)
    N = shape_values(u.space.family, lam)                     # (nt, q, nloc)
    cu = u.coefficients[u.space.cell_dofs[ancestors]]         # (nt, nloc)
    uvals = np.einsum("tqm,tm->tq", N, cu)
    diff = uvals - ref.values_on_elements(rule.points)
    return float(np.sqrt(np.einsum("tq,q,t->", diff ** 2,
                                   rule.weights, areas)))


def _barycentric_in(mesh: Mesh, tri_ids: np.ndarray,
                    pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``pts`` (nt, q, 2) in the given triangles."""
    p = mesh.vertices[mesh.triangles[tri_ids]]     # (nt, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])[:, None]
    r = pts - p[:, None, 0, :]
    l1 = (r[..., 0] * d2[:, None, 1] - r[..., 1] * d2[:, None, 0]) / det
    l2 = (d1[:, None, 0] * r[..., 1] - d1[:, None, 1] * r[..., 0]) / det
    if (l1 < -1e-9).any() or (l2 < -1e-9).any() \
            or (l1 + l2 > 1 + 1e-9).any():
        raise ValueError("point outside its claimed ancestor triangle; "
                         "meshes are not nested")
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
