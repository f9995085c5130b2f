"""Conforming triangular meshes: builders, refinement and text serialization.

A :class:`Mesh` is immutable after construction.  Triangles are stored
counter-clockwise, every interior edge is shared by exactly two triangles,
and every boundary edge carries a Dirichlet or Neumann tag.  Refinement
operations are pure: they return new meshes and never touch their input.
"""

from __future__ import annotations

import enum
import hashlib
from typing import Callable, Iterable

import numpy as np


class BoundaryTag(enum.Enum):
    """Boundary condition marker attached to each boundary edge."""

    DIRICHLET = "D"
    NEUMANN = "N"


# A boundary tag assignment: either one tag for the whole boundary or a
# callable evaluated at the edge midpoint.
TagAssignment = BoundaryTag | Callable[[float, float], BoundaryTag]


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class MeshFormatError(MeshError):
    """Malformed mesh file; ``line`` is the 1-based offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _as_tag_fn(tags: TagAssignment) -> Callable[[float, float], BoundaryTag]:
    if isinstance(tags, BoundaryTag):
        return lambda x, y: tags
    return tags


class Mesh:
    """Conforming triangulation of a polygonal 2D domain.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise vertex indices
    boundary_edges : iterable of ((v0, v1), BoundaryTag)
        Must list exactly the edges adjacent to one triangle.
    refinement_edge : (nt,) int array, optional
        Local index (edge ``k`` is opposite vertex ``k``) of the edge used
        by newest-vertex bisection.  Defaults to the longest edge.
    """

    def __init__(self, vertices, triangles, boundary_edges,
                 refinement_edge=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        if not np.isfinite(self.vertices).all():
            raise MeshError("vertex coordinates must be finite")

        nv = len(self.vertices)
        t = self.triangles
        if t.size and (t.min() < 0 or t.max() >= nv):
            raise MeshError("triangle vertex index out of range")
        if ((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2])
                | (t[:, 0] == t[:, 2])).any():
            raise MeshError("triangle with repeated vertex")
        if (self.signed_areas() <= 0).any():
            bad = int(np.argmin(self.signed_areas()))
            raise MeshError(f"triangle {bad} is not counter-clockwise "
                            "(non-positive signed area)")

        self._build_edge_table()

        pairs = [(min(a, b), max(a, b)) for (a, b), _ in boundary_edges]
        if len(set(pairs)) != len(pairs):
            raise MeshError("duplicate boundary edge (conflicting tags?)")
        computed = {tuple(e) for e in self.edges[self.boundary_edge_ids]}
        if set(pairs) != computed:
            raise MeshError("boundary_edges do not match the edges adjacent "
                            "to exactly one triangle")
        self.edge_tag = np.full(len(self.edges), -1, dtype=np.int8)
        key = {tuple(e): i for i, e in enumerate(self.edges)}
        tag_codes = {BoundaryTag.DIRICHLET: 0, BoundaryTag.NEUMANN: 1}
        for (a, b), tag in boundary_edges:
            self.edge_tag[key[(min(a, b), max(a, b))]] = tag_codes[tag]

        if refinement_edge is None:
            self.refinement_edge = self._longest_edge_init()
        else:
            self.refinement_edge = np.ascontiguousarray(refinement_edge,
                                                        dtype=np.int8)
            if self.refinement_edge.shape != (len(t),):
                raise MeshError("refinement_edge has wrong length")

        for arr in (self.vertices, self.triangles, self.edges, self.tri2edge,
                    self.edge2tri, self.edge_tag, self.refinement_edge):
            arr.flags.writeable = False

    # -- construction helpers -------------------------------------------

    @classmethod
    def from_triangulation(cls, vertices, triangles,
                           tags: TagAssignment = BoundaryTag.DIRICHLET,
                           refinement_edge=None) -> "Mesh":
        """Build a mesh deriving boundary edges and tagging them via `tags`."""
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        tag_fn = _as_tag_fn(tags)
        pairs = _boundary_pairs(triangles)
        boundary = []
        for a, b in pairs:
            mx, my = vertices[[a, b]].mean(axis=0)
            boundary.append(((int(a), int(b)), tag_fn(mx, my)))
        return cls(vertices, triangles, boundary, refinement_edge)

    def _build_edge_table(self):
        t = self.triangles
        # edge k of a triangle is opposite local vertex k
        raw = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        raw.sort(axis=1)
        self.edges, inv, counts = np.unique(
            raw, axis=0, return_inverse=True, return_counts=True)
        if (counts > 2).any():
            raise MeshError("non-conforming mesh: edge shared by more than "
                            "two triangles")
        nt = len(t)
        self.tri2edge = np.column_stack(
            [inv[:nt], inv[nt:2 * nt], inv[2 * nt:]]).astype(np.int64)
        self.edge2tri = np.full((len(self.edges), 2), -1, dtype=np.int64)
        fill = np.zeros(len(self.edges), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        tri_of = np.tile(np.arange(nt), 3)[order]
        eids = inv[order]
        # stable fill: triangle ids ascend within each edge slot
        for e, tri in zip(eids, tri_of):
            self.edge2tri[e, fill[e]] = tri
            fill[e] += 1
        self.boundary_edge_ids = np.flatnonzero(counts == 1)

    def _longest_edge_init(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.stack([
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ], axis=1)
        return np.argmax(lengths, axis=1).astype(np.int8)

    # -- basic queries ---------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edges(self) -> list[tuple[tuple[int, int], BoundaryTag]]:
        """Boundary edges as ((v0, v1), tag), sorted by vertex pair."""
        out = []
        for e in self.boundary_edge_ids:
            a, b = self.edges[e]
            tag = (BoundaryTag.DIRICHLET if self.edge_tag[e] == 0
                   else BoundaryTag.NEUMANN)
            out.append(((int(a), int(b)), tag))
        return out

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def dirichlet_vertices(self) -> np.ndarray:
        """Indices of vertices lying on Dirichlet-tagged boundary edges."""
        d_edges = self.edges[self.edge_tag == 0]
        return np.unique(d_edges)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        h.update(self.edge_tag.tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        return (self.vertices.shape == other.vertices.shape
                and np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.edge_tag, other.edge_tag))

    def __repr__(self) -> str:
        return (f"Mesh(nv={self.n_vertices}, nt={self.n_triangles}, "
                f"ne={self.n_edges})")


def _boundary_pairs(triangles: np.ndarray) -> np.ndarray:
    t = np.asarray(triangles)
    raw = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
    raw.sort(axis=1)
    edges, counts = np.unique(raw, axis=0, return_counts=True)
    return edges[counts == 1]


# -- measures -------------------------------------------------------------

def element_diameters(m: Mesh) -> np.ndarray:
    """Diameter (longest edge length) of every triangle."""
    p = m.vertices[m.triangles]
    lengths = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
    ], axis=1)
    return lengths.max(axis=1)


def element_diameter(m: Mesh, t: int) -> float:
    if not 0 <= t < m.n_triangles:
        raise ValueError(f"triangle id {t} out of range")
    return float(element_diameters(m)[t])


def global_mesh_size(m: Mesh) -> float:
    """Largest element diameter of the mesh."""
    return float(element_diameters(m).max())


def minimum_angle(m: Mesh) -> float:
    """Smallest interior angle over all triangles, in radians."""
    p = m.vertices[m.triangles]
    angles = []
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = (u * v).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return float(np.min(angles))


# -- builders -------------------------------------------------------------

def build_unit_square(n: int,
                      tags: TagAssignment = BoundaryTag.DIRICHLET) -> Mesh:
    """Structured mesh of [0,1]^2 with ``n`` cells per side.

    Each square cell is split along its lower-left to upper-right diagonal,
    giving 2*n^2 triangles and (n+1)^2 vertices.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (iy * (n + 1) + ix).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    return Mesh.from_triangulation(vertices, tris, tags)


def build_unit_square_unstructured(n: int, seed: int = 0,
                                   jitter: float = 0.25,
                                   tags: TagAssignment = BoundaryTag.DIRICHLET,
                                   ) -> Mesh:
    """Irregular Delaunay mesh of [0,1]^2 from a jittered n-by-n grid.

    Interior grid points are displaced by a deterministic pseudo-random
    amount (at most ``jitter`` cell widths), which breaks the directional
    alignment of the structured pattern.  Useful when mesh-direction
    cancellation effects (superconvergence) must be avoided.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 <= jitter < 0.5:
        raise ValueError("jitter must be in [0, 0.5)")
    from scipy.spatial import Delaunay

    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    interior = ((pts[:, 0] > 0) & (pts[:, 0] < 1)
                & (pts[:, 1] > 0) & (pts[:, 1] < 1))
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-jitter / n, jitter / n, size=(interior.sum(), 2))
    pts[interior] += shift
    tri = Delaunay(pts).simplices.astype(np.int64)
    p = pts[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return Mesh.from_triangulation(pts, tri, tags)


def build_square_with_hole(outer: float, inner: float, n: int = 16,
                           outer_tag: BoundaryTag = BoundaryTag.DIRICHLET,
                           inner_tag: BoundaryTag = BoundaryTag.DIRICHLET,
                           ) -> Mesh:
    """Mesh of a square with a concentric square hole, centered at origin.

    ``outer`` and ``inner`` are the side lengths.  ``n`` is the number of
    cells across the outer side; it is rounded up to an even value >= 4 and
    the hole boundary is snapped to the closest grid line.
    """
    if not 0 < inner < outer:
        raise ValueError("need 0 < inner < outer")
    n = max(4, n + (n % 2))
    cell = outer / n
    half = n // 2
    j = int(round((inner / 2) / cell))
    j = min(max(j, 1), half - 1)

    xs = np.linspace(-outer / 2, outer / 2, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    grid = np.column_stack([xx.ravel(), yy.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ix, iy = ix.ravel(), iy.ravel()
    in_hole = ((ix >= half - j) & (ix < half + j)
               & (iy >= half - j) & (iy < half + j))
    ix, iy = ix[~in_hole], iy[~in_hole]
    v00 = iy * (n + 1) + ix
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    tris = np.empty((2 * len(v00), 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])

    used = np.unique(tris)
    renum = np.full(len(grid), -1, dtype=np.int64)
    renum[used] = np.arange(len(used))
    vertices = grid[used]
    tris = renum[tris]

    a = j * cell  # snapped hole half-width
    eps = 1e-12 * max(outer, 1.0)

    def tag_fn(x, y):
        if max(abs(x), abs(y)) <= a + eps:
            return inner_tag
        return outer_tag

    return Mesh.from_triangulation(vertices, tris, tag_fn)


# -- refinement -----------------------------------------------------------

def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: every triangle is split into four similar children.

    The children of parent ``t`` occupy slots ``4*t .. 4*t+3`` of the new
    mesh and the parent's vertices keep their indices, so uniform families
    are nested with a trivial ancestry map.
    """
    nv = m.n_vertices
    mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    vertices = np.vstack([m.vertices, mids])

    a, b, c = m.triangles.T
    m0 = nv + m.tri2edge[:, 0]
    m1 = nv + m.tri2edge[:, 1]
    m2 = nv + m.tri2edge[:, 2]
    nt = m.n_triangles
    tris = np.empty((4 * nt, 3), dtype=np.int64)
    tris[0::4] = np.column_stack([a, m2, m1])
    tris[1::4] = np.column_stack([b, m0, m2])
    tris[2::4] = np.column_stack([c, m1, m0])
    tris[3::4] = np.column_stack([m0, m1, m2])

    boundary = []
    for e in m.boundary_edge_ids:
        va, vb = (int(v) for v in m.edges[e])
        vm = nv + int(e)
        tag = (BoundaryTag.DIRICHLET if m.edge_tag[e] == 0
               else BoundaryTag.NEUMANN)
        boundary.append(((va, vm), tag))
        boundary.append(((vm, vb), tag))
    return Mesh(vertices, tris, boundary)


def refine_bisection(m: Mesh, marked: Iterable[int] | np.ndarray) -> Mesh:
    """Newest-vertex bisection of the marked triangles with closure.

    All three edges of a marked triangle are scheduled for splitting, then
    the marking is closed so that a triangle with any split edge also splits
    its refinement edge.  The result is conforming and the generated
    triangles fall into finitely many similarity classes.
    """
    marked = np.asarray(sorted(set(int(t) for t in marked)), dtype=np.int64)
    if marked.size == 0:
        return m
    if marked.min() < 0 or marked.max() >= m.n_triangles:
        raise ValueError("marked triangle id out of range")

    marked_edge = np.zeros(m.n_edges, dtype=bool)
    marked_edge[m.tri2edge[marked].ravel()] = True

    ref_glob = m.tri2edge[np.arange(m.n_triangles), m.refinement_edge]
    while True:
        has_marked = marked_edge[m.tri2edge].any(axis=1)
        need = has_marked & ~marked_edge[ref_glob]
        if not need.any():
            break
        marked_edge[ref_glob[need]] = True

    nv = m.n_vertices
    new_of_edge = np.full(m.n_edges, -1, dtype=np.int64)
    split_ids = np.flatnonzero(marked_edge)
    new_of_edge[split_ids] = nv + np.arange(len(split_ids))
    mids = 0.5 * (m.vertices[m.edges[split_ids, 0]]
                  + m.vertices[m.edges[split_ids, 1]])
    vertices = np.vstack([m.vertices, mids])

    out_tris: list[np.ndarray] = []
    out_ref: list[int] = []
    tri2edge = m.tri2edge
    triangles = m.triangles
    refloc = m.refinement_edge
    for t in range(m.n_triangles):
        edges_t = tri2edge[t]
        flags = marked_edge[edges_t]
        if not flags.any():
            out_tris.append(triangles[t])
            out_ref.append(int(refloc[t]))
            continue
        r = int(refloc[t])
        # rotate so the refinement edge is opposite local vertex 0
        order = [r, (r + 1) % 3, (r + 2) % 3]
        p, va, vb = (int(v) for v in triangles[t][order])
        e0, e1, e2 = (int(e) for e in edges_t[order])
        m0 = int(new_of_edge[e0])  # closure guarantees e0 is split
        split1 = marked_edge[e1]
        split2 = marked_edge[e2]
        # children of the bisection at m0; ref edges are the parent edges
        if split2:
            m2 = int(new_of_edge[e2])
            out_tris.append(np.array([m0, p, m2]))
            out_ref.append(2)
            out_tris.append(np.array([m0, m2, va]))
            out_ref.append(1)
        else:
            out_tris.append(np.array([p, va, m0]))
            out_ref.append(2)
        if split1:
            m1 = int(new_of_edge[e1])
            out_tris.append(np.array([m0, vb, m1]))
            out_ref.append(2)
            out_tris.append(np.array([m0, m1, p]))
            out_ref.append(1)
        else:
            out_tris.append(np.array([p, m0, vb]))
            out_ref.append(1)
    tris = np.array(out_tris, dtype=np.int64)
    refinement_edge = np.array(out_ref, dtype=np.int8)

    boundary = []
    for e in m.boundary_edge_ids:
        va, vb = (int(v) for v in m.edges[e])
        tag = (BoundaryTag.DIRICHLET if m.edge_tag[e] == 0
               else BoundaryTag.NEUMANN)
        if marked_edge[e]:
            vm = int(new_of_edge[e])
            boundary.append(((va, vm), tag))
            boundary.append(((vm, vb), tag))
        else:
            boundary.append(((va, vb), tag))
    return Mesh(vertices, tris, boundary, refinement_edge)


# -- serialization --------------------------------------------------------

_TAG_IO = {BoundaryTag.DIRICHLET: "D", BoundaryTag.NEUMANN: "N"}
_TAG_PARSE = {"D": BoundaryTag.DIRICHLET, "N": BoundaryTag.NEUMANN}


def write_mesh(m: Mesh) -> str:
    """Serialize a mesh to the line-oriented text format.

    Floats are written with ``repr`` (shortest round-trip decimal), so
    ``read_mesh(write_mesh(m)) == m`` bit-exactly.
    """
    lines = [f"$Vertices {m.n_vertices}"]
    for x, y in m.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    lines.append(f"$Triangles {m.n_triangles}")
    for a, b, c in m.triangles:
        lines.append(f"{a} {b} {c}")
    bedges = m.boundary_edges
    lines.append(f"$BoundaryEdges {len(bedges)}")
    for (a, b), tag in bedges:
        lines.append(f"{a} {b} {_TAG_IO[tag]}")
    return "\n".join(lines) + "\n"


def read_mesh(text: str) -> Mesh:
    """Parse the text format produced by :func:`write_mesh`.

    Raises :class:`MeshFormatError` (with the offending line number) on
    malformed input and :class:`MeshError` if the parsed mesh is invalid.
    """
    stripped: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            stripped.append((lineno, line))
    pos = 0

    def expect_header(name: str) -> int:
        nonlocal pos
        if pos >= len(stripped):
            last = stripped[-1][0] if stripped else 1
            raise MeshFormatError(f"missing section ${name}", last)
        lineno, line = stripped[pos]
        parts = line.split()
        if len(parts) != 2 or parts[0] != f"${name}":
            raise MeshFormatError(f"expected '${name} <count>'", lineno)
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshFormatError(f"bad count in ${name} header", lineno)
        if count < 0:
            raise MeshFormatError(f"negative count in ${name} header", lineno)
        pos += 1
        return count

    def take(count: int, nfields: int, kind: str):
        nonlocal pos
        rows = []
        for _ in range(count):
            if pos >= len(stripped):
                last = stripped[-1][0] if stripped else 1
                raise MeshFormatError(f"unexpected end of {kind} section",
                                      last)
            lineno, line = stripped[pos]
            parts = line.split()
            if len(parts) != nfields:
                raise MeshFormatError(
                    f"expected {nfields} fields in {kind} line", lineno)
            rows.append((lineno, parts))
            pos += 1
        return rows

    nv = expect_header("Vertices")
    vertices = np.empty((nv, 2))
    for i, (lineno, parts) in enumerate(take(nv, 2, "vertex")):
        try:
            vertices[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError("bad vertex coordinate", lineno)

    nt = expect_header("Triangles")
    triangles = np.empty((nt, 3), dtype=np.int64)
    for i, (lineno, parts) in enumerate(take(nt, 3, "triangle")):
        try:
            triangles[i] = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError("bad triangle vertex index", lineno)
        if (triangles[i] < 0).any() or (triangles[i] >= nv).any():
            raise MeshFormatError(
                f"triangle vertex index out of range (0..{nv - 1})", lineno)

    nb = expect_header("BoundaryEdges")
    boundary = []
    for lineno, parts in take(nb, 3, "boundary edge"):
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise MeshFormatError("bad boundary edge vertex index", lineno)
        if not (0 <= a < nv and 0 <= b < nv):
            raise MeshFormatError(
                f"boundary edge vertex index out of range (0..{nv - 1})",
                lineno)
        if parts[2] not in _TAG_PARSE:
            raise MeshFormatError(f"unknown boundary tag {parts[2]!r} "
                                  "(expected D or N)", lineno)
        boundary.append(((a, b), _TAG_PARSE[parts[2]]))
    if pos != len(stripped):
        raise MeshFormatError("trailing content after $BoundaryEdges section",
                              stripped[pos][0])
    return Mesh(vertices, triangles, boundary)
