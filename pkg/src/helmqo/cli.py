"""Command-line interface: mesh generation, eigen analysis, certification
runs and convergence studies.

Exit codes: 0 success, 2 argument errors, 3 file errors, 4 eigensolver
failure, 5 refinement budget exhausted (partial CSV is still written),
6 resonant wave number.  The environment variable ``HQO_SEED`` overrides
the default seed 0; ``--seed`` overrides both.  All numeric output uses
shortest round-trip decimals, so identical invocations produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys

from .mesh import (BoundaryTag, MeshError, build_square_with_hole,
                   build_unit_square, build_unit_square_unstructured,
                   global_mesh_size, read_mesh, write_mesh)
from .spaces import (CR, ElementFamily, assemble_mass, assemble_stiffness,
                     build_space, constrain, family_from_name)
from .sparsela import (EigenSolveError, EigenSolveOptions, ResonanceError,
                       eigs_smallest)
from .spectral import DEFAULT_KAPPA, EigenSet, compute_bounds
from .certify import (GaussianBump, ProblemSpec, SineProduct,
                      convergence_study, run_gmr, study_to_csv, _fmt)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FILE = 3
EXIT_EIGEN = 4
EXIT_BUDGET = 5
EXIT_RESONANCE = 6


class UsageError(ValueError):
    pass


def _default_seed() -> int:
    env = os.environ.get("HQO_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"HQO_SEED must be an integer, got {env!r}")


def _resolve_family(args) -> ElementFamily:
    fam = family_from_name(args.family)
    p = getattr(args, "p", None)
    if p is not None:
        if fam == CR:
            raise UsageError("--p applies to the conforming family only")
        fam = family_from_name(f"p{p}")
    return fam


def _tag(name: str) -> BoundaryTag:
    try:
        return {"dirichlet": BoundaryTag.DIRICHLET,
                "neumann": BoundaryTag.NEUMANN}[name.lower()]
    except KeyError:
        raise UsageError(f"unknown boundary tag {name!r}")


def _build_geometry(args):
    if getattr(args, "mesh", None):
        with open(args.mesh, encoding="utf-8") as fh:
            return read_mesh(fh.read())
    geom = args.geometry
    if geom is None:
        raise UsageError("either --mesh or --geometry is required")
    if geom == "unit-square":
        return build_unit_square(args.n, _tag(args.tag))
    if geom == "unit-square-unstructured":
        return build_unit_square_unstructured(args.n, seed=args.seed,
                                              tags=_tag(args.tag))
    if geom == "square-hole":
        return build_square_with_hole(
            args.outer, args.inner, args.n,
            outer_tag=_tag(args.outer_tag or args.tag),
            inner_tag=_tag(args.inner_tag or args.tag))
    raise UsageError(f"unknown geometry {geom!r}")


def _parse_rhs(args):
    kind = getattr(args, "rhs", None) or "sine-product"
    if kind == "gaussian-bump":
        cx, cy = args.rhs_center
        return GaussianBump(args.rhs_amplitude, args.rhs_width, (cx, cy))
    if kind == "sine-product":
        modes = []
        for part in args.rhs_modes.split(";"):
            bits = part.split(",")
            if len(bits) != 3:
                raise UsageError("--rhs-modes expects 'i,j,coef;i,j,coef;…'")
            modes.append((int(bits[0]), int(bits[1]), float(bits[2])))
        return SineProduct(tuple(modes))
    raise UsageError(f"unknown rhs kind {kind!r}")


def _add_geometry_args(p: argparse.ArgumentParser, with_mesh: bool = True):
    if with_mesh:
        p.add_argument("--mesh", metavar="FILE",
                       help="read the mesh from FILE instead of building one")
    p.add_argument("--geometry",
                   choices=["unit-square", "unit-square-unstructured",
                            "square-hole"],
                   help="built-in geometry to mesh")
    p.add_argument("--n", type=int, default=8,
                   help="resolution (cells per side) of built-in geometries")
    p.add_argument("--outer", type=float, default=1.0,
                   help="outer side length (square-hole)")
    p.add_argument("--inner", type=float, default=0.5,
                   help="inner hole side length (square-hole)")
    p.add_argument("--tag", default="dirichlet",
                   choices=["dirichlet", "neumann"],
                   help="boundary tag for all boundary edges")
    p.add_argument("--outer-tag", choices=["dirichlet", "neumann"],
                   help="tag for the outer boundary (square-hole)")
    p.add_argument("--inner-tag", choices=["dirichlet", "neumann"],
                   help="tag for the hole boundary (square-hole)")


def _add_rhs_args(p: argparse.ArgumentParser):
    p.add_argument("--rhs", choices=["sine-product", "gaussian-bump"],
                   default="sine-product", help="right-hand side data")
    p.add_argument("--rhs-modes", default="3,4,1;4,3,1",
                   help="sine-product modes as 'i,j,coef;…'")
    p.add_argument("--rhs-amplitude", type=float, default=5e4,
                   help="gaussian-bump amplitude")
    p.add_argument("--rhs-width", type=float, default=40.0,
                   help="gaussian-bump inverse width")
    p.add_argument("--rhs-center", type=float, nargs=2, default=(0.6, 0.7),
                   metavar=("X", "Y"), help="gaussian-bump center")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="helmqo",
        description="Finite element toolkit that refines meshes until the "
                    "Helmholtz discretization is certifiably stable "
                    "(wave number bracketed by consecutive discrete "
                    "Laplace eigenvalues).")
    top.add_argument("--seed", type=int, default=None,
                     help="random seed (default: HQO_SEED env var or 0)")
    sub = top.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="generate or validate a mesh file")
    _add_geometry_args(pm, with_mesh=False)
    pm.add_argument("--validate", metavar="FILE",
                    help="parse and validate FILE instead of generating")
    pm.add_argument("-o", "--output", metavar="FILE",
                    help="write the generated mesh to FILE")

    pe = sub.add_parser("eig", help="compute the smallest Laplace "
                                    "eigenvalues (with CR bounds)")
    _add_geometry_args(pe)
    pe.add_argument("--family", required=True, choices=["p1", "p2", "cr"],
                    help="element family")
    pe.add_argument("--m", type=int, required=True,
                    help="number of eigenpairs (>= 1)")
    pe.add_argument("--kappa", type=float, default=DEFAULT_KAPPA,
                    help="trace constant in the guaranteed lower bound")
    pe.add_argument("--tol", type=float, default=1e-10,
                    help="eigensolver residual tolerance")
    pe.add_argument("-o", "--output", metavar="FILE",
                    help="write CSV (index,lambda,lower,upper) to FILE")

    pc = sub.add_parser("certify", help="refine until the stability "
                                        "criterion holds (certified mesh)")
    _add_geometry_args(pc)
    pc.add_argument("--k2", type=float, required=True, help="wave number "
                    "squared")
    pc.add_argument("--family", required=True, choices=["p1", "p2", "cr"])
    pc.add_argument("--p", type=int, choices=[1, 2],
                    help="conforming polynomial order override")
    pc.add_argument("--refine", choices=["uniform", "adaptive"],
                    default="uniform", help="refinement strategy")
    pc.add_argument("--estimate", choices=["oracle", "cr"], default="oracle",
                    help="pivotal index source: externally known (oracle) "
                         "or guaranteed CR bounds")
    pc.add_argument("--istar", type=int,
                    help="pivotal index for --estimate oracle")
    pc.add_argument("--l", type=int, default=3, dest="extra",
                    help="extra eigenpairs for the error indicator")
    pc.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    pc.add_argument("--max-iters", type=int, default=20)
    pc.add_argument("--tol", type=float, default=1e-10)
    pc.add_argument("-o", "--output", metavar="FILE",
                    help="write the certification CSV to FILE")
    pc.add_argument("--mesh-out", metavar="FILE",
                    help="write the final mesh to FILE")

    ps = sub.add_parser("study", help="uniform-refinement convergence study")
    _add_geometry_args(ps)
    ps.add_argument("--k2", type=float, required=True)
    ps.add_argument("--family", required=True, choices=["p1", "p2", "cr"])
    ps.add_argument("--p", type=int, choices=[1, 2],
                    help="conforming polynomial order override")
    ps.add_argument("--refinements", type=int, required=True,
                    help="number of meshes in the uniform family")
    ps.add_argument("--istar", type=int,
                    help="pivotal index (default: exact enumeration on the "
                         "square, inertia count elsewhere)")
    ps.add_argument("--load-degree", type=int, default=10,
                    help="quadrature degree for load assembly")
    _add_rhs_args(ps)
    ps.add_argument("-o", "--output", metavar="FILE",
                    help="write the study CSV to FILE")
    return top


def cmd_mesh(args) -> int:
    if args.validate:
        with open(args.validate, encoding="utf-8") as fh:
            mesh = read_mesh(fh.read())
        print(f"{args.validate}: valid mesh with {mesh.n_vertices} vertices, "
              f"{mesh.n_triangles} triangles, "
              f"{len(mesh.boundary_edge_ids)} boundary edges")
        return EXIT_OK
    if args.geometry is None:
        raise UsageError("mesh: either --geometry or --validate is required")
    mesh = _build_geometry(args)
    text = write_mesh(mesh)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.output}: {mesh.n_vertices} vertices, "
              f"{mesh.n_triangles} triangles, h = {global_mesh_size(mesh)!r}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eig(args) -> int:
    if args.m < 1:
        raise UsageError("--m must be >= 1")
    mesh = _build_geometry(args)
    family = family_from_name(args.family)
    space = build_space(mesh, family)
    A = constrain(space, assemble_stiffness(space))
    M = constrain(space, assemble_mass(space))
    res = eigs_smallest(A, M, EigenSolveOptions(m=args.m, tol=args.tol,
                                                seed=args.seed))
    lower = upper = [None] * args.m
    if family == CR:
        E = EigenSet(space, mesh.fingerprint(), res.values, res.vectors,
                     res.residuals, A, M)
        bounds = compute_bounds(E, args.kappa)
        lower = [b.lower if b.separation_ok else None for b in bounds]
        upper = [b.upper for b in bounds]
    lines = ["index,lambda,lower,upper"]
    for i, lam in enumerate(res.values):
        lines.append(f"{i + 1},{_fmt(lam)},{_fmt(lower[i])},"
                     f"{_fmt(upper[i])}")
    csv = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(csv)
        print(f"wrote {args.output} ({args.m} eigenpairs, "
              f"ndof = {space.n_free})")
    else:
        sys.stdout.write(csv)
    return EXIT_OK


def cmd_certify(args) -> int:
    family = _resolve_family(args)
    if args.estimate == "oracle":
        if args.istar is None:
            raise UsageError("--estimate oracle requires --istar")
        source: int | str = args.istar
    else:
        source = "cr"
        if family != CR:
            raise UsageError("--estimate cr requires --family cr")
    mesh = _build_geometry(args)
    geometry = "file" if args.mesh else args.geometry or "unit-square"
    spec = ProblemSpec(family, args.k2, geometry=geometry)
    report = run_gmr(spec, mesh, refine_mode=args.refine,
                     i_star_source=source, max_iters=args.max_iters,
                     extra=args.extra, kappa=args.kappa,
                     opts=EigenSolveOptions(tol=args.tol, seed=args.seed))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    if args.mesh_out and report.final_mesh is not None:
        with open(args.mesh_out, "w", encoding="utf-8") as fh:
            fh.write(write_mesh(report.final_mesh))
    last = report.iterations[-1]
    print(f"{report.termination}: {len(report.iterations)} iterations, "
          f"final ndof = {last.ndof}, h = {_fmt(last.h)}")
    for w in report.warnings:
        print(f"warning: {w}")
    return EXIT_OK if report.certified else EXIT_BUDGET


def cmd_study(args) -> int:
    if args.refinements < 1:
        raise UsageError("--refinements must be >= 1")
    family = _resolve_family(args)
    geometry = args.geometry or "unit-square"
    gp = {}
    if geometry == "square-hole":
        gp = dict(outer=args.outer, inner=args.inner)
    spec = ProblemSpec(family, args.k2, rhs=_parse_rhs(args),
                       geometry=geometry, geometry_params=gp,
                       load_degree=args.load_degree)
    records = convergence_study(spec, args.refinements, initial_n=args.n,
                                i_star=args.istar,
                                opts=EigenSolveOptions(seed=args.seed))
    csv = study_to_csv(records)
    on_square = geometry in ("unit-square", "unit-square-unstructured")
    ref_note = ("spectral sine series" if on_square
                else "conforming solution on two extra refinements")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(csv)
        print(f"wrote {args.output} ({len(records)} meshes, "
              f"error reference: {ref_note})")
    else:
        sys.stdout.write(csv)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        handler = {"mesh": cmd_mesh, "eig": cmd_eig,
                   "certify": cmd_certify, "study": cmd_study}[args.command]
        return handler(args)
    except (MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except ValueError as exc:
        # UsageError and validation errors from the library layers
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResonanceError as exc:
        print(f"error: resonance: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except EigenSolveError as exc:
        print(f"error: eigensolver: {exc}", file=sys.stderr)
        return EXIT_EIGEN


if __name__ == "__main__":
    sys.exit(main())
