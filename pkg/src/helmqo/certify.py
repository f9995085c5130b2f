"""Guaranteed mesh refinement driver, Helmholtz solves and studies.

``run_gmr`` refines a mesh (uniformly or adaptively) until the eigenvalue
ladder brackets the wave number: then the Helmholtz discretization is
stable and quasi-optimal.  The pivotal index is either supplied externally
(``i_star_source=<int>``, e.g. from a modal analysis) or estimated and
certified from guaranteed Crouzeix-Raviart eigenvalue bounds
(``i_star_source="cr"``).

The module also provides the indefinite Helmholtz solve, a spectral
reference solution on the unit square, and uniform-refinement convergence
studies with CSV export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .mesh import (Mesh, build_square_with_hole, build_unit_square,
                   build_unit_square_unstructured, element_diameters,
                   global_mesh_size, read_mesh, refine_bisection,
                   refine_uniform)
from .spaces import (CR, DofSpace, ElementFamily, FeFunction, assemble_load,
                     assemble_mass, assemble_stiffness, build_space,
                     constrain, constrain_vector, expand_free, l2_error)
from .sparsela import (EigenSolveOptions, ResonanceError, count_below, ldlt,
                       solve)
from .spectral import (DEFAULT_KAPPA, EigenSet, LadderExhaustedError,
                       check_criterion, compute_bounds, eigen_ladder,
                       estimate_index)
from .estimator import mark_half_max, residual_indicator

ALPHA_WARN_THRESHOLD = 1e-6
RESONANCE_ENCLOSURE_RTOL = 1e-3


# -- right-hand sides -------------------------------------------------------

@dataclass(frozen=True)
class GaussianBump:
    """f(x, y) = amplitude * exp(-width^2 * |x - center|^2)."""

    amplitude: float = 5e4
    width: float = 40.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")

    def __call__(self, x, y):
        r2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return self.amplitude * np.exp(-self.width ** 2 * r2)

    def total_integral(self) -> float:
        """Integral over the whole plane: amplitude * pi / width^2."""
        return self.amplitude * math.pi / self.width ** 2


@dataclass(frozen=True)
class SineProduct:
    """Combination of normalized sine modes 2 sin(i pi x) sin(j pi y)."""

    modes: tuple[tuple[int, int, float], ...] = ((1, 1, 1.0),)

    def __call__(self, x, y):
        out = np.zeros(np.broadcast(x, y).shape)
        for i, j, coef in self.modes:
            out += coef * 2.0 * np.sin(i * np.pi * x) * np.sin(j * np.pi * y)
        return out


Rhs = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class ProblemSpec:
    """A Helmholtz problem: geometry, element family, wave number, data."""

    family: ElementFamily
    k2: float
    rhs: Rhs | None = None
    geometry: str = "unit-square"     # unit-square | square-hole | file
    geometry_params: dict = field(default_factory=dict)
    load_degree: int = 4

    def __post_init__(self):
        if self.k2 <= 0:
            raise ValueError("k2 must be positive")

    def build_mesh(self, n: int | None = None) -> Mesh:
        params = dict(self.geometry_params)
        if n is not None:
            params["n"] = n
        if self.geometry == "unit-square":
            params.setdefault("n", 8)
            return build_unit_square(**params)
        if self.geometry == "unit-square-unstructured":
            params.setdefault("n", 8)
            return build_unit_square_unstructured(**params)
        if self.geometry == "square-hole":
            params.setdefault("outer", 1.0)
            params.setdefault("inner", 0.5)
            params.setdefault("n", 8)
            return build_square_with_hole(**params)
        if self.geometry == "file":
            with open(params["path"], encoding="utf-8") as fh:
                return read_mesh(fh.read())
        raise ValueError(f"unknown geometry {self.geometry!r}")


# -- Helmholtz solve --------------------------------------------------------

def solve_helmholtz(spec: ProblemSpec, mesh: Mesh) -> FeFunction:
    """Solve the indefinite Helmholtz system on the given mesh.

    The constrained system (stiffness - k^2 mass) is factorized by LDL^T;
    a zero pivot means k^2 is numerically a discrete eigenvalue and raises
    :class:`ResonanceError`.  Relative residual <= 1e-10.
    """
    if spec.rhs is None:
        raise ValueError("problem has no right-hand side")
    space = build_space(mesh, spec.family)
    A = constrain(space, assemble_stiffness(space))
    M = constrain(space, assemble_mass(space))
    b = constrain_vector(space,
                         assemble_load(space, spec.rhs, spec.load_degree))
    F = ldlt(A, spec.k2, M)
    if F.n_zero > 0:
        raise ResonanceError(
            f"k^2 = {spec.k2!r} is numerically a discrete eigenvalue on "
            "this mesh; refine the mesh or perturb k^2")
    x = solve(F, b)
    return FeFunction(space, expand_free(space, x))


# -- unit-square spectrum oracle -------------------------------------------

def unit_square_spectrum(count: int) -> np.ndarray:
    """First ``count`` Dirichlet Laplace eigenvalues pi^2 (i^2 + j^2) of the
    unit square, sorted ascending with multiplicities."""
    top = int(math.isqrt(2 * count)) + 2
    vals = sorted(math.pi ** 2 * (i * i + j * j)
                  for i in range(1, top + 1) for j in range(1, top + 1))
    while len(vals) < count:
        top *= 2
        vals = sorted(math.pi ** 2 * (i * i + j * j)
                      for i in range(1, top + 1) for j in range(1, top + 1))
    return np.array(vals[:count])


def unit_square_index(k2: float) -> int:
    """Number of unit-square Dirichlet eigenvalues strictly below k^2."""
    if k2 <= 0:
        return 0
    top = int(math.sqrt(k2) / math.pi) + 1
    return sum(1 for i in range(1, top + 1) for j in range(1, top + 1)
               if math.pi ** 2 * (i * i + j * j) < k2)


# -- spectral reference on the unit square ----------------------------------

def sine_series_reference(f: Rhs, k2: float, modes: int | None = None,
                          stability_tol: float = 1e-8):
    """Reference Helmholtz solution on the all-Dirichlet unit square.

    Expands f in the normalized sine basis and divides each coefficient by
    (lambda_ij - k^2).  When ``modes`` is omitted the truncation is grown
    in steps of 16 until the sampled solution is stable to
    ``stability_tol``; the returned callable carries ``.modes`` and
    ``.coefficients``.
    """
    auto = modes is None
    N = 32 if auto else int(modes)
    probe = None
    while True:
        C = _sine_coefficients(f, k2, N)
        u = _sine_sum(C)
        if not auto:
            break
        xs = np.linspace(0.0, 1.0, 33)
        X, Y = np.meshgrid(xs, xs)
        vals = u(X, Y)
        if probe is not None:
            scale = max(1.0, abs(vals).max())
            if abs(vals - probe).max() <= stability_tol * scale:
                break
        if N >= 512:
            raise RuntimeError("sine series did not stabilize; data too "
                               "rough for a spectral reference")
        probe = vals
        N += 16
    u.modes = N
    u.coefficients = C
    return u


def _sine_coefficients(f: Rhs, k2: float, N: int) -> np.ndarray:
    lam = np.pi ** 2 * (np.arange(1, N + 1)[:, None] ** 2
                        + np.arange(1, N + 1)[None, :] ** 2)
    if abs(lam - k2).min() <= 1e-9 * max(k2, 1.0):
        raise ResonanceError(f"k^2 = {k2!r} coincides with a unit-square "
                             "eigenvalue")
    q = max(2 * N, 128)
    x, w = leggauss(q)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    F = np.asarray(f(x[:, None], x[None, :]), dtype=np.float64)
    S = np.sin(np.pi * np.outer(np.arange(1, N + 1), x)) * w  # (N, q)
    fij = 2.0 * (S @ F @ S.T)
    return fij / (lam - k2)


def _sine_sum(C: np.ndarray):
    N = C.shape[0]
    idx = np.arange(1, N + 1)

    def u(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        shape = np.broadcast(x, y).shape
        xf = np.broadcast_to(x, shape).ravel()
        yf = np.broadcast_to(y, shape).ravel()
        vals = np.empty(xf.size)
        step = max(1, 8_000_000 // max(N, 1))   # cap the (points x N) blocks
        for lo in range(0, xf.size, step):
            sl = slice(lo, lo + step)
            Sx = np.sin(np.pi * np.outer(xf[sl], idx))
            Sy = np.sin(np.pi * np.outer(yf[sl], idx))
            vals[sl] = 2.0 * ((Sx @ C) * Sy).sum(axis=1)
        return vals.reshape(shape)

    return u


# -- certification report ----------------------------------------------------

@dataclass
class IterationRecord:
    """One ESTIMATE evaluation of the refinement loop.

    ``index`` is i* (externally supplied) or the estimated j*.  ``condition``
    is k^2 - lambda_h at that index (positive once the lower comparison
    holds).  ``certified`` means the criterion held, plus index
    certification in guaranteed-bounds mode.
    """

    ndof: int
    h: float
    index: int | None
    lambda_lo: float | None
    lambda_hi: float | None
    condition: float | None
    enclosure: float | None
    certified: bool
    eta_total: float | None = None


@dataclass
class CertificationReport:
    k2: float
    family: ElementFamily
    refine_mode: str
    i_star_source: str
    iterations: list[IterationRecord] = field(default_factory=list)
    final_mesh: Mesh | None = None
    termination: str = "budget"
    warnings: list[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return bool(self.iterations) and self.iterations[-1].certified

    def to_csv(self) -> str:
        lines = ["iter,ndof,h,i_star,lambda_lo,lambda_hi,condition,"
                 "enclosure,certified,eta_total"]
        for it, rec in enumerate(self.iterations):
            lines.append(",".join([
                str(it), str(rec.ndof), _fmt(rec.h), _fmt(rec.index),
                _fmt(rec.lambda_lo), _fmt(rec.lambda_hi),
                _fmt(rec.condition), _fmt(rec.enclosure),
                "true" if rec.certified else "false", _fmt(rec.eta_total),
            ]))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


# -- the refinement loop ------------------------------------------------------

def run_gmr(spec: ProblemSpec, initial_mesh: Mesh,
            refine_mode: str = "uniform",
            i_star_source: int | str = "cr",
            max_iters: int = 20, extra: int = 3,
            kappa: float = DEFAULT_KAPPA,
            opts: EigenSolveOptions | None = None) -> CertificationReport:
    """Refine until the eigenvalue ladder brackets the wave number.

    Parameters
    ----------
    refine_mode : "uniform" (red refinement) or "adaptive" (half-max
        marking on the averaged residual indicator + bisection).
    i_star_source : an integer index known from a modal analysis, or
        ``"cr"`` to estimate and certify it from guaranteed
        Crouzeix-Raviart bounds (requires a CR family).
    extra : additional eigenpairs carried for the indicator average.

    The loop estimates first (so an adequate initial mesh terminates
    immediately) and stops when the criterion holds -- in ``"cr"`` mode,
    additionally when the index estimate is certified.  Exhausting
    ``max_iters`` leaves a report with ``termination == "budget"``.
    """
    if refine_mode not in ("uniform", "adaptive"):
        raise ValueError(f"unknown refine mode {refine_mode!r}")
    use_cr = i_star_source == "cr"
    if use_cr and spec.family != CR:
        raise ValueError("guaranteed index estimation requires the "
                         "Crouzeix-Raviart family")
    if not use_cr and (not isinstance(i_star_source, (int, np.integer))
                       or i_star_source < 0):
        raise ValueError("i_star_source must be 'cr' or a nonnegative index")

    report = CertificationReport(spec.k2, spec.family, refine_mode,
                                 "cr" if use_cr else str(int(i_star_source)))
    mesh = initial_mesh
    k2 = spec.k2
    done = False
    while len(report.iterations) < max_iters:
        space = build_space(mesh, spec.family)
        h = global_mesh_size(mesh)
        if use_cr:
            rec, E, index = _estimate_cr(space, k2, h, extra, kappa, opts,
                                         report)
        elif space.n_free < int(i_star_source) + 1:
            # the space cannot hold enough eigenpairs to bracket k^2
            index = int(i_star_source)
            E = None
            rec = IterationRecord(space.n_free, h, index, None, None,
                                  None, None, False)
        else:
            index = int(i_star_source)
            E = eigen_ladder(space, k2, extra, opts,
                             min_pairs=index + extra + 1)
            crit = check_criterion(E, k2, index)
            rec = IterationRecord(space.n_free, h, index, crit.lambda_lo,
                                  crit.lambda_hi, k2 - crit.lambda_lo,
                                  None, crit.satisfied)
            if crit.satisfied and crit.alpha_star < ALPHA_WARN_THRESHOLD:
                report.warnings.append(
                    f"iteration {len(report.iterations)}: coercivity "
                    f"constant {crit.alpha_star:.2e} is tiny; k^2 is nearly "
                    "resonant")
        report.iterations.append(rec)
        if rec.certified:
            done = True
            break
        if len(report.iterations) >= max_iters:
            break
        if (refine_mode == "uniform" or E is None or not index
                or len(E) < index + extra):
            # adaptive marking needs an indicator, which needs at least one
            # eigenvalue below k^2 and a long enough ladder
            mesh = refine_uniform(mesh)
        else:
            eta = residual_indicator(E, index, extra)
            rec.eta_total = float(eta.values.sum())
            marked = mark_half_max(eta)
            if use_cr:
                marked |= _separation_blockers(mesh, E, index, kappa)
            mesh = (refine_bisection(mesh, marked) if marked
                    else refine_uniform(mesh))
    report.final_mesh = mesh
    if done:
        report.termination = "certified" if use_cr else "satisfied"
    else:
        report.termination = "budget"
    return report


def _separation_blockers(mesh: Mesh, E: EigenSet, j_star: int,
                         kappa: float) -> set[int]:
    """Elements too large for the separation condition at the pivotal index.

    Certification cannot happen while the global mesh size violates the
    separation threshold at j* and j*+1, regardless of the indicator, so
    those elements are always scheduled for refinement.
    """
    lam_ref = float(E.values[min(j_star, len(E) - 1)])
    threshold = ((np.sqrt(1.0 + 1.0 / (j_star + 1)) - 1.0)
                 / (kappa * np.sqrt(lam_ref)))
    diam = element_diameters(mesh)
    return set(np.flatnonzero(diam > threshold).tolist())


def _estimate_cr(space: DofSpace, k2: float, h: float, extra: int,
                 kappa: float, opts: EigenSolveOptions | None,
                 report: CertificationReport):
    """One guaranteed-bounds ESTIMATE step; returns (record, ladder, j*)."""
    # the lower bound saturates at 1/(kappa h)^2: below that, no ladder
    # length can clear k^2 and the mesh must be refined first
    cap = 1.0 / (kappa * h) ** 2
    if cap <= k2 * 1.01:
        rec = IterationRecord(space.n_free, h, None, None, None, None,
                              None, False)
        return rec, None, None
    lam_need = k2 / (1.0 - k2 * (kappa * h) ** 2)
    A = constrain(space, assemble_stiffness(space))
    M = constrain(space, assemble_mass(space))
    below_k2 = count_below(A, M, k2)
    # the j* guess lands at count_below(lam_need); carry `extra` more pairs
    # for the averaged indicator plus one for the criterion check
    m = count_below(A, M, lam_need) + extra + 1
    m = min(max(m, below_k2 + extra + 1), space.n_free)
    E = eigen_ladder(space, k2, extra, opts, min_pairs=m)
    bounds = compute_bounds(E, kappa)
    for j, b in enumerate(bounds, start=1):
        if (b.separation_ok and b.lower <= k2 <= b.upper
                and b.upper - b.lower <= RESONANCE_ENCLOSURE_RTOL * k2):
            raise ResonanceError(
                f"k^2 = {k2!r} lies in the certified enclosure "
                f"[{b.lower!r}, {b.upper!r}] of eigenvalue {j}; the problem "
                "is resonant")
    try:
        est = estimate_index(bounds, k2)
    except LadderExhaustedError:
        rec = IterationRecord(space.n_free, h, None, None, None, None,
                              None, False)
        return rec, None, None
    crit = check_criterion(E, k2, est.j_star)
    certified = bool(est.certified and crit.satisfied)
    rec = IterationRecord(space.n_free, h, est.j_star, crit.lambda_lo,
                          crit.lambda_hi, k2 - crit.lambda_lo,
                          est.enclosure_width if est.j_star else 0.0,
                          certified)
    if crit.satisfied and crit.alpha_star < ALPHA_WARN_THRESHOLD:
        report.warnings.append(
            f"iteration {len(report.iterations)}: coercivity constant "
            f"{crit.alpha_star:.2e} is tiny; k^2 is nearly resonant")
    return rec, E, est.j_star


# -- convergence studies ------------------------------------------------------

@dataclass
class StudyRecord:
    h: float
    ndof: int
    error: float
    ev_i: float      # lambda_h at the pivotal index (0 when i* = 0)
    ev_ipo: float    # lambda_h one past the pivotal index


def study_to_csv(records: Sequence[StudyRecord]) -> str:
    lines = ["h,ndof,error,EV_i,EV_ipo"]
    for r in records:
        lines.append(",".join([_fmt(r.h), str(r.ndof), _fmt(r.error),
                               _fmt(r.ev_i), _fmt(r.ev_ipo)]))
    return "\n".join(lines) + "\n"


def convergence_study(spec: ProblemSpec, refinements: int,
                      initial_n: int = 8, i_star: int | None = None,
                      extra: int = 1,
                      opts: EigenSolveOptions | None = None,
                      ) -> list[StudyRecord]:
    """Solve on a family of uniform refinements and record errors/ladders.

    Produces one record per mesh (``refinements`` meshes, the initial one
    included).  On the all-Dirichlet unit square the error reference is the
    spectral sine series and the pivotal index comes from the exact
    spectrum; on other geometries the reference is a P1 solution two
    uniform refinements past the finest mesh, and the index is counted by
    inertia on the finest mesh.
    """
    if refinements < 1:
        raise ValueError("refinements must be >= 1")
    meshes = [spec.build_mesh(initial_n)]
    for _ in range(refinements - 1):
        meshes.append(refine_uniform(meshes[-1]))

    on_square = (spec.geometry in ("unit-square", "unit-square-unstructured")
                 and (meshes[0].edge_tag[meshes[0].boundary_edge_ids]
                      == 0).all())
    if i_star is None:
        if on_square:
            i_star = unit_square_index(spec.k2)
        else:
            fine_space = build_space(meshes[-1], spec.family)
            A = constrain(fine_space, assemble_stiffness(fine_space))
            M = constrain(fine_space, assemble_mass(fine_space))
            i_star = count_below(A, M, spec.k2)

    if on_square:
        reference = sine_series_reference(spec.rhs, spec.k2)
    else:
        from .spaces import P1 as _P1
        ref_mesh = refine_uniform(refine_uniform(meshes[-1]))
        ref_spec = ProblemSpec(_P1, spec.k2, spec.rhs, spec.geometry,
                               spec.geometry_params)
        reference = solve_helmholtz(ref_spec, ref_mesh)

    records = []
    for mesh in meshes:
        space = build_space(mesh, spec.family)
        E = eigen_ladder(space, spec.k2, extra, opts,
                         min_pairs=min(i_star + 1, space.n_free))
        ev_i = float(E.values[i_star - 1]) if 1 <= i_star <= len(E) else 0.0
        ev_ipo = float(E.values[i_star]) if i_star < len(E) else math.nan
        u = solve_helmholtz(spec, mesh)
        err = l2_error(u, reference)
        records.append(StudyRecord(global_mesh_size(mesh), space.n_free,
                                   err, ev_i, ev_ipo))
    return records
