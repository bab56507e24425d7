"""Dirichlet and Neumann problems for ``du/dt - Lap u = df/dt`` on boxes.

The solution is split as ``u = P[df/dt] + w``: the potential (evaluated as
``B[f]``) carries the source, and ``w`` solves the homogeneous heat equation
with corrected boundary data (``g - B[f]`` or ``h - d_nu B[f]``).  ``w`` is
computed by Crank-Nicolson with a sparse LU factorization, on the lattice
levels plus extra steps near ``t = 0`` where the corrected data are rough.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from heatvp.domains import Domain
from heatvp.fields import ScalarField, catalog_field
from heatvp.potentials import PotentialEvaluator, b_operator_many, gradient_many, stacked_rules
from heatvp.quadrature import QuadConfig

KINDS = ("dirichlet", "neumann")

# lighter potential quadrature for lattice-wide evaluation; the 2D rule
# trades B accuracy (~1e-5) for a 4x cheaper sweep over the lattice
SOLVER_QUAD = QuadConfig(time_points=6, time_floor=1e-10)
SOLVER_QUAD_2D = QuadConfig(space_points_per_dim=4, time_points=5, radial_levels=4, face_levels=2, time_floor=1e-9)


def solver_quad(n: int) -> QuadConfig:
    return SOLVER_QUAD_2D if n >= 2 else SOLVER_QUAD


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class IBVPSpec:
    """``du/dt - Lap u = df/dt`` in the box, ``u = 0`` for ``t <= 0``.

    ``boundary_data`` is ``g`` (Dirichlet) or the outward normal derivative
    ``h`` (Neumann).  Both it and ``density_f`` must vanish for ``t <= 0``.
    """

    problem_kind: str
    domain: Domain
    T: float
    density_f: ScalarField
    boundary_data: ScalarField
    exact_solution: ScalarField | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.problem_kind not in KINDS:
            raise ValueError(f"problem_kind must be one of {KINDS}")
        if self.domain.kind != "box":
            raise ValueError("the finite-difference backend only supports boxes")
        if self.domain.n not in (1, 2):
            raise ValueError("the solver supports n = 1 and n = 2")
        if not self.T > 0:
            raise ValueError("final time must be positive")
        for name, fld in (("density_f", self.density_f), ("boundary_data", self.boundary_data)):
            if fld.n != self.domain.n:
                raise ValueError(f"{name} has dimension {fld.n}, domain has {self.domain.n}")
        if self.density_f.support_start < 0:
            raise ValueError("density_f must vanish for t <= 0 (support_start 0)")
        if not _vanishes_before_zero(self.boundary_data, self.domain):
            raise ValueError("boundary data must vanish for t <= 0 (zero initial condition)")


def _vanishes_before_zero(g: ScalarField, domain: Domain) -> bool:
    if g.support_start >= 0:
        return True
    pts = boundary_nodes(domain, 5)[0]
    for t in (-1.0, -0.1, 0.0):
        if np.any(g(np.full(len(pts), t), pts) != 0):
            return False
    return True


@dataclass(frozen=True)
class LatticeSpec:
    """``nx`` nodes per axis (boundary included) and ``nt`` time levels on ``[0, T]``."""

    nx: int
    nt: int

    def __post_init__(self):
        if self.nx < 11:
            raise ValueError("the lattice needs at least 11 points per dimension")
        if self.nt < 21:
            raise ValueError("the lattice needs at least 21 time levels")


@dataclass
class SolveResult:
    times: np.ndarray
    axes: list[np.ndarray]
    values: np.ndarray  # (nt, nx[, nx])
    potential: np.ndarray
    max_interior_residual: float
    max_boundary_error: float
    max_error_vs_exact: float | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def diagnostics(self) -> dict:
        return {
            "lattice": {"nt": len(self.times), "nx": [len(a) for a in self.axes]},
            "max_interior_residual": self.max_interior_residual,
            "max_boundary_error": self.max_boundary_error,
            "max_error_vs_exact": self.max_error_vs_exact,
            "initial_slice_max": float(np.max(np.abs(self.values[0]))),
            "warnings": self.warnings,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = len(self.axes)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + ["value"])
        X = self.nodes
        flat = self.values.reshape(len(self.times), -1)
        for k, t in enumerate(self.times):
            for j in range(len(X)):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in X[j]] + [repr(float(flat[k, j]))])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# lattice helpers


def lattice_axes(domain: Domain, nx: int) -> list[np.ndarray]:
    return [np.linspace(domain.lo[i], domain.hi[i], nx) for i in range(domain.n)]


def boundary_nodes(domain: Domain, nx: int) -> tuple[np.ndarray, np.ndarray]:
    """Boundary lattice nodes and their flat indices."""
    axes = lattice_axes(domain, nx)
    shape = (nx,) * domain.n
    mask = np.zeros(shape, dtype=bool)
    for i in range(domain.n):
        sl = [slice(None)] * domain.n
        sl[i] = 0
        mask[tuple(sl)] = True
        sl[i] = -1
        mask[tuple(sl)] = True
    idx = np.flatnonzero(mask.ravel())
    grids = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    return X[idx], idx


def _faces(domain: Domain, nx: int) -> list[tuple[int, int, np.ndarray]]:
    """``(axis, side, flat node indices)`` per face; ``side`` is -1 (lower) or +1 (upper)."""
    shape = (nx,) * domain.n
    flat = np.arange(nx**domain.n).reshape(shape)
    out = []
    for i in range(domain.n):
        for side, pos in ((-1, 0), (1, nx - 1)):
            sl = [slice(None)] * domain.n
            sl[i] = pos
            out.append((i, side, flat[tuple(sl)].ravel()))
    return out


def _second_difference(m: int, h: float, kind: str) -> sp.csr_matrix:
    main = -2.0 * np.ones(m)
    off = np.ones(m - 1)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if kind == "neumann":
        # ghost node u_{-1} = u_1 + 2h*flux (flux enters the right-hand side)
        A[0, 1] = 2.0
        A[m - 1, m - 2] = 2.0
    return (A / h**2).tocsr()


def laplacian(domain: Domain, nx: int, kind: str) -> sp.csr_matrix:
    """Five-point (or three-point) Laplacian on the full lattice.

    Dirichlet rows on the boundary are left as plain differences (they are
    overwritten by the boundary condition); Neumann rows use ghost nodes.
    """
    n = domain.n
    hs = [(domain.hi[i] - domain.lo[i]) / (nx - 1) for i in range(n)]
    eye = sp.identity(nx, format="csr")
    L = None
    for i in range(n):
        D = _second_difference(nx, hs[i], kind if kind == "neumann" else "dirichlet")
        term = D
        for j in range(n):
            if j == i:
                continue
            term = sp.kron(term, eye, format="csr") if j > i else sp.kron(eye, term, format="csr")
        L = term if L is None else L + term
    return L.tocsr()


def _flux_source(domain: Domain, nx: int, flux: np.ndarray, faces) -> np.ndarray:
    """Ghost-node contribution ``2 * flux / h`` of every face (``flux`` per face node)."""
    hs = [(domain.hi[i] - domain.lo[i]) / (nx - 1) for i in range(domain.n)]
    out = np.zeros(nx**domain.n)
    for (axis, _side, idx), q in zip(faces, flux):
        np.add.at(out, idx, 2.0 * q / hs[axis])
    return out


# ---------------------------------------------------------------------------
# homogeneous backend


def startup_times(times: np.ndarray, grading_span: float = 0.05) -> np.ndarray:
    """Lattice times with extra Crank-Nicolson steps near ``t = 0``.

    The corrected boundary data behave like ``t^{1/2}`` or ``t^{3/2}`` at the
    start (the potential's trace is not smooth there), which costs uniform
    CN half an order or more.  Inside ``[0, grading_span * T]`` lattice
    interval ``[a, b]`` is split into ``ceil(span / a)`` equal steps, and the
    first interval is graded quadratically towards 0.  Every lattice time is
    kept, so the solution is read off without interpolation.
    """
    times = np.asarray(times, dtype=float)
    span = grading_span * times[-1]
    pts = [0.0]
    for a, b in zip(times[:-1], times[1:]):
        if b >= span and a > 0:
            pts.append(b)
            continue
        if a == 0:
            m = 2 * max(1, math.ceil(span / b))
            pts.extend(b * (np.arange(1, m + 1) / m) ** 2)
        else:
            m = min(64, math.ceil(span / a))
            pts.extend(np.linspace(a, b, m + 1)[1:])
    return np.array(pts)


def homogeneous_heat_fd(
    kind: str,
    boundary_data,
    domain: Domain,
    lattice: LatticeSpec,
    T: float,
    times: np.ndarray | None = None,
) -> tuple[np.ndarray, list[str]]:
    """Crank-Nicolson for ``dw/dt = Lap w``, ``w(0) = 0``.

    ``times`` is the stepping grid (default: the ``nt`` uniform lattice
    levels); it must contain every lattice level.  Dirichlet:
    ``boundary_data`` has shape ``(len(times), n_boundary)`` in the order of
    :func:`boundary_nodes`.  Neumann: a list over faces (order of ``_faces``)
    of arrays ``(len(times), n_face_nodes)`` with the outward normal
    derivative.  ``boundary_data`` may also be a callable ``t -> samples``
    (one row, or the per-face list); it is then sampled on ``times``, which
    default to :func:`startup_times`.  Returns the solution on the lattice
    levels ``(nt, nx**n)`` and warnings.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    nx, nt = lattice.nx, lattice.nt
    n = domain.n
    levels = np.linspace(0.0, T, nt)
    if times is None:
        times = startup_times(levels) if callable(boundary_data) else levels
    times = np.asarray(times, dtype=float)
    if callable(boundary_data):
        rows = [boundary_data(float(t)) for t in times]
        if kind == "dirichlet":
            boundary_data = np.stack([np.asarray(r, dtype=float) for r in rows])
        else:
            boundary_data = [np.stack([np.asarray(r[j], dtype=float) for r in rows]) for j in range(len(rows[0]))]
    keep = np.searchsorted(times, levels - 1e-12 * T)
    if times[0] != 0 or np.any(np.diff(times) <= 0) or np.any(np.abs(times[np.minimum(keep, len(times) - 1)] - levels) > 1e-12 * T):
        raise ValueError("stepping times must be increasing, start at 0 and contain every lattice level")
    dt = T / (nt - 1)
    hs = [(domain.hi[i] - domain.lo[i]) / (nx - 1) for i in range(n)]
    notes = []
    r = dt / min(hs) ** 2
    if r > 200:
        notes.append(f"step ratio dt/h^2 = {r:.3g} is large; Crank-Nicolson may ring on rough data")
    if max(hs) / min(hs) > 10 or r < 1e-3:
        notes.append(f"extreme step anisotropy (dt/h^2 = {r:.3g}, h = {hs})")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    N = nx**n
    L = laplacian(domain, nx, kind)
    I = sp.identity(N, format="csr")
    steps = np.diff(times)
    W = np.zeros((len(times), N))
    cache: dict = {}

    def operators(d, rows=None):
        key = round(float(d) / T, 12)
        if key not in cache:
            A = (I - 0.5 * d * L).tolil()
            if rows is not None:
                A[rows, :] = 0.0
                A[rows, rows] = 1.0
            cache[key] = (_factor(A), (I + 0.5 * d * L).tocsr())
        return cache[key]

    if kind == "dirichlet":
        data = np.asarray(boundary_data, dtype=float)
        _, bidx = boundary_nodes(domain, nx)
        if data.shape != (len(times), len(bidx)):
            raise ValueError(f"Dirichlet data has shape {data.shape}, expected {(len(times), len(bidx))}")
        if np.any(data[0] != 0):
            raise ValueError("Dirichlet data must vanish at t = 0")
        for k, d in enumerate(steps):
            lu, Bm = operators(d, bidx)
            rhs = Bm @ W[k]
            rhs[bidx] = data[k + 1]
            W[k + 1] = lu.solve(rhs)
    else:
        faces = _faces(domain, nx)
        flux = [np.asarray(q, dtype=float) for q in boundary_data]
        if len(flux) != len(faces) or any(q.shape != (len(times), len(f[2])) for q, f in zip(flux, faces)):
            raise ValueError("Neumann data must give one (len(times), face nodes) array per face")
        for k, d in enumerate(steps):
            lu, Bm = operators(d)
            src = 0.5 * d * (
                _flux_source(domain, nx, [q[k] for q in flux], faces) + _flux_source(domain, nx, [q[k + 1] for q in flux], faces)
            )
            W[k + 1] = lu.solve(Bm @ W[k] + src)
    if not np.all(np.isfinite(W)):
        raise SolverError("non-finite values in the homogeneous solution")
    return W[keep], notes


def _factor(A):
    try:
        return splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(f"singular Crank-Nicolson matrix: {exc}") from exc


# ---------------------------------------------------------------------------
# full solve


def solve(spec: IBVPSpec, lattice: LatticeSpec, quad: QuadConfig | None = None) -> SolveResult:
    """``u = B[f] + w`` on the lattice, with diagnostics."""
    dom = spec.domain
    quad = quad or solver_quad(dom.n)
    nx, nt = lattice.nx, lattice.nt
    axes = lattice_axes(dom, nx)
    times = np.linspace(0.0, spec.T, nt)
    grids = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    N = len(X)
    ev = PotentialEvaluator(dom, spec.density_f, quad)
    rules = stacked_rules(ev, X)
    Pot = np.zeros((nt, N))
    for k in range(1, nt):
        Pot[k] = b_operator_many(ev, times[k], X, rules=rules)
    steps = startup_times(times)
    if spec.problem_kind == "dirichlet":
        Xb, bidx = boundary_nodes(dom, nx)
        brules = stacked_rules(ev, Xb)
        data = np.zeros((len(steps), len(bidx)))
        for k, t in enumerate(steps[1:], start=1):
            data[k] = spec.boundary_data(np.full(len(Xb), t), Xb) - b_operator_many(ev, t, Xb, rules=brules)
    else:
        data = []
        for axis, side, idx in _faces(dom, nx):
            Xf = X[idx]
            frules = stacked_rules(ev, Xf)
            q = np.zeros((len(steps), len(idx)))
            for k, t in enumerate(steps[1:], start=1):
                grad = gradient_many(ev, t, Xf, of_time_derivative=True, rules=frules)
                q[k] = spec.boundary_data(np.full(len(Xf), t), Xf) - side * grad[:, axis]
            data.append(q)
    W, notes = homogeneous_heat_fd(spec.problem_kind, data, dom, lattice, spec.T, times=steps)
    U = Pot + W
    res = _interior_residual(spec, U, X, times, nx)
    berr = _boundary_error(spec, U, X, times, nx)
    err = None
    if spec.exact_solution is not None:
        ex = np.stack([spec.exact_solution(np.full(N, t), X) for t in times])
        err = float(np.max(np.abs(U - ex)))
    shape = (nt,) + (nx,) * dom.n
    return SolveResult(times, axes, U.reshape(shape), Pot.reshape(shape), res, berr, err, notes)


def _interior_residual(spec: IBVPSpec, U: np.ndarray, X: np.ndarray, times: np.ndarray, nx: int) -> float:
    """Crank-Nicolson residual of ``u`` against the source ``(f^{k+1} - f^k) / dt`` at interior nodes."""
    dom = spec.domain
    L = laplacian(dom, nx, "dirichlet")
    _, bidx = boundary_nodes(dom, nx)
    inner = np.setdiff1d(np.arange(len(X)), bidx)
    F = np.stack([spec.density_f(np.full(len(X), t), X) for t in times])
    dt = times[1] - times[0]
    worst = 0.0
    for k in range(len(times) - 1):
        r = (U[k + 1] - U[k]) / dt - 0.5 * (L @ (U[k + 1] + U[k])) - (F[k + 1] - F[k]) / dt
        worst = max(worst, float(np.max(np.abs(r[inner]))))
    return worst


def _boundary_error(spec: IBVPSpec, U: np.ndarray, X: np.ndarray, times: np.ndarray, nx: int) -> float:
    dom = spec.domain
    if spec.problem_kind == "dirichlet":
        Xb, bidx = boundary_nodes(dom, nx)
        g = np.stack([spec.boundary_data(np.full(len(Xb), t), Xb) for t in times])
        return float(np.max(np.abs(U[:, bidx] - g)))
    # second-order one-sided normal derivative on every face
    shape = (len(times),) + (nx,) * dom.n
    V = U.reshape(shape)
    worst = 0.0
    for axis, side, idx in _faces(dom, nx):
        h = (dom.hi[axis] - dom.lo[axis]) / (nx - 1)
        take = (lambda j: np.take(V, j, axis=axis + 1)) if side < 0 else (lambda j: np.take(V, nx - 1 - j, axis=axis + 1))
        d = (-3 * take(0) + 4 * take(1) - take(2)) / (2 * h)
        dnu = -d if side < 0 else d
        Xf = X[idx]
        hdat = np.stack([spec.boundary_data(np.full(len(Xf), t), Xf) for t in times])
        worst = max(worst, float(np.max(np.abs(dnu.reshape(len(times), -1) - hdat))))
    return worst


# ---------------------------------------------------------------------------
# manufactured cases


def manufactured_case(name: str, T: float = 1.0) -> IBVPSpec:
    """Fixtures with closed-form solutions (``u = t * spatial mode``)."""
    pi2 = math.pi**2
    if name == "zero":
        dom = Domain.unit_box(1, T=T)
        z = catalog_field("zero", 1)
        return IBVPSpec("dirichlet", dom, T, z, z, z, name)
    if name == "dirichlet-1d-sine":
        dom = Domain.unit_box(1, T=T)
        f = catalog_field("separable", 1, t_terms=[[1.0, 1.0], [pi2 / 2, 2.0]], factors=[{"kind": "sin", "k": 1}])
        u = catalog_field("separable", 1, t_terms=[[1.0, 1.0]], factors=[{"kind": "sin", "k": 1}])
        return IBVPSpec("dirichlet", dom, T, f, catalog_field("zero", 1), u, name)
    if name == "neumann-1d-cosine":
        dom = Domain.unit_box(1, T=T)
        f = catalog_field("separable", 1, t_terms=[[1.0, 1.0], [pi2 / 2, 2.0]], factors=[{"kind": "cos", "k": 1}])
        u = catalog_field("separable", 1, t_terms=[[1.0, 1.0]], factors=[{"kind": "cos", "k": 1}])
        return IBVPSpec("neumann", dom, T, f, catalog_field("zero", 1), u, name)
    if name == "dirichlet-2d-sine":
        dom = Domain.unit_box(2, T=T)
        f = catalog_field("separable", 2, t_terms=[[1.0, 1.0], [pi2, 2.0]])
        u = catalog_field("separable", 2, t_terms=[[1.0, 1.0]])
        return IBVPSpec("dirichlet", dom, T, f, catalog_field("zero", 2), u, name)
    raise ValueError(f"unknown manufactured case {name!r}; known: {sorted(MANUFACTURED)}")


MANUFACTURED = ("zero", "dirichlet-1d-sine", "neumann-1d-cosine", "dirichlet-2d-sine")


def self_convergence(spec: IBVPSpec, levels: list[LatticeSpec], reference: LatticeSpec, quad: QuadConfig | None = None):
    """Max difference to a finer reference at common nodes, and observed orders."""
    ref = solve(spec, reference, quad)
    errors = []
    for lat in levels:
        s = solve(spec, lat, quad)
        sx = (reference.nx - 1) // (lat.nx - 1)
        st = (reference.nt - 1) // (lat.nt - 1)
        if sx * (lat.nx - 1) != reference.nx - 1 or st * (lat.nt - 1) != reference.nt - 1:
            raise ValueError("reference lattice must nest every level")
        sl = (slice(None, None, st),) + (slice(None, None, sx),) * spec.domain.n
        errors.append(float(np.max(np.abs(s.values - ref.values[sl]))))
    orders = [math.log2(a / b) if a > 0 and b > 0 else math.nan for a, b in zip(errors, errors[1:])]
    return errors, orders
