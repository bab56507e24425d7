"""Empirical anisotropic Hoelder norms on a sampling grid.

Every estimate is a supremum over a finite set of points/pairs, hence a lower
bound of the true norm.  Pair sets are nested under :meth:`SamplingGrid.refined`
so exhaustive estimates never decrease under refinement.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from heatvp.domains import Domain
from heatvp.fields import ScalarField

# field-like: f(t, X) -> values at the rows of X (t scalar)
FieldLike = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AnisotropicExponents:
    """Time exponent ``alpha`` and space exponent ``beta``.

    ``beta=None`` selects the ``C^{alpha;0}`` norm (no spatial seminorm).
    """

    alpha: float
    beta: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"time exponent must lie in (0, 1), got {self.alpha}")
        if self.beta is not None and not 0 < self.beta < 1:
            raise ValueError(f"space exponent must lie in (0, 1), got {self.beta}")

    @classmethod
    def schauder_time(cls, alpha: float) -> "AnisotropicExponents":
        """Exponents of ``C^{(1+alpha)/2;0}``."""
        return cls((1 + alpha) / 2, None)

    def label(self) -> str:
        return f"{self.alpha:g};{0 if self.beta is None else self.beta:g}"


@dataclass(frozen=True)
class SamplingGrid:
    times: np.ndarray
    points: np.ndarray
    pair_budget: int = 1_000_000
    rng_seed: int = 0
    # how the grid was built, for refined()
    recipe: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        x = np.asarray(self.points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if np.any(np.diff(t) < 0):
            raise ValueError("grid times must be sorted")
        if len(np.unique(t)) < 2:
            raise ValueError("grid needs at least 2 distinct times")
        if len(np.unique(x, axis=0)) < 2:
            raise ValueError("grid needs at least 2 distinct points")
        if self.pair_budget < 1:
            raise ValueError("pair_budget must be positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", x)

    @classmethod
    def regular(
        cls,
        domain: Domain,
        t_range: tuple[float, float],
        nt: int,
        nx: int,
        pair_budget: int = 1_000_000,
        rng_seed: int = 0,
    ) -> "SamplingGrid":
        """``nt`` equispaced times and an ``nx``-per-axis lattice of the closed domain."""
        times = np.linspace(t_range[0], t_range[1], nt)
        if domain.kind == "box":
            axes = [np.linspace(domain.lo[i], domain.hi[i], nx) for i in range(domain.n)]
        else:
            axes = [np.linspace(c - domain.radius, c + domain.radius, nx) for c in domain.center]
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        if domain.kind == "ball":
            pts = pts[domain.contains(pts, closed=True, tol=1e-12)]
        recipe = {"domain": domain, "t_range": tuple(t_range), "nt": nt, "nx": nx}
        return cls(times, pts, pair_budget, rng_seed, recipe)

    def refined(self) -> "SamplingGrid":
        """Nested refinement: every time/space gap is halved."""
        r = self.recipe
        if not r:
            raise ValueError("only grids built by SamplingGrid.regular can be refined")
        return SamplingGrid.regular(r["domain"], r["t_range"], 2 * r["nt"] - 1, 2 * r["nx"] - 1, self.pair_budget, self.rng_seed)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return len(self.times) * len(self.points)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


@dataclass
class HolderEstimate:
    sup_norm: float
    time_seminorm: float
    space_seminorm: float
    exponents: AnisotropicExponents
    grid: SamplingGrid = field(repr=False)
    gradient_seminorms: list["HolderEstimate"] | None = None
    fd_gradient: bool = False
    exhaustive: bool = True

    @property
    def total(self) -> float:
        out = self.sup_norm + self.time_seminorm + self.space_seminorm
        if self.gradient_seminorms:
            out += sum(g.total for g in self.gradient_seminorms)
        return out

    def rows(self, field_id: str) -> list[dict]:
        """CSV rows: field id, exponents, component, value, grid size, seed."""
        base = {"field": field_id, "exponents": self.exponents.label(), "grid_size": self.grid.size, "seed": self.grid.rng_seed}
        out = [
            {**base, "component": "sup", "value": self.sup_norm},
            {**base, "component": "time", "value": self.time_seminorm},
        ]
        if self.exponents.beta is not None:
            out.append({**base, "component": "space", "value": self.space_seminorm})
        for i, g in enumerate(self.gradient_seminorms or []):
            for r in g.rows(field_id):
                out.append({**r, "component": f"d{i + 1}:{r['component']}"})
        out.append({**base, "component": "total", "value": self.total})
        return out


CSV_COLUMNS = ("field", "exponents", "component", "value", "grid_size", "seed")


def estimates_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "value": repr(float(r["value"]))})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sampling


def sample_field(u: FieldLike, grid: SamplingGrid) -> np.ndarray:
    """``V[i, j] = u(times[i], points[j])``; failures name the offending point."""
    V = np.empty((len(grid.times), len(grid.points)))
    for i, t in enumerate(grid.times.tolist()):
        try:
            row = np.asarray(u(t, grid.points), dtype=float)
        except Exception as exc:
            raise ValueError(f"field evaluation failed at t={t!r}: {exc}") from exc
        if row.shape != (len(grid.points),):
            raise ValueError(f"field returned shape {row.shape} at t={t!r}")
        bad = ~np.isfinite(row)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise ValueError(f"field is not finite at t={t!r}, x={grid.points[j].tolist()}")
        V[i] = row
    return V


def _time_seminorm(V: np.ndarray, times: np.ndarray, alpha: float, budget: int, rng) -> tuple[float, bool]:
    nt, npts = V.shape
    total = nt * (nt - 1) // 2 * npts
    if total <= budget:
        best = 0.0
        for i in range(nt - 1):
            dt = (times[i + 1 :] - times[i]) ** alpha
            ok = dt > 0
            if not np.any(ok):
                continue
            q = np.abs(V[i + 1 :][ok] - V[i]) / dt[ok, None]
            best = max(best, float(q.max()))
        return best, True
    i = rng.integers(0, nt, budget)
    j = rng.integers(0, nt - 1, budget)
    j = j + (j >= i)
    p = rng.integers(0, npts, budget)
    dt = np.abs(times[i] - times[j]) ** alpha
    ok = dt > 0
    q = np.abs(V[i, p] - V[j, p])[ok] / dt[ok]
    return float(q.max(initial=0.0)), False


def _space_seminorm(V: np.ndarray, X: np.ndarray, beta: float, budget: int, rng) -> tuple[float, bool]:
    nt, npts = V.shape
    npairs = npts * (npts - 1) // 2
    if npairs * nt <= budget:
        iu, ju = np.triu_indices(npts, 1)
        d = pdist(X) ** beta
        ok = d > 0
        iu, ju, d = iu[ok], ju[ok], d[ok]
        best = 0.0
        for k in range(nt):
            best = max(best, float(np.max(np.abs(V[k, iu] - V[k, ju]) / d, initial=0.0)))
        return best, True
    k = rng.integers(0, nt, budget)
    a = rng.integers(0, npts, budget)
    b = rng.integers(0, npts - 1, budget)
    b = b + (b >= a)
    d = np.linalg.norm(X[a] - X[b], axis=1) ** beta
    ok = d > 0
    q = np.abs(V[k, a] - V[k, b])[ok] / d[ok]
    return float(q.max(initial=0.0)), False


def norm_from_samples(V: np.ndarray, exps: AnisotropicExponents, grid: SamplingGrid) -> HolderEstimate:
    """Estimate from precomputed samples ``V[i, j] = u(times[i], points[j])``."""
    V = np.asarray(V, dtype=float)
    if V.shape != (len(grid.times), len(grid.points)):
        raise ValueError(f"sample array has shape {V.shape}, grid is {(len(grid.times), len(grid.points))}")
    rng = np.random.default_rng(grid.rng_seed)
    sup = float(np.max(np.abs(V)))
    ts, ex_t = _time_seminorm(V, grid.times, exps.alpha, grid.pair_budget, rng)
    ss, ex_s = 0.0, True
    if exps.beta is not None:
        ss, ex_s = _space_seminorm(V, grid.points, exps.beta, grid.pair_budget, rng)
    return HolderEstimate(sup, ts, ss, exps, grid, exhaustive=ex_t and ex_s)


def estimate_anisotropic_norm(u: FieldLike, exps: AnisotropicExponents, grid: SamplingGrid) -> HolderEstimate:
    """``sup|u| + [u]_{time, alpha} + [u]_{space, beta}`` over the grid."""
    return norm_from_samples(sample_field(u, grid), exps, grid)


def _fd_gradient(u: FieldLike, grid: SamplingGrid) -> Callable[[float, np.ndarray], np.ndarray]:
    h = 1e-5 * grid.diameter

    def grad(t, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape)
        for i in range(X.shape[1]):
            e = np.zeros(X.shape[1])
            e[i] = h
            out[:, i] = (np.asarray(u(t, X + e)) - np.asarray(u(t, X - e))) / (2 * h)
        return out

    return grad


def estimate_parabolic_schauder_norm(
    u: FieldLike,
    alpha: float,
    grid: SamplingGrid,
    gradient: Callable[[float, np.ndarray], np.ndarray] | None = None,
) -> HolderEstimate:
    """``sup|u| + [u]_{time,(1+alpha)/2} + sum_i ||d_i u||_{C^{alpha/2;alpha}}``.

    The gradient is taken from ``gradient``, else from an analytic
    ``ScalarField`` gradient, else from central differences (flagged).
    """
    fd = False
    if gradient is None:
        if isinstance(u, ScalarField) and u.has_gradient:
            gradient = u.grad
        else:
            gradient = _fd_gradient(u, grid)
            fd = True
    V = sample_field(u, grid)
    G = np.empty(V.shape + (grid.n,))
    for k, t in enumerate(grid.times.tolist()):
        g = np.asarray(gradient(t, grid.points), dtype=float).reshape(len(grid.points), grid.n)
        if not np.all(np.isfinite(g)):
            j = int(np.argmax(~np.all(np.isfinite(g), axis=1)))
            raise ValueError(f"gradient is not finite at t={t!r}, x={grid.points[j].tolist()}")
        G[k] = g
    return schauder_from_samples(V, G, alpha, grid, fd_gradient=fd)


def schauder_from_samples(V: np.ndarray, G: np.ndarray, alpha: float, grid: SamplingGrid, fd_gradient: bool = False) -> HolderEstimate:
    """Schauder estimate from values ``V`` and gradients ``G[..., i]`` on the grid."""
    top = norm_from_samples(V, AnisotropicExponents((1 + alpha) / 2, None), grid)
    gexp = AnisotropicExponents(alpha / 2, alpha)
    top.gradient_seminorms = [norm_from_samples(G[..., i], gexp, grid) for i in range(G.shape[-1])]
    top.fd_gradient = fd_gradient
    top.exhaustive = top.exhaustive and all(g.exhaustive for g in top.gradient_seminorms)
    return top


def quotient_norm_upper_bound(
    representatives: Sequence[FieldLike], exps: AnisotropicExponents, grid: SamplingGrid, tol: float = 1e-9
) -> float:
    """``min_f ||f||_{C^{alpha;beta}}`` over representatives with a common time derivative."""
    if not representatives:
        raise ValueError("need at least one representative")
    samples = [sample_field(r, grid) for r in representatives]
    base = samples[0]
    for k, V in enumerate(samples[1:], start=1):
        d = V - base
        spread = float(np.max(np.abs(d - d[0])))
        scale = max(1.0, float(np.max(np.abs(d))))
        if spread > tol * scale:
            raise ValueError(f"representative {k} does not differ from the first by a time-independent field")
    return min(norm_from_samples(V, exps, grid).total for V in samples)


def divergence_ratio(u: FieldLike, exps: AnisotropicExponents, grid: SamplingGrid, levels: int = 2) -> list[float]:
    """Time seminorms over ``levels`` successive refinements (including ``grid``)."""
    out = []
    g = grid
    for _ in range(levels + 1):
        out.append(estimate_anisotropic_norm(u, exps, g).time_seminorm)
        g = g.refined()
    return out


def is_finite_estimate(est: HolderEstimate) -> bool:
    return math.isfinite(est.total)
