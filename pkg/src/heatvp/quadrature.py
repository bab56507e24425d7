"""Quadrature for space-time integrals against the heat kernel.

Space rules
    Plain rules (tensor Gauss-Legendre on boxes, radial x angular product on
    balls) and *centered* rules that put the evaluation point ``x`` at the
    apex of the decomposition: a box is split into one pyramid per face with
    apex ``x``, a ball is swept by rays from ``x``.  In both cases the radial
    variable is graded geometrically toward ``x``, so the ``|x-y|^(2-n)``
    behavior of time-integrated kernels is cancelled by the Jacobian.

Time rules
    Nodes are lags ``s = t - tau`` in ``(0, L]``.  The default ``sqrt``
    substitution ``sigma = sqrt(s)`` with geometric panels toward ``s = 0``
    resolves the ``exp(-|x-y|^2/(4s))`` boundary layer of every space node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from heatvp.domains import Domain
from heatvp.kernels import DerivativeIndex, derivative_polynomial

SUBSTITUTIONS = ("none", "sqrt", "lemma31")


class QuadratureError(FloatingPointError):
    """Non-finite value met while accumulating a quadrature sum."""


@dataclass(frozen=True)
class QuadConfig:
    """Resolution knobs shared by all potential evaluations.

    ``space_points_per_dim`` and ``time_points`` are Gauss-Legendre points
    per panel; ``grading_exponent`` is the geometric ratio between adjacent
    graded panels; ``radial_levels``/``face_levels`` are the number of graded
    panels toward the apex and toward the foot point of each face.
    ``horizon`` truncates ``tau -> -inf`` for densities without a support start.
    """

    space_points_per_dim: int = 6
    time_points: int = 8
    grading_exponent: float = 2.0
    horizon: float = 1e12
    exclusion_radius: float = 0.0
    radial_levels: int = 6
    face_levels: int = 3
    angular_points: int = 0
    time_floor: float = 1e-13
    substitution: str = "sqrt"

    def __post_init__(self):
        if self.space_points_per_dim < 1 or self.time_points < 1:
            raise ValueError("quadrature point counts must be positive")
        if not self.grading_exponent > 1:
            raise ValueError("grading_exponent must exceed 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.exclusion_radius < 0:
            raise ValueError("exclusion_radius must be non-negative")
        if self.radial_levels < 0 or self.face_levels < 0:
            raise ValueError("grading levels must be non-negative")
        if not self.time_floor > 0:
            raise ValueError("time_floor must be positive")
        if self.substitution not in SUBSTITUTIONS:
            raise ValueError(f"substitution must be one of {SUBSTITUTIONS}")

    def refined(self, factor: int = 2) -> "QuadConfig":
        """Roughly ``factor`` times as many points per direction."""
        return replace(
            self,
            space_points_per_dim=self.space_points_per_dim * factor,
            time_points=self.time_points * factor,
            radial_levels=self.radial_levels + factor,
            face_levels=self.face_levels + factor // 2,
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------------------
# 1-D building blocks


@lru_cache(maxsize=None)
def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def geometric_breaks(levels: int, ratio: float) -> np.ndarray:
    """Breakpoints ``0, r^-levels, ..., r^-1, 1`` of a mesh graded toward 0."""
    inner = ratio ** -np.arange(levels, 0, -1, dtype=float)
    return np.concatenate(([0.0], inner, [1.0]))


def composite_rule(breaks: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre with ``m`` points on every panel of ``breaks``."""
    g, w = gauss_legendre(m)
    a = breaks[:-1, None]
    h = np.diff(breaks)[:, None]
    return (a + h * g).ravel(), (h * w).ravel()


def graded_rule(levels: int, ratio: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on ``[0, 1]`` graded toward 0."""
    return composite_rule(geometric_breaks(levels, ratio), m)


# ---------------------------------------------------------------------------
# space rules


@dataclass(frozen=True)
class SpaceRule:
    nodes: np.ndarray
    weights: np.ndarray
    domain: Domain
    center: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))


def _sphere_directions(n: int, m: int, angular: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and solid-angle weights (sum = ``s_n``)."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    na = angular or 4 * m
    phi = 2 * np.pi * (np.arange(na) + 0.5) / na
    wphi = np.full(na, 2 * np.pi / na)
    if n == 2:
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), wphi
    mu, wmu = np.polynomial.legendre.leggauss(max(2, na // 2))
    st = np.sqrt(1 - mu**2)
    d = np.stack(
        [
            (st[:, None] * np.cos(phi)[None, :]).ravel(),
            (st[:, None] * np.sin(phi)[None, :]).ravel(),
            np.repeat(mu, na),
        ],
        axis=1,
    )
    return d, (wmu[:, None] * wphi[None, :]).ravel()


def build_space_rule(domain: Domain, cfg: QuadConfig, center=None) -> SpaceRule:
    """Positive-weight rule for ``int_Omega ... dy``.

    Without ``center``: tensor Gauss-Legendre on boxes (exact to degree
    ``2m-1``), graded radial Gauss x angular rule about the center of a ball.
    With ``center`` (a point of the closure): the singularity-adapted rule
    described in the module docstring.
    """
    if center is not None:
        return _drop_dead(_centered_rule(domain, cfg, np.atleast_1d(np.asarray(center, dtype=float))))
    m = cfg.space_points_per_dim
    n = domain.n
    if domain.kind == "box":
        g, w = gauss_legendre(m)
        axes = [domain.lo[i] + (domain.hi[i] - domain.lo[i]) * g for i in range(n)]
        ws = [(domain.hi[i] - domain.lo[i]) * w for i in range(n)]
        grids = np.meshgrid(*axes, indexing="ij")
        wgrid = ws[0]
        for wi in ws[1:]:
            wgrid = np.multiply.outer(wgrid, wi)
        nodes = np.stack([gr.ravel() for gr in grids], axis=1)
        return SpaceRule(nodes, wgrid.ravel(), domain)
    if domain.kind == "ball":
        return _drop_dead(_centered_rule(domain, cfg, domain.centroid, levels=cfg.radial_levels))
    raise ValueError(f"unsupported domain kind {domain.kind!r}")


def _drop_dead(rule: SpaceRule) -> SpaceRule:
    """Remove the zero-weight nodes of degenerate pyramids/rays."""
    live = rule.weights > 0
    if np.all(live):
        return rule
    return SpaceRule(rule.nodes[live], rule.weights[live], rule.domain, rule.center)


def _centered_rule(domain: Domain, cfg: QuadConfig, x: np.ndarray, levels: int | None = None) -> SpaceRule:
    if x.shape != (domain.n,):
        raise ValueError(f"center {x} does not match domain dimension {domain.n}")
    if not domain.contains(x, closed=True, tol=1e-12):
        raise ValueError(f"center {x} lies outside the closed domain")
    if domain.kind == "box":
        return _pyramid_rule(domain, cfg, x)
    if domain.kind == "ball":
        return _polar_rule(domain, cfg, x, cfg.radial_levels if levels is None else levels)
    raise ValueError(f"unsupported domain kind {domain.kind!r}")


def _polar_rule(domain: Domain, cfg: QuadConfig, x: np.ndarray, levels: int) -> SpaceRule:
    n = domain.n
    m = cfg.space_points_per_dim
    dirs, wdir = _sphere_directions(n, m, cfg.angular_points)
    R = domain.ray_exit(x, dirs)
    u, wu = graded_rule(levels, cfg.grading_exponent, m)
    rho = R[:, None] * u[None, :]
    w = (wdir * R)[:, None] * (rho ** (n - 1)) * wu[None, :]
    nodes = x + rho[..., None] * dirs[:, None, :]
    dead = R <= 0
    if np.any(dead):
        nodes[dead] = _far_point(domain, x)
        w[dead] = 0.0
    return SpaceRule(nodes.reshape(-1, n), w.ravel(), domain, center=x)


def _far_point(domain: Domain, x: np.ndarray) -> np.ndarray:
    """A point of the domain away from ``x`` (parking spot for zero-weight nodes)."""
    c = domain.centroid
    if np.linalg.norm(c - x) > 0:
        return c
    return c + 0.5 * (domain.hi - c if domain.kind == "box" else np.eye(domain.n)[0] * domain.radius)


def _face_axis_rule(lo: float, hi: float, foot: float, levels: int, ratio: float, m: int):
    """Rule on ``[lo, hi]`` graded toward ``foot`` from both sides."""
    u, wu = graded_rule(levels, ratio, m)
    left = foot - lo
    right = hi - foot
    nodes = np.concatenate([foot - left * u, foot + right * u])
    weights = np.concatenate([left * wu, right * wu])
    return nodes, weights


def _pyramid_rule(domain: Domain, cfg: QuadConfig, x: np.ndarray) -> SpaceRule:
    n = domain.n
    m = cfg.space_points_per_dim
    g = cfg.grading_exponent
    u, wu = graded_rule(cfg.radial_levels, g, m)
    lo, hi = domain.lo, domain.hi
    all_nodes = []
    all_w = []
    for i in range(n):
        for side, plane in ((-1.0, lo[i]), (1.0, hi[i])):
            h = abs(plane - x[i])
            # face parametrization over the remaining axes
            others = [j for j in range(n) if j != i]
            if others:
                axes = []
                for j in others:
                    span = hi[j] - lo[j]
                    lev = cfg.face_levels
                    if h > 0:
                        lev = max(lev, int(math.ceil(math.log(span / h) / math.log(g))) + 1)
                    lev = min(lev, 40)
                    axes.append(_face_axis_rule(lo[j], hi[j], x[j], lev, g, m))
                grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
                fw = axes[0][1]
                for a in axes[1:]:
                    fw = np.multiply.outer(fw, a[1])
                fw = fw.ravel()
                p = np.empty((fw.size, n))
                p[:, i] = plane
                for k, j in enumerate(others):
                    p[:, j] = grids[k].ravel()
            else:
                p = np.array([[plane]])
                fw = np.array([1.0])
            d = p - x  # (F, n)
            nodes = x + u[:, None, None] * d[None, :, :]  # (U, F, n)
            w = (h * wu * u ** (n - 1))[:, None] * fw[None, :]
            if h <= 0:
                nodes[...] = _far_point(domain, x)
                w = np.zeros_like(w)
            all_nodes.append(nodes.reshape(-1, n))
            all_w.append(w.ravel())
    return SpaceRule(np.concatenate(all_nodes), np.concatenate(all_w), domain, center=x)


# ---------------------------------------------------------------------------
# time rules


@dataclass(frozen=True)
class TimeRule:
    """Lags ``s = t - tau`` in ``(0, span]`` with weights.

    ``truncated`` marks a rule whose span is the horizon rather than the
    exact support of the density.  ``empty`` marks a zero-measure range.
    """

    t: float
    lags: np.ndarray
    weights: np.ndarray
    substitution: str
    span: float
    horizon: float
    truncated: bool = False
    empty: bool = False

    @property
    def nodes(self) -> np.ndarray:
        """Integration times ``tau = t - s`` (all strictly below ``t``)."""
        return self.t - self.lags

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))


def lag_rule(span: float, cfg: QuadConfig, substitution: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lags and weights for ``int_0^span ... ds``."""
    sub = substitution or cfg.substitution
    m = cfg.time_points
    g = cfg.grading_exponent
    if span <= 0:
        return np.empty(0), np.empty(0)
    if sub == "none":
        x, w = gauss_legendre(m)
        return span * x, span * w
    floor = min(cfg.time_floor, 0.5 * span)
    if sub == "sqrt":
        # sigma = sqrt(s), panels sigma_max * g^-k down to sqrt(floor)
        smax = math.sqrt(span)
        levels = max(1, int(math.ceil(math.log(smax / math.sqrt(floor)) / math.log(g))))
        sig, wsig = composite_rule(smax * geometric_breaks(levels, g), m)
        return sig * sig, 2.0 * sig * wsig
    if sub == "lemma31":
        # xi = span / s in [1, inf), geometric panels up to span / floor
        levels = max(1, int(math.ceil(math.log(span / floor) / math.log(g))))
        breaks = g ** np.arange(levels + 1, dtype=float)
        xi, wxi = composite_rule(breaks, m)
        s = span / xi
        w = span / xi**2 * wxi
        # remaining piece s in (0, floor'] covered by one plain panel
        s_low = span / breaks[-1]
        x0, w0 = gauss_legendre(m)
        return np.concatenate([s, s_low * x0]), np.concatenate([w, s_low * w0])
    raise ValueError(f"unknown substitution {sub!r}")


def build_time_rule(t: float, support_start: float, cfg: QuadConfig, substitution: str | None = None) -> TimeRule:
    """Rule over ``tau in [max(support_start, t - horizon), t]``.

    For a finite ``support_start`` the rule covers the support exactly and is
    independent of the horizon.  Otherwise the range is truncated at
    ``t - horizon`` and ``truncated`` is set; callers add the tail estimate.
    """
    sub = substitution or cfg.substitution
    if math.isfinite(support_start):
        span = float(t - support_start)
        truncated = False
    else:
        span = float(cfg.horizon)
        truncated = True
    if span <= 0:
        return TimeRule(float(t), np.empty(0), np.empty(0), sub, 0.0, cfg.horizon, truncated, empty=True)
    s, w = lag_rule(span, cfg, sub)
    return TimeRule(float(t), s, w, sub, span, cfg.horizon, truncated)


# ---------------------------------------------------------------------------
# the shared inner loop


@dataclass
class IntegrationResult:
    value: float
    excluded: float = 0.0
    tail_bound: float = 0.0
    nodes: int = 0

    def __float__(self) -> float:
        return float(self.value)

    @property
    def error_estimate(self) -> float:
        return self.excluded + self.tail_bound


def kernel_on_grid(idx: DerivativeIndex, s: np.ndarray, z: np.ndarray, n: int) -> np.ndarray:
    """``D^eta d_t^h S_n(s, z)`` for strictly positive lags.

    ``s`` has shape ``(..., T, 1)`` and ``z`` shape ``(..., 1, Y, n)`` (or any
    broadcastable pair); no masking for ``s <= 0`` is done here.  Polynomial
    terms are grouped by their power of ``1/s`` so that the ``z`` parts are
    formed on the small operand only.
    """
    s = np.asarray(s, dtype=float)
    r2 = np.sum(z * z, axis=-1)
    out = r2 * (-0.25 / s)
    np.exp(out, out=out)  # underflows to 0 for far nodes
    out *= (4.0 * np.pi * s) ** (-0.5 * n)
    groups: dict[int, np.ndarray | float] = {}
    for key, c in derivative_polynomial(DerivativeIndex(tuple(idx.eta), idx.h), n):
        zpart = c
        for i in range(n):
            if key[i]:
                zpart = zpart * z[..., i] ** key[i]
        groups[key[-1]] = groups.get(key[-1], 0.0) + zpart
    if len(groups) == 1 and 0 in groups and np.ndim(groups[0]) == 0:
        out *= groups[0]
        return out
    u = 1.0 / s
    poly = 0.0
    for k, zpart in groups.items():
        poly = poly + (zpart * u**k if k else zpart)
    out *= poly
    return out


def _check_finite(acc: np.ndarray, s: np.ndarray, y: np.ndarray) -> None:
    bad = ~np.isfinite(acc)
    if np.any(bad):
        k = np.argwhere(bad)[0]
        lag = s.ravel()[k[-2]] if acc.ndim >= 2 else float("nan")
        node = y.reshape(-1, y.shape[-1])[k[-1]]
        raise QuadratureError(f"non-finite integrand at lag {lag!r}, space node {node.tolist()}")


def singular_product_integrate(
    kernel_index: DerivativeIndex,
    density,
    t: float,
    x,
    space: SpaceRule,
    time: TimeRule,
    increment: bool = False,
    exclusion_radius: float = 0.0,
) -> IntegrationResult:
    """``sum_s sum_y w_s w_y D^eta d_t^h S_n(s, x - y) * g(t - s, y)``.

    ``g`` is the density, or the increment ``f(t - s, y) - f(t, y)`` when
    ``increment`` is set (the two terms are never split).  Pairs with
    ``|x - y| < exclusion_radius`` and ``s < exclusion_radius**2`` are left out
    and their absolute contribution is returned as ``excluded``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = space.domain.n
    if time.empty or space.size == 0:
        return IntegrationResult(0.0)
    s = time.lags[:, None]
    y = space.nodes
    z = x - y
    K = kernel_on_grid(kernel_index, s, z[None, :, :], n)
    tau = t - s
    vals = density(np.broadcast_to(tau, K.shape), np.broadcast_to(y[None, :, :], K.shape + (n,)))
    if increment:
        vals = vals - density(np.full(len(y), t), y)[None, :]
    integrand = K * vals * (time.weights[:, None] * space.weights[None, :])
    _check_finite(integrand, time.lags, y)
    excluded = 0.0
    if exclusion_radius > 0:
        r = np.linalg.norm(z, axis=-1)
        mask = (r[None, :] < exclusion_radius) & (s < exclusion_radius**2)
        excluded = float(np.sum(np.abs(integrand[mask])))
        integrand = np.where(mask, 0.0, integrand)
    return IntegrationResult(float(np.sum(integrand)), excluded=excluded, nodes=integrand.size)
