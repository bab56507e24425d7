"""Heat volume potential, Newtonian volume potential and the increment operator.

For a density ``f`` on ``Omega`` the heat volume potential is

    P[f](t,x) = int int (S_n(t-tau, x-y) - [n=2] S_n(-tau, x0-y)) f(tau,y) dy dtau

and for ``g = df/dt`` the potential is realized through the representative
``f`` as

    B[f](t,x) = int_{-inf}^t int_Omega d_t S_n(t-tau, x-y) (f(tau,y) - f(t,y)) dy dtau.

Time integrals below ``support_start`` (or below ``t - horizon``) are closed
analytically: ``int_L^inf d_s D^eta S(s, z) ds = -D^eta S(L, z)``, so the
increment tail is ``D^eta S(L, x-y) (f(t,y) - f(t-L,y))``, exact when ``f``
vanishes (or is frozen) beyond lag ``L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from heatvp.domains import Domain, SpaceTimePoint
from heatvp.fields import ScalarField
from heatvp.kernels import DerivativeIndex, derivative_polynomial, laplace_kernel
from heatvp.quadrature import (
    IntegrationResult,
    QuadConfig,
    QuadratureError,
    SpaceRule,
    TimeRule,
    build_space_rule,
    build_time_rule,
    kernel_on_grid,
    lag_rule,
)

# sup_rho rho exp(-rho^2/4) / (8 pi): |grad S_2(s, z)| <= C s^(-3/2)
_C_GRAD_S2 = math.sqrt(2.0) * math.exp(-0.5) / (8.0 * math.pi)
# sup |d_t S_2(s, z)| s^2
_C_DT_S2 = 1.0 / (4.0 * math.pi)

# kernel elements per vectorized block (points x lags x space nodes)
_BLOCK = 2_000_000


@dataclass(frozen=True)
class PotentialEvaluator:
    """Everything needed to evaluate the potentials of one density on one domain.

    ``x0`` only matters for ``n = 2``; it defaults to the centroid.
    """

    domain: Domain
    density: ScalarField
    quad: QuadConfig = field(default_factory=QuadConfig)
    x0: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.density.n != self.domain.n:
            raise ValueError("density and domain dimensions differ")
        x0 = self.domain.centroid if self.x0 is None else np.atleast_1d(np.asarray(self.x0, dtype=float))
        if not self.domain.contains(x0):
            raise ValueError(f"x0 = {x0} must lie in the open domain")
        object.__setattr__(self, "x0", tuple(float(v) for v in x0))

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def x0a(self) -> np.ndarray:
        return np.asarray(self.x0)

    def with_density(self, density: ScalarField) -> "PotentialEvaluator":
        return PotentialEvaluator(self.domain, density, self.quad, self.x0)


def _as_point(p) -> SpaceTimePoint:
    if isinstance(p, SpaceTimePoint):
        return p
    t, x = p
    return SpaceTimePoint(t, x)


def _check_point(ev: PotentialEvaluator, p: SpaceTimePoint) -> None:
    if p.n != ev.n:
        raise ValueError(f"point {p} has dimension {p.n}, domain has {ev.n}")
    if p.t > ev.domain.T:
        raise ValueError(f"time {p.t} lies beyond the final time {ev.domain.T}")
    if not ev.domain.contains(p.xa, closed=True, tol=1e-12):
        raise ValueError(f"point {p.x} lies outside the closed domain")


# ---------------------------------------------------------------------------
# tail bounds for truncated time ranges


def _tail_integral_bound(idx: DerivativeIndex, n: int, diam: float, horizon: float) -> float:
    """Bound of ``int_H^inf sup_{|z|<=diam} |D^eta d_t^h S_n(s, z)| ds`` from the polynomial factor."""
    total = 0.0
    for key, c in derivative_polynomial(idx, n):
        k = key[-1]
        a = sum(key[:-1])
        p = 0.5 * n + k
        if p <= 1:
            return math.inf
        total += abs(c) * diam**a * horizon ** (1 - p) / (p - 1)
    return (4.0 * math.pi) ** (-0.5 * n) * total


def _renormalized_tail_bound(ev: PotentialEvaluator, t: float, x: np.ndarray, horizon: float) -> float:
    """Tail of the ``n = 2`` renormalized kernel below ``tau = t - horizon``."""
    dx = float(np.sum(np.abs(x - ev.x0a)))
    spatial = dx * _C_GRAD_S2 * 2.0 / math.sqrt(horizon)
    gap = min(0.0, t) - (t - horizon)
    temporal = _C_DT_S2 * abs(t) / gap if gap > 0 else math.inf
    return spatial + temporal


# ---------------------------------------------------------------------------
# batched evaluation core


def _space_rules(ev: PotentialEvaluator, X: np.ndarray) -> list[SpaceRule]:
    return [build_space_rule(ev.domain, ev.quad, center=x) for x in X]


def _stack_rules(rules: list[SpaceRule]) -> tuple[np.ndarray, np.ndarray]:
    size = max(r.size for r in rules)
    n = rules[0].nodes.shape[1]
    Y = np.empty((len(rules), size, n))
    W = np.zeros((len(rules), size))
    for k, r in enumerate(rules):
        Y[k, : r.size] = r.nodes
        W[k, : r.size] = r.weights
        if r.size < size:
            # padding: a genuine node with zero weight
            Y[k, r.size :] = r.nodes[int(np.argmax(r.weights))]
    return Y, W


@dataclass(frozen=True)
class _Piece:
    """Part of a density with one support start.

    Either a sum of products ``a_j(t) b_j(x)`` (``factors``) or an opaque
    field.  Potentials are linear, so every piece gets its own exact time rule.
    """

    start: float
    factors: tuple = ()
    field: ScalarField | None = None

    def time_factor(self, a, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        v = np.broadcast_to(np.asarray(a(tau), dtype=float), tau.shape)
        if math.isfinite(self.start):
            v = np.where(tau > self.start, v, 0.0)
        return v

    def on_nodes(self, t: float, Y: np.ndarray) -> np.ndarray:
        """Values at the single time ``t`` and nodes ``Y`` of shape ``(p, NY, n)``."""
        if self.field is not None:
            return self.field(np.full(Y.shape[:-1], t), Y)
        out = np.zeros(Y.shape[:-1])
        for a, b in self.factors:
            out = out + self.time_factor(a, t) * b(Y)
        return out


def _pieces(f: ScalarField) -> list[_Piece]:
    parts = f.separated()
    if not parts:
        return [_Piece(f.support_start, field=f)]
    groups: dict[float, list] = {}
    for a, b, s0 in parts:
        groups.setdefault(s0, []).append((a, b))
    return [_Piece(s0, tuple(groups[s0])) for s0 in sorted(groups)]


def _integrate_batch(
    idx: DerivativeIndex,
    piece: _Piece,
    t: float,
    X: np.ndarray,
    Y: np.ndarray,
    W: np.ndarray,
    trule: TimeRule,
    increment: bool,
) -> tuple[np.ndarray, float]:
    """Vectorized :func:`singular_product_integrate` over points sharing ``t``.

    Returns the values at every point and ``max |f|`` seen on the nodes.
    """
    P, NY, n = Y.shape
    out = np.zeros(P)
    sup = 0.0
    if trule.empty:
        return out, sup
    NT = trule.lags.size
    chunk = max(1, _BLOCK // max(1, NT * NY))
    s = trule.lags[None, :, None]
    tau1 = t - trule.lags
    for a in range(0, P, chunk):
        b = min(P, a + chunk)
        Yb = Y[a:b]
        Wb = W[a:b]
        Z = X[a:b, None, :] - Yb  # (p, NY, n)
        K = kernel_on_grid(idx, s, Z[:, None, :, :], n)  # (p, NT, NY)
        if piece.field is None:
            # contract the space nodes against b_j first
            part = np.zeros(b - a)
            for ta, sb in piece.factors:
                at = piece.time_factor(ta, tau1)
                if increment:
                    at = at - piece.time_factor(ta, t)
                by = sb(Yb)
                sup = max(sup, float(np.max(np.abs(at))) * float(np.max(np.abs(by))))
                part = part + np.matmul(K, (Wb * by)[:, :, None])[..., 0] @ (at * trule.weights)
        else:
            tau = np.broadcast_to(t - s, K.shape)
            yy = np.broadcast_to(Yb[:, None, :, :], K.shape + (n,))
            vals = piece.field(tau, yy)
            sup = max(sup, float(np.max(np.abs(vals))) if vals.size else 0.0)
            if increment:
                now = piece.on_nodes(t, Yb)
                sup = max(sup, float(np.max(np.abs(now))))
                vals = vals - now[:, None, :]
            K *= vals
            # sum over space nodes (batched matmul), then over lags
            part = np.matmul(K, Wb[:, :, None])[..., 0] @ trule.weights
        if not np.all(np.isfinite(part)):
            _raise_non_finite(K, X[a:b], Yb, trule.lags)
        out[a:b] = part
    return out, sup


def _increment_tail(
    idx_space: DerivativeIndex, piece: _Piece, t: float, X: np.ndarray, Y: np.ndarray, W: np.ndarray, span: float
) -> np.ndarray:
    """``sum_y w_y D^eta S(span, x - y) (f(t, y) - f(t - span, y))``."""
    n = Y.shape[-1]
    Z = X[:, None, :] - Y
    K = kernel_on_grid(idx_space, np.array(span), Z, n)
    diff = piece.on_nodes(t, Y) - piece.on_nodes(t - span, Y)
    return np.sum(K * diff * W, axis=1)


def _raise_non_finite(K: np.ndarray, X: np.ndarray, Y: np.ndarray, lags: np.ndarray):
    bad = np.argwhere(~np.isfinite(K))
    if len(bad) == 0:
        raise QuadratureError(f"non-finite quadrature sum near x={X[0].tolist()}")
    p, k, j = bad[0]
    raise QuadratureError(f"non-finite integrand at x={X[p].tolist()}, lag={lags[k]!r}, y={Y[p, j].tolist()}")


@dataclass
class PotentialValues:
    """Values at a batch of points plus the accumulated truncation bound."""

    values: np.ndarray
    tail_bound: float = 0.0


def stacked_rules(ev: PotentialEvaluator, X) -> tuple[np.ndarray, np.ndarray]:
    """Centered space rules for every row of ``X``, padded to a common size.

    Reusable across evaluation times (pass as ``rules=``).
    """
    X = _as_rows(ev, X)
    return _stack_rules(_space_rules(ev, X))


def _as_rows(ev: PotentialEvaluator, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if ev.n == 1 and X.shape[-1] != 1:
        X = X.reshape(-1, 1)
    return X


def _volume_potential_batch(
    ev: PotentialEvaluator, t: float, X: np.ndarray, idx: DerivativeIndex | None = None, rules=None
) -> PotentialValues:
    n = ev.n
    idx = idx or DerivativeIndex.zero(n)
    pieces = _pieces(ev.density)
    if n == 1 and idx.order == 0 and any(not math.isfinite(pc.start) for pc in pieces):
        raise ValueError(
            "the 1-D heat volume potential of a density without a support start diverges; "
            "give the density a finite support_start"
        )
    Y, W = rules if rules is not None else _stack_rules(_space_rules(ev, X))
    vals = np.zeros(len(X))
    tail = 0.0
    for pc in pieces:
        trule = build_time_rule(t, pc.start, ev.quad)
        v, sup = _integrate_batch(idx, pc, t, X, Y, W, trule, increment=False)
        vals += v
        if n == 2 and idx.order == 0:
            # renormalization: - int_{tau<0} S_2(-tau, x0 - y) f(tau, y), lag sigma = -tau
            smax = trule.span - t if trule.truncated else -pc.start
            if smax > 0:
                lags, wl = lag_rule(smax, ev.quad)
                r0 = TimeRule(0.0, lags, wl, ev.quad.substitution, smax, ev.quad.horizon, trule.truncated)
                Y0, W0 = _stack_rules([build_space_rule(ev.domain, ev.quad, center=ev.x0a)])
                v0, sup0 = _integrate_batch(idx, pc, 0.0, ev.x0a[None, :], Y0, W0, r0, increment=False)
                vals -= v0[0]
                sup = max(sup, sup0)
            if trule.truncated:
                tail += max(_renormalized_tail_bound(ev, t, x, trule.span) for x in X) * ev.domain.volume * sup
        elif trule.truncated:
            tail += _tail_integral_bound(idx, n, ev.domain.diameter, trule.span) * ev.domain.volume * sup
    return PotentialValues(vals, tail)


def _b_operator_batch(
    ev: PotentialEvaluator, t: float, X: np.ndarray, eta: tuple[int, ...] | None = None, rules=None
) -> PotentialValues:
    n = ev.n
    eta = tuple(eta or (0,) * n)
    idx_t = DerivativeIndex(eta, 1)
    Y, W = rules if rules is not None else _stack_rules(_space_rules(ev, X))
    vals = np.zeros(len(X))
    tail = 0.0
    for pc in _pieces(ev.density):
        trule = build_time_rule(t, pc.start, ev.quad)
        v, sup = _integrate_batch(idx_t, pc, t, X, Y, W, trule, increment=True)
        vals += v
        if trule.span > 0:
            vals += _increment_tail(DerivativeIndex(eta, 0), pc, t, X, Y, W, trule.span)
        if trule.truncated:
            # frozen-tail closure leaves at most 2 sup|f| int_H^inf |D d_t S|
            tail += 2.0 * sup * ev.domain.volume * _tail_integral_bound(idx_t, n, ev.domain.diameter, trule.span)
    return PotentialValues(vals, tail)


# ---------------------------------------------------------------------------
# public operations


def volume_potential(ev: PotentialEvaluator, p) -> float:
    """Heat volume potential ``P[f](t, x)`` (with the ``n = 2`` renormalization)."""
    return float(volume_potential_detail(ev, p).value)


def volume_potential_detail(ev: PotentialEvaluator, p) -> IntegrationResult:
    p = _as_point(p)
    _check_point(ev, p)
    res = _volume_potential_batch(ev, p.t, p.xa[None, :])
    return IntegrationResult(float(res.values[0]), tail_bound=res.tail_bound)


def volume_potential_many(ev: PotentialEvaluator, t: float, X, rules=None) -> np.ndarray:
    """``P[f](t, x)`` at every row of ``X`` (points share the time ``t``)."""
    return _volume_potential_batch(ev, float(t), _as_rows(ev, X), rules=rules).values


def b_operator(ev: PotentialEvaluator, p) -> float:
    """``B[f](t, x)``: the ``d_t S_n`` kernel against the increment ``f(tau, y) - f(t, y)``."""
    return float(b_operator_detail(ev, p).value)


def b_operator_detail(ev: PotentialEvaluator, p) -> IntegrationResult:
    p = _as_point(p)
    _check_point(ev, p)
    res = _b_operator_batch(ev, p.t, p.xa[None, :])
    return IntegrationResult(float(res.values[0]), tail_bound=res.tail_bound)


def b_operator_many(ev: PotentialEvaluator, t: float, X, rules=None) -> np.ndarray:
    """``B[f](t, x)`` at every row of ``X``."""
    return _b_operator_batch(ev, float(t), _as_rows(ev, X), rules=rules).values


def potential_of_time_derivative(ev: PotentialEvaluator, p) -> float:
    """``P[g]`` for ``g = df/dt``, realized as ``B[f]`` with ``f = ev.density``."""
    return b_operator(ev, p)


def volume_potential_gradient(ev: PotentialEvaluator, p, of_time_derivative: bool = False) -> np.ndarray:
    """Spatial gradient of ``P[f]`` (or of ``P[df/dt]`` when ``of_time_derivative``)."""
    p = _as_point(p)
    _check_point(ev, p)
    return gradient_many(ev, p.t, p.xa[None, :], of_time_derivative)[0]


def gradient_many(ev: PotentialEvaluator, t: float, X, of_time_derivative: bool = False, rules=None) -> np.ndarray:
    """Spatial gradients at every row of ``X``, shape ``(len(X), n)``."""
    X = _as_rows(ev, X)
    rules = rules if rules is not None else stacked_rules(ev, X)
    out = np.empty(X.shape)
    for i in range(ev.n):
        eta = tuple(1 if j == i else 0 for j in range(ev.n))
        if of_time_derivative:
            out[:, i] = _b_operator_batch(ev, float(t), X, eta, rules=rules).values
        else:
            out[:, i] = _volume_potential_batch(ev, float(t), X, DerivativeIndex(eta, 0), rules=rules).values
    return out


def newtonian_potential(h: ScalarField, domain: Domain, x, quad: QuadConfig | None = None) -> float:
    """Harmonic volume potential ``int_Omega S~_n(x - y) h(y) dy`` for a time-independent ``h``."""
    quad = quad or QuadConfig()
    if not h.time_independent:
        raise ValueError("the Newtonian potential needs a time-independent density")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not domain.contains(x, closed=True, tol=1e-12):
        raise ValueError(f"point {x} lies outside the closed domain")
    rule = build_space_rule(domain, quad, center=x)
    live = rule.weights > 0
    y = rule.nodes[live]
    vals = laplace_kernel(x - y, domain.n) * h(np.zeros(len(y)), y) * rule.weights[live]
    if not np.all(np.isfinite(vals)):
        raise QuadratureError(f"non-finite Newtonian integrand at x={x.tolist()}")
    return float(np.sum(vals))


# ---------------------------------------------------------------------------
# PDE residual


@dataclass(frozen=True)
class FDSteps:
    time: float = 1e-3
    space: float = 1e-3


def pde_residual(ev: PotentialEvaluator, p, fd: FDSteps | tuple[float, float] = FDSteps()) -> float:
    """``(d_t - Lap) P[g](t, x) - g(t, x)`` with ``g = df/dt`` and central differences."""
    p = _as_point(p)
    _check_point(ev, p)
    if not isinstance(fd, FDSteps):
        fd = FDSteps(*fd)
    f = ev.density
    if f.time_derivative is None and not f.time_independent:
        raise ValueError("pde_residual needs a density with an analytic time derivative")
    ht, hx = fd.time, fd.space
    t, x = p.t, p.xa
    if t - ht <= f.support_start or t + ht > ev.domain.T:
        raise ValueError(f"time {t} is within the stencil width {ht} of the parabolic boundary")
    if ev.domain.distance_to_boundary(x) <= hx:
        raise ValueError(f"point {x} is within the stencil width {hx} of the lateral boundary")
    n = ev.n
    E = np.eye(n)
    X = np.concatenate([x[None, :], x + hx * E, x - hx * E])
    B0 = b_operator_many(ev, t, X)
    Bp = b_operator_many(ev, t + ht, x[None, :])[0]
    Bm = b_operator_many(ev, t - ht, x[None, :])[0]
    dt = (Bp - Bm) / (2 * ht)
    lap = float(np.sum(B0[1 : n + 1] + B0[n + 1 :] - 2 * B0[0])) / hx**2
    g = float(f.dt(t, x))
    return dt - lap - g


# ---------------------------------------------------------------------------
# closed forms used as oracles


def newtonian_ball_constant(x, n: int, radius: float = 1.0, center=None) -> float:
    """``P~[1](x)`` on a ball, inside the ball (closed form)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    r2 = float(np.sum((x - c) ** 2))
    R2 = radius**2
    if n == 3:
        return -(3 * R2 - r2) / 6.0
    if n == 2:
        return (r2 - R2) / 4.0 + 0.5 * R2 * math.log(radius)
    if n == 1:
        return (r2 + R2) / 2.0
    raise ValueError(f"unsupported dimension {n}")
