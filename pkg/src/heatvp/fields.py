"""Space-time scalar fields (densities, boundary data, exact solutions).

Fields are vectorized: ``field(t, x)`` takes ``t`` of shape ``S`` and ``x`` of
shape ``S + (n,)`` and returns shape ``S``.  Densities come from a closed
catalog of analytic families so that every one carries exact time
derivatives and gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable

import numpy as np

if TYPE_CHECKING:
    from heatvp.holder_spaces import AnisotropicExponents

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _prep(t, x, n: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise ValueError(f"field of dimension {n} evaluated at points of size {x.shape[-1]}")
    shape = np.broadcast_shapes(t.shape, x.shape[:-1])
    return np.broadcast_to(t, shape), np.broadcast_to(x, shape + (n,))


@dataclass(frozen=True)
class ScalarField:
    """A density ``f(t, x)`` on ``R x R^n`` with analytic metadata.

    ``support_start`` is the time before which the field vanishes
    (``-inf`` if it never does).  A field with ``support_start = 0`` is in
    the subscript-0 class.  ``gradient`` returns shape ``S + (n,)``.
    """

    evaluator: Evaluator
    n: int
    support_start: float = -math.inf
    time_independent: bool = False
    claimed_exponents: "AnisotropicExponents | None" = None
    gradient: Evaluator | None = None
    time_derivative: Evaluator | None = None
    name: str = "field"
    params: dict = field(default_factory=dict, compare=False)
    # optional f(t, x) = sum_j a_j(t) b_j(x); lets quadrature contract space first
    factors: tuple = ()

    def __call__(self, t, x) -> np.ndarray:
        t, x = _prep(t, x, self.n)
        v = np.asarray(self.evaluator(t, x), dtype=float)
        v = np.broadcast_to(v, t.shape)
        if math.isfinite(self.support_start):
            v = np.where(t > self.support_start, v, 0.0)
        return v

    def grad(self, t, x) -> np.ndarray:
        if self.gradient is None:
            raise ValueError(f"field {self.name!r} has no analytic gradient")
        t, x = _prep(t, x, self.n)
        g = np.broadcast_to(np.asarray(self.gradient(t, x), dtype=float), x.shape)
        if math.isfinite(self.support_start):
            g = np.where((t > self.support_start)[..., None], g, 0.0)
        return g

    def dt(self, t, x) -> np.ndarray:
        if self.time_independent:
            t, x = _prep(t, x, self.n)
            return np.zeros(t.shape)
        if self.time_derivative is None:
            raise ValueError(f"field {self.name!r} has no analytic time derivative")
        t, x = _prep(t, x, self.n)
        v = np.broadcast_to(np.asarray(self.time_derivative(t, x), dtype=float), t.shape)
        if math.isfinite(self.support_start):
            v = np.where(t > self.support_start, v, 0.0)
        return v

    @property
    def has_gradient(self) -> bool:
        return self.gradient is not None

    def separated(self) -> list[tuple[Evaluator, Evaluator, float]]:
        """``[(a_j, b_j, s_j)]`` with ``f(t, x) = sum a_j(t) [t > s_j] b_j(x)``.

        Empty when the field has no product structure.
        """
        out = []
        for a, b, *start in self.factors:
            s0 = max(start[0], self.support_start) if start else self.support_start
            out.append((a, b, s0))
        return out

    # ------------------------------------------------------------ arithmetic

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if not isinstance(other, ScalarField):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("cannot add fields of different dimension")
        a, b = self, other

        def ev(t, x):
            return a(t, x) + b(t, x)

        grad = None
        if a.gradient is not None and b.gradient is not None:
            def grad(t, x):
                return a.grad(t, x) + b.grad(t, x)

        dt = None
        if (a.time_derivative is not None or a.time_independent) and (
            b.time_derivative is not None or b.time_independent
        ):
            def dt(t, x):
                return a.dt(t, x) + b.dt(t, x)

        return ScalarField(
            ev,
            self.n,
            support_start=min(a.support_start, b.support_start),
            time_independent=a.time_independent and b.time_independent,
            gradient=grad,
            time_derivative=dt,
            name=f"({a.name} + {b.name})",
            params={"sum": [a.params, b.params]},
            factors=tuple(a.separated() + b.separated()) if a.factors and b.factors else (),
        )

    def scaled(self, c: float) -> "ScalarField":
        a = self
        c = float(c)
        return replace(
            self,
            evaluator=lambda t, x: c * a(t, x),
            gradient=None if a.gradient is None else (lambda t, x: c * a.grad(t, x)),
            time_derivative=None
            if a.time_derivative is None
            else (lambda t, x: c * a.dt(t, x)),
            name=f"{c:g}*{a.name}",
            params={"scale": c, "of": a.params},
            factors=tuple((ta, (lambda x, sb=sb: c * sb(x)), s0) for ta, sb, s0 in a.separated()),
        )

    def __rmul__(self, c: float) -> "ScalarField":
        return self.scaled(c)

    def __neg__(self) -> "ScalarField":
        return self.scaled(-1.0)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return self + (-other)

    def spot_check_time_independent(self, x: np.ndarray, times=(-3.0, -0.5, 0.0, 0.7, 2.5)) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ref = self(np.zeros(len(x)), x)
        return all(np.array_equal(self(np.full(len(x), s), x), ref) for s in times)


# ---------------------------------------------------------------------------
# catalog


def _axis_factor(kind: str, k: float, shift: float):
    w = math.pi * k
    if kind == "sin":
        return (lambda s: np.sin(w * (s - shift))), (lambda s: w * np.cos(w * (s - shift)))
    if kind == "cos":
        return (lambda s: np.cos(w * (s - shift))), (lambda s: -w * np.sin(w * (s - shift)))
    if kind == "one":
        return (lambda s: np.ones_like(s)), (lambda s: np.zeros_like(s))
    raise ValueError(f"unknown axis factor {kind!r}")


def _time_profile(t_terms):
    """``p(t) = sum c_j t_+^{e_j}`` and its derivative."""
    terms = [(float(c), float(e)) for c, e in t_terms]
    if any(e < 0 for _, e in terms):
        raise ValueError("time exponents must be non-negative")

    def p(t):
        tp = np.maximum(t, 0.0)
        out = np.zeros_like(tp)
        for c, e in terms:
            out = out + c * (tp**e if e > 0 else np.ones_like(tp))
        return out

    def dp(t):
        tp = np.maximum(t, 0.0)
        out = np.zeros_like(tp)
        for c, e in terms:
            if e == 0:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                out = out + c * e * np.where(tp > 0, tp ** (e - 1), 0.0 if e > 1 else np.inf)
        return out

    return p, dp


def _separable(n, t_terms=((1.0, 1.0),), factors=None, amplitude=1.0, support_start=0.0):
    factors = factors or [{"kind": "sin", "k": 1}] * n
    if len(factors) != n:
        raise ValueError("separable field needs one factor per axis")
    fs = [_axis_factor(f.get("kind", "sin"), float(f.get("k", 1)), float(f.get("shift", 0.0))) for f in factors]
    p, dp = _time_profile(t_terms)
    amp = float(amplitude)

    def space(x):
        out = np.full(x.shape[:-1], amp)
        for i, (phi, _) in enumerate(fs):
            out = out * phi(x[..., i])
        return out

    def ev(t, x):
        return p(t) * space(x)

    def grad(t, x):
        g = np.empty(x.shape)
        vals = [phi(x[..., i]) for i, (phi, _) in enumerate(fs)]
        for i, (_, dphi) in enumerate(fs):
            prod = np.full(x.shape[:-1], amp)
            for j in range(n):
                prod = prod * (dphi(x[..., j]) if j == i else vals[j])
            g[..., i] = prod
        return p(t)[..., None] * g

    def dt(t, x):
        return dp(t) * space(x)

    return dict(
        evaluator=ev, gradient=grad, time_derivative=dt, support_start=float(support_start), factors=((p, space),)
    )


def _bump(n, t_terms=((1.0, 2.0),), center=None, width=0.25, amplitude=1.0, support_start=0.0):
    c = np.asarray(center if center is not None else [0.5] * n, dtype=float)
    w2 = float(width) ** 2
    p, dp = _time_profile(t_terms)
    amp = float(amplitude)

    def space(x):
        d = x - c
        return amp * np.exp(-np.sum(d * d, axis=-1) / (2 * w2))

    return dict(
        evaluator=lambda t, x: p(t) * space(x),
        gradient=lambda t, x: (p(t) * space(x))[..., None] * (-(x - c) / w2),
        time_derivative=lambda t, x: dp(t) * space(x),
        support_start=float(support_start),
        factors=((p, space),),
    )


def _ones(t):
    return np.ones(np.shape(t))


def _radial_power(n, power=2.0, center=None, amplitude=1.0):
    c = np.asarray(center if center is not None else [0.0] * n, dtype=float)
    pw = float(power)
    amp = float(amplitude)

    def ev(t, x):
        r = np.linalg.norm(x - c, axis=-1)
        return amp * r**pw

    def grad(t, x):
        d = x - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = amp * pw * np.where(r > 0, r ** (pw - 2), 0.0) * d
        return g

    return dict(evaluator=ev, gradient=grad, time_independent=True, factors=((_ones, lambda x: ev(None, x)),))


def _spatial_polynomial(n, terms=((1.0, None),)):
    parsed = []
    for coef, exps in terms:
        exps = tuple(int(e) for e in (exps if exps is not None else [0] * n))
        if len(exps) != n:
            raise ValueError("monomial exponent list does not match dimension")
        parsed.append((float(coef), exps))

    def ev(t, x):
        out = np.zeros(x.shape[:-1])
        for c, e in parsed:
            out = out + c * np.prod([x[..., i] ** e[i] for i in range(n)], axis=0)
        return out

    def grad(t, x):
        g = np.zeros(x.shape)
        for c, e in parsed:
            for i in range(n):
                if e[i] == 0:
                    continue
                m = c * e[i] * np.ones(x.shape[:-1])
                for j in range(n):
                    m = m * x[..., j] ** (e[j] - 1 if j == i else e[j])
                g[..., i] += m
        return g

    return dict(evaluator=ev, gradient=grad, time_independent=True, factors=((_ones, lambda x: ev(None, x)),))


def _spatial_trig(n, factors=None, amplitude=1.0):
    d = _separable(n, t_terms=((1.0, 0.0),), factors=factors, amplitude=amplitude, support_start=-math.inf)
    space_ev = d["evaluator"]
    space_grad = d["gradient"]
    # p(t) = 1 for all t here (exponent 0 term), independent of the sign of t
    return dict(
        evaluator=lambda t, x: space_ev(np.ones_like(t), x),
        gradient=lambda t, x: space_grad(np.ones_like(t), x),
        time_independent=True,
        factors=((_ones, lambda x: space_ev(np.ones(x.shape[:-1]), x)),),
    )


def _time_power(n, gamma=0.5, t0=0.0, amplitude=1.0):
    g = float(gamma)
    amp = float(amplitude)
    t0 = float(t0)

    def dt(t, x):
        s = t - t0
        with np.errstate(divide="ignore", invalid="ignore"):
            return amp * g * np.sign(s) * np.abs(s) ** (g - 1)

    return dict(
        evaluator=lambda t, x: amp * np.abs(t - t0) ** g + 0.0 * x[..., 0],
        gradient=lambda t, x: np.zeros(x.shape),
        time_derivative=dt,
        factors=((lambda t: amp * np.abs(t - t0) ** g, lambda x: np.ones(x.shape[:-1])),),
    )


def _coordinate(n, axis=0, amplitude=1.0):
    amp = float(amplitude)
    ax = int(axis)

    def grad(t, x):
        g = np.zeros(x.shape)
        g[..., ax] = amp
        return g

    return dict(
        evaluator=lambda t, x: amp * x[..., ax],
        gradient=grad,
        time_independent=True,
        factors=((_ones, lambda x: amp * x[..., ax]),),
    )


def _time_times_coordinate(n, axis=0, amplitude=1.0):
    amp = float(amplitude)
    ax = int(axis)

    def grad(t, x):
        g = np.zeros(x.shape)
        g[..., ax] = amp * t
        return g

    return dict(
        evaluator=lambda t, x: amp * t * x[..., ax],
        gradient=grad,
        time_derivative=lambda t, x: amp * x[..., ax],
        factors=((lambda t: amp * np.asarray(t, dtype=float), lambda x: x[..., ax]),),
    )


def _abs_coordinate_power(n, axis=0, power=1.5, t_terms=((1.0, 0.0),), amplitude=1.0):
    """``|x_axis|^power * psi(t)`` with ``psi(t) = sum c t^e`` (not cut off at t = 0)."""
    ax = int(axis)
    pw = float(power)
    amp = float(amplitude)
    terms = [(float(c), float(e)) for c, e in t_terms]

    def psi(t):
        return sum(c * (t**e if e else np.ones_like(t)) for c, e in terms)

    def dpsi(t):
        return sum(c * e * t ** (e - 1) for c, e in terms if e)

    def grad(t, x):
        g = np.zeros(x.shape)
        s = x[..., ax]
        g[..., ax] = amp * pw * np.sign(s) * np.abs(s) ** (pw - 1) * psi(t)
        return g

    return dict(
        evaluator=lambda t, x: amp * np.abs(x[..., ax]) ** pw * psi(t),
        gradient=grad,
        time_derivative=lambda t, x: amp * np.abs(x[..., ax]) ** pw * dpsi(t) if any(e for _, e in terms) else np.zeros(t.shape),
        factors=((lambda t: psi(np.asarray(t, dtype=float)), lambda x: amp * np.abs(x[..., ax]) ** pw),),
    )


def _zero(n):
    return dict(
        evaluator=lambda t, x: np.zeros(np.shape(t)),
        gradient=lambda t, x: np.zeros(np.shape(x)),
        time_derivative=lambda t, x: np.zeros(np.shape(t)),
        time_independent=True,
        support_start=0.0,
    )


def _constant(n, value=1.0):
    v = float(value)
    return dict(
        evaluator=lambda t, x: np.full(np.shape(t), v),
        gradient=lambda t, x: np.zeros(np.shape(x)),
        time_independent=True,
        factors=((_ones, lambda x: np.full(x.shape[:-1], v)),),
    )


CATALOG: dict[str, Callable[..., dict]] = {
    "zero": _zero,
    "constant": _constant,
    "separable": _separable,
    "bump": _bump,
    "radial-power": _radial_power,
    "spatial-polynomial": _spatial_polynomial,
    "spatial-trig": _spatial_trig,
    "time-power": _time_power,
    "coordinate": _coordinate,
    "time-times-coordinate": _time_times_coordinate,
    "abs-coordinate-power": _abs_coordinate_power,
}


def catalog_field(family: str, n: int, claimed_exponents=None, **params) -> ScalarField:
    """Instantiate a named analytic family, e.g. ``catalog_field("bump", 2, width=0.2)``."""
    try:
        factory = CATALOG[family]
    except KeyError:
        raise ValueError(f"unknown density family {family!r}; known: {sorted(CATALOG)}") from None
    spec = factory(n, **params)
    return ScalarField(
        n=n,
        claimed_exponents=claimed_exponents,
        name=family,
        params={"family": family, **params},
        **spec,
    )


def field_from_spec(spec: dict, n: int) -> ScalarField:
    """Build a field from ``{"family": ..., "params": {...}}`` or ``{"sum": [spec, ...]}``."""
    if "sum" in spec:
        parts = [field_from_spec(s, n) for s in spec["sum"]]
        if not parts:
            raise ValueError("empty sum of fields")
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        if "scale" in spec:
            out = out.scaled(spec["scale"])
        return out
    out = catalog_field(spec["family"], n, **dict(spec.get("params", {})))
    if "scale" in spec:
        out = out.scaled(spec["scale"])
    return out
