"""Heat and Laplace fundamental solutions.

Derivatives of the heat kernel are computed in closed form.  Every
``D_x^eta d_t^h S_n`` is ``S_n`` times a polynomial in ``x`` and ``1/t``;
the polynomial is built symbolically (exact rational coefficients) by
repeatedly applying

    d/dx_i (S P) = S (-x_i/(2t) P + dP/dx_i)
    d/dt   (S P) = S ((-n/(2t) + |x|^2/(4t^2)) P + dP/dt)

so the time derivative is obtained without using the heat equation itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np

SUPPORTED_DIMENSIONS = (1, 2, 3)
MAX_DERIVATIVE_WEIGHT = 4

# exp(-z) underflows to 0.0 in double precision for z above this
_EXP_CUTOFF = 745.0


class DerivativeIndex(NamedTuple):
    """Spatial multi-index ``eta`` and time order ``h`` of a kernel derivative."""

    eta: tuple[int, ...]
    h: int = 0

    @classmethod
    def zero(cls, n: int) -> "DerivativeIndex":
        return cls((0,) * n, 0)

    @classmethod
    def of(cls, n: int, spatial: dict[int, int] | None = None, h: int = 0) -> "DerivativeIndex":
        """Build an index from ``{axis: order}``, e.g. ``of(2, {0: 1, 1: 1}, 1)``."""
        eta = [0] * n
        for axis, order in (spatial or {}).items():
            eta[axis] += order
        return cls(tuple(eta), h)

    @property
    def order(self) -> int:
        return sum(self.eta)

    @property
    def weight(self) -> int:
        """Parabolic weight ``|eta| + 2h``."""
        return self.order + 2 * self.h

    def validate(self, n: int) -> None:
        if len(self.eta) != n:
            raise ValueError(f"multi-index {self.eta} does not match dimension {n}")
        if any(e < 0 for e in self.eta) or self.h < 0:
            raise ValueError(f"negative derivative order in {self}")
        if self.weight > MAX_DERIVATIVE_WEIGHT:
            raise ValueError(
                f"unsupported derivative {self}: |eta| + 2h = {self.weight} > {MAX_DERIVATIVE_WEIGHT}"
            )


def _check_dimension(n: int) -> None:
    if n not in SUPPORTED_DIMENSIONS:
        raise ValueError(f"unsupported dimension n={n}; expected one of {SUPPORTED_DIMENSIONS}")


# A polynomial in (x_1..x_n, u=1/t) is a dict {(a_1, ..., a_n, k): Fraction}.
_Poly = dict


def _poly_add(acc: _Poly, key: tuple[int, ...], coeff: Fraction) -> None:
    if coeff == 0:
        return
    value = acc.get(key, Fraction(0)) + coeff
    if value == 0:
        acc.pop(key, None)
    else:
        acc[key] = value


def _apply_dx(poly: _Poly, i: int) -> _Poly:
    out: _Poly = {}
    for key, c in poly.items():
        # -x_i u / 2 * monomial
        k = list(key)
        k[i] += 1
        k[-1] += 1
        _poly_add(out, tuple(k), -c / 2)
        # derivative of the monomial in x_i
        if key[i] > 0:
            k = list(key)
            k[i] -= 1
            _poly_add(out, tuple(k), c * key[i])
    return out


def _apply_dt(poly: _Poly, n: int) -> _Poly:
    out: _Poly = {}
    for key, c in poly.items():
        k = list(key)
        k[-1] += 1
        _poly_add(out, tuple(k), -Fraction(n, 2) * c)
        for j in range(n):
            k = list(key)
            k[j] += 2
            k[-1] += 2
            _poly_add(out, tuple(k), c / 4)
        # d/dt u^k = -k u^(k+1)
        if key[-1] > 0:
            k = list(key)
            k[-1] += 1
            _poly_add(out, tuple(k), -c * key[-1])
    return out


@lru_cache(maxsize=None)
def derivative_polynomial(idx: DerivativeIndex, n: int) -> tuple[tuple[tuple[int, ...], float], ...]:
    """Monomials ``((a_1..a_n, k), coeff)`` with ``D^eta d_t^h S = S * sum coeff x^a t^-k``."""
    idx = DerivativeIndex(tuple(idx.eta), idx.h)
    poly: _Poly = {(0,) * (n + 1): Fraction(1)}
    for _ in range(idx.h):
        poly = _apply_dt(poly, n)
    for i, order in enumerate(idx.eta):
        for _ in range(order):
            poly = _apply_dx(poly, i)
    return tuple(sorted((key, float(c)) for key, c in poly.items()))


def _as_arrays(t, x, n: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise ValueError(f"spatial argument has trailing size {x.shape[-1]}, expected n={n}")
    return t, x


def _reject_origin(t: np.ndarray, r2: np.ndarray) -> None:
    if np.any((t == 0.0) & (r2 == 0.0)):
        raise ValueError("heat kernel is singular at (t, x) = (0, 0)")


def heat_kernel(t, x, n: int) -> np.ndarray | float:
    """``S_n(t, x) = (4 pi t)^(-n/2) exp(-|x|^2 / (4t))`` for ``t > 0``, zero otherwise.

    ``t`` has shape ``S`` and ``x`` shape ``S + (n,)`` (broadcastable).
    """
    _check_dimension(n)
    t, x = _as_arrays(t, x, n)
    r2 = np.sum(x * x, axis=-1)
    t, r2 = np.broadcast_arrays(t, r2)
    _reject_origin(t, r2)
    out = np.zeros(t.shape)
    pos = t > 0
    tp = t[pos]
    z = r2[pos] / (4.0 * tp)
    out[pos] = np.where(z < _EXP_CUTOFF, (4.0 * np.pi * tp) ** (-0.5 * n) * np.exp(-np.minimum(z, _EXP_CUTOFF)), 0.0)
    return out if out.ndim else float(out)


def heat_kernel_derivative(idx: DerivativeIndex, t, x, n: int) -> np.ndarray | float:
    """Closed-form ``D_x^eta d_t^h S_n(t, x)``; zero for ``t <= 0`` away from the origin."""
    _check_dimension(n)
    idx = DerivativeIndex(tuple(idx.eta), idx.h)
    idx.validate(n)
    t, x = _as_arrays(t, x, n)
    shape = np.broadcast_shapes(t.shape, x.shape[:-1])
    t = np.broadcast_to(t, shape)
    x = np.broadcast_to(x, shape + (n,))
    r2 = np.sum(x * x, axis=-1)
    _reject_origin(t, r2)
    out = np.zeros(shape)
    pos = t > 0
    if not np.any(pos):
        return out if out.ndim else float(out)
    tp = t[pos]
    xp = x[pos]
    z = r2[pos] / (4.0 * tp)
    live = z < _EXP_CUTOFF
    base = np.where(live, (4.0 * np.pi * tp) ** (-0.5 * n) * np.exp(-np.minimum(z, _EXP_CUTOFF)), 0.0)
    poly = _polynomial_factor(idx, tp, xp, n)
    out[pos] = np.where(live, base * poly, 0.0)
    return out if out.ndim else float(out)


def sphere_measure(n: int) -> float:
    """``(n-1)``-dimensional measure of the unit sphere, ``2 pi^(n/2) / Gamma(n/2)``."""
    if int(n) != n or n < 1:
        raise ValueError(f"sphere measure needs a positive integer dimension, got {n}")
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def laplace_kernel(x, n: int) -> np.ndarray | float:
    """Fundamental solution of the Laplacian (sign convention: ``Lap S~ = delta``).

    ``log|x| / s_2`` for ``n = 2`` and ``|x|^(2-n) / ((2-n) s_n)`` otherwise
    (which gives ``|x|/2`` for ``n = 1``).
    """
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise ValueError(f"spatial argument has trailing size {x.shape[-1]}, expected n={n}")
    r = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(r == 0.0):
        raise ValueError("Laplace kernel is singular at x = 0")
    s_n = sphere_measure(n)
    if n == 2:
        out = np.log(r) / s_n
    else:
        out = r ** (2 - n) / ((2 - n) * s_n)
    return out if np.ndim(out) else float(out)


def laplace_kernel_gradient(x, n: int) -> np.ndarray:
    """Gradient of :func:`laplace_kernel`, ``x / (s_n |x|^n)``."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    if np.any(r == 0.0):
        raise ValueError("Laplace kernel is singular at x = 0")
    return x / (sphere_measure(n) * r**n)


# --------------------------------------------------------------------------
# empirical Gaussian bound


@dataclass(frozen=True)
class KernelSampler:
    """Deterministic sample of points with ``t > 0``.

    Times are log-spaced over ``t_range``; the scaled radius ``|x|/sqrt(t)``
    is log-spaced over ``rho_range`` and shuffled against the times, and
    directions are uniform on the sphere.  ``origin_only`` puts every
    sample at ``x = 0``.
    """

    count: int = 10_000
    t_range: tuple[float, float] = (1e-3, 1e3)
    rho_range: tuple[float, float] = (1e-3, 12.0)
    seed: int = 0
    origin_only: bool = False

    def points(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.count <= 0:
            raise ValueError("kernel sampler is empty")
        rng = np.random.default_rng(self.seed)
        t = np.logspace(np.log10(self.t_range[0]), np.log10(self.t_range[1]), self.count)
        if self.origin_only:
            return t, np.zeros((self.count, n))
        rho = np.logspace(np.log10(self.rho_range[0]), np.log10(self.rho_range[1]), self.count)
        rho = rho[rng.permutation(self.count)]
        if n == 1:
            d = np.where(rng.random(self.count) < 0.5, -1.0, 1.0)[:, None]
        else:
            d = rng.standard_normal((self.count, n))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
        return t, d * (rho * np.sqrt(t))[:, None]


@dataclass
class KernelBoundFit:
    index: DerivativeIndex
    fitted_constant: float
    max_ratio_sample: tuple[float, tuple[float, ...]]
    sample_count: int
    ratios: np.ndarray = field(repr=False, default=None)


def _polynomial_factor(idx: DerivativeIndex, t: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    u = 1.0 / t
    poly = np.zeros(np.shape(t))
    for key, c in derivative_polynomial(idx, n):
        term = np.full(np.shape(t), c)
        for i in range(n):
            if key[i]:
                term = term * x[..., i] ** key[i]
        if key[-1]:
            term = term * u ** key[-1]
        poly = poly + term
    return poly


def bound_ratio(idx: DerivativeIndex, t, x, n: int) -> np.ndarray:
    """``|D^eta d_t^h S_n| t^(n/2 + |eta|/2 + h) exp(|x|^2/(8t))`` at points with ``t > 0``.

    Evaluated as ``|poly| (4 pi)^(-n/2) t^(|eta|/2 + h) exp(-|x|^2/(8t))`` so
    that no intermediate underflows.
    """
    idx = DerivativeIndex(tuple(idx.eta), idx.h)
    t, x = _as_arrays(t, x, n)
    if np.any(t <= 0):
        raise ValueError("bound ratio is only defined for t > 0")
    z = np.sum(x * x, axis=-1) / (4.0 * t)
    poly = _polynomial_factor(idx, t, x, n)
    return np.abs(poly) * (4.0 * np.pi) ** (-0.5 * n) * t ** (0.5 * idx.order + idx.h) * np.exp(-0.5 * z)


def check_kernel_bound(idx: DerivativeIndex, n: int, sampler: KernelSampler) -> KernelBoundFit:
    """Empirical supremum of :func:`bound_ratio` over the sampler's points."""
    _check_dimension(n)
    idx = DerivativeIndex(tuple(idx.eta), idx.h)
    idx.validate(n)
    t, x = sampler.points(n)
    if t.size == 0:
        raise ValueError("kernel sampler is empty")
    ratios = bound_ratio(idx, t, x, n)
    if not np.all(np.isfinite(ratios)):
        raise FloatingPointError(f"non-finite bound ratio for {idx}")
    k = int(np.argmax(ratios))
    return KernelBoundFit(
        index=idx,
        fitted_constant=float(ratios[k]),
        max_ratio_sample=(float(t[k]), tuple(float(v) for v in x[k])),
        sample_count=int(t.size),
        ratios=ratios,
    )


def monitored_indices(n: int) -> list[DerivativeIndex]:
    """Derivative indices used by the potential estimates for dimension ``n``."""
    out = [DerivativeIndex.zero(n), DerivativeIndex.of(n, h=1), DerivativeIndex.of(n, {0: 1})]
    out.append(DerivativeIndex.of(n, {0: 1}, h=1))
    out.append(DerivativeIndex.of(n, {0: 2}))
    if n >= 2:
        out.append(DerivativeIndex.of(n, {0: 1, 1: 1}, h=1))
    else:
        out.append(DerivativeIndex.of(n, {0: 2}, h=1))
    return out
