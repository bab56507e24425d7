"""Bounded spatial domains (boxes and balls) and space-time points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpaceTimePoint:
    t: float
    x: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def xa(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``prod (lower_i, upper_i)`` or open ball ``B(center, radius)``.

    ``T`` is the final time of the space-time cylinder (``inf`` allowed).
    """

    kind: str
    n: int
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0
    T: float = math.inf
    # cached geometry
    _meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"unsupported dimension n={self.n}")
        if self.kind == "box":
            lo = tuple(float(v) for v in self.lower)
            hi = tuple(float(v) for v in self.upper)
            if len(lo) != self.n or len(hi) != self.n:
                raise ValueError("box corners do not match the dimension")
            if any(b <= a for a, b in zip(lo, hi)):
                raise ValueError(f"box has empty interior: {lo} .. {hi}")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "ball":
            c = tuple(float(v) for v in self.center)
            if len(c) != self.n:
                raise ValueError("ball center does not match the dimension")
            if not self.radius > 0:
                raise ValueError("ball radius must be positive")
            object.__setattr__(self, "center", c)
            object.__setattr__(self, "radius", float(self.radius))
        else:
            raise ValueError(f"unsupported domain kind {self.kind!r}")

    @classmethod
    def box(cls, lower, upper, T: float = math.inf) -> "Domain":
        lower = tuple(np.atleast_1d(np.asarray(lower, dtype=float)))
        upper = tuple(np.atleast_1d(np.asarray(upper, dtype=float)))
        return cls("box", len(lower), lower=lower, upper=upper, T=T)

    @classmethod
    def unit_box(cls, n: int, T: float = math.inf) -> "Domain":
        return cls.box((0.0,) * n, (1.0,) * n, T=T)

    @classmethod
    def ball(cls, center, radius: float, T: float = math.inf) -> "Domain":
        center = tuple(np.atleast_1d(np.asarray(center, dtype=float)))
        return cls("ball", len(center), center=center, radius=radius, T=T)

    @classmethod
    def unit_ball(cls, n: int, T: float = math.inf) -> "Domain":
        return cls.ball((0.0,) * n, 1.0, T=T)

    # ------------------------------------------------------------------ geometry

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(self.hi - self.lo))
        return math.pi ** (self.n / 2) / math.gamma(self.n / 2 + 1) * self.radius**self.n

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "box":
            return 0.5 * (self.lo + self.hi)
        return self.c.copy()

    @property
    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        return 2.0 * self.radius

    def contains(self, x, closed: bool = False, tol: float = 0.0) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if self.kind == "box":
            if closed:
                inside = np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)
            else:
                inside = np.all((x > self.lo + tol) & (x < self.hi - tol), axis=-1)
        else:
            r = np.linalg.norm(x - self.c, axis=-1)
            inside = r <= self.radius + tol if closed else r < self.radius - tol
        return inside if np.ndim(inside) else bool(inside)

    def distance_to_boundary(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "box":
            return float(np.min(np.minimum(x - self.lo, self.hi - x)))
        return float(self.radius - np.linalg.norm(x - self.c))

    def outward_normal(self, x, tol: float = 1e-12) -> np.ndarray:
        """Unit outward normal at a boundary point (box corners/edges are rejected)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "ball":
            d = x - self.c
            return d / np.linalg.norm(d)
        nu = np.zeros(self.n)
        hits = 0
        for i in range(self.n):
            if abs(x[i] - self.lo[i]) <= tol:
                nu[i] = -1.0
                hits += 1
            elif abs(x[i] - self.hi[i]) <= tol:
                nu[i] = 1.0
                hits += 1
        if hits != 1:
            raise ValueError(f"point {x} is not on a single face of the box")
        return nu

    def ray_exit(self, x, directions: np.ndarray) -> np.ndarray:
        """Distance from ``x`` (in the closure) along unit ``directions`` to the boundary."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "ball":
            d = x - self.c
            b = directions @ d
            cc = float(d @ d) - self.radius**2
            disc = np.maximum(b * b - cc, 0.0)
            return np.maximum(-b + np.sqrt(disc), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(directions > 0, (self.hi - x) / directions, np.inf)
            dn = np.where(directions < 0, (self.lo - x) / directions, np.inf)
        return np.maximum(np.min(np.minimum(up, dn), axis=-1), 0.0)

    def sample_interior(self, count: int, seed: int, margin: float = 0.1) -> np.ndarray:
        """Deterministic uniform sample of points at distance >= ``margin`` (relative) from the boundary."""
        rng = np.random.default_rng(seed)
        if self.kind == "box":
            span = self.hi - self.lo
            return self.lo + span * (margin + (1 - 2 * margin) * rng.random((count, self.n)))
        out = np.empty((count, self.n))
        k = 0
        rmax = self.radius * (1 - margin)
        while k < count:
            p = rng.uniform(-rmax, rmax, size=(4 * count, self.n))
            p = p[np.linalg.norm(p, axis=1) < rmax][: count - k]
            out[k : k + len(p)] = p
            k += len(p)
        return self.c + out

    def to_dict(self) -> dict:
        if self.kind == "box":
            d = {"kind": "box", "lower": list(self.lower), "upper": list(self.upper)}
        else:
            d = {"kind": "ball", "center": list(self.center), "radius": self.radius}
        if math.isfinite(self.T):
            d["T"] = self.T
        return d
