"""JSON problem files for the command line.

One file may carry any of the sections ``checks`` (verify), ``solve``,
``convergence`` and ``bounds``.  Unknown keys are rejected everywhere and
numeric fields are range-checked by the owning types when the file is
turned into library objects.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from heatvp.domains import Domain
from heatvp.fields import ScalarField, field_from_spec
from heatvp.quadrature import QuadConfig

CHECK_IDS = ("lemma31", "lemma31-no-renorm", "x0-independence", "lemma42", "lemma43", "thm44i", "thm44ii", "bound31")
CONVERGENCE_TARGETS = ("newtonian", "volume-potential", "b-operator")

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainSpec(_Strict):
    kind: Literal["box", "ball"]
    lower: list[float] | None = None
    upper: list[float] | None = None
    center: list[float] | None = None
    radius: float | None = None
    T: float | None = None

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "box" and (self.lower is None or self.upper is None):
            raise ValueError("a box needs 'lower' and 'upper'")
        if self.kind == "ball" and (self.center is None or self.radius is None):
            raise ValueError("a ball needs 'center' and 'radius'")
        return self

    def build(self) -> Domain:
        T = math.inf if self.T is None else self.T
        if self.kind == "box":
            return Domain.box(self.lower, self.upper, T=T)
        return Domain.ball(self.center, self.radius, T=T)


class DensitySpec(_Strict):
    """A catalog family with parameters, or a sum of such."""

    family: str | None = None
    params: dict[str, Any] = Field(default_factory=dict)
    sum: list["DensitySpec"] | None = None
    scale: float | None = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.family is None) == (self.sum is None):
            raise ValueError("a density needs exactly one of 'family' or 'sum'")
        return self

    def as_dict(self) -> dict:
        return self.model_dump(exclude_none=True)

    def build(self, n: int) -> ScalarField:
        return field_from_spec(self.as_dict(), n)


class QuadSpec(_Strict):
    space_points_per_dim: int | None = None
    time_points: int | None = None
    grading_exponent: float | None = None
    horizon: float | None = None
    exclusion_radius: float | None = None
    radial_levels: int | None = None
    face_levels: int | None = None
    angular_points: int | None = None
    time_floor: float | None = None
    substitution: str | None = None

    def build(self, base: QuadConfig | None = None) -> QuadConfig:
        kw = self.model_dump(exclude_none=True)
        base = base or QuadConfig()
        return QuadConfig(**{**base.to_dict(), **kw})


class GridSpec(_Strict):
    t_range: tuple[float, float] = (0.0, 1.0)
    nt: int = Field(9, ge=2)
    nx: int = Field(9, ge=2)
    pair_budget: int = Field(1_000_000, ge=1)


class CheckSpec(_Strict):
    id: str
    domain: DomainSpec | None = None
    density: DensitySpec | None = None
    densities: list[DensitySpec] | None = None
    samples: int = Field(10, ge=1)
    t_range: tuple[float, float] = (0.5, 1.5)
    margin: float = Field(0.1, ge=0, lt=1)
    tolerance: float | None = Field(None, gt=0)
    step: float | None = Field(None, gt=0)
    halvings: int | None = Field(None, ge=0)
    x0: list[list[float]] | None = None
    alpha: float | None = Field(None, gt=0, lt=1)
    grid: GridSpec | None = None
    dims: list[int] | None = None
    count: int | None = Field(None, ge=10)
    quad: QuadSpec | None = None

    @field_validator("id")
    @classmethod
    def _known(cls, v):
        if v not in CHECK_IDS:
            raise ValueError(f"unknown check {v!r}; known: {list(CHECK_IDS)}")
        return v

    @field_validator("t_range")
    @classmethod
    def _ordered(cls, v):
        if not v[0] < v[1]:
            raise ValueError("t_range must be increasing")
        return v

    @model_validator(mode="after")
    def _needs(self):
        if self.id != "bound31" and self.domain is None:
            raise ValueError(f"check {self.id!r} needs a domain")
        if self.id in ("lemma31", "lemma31-no-renorm", "x0-independence") and self.density is None:
            raise ValueError(f"check {self.id!r} needs a density")
        if self.id in ("lemma42", "lemma43", "thm44i", "thm44ii") and not (self.densities or self.density):
            raise ValueError(f"check {self.id!r} needs 'densities'")
        if self.id == "x0-independence" and (self.x0 is None or len(self.x0) < 2):
            raise ValueError("x0-independence needs at least two 'x0' points")
        return self

    def density_list(self) -> list[DensitySpec]:
        return list(self.densities) if self.densities else [self.density]


class LatticeModel(_Strict):
    nx: int = Field(..., ge=11)
    nt: int = Field(..., ge=21)


class SolveSpec(_Strict):
    """Either a named manufactured ``case`` or an explicit problem."""

    case: str | None = None
    problem_kind: Literal["dirichlet", "neumann"] | None = None
    domain: DomainSpec | None = None
    T: float = Field(1.0, gt=0)
    density_f: DensitySpec | None = None
    boundary_data: DensitySpec | None = None
    exact_solution: DensitySpec | None = None
    lattice: LatticeModel
    max_interior_residual: float = Field(0.5, gt=0)
    max_boundary_error: float = Field(1e-2, gt=0)
    max_error_vs_exact: float | None = Field(None, gt=0)
    quad: QuadSpec | None = None

    @model_validator(mode="after")
    def _one_of(self):
        explicit = (self.problem_kind, self.domain, self.density_f, self.boundary_data)
        if self.case is None and any(v is None for v in explicit):
            raise ValueError("solve needs 'case' or all of problem_kind, domain, density_f, boundary_data")
        if self.case is not None and any(v is not None for v in explicit + (self.exact_solution,)):
            raise ValueError("'case' cannot be combined with an explicit problem")
        return self


class ConvergenceSpec(_Strict):
    name: str
    target: str
    domain: DomainSpec
    density: DensitySpec
    t: float = 1.0
    x: list[float]
    levels: int = Field(4, ge=3, le=6)
    reference: Literal["finest", "closed-form"] = "finest"
    min_order: float | None = None
    base: QuadSpec | None = None

    @field_validator("target")
    @classmethod
    def _known(cls, v):
        if v not in CONVERGENCE_TARGETS:
            raise ValueError(f"unknown convergence target {v!r}; known: {list(CONVERGENCE_TARGETS)}")
        return v


class BoundsSpec(_Strict):
    dims: list[int] = Field(default_factory=lambda: [1, 2, 3])
    count: int = Field(10_000, ge=10)
    tolerance: float | None = Field(None, gt=0)
    stability: float = Field(0.10, gt=0)


class ProblemFile(_Strict):
    version: int
    seed: int = 0
    quad: QuadSpec | None = None
    checks: list[CheckSpec] | None = None
    solve: SolveSpec | None = None
    convergence: list[ConvergenceSpec] | None = None
    bounds: BoundsSpec | None = None

    @field_validator("version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported problem-file version {v}; expected {SCHEMA_VERSION}")
        return v

    def quad_config(self) -> QuadConfig:
        return self.quad.build() if self.quad else QuadConfig()


def load_problem(path: str | Path) -> ProblemFile:
    """Parse and validate a problem file (raises ``ValueError`` subclasses)."""
    text = Path(path).read_text()
    return ProblemFile.model_validate(json.loads(text))


def bundled_config(name: str) -> Path:
    return Path(__file__).parent / "data" / name
