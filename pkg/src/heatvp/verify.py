"""Verification checks: one function per identity or mapping property.

Each check returns a :class:`CheckReport`.  Checks with several parts
(an identity plus a step-size trend, or a constant plus a stability test)
report ``max_discrepancy`` as the largest part-wise ``value / tolerance`` and
``tolerance = 1``; the raw parts are kept in ``details``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from heatvp.domains import Domain, SpaceTimePoint
from heatvp.fields import ScalarField
from heatvp.holder_spaces import (
    AnisotropicExponents,
    SamplingGrid,
    estimate_anisotropic_norm,
    schauder_from_samples,
)
from heatvp.kernels import KernelSampler, check_kernel_bound, monitored_indices
from heatvp.potentials import (
    PotentialEvaluator,
    b_operator,
    b_operator_many,
    gradient_many,
    newtonian_potential,
    pde_residual,
    stacked_rules,
    volume_potential,
)
from heatvp.quadrature import QuadConfig

TOLERANCES: dict[str, float] = {
    "lemma31": 1e-3,
    "lemma31-no-renorm": 1e-3,
    "x0-independence": 1e-6,
    "lemma42": 1e-3,
    "lemma43": 1e-6,
    "thm44i": 1e-2,
    "thm44ii": 0.25,
    "bound31": 0.01,
}

# trend thresholds
LEMMA42_MIN_ORDER = 1.5
THM44I_MIN_REDUCTION = 4.0
BOUND31_STABILITY = 0.10
FLOOR_FACTOR = 10.0


@dataclass
class CheckReport:
    check_id: str
    max_discrepancy: float
    tolerance: float
    sample_count: int
    details: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    negative_control: bool = False

    @property
    def passed(self) -> bool:
        return bool(self.max_discrepancy <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "id": self.check_id,
            "tolerance": self.tolerance,
            "max_discrepancy": self.max_discrepancy,
            "passed": self.passed,
            "samples": self.sample_count,
            "negative_control": self.negative_control,
            "details": self.details,
            "notes": self.notes,
        }

    def line(self) -> str:
        return f"{self.check_id}: {'PASS' if self.passed else 'FAIL'} (max discrepancy {self.max_discrepancy:.3e}, tolerance {self.tolerance:.3e})"


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def reports_to_json(reports: Sequence[CheckReport], meta: dict | None = None) -> str:
    doc = {
        "meta": meta or {},
        "checks": [r.to_dict() for r in reports],
        "passed": all(r.passed for r in reports),
    }
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def reports_to_csv(reports: Sequence[CheckReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check_id", "passed", "max_discrepancy", "tolerance", "sample_count", "negative_control"])
    for r in reports:
        w.writerow([r.check_id, r.passed, repr(float(r.max_discrepancy)), repr(float(r.tolerance)), r.sample_count, r.negative_control])
    return buf.getvalue()


def interior_samples(domain: Domain, count: int, seed: int, t_range: tuple[float, float], margin: float = 0.1) -> list[SpaceTimePoint]:
    """Deterministic space-time samples inside ``domain x t_range``."""
    rng = np.random.default_rng(seed)
    X = domain.sample_interior(count, seed, margin)
    T = rng.uniform(t_range[0], t_range[1], count)
    return [SpaceTimePoint(float(t), tuple(x)) for t, x in zip(T, X)]


def _alt_quad(quad: QuadConfig) -> QuadConfig:
    """A slightly different rule of the same accuracy class (for floor estimates)."""
    return replace(quad, space_points_per_dim=quad.space_points_per_dim + 1, time_points=quad.time_points + 1)


# ---------------------------------------------------------------------------
# autonomous densities


def verify_autonomous_identity(
    h: ScalarField,
    domain: Domain,
    samples: Sequence[SpaceTimePoint],
    tol: float = TOLERANCES["lemma31"],
    quad: QuadConfig | None = None,
    x0=None,
    ablate_renormalization: bool = False,
) -> CheckReport:
    """``|P[h](t,x) + (P~[h](x) - [n=2] P~[h](x0))|`` for time-independent ``h``.

    With ``ablate_renormalization`` the ``x0`` term is left out of the
    comparison (negative control: must fail for ``n = 2``).
    """
    quad = quad or QuadConfig()
    if not h.time_independent:
        raise ValueError("the autonomous identity needs a time-independent density")
    if samples and not h.spot_check_time_independent(np.array([p.x for p in samples])):
        raise ValueError("density is flagged time-independent but varies in time")
    ev = PotentialEvaluator(domain, h, quad, x0)
    n = domain.n
    shift = 0.0
    if n == 2 and not ablate_renormalization:
        shift = newtonian_potential(h, domain, ev.x0a, quad)
    details = []
    worst = 0.0
    by_x: dict[tuple, list[float]] = {}
    for p in samples:
        P = volume_potential(ev, p)
        Pt = newtonian_potential(h, domain, p.x, quad)
        d = abs(P + (Pt - shift))
        worst = max(worst, d)
        by_x.setdefault(p.x, []).append(P)
        details.append({"t": p.t, "x": list(p.x), "heat": P, "newtonian": Pt, "discrepancy": d})
    spread = max((max(v) - min(v) for v in by_x.values()), default=0.0)
    cid = "lemma31-no-renorm" if ablate_renormalization else "lemma31"
    notes = [f"x0 = {list(ev.x0)}", f"max spread in t at fixed x = {spread:.3e}"]
    return CheckReport(cid, worst, tol, len(samples), details, notes, negative_control=ablate_renormalization)


def time_spread(h: ScalarField, domain: Domain, x, times: Sequence[float], quad: QuadConfig | None = None) -> float:
    """Spread of ``P[h](t, x)`` over ``times`` (zero for time-independent ``h``)."""
    ev = PotentialEvaluator(domain, h, quad or QuadConfig())
    vals = [volume_potential(ev, (t, x)) for t in times]
    return max(vals) - min(vals)


def verify_x0_independence(
    f: ScalarField,
    domain: Domain,
    samples: Sequence[SpaceTimePoint],
    x0s: Sequence,
    tol: float = TOLERANCES["x0-independence"],
    quad: QuadConfig | None = None,
) -> CheckReport:
    """For a density vanishing before ``t = 0`` the ``n = 2`` potential ignores ``x0``."""
    quad = quad or QuadConfig()
    if len(x0s) < 2:
        raise ValueError("need at least two x0 choices")
    evs = [PotentialEvaluator(domain, f, quad, tuple(x0)) for x0 in x0s]
    details = []
    worst = 0.0
    for p in samples:
        vals = [volume_potential(ev, p) for ev in evs]
        d = max(vals) - min(vals)
        worst = max(worst, d)
        details.append({"t": p.t, "x": list(p.x), "values": vals, "discrepancy": d})
    notes = []
    if not math.isfinite(f.support_start) or f.support_start < 0:
        notes.append("density is not supported in t >= 0; x0-independence is not expected")
    return CheckReport("x0-independence", worst, tol, len(samples), details, notes)


# ---------------------------------------------------------------------------
# time-derivative identity and vanishing


def _lemma42_discrepancies(ev: PotentialEvaluator, samples, step: float) -> list[float]:
    out = []
    for p in samples:
        fd = (volume_potential(ev, (p.t + step, p.x)) - volume_potential(ev, (p.t - step, p.x))) / (2 * step)
        out.append(abs(fd - b_operator(ev, p)))
    return out


def verify_time_derivative_identity(
    f: ScalarField,
    domain: Domain,
    samples: Sequence[SpaceTimePoint],
    step: float = 1e-3,
    tol: float | None = None,
    quad: QuadConfig | None = None,
    halvings: int = 2,
) -> CheckReport:
    """``|(P[f](t+h,x) - P[f](t-h,x)) / 2h - B[f](t,x)|`` and its ``O(h^2)`` trend.

    Parts: the identity at ``step`` against ``max(tol, 100 step^2)``, and for
    each halving an observed order ``>= 1.5`` unless the finer discrepancy is
    below ``10x`` the quadrature floor (difference against a perturbed rule).
    """
    quad = quad or QuadConfig()
    tol = TOLERANCES["lemma42"] if tol is None else tol
    for p in samples:
        if p.t - (step + 1e-15) <= f.support_start or p.t + step > domain.T:
            raise ValueError(f"sample t={p.t} is within the step {step} of the support boundary or the final time")
    ev = PotentialEvaluator(domain, f, quad)
    steps = [step / 2**k for k in range(halvings + 1)]
    table = [_lemma42_discrepancies(ev, samples, h) for h in steps]
    maxima = [max(row) for row in table]
    budget = max(tol, 100 * step**2)
    parts = [maxima[0] / budget]
    details = [{"part": "identity", "step": step, "max_discrepancy": maxima[0], "tolerance": budget}]
    details += [{"part": "sample", "t": p.t, "x": list(p.x), "discrepancy": d} for p, d in zip(samples, table[0])]
    alt = None
    for k in range(halvings):
        coarse, fine = maxima[k], maxima[k + 1]
        order = math.log2(coarse / fine) if fine > 0 and coarse > 0 else math.inf
        floor = 0.0
        ok = order >= LEMMA42_MIN_ORDER
        if not ok:
            alt = alt or PotentialEvaluator(domain, f, _alt_quad(quad))
            other = _lemma42_discrepancies(alt, samples, steps[k + 1])
            floor = FLOOR_FACTOR * max(abs(a - b) for a, b in zip(other, table[k + 1]))
            ok = fine <= floor
        parts.append(0.0 if ok else LEMMA42_MIN_ORDER / max(order, 1e-300))
        details.append({"part": "trend", "steps": [steps[k], steps[k + 1]], "maxima": [coarse, fine], "observed_order": order, "floor": floor, "ok": ok})
    return CheckReport("lemma42", max(parts), 1.0, len(samples), details, [f"density {f.name}"])


def verify_vanishing(
    f: ScalarField,
    domain: Domain,
    samples: Sequence[SpaceTimePoint],
    tol: float = TOLERANCES["lemma43"],
    quad: QuadConfig | None = None,
) -> CheckReport:
    """``max |B[f]|`` for a time-independent ``f``."""
    if not f.time_independent:
        raise ValueError("the vanishing check needs a density flagged time-independent")
    ev = PotentialEvaluator(domain, f, quad or QuadConfig())
    vals = [b_operator(ev, p) for p in samples]
    details = [{"t": p.t, "x": list(p.x), "value": v} for p, v in zip(samples, vals)]
    return CheckReport("lemma43", max((abs(v) for v in vals), default=0.0), tol, len(samples), details, [f"density {f.name}"])


# ---------------------------------------------------------------------------
# heat equation and mapping bound


def verify_pde_residual(
    f: ScalarField,
    domain: Domain,
    samples: Sequence[SpaceTimePoint],
    step: float = 1e-3,
    tol: float = TOLERANCES["thm44i"],
    quad: QuadConfig | None = None,
    halvings: int = 1,
) -> CheckReport:
    """``(d_t - Lap) P[df/dt] - df/dt`` at interior samples, and its step trend.

    For each halving of both steps the largest residual must drop ``>= 4x``
    unless it already sits below ``10x`` the quadrature floor.
    """
    quad = quad or QuadConfig()
    ev = PotentialEvaluator(domain, f, quad)
    steps = [step / 2**k for k in range(halvings + 1)]
    table = [[abs(pde_residual(ev, p, (h, h))) for p in samples] for h in steps]
    maxima = [max(r) for r in table]
    parts = [maxima[0] / tol]
    details = [{"part": "residual", "step": step, "max_residual": maxima[0], "tolerance": tol}]
    details += [{"part": "sample", "t": p.t, "x": list(p.x), "residual": r} for p, r in zip(samples, table[0])]
    alt = None
    for k in range(halvings):
        coarse, fine = maxima[k], maxima[k + 1]
        ratio = coarse / fine if fine > 0 else math.inf
        ok = ratio >= THM44I_MIN_REDUCTION
        floor = 0.0
        if not ok:
            alt = alt or PotentialEvaluator(domain, f, _alt_quad(quad))
            other = [abs(pde_residual(alt, p, (steps[k + 1],) * 2)) for p in samples]
            floor = FLOOR_FACTOR * max(abs(a - b) for a, b in zip(other, table[k + 1]))
            ok = fine <= floor
        parts.append(0.0 if ok else THM44I_MIN_REDUCTION / max(ratio, 1e-300))
        details.append({"part": "trend", "steps": [steps[k], steps[k + 1]], "maxima": [coarse, fine], "reduction": ratio, "floor": floor, "ok": ok})
    return CheckReport("thm44i", max(parts), 1.0, len(samples), details, [f"density {f.name}"])


def potential_norm_ratio(ev: PotentialEvaluator, alpha: float, grid: SamplingGrid) -> dict:
    """``||P[df/dt]||_{C^{(1+a)/2;1+a}} / ||f||_{C^{(1+a)/2;0}}`` on ``grid``."""
    f = ev.density
    fnorm = estimate_anisotropic_norm(f, AnisotropicExponents.schauder_time(alpha), grid).total
    rules = stacked_rules(ev, grid.points)
    V = np.empty((len(grid.times), len(grid.points)))
    G = np.empty(V.shape + (grid.n,))
    for k, t in enumerate(grid.times):
        V[k] = b_operator_many(ev, t, grid.points, rules=rules)
        G[k] = gradient_many(ev, t, grid.points, of_time_derivative=True, rules=rules)
    pnorm = schauder_from_samples(V, G, alpha, grid).total
    ratio = pnorm / fnorm if fnorm > 0 else math.nan
    return {"density": f.name, "f_norm": fnorm, "potential_norm": pnorm, "ratio": ratio, "grid_size": grid.size}


def verify_mapping_bound(
    catalog: Sequence[ScalarField],
    domain: Domain,
    alpha: float,
    grid: SamplingGrid,
    tol: float = TOLERANCES["thm44ii"],
    quad: QuadConfig | None = None,
) -> CheckReport:
    """Norm ratios of ``f -> P[df/dt]`` on two nested grids.

    Passes when every ratio is finite and the largest one moves by less than
    ``tol`` (relative) under one refinement.
    """
    quad = quad or QuadConfig()
    grids = [grid, grid.refined()]
    details = []
    notes = []
    best = []
    for g in grids:
        ratios = []
        for f in catalog:
            row = potential_norm_ratio(PotentialEvaluator(domain, f, quad), alpha, g)
            if row["f_norm"] == 0:
                notes.append(f"density {f.name}: zero norm, ratio undefined, skipped")
                continue
            ratios.append(row["ratio"])
            details.append(row)
        best.append(max(ratios) if ratios else math.nan)
    if not all(math.isfinite(r) for r in best):
        if all(math.isnan(r) for r in best):
            return CheckReport("thm44ii", 0.0, tol, 0, details, notes)
        return CheckReport("thm44ii", math.inf, tol, len(catalog), details, notes)
    if any(not math.isfinite(d["ratio"]) for d in details):
        return CheckReport("thm44ii", math.inf, tol, len(catalog), details, notes + ["non-finite ratio"])
    change = abs(best[1] - best[0]) / best[0]
    notes.append(f"max ratio per level: {best}")
    return CheckReport("thm44ii", change, tol, len(catalog), details, notes)


# ---------------------------------------------------------------------------
# kernel derivative bound


def verify_kernel_bound(
    dims: Sequence[int] = (1, 2, 3),
    count: int = 10_000,
    tol: float = TOLERANCES["bound31"],
    seed: int = 0,
    stability: float = BOUND31_STABILITY,
) -> CheckReport:
    """Fitted constants: ``(0,0)`` equals ``(4 pi)^{-n/2}``; all monitored indices stable when samples quadruple."""
    parts = []
    details = []
    for n in dims:
        for idx in monitored_indices(n):
            a = check_kernel_bound(idx, n, KernelSampler(count=count, seed=seed))
            b = check_kernel_bound(idx, n, KernelSampler(count=4 * count, seed=seed + 1))
            change = abs(b.fitted_constant / a.fitted_constant - 1.0)
            parts.append(change / stability)
            row = {"n": n, "eta": list(idx.eta), "h": idx.h, "constant": a.fitted_constant, "constant_4x": b.fitted_constant, "change": change}
            if idx.order == 0 and idx.h == 0:
                exact = (4 * math.pi) ** (-n / 2)
                rel = abs(a.fitted_constant / exact - 1.0)
                parts.append(rel / tol)
                row["exact"] = exact
                row["relative_error"] = rel
            details.append(row)
    return CheckReport("bound31", max(parts), 1.0, len(details), details, [f"{count} and {4 * count} samples per index"])


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class RateRow:
    level: int
    value: float
    error: float
    order: float | None
    flag: str = ""

    def to_dict(self) -> dict:
        return {"level": self.level, "value": self.value, "error": self.error, "order": self.order, "flag": self.flag}


def quad_ladder(count: int = 4, base: QuadConfig | None = None) -> list[QuadConfig]:
    """Nested refinement levels starting from a coarse rule."""
    cfg = base or QuadConfig(space_points_per_dim=2, time_points=2, radial_levels=2, face_levels=1)
    out = [cfg]
    for _ in range(count - 1):
        out.append(out[-1].refined())
    return out


def convergence_study(
    target: Callable[[QuadConfig], float],
    levels: Sequence[QuadConfig],
    reference: float | None = None,
    floor: float = 1e-13,
) -> list[RateRow]:
    """Errors per level and observed orders ``log2(e_{k-1} / e_k)``.

    Without ``reference`` the finest level is the reference.  Errors below
    ``floor * max(1, |reference|)`` are marked ``floor``; a non-decreasing
    error is marked ``non-monotone`` (not fatal).
    """
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    values = [float(target(q)) for q in levels]
    ref = values[-1] if reference is None else float(reference)
    scale = floor * max(1.0, abs(ref))
    rows: list[RateRow] = []
    count = len(values) if reference is not None else len(values) - 1
    for k in range(count):
        e = abs(values[k] - ref)
        order = None
        flag = "floor" if e <= scale else ""
        if k > 0:
            prev = rows[-1].error
            if e > scale and prev > scale:
                order = math.log2(prev / e)
                if e >= prev:
                    flag = "non-monotone"
            elif prev <= scale < e:
                flag = "non-monotone"
        rows.append(RateRow(k, values[k], e, order, flag))
    if reference is None:
        rows.append(RateRow(len(values) - 1, values[-1], 0.0, None, "reference"))
    return rows


def min_observed_order(rows: Sequence[RateRow]) -> float:
    """Smallest observed order; ``inf`` when every error already sits at the floor."""
    orders = [r.order for r in rows if r.order is not None]
    return min(orders) if orders else math.inf


def rates_to_csv(rows: Sequence[RateRow], study: str = "") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["study", "level", "value", "error", "order", "flag"])
    for r in rows:
        w.writerow([study, r.level, repr(r.value), repr(r.error), "" if r.order is None else repr(r.order), r.flag])
    return buf.getvalue()
