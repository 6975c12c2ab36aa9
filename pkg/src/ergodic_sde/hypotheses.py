"""Machine checks of the standing assumptions and the curvature constant.

Four checks are bundled into one report: boundary sign/degeneracy of the
coefficients, finiteness of the stationary normalization plus vanishing of
the boundary weight flux, positivity of the curvature expression

    (1/2) b b'' - a' + a b' / b  >=  rho > 0,

whose infimum is the exponential decay rate of the relative entropy, and the
interior-confinement quantity c(x) = -a' + b'' b + (b')^2 whose constancy
and positivity certify that paths never touch the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import AitSahaliaParams, ScalarSde
from .numerics import chebyshev_interior, golden_min
from .stationary import (
    QuadConfig,
    boundary_flux_decay,
    build_potential,
    compute_normalization,
)

__all__ = [
    "BoundaryReport",
    "HypothesisBReport",
    "RhoEstimate",
    "InternalConditionReport",
    "HypothesisReport",
    "RhoSearchConfig",
    "check_boundary_conditions",
    "check_hypothesis_b",
    "curvature",
    "estimate_rho",
    "internal_condition",
    "analyze",
]

_B_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class BoundaryReport:
    left_applicable: bool
    right_applicable: bool
    left_a_positive: bool | None
    right_a_negative: bool | None
    left_b_zero: bool | None
    right_b_zero: bool | None
    interior_b_min: float
    interior_b_positive: bool
    notes: tuple = ()

    @property
    def passed(self) -> bool:
        clauses = [
            self.left_a_positive,
            self.right_a_negative,
            self.left_b_zero,
            self.right_b_zero,
        ]
        return self.interior_b_positive and all(c is not False for c in clauses)


def check_boundary_conditions(sde: ScalarSde, n_probe: int = 33) -> BoundaryReport:
    """Sign of the drift and degeneracy of the diffusion at finite endpoints,
    positivity of the diffusion at interior Chebyshev probes."""
    dom = sde.domain
    notes = []

    def endpoint_checks(endpoint, want_sign):
        if not math.isfinite(endpoint):
            return None, None
        if sde.interior_singular:
            notes.append(f"endpoint {endpoint}: boundary clause skipped (singular interior model)")
            return None, None
        try:
            a_val = float(sde.a(endpoint))
            b_val = float(sde.b(endpoint))
        except (FloatingPointError, ZeroDivisionError):
            notes.append(f"endpoint {endpoint}: coefficient evaluation failed (indeterminate)")
            return None, None
        if not (math.isfinite(a_val) and math.isfinite(b_val)):
            notes.append(f"endpoint {endpoint}: non-finite coefficients (indeterminate)")
            return None, None
        return bool(a_val * want_sign > 0), bool(abs(b_val) <= _B_ZERO_TOL)

    left_a, left_b = endpoint_checks(dom.left, +1)
    right_a, right_b = endpoint_checks(dom.right, -1)

    lo = dom.left if dom.left_finite else -max(1.0, abs(dom.right) if dom.right_finite else 1.0) * 8
    hi = dom.right if dom.right_finite else max(1.0, abs(dom.left) if dom.left_finite else 1.0) * 8
    probes = chebyshev_interior(lo, hi, n_probe)
    with np.errstate(invalid="ignore"):
        b_vals = np.asarray(sde.b(probes), dtype=float)
    b_min = float(np.nanmin(b_vals))
    return BoundaryReport(
        left_applicable=dom.left_finite and not sde.interior_singular,
        right_applicable=dom.right_finite and not sde.interior_singular,
        left_a_positive=left_a,
        right_a_negative=right_a,
        left_b_zero=left_b,
        right_b_zero=right_b,
        interior_b_min=b_min,
        interior_b_positive=bool(np.all(np.isfinite(b_vals)) and b_min > 0),
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class HypothesisBReport:
    Z_estimate: float
    log_Z: float
    Z_finite: bool | None
    boundary_flux_zero: dict
    notes: tuple = ()

    @property
    def passed(self) -> bool:
        return self.Z_finite is True and all(v is True for v in self.boundary_flux_zero.values())


def check_hypothesis_b(sde: ScalarSde, quad_config: QuadConfig | None = None, potential=None) -> HypothesisBReport:
    """Finite normalization of e^{-psi} and vanishing boundary weight flux."""
    cfg = quad_config or QuadConfig()
    if potential is None:
        potential = build_potential(sde, config=cfg)
    report = compute_normalization(potential, cfg)
    flux = boundary_flux_decay(potential)
    return HypothesisBReport(
        Z_estimate=report.Z,
        log_Z=report.log_Z,
        Z_finite=report.finite,
        boundary_flux_zero=flux,
        notes=report.notes,
    )


def curvature(sde: ScalarSde, y):
    """(1/2) b b'' - a' + a b' / b at strictly interior points."""
    b = sde.b(y)
    if np.any(np.asarray(b) == 0):
        raise ZeroDivisionError("curvature needs b(y) > 0; point is at or too near the boundary")
    return 0.5 * b * sde.b(y, 2) - sde.a(y, 1) + sde.a(y) * sde.b(y, 1) / b


@dataclass(frozen=True)
class RhoSearchConfig:
    n_coarse: int = 2001
    refine_tol: float = 1e-9
    weight_drop: float = 1e-12
    truncation: tuple = (None, None)  # explicit (lo, hi) overrides per side


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    argmin: float
    positive: bool
    boundary_attained: str | None
    search_box: tuple
    notes: tuple = ()


def _weight_box(sde: ScalarSde, drop: float, potential=None):
    """Interval where the unnormalized stationary weight stays above
    drop x its maximum; ties the curvature scan to where mass lives."""
    if potential is None:
        potential = build_potential(sde)
    nodes = potential.nodes
    lw = potential.log_weight(nodes)
    cut = float(np.max(lw)) + math.log(drop)
    inside = np.where(lw >= cut)[0]
    lo = nodes[max(int(inside[0]) - 1, 0)]
    hi = nodes[min(int(inside[-1]) + 1, len(nodes) - 1)]
    return float(lo), float(hi)


def estimate_rho(
    sde: ScalarSde,
    search: RhoSearchConfig | None = None,
    potential=None,
) -> RhoEstimate:
    """Infimum of the curvature over the (truncated) interior.

    Coarse Chebyshev scan followed by golden-section refinement around the
    grid argmin.  When the minimum sits on the truncation edge of an
    unbounded side, the estimate is only an upper bound for the interior
    infimum and the report says so.
    """
    cfg = search or RhoSearchConfig()
    box_lo, box_hi = _weight_box(sde, cfg.weight_drop, potential)
    explicit_lo, explicit_hi = cfg.truncation
    if explicit_lo is not None:
        box_lo = float(explicit_lo)
    if explicit_hi is not None:
        box_hi = float(explicit_hi)
    if not box_lo < box_hi:
        raise ValueError(f"empty curvature search box [{box_lo}, {box_hi}]")

    probes = chebyshev_interior(box_lo, box_hi, cfg.n_coarse)
    if explicit_lo is not None:
        probes = np.concatenate([[box_lo], probes])
    if explicit_hi is not None:
        probes = np.concatenate([probes, [box_hi]])
    vals = np.asarray(curvature(sde, probes), dtype=float)
    finite = np.isfinite(vals)
    if not np.all(finite):
        probes, vals = probes[finite], vals[finite]
    j = int(np.argmin(vals))
    lo_br = probes[max(j - 1, 0)]
    hi_br = probes[min(j + 1, len(probes) - 1)]
    if lo_br < hi_br:
        x_min, v_min = golden_min(lambda y: float(curvature(sde, y)), float(lo_br), float(hi_br), tol=cfg.refine_tol)
        if vals[j] < v_min:
            x_min, v_min = float(probes[j]), float(vals[j])
    else:
        x_min, v_min = float(probes[j]), float(vals[j])

    notes = []
    boundary = None
    edge_gap = (box_hi - box_lo) * 2.0 / cfg.n_coarse
    dom = sde.domain
    if abs(x_min - box_hi) <= edge_gap and (not dom.right_finite or explicit_hi is not None):
        boundary = "right"
        notes.append(
            "minimum attained at the right truncation edge; the interior infimum may "
            "be approached beyond it and the reported value is an upper bound"
        )
    elif abs(x_min - box_lo) <= edge_gap and (not dom.left_finite or explicit_lo is not None or sde.interior_singular):
        boundary = "left"
        notes.append(
            "minimum attained at the left truncation edge; the interior infimum may "
            "be approached beyond it and the reported value is an upper bound"
        )
    if v_min <= 0:
        notes.append("curvature infimum is not positive: exponential entropy decay is not certified")
    return RhoEstimate(
        value=float(v_min),
        argmin=float(x_min),
        positive=bool(v_min > 0),
        boundary_attained=boundary,
        search_box=(box_lo, box_hi),
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class InternalConditionReport:
    c_min: float
    c_max: float
    positive: bool
    constant: bool
    notes: tuple = ()

    @property
    def certified(self) -> bool:
        """Interior confinement is certified only for constant positive c."""
        return self.positive and self.constant


def internal_condition(sde: ScalarSde, n_probe: int = 129, potential=None) -> InternalConditionReport:
    """min over probes of c(x) = -a' + b'' b + (b')^2.

    The confinement statement needs c constant; a positive but non-constant
    profile is reported as such rather than silently accepted.
    """
    box_lo, box_hi = _weight_box(sde, 1e-12, potential)
    probes = chebyshev_interior(box_lo, box_hi, n_probe)
    b = sde.b(probes)
    c_vals = -sde.a(probes, 1) + sde.b(probes, 2) * b + sde.b(probes, 1) ** 2
    c_vals = np.asarray(c_vals, dtype=float)
    if not np.all(np.isfinite(c_vals)):
        raise FloatingPointError("interior-confinement quantity not finite at a probe point")
    c_min, c_max = float(np.min(c_vals)), float(np.max(c_vals))
    constant = (c_max - c_min) <= 1e-10 * max(1.0, abs(c_max))
    notes = ()
    if not constant:
        notes = ("c(x) is not constant; the confinement criterion applies only to constant c",)
    return InternalConditionReport(
        c_min=c_min,
        c_max=c_max,
        positive=bool(c_min > 0),
        constant=bool(constant),
        notes=notes,
    )


def _ait_sahalia_case_notes(p: AitSahaliaParams):
    """Advisory sufficient conditions of the three diffusion-exponent cases."""
    notes = []
    if 0.5 <= p.p < 1.0:
        y1 = (p.k * p.theta / (p.p * (1.0 - p.p) * p.sigma**2)) ** (1.0 / (2.0 * p.p - 1.0)) if p.p != 0.5 else None
        bound = p.theta * (2.0 * p.p - 1.0) / (2.0 * (1.0 - p.p))
        if y1 is None:
            notes.append("case 1 (p = 1/2): sufficient condition degenerates; see curvature scan")
        else:
            holds = y1 > bound
            notes.append(
                f"case 1 (1/2 <= p < 1): y1={y1:.6g} {'>' if holds else '<='} {bound:.6g}; "
                f"sufficient condition {'holds' if holds else 'fails'}"
            )
    elif p.p > 1.0:
        y2 = (p.k * p.theta / (p.p * (p.p - 1.0) * p.sigma**2)) ** (1.0 / (2.0 * p.p - 1.0))
        bound = p.theta * (2.0 * p.p - 1.0) / (2.0 * (p.p - 1.0))
        holds = y2 < bound
        notes.append(
            f"case 2 (p > 1): y2={y2:.6g} {'<' if holds else '>='} {bound:.6g}; "
            f"sufficient condition {'holds' if holds else 'fails'}"
        )
    else:
        y3 = (p.k * p.theta / (p.alpha * (p.r - 1.0) ** 2)) ** (1.0 / p.r)
        notes.append(f"case 3 (p = 1): sufficient condition always holds (minimizer y3={y3:.6g})")
    return notes


@dataclass(frozen=True)
class HypothesisReport:
    """Aggregated hypothesis checks for one model."""

    model: str
    boundary: BoundaryReport
    hyp_b: HypothesisBReport
    rho: RhoEstimate | None
    internal: InternalConditionReport
    notes: tuple = ()

    @property
    def all_passed(self) -> bool:
        rho_ok = self.rho is not None and self.rho.positive
        return self.boundary.passed and self.hyp_b.passed and rho_ok and self.internal.positive

    def to_kv_text(self) -> str:
        lines = []
        for key, value in self._flat_items():
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def csv_header_row(self):
        items = list(self._flat_items())
        return [k for k, _ in items], [v for _, v in items]

    def _flat_items(self):
        b = self.boundary
        h = self.hyp_b

        def tri(v):
            return "indeterminate" if v is None else ("true" if v else "false")

        yield "model", self.model
        yield "boundary.left_a_positive", tri(b.left_a_positive)
        yield "boundary.right_a_negative", tri(b.right_a_negative)
        yield "boundary.left_b_zero", tri(b.left_b_zero)
        yield "boundary.right_b_zero", tri(b.right_b_zero)
        yield "boundary.interior_b_min", repr(b.interior_b_min)
        yield "boundary.passed", tri(b.passed)
        yield "Z.estimate", repr(h.Z_estimate)
        yield "Z.log", repr(h.log_Z)
        yield "Z.finite", tri(h.Z_finite)
        yield "flux_zero.left", tri(h.boundary_flux_zero.get("left"))
        yield "flux_zero.right", tri(h.boundary_flux_zero.get("right"))
        if self.rho is not None:
            yield "rho.estimate", repr(self.rho.value)
            yield "rho.argmin", repr(self.rho.argmin)
            yield "rho.positive", tri(self.rho.positive)
            yield "rho.boundary_attained", self.rho.boundary_attained or "no"
        else:
            yield "rho.estimate", "absent"
        yield "internal.c_min", repr(self.internal.c_min)
        yield "internal.positive", tri(self.internal.positive)
        yield "internal.constant", tri(self.internal.constant)
        yield "all_passed", tri(self.all_passed)
        for i, note in enumerate(self.notes):
            yield f"note.{i}", note


def analyze(sde: ScalarSde, quad_config: QuadConfig | None = None, rho_search: RhoSearchConfig | None = None) -> HypothesisReport:
    """Run every hypothesis check and assemble the report.

    The curvature estimate is attached when the normalization is finite and
    the boundary clauses pass, or for singular-interior models together with
    their advisory case analysis.
    """
    cfg = quad_config or QuadConfig()
    boundary = check_boundary_conditions(sde)
    potential = build_potential(sde, config=cfg)
    hyp_b = check_hypothesis_b(sde, cfg, potential=potential)
    notes = list(boundary.notes) + list(hyp_b.notes)
    internal = internal_condition(sde, potential=potential)
    notes.extend(internal.notes)

    rho = None
    rho_allowed = (hyp_b.Z_finite is True and boundary.passed) or sde.interior_singular
    if rho_allowed:
        rho = estimate_rho(sde, rho_search, potential=potential)
        notes.extend(rho.notes)
    if sde.interior_singular and isinstance(sde.params, AitSahaliaParams):
        notes.extend(_ait_sahalia_case_notes(sde.params))
    return HypothesisReport(
        model=sde.name,
        boundary=boundary,
        hyp_b=hyp_b,
        rho=rho,
        internal=internal,
        notes=tuple(notes),
    )
