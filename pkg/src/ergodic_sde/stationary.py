"""Gibbs potential and stationary density.

The potential pair is G(y) = int_{y_ref}^{y} a/A and psi = log A - G with
A = b^2/2; the stationary density is u_inf = e^{-psi}/Z.  G is accumulated
once on a dense node ladder (graded geometrically into degenerate finite
endpoints, expanded until the unnormalized weight e^{-psi} has dropped far
below its peak) and arbitrary evaluations integrate exactly from the nearest
cached node, so no interpolation error enters near the boundary.

Everything downstream works with log-weights; nothing exponentiates before
subtracting the running maximum, which keeps heavy-tailed models (CIR,
Ait-Sahalia) out of underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .model import DomainError, ScalarSde
from .numerics import golden_min, integrate_segments

__all__ = [
    "QuadConfig",
    "Potential",
    "GibbsDensity",
    "QuadratureError",
    "build_potential",
    "compute_normalization",
    "boundary_flux_decay",
    "stationary_density",
    "gibbs_field",
    "stationarity_residual",
    "reversibility_residual",
]


class QuadratureError(RuntimeError):
    """Quadrature failed to converge or hit a non-integrable singularity."""


@dataclass(frozen=True)
class QuadConfig:
    rel_tol: float = 1e-8
    support_efolds: float = 120.0
    tail_efolds: tuple = (60.0, 80.0, 100.0)
    max_segments: int = 500
    n_core: int = 2048


def _march_segments(sde: ScalarSde, seed: float, direction: int, cfg: QuadConfig):
    """March node positions away from ``seed`` until the log-weight
    ell = G - log A has dropped ``support_efolds`` below its running max,
    or a finite endpoint is approached to relative distance ~1e-13.

    Returns (nodes ascending away from seed, saturated flag).
    """
    dom = sde.domain
    endpoint = dom.right if direction > 0 else dom.left
    finite = math.isfinite(endpoint)
    scale = abs(seed) + 1.0
    nodes = [seed]
    ell_max = -math.inf
    ell_here = -math.inf
    g_along = 0.0  # G accumulated from the seed along the march
    y = seed
    h = 0.05 * scale
    saturated = True
    for _ in range(cfg.max_segments):
        if finite:
            gap = abs(endpoint - y)
            if gap <= 1e-13 * max(scale, abs(endpoint)):
                # reached the endpoint floor; only a problem if the weight
                # is still peaking there (non-integrable boundary)
                saturated = ell_here >= ell_max - 1.0
                break
            step = min(h, gap / 1.5)
        else:
            step = h
            h *= 1.2
        y_next = y + direction * step
        dg = float(integrate_segments(lambda t: sde.a(t) / sde.big_a(t), min(y, y_next), max(y, y_next)))
        g_along += dg if direction > 0 else -dg
        nodes.append(y_next)
        ell_here = g_along - math.log(float(sde.big_a(y_next)))
        ell_max = max(ell_max, ell_here)
        if ell_here < ell_max - cfg.support_efolds:
            saturated = False
            break
        y = y_next
    return np.array(nodes[1:]), saturated


@dataclass(frozen=True)
class Potential:
    """Anchored potential: G(y_ref) = 0, psi = log A - G."""

    sde: ScalarSde
    anchor: float
    nodes: np.ndarray = field(repr=False)
    cum: np.ndarray = field(repr=False)  # cum[i] = int_{nodes[0]}^{nodes[i]} a/A
    mode: float
    saturated_left: bool = False
    saturated_right: bool = False
    _anchor_cum: float = 0.0

    @property
    def support(self):
        return float(self.nodes[0]), float(self.nodes[-1])

    def _ratio(self, y):
        return self.sde.a(y) / self.sde.big_a(y)

    def _cum_at(self, y):
        """int_{nodes[0]}^{y} a/A, exact segment quadrature from cache nodes."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        ys = np.atleast_1d(y)
        lo, hi = self.nodes[0], self.nodes[-1]
        if np.any(ys < lo - 1e-12 * (1 + abs(lo))) or np.any(ys > hi + 1e-12 * (1 + abs(hi))):
            raise DomainError(
                f"potential evaluation outside cached support [{lo}, {hi}] "
                "(non-integrable or negligible-weight region)"
            )
        ys = np.clip(ys, lo, hi)
        idx = np.clip(np.searchsorted(self.nodes, ys) - 1, 0, len(self.nodes) - 2)
        base = self.nodes[idx]
        out = self.cum[idx] + integrate_segments(self._ratio, base, ys)
        return float(out[0]) if scalar else out

    def G(self, y):
        return self._cum_at(y) - self._anchor_cum

    def A(self, y):
        return self.sde.big_a(y)

    def psi(self, y):
        return np.log(self.sde.big_a(y)) - self.G(y)

    def psi_prime(self, y):
        """Analytic psi' = (A' - a)/A."""
        a_big = self.sde.big_a(y)
        return (self.sde.big_a_prime(y) - self.sde.a(y)) / a_big

    def log_weight(self, y):
        """log of the unnormalized stationary weight, -psi(y)."""
        return self.G(y) - np.log(self.sde.big_a(y))


def _node_ladder(sde: ScalarSde, lo: float, hi: float, cfg: QuadConfig):
    """Core uniform nodes plus geometric ladders into finite endpoints."""
    pts = [np.linspace(lo, hi, cfg.n_core)]
    spacing = (hi - lo) / (cfg.n_core - 1)
    for endpoint, toward in ((sde.domain.left, +1.0), (sde.domain.right, -1.0)):
        if not math.isfinite(endpoint):
            continue
        gap = abs(lo - endpoint) if toward > 0 else abs(hi - endpoint)
        if gap == 0:
            continue
        d = gap
        ladder = []
        while d < spacing:
            ladder.append(d)
            d *= 1.3
        if ladder:
            pts.append(endpoint + toward * np.array(ladder))
    return np.unique(np.concatenate(pts))


def build_potential(sde: ScalarSde, anchor: float | None = None, config: QuadConfig | None = None) -> Potential:
    """Construct the anchored potential for ``sde``.

    The default anchor is the mode of the unnormalized weight e^{-psi},
    located by scanning the cached nodes and polishing with golden section;
    anchoring there keeps e^{G} in range for heavy-tailed models.
    """
    cfg = config or QuadConfig()
    dom = sde.domain
    if dom.left_finite and dom.right_finite:
        seed = 0.5 * (dom.left + dom.right)
    elif dom.left_finite:
        seed = dom.left + 1.0
    elif dom.right_finite:
        seed = dom.right - 1.0
    else:
        seed = 0.0
    if anchor is not None and dom.strictly_inside(anchor):
        seed = float(anchor)

    right_nodes, sat_r = _march_segments(sde, seed, +1, cfg)
    left_nodes, sat_l = _march_segments(sde, seed, -1, cfg)
    lo = float(left_nodes[-1]) if len(left_nodes) else seed
    hi = float(right_nodes[-1]) if len(right_nodes) else seed
    if not lo < hi:
        raise QuadratureError(f"support search collapsed around seed {seed}")

    nodes = _node_ladder(sde, lo, hi, cfg)
    seg = integrate_segments(lambda t: sde.a(t) / sde.big_a(t), nodes[:-1], nodes[1:])
    cum = np.concatenate([[0.0], np.cumsum(seg)])

    # mode of the unnormalized weight: argmax of cum - log A over nodes
    ell = cum - np.log(sde.big_a(nodes))
    j = int(np.argmax(ell))
    a, b = nodes[max(j - 1, 0)], nodes[min(j + 1, len(nodes) - 1)]
    pot = Potential(sde=sde, anchor=0.0, nodes=nodes, cum=cum, mode=0.0,
                    saturated_left=sat_l, saturated_right=sat_r)
    mode, _ = golden_min(lambda y: -(pot._cum_at(y) - math.log(float(sde.big_a(y)))), float(a), float(b), tol=1e-12)
    y_ref = float(anchor) if anchor is not None else float(mode)
    if not dom.strictly_inside(y_ref):
        raise ValueError(f"anchor {y_ref} is not interior to {dom}")
    anchor_cum = pot._cum_at(y_ref)
    return Potential(
        sde=sde,
        anchor=y_ref,
        nodes=nodes,
        cum=cum,
        mode=float(mode),
        saturated_left=sat_l,
        saturated_right=sat_r,
        _anchor_cum=anchor_cum,
    )


@dataclass(frozen=True)
class NormalizationReport:
    Z: float
    log_Z: float
    finite: bool | None
    truncation_estimates: tuple
    shift: float  # max of the log-weight over the support
    notes: tuple = ()


def _log_weight_on_segments(potential: Potential):
    nodes = potential.nodes
    sde = potential.sde

    def lw(y):
        flat = np.ravel(y)
        idx = np.clip(np.searchsorted(nodes, flat) - 1, 0, len(nodes) - 2)
        base = nodes[idx]
        cum = potential.cum[idx] + integrate_segments(lambda t: sde.a(t) / sde.big_a(t), base, flat)
        out = cum - potential._anchor_cum - np.log(sde.big_a(flat))
        return out.reshape(np.shape(y))

    return lw


def compute_normalization(potential: Potential, config: QuadConfig | None = None) -> NormalizationReport:
    """Z = int e^{-psi} with successively enlarged truncations.

    ``finite`` is True when the largest enlargement changes the estimate by
    less than rel_tol, None (indeterminate) when the support search had
    saturated or the enlargements keep drifting.
    """
    cfg = config or QuadConfig()
    lw = _log_weight_on_segments(potential)
    nodes = potential.nodes
    ell_nodes = lw(nodes)
    shift = float(np.max(ell_nodes))

    def z_for(efolds):
        idx = np.where(ell_nodes >= shift - efolds)[0]
        first = max(int(idx[0]) - 1, 0)
        last = min(int(idx[-1]) + 1, len(nodes) - 1)
        sub = nodes[first : last + 1]
        segs = integrate_segments(lambda t: np.exp(lw(t) - shift), sub[:-1], sub[1:])
        return float(np.sum(segs))

    estimates = [z_for(e) for e in cfg.tail_efolds]
    drift = abs(estimates[-1] - estimates[-2]) / max(estimates[-1], 1e-300)
    finite: bool | None
    notes = []
    if potential.saturated_left or potential.saturated_right:
        finite = None
        notes.append("support search saturated; weight may not be integrable")
    elif drift < cfg.rel_tol:
        finite = True
    else:
        finite = None
        notes.append(f"truncation enlargements still drifting (relative change {drift:.2e})")
    z_scaled = estimates[-1]
    log_z = shift + math.log(z_scaled)
    return NormalizationReport(
        Z=math.exp(log_z) if log_z < 700 else math.inf,
        log_Z=log_z,
        finite=finite,
        truncation_estimates=tuple(float(shift + math.log(e)) for e in estimates),
        shift=shift,
        notes=tuple(notes),
    )


def boundary_flux_decay(potential: Potential, n_points: int = 40):
    """Check e^{G(y)} -> 0 toward each endpoint of the domain.

    Samples a geometric sequence approaching the endpoint (clipped to the
    cached support) and requires G, past its peak along the sequence, to
    decay monotonically below log(1e-10) + G(mode).  Returns a dict
    {'left': bool|None, 'right': bool|None}; None means indeterminate.
    """
    dom = potential.sde.domain
    g_ref = float(potential.G(potential.mode))
    target = g_ref + math.log(1e-10)
    lo_sup, hi_sup = potential.support
    out = {}
    for side, endpoint in (("left", dom.left), ("right", dom.right)):
        start = potential.mode
        if math.isfinite(endpoint):
            gap0 = abs(start - endpoint)
            seq = endpoint + np.sign(start - endpoint) * gap0 * 2.0 ** -np.arange(1, n_points + 1, dtype=float)
        else:
            sign = 1.0 if side == "right" else -1.0
            base = max(1.0, abs(start))
            seq = sign * base * 2.0 ** np.arange(0, n_points, dtype=float)
        seq = np.unique(np.clip(seq, lo_sup, hi_sup))
        if side == "left":
            seq = seq[::-1]  # order toward the endpoint
        if len(seq) < 3:
            out[side] = None
            continue
        try:
            g_vals = np.array([float(potential.G(y)) for y in seq])
        except DomainError:
            out[side] = None
            continue
        peak = int(np.argmax(g_vals))
        tail = g_vals[peak:]
        if len(tail) < 2:
            out[side] = False  # still rising at the last sampled point
            continue
        monotone = bool(np.all(np.diff(tail) < 1e-9 * (1.0 + np.abs(tail[:-1]))))
        decayed = bool(tail[-1] < target)
        out[side] = True if (monotone and decayed) else (False if not monotone else None)
    return out


@dataclass(frozen=True)
class GibbsDensity:
    """Normalized stationary density u_inf = e^{-psi}/Z with its moments."""

    potential: Potential
    log_Z: float
    Z: float
    mean: float
    second_moment: float

    @property
    def variance(self):
        return self.second_moment - self.mean**2

    def log_density(self, y):
        return self.potential.log_weight(y) - self.log_Z

    def density(self, y):
        return np.exp(self.log_density(y))

    def psi(self, y):
        return self.potential.psi(y)


def stationary_density(sde: ScalarSde, quad_config: QuadConfig | None = None, anchor: float | None = None) -> GibbsDensity:
    """Build the Gibbs stationary density; requires a finite normalization."""
    cfg = quad_config or QuadConfig()
    potential = build_potential(sde, anchor=anchor, config=cfg)
    report = compute_normalization(potential, cfg)
    if report.finite is not True:
        raise QuadratureError(f"normalization indeterminate: {report.notes}")
    lw = _log_weight_on_segments(potential)
    nodes = potential.nodes
    shift = report.shift

    def moment(power):
        segs = integrate_segments(lambda t: t**power * np.exp(lw(t) - shift), nodes[:-1], nodes[1:])
        return float(np.sum(segs)) * math.exp(shift - report.log_Z)

    return GibbsDensity(
        potential=potential,
        log_Z=report.log_Z,
        Z=report.Z,
        mean=moment(1),
        second_moment=moment(2),
    )


def gibbs_field(gibbs: GibbsDensity, grid):
    """Sample the Gibbs density at cell centers, discretely normalized."""
    from .fpe import DensityField

    vals = gibbs.density(grid.centers)
    mass = float(np.sum(vals * grid.widths))
    return DensityField(grid=grid, values=vals / mass)


def stationarity_residual(sde: ScalarSde, u) -> float:
    """Max interior probability flux |-a u + (1/2) d/dy (b^2 u)|.

    The derivative uses five-point centered differences on the (possibly
    nonuniform) grid; the two outermost centers on each side are skipped.
    For the sampled Gibbs density the result is pure discretization error
    and shrinks at the stencil's order under grid refinement.
    """
    y = u.grid.centers
    vals = u.values
    n = len(y)
    if n < 7:
        raise ValueError("grid too coarse for the flux stencil")
    g = sde.b(y) ** 2 * vals
    a_u = sde.a(y) * vals
    resid = 0.0
    from .numerics import fd_weights

    for i in range(2, n - 2):
        w = fd_weights(y[i - 2 : i + 3], y[i], 1)
        flux = -a_u[i] + 0.5 * float(w @ g[i - 2 : i + 3])
        resid = max(resid, abs(flux))
    return resid


def _backward_generator(sde: ScalarSde, potential: Potential, h):
    """L* h = A h'' + A' h' - psi' A h' with analytic test-function derivatives."""

    def apply(y):
        a_big = sde.big_a(y)
        return (
            a_big * h.derivative(y, 2)
            + (sde.big_a_prime(y) - potential.psi_prime(y) * a_big) * h.derivative(y, 1)
        )

    return apply


def reversibility_residual(sde: ScalarSde, f, g, gibbs: GibbsDensity | None = None) -> float:
    """| int f L*g dmu_inf - int g L*f dmu_inf | over the stationary measure.

    f and g are twice-differentiable test functions (CoefficientFn works).
    """
    if gibbs is None:
        gibbs = stationary_density(sde)
    potential = gibbs.potential
    lo, hi = potential.support
    lstar_g = _backward_generator(sde, potential, g)
    lstar_f = _backward_generator(sde, potential, f)

    def integrand_fg(y):
        return f(y) * lstar_g(y) * gibbs.density(y)

    def integrand_gf(y):
        return g(y) * lstar_f(y) * gibbs.density(y)

    kw = dict(limit=400, epsabs=1e-13, epsrel=1e-12, points=[gibbs.potential.mode])
    left, err_l = quad(integrand_fg, lo, hi, **kw)
    right, err_r = quad(integrand_gf, lo, hi, **kw)
    if not (np.isfinite(left) and np.isfinite(right)):
        raise QuadratureError("divergent integral in reversibility check")
    return abs(left - right)
