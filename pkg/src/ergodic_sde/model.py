"""Scalar SDE models: dX = a(X) dt + b(X) dW on an interval domain.

Built-in models (CIR, Wright-Fisher, Ait-Sahalia, Ornstein-Uhlenbeck) carry
hand-coded closed-form coefficients and derivatives; user models are parsed
expressions differentiated with dual numbers.  All coefficient evaluation is
vectorized over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .expressions import ExpressionError, eval_tree, eval_tree_dual, parse_tree

__all__ = [
    "DomainInterval",
    "CoefficientFn",
    "ScalarSde",
    "CirParams",
    "WrightFisherParams",
    "AitSahaliaParams",
    "OrnsteinUhlenbeckParams",
    "ParameterError",
    "DomainError",
    "ExpressionError",
    "parse_expression",
    "make_model",
    "eval_coeff",
    "clamp_extension",
    "build_model_from_config",
    "MODEL_KINDS",
]


class ParameterError(ValueError):
    """A model parameter violates its admissibility constraint."""


class DomainError(ValueError):
    """Evaluation requested outside the model domain, or a non-finite result."""


@dataclass(frozen=True)
class DomainInterval:
    """State-space interval; endpoints may be +-inf."""

    left: float
    right: float

    def __post_init__(self):
        if not self.left < self.right:
            raise ValueError(f"degenerate domain [{self.left}, {self.right}]")

    @property
    def left_finite(self) -> bool:
        return math.isfinite(self.left)

    @property
    def right_finite(self) -> bool:
        return math.isfinite(self.right)

    @property
    def width(self) -> float:
        return self.right - self.left

    def contains(self, x) -> bool:
        return bool(np.all((np.asarray(x) >= self.left) & (np.asarray(x) <= self.right)))

    def strictly_inside(self, x) -> bool:
        return bool(np.all((np.asarray(x) > self.left) & (np.asarray(x) < self.right)))

    def clip(self, x):
        return np.clip(x, self.left, self.right)

    def __str__(self):
        return f"[{self.left}, {self.right}]"


@dataclass(frozen=True)
class CoefficientFn:
    """A coefficient x -> f(x) with derivatives up to order 2.

    Backed either by closed-form callables (built-in models) or by a parsed
    expression tree differentiated with forward-mode duals.
    """

    label: str
    _f: Callable = field(repr=False)
    _d1: Optional[Callable] = field(default=None, repr=False)
    _d2: Optional[Callable] = field(default=None, repr=False)
    tree: object = field(default=None, repr=False)
    params: Optional[dict] = None

    @staticmethod
    def from_callables(label, f, d1, d2):
        return CoefficientFn(label, f, d1, d2)

    @staticmethod
    def from_expression(text, params=None):
        tree = parse_tree(text, params)
        return CoefficientFn(
            text,
            lambda x: eval_tree(tree, x),
            tree=tree,
            params=dict(params or {}),
        )

    def __call__(self, x):
        return self._f(x)

    def derivative(self, x, order=1):
        if order == 0:
            return self._f(x)
        if order == 1:
            if self._d1 is not None:
                return self._d1(x)
            return eval_tree_dual(self.tree, x).d
        if order == 2:
            if self._d2 is not None:
                return self._d2(x)
            return eval_tree_dual(self.tree, x).dd
        raise ValueError(f"derivative order {order} not supported (max 2)")


def parse_expression(text: str, params=None) -> CoefficientFn:
    """Parse an infix expression over the variable ``x`` into a CoefficientFn."""
    return CoefficientFn.from_expression(text, params)


@dataclass(frozen=True)
class ScalarSde:
    """A scalar diffusion with drift a, diffusion b > 0 on the interior of D.

    ``interior_singular`` marks models whose drift diverges at a finite
    endpoint (Ait-Sahalia at 0); the vanishing-diffusion boundary check is
    skipped for them and all evaluation stays strictly interior.
    """

    name: str
    drift: CoefficientFn
    diffusion: CoefficientFn
    domain: DomainInterval
    params: object = None
    interior_singular: bool = False
    continuity_note: str = ""
    extension_of: Optional["ScalarSde"] = None

    def a(self, x, order=0):
        return self.drift(x) if order == 0 else self.drift.derivative(x, order)

    def b(self, x, order=0):
        return self.diffusion(x) if order == 0 else self.diffusion.derivative(x, order)

    def big_a(self, x):
        """A(x) = b(x)^2 / 2, the diffusion intensity."""
        b = self.diffusion(x)
        return 0.5 * b * b

    def big_a_prime(self, x):
        return self.diffusion(x) * self.diffusion.derivative(x, 1)


# ---------------------------------------------------------------------------
# built-in parameter sets
# ---------------------------------------------------------------------------


def _require(cond, message):
    if not cond:
        raise ParameterError(message)


@dataclass(frozen=True)
class CirParams:
    k: float
    theta: float
    sigma: float

    def __post_init__(self):
        for nm in ("k", "theta", "sigma"):
            _require(getattr(self, nm) > 0, f"{nm} > 0 violated ({nm}={getattr(self, nm)})")
        _require(
            self.k * self.theta >= self.sigma**2 / 2,
            f"k*theta >= sigma^2/2 violated (k*theta={self.k * self.theta}, sigma^2/2={self.sigma**2 / 2})",
        )


@dataclass(frozen=True)
class WrightFisherParams:
    theta1: float
    theta2: float

    def __post_init__(self):
        _require(self.theta1 >= 0.5, f"theta1 >= 1/2 violated (theta1={self.theta1})")
        _require(self.theta2 >= 0.5, f"theta2 >= 1/2 violated (theta2={self.theta2})")


@dataclass(frozen=True)
class AitSahaliaParams:
    k: float
    theta: float
    alpha: float
    beta: float
    sigma: float
    r: float
    p: float

    def __post_init__(self):
        for nm in ("k", "theta", "alpha", "beta", "sigma", "r", "p"):
            _require(getattr(self, nm) > 0, f"{nm} > 0 violated ({nm}={getattr(self, nm)})")
        _require(self.r > 1, f"r > 1 violated (r={self.r})")
        _require(self.p >= 0.5, f"p >= 1/2 violated (p={self.p})")
        _require(self.r + 1 >= 2 * self.p, f"r + 1 >= 2p violated (r={self.r}, p={self.p})")


@dataclass(frozen=True)
class OrnsteinUhlenbeckParams:
    lam: float
    sigma: float

    def __post_init__(self):
        _require(self.lam > 0, f"lam > 0 violated (lam={self.lam})")
        _require(self.sigma > 0, f"sigma > 0 violated (sigma={self.sigma})")


def _cir_model(p: CirParams) -> ScalarSde:
    k, theta, sigma = p.k, p.theta, p.sigma
    drift = CoefficientFn.from_callables(
        f"{k}*({theta} - x)",
        lambda x: k * (theta - x),
        lambda x: np.broadcast_to(-k, np.shape(x)).astype(float) if np.ndim(x) else -k,
        lambda x: np.zeros(np.shape(x)) if np.ndim(x) else 0.0,
    )
    diffusion = CoefficientFn.from_callables(
        f"{sigma}*sqrt(x)",
        lambda x: sigma * np.sqrt(x),
        lambda x: sigma / (2.0 * np.sqrt(x)),
        lambda x: -sigma / (4.0 * x ** 1.5),
    )
    return ScalarSde(
        name="cir",
        drift=drift,
        diffusion=diffusion,
        domain=DomainInterval(0.0, math.inf),
        params=p,
        continuity_note="drift Lipschitz, diffusion 1/2-Hoelder; square-integrable modulus condition holds",
    )


def _wright_fisher_model(p: WrightFisherParams) -> ScalarSde:
    t1, t2 = p.theta1, p.theta2
    s = t1 + t2

    def b(x):
        return np.sqrt(x * (1.0 - x))

    def b1(x):
        return (1.0 - 2.0 * x) / (2.0 * np.sqrt(x * (1.0 - x)))

    def b2(x):
        r = np.sqrt(x * (1.0 - x))
        return -1.0 / r - (1.0 - 2.0 * x) ** 2 / (4.0 * r**3)

    drift = CoefficientFn.from_callables(
        f"{t1} - {s}*x",
        lambda x: t1 - s * x,
        lambda x: np.broadcast_to(-s, np.shape(x)).astype(float) if np.ndim(x) else -s,
        lambda x: np.zeros(np.shape(x)) if np.ndim(x) else 0.0,
    )
    diffusion = CoefficientFn.from_callables("sqrt(x*(1-x))", b, b1, b2)
    return ScalarSde(
        name="wright_fisher",
        drift=drift,
        diffusion=diffusion,
        domain=DomainInterval(0.0, 1.0),
        params=p,
        continuity_note="drift Lipschitz, diffusion 1/2-Hoelder at both endpoints",
    )


def _ait_sahalia_model(p: AitSahaliaParams) -> ScalarSde:
    k, theta, alpha, beta, sigma, r, q = p.k, p.theta, p.alpha, p.beta, p.sigma, p.r, p.p
    drift = CoefficientFn.from_callables(
        f"{k}*({theta} - x) - {alpha}*x^{r} + {beta}/x",
        lambda x: k * (theta - x) - alpha * x**r + beta / x,
        lambda x: -k - alpha * r * x ** (r - 1.0) - beta / x**2,
        lambda x: -alpha * r * (r - 1.0) * x ** (r - 2.0) + 2.0 * beta / x**3,
    )
    diffusion = CoefficientFn.from_callables(
        f"{sigma}*x^{q}",
        lambda x: sigma * x**q,
        lambda x: sigma * q * x ** (q - 1.0),
        lambda x: sigma * q * (q - 1.0) * x ** (q - 2.0),
    )
    return ScalarSde(
        name="ait_sahalia",
        drift=drift,
        diffusion=diffusion,
        domain=DomainInterval(0.0, math.inf),
        params=p,
        interior_singular=True,
        continuity_note="drift singular at 0; coefficients locally Lipschitz on the open half-line",
    )


def _ou_model(p: OrnsteinUhlenbeckParams) -> ScalarSde:
    lam, sigma = p.lam, p.sigma
    drift = CoefficientFn.from_callables(
        f"-{lam}*x",
        lambda x: -lam * x,
        lambda x: np.broadcast_to(-lam, np.shape(x)).astype(float) if np.ndim(x) else -lam,
        lambda x: np.zeros(np.shape(x)) if np.ndim(x) else 0.0,
    )
    diffusion = CoefficientFn.from_callables(
        f"{sigma}",
        lambda x: np.broadcast_to(float(sigma), np.shape(x)).astype(float) if np.ndim(x) else float(sigma),
        lambda x: np.zeros(np.shape(x)) if np.ndim(x) else 0.0,
        lambda x: np.zeros(np.shape(x)) if np.ndim(x) else 0.0,
    )
    return ScalarSde(
        name="ou",
        drift=drift,
        diffusion=diffusion,
        domain=DomainInterval(-math.inf, math.inf),
        params=p,
        continuity_note="globally Lipschitz coefficients",
    )


_BUILDERS = {
    "cir": (_cir_model, CirParams),
    "wright_fisher": (_wright_fisher_model, WrightFisherParams),
    "ait_sahalia": (_ait_sahalia_model, AitSahaliaParams),
    "ou": (_ou_model, OrnsteinUhlenbeckParams),
}

MODEL_KINDS = tuple(_BUILDERS) + ("custom",)

_B_BOUNDARY_TOL = 1e-12


def _validate_sde(sde: ScalarSde, n_probe=17):
    lo, hi = sde.domain.left, sde.domain.right
    if not math.isfinite(lo):
        lo = min(hi - 1.0, -1.0) if math.isfinite(hi) else -1.0
    if not math.isfinite(hi):
        hi = max(lo + 1.0, 1.0)
    # probe strictly interior points for positivity of b
    ts = (1.0 - np.cos(np.pi * (np.arange(n_probe) + 0.5) / n_probe)) / 2.0
    xs = lo + (hi - lo) * ts
    bvals = np.asarray(sde.b(xs), dtype=float)
    if not np.all(np.isfinite(bvals)) or not np.all(bvals > 0):
        bad = xs[~(np.isfinite(bvals) & (bvals > 0))][0]
        raise ParameterError(f"diffusion not strictly positive on the interior (b({bad}) <= 0)")
    if not sde.interior_singular:
        for endpoint, finite in ((sde.domain.left, sde.domain.left_finite), (sde.domain.right, sde.domain.right_finite)):
            if finite and abs(float(sde.b(endpoint))) > _B_BOUNDARY_TOL:
                raise ParameterError(f"diffusion must vanish at finite endpoint {endpoint} (got {sde.b(endpoint)})")
    return sde


def make_model(kind: str, params) -> ScalarSde:
    """Construct a built-in model after validating its parameter constraints."""
    if kind not in _BUILDERS:
        raise ParameterError(f"unknown model kind {kind!r}; expected one of {sorted(_BUILDERS)}")
    builder, cls = _BUILDERS[kind]
    if isinstance(params, dict):
        params = cls(**params)
    if not isinstance(params, cls):
        raise ParameterError(f"model {kind!r} expects {cls.__name__}, got {type(params).__name__}")
    return _validate_sde(builder(params))


def make_custom_model(drift_expr, diffusion_expr, domain: DomainInterval, params=None, name="custom"):
    """Build a ScalarSde from expression text for drift and diffusion."""
    sde = ScalarSde(
        name=name,
        drift=parse_expression(drift_expr, params),
        diffusion=parse_expression(diffusion_expr, params),
        domain=domain,
        params=dict(params or {}),
    )
    return _validate_sde(sde)


def eval_coeff(fn: CoefficientFn, x, order: int = 0, domain: DomainInterval | None = None):
    """Evaluate a coefficient or one of its first two derivatives at x.

    Raises DomainError for points outside ``domain`` or non-finite results
    (the latter signals a singularity such as the Ait-Sahalia drift at 0).
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2 (got {order})")
    if domain is not None and not domain.contains(x):
        raise DomainError(f"evaluation point {x} outside domain {domain}")
    val = fn(x) if order == 0 else fn.derivative(x, order)
    if not np.all(np.isfinite(val)):
        raise DomainError(f"non-finite value of {fn.label!r} (order {order}) at x={x}")
    return val


def clamp_extension(sde: ScalarSde) -> ScalarSde:
    """Freeze the coefficients at their boundary values outside the domain.

    Inside D the extension is identical to the original model; outside, the
    drift pushes back toward D with zero diffusion.  Used as a safety net by
    the path simulator.  Domains with no finite endpoint are returned
    unchanged (the extension is the identity there).
    """
    dom = sde.domain
    if not (dom.left_finite or dom.right_finite):
        return sde

    def wrap(coeff: CoefficientFn) -> CoefficientFn:
        def value(x):
            return coeff(dom.clip(x))

        def deriv(x, order):
            xa = np.asarray(x, dtype=float)
            inside = (xa >= dom.left) & (xa <= dom.right)
            out = np.zeros(xa.shape)
            if np.any(inside):
                out = np.where(inside, coeff.derivative(np.where(inside, xa, dom.clip(xa)), order), 0.0)
            return out if np.ndim(x) else float(out)

        return CoefficientFn.from_callables(
            coeff.label + " (clamped)",
            value,
            lambda x: deriv(x, 1),
            lambda x: deriv(x, 2),
        )

    return replace(
        sde,
        name=sde.name + "+clamped",
        drift=wrap(sde.drift),
        diffusion=wrap(sde.diffusion),
        domain=DomainInterval(-math.inf, math.inf),
        extension_of=sde,
    )


# ---------------------------------------------------------------------------
# line-oriented model config (key = value)
# ---------------------------------------------------------------------------

_PARAM_ALIASES = {"lambda": "lam"}


def build_model_from_config(cfg: dict) -> ScalarSde:
    """Build a model from config keys: ``model``, ``param.*`` and, for
    ``model = custom``, ``drift`` / ``diffusion`` / ``domain``.

    The mapping is consumed destructively so the caller can reject leftovers.
    """
    kind = cfg.pop("model", None)
    if kind is None:
        raise ParameterError("config missing required key 'model'")
    if kind not in MODEL_KINDS:
        raise ParameterError(f"unknown model {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    params = {}
    for key in [k for k in cfg if k.startswith("param.")]:
        name = key[len("param.") :]
        name = _PARAM_ALIASES.get(name, name)
        try:
            params[name] = float(cfg.pop(key))
        except ValueError as exc:
            raise ParameterError(f"parameter {key} is not a number: {exc}") from exc
    if kind == "custom":
        try:
            drift = cfg.pop("drift")
            diffusion = cfg.pop("diffusion")
            domain_text = cfg.pop("domain")
        except KeyError as exc:
            raise ParameterError(f"custom model requires key {exc.args[0]!r}") from exc
        lo_hi = [t.strip() for t in domain_text.split(",")]
        if len(lo_hi) != 2:
            raise ParameterError(f"domain must be '<lo>,<hi>' (got {domain_text!r})")
        lo, hi = (float(t.replace("inf", "inf")) for t in lo_hi)
        return make_custom_model(drift.strip('"'), diffusion.strip('"'), DomainInterval(lo, hi), params)
    return make_model(kind, params)
