"""Catalog of planar stochastic oscillators in Stratonovich form.

Every model is a :class:`ModelSpec` with vectorized callables acting on
arrays of shape ``(..., 2)``.  Polar charts use the state ``(theta, r)`` with
theta unwrapped; planar charts use ``(x, y)``.  Diffusion columns are stacked
channel-first, so ``diffusion(x)`` has shape ``(..., n, 2)`` and
``diffusion_jacobians(x)`` has shape ``(..., n, 2, 2)``.
"""

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ModelSpec",
    "SkewProduct",
    "Analytic",
    "ModelCatalogEntry",
    "ModelParameterError",
    "CATALOG",
    "make_model",
    "stratonovich_to_ito",
    "one_sided_lipschitz_probe",
    "finite_difference_jacobian",
    "to_planar",
    "to_polar",
    "phase_of",
    "radius_of",
    "radial_density",
    "ito_correction",
]


class ModelParameterError(ValueError):
    """Unknown model name or parameter outside its documented range."""


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    chart: str
    channels: int
    drift: Callable
    diffusion: Callable
    drift_jacobian: Optional[Callable]
    diffusion_jacobians: Optional[Callable]
    params: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    ito: bool = False
    dim: int = 2


@dataclass(frozen=True, eq=False)
class SkewProduct:
    """Phase/radius structure shared by the models with an explicit CRPS.

    The radius obeys ``dr = (r - r^3) dt + sigma r o dW^radial`` and the phase
    ``dtheta = h(r) dt + htilde(r) o dW^phase``.
    """

    sigma: float
    h: Callable
    dh: Callable
    htilde: Optional[Callable] = None
    radial_channel: int = 0
    phase_channel: Optional[int] = None
    h_min: float = 0.0


@dataclass(frozen=True, eq=False)
class Analytic:
    """Closed forms used only as test oracles."""

    stationary_radial_density: Optional[Callable] = None
    planar_stationary_density: Optional[Callable] = None
    deterministic_isochron: Optional[Callable] = None
    mean_period: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ModelCatalogEntry:
    spec: ModelSpec
    analytic: Analytic
    working_region: tuple
    skew: Optional[SkewProduct] = None

    @property
    def name(self):
        return self.spec.name

    @property
    def guard_radius(self):
        return 10.0 * self.working_region[1]


# ---------------------------------------------------------------------------
# chart helpers


def to_planar(chart, x):
    x = np.asarray(x, dtype=float)
    if chart == "planar":
        return x
    th, r = x[..., 0], x[..., 1]
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def to_polar(chart, x):
    """Polar coordinates ``(theta, r)``; theta is wrapped for planar input."""
    x = np.asarray(x, dtype=float)
    if chart == "polar":
        return x
    return np.stack([np.arctan2(x[..., 1], x[..., 0]), np.hypot(x[..., 0], x[..., 1])],
                    axis=-1)


def phase_of(chart, x):
    x = np.asarray(x, dtype=float)
    if chart == "polar":
        return x[..., 0]
    return np.arctan2(x[..., 1], x[..., 0])


def radius_of(chart, x):
    x = np.asarray(x, dtype=float)
    if chart == "polar":
        return x[..., 1]
    return np.hypot(x[..., 0], x[..., 1])


def finite_difference_jacobian(f, x, h=1e-6):
    """Centered-difference Jacobian of a vectorized map, shape ``(..., out, 2)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def radial_density(sigma):
    """Normalized density ``p(r) ∝ r^(2/sigma^2 - 1) exp(-r^2/sigma^2)`` on (0, inf)."""
    a = 1.0 / sigma**2
    logZ = 2 * a * np.log(sigma) + gammaln(a) - np.log(2.0)

    def p(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.exp((2 * a - 1) * np.log(r) - r**2 * a - logZ)
        return np.where(r > 0, out, 0.0)

    return p


# ---------------------------------------------------------------------------
# building blocks


def _stack(*cols):
    return np.stack(cols, axis=-1)


def _mat(a11, a12, a21, a22):
    a11, a12, a21, a22 = np.broadcast_arrays(a11, a12, a21, a22)
    return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)


def _zeros_like_state(x):
    return np.zeros(np.shape(x)[:-1])


def _safe_over_r(d, r):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, d / np.where(r > 0, r, 1.0), 0.0)


def _polar_skew_spec(name, params, sk):
    """Polar-chart spec for a skew-product model (radial channel first)."""
    sigma = sk.sigma
    h, dh, ht = sk.h, sk.dh, sk.htilde
    n = 1 if ht is None else 2

    def drift(x):
        r = x[..., 1]
        return _stack(h(r), r - r**3)

    def drift_jac(x):
        r = x[..., 1]
        z = _zeros_like_state(x)
        return _mat(z, dh(r), z, 1 - 3 * r**2)

    def diffusion(x):
        r = x[..., 1]
        z = _zeros_like_state(x)
        cols = [_stack(z, sigma * r)]
        if ht is not None:
            cols.append(_stack(ht(r), z))
        return np.stack(cols, axis=-2)

    def diffusion_jac(x):
        r = x[..., 1]
        z = _zeros_like_state(x)
        mats = [_mat(z, z, z, z + sigma)]
        if ht is not None:
            mats.append(_mat(z, params["_dhtilde"](r), z, z))
        return np.stack(mats, axis=-3)

    return ModelSpec(name, "polar", n, drift, diffusion, drift_jac, diffusion_jac,
                     MappingProxyType(dict(params)))


def _planar_skew_spec(name, params, sk):
    """Planar-chart spec ``b = (x - h y - x q, h x + y - y q)`` with ``q = |x|^2``."""
    sigma = sk.sigma
    h, dh, ht = sk.h, sk.dh, sk.htilde
    n = 1 if ht is None else 2

    def drift(x):
        X, Y = x[..., 0], x[..., 1]
        q = X**2 + Y**2
        hv = h(np.sqrt(q))
        return _stack(X - hv * Y - X * q, hv * X + Y - Y * q)

    def drift_jac(x):
        X, Y = x[..., 0], x[..., 1]
        q = X**2 + Y**2
        r = np.sqrt(q)
        hv = h(r)
        g = _safe_over_r(dh(r), r)
        hx, hy = g * X, g * Y
        return _mat(1 - hx * Y - q - 2 * X**2, -hv - hy * Y - 2 * X * Y,
                    hv + hx * X - 2 * X * Y, hy * X + 1 - q - 2 * Y**2)

    def diffusion(x):
        X, Y = x[..., 0], x[..., 1]
        cols = [_stack(sigma * X, sigma * Y)]
        if ht is not None:
            g = ht(np.hypot(X, Y))
            cols.append(_stack(-Y * g, X * g))
        return np.stack(cols, axis=-2)

    def diffusion_jac(x):
        X, Y = x[..., 0], x[..., 1]
        z = _zeros_like_state(x)
        mats = [_mat(z + sigma, z, z, z + sigma)]
        if ht is not None:
            r = np.hypot(X, Y)
            g = ht(r)
            gr = _safe_over_r(params["_dhtilde"](r), r)
            gx, gy = gr * X, gr * Y
            mats.append(_mat(-Y * gx, -g - Y * gy, g + X * gx, X * gy))
        return np.stack(mats, axis=-3)

    return ModelSpec(name, "planar", n, drift, diffusion, drift_jac, diffusion_jac,
                     MappingProxyType(dict(params)))


def _shear_spec(params, chart):
    sigma, b = params["sigma"], params["b_shear"]

    if chart == "planar":
        def drift(x):
            X, Y = x[..., 0], x[..., 1]
            q = X**2 + Y**2
            return _stack(X - Y - (X - b * Y) * q, Y + X - (b * X + Y) * q)

        def drift_jac(x):
            X, Y = x[..., 0], x[..., 1]
            q = X**2 + Y**2
            return _mat(1 - 3 * X**2 + 2 * b * X * Y - Y**2,
                        -1 + b * (X**2 + 3 * Y**2) - 2 * X * Y,
                        1 - b * (3 * X**2 + Y**2) - 2 * X * Y,
                        1 - X**2 - 2 * b * X * Y - 3 * Y**2)

        def diffusion(x):
            z = _zeros_like_state(x)
            return np.stack([_stack(z + sigma, z), _stack(z, z + sigma)], axis=-2)

        def diffusion_jac(x):
            z = _zeros_like_state(x)
            m = _mat(z, z, z, z)
            return np.stack([m, m], axis=-3)
    else:
        def drift(x):
            r = x[..., 1]
            return _stack(1 + b * r**2, r - r**3)

        def drift_jac(x):
            r = x[..., 1]
            z = _zeros_like_state(x)
            return _mat(z, 2 * b * r, z, 1 - 3 * r**2)

        def diffusion(x):
            th, r = x[..., 0], x[..., 1]
            c, s = np.cos(th), np.sin(th)
            return np.stack([_stack(-sigma * s / r, sigma * c),
                             _stack(sigma * c / r, sigma * s)], axis=-2)

        def diffusion_jac(x):
            th, r = x[..., 0], x[..., 1]
            c, s = np.cos(th), np.sin(th)
            z = _zeros_like_state(x)
            return np.stack([
                _mat(-sigma * c / r, sigma * s / r**2, -sigma * s, z),
                _mat(-sigma * s / r, -sigma * c / r**2, sigma * c, z),
            ], axis=-3)

    return ModelSpec("shear_additive", chart, 2, drift, diffusion, drift_jac,
                     diffusion_jac, MappingProxyType(dict(params)))


# ---------------------------------------------------------------------------
# catalog


_COMMON = {"sigma": 0.0, "R1": 0.3, "R2": 2.0}
_DEFAULTS = {
    "hopf_linear": dict(_COMMON),
    "amplitude_phase": dict(_COMMON, kappa=2.0),
    "noisy_phase": dict(_COMMON, kappa=2.0, sigma_theta=0.1),
    "shear_additive": dict(_COMMON, b_shear=0.0),
    "guckenheimer_det": dict(_COMMON, kappa=1.0, shear=1.0, r1=1.0),
    "general_polar": dict(_COMMON, sigma1=0.0, sigma2=0.0),
}
_CHARTS = {
    "hopf_linear": ("polar", "planar"),
    "amplitude_phase": ("polar", "planar"),
    "noisy_phase": ("polar", "planar"),
    "shear_additive": ("planar", "polar"),
    "guckenheimer_det": ("polar",),
    "general_polar": ("polar",),
}
_FUNCTION_KEYS = {
    "amplitude_phase": ("h", "dh"),
    "noisy_phase": ("h", "dh", "htilde", "dhtilde"),
    "guckenheimer_det": ("h", "dh"),
    "general_polar": ("f1", "f2", "g1", "g2"),
}
CATALOG = tuple(_DEFAULTS)


def _split_params(name, params):
    numeric = dict(_DEFAULTS[name])
    funcs = {}
    for key, val in (params or {}).items():
        if key in ("chart",):
            continue
        if callable(val):
            if key not in _FUNCTION_KEYS.get(name, ()):
                raise ModelParameterError(f"{name}: unexpected function parameter {key!r}")
            funcs[key] = val
            continue
        if key not in numeric:
            raise ModelParameterError(f"{name}: unknown parameter {key!r}")
        try:
            numeric[key] = float(val)
        except (TypeError, ValueError):
            raise ModelParameterError(f"{name}: parameter {key!r} must be a real number") from None
    return numeric, funcs


def _validate(name, p):
    for key, val in p.items():
        if not np.isfinite(val):
            raise ModelParameterError(f"{name}: parameter {key!r} is not finite")
    for key in ("sigma", "sigma_theta", "sigma1", "sigma2"):
        if key in p and p[key] < 0:
            raise ModelParameterError(f"{name}: {key} must be >= 0")
    if "kappa" in p and name in ("amplitude_phase", "noisy_phase") and p["kappa"] < 1:
        raise ModelParameterError(f"{name}: kappa must be >= 1")
    if "kappa" in p and name == "guckenheimer_det" and p["kappa"] <= 0:
        raise ModelParameterError(f"{name}: kappa must be positive")
    if not 0 < p["R1"] < 1 < p["R2"]:
        raise ModelParameterError(f"{name}: need 0 < R1 < 1 < R2")


def _derivative(f, eps=1e-6):
    def d(r):
        return (f(r + eps) - f(r - eps)) / (2 * eps)
    return d


def make_model(name, params=None, chart=None):
    """Build a catalog entry.

    ``params`` holds the real parameters under their usual symbols (``sigma``,
    ``kappa``, ``b_shear``, ``R1``, ``R2``, ...).  Shape functions such as
    ``h`` or ``htilde`` can be passed as callables of ``r``; the default phase
    speed is ``kappa + r^2 - 1`` and the default phase-noise amplitude is
    ``sigma_theta / (1 + r^2)``.
    """
    if name not in _DEFAULTS:
        raise ModelParameterError(f"unknown model {name!r}; choose from {', '.join(CATALOG)}")
    chart = chart or (params or {}).get("chart") or _CHARTS[name][0]
    if chart not in _CHARTS[name]:
        raise ModelParameterError(f"{name}: chart {chart!r} not available")
    p, funcs = _split_params(name, params)
    _validate(name, p)
    region = (p["R1"], p["R2"])
    sigma = p["sigma"]
    analytic = Analytic()
    skew = None

    if name in ("hopf_linear", "amplitude_phase", "noisy_phase"):
        if name == "hopf_linear":
            kappa = 1.0
            h = lambda r: np.ones_like(np.asarray(r, dtype=float))
            dh = lambda r: np.zeros_like(np.asarray(r, dtype=float))
            h_min = 1.0
            iso = lambda th, r: np.asarray(th, dtype=float) + 0 * np.asarray(r)
        else:
            kappa = p["kappa"]
            if "h" in funcs:
                h = funcs["h"]
                dh = funcs.get("dh") or _derivative(h)
                h_min = float(np.min(h(np.linspace(0.0, 10 * region[1], 20001))))
                iso = None
            else:
                h = lambda r, k=kappa: k + np.asarray(r, dtype=float) ** 2 - 1
                dh = lambda r: 2 * np.asarray(r, dtype=float)
                h_min = kappa - 1.0
                iso = lambda th, r, k=kappa: (np.asarray(th) + np.log(r)) / k
        htilde = None
        sp = dict(p)
        if name == "noisy_phase":
            st = p["sigma_theta"]
            htilde = funcs.get("htilde") or (lambda r, s=st: s / (1 + np.asarray(r, dtype=float) ** 2))
            sp["_dhtilde"] = funcs.get("dhtilde") or (
                (lambda r, s=st: -2 * s * np.asarray(r) / (1 + np.asarray(r) ** 2) ** 2)
                if "htilde" not in funcs else _derivative(htilde))
        skew = SkewProduct(sigma, h, dh, htilde, 0, 1 if htilde is not None else None, h_min)
        build = _polar_skew_spec if chart == "polar" else _planar_skew_spec
        spec = build(name, sp, skew)
        spec = replace(spec, params=MappingProxyType({k: v for k, v in sp.items()
                                                      if not k.startswith("_")}))
        if sigma > 0:
            p_r = radial_density(sigma)
            analytic = Analytic(
                stationary_radial_density=p_r,
                planar_stationary_density=lambda x, y, p_r=p_r: p_r(np.hypot(x, y))
                / (2 * np.pi * np.hypot(x, y)),
                deterministic_isochron=iso,
                mean_period=2 * np.pi / kappa if iso is not None else None,
            )
        else:
            analytic = Analytic(deterministic_isochron=iso,
                                mean_period=2 * np.pi / kappa if iso is not None else None)
    elif name == "shear_additive":
        spec = _shear_spec(p, chart)
    elif name == "guckenheimer_det":
        kappa, c, r1 = p["kappa"], p["shear"], p["r1"]
        h = funcs.get("h") or (lambda r: kappa + c * (np.asarray(r, dtype=float) ** 2 - r1**2))
        dh = funcs.get("dh") or (_derivative(h) if "h" in funcs else (lambda r: 2 * c * np.asarray(r)))

        def drift(x):
            r = x[..., 1]
            return _stack(h(r), r * (r1**2 - r**2))

        def drift_jac(x):
            r = x[..., 1]
            z = _zeros_like_state(x)
            return _mat(z, dh(r), z, r1**2 - 3 * r**2)

        def diffusion(x):
            return np.zeros(np.shape(x)[:-1] + (1, 2))

        def diffusion_jac(x):
            return np.zeros(np.shape(x)[:-1] + (1, 2, 2))

        spec = ModelSpec(name, "polar", 1, drift, diffusion, drift_jac, diffusion_jac,
                         MappingProxyType(dict(p)))
        if "h" not in funcs:
            analytic = Analytic(
                deterministic_isochron=lambda th, r: (np.asarray(th) + c * np.log(np.asarray(r) / r1)) / kappa,
                mean_period=2 * np.pi / kappa)
    else:  # general_polar
        missing = [k for k in ("f1", "f2", "g1", "g2") if k not in funcs]
        if missing:
            raise ModelParameterError(f"general_polar: missing functions {missing}")
        f1, f2, g1, g2 = (funcs[k] for k in ("f1", "f2", "g1", "g2"))
        s1, s2 = p["sigma1"], p["sigma2"]

        def drift(x):
            return _stack(f1(x[..., 0], x[..., 1]), f2(x[..., 0], x[..., 1]))

        def diffusion(x):
            th, r = x[..., 0], x[..., 1]
            z = _zeros_like_state(x)
            return np.stack([_stack(s1 * g1(th, r) + z, z), _stack(z, s2 * g2(th, r) + z)], axis=-2)

        spec = ModelSpec(name, "polar", 2, drift, diffusion,
                         lambda x: finite_difference_jacobian(drift, x),
                         lambda x: finite_difference_jacobian(diffusion, x),
                         MappingProxyType(dict(p)))

    return ModelCatalogEntry(spec, analytic, region, skew)


# ---------------------------------------------------------------------------
# operations


def ito_correction(spec, x):
    """``b0 = 1/2 sum_i (D sigma_i) sigma_i`` evaluated at ``x``."""
    S = spec.diffusion(x)
    DS = spec.diffusion_jacobians(x)
    return 0.5 * np.einsum("...nij,...nj->...i", DS, S)


def stratonovich_to_ito(spec):
    """Return the Itô form of a Stratonovich spec (drift ``b + b0``)."""
    if spec.ito:
        return spec
    if spec.diffusion_jacobians is None:
        raise ValueError("diffusion Jacobians are required for the conversion")

    def drift(x):
        return spec.drift(x) + ito_correction(spec, x)

    return replace(spec, drift=drift,
                   drift_jacobian=lambda x: finite_difference_jacobian(drift, x),
                   ito=True)


def one_sided_lipschitz_probe(spec, sample_count, region=(0.0, 3.0), seed=0):
    """Largest sampled ``<b(x) - b(y), x - y> / |x - y|^2`` over a planar annulus.

    ``region`` is ``(r_min, r_max)``; points are drawn uniformly in area.
    Coincident pairs are skipped.
    """
    if spec.chart != "planar":
        raise ValueError("the probe uses the Euclidean inner product; pass a planar spec")
    if sample_count < 2:
        raise ValueError("need at least two samples")
    lo, hi = region
    if not (0 <= lo < hi < np.inf):
        raise ValueError("region must be a bounded annulus (r_min, r_max)")
    rng = np.random.default_rng(seed)

    def draw(k):
        r = np.sqrt(rng.uniform(lo**2, hi**2, k))
        a = rng.uniform(0, 2 * np.pi, k)
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)

    x, y = draw(sample_count), draw(sample_count)
    d = x - y
    n2 = np.sum(d * d, axis=-1)
    keep = n2 > 0
    ratio = np.sum((spec.drift(x) - spec.drift(y)) * d, axis=-1)[keep] / n2[keep]
    return float(np.max(ratio))
