"""Random attractor fibers and the explicit stationary radius.

For the skew-product models the radial equation ``dr = (r - r^3) dt +
sigma r o dW`` has the stationary solution

    r*(omega) = (2 int_{-inf}^0 exp(2 s + 2 sigma W_s) ds)^(-1/2),

whose fibers ``{|x| = r*(omega)}`` form the random attractor.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .flow import ensemble_flow, flow
from .models import to_planar
from .noise import shift

__all__ = [
    "StationaryRadius",
    "StationaryTrajectory",
    "AttractorFiber",
    "stationary_radius",
    "stationary_radius_batch",
    "stationary_trajectory",
    "pullback_fiber",
    "forward_fiber",
    "pullback_fibers",
    "hausdorff_semidistance",
    "circle_semidistance",
    "annulus_seeds",
    "trajectory_seeds",
]


@dataclass(frozen=True, eq=False)
class StationaryRadius:
    value: float
    S_trunc: float
    dt: float
    tail_estimate: float
    seed: int


@dataclass(frozen=True, eq=False)
class AttractorFiber:
    cloud: np.ndarray
    mode: str
    T: float
    source: str


@dataclass(frozen=True, eq=False)
class StationaryTrajectory:
    """``R(u) = r*(theta_u omega)`` on a grid, plus the phase integral.

    ``phase[k]`` is ``Phi(u_k) = int_0^{u_k} h(R) du (+ int htilde(R) o dW)``,
    so ``Phi(0) = 0``.  Arrays may carry a trailing path axis.
    """

    times: np.ndarray
    R: np.ndarray
    phase: np.ndarray
    origin: int
    dt: float

    def index(self, t):
        k = int(round(t / self.dt)) + self.origin
        if k < 0 or k >= len(self.times):
            raise IndexError(f"time {t} outside the cached window")
        return k


def _exp_linear_integral(a, dt):
    """``int exp`` of the piecewise-linear interpolant of grid values ``a``.

    Exact when the exponent is linear in time (the noise-free case), so
    ``sigma = 0`` reproduces ``int_{-S}^0 e^{2s} ds`` to rounding.
    """
    d = np.diff(a, axis=0)
    small = np.abs(d) < 1e-12
    ratio = np.where(small, 1.0 + 0.5 * d, np.expm1(d) / np.where(small, 1.0, d))
    return np.exp(a[:-1]) * ratio * dt


def _tail(sigma, W_start, S):
    if sigma**2 >= 1:
        return np.full(np.shape(W_start), np.inf)
    return np.exp(2 * sigma * W_start - 2 * S) / (2 - 2 * sigma**2)


def _radius_from_W(W, times, sigma, dt):
    """r* at the last grid time from values of W on ``times`` (ascending).

    Works column-wise for a trailing path axis.  The conditional mean of the
    truncated tail given ``W`` at the window start is added.
    """
    a = 2 * (times - times[-1]).reshape((-1,) + (1,) * (W.ndim - 1)) + 2 * sigma * (W - W[-1])
    S = times[-1] - times[0]
    tail = _tail(sigma, W[0] - W[-1], S)
    integral = _exp_linear_integral(a, dt).sum(axis=0) + tail
    return (2 * integral) ** -0.5, tail


def _radial_channel(path, channel):
    if channel >= path.channels:
        raise ValueError("path has too few channels for the radial noise")
    return channel


def stationary_radius(path, sigma, S_trunc=20.0, channel=0):
    """Evaluate ``r*(omega)`` from the path values on ``[-S_trunc, 0]``."""
    if not path.covers(-S_trunc, 0.0):
        raise ValueError(f"path window does not cover [-{S_trunc}, 0]")
    W = path.values_between(-S_trunc, 0.0)[:, _radial_channel(path, channel)]
    t = path.times_between(-S_trunc, 0.0)
    r, tail = _radius_from_W(W, t, sigma, path.dt)
    return StationaryRadius(float(r), S_trunc, path.dt, float(tail), path.seed)


def stationary_radius_batch(paths, sigma, S_trunc=20.0, channel=0):
    """``r*`` for many paths at once (array of shape ``(P,)``)."""
    W = np.stack([p.values_between(-S_trunc, 0.0)[:, channel] for p in paths], axis=1)
    t = paths[0].times_between(-S_trunc, 0.0)
    return _radius_from_W(W, t, sigma, paths[0].dt)[0]


def _cumulative_radius(W, times, sigma, dt):
    """``r*(theta_u omega)`` at every grid time from one cumulative quadrature.

    ``J(u) = int_{-inf}^u exp(2v + 2 sigma W_v) dv`` is accumulated from the
    window start (with the conditional tail mean added there), and
    ``r*(theta_u omega) = (2 exp(-2u - 2 sigma W_u) J(u))^(-1/2)``.
    """
    a = 2 * times.reshape((-1,) + (1,) * (W.ndim - 1)) + 2 * sigma * W
    a = a - a[0]
    tail = _tail(sigma, np.zeros(W.shape[1:]), 0.0)
    J = np.concatenate([tail[None] + np.zeros(W.shape[1:])[None],
                        tail + np.cumsum(_exp_linear_integral(a, dt), axis=0)])
    return (2 * np.exp(-a) * J) ** -0.5


def stationary_trajectory(entry, paths, t_start, t_end, S_trunc=20.0):
    """Cache ``R(u) = r*(theta_u omega)`` for ``u`` in ``[t_start, t_end]``.

    The radius at every grid time comes from one cumulative pass of the
    quadrature formula over ``[t_start - S_trunc, t_end]``, so cached values do
    not depend on the window and ``R(0)`` agrees with
    :func:`stationary_radius` to rounding.  The phase integral ``Phi`` uses the
    trapezoid rule (Stratonovich sums for the phase noise).  ``paths`` may be
    a single path or a list; in the latter case arrays gain a trailing path
    axis.
    """
    sk = entry.skew
    if sk is None:
        raise ValueError(f"{entry.name} has no skew-product structure")
    single = not isinstance(paths, (list, tuple))
    plist = [paths] if single else list(paths)
    dt = plist[0].dt
    if not (t_start <= 0.0 <= t_end):
        raise ValueError("the cached window must contain time 0")
    lo = t_start - S_trunc
    for p in plist:
        if not p.covers(lo, t_end):
            raise ValueError(f"path window does not cover [{lo}, {t_end}]")
    W = np.stack([p.values_between(lo, t_end)[:, sk.radial_channel] for p in plist], axis=1)
    times = plist[0].times_between(lo, t_end)
    skip = int(round(S_trunc / dt))
    R = _cumulative_radius(W, times, sk.sigma, dt)[skip:]
    hv = sk.h(R)
    inc = 0.5 * (hv[1:] + hv[:-1]) * dt
    if sk.htilde is not None:
        dW = np.stack([p.increments_between(t_start, t_end) for p in plist], axis=1)
        hv2 = sk.htilde(R)
        inc = inc + 0.5 * (hv2[1:] + hv2[:-1]) * dW[:, :, sk.phase_channel]
    cum = np.concatenate([np.zeros((1, len(plist))), np.cumsum(inc, axis=0)])
    origin = int(round(-t_start / dt))
    cum = cum - cum[origin]
    times = times[skip:]
    if single:
        R, cum = R[:, 0], cum[:, 0]
    return StationaryTrajectory(times, R, cum, origin, dt)


def _to_chart(entry, pts):
    pts = np.asarray(pts, dtype=float)
    if entry.spec.chart == "planar":
        return pts
    return np.stack([np.arctan2(pts[..., 1], pts[..., 0]), np.hypot(pts[..., 0], pts[..., 1])], -1)


def pullback_fiber(entry, path, T, seeds, dt=None, scheme="heun_stratonovich"):
    """Cloud ``phi(T, theta_{-T} omega, seeds)`` approximating ``A(omega)``.

    Seeds are planar points; the returned cloud is planar as well.
    """
    x0 = _to_chart(entry, seeds)
    res = flow(entry, path, -T, T, x0, dt, scheme, record_every=0)
    return AttractorFiber(to_planar(entry.spec.chart, res.final_state), "pullback", T,
                          f"{len(x0)} seeds")


def forward_fiber(entry, path, T, seeds, dt=None, scheme="heun_stratonovich"):
    """Cloud ``phi(T, omega, seeds)`` approximating ``A(theta_T omega)``."""
    x0 = _to_chart(entry, seeds)
    res = flow(entry, path, 0.0, T, x0, dt, scheme, record_every=0)
    return AttractorFiber(to_planar(entry.spec.chart, res.final_state), "forward", T,
                          f"{len(x0)} seeds")


def pullback_fibers(entry, paths, T, seeds, scheme="heun_stratonovich"):
    """Pullback clouds for many paths advanced together, shape ``(P, B, 2)``."""
    x0 = _to_chart(entry, seeds)
    out = ensemble_flow(entry, paths, -T, T, x0, None, scheme)
    return to_planar(entry.spec.chart, out)


def hausdorff_semidistance(E, F):
    """``sup_{x in E} inf_{y in F} |x - y|`` over finite planar sets."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if E.size == 0 or F.size == 0:
        raise ValueError("both point sets must be nonempty")
    d, _ = cKDTree(F).query(E)
    return float(np.max(d))


def circle_semidistance(cloud, radius):
    """Semi-distance from a cloud to the centered circle of the given radius."""
    cloud = np.asarray(cloud, dtype=float)
    return np.max(np.abs(np.hypot(cloud[..., 0], cloud[..., 1]) - np.asarray(radius)[..., None]),
                  axis=-1)


def annulus_seeds(count, R1=0.3, R2=2.0, rings=None):
    """Deterministic seed set on concentric rings filling ``[R1, R2]``."""
    rings = rings or max(1, int(round(np.sqrt(count / 8))))
    per = int(np.ceil(count / rings))
    r = np.repeat(np.linspace(R1, R2, rings), per)[:count]
    a = (np.tile(np.arange(per), rings)[:count] + 0.5 * (np.arange(count) // per % 2)) * 2 * np.pi / per
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


def trajectory_seeds(entry, path, x0, count, spacing=0.1, scheme="heun_stratonovich"):
    """Seeds sampled along one trajectory of the system, started at planar ``x0``."""
    steps = int(round(spacing / path.dt))
    res = flow(entry, path, 0.0, count * steps * path.dt, _to_chart(entry, x0), None, scheme,
               record_every=steps)
    return to_planar(entry.spec.chart, res.states[1:])
