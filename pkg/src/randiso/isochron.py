"""Random forward isochrons and the random isochron map.

The asymptotic phase of a state ``y`` is read off by integrating ``y`` and a
reference point on the attractor fiber with the same noise and differencing
their unwrapped phases.  The difference converges at the rate of the second
Lyapunov exponent, so a horizon of ten time units is ample for the catalog
models.  Isochron curves are graphs ``theta(r)`` found by secant shooting on
that phase lag.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .attractor import stationary_trajectory
from .crps import period_window, random_period
from .flow import check_guard, prepare_spec, step
from .models import to_planar
from .noise import shift

__all__ = [
    "IsochronCurve",
    "PhaseLag",
    "asymptotic_phase_lag",
    "forward_isochron",
    "forward_isochrons",
    "isochron_map",
    "isochron_map_batch",
    "invariance_residuals",
    "foliation_report",
    "contraction_profile",
    "wrap",
]

TWO_PI = 2 * np.pi
DRIFT_TOL = 1e-4
_SNAP = 1e-10


def wrap(a):
    """Wrap angles into ``[-pi, pi)``."""
    return (np.asarray(a) + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True, eq=False)
class IsochronCurve:
    anchor_phase: float
    anchor_point: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    t_h: float
    rate: float
    continuity: float
    final_distance: np.ndarray
    seed: int
    sigma: float
    s: float = 0.0

    @property
    def gaps(self):
        return np.flatnonzero(~self.converged)

    def planar(self):
        return np.stack([self.r * np.cos(self.theta), self.r * np.sin(self.theta)], -1)


@dataclass(frozen=True, eq=False)
class LagResult:
    lag: np.ndarray
    converged: np.ndarray
    drift: np.ndarray
    final_distance: np.ndarray
    checkpoints: dict


def _as_paths(paths):
    return list(paths) if isinstance(paths, (list, tuple)) else [paths]


def _polar_to_chart(entry, pol):
    return pol if entry.spec.chart == "polar" else to_planar("polar", pol)


def _track(entry, paths, X0, t_h, check_times=(), scheme="heun_stratonovich"):
    """Integrate ``X0`` (shape ``(P, B, 2)``, entry chart) tracking unwrapped phase.

    Returns ``{t: (phase, planar_state)}`` for each requested checkpoint and
    for ``t_h``.
    """
    spec = prepare_spec(entry, scheme)
    dt = paths[0].dt
    K = int(round(t_h / dt))
    dW = np.stack([p.increments_between(0.0, K * dt) for p in paths], axis=1)[:, :, None, :]
    x = np.array(X0, dtype=float)
    polar = spec.chart == "polar"
    phase = x[..., 0].copy() if polar else np.arctan2(x[..., 1], x[..., 0])
    want = {int(round(t / dt)): t for t in tuple(check_times) + (K * dt,)}
    out = {}
    if 0 in want:
        out[want[0]] = (phase.copy(), to_planar(spec.chart, x))
    guard = entry.guard_radius
    for k in range(K):
        xn = step(spec, x, dW[k], dt, scheme)
        if polar:
            phase = xn[..., 0]
        else:
            cross = x[..., 0] * xn[..., 1] - x[..., 1] * xn[..., 0]
            dot = x[..., 0] * xn[..., 0] + x[..., 1] * xn[..., 1]
            phase = phase + np.arctan2(cross, dot)
        x = xn
        if k % 16 == 15 or k == K - 1:
            check_guard(spec.chart, x, guard)
        if k + 1 in want:
            out[want[k + 1]] = (phase.copy(), to_planar(spec.chart, x))
    return out


def _lags(entry, paths, Y, ref, t_h, check_times=(), scheme="heun_stratonovich"):
    """Asymptotic phase of polar states ``Y`` (``(P, B, 2)``) relative to ``ref`` (``(P, 2)``)."""
    P = len(paths)
    Y = np.asarray(Y, dtype=float).reshape(P, -1, 2)
    ref = np.asarray(ref, dtype=float).reshape(P, 1, 2)
    X = _polar_to_chart(entry, np.concatenate([Y, ref], axis=1))
    t_q = round(0.75 * t_h / paths[0].dt) * paths[0].dt
    cp = _track(entry, paths, X, t_h, tuple(check_times) + (t_q,), scheme)
    ph0 = np.concatenate([Y[..., 0], ref[..., 0]], axis=1)
    if entry.spec.chart != "polar":
        # the tracked phase starts at atan2; re-base on the supplied angles
        base = ph0 - np.arctan2(np.sin(ph0), np.cos(ph0))
        cp = {t: (ph + base, st) for t, (ph, st) in cp.items()}
    ph_end, st_end = cp[max(cp)]
    ph_q, _ = cp[t_q]
    lag = ph_end[:, :-1] - ph_end[:, -1:]
    drift = np.abs(lag - (ph_q[:, :-1] - ph_q[:, -1:]))
    dist = np.hypot(*(st_end[:, :-1] - st_end[:, -1:]).transpose(2, 0, 1))
    return LagResult(lag, drift <= DRIFT_TOL, drift, dist, cp)


class PhaseLag:
    """Asymptotic phase lag relative to the random periodic solution ``psi_anchor``.

    Calling the object on polar states returns ``lag(y)`` with ``nan`` for
    samples rejected by the drift check.
    """

    def __init__(self, entry, path, t_h=10.0, anchor=0.0, S_trunc=20.0,
                 scheme="heun_stratonovich"):
        if entry.skew is None:
            raise ValueError(f"{entry.name} has no random periodic solution")
        self.entry, self.path, self.t_h = entry, path, t_h
        self.anchor, self.S_trunc, self.scheme = anchor, S_trunc, scheme
        back = period_window(entry, path.dt)
        self.traj = stationary_trajectory(entry, path, -back, 0.0, S_trunc)
        self.reference = np.array([anchor, self.traj.R[self.traj.origin]])

    def evaluate(self, Y):
        Y = np.asarray(Y, dtype=float)
        res = _lags(self.entry, [self.path], Y.reshape(1, -1, 2), self.reference,
                    self.t_h, scheme=self.scheme)
        return res

    def __call__(self, Y):
        Y = np.asarray(Y, dtype=float)
        res = self.evaluate(Y)
        lag = np.where(res.converged, res.lag, np.nan)[0]
        return lag.reshape(Y.shape[:-1])


def asymptotic_phase_lag(entry, path, y, t_h=10.0, dt=None, anchor=0.0, S_trunc=20.0):
    """``lim_t [phase(phi(t, w, y)) - phase(psi_anchor(t, theta_t w))]`` for polar ``y``."""
    if dt is not None and not np.isclose(dt, path.dt):
        raise ValueError("dt must equal the path dt")
    return PhaseLag(entry, path, t_h, anchor, S_trunc)(y)


def _first_level_hit(taus, G, L):
    """Smallest ``tau`` with ``G(tau) - L`` in ``2 pi Z`` along the sampled curve.

    ``taus`` has shape ``(K,)``, ``G`` shape ``(K, P)`` and ``L`` shape ``(P, B)``.
    """
    g = (G[:, :, None] - L[None]) / TWO_PI
    # a lag that matches the start of the window up to rounding belongs to it
    g0r = np.round(g[0])
    g[0] = np.where(np.abs(g[0] - g0r) <= _SNAP, g0r, g[0])
    n = np.floor(g)
    exact = g == n
    crossing = np.zeros_like(exact)
    crossing[1:] = n[1:] != n[:-1]
    hit = exact | crossing
    k = np.argmax(hit, axis=0)
    ok = hit.any(axis=0)
    P, B = L.shape
    pi_, bi = np.meshgrid(np.arange(P), np.arange(B), indexing="ij")
    g1 = g[k, pi_, bi]
    km = np.maximum(k - 1, 0)
    g0 = g[km, pi_, bi]
    level = np.where(g1 > g0, np.floor(g1), np.ceil(g1))
    level = np.where(exact[k, pi_, bi], g1, level)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where((k > 0) & (g1 != g0), (level - g0) / (g1 - g0), 1.0)
    tau = np.where(k > 0, taus[km] + np.clip(frac, 0, 1) * (taus[k] - taus[km]), taus[0])
    return np.where(ok, tau, np.nan)


def isochron_map_batch(entry, paths, Y, s=0.0, t_h=10.0, anchor=0.0, S_trunc=20.0,
                       scheme="heun_stratonovich"):
    """``phi~(y, w_p, s)`` for polar states ``Y`` of shape ``(P, B, 2)``.

    The lag of ``y`` against ``psi_anchor(t, theta_t w)`` is matched to the
    phase of ``psi_anchor(tau, w)``; the returned value is the first
    ``tau >= s`` with a matching phase, which lies in ``[s, s + T(theta_{-s} w))``.
    Rejected samples are ``nan``.
    """
    paths = _as_paths(paths)
    dt = paths[0].dt
    back = (np.ceil((s + 2 * period_window(entry, dt)) / dt) + 2) * dt
    traj = stationary_trajectory(entry, paths, -back, 0.0, S_trunc)
    R0 = traj.R[traj.origin]
    ref = np.stack([np.full(len(paths), anchor), np.atleast_1d(R0)], -1)
    res = _lags(entry, paths, Y, ref, t_h, scheme=scheme)
    phase = traj.phase.reshape(len(traj.times), -1)
    G = phase[traj.origin] - phase[: traj.origin + 1][::-1]
    taus = np.arange(G.shape[0]) * dt
    G_s = np.array([np.interp(s, taus, G[:, j]) for j in range(G.shape[1])])
    keep = taus > s
    taus_s = np.concatenate([[s], taus[keep]])
    G_win = np.concatenate([G_s[None], G[keep]])
    out = _first_level_hit(taus_s, G_win, res.lag)
    return np.where(res.converged, out, np.nan)


def isochron_map(entry, path, y, s=0.0, t_h=10.0, dt=None, anchor=0.0, S_trunc=20.0):
    """Random isochron map ``phi~(y, w, s)`` for polar state(s) ``y``."""
    if dt is not None and not np.isclose(dt, path.dt):
        raise ValueError("dt must equal the path dt")
    y = np.asarray(y, dtype=float)
    out = isochron_map_batch(entry, [path], y.reshape(1, -1, 2), s, t_h, anchor, S_trunc)
    return out.reshape(y.shape[:-1])


def _shoot(entry, path, ref, targets, r_grid, theta0, t_h, tol, max_iter, scheme):
    """Secant solve of ``wrap(lag(theta, r_i) - target_k) = 0`` for all (k, i)."""
    r = np.broadcast_to(np.asarray(r_grid, dtype=float), theta0.shape)
    tgt = np.asarray(targets, dtype=float)[:, None] + np.zeros_like(theta0)

    def F(theta):
        res = _lags(entry, [path], np.stack([theta, r], -1).reshape(1, -1, 2), ref, t_h,
                    scheme=scheme)
        f = wrap(res.lag[0].reshape(theta.shape) - tgt)
        return f, res.converged[0].reshape(theta.shape), res.final_distance[0].reshape(theta.shape)

    th0 = theta0
    f0, _, _ = F(th0)
    th1 = th0 - f0
    f1, conv, dist = F(th1)
    for _ in range(max_iter):
        active = np.abs(f1) > tol
        if not active.any():
            break
        denom = f1 - f0
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(np.abs(denom) > 1e-14, (th1 - th0) / denom, 1.0)
        slope = np.where(np.isfinite(slope) & (slope > 0.05) & (slope < 20), slope, 1.0)
        th_new = np.where(active, th1 - slope * f1, th1)
        f_new, c_new, d_new = F(th_new)
        th0, f0 = np.where(active, th1, th0), np.where(active, f1, f0)
        th1, f1 = th_new, f_new
        conv, dist = c_new, d_new
    return th1, np.abs(f1), conv & (np.abs(f1) <= tol), dist


def forward_isochrons(entry, path, anchors, r_grid, t_h=10.0, dt=None, tol=1e-8,
                      max_iter=30, S_trunc=20.0, scheme="heun_stratonovich", s_label=0.0):
    """Forward isochrons through several anchors on the attractor fiber.

    ``anchors`` are phases ``vartheta_k`` of points ``(vartheta_k, r*(w))`` on
    the fiber, or explicit polar points of shape ``(k, 2)``.  All curves share
    one reference trajectory, so the shooting is batched.
    """
    if dt is not None and not np.isclose(dt, path.dt):
        raise ValueError("dt must equal the path dt")
    anchors = np.asarray(anchors, dtype=float)
    if anchors.ndim <= 1:
        traj = stationary_trajectory(entry, path, 0.0, 0.0, S_trunc) if entry.skew else None
        if traj is None:
            raise ValueError("anchor phases need the stationary radius; pass anchor points")
        pts = np.stack([np.atleast_1d(anchors), np.full(np.size(anchors), traj.R[0])], -1)
    else:
        pts = anchors
    ref = pts[0]
    base = _lags(entry, [path], pts.reshape(1, -1, 2), ref, t_h, scheme=scheme)
    targets = base.lag[0]
    r_grid = np.asarray(r_grid, dtype=float)
    theta0 = pts[:, :1] + np.zeros((len(pts), len(r_grid)))
    theta, resid, ok, dist = _shoot(entry, path, ref, targets, r_grid, theta0, t_h, tol,
                                    max_iter, scheme)
    # contraction rate from the distance to the anchor at t_h / 2 and t_h
    half = round(0.5 * t_h / path.dt) * path.dt
    cp = _lags(entry, [path], np.concatenate(
        [np.stack([theta.ravel(), np.tile(r_grid, len(pts))], -1), pts]).reshape(1, -1, 2),
        ref, t_h, check_times=(half,), scheme=scheme).checkpoints
    n = theta.size
    owner = np.repeat(np.arange(len(pts)), len(r_grid))
    st_h = cp[half][1][0]
    st_e = cp[max(cp)][1][0]
    d_half = np.hypot(*(st_h[:n] - st_h[n + owner]).T)
    d_end = np.hypot(*(st_e[:n] - st_e[n + owner]).T)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = -np.log(d_end / d_half) / (max(cp) - half)
    rates = rates.reshape(theta.shape)
    sigma = float(entry.spec.params.get("sigma", 0.0))
    curves = []
    for k in range(len(pts)):
        th = theta[k]
        dth = np.abs(np.diff(th)) / np.diff(r_grid) if len(r_grid) > 1 else np.zeros(0)
        fin = np.isfinite(rates[k])
        curves.append(IsochronCurve(
            float(pts[k, 0]), pts[k].copy(), r_grid.copy(), th, resid[k], ok[k], t_h,
            float(np.median(rates[k][fin])) if fin.any() else np.nan,
            float(dth.max()) if dth.size else 0.0, dist[k], path.seed, sigma, s_label))
    return curves


def forward_isochron(entry, path, anchor, r_grid, t_h=10.0, dt=None, tol=1e-8,
                     max_iter=30, S_trunc=20.0, scheme="heun_stratonovich"):
    """Forward isochron ``W^f(w, x)`` sampled as ``theta(r_i)`` on ``r_grid``.

    ``anchor`` is a phase on the attractor fiber or a polar point ``(theta, r)``.
    """
    a = np.asarray(anchor, dtype=float)
    anchors = a[None] if a.ndim == 1 else np.atleast_1d(a)
    return forward_isochrons(entry, path, anchors, r_grid, t_h, dt, tol, max_iter,
                             S_trunc, scheme)[0]


def _curve_theta_at(curve, r):
    ok = curve.converged
    spline = CubicSpline(curve.r[ok], curve.theta[ok])
    return spline(r)


def invariance_residuals(entry, path, curve, s, dt=None, t_h=None,
                         scheme="heun_stratonovich"):
    """Push a curve through ``phi(s, w, .)`` and compare with the isochron at ``theta_s w``.

    The reference curve is recomputed through ``phi(s, w, x)`` on the shifted
    path and the pushed samples are compared in angle at matched radius.
    Samples landing outside the radius grid are dropped and counted.
    """
    from .flow import flow

    t_h = t_h or curve.t_h
    ok = curve.converged
    pts = np.stack([curve.theta[ok], curve.r[ok]], -1)
    both = np.concatenate([pts, curve.anchor_point[None]])
    if s == 0:
        pushed = both
    else:
        fr = flow(entry, path, 0.0, s, _polar_to_chart(entry, both), dt, scheme, record_every=0)
        pushed = fr.final_state
        if entry.spec.chart != "polar":
            pol = np.stack([np.arctan2(pushed[:, 1], pushed[:, 0]), np.hypot(pushed[:, 0], pushed[:, 1])], -1)
            pushed = pol
    x_s = pushed[-1]
    rec = forward_isochrons(entry, shift(path, s), x_s[None], curve.r, t_h, None,
                            scheme=scheme, s_label=s)[0]
    lo, hi = curve.r[rec.converged].min(), curve.r[rec.converged].max()
    samp = pushed[:-1]
    inside = (samp[:, 1] >= lo) & (samp[:, 1] <= hi)
    dev = np.abs(wrap(samp[inside, 0] - _curve_theta_at(rec, samp[inside, 1])))
    return {"max_residual": float(dev.max()) if dev.size else np.nan,
            "dropped": int(np.count_nonzero(~inside)), "compared": int(dev.size),
            "recomputed": rec}


def contraction_profile(entry, path, curve, times=(2.0, 4.0, 6.0, 8.0),
                        scheme="heun_stratonovich"):
    """``max_i d(phi(t, w, y_i), phi(t, w, x))`` at each requested time."""
    ok = curve.converged
    Y = np.stack([curve.theta[ok], curve.r[ok]], -1)
    res = _lags(entry, [path], Y[None], curve.anchor_point, max(times) + 1.0,
                check_times=times, scheme=scheme)
    out = {}
    for t in times:
        st = res.checkpoints[t][1][0]
        out[t] = float(np.max(np.hypot(*(st[:-1] - st[-1]).T)))
    return out


def foliation_report(entry, path, n_anchors=8, r_grid=None, test_shape=(24, 8), t_h=10.0,
                     S_trunc=20.0, scheme="heun_stratonovich"):
    """Check that curves through equally spaced fiber phases partition a test grid.

    Each test point is assigned a sector twice: by its ``phi~`` value relative
    to the anchors' values, and geometrically by the curves bracketing it at
    its radius.  The report counts disagreements and the minimal angular gap
    between neighbouring curves.
    """
    R1, R2 = entry.working_region
    if r_grid is None:
        r_grid = np.linspace(R1, R2, 35)
    phases = TWO_PI * np.arange(n_anchors) / n_anchors
    curves = forward_isochrons(entry, path, phases, r_grid, t_h, None, S_trunc=S_trunc,
                               scheme=scheme)
    theta = np.stack([c.theta for c in curves])
    rel = np.mod(theta - theta[:1], TWO_PI)
    rel[0] = 0.0
    ordered = bool(np.all(np.diff(rel, axis=0) > 0))
    gaps = np.diff(np.concatenate([rel, np.full((1, rel.shape[1]), TWO_PI)]), axis=0)
    min_gap = float(gaps.min())

    n_th, n_r = test_shape
    tr = np.linspace(r_grid[0], r_grid[-1], n_r + 2)[1:-1]
    tt = (np.arange(n_th) + 0.5) * TWO_PI / n_th
    TT, RR = np.meshgrid(tt, tr, indexing="ij")
    pts = np.stack([TT.ravel(), RR.ravel()], -1)
    anchor_pts = np.stack([c.anchor_point for c in curves])
    vals = isochron_map(entry, path, np.concatenate([anchor_pts, pts]), 0.0, t_h, None, 0.0,
                        S_trunc)
    t_anchor, t_pts = vals[: n_anchors], vals[n_anchors:]
    # sector by map value, read cyclically modulo the period
    T = random_period(entry, path, S_trunc)
    by_map = np.argmin(np.mod(t_pts[None] - t_anchor[:, None], T), axis=0)
    # geometric sector at the point's radius
    cur = np.stack([_curve_theta_at(c, pts[:, 1]) for c in curves])
    off = np.mod(pts[:, 0][None] - cur, TWO_PI)
    by_geom = np.argmin(off, axis=0)
    valid = np.isfinite(t_pts)
    agree = by_map[valid] == by_geom[valid]
    return {"ordered": ordered, "min_gap": min_gap, "tested": int(valid.sum()),
            "rejected": int((~valid).sum()), "disagreements": int((~agree).sum()),
            "curves": curves}
