"""Crauel random periodic solutions of the skew-product oscillators.

With ``R(u) = r*(theta_u omega)`` and the phase integral
``Phi(u) = int_0^u h(R) ds (+ int_0^u htilde(R) o dW^phase)``, the family

    psi_vartheta(t, theta_v omega) = R(v) * (cos, sin)(vartheta + Phi(v) - Phi(v - t))

is a random periodic solution whose period ``T(omega)`` is the first
``tau > 0`` with ``|Phi(0) - Phi(-tau)| = 2 pi``.
"""

from dataclasses import dataclass

import numpy as np

from .attractor import stationary_trajectory
from .flow import flow
from .noise import shift

__all__ = [
    "CRPSSample",
    "PeriodError",
    "crps_eval",
    "crps_point",
    "random_period",
    "random_periods",
    "crps_residuals",
    "crps_sample",
    "period_window",
]

TWO_PI = 2 * np.pi


class PeriodError(RuntimeError):
    """The phase integral did not reach 2 pi inside the available window."""


@dataclass(frozen=True, eq=False)
class CRPSSample:
    anchor: float
    period: float
    hit_sign: int
    times: np.ndarray
    psi: np.ndarray
    seed: int
    model: str


def _require_skew(entry):
    if entry.skew is None:
        raise ValueError(f"no random periodic solution construction for {entry.name}")
    return entry.skew


def period_window(entry, dt):
    """Backward window long enough to contain one period (deterministic phase)."""
    sk = _require_skew(entry)
    if sk.htilde is None and sk.h_min > 0:
        L = TWO_PI / sk.h_min
    else:
        L = 2 * TWO_PI / max(sk.h_min, 0.5)
    return (np.ceil(L / dt) + 2) * dt


def _phase_at(traj, u):
    return np.interp(u, traj.times, traj.phase)


def crps_point(traj, anchor, t, v=0.0):
    """Polar point ``(phase, radius)`` of ``psi_anchor(t, theta_v omega)`` from a cache."""
    k = traj.index(v)
    ph = anchor + traj.phase[k] - _phase_at(traj, v - t)
    return np.stack([ph, np.broadcast_to(traj.R[k], np.shape(ph))], axis=-1)


def _planar(pol):
    return np.stack([pol[..., 1] * np.cos(pol[..., 0]), pol[..., 1] * np.sin(pol[..., 0])], -1)


def crps_eval(entry, path, anchor, t, S_trunc=20.0, traj=None):
    """Planar value of ``psi_anchor(t, omega)``; ``t`` may be an array."""
    _require_skew(entry)
    tmax = float(np.max(t))
    if traj is None:
        t_back = np.ceil(tmax / path.dt + 1) * path.dt
        traj = stationary_trajectory(entry, path, -t_back, 0.0, S_trunc)
    return _planar(crps_point(traj, anchor, np.asarray(t, dtype=float)))


def _first_crossing(G, dt):
    """First ``tau`` on the backward grid with ``|G(tau)| = 2 pi`` (columns = paths).

    Returns ``(tau, sign, hit)``.  ``G[k]`` is the phase integral over
    ``[-k dt, 0]``; crossings are located by linear interpolation.
    """
    hit_mask = np.abs(G) >= TWO_PI
    hit = hit_mask.any(axis=0)
    k = np.argmax(hit_mask, axis=0)
    cols = np.arange(G.shape[1])
    k = np.maximum(k, 1)
    g1 = G[k, cols]
    g0 = G[k - 1, cols]
    sign = np.where(g1 >= 0, 1, -1)
    level = sign * TWO_PI
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(g1 != g0, (level - g0) / (g1 - g0), 1.0)
    tau = (k - 1 + np.clip(frac, 0.0, 1.0)) * dt
    return tau, sign, hit


def random_periods(entry, paths, S_trunc=20.0, window=None):
    """Random periods ``T(omega)`` and hitting signs for a list of paths.

    For deterministic phase speeds ``h >= K_h > 0`` the phase integral is
    increasing, so the first crossing is the unique root inside
    ``[0, 2 pi / K_h]``.  With phase noise the window is doubled until every
    path hits, up to the end of the stored path.
    """
    sk = _require_skew(entry)
    dt = paths[0].dt
    L = window or period_window(entry, dt)
    while True:
        avail = min(-p.t_min for p in paths) - S_trunc
        if L > avail + 1e-12:
            raise PeriodError(f"path window exhausted before the phase integral reached 2 pi (need {L:g})")
        traj = stationary_trajectory(entry, list(paths), -L, 0.0, S_trunc)
        G = (traj.phase[traj.origin] - traj.phase[: traj.origin + 1])[::-1]
        tau, sign, hit = _first_crossing(G, dt)
        if hit.all():
            return tau, sign.astype(int)
        if sk.htilde is None and sk.h_min > 0:
            raise PeriodError("bracket failure: phase integral below 2 pi at 2 pi / K_h")
        L = (np.ceil(2 * L / dt)) * dt


def random_period(entry, path, S_trunc=20.0):
    """``T(omega)`` for one path (see :func:`random_periods`)."""
    T, _ = random_periods(entry, [path], S_trunc)
    return float(T[0])


def crps_sample(entry, path, anchor=0.0, n_samples=200, S_trunc=20.0):
    """Period and ``psi`` sampled on ``[0, T(omega)]``."""
    T, sign = random_periods(entry, [path], S_trunc)
    T, sign = float(T[0]), int(sign[0])
    t_back = (np.ceil(T / path.dt) + 2) * path.dt
    traj = stationary_trajectory(entry, path, -t_back, 0.0, S_trunc)
    ts = np.linspace(0.0, T, n_samples)
    return CRPSSample(anchor, T, sign, ts, _planar(crps_point(traj, anchor, ts)),
                      path.seed, entry.name)


def crps_residuals(entry, path, anchor, t_grid, t0=0.0, S_trunc=20.0,
                   scheme="heun_stratonovich"):
    """Defect of the two identities defining a random periodic solution.

    ``periodicity``: max over ``t`` of ``|psi(t, w) - psi(t + T(theta_{-t} w), w)|``,
    with the shifted period computed independently on ``theta_{-t} w``.
    ``invariance``: max over ``t`` of ``|phi(t, w, psi(t0, w)) - psi(t + t0, theta_t w)|``.
    ``anchor_gap``: ``|psi(0, w) - psi(T(w), w)|``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dt = path.dt
    T0 = random_period(entry, path, S_trunc)
    shifted_T = np.array([random_period(entry, shift(path, -t), S_trunc) for t in t_grid])
    tmax = float(np.max(t_grid))
    back = (np.ceil((tmax + max(T0, shifted_T.max()) + t0) / dt) + 2) * dt
    traj = stationary_trajectory(entry, path, -back, tmax, S_trunc)

    a = _planar(crps_point(traj, anchor, t_grid))
    b = _planar(crps_point(traj, anchor, t_grid + shifted_T))
    periodicity = float(np.max(np.hypot(*(a - b).T)))

    start = crps_point(traj, anchor, t0)
    x0 = start if entry.spec.chart == "polar" else _planar(start)
    fr = flow(entry, path, 0.0, tmax, x0, None, scheme)
    idx = np.rint(t_grid / dt).astype(int)
    got = fr.states[idx]
    got = _planar(got) if entry.spec.chart == "polar" else got
    want = np.stack([_planar(crps_point(traj, anchor, t + t0, v=t)) for t in t_grid])
    invariance = float(np.max(np.hypot(*(got - want).T)))

    gap = float(np.hypot(*(_planar(crps_point(traj, anchor, 0.0)) - _planar(crps_point(traj, anchor, T0)))))
    return {"periodicity": periodicity, "invariance": invariance, "anchor_gap": gap,
            "period": T0, "shifted_periods": shifted_T}
