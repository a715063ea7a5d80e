"""Pathwise integration of the cocycle and its derivative cocycle.

The default scheme is the Stratonovich Heun predictor-corrector.  The
alternative is Euler-Maruyama on the Itô-converted model.  In both cases the
noise increments are taken directly from the :class:`~randiso.noise.NoisePath`
grid, so the integrator step always equals the path step and the discrete
cocycle law holds exactly.
"""

from dataclasses import dataclass

import numpy as np

from .models import stratonovich_to_ito

__all__ = [
    "FlowResult",
    "VariationalResult",
    "FlowEscapeError",
    "SCHEMES",
    "flow",
    "ensemble_flow",
    "variational_flow",
    "integrate",
    "step",
    "prepare_spec",
    "check_guard",
]

SCHEMES = ("heun_stratonovich", "euler_maruyama_ito")
_RESCALE_HI = 1e100
_RESCALE_LO = 1e-100


class FlowEscapeError(RuntimeError):
    """State left the guard radius or became non-finite."""


@dataclass(frozen=True, eq=False)
class FlowResult:
    times: np.ndarray
    states: np.ndarray
    final_state: np.ndarray
    scheme: str
    dt: float


@dataclass(frozen=True, eq=False)
class VariationalResult:
    """Tangent propagation along one trajectory.

    ``tangent`` is the rescaled Jacobian and ``log_scale`` the accumulated
    log of the rescaling factors, so ``Dphi = tangent * exp(log_scale)``.
    ``liouville`` is ``int tr Db ds + sum_i int tr Dsigma_i o dW^i`` along the
    computed trajectory.
    """

    tangent: np.ndarray
    log_scale: float
    log_det: float
    liouville: float
    trajectory: FlowResult

    @property
    def jacobian(self):
        return self.tangent * np.exp(self.log_scale)


def prepare_spec(entry_or_spec, scheme):
    spec = getattr(entry_or_spec, "spec", entry_or_spec)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if scheme == "euler_maruyama_ito":
        return stratonovich_to_ito(spec)
    if spec.ito:
        raise ValueError("Heun scheme expects a Stratonovich model")
    return spec


def _noise(B, dw):
    return np.sum(B * dw[..., :, None], axis=-2)


def step(spec, x, dw, dt, scheme="heun_stratonovich"):
    """One step of the chosen scheme; ``dw`` broadcasts against ``x[..., :n]``."""
    a = spec.drift(x)
    nz = _noise(spec.diffusion(x), dw)
    xp = x + a * dt + nz
    if scheme == "euler_maruyama_ito":
        return xp
    return x + 0.5 * (a + spec.drift(xp)) * dt + 0.5 * (nz + _noise(spec.diffusion(xp), dw))


def check_guard(chart, x, guard):
    """Raise :class:`FlowEscapeError` if any state is outside the guard radius."""
    if chart == "polar":
        r = x[..., 1]
        bad = ~np.isfinite(x).all(axis=-1) | (r > guard) | (r <= 0)
    else:
        bad = ~np.isfinite(x).all(axis=-1) | (np.sum(x * x, axis=-1) > guard * guard)
    if np.any(bad):
        raise FlowEscapeError(f"{int(np.count_nonzero(bad))} state(s) escaped the guard radius {guard:g}")


def integrate(spec, x0, dW, dt, scheme="heun_stratonovich", guard=np.inf,
              record_every=0):
    """Integrate from ``x0`` driven by increments ``dW`` of shape ``(K, ..., n)``.

    Returns ``(final, recorded)`` where ``recorded`` stacks every
    ``record_every``-th state (including the initial one) or is ``None``.
    """
    x = np.array(x0, dtype=float)
    rec = [x.copy()] if record_every else None
    for k in range(dW.shape[0]):
        x = step(spec, x, dW[k], dt, scheme)
        check_guard(spec.chart, x, guard)
        if record_every and (k + 1) % record_every == 0:
            rec.append(x.copy())
    return x, (np.stack(rec) if record_every else None)


def _window(path, t0, t, dt, channels=None):
    if channels is not None and path.channels < channels:
        raise ValueError(f"model needs {channels} noise channel(s), path has {path.channels}")
    if dt is not None and not np.isclose(dt, path.dt, rtol=1e-12, atol=0):
        raise ValueError(f"integrator dt={dt} must equal the path dt={path.dt}")
    if t < 0:
        raise ValueError("duration must be non-negative")
    dW = path.increments_between(t0, t0 + t)
    # extra channels are ignored; the model uses the leading ones
    return dW if channels is None else dW[:, :channels]


def flow(entry, path, t0, t, x0, dt=None, scheme="heun_stratonovich", record_every=1):
    """Approximate ``phi(t, theta_t0 omega, x0)``.

    ``x0`` may carry leading batch dimensions; the same noise drives every
    point.  Set ``record_every=0`` to keep only the final state.
    """
    spec = prepare_spec(entry, scheme)
    dW = _window(path, t0, t, dt, spec.channels)
    final, rec = integrate(spec, x0, dW, path.dt, scheme, entry.guard_radius, record_every)
    if record_every:
        times = t0 + path.dt * np.arange(0, dW.shape[0] + 1, record_every)
    else:
        times = np.array([t0 + t])
        rec = final[None]
    return FlowResult(times, rec, final, scheme, path.dt)


def ensemble_flow(entry, paths, t0, t, x0, dt=None, scheme="heun_stratonovich"):
    """Final states of ``phi(t, theta_t0 omega_p, x0)`` for every path ``p``.

    ``x0`` has shape ``(B, m)`` (shared start points) or ``(P, B, m)``; the
    result has shape ``(P, B, m)``.  All paths are advanced together.
    """
    spec = prepare_spec(entry, scheme)
    dW = np.stack([_window(p, t0, t, dt, spec.channels) for p in paths], axis=1)[:, :, None, :]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (len(paths),) + np.shape(x0)[-2:])
    final, _ = integrate(spec, x, dW, paths[0].dt, scheme, entry.guard_radius)
    return final


def variational_flow(entry, path, t0, t, x0, dt=None, scheme="heun_stratonovich",
                     record_every=0):
    """Integrate the state together with the tangent matrix, same noise, same scheme."""
    spec = prepare_spec(entry, scheme)
    dW = _window(path, t0, t, dt, spec.channels)
    h = path.dt
    x = np.array(x0, dtype=float)
    m = x.shape[-1]
    V = np.eye(m)
    log_scale = 0.0
    rec = [x.copy()] if record_every else None
    A = spec.drift_jacobian(x)
    DS = spec.diffusion_jacobians(x)
    liou = 0.0
    for k in range(dW.shape[0]):
        dw = dW[k]
        a = spec.drift(x)
        nx = _noise(spec.diffusion(x), dw)
        nV = np.einsum("nij,jk,n->ik", DS, V, dw)
        xp = x + a * h + nx
        Vp = V + A @ V * h + nV
        trA0 = np.trace(A)
        trS0 = np.trace(DS, axis1=-2, axis2=-1)
        if scheme == "heun_stratonovich":
            Ap = spec.drift_jacobian(xp)
            DSp = spec.diffusion_jacobians(xp)
            x = x + 0.5 * (a + spec.drift(xp)) * h + 0.5 * (nx + _noise(spec.diffusion(xp), dw))
            V = V + 0.5 * (A @ V + Ap @ Vp) * h + 0.5 * (nV + np.einsum("nij,jk,n->ik", DSp, Vp, dw))
        else:
            x, V = xp, Vp
        check_guard(spec.chart, x, entry.guard_radius)
        A = spec.drift_jacobian(x)
        DS = spec.diffusion_jacobians(x)
        liou += 0.5 * (trA0 + np.trace(A)) * h + 0.5 * np.dot(trS0 + np.trace(DS, axis1=-2, axis2=-1), dw)
        big = np.max(np.abs(V))
        if big > _RESCALE_HI or big < _RESCALE_LO:
            V = V / big
            log_scale += np.log(big)
        if record_every and (k + 1) % record_every == 0:
            rec.append(x.copy())
    if not np.all(np.isfinite(V)):
        raise FlowEscapeError("tangent propagation produced non-finite values")
    sign, logabs = np.linalg.slogdet(V)
    if record_every:
        times = t0 + h * np.arange(0, dW.shape[0] + 1, record_every)
        states = np.stack(rec)
    else:
        times, states = np.array([t0 + t]), x[None]
    traj = FlowResult(times, states, x, scheme, h)
    return VariationalResult(V, log_scale, logabs + m * log_scale, liou, traj)
