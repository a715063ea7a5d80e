"""Lyapunov spectrum along a noise path by periodic QR re-orthonormalization."""

from dataclasses import dataclass

import numpy as np

from .flow import FlowEscapeError, _noise, check_guard, flow, prepare_spec

__all__ = ["LyapunovSpectrum", "TangentCollapseError", "lyapunov_spectrum"]


class TangentCollapseError(RuntimeError):
    """A tangent direction collapsed to zero during propagation."""


@dataclass(frozen=True, eq=False)
class LyapunovSpectrum:
    """Exponents ``lambda_1 >= lambda_2`` with block standard errors.

    ``window_logs`` holds ``log|R_ii|`` for each re-orthonormalization window
    and ``window_liouville`` the matching increment of the Liouville integral.
    """

    exponents: np.ndarray
    standard_errors: np.ndarray
    t_max: float
    reorth_dt: float
    window_logs: np.ndarray
    window_liouville: np.ndarray
    liouville_rate: float
    liouville_se: float
    sum_se: float

    @property
    def sum_rule_gap(self):
        return float(self.exponents.sum() - self.liouville_rate)


def _block_se(values, block):
    """Standard error of the mean rate from non-overlapping block means."""
    n = len(values) // block
    if n < 2:
        return np.full(values.shape[1:], np.nan)
    b = values[: n * block].reshape((n, block) + values.shape[1:]).mean(axis=1)
    return b.std(axis=0, ddof=1) / np.sqrt(n)


def lyapunov_spectrum(entry, path, x0, t_max=500.0, reorth_dt=0.5, dt=None,
                      burn_in=10.0, block_time=10.0, scheme="heun_stratonovich"):
    """Estimate the Lyapunov exponents on ``[burn_in, burn_in + t_max]``.

    The state and the tangent frame relax for ``burn_in`` time units first
    (discarded).  Tangent vectors follow the variational equation with the
    same scheme and increments and are re-orthonormalized by QR every
    ``reorth_dt``.
    """
    spec = prepare_spec(entry, scheme)
    h = path.dt
    if dt is not None and not np.isclose(dt, h):
        raise ValueError("dt must equal the path dt")
    per = int(round(reorth_dt / h))
    n_win = int(round(t_max / reorth_dt))
    # the tangent frame relaxes during the last whole windows of the burn-in
    n_burn = int(burn_in // (per * h) + 1e-9)
    t_pre = burn_in - n_burn * per * h
    x = flow(entry, path, 0.0, t_pre, x0, None, scheme, record_every=0).final_state
    dW = path.increments_between(t_pre, t_pre + (n_burn + n_win) * per * h)
    m = x.shape[-1]
    Q = np.eye(m)
    logs = np.empty((n_burn + n_win, m))
    liou = np.empty(n_burn + n_win)
    A = spec.drift_jacobian(x)
    DS = spec.diffusion_jacobians(x)
    heun = scheme == "heun_stratonovich"
    guard = entry.guard_radius
    for w in range(n_burn + n_win):
        V = Q
        acc = 0.0
        for k in range(w * per, (w + 1) * per):
            dw = dW[k]
            a = spec.drift(x)
            nx = _noise(spec.diffusion(x), dw)
            SV = np.tensordot(dw, DS, axes=1)
            xp = x + a * h + nx
            AV = A @ V
            nV = SV @ V
            Vp = V + AV * h + nV
            tr0 = A[0, 0] + A[1, 1]
            ts0 = SV[0, 0] + SV[1, 1]
            if heun:
                Ap = spec.drift_jacobian(xp)
                SVp = np.tensordot(dw, spec.diffusion_jacobians(xp), axes=1)
                x = x + 0.5 * (a + spec.drift(xp)) * h + 0.5 * (nx + _noise(spec.diffusion(xp), dw))
                V = V + 0.5 * (AV + Ap @ Vp) * h + 0.5 * (nV + SVp @ Vp)
            else:
                x, V = xp, Vp
            A = spec.drift_jacobian(x)
            DS = spec.diffusion_jacobians(x)
            acc += 0.5 * (tr0 + A[0, 0] + A[1, 1]) * h + 0.5 * (ts0 + np.trace(np.tensordot(dw, DS, axes=1)))
        check_guard(spec.chart, x, guard)
        Q, R = np.linalg.qr(V)
        d = np.abs(np.diag(R))
        if not np.all(np.isfinite(d)):
            raise FlowEscapeError("tangent propagation produced non-finite values")
        if np.any(d == 0):
            raise TangentCollapseError(f"tangent collapse in window {w}")
        Q = Q * np.sign(np.diag(R))
        logs[w] = np.log(d)
        liou[w] = acc
    logs, liou = logs[n_burn:], liou[n_burn:]
    T = n_win * per * h
    lam = logs.sum(axis=0) / T
    block = max(1, int(round(block_time / reorth_dt)))
    se = _block_se(logs / reorth_dt, block)
    lse = float(_block_se(liou[:, None] / reorth_dt, block)[0])
    sum_se = float(_block_se(logs.sum(axis=1, keepdims=True) / reorth_dt
                             - liou[:, None] / reorth_dt, block)[0])
    order = np.argsort(lam)[::-1]
    return LyapunovSpectrum(lam[order], se[order], T, reorth_dt, logs[:, order], liou,
                            float(liou.sum() / T), lse, sum_se)
