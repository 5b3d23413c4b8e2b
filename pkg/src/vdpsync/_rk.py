"""Adaptive Dormand-Prince 5(4) integrator with dense output.

One tuned stepper drives both the mean-field ODE and the covariance ODE.
Unlike ``scipy.integrate.solve_ivp`` it operates on arrays of arbitrary
leading (batch) shape, so an ensemble of trajectories advances in lockstep
with a shared adaptive step; the error norm is the max over batch members,
i.e. every member individually satisfies the requested tolerance.

State dtype may be real or complex; error norms use magnitudes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["IntegrationError", "SolverOptions", "integrate_adaptive"]

# Dormand-Prince butcher tableau (FSAL: stage 7 = RHS at the accepted point).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = _A[6]  # 5th order weights (first 6 stages; k7 weight is 0)
# difference between 5th and embedded 4th order weights, incl. stage 7
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])
# Shampine dense-output polynomial (4th-order interpolant), rows = stages.
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Step-size underflow or non-finite state; carries the last good time."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last good time t={t_last:.6g})")
        self.t_last = t_last


@dataclass
class SolverOptions:
    """Tolerances and step limits for the adaptive integrator."""

    rtol: float = 1e-9
    atol: float = 1e-12
    dt_max: Optional[float] = None
    dt_initial: Optional[float] = None
    max_steps: int = 50_000_000
    extra: dict = field(default_factory=dict)

    def validated(self) -> "SolverOptions":
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        return self


def _err_norm(delta: np.ndarray, scale: np.ndarray, batch_ndim: int) -> float:
    """Max over batch members of the RMS of |delta|/scale over state dims."""
    r = (np.abs(delta) / scale) ** 2
    if batch_ndim == 0:
        return float(np.sqrt(np.mean(r)))
    state_axes = tuple(range(batch_ndim, r.ndim))
    per_member = np.sqrt(np.mean(r, axis=state_axes))
    return float(np.max(per_member))


def _initial_step(rhs, t0, y0, f0, direction, rtol, atol, batch_ndim):
    """Hairer-style cheap estimate of a safe first step."""
    scale = atol + rtol * np.abs(y0)
    d0 = _err_norm(y0, scale, batch_ndim)
    d1 = _err_norm(f0, scale, batch_ndim)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = rhs(t0 + h0 * direction, y1)
    d2 = _err_norm(f1 - f0, scale, batch_ndim) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def integrate_adaptive(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t_span: tuple[float, float],
    y0: np.ndarray,
    t_eval: np.ndarray,
    options: Optional[SolverOptions] = None,
    batch_ndim: int = 0,
    on_accept: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
    on_sample: Optional[Callable[[int, np.ndarray], None]] = None,
):
    """Integrate ``y' = rhs(t, y)`` over ``t_span`` with dense output.

    Parameters
    ----------
    rhs : callable
        Right-hand side; must accept and return arrays of ``y0.shape``.
    t_span : (t0, t1)
        Increasing time interval.
    y0 : ndarray
        Initial state; leading ``batch_ndim`` axes are independent systems
        sharing the adaptive step.
    t_eval : ndarray
        Strictly increasing sample times inside ``t_span``; filled by the
        dense-output interpolant.
    on_accept : callable, optional
        Applied to the state after every accepted step (e.g.
        re-symmetrization); must return the possibly adjusted state.
    on_sample : callable, optional
        Streaming consumer ``on_sample(index, y_at_t_eval[index])``; when
        given, samples are not stored and ``None`` is returned instead of
        the sample array.

    Returns
    -------
    ndarray of shape ``t_eval.shape + y0.shape`` (or None in streaming mode).

    Raises
    ------
    IntegrationError
        On step-size underflow or a non-finite state.
    """
    opts = (options or SolverOptions()).validated()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size and (t_eval[0] < t0 - 1e-9 or t_eval[-1] > t1 + 1e-9):
        raise ValueError("t_eval must lie inside t_span")

    y = np.array(y0, copy=True)
    out = None
    if on_sample is None and t_eval.size:
        out = np.empty(t_eval.shape + y.shape, dtype=y.dtype)

    t = t0
    f = rhs(t, y)
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(f)):
        raise IntegrationError("non-finite state", t0)
    if np.result_type(y.dtype, f.dtype) != y.dtype:
        y = y.astype(np.result_type(y.dtype, f.dtype))
        if out is not None:
            out = out.astype(y.dtype)
    dt_max = opts.dt_max if opts.dt_max is not None else (t1 - t0)
    if opts.dt_initial is not None:
        dt = float(opts.dt_initial)
    else:
        dt = _initial_step(rhs, t, y, f, 1.0, opts.rtol, opts.atol, batch_ndim)
    dt = min(dt, dt_max, t1 - t0)

    k = np.empty((7,) + y.shape, dtype=y.dtype)
    flat = (7, -1)
    i_eval = 0
    n_eval = t_eval.size
    # emit samples that coincide with t0
    while i_eval < n_eval and t_eval[i_eval] <= t0 + 1e-12 * max(1.0, abs(t0)):
        if on_sample is not None:
            on_sample(i_eval, y.copy())
        else:
            out[i_eval] = y
        i_eval += 1

    # stage/step weights as flat matmuls against the packed stage buffer
    a_rows = [np.asarray(_A[s]) for s in range(1, 7)]
    steps = 0
    while t < t1:
        if steps >= opts.max_steps:
            raise IntegrationError("max step count exceeded", t)
        steps += 1
        dt = min(dt, t1 - t)
        tiny = 1e-13 * max(abs(t), 1.0)
        if dt < tiny:
            if t1 - t < tiny:
                break  # reached the endpoint within roundoff
            raise IntegrationError("step size underflow", t)

        k[0] = f
        kf = k.reshape(flat)
        for s in range(1, 7):
            incr = (a_rows[s - 1] @ kf[:s]).reshape(y.shape)
            k[s] = rhs(t + _C[s] * dt, y + dt * incr)
        y_new = y + dt * (_B @ kf[:6]).reshape(y.shape)
        # stage 7 sits at (t+dt, y_new) because its a-row equals b (FSAL)
        err_vec = dt * (_E @ kf).reshape(y.shape)
        scale = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _err_norm(err_vec, scale, batch_ndim)
        if not np.isfinite(err):
            dt *= _MIN_FACTOR  # overflow inside the step: retry smaller
            continue

        if err <= 1.0:
            if not np.all(np.isfinite(y_new)):
                raise IntegrationError("non-finite state", t)
            t_new = t + dt
            # dense output over (t, t_new]
            if i_eval < n_eval and t_eval[i_eval] <= t_new + 1e-12 * max(1.0, abs(t_new)):
                j = i_eval
                while j < n_eval and t_eval[j] <= t_new + 1e-12 * max(1.0, abs(t_new)):
                    j += 1
                theta = (t_eval[i_eval:j] - t) / dt
                # Q[s](theta) = sum_p P[s,p] * theta^(p+1)
                tp = theta[:, None] ** np.arange(1, 5)[None, :]
                q = tp @ _P.T                               # (m, 7)
                y_interp = y + dt * (q @ kf).reshape((j - i_eval,) + y.shape)
                for m in range(j - i_eval):
                    if on_sample is not None:
                        on_sample(i_eval + m, y_interp[m])
                    else:
                        out[i_eval + m] = y_interp[m]
                i_eval = j
            y = y_new
            t = t_new
            if on_accept is not None:
                # state adjusted (e.g. re-symmetrized): FSAL stage is stale
                y = on_accept(t, y)
                f = rhs(t, y)
            else:
                # copy: a later rejected attempt overwrites the stage buffer
                f = k[6].copy()
            factor = _MAX_FACTOR if err == 0.0 else min(
                _MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** -0.2))
            dt = min(dt * factor, dt_max)
        else:
            dt = dt * max(_MIN_FACTOR, _SAFETY * err ** -0.2)

    # samples within roundoff of the endpoint
    while i_eval < n_eval:
        if on_sample is not None:
            on_sample(i_eval, y.copy())
        else:
            out[i_eval] = y
        i_eval += 1

    return out

