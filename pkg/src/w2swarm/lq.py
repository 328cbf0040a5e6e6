"""Scalar linear-quadratic tracking.

Problem: minimize ``int_0^T (zeta - eta)^2 + alpha u^2 dt`` subject to
``eta' = u``. The Riccati solution gives the gain
``f(t) = sqrt(alpha) tanh((T - t) / sqrt(alpha))`` and the value function
``f(0) (zeta - eta0)^2`` in the static case.

Two normalizations differ from the literal closed forms often quoted for
this problem and are fixed here by the discretized QP oracle:

- the transition factor is ``cosh((T-t)/sqrt(alpha)) / cosh(T/sqrt(alpha))``
  so that it equals one at ``t = 0``;
- the optimal cost carries the constant ``COST_CONSTANT = 1`` in front of
  ``(zeta - eta0)^2 sqrt(alpha) tanh(T/sqrt(alpha))``, not ``1/2``.

Both raw expressions remain available (``raw_*``, ``half_value``) for
comparison.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import solve_banded

from .errors import NumericalInvariantError, ValidationError
from .trajectory import trapezoid

logger = logging.getLogger(__name__)

__all__ = [
    "COST_CONSTANT",
    "HALF_COST_CONSTANT",
    "CostPair",
    "ControlSchedule",
    "LqSolution",
    "riccati_gain",
    "transition",
    "solve_static_lq",
    "solve_tracking_lq",
    "lq_qp_oracle",
    "oracle_residual",
    "analytic_cost_scalar",
    "resolve_cost_constant",
]

COST_CONSTANT = 1.0
HALF_COST_CONSTANT = 0.5


def _check_positive(**kw) -> None:
    for name, val in kw.items():
        if not (val > 0 and math.isfinite(val)):
            raise ValidationError(f"{name} must be positive and finite, got {val!r}")


def _check_time(t: float, horizon: float) -> None:
    # small slack absorbs roundoff in accumulated grid times
    if t < -1e-12 * max(1.0, horizon) or t > horizon * (1 + 1e-12) + 1e-15:
        raise ValidationError(f"time {t!r} outside [0, {horizon!r}]")


def riccati_gain(alpha: float, horizon: float, t: float) -> float:
    _check_positive(alpha=alpha)
    _check_time(t, horizon)
    s = math.sqrt(alpha)
    return s * math.tanh(max(horizon - t, 0.0) / s)


def transition(alpha: float, horizon: float, t: float) -> float:
    """cosh((T-t)/sqrt(a)) / cosh(T/sqrt(a)), evaluated without overflow."""
    s = math.sqrt(alpha)
    x = max(horizon - t, 0.0) / s
    big = horizon / s
    return (math.exp(x - big) + math.exp(-x - big)) / (1.0 + math.exp(-2.0 * big))


@dataclass(frozen=True)
class ControlSchedule:
    """Gain and geodesic-fraction schedule for a horizon ``T``.

    With ``receding=True`` the gain is frozen at its window-start value
    ``f(0)`` for every ``t``: the rolling window restarts at each step.
    """

    alpha: float
    horizon: float
    receding: bool = False

    def __post_init__(self) -> None:
        _check_positive(alpha=self.alpha)
        if not (self.horizon >= 0 and math.isfinite(self.horizon)):
            raise ValidationError(f"horizon must be nonnegative, got {self.horizon!r}")

    @property
    def normalization(self) -> float:
        return math.cosh(self.horizon / math.sqrt(self.alpha))

    def gain(self, t: float) -> float:
        if self.receding:
            return riccati_gain(self.alpha, self.horizon, 0.0)
        return riccati_gain(self.alpha, self.horizon, t)

    def feedback_rate(self, t: float) -> float:
        return self.gain(t) / self.alpha

    def transition(self, t: float) -> float:
        return transition(self.alpha, self.horizon, t)

    def fraction(self, t: float) -> float:
        _check_time(t, self.horizon)
        return 1.0 - self.transition(t)

    def fraction_rate(self, t: float) -> float:
        """Analytic derivative of :meth:`fraction`."""
        _check_time(t, self.horizon)
        s = math.sqrt(self.alpha)
        x = max(self.horizon - t, 0.0) / s
        big = self.horizon / s
        sinh_ratio = (math.exp(x - big) - math.exp(-x - big)) / (1.0 + math.exp(-2.0 * big))
        return sinh_ratio / s

    def raw_transition(self, t: float) -> float:
        return math.cosh((self.horizon - t) / math.sqrt(self.alpha))

    def raw_fraction(self, t: float) -> float:
        return 1.0 - self.raw_transition(t)


class CostPair(NamedTuple):
    adopted: float
    half_value: float

    @property
    def discrepancy(self) -> float:
        return self.adopted - self.half_value


@dataclass(eq=False)
class LqSolution:
    """Grid solution of the scalar problem.

    ``control`` has one value per grid node for feedback solutions, or one
    per interval (zero-order hold) for the QP oracle.
    """

    times: np.ndarray
    state: np.ndarray
    control: np.ndarray
    zeta: np.ndarray
    cost: float
    alpha: float
    horizon: float

    @property
    def zero_order_hold(self) -> bool:
        return len(self.control) == len(self.times) - 1

    def recompute_cost(self) -> float:
        return _grid_cost(self.times, self.state, self.control, self.zeta, self.alpha)

    @property
    def final_state(self) -> float:
        return float(self.state[-1])


def _grid_cost(times, state, control, zeta, alpha) -> float:
    track = trapezoid((zeta - state) ** 2, times)
    if len(control) == len(times) - 1:
        effort = float(np.sum(np.diff(times) * control**2))
    else:
        effort = trapezoid(control**2, times)
    return track + alpha * effort


def _grid(horizon: float, steps: int) -> np.ndarray:
    if steps < 1:
        raise ValidationError("grid needs at least one step")
    return np.linspace(0.0, horizon, steps + 1)


def _signal(zeta, times: np.ndarray) -> np.ndarray:
    if callable(zeta):
        return np.array([zeta(t) for t in times], dtype=float)
    z = np.asarray(zeta, dtype=float)
    if z.ndim == 0:
        return np.full(len(times), float(z))
    if z.shape != times.shape:
        raise ValidationError(
            f"signal has {z.shape[0]} samples but the grid has {times.shape[0]} nodes"
        )
    return z


def _rk4(rhs: Callable[[float, float], float], y0: float, times: np.ndarray) -> np.ndarray:
    y = np.empty(len(times))
    y[0] = y0
    for k in range(len(times) - 1):
        t, h = times[k], times[k + 1] - times[k]
        k1 = rhs(t, y[k])
        k2 = rhs(t + h / 2, y[k] + h / 2 * k1)
        k3 = rhs(t + h / 2, y[k] + h / 2 * k2)
        k4 = rhs(t + h, y[k] + h * k3)
        y[k + 1] = y[k] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _euler(rhs, y0, times):
    y = np.empty(len(times))
    y[0] = y0
    for k in range(len(times) - 1):
        y[k + 1] = y[k] + (times[k + 1] - times[k]) * rhs(times[k], y[k])
    return y


_INTEGRATORS = {"rk4": _rk4, "euler": _euler}


def _integrator(method: str):
    try:
        return _INTEGRATORS[method]
    except KeyError:
        raise ValidationError(f"unknown integrator {method!r}; use one of {sorted(_INTEGRATORS)}")


def solve_static_lq(
    eta0: float,
    zeta: float,
    alpha: float,
    horizon: float,
    steps: int,
    method: str = "rk4",
) -> LqSolution:
    """Integrate the closed-loop law ``u = -f(t) (eta - zeta) / alpha``."""
    _check_positive(alpha=alpha, horizon=horizon)
    times = _grid(horizon, steps)
    sched = ControlSchedule(alpha, horizon)
    state = _integrator(method)(lambda t, y: -sched.feedback_rate(t) * (y - zeta), eta0, times)
    control = np.array([-sched.feedback_rate(t) for t in times]) * (state - zeta)
    z = np.full(len(times), float(zeta))
    cost = _grid_cost(times, state, control, z, alpha)
    return LqSolution(times, state, control, z, cost, alpha, horizon)


def static_lq_state(eta0: float, zeta: float, alpha: float, horizon: float, t) -> np.ndarray:
    """Closed-form optimal state for constant tracking signal."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    phi = np.array([transition(alpha, horizon, ti) for ti in t])
    return phi * eta0 + (1.0 - phi) * zeta


def solve_tracking_lq(
    eta0: float,
    zeta,
    alpha: float,
    steps: int,
    horizon: float,
    method: str = "rk4",
) -> LqSolution:
    """Optimal tracking of a sampled signal via ``u = -(f eta + g) / alpha``.

    ``zeta`` is sampled on the uniform ``steps``-step grid over ``[0, T]``
    (or given as a callable) and treated as piecewise linear between nodes.
    The feedforward term obeys ``g' = zeta + f g / alpha`` with ``g(T) = 0``
    and is integrated backward with RK4 on the half-step grid, so the
    forward RK4 pass finds it at every stage point.
    """
    _check_positive(alpha=alpha, horizon=horizon)
    integrate = _integrator(method)
    times = _grid(horizon, steps)
    z = _signal(zeta, times)
    sched = ControlSchedule(alpha, horizon)

    fine = np.linspace(0.0, horizon, 2 * steps + 1)
    # reversed time r = T - t turns the terminal condition into an initial one
    back = lambda r, g: -(np.interp(horizon - r, times, z) + sched.gain(horizon - r) * g / alpha)  # noqa: E731
    g = _rk4(back, 0.0, horizon - fine[::-1])[::-1]
    f = np.array([sched.gain(t) for t in fine])

    def rhs(t, y):
        k = int(round(t / horizon * 2 * steps))
        return -(f[k] * y + g[k]) / alpha

    state = integrate(rhs, float(eta0), times)
    control = -(f[::2] * state + g[::2]) / alpha
    cost = _grid_cost(times, state, control, z, alpha)
    return LqSolution(times, state, control, z, cost, alpha, horizon)


def _oracle_system(eta0, z, alpha, dt):
    """Tridiagonal normal equations in (eta_1..eta_N), halved gradient form.

    Objective: sum_k w_k (z_k - eta_k)^2 + (alpha / dt) sum_k (eta_{k+1} - eta_k)^2
    with trapezoid weights ``w``; ``eta_0`` is fixed.
    """
    n = len(z) - 1
    w = np.full(n + 1, dt)
    w[0] = w[-1] = dt / 2
    c = alpha / dt
    diag = w[1:] + 2 * c
    diag[-1] = w[-1] + c
    off = np.full(n - 1, -c)
    rhs = w[1:] * z[1:]
    rhs[0] += c * eta0
    return diag, off, rhs


def _tridiag_matvec(diag, off, x):
    y = diag * x
    y[:-1] += off * x[1:]
    y[1:] += off * x[:-1]
    return y


def oracle_residual(sol: LqSolution) -> float:
    """Sup norm of the first-order optimality residual (gradient / 2)."""
    dt = sol.times[1] - sol.times[0]
    diag, off, rhs = _oracle_system(sol.state[0], sol.zeta, sol.alpha, dt)
    return float(np.max(np.abs(_tridiag_matvec(diag, off, sol.state[1:]) - rhs)))


def lq_qp_oracle(eta0: float, zeta, alpha: float, steps: int, horizon: float = 1.0) -> LqSolution:
    """Exact optimum of the discretized problem.

    Controls are held constant on each interval, so ``eta_{k+1} = eta_k +
    dt u_k`` is exact and the effort integral is ``sum dt u_k^2``; the
    tracking integral uses trapezoid weights. The optimality conditions
    form a symmetric positive definite tridiagonal system in the states,
    solved directly plus one step of iterative refinement.
    """
    _check_positive(alpha=alpha, horizon=horizon)
    if steps < 2:
        raise ValidationError("oracle grid needs at least two steps")
    times = _grid(horizon, steps)
    z = _signal(zeta, times)
    dt = horizon / steps
    diag, off, rhs = _oracle_system(float(eta0), z, alpha, dt)
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    x = solve_banded((1, 1), ab, rhs)
    x += solve_banded((1, 1), ab, rhs - _tridiag_matvec(diag, off, x))
    if not np.all(np.isfinite(x)):
        raise NumericalInvariantError("oracle system is singular")
    state = np.concatenate([[float(eta0)], x])
    control = np.diff(state) / dt
    cost = _grid_cost(times, state, control, z, alpha)
    return LqSolution(times, state, control, z, cost, alpha, horizon)


def analytic_cost_scalar(eta0: float, zeta: float, alpha: float, horizon: float) -> CostPair:
    """Optimal static-tracking cost, adopted constant and the literal 1/2 form."""
    _check_positive(alpha=alpha, horizon=horizon)
    base = (zeta - eta0) ** 2 * math.sqrt(alpha) * math.tanh(horizon / math.sqrt(alpha))
    pair = CostPair(COST_CONSTANT * base, HALF_COST_CONSTANT * base)
    if pair.discrepancy:
        logger.debug("static LQ cost: adopted %.12g vs half-constant form %.12g", *pair)
    return pair


def resolve_cost_constant(steps: int = 10_000) -> float:
    """Pick the constant in {1/2, 1} closest to the QP oracle's cost.

    Reference instance: eta0 = 0, zeta = 1, alpha = 1, T = 1.
    """
    oracle = lq_qp_oracle(0.0, 1.0, 1.0, steps, horizon=1.0).cost
    base = math.tanh(1.0)
    return min((0.5, 1.0), key=lambda c: abs(c * base - oracle))
