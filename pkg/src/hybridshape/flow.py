"""Classical RK4 integration of point flows and its gradients.

Two gradient routes are provided: discrete backpropagation through the stored
RK4 stages (exact for the integrator actually run, the default) and the
continuous adjoint ODE solved backward in time with the same RK4 scheme
(O(1) memory in the number of steps).  The two agree to ~1e-3 relative on
smooth fields at the default step size and converge to each other as h -> 0.

Any object with evaluate(points)->velocities and vjp(points, cotangents)->
(point_cotangents, parameter_cotangents) can be integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FlowTrajectory", "integrate", "integrate_grad", "invertibility_check"]


@dataclass
class FlowTrajectory:
    """Initial points, per-step RK4 stage inputs (when recorded), final points."""

    initial: np.ndarray
    final: np.ndarray
    t0: float
    t1: float
    step_sizes: list
    positions: list  # x at each step boundary, len n_steps + 1
    stage_inputs: list | None  # per step: (y1, y2, y3, y4), or None if not recorded

    @property
    def n_steps(self) -> int:
        return len(self.step_sizes)


def _plan_steps(t0: float, t1: float, h: float) -> list:
    """Full steps of size +/-h, final step truncated when h does not divide t1-t0."""
    span = t1 - t0
    if h <= 0:
        raise ValueError("step size must be positive")
    if span == 0:
        return []
    step = h if span > 0 else -h
    n_full = int(abs(span) / h + 1e-12)
    steps = [step] * n_full
    rem = span - n_full * step
    if abs(rem) > 1e-12:
        steps.append(rem)
    return steps


def integrate(field, points, t0: float = 0.0, t1: float = 1.0, h: float = 0.2,
              record: bool = False) -> FlowTrajectory:
    """Flow points through the field from t0 to t1 with classical RK4.

    Reverse integration (t1 < t0) negates the step internally.  Raises on
    non-finite velocities ("velocity blow-up").
    """
    x = np.ascontiguousarray(points, dtype=np.float64)
    steps = _plan_steps(t0, t1, h)
    positions = [x]
    stages = [] if record else None
    for dt in steps:
        y1 = x
        k1 = field.evaluate(y1)
        y2 = x + 0.5 * dt * k1
        k2 = field.evaluate(y2)
        y3 = x + 0.5 * dt * k2
        k3 = field.evaluate(y3)
        y4 = x + dt * k3
        k4 = field.evaluate(y4)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("velocity blow-up")
        positions.append(x)
        if record:
            stages.append((y1, y2, y3, y4))
    return FlowTrajectory(
        initial=positions[0],
        final=positions[-1],
        t0=t0,
        t1=t1,
        step_sizes=steps,
        positions=positions,
        stage_inputs=stages,
    )


def _zeros_like_params(field):
    return [np.zeros_like(p) for p in field.parameters]


def _accumulate(acc, extra, factor=1.0):
    for a, e in zip(acc, extra):
        a += factor * e
    return acc


def integrate_grad(field, cotangents, trajectory: FlowTrajectory | None = None,
                   points=None, t0: float = 0.0, t1: float = 1.0, h: float = 0.2,
                   mode: str = "backprop"):
    """Gradients of a scalar loss on the final points w.r.t. field parameters.

    mode="backprop" walks the recorded RK4 stages in reverse (exact for the
    discrete integrator; requires a trajectory from integrate(..., record=True)).
    mode="adjoint" solves the continuous adjoint ODE backward with RK4 on the
    augmented state (position, adjoint, parameter accumulator).

    Returns (parameter_gradients, initial_point_gradients).
    """
    cot = np.ascontiguousarray(cotangents, dtype=np.float64)
    if mode == "backprop":
        if trajectory is None or trajectory.stage_inputs is None:
            raise ValueError("mode 'backprop' needs a trajectory recorded with record=True")
        return _grad_backprop(field, trajectory, cot)
    if mode == "adjoint":
        if trajectory is not None:
            points = trajectory.final
            t0, t1, h = trajectory.t0, trajectory.t1, abs(trajectory.step_sizes[0])
        elif points is None:
            raise ValueError("mode 'adjoint' needs either a trajectory or final points")
        else:
            points = integrate(field, points, t0, t1, h).final
        return _grad_adjoint(field, points, cot, t0, t1, h)
    raise ValueError(f"unknown gradient mode {mode!r}")


def _grad_backprop(field, trajectory: FlowTrajectory, cot: np.ndarray):
    theta = _zeros_like_params(field)
    x_bar = cot.copy()
    for dt, (y1, y2, y3, y4) in zip(
        reversed(trajectory.step_sizes), reversed(trajectory.stage_inputs)
    ):
        k1_bar = (dt / 6.0) * x_bar
        k2_bar = (dt / 3.0) * x_bar
        k3_bar = (dt / 3.0) * x_bar
        k4_bar = (dt / 6.0) * x_bar

        y4_bar, p4 = field.vjp(y4, k4_bar)
        _accumulate(theta, p4)
        k3_bar = k3_bar + dt * y4_bar

        y3_bar, p3 = field.vjp(y3, k3_bar)
        _accumulate(theta, p3)
        k2_bar = k2_bar + 0.5 * dt * y3_bar

        y2_bar, p2 = field.vjp(y2, k2_bar)
        _accumulate(theta, p2)
        k1_bar = k1_bar + 0.5 * dt * y2_bar

        y1_bar, p1 = field.vjp(y1, k1_bar)
        _accumulate(theta, p1)

        x_bar = x_bar + y1_bar + y2_bar + y3_bar + y4_bar
    return theta, x_bar


def _grad_adjoint(field, final_points: np.ndarray, cot: np.ndarray,
                  t0: float, t1: float, h: float):
    """Backward RK4 on the augmented system (x, a, g): dx=v, da=-a^T dv/dx, dg=-a^T dv/dtheta."""

    def rhs(state):
        x, a, _ = state
        v = field.evaluate(x)
        x_bar, p_bar = field.vjp(x, a)
        return (v, -x_bar, [-p for p in p_bar])

    def add(state, delta, factor):
        x, a, g = state
        dx, da, dg = delta
        return (
            x + factor * dx,
            a + factor * da,
            [gi + factor * di for gi, di in zip(g, dg)],
        )

    state = (final_points.copy(), cot.copy(), _zeros_like_params(field))
    for dt in reversed(_plan_steps(t0, t1, h)):
        dt = -dt
        k1 = rhs(state)
        k2 = rhs(add(state, k1, 0.5 * dt))
        k3 = rhs(add(state, k2, 0.5 * dt))
        k4 = rhs(add(state, k3, dt))
        state = add(state, k1, dt / 6.0)
        state = add(state, k2, dt / 3.0)
        state = add(state, k3, dt / 3.0)
        state = add(state, k4, dt / 6.0)
    _, a0, g = state
    return g, a0


def invertibility_check(field, points, h: float = 0.2) -> float:
    """Max round-trip error of flowing 0 -> 1 then 1 -> 0."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    fwd = integrate(field, pts, 0.0, 1.0, h)
    back = integrate(field, fwd.final, 1.0, 0.0, h)
    return float(np.max(np.linalg.norm(back.final - pts, axis=1)))
