"""Initial value problem integration with exact landing on output times.

The driver is an adaptive embedded Runge-Kutta 5(4) pair (Dormand-Prince
coefficients) with proportional-integral step control and first-same-as-last
stage reuse.  Integration steps are truncated so that every requested output
time is hit exactly by a step endpoint; states are never interpolated.

A fixed-step classical RK4 integrator is included as an independent
cross-check backend, together with a helper that evaluates the right-hand
side along a stored trajectory (used for derivative snapshots).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError, RhsEvaluationError, StiffnessError
from .linalg import as_vector

__all__ = [
    "OdeSystem",
    "Trajectory",
    "integrate",
    "integrate_rk4",
    "sample_rhs",
]


@dataclass(frozen=True)
class OdeSystem:
    """First-order system x' = f(t, x) of a fixed dimension.

    ``linear_matrix`` and ``affine_term`` may be attached when the system is
    known to have the form x' = A x + b(t); integration itself only ever
    calls ``rhs``, the extra fields feed the error-bound machinery.
    """

    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    linear_matrix: Optional[np.ndarray] = None
    affine_term: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self) -> None:
        dim = int(self.dimension)
        if dim < 1:
            raise InvalidInputError(f"dimension must be >= 1, got {self.dimension}")
        object.__setattr__(self, "dimension", dim)
        if not callable(self.rhs):
            raise InvalidInputError("rhs must be callable")
        if self.linear_matrix is not None:
            matrix = np.array(self.linear_matrix, dtype=float)
            if matrix.shape != (dim, dim):
                raise InvalidInputError(
                    f"linear_matrix must be {dim}x{dim}, got shape {matrix.shape}"
                )
            if not np.all(np.isfinite(matrix)):
                raise InvalidInputError("linear_matrix contains non-finite entries")
            object.__setattr__(self, "linear_matrix", matrix)
        if self.affine_term is not None and not callable(self.affine_term):
            raise InvalidInputError("affine_term must be callable or None")


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution: ``states[i]`` is the state vector at ``times[i]``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise InvalidInputError("times must be a nonempty 1-D array")
        if not np.all(np.isfinite(times)):
            raise InvalidInputError("times contains non-finite entries")
        if times.size > 1 and not np.all(np.diff(times) > 0.0):
            raise InvalidInputError("times must be strictly increasing")
        if states.ndim != 2 or states.shape[0] != times.size:
            raise InvalidInputError(
                f"states must be 2-D with one row per time, got shape {states.shape}"
            )
        if not np.all(np.isfinite(states)):
            raise InvalidInputError("states contains non-finite entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def dimension(self) -> int:
        return int(self.states.shape[1])


def _eval_rhs(system: OdeSystem, t: float, x: np.ndarray) -> np.ndarray:
    value = np.asarray(system.rhs(t, x), dtype=float)
    if value.shape != (system.dimension,):
        raise InvalidInputError(
            f"rhs returned shape {value.shape}, expected ({system.dimension},)"
        )
    return value


# Dormand-Prince 5(4) tableau.  The seventh stage sits at the step endpoint
# and doubles as the first stage of the following step (FSAL).
_RK_C = (0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_RK_A = (
    np.array([]),
    np.array([0.2]),
    np.array([3.0 / 40.0, 9.0 / 40.0]),
    np.array([44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0]),
    np.array([19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0]),
    np.array(
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0]
    ),
    np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0]),
)
# Difference between the fifth- and fourth-order weight rows.
_RK_ERR = np.array(
    [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ]
)

_SAFETY = 0.9
_PI_ALPHA = 0.14
_PI_BETA = 0.08
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def integrate(
    system: OdeSystem,
    x0: np.ndarray,
    t0: float,
    t1: float,
    rel_tol: float,
    abs_tol: float,
    output_times,
) -> Trajectory:
    """Integrate ``system`` from ``t0`` to the last requested output time.

    The returned trajectory holds exactly ``output_times`` (bit-for-bit) and
    the states the integrator produced there.  Steps are shortened so each
    output time coincides with a step endpoint.  The local error per step is
    controlled in a scaled RMS norm with per-component scale
    ``abs_tol + rel_tol * max(|x_old|, |x_new|)``.

    Raises :class:`StiffnessError` when the controller drives the step below
    ``1e-14 * (t1 - t0)`` (persistently failing trial steps end up here too)
    and :class:`RhsEvaluationError` when the right-hand side is non-finite
    at the initial state.
    """
    t0 = float(t0)
    t1 = float(t1)
    if not (math.isfinite(t0) and math.isfinite(t1)) or not t0 < t1:
        raise InvalidInputError(f"need t0 < t1, got t0={t0!r}, t1={t1!r}")
    rel_tol = float(rel_tol)
    abs_tol = float(abs_tol)
    if not (rel_tol > 0.0 and abs_tol > 0.0):
        raise InvalidInputError("tolerances must be positive")
    state = as_vector(x0, "x0")
    n = system.dimension
    if state.shape != (n,):
        raise InvalidInputError(f"x0 has length {state.size}, system dimension is {n}")
    out = np.array(output_times, dtype=float)
    if out.ndim != 1 or out.size == 0:
        raise InvalidInputError("output_times must be a nonempty 1-D array")
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("output_times contains non-finite entries")
    if out.size > 1 and not np.all(np.diff(out) > 0.0):
        raise InvalidInputError("output_times must be strictly increasing")
    if out[0] < t0 or out[-1] > t1:
        raise InvalidInputError("output_times must lie within [t0, t1]")

    span = t1 - t0
    min_step = 1e-14 * span
    # Safety net for sub-ulp overshoot of an accumulating step endpoint.
    snap_tol = 32.0 * np.finfo(float).eps * max(abs(t0), abs(t1), 1.0)

    stages = np.empty((7, n))
    stages[0] = _eval_rhs(system, t0, state)
    if not np.all(np.isfinite(stages[0])):
        raise RhsEvaluationError(f"rhs is not finite at t={t0!r}")

    states_out = np.empty((out.size, n))
    index = 0
    if out[0] == t0:
        states_out[0] = state
        index = 1

    t = t0
    h = 1e-6 * span
    prev_err = 1e-4
    just_rejected = False

    while index < out.size:
        target = float(out[index])
        remaining = target - t
        if remaining <= snap_tol:
            t = target
            states_out[index] = state
            index += 1
            continue
        if h < min_step:
            raise StiffnessError(f"step size underflow at t={t!r}", t=t)
        h_step = h if h < remaining else remaining
        if t + h_step == t:
            raise StiffnessError(f"step size below time resolution at t={t!r}", t=t)
        landing = h_step >= remaining

        for i in range(1, 6):
            stages[i] = _eval_rhs(
                system, t + _RK_C[i] * h_step, state + h_step * (_RK_A[i] @ stages[:i])
            )
        trial = state + h_step * (_RK_A[6] @ stages[:6])
        t_end = target if landing else t + h_step
        stages[6] = _eval_rhs(system, t_end, trial)

        err_vec = h_step * (_RK_ERR @ stages)
        scale = abs_tol + rel_tol * np.maximum(np.abs(state), np.abs(trial))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))

        if not math.isfinite(err):
            h = h_step * _MIN_FACTOR
            just_rejected = True
            continue
        if err > 1.0:
            h = h_step * min(max(_SAFETY * err**-0.2, 0.1), 1.0)
            just_rejected = True
            continue

        state = trial
        t = t_end
        stages[0] = stages[6]
        if landing:
            states_out[index] = state
            index += 1

        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = _SAFETY * err**-_PI_ALPHA * prev_err**_PI_BETA
            factor = min(max(factor, _MIN_FACTOR), _MAX_FACTOR)
        if just_rejected:
            factor = min(factor, 1.0)
        just_rejected = False
        prev_err = max(err, 1e-10)
        h = h_step * factor

    return Trajectory(times=out, states=states_out)


def integrate_rk4(
    system: OdeSystem, x0: np.ndarray, t0: float, t1: float, num_steps: int
) -> Trajectory:
    """Fixed-step classical RK4 over a uniform grid; cross-check backend."""
    t0 = float(t0)
    t1 = float(t1)
    if not (math.isfinite(t0) and math.isfinite(t1)) or not t0 < t1:
        raise InvalidInputError(f"need t0 < t1, got t0={t0!r}, t1={t1!r}")
    num_steps = int(num_steps)
    if num_steps < 1:
        raise InvalidInputError(f"num_steps must be >= 1, got {num_steps}")
    state = as_vector(x0, "x0")
    n = system.dimension
    if state.shape != (n,):
        raise InvalidInputError(f"x0 has length {state.size}, system dimension is {n}")

    times = np.linspace(t0, t1, num_steps + 1)
    states = np.empty((num_steps + 1, n))
    states[0] = state
    for i in range(num_steps):
        t = float(times[i])
        h = float(times[i + 1]) - t
        k1 = _eval_rhs(system, t, state)
        k2 = _eval_rhs(system, t + 0.5 * h, state + (0.5 * h) * k1)
        k3 = _eval_rhs(system, t + 0.5 * h, state + (0.5 * h) * k2)
        k4 = _eval_rhs(system, float(times[i + 1]), state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise RhsEvaluationError(f"state became non-finite at t={times[i + 1]!r}")
        states[i + 1] = state
    return Trajectory(times=times, states=states)


def sample_rhs(system: OdeSystem, trajectory: Trajectory) -> np.ndarray:
    """Evaluate the right-hand side at every trajectory sample.

    Returns an n x m matrix whose column j is f(times[j], states[j]).
    """
    if trajectory.dimension != system.dimension:
        raise InvalidInputError(
            f"trajectory dimension {trajectory.dimension} does not match "
            f"system dimension {system.dimension}"
        )
    m = trajectory.times.size
    columns = np.empty((system.dimension, m))
    for j in range(m):
        value = _eval_rhs(system, float(trajectory.times[j]), trajectory.states[j])
        if not np.all(np.isfinite(value)):
            raise RhsEvaluationError(f"rhs is not finite at t={trajectory.times[j]!r}")
        columns[:, j] = value
    return columns
