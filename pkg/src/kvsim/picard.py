"""Outer time loop and per-step successive-approximation iteration.

Each time step freezes the nonlinearity at the previous iterate and solves
the two linear sub-problems in turn:

1. velocity solve with frozen (u, theta), then the displacement update
   ``u_new = u_old + dt * v_new`` (which keeps the discrete compatibility
   d(eps)/dt = eps(v_new) exact),
2. heat solve with the frozen temperature coefficient and the previous
   iterate's strain rate.

The zeroth iterate is the constant-in-time extension of the step's initial
data.  Iteration stops when the difference norm

    Y = ||v_new - v_prev||_L2 + ||theta_new - theta_prev||_L2

falls below ``picard_tol`` relative to the first difference norm (with a
round-off floor), mirroring the contraction that makes the scheme converge
for small dt.  The iteration aborts rather than accept a temperature at or
below the configured floor.

The time loop is strictly sequential; observers receive immutable
snapshots and must not mutate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import linear_step
from .errors import DegeneracyError, DomainError, NonConvergenceError, UsageError
from .grid import (
    Grid,
    ScalarField,
    VectorField,
    boundary_max_abs,
    integrate,
    lp_norm,
)


@dataclass
class SimState:
    """One time slice: displacement, velocity, temperature at time ``t``."""

    t: float
    u: VectorField
    v: VectorField
    theta: ScalarField

    @property
    def grid(self):
        return self.u.grid

    def copy(self):
        return SimState(self.t, self.u.copy(), self.v.copy(), self.theta.copy())

    def validate(self):
        for name, fld in (("u", self.u), ("v", self.v)):
            worst = boundary_max_abs(fld)
            if worst != 0.0:
                raise UsageError(
                    f"{name} must vanish exactly on the boundary, "
                    f"max boundary magnitude {worst:.3e}"
                )
        theta_min = float(np.min(self.theta.data))
        if theta_min <= 0.0:
            raise DomainError(f"temperature must be positive, min = {theta_min}")
        for name, fld in (("u", self.u), ("v", self.v), ("theta", self.theta)):
            if not np.all(np.isfinite(fld.data)):
                raise DomainError(f"state field {name} contains non-finite values")
        return self

    @classmethod
    def rest(cls, grid, theta0=1.0, t=0.0):
        """State at rest with uniform temperature."""
        return cls(
            t=t,
            u=VectorField.zeros(grid),
            v=VectorField.zeros(grid),
            theta=ScalarField.constant(grid, theta0),
        )


@dataclass(frozen=True)
class StepperConfig:
    """Numerical knobs of the time stepper."""

    dt: float
    picard_tol: float = 1e-10
    picard_max: int = 50
    cg_tol: float = 1e-12
    cg_max: int = 20000
    theta_floor: Optional[float] = None  # None = half the step's initial minimum

    def __post_init__(self):
        problems = []
        if not self.dt > 0.0:
            problems.append(f"dt = {self.dt} must be positive")
        if not self.picard_tol > 0.0:
            problems.append(f"picard_tol = {self.picard_tol} must be positive")
        if self.picard_max < 1:
            problems.append(f"picard_max = {self.picard_max} must be >= 1")
        if not self.cg_tol > 0.0:
            problems.append(f"cg_tol = {self.cg_tol} must be positive")
        if self.cg_max < 1:
            problems.append(f"cg_max = {self.cg_max} must be >= 1")
        if self.theta_floor is not None and not self.theta_floor > 0.0:
            problems.append(f"theta_floor = {self.theta_floor} must be positive")
        if problems:
            raise UsageError("; ".join(problems))


@dataclass
class PicardTrace:
    """Contraction diagnostics of one step's successive approximations.

    ``ys`` holds the iterate difference norms that drive the stopping rule;
    ``sizes`` holds the iterate magnitudes ||v|| + ||theta|| (their uniform
    boundedness along the sweep is what keeps the iteration well posed).
    """

    ys: list
    sizes: list
    converged: bool
    iterations: int
    threshold: float

    def ratios(self):
        """Contraction ratios Y_{n+1} / Y_n (skipping zero denominators)."""
        out = []
        for a, b in zip(self.ys[:-1], self.ys[1:]):
            if a > 0.0:
                out.append(b / a)
        return out


@dataclass
class PicardIterate:
    """One sweep's frozen fields (u, v, theta)."""

    u: VectorField
    v: VectorField
    theta: ScalarField


def initial_iterate(state):
    """Zeroth iterate: constant-in-time extension of the step's initial data.

    Shares the state's arrays (the sweep never mutates them), so the fields
    are bitwise equal to the state fields and inherit its boundary values.
    """
    return PicardIterate(u=state.u, v=state.v, theta=state.theta)


class Stepper:
    """Caches the assembly work that is constant across a run.

    The velocity matrix depends only on (grid, dt, viscosity pair) and the
    Neumann stiffness only on the grid, so both are built once.
    """

    def __init__(self, grid, params, config):
        self.grid = grid
        self.params = params
        self.config = config
        self.velocity_op = linear_step.velocity_matrix(
            grid, config.dt, params.lambda1, params.mu1
        )
        self.stiffness = linear_step.heat_stiffness(grid)

    def _solve_velocity(self, rhs, x0):
        x, report = linear_step.solve_spd(
            self.velocity_op, rhs, tol=self.config.cg_tol,
            max_iter=self.config.cg_max, x0=x0,
        )
        return linear_step.unpack_interior(self.grid, x), report

    def _solve_heat(self, state, iterate, g):
        op = linear_step.heat_matrix(
            self.grid, self.config.dt, iterate.theta, self.params,
            stiffness=self.stiffness,
        )
        rhs = linear_step.heat_rhs_vector(
            self.grid, self.config.dt, state.theta, iterate.theta,
            iterate.v, g, self.params,
        )
        x, report = linear_step.solve_spd(
            op, rhs, tol=self.config.cg_tol, max_iter=self.config.cg_max,
            x0=iterate.theta.data.ravel(),
        )
        return linear_step.scalar_field_from_solution(self.grid, x), report

    def sweep(self, state, iterate, b, g):
        """One successive-approximation sweep; returns the next iterate."""
        grid, dt = self.grid, self.config.dt
        rhs_v = linear_step.velocity_rhs(
            grid, dt, state.v, iterate.u, iterate.theta, b, self.params
        )
        v_new, _ = self._solve_velocity(
            rhs_v, linear_step.pack_interior(grid, iterate.v.data)
        )
        u_new = VectorField(grid, state.u.data + dt * v_new.data)
        theta_new, _ = self._solve_heat(state, iterate, g)
        return PicardIterate(u=u_new, v=v_new, theta=theta_new)

    def step(self, state, b=None, g=None):
        """Advance one time step; returns (new state, Picard trace)."""
        cfg = self.config
        floor = cfg.theta_floor
        if floor is None:
            floor = 0.5 * float(np.min(state.theta.data))
        if float(np.min(state.theta.data)) < floor:
            raise DegeneracyError(
                f"initial temperature of the step is below the floor "
                f"{floor}: min = {float(np.min(state.theta.data))}"
            )
        scale = lp_norm(state.theta, 2) + self._vector_l2(state.v)
        iterate = initial_iterate(state)
        ys = []
        sizes = []
        threshold = None
        for sweep_count in range(1, cfg.picard_max + 1):
            new = self.sweep(state, iterate, b, g)
            theta_min = float(np.min(new.theta.data))
            if theta_min < floor:
                raise DegeneracyError(
                    f"temperature iterate dropped below the floor {floor} "
                    f"(min = {theta_min}) at sweep {sweep_count}"
                )
            y = self._vector_l2_diff(new.v, iterate.v) + self._theta_l2_diff(
                new.theta, iterate.theta
            )
            ys.append(y)
            sizes.append(self._vector_l2(new.v) + lp_norm(new.theta, 2))
            iterate = new
            if threshold is None:
                # relative stopping rule, with a round-off floor so a step
                # that starts at a fixed point is accepted immediately
                threshold = max(cfg.picard_tol * ys[0], 1e-14 * (1.0 + scale))
                if ys[0] == 0.0:
                    trace = PicardTrace(ys, sizes, True, sweep_count, threshold)
                    return self._accept(state, iterate, trace)
            if y <= threshold:
                trace = PicardTrace(ys, sizes, True, sweep_count, threshold)
                return self._accept(state, iterate, trace)
        trace = PicardTrace(ys, sizes, False, cfg.picard_max, threshold or 0.0)
        raise NonConvergenceError(
            f"successive approximations did not contract below "
            f"{trace.threshold:.3e} within {cfg.picard_max} sweeps "
            f"(last Y = {ys[-1]:.3e})",
            report=trace,
        )

    def _accept(self, state, iterate, trace):
        new_state = SimState(
            t=state.t + self.config.dt,
            u=iterate.u, v=iterate.v, theta=iterate.theta,
        )
        return new_state, trace

    def _vector_l2(self, vec):
        return math.sqrt(
            integrate(ScalarField(self.grid, np.sum(vec.data**2, axis=-1)))
        )

    def _vector_l2_diff(self, a, b):
        diff = a.data - b.data
        return math.sqrt(
            integrate(ScalarField(self.grid, np.sum(diff**2, axis=-1)))
        )

    def _theta_l2_diff(self, a, b):
        diff = a.data - b.data
        return math.sqrt(integrate(ScalarField(self.grid, diff**2)))


def picard_step(state, params, config, b=None, g=None):
    """Single-step convenience wrapper around :class:`Stepper`."""
    state.validate()
    return Stepper(state.grid, params, config).step(state, b=b, g=g)


@dataclass
class Sources:
    """Time-dependent body force and heat source bound to a grid.

    Either callable may be None, meaning identically zero.
    """

    b: Optional[Callable[[float], VectorField]] = None
    g: Optional[Callable[[float], ScalarField]] = None

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def constant(cls, grid, b_value=None, g_value=None):
        b_fn = None
        if b_value is not None and np.any(np.asarray(b_value) != 0.0):
            b_data = np.broadcast_to(
                np.asarray(b_value, dtype=float), grid.shape + (grid.d,)
            ).copy()
            b_fn = lambda t, f=VectorField(grid, b_data): f  # noqa: E731
        g_fn = None
        if g_value is not None and g_value != 0.0:
            g_fn = lambda t, f=ScalarField.constant(grid, g_value): f  # noqa: E731
        return cls(b=b_fn, g=g_fn)


@dataclass
class StepEvent:
    """Snapshot handed to observers after each accepted step."""

    index: int
    state_old: SimState
    state_new: SimState
    trace: PicardTrace
    b: Optional[VectorField]
    g: Optional[ScalarField]
    dt: float


@dataclass
class Trajectory:
    """All accepted states of a run plus per-step bookkeeping."""

    grid: Grid
    params: object
    config: StepperConfig
    states: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    b_max_abs: list = field(default_factory=list)
    g_min: list = field(default_factory=list)
    g_max_abs: list = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def source_free(self):
        return (
            all(v == 0.0 for v in self.b_max_abs)
            and all(v == 0.0 for v in self.g_max_abs)
        )


def run(initial, params, config, t_end, sources=None, observers=()):
    """Advance ``initial`` to ``t_end`` by repeated Picard steps.

    Observers are invoked with a :class:`StepEvent` after every accepted
    step.  Fails fast on any step error.  Returns the trajectory (all
    states, including the initial one).
    """
    initial.validate()
    if not t_end > initial.t:
        raise UsageError(f"t_end = {t_end} must exceed initial time {initial.t}")
    if sources is None:
        sources = Sources.none()
    span = t_end - initial.t
    n_steps = max(1, math.ceil(span / config.dt - 1e-9))
    floor = config.theta_floor
    if floor is None:
        floor = 0.5 * float(np.min(initial.theta.data))
    config = replace(config, theta_floor=floor)
    stepper = Stepper(initial.grid, params, config)
    short_stepper = None

    traj = Trajectory(grid=initial.grid, params=params, config=config)
    traj.states.append(initial)
    state = initial
    for k in range(n_steps):
        t_new = initial.t + (k + 1) * config.dt
        active = stepper
        if t_new > t_end + 1e-12 * max(1.0, abs(t_end)):
            # shortened final step to land exactly on t_end
            dt_last = t_end - state.t
            short_stepper = Stepper(
                initial.grid, params, replace(config, dt=dt_last)
            )
            active = short_stepper
            t_new = t_end
        b_field = sources.b(t_new) if sources.b is not None else None
        g_field = sources.g(t_new) if sources.g is not None else None
        new_state, trace = active.step(state, b=b_field, g=g_field)
        traj.states.append(new_state)
        traj.traces.append(trace)
        traj.b_max_abs.append(
            float(np.max(np.abs(b_field.data))) if b_field is not None else 0.0
        )
        traj.g_min.append(
            float(np.min(g_field.data)) if g_field is not None else 0.0
        )
        traj.g_max_abs.append(
            float(np.max(np.abs(g_field.data))) if g_field is not None else 0.0
        )
        for observer in observers:
            observer(StepEvent(
                index=k, state_old=state, state_new=new_state, trace=trace,
                b=b_field, g=g_field, dt=active.config.dt,
            ))
        state = new_state
    return traj
