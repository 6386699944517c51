"""Per-step monitors and post-hoc analyses of the thermodynamic structure.

Everything with a discrete realization is checked here:

* balance of the total energy (kinetic + elastic + thermal) against the
  work of the sources,
* balance of the entropy against the nonnegative entropy production,
* the availability functional  integral(e + |u_t|^2/2 - beta*eta), which is
  a Lyapunov functional on source-free solution paths,
* the exponential-in-time lower bound on the temperature,
* the Gronwall continuous-dependence envelope for pairs of runs,
* mixed space-time norms used as regularity monitors.

All residuals are relative with a +1 absolute floor, so resting states do
not divide by zero.  Functions here are pure, operate on immutable
snapshots, and reduce in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from . import constitutive as cons
from .errors import DomainError, UsageError
from .grid import (
    ScalarField,
    SymTensorField,
    integrate,
    laplacian_neumann,
    lp_norm,
    sym_gradient,
    tensor_magnitude,
)


@dataclass
class DiagnosticsRecord:
    """Scalar outputs of one accepted step (field order fixes the CSV schema)."""

    t: float
    kinetic_energy: float
    elastic_energy: float
    thermal_energy: float
    total_energy: float
    entropy: float
    availability: float
    theta_min: float
    theta_max: float
    entropy_production: float
    energy_residual: float
    entropy_residual: float
    clausius_duhem_defect: float
    grad_theta_dissipation: float
    strain_rate_dissipation: float
    picard_iterations: int


CSV_FIELDS = tuple(f.name for f in dataclass_fields(DiagnosticsRecord))


# ---------------------------------------------------------------------------
# pointwise helpers
# ---------------------------------------------------------------------------

def _grad_scalar(theta):
    grid = theta.grid
    grads = [
        np.gradient(theta.data, grid.h[a], axis=a, edge_order=2)
        for a in range(grid.d)
    ]
    return np.stack(grads, axis=-1)


def _speed_squared(vec):
    return ScalarField(vec.grid, np.sum(vec.data**2, axis=-1))


def kinetic_energy(state):
    return 0.5 * integrate(_speed_squared(state.v))


def elastic_energy(state, params):
    eps = sym_gradient(state.u)
    stress = cons.apply_isotropic(params.lambda2, params.mu2, eps.data)
    return 0.5 * integrate(ScalarField(state.grid, cons.ddot(stress, eps.data)))


def thermal_energy(state, params):
    return 0.5 * params.cv * integrate(
        ScalarField(state.grid, state.theta.data**2)
    )


def energies(state, params):
    """(kinetic, elastic, thermal); the total energy is their exact sum."""
    return (
        kinetic_energy(state),
        elastic_energy(state, params),
        thermal_energy(state, params),
    )


def total_energy(state, params):
    return sum(energies(state, params))


def total_entropy(state, params):
    eps = sym_gradient(state.u)
    eta = cons.entropy_density(eps.data, state.theta.data, params)
    return integrate(ScalarField(state.grid, eta))


def availability(state, params, beta=None):
    """integral(e + |u_t|^2/2 - beta*eta); beta defaults to params.beta.

    The beta override exists for the limiting case beta = 0, where the
    functional degenerates to the (conserved) total energy.
    """
    if beta is None:
        beta = params.beta
    kin, el, th = energies(state, params)
    return kin + el + th - beta * total_entropy(state, params)


def _midpoint_theta(state_old, state_new):
    return ScalarField(
        state_old.grid, 0.5 * (state_old.theta.data + state_new.theta.data)
    )


def _step_strain_rate(state_new):
    """The step's exact mean strain rate: eps(v_new) == (eps_new-eps_old)/dt
    by the displacement update rule."""
    return sym_gradient(state_new.v)


def entropy_production_field(state_old, state_new, dt, params):
    """Entropy production density at the step midpoint (nonnegative)."""
    theta_mid = _midpoint_theta(state_old, state_new)
    if np.min(theta_mid.data) <= 0.0:
        raise DomainError("midpoint temperature is not positive")
    eps_t = _step_strain_rate(state_new)
    grad_theta = _grad_scalar(theta_mid)
    sigma = cons.entropy_production(eps_t.data, grad_theta, theta_mid.data, params)
    return ScalarField(state_old.grid, sigma)


def entropy_production_integral(state_old, state_new, dt, params):
    return integrate(entropy_production_field(state_old, state_new, dt, params))


# ---------------------------------------------------------------------------
# balance residuals
# ---------------------------------------------------------------------------

def energy_balance_defect(state_old, state_new, b, g, dt, params):
    """Absolute defect E_new - E_old - dt * integral(b . u_t_new + g)."""
    work = 0.0
    if b is not None:
        work += integrate(
            ScalarField(state_new.grid, np.sum(b.data * state_new.v.data, axis=-1))
        )
    if g is not None:
        work += integrate(g)
    return (
        total_energy(state_new, params)
        - total_energy(state_old, params)
        - dt * work
    )


def energy_balance_residual(state_old, state_new, b, g, dt, params):
    """Relative conservation defect of the step (exact zero for b = g = 0
    solutions of the continuum system)."""
    defect = energy_balance_defect(state_old, state_new, b, g, dt, params)
    return abs(defect) / (1.0 + abs(total_energy(state_new, params)))


def entropy_balance_residual(state_old, state_new, g, dt, params):
    """(relative residual, dt * production) of the entropy balance.

    Production and the g/theta source use midpoint-in-time evaluation.
    """
    theta_mid = _midpoint_theta(state_old, state_new)
    if np.min(theta_mid.data) <= 0.0 or np.min(state_old.theta.data) <= 0.0:
        raise DomainError("entropy balance requires positive temperature")
    production = dt * entropy_production_integral(state_old, state_new, dt, params)
    source = 0.0
    if g is not None:
        source = dt * integrate(
            ScalarField(state_old.grid, g.data / theta_mid.data)
        )
    eta_new = total_entropy(state_new, params)
    eta_old = total_entropy(state_old, params)
    residual = abs(eta_new - eta_old - production - source) / (1.0 + abs(eta_new))
    return residual, production


def clausius_duhem_defect(state_old, state_new, g, dt, params):
    """Defect of integral(eta_t + div(q/theta) - g/theta - sigma) over a step.

    The flux term integrates to a boundary contribution that the insulated
    walls annihilate, so for smooth solutions the defect is O(dt + h^2); the
    inequality form (entropy growth at least g/theta) holds within the same
    tolerance because sigma >= 0 is kept explicit.
    """
    grid = state_old.grid
    theta_mid = _midpoint_theta(state_old, state_new)
    if np.min(theta_mid.data) <= 0.0:
        raise DomainError("Clausius-Duhem check requires positive temperature")
    eta_rate = (
        total_entropy(state_new, params) - total_entropy(state_old, params)
    ) / dt
    flux = -params.k * _grad_scalar(theta_mid)  # Fourier heat flux
    flux_over_theta = flux / theta_mid.data[..., None]
    div = np.zeros(grid.shape)
    for axis in range(grid.d):
        div += np.gradient(
            flux_over_theta[..., axis], grid.h[axis], axis=axis, edge_order=2
        )
    flux_integral = integrate(ScalarField(grid, div))
    sigma_integral = entropy_production_integral(state_old, state_new, dt, params)
    source = 0.0
    if g is not None:
        source = integrate(ScalarField(grid, g.data / theta_mid.data))
    return abs(eta_rate + flux_integral - source - sigma_integral)


def entropy_form_crosscheck(state_old, state_new, g, dt, params):
    """Consistency defect between the two equivalent forms of the heat balance.

    The primal form carries the thermoelastic coupling power explicitly and
    is evaluated here with the midpoint strain rate; the entropy form hides
    the coupling inside the backward difference of the entropy density, which
    pins the strain rate to the step mean eps(v_new).  The two realizations
    agree exactly whenever the motion vanishes and differ by O(dt) otherwise.
    """
    grid = state_old.grid
    theta_mid = _midpoint_theta(state_old, state_new)
    if np.min(theta_mid.data) <= 0.0:
        raise DomainError("cross-check requires positive temperature")
    g_data = g.data if g is not None else 0.0
    lap_new = laplacian_neumann(state_new.theta).data
    d_theta = (state_new.theta.data - state_old.theta.data) / dt
    eps_new = sym_gradient(state_new.u).data
    eps_old = sym_gradient(state_old.u).data
    rate_new = sym_gradient(state_new.v).data
    rate_mid = 0.5 * (sym_gradient(state_old.v).data + rate_new)
    coupling = params.thermal_coupling()
    viscous = cons.ddot(
        cons.apply_isotropic(params.lambda1, params.mu1, rate_new), rate_new
    )

    primal = (
        params.cv * theta_mid.data * d_theta
        - params.k * lap_new
        + theta_mid.data * cons.ddot(coupling, rate_mid)
        - viscous
        - g_data
    )
    d_eta = params.cv * d_theta + cons.ddot(coupling, (eps_new - eps_old) / dt)
    entropy_form = (
        theta_mid.data * d_eta - params.k * lap_new - viscous - g_data
    )
    defect = lp_norm(ScalarField(grid, primal - entropy_form), 2)
    return defect / (1.0 + lp_norm(ScalarField(grid, entropy_form), 2))


# ---------------------------------------------------------------------------
# per-step records
# ---------------------------------------------------------------------------

def _dissipation_monitors(state_new, params):
    """Discrete values of the two dissipative energy-estimate terms:
    || grad(theta)/theta ||_L2  and  || eps(u_t)/sqrt(theta) ||_L2."""
    grid = state_new.grid
    grad_theta = _grad_scalar(state_new.theta)
    grad_norm = math.sqrt(integrate(ScalarField(
        grid, np.sum(grad_theta**2, axis=-1) / state_new.theta.data**2
    )))
    eps_t = sym_gradient(state_new.v)
    rate_norm = math.sqrt(integrate(ScalarField(
        grid, cons.ddot(eps_t.data, eps_t.data) / state_new.theta.data
    )))
    return grad_norm, rate_norm


def record_for_step(state_old, state_new, trace, b, g, dt, params):
    kin, el, th = energies(state_new, params)
    entropy_residual, production = entropy_balance_residual(
        state_old, state_new, g, dt, params
    )
    grad_diss, rate_diss = _dissipation_monitors(state_new, params)
    return DiagnosticsRecord(
        t=state_new.t,
        kinetic_energy=kin,
        elastic_energy=el,
        thermal_energy=th,
        total_energy=kin + el + th,
        entropy=total_entropy(state_new, params),
        availability=availability(state_new, params),
        theta_min=float(np.min(state_new.theta.data)),
        theta_max=float(np.max(state_new.theta.data)),
        entropy_production=production / dt,
        energy_residual=energy_balance_residual(
            state_old, state_new, b, g, dt, params
        ),
        entropy_residual=entropy_residual,
        clausius_duhem_defect=clausius_duhem_defect(
            state_old, state_new, g, dt, params
        ),
        grad_theta_dissipation=grad_diss,
        strain_rate_dissipation=rate_diss,
        picard_iterations=trace.iterations if trace is not None else 0,
    )


def initial_record(state, params):
    """Row for t = t0: energies and state extrema, zero residuals."""
    kin, el, th = energies(state, params)
    grad_diss, rate_diss = _dissipation_monitors(state, params)
    return DiagnosticsRecord(
        t=state.t,
        kinetic_energy=kin,
        elastic_energy=el,
        thermal_energy=th,
        total_energy=kin + el + th,
        entropy=total_entropy(state, params),
        availability=availability(state, params),
        theta_min=float(np.min(state.theta.data)),
        theta_max=float(np.max(state.theta.data)),
        entropy_production=0.0,
        energy_residual=0.0,
        entropy_residual=0.0,
        clausius_duhem_defect=0.0,
        grad_theta_dissipation=grad_diss,
        strain_rate_dissipation=rate_diss,
        picard_iterations=0,
    )


class DiagnosticsCollector:
    """Observer that turns step events into diagnostics records."""

    def __init__(self, params, initial_state=None):
        self.params = params
        self.records = []
        if initial_state is not None:
            self.records.append(initial_record(initial_state, params))

    def __call__(self, event):
        self.records.append(record_for_step(
            event.state_old, event.state_new, event.trace,
            event.b, event.g, event.dt, self.params,
        ))


# ---------------------------------------------------------------------------
# trajectory-level checks
# ---------------------------------------------------------------------------

def availability_decay_check(trajectory, params, beta=None):
    """Verify the Lyapunov property on a source-free run.

    Passes iff the availability series is non-increasing up to a per-step
    slack of ten times the absolute energy-balance defect (plus a round-off
    floor).  Returns (passed, worst_violation, series).
    """
    if not trajectory.source_free:
        raise UsageError(
            "availability decay is only guaranteed for source-free runs "
            "(b = 0, g = 0); this trajectory has nonzero sources"
        )
    series = np.array([
        availability(s, params, beta=beta) for s in trajectory.states
    ])
    worst = 0.0
    passed = True
    for k in range(1, len(series)):
        old, new = trajectory.states[k - 1], trajectory.states[k]
        dt = new.t - old.t
        defect = abs(energy_balance_defect(old, new, None, None, dt, params))
        slack = 10.0 * defect + 1e-14 * (1.0 + abs(series[k]))
        violation = series[k] - series[k - 1] - slack
        if violation > 0.0:
            passed = False
            worst = max(worst, violation)
    return passed, worst, series


def default_theta_decay_rate(params):
    """Derived candidate for the temperature lower-bound rate.

    Tracking the constants of the truncated-test-function argument (Young's
    inequality with the weight chosen to absorb the viscous term) gives

        c0 = |A2 alpha|^2 / (4 * a_1* * cv),

    with |.| the Frobenius norm and a_1* the viscosity coercivity constant.
    The continuous theory only asserts existence of some rate, so any user
    override is accepted by the monitor.
    """
    coupling_norm_sq = float(cons.ddot(
        params.thermal_coupling(), params.thermal_coupling()
    ))
    a1_star = params.viscosity_bounds().a_star
    return coupling_norm_sq / (4.0 * a1_star * params.cv)


def theta_lower_bound_check(trajectory, params, theta_underbar=None, c0=None):
    """Check min theta(t) >= theta_underbar * exp(-c0 * t) along the run.

    Requires a nonnegative heat source throughout (the hypothesis of the
    exponential bound).  Returns (passed, margins) where margins[k] is
    min theta(t_k) minus the bound.
    """
    if any(v < 0.0 for v in trajectory.g_min):
        raise UsageError(
            "the temperature lower bound assumes g >= 0 throughout; "
            f"this run has min(g) = {min(trajectory.g_min)}"
        )
    t0 = trajectory.states[0].t
    if theta_underbar is None:
        theta_underbar = float(np.min(trajectory.states[0].theta.data))
    if theta_underbar <= 0.0:
        raise UsageError("theta_underbar must be positive")
    if c0 is None:
        c0 = default_theta_decay_rate(params)
    margins = []
    passed = True
    for s in trajectory.states:
        bound = theta_underbar * math.exp(-c0 * (s.t - t0))
        margin = float(np.min(s.theta.data)) - bound
        margins.append(margin)
        if margin < 0.0:
            passed = False
    return passed, np.array(margins)


# ---------------------------------------------------------------------------
# mixed space-time norms
# ---------------------------------------------------------------------------

def mixed_norm(snapshots, dt, p, p0):
    """Discrete L_{p,p0} norm (L_p in space inside, L_p0 in time outside).

    Finite p0 uses a left-endpoint Riemann sum with weight dt, which is the
    first-order-in-time quadrature matching the stepper's accuracy.
    """
    for q in (p, p0):
        if q != np.inf and float(q) < 1.0:
            raise UsageError(f"norm exponents must be >= 1 or inf, got {q}")
    space = [lp_norm(f, p) for f in snapshots]
    if p0 == np.inf:
        return float(max(space))
    p0 = float(p0)
    return float((sum(dt * s**p0 for s in space[:-1])) ** (1.0 / p0))


def v2_norm(snapshots, dt):
    """max_t ||f||_L2 + ||grad f||_L2(space-time)."""
    sup = max(lp_norm(f, 2) for f in snapshots)
    grad_sq = []
    for f in snapshots:
        grad = _grad_scalar(f)
        grad_sq.append(integrate(ScalarField(f.grid, np.sum(grad**2, axis=-1))))
    return float(sup + math.sqrt(sum(dt * v for v in grad_sq[:-1])))


# ---------------------------------------------------------------------------
# continuous dependence (Gronwall) comparison
# ---------------------------------------------------------------------------

@dataclass
class GronwallReport:
    """Difference functional of two runs against its Gronwall envelope."""

    times: np.ndarray
    x: np.ndarray          # X(t) = int(U_t^2 + (A2 E):E + cv*theta2*vartheta^2)
    a: np.ndarray          # A(t) rate series (a[0] = 0; backward differences)
    bound: np.ndarray      # X(0) * exp(int_0^t A)
    slack: float
    violation: bool


def gronwall_rate_constant(params):
    """The Young-inequality constant |A2 alpha|^2 / (2 a_1*) of the estimate."""
    coupling_norm_sq = float(cons.ddot(
        params.thermal_coupling(), params.thermal_coupling()
    ))
    return coupling_norm_sq / (2.0 * params.viscosity_bounds().a_star)


def gronwall_compare(traj1, traj2, params):
    """Compare two runs on the same grid/time ladder in the difference
    functional X(t) and flag any escape from the Gronwall envelope."""
    if traj1.grid != traj2.grid:
        raise UsageError("runs live on different grids")
    t1, t2 = traj1.times, traj2.times
    if len(t1) != len(t2) or np.max(np.abs(t1 - t2)) > 1e-12 * (1 + t1[-1]):
        raise UsageError("runs have different time ladders")
    grid = traj1.grid
    c1 = gronwall_rate_constant(params)

    x = []
    scale = 0.0
    for s1, s2 in zip(traj1.states, traj2.states):
        du = s1.v.data - s2.v.data
        eps1 = sym_gradient(s1.u).data
        eps_diff = eps1 - sym_gradient(s2.u).data
        stress_diff = cons.apply_isotropic(params.lambda2, params.mu2, eps_diff)
        dtheta = s1.theta.data - s2.theta.data
        integrand = (
            np.sum(du**2, axis=-1)
            + cons.ddot(stress_diff, eps_diff)
            + params.cv * s2.theta.data * dtheta**2
        )
        x.append(integrate(ScalarField(grid, integrand)))
        stress1 = cons.apply_isotropic(params.lambda2, params.mu2, eps1)
        magnitude = integrate(ScalarField(
            grid,
            np.sum(s1.v.data**2, axis=-1)
            + cons.ddot(stress1, eps1)
            + params.cv * s1.theta.data**2,
        ))
        scale = max(scale, magnitude)
    x = np.array(x)

    a = np.zeros(len(x))
    for k in range(1, len(x)):
        dt = t1[k] - t1[k - 1]
        th1_t = ScalarField(
            grid, (traj1.states[k].theta.data - traj1.states[k - 1].theta.data) / dt
        )
        th2_t = ScalarField(
            grid, (traj2.states[k].theta.data - traj2.states[k - 1].theta.data) / dt
        )
        eps1_t = SymTensorField(grid, (
            sym_gradient(traj1.states[k].u).data
            - sym_gradient(traj1.states[k - 1].u).data
        ) / dt)
        a[k] = (
            c1
            + params.k
            + lp_norm(th1_t, 3) ** 2
            + lp_norm(th2_t, 3) ** 2
            + lp_norm(tensor_magnitude(eps1_t), 3) ** 2
            + lp_norm(traj2.states[k].theta, np.inf) ** 2
        )

    bound = np.empty(len(x))
    bound[0] = x[0]
    acc = 0.0
    for k in range(1, len(x)):
        acc += a[k] * (t1[k] - t1[k - 1])
        bound[k] = x[0] * math.exp(acc)
    slack = 1e-12 * (1.0 + scale)
    violation = bool(np.any(x > bound + slack))
    return GronwallReport(
        times=t1, x=x, a=a, bound=bound, slack=slack, violation=violation
    )
