"""
Time integration of the tumor-immune chemotaxis system.

Diffusion is advanced with Crank-Nicolson, the chemotactic transport of u with a
conservative Lax-Friedrichs flux, and reactions explicitly (Lie splitting:
explicit right-hand sides at t, then one implicit diffusion solve per unknown).
In the elliptic regime (tau = 0) v and w are recomputed from u by a linear solve
and a damped Newton iteration.

All linear systems are solved matrix-free with conjugate gradients. The
ghost-reflection Laplacian is symmetric in the trapezoid-weighted inner product,
not the Euclidean one, so CG runs on the similarity-transformed system
``S A S^-1 (S x) = S b`` with ``S = sqrt(weights)``.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Protocol, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg
from tqdm import tqdm

from .diagnostics import BlowupReport, DiagnosticsRecord, bound_monitor, detect_blowup, record_diagnostics
from .errors import NonFiniteFieldError, SolverError
from .grid import ScalarField, axis_control_widths, gradient_sq, laplacian, partial_derivative, same_grid
from .model import InitialData, ModelParams, max_bounds

logger = logging.getLogger(__name__)

FieldOperator = Callable[[ScalarField], ScalarField]

TERMINATION_COMPLETED = "completed"
TERMINATION_BLOWUP = "blowup_detected"
TERMINATION_SOLVER_FAILURE = "solver_failure"

CG_RESTARTS = 3
NEWTON_MAX_HALVINGS = 30


@dataclass(frozen=True)
class SimState:
    """Unknowns (u, v, w) at time ``t`` after ``step`` steps."""

    u: ScalarField
    v: ScalarField
    w: ScalarField
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        same_grid([self.u, self.v, self.w])

    @property
    def grid(self):
        return self.u.grid

    def is_finite(self) -> bool:
        return self.u.is_finite() and self.v.is_finite() and self.w.is_finite()


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-6
    t_end: float = 1e-5
    cg_tol: float = 1e-10
    cg_maxiter: int = 2000
    newton_tol: float = 1e-10
    newton_maxiter: int = 50
    blowup_threshold: float = 1e9
    cfl_warn: bool = True
    record_stride: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        for name in ("cg_tol", "newton_tol"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        for name in ("cg_maxiter", "newton_maxiter", "record_stride"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value}")
        if not self.blowup_threshold > 0:
            raise ValueError(f"blowup_threshold must be positive, got {self.blowup_threshold}")

    @property
    def step_count(self) -> int:
        """Number of fixed steps needed to reach ``t_end``."""
        return max(0, math.ceil(self.t_end / self.dt - 1e-9))


# ---------------------------------------------------------------------------
# Linear solver

@dataclass(frozen=True)
class CGResult:
    field: ScalarField
    iterations: int
    residual: float


def cg_solve(apply_op: FieldOperator, rhs: ScalarField, tol: float, maxiter: int,
             x0: Optional[ScalarField] = None) -> CGResult:
    """Solve ``apply_op(x) = rhs`` to ``||apply_op(x) - rhs||_2 <= tol * ||rhs||_2``.

    Args:
        apply_op: Linear operator on fields, symmetric positive definite in the
            trapezoid-weighted inner product.
        rhs: Right-hand side.
        tol: Relative residual tolerance.
        maxiter: Iteration cap per CG pass.
        x0: Starting guess (zero when omitted).

    Returns:
        CGResult with the solution, total iterations and final relative residual.

    Raises:
        SolverError: when the tolerance is not met after the restarts.
    """
    grid = rhs.grid
    b = rhs.values
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CGResult(grid.zeros(), 0, 0.0)

    s = np.sqrt(grid.weights).reshape(-1)
    n = s.size

    def matvec(y):
        x = ScalarField(grid, y.reshape(-1) / s)
        return s * apply_op(x).values

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    # the weighted residual bound implies the Euclidean one on the original system
    inner_tol = tol * float(s.min()) / float(s.max())

    x = np.zeros(n) if x0 is None else x0.values.copy()
    iterations = 0
    residual = math.inf
    for attempt in range(CG_RESTARTS + 1):
        counter = [0]

        def count(_):
            counter[0] += 1

        y, _info = cg(op, s * b, x0=s * x, rtol=inner_tol, atol=0.0, maxiter=maxiter, callback=count)
        iterations += counter[0]
        x = y / s
        residual = float(np.linalg.norm(apply_op(ScalarField(grid, x)).values - b)) / b_norm
        if residual <= tol:
            logger.debug(f"CG converged in {iterations} iterations, residual {residual:.3e}")
            return CGResult(ScalarField(grid, x), iterations, residual)
        if not math.isfinite(residual):
            break
        logger.debug(f"CG pass {attempt + 1}: residual {residual:.3e} > {tol:.1e}, restarting")
    raise SolverError(f"CG did not reach relative residual {tol:g}",
                      residual=residual, iterations=iterations)


# ---------------------------------------------------------------------------
# Chemotactic transport

def chemotaxis_divergence(u: ScalarField, v: ScalarField, chi: float) -> ScalarField:
    """Conservative Lax-Friedrichs discretisation of div(chi u grad v).

    Face fluxes ``F = (q_i + q_{i+1})/2 - lam/2 (u_{i+1} - u_i)`` with
    ``q = chi u dv`` and ``lam`` the axis-wide max of ``|chi dv|``; the fluxes
    through the boundary faces are zero. Differences are divided by the node's
    control width (half a cell on the faces), so the trapezoid-weighted sum of
    the result vanishes.
    """
    grid = same_grid([u, v])
    out = np.zeros(grid.shape)
    if chi == 0.0:
        return u.like(out)

    for axis in range(3):
        array_axis = 2 - axis
        drift = chi * partial_derivative(v, axis).data
        lam = float(np.max(np.abs(drift)))
        if lam == 0.0:
            continue
        q = np.moveaxis(drift * u.data, array_axis, -1)
        um = np.moveaxis(u.data, array_axis, -1)
        flux = 0.5 * (q[..., :-1] + q[..., 1:]) - 0.5 * lam * (um[..., 1:] - um[..., :-1])
        div = np.zeros_like(q)
        div[..., :-1] += flux
        div[..., 1:] -= flux
        out += np.moveaxis(div, -1, array_axis) / axis_control_widths(grid, axis)
    return u.like(out)


# ---------------------------------------------------------------------------
# Time steps

class CflMonitor:
    """Tracks violations of the explicit stability limits.

    The first violation is logged at WARNING; later ones only set ``last``.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.last = False
        self.first_violation_time: Optional[float] = None

    def check(self, v: ScalarField, chi: float, dt: float, t: float) -> bool:
        self.last = False
        if not self.enabled:
            return False
        h = min(v.grid.spacing)
        speed = chi * math.sqrt(max(float(np.max(gradient_sq(v).data)), 0.0))
        advective = speed > 0 and dt > h / (3.0 * speed)
        diffusive = dt > h * h / 6.0
        if advective or diffusive:
            self.last = True
            if self.first_violation_time is None:
                self.first_violation_time = t
                logger.warning(
                    f"CFL limit exceeded at t={t:.6g}: dt={dt:g}, "
                    f"advective limit {h / (3.0 * speed) if speed > 0 else math.inf:.3g}, "
                    f"diffusive limit {h * h / 6.0:.3g}")
        return self.last


def _checked(name: str, values: np.ndarray) -> np.ndarray:
    if not np.isfinite(values).all():
        raise NonFiniteFieldError(f"non-finite right-hand side for {name}", field_name=name)
    return values


def _crank_nicolson(f: ScalarField, source: np.ndarray, cfg: SolverConfig, name: str) -> ScalarField:
    half = 0.5 * cfg.dt
    rhs = _checked(name, f.data + cfg.dt * source + half * laplacian(f).data)

    def apply_op(x: ScalarField) -> ScalarField:
        return x.like(x.data - half * laplacian(x).data)

    result = cg_solve(apply_op, f.like(rhs), cfg.cg_tol, cfg.cg_maxiter, x0=f)
    return result.field


def step_parabolic(state: SimState, params: ModelParams, cfg: SolverConfig,
                   cfl: Optional[CflMonitor] = None) -> SimState:
    """One Crank-Nicolson / Lax-Friedrichs step of the fully parabolic system.

    Raises:
        NonFiniteFieldError: when an explicit right-hand side is not finite.
        SolverError: when a diffusion solve does not converge.
    """
    u, v, w = state.u.data, state.v.data, state.w.data
    if cfl is not None:
        cfl.check(state.v, params.chi, cfg.dt, state.t)

    # all sources are checked before any solve
    r_u = _checked("u", -chemotaxis_divergence(state.u, state.v, params.chi).data)
    r_v = _checked("v", params.alpha * w - params.beta * v - params.gamma * u * v)
    r_w = _checked("w", -params.delta * u * w + params.mu * w * (1.0 - w))

    u_new = _crank_nicolson(state.u, r_u, cfg, "u")
    v_new = _crank_nicolson(state.v, r_v, cfg, "v")
    w_new = _crank_nicolson(state.w, r_w, cfg, "w")
    step = state.step + 1
    return SimState(u_new, v_new, w_new, t=step * cfg.dt, step=step)


def elliptic_solve_v(u: ScalarField, w: ScalarField, params: ModelParams, cfg: SolverConfig,
                     guess: Optional[ScalarField] = None) -> ScalarField:
    """Solve ``(-lap + beta + gamma u) v = alpha w``."""
    same_grid([u, w])
    coeff = params.beta + params.gamma * u.data

    def apply_op(x: ScalarField) -> ScalarField:
        return x.like(coeff * x.data - laplacian(x).data)

    rhs = w.like(params.alpha * w.data)
    return cg_solve(apply_op, rhs, cfg.cg_tol, cfg.cg_maxiter, x0=guess).field


def w_residual(w: ScalarField, u: ScalarField, params: ModelParams) -> ScalarField:
    """``-lap w + delta u w - mu w + mu w^2`` nodewise."""
    wd = w.data
    return w.like(-laplacian(w).data + params.delta * u.data * wd - params.mu * wd + params.mu * wd * wd)


def elliptic_solve_w(u: ScalarField, params: ModelParams, guess: ScalarField,
                     cfg: SolverConfig) -> ScalarField:
    """Damped Newton iteration for ``-lap w + delta u w = mu w (1 - w)``.

    The Jacobian ``-lap + c`` with ``c = delta u - mu + 2 mu w`` is shifted by
    ``-min(c)`` plus a small guard whenever ``c`` is not positive somewhere, so
    every inner solve stays SPD; the shifted step is then a damped Newton step.
    """
    same_grid([u, guess])
    w = guess
    residual_field = w_residual(w, u, params)
    residual = float(np.max(np.abs(residual_field.data)))
    guard = 1e-2 * params.mu
    for iteration in range(cfg.newton_maxiter + 1):
        if residual <= cfg.newton_tol:
            logger.debug(f"Newton converged in {iteration} iterations, residual {residual:.3e}")
            return w
        if iteration == cfg.newton_maxiter or not math.isfinite(residual):
            break

        c = params.delta * u.data - params.mu + 2.0 * params.mu * w.data
        c_min = float(c.min())
        shift = 0.0 if (c_min >= 0.0 and float(c.max()) > 0.0) else guard - c_min
        diag = c + shift

        def apply_op(x: ScalarField) -> ScalarField:
            return x.like(diag * x.data - laplacian(x).data)

        direction = cg_solve(apply_op, residual_field.like(-residual_field.data),
                             cfg.cg_tol, cfg.cg_maxiter).field.data

        damping = 1.0
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            trial = w.like(w.data + damping * direction)
            trial_field = w_residual(trial, u, params)
            trial_residual = float(np.max(np.abs(trial_field.data)))
            if trial_residual < residual:
                break
            damping *= 0.5
        else:
            raise SolverError("Newton backtracking exhausted without residual decrease",
                              residual=residual, iterations=iteration)
        w, residual_field, residual = trial, trial_field, trial_residual

    raise SolverError(f"Newton did not reach residual {cfg.newton_tol:g}",
                      residual=residual, iterations=cfg.newton_maxiter)


def solve_elliptic_fields(u: ScalarField, params: ModelParams, cfg: SolverConfig,
                          w_guess: ScalarField, v_guess: Optional[ScalarField] = None):
    """(w, v) consistent with ``u``: w first (it enters the v equation)."""
    w = elliptic_solve_w(u, params, w_guess, cfg)
    v = elliptic_solve_v(u, w, params, cfg, guess=v_guess)
    return w, v


def step_elliptic(state: SimState, params: ModelParams, cfg: SolverConfig,
                  cfl: Optional[CflMonitor] = None) -> SimState:
    """One step of the parabolic-elliptic-elliptic system.

    v and w are solved from u at the start of the step, u is advanced by the
    same Crank-Nicolson / Lax-Friedrichs update as the parabolic step, then v
    and w are re-solved from the new u so the returned state satisfies both
    elliptic equations.
    """
    w, v = solve_elliptic_fields(state.u, params, cfg, state.w, state.v)
    if cfl is not None:
        cfl.check(v, params.chi, cfg.dt, state.t)
    r_u = -chemotaxis_divergence(state.u, v, params.chi).data
    u_new = _crank_nicolson(state.u, _checked("u", r_u), cfg, "u")
    w_new, v_new = solve_elliptic_fields(u_new, params, cfg, w, v)
    step = state.step + 1
    return SimState(u_new, v_new, w_new, t=step * cfg.dt, step=step)


# ---------------------------------------------------------------------------
# Orchestration

class RunSink(Protocol):
    """Receives the run's output as it is produced."""

    def on_record(self, record: DiagnosticsRecord) -> None: ...

    def on_state(self, state: SimState) -> None: ...

    def close(self) -> None: ...


@dataclass
class RunResult:
    termination: str
    steps: int
    final_time: float
    records: List[DiagnosticsRecord] = field(default_factory=list)
    final_state: Optional[SimState] = None
    blowup_time: Optional[float] = None
    blowup_report: Optional[BlowupReport] = None
    first_cfl_violation: Optional[float] = None
    error: Optional[SolverError] = None

    @property
    def blowup_detected(self) -> bool:
        return self.termination == TERMINATION_BLOWUP


def initial_state(params: ModelParams, data: InitialData, cfg: SolverConfig) -> SimState:
    """State at t = 0; in the elliptic regime v and w are solved from u0."""
    if params.tau == 1:
        return SimState(data.u0, data.v0, data.w0)
    # w = 1 is a supersolution, so Newton from it lands on the nonnegative branch
    w, v = solve_elliptic_fields(data.u0, params, cfg, data.grid.full(1.0))
    return SimState(data.u0, v, w)


def run(params: ModelParams, data: InitialData, cfg: SolverConfig,
        sinks: Sequence[RunSink] = (), progress: bool = False,
        bound_tol: float = 1e-6) -> RunResult:
    """Integrate until ``t_end``, a detected blow-up, or a solver failure.

    A record is produced at t = 0 and after every ``record_stride``-th step;
    the step that ends the run is always recorded.
    """
    bounds = max_bounds(params, data)
    step_fn = step_parabolic if params.tau == 1 else step_elliptic
    cfl = CflMonitor(enabled=cfg.cfl_warn)
    records: List[DiagnosticsRecord] = []

    def emit(state: SimState, force: bool = False) -> DiagnosticsRecord:
        violation = bound_monitor(state, bounds, bound_tol)
        record = record_diagnostics(state, params.tau, bound_violation=violation.violated,
                                    cfl_violation=cfl.last)
        if force or state.step % cfg.record_stride == 0:
            records.append(record)
            for sink in sinks:
                sink.on_record(record)
        for sink in sinks:
            sink.on_state(state)
        return record

    try:
        state = initial_state(params, data, cfg)
    except SolverError as e:
        logger.error(f"Initial elliptic solve failed: {e}")
        return RunResult(TERMINATION_SOLVER_FAILURE, steps=0, final_time=0.0, error=e.at_step(0))

    emit(state, force=True)
    total = cfg.step_count
    termination = TERMINATION_COMPLETED
    blowup_time = None
    error = None

    with tqdm(total=total, desc="Integrating", unit="step", disable=not progress) as bar:
        for n in range(1, total + 1):
            try:
                new_state = step_fn(state, params, cfg, cfl)
            except NonFiniteFieldError as e:
                blowup_time = n * cfg.dt
                termination = TERMINATION_BLOWUP
                logger.warning(f"Non-finite {e.field_name} at step {n} (t={blowup_time:.6g}); "
                               f"treating as blow-up")
                post = ScalarField(state.grid, np.full(state.grid.shape, np.inf), post_blowup=True)
                state = SimState(post, state.v, state.w, t=blowup_time, step=n)
                emit(state, force=True)
                break
            except SolverError as e:
                error = e.at_step(n)
                termination = TERMINATION_SOLVER_FAILURE
                logger.error(f"Solver failure at step {n}: {error}")
                break

            state = new_state
            bar.update(1)
            linf_u = float(np.max(np.abs(state.u.data)))
            exploded = not state.is_finite() or linf_u > cfg.blowup_threshold
            record = emit(state, force=exploded or n == total)
            if exploded:
                blowup_time = state.t
                termination = TERMINATION_BLOWUP
                logger.warning(f"Blow-up detected at step {n} (t={state.t:.6g}): "
                               f"||u||_inf = {record.linf_u:.6g}")
                break

    report = detect_blowup(records, cfg.blowup_threshold)
    if report is not None and blowup_time is None:
        blowup_time = report.time
    return RunResult(termination=termination, steps=state.step, final_time=state.t, records=records,
                     final_state=state, blowup_time=blowup_time, blowup_report=report,
                     first_cfl_violation=cfl.first_violation_time, error=error)


def with_dt(cfg: SolverConfig, dt: float, t_end: Optional[float] = None) -> SolverConfig:
    """Copy of ``cfg`` with another step size (refinement studies)."""
    return replace(cfg, dt=dt, t_end=cfg.t_end if t_end is None else t_end)
