"""Trajectory-fit calibration of reduced operators with adjoint gradients.

Operator inference matches time derivatives; this module instead minimises
the squared mismatch between explicit Euler rollouts of the reduced model
and the projected training trajectories,

    sum_i sum_j | s~_j^i - s_j^i |^2,   s~_j = s~_{j-1} + dt * theta(s~_{j-1}, u_{j-1}),

over the entries of the linear, quadratic, and input operators.  The
sampled source term stays fixed during calibration.  Gradients come from
one backward (adjoint) sweep per trajectory, so a full gradient costs one
forward plus one backward pass regardless of the number of operator
entries.  The optimiser is a limited-memory quasi-Newton method with an
Armijo backtracking line search.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from morcal.deim import DeimOperators, arrhenius_jacobian, reduced_arrhenius
from morcal.errors import ConfigError, DataError, NumericError
from morcal.opinf import RomOperators, sym_kron, sym_kron_jacobian
from morcal.textio import fmt_float

__all__ = [
    "CalibrationProblem",
    "OptimizerConfig",
    "ConvergenceReport",
    "theta",
    "forward_rollout",
    "objective",
    "adjoint_gradient",
    "calibrate",
    "build_calibration_problem",
    "reset_sweep_counters",
    "sweep_counters",
]

logger = logging.getLogger(__name__)

# Diagnostic counters: number of forward rollouts and backward (adjoint)
# sweeps performed since the last reset.  Useful for asserting the
# one-forward-one-backward cost of a gradient evaluation.
_SWEEPS = {"forward": 0, "backward": 0}


def reset_sweep_counters() -> None:
    _SWEEPS["forward"] = 0
    _SWEEPS["backward"] = 0


def sweep_counters() -> dict:
    return dict(_SWEEPS)


@dataclass
class CalibrationProblem:
    """Reduced training trajectories with controls and step size."""

    reduced_trajectories: list  # each (r, k_i + 1)
    controls: list  # each (k_i + 1, 2) rows (R, v_I_dot)
    dt: float
    deim: DeimOperators | None = field(default=None, repr=False)
    include_quadratic: bool = True
    include_input: bool = True

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")
        if not self.reduced_trajectories:
            raise DataError("calibration needs at least one trajectory")
        if len(self.controls) != len(self.reduced_trajectories):
            raise DataError("one control sequence per trajectory required")
        r = np.asarray(self.reduced_trajectories[0]).shape[0]
        for traj, ctrl in zip(self.reduced_trajectories, self.controls):
            traj = np.asarray(traj)
            ctrl = np.asarray(ctrl)
            if traj.ndim != 2 or traj.shape[0] != r or traj.shape[1] < 2:
                raise DataError("each trajectory must be (r, k+1) with k >= 1")
            if ctrl.shape != (traj.shape[1], 2):
                raise DataError("controls must provide one (R, v_I_dot) row per state")

    @property
    def r(self) -> int:
        return np.asarray(self.reduced_trajectories[0]).shape[0]


@dataclass
class OptimizerConfig:
    """Limited-memory quasi-Newton settings."""

    max_iterations: int = 500
    gradient_tolerance: float = 1e-8  # relative to the initial gradient norm
    history_size: int = 10
    initial_step: float = 1.0
    line_search_shrink: float = 0.5
    line_search_max_backtracks: int = 40
    armijo_constant: float = 1e-4
    enforce_symmetric_a: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be nonnegative")
        if self.gradient_tolerance < 0.0:
            raise ConfigError("gradient_tolerance must be nonnegative")
        if self.history_size < 1:
            raise ConfigError("history_size must be at least 1")
        if self.initial_step <= 0.0:
            raise ConfigError("initial_step must be positive")
        if not 0.0 < self.line_search_shrink < 1.0:
            raise ConfigError("line_search_shrink must lie in (0, 1)")
        if self.line_search_max_backtracks < 1:
            raise ConfigError("line_search_max_backtracks must be at least 1")
        if not 0.0 < self.armijo_constant < 1.0:
            raise ConfigError("armijo_constant must lie in (0, 1)")


@dataclass
class ConvergenceReport:
    """Per-iteration optimisation record."""

    status: str
    objective_history: list
    gradient_norms: list
    step_lengths: list

    @property
    def iterations(self) -> int:
        return len(self.objective_history) - 1

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,objective,gradient_norm,step_length\n")
            for i, (obj, g, step) in enumerate(
                zip(self.objective_history, self.gradient_norms, self.step_lengths)
            ):
                fh.write(f"{i},{fmt_float(obj)},{fmt_float(g)},{fmt_float(step)}\n")


def theta(ops: RomOperators, deim_ops: DeimOperators | None, s: np.ndarray, u) -> np.ndarray:
    """Model right-hand side a s + h sym_kron(s) + b v_I_dot + source(s, R)."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    rhs = ops.a @ s
    if ops.h is not None:
        rhs = rhs + ops.h @ sym_kron(s)
    if ops.b is not None:
        rhs = rhs + ops.b[:, 0] * u[1]
    if deim_ops is not None:
        rhs = rhs + reduced_arrhenius(deim_ops, s, u[0])
    return rhs


def _theta_jacobian(ops, deim_ops, s, u):
    jac = ops.a.copy()
    if ops.h is not None:
        jac += ops.h @ sym_kron_jacobian(s)
    if deim_ops is not None:
        jac += arrhenius_jacobian(deim_ops, s, u[0])
    return jac


def forward_rollout(
    ops: RomOperators,
    deim_ops: DeimOperators | None,
    s0: np.ndarray,
    controls: np.ndarray,
    dt: float,
    k: int,
) -> np.ndarray:
    """Explicit Euler rollout over k steps; returns all k+1 states (r, k+1).

    Controls are sampled left-continuously: row j drives the step from
    state j to state j+1.  A non-finite state aborts with the step index.
    """
    s0 = np.asarray(s0, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if k < 1:
        raise ConfigError("rollout needs at least one step")
    if controls.ndim != 2 or controls.shape[0] < k or controls.shape[1] != 2:
        raise DataError("controls must have at least k rows of (R, v_I_dot)")
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    _SWEEPS["forward"] += 1
    out = np.empty((s0.shape[0], k + 1))
    out[:, 0] = s0
    s = s0
    for j in range(k):
        s = s + dt * theta(ops, deim_ops, s, controls[j])
        if not math.isfinite(float(s.sum())):
            raise NumericError(f"non-finite reduced state at rollout step {j + 1}")
        out[:, j + 1] = s
    return out


def objective(ops: RomOperators, problem: CalibrationProblem) -> float:
    """Total squared trajectory mismatch; infinite when a rollout fails."""
    total = 0.0
    for data, ctrl in zip(problem.reduced_trajectories, problem.controls):
        data = np.asarray(data, dtype=float)
        k = data.shape[1] - 1
        try:
            rolled = forward_rollout(ops, problem.deim, data[:, 0], ctrl, problem.dt, k)
        except NumericError as exc:
            logger.warning("rollout failed during objective evaluation: %s", exc)
            return math.inf
        total += float(np.sum((rolled - data) ** 2))
    return total


def _zero_like_gradient(ops: RomOperators, problem: CalibrationProblem) -> RomOperators:
    r = ops.r
    return RomOperators(
        a=np.zeros((r, r)),
        h=np.zeros_like(ops.h) if (ops.h is not None and problem.include_quadratic) else None,
        b=np.zeros_like(ops.b) if (ops.b is not None and problem.include_input) else None,
    )


def _objective_and_gradient(ops: RomOperators, problem: CalibrationProblem):
    """One forward rollout and one adjoint sweep per trajectory.

    The adjoint recursion runs backwards from the final step:

        mu_k = 2 (s~_k - s_k)
        mu_j = 2 (s~_j - s_j) + (I + dt J_theta(s~_j, u_j))^T mu_{j+1}

    and the gradient accumulates dt * mu_{j+1} against the parameter
    derivatives of theta evaluated at (s~_j, u_j).
    """
    grad = _zero_like_gradient(ops, problem)
    total = 0.0
    dt = problem.dt
    for data, ctrl in zip(problem.reduced_trajectories, problem.controls):
        data = np.asarray(data, dtype=float)
        ctrl = np.asarray(ctrl, dtype=float)
        k = data.shape[1] - 1
        rolled = forward_rollout(ops, problem.deim, data[:, 0], ctrl, dt, k)
        diff = rolled - data
        total += float(np.sum(diff ** 2))

        mu = 2.0 * diff[:, k]
        for j in range(k - 1, -1, -1):
            state = rolled[:, j]
            grad.a += dt * np.outer(mu, state)
            if grad.h is not None:
                grad.h += dt * np.outer(mu, sym_kron(state))
            if grad.b is not None:
                grad.b[:, 0] += dt * ctrl[j, 1] * mu
            if j > 0:
                # mu_j = 2 e_j + (I + dt J)^T mu_{j+1}, J evaluated at (s~_j, u_j)
                jac = _theta_jacobian(ops, problem.deim, state, ctrl[j])
                mu = 2.0 * diff[:, j] + mu + dt * (jac.T @ mu)
        _SWEEPS["backward"] += 1
    return total, grad


def adjoint_gradient(ops: RomOperators, problem: CalibrationProblem) -> RomOperators:
    """Gradient of the calibration objective over all operator entries."""
    _, grad = _objective_and_gradient(ops, problem)
    return grad


def _pack(ops: RomOperators, problem: CalibrationProblem) -> np.ndarray:
    parts = [ops.a.ravel()]
    if ops.h is not None and problem.include_quadratic:
        parts.append(ops.h.ravel())
    if ops.b is not None and problem.include_input:
        parts.append(ops.b.ravel())
    return np.concatenate(parts)


def _unpack(vec: np.ndarray, template: RomOperators, problem: CalibrationProblem) -> RomOperators:
    r = template.r
    pos = r * r
    a = vec[:pos].reshape(r, r)
    h = template.h
    if template.h is not None and problem.include_quadratic:
        size = template.h.size
        h = vec[pos : pos + size].reshape(template.h.shape)
        pos += size
    b = template.b
    if template.b is not None and problem.include_input:
        size = template.b.size
        b = vec[pos : pos + size].reshape(template.b.shape)
        pos += size
    return RomOperators(
        a=a.copy(), h=None if h is None else h.copy(), b=None if b is None else b.copy()
    )


def _symmetrize(vec: np.ndarray, template: RomOperators) -> np.ndarray:
    r = template.r
    out = vec.copy()
    a = out[: r * r].reshape(r, r)
    a[:] = 0.5 * (a + a.T)
    return out


def calibrate(
    initial: RomOperators,
    problem: CalibrationProblem,
    optimizer: OptimizerConfig | None = None,
):
    """Minimise the trajectory mismatch starting from ``initial``.

    Returns the calibrated operators and a ConvergenceReport.  The accepted
    objective values are non-increasing by construction of the Armijo line
    search.  An infinite initial objective (diverging start) is refused with
    a hint to regularise the starting operators more strongly.
    """
    opt = optimizer if optimizer is not None else OptimizerConfig()
    template = initial.copy()

    def value(vec):
        return objective(_unpack(vec, template, problem), problem)

    def value_and_grad(vec):
        ops = _unpack(vec, template, problem)
        f, grad = _objective_and_gradient(ops, problem)
        gvec = _pack(grad, problem)
        if opt.enforce_symmetric_a:
            gvec = _symmetrize(gvec, template)
        return f, gvec

    x = _pack(initial, problem)
    if opt.enforce_symmetric_a:
        x = _symmetrize(x, template)

    f0 = value(x)
    if not math.isfinite(f0):
        raise NumericError(
            "initial operators already diverge on the training horizon; "
            "use a more strongly regularised starting point"
        )
    f, g = value_and_grad(x)
    gnorm0 = float(np.linalg.norm(g))
    history_s: list = []
    history_y: list = []
    objective_history = [f]
    gradient_norms = [gnorm0]
    step_lengths = [0.0]
    status = "max_iterations"

    if gnorm0 == 0.0:
        status = "converged"
    else:
        for _ in range(opt.max_iterations):
            gnorm = float(np.linalg.norm(g))
            if gnorm <= opt.gradient_tolerance * gnorm0 or gnorm == 0.0:
                status = "converged"
                break

            direction = _two_loop_direction(g, history_s, history_y)
            descent = float(direction @ g)
            if descent >= 0.0:
                direction = -g
                descent = -gnorm ** 2

            step = opt.initial_step
            if not history_s:
                step = opt.initial_step / max(1.0, gnorm)
            accepted = False
            for _bt in range(opt.line_search_max_backtracks):
                candidate = x + step * direction
                if opt.enforce_symmetric_a:
                    candidate = _symmetrize(candidate, template)
                f_new = value(candidate)
                if f_new <= f + opt.armijo_constant * step * descent:
                    accepted = True
                    break
                step *= opt.line_search_shrink
            if not accepted:
                status = "line_search_failure"
                logger.info("line search stalled at objective %.6e", f)
                break

            f_new, g_new = value_and_grad(candidate)
            s_vec = candidate - x
            y_vec = g_new - g
            curvature = float(s_vec @ y_vec)
            if curvature > 1e-12 * float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec)):
                history_s.append(s_vec)
                history_y.append(y_vec)
                if len(history_s) > opt.history_size:
                    history_s.pop(0)
                    history_y.pop(0)

            x, f, g = candidate, f_new, g_new
            objective_history.append(f)
            gradient_norms.append(float(np.linalg.norm(g)))
            step_lengths.append(step)
        else:
            status = "max_iterations"
        if status == "max_iterations" and float(np.linalg.norm(g)) <= opt.gradient_tolerance * gnorm0:
            status = "converged"

    report = ConvergenceReport(
        status=status,
        objective_history=objective_history,
        gradient_norms=gradient_norms,
        step_lengths=step_lengths,
    )
    return _unpack(x, template, problem), report


def _two_loop_direction(g, history_s, history_y):
    """Standard two-loop recursion for the quasi-Newton direction."""
    q = g.copy()
    alphas = []
    rhos = []
    for s_vec, y_vec in zip(reversed(history_s), reversed(history_y)):
        rho = 1.0 / float(y_vec @ s_vec)
        alpha = rho * float(s_vec @ q)
        q -= alpha * y_vec
        alphas.append(alpha)
        rhos.append(rho)
    if history_s:
        s_last, y_last = history_s[-1], history_y[-1]
        gamma = float(s_last @ y_last) / float(y_last @ y_last)
        q *= gamma
    for (s_vec, y_vec), alpha, rho in zip(
        zip(history_s, history_y), reversed(alphas), reversed(rhos)
    ):
        beta = rho * float(y_vec @ q)
        q += s_vec * (alpha - beta)
    return -q


def build_calibration_problem(
    scaled_snapshots,
    basis,
    deim_ops: DeimOperators | None,
    include_quadratic: bool = True,
    include_input: bool = True,
) -> CalibrationProblem:
    """Project a scaled snapshot set onto the basis, one trajectory at a time."""
    from morcal.pod import project
    from morcal.snapshots import _uniform_dt

    if scaled_snapshots.scaling is None:
        raise DataError("calibration expects a scaled snapshot set")
    dt = _uniform_dt(scaled_snapshots)
    trajectories = []
    controls = []
    for sl in scaled_snapshots.trajectory_slices():
        trajectories.append(project(basis, scaled_snapshots.data[:, sl]))
        controls.append(scaled_snapshots.controls[sl, :])
    return CalibrationProblem(
        reduced_trajectories=trajectories,
        controls=controls,
        dt=dt,
        deim=deim_ops,
        include_quadratic=include_quadratic,
        include_input=include_input,
    )
