"""Alternating optimization of receive beamforming, surface poses and phases.

One outer iteration updates the MMSE receive beamformer, then runs a
configurable number of inner sweeps. An inner sweep moves every surface
with a feasible-gradient position step and a rotation step (both are
finite-difference gradients projected onto a linearization of the
placement constraints, followed by a backtracking line search), then
sweeps all reflection phases with exact per-coordinate minimizers of a
fractional-programming surrogate, rebuilding the surrogate between
sweeps. Every block is monotone in the sum rate, so the per-iteration
trace never decreases.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import rng
from .channel import Problem, RateEvaluator, combining_terms
from .geometry import (
    FeasibilityReport,
    SurfacePose,
    axis_angle_matrix,
    euler_angles,
    feasibility_check,
    feasibility_margins,
    rotation_matrix,
)
from .numerics import (
    LinearProgram,
    LPStatus,
    StepRule,
    armijo_step,
    finite_diff_gradient,
    hermitian_solve,
    lp_solve,
)

MOVABLE_SCHEMES = ("distributed-6dma", "centralized-6dma")
ALL_SCHEMES = MOVABLE_SCHEMES + ("fixed-irs",)

# exact-feasibility threshold for accepted line-search points; tighter than
# the -1e-9 margin the run-level feasibility checks enforce
_ACCEPT_MARGIN = -1e-10


@dataclass(frozen=True)
class OptimizerConfig:
    scheme: str = "distributed-6dma"
    outer_iters: int = 40
    inner_sweeps: int = 2
    phase_sweeps: int = 4
    tolerance: float = 1e-4
    xi_position_wavelengths: float = 1e-4
    xi_rotation_rad: float = 1e-5
    position_box: float = 1.0
    rotation_box: float = 1.0
    step_rule: StepRule = StepRule()
    literal_distance_row: bool = False
    ascent_tol: float = 1e-12

    def __post_init__(self):
        if self.scheme not in ALL_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class ReflectionState:
    """Reflection coefficients and the fractional-programming auxiliaries."""

    theta: np.ndarray
    alpha: np.ndarray | None = None
    eps: np.ndarray | None = None


@dataclass
class FPQuadratic:
    """Quadratic surrogate min theta^H U theta - 2 Re(v theta)."""

    u_mat: np.ndarray
    v_row: np.ndarray


@dataclass
class RunResult:
    beamformer: np.ndarray
    theta: np.ndarray
    poses: list
    trace: list
    feasibility: FeasibilityReport
    outer_iters: int
    runtime_s: float

    @property
    def sum_rate(self) -> float:
        return self.trace[-1]


def mmse_beamformer(h: np.ndarray, powers, noise_power: float) -> np.ndarray:
    """W = (H P H^H + noise I)^{-1} H, columns are per-user receive filters.

    Per-user SINR is invariant to column scaling, so the common MMSE scaling
    factors are omitted.
    """
    h = np.asarray(h)
    powers = np.asarray(powers, dtype=float)
    m = h.shape[0]
    a = (h * powers[None, :]) @ h.conj().T + noise_power * np.eye(m)
    return hermitian_solve(a, h)


def linearized_min_distance(
    q_prev: np.ndarray, q_j: np.ndarray, d_min: float, literal: bool = False
):
    """Affine row (a, b) with a^T q <= b approximating ||q - q_j|| >= d_min.

    Default form: (q_prev - q_j)^T (q - q_j) >= d_min ||q_prev - q_j||.
    By Cauchy-Schwarz every q satisfying the row also satisfies the true
    spacing constraint, so line-search points stay exactly feasible. The
    literal form divides by ||q_prev - q_j||^2 instead of normalizing, is
    not an inner approximation, and is kept only for comparison.
    """
    q_prev = np.asarray(q_prev, dtype=float)
    q_j = np.asarray(q_j, dtype=float)
    delta = q_prev - q_j
    dist = float(np.linalg.norm(delta))
    if dist < 1e-12:
        raise ValueError("degenerate pair: q_prev coincides with q_j")
    if literal:
        return -delta / dist**2, -d_min - float(delta @ q_j) / dist**2
    return -delta, -d_min * dist - float(delta @ q_j)


def _position_rows(positions, normals, b, problem: Problem, literal: bool):
    """Constraint rows a^T q <= b for moving surface b, others fixed."""
    region = problem.region
    rows, rhs = [], []
    eye = np.eye(3)
    hi = region.center + region.side / 2.0
    lo = region.center - region.side / 2.0
    for i in range(3):
        rows.append(eye[i])
        rhs.append(hi[i])
        rows.append(-eye[i])
        rhs.append(-lo[i])
    nb = normals[b]
    for j in range(positions.shape[0]):
        if j == b:
            continue
        a_row, b_row = linearized_min_distance(
            positions[b], positions[j], problem.d_min, literal
        )
        rows.append(a_row)
        rhs.append(b_row)
        # no other surface center in front of b's plane
        rows.append(-nb)
        rhs.append(-float(nb @ positions[j]))
        # b's center stays behind every other surface's plane
        rows.append(normals[j])
        rhs.append(float(normals[j] @ positions[j]))
    # normal keeps the origin behind the surface
    rows.append(-nb)
    rhs.append(0.0)
    return np.array(rows), np.array(rhs)


def _rotation_rows(positions, normals, b):
    """Constraint rows a^T delta <= b for the rotation perturbation of b.

    First-order: the rotated normal is n + delta x n, which is linear in
    delta and turns the facing and origin constraints into affine rows.
    """
    nb = normals[b]
    qb = positions[b]
    rows, rhs = [], []
    for j in range(positions.shape[0]):
        if j == b:
            continue
        diff = positions[j] - qb
        rows.append(np.cross(nb, diff))
        rhs.append(-float(nb @ diff))
    rows.append(-np.cross(nb, qb))
    rhs.append(float(nb @ qb))
    return np.array(rows), np.array(rhs)


def _feasible_with(evaluator, problem, b, q=None, normal=None) -> bool:
    positions = np.array([p[0] for p in evaluator.poses])
    normals = np.array([p[1][:, 0] for p in evaluator.poses])
    if q is not None:
        positions[b] = q
    if normal is not None:
        normals[b] = normal
    report = feasibility_margins(positions, normals, problem.region, problem.d_min)
    return report.worst >= _ACCEPT_MARGIN


def _solve_direction(grad, rows, rhs, box):
    lp = LinearProgram(
        cost=-grad,
        rows=rows,
        rhs=rhs,
        lower=-box * np.ones(3),
        upper=box * np.ones(3),
    )
    res = lp_solve(lp)
    if res.status is not LPStatus.OPTIMAL:
        raise RuntimeError(
            "direction LP infeasible at a feasible point; constraint rows are wrong"
        )
    return res.x


def position_step(
    problem: Problem,
    poses: list,
    b: int,
    theta: np.ndarray,
    w: np.ndarray,
    config: OptimizerConfig,
    evaluator: RateEvaluator | None = None,
):
    """Feasible-gradient update of the position of surface b.

    Returns (new_pose, kappa, new_rate). kappa = 0 means the step stalled
    (nonpositive projected ascent or no Armijo point accepted).
    """
    if evaluator is None:
        evaluator = RateEvaluator.from_surface_poses(problem, poses, theta)
    q0, r0 = evaluator.poses[b]
    positions = np.array([p[0] for p in evaluator.poses])
    normals = np.array([p[1][:, 0] for p in evaluator.poses])

    def f(q):
        return evaluator.rate(w, evaluator.candidate_channel(b, q, r0))

    xi = config.xi_position_wavelengths * problem.scenario.wavelength
    grad = finite_diff_gradient(f, q0, xi)
    rows, rhs = _position_rows(
        positions, normals, b, problem, config.literal_distance_row
    )
    d = _solve_direction(grad, rows, rhs - rows @ q0, config.position_box)
    slope = float(grad @ d)
    if slope <= config.ascent_tol:
        return poses[b], 0.0, f(q0)
    kappa, q_new, rate = armijo_step(
        f,
        q0,
        d,
        slope,
        config.step_rule,
        accept=lambda q: _feasible_with(evaluator, problem, b, q=q),
    )
    if kappa == 0.0:
        return poses[b], 0.0, rate
    evaluator.commit_pose(b, q_new, r0)
    return SurfacePose(q_new, poses[b].rotation), kappa, rate


def rotation_step(
    problem: Problem,
    poses: list,
    b: int,
    theta: np.ndarray,
    w: np.ndarray,
    config: OptimizerConfig,
    evaluator: RateEvaluator | None = None,
):
    """Feasible-gradient update of the rotation of surface b.

    The perturbation delta lives in the tangent space of the rotation
    (new R = exp([kappa delta]x) R), the same coordinates in which the
    constraint rows are linearized. Accepted points are re-checked against
    the exact constraints because the linearization is not an inner
    approximation. The committed pose stores re-extracted z-y-x angles.
    """
    if evaluator is None:
        evaluator = RateEvaluator.from_surface_poses(problem, poses, theta)
    q0, r0 = evaluator.poses[b]
    positions = np.array([p[0] for p in evaluator.poses])
    normals = np.array([p[1][:, 0] for p in evaluator.poses])

    def f(delta):
        return evaluator.rate(
            w, evaluator.candidate_channel(b, q0, axis_angle_matrix(delta) @ r0)
        )

    grad = finite_diff_gradient(f, np.zeros(3), config.xi_rotation_rad)
    rows, rhs = _rotation_rows(positions, normals, b)
    d = _solve_direction(grad, rows, rhs, config.rotation_box)
    slope = float(grad @ d)
    if slope <= config.ascent_tol:
        return poses[b], 0.0, f(np.zeros(3))

    def accept(delta):
        normal = (axis_angle_matrix(delta) @ r0)[:, 0]
        return _feasible_with(evaluator, problem, b, normal=normal)

    kappa, delta_new, rate = armijo_step(
        f, np.zeros(3), d, slope, config.step_rule, accept=accept
    )
    if kappa == 0.0:
        return poses[b], 0.0, rate
    angles = euler_angles(axis_angle_matrix(delta_new) @ r0)
    r_new = rotation_matrix(angles)
    evaluator.commit_pose(b, q0, r_new)
    return SurfacePose(q0, angles), kappa, rate


def fp_auxiliaries(
    w: np.ndarray,
    h: np.ndarray,
    powers,
    noise_power: float,
):
    """Optimal fractional-programming auxiliaries at the current point.

    alpha_k is exactly the current SINR (identical to sinr() on the same
    inputs). eps_k is the quadratic-transform multiplier
    sqrt((1 + alpha_k) P_k) w_k^H h_k / (sum_j P_j |w_k^H h_j|^2 +
    noise ||w_k||^2); the denominator sums over all users including k.
    Users with a zero receive column get alpha = eps = 0.
    """
    powers = np.asarray(powers, dtype=float)
    norms, signal, total = combining_terms(w, h, powers)
    live = norms > 0.0
    alpha = np.zeros_like(signal)
    alpha[live] = signal[live] / (
        total[live] - signal[live] + noise_power * norms[live]
    )
    wh = w.conj().T @ h  # (K, K), [k, j] = w_k^H h_j
    denom = total + noise_power * norms
    eps = np.zeros_like(np.diagonal(wh))
    eps[live] = (
        np.sqrt((1.0 + alpha[live]) * powers[live]) * np.diagonal(wh)[live] / denom[live]
    )
    return alpha, eps


def fp_quadratic(
    w: np.ndarray,
    g_stacked: np.ndarray,
    v_stacked: np.ndarray,
    alpha: np.ndarray,
    eps: np.ndarray,
    powers,
    noise_power: float,
) -> FPQuadratic:
    """Assemble the phase surrogate min theta^H U theta - 2 Re(v theta).

    With A_j = V diag(g_j) the rows w_k^H A_j are (w_k^H V) elementwise
    times g_j, so U = sum_k |eps_k|^2 sum_j P_j (A_j^H w_k)(w_k^H A_j) and
    v = sum_k sqrt((1 + alpha_k) P_k) conj(eps_k) w_k^H A_k.
    """
    powers = np.asarray(powers, dtype=float)
    wv = w.conj().T @ v_stacked  # (K, NB)
    wa = wv[:, None, :] * g_stacked[None, :, :]  # (K, K, NB), [k, j]
    weights = np.abs(eps) ** 2
    u_mat = np.einsum("k,j,kjn,kjm->nm", weights, powers, wa.conj(), wa, optimize=True)
    coef = np.sqrt((1.0 + alpha) * powers) * eps.conj()
    v_row = coef @ (wv * g_stacked)  # diagonal rows w_k^H A_k
    return FPQuadratic(u_mat, v_row)


def phase_coordinate_update(j: int, fp: FPQuadratic, theta: np.ndarray) -> complex:
    """Exact unit-modulus minimizer of the surrogate in coordinate j.

    Collecting the theta_j terms of theta^H U theta - 2 Re(v theta) gives
    const - 2 Re(c_j theta_j) with c_j = v_j - sum_{i != j} conj(theta_i)
    U[i, j], minimized by theta_j = exp(j angle(conj(c_j))). A zero c_j
    leaves the coordinate unchanged.
    """
    coupling = theta.conj() @ fp.u_mat[:, j] - theta[j].conj() * fp.u_mat[j, j]
    c = fp.v_row[j] - coupling
    if c == 0.0:
        return theta[j]
    return complex(np.exp(-1j * np.angle(c)))


def surrogate_value(fp: FPQuadratic, theta: np.ndarray) -> float:
    """theta^H U theta - 2 Re(v theta), the quantity the phase sweep lowers."""
    quad = float(np.real(theta.conj() @ fp.u_mat @ theta))
    return quad - 2.0 * float(np.real(fp.v_row @ theta))


def _initial_theta(problem: Problem, num_surfaces: int) -> np.ndarray:
    n = problem.layout.num_elements * num_surfaces
    seed = problem.scenario.seed if problem.scenario.seed is not None else 0
    gen = rng.substream(seed, rng.REFLECTION_INIT)
    return np.exp(1j * gen.uniform(0.0, 2.0 * math.pi, size=n))


def ao_optimize(
    problem: Problem,
    initial_poses: list,
    config: OptimizerConfig = OptimizerConfig(),
    callback=None,
    initial_theta: np.ndarray | None = None,
) -> RunResult:
    """Run the alternating optimization from feasible initial poses.

    The trace holds the sum rate after beamformer refresh at the initial
    point and after every completed outer iteration; it is non-decreasing.
    The run stops early once an outer iteration improves the rate by less
    than config.tolerance. The fixed-irs scheme skips all pose steps.
    Reflection coefficients start from `initial_theta` when given (the
    warm-start hook), otherwise from a seeded random draw. `callback(stage,
    poses, theta)` is invoked after each block, mainly a hook for
    feasibility audits in tests.
    """
    t_start = time.perf_counter()
    report = feasibility_check(initial_poses, problem.region, problem.d_min)
    if not report.feasible:
        raise ValueError(f"initial poses are infeasible: {report.margins}")
    movable = config.scheme in MOVABLE_SCHEMES
    scenario = problem.scenario
    powers = np.asarray(scenario.tx_powers, dtype=float)
    noise = scenario.noise_power
    poses = list(initial_poses)
    if initial_theta is None:
        theta = _initial_theta(problem, len(poses))
    else:
        theta = np.asarray(initial_theta, dtype=complex).copy()
        expected = problem.layout.num_elements * len(poses)
        if theta.shape != (expected,):
            raise ValueError(f"initial_theta must have shape ({expected},)")
    evaluator = RateEvaluator.from_surface_poses(problem, poses, theta)
    w = mmse_beamformer(evaluator.channel, powers, noise)
    trace = [evaluator.rate(w)]
    outer_done = 0
    for _ in range(config.outer_iters):
        for _ in range(config.inner_sweeps):
            if movable:
                for b in range(len(poses)):
                    poses[b], _, _ = position_step(
                        problem, poses, b, theta, w, config, evaluator
                    )
                if callback is not None:
                    callback("position", poses, theta)
                for b in range(len(poses)):
                    poses[b], _, _ = rotation_step(
                        problem, poses, b, theta, w, config, evaluator
                    )
                if callback is not None:
                    callback("rotation", poses, theta)
            for _ in range(config.phase_sweeps):
                alpha, eps = fp_auxiliaries(w, evaluator.channel, powers, noise)
                g_st, v_st = evaluator.stacked_blocks()
                fp = fp_quadratic(w, g_st, v_st, alpha, eps, powers, noise)
                for j in range(theta.shape[0]):
                    theta[j] = phase_coordinate_update(j, fp, theta)
                evaluator.set_theta(theta)
            if callback is not None:
                callback("phase", poses, theta)
        w = mmse_beamformer(evaluator.channel, powers, noise)
        trace.append(evaluator.rate(w))
        outer_done += 1
        if trace[-1] - trace[-2] < config.tolerance:
            break
    final_report = feasibility_check(poses, problem.region, problem.d_min)
    elapsed = time.perf_counter() - t_start
    return RunResult(w, theta, poses, trace, final_report, outer_done, elapsed)
