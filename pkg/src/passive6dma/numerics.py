"""Small numerical kernels: Hermitian solves, tiny LPs, gradients, line search.

The LPs that arise here have three variables (a position or rotation
perturbation) and a handful of rows, so lp_solve enumerates all vertices of
the feasible polytope exactly instead of pulling in a general-purpose
solver. Box bounds are mandatory, which keeps the problem bounded and the
enumeration finite.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError


class NumericalError(RuntimeError):
    """A linear-algebra kernel failed (non-PD matrix, non-finite values)."""


def hermitian_solve(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A X = B for Hermitian positive definite A via Cholesky.

    Raises NumericalError if A is not Hermitian within 1e-8 (relative) or
    the factorization fails. The solve is accurate to far better than the
    1e-9 relative residual the callers rely on for well-conditioned A.
    """
    a = np.asarray(a)
    rhs = np.asarray(rhs)
    scale = np.linalg.norm(a)
    if scale > 0 and np.linalg.norm(a - a.conj().T) > 1e-8 * scale:
        raise NumericalError("matrix is not Hermitian")
    try:
        factor = cho_factor((a + a.conj().T) / 2.0, lower=True)
    except LinAlgError as exc:
        raise NumericalError("matrix is not positive definite") from exc
    return cho_solve(factor, rhs)


class LPStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    # unbounded cannot occur with the mandatory finite box, kept for
    # interface completeness
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """minimize c^T x subject to A x <= b and lower <= x <= upper."""

    cost: np.ndarray
    rows: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        n = self.cost.shape[0]
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.rows.shape[0] != self.rhs.shape[0]:
            raise ValueError("rows and rhs length mismatch")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("finite box bounds are required")


@dataclass
class LPResult:
    status: LPStatus
    x: np.ndarray | None
    objective: float | None


def lp_solve(lp: LinearProgram, feas_tol: float = 1e-9) -> LPResult:
    """Exact solve by enumerating intersections of n active constraints.

    Every vertex of the polytope {A x <= b, l <= x <= u} is the
    intersection of n tight constraints, so checking all n-subsets of the
    stacked constraint planes finds the exact optimum. Ties are broken by
    enumeration order, which makes the result deterministic.
    """
    n = lp.cost.shape[0]
    planes = np.vstack([lp.rows, np.eye(n), -np.eye(n)])
    offsets = np.concatenate([lp.rhs, lp.upper, -lp.lower])
    m = planes.shape[0]
    combos = np.array(list(itertools.combinations(range(m), n)))
    mats = planes[combos]  # (C, n, n)
    dets = np.linalg.det(mats)
    ok = np.abs(dets) > 1e-12
    if not np.any(ok):
        return LPResult(LPStatus.INFEASIBLE, None, None)
    vertices = np.full((combos.shape[0], n), np.nan)
    try:
        vertices[ok] = np.linalg.solve(mats[ok], offsets[combos][ok][..., None])[..., 0]
    except np.linalg.LinAlgError:
        # a slice can be numerically singular despite the det screen
        for idx in np.nonzero(ok)[0]:
            try:
                vertices[idx] = np.linalg.solve(mats[idx], offsets[combos[idx]])
            except np.linalg.LinAlgError:
                ok[idx] = False
    slack = offsets[None, :] - vertices @ planes.T  # (C, m)
    feasible = ok & np.all(slack >= -feas_tol, axis=1)
    if not np.any(feasible):
        return LPResult(LPStatus.INFEASIBLE, None, None)
    objectives = vertices @ lp.cost
    objectives[~feasible] = np.inf
    best = int(np.argmin(objectives))
    return LPResult(LPStatus.OPTIMAL, vertices[best].copy(), float(objectives[best]))


def finite_diff_gradient(f, x: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient (f(x + s e_i) - f(x - s e_i)) / (2 s)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        probe = np.zeros_like(x)
        probe[i] = step
        hi = f(x + probe)
        lo = f(x - probe)
        grad[i] = (hi - lo) / (2.0 * step)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite value in finite-difference gradient")
    return grad


@dataclass(frozen=True)
class StepRule:
    """Backtracking line-search parameters (maximization form)."""

    sufficient_increase: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    initial_step: float = 1.0


def armijo_step(f, x: np.ndarray, d: np.ndarray, slope: float,
                rule: StepRule = StepRule(), accept=None):
    """Largest step kappa = initial * backtrack^m satisfying the Armijo test.

    Accepts the first kappa with f(x + kappa d) >= f(x) + c1 kappa slope,
    where slope is the directional derivative estimate grad(f)^T d. An
    optional `accept` predicate vetoes candidate points (used to enforce
    exact feasibility when the search direction comes from a linearized
    constraint set). Returns (kappa, x_new, f_new); kappa = 0 with x
    unchanged if no step passes within max_backtracks.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    f0 = f(x)
    kappa = rule.initial_step
    for _ in range(rule.max_backtracks + 1):
        cand = x + kappa * d
        if accept is None or accept(cand):
            val = f(cand)
            if val >= f0 + rule.sufficient_increase * kappa * slope:
                return kappa, cand, val
        kappa *= rule.backtrack
    return 0.0, x, f0
