"""Uplink channel model through passive reflecting surfaces.

Users reach the BS only via the surfaces. For surface b with pose
(q_b, u_b) the user-side and BS-side channels are

    g_kb = sum_l a_{k,l} sqrt(G_I(u_b; f_{k,l})) t(q_b, u_b; f_{k,l})
    V_b  = sum_p v_p sqrt(G_R(u_b; s_p)) z(psi_p) e(q_b, u_b; s_p)^H

where t and e are the surface array responses with entries
exp(j 2 pi / lambda * d^T r_n) for path direction d and element position
r_n, and z is the BS ULA steering vector. The effective uplink channel of
user k through all surfaces is

    h_k = sum_b V_b diag(theta_b) g_kb

with unit-modulus reflection coefficients theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import radiation
from .geometry import (
    LocalLayout,
    SiteRegion,
    SurfacePose,
    direction_vector,
    element_positions,
    rotation_matrix,
)
from .radiation import RadiationPattern, pattern_gain

__all__ = [
    "Scenario",
    "Problem",
    "array_response",
    "bs_steering",
    "user_to_surface_channel",
    "surface_to_bs_channel",
    "cascaded_channel",
    "effective_channel",
    "combining_terms",
    "sinr",
    "sum_rate",
    "achievable_sum_rate",
    "RateEvaluator",
]


@dataclass(frozen=True)
class Scenario:
    """One random draw of all channel parameters.

    Shapes: user path gains and angles are (K, L), BS-side arrays are (P,).
    Powers are per-user transmit powers in watts; noise_power is in watts.
    The draw does not depend on surface geometry, so the same scenario can
    be shared across surface configurations.
    """

    wavelength: float
    bs_antennas: int
    user_path_gains: np.ndarray
    user_elevations: np.ndarray
    user_azimuths: np.ndarray
    bs_path_gains: np.ndarray
    bs_elevations: np.ndarray
    bs_azimuths: np.ndarray
    bs_aoas: np.ndarray
    tx_powers: np.ndarray
    noise_power: float
    seed: int | None = None

    @property
    def num_users(self) -> int:
        return self.user_path_gains.shape[0]

    @property
    def paths_per_user(self) -> int:
        return self.user_path_gains.shape[1]

    @property
    def num_bs_paths(self) -> int:
        return self.bs_path_gains.shape[0]

    def user_directions(self) -> np.ndarray:
        """DOA unit vectors f_{k,l}, shape (K, L, 3)."""
        k, l = self.user_path_gains.shape
        out = np.empty((k, l, 3))
        for i in range(k):
            for j in range(l):
                out[i, j] = direction_vector(
                    self.user_elevations[i, j], self.user_azimuths[i, j]
                )
        return out

    def bs_directions(self) -> np.ndarray:
        """DOD unit vectors s_p, shape (P, 3)."""
        return np.array(
            [
                direction_vector(e, a)
                for e, a in zip(self.bs_elevations, self.bs_azimuths)
            ]
        )

    def with_power(self, power_watts: float) -> "Scenario":
        powers = np.full(self.num_users, float(power_watts))
        return replace(self, tx_powers=powers)


@dataclass(frozen=True)
class Problem:
    """A scenario plus the geometry it is optimized over."""

    scenario: Scenario
    layout: LocalLayout
    pattern: RadiationPattern
    region: SiteRegion = field(default_factory=SiteRegion)
    d_min: float = 0.1


def array_response(
    pose: SurfacePose, layout: LocalLayout, wavelength: float, direction
) -> np.ndarray:
    """Surface response exp(j 2 pi / lambda * d^T r_n) for one path."""
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must have unit norm")
    r = element_positions(pose, layout)
    return np.exp(1j * (2.0 * math.pi / wavelength) * (r @ d))


def bs_steering(aoa: float, num_antennas: int) -> np.ndarray:
    """Half-wavelength ULA steering vector, entry m = exp(j pi m cos aoa)."""
    m = np.arange(num_antennas)
    return np.exp(1j * math.pi * m * math.cos(aoa))


def user_to_surface_channel(
    scenario: Scenario,
    pattern: RadiationPattern,
    pose: SurfacePose,
    layout: LocalLayout,
    k: int,
) -> np.ndarray:
    """Channel g_kb from user k to one surface, shape (N,)."""
    g = np.zeros(layout.num_elements, dtype=complex)
    for l in range(scenario.paths_per_user):
        f = direction_vector(
            scenario.user_elevations[k, l], scenario.user_azimuths[k, l]
        )
        gain = radiation.incident_gain(pattern, pose, f)
        t = array_response(pose, layout, scenario.wavelength, f)
        g += scenario.user_path_gains[k, l] * math.sqrt(gain) * t
    return g


def surface_to_bs_channel(
    scenario: Scenario,
    pattern: RadiationPattern,
    pose: SurfacePose,
    layout: LocalLayout,
) -> np.ndarray:
    """Channel V_b from one surface to the BS, shape (M, N)."""
    m = scenario.bs_antennas
    v = np.zeros((m, layout.num_elements), dtype=complex)
    for p in range(scenario.num_bs_paths):
        s = direction_vector(scenario.bs_elevations[p], scenario.bs_azimuths[p])
        gain = radiation.reflective_gain(pattern, pose, s)
        z = bs_steering(scenario.bs_aoas[p], m)
        e = array_response(pose, layout, scenario.wavelength, s)
        v += scenario.bs_path_gains[p] * math.sqrt(gain) * np.outer(z, e.conj())
    return v


def cascaded_channel(v: np.ndarray, theta: np.ndarray, g: np.ndarray) -> np.ndarray:
    """V diag(theta) g for one surface."""
    return v @ (np.asarray(theta) * np.asarray(g))


def effective_channel(
    scenario: Scenario,
    pattern: RadiationPattern,
    poses,
    layout: LocalLayout,
    theta: np.ndarray,
) -> np.ndarray:
    """Stacked channel matrix H (M, K); column k is h_k summed over surfaces.

    theta holds the reflection coefficients of all surfaces concatenated in
    surface order, length B * N.
    """
    theta = np.asarray(theta)
    n = layout.num_elements
    if theta.shape != (len(poses) * n,):
        raise ValueError("theta length must equal total element count")
    h = np.zeros((scenario.bs_antennas, scenario.num_users), dtype=complex)
    for b, pose in enumerate(poses):
        v = surface_to_bs_channel(scenario, pattern, pose, layout)
        tb = theta[b * n : (b + 1) * n]
        for k in range(scenario.num_users):
            g = user_to_surface_channel(scenario, pattern, pose, layout, k)
            h[:, k] += cascaded_channel(v, tb, g)
    return h


def combining_terms(w: np.ndarray, h: np.ndarray, powers):
    """Shared pieces of the SINR: (||w_k||^2, signal_k, total received power).

    total_k is sum_j P_j |w_k^H h_j|^2 including j = k.
    """
    w = np.asarray(w)
    h = np.asarray(h)
    powers = np.asarray(powers, dtype=float)
    norms = np.sum(np.abs(w) ** 2, axis=0)
    cross = np.abs(w.conj().T @ h) ** 2 * powers[None, :]  # (K, K), [k, j]
    signal = np.diagonal(cross).copy()
    total = np.sum(cross, axis=1)
    return norms, signal, total


def sinr(w: np.ndarray, h: np.ndarray, powers, noise_power: float) -> np.ndarray:
    """Per-user SINR under linear receive beamforming.

    gamma_k = P_k |w_k^H h_k|^2 /
              (sum_{j != k} P_j |w_k^H h_j|^2 + noise * ||w_k||^2)
    """
    norms, signal, total = combining_terms(w, h, powers)
    if np.any(norms == 0.0):
        raise ValueError("beamformer columns must be nonzero")
    return signal / (total - signal + noise_power * norms)


def sum_rate(gammas) -> float:
    """Sum of log2(1 + gamma_k) in bps/Hz."""
    return float(np.sum(np.log2(1.0 + np.asarray(gammas, dtype=float))))


def achievable_sum_rate(w: np.ndarray, h: np.ndarray, powers, noise_power: float) -> float:
    """Sum rate where zero receive columns count as silent users.

    The MMSE beamformer returns an exactly zero column for a user whose
    effective channel is zero (all paths on the back side of every
    surface); such a user contributes zero rate instead of tripping the
    strict sinr() validation. For all-nonzero beamformers this equals
    sum_rate(sinr(...)) bit for bit.
    """
    norms, signal, total = combining_terms(w, h, powers)
    live = norms > 0.0
    gammas = np.zeros_like(signal)
    gammas[live] = signal[live] / (
        total[live] - signal[live] + noise_power * norms[live]
    )
    return sum_rate(gammas)


class RateEvaluator:
    """Incremental sum-rate evaluation over per-surface channel blocks.

    The pose optimizer probes many single-surface pose candidates; this
    class caches (g, V) blocks per surface so a candidate costs one block
    rebuild instead of a full channel synthesis. Matches the composition of
    the module-level functions to floating-point accuracy (the test suite
    cross-checks the two routes).
    """

    def __init__(self, problem: Problem, poses, theta: np.ndarray):
        sc = problem.scenario
        self.problem = problem
        self.wavenum = 2.0 * math.pi / sc.wavelength
        self.num_users = sc.num_users
        self.num_elements = problem.layout.num_elements
        self.offsets = problem.layout.offsets
        # path tables, fixed for the evaluator's lifetime
        self.user_dirs = sc.user_directions().reshape(-1, 3)  # (K*L, 3)
        self.user_gains = sc.user_path_gains  # (K, L)
        self.bs_dirs = sc.bs_directions()  # (P, 3)
        self.bs_gains = sc.bs_path_gains  # (P,)
        self.steering = np.column_stack(
            [bs_steering(a, sc.bs_antennas) for a in sc.bs_aoas]
        )  # (M, P)
        self.powers = np.asarray(sc.tx_powers, dtype=float)
        self.noise = float(sc.noise_power)
        self.theta = np.asarray(theta, dtype=complex).copy()
        self.poses = [
            (np.asarray(q, dtype=float).copy(), np.asarray(r, dtype=float).copy())
            for q, r in poses
        ]
        self._blocks = [self._block(q, r) for q, r in self.poses]
        self._contribs = [
            self._contribution(b, *blk) for b, blk in enumerate(self._blocks)
        ]
        self._h = np.sum(self._contribs, axis=0)

    @staticmethod
    def from_surface_poses(problem: Problem, poses, theta) -> "RateEvaluator":
        qr = [(p.position, rotation_matrix(p.rotation)) for p in poses]
        return RateEvaluator(problem, qr, theta)

    def _block(self, q: np.ndarray, r: np.ndarray):
        """Rebuild (g, V) for a pose; g is (K, N), V is (M, N)."""
        normal = r[:, 0]
        positions = q[None, :] + self.offsets @ r.T  # (N, 3)
        gi = pattern_gain(self.problem.pattern, normal, self.user_dirs)  # (K*L,)
        t = np.exp(1j * self.wavenum * (self.user_dirs @ positions.T))  # (K*L, N)
        coef = self.user_gains * np.sqrt(gi).reshape(self.user_gains.shape)
        g = np.einsum(
            "kl,kln->kn", coef, t.reshape(*self.user_gains.shape, -1)
        )  # (K, N)
        gr = pattern_gain(self.problem.pattern, normal, self.bs_dirs)  # (P,)
        e = np.exp(1j * self.wavenum * (self.bs_dirs @ positions.T))  # (P, N)
        v = (self.steering * (self.bs_gains * np.sqrt(gr))[None, :]) @ e.conj()
        return g, v

    def _contribution(self, b: int, g: np.ndarray, v: np.ndarray) -> np.ndarray:
        tb = self.theta[b * self.num_elements : (b + 1) * self.num_elements]
        return (v * tb[None, :]) @ g.T  # (M, K)

    @property
    def channel(self) -> np.ndarray:
        """Current effective channel H (M, K)."""
        return self._h

    def candidate_channel(self, b: int, q: np.ndarray, r: np.ndarray) -> np.ndarray:
        """H with surface b moved to (q, r), without committing."""
        g, v = self._block(q, r)
        return self._h - self._contribs[b] + self._contribution(b, g, v)

    def commit_pose(self, b: int, q: np.ndarray, r: np.ndarray) -> None:
        self.poses[b] = (np.asarray(q, dtype=float).copy(), np.asarray(r, dtype=float).copy())
        self._blocks[b] = self._block(*self.poses[b])
        self._contribs[b] = self._contribution(b, *self._blocks[b])
        self._h = np.sum(self._contribs, axis=0)

    def set_theta(self, theta: np.ndarray) -> None:
        self.theta = np.asarray(theta, dtype=complex).copy()
        self._contribs = [
            self._contribution(b, *blk) for b, blk in enumerate(self._blocks)
        ]
        self._h = np.sum(self._contribs, axis=0)

    def stacked_blocks(self):
        """Stacked user channels (K, B*N) and BS channel (M, B*N)."""
        g = np.concatenate([blk[0] for blk in self._blocks], axis=1)
        v = np.concatenate([blk[1] for blk in self._blocks], axis=1)
        return g, v

    def rate(self, w: np.ndarray, h: np.ndarray | None = None) -> float:
        if h is None:
            h = self._h
        return achievable_sum_rate(w, h, self.powers, self.noise)
