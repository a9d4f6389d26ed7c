"""Surface poses, rotations and placement constraints.

A reflecting surface is a rigid planar array whose pose has six degrees of
freedom: a center position q in meters and a rotation u = (zeta_x, zeta_y,
zeta_z) in radians. The surface normal in the local frame is +x; rotating a
pose maps local element offsets into the global frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def _as_vec3(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class SurfacePose:
    """Position q (m) and rotation angles u (rad, wrapped to [0, 2*pi))."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position, "position"))
        rot = np.mod(_as_vec3(self.rotation, "rotation"), TWO_PI)
        object.__setattr__(self, "rotation", rot)


@dataclass(frozen=True)
class SiteRegion:
    """Axis-aligned cube of admissible surface centers.

    The default center sits off the anchor's x-axis, raised and to the
    side, so the origin-facing half-space still admits normals tilted
    well away from the mean look bisector. A site straight along x pins
    that bisector to the constraint boundary and leaves rotations no
    room to chase individual paths.
    """

    center: np.ndarray = field(default_factory=lambda: np.array([1.2, 1.2, 0.6]))
    side: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center, "center"))
        if self.side <= 0:
            raise ValueError("side must be positive")

    def contains_margin(self, q) -> float:
        """Signed distance to the cube boundary (>= 0 inside, sup-norm)."""
        q = _as_vec3(q, "q")
        return float(self.side / 2.0 - np.max(np.abs(q - self.center)))


@dataclass(frozen=True)
class LocalLayout:
    """Element offsets of one surface in its local frame.

    Offsets live in the local y-z plane (the surface plane); the local +x
    axis is the surface normal.
    """

    offsets: np.ndarray

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=float)
        if off.ndim != 2 or off.shape[1] != 3:
            raise ValueError("offsets must have shape (N, 3)")
        object.__setattr__(self, "offsets", off)

    @property
    def num_elements(self) -> int:
        return self.offsets.shape[0]

    @classmethod
    def grid(cls, nx: int, ny: int, pitch: float) -> "LocalLayout":
        """Centered nx-by-ny grid with the given pitch in the y-z plane."""
        if nx < 1 or ny < 1:
            raise ValueError("grid dimensions must be >= 1")
        iy = (np.arange(nx) - (nx - 1) / 2.0) * pitch
        iz = (np.arange(ny) - (ny - 1) / 2.0) * pitch
        yy, zz = np.meshgrid(iy, iz, indexing="ij")
        off = np.column_stack(
            [np.zeros(nx * ny), yy.ravel(), zz.ravel()]
        )
        return cls(off)


def rotation_matrix(u) -> np.ndarray:
    """Rotation matrix R = R_z(zeta_z) @ R_y(zeta_y) @ R_x(zeta_x)."""
    u = _as_vec3(u, "u")
    cx, sx = math.cos(u[0]), math.sin(u[0])
    cy, sy = math.cos(u[1]), math.sin(u[1])
    cz, sz = math.cos(u[2]), math.sin(u[2])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def euler_angles(r: np.ndarray) -> np.ndarray:
    """Angles u with rotation_matrix(u) == r, wrapped to [0, 2*pi).

    Inverse of the z-y-x composition above. At the gimbal singularity
    (|r[2,0]| == 1) the x angle is set to zero.
    """
    r = np.asarray(r, dtype=float)
    sy = -r[2, 0]
    sy = min(1.0, max(-1.0, sy))
    zeta_y = math.asin(sy)
    if abs(sy) < 1.0 - 1e-12:
        zeta_x = math.atan2(r[2, 1], r[2, 2])
        zeta_z = math.atan2(r[1, 0], r[0, 0])
    else:
        zeta_x = 0.0
        zeta_z = math.atan2(-r[0, 1], r[1, 1])
    return np.mod(np.array([zeta_x, zeta_y, zeta_z]), TWO_PI)


def axis_angle_matrix(delta) -> np.ndarray:
    """Rotation by the vector delta (axis delta/|delta|, angle |delta|)."""
    delta = _as_vec3(delta, "delta")
    angle = float(np.linalg.norm(delta))
    if angle < 1e-300:
        return np.eye(3)
    k = delta / angle
    kx = skew(k)
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)


def skew(v) -> np.ndarray:
    v = _as_vec3(v, "v")
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def surface_normal(pose: SurfacePose) -> np.ndarray:
    """Outward unit normal, the rotated local +x axis."""
    return rotation_matrix(pose.rotation)[:, 0].copy()


def element_positions(pose: SurfacePose, layout: LocalLayout) -> np.ndarray:
    """Global element positions r_n = q + R(u) rbar_n, shape (N, 3)."""
    r = rotation_matrix(pose.rotation)
    return pose.position[None, :] + layout.offsets @ r.T


def element_position(pose: SurfacePose, layout: LocalLayout, n: int) -> np.ndarray:
    if not 0 <= n < layout.num_elements:
        raise IndexError(f"element index {n} out of range [0, {layout.num_elements})")
    return element_positions(pose, layout)[n]


def direction_vector(elevation: float, azimuth: float) -> np.ndarray:
    """Unit vector (sin e cos a, sin e sin a, cos e)."""
    se = math.sin(elevation)
    return np.array(
        [se * math.cos(azimuth), se * math.sin(azimuth), math.cos(elevation)]
    )


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst-case margins of the pose placement constraints.

    Margins are signed: >= 0 means satisfied. Vacuous constraints (fewer
    than two surfaces) report +inf.

    region   min over surfaces of the cube containment margin
    spacing  min over pairs of ||q_b - q_j|| - d_min
    facing   min over ordered pairs of -n_b . (q_j - q_b), i.e. no surface
             center lies in front of another surface's plane
    outward  min over surfaces of n_b . q_b, normals keep the origin (the
             processing hub) in their back half-space
    """

    region: float
    spacing: float
    facing: float
    outward: float
    tol: float = 1e-9

    @property
    def margins(self) -> dict:
        return {
            "region": self.region,
            "spacing": self.spacing,
            "facing": self.facing,
            "outward": self.outward,
        }

    @property
    def passed(self) -> dict:
        return {k: v >= -self.tol for k, v in self.margins.items()}

    @property
    def feasible(self) -> bool:
        return all(self.passed.values())

    @property
    def worst(self) -> float:
        return min(self.margins.values())


def feasibility_margins(
    positions: np.ndarray,
    normals: np.ndarray,
    region: SiteRegion,
    d_min: float,
    tol: float = 1e-9,
) -> FeasibilityReport:
    """Array-level constraint margins for positions (B,3) and normals (B,3)."""
    positions = np.asarray(positions, dtype=float)
    normals = np.asarray(normals, dtype=float)
    b = positions.shape[0]
    region_m = float(
        np.min(region.side / 2.0 - np.max(np.abs(positions - region.center), axis=1))
    )
    outward_m = float(np.min(np.sum(normals * positions, axis=1)))
    if b >= 2:
        diff = positions[None, :, :] - positions[:, None, :]  # q_j - q_b
        dist = np.linalg.norm(diff, axis=2)
        iu = np.triu_indices(b, k=1)
        spacing_m = float(np.min(dist[iu]) - d_min)
        front = np.einsum("bi,bji->bj", normals, diff)  # n_b . (q_j - q_b)
        np.fill_diagonal(front, -np.inf)
        facing_m = float(-np.max(front))
    else:
        spacing_m = math.inf
        facing_m = math.inf
    return FeasibilityReport(region_m, spacing_m, facing_m, outward_m, tol)


def feasibility_check(
    poses, region: SiteRegion, d_min: float, tol: float = 1e-9
) -> FeasibilityReport:
    """Check the placement constraints for a list of SurfacePose."""
    if len(poses) == 0:
        raise ValueError("at least one pose is required")
    positions = np.array([p.position for p in poses])
    normals = np.array([surface_normal(p) for p in poses])
    return feasibility_margins(positions, normals, region, d_min, tol)
