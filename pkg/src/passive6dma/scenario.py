"""Scenario generation: channel draws, surface layouts and initial poses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .channel import Scenario
from .geometry import (
    LocalLayout,
    SiteRegion,
    SurfacePose,
    axis_angle_matrix,
    euler_angles,
    feasibility_check,
    rotation_matrix,
)

SCHEMES = ("distributed-6dma", "centralized-6dma", "fixed-irs")

MAX_POSE_ATTEMPTS = 10_000

# half-widths of the initial-pose perturbations: tangent offset of the cap
# direction and spin about the surface normal, both kept small so random
# starts stay inside the basin the descent steps can actually work
CAP_SPREAD = 0.15
SPIN_SPREAD = 0.15


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _default_d_min(wavelength: float) -> float:
    return math.sqrt(2.0) / 2.0 * wavelength + wavelength / 10.0


@dataclass(frozen=True)
class ScenarioParams:
    """Static description of the system; defaults follow the reference setup."""

    bs_antennas: int = 6
    users: int = 6
    paths_per_user: int = 2
    bs_paths: int = 6
    wavelength: float = 0.125
    los_gain_var: float = 4e-6
    nlos_gain_var: float = 1e-6
    power_dbm: float = 10.0
    noise_dbm: float = -80.0
    surfaces: int = 4
    elements_x: int = 2
    elements_y: int = 2
    d_min: float | None = None
    region: SiteRegion = field(default_factory=SiteRegion)
    user_elevation_range: tuple = (0.0, math.pi / 2)
    user_azimuth_range: tuple = (math.pi, 3 * math.pi / 2)
    bs_aoa_range: tuple = (0.0, math.pi / 2)
    bs_elevation_range: tuple = (math.pi / 2, math.pi)
    bs_azimuth_range: tuple = (-math.pi / 2, 0.0)

    def __post_init__(self):
        if self.d_min is None:
            object.__setattr__(self, "d_min", _default_d_min(self.wavelength))

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def power_watts(self) -> float:
        return dbm_to_watts(self.power_dbm)

    @property
    def elements_per_surface(self) -> int:
        return self.elements_x * self.elements_y

    @property
    def element_budget(self) -> int:
        return self.surfaces * self.elements_per_surface

    def layout(self) -> LocalLayout:
        return LocalLayout.grid(
            self.elements_x, self.elements_y, self.wavelength / 2.0
        )


def _near_square(n: int) -> tuple[int, int]:
    """Factor n = a * b with a <= b and a as close to sqrt(n) as possible."""
    a = int(math.isqrt(n))
    while n % a != 0:
        a -= 1
    return a, n // a


def params_for_scheme(params: ScenarioParams, scheme: str) -> ScenarioParams:
    """Reshape the surface budget for a scheme, keeping total elements equal."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "distributed-6dma":
        out = params
    else:
        nx, ny = _near_square(params.element_budget)
        out = replace(params, surfaces=1, elements_x=nx, elements_y=ny)
    assert out.element_budget == params.element_budget
    return out


def _complex_normal(gen: np.random.Generator, var: float) -> complex:
    s = math.sqrt(var / 2.0)
    return complex(gen.normal(scale=s), gen.normal(scale=s))


def generate_scenario(params: ScenarioParams, seed: int) -> Scenario:
    """Draw all channel randomness for one seed.

    The draw depends only on user/BS path counts and angle ranges, never on
    the surface configuration, so all schemes for a seed share one scenario.
    """
    k, l, p = params.users, params.paths_per_user, params.bs_paths
    gains = np.empty((k, l), dtype=complex)
    elev = np.empty((k, l))
    azim = np.empty((k, l))
    for ki in range(k):
        for li in range(l):
            gen = rng.substream(seed, rng.USER_PATHS, ki, li)
            var = params.los_gain_var if li == 0 else params.nlos_gain_var
            gains[ki, li] = _complex_normal(gen, var)
            elev[ki, li] = gen.uniform(*params.user_elevation_range)
            azim[ki, li] = gen.uniform(*params.user_azimuth_range)
    bs_gains = np.empty(p, dtype=complex)
    bs_elev = np.empty(p)
    bs_azim = np.empty(p)
    bs_aoas = np.empty(p)
    for pi in range(p):
        gen = rng.substream(seed, rng.BS_PATHS, pi)
        var = params.los_gain_var if pi == 0 else params.nlos_gain_var
        bs_gains[pi] = _complex_normal(gen, var)
        bs_aoas[pi] = gen.uniform(*params.bs_aoa_range)
        bs_elev[pi] = gen.uniform(*params.bs_elevation_range)
        bs_azim[pi] = gen.uniform(*params.bs_azimuth_range)
    return Scenario(
        wavelength=params.wavelength,
        bs_antennas=params.bs_antennas,
        user_path_gains=gains,
        user_elevations=elev,
        user_azimuths=azim,
        bs_path_gains=bs_gains,
        bs_elevations=bs_elev,
        bs_azimuths=bs_azim,
        bs_aoas=bs_aoas,
        tx_powers=np.full(k, params.power_watts),
        noise_power=params.noise_watts,
        seed=seed,
    )


def _mean_sin(lo: float, hi: float) -> float:
    if hi == lo:
        return math.sin(lo)
    return (math.cos(lo) - math.cos(hi)) / (hi - lo)


def _mean_cos(lo: float, hi: float) -> float:
    if hi == lo:
        return math.cos(lo)
    return (math.sin(hi) - math.sin(lo)) / (hi - lo)


def _mean_direction(elev_range, azim_range) -> np.ndarray:
    """Mean of direction_vector(e, a) over independent uniform angles."""
    se = _mean_sin(*elev_range)
    ce = _mean_cos(*elev_range)
    ca = _mean_cos(*azim_range)
    sa = _mean_sin(*azim_range)
    return np.array([se * ca, se * sa, ce])


def mean_look_directions(params: ScenarioParams):
    """Unit vectors from the site toward the mean user and BS paths."""
    toward_users = -_mean_direction(
        params.user_elevation_range, params.user_azimuth_range
    )
    toward_bs = -_mean_direction(params.bs_elevation_range, params.bs_azimuth_range)
    return (
        toward_users / np.linalg.norm(toward_users),
        toward_bs / np.linalg.norm(toward_bs),
    )


def _align_to_normal(normal: np.ndarray) -> np.ndarray:
    """Rotation with first column `normal`, minimal rotation from +x."""
    x = np.array([1.0, 0.0, 0.0])
    n = normal / np.linalg.norm(normal)
    axis = np.cross(x, n)
    s = np.linalg.norm(axis)
    c = float(x @ n)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        return rotation_matrix([0.0, 0.0, math.pi])
    angle = math.atan2(s, c)
    return axis_angle_matrix(axis / s * angle)


def _tilted_bisector(params: ScenarioParams) -> np.ndarray:
    """Bisector of the mean look directions, tilted off the origin.

    The pure bisector can leave a surface normal orthogonal to its own
    position, which puts the origin-facing constraint on its boundary. Tilt
    toward the site direction by the smallest amount that buys a margin.
    """
    toward_users, toward_bs = mean_look_directions(params)
    w = toward_users + toward_bs
    w = w / np.linalg.norm(w)
    center = params.region.center
    radial = center / max(np.linalg.norm(center), 1e-12)
    if np.linalg.norm(center) < 1e-12:
        return w
    for tilt in np.arange(0.0, 2.01, 0.05):
        cand = w + tilt * radial
        cand = cand / np.linalg.norm(cand)
        if float(cand @ center) >= 0.02 * np.linalg.norm(center):
            return cand
    return radial


def fixed_pose(params: ScenarioParams) -> SurfacePose:
    """Deterministic pose of the non-movable baseline surface.

    Sits at the region center with its normal on the (tilted) bisector of
    the mean user and BS look directions, a deliberately strong baseline.
    """
    normal = _tilted_bisector(params)
    rot = _align_to_normal(normal)
    return SurfacePose(params.region.center.copy(), euler_angles(rot))


def init_poses(
    params: ScenarioParams,
    seed: int,
    radius_scale: float = 2.0,
    cap_spread: float = CAP_SPREAD,
    spin_spread: float = SPIN_SPREAD,
) -> list:
    """Random feasible initial poses for the movable surfaces.

    Positions are rejection-sampled on a spherical cap whose outward
    normals cluster around the tilted mean-direction bisector; outward
    normals on a common sphere can never face one another, which keeps the
    mutual-facing constraint satisfied for every draw. Each surface gets a
    small random spin about its normal. Deterministic per (seed, surface).

    The sphere radius is radius_scale times the region side. A large
    radius gives a nearly flat cap (surfaces close to coplanar, normals
    nearly parallel, facing margins close to zero); a small radius fans
    the normals apart and leaves each surface room to rotate before the
    mutual-facing constraint binds.
    """
    w = _tilted_bisector(params)
    region = params.region
    rho = radius_scale * region.side
    sphere_center = region.center - rho * w
    # tangent frame of the cap
    t1 = np.cross(w, [0.0, 0.0, 1.0])
    if np.linalg.norm(t1) < 1e-9:
        t1 = np.cross(w, [0.0, 1.0, 0.0])
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(w, t1)
    poses = []
    accepted = []
    for b in range(params.surfaces):
        gen = rng.substream(seed, rng.POSES, b)
        placed = False
        for _ in range(MAX_POSE_ATTEMPTS):
            u1, u2 = gen.uniform(-cap_spread, cap_spread, size=2)
            spin = gen.uniform(-spin_spread, spin_spread)
            normal = w + u1 * t1 + u2 * t2
            normal = normal / np.linalg.norm(normal)
            q = sphere_center + rho * normal
            if region.contains_margin(q) < 0.0:
                continue
            if float(normal @ q) < 1e-3:
                continue
            if any(
                np.linalg.norm(q - prev) < params.d_min + 1e-6 for prev in accepted
            ):
                continue
            rot = _align_to_normal(normal) @ rotation_matrix([spin, 0.0, 0.0])
            poses.append(SurfacePose(q, euler_angles(rot)))
            accepted.append(q)
            placed = True
            break
        if not placed:
            raise ValueError(
                f"could not place surface {b} after {MAX_POSE_ATTEMPTS} attempts; "
                "region too small for the requested spacing"
            )
    report = feasibility_check(poses, region, params.d_min)
    assert report.feasible, f"initial poses infeasible: {report.margins}"
    return poses


def tiled_poses(params: ScenarioParams, anchor: SurfacePose | None = None) -> list:
    """Split one aggregate surface into coplanar per-surface blocks.

    The blocks share the anchor's rotation and sit on a grid in the
    anchor's plane with block pitch equal to the block side, so with a
    square budget their elements reproduce the aggregate layout exactly.
    Coplanar equal-normal blocks sit on the boundary of the mutual-facing
    constraint, which the feasibility tolerance admits.

    The exact split can be infeasible: blocks of a single element row tile
    below the minimum spacing, and an anchor pressed against the region
    wall leaves no room for the outer block centers. Those cases fall back
    to the nearest feasible tiling, widening sub-minimum pitches and
    sliding the whole grid back inside the region, at the cost of exact
    element reuse. Raises when even the fallback violates a constraint.
    """
    if anchor is None:
        anchor = fixed_pose(params)
    rot = rotation_matrix(anchor.rotation)
    by, bz = _near_square(params.surfaces)
    pitch = params.wavelength / 2.0

    def build(step_y, step_z, shift):
        poses = []
        for i in range(by):
            off_y = (i - (by - 1) / 2.0) * step_y
            for j in range(bz):
                off_z = (j - (bz - 1) / 2.0) * step_z
                q = anchor.position + shift + rot @ np.array([0.0, off_y, off_z])
                poses.append(SurfacePose(q, anchor.rotation))
        return poses

    step_y = params.elements_x * pitch
    step_z = params.elements_y * pitch
    poses = build(step_y, step_z, np.zeros(3))
    report = feasibility_check(poses, params.region, params.d_min)
    if report.feasible:
        return poses
    margin = params.d_min * (1.0 + 1e-9)
    step_y = max(step_y, margin) if by > 1 else step_y
    step_z = max(step_z, margin) if bz > 1 else step_z
    centers = np.array([p.position for p in build(step_y, step_z, np.zeros(3))])
    lo = np.asarray(params.region.center) - params.region.side / 2.0
    hi = np.asarray(params.region.center) + params.region.side / 2.0
    shift = np.maximum(lo - centers.min(axis=0), 0.0) + np.minimum(
        hi - centers.max(axis=0), 0.0
    )
    poses = build(step_y, step_z, shift)
    report = feasibility_check(poses, params.region, params.d_min)
    if not report.feasible:
        raise ValueError(f"tiled poses infeasible: {report.margins}")
    return poses


def _outward_repair(position, block_rot, margin: float):
    """Rotate the block minimally until its normal clears the outward bound.

    Works in the plane spanned by the normal and the position direction:
    the smallest rotation achieving normal . unit(position) = margin lives
    there. Margins the block already meets leave it untouched.
    """
    q_hat = position / np.linalg.norm(position)
    normal = block_rot[:, 0]
    c = float(normal @ q_hat)
    if c >= margin:
        return block_rot
    s0 = math.sqrt(max(1.0 - c * c, 0.0))
    if s0 < 1e-12:
        return None  # normal anti-parallel to the position, no minimal plane
    delta = math.asin(min(margin, 1.0)) - math.atan2(c, s0)
    axis = np.cross(normal, q_hat)
    axis = axis / np.linalg.norm(axis)
    return axis_angle_matrix(axis * delta) @ block_rot


def _spread_normals(normals: list, min_gap: float) -> list:
    """Push unit vectors pairwise apart until every angle reaches min_gap.

    Repeatedly rotates the closest pair symmetrically in its own plane.
    Coincident vectors get an arbitrary perpendicular plane. Not a packing
    solver; for a handful of directions with a small gap it settles in a
    few passes.
    """
    out = [np.array(n, dtype=float) for n in normals]
    for _ in range(100):
        moved = False
        for a in range(len(out)):
            for b in range(a + 1, len(out)):
                dot = float(np.clip(out[a] @ out[b], -1.0, 1.0))
                angle = math.acos(dot)
                if angle >= min_gap:
                    continue
                axis = np.cross(out[a], out[b])
                s = float(np.linalg.norm(axis))
                if s < 1e-12:
                    axis = np.cross(out[a], [0.0, 0.0, 1.0])
                    if np.linalg.norm(axis) < 1e-9:
                        axis = np.cross(out[a], [0.0, 1.0, 0.0])
                axis = axis / np.linalg.norm(axis)
                step = (min_gap - angle) / 2.0 + 1e-9
                out[a] = axis_angle_matrix(-step * axis) @ out[a]
                out[b] = axis_angle_matrix(step * axis) @ out[b]
                moved = True
        if not moved:
            return out
    return out


def strongest_pairs(scenario: Scenario, count: int) -> list:
    """(user, BS path) index pairs, strongest links first, cycling if short.

    Users are ranked by first-path amplitude, BS paths by their gain, and
    the b-th pair matches the b-th strongest of each. The pairing is what
    a per-surface relay assignment needs: distinct users get distinct
    BS-side signatures, so the receiver can tell them apart.
    """
    users = np.argsort(-np.abs(scenario.user_path_gains[:, 0]), kind="stable")
    paths = np.argsort(-np.abs(scenario.bs_path_gains), kind="stable")
    return [
        (int(users[i % len(users)]), int(paths[i % len(paths)]))
        for i in range(count)
    ]


def assigned_poses(
    params: ScenarioParams,
    scenario: Scenario,
    radius: float,
    outward_margin: float = 0.02,
) -> list | None:
    """Point each surface at its own user: one block per strong link.

    Flat tilings leave the solver serving one or two users through a
    single effective aperture, because every block shares the anchor
    normal and the mutual-facing boundary pins the rotations there. This
    start instead aims surface b at the gain bisector of its assigned
    link (see strongest_pairs): the incoming path of its user and its own
    BS-side path, the rotation that maximizes the product of element
    gains along that relay route.

    Placing each block at radius * normal from a common sphere center
    keeps mutual facing satisfied for any normal assignment, since
    n_b . (q_j - q_b) = radius * (n_b . n_j - 1) <= 0. Spacing then only
    requires an angular gap between normals, which _spread_normals
    enforces; the outward bound gets the usual minimal repair rotation.
    Returns None when the repaired arrangement still violates a
    constraint, e.g. a radius too large for the region.
    """
    doa = scenario.user_directions()[:, 0, :]
    dod = scenario.bs_directions()
    pairs = strongest_pairs(scenario, params.surfaces)
    targets = np.array([-doa[k] - dod[p] for k, p in pairs])
    targets = targets / np.linalg.norm(targets, axis=1, keepdims=True)
    normals = list(targets)
    half_gap = min(params.d_min * (1.0 + 1e-6) / (2.0 * radius), 1.0)
    min_gap = 2.0 * math.asin(half_gap)

    def placed(normals):
        mean = np.sum(normals, axis=0)
        mean = mean / max(np.linalg.norm(mean), 1e-12)
        return params.region.center - radius * mean

    # The raw bisectors usually point back over the origin, far outside the
    # outward bound, and repairing them in place would break the radial
    # facing argument. Alternate spreading and repairing, rebuilding the
    # positions from the repaired normals, until the repairs become no-ops.
    for _ in range(12):
        normals = _spread_normals(normals, min_gap)
        center = placed(normals)
        worst = 0.0
        repaired = []
        for normal in normals:
            rot = _outward_repair(
                center + radius * normal, _align_to_normal(normal), outward_margin
            )
            if rot is None:
                return None
            repaired.append(rot[:, 0])
            worst = max(worst, math.acos(np.clip(rot[:, 0] @ normal, -1.0, 1.0)))
        normals = repaired
        if worst < 1e-9:
            break
    center = placed(normals)
    poses = [
        SurfacePose(center + radius * n, euler_angles(_align_to_normal(n)))
        for n in normals
    ]
    report = feasibility_check(poses, params.region, params.d_min)
    if not report.feasible:
        return None
    return poses


def initial_poses_for_scheme(params: ScenarioParams, scheme: str, seed: int) -> list:
    """Starting poses as the experiment driver uses them.

    All schemes grow out of the same deterministic anchor pose: the
    single-surface schemes start exactly there, and the distributed scheme
    starts from the tiling of that aggregate into blocks. Gaps between
    schemes are then attributable to pose freedom rather than
    initialization luck. The seed argument is accepted for interface
    stability; the randomized cap sampler remains available separately.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "distributed-6dma":
        return tiled_poses(params)
    return [fixed_pose(params)]
