"""Rotation conventions, element placement and constraint margins.

The rotation oracle is scipy's Rotation with extrinsic x-y-z order, which
composes to the same R_z R_y R_x product the package defines.
"""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from passive6dma.geometry import (
    FeasibilityReport,
    LocalLayout,
    SiteRegion,
    SurfacePose,
    axis_angle_matrix,
    direction_vector,
    element_position,
    element_positions,
    euler_angles,
    feasibility_check,
    feasibility_margins,
    rotation_matrix,
    skew,
    surface_normal,
)


def random_angles(gen, n):
    return gen.uniform(0.0, 2.0 * math.pi, size=(n, 3))


def test_rotation_matrix_matches_scipy():
    gen = np.random.default_rng(7)
    for u in random_angles(gen, 200):
        expected = Rotation.from_euler("xyz", u).as_matrix()
        np.testing.assert_allclose(rotation_matrix(u), expected, atol=1e-12)


def test_rotation_matrix_is_special_orthogonal():
    gen = np.random.default_rng(8)
    for u in random_angles(gen, 100):
        r = rotation_matrix(u)
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


def test_euler_angles_roundtrip():
    gen = np.random.default_rng(9)
    for u in random_angles(gen, 200):
        r = rotation_matrix(u)
        np.testing.assert_allclose(rotation_matrix(euler_angles(r)), r, atol=1e-9)


def test_euler_angles_gimbal_case():
    # zeta_y = pi/2 collapses x and z; the convention pins zeta_x to zero
    u = np.array([0.3, math.pi / 2.0, 1.1])
    r = rotation_matrix(u)
    back = euler_angles(r)
    assert back[0] == 0.0
    np.testing.assert_allclose(rotation_matrix(back), r, atol=1e-9)


def test_axis_angle_matches_scipy_rotvec():
    gen = np.random.default_rng(10)
    for _ in range(100):
        delta = gen.normal(size=3)
        expected = Rotation.from_rotvec(delta).as_matrix()
        np.testing.assert_allclose(axis_angle_matrix(delta), expected, atol=1e-12)
    np.testing.assert_allclose(axis_angle_matrix(np.zeros(3)), np.eye(3))


def test_skew_reproduces_cross_product():
    gen = np.random.default_rng(11)
    a, b = gen.normal(size=3), gen.normal(size=3)
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-14)


def test_surface_pose_wraps_angles():
    pose = SurfacePose([0, 0, 0], [-0.5, 2.0 * math.pi + 0.25, 7.0])
    assert np.all(pose.rotation >= 0.0)
    assert np.all(pose.rotation < 2.0 * math.pi)
    assert pose.rotation[0] == pytest.approx(2.0 * math.pi - 0.5)


def test_surface_pose_rejects_bad_shapes():
    with pytest.raises(ValueError):
        SurfacePose([0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        SurfacePose([0, 0, 0], [[0, 0, 0]])


def test_grid_layout_centered_half_wavelength():
    lam = 0.125
    layout = LocalLayout.grid(2, 2, lam / 2.0)
    assert layout.num_elements == 4
    # centered: offsets sum to zero, pitch between neighbours is lambda/2
    np.testing.assert_allclose(layout.offsets.sum(axis=0), np.zeros(3), atol=1e-15)
    assert np.all(layout.offsets[:, 0] == 0.0)
    dists = np.linalg.norm(layout.offsets[0] - layout.offsets[1:], axis=1)
    assert dists.min() == pytest.approx(lam / 2.0)


def test_element_positions_identity_pose():
    layout = LocalLayout.grid(3, 2, 0.1)
    pose = SurfacePose([1.0, -2.0, 0.5], [0.0, 0.0, 0.0])
    expected = pose.position + layout.offsets
    np.testing.assert_allclose(element_positions(pose, layout), expected)


def test_element_positions_rotated_oracle():
    # brute force: rotate each offset separately with the scipy matrix
    gen = np.random.default_rng(12)
    layout = LocalLayout.grid(2, 3, 0.0625)
    u = gen.uniform(0, 2 * math.pi, size=3)
    q = gen.normal(size=3)
    pose = SurfacePose(q, u)
    r = Rotation.from_euler("xyz", u).as_matrix()
    expected = np.array([q + r @ off for off in layout.offsets])
    np.testing.assert_allclose(element_positions(pose, layout), expected, atol=1e-12)
    np.testing.assert_allclose(element_position(pose, layout, 3), expected[3])
    with pytest.raises(IndexError):
        element_position(pose, layout, 6)


def test_rigid_pose_preserves_pairwise_distances():
    layout = LocalLayout.grid(4, 4, 0.0625)
    ref = element_positions(SurfacePose(np.zeros(3), np.zeros(3)), layout)
    pose = SurfacePose([2.0, 1.0, -0.3], [0.7, 1.9, 4.4])
    moved = element_positions(pose, layout)
    for pts in (ref, moved):
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        np.testing.assert_allclose(
            d, np.linalg.norm(ref[:, None, :] - ref[None, :, :], axis=2), atol=1e-12
        )
    assert np.linalg.norm(moved.mean(axis=0) - pose.position) < 1e-12


def test_surface_normal_is_rotated_x_axis():
    u = np.array([0.0, 0.0, math.pi / 2.0])
    n = surface_normal(SurfacePose(np.zeros(3), u))
    np.testing.assert_allclose(n, [0.0, 1.0, 0.0], atol=1e-12)
    assert np.linalg.norm(n) == pytest.approx(1.0)


def test_direction_vector_unit_and_components():
    e, a = 0.7, 2.1
    d = direction_vector(e, a)
    assert np.linalg.norm(d) == pytest.approx(1.0)
    assert d[2] == pytest.approx(math.cos(e))
    assert math.atan2(d[1], d[0]) == pytest.approx(a - 2 * math.pi, abs=1e-12) or (
        math.atan2(d[1], d[0]) == pytest.approx(a)
    )


def test_region_margin_sign():
    region = SiteRegion()
    assert region.contains_margin(region.center) == pytest.approx(0.5)
    corner = region.center + 0.5
    assert region.contains_margin(corner) == pytest.approx(0.0)
    assert region.contains_margin(corner + 0.2) < 0.0


def test_feasibility_margins_hand_case():
    # two parallel surfaces side by side, normals +x, centers on the x axis
    region = SiteRegion(center=[1.5, 0.0, 0.0], side=1.0)
    positions = np.array([[1.3, 0.0, 0.0], [1.3, 0.4, 0.0]])
    normals = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    rep = feasibility_margins(positions, normals, region, d_min=0.1)
    # the second surface is 0.4 off axis, so it sets the region margin
    assert rep.region == pytest.approx(0.1)
    assert rep.spacing == pytest.approx(0.3)
    # q_j - q_b is orthogonal to both normals: facing margin exactly zero
    assert rep.facing == pytest.approx(0.0, abs=1e-15)
    assert rep.outward == pytest.approx(1.3)
    assert rep.feasible


def test_feasibility_detects_each_violation():
    region = SiteRegion(center=[1.5, 0.0, 0.0], side=1.0)
    base = np.array([[1.5, 0.0, 0.0], [1.5, 0.3, 0.0]])
    nx = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])

    outside = base.copy()
    outside[0, 0] = 2.3
    assert feasibility_margins(outside, nx, region, 0.1).region < 0

    close = base.copy()
    close[1, 1] = 0.05
    assert feasibility_margins(close, nx, region, 0.1).spacing < 0

    # second surface tilted to look at the first: facing violated
    look_left = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    rep = feasibility_margins(base, look_left, region, 0.1)
    assert rep.facing < 0
    assert not rep.feasible

    inward = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert feasibility_margins(base, inward, region, 0.1).outward < 0


def test_facing_margin_checks_both_orderings():
    region = SiteRegion(center=[1.5, 0.0, 0.0], side=2.0)
    positions = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    # first surface looks along +x straight at the second: only the
    # ordered pair (b=0, j=1) is violated
    normals = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    rep = feasibility_margins(positions, normals, region, 0.1)
    assert rep.facing == pytest.approx(-1.0)


def test_single_surface_pairwise_margins_vacuous():
    region = SiteRegion()
    rep = feasibility_check(
        [SurfacePose(region.center, [0.0, 0.0, 0.0])], region, 0.1
    )
    assert rep.spacing == math.inf
    assert rep.facing == math.inf
    assert rep.feasible


def test_report_tolerance_boundary():
    rep = FeasibilityReport(region=0.0, spacing=-1e-10, facing=0.0, outward=0.0)
    assert rep.feasible
    rep = FeasibilityReport(region=0.0, spacing=-1e-8, facing=0.0, outward=0.0)
    assert not rep.feasible
    assert rep.worst == pytest.approx(-1e-8)
