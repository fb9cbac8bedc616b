import numpy as np
import pytest

from ergoarm import (
    forward_kinematics,
    link_jacobian,
    load_model,
    manipulability,
    point_on_link,
)
from ergoarm.chain import link_jacobian_at_point, parse_chain

RX_NEG90 = np.array([[1.0, 0, 0], [0, 0, 1], [0, -1, 0]])
RX_POS90 = np.array([[1.0, 0, 0], [0, 0, -1], [0, 1, 0]])
RX_180 = np.array([[1.0, 0, 0], [0, -1, 0], [0, 0, -1]])

# reference pose of the shipped 7-DOF model at q = 0, composed by hand from
# its frame offsets and frozen here
FRANKA_REFERENCE = [
    ((0.0, 0.0, 0.333), np.eye(3)),
    ((0.0, 0.0, 0.333), RX_NEG90),
    ((0.0, 0.0, 0.649), np.eye(3)),
    ((0.0825, 0.0, 0.649), RX_POS90),
    ((0.0, 0.0, 1.033), np.eye(3)),
    ((0.0, 0.0, 1.033), RX_POS90),
    ((0.088, 0.0, 1.033), RX_180),
]


def test_planar_chain_zero_pose(chain3):
    frames = forward_kinematics(chain3, np.zeros(3))
    for j in range(3):
        tip = point_on_link(frames, j, chain3.links[j].p1)
        assert np.allclose(tip, [j + 1.0, 0.0, 0.0], atol=1e-12)


def test_planar_two_link_bent(chain2):
    frames = forward_kinematics(chain2, [np.pi / 2, 0.0])
    tip = point_on_link(frames, 1, chain2.links[1].p1)
    assert np.allclose(tip, [0.0, 2.0, 0.0], atol=1e-12)


def test_franka_reference_pose():
    chain = load_model("franka_7dof")
    frames = forward_kinematics(chain, np.zeros(7))
    for j, (t, r) in enumerate(FRANKA_REFERENCE):
        assert np.allclose(frames.translations[j], t, atol=1e-12), f"link {j}"
        assert np.allclose(frames.rotations[j], r, atol=1e-12), f"link {j}"


def test_frames_orthonormal():
    chain = load_model("franka_7dof")
    rng = np.random.default_rng(0)
    lo, hi = chain.limits
    for _ in range(20):
        frames = forward_kinematics(chain, rng.uniform(lo, hi))
        for r in frames.rotations:
            assert np.allclose(r @ r.T, np.eye(3), atol=1e-9)


def test_point_on_link_basics(chain3):
    frames = forward_kinematics(chain3, [0.3, -0.2, 0.9])
    assert np.allclose(point_on_link(frames, 1, (0.0, 0.0, 0.0)),
                       frames.translations[1])
    with pytest.raises(IndexError):
        point_on_link(frames, 5, (0.0, 0.0))


def test_rigid_distance_invariance(chain3):
    a_local = np.array([0.3, 0.05, 0.0])
    b_local = np.array([0.9, -0.1, 0.0])
    d_ref = np.linalg.norm(a_local - b_local)
    rng = np.random.default_rng(1)
    for _ in range(100):
        frames = forward_kinematics(chain3, rng.uniform(-3, 3, 3))
        a = point_on_link(frames, 2, a_local)
        b = point_on_link(frames, 2, b_local)
        assert np.linalg.norm(a - b) == pytest.approx(d_ref, abs=1e-12)


def test_two_link_tip_jacobian(chain2):
    J = link_jacobian(chain2, np.zeros(2), 1, chain2.links[1].p1)
    assert np.allclose(J[0], [0.0, 0.0], atol=1e-12)   # vx
    assert np.allclose(J[1], [2.0, 1.0], atol=1e-12)   # vy
    assert np.allclose(J[2], [1.0, 1.0], atol=1e-12)   # wz


def test_first_link_jacobian_single_column(chain3):
    J = link_jacobian(chain3, [0.4, 0.8, -0.3], 0, (0.5, 0.0))
    assert np.any(J[:, 0] != 0.0)
    assert np.allclose(J[:, 1:], 0.0)


def _fd_jacobian(chain, q, j, p_local, eps=1e-5):
    """Finite-difference oracle for the point and angular rows."""
    n = chain.n
    pos = np.zeros((3, n))
    rot = np.zeros((3, n))
    for k in range(n):
        dq = np.zeros(n)
        dq[k] = eps
        f_plus = forward_kinematics(chain, q + dq)
        f_minus = forward_kinematics(chain, q - dq)
        pos[:, k] = (point_on_link(f_plus, j, p_local)
                     - point_on_link(f_minus, j, p_local)) / (2 * eps)
        dr = (f_plus.rotations[j] - f_minus.rotations[j]) / (2 * eps)
        w = dr @ forward_kinematics(chain, q).rotations[j].T
        rot[:, k] = [w[2, 1], w[0, 2], w[1, 0]]
    return pos, rot


@pytest.mark.parametrize("model", ["planar_5link", "franka_7dof"])
def test_jacobian_matches_finite_differences(model):
    chain = load_model(model)
    rng = np.random.default_rng(11)
    lo, hi = chain.limits
    for _ in range(12):
        q = rng.uniform(lo, hi)
        frames = forward_kinematics(chain, q)
        for j in range(chain.n):
            p_local = np.asarray(chain.links[j].com_local)
            p_world = point_on_link(frames, j, p_local)
            J = link_jacobian_at_point(chain, frames, j, p_world)
            pos, rot = _fd_jacobian(chain, q, j, p_local)
            if chain.dims == 2:
                assert np.max(np.abs(J[0:2] - pos[0:2])) < 1e-6
                assert np.max(np.abs(J[2] - rot[2])) < 1e-6
            else:
                assert np.max(np.abs(J[0:3] - pos)) < 1e-6
                assert np.max(np.abs(J[3:6] - rot)) < 1e-6


def test_manipulability_identity():
    assert manipulability(np.eye(4)) == pytest.approx(1.0)


def test_manipulability_straight_arm_singular(chain2):
    J = link_jacobian(chain2, np.zeros(2), 1, chain2.links[1].p1, point_only=True)
    assert manipulability(J) == 0.0


def test_manipulability_matches_svd_oracle():
    rng = np.random.default_rng(2)
    for _ in range(30):
        J = rng.normal(size=(3, 7))
        expected = np.prod(np.linalg.svd(J, compute_uv=False))
        assert manipulability(J) == pytest.approx(expected, abs=1e-9)


def test_manipulability_zero_iff_rank_deficient():
    rng = np.random.default_rng(3)
    J = rng.normal(size=(3, 7))
    J[2] = 2.0 * J[0] + 3.0 * J[1]  # exact rank deficiency
    assert manipulability(J) == 0.0
    assert manipulability(rng.normal(size=(3, 7))) > 0.0


def test_upstream_dof_shortage_gives_zero():
    chain = load_model("franka_7dof")
    rng = np.random.default_rng(4)
    lo, hi = chain.limits
    for _ in range(10):
        q = rng.uniform(lo, hi)
        for j in range(5):  # links 1..5 have fewer than 6 upstream joints
            J = link_jacobian(chain, q, j, chain.links[j].com_local)
            assert manipulability(J) == 0.0


def test_pose_smoothness(chain3):
    q = np.array([0.5, -1.0, 0.7])
    delta = 1e-6
    f0 = forward_kinematics(chain3, q)
    f1 = forward_kinematics(chain3, q + delta)
    dt = np.linalg.norm(f1.translations - f0.translations)
    dr = np.linalg.norm(f1.rotations - f0.rotations)
    assert dt < 10 * delta
    assert dr < 10 * delta


def test_with_base_offset(chain2):
    moved = chain2.with_base((1.0, 2.0))
    frames = forward_kinematics(moved, np.zeros(2))
    tip = point_on_link(frames, 1, chain2.links[1].p1)
    assert np.allclose(tip, [3.0, 2.0, 0.0], atol=1e-12)


def test_parse_errors():
    with pytest.raises(ValueError):
        parse_chain("joint\n  origin 0 0\n")  # no dims
    with pytest.raises(ValueError):
        parse_chain("dims 2\n")  # no joints
    with pytest.raises(ValueError):
        parse_chain("dims 2\njoint\n  origin 0 0\n  segment 0 0 1 0\n")  # no volume
    with pytest.raises(ValueError):
        parse_chain("dims 2\njoint\n  origin 0 0\n  volume 1\n")  # no shape


def test_model_volumes_match_capsules():
    chain = load_model("franka_7dof")
    for link in chain.links:
        expected = (np.pi * link.radius**2 * link.length
                    + 4.0 / 3.0 * np.pi * link.radius**3)
        assert link.volume == pytest.approx(expected, rel=1e-3)
