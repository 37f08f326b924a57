"""
Unit tests for adjacent part seaming and competing-parts weights
"""
import math

import numpy as np
import pytest
import torch

from app.core.exceptions import DegenerateGeometryError
from app.unif.dataio import bend_pose, preset
from app.unif.deform import (
    NeighborGeometry,
    PoseContext,
    RigidnessCoeffs,
    aps_offset,
    blend_weights,
    bone_projection_rigidness,
    canonicalize,
    canonicalize_points,
    neighbor_share,
    rigidness,
    scaled_rotation,
    split_point,
    to_part_local,
)
from app.unif.skeleton import Pose, bone_frame, from_local, posed_joints, rotation_matrix, to_local


def _line_geometry() -> NeighborGeometry:
    """A = (-1,0,0), B = (1,0,0), joint and Q at the origin"""
    A = torch.tensor([-1.0, 0.0, 0.0], dtype=torch.float64)
    B = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    return NeighborGeometry(O=torch.zeros(3, dtype=torch.float64), A=A, B=B, Q=split_point(A, B, 1.0, 1.0))


class TestSplitPoint:
    """Tests for split_point"""

    def test_equal_lengths_midpoint(self):
        """Test Q at the midpoint for equal lengths"""
        Q = split_point([0.0, 0.0, 0.0], [2.0, 4.0, 0.0], 0.5, 0.5)

        np.testing.assert_allclose(Q.numpy(), [1.0, 2.0, 0.0])

    def test_ratio(self):
        """Test |AQ| / |QB| = 2"""
        Q = split_point([0.0, 0.0, 0.0], [3.0, 0.0, 0.0], 2.0, 1.0)

        np.testing.assert_allclose(Q.numpy(), [2.0, 0.0, 0.0])

    def test_coincident_endpoints(self):
        """Test degenerate A == B"""
        with pytest.raises(DegenerateGeometryError):
            split_point([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], 1.0, 1.0)

    def test_non_positive_length(self):
        """Test length validation"""
        with pytest.raises(DegenerateGeometryError):
            split_point([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.0, 1.0)


class TestRigidness:
    """Tests for rigidness and blend_weights"""

    def test_projection_on_q(self):
        """Test r1 = r2 = 1 when x projects onto Q with zero biases"""
        r1, r2 = rigidness([0.0, 0.3, 0.2], _line_geometry(), 2.0, 0.0, 2.0, 0.0)

        assert float(r1) == pytest.approx(1.0)
        assert float(r2) == pytest.approx(1.0)

    def test_projection_on_a(self):
        """Test r1 = e^2 at P = A with the initial alpha"""
        r1, r2 = rigidness([-1.0, 0.5, 0.0], _line_geometry(), 2.0, 0.0, 2.0, 0.0)

        assert float(r1) == pytest.approx(math.exp(2.0))
        assert float(r2) == pytest.approx(math.exp(-2.0))

    def test_symmetric_plane(self):
        """Test equal rigidness on the bisector plane of AB"""
        x = torch.tensor([[0.0, 0.4, -0.1], [0.0, -2.0, 3.0]], dtype=torch.float64)
        r1, r2 = rigidness(x, _line_geometry(), 1.5, 0.2, 1.5, 0.2)

        torch.testing.assert_close(r1, r2)

    def test_batch_shape(self):
        """Test one rigidness pair per point"""
        x = torch.randn(7, 3, dtype=torch.float64)
        r1, r2 = rigidness(x, _line_geometry(), 2.0, 0.0, 2.0, 0.0)

        assert r1.shape == (7,)
        assert bool((r1 > 0).all()) and bool((r2 > 0).all())

    def test_bone_projection_variant(self):
        """Test the joint-based projection ratio"""
        r1, r2 = bone_projection_rigidness([-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0])

        assert float(r1) == pytest.approx(math.e)
        assert float(r2) == pytest.approx(1.0 / math.e)

    @pytest.mark.parametrize("seed", range(6))
    def test_collinear_bones_match_bone_projection(self, seed):
        """Test both rigidness variants agree on a straight joint (Q == O)"""
        rng = np.random.default_rng(seed)
        O = rng.normal(size=3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        len_a, len_b = (float(v) for v in rng.uniform(0.2, 1.5, size=2))
        A, B = O - len_a * direction, O + len_b * direction
        geo = NeighborGeometry(O=torch.as_tensor(O), A=torch.as_tensor(A), B=torch.as_tensor(B),
                               Q=split_point(A, B, len_a, len_b))
        alpha1, alpha2 = (float(v) for v in rng.uniform(0.5, 3.0, size=2))
        beta1, beta2 = (float(v) for v in rng.normal(size=2))
        x = torch.as_tensor(O + rng.normal(scale=0.7, size=(50, 3)))

        torch.testing.assert_close(geo.Q, torch.as_tensor(O))
        r1, r2 = rigidness(x, geo, alpha1, beta1, alpha2, beta2)
        e1, e2 = bone_projection_rigidness(x, O, A, B, alpha1, beta1, alpha2, beta2)

        torch.testing.assert_close(r1, e1, rtol=1e-10, atol=0.0)
        torch.testing.assert_close(r2, e2, rtol=1e-10, atol=0.0)

    @pytest.mark.parametrize("alpha, beta", [(2.0, 0.0), (0.7, -0.3), (3.5, 0.8)])
    def test_monotone_toward_first_bone(self, alpha, beta):
        """Test r1 and w1 rise, r2 falls, as x moves from the joint to the far end of bone 1"""
        O = torch.zeros(3, dtype=torch.float64)
        A = torch.tensor([-1.0, 0.0, 0.0], dtype=torch.float64)
        B = 0.8 * torch.tensor([0.5, math.sqrt(3.0) / 2.0, 0.0], dtype=torch.float64)
        geo = NeighborGeometry(O=O, A=A, B=B, Q=split_point(A, B, 1.0, 0.8))
        t = torch.linspace(0.0, 1.0, 41, dtype=torch.float64).unsqueeze(-1)
        x = O + t * (A - O) + torch.tensor([0.0, 0.1, 0.2], dtype=torch.float64)

        r1, r2 = rigidness(x, geo, alpha, beta, alpha, beta)
        w1, _ = blend_weights(r1, r2)

        assert bool((torch.diff(r1) > 0).all())
        assert bool((torch.diff(r2) < 0).all())
        assert bool((torch.diff(w1) > 0).all())

    def test_blend_equal(self):
        """Test r1 = r2"""
        w1, w2 = blend_weights(2.0, 2.0)

        assert float(w1) == 0.5
        assert float(w2) == 0.5

    def test_blend_ratio(self):
        """Test r1 = 3, r2 = 1"""
        w1, w2 = blend_weights(3.0, 1.0)

        assert float(w1) == pytest.approx(0.75)
        assert float(w2) == pytest.approx(0.25)

    def test_blend_sums_to_one(self):
        """Test w1 + w2 == 1 exactly"""
        r = torch.rand(1000, 2, dtype=torch.float64) * 10.0 + 1e-3
        w1, w2 = blend_weights(r[:, 0], r[:, 1])

        assert bool(((w1 + w2) == 1.0).all())
        assert bool(((w1 >= 0) & (w1 <= 1)).all())

    def test_blend_non_positive(self):
        """Test rigidness must be strictly positive"""
        with pytest.raises(DegenerateGeometryError):
            blend_weights(0.0, 1.0)


class TestScaledRotation:
    """Tests for scaled_rotation and aps_offset"""

    def test_zero_weight(self):
        """Test w = 0 gives the identity"""
        R = scaled_rotation([0.0, 0.0, 1.0], 1.3, 0.0)

        torch.testing.assert_close(R, torch.eye(3, dtype=torch.float64))

    def test_full_weight(self):
        """Test w = 1 gives the full rotation"""
        axis = np.array([1.0, 2.0, -1.0]) / math.sqrt(6.0)
        R = scaled_rotation(axis, 0.8, 1.0)

        np.testing.assert_allclose(R.numpy(), rotation_matrix(axis, 0.8), atol=1e-12)

    def test_half_of_right_angle(self):
        """Test Rz(45) from theta = pi/2, w = 0.5"""
        R = scaled_rotation([0.0, 0.0, 1.0], math.pi / 2, 0.5).numpy()
        c = math.sqrt(2.0) / 2.0

        np.testing.assert_allclose(R, [[c, -c, 0.0], [c, c, 0.0], [0.0, 0.0, 1.0]], atol=1e-12)

    def test_batched_weights(self):
        """Test one matrix per weight"""
        R = scaled_rotation([0.0, 1.0, 0.0], 1.0, torch.tensor([0.0, 0.5, 1.0], dtype=torch.float64))

        assert R.shape == (3, 3, 3)
        torch.testing.assert_close(R[0], torch.eye(3, dtype=torch.float64))

    def test_offset_zero_angle(self):
        """Test no offset without rotation"""
        offset = aps_offset([0.3, 0.1, -0.2], [([0.0, 0.0, 1.0], 0.0, [0.0, 0.0, 0.0], 0.7)])

        torch.testing.assert_close(offset, torch.zeros(3, dtype=torch.float64))

    def test_offset_single_neighbor(self):
        """Test x = (0,1,0) rotated back by 45 degrees about z"""
        x = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
        offset = aps_offset(x, [([0.0, 0.0, 1.0], math.pi / 2, [0.0, 0.0, 0.0], 0.5)])
        c = math.sqrt(2.0) / 2.0

        np.testing.assert_allclose((x + offset).numpy(), [c, c, 0.0], atol=1e-12)

    def test_offset_rotation_center_fixed(self):
        """Test the rotation centre does not move"""
        center = [0.2, 0.0, 0.0]
        offset = aps_offset(center, [([0.0, 1.0, 0.0], 1.1, center, 0.4)])

        torch.testing.assert_close(offset, torch.zeros(3, dtype=torch.float64))

    def test_offset_matches_rotation_matrix(self):
        """Test R_{w theta}^T (x - t) + t - x against the explicit matrix"""
        x = torch.randn(20, 3, dtype=torch.float64)
        center = torch.tensor([0.1, -0.3, 0.5], dtype=torch.float64)
        axis = np.array([0.0, 0.6, 0.8])
        weights = torch.rand(20, dtype=torch.float64)
        offset = aps_offset(x, [(axis, 0.9, center, weights)])

        for i in range(20):
            R = scaled_rotation(axis, 0.9, weights[i])
            expected = R.T @ (x[i] - center) + center - x[i]
            torch.testing.assert_close(offset[i], expected)


class TestCanonicalize:
    """Tests for canonicalize / canonicalize_points"""

    def test_rest_pose_is_rigid(self, arm2_skeleton):
        """Test x_bar = x_n at the rest pose"""
        rest = Pose.identity(2)
        coeffs = RigidnessCoeffs(2, arm2_skeleton.adjacency)
        x = np.random.default_rng(0).normal(scale=0.3, size=(16, 3))

        result = canonicalize(x, arm2_skeleton, rest, rest, coeffs, 0)

        np.testing.assert_allclose(result.detach().numpy(), to_local(x, bone_frame(arm2_skeleton, rest, 0)))

    def test_joint_is_fixed_point(self, arm2_skeleton, bent_pose):
        """Test zero offset at the shared joint"""
        coeffs = RigidnessCoeffs(2, arm2_skeleton.adjacency)
        elbow = posed_joints(arm2_skeleton, bent_pose)[1]

        for n in range(2):
            result = canonicalize(elbow, arm2_skeleton, Pose.identity(2), bent_pose, coeffs, n)
            expected = to_local(elbow, bone_frame(arm2_skeleton, bent_pose, n))
            np.testing.assert_allclose(result.detach().numpy(), expected, atol=1e-12)

    def test_aps_disabled(self, arm2_skeleton, bent_pose):
        """Test the rigid local transform without seaming"""
        ctx = PoseContext.build(arm2_skeleton, Pose.identity(2), bent_pose)
        coeffs = RigidnessCoeffs(2, arm2_skeleton.adjacency)
        x = torch.randn(8, 3, dtype=torch.float64)

        torch.testing.assert_close(canonicalize_points(x, ctx, coeffs, 1, aps=False), to_part_local(x, ctx, 1))

    def test_shares_complement(self, arm2_skeleton, bent_pose):
        """Test that the two parts split each point's rotation into w and 1 - w"""
        ctx = PoseContext.build(arm2_skeleton, Pose.identity(2), bent_pose)
        coeffs = RigidnessCoeffs(2, arm2_skeleton.adjacency)
        with torch.no_grad():
            coeffs.alpha.copy_(torch.tensor([[0.0, 1.3], [2.7, 0.0]], dtype=torch.float64))
            coeffs.beta_r.copy_(torch.tensor([[0.0, -0.4], [0.25, 0.0]], dtype=torch.float64))
        x = torch.randn(32, 3, dtype=torch.float64) * 0.2 + torch.tensor([0.4, 0.0, 0.0], dtype=torch.float64)

        w_from_0 = neighbor_share(to_part_local(x, ctx, 0), ctx.neighbors[0][0], coeffs, 0)
        w_from_1 = neighbor_share(to_part_local(x, ctx, 1), ctx.neighbors[1][0], coeffs, 1)

        torch.testing.assert_close(w_from_0 + w_from_1, torch.ones(32, dtype=torch.float64), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("degrees", [15.0, 45.0, 90.0])
    def test_seam_closure(self, arm2_skeleton, degrees):
        """Test that both parts map a point to the same rest position"""
        pose = bend_pose(arm2_skeleton, {"elbow": rotation_matrix([0, 0, 1], np.deg2rad(degrees))})
        rest = Pose.identity(2)
        ctx = PoseContext.build(arm2_skeleton, rest, pose)
        coeffs = RigidnessCoeffs(2, arm2_skeleton.adjacency)
        elbow = posed_joints(arm2_skeleton, pose)[1]
        x = elbow + np.random.default_rng(int(degrees)).normal(scale=0.05, size=(64, 3))
        x = torch.as_tensor(x, dtype=torch.float64)

        rest_positions = []
        for n in range(2):
            x_bar = canonicalize_points(x, ctx, coeffs, n).detach().numpy()
            rest_positions.append(from_local(x_bar, bone_frame(arm2_skeleton, rest, n)))

        np.testing.assert_allclose(rest_positions[0], rest_positions[1], atol=1e-9)

    def test_inverse_q_ratio(self, arm2_skeleton, bent_pose):
        """Test that the inverse orientation swaps the split lengths"""
        rest = Pose.identity(2)
        default = PoseContext.build(arm2_skeleton, rest, bent_pose).neighbors[0][0].geometry
        inverse = PoseContext.build(arm2_skeleton, rest, bent_pose, q_ratio="inverse").neighbors[0][0].geometry

        ratio = lambda g: float(torch.linalg.norm(g.Q - g.A) / torch.linalg.norm(g.B - g.Q))
        assert ratio(default) == pytest.approx(0.4 / 0.35)
        assert ratio(inverse) == pytest.approx(0.35 / 0.4)

    def test_middle_bone_joint_offset(self):
        """Test that a middle part's joint moves only through its other neighbor's rotation"""
        skeleton, _ = preset("arm3")
        pose = bend_pose(skeleton, {"elbow": rotation_matrix([0, 0, 1], np.deg2rad(40.0)),
                                    "wrist": rotation_matrix([0, 0, 1], np.deg2rad(-30.0))})
        ctx = PoseContext.build(skeleton, Pose.identity(3), pose)
        coeffs = RigidnessCoeffs(3, skeleton.adjacency)
        terms = ctx.neighbors[1]
        assert len(terms) == 2

        for term, other in (terms, terms[::-1]):
            x = ctx.joints[term.joint].unsqueeze(0)
            x_n = to_part_local(x, ctx, 1)
            shared = aps_offset(x_n, [(term.axis, term.angle, term.center, neighbor_share(x_n, term, coeffs, 1))])
            far = aps_offset(x_n, [(other.axis, other.angle, other.center, neighbor_share(x_n, other, coeffs, 1))])

            torch.testing.assert_close(shared, torch.zeros_like(shared), rtol=0, atol=1e-12)
            assert float(torch.linalg.vector_norm(far)) > 1e-4
            torch.testing.assert_close(canonicalize_points(x, ctx, coeffs, 1) - x_n, far)


class TestRigidnessCoeffs:
    """Tests for RigidnessCoeffs"""

    def test_initial_values(self, arm2_skeleton):
        """Test alpha = 2 and beta = 0 at init"""
        coeffs = RigidnessCoeffs(2, arm2_skeleton.adjacency)
        alpha_n, beta_n, alpha_b, beta_b = coeffs.pair(0, 1)

        assert float(alpha_n) == 2.0 and float(alpha_b) == 2.0
        assert float(beta_n) == 0.0 and float(beta_b) == 0.0

    def test_non_adjacent_pair(self):
        """Test that pairs must be adjacent"""
        coeffs = RigidnessCoeffs(3, np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool))

        with pytest.raises(DegenerateGeometryError):
            coeffs.pair(0, 2)

    def test_mask_gradients(self):
        """Test that non-adjacent entries receive no gradient"""
        adjacency = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool)
        coeffs = RigidnessCoeffs(3, adjacency)
        (coeffs.alpha.sum() + coeffs.beta_r.sum()).backward()
        coeffs.mask_gradients()

        np.testing.assert_array_equal(coeffs.alpha.grad.numpy(), adjacency.astype(float))
        np.testing.assert_array_equal(coeffs.beta_r.grad.numpy(), adjacency.astype(float))
