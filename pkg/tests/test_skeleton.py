"""
Unit tests for skeleton frames, poses and pose-relative quantities
"""
import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from app.core.exceptions import DegenerateGeometryError, MalformedFileError, PoseMismatchError
from app.unif.dataio import bend_pose, preset
from app.unif.skeleton import (
    Pose,
    Skeleton,
    axis_angle,
    bone_frame,
    bone_frames,
    from_local,
    load_poses,
    pose_condition,
    pose_condition_from_frames,
    posed_joints,
    relative_delta_rotation,
    rotation_matrix,
    save_poses,
    to_local,
)

RZ90 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class TestSkeleton:
    """Tests for Skeleton"""

    def test_arm2_topology(self, arm2_skeleton):
        """Test neighbors, adjacency and joint helpers on a two-bone chain"""
        skel = arm2_skeleton

        assert skel.part_count == 2
        assert skel.joint_count == 3
        assert skel.neighbors == [[(1, 1)], [(0, 1)]]
        assert skel.adjacency.tolist() == [[False, True], [True, False]]
        assert skel.adjacent_joints(0) == [1]
        assert skel.shared_joint(0, 1) == 1
        assert skel.far_joint(0, 1) == 0
        assert skel.far_joint(1, 1) == 2
        np.testing.assert_allclose(skel.bone_lengths, [0.4, 0.35])

    def test_branching_neighbors(self):
        """Test that all three bones of a fork are mutual neighbors"""
        skel, _ = preset("ybranch")

        assert skel.neighbors[0] == [(1, 1), (2, 1)]
        assert skel.neighbors[1] == [(0, 1), (2, 1)]
        assert skel.adjacency.sum() == 6

    def test_zero_length_bone(self):
        """Test degenerate bone rejection"""
        with pytest.raises(DegenerateGeometryError):
            Skeleton(["a", "b"], [None, 0], np.zeros((2, 3)), [(0, 1)])

    def test_two_roots(self):
        """Test that a forest is rejected"""
        with pytest.raises(PoseMismatchError):
            Skeleton(["a", "b", "c"], [None, None, 0], np.eye(3), [(0, 2)])

    def test_bone_against_parent_relation(self):
        """Test that bones must run parent -> child"""
        with pytest.raises(PoseMismatchError):
            Skeleton(["a", "b"], [None, 0], np.array([[0, 0, 0], [1, 0, 0]]), [(1, 0)])

    def test_unknown_joint_name(self, arm2_skeleton):
        """Test joint lookup by name"""
        assert arm2_skeleton.joint_index("elbow") == 1
        with pytest.raises(PoseMismatchError):
            arm2_skeleton.joint_index("knee")

    def test_save_load(self, tmp_path, arm2_skeleton):
        """Test JSON roundtrip"""
        path = tmp_path / "skeleton.json"
        arm2_skeleton.save(path)
        loaded = Skeleton.load(path)

        assert loaded.joint_names == arm2_skeleton.joint_names
        assert loaded.parent == arm2_skeleton.parent
        assert loaded.bones == arm2_skeleton.bones
        np.testing.assert_array_equal(loaded.rest_joint_pos, arm2_skeleton.rest_joint_pos)

    def test_load_malformed(self, tmp_path):
        """Test that broken JSON reports its location"""
        path = tmp_path / "skeleton.json"
        path.write_text('{"joints": [\n  {"name": "a",,}\n]}')

        with pytest.raises(MalformedFileError) as exc:
            Skeleton.load(path)
        assert "line 2" in str(exc.value)


class TestPose:
    """Tests for Pose"""

    def test_identity(self):
        """Test identity pose construction"""
        pose = Pose.identity(3)

        assert pose.part_count == 3
        np.testing.assert_array_equal(pose.R[2], np.eye(3))
        np.testing.assert_array_equal(pose.t, np.zeros((3, 3)))

    def test_reject_non_rotation(self):
        """Test that scaled and reflected matrices are rejected"""
        with pytest.raises(PoseMismatchError):
            Pose(2.0 * np.eye(3)[None], np.zeros((1, 3)))
        with pytest.raises(PoseMismatchError):
            Pose(np.diag([1.0, 1.0, -1.0])[None], np.zeros((1, 3)))

    def test_check_part_count(self, arm2_skeleton):
        """Test skeleton/pose mismatch"""
        with pytest.raises(PoseMismatchError):
            Pose.identity(3).check(arm2_skeleton)

    def test_pose_file_roundtrip(self, tmp_path, arm2_skeleton, bent_pose):
        """Test pose files keep rotations exactly and number the frames"""
        path = tmp_path / "poses.json"
        save_poses(path, [Pose.identity(2), bent_pose])
        poses = load_poses(path)

        assert [p.frame_id for p in poses] == [0, 1]
        np.testing.assert_array_equal(poses[1].R, bent_pose.R)
        np.testing.assert_array_equal(poses[1].t, bent_pose.t)

    def test_pose_file_missing_frames(self, tmp_path):
        """Test that a pose file without frames is malformed"""
        path = tmp_path / "poses.json"
        path.write_text(json.dumps({"poses": []}))

        with pytest.raises(MalformedFileError):
            load_poses(path)


class TestBoneFrame:
    """Tests for bone_frame, to_local and from_local"""

    def test_rest_frame(self, line_skeleton):
        """Test midpoint and direction of a bone along +y"""
        R, t = bone_frame(line_skeleton, Pose.identity(1), 0)

        np.testing.assert_allclose(t, [0.0, 0.5, 0.0])
        np.testing.assert_allclose(R[:, 0], [0.0, 1.0, 0.0])
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_rotated_frame(self, line_skeleton):
        """Test a 90 degree rotation about z"""
        pose = Pose(RZ90[None], np.zeros((1, 3)))
        R, t = bone_frame(line_skeleton, pose, 0)

        np.testing.assert_allclose(R[:, 0], [-1.0, 0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(t, [-0.5, 0.0, 0.0], atol=1e-15)

    def test_global_rotation_composes(self, arm2_skeleton):
        """Test that a global rotation left-multiplies every rest frame"""
        rot = Rotation.random(random_state=0).as_matrix()
        pose = Pose.identity(2).transformed(rot, np.zeros(3))
        rest_R, _ = arm2_skeleton.rest_frames

        for n in range(2):
            R, _ = bone_frame(arm2_skeleton, pose, n)
            np.testing.assert_allclose(R, rot @ rest_R[n], atol=1e-12)

    def test_frames_orthonormal(self):
        """Test right-handed orthonormal frames for every stickman bone"""
        skel, _ = preset("stickman")
        rotations, _ = bone_frames(skel, Pose.identity(skel.part_count))

        for R in rotations:
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0)

    def test_bone_index_out_of_range(self, line_skeleton):
        """Test bone index validation"""
        with pytest.raises(IndexError):
            bone_frame(line_skeleton, Pose.identity(1), 1)

    def test_to_local_identity(self):
        """Test identity frame"""
        np.testing.assert_array_equal(to_local([1.0, 2.0, 3.0], (np.eye(3), np.zeros(3))), [1.0, 2.0, 3.0])

    def test_to_local_rotated(self):
        """Test R^T (x - t) with Rz(90) and t = (1, 0, 0)"""
        local = to_local([1.0, 1.0, 0.0], (RZ90, np.array([1.0, 0.0, 0.0])))

        np.testing.assert_allclose(local, [1.0, 0.0, 0.0], atol=1e-15)

    def test_from_local_inverts(self):
        """Test from_local(to_local(x)) == x"""
        frame = (Rotation.random(random_state=3).as_matrix(), np.array([0.3, -0.2, 1.0]))
        points = np.random.default_rng(0).normal(size=(10, 3))

        np.testing.assert_allclose(from_local(to_local(points, frame), frame), points, atol=1e-12)


class TestPoseCondition:
    """Tests for pose condition vectors"""

    def test_identity_frames(self):
        """Test that identity frames at the origin repeat (I, 0)"""
        z = pose_condition_from_frames(np.tile(np.eye(3), (3, 1, 1)), np.zeros((3, 3)), 1)
        block = np.concatenate([np.eye(3).reshape(-1), np.zeros(3)])

        np.testing.assert_array_equal(z, np.tile(block, 3))

    def test_self_block(self, arm2_skeleton, bent_pose):
        """Test that the block of the part itself is always (I, 0)"""
        for n in range(2):
            z = pose_condition(arm2_skeleton, bent_pose, n).reshape(2, 12)
            np.testing.assert_allclose(z[n, :9], np.eye(3).reshape(-1), atol=1e-12)
            np.testing.assert_allclose(z[n, 9:], 0.0, atol=1e-12)

    def test_length(self):
        """Test 12 values per bone"""
        z = pose_condition_from_frames(np.tile(np.eye(3), (20, 1, 1)), np.zeros((20, 3)), 0)

        assert z.shape == (240,)

    def test_invariant_to_global_motion(self, arm2_skeleton, bent_pose):
        """Test that a common rigid motion leaves the condition unchanged"""
        moved = bent_pose.transformed(Rotation.random(random_state=1).as_matrix(), np.array([1.0, 2.0, 3.0]))

        np.testing.assert_allclose(
            pose_condition(arm2_skeleton, moved, 0), pose_condition(arm2_skeleton, bent_pose, 0), atol=1e-12
        )


class TestRelativeDeltaRotation:
    """Tests for relative_delta_rotation"""

    def test_rest_pose(self, arm2_skeleton):
        """Test zero angle when the pose is the rest pose"""
        rest = Pose.identity(2)
        _, angle, _ = relative_delta_rotation(arm2_skeleton, rest, rest, 0, 1)

        assert angle == 0.0

    def test_elbow_bent_90(self, arm2_skeleton):
        """Test a 90 degree bend about z at the shared joint"""
        pose = bend_pose(arm2_skeleton, {"elbow": rotation_matrix([0, 0, 1], np.pi / 2)})
        axis, angle, center = relative_delta_rotation(arm2_skeleton, Pose.identity(2), pose, 0, 1)
        R0, _ = bone_frame(arm2_skeleton, pose, 0)

        assert angle == pytest.approx(np.pi / 2)
        np.testing.assert_allclose(np.abs(R0 @ axis), [0.0, 0.0, 1.0], atol=1e-12)
        # elbow sits half a bone along the first axis of part 0
        np.testing.assert_allclose(center, [0.2, 0.0, 0.0], atol=1e-12)

    def test_elbow_stays_fixed(self, arm2_skeleton, bent_pose):
        """Test that bending at a joint keeps it in place"""
        joints = posed_joints(arm2_skeleton, bent_pose)

        np.testing.assert_allclose(joints[1], arm2_skeleton.rest_joint_pos[1], atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(joints[2] - joints[1]), 0.35)

    def test_axis_angle_identity(self):
        """Test the fixed axis at angle zero"""
        axis, angle = axis_angle(np.eye(3))

        assert angle == 0.0
        np.testing.assert_array_equal(axis, [0.0, 0.0, 1.0])
