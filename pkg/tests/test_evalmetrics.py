"""
Unit tests for evaluation metrics
"""
import numpy as np
import pytest
from scipy.stats import chisquare

from app.core.exceptions import DegenerateGeometryError
from app.unif.evalmetrics import (
    MetricReport,
    chamfer_and_f1,
    evaluate_mesh,
    f1_score,
    mesh_distances,
    p2s,
    part_assignment,
    recall,
    sample_mesh,
)
from app.unif.fields import ComposedField, SphereField
from app.unif.skeleton import rotation_matrix
from app.unif.surface import Mesh, extract_union


def _square(size: float = 1.0) -> Mesh:
    """Unit square in the z = 0 plane, two triangles"""
    vertices = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=np.float64) * size
    return Mesh(vertices, [[0, 1, 2], [0, 2, 3]])


def _point_triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact distance to the paired triangle via vertex / edge / face region tests, all (K, 3)"""
    ab, ac, ap = b - a, c - a, p - a
    bp, cp = p - b, p - c
    d1, d2 = np.einsum("ij,ij->i", ab, ap), np.einsum("ij,ij->i", ac, ap)
    d3, d4 = np.einsum("ij,ij->i", ab, bp), np.einsum("ij,ij->i", ac, bp)
    d5, d6 = np.einsum("ij,ij->i", ab, cp), np.einsum("ij,ij->i", ac, cp)
    va, vb, vc = d3 * d6 - d5 * d4, d5 * d2 - d1 * d6, d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        closest = a + ab * (vb * denom)[:, None] + ac * (vc * denom)[:, None]

        # Later assignments take precedence
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        closest = np.where(on_bc[:, None], b + (c - b) * t[:, None], closest)

        t = d2 / (d2 - d6)
        on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        closest = np.where(on_ac[:, None], a + ac * t[:, None], closest)

        closest = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, closest)

        t = d1 / (d1 - d3)
        on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        closest = np.where(on_ab[:, None], a + ab * t[:, None], closest)

        closest = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, closest)
        closest = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, closest)

    return np.linalg.norm(p - closest, axis=1)


def _brute_force_distances(points: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Minimum over every triangle"""
    a, b, c = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    result = np.empty(len(points))
    for i, p in enumerate(points):
        result[i] = _point_triangle_distance(np.tile(p, (len(a), 1)), a, b, c).min()
    return result


@pytest.fixture(scope="module")
def sphere() -> Mesh:
    return extract_union(SphereField(0.3), bbox=(np.full(3, -0.5), np.full(3, 0.5)), resolution=32, labels=False)


class TestDistances:
    """Tests for point-to-mesh distances"""

    def test_height_above_square(self):
        """Test a point above the square interior is at its height"""
        assert p2s([[0.5, 0.5, 0.004]], _square()) == pytest.approx(4.0)

    def test_outside_corner(self):
        """Test the closest feature can be a vertex"""
        dist = mesh_distances([[2.0, 2.0, 0.0]], _square())

        assert float(dist[0]) == pytest.approx(np.sqrt(2.0))

    def test_points_on_mesh(self, sphere):
        """Test vertices lie at zero distance"""
        assert float(mesh_distances(sphere.vertices, sphere).max()) < 1e-12

    def test_matches_brute_force(self, sphere):
        """Test closest-point distances against an exhaustive per-triangle search"""
        points = np.random.default_rng(0).uniform(-0.6, 0.6, size=(100, 3))

        np.testing.assert_allclose(mesh_distances(points, sphere), _brute_force_distances(points, sphere),
                                   rtol=0, atol=1e-9)

    def test_degenerate_mesh(self):
        """Test meshes without area are rejected"""
        mesh = Mesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=np.float64), [[0, 1, 2]])

        with pytest.raises(DegenerateGeometryError):
            mesh_distances([[0.0, 0.0, 1.0]], mesh)

    def test_empty_points(self):
        """Test an empty scan is rejected"""
        with pytest.raises(ValueError):
            p2s(np.zeros((0, 3)), _square())


class TestRecall:
    """Tests for recall and f1_score"""

    def test_all_close(self):
        """Test 100% when every point is within 1 mm"""
        points = np.column_stack([np.random.default_rng(1).uniform(0.1, 0.9, size=(20, 2)), np.full(20, 5e-4)])

        assert recall(points, _square()) == 100.0

    def test_all_far(self):
        """Test 0% when every point is 2 mm away"""
        points = np.column_stack([np.random.default_rng(1).uniform(0.1, 0.9, size=(20, 2)), np.full(20, 2e-3)])

        assert recall(points, _square()) == 0.0

    def test_half(self):
        """Test 50% for a half near, half far scan"""
        heights = np.array([5e-4] * 10 + [2e-3] * 10)
        points = np.column_stack([np.full(20, 0.5), np.full(20, 0.5), heights])

        assert recall(points, _square()) == 50.0

    def test_f1(self):
        """Test the harmonic mean and its zero case"""
        assert f1_score(100.0, 0.0) == 0.0
        assert f1_score(0.0, 0.0) == 0.0
        assert f1_score(50.0, 50.0) == pytest.approx(50.0)
        assert f1_score(100.0, 50.0) == pytest.approx(200.0 / 3.0)


class TestChamfer:
    """Tests for chamfer_and_f1 and evaluate_mesh"""

    def test_identical_geometry(self, sphere):
        """Test a scan sampled from the mesh itself"""
        scan = sample_mesh(sphere, 5000, seed=0)
        chamfer, precision, rec, f1 = chamfer_and_f1(scan, sphere, seed=0)

        assert chamfer < 1e-6
        assert precision == 100.0
        assert rec == 100.0
        assert f1 > 99.9

    def test_offset(self):
        """Test a scan offset by delta along the normal"""
        delta = 0.002
        square = _square(0.01)
        scan = sample_mesh(square, 2000, seed=1) + [0.0, 0.0, delta]
        chamfer, _, rec, _ = chamfer_and_f1(scan, square, seed=1)

        assert rec == 0.0
        assert chamfer == pytest.approx(delta * 1000.0, rel=0.1)

    def test_rigid_invariance(self, sphere):
        """Test metrics are unchanged when scan and mesh move together"""
        scan = sample_mesh(sphere, 500, seed=2) * 1.01
        rotation = rotation_matrix([1.0, 2.0, 3.0], 0.7)
        shift = np.array([0.3, -0.1, 0.2])
        moved = Mesh(sphere.vertices @ rotation.T + shift, sphere.triangles)

        before = evaluate_mesh(scan, sphere, seed=4).to_dict()
        after = evaluate_mesh(scan @ rotation.T + shift, moved, seed=4).to_dict()
        for key, value in before.items():
            assert after[key] == pytest.approx(value, rel=1e-6, abs=1e-6), key

    def test_empty_mesh(self):
        """Test an empty mesh scores infinite distances and zero rates"""
        report = evaluate_mesh(np.zeros((3, 3)), Mesh.empty())

        assert report.p2s_mm == float("inf")
        assert report.chamfer_mm == float("inf")
        assert report.f1_pct == 0.0

    def test_sample_uniformity(self):
        """Test quadrant counts of square samples against a uniform chi-square"""
        samples = sample_mesh(_square(), 4000, seed=5)
        quadrant = (samples[:, 0] >= 0.5).astype(int) * 2 + (samples[:, 1] >= 0.5).astype(int)

        _, p_value = chisquare(np.bincount(quadrant, minlength=4))
        assert p_value > 0.01

    def test_sample_count(self):
        """Test sample_mesh count and placement"""
        samples = sample_mesh(_square(), 300, seed=3)

        assert samples.shape == (300, 3)
        assert np.all(samples[:, 2] == 0.0)
        assert samples[:, :2].min() >= -1e-12
        assert samples[:, :2].max() <= 1.0 + 1e-12


class TestMetricReport:
    """Tests for MetricReport validation"""

    def test_valid(self):
        """Test dict conversion"""
        report = MetricReport(1.0, 2.0, 90.0, 80.0, 84.7)

        assert report.to_dict()["precision_pct"] == 80.0

    @pytest.mark.parametrize("values", [(-1.0, 0.0, 0.0, 0.0, 0.0), (0.0, 0.0, 101.0, 0.0, 0.0),
                                        (0.0, 0.0, 0.0, -5.0, 0.0)])
    def test_out_of_range(self, values):
        """Test negative distances and rates outside [0, 100]"""
        with pytest.raises(ValueError):
            MetricReport(*values)


class TestPartAssignment:
    """Tests for part_assignment"""

    def test_half_spaces(self):
        """Test argmin label counts match the half-space split"""
        field = ComposedField([SphereField(0.1, center=(-1.0, 0, 0)), SphereField(0.1, center=(1.0, 0, 0))])
        points = np.random.default_rng(6).uniform(-1.0, 1.0, size=(400, 3))
        left = part_assignment(field, points, 0)
        right = part_assignment(field, points, 1)

        observed = np.array([left, right]) * len(points) / 100.0
        expected = np.array([(points[:, 0] < 0).sum(), (points[:, 0] >= 0).sum()])
        assert left + right == pytest.approx(100.0)
        np.testing.assert_array_equal(observed.round(), expected)
