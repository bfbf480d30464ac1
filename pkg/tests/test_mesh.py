import numpy as np
import pytest

from hpplast.mesh import (
    GeometryMap,
    HpMesh,
    InvertedElementError,
    MeshError,
    MeshFormatError,
    PointLocationError,
    check_mapping_assumption,
    edge_side,
    jacobian_det,
    map_to_physical,
    read_mesh,
    refine_uniform,
    unit_square,
    write_mesh,
)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
FULL_BOUNDARY = [(0, 0, "D"), (0, 1, "N"), (0, 2, "N"), (0, 3, "N")]


def one_element(corners=SQUARE, p=1):
    return HpMesh(corners, [[0, 1, 2, 3]], [p], FULL_BOUNDARY)


def random_convex_quad(rng):
    base = SQUARE + rng.uniform(-0.2, 0.2, size=(4, 2))
    return base


class TestGeometryMap:
    def test_center_and_corner(self):
        g = GeometryMap(SQUARE)
        np.testing.assert_allclose(map_to_physical(g, [[0.0, 0.0]]), [[0.5, 0.5]])
        np.testing.assert_allclose(map_to_physical(g, [[-1.0, -1.0]]), [SQUARE[0]])
        np.testing.assert_allclose(map_to_physical(g, [[1, -1], [1, 1], [-1, 1]]), SQUARE[1:])

    def test_square_det(self, rng):
        h = 0.3
        g = GeometryMap(h * SQUARE)
        np.testing.assert_allclose(jacobian_det(g, rng.uniform(-1, 1, (5, 2))), h * h / 4)

    def test_parallelogram_det_constant(self, rng):
        g = GeometryMap(np.array([[0, 0], [2, 0.5], [3, 2], [1, 1.5]], dtype=float))
        d = jacobian_det(g, rng.uniform(-1, 1, (4, 2)))
        np.testing.assert_allclose(d, d[0], rtol=1e-14)

    def test_rotation_invariance(self, rng):
        c = random_convex_quad(rng)
        R = np.array([[0.0, -1.0], [1.0, 0.0]])
        x = rng.uniform(-1, 1, (6, 2))
        np.testing.assert_allclose(jacobian_det(GeometryMap(c @ R.T), x), jacobian_det(GeometryMap(c), x))

    def test_inverted_raises(self):
        g = GeometryMap(SQUARE[[0, 3, 2, 1]])  # clockwise
        with pytest.raises(InvertedElementError):
            jacobian_det(g, [[0.0, 0.0]])

    def test_mapping_assumption(self, rng):
        assert check_mapping_assumption(GeometryMap(SQUARE))
        for _ in range(20):
            assert check_mapping_assumption(GeometryMap(random_convex_quad(rng)))


class TestHpMesh:
    def test_area_sum(self, rng):
        m = unit_square(5, 1, width=2.0, height=3.0)
        assert sum(m.area(e) for e in range(m.n_elements)) == pytest.approx(6.0, rel=1e-12)

    def test_sizes(self):
        m = unit_square(4)
        np.testing.assert_allclose(m.sizes, np.sqrt(2) / 4)

    def test_validate_accepts_unit_square(self):
        unit_square(3, lambda i, j: 1 + min((i + j) // 2, 2)).validate()

    def test_validate_rejects_degree_jump(self):
        with pytest.raises(MeshError, match="differ by more than one"):
            unit_square(2, [1, 3, 1, 1]).validate()

    def test_validate_rejects_missing_dirichlet(self):
        m = unit_square(2)
        m2 = HpMesh(m.nodes, m.elements, m.degrees, [(e, k, "N") for e, k, _ in m.boundary])
        with pytest.raises(MeshError, match="Dirichlet"):
            m2.validate()

    def test_validate_rejects_untagged_edge(self):
        m = unit_square(2)
        m2 = HpMesh(m.nodes, m.elements, m.degrees, m.boundary[1:])
        with pytest.raises(MeshError, match="no boundary tag"):
            m2.validate()

    def test_validate_rejects_nonconvex(self):
        c = np.array([[0, 0], [2, 0], [0.5, 0.5], [0, 2]], dtype=float)
        with pytest.raises(InvertedElementError):
            one_element(c).validate()

    def test_locate(self):
        m = unit_square(3)
        e, xhat = m.locate([0.5, 0.5])
        assert e == 4
        np.testing.assert_allclose(xhat, [[0.0, 0.0]], atol=1e-14)
        with pytest.raises(PointLocationError):
            m.locate([1.5, 0.5])

    def test_edge_sides(self):
        m = unit_square(2, dirichlet=("left", "top"))
        sides = {edge_side(m, e, k): t for e, k, t in m.boundary}
        assert sides == {"left": "D", "top": "D", "bottom": "N", "right": "N"}


class TestRefinement:
    def test_one_square(self):
        m = refine_uniform(one_element(p=3))
        assert m.n_elements == 4
        np.testing.assert_array_equal(m.degrees, 3)
        np.testing.assert_allclose([m.area(e) for e in range(4)], 0.25)

    def test_boundary_inherited(self):
        parent = one_element()
        m = refine_uniform(parent)
        tags = sorted(t for _, _, t in m.boundary)
        assert tags == ["D", "D"] + ["N"] * 6
        for e, k, t in m.boundary:
            a, b = m.edge_nodes(e, k)
            mid = 0.5 * (m.nodes[a] + m.nodes[b])
            if t == "D":
                assert mid[1] == 0.0
        m.validate()

    def test_two_refinements(self):
        m = refine_uniform(refine_uniform(one_element()))
        assert m.n_elements == 16
        assert m.h_max == pytest.approx(np.sqrt(2) / 4)
        m.validate()

    def test_conformity(self):
        m = refine_uniform(unit_square(3, 2))
        for key, adj in m.edges().items():
            assert len(adj) in (1, 2)
        assert m.n_nodes == 7 * 7

    def test_ancestor_points(self, rng):
        coarse = unit_square(2, dirichlet=("left",))
        fine = refine_uniform(refine_uniform(coarse))
        for e in range(fine.n_elements):
            xh = rng.uniform(-1, 1, (3, 2))
            ce, cx = fine.ancestor_points(coarse, e, xh)
            np.testing.assert_allclose(coarse.map_to_physical(ce, cx), fine.map_to_physical(e, xh), atol=1e-14)
        assert fine.is_descendant_of(coarse) and not coarse.is_descendant_of(fine)


class TestMeshFile:
    def test_roundtrip(self, tmp_path):
        m = unit_square(3, lambda i, j: 1 + (i + j) % 2, dirichlet=("left", "bottom"))
        write_mesh(m, tmp_path / "m.txt")
        r = read_mesh(tmp_path / "m.txt")
        np.testing.assert_array_equal(r.nodes, m.nodes)
        np.testing.assert_array_equal(r.elements, m.elements)
        np.testing.assert_array_equal(r.degrees, m.degrees)
        assert r.boundary == m.boundary

    def test_comments_allowed(self, tmp_path):
        text = (
            "# one element\nNODES 4\n0 0\n1 0\n1 1\n0 1\nELEMENTS 1\n0 1 2 3 2  # p=2\n"
            "BOUNDARY 4\n0 0 D\n0 1 N\n0 2 N\n0 3 N\n"
        )
        (tmp_path / "m.txt").write_text(text)
        assert read_mesh(tmp_path / "m.txt").degrees[0] == 2

    @pytest.mark.parametrize(
        "text,line",
        [
            ("NODES 4\n0 0\n1 0\n1 1\n0 1\nELEMENTS 1\n0 1 2 3\n", 7),
            ("NODES 2\n0 0\n1 x\n", 3),
            ("NODES 4\n0 0\n1 0\n1 1\n0 1\nELEMENTS 1\n0 1 2 3 1\nBOUNDARY 1\n0 0 Q\n", 9),
            ("NODS 1\n", 1),
        ],
    )
    def test_errors_carry_line_numbers(self, tmp_path, text, line):
        (tmp_path / "m.txt").write_text(text)
        with pytest.raises(MeshFormatError) as info:
            read_mesh(tmp_path / "m.txt")
        assert info.value.line == line and f"line {line}" in str(info.value)

    def test_inverted_element_detected(self, tmp_path):
        text = "NODES 4\n0 0\n0 1\n1 1\n1 0\nELEMENTS 1\n0 1 2 3 1\nBOUNDARY 4\n0 0 D\n0 1 N\n0 2 N\n0 3 N\n"
        (tmp_path / "m.txt").write_text(text)
        with pytest.raises(InvertedElementError):
            read_mesh(tmp_path / "m.txt")
        assert read_mesh(tmp_path / "m.txt", validate=False).n_elements == 1
