import numpy as np
import pytest
import scipy.sparse as sp

from hpplast.assembly import (
    BoundaryConditionError,
    LoadData,
    assemble_blocks,
    bilinear_a,
    interpolate_J_hp,
    l2_inner,
    linear_functional_l,
    project_I_hp,
    project_P_hp,
)
from hpplast.hp_spaces import DisplacementField, DisplacementSpace, DofSystem, PhysicalField, QhpField
from hpplast.linalg import dump_coo, is_symmetric, load_coo, smallest_eigenvalue_dense
from hpplast.mesh import HpMesh, unit_square
from hpplast.tensors import MaterialLaw

MAT = MaterialLaw(lame_lambda=0.8, lame_mu=1.3, hardening_k=0.6, yield_sigma_y=1.0)
MIXED = lambda i, j: 1 + min((i + j) // 2, 2)


def skewed_mesh():
    nodes = [[0, 0], [1, 0], [2.1, 0.1], [0, 1], [1.1, 0.9], [2, 1.2]]
    elems = [[0, 1, 4, 3], [1, 2, 5, 4]]
    bnd = [(0, 3, "D"), (0, 0, "N"), (0, 2, "N"), (1, 0, "N"), (1, 1, "N"), (1, 2, "N")]
    return HpMesh(nodes, elems, [2, 3], bnd)


def unit(n, i):
    x = np.zeros(n)
    x[i] = 1.0
    return x


@pytest.fixture(scope="module")
def small():
    m = skewed_mesh()
    loads = LoadData(f=(0.3, -1.0), g=(0.5, 0.2), g_sides=("right",))
    return assemble_blocks(m, MAT, loads)


class TestBlocks:
    def test_zero_loads(self):
        s = assemble_blocks(unit_square(2, 2), MAT)
        np.testing.assert_array_equal(s.l, 0)

    def test_single_square_p1(self):
        m = MaterialLaw(1.0, 1.0, 1.0, 1.0)
        s = assemble_blocks(unit_square(1, 1), m)
        np.testing.assert_allclose(s.D.toarray(), np.eye(2), atol=1e-15)
        # |T| (2 mu + k) on the diagonal of C
        np.testing.assert_allclose(s.C.toarray(), 3.0 * np.eye(2), atol=1e-14)

    def test_dimensions(self, small):
        assert s_dims(small) == (small.space.ndof, 2 * small.dofs.N)
        assert small.K == small.dM + small.LN

    def test_symmetry_and_definiteness(self, small):
        assert is_symmetric(small.A) and is_symmetric(small.C)
        assert smallest_eigenvalue_dense(small.A) > 0
        assert smallest_eigenvalue_dense(small.C) > 0
        assert np.all(small.D.diagonal() > 0)

    def test_D_layout(self, small):
        D = small.D.toarray()
        np.testing.assert_array_equal(np.diag(D), np.repeat(small.dofs.d_weights, 2))
        assert np.count_nonzero(D - np.diag(np.diag(D))) == 0

    def test_A_entries_match_bilinear_form(self, small, rng):
        n = small.dM
        for i, j in rng.integers(0, n, size=(6, 2)):
            vi = DisplacementField(small.space, unit(n, i))
            vj = DisplacementField(small.space, unit(n, j))
            assert small.A[i, j] == pytest.approx(bilinear_a(vi, None, vj, None, MAT), abs=1e-12)

    def test_B_sign(self, small, rng):
        # B[i, j] = -a((0, q_j), (v_i, 0)) = (C q_j, eps(v_i))
        n, N = small.dM, small.LN
        B = small.B.toarray()
        for i, j in zip(rng.integers(0, n, 8), rng.integers(0, N, 8)):
            v = DisplacementField(small.space, unit(n, i))
            q = QhpField(small.dofs, unit(N, j))
            assert B[i, j] == pytest.approx(-bilinear_a(None, q, v, None, MAT), abs=1e-12)
            assert B[i, j] == pytest.approx(-bilinear_a(v, None, None, q, MAT), abs=1e-12)

    def test_C_entries(self, small, rng):
        N = small.LN
        for i, j in rng.integers(0, N, size=(6, 2)):
            qi = QhpField(small.dofs, unit(N, i))
            qj = QhpField(small.dofs, unit(N, j))
            assert small.C[i, j] == pytest.approx(bilinear_a(None, qi, None, qj, MAT), abs=1e-12)

    def test_load_vector(self, small, rng):
        n = small.dM
        for i in rng.integers(0, n, 6):
            v = DisplacementField(small.space, unit(n, i))
            assert small.l[i] == pytest.approx(-linear_functional_l(v, small.loads), abs=1e-12)

    def test_no_dirichlet(self):
        with pytest.raises(BoundaryConditionError):
            assemble_blocks(unit_square(2, dirichlet=()), MAT)

    def test_sparsity_pattern(self):
        s = assemble_blocks(unit_square(3, MIXED), MAT)
        rows, cols = [], []
        for e in range(s.mesh.n_elements):
            d = s.space.vector_dofs(e)
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
        pred = sp.coo_matrix((np.ones(sum(map(len, rows))), (np.concatenate(rows), np.concatenate(cols))), shape=s.A.shape)
        pred = sp.csr_matrix(pred)
        pred.sum_duplicates()
        assert pred.nnz == s.A.nnz
        assert (abs(pred) > 0).multiply(abs(s.A) > 0).nnz <= s.A.nnz

    def test_coo_dump(self, small, tmp_path):
        dump_coo(small.A, tmp_path / "A.coo")
        assert abs(load_coo(tmp_path / "A.coo") - small.A).max() == 0


def s_dims(s):
    return s.A.shape[0], s.C.shape[0]


class TestBilinearForm:
    def test_positive(self, small, rng):
        for _ in range(5):
            v = DisplacementField(small.space, rng.normal(size=small.dM))
            q = QhpField(small.dofs, rng.normal(size=small.LN))
            assert bilinear_a(v, q, v, q, MAT) > 0

    def test_symmetric(self, small, rng):
        v, w = (DisplacementField(small.space, rng.normal(size=small.dM)) for _ in range(2))
        q, mu = (QhpField(small.dofs, rng.normal(size=small.LN)) for _ in range(2))
        assert bilinear_a(v, q, w, mu, MAT) == pytest.approx(bilinear_a(w, mu, v, q, MAT), rel=1e-12)

    def test_matches_block_form(self, small, rng):
        a, b = rng.normal(size=small.dM), rng.normal(size=small.LN)
        v = DisplacementField(small.space, a)
        q = QhpField(small.dofs, b)
        quad = a @ small.A @ a - 2 * a @ small.B @ b + b @ small.C @ b
        assert bilinear_a(v, q, v, q, MAT) == pytest.approx(quad, rel=1e-12)

    def test_trace_free_strain_plastic_pair(self):
        # v = (x, -y) has eps = diag(1, -1) = sqrt(2) Phi_1; with q = eps(v) only the hardening term remains
        m = unit_square(2, 2, dirichlet=())
        v = PhysicalField(m, lambda x: np.column_stack([x[:, 0], -x[:, 1]]), lambda x: np.tile(np.diag([1.0, -1.0]), (len(x), 1, 1)))
        q = PhysicalField(m, lambda x: np.tile([np.sqrt(2), 0.0], (len(x), 1)))
        assert bilinear_a(v, q, v, q, MAT.replace(hardening_k=1e-300)) == pytest.approx(0.0, abs=1e-12)
        assert bilinear_a(v, q, v, None, MAT) == pytest.approx(0.0, abs=1e-12)


class TestLinearFunctional:
    def test_zero(self):
        m = unit_square(2, 2)
        v = PhysicalField(m, lambda x: np.ones((len(x), 2)))
        assert linear_functional_l(v, LoadData(), m) == 0.0

    def test_constant_force(self):
        m = unit_square(3, 2, dirichlet=(), width=2.0)
        v = PhysicalField(m, lambda x: np.tile([0.0, 1.0], (len(x), 1)))
        assert linear_functional_l(v, LoadData(f=(0.7, -1.5)), m) == pytest.approx(-3.0, rel=1e-13)

    def test_traction_on_vanishing_edge(self):
        m = unit_square(2, 2, dirichlet=("left",))
        space = DisplacementSpace(m)
        v = DisplacementField(space, np.random.default_rng(0).normal(size=space.ndof))
        loads = LoadData(f=(1.0, 0.0), g=(5.0, 5.0), g_sides=("left",))
        assert linear_functional_l(v, loads) == pytest.approx(linear_functional_l(v, LoadData(f=(1.0, 0.0))), abs=1e-14)

    def test_per_side_tractions(self):
        m = unit_square(2, 1, dirichlet=("left",))
        v = PhysicalField(m, lambda x: np.tile([1.0, 1.0], (len(x), 1)))
        loads = LoadData(g={"right": (1.0, 0.0), "top": (0.0, 2.0)})
        assert linear_functional_l(v, loads, m) == pytest.approx(3.0, rel=1e-14)


class TestProjections:
    def test_P_reproduces_Qhp(self, rng):
        dofs = DofSystem(unit_square(2, [1, 2, 3, 2]), 1.0)
        q = QhpField(dofs, rng.normal(size=(dofs.N, 2)))
        np.testing.assert_allclose(project_P_hp(dofs, q).coeffs, q.coeffs, atol=1e-12)

    def test_P_constant(self):
        m = skewed_mesh()
        dofs = DofSystem(m, 1.0)
        c = PhysicalField(m, lambda x: np.tile([0.4, -0.9], (len(x), 1)))
        np.testing.assert_allclose(project_P_hp(dofs, c).coeffs, np.tile([0.4, -0.9], (dofs.N, 1)), atol=1e-13)

    def test_P_rate_p1(self):
        f = lambda x: np.column_stack([np.sin(3 * x[:, 0]) * x[:, 1], np.cos(2 * x[:, 1])])
        errs = []
        for n in (8, 16):
            m = unit_square(n, 1)
            dofs = DofSystem(m, 1.0)
            Pf = project_P_hp(dofs, PhysicalField(m, f))

            class Diff:
                mesh = m

                def at(self, e, xh):
                    return Pf.at(e, xh) - f(m.map_to_physical(e, xh))

            errs.append(np.sqrt(l2_inner(Diff(), Diff(), m)))
        assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.1)

    def test_J_reproduces_and_respects_bound(self, rng):
        m = unit_square(2, 3)
        dofs = DofSystem(m, 1.0)
        q = QhpField(dofs, rng.normal(size=(dofs.N, 2)))
        np.testing.assert_allclose(interpolate_J_hp(dofs, q).coeffs, q.coeffs, atol=1e-12)
        ball = PhysicalField(m, lambda x: 0.99 * np.column_stack([np.cos(9 * x[:, 0]), np.sin(9 * x[:, 0])]))
        assert np.linalg.norm(interpolate_J_hp(dofs, ball).coeffs, axis=1).max() <= 1.0

    def test_J_rate_p1(self):
        f = lambda x: np.column_stack([np.exp(x[:, 0]), x[:, 1] ** 2])
        errs = []
        for n in (8, 16):
            m = unit_square(n, 1)
            Jf = interpolate_J_hp(DofSystem(m, 1.0), PhysicalField(m, f))

            class Diff:
                mesh = m

                def at(self, e, xh):
                    return Jf.at(e, xh) - f(m.map_to_physical(e, xh))

            errs.append(np.sqrt(l2_inner(Diff(), Diff(), m)))
        assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.1)

    def test_I_reproduces_and_zero(self, rng):
        space = DisplacementSpace(unit_square(3, MIXED))
        v = DisplacementField(space, rng.normal(size=space.ndof))
        np.testing.assert_allclose(project_I_hp(space, MAT, v).coeffs, v.coeffs, atol=1e-11)
        z = DisplacementField(space, np.zeros(space.ndof))
        np.testing.assert_array_equal(project_I_hp(space, MAT, z).coeffs, 0)

    def test_I_rate(self):
        from hpplast.analysis import difference, h1_seminorm_sq

        u = lambda x: np.column_stack([np.sin(np.pi * x[:, 0]) * x[:, 1], x[:, 0] * (1 - x[:, 0]) * x[:, 1] ** 2])

        def grad(x):
            X, Y = x[:, 0], x[:, 1]
            g = np.empty((len(x), 2, 2))
            g[:, 0, 0] = np.pi * np.cos(np.pi * X) * Y
            g[:, 0, 1] = np.sin(np.pi * X)
            g[:, 1, 0] = (1 - 2 * X) * Y**2
            g[:, 1, 1] = 2 * X * (1 - X) * Y
            return g

        for p, expected in ((1, 1.0), (2, 2.0)):
            errs = []
            for n in (4, 8):
                m = unit_square(n, p, dirichlet=("left",))
                space = DisplacementSpace(m)
                f = PhysicalField(m, u, grad)
                errs.append(np.sqrt(h1_seminorm_sq(difference(f, project_I_hp(space, MAT, f), m), m)))
            assert np.log2(errs[0] / errs[1]) == pytest.approx(expected, abs=0.15)


def test_inf_sup_identity(small, rng):
    # sup over (v, q) of (mu, q) / ||(v, q)|| is attained at (0, mu)
    from hpplast.analysis import energy_norms

    dofs = small.dofs
    mu = QhpField(dofs, rng.normal(size=small.LN))
    norm_mu = np.sqrt(l2_inner(mu, mu, dofs.mesh))
    attained = l2_inner(mu, mu, dofs.mesh) / energy_norms(None, mu, dofs.mesh)["pair"]
    assert attained == pytest.approx(norm_mu, rel=1e-13)
    for _ in range(100):
        v = DisplacementField(small.space, rng.normal(size=small.dM))
        q = QhpField(dofs, rng.normal(size=small.LN))
        assert l2_inner(mu, q, dofs.mesh) / energy_norms(v, q, dofs.mesh)["pair"] <= norm_mu * (1 + 1e-13)
