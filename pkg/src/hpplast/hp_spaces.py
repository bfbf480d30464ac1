"""Finite element spaces: continuous displacements and discontinuous Q_hp.

Displacements use tensor-product Lagrange shape functions at Gauss-Lobatto
points.  An edge shared by elements of different degree carries the smaller
degree; the higher-degree side interpolates that trace, which keeps the
space conforming without hanging-node machinery.

The plastic strain space uses Lagrange functions at the element's tensor
Gauss points (``p_T^2`` of them, polynomial degree ``p_T - 1``); the
multiplier uses the biorthogonal family with the same supports.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .mesh import HpMesh
from .quadrature import gauss_legendre_1d, gauss_lobatto, gauss_rule, lagrange_1d, tensor_lagrange
from .tensors import dev_size

DIM = 2


class AssemblyError(RuntimeError):
    pass


class GeometryError(AssemblyError):
    pass


def elevated_rule(p: int):
    """Quadrature used for all volume integrals except the plasticity functional."""
    return gauss_rule(p + 2, 2)


@lru_cache(maxsize=None)
def _gll_tables(p: int, nq: int):
    rule = gauss_rule(nq, 2)
    V, G = tensor_lagrange(gauss_lobatto(p), rule.points)
    return V, G


@lru_cache(maxsize=None)
def _phi_tables(p: int, nq: int):
    rule = gauss_rule(nq, 2)
    return tensor_lagrange(gauss_legendre_1d(p)[0], rule.points)[0]


def _edge_local_nodes(p: int, k: int):
    """Local (a, b) indices along local edge ``k`` from corner k to corner k+1,
    and the coordinate ``s`` in [-1, 1] of each along that edge."""
    x = gauss_lobatto(p)
    r = range(p + 1)
    if k == 0:
        return [(a, 0) for a in r], x
    if k == 1:
        return [(p, b) for b in r], x
    if k == 2:
        return [(a, p) for a in r], -x
    return [(0, b) for b in r], -x


class DisplacementSpace:
    """Scalar continuous hp space ``{theta_i}`` with clamped DOFs eliminated.

    Vector coefficients are stored displacement-major, component-interleaved:
    entry ``2 i + k`` multiplies ``e_k theta_i``.
    """

    def __init__(self, mesh: HpMesh):
        self.mesh = mesh
        nv = mesh.n_nodes
        edges = mesh.edges()
        tags = mesh.boundary_tag()
        keys = sorted(edges)
        self.edge_degree = {
            key: min(int(mesh.degrees[e]) for e, _ in edges[key]) for key in keys
        }
        counter = nv
        edge_dofs = {}
        for key in keys:
            pe = self.edge_degree[key]
            edge_dofs[key] = list(range(counter, counter + pe - 1))
            counter += pe - 1
        interior = []
        for e in range(mesh.n_elements):
            p = int(mesh.degrees[e])
            interior.append(list(range(counter, counter + (p - 1) ** 2)))
            counter += (p - 1) ** 2
        clamped = np.zeros(counter, dtype=bool)
        for key in keys:
            (e, k), *_ = edges[key]
            if tags.get((e, k)) == "D":
                clamped[list(key)] = True
                clamped[edge_dofs[key]] = True
        free = np.full(counter, -1)
        free[~clamped] = np.arange(int((~clamped).sum()))
        self.n_scalar = int((~clamped).sum())
        self._free = free
        self._clamped = clamped

        self.elem_dofs: list[np.ndarray] = []
        self.elem_weights: list[np.ndarray] = []
        for e in range(mesh.n_elements):
            idx, W = self._element_map(e, edge_dofs, interior[e])
            keep = free[idx] >= 0
            self.elem_dofs.append(free[idx][keep])
            self.elem_weights.append(W[:, keep])

    @property
    def M(self) -> int:
        return self.n_scalar

    @property
    def ndof(self) -> int:
        return DIM * self.n_scalar

    def _element_map(self, e, edge_dofs, interior):
        mesh = self.mesh
        p = int(mesh.degrees[e])
        el = [int(v) for v in mesh.elements[e]]
        n = p + 1
        cols: dict = {}
        rows = []

        def col(g):
            if g not in cols:
                cols[g] = len(cols)
            return cols[g]

        W = {}
        for b in range(n):
            for a in range(n):
                W[(a, b)] = {}
        corner_ab = {(0, 0): 0, (p, 0): 1, (p, p): 2, (0, p): 3}
        for ab, c in corner_ab.items():
            W[ab] = {col(el[c]): 1.0}
        for k in range(4):
            va, vb = el[k], el[(k + 1) % 4]
            key = (min(va, vb), max(va, vb))
            pe = self.edge_degree[key]
            nodes_ab, s = _edge_local_nodes(p, k)
            t = s if va == key[0] else -s
            glob = [key[0]] + edge_dofs[key] + [key[1]]
            vals = lagrange_1d(gauss_lobatto(pe), t)
            vals[np.abs(vals) < 1e-14] = 0.0
            vals[np.abs(vals - 1.0) < 1e-14] = 1.0
            for m, ab in enumerate(nodes_ab):
                if ab in corner_ab:
                    continue
                W[ab] = {col(g): vals[m, j] for j, g in enumerate(glob) if vals[m, j] != 0.0}
        it = iter(interior)
        for b in range(1, p):
            for a in range(1, p):
                W[(a, b)] = {col(next(it)): 1.0}
        mat = np.zeros((n * n, len(cols)))
        for b in range(n):
            for a in range(n):
                for j, v in W[(a, b)].items():
                    mat[a + n * b, j] = v
        idx = np.array(sorted(cols, key=cols.get), dtype=int)
        return idx, mat

    def vector_dofs(self, e: int) -> np.ndarray:
        """Global vector indices of element ``e``, ordered ``(dof, component)``."""
        s = self.elem_dofs[e]
        return (DIM * s[:, None] + np.arange(DIM)[None, :]).ravel()

    def shape(self, e: int, xhat):
        """Global-basis values and physical gradients on element ``e``.

        Returns ``(V, G)``: ``V[n, j]`` and ``G[n, j, :]`` for the scalar
        functions ``elem_dofs[e][j]`` at the reference points ``xhat``.
        """
        p = int(self.mesh.degrees[e])
        V, Gref = tensor_lagrange(gauss_lobatto(p), xhat)
        return self._globalize(e, V, Gref, xhat)

    def shape_at_rule(self, e: int, nq: int):
        p = int(self.mesh.degrees[e])
        V, Gref = _gll_tables(p, nq)
        return self._globalize(e, V, Gref, gauss_rule(nq, 2).points)

    def _globalize(self, e, V, Gref, xhat):
        J = self.mesh.jacobian(e, xhat)
        Jinv = np.linalg.inv(J)
        Gphys = np.einsum("nkj,nji->nki", Gref, Jinv)
        W = self.elem_weights[e]
        return V @ W, np.einsum("nkx,kj->njx", Gphys, W)


class DofSystem:
    """Bookkeeping for Q_hp: the Gauss-Lagrange basis and its biorthogonal dual.

    Node ``i = zeta(k, T) = offset[T] + k`` with ``k`` the tensor index of the
    Gauss point (first coordinate fastest).
    """

    def __init__(self, mesh: HpMesh, sigma_y: float):
        self.mesh = mesh
        self.sigma_y = float(sigma_y)
        self.L = dev_size(DIM)
        n_T = mesh.degrees.astype(int) ** DIM
        self.n_T = n_T
        self.offset = np.concatenate([[0], np.cumsum(n_T)])
        self.N = int(self.offset[-1])
        self.element_of = np.repeat(np.arange(mesh.n_elements), n_T)
        self.local_of = np.arange(self.N) - self.offset[self.element_of]
        self.mass: list[np.ndarray] = []
        self.dual_coeffs: list[np.ndarray] = []
        D = np.empty(self.N)
        for e in range(mesh.n_elements):
            G, d_loc = element_mass(mesh, e)
            c = build_biorthogonal(G, d_loc)
            self.mass.append(G)
            self.dual_coeffs.append(c)
            D[self.nodes(e)] = d_loc
        if np.any(D <= 0):
            raise GeometryError("non-positive weight D_i; degenerate element")
        self.d_weights = D
        # (sigma_y, phi_i) / D_i with constant yield stress
        self.sigma_weights = np.full(self.N, self.sigma_y)

    def zeta(self, k: int, e: int) -> int:
        if not 0 <= k < self.n_T[e]:
            raise IndexError(f"local index {k} out of range for element {e}")
        return int(self.offset[e] + k)

    def zeta_inv(self, i: int) -> tuple[int, int]:
        return int(self.local_of[i]), int(self.element_of[i])

    def nodes(self, e: int) -> slice:
        return slice(int(self.offset[e]), int(self.offset[e + 1]))

    def coeff_dofs(self, e: int) -> np.ndarray:
        """Indices into the node-major, L-interleaved coefficient vector."""
        i = np.arange(self.offset[e], self.offset[e + 1])
        return (self.L * i[:, None] + np.arange(self.L)[None, :]).ravel()

    def phi(self, e: int, xhat) -> np.ndarray:
        """Values ``V[n, k]`` of the element's primal basis at ``xhat``."""
        p = int(self.mesh.degrees[e])
        return tensor_lagrange(gauss_legendre_1d(p)[0], xhat)[0]

    def phi_at_rule(self, e: int, nq: int) -> np.ndarray:
        return _phi_tables(int(self.mesh.degrees[e]), nq)

    def dual(self, e: int, xhat) -> np.ndarray:
        """Values of the biorthogonal functions ``varphi_k`` on element ``e``."""
        return self.phi(e, xhat) @ self.dual_coeffs[e].T

    def dual_to_primal(self, mu: np.ndarray) -> np.ndarray:
        """Convert ``(N, L)`` coefficients in the dual basis to the primal one."""
        out = np.empty_like(mu)
        for e in range(self.mesh.n_elements):
            s = self.nodes(e)
            out[s] = self.dual_coeffs[e].T @ mu[s]
        return out

    def primal_to_dual(self, q: np.ndarray) -> np.ndarray:
        out = np.empty_like(q)
        for e in range(self.mesh.n_elements):
            s = self.nodes(e)
            out[s] = np.linalg.solve(self.dual_coeffs[e].T, q[s])
        return out


def lagrange_phi(p: int, k: int, xhat) -> np.ndarray:
    """Reference Gauss-Lagrange function ``k`` (0-based) of degree ``p - 1``."""
    if not 0 <= k < p * p:
        raise IndexError("local index out of range")
    return tensor_lagrange(gauss_legendre_1d(p)[0], xhat)[0][:, k]


def element_mass(mesh: HpMesh, e: int):
    """Element Gram matrix ``(phi_k, phi_l)_T`` and the integrals ``(phi_k, 1)_T``."""
    p = int(mesh.degrees[e])
    rule = elevated_rule(p)
    V = _phi_tables(p, p + 2)
    wdet = rule.weights * mesh.jacobian_det(e, rule.points)
    return (V * wdet[:, None]).T @ V, V.T @ wdet


def build_biorthogonal(G: np.ndarray, d_loc: np.ndarray) -> np.ndarray:
    """Coefficients ``c`` with ``varphi_j = sum_k c[j, k] phi_k``.

    Biorthogonality ``(phi_i, varphi_j) = delta_ij D_i`` reads ``G c^T = diag(D)``.
    """
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e14:
        raise AssemblyError(f"singular element mass matrix (cond = {cond:.2e})")
    return np.linalg.solve(G, np.diag(d_loc)).T


def compute_weights(dofs: DofSystem) -> tuple[np.ndarray, np.ndarray]:
    return dofs.d_weights, dofs.sigma_weights


# ---------------------------------------------------------------- fields


class QhpField:
    """Deviatoric field in Q_hp from ``(N, L)`` node coefficients.

    ``dual=True`` interprets the coefficients in the biorthogonal basis.
    """

    def __init__(self, dofs: DofSystem, coeffs, dual: bool = False):
        self.dofs = dofs
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(dofs.N, dofs.L)
        self.dual = dual

    @cached_property
    def primal_coeffs(self) -> np.ndarray:
        return self.dofs.dual_to_primal(self.coeffs) if self.dual else self.coeffs

    @cached_property
    def dual_coeffs(self) -> np.ndarray:
        return self.coeffs if self.dual else self.dofs.primal_to_dual(self.coeffs)

    @property
    def mesh(self) -> HpMesh:
        return self.dofs.mesh

    def at(self, e: int, xhat) -> np.ndarray:
        return self.dofs.phi(e, xhat) @ self.primal_coeffs[self.dofs.nodes(e)]

    def at_rule(self, e: int, nq: int) -> np.ndarray:
        return self.dofs.phi_at_rule(e, nq) @ self.primal_coeffs[self.dofs.nodes(e)]


def eval_Qhp_field(field: QhpField, x) -> np.ndarray:
    """Pointwise value (deviatoric coefficients) at physical point ``x``."""
    e, xhat = field.mesh.locate(x)
    return field.at(e, xhat)[0]


class DisplacementField:
    def __init__(self, space: DisplacementSpace, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(space.ndof)

    @property
    def mesh(self) -> HpMesh:
        return self.space.mesh

    def _local(self, e):
        return self.coeffs[self.space.vector_dofs(e)].reshape(-1, DIM)

    def at(self, e: int, xhat) -> np.ndarray:
        V, _ = self.space.shape(e, xhat)
        return V @ self._local(e)

    def grad_at(self, e: int, xhat) -> np.ndarray:
        """``g[n, i, j] = d u_i / d x_j``."""
        _, G = self.space.shape(e, xhat)
        return np.einsum("nkj,ki->nij", G, self._local(e))


class PhysicalField:
    """Callable-backed field; ``f`` and ``grad`` take physical points ``(n, 2)``."""

    def __init__(self, mesh: HpMesh, f, grad=None):
        self.mesh = mesh
        self.f = f
        self.grad = grad

    def at(self, e, xhat):
        return np.asarray(self.f(self.mesh.map_to_physical(e, xhat)), dtype=float)

    def grad_at(self, e, xhat):
        if self.grad is None:
            raise AttributeError("field has no gradient")
        return np.asarray(self.grad(self.mesh.map_to_physical(e, xhat)), dtype=float)


class TransferredField:
    """A field from an ancestor mesh viewed on one of its refinements."""

    def __init__(self, field, mesh: HpMesh):
        if not mesh.is_descendant_of(field.mesh):
            raise ValueError("target mesh does not refine the field's mesh")
        self.field = field
        self.mesh = mesh

    def at(self, e, xhat):
        ce, cx = self.mesh.ancestor_points(self.field.mesh, e, xhat)
        return self.field.at(ce, cx)

    def grad_at(self, e, xhat):
        ce, cx = self.mesh.ancestor_points(self.field.mesh, e, xhat)
        return self.field.grad_at(ce, cx)


def on_mesh(field, mesh: HpMesh):
    """View ``field`` on ``mesh`` (identity if it already lives there)."""
    if field is None or getattr(field, "mesh", None) is mesh:
        return field
    if isinstance(field, PhysicalField):
        return PhysicalField(mesh, field.f, field.grad)
    return TransferredField(field, mesh)


@dataclass(frozen=True)
class ZeroField:
    mesh: HpMesh
    width: int

    def at(self, e, xhat):
        return np.zeros((len(np.atleast_2d(xhat)), self.width))

    def grad_at(self, e, xhat):
        return np.zeros((len(np.atleast_2d(xhat)), DIM, DIM))
