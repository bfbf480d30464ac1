"""Assembly of the saddle-point blocks, the load vector and the projections.

Index layouts follow the coefficient vectors of the nonsmooth system: the
displacement vector ``a`` is node-major with the two components interleaved
(``2 i + k``), the plastic-strain and multiplier vectors ``b`` and ``c`` are
node-major with the ``L`` deviatoric components interleaved (``L i + k``).

``B`` carries the sign ``B = -a((0, Phi_l phi_j), (e_k theta_i, 0))``, i.e. it
is the positive coupling ``(C Phi_l phi_j, eps(e_k theta_i))``; the
consistent affine part of the residual is therefore
``[A, -B, 0; -B^T, C, D] (a, b, c) + (l, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .hp_spaces import (
    DIM,
    AssemblyError,
    DisplacementField,
    DisplacementSpace,
    DofSystem,
    QhpField,
    elevated_rule,
)
from .linalg import Factorization, SingularMatrixError, as_csr
from .mesh import HpMesh, edge_side
from .quadrature import gauss_rule
from .tensors import MaterialLaw, apply_C, basis_S, dev_size, reconstruct


class BoundaryConditionError(AssemblyError):
    pass


@dataclass(frozen=True)
class LoadData:
    """Volume force ``f(x) -> (n, 2)`` and traction ``g(x, normal) -> (n, 2)``.

    Either may be ``None`` (zero) or a constant 2-vector.  ``g_sides``
    restricts the traction to Neumann edges on the named sides of the
    bounding box; ``None`` applies it on every Neumann edge.  ``g`` may also
    be a dict mapping side names to constant vectors (per-side tractions).
    """

    f: Callable | tuple | None = None
    g: Callable | tuple | dict | None = None
    g_sides: tuple | None = None

    def applies_to(self, side: str) -> bool:
        if isinstance(self.g, dict):
            return side in self.g
        return self.g_sides is None or side in self.g_sides

    def volume(self, x) -> np.ndarray:
        if self.f is None:
            return np.zeros((len(x), DIM))
        if callable(self.f):
            return np.asarray(self.f(x), dtype=float).reshape(len(x), DIM)
        return np.broadcast_to(np.asarray(self.f, dtype=float), (len(x), DIM))

    def traction(self, x, normal, side: str | None = None) -> np.ndarray:
        if self.g is None:
            return np.zeros((len(x), DIM))
        if isinstance(self.g, dict):
            return np.broadcast_to(np.asarray(self.g[side], dtype=float), (len(x), DIM))
        if callable(self.g):
            return np.asarray(self.g(x, normal), dtype=float).reshape(len(x), DIM)
        return np.broadcast_to(np.asarray(self.g, dtype=float), (len(x), DIM))

    def scaled(self, factor: float) -> "LoadData":
        def mul(h, with_normal):
            if h is None:
                return None
            if callable(h):
                if with_normal:
                    return lambda x, n: factor * np.asarray(h(x, n), dtype=float)
                return lambda x: factor * np.asarray(h(x), dtype=float)
            if isinstance(h, dict):
                return {k: tuple(factor * np.asarray(v, dtype=float)) for k, v in h.items()}
            return tuple(factor * np.asarray(h, dtype=float))

        return LoadData(mul(self.f, False), mul(self.g, True), self.g_sides)


@dataclass(eq=False)
class SaddleSystem:
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    l: np.ndarray
    space: DisplacementSpace
    dofs: DofSystem
    material: MaterialLaw
    loads: LoadData
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dM(self) -> int:
        return self.A.shape[0]

    @property
    def LN(self) -> int:
        return self.C.shape[0]

    @property
    def K(self) -> int:
        return self.dM + self.LN

    @property
    def mesh(self) -> HpMesh:
        return self.space.mesh

    def linear_operator(self) -> sp.csr_matrix:
        """The ``K x (K + LN)`` matrix of the affine residual part."""
        if "lin" not in self._cache:
            Z = sp.csr_matrix((self.dM, self.LN))
            self._cache["lin"] = as_csr(
                sp.bmat([[self.A, -self.B, Z], [-self.B.T, self.C, self.D]])
            )
        return self._cache["lin"]

    def stiffness_factor(self) -> Factorization:
        if "A_lu" not in self._cache:
            self._cache["A_lu"] = factor_spd(self.A)
        return self._cache["A_lu"]


def factor_spd(A) -> Factorization:
    if A.shape[0] == 0:
        raise BoundaryConditionError("no free displacement unknowns")
    try:
        return Factorization(A, symmetric=True)
    except SingularMatrixError as err:
        raise BoundaryConditionError(f"stiffness matrix is singular: {err}") from None


def basis_strains(G: np.ndarray) -> np.ndarray:
    """Strains of ``e_k theta_j`` from physical gradients ``G[n, j, :]``.

    Returns ``(n, 2*nloc, 2, 2)`` ordered ``(j, k)`` like the vector DOFs.
    """
    n, nloc, _ = G.shape
    eps = np.zeros((n, nloc, DIM, DIM, DIM))
    for k in range(DIM):
        eps[:, :, k, k, :] += 0.5 * G
        eps[:, :, k, :, k] += 0.5 * G
    return eps.reshape(n, nloc * DIM, DIM, DIM)


def _edge_reference(k: int, s: np.ndarray) -> np.ndarray:
    one = np.ones_like(s)
    return {
        0: np.column_stack([s, -one]),
        1: np.column_stack([one, s]),
        2: np.column_stack([-s, one]),
        3: np.column_stack([-one, -s]),
    }[k]


def edge_geometry(mesh: HpMesh, e: int, k: int, nq: int):
    """Reference points, physical points, line weights and outward normal."""
    s, w = gauss_rule(nq, 1).points[:, 0], gauss_rule(nq, 1).weights
    xhat = _edge_reference(k, s)
    a, b = mesh.edge_nodes(e, k)
    t = mesh.nodes[b] - mesh.nodes[a]
    length = np.linalg.norm(t)
    normal = np.array([t[1], -t[0]]) / length
    return xhat, mesh.map_to_physical(e, xhat), w * 0.5 * length, normal


def assemble_stiffness(space: DisplacementSpace, material: MaterialLaw) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    mesh = space.mesh
    for e in range(mesh.n_elements):
        p = int(mesh.degrees[e])
        rule = elevated_rule(p)
        _, G = space.shape_at_rule(e, p + 2)
        w = rule.weights * mesh.jacobian_det(e, rule.points)
        eps = basis_strains(G)
        AT = np.einsum("q,qiab,qjab->ij", w, eps, apply_C(eps, material))
        idx = space.vector_dofs(e)
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(AT.ravel())
    n = space.ndof
    return as_csr(sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)))


def assemble_load(space: DisplacementSpace, loads: LoadData) -> np.ndarray:
    """Load vector ``l = -ell(e_k theta_i)``."""
    mesh = space.mesh
    ell = np.zeros(space.ndof)
    if loads.f is not None:
        for e in range(mesh.n_elements):
            p = int(mesh.degrees[e])
            rule = elevated_rule(p)
            V, _ = space.shape_at_rule(e, p + 2)
            w = rule.weights * mesh.jacobian_det(e, rule.points)
            fx = loads.volume(mesh.map_to_physical(e, rule.points))
            ell[space.vector_dofs(e)] += np.einsum("q,qj,qk->jk", w, V, fx).ravel()
    if loads.g is not None:
        for e, k, tag in mesh.boundary:
            if tag != "N":
                continue
            side = edge_side(mesh, e, k)
            if not loads.applies_to(side):
                continue
            p = int(mesh.degrees[e])
            xhat, x, w, normal = edge_geometry(mesh, e, k, p + 2)
            V, _ = space.shape(e, xhat)
            gx = loads.traction(x, np.broadcast_to(normal, x.shape), side)
            ell[space.vector_dofs(e)] += np.einsum("q,qj,qk->jk", w, V, gx).ravel()
    return -ell


def assemble_blocks(
    mesh: HpMesh,
    material: MaterialLaw,
    loads: LoadData | None = None,
    space: DisplacementSpace | None = None,
    dofs: DofSystem | None = None,
) -> SaddleSystem:
    loads = loads or LoadData()
    space = space or DisplacementSpace(mesh)
    dofs = dofs or DofSystem(mesh, material.yield_sigma_y)
    if not any(t == "D" for _, _, t in mesh.boundary):
        raise BoundaryConditionError("mesh has no clamped boundary; stiffness would be singular")
    L = dofs.L
    Phi = basis_S(DIM)
    CPhi = apply_C(Phi, material)
    # K[k, l] = Phi_k : (C + H) Phi_l
    Kdev = np.einsum("kab,lab->kl", Phi, CPhi) + material.hardening_k * np.eye(L)
    brow, bcol, bval = [], [], []
    crow, ccol, cval = [], [], []
    for e in range(mesh.n_elements):
        p = int(mesh.degrees[e])
        rule = elevated_rule(p)
        _, G = space.shape_at_rule(e, p + 2)
        Vphi = dofs.phi_at_rule(e, p + 2)
        w = rule.weights * mesh.jacobian_det(e, rule.points)
        eps = basis_strains(G)
        BT = np.einsum("q,qiab,qj,lab->ijl", w, eps, Vphi, CPhi).reshape(eps.shape[1], -1)
        vi = space.vector_dofs(e)
        qi = dofs.coeff_dofs(e)
        brow.append(np.repeat(vi, len(qi)))
        bcol.append(np.tile(qi, len(vi)))
        bval.append(BT.ravel())
        Mloc = (Vphi * w[:, None]).T @ Vphi
        CT = np.kron(Mloc, Kdev)
        crow.append(np.repeat(qi, len(qi)))
        ccol.append(np.tile(qi, len(qi)))
        cval.append(CT.ravel())
    dM, LN = space.ndof, L * dofs.N
    A = assemble_stiffness(space, material)
    B = as_csr(sp.coo_matrix((np.concatenate(bval), (np.concatenate(brow), np.concatenate(bcol))), shape=(dM, LN)))
    C = as_csr(sp.coo_matrix((np.concatenate(cval), (np.concatenate(crow), np.concatenate(ccol))), shape=(LN, LN)))
    D = as_csr(sp.diags(np.repeat(dofs.d_weights, L)))
    return SaddleSystem(A, B, C, D, assemble_load(space, loads), space, dofs, material, loads)


# ------------------------------------------------------------ functionals


def _strain(v, e, xhat):
    g = v.grad_at(e, xhat)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def bilinear_a(v, q, w, mu, material: MaterialLaw, mesh: HpMesh | None = None) -> float:
    """``(C(eps(v) - q), eps(w) - mu) + (H q, mu)`` by elevated quadrature.

    ``v, w`` expose ``grad_at``; ``q, mu`` expose ``at`` returning deviatoric
    coefficients.  ``None`` stands for a zero field.
    """
    mesh = mesh or next(f.mesh for f in (v, q, w, mu) if f is not None)
    total = 0.0
    for e in range(mesh.n_elements):
        p = int(mesh.degrees[e])
        rule = elevated_rule(p)
        xh = rule.points
        wt = rule.weights * mesh.jacobian_det(e, xh)
        z = np.zeros((len(xh), DIM, DIM))
        zq = np.zeros((len(xh), dev_size(DIM)))
        ev = _strain(v, e, xh) if v is not None else z
        ew = _strain(w, e, xh) if w is not None else z
        qv = q.at(e, xh) if q is not None else zq
        mv = mu.at(e, xh) if mu is not None else zq
        sig = apply_C(ev - reconstruct(qv), material)
        integrand = np.einsum("nab,nab->n", sig, ew - reconstruct(mv))
        integrand += material.hardening_k * np.einsum("nk,nk->n", qv, mv)
        total += float(wt @ integrand)
    return total


def linear_functional_l(v, loads: LoadData, mesh: HpMesh | None = None) -> float:
    """``ell(v) = <f, v> + <g, v>_{Gamma_N}`` for a field exposing ``at``."""
    mesh = mesh or v.mesh
    total = 0.0
    for e in range(mesh.n_elements):
        p = int(mesh.degrees[e])
        if loads.f is not None:
            rule = elevated_rule(p)
            wt = rule.weights * mesh.jacobian_det(e, rule.points)
            fx = loads.volume(mesh.map_to_physical(e, rule.points))
            total += float(wt @ np.einsum("nk,nk->n", fx, v.at(e, rule.points)))
    if loads.g is not None:
        for e, k, tag in mesh.boundary:
            if tag != "N":
                continue
            side = edge_side(mesh, e, k)
            if not loads.applies_to(side):
                continue
            xhat, x, w, normal = edge_geometry(mesh, e, k, int(mesh.degrees[e]) + 2)
            gx = loads.traction(x, np.broadcast_to(normal, x.shape), side)
            total += float(w @ np.einsum("nk,nk->n", gx, v.at(e, xhat)))
    return total


def l2_inner(f1, f2, mesh: HpMesh) -> float:
    """``(f1, f2)_{0, Omega}`` of two vector/coefficient fields by elevated quadrature."""
    total = 0.0
    for e in range(mesh.n_elements):
        rule = elevated_rule(int(mesh.degrees[e]))
        wt = rule.weights * mesh.jacobian_det(e, rule.points)
        a = np.asarray(f1.at(e, rule.points)).reshape(len(wt), -1)
        b = np.asarray(f2.at(e, rule.points)).reshape(len(wt), -1)
        total += float(wt @ np.einsum("nk,nk->n", a, b))
    return total


# ------------------------------------------------------------ operators


def project_P_hp(dofs: DofSystem, q) -> QhpField:
    """Elementwise L2 projection of a deviatoric field (``at`` -> ``(n, L)``)."""
    mesh = dofs.mesh
    out = np.empty((dofs.N, dofs.L))
    for e in range(mesh.n_elements):
        p = int(mesh.degrees[e])
        rule = elevated_rule(p)
        wt = rule.weights * mesh.jacobian_det(e, rule.points)
        V = dofs.phi_at_rule(e, p + 2)
        rhs = (V * wt[:, None]).T @ np.asarray(q.at(e, rule.points)).reshape(len(wt), dofs.L)
        out[dofs.nodes(e)] = np.linalg.solve(dofs.mass[e], rhs)
    return QhpField(dofs, out)


def interpolate_J_hp(dofs: DofSystem, q) -> QhpField:
    """Nodal interpolation at the element Gauss points."""
    mesh = dofs.mesh
    out = np.empty((dofs.N, dofs.L))
    for e in range(mesh.n_elements):
        pts = gauss_rule(int(mesh.degrees[e]), 2).points
        out[dofs.nodes(e)] = np.asarray(q.at(e, pts)).reshape(len(pts), dofs.L)
    return QhpField(dofs, out)


def project_I_hp(space: DisplacementSpace, material: MaterialLaw, v, A=None) -> DisplacementField:
    """Energy projection ``a((I v - v, 0), (w, 0)) = 0`` for all ``w`` in V_hp."""
    mesh = space.mesh
    rhs = np.zeros(space.ndof)
    for e in range(mesh.n_elements):
        p = int(mesh.degrees[e])
        rule = elevated_rule(p)
        _, G = space.shape_at_rule(e, p + 2)
        wt = rule.weights * mesh.jacobian_det(e, rule.points)
        sig = apply_C(_strain(v, e, rule.points), material)
        rhs[space.vector_dofs(e)] += np.einsum("q,qab,qiab->i", wt, sig, basis_strains(G))
    A = assemble_stiffness(space, material) if A is None else A
    return DisplacementField(space, factor_spd(A).solve(rhs))
