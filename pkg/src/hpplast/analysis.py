"""Multiplier recovery, norms, the plasticity error term and convergence studies.

Every integral here uses the elevated per-element Gauss rule.  Fields are
objects exposing ``at(e, xhat)`` (and ``grad_at`` for displacements) on a
given mesh; fields from coarser levels are transferred with
:func:`hpplast.hp_spaces.on_mesh`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import LoadData, SaddleSystem, assemble_blocks, project_P_hp
from .benchmarks import Problem
from .hp_spaces import (
    DIM,
    DisplacementField,
    DofSystem,
    PhysicalField,
    QhpField,
    elevated_rule,
    on_mesh,
)
from .linalg import Factorization
from .mesh import HpMesh, refine_uniform
from .quadrature import gauss_rule
from .solver import SolveReport, SolverConfig, newton_solve
from .tensors import MaterialLaw, apply_C, deviator, reconstruct

CSV_HEADER = ["level", "h_max", "p_min", "ndof", "err_pair", "err_lambda", "e_plast", "aux_err", "order_pair"]


class InfeasibleMultiplierError(ValueError):
    pass


class _Fn:
    def __init__(self, mesh, at, grad_at=None):
        self.mesh = mesh
        self._at = at
        self._grad = grad_at

    def at(self, e, xhat):
        return self._at(e, xhat)

    def grad_at(self, e, xhat):
        return self._grad(e, xhat)


def difference(f1, f2, mesh: HpMesh):
    """``f1 - f2`` on ``mesh``; either may be ``None`` (zero)."""
    f1, f2 = on_mesh(f1, mesh), on_mesh(f2, mesh)

    def at(e, x):
        a = f1.at(e, x) if f1 is not None else 0.0
        b = f2.at(e, x) if f2 is not None else 0.0
        return np.asarray(a - b, dtype=float)

    def grad_at(e, x):
        a = f1.grad_at(e, x) if f1 is not None else 0.0
        b = f2.grad_at(e, x) if f2 is not None else 0.0
        return np.asarray(a - b, dtype=float)

    return _Fn(mesh, at, grad_at)


def _element_rules(mesh: HpMesh):
    for e in range(mesh.n_elements):
        rule = elevated_rule(int(mesh.degrees[e]))
        yield e, rule.points, rule.weights * mesh.jacobian_det(e, rule.points)


def _sym(g):
    return 0.5 * (g + np.swapaxes(g, -1, -2))


# ------------------------------------------------------------------ norms


def l2_norm_sq(f, mesh: HpMesh, per_element: bool = False):
    out = np.zeros(mesh.n_elements)
    for e, xh, w in _element_rules(mesh):
        v = np.asarray(f.at(e, xh)).reshape(len(w), -1)
        out[e] = w @ np.einsum("nk,nk->n", v, v)
    return out if per_element else float(out.sum())


def h1_seminorm_sq(v, mesh: HpMesh, per_element: bool = False):
    """``|v|_1^2 = ||eps(v)||_0^2``."""
    out = np.zeros(mesh.n_elements)
    for e, xh, w in _element_rules(mesh):
        eps = _sym(v.grad_at(e, xh))
        out[e] = w @ np.einsum("nab,nab->n", eps, eps)
    return out if per_element else float(out.sum())


def energy_norms(v=None, q=None, mesh: HpMesh | None = None, per_element: bool = False) -> dict:
    """``|v|_1``, ``||v||_1``, ``||q||_0`` and the pair norm ``||(v, q)||``."""
    mesh = mesh or next(f.mesh for f in (v, q) if f is not None)
    z = np.zeros(mesh.n_elements)
    semi = h1_seminorm_sq(v, mesh, True) if v is not None else z
    l2v = l2_norm_sq(v, mesh, True) if v is not None else z
    l2q = l2_norm_sq(q, mesh, True) if q is not None else z
    out = {
        "v_semi": math.sqrt(semi.sum()),
        "v_h1": math.sqrt(semi.sum() + l2v.sum()),
        "q_l2": math.sqrt(l2q.sum()),
        "pair": math.sqrt(semi.sum() + l2v.sum() + l2q.sum()),
    }
    if per_element:
        out["pair_sq_elements"] = semi + l2v + l2q
    return out


# --------------------------------------------------------------- recovery


def stress_deviator_field(u, p, material: MaterialLaw, mesh: HpMesh):
    """Pointwise ``dev(sigma(u, p) - H p)`` as deviatoric coefficients."""
    u, p = on_mesh(u, mesh), on_mesh(p, mesh)

    def at(e, xh):
        eps = _sym(u.grad_at(e, xh)) if u is not None else np.zeros((len(xh), DIM, DIM))
        pc = p.at(e, xh) if p is not None else np.zeros((len(xh), 2))
        sig = apply_C(eps - reconstruct(pc), material)
        return deviator(sig) - material.hardening_k * pc

    return _Fn(mesh, at)


def recover_lambda(u, p, material: MaterialLaw, dofs: DofSystem) -> QhpField:
    """``P_hp(dev(sigma(u, p) - H p))`` on the space of ``dofs``."""
    return project_P_hp(dofs, stress_deviator_field(u, p, material, dofs.mesh))


# ------------------------------------------------ discrete multiplier set


def biorthogonality_matrix(dofs: DofSystem) -> sp.csr_matrix:
    """``(phi_i, varphi_j)`` by elevated quadrature (block diagonal by element)."""
    blocks = []
    for e in range(dofs.mesh.n_elements):
        p = int(dofs.mesh.degrees[e])
        rule = elevated_rule(p)
        w = rule.weights * dofs.mesh.jacobian_det(e, rule.points)
        V = dofs.phi(e, rule.points)
        blocks.append((V * w[:, None]).T @ dofs.dual(e, rule.points))
    return sp.block_diag(blocks, format="csr")


def psi_hp(dofs: DofSystem, b) -> np.ndarray:
    """Discrete plasticity functional: Q_hp quadrature of ``sigma_y |q|_F``.

    ``b`` holds primal coefficients with trailing shape ``(N, L)``; leading
    axes are treated as a batch.
    """
    b = np.asarray(b, dtype=float)
    batch = b.shape[:-2]
    out = np.zeros(batch)
    for e in range(dofs.mesh.n_elements):
        p = int(dofs.mesh.degrees[e])
        V = dofs.phi_at_rule(e, p)
        rule = gauss_rule(p)
        w = rule.weights * dofs.mesh.jacobian_det(e, rule.points)
        vals = np.einsum("qk,...kl->...ql", V, b[..., dofs.nodes(e), :])
        out = out + np.linalg.norm(vals, axis=-1) @ (dofs.sigma_y * w)
    return out


# -------------------------------------------------------- plasticity error


def psi(q, sigma_y: float, mesh: HpMesh) -> float:
    """Continuous plasticity functional ``(sigma_y, |q|_F)`` by quadrature."""
    total = 0.0
    for e, xh, w in _element_rules(mesh):
        total += sigma_y * float(w @ np.linalg.norm(q.at(e, xh), axis=1))
    return total


def plasticity_error(mu, p_N, lambda_N, sigma_y: float, mesh: HpMesh | None = None, per_element: bool = False, rtol: float = 1e-12):
    """``||mu - lambda_N||^2 + psi(p_N) - (mu, p_N)`` for ``|mu| <= sigma_y``.

    Feasibility is checked at the quadrature points.
    """
    mesh = mesh or p_N.mesh
    mu, p_N, lambda_N = (on_mesh(f, mesh) for f in (mu, p_N, lambda_N))
    out = np.zeros(mesh.n_elements)
    for e, xh, w in _element_rules(mesh):
        m = mu.at(e, xh)
        if np.any(np.linalg.norm(m, axis=1) > sigma_y * (1 + rtol)):
            raise InfeasibleMultiplierError(f"|mu|_F exceeds sigma_y on element {e}")
        p = p_N.at(e, xh)
        d = m - lambda_N.at(e, xh)
        integrand = np.einsum("nk,nk->n", d, d) + sigma_y * np.linalg.norm(p, axis=1) - np.einsum("nk,nk->n", m, p)
        out[e] = w @ integrand
    return out if per_element else float(out.sum())


def project_mu_star(p_N, lambda_N, sigma_y: float, mesh: HpMesh | None = None):
    """Radial projection of ``lambda_N + p_N / 2`` onto the ``sigma_y`` ball."""
    mesh = mesh or p_N.mesh
    p_N, lambda_N = on_mesh(p_N, mesh), on_mesh(lambda_N, mesh)

    def at(e, xh):
        hat = lambda_N.at(e, xh) + 0.5 * p_N.at(e, xh)
        n = np.linalg.norm(hat, axis=1)
        with np.errstate(divide="ignore"):
            factor = np.where(n > sigma_y, sigma_y / np.where(n > 0, n, 1.0), 1.0)
        return factor[:, None] * hat

    return _Fn(mesh, at)


# ------------------------------------------------------- auxiliary problem


def auxiliary_space(mesh: HpMesh) -> HpMesh:
    """One uniform refinement with every degree raised by one."""
    fine = refine_uniform(mesh)
    return fine.with_degrees(fine.degrees + 1)


def solve_auxiliary(lambda_N, loads: LoadData, material: MaterialLaw, fine: HpMesh, system: SaddleSystem | None = None):
    """Galerkin solution of ``a((u*, p*), (v, q)) = ell(v) - (lambda_N, q)``.

    Returns ``(u*, p*)`` as fields on ``fine``.
    """
    sys_ = system or assemble_blocks(fine, material, loads)
    dofs = sys_.dofs
    lam = on_mesh(lambda_N, fine)
    r = np.zeros((dofs.N, dofs.L))
    for e in range(fine.n_elements):
        p = int(fine.degrees[e])
        rule = elevated_rule(p)
        w = rule.weights * fine.jacobian_det(e, rule.points)
        V = dofs.phi_at_rule(e, p + 2)
        r[dofs.nodes(e)] = (V * w[:, None]).T @ lam.at(e, rule.points)
    K = sp.bmat([[sys_.A, -sys_.B], [-sys_.B.T, sys_.C]], format="csc")
    rhs = np.concatenate([-sys_.l, -r.ravel()])
    sol = Factorization(K, symmetric=True).solve(rhs)
    return DisplacementField(sys_.space, sol[: sys_.dM]), QhpField(dofs, sol[sys_.dM :])


# ----------------------------------------------------------- error report


@dataclass
class ErrorReport:
    energy_norm_pair: float
    lambda_error: float
    e_plast: float
    aux_error: float
    contributions: dict = field(default_factory=dict)

    @property
    def total_sq(self) -> float:
        return self.energy_norm_pair**2 + self.lambda_error**2

    @property
    def estimate_sq(self) -> float:
        return self.aux_error**2 + self.e_plast


@dataclass
class Reference:
    """Exact or overkill solution against which discrete solutions are measured."""

    mesh: HpMesh | None
    u: object
    p: object
    lam: object


def exact_reference(problem: Problem) -> Reference:
    return Reference(
        None,
        ("exact", problem.exact_u, problem.exact_grad),
        None,
        ("exact", problem.exact_lambda),
    )


def solve_problem(problem: Problem, config: SolverConfig | None = None) -> SolveReport:
    sys_ = assemble_blocks(problem.mesh, problem.material, problem.loads)
    return newton_solve(sys_, config)


def overkill_reference(problem: Problem, refinements: int = 2, config: SolverConfig | None = None) -> tuple[Reference, SolveReport]:
    mesh = problem.mesh
    for _ in range(refinements):
        mesh = refine_uniform(mesh)
    mesh = mesh.with_degrees(mesh.degrees + 1)
    rep = solve_problem(problem.with_mesh(mesh), config)
    if not rep.converged:
        raise RuntimeError(f"overkill reference did not converge: {rep.message}")
    return Reference(mesh, rep.displacement, rep.plastic_strain, rep.multiplier), rep


def _integration_mesh(mesh: HpMesh, ref: Reference) -> HpMesh:
    return mesh if ref.mesh is None else ref.mesh


def _as_field(obj, mesh):
    if isinstance(obj, tuple) and obj and obj[0] == "exact":
        if len(obj) == 3:
            return PhysicalField(mesh, obj[1], obj[2])
        return PhysicalField(mesh, obj[1])
    return on_mesh(obj, mesh)


def error_report(report: SolveReport, ref: Reference, aux: bool = True) -> ErrorReport:
    """Errors of a converged solve against ``ref`` plus the computable terms."""
    sys_ = report.system
    mesh = sys_.mesh
    material = sys_.material
    imesh = _integration_mesh(mesh, ref)
    u_ref = _as_field(ref.u, imesh)
    p_ref = _as_field(ref.p, imesh) if ref.p is not None else None
    lam_ref = _as_field(ref.lam, imesh)
    uN, pN, lamN = report.displacement, report.plastic_strain, report.multiplier
    norms = energy_norms(difference(u_ref, uN, imesh), difference(p_ref, pN, imesh), imesh, per_element=True)
    lam_err_el = l2_norm_sq(difference(lam_ref, lamN, imesh), imesh, per_element=True)
    sy = material.yield_sigma_y
    mu_star = project_mu_star(pN, lamN, sy, mesh)
    ep_el = plasticity_error(mu_star, pN, lamN, sy, mesh, per_element=True)
    contributions = {"pair_sq": norms["pair_sq_elements"], "lambda_sq": lam_err_el, "e_plast": ep_el}
    aux_err = float("nan")
    if aux:
        fine = auxiliary_space(mesh)
        us, ps = solve_auxiliary(lamN, sys_.loads, material, fine)
        an = energy_norms(difference(us, uN, fine), difference(ps, pN, fine), fine, per_element=True)
        aux_err = an["pair"]
        contributions["aux_sq"] = an["pair_sq_elements"]
    return ErrorReport(norms["pair"], math.sqrt(lam_err_el.sum()), float(ep_el.sum()), aux_err, contributions)


# ------------------------------------------------------- convergence study


@dataclass
class ConvergenceStudy:
    rows: list
    reference: str
    regularity: dict = field(default_factory=lambda: {"s": None, "t": None, "l": None})
    flags: list = field(default_factory=list)

    @property
    def orders(self) -> list:
        return [r["order_pair"] for r in self.rows]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in CSV_HEADER])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and math.isnan(v):
        return ""
    return f"{float(v):.17g}"


def run_convergence_study(
    problem: Problem,
    levels: int,
    degree: int | None = None,
    reference: str = "auto",
    config: SolverConfig | None = None,
    aux: bool = True,
) -> ConvergenceStudy:
    """Solve on ``levels`` uniform refinements of ``problem.mesh``.

    ``reference`` is ``"manufactured"`` (exact solution), ``"overkill"`` (two
    refinements beyond the finest level with degree + 1) or ``"auto"``.
    Orders are ``log2`` ratios of the pair-norm error between consecutive
    levels.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if reference == "auto":
        reference = "manufactured" if problem.has_exact else "overkill"
    mesh = problem.mesh if degree is None else problem.mesh.with_degrees(degree)
    meshes = [mesh]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    if reference == "manufactured":
        if not problem.has_exact:
            raise ValueError("problem has no exact solution")
        ref = exact_reference(problem)
    elif reference == "overkill":
        ref, _ = overkill_reference(problem.with_mesh(meshes[-1]), 2, config)
    else:
        raise ValueError(f"unknown reference mode {reference!r}")
    rows, flags = [], []
    prev = None
    for lev, m in enumerate(meshes):
        rep = solve_problem(problem.with_mesh(m), config)
        if not rep.converged:
            flags.append(f"level {lev}: solver did not converge ({rep.message})")
        er = error_report(rep, ref, aux=aux)
        order = None
        if prev is not None and er.energy_norm_pair > 0:
            order = math.log2(prev / er.energy_norm_pair)
            if order < 0:
                flags.append(f"level {lev}: error increased")
        prev = er.energy_norm_pair
        rows.append(
            {
                "level": lev,
                "h_max": m.h_max,
                "p_min": int(m.degrees.min()),
                "ndof": rep.system.dM + 2 * rep.system.LN,
                "err_pair": er.energy_norm_pair,
                "err_lambda": er.lambda_error,
                "e_plast": er.e_plast,
                "aux_err": er.aux_error,
                "order_pair": order,
                "report": er,
                "iterations": rep.iterations,
            }
        )
    return ConvergenceStudy(rows, reference, flags=flags)
