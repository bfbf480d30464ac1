"""Invariant suite run by ``hpplast check`` and reused by the acceptance tests.

Every check takes a :class:`CheckContext` and returns a :class:`CheckResult`.
Randomness comes only from ``numpy.random.default_rng(seed)`` so that the
printed outcome is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import biorthogonality_matrix, psi_hp, recover_lambda
from .assembly import SaddleSystem, assemble_blocks
from .hp_spaces import DofSystem
from .mesh import HpMesh, MeshError, check_mapping_assumption
from .quadrature import gauss_rule
from .solver import (
    NewtonState,
    SolveReport,
    SolverConfig,
    check_complementarity,
    chi,
    chi_subdifferential,
    evaluate_F,
    newton_matrix,
    newton_solve,
)
from .tensors import MaterialLaw

GROUPS = ("geometry", "quadrature", "biorth", "jacobian", "decoupling", "complementarity", "lambda")


@dataclass
class CheckResult:
    group: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{self.group}: {'PASS' if self.ok else 'FAIL'} {self.detail}".rstrip()


@dataclass
class CheckContext:
    mesh: HpMesh
    material: MaterialLaw
    loads: object = None
    config: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 42
    _cache: dict = field(default_factory=dict)

    def rng(self, group: str) -> np.random.Generator:
        # independent stream per group so that --group filtering does not shift draws
        return np.random.default_rng([self.seed, GROUPS.index(group)])

    @property
    def system(self) -> SaddleSystem:
        if "sys" not in self._cache:
            self._cache["sys"] = assemble_blocks(self.mesh, self.material, self.loads)
        return self._cache["sys"]

    @property
    def dofs(self) -> DofSystem:
        return self.system.dofs

    @property
    def solution(self) -> SolveReport:
        if "sol" not in self._cache:
            self._cache["sol"] = newton_solve(self.system, self.config)
        return self._cache["sol"]


def check_geometry(ctx: CheckContext) -> CheckResult:
    try:
        ctx.mesh.validate()
    except MeshError as err:
        return CheckResult("geometry", False, str(err))
    bad = [e for e in range(ctx.mesh.n_elements) if not check_mapping_assumption(ctx.mesh.geometry(e))]
    if bad:
        return CheckResult("geometry", False, f"non-affine Jacobian determinant on elements {bad[:5]}")
    return CheckResult("geometry", True, f"elements={ctx.mesh.n_elements}")


def quadrature_error(p: int, rng: np.random.Generator) -> float:
    """Relative error of the ``p``-point tensor rule on a random polynomial of
    per-variable degree ``2p - 1`` (monomial integrals as the oracle)."""
    deg = 2 * p - 1
    c = rng.uniform(-1, 1, size=(deg + 1, deg + 1))
    a = np.arange(deg + 1)
    mono = np.where(a % 2 == 0, 2.0 / (a + 1), 0.0)
    exact = mono @ c @ mono
    scale = np.abs(mono) @ np.abs(c) @ np.abs(mono)
    rule = gauss_rule(p)
    x, y = rule.points[:, 0], rule.points[:, 1]
    vals = np.einsum("ab,na,nb->n", c, x[:, None] ** a, y[:, None] ** a)
    return abs(rule.weights @ vals - exact) / scale


def check_quadrature(ctx: CheckContext, degrees=range(1, 9), samples: int = 5) -> CheckResult:
    rng = ctx.rng("quadrature")
    worst = max(quadrature_error(p, rng) for p in degrees for _ in range(samples))
    return CheckResult("quadrature", worst <= 1e-12, f"max_rel_err={worst:.3e}")


def biorthogonality_defect(dofs: DofSystem) -> tuple[float, float]:
    G = biorthogonality_matrix(dofs).toarray()
    off = np.abs(G - np.diag(np.diag(G))).max()
    return off / dofs.d_weights.max(), np.abs(np.diag(G) - dofs.d_weights).max() / dofs.d_weights.max()


def check_biorth(ctx: CheckContext) -> CheckResult:
    off, diag = biorthogonality_defect(ctx.dofs)
    return CheckResult("biorth", off <= 1e-12 and diag <= 1e-12, f"offdiag={off:.3e} diag={diag:.3e}")


def random_smooth_state(sys: SaddleSystem, rho: float, rng: np.random.Generator, gap: float = 1e-2) -> NewtonState:
    """Random iterate whose nodes stay at least ``gap * sigma`` off the kink."""
    L = sys.dofs.L
    sigma = sys.dofs.sigma_weights
    b = rng.normal(size=(sys.dofs.N, L)) * sigma[:, None] / max(rho, 1.0)
    c = rng.normal(size=(sys.dofs.N, L)) * sigma[:, None]
    n = np.linalg.norm(c + rho * b, axis=1)
    near = np.abs(n - sigma) < gap * sigma
    c[near] *= 2.0
    return NewtonState(rng.normal(size=sys.dM), b.ravel(), c.ravel())


def nodal_jacobian_error(sigma: float, q, mu, rho: float, h: float = 1e-6) -> float:
    """Relative mismatch between the chosen Jacobian and central differences."""
    dq, dmu = chi_subdifferential(np.array([sigma]), q[None], mu[None], rho)
    J = np.hstack([dq[0], dmu[0]])
    x = np.concatenate([q, mu])
    L = len(q)
    fd = np.empty_like(J)
    for j in range(2 * L):
        e = np.zeros(2 * L)
        e[j] = h
        xp, xm = x + e, x - e
        fd[:, j] = (chi(sigma, xp[:L], xp[L:], rho) - chi(sigma, xm[:L], xm[L:], rho)) / (2 * h)
    return float(np.abs(J - fd).max() / max(np.abs(J).max(), 1e-300))


def check_jacobian(ctx: CheckContext, points: int = 20, h: float = 1e-6) -> CheckResult:
    """Directional central differences of ``F`` against ``H k`` at random smooth states."""
    rng = ctx.rng("jacobian")
    sys = ctx.system
    rho = ctx.config.rho
    worst = 0.0
    for _ in range(points):
        st = random_smooth_state(sys, rho, rng)
        x = st.vector
        v = rng.normal(size=x.shape)
        H = newton_matrix(sys, st, rho, ctx.config.kink_branch)

        def F(y):
            return evaluate_F(sys, NewtonState(y[: sys.dM], y[sys.dM : sys.K], y[sys.K :]), rho)

        fd = (F(x + h * v) - F(x - h * v)) / (2 * h)
        an = H @ v
        worst = max(worst, float(np.linalg.norm(an - fd) / max(np.linalg.norm(an), 1e-300)))
    return CheckResult("jacobian", worst <= 1e-5, f"max_rel_err={worst:.3e}")


def decoupling_samples(dofs: DofSystem, rng: np.random.Generator, n_mu: int = 200, n_q: int = 100):
    """Two-sided sampling of the decoupled description of the discrete multiplier set.

    Returns ``(max violation over feasible samples, number of infeasible
    samples that were detected)``.  The pairing ``(mu, q)`` uses the
    quadrature-assembled matrix ``(phi_i, varphi_j)``, and the plasticity
    functional uses the Q_hp rule, so neither side assumes biorthogonality.
    """
    N, L = dofs.N, dofs.L
    sigma = dofs.sigma_weights
    G = biorthogonality_matrix(dofs)
    worst = -np.inf
    detected = 0
    for _ in range(n_mu):
        mu = rng.normal(size=(N, L))
        mu *= (sigma * rng.uniform(0, 1, N) ** 0.5 / np.linalg.norm(mu, axis=1))[:, None]
        q = rng.normal(size=(n_q, N, L)) * rng.uniform(0, 1, (n_q, N, 1))
        # half of the test functions are aligned with mu, where the bound is tightest
        half = n_q // 2
        q[:half] = rng.uniform(0, 1, (half, N, 1)) * mu[None]
        pair = np.einsum("sil,il->s", q, G @ mu)
        worst = max(worst, float(np.max(pair - psi_hp(dofs, q))))
        bad = mu.copy()
        i = int(rng.integers(N))
        bad[i] *= 1.5 * sigma[i] / np.linalg.norm(bad[i])
        qi = np.zeros((1, N, L))
        qi[0, i] = bad[i] / np.linalg.norm(bad[i])
        pair_bad = float(np.einsum("sil,il->s", qi, G @ bad)[0])
        if pair_bad > psi_hp(dofs, qi)[0] + 1e-10:
            detected += 1
    return worst, detected


def check_decoupling(ctx: CheckContext, n_mu: int = 20, n_q: int = 20) -> CheckResult:
    worst, detected = decoupling_samples(ctx.dofs, ctx.rng("decoupling"), n_mu, n_q)
    ok = worst <= 1e-10 and detected == n_mu
    return CheckResult("decoupling", ok, f"max_excess={worst:.3e} detected={detected}/{n_mu}")


def check_complementarity_group(ctx: CheckContext) -> CheckResult:
    sol = ctx.solution
    if not sol.converged:
        return CheckResult("complementarity", False, sol.message)
    rep = check_complementarity(sol.state, ctx.system)
    return CheckResult("complementarity", rep.ok, f"iterations={sol.iterations} {rep.summary()}")


def lambda_recovery_error(sol: SolveReport) -> float:
    sys = sol.system
    lam = recover_lambda(sol.displacement, sol.plastic_strain, sys.material, sys.dofs)
    c = sol.state.c.reshape(-1, sys.dofs.L)
    return float(np.linalg.norm(lam.dual_coeffs - c) / max(np.linalg.norm(c), 1e-300))


def check_lambda(ctx: CheckContext) -> CheckResult:
    sol = ctx.solution
    if not sol.converged:
        return CheckResult("lambda", False, sol.message)
    err = lambda_recovery_error(sol)
    return CheckResult("lambda", err <= 1e-8, f"rel_err={err:.3e}")


CHECKS = {
    "geometry": check_geometry,
    "quadrature": check_quadrature,
    "biorth": check_biorth,
    "jacobian": check_jacobian,
    "decoupling": check_decoupling,
    "complementarity": check_complementarity_group,
    "lambda": check_lambda,
}


def run_checks(ctx: CheckContext, groups=None) -> list[CheckResult]:
    """Run the selected groups; a failing geometry group skips the groups that need assembly."""
    groups = list(groups or GROUPS)
    unknown = [g for g in groups if g not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check group(s): {', '.join(unknown)}")
    results = []
    geometry_ok = True
    for g in GROUPS:
        if g not in groups:
            continue
        if g not in ("geometry", "quadrature") and not geometry_ok:
            results.append(CheckResult(g, False, "skipped: invalid mesh"))
            continue
        try:
            res = CHECKS[g](ctx)
        except Exception as err:  # a crashing group is a failing group
            res = CheckResult(g, False, f"{type(err).__name__}: {err}")
        results.append(res)
        if g == "geometry" and not res.ok:
            geometry_ok = False
    return results
