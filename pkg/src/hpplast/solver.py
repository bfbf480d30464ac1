"""Decoupled complementarity functions and the semismooth Newton iteration.

For node ``i`` with plastic-strain coefficients ``q`` (primal basis) and
multiplier coefficients ``mu`` (biorthogonal basis), both length-``L``
vectors, the nodal function is::

    chi(q, mu) = max(sigma_i, |mu + rho q|) mu - sigma_i (mu + rho q)

It vanishes exactly when ``|mu| <= sigma_i`` and ``mu . q = sigma_i |q|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import SaddleSystem
from .hp_spaces import DisplacementField, QhpField
from .linalg import Factorization, SingularMatrixError, as_csr

log = logging.getLogger(__name__)

BRANCHES = ("inactive", "active")


class SingularSystemError(RuntimeError):
    def __init__(self, iteration, msg):
        self.iteration = iteration
        super().__init__(f"Newton matrix singular at iteration {iteration}: {msg}")


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    tol: float = 1e-10
    max_iter: int = 50
    kink_branch: str = "inactive"
    damping: float | None = None
    verbose: bool = False

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if self.kink_branch not in BRANCHES:
            raise ValueError(f"kink_branch must be one of {BRANCHES}")
        if self.damping is not None and not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class NewtonState:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    iteration: int = 0
    residual: float = np.inf

    def copy(self) -> "NewtonState":
        return NewtonState(self.a.copy(), self.b.copy(), self.c.copy(), self.iteration, self.residual)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.c])

    @classmethod
    def zeros(cls, sys: SaddleSystem) -> "NewtonState":
        return cls(np.zeros(sys.dM), np.zeros(sys.LN), np.zeros(sys.LN))


@dataclass
class SolveReport:
    state: NewtonState
    system: SaddleSystem
    config: SolverConfig
    converged: bool
    residuals: list = field(default_factory=list)
    active_counts: list = field(default_factory=list)
    message: str = ""

    @property
    def iterations(self) -> int:
        return self.state.iteration

    @property
    def active(self) -> np.ndarray:
        dofs = self.system.dofs
        return active_set(dofs.sigma_weights, *_nodal(self.state, dofs.L), self.config.rho, self.config.kink_branch)

    @property
    def displacement(self) -> DisplacementField:
        return DisplacementField(self.system.space, self.state.a)

    @property
    def plastic_strain(self) -> QhpField:
        return QhpField(self.system.dofs, self.state.b)

    @property
    def multiplier(self) -> QhpField:
        return QhpField(self.system.dofs, self.state.c, dual=True)

    def log_lines(self) -> list[str]:
        n = self.system.dofs.N
        return [f"{k} {r:.17g} {na} {n - na}" for k, (r, na) in enumerate(zip(self.residuals, self.active_counts))]


def _nodal(state: NewtonState, L: int):
    return state.b.reshape(-1, L), state.c.reshape(-1, L)


def chi(sigma, q, mu, rho: float) -> np.ndarray:
    """Nodal complementarity function; stacked over leading axes."""
    q = np.asarray(q, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    z = mu + rho * q
    n = np.linalg.norm(z, axis=-1)
    return np.maximum(sigma, n)[..., None] * mu - sigma[..., None] * z


def active_set(sigma, q, mu, rho: float, branch: str = "inactive") -> np.ndarray:
    n = np.linalg.norm(np.asarray(mu) + rho * np.asarray(q), axis=-1)
    return n >= sigma if branch == "active" else n > sigma


def chi_subdifferential(sigma, q, mu, rho: float, branch: str = "inactive"):
    """One Clarke generalized Jacobian of ``chi``: blocks ``(d/dq, d/dmu)``.

    Where ``|mu + rho q| < sigma`` the function is ``-sigma rho q``.  Above the
    kink it is ``|z| mu - sigma z`` with ``z = mu + rho q``, whose derivative
    carries the rank-one term ``mu z^T / |z|``.  On the kink itself the
    ``branch`` picks one of the two limiting Jacobians.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), q.shape[:-1])
    L = q.shape[-1]
    eye = np.eye(L)
    z = mu + rho * q
    n = np.linalg.norm(z, axis=-1)
    act = active_set(sigma, q, mu, rho, branch)
    dq = np.broadcast_to(-(sigma * rho)[:, None, None] * eye, (len(q), L, L)).copy()
    dmu = np.zeros((len(q), L, L))
    if np.any(act):
        za, ma, na, sa = z[act], mu[act], n[act], sigma[act]
        rank1 = ma[:, :, None] * za[:, None, :] / na[:, None, None]
        dq[act] = rho * rank1 - (sa * rho)[:, None, None] * eye
        dmu[act] = (na - sa)[:, None, None] * eye + rank1
    return dq, dmu


def evaluate_F(sys: SaddleSystem, state: NewtonState, rho: float = 1.0) -> np.ndarray:
    L = sys.dofs.L
    x = np.concatenate([state.a, state.b, state.c])
    lin = sys.linear_operator() @ x
    lin[: sys.dM] += sys.l
    S = chi(sys.dofs.sigma_weights, *_nodal(state, L), rho)
    return np.concatenate([lin, S.ravel()])


def newton_matrix(sys: SaddleSystem, state: NewtonState, rho: float, branch: str) -> sp.csr_matrix:
    L = sys.dofs.L
    dq, dmu = chi_subdifferential(sys.dofs.sigma_weights, *_nodal(state, L), rho, branch)
    Jq = sp.block_diag(list(dq), format="csr")
    Jmu = sp.block_diag(list(dmu), format="csr")
    Z = sp.csr_matrix((sys.LN, sys.dM))
    bottom = sp.hstack([Z, Jq, Jmu])
    return as_csr(sp.vstack([sys.linear_operator(), bottom]))


def elastic_predictor(sys: SaddleSystem) -> NewtonState:
    """Purely elastic state: ``A a = -l``, ``b = 0``, ``D c = B^T a``."""
    a = sys.stiffness_factor().solve(-sys.l)
    c = (sys.B.T @ a) / sys.D.diagonal()
    return NewtonState(a, np.zeros(sys.LN), c)


def newton_solve(sys: SaddleSystem, config: SolverConfig | None = None, initial: NewtonState | None = None) -> SolveReport:
    """Semismooth Newton iteration on ``F(a, b, c) = 0``.

    Pure local method unless ``config.damping`` is set; failure to reach the
    tolerance within ``max_iter`` steps is reported, not raised.
    """
    config = config or SolverConfig()
    state = (initial or elastic_predictor(sys)).copy()
    state.iteration = 0
    L = sys.dofs.L
    sigma = sys.dofs.sigma_weights
    residuals, counts = [], []
    while True:
        F = evaluate_F(sys, state, config.rho)
        r = float(np.linalg.norm(F))
        state.residual = r
        residuals.append(r)
        na = int(active_set(sigma, *_nodal(state, L), config.rho, config.kink_branch).sum())
        counts.append(na)
        line = f"{state.iteration} {r:.6e} {na} {sys.dofs.N - na}"
        log.debug(line)
        if config.verbose:
            print(line, flush=True)
        if not np.isfinite(r):
            return SolveReport(state, sys, config, False, residuals, counts, "residual is not finite")
        if r <= config.tol:
            return SolveReport(state, sys, config, True, residuals, counts, "converged")
        if state.iteration >= config.max_iter:
            return SolveReport(state, sys, config, False, residuals, counts, f"no convergence in {config.max_iter} iterations")
        H = newton_matrix(sys, state, config.rho, config.kink_branch)
        try:
            delta = Factorization(H).solve(-F)
        except SingularMatrixError as err:
            raise SingularSystemError(state.iteration, str(err)) from None
        t = config.damping or 1.0
        state.a = state.a + t * delta[: sys.dM]
        state.b = state.b + t * delta[sys.dM : sys.K]
        state.c = state.c + t * delta[sys.K :]
        state.iteration += 1


@dataclass
class ComplementarityReport:
    feasible: np.ndarray
    complementary: np.ndarray
    inactive_ok: np.ndarray
    parallel_ok: np.ndarray
    lam_norm: np.ndarray
    p_norm: np.ndarray
    sigma: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(
            self.feasible.all() and self.complementary.all() and self.inactive_ok.all() and self.parallel_ok.all()
        )

    @property
    def n_active(self) -> int:
        return int((np.abs(self.lam_norm - self.sigma) <= 1e-7).sum())

    def summary(self) -> str:
        return (
            f"nodes={len(self.sigma)} active={self.n_active} feasible={int(self.feasible.sum())} "
            f"complementary={int(self.complementary.sum())} ok={self.ok}"
        )


def check_complementarity(state: NewtonState, sys: SaddleSystem) -> ComplementarityReport:
    """Per-node feasibility, complementarity and the two-case structure of the solution."""
    L = sys.dofs.L
    p, lam = _nodal(state, L)
    sigma = sys.dofs.sigma_weights
    ln = np.linalg.norm(lam, axis=1)
    pn = np.linalg.norm(p, axis=1)
    feasible = ln <= sigma + 1e-9
    gap = np.abs(np.einsum("ik,ik->i", lam, p) - sigma * pn)
    complementary = gap <= 1e-9 * (1 + pn)
    inactive = ln < sigma - 1e-7
    inactive_ok = ~inactive | (pn <= 1e-9)
    on_bound = np.abs(ln - sigma) <= 1e-7
    with np.errstate(invalid="ignore", divide="ignore"):
        cosine = np.einsum("ik,ik->i", lam, p) / (ln * pn)
    deficiency = np.where(pn > 1e-12, 1.0 - cosine, 0.0)
    parallel_ok = ~on_bound | (deficiency <= 1e-7)
    return ComplementarityReport(feasible, complementary, inactive_ok, parallel_ok, ln, pn, sigma)
