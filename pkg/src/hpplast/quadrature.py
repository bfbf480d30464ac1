"""Gauss-Legendre rules on the reference square and the mesh quadrature Q_hp."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@dataclass(frozen=True)
class GaussRule:
    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _legendre_and_derivative(n: int, x: np.ndarray):
    c = np.zeros(n + 1)
    c[n] = 1.0
    return legendre.legval(x, c), legendre.legval(x, legendre.legder(c))


@lru_cache(maxsize=None)
def gauss_legendre_1d(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``p``-point Gauss-Legendre rule on [-1, 1].

    Golub-Welsch: eigenvalues of the symmetric Jacobi matrix of the Legendre
    recurrence, followed by one Newton step on ``P_p`` to polish the nodes.
    """
    if p < 1:
        raise ValueError("number of points must be >= 1")
    if p == 1:
        return np.array([0.0]), np.array([2.0])
    k = np.arange(1, p)
    off = k / np.sqrt(4.0 * k * k - 1.0)
    J = np.diag(off, 1) + np.diag(off, -1)
    x = np.linalg.eigvalsh(J)
    P, dP = _legendre_and_derivative(p, x)
    x = x - P / dP
    _, dP = _legendre_and_derivative(p, x)
    w = 2.0 / ((1.0 - x * x) * dP * dP)
    x = 0.5 * (x - x[::-1])  # enforce exact symmetry
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_lobatto(p: int) -> np.ndarray:
    """The ``p + 1`` Gauss-Lobatto-Legendre nodes on [-1, 1], ascending.

    Interior nodes are the zeros of ``P_p'``, i.e. Gauss-Jacobi(1, 1) nodes,
    again from the Jacobi matrix plus one Newton polish.
    """
    if p < 1:
        raise ValueError("degree must be >= 1")
    if p == 1:
        x = np.array([-1.0, 1.0])
    else:
        k = np.arange(1, p - 1)
        off = np.sqrt(k * (k + 2.0) / ((2.0 * k + 1.0) * (2.0 * k + 3.0)))
        J = np.diag(off, 1) + np.diag(off, -1)
        inner = np.linalg.eigvalsh(J) if p > 2 else np.array([0.0])
        c = np.zeros(p + 1)
        c[p] = 1.0
        d1 = legendre.legder(c)
        d2 = legendre.legder(c, 2)
        inner = inner - legendre.legval(inner, d1) / legendre.legval(inner, d2)
        inner = 0.5 * (inner - inner[::-1])
        x = np.concatenate([[-1.0], inner, [1.0]])
    x.setflags(write=False)
    return x


@lru_cache(maxsize=None)
def gauss_rule(p: int, d: int = 2) -> GaussRule:
    """Tensor-product Gauss rule with ``p`` points per direction.

    Points are ordered with the first coordinate running fastest.
    """
    if d not in (1, 2):
        raise ValueError("only d in {1, 2} is supported")
    x, w = gauss_legendre_1d(p)
    if d == 1:
        return GaussRule(x[:, None].copy(), w.copy())
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)  # W[j, i] = w_j w_i with i the x index
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return GaussRule(pts, W.ravel())


def lagrange_1d(nodes, x) -> np.ndarray:
    """Values ``V[m, j] = l_j(x_m)`` of the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    V = np.ones((len(x), n))
    for j in range(n):
        for m in range(n):
            if m != j:
                V[:, j] *= (x - nodes[m]) / (nodes[j] - nodes[m])
    return V


def lagrange_1d_deriv(nodes, x) -> np.ndarray:
    """Derivatives ``dV[m, j] = l_j'(x_m)`` (product rule, no division by zero)."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    dV = np.zeros((len(x), n))
    for j in range(n):
        denom = np.prod([nodes[j] - nodes[m] for m in range(n) if m != j])
        for skip in range(n):
            if skip == j:
                continue
            term = np.ones(len(x))
            for m in range(n):
                if m != j and m != skip:
                    term *= x - nodes[m]
            dV[:, j] += term
        dV[:, j] /= denom
    return dV


def tensor_lagrange(nodes, xhat):
    """Tensor-product Lagrange values and reference gradients at ``xhat``.

    Local index ``k = a + n * b`` with ``a`` the first-coordinate node.
    Returns ``(V, G)`` of shapes ``(m, n*n)`` and ``(m, n*n, 2)``.
    """
    xhat = np.atleast_2d(xhat)
    vx = lagrange_1d(nodes, xhat[:, 0])
    vy = lagrange_1d(nodes, xhat[:, 1])
    dx = lagrange_1d_deriv(nodes, xhat[:, 0])
    dy = lagrange_1d_deriv(nodes, xhat[:, 1])
    n = len(nodes)
    V = (vy[:, :, None] * vx[:, None, :]).reshape(len(xhat), n * n)
    Gx = (vy[:, :, None] * dx[:, None, :]).reshape(len(xhat), n * n)
    Gy = (dy[:, :, None] * vx[:, None, :]).reshape(len(xhat), n * n)
    return V, np.stack([Gx, Gy], axis=-1)


def qhp_local(mesh, e: int, f) -> float:
    """Mesh-dependent quadrature on element ``e`` of the scalar field ``f``.

    ``f`` maps physical points ``(n, 2)`` to values ``(n,)``, or is an element
    field exposing ``at(e, xhat)``.  Degree one uses the midpoint value times
    the element area; higher degrees use the element's own ``p_T x p_T``
    Gauss rule.
    """
    p = int(mesh.degrees[e])
    if p == 1:
        xhat = np.zeros((1, 2))
        return float(mesh.area(e) * _eval(mesh, e, f, xhat)[0])
    rule = gauss_rule(p, 2)
    det = np.abs(mesh.jacobian_det(e, rule.points))
    return float(np.sum(rule.weights * det * _eval(mesh, e, f, rule.points)))


def _eval(mesh, e, f, xhat):
    if hasattr(f, "at"):
        return np.asarray(f.at(e, xhat), dtype=float).reshape(-1)
    return np.asarray(f(mesh.map_to_physical(e, xhat)), dtype=float).reshape(-1)


def qhp_global(mesh, f) -> float:
    return float(sum(qhp_local(mesh, e, f) for e in range(mesh.n_elements)))
