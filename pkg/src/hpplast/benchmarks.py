"""Reference problems used by the tests, the demos and the command line."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import sympy

from .assembly import LoadData
from .mesh import HpMesh, unit_square
from .tensors import MaterialLaw, apply_C, deviator


@dataclass(frozen=True)
class Problem:
    """Mesh, material and loads, plus the exact solution when one is known.

    ``exact_u(x) -> (n, 2)``, ``exact_grad(x) -> (n, 2, 2)`` with
    ``grad[n, i, j] = d u_i / d x_j``; the exact plastic strain of a
    manufactured problem is zero.
    """

    name: str
    mesh: HpMesh
    material: MaterialLaw
    loads: LoadData
    exact_u: Callable | None = None
    exact_grad: Callable | None = None

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None

    def exact_lambda(self, x) -> np.ndarray:
        grad = self.exact_grad(x)
        eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
        return deviator(apply_C(eps, self.material))

    def with_mesh(self, mesh: HpMesh) -> "Problem":
        return replace(self, mesh=mesh)


# Strong kinematic hardening keeps the pure Newton iteration count flat over
# rho in [1e-2, 1e2]; softer materials cycle once rho >> 2 mu + k.
PLASTIC_MATERIAL = MaterialLaw(lame_lambda=100.0, lame_mu=100.0, hardening_k=1000.0, yield_sigma_y=1.0)
PLASTIC_TRACTION = (0.7, 0.35)


def plastic_benchmark(n: int = 8, degree=1) -> Problem:
    """Unit square clamped on the left, constant traction on the right edge."""
    return Problem(
        "plastic",
        unit_square(n, degree, dirichlet=("left",)),
        PLASTIC_MATERIAL,
        LoadData(g=PLASTIC_TRACTION, g_sides=("right",)),
    )


def elastic_limit_benchmark(n: int = 8, degree=1) -> Problem:
    """The plastic benchmark with a yield stress far above any attainable stress."""
    scale = float(np.linalg.norm(PLASTIC_TRACTION))
    return Problem(
        "elastic_limit",
        unit_square(n, degree, dirichlet=("left",)),
        PLASTIC_MATERIAL.replace(yield_sigma_y=1e12 * scale),
        LoadData(g=PLASTIC_TRACTION, g_sides=("right",)),
    )


_X, _Y = sympy.symbols("x y")

MANUFACTURED = {
    "sine": (
        sympy.sin(sympy.pi * _X) * sympy.sin(sympy.pi * _Y),
        _X * (1 - _X) * _Y * (1 - _Y) * (1 + _X),
    ),
    "poly": (
        _X * (1 - _X) * _Y * (1 - _Y),
        _X**2 * (1 - _X) * _Y * (1 - _Y),
    ),
}


def _vectorize(expr):
    fn = sympy.lambdify((_X, _Y), expr, "numpy")
    return lambda x, y: np.broadcast_to(np.asarray(fn(x, y), dtype=float), np.shape(x))


def manufactured_elastic(n: int = 2, degree=1, field: str = "sine", material: MaterialLaw | None = None) -> Problem:
    """Clamped unit square with a smooth displacement vanishing on the boundary.

    The volume force is ``-div C eps(u)``; the yield stress is set so high that
    the exact plastic strain is zero.
    """
    material = material or MaterialLaw(1.0, 1.0, 1.0, 1e12)
    u = sympy.Matrix(MANUFACTURED[field])
    grad = u.jacobian([_X, _Y])
    eps = (grad + grad.T) / 2
    lam, mu = material.lame_lambda, material.lame_mu
    sig = 2 * mu * eps + lam * eps.trace() * sympy.eye(2)
    f = -sympy.Matrix([sympy.diff(sig[i, 0], _X) + sympy.diff(sig[i, 1], _Y) for i in range(2)])
    u_fn = [_vectorize(c) for c in u]
    g_fn = [[_vectorize(grad[i, j]) for j in range(2)] for i in range(2)]
    f_fn = [_vectorize(sympy.simplify(c)) for c in f]

    def exact_u(x):
        return np.column_stack([c(x[:, 0], x[:, 1]) for c in u_fn])

    def exact_grad(x):
        return np.stack(
            [np.column_stack([g_fn[i][j](x[:, 0], x[:, 1]) for j in range(2)]) for i in range(2)], axis=1
        )

    def force(x):
        return np.column_stack([c(x[:, 0], x[:, 1]) for c in f_fn])

    mesh = unit_square(n, degree, dirichlet=("left", "right", "bottom", "top"))
    return Problem(f"manufactured_{field}", mesh, material, LoadData(f=force), exact_u, exact_grad)
