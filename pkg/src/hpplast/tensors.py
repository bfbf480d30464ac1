"""Symmetric and deviatoric tensor algebra.

Deviatoric tensors are carried as coefficient vectors of length
``L = (d - 1)(d + 2) / 2`` with respect to a Frobenius-orthonormal basis of
the trace-free symmetric matrices, so Frobenius products and norms become
plain Euclidean ones.  All functions accept stacked inputs: a symmetric
tensor is an array of shape ``(..., d, d)`` and a deviatoric one an array of
shape ``(..., L)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class UnsupportedDimensionError(ValueError):
    pass


def dev_size(d: int) -> int:
    if d not in (2, 3):
        raise UnsupportedDimensionError(f"dimension must be 2 or 3, got {d}")
    return (d - 1) * (d + 2) // 2


@lru_cache(maxsize=None)
def _basis(d: int) -> np.ndarray:
    s2 = 1.0 / np.sqrt(2.0)
    if d == 2:
        return np.array(
            [
                [[s2, 0.0], [0.0, -s2]],
                [[0.0, s2], [s2, 0.0]],
            ]
        )
    if d == 3:
        s6 = 1.0 / np.sqrt(6.0)
        return np.array(
            [
                [[s2, 0, 0], [0, -s2, 0], [0, 0, 0]],
                [[s6, 0, 0], [0, s6, 0], [0, 0, -2 * s6]],
                [[0, s2, 0], [s2, 0, 0], [0, 0, 0]],
                [[0, 0, s2], [0, 0, 0], [s2, 0, 0]],
                [[0, 0, 0], [0, 0, s2], [0, s2, 0]],
            ],
            dtype=float,
        )
    raise UnsupportedDimensionError(f"dimension must be 2 or 3, got {d}")


def basis_S(d: int) -> np.ndarray:
    """Orthonormal basis of the trace-free symmetric ``d x d`` matrices.

    Returns an array of shape ``(L, d, d)``; ``L`` is 2 for ``d = 2`` and 5
    for ``d = 3``.
    """
    out = _basis(d).copy()
    out.setflags(write=False)
    return out


def reconstruct(coeffs, d: int = 2) -> np.ndarray:
    """Matrix form ``sum_k coeffs[..., k] Phi_k`` of deviatoric coefficients."""
    return np.einsum("...k,kij->...ij", np.asarray(coeffs, dtype=float), _basis(d))


def dev_matrix(t) -> np.ndarray:
    """Deviatoric part ``t - tr(t)/d I`` of a (stack of) square matrices."""
    t = np.asarray(t, dtype=float)
    d = t.shape[-1]
    tr = np.trace(t, axis1=-2, axis2=-1)
    return t - (tr / d)[..., None, None] * np.eye(d)


def deviator(t) -> np.ndarray:
    """Coefficients of the deviatoric part of symmetric ``t`` in ``basis_S``.

    The basis is trace-free, so projecting ``t`` directly already drops the
    volumetric part.
    """
    t = np.asarray(t, dtype=float)
    return np.einsum("...ij,kij->...k", t, _basis(t.shape[-1]))


def frobenius(s, t) -> np.ndarray:
    return np.einsum("...ij,...ij->...", s, t)


@dataclass(frozen=True)
class MaterialLaw:
    """Isotropic Hooke law, scalar kinematic hardening and yield stress."""

    lame_lambda: float = 1.0
    lame_mu: float = 1.0
    hardening_k: float = 1.0
    yield_sigma_y: float = 1.0

    def __post_init__(self):
        if self.lame_lambda < 0:
            raise ValueError("lame_lambda must be non-negative")
        if self.lame_mu <= 0:
            raise ValueError("lame_mu must be positive")
        if self.hardening_k <= 0:
            raise ValueError("hardening_k must be positive")
        if self.yield_sigma_y <= 0:
            raise ValueError("yield_sigma_y must be positive")

    @property
    def c_e(self) -> float:
        return 2.0 * self.lame_mu

    @property
    def c_h(self) -> float:
        return self.hardening_k

    def replace(self, **changes) -> "MaterialLaw":
        fields = dict(
            lame_lambda=self.lame_lambda,
            lame_mu=self.lame_mu,
            hardening_k=self.hardening_k,
            yield_sigma_y=self.yield_sigma_y,
        )
        fields.update(changes)
        return MaterialLaw(**fields)


def apply_C(e, m: MaterialLaw) -> np.ndarray:
    """Elasticity tensor applied to symmetric ``e``: ``2 mu e + lambda tr(e) I``."""
    e = np.asarray(e, dtype=float)
    d = e.shape[-1]
    tr = np.trace(e, axis1=-2, axis2=-1)
    return 2.0 * m.lame_mu * e + m.lame_lambda * tr[..., None, None] * np.eye(d)


def apply_H(q, m: MaterialLaw) -> np.ndarray:
    """Hardening tensor on deviatoric coefficients (a scalar multiple)."""
    return m.hardening_k * np.asarray(q, dtype=float)


def psi_density(q, sigma_y: float) -> np.ndarray:
    """Pointwise dissipation ``sigma_y |q|_F`` for deviatoric coefficients."""
    return sigma_y * np.linalg.norm(np.asarray(q, dtype=float), axis=-1)
