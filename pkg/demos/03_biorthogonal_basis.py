"""The Gauss-point Lagrange basis and its biorthogonal partner.

On each element the plastic strain lives in the span of Lagrange polynomials
through the tensor Gauss points.  The multiplier uses a dual family with
``(phi_i, dual_j) = delta_ij D_i``, so the admissible multiplier set splits
into one Frobenius-ball constraint per node.
"""

# %%
import numpy as np

from hpplast.analysis import biorthogonality_matrix, psi_hp
from hpplast.checks import biorthogonality_defect
from hpplast.hp_spaces import DofSystem
from hpplast.mesh import unit_square

# Degrees grow towards the upper right corner: 1, 2 and 3.
mesh = unit_square(4, lambda i, j: 1 + min((i + j) // 2, 2))
dofs = DofSystem(mesh, sigma_y=1.0)
print("degree layout (row by row):")
print(np.asarray(mesh.degrees).reshape(4, 4))

# %%
G = biorthogonality_matrix(dofs).toarray()
off, diag = biorthogonality_defect(dofs)
print(f"{dofs.N} nodes; pairing matrix off-diagonal defect {off:.1e}, diagonal defect {diag:.1e}")
print("first D_i:", np.round(dofs.d_weights[:6], 6))

# %%
# A multiplier with |mu_i| <= sigma_i at every node is admissible: the pairing
# with any plastic strain q stays below the discrete plasticity functional.
rng = np.random.default_rng(0)
mu = rng.normal(size=(dofs.N, 2))
mu /= np.linalg.norm(mu, axis=1, keepdims=True)
q = rng.normal(size=(1000, dofs.N, 2))
gap = psi_hp(dofs, q) - np.einsum("sil,il->s", q, G @ mu)
print(f"min psi_hp(q) - (mu, q) over 1000 samples: {gap.min():.3e}")
