"""Plastic benchmark: a clamped square pulled on its right edge.

Run with ``python3 demos/01_plastic_benchmark.py``.  Writes
``plastic_benchmark.vtk`` next to the working directory.
"""

# %%
# The material is stiff in hardening (k = 1000) with a unit yield stress.
# A traction of (0.7, 0.35) on the right edge is large enough to drive a band
# of nodes near the clamped edge into the plastic regime.
import numpy as np

from hpplast.assembly import assemble_blocks
from hpplast.benchmarks import plastic_benchmark
from hpplast.solver import SolverConfig, check_complementarity, newton_solve
from hpplast.vtk import write_vtk

problem = plastic_benchmark(n=8, degree=1)
system = assemble_blocks(problem.mesh, problem.material, problem.loads)
print(f"{problem.mesh.n_elements} elements, {system.dM} displacement dofs, {system.dofs.N} plastic nodes")

# %%
# Semismooth Newton from the elastic predictor.  The residual drops
# superlinearly once the active set settles.
report = newton_solve(system, SolverConfig(rho=1.0))
print("iteration  residual      active")
for k, (r, na) in enumerate(zip(report.residuals, report.active_counts)):
    print(f"{k:9d}  {r:.3e}  {na:6d}")

# %%
# The solution satisfies the nodal complementarity conditions: on active nodes
# the multiplier sits on the yield sphere and the plastic strain points along it.
comp = check_complementarity(report.state, system)
print(comp.summary())
lam = report.state.c.reshape(-1, 2)
print("largest |lambda_i| / sigma_i:", np.max(np.linalg.norm(lam, axis=1) / system.dofs.sigma_weights))

# %%
# The parameter rho changes the path, not the limit.
for rho in (0.01, 1.0, 100.0):
    other = newton_solve(system, SolverConfig(rho=rho))
    diff = np.abs(other.state.vector - report.state.vector).max()
    print(f"rho={rho:<6} iterations={other.iterations}  max difference to rho=1: {diff:.1e}")

# %%
write_vtk("plastic_benchmark.vtk", problem.mesh, report.displacement, report.plastic_strain, report.multiplier)
print("wrote plastic_benchmark.vtk")
