"""Computable error terms against an overkill reference.

For each level we compare the true error (pair norm plus multiplier error)
with the computable estimate: the auxiliary-problem distance plus the
plasticity error term evaluated at its minimizer.  The ratio settles to a
level-independent constant.
"""

# %%
from hpplast.analysis import run_convergence_study
from hpplast.benchmarks import plastic_benchmark

study = run_convergence_study(plastic_benchmark(n=2, degree=1), levels=3, reference="overkill")

# %%
print("level  true error^2   estimate^2     ratio")
for row in study.rows:
    er = row["report"]
    print(f"{row['level']:5d}  {er.total_sq:.4e}  {er.estimate_sq:.4e}  {er.total_sq / er.estimate_sq:.4g}")
