"""Convergence orders on a manufactured elastic problem.

The displacement ``u = (sin(pi x) sin(pi y), x(1-x) y(1-y)(1+x))`` vanishes on
the boundary; the body force is computed symbolically.  A huge yield stress
keeps the problem elastic so the exact plastic strain is zero.
"""

# %%
from hpplast.analysis import run_convergence_study
from hpplast.benchmarks import manufactured_elastic

# %%
# Linear elements: the energy-norm error should halve with h.
study = run_convergence_study(manufactured_elastic(n=2, degree=1), levels=4, aux=False)
print(study.csv_text())

# %%
# Quadratic elements on the same meshes: order two.
study2 = run_convergence_study(manufactured_elastic(n=2, degree=2), levels=3, aux=False)
for row in study2.rows:
    order = "" if row["order_pair"] is None else f"{row['order_pair']:.3f}"
    print(f"h={row['h_max']:.4f}  error={row['err_pair']:.3e}  order={order}")
