"""Legacy ASCII VTK export of a discrete solution.

Each element is split into ``p x p`` quadrilateral cells whose grid lines sit
halfway between consecutive Gauss points, so every cell holds exactly one
Gauss point of the element.  Plastic strain and multiplier values at that
Gauss point become cell data; the displacement is written as point data at
the cell corners.  For ``p = 1`` this is one cell per element.  Points are not
shared between elements.
"""

from __future__ import annotations

import numpy as np

from .quadrature import gauss_legendre_1d
from .tensors import reconstruct


def _cell_lines(p: int) -> np.ndarray:
    g, _ = gauss_legendre_1d(p)
    return np.concatenate([[-1.0], 0.5 * (g[:-1] + g[1:]), [1.0]])


def sample_cells(mesh):
    """Reference corner points ``(p+1)^2`` and Gauss points ``p^2`` per element."""
    out = []
    for e in range(mesh.n_elements):
        p = int(mesh.degrees[e])
        t = _cell_lines(p)
        g, _ = gauss_legendre_1d(p)
        X, Y = np.meshgrid(t, t)
        corners = np.column_stack([X.ravel(), Y.ravel()])
        GX, GY = np.meshgrid(g, g)
        gauss = np.column_stack([GX.ravel(), GY.ravel()])
        out.append((p, corners, gauss))
    return out


def write_vtk(path, mesh, displacement=None, plastic_strain=None, multiplier=None, title: str = "hpplast solution") -> None:
    pts, cells, u_pts, p_cells, l_cells = [], [], [], [], []
    base = 0
    for e, (p, corners, gauss) in enumerate(sample_cells(mesh)):
        pts.append(mesh.map_to_physical(e, corners))
        u_pts.append(displacement.at(e, corners) if displacement is not None else np.zeros((len(corners), 2)))
        n = p + 1
        for b in range(p):
            for a in range(p):
                k = base + a + n * b
                cells.append((k, k + 1, k + 1 + n, k + n))
        p_cells.append(plastic_strain.at(e, gauss) if plastic_strain is not None else np.zeros((len(gauss), 2)))
        l_cells.append(multiplier.at(e, gauss) if multiplier is not None else np.zeros((len(gauss), 2)))
        base += len(corners)
    P = np.vstack(pts)
    U = np.vstack(u_pts)
    Pc = np.vstack(p_cells)
    Lc = np.vstack(l_cells)
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {len(P)} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in P]
    lines.append(f"CELLS {len(cells)} {5 * len(cells)}")
    lines += ["4 " + " ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += ["9"] * len(cells)
    lines.append(f"CELL_DATA {len(cells)}")
    for name, coeffs in (("plastic_strain", Pc), ("multiplier", Lc)):
        lines.append(f"TENSORS {name} double")
        for m in reconstruct(coeffs):
            lines.append(f"{m[0, 0]:.17g} {m[0, 1]:.17g} 0 {m[1, 0]:.17g} {m[1, 1]:.17g} 0 0 0 0")
        lines += [f"SCALARS {name}_norm double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in np.linalg.norm(coeffs, axis=1)]
    lines.append(f"POINT_DATA {len(P)}")
    lines.append("VECTORS displacement double")
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in U]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_cell_tensor(path, name: str) -> np.ndarray:
    """Read back a cell tensor block as ``(ncells, 3, 3)`` (used by tests)."""
    lines = open(path).read().splitlines()
    ncell = next(int(l.split()[1]) for l in lines if l.startswith("CELL_DATA"))
    i = lines.index(f"TENSORS {name} double")
    vals = np.array([[float(v) for v in l.split()] for l in lines[i + 1 : i + 1 + ncell]])
    return vals.reshape(ncell, 3, 3)
