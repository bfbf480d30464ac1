"""Conforming quadrilateral hp meshes with bilinear element maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quadrature import gauss_rule

# reference corners in counter-clockwise order; local edge k joins corner k
# and corner k+1
REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class MeshError(ValueError):
    pass


class InvertedElementError(MeshError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class PointLocationError(LookupError):
    pass


def _shape(xhat):
    s, t = xhat[:, 0], xhat[:, 1]
    return 0.25 * np.column_stack(
        [(1 - s) * (1 - t), (1 + s) * (1 - t), (1 + s) * (1 + t), (1 - s) * (1 + t)]
    )


def _shape_grad(xhat):
    s, t = xhat[:, 0], xhat[:, 1]
    ds = 0.25 * np.column_stack([-(1 - t), (1 - t), (1 + t), -(1 + t)])
    dt = 0.25 * np.column_stack([-(1 - s), -(1 + s), (1 + s), (1 - s)])
    return np.stack([ds, dt], axis=-1)  # (n, 4, 2)


@dataclass(frozen=True)
class GeometryMap:
    """Bilinear map from [-1, 1]^2 onto the quadrilateral with these corners."""

    corners: np.ndarray  # (4, 2), counter-clockwise

    def __call__(self, xhat):
        return map_to_physical(self, xhat)

    def jacobian(self, xhat) -> np.ndarray:
        """Jacobians ``J[n, i, j] = dx_i / dxhat_j``."""
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        return np.einsum("ci,ncj->nij", self.corners, _shape_grad(xhat))


def map_to_physical(g: GeometryMap, xhat) -> np.ndarray:
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    return _shape(xhat) @ g.corners


def jacobian_det(g: GeometryMap, xhat, check: bool = True) -> np.ndarray:
    J = g.jacobian(xhat)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if check and np.any(det <= 0):
        raise InvertedElementError(f"non-positive Jacobian determinant {det.min():.3e}")
    return det


def check_mapping_assumption(g: GeometryMap, tol: float = 1e-12) -> bool:
    """Whether ``det grad M_T`` is affine on the reference square.

    The determinant of a planar bilinear map has no ``s t`` term, so this
    always holds in 2D; it is verified numerically from a 3 x 3 sample by
    the mixed second difference and the two pure second differences.
    """
    s = np.array([-1.0, 0.0, 1.0])
    S, T = np.meshgrid(s, s, indexing="ij")
    det = jacobian_det(g, np.column_stack([S.ravel(), T.ravel()]), check=False)
    det = det.reshape(3, 3)
    scale = max(1.0, np.abs(det).max())
    mixed = (det[2, 2] - det[2, 0] - det[0, 2] + det[0, 0]) / 4.0
    dss = det[2, 1] - 2 * det[1, 1] + det[0, 1]
    dtt = det[1, 2] - 2 * det[1, 1] + det[1, 0]
    return bool(max(abs(mixed), abs(dss), abs(dtt)) <= tol * scale)


@dataclass(frozen=True, eq=False)
class HpMesh:
    """Quadrilateral mesh with per-element polynomial degree.

    ``boundary`` holds ``(element, local_edge, tag)`` triples with tag ``"D"``
    (clamped) or ``"N"`` (traction).  Meshes produced by :func:`refine_uniform`
    remember their parent so fields can be transferred between levels.
    """

    nodes: np.ndarray
    elements: np.ndarray
    degrees: np.ndarray
    boundary: tuple = ()
    parent: "HpMesh | None" = None
    parent_element: np.ndarray | None = None
    parent_offset: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "elements", np.asarray(self.elements, dtype=int))
        object.__setattr__(self, "degrees", np.asarray(self.degrees, dtype=int))
        object.__setattr__(
            self, "boundary", tuple((int(e), int(k), str(t)) for e, k, t in self.boundary)
        )
        for name in ("nodes", "elements", "degrees"):
            getattr(self, name).setflags(write=False)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def geometry(self, e: int) -> GeometryMap:
        return GeometryMap(self.nodes[self.elements[e]])

    def map_to_physical(self, e: int, xhat) -> np.ndarray:
        return map_to_physical(self.geometry(e), xhat)

    def jacobian(self, e: int, xhat) -> np.ndarray:
        return self.geometry(e).jacobian(xhat)

    def jacobian_det(self, e: int, xhat, check: bool = True) -> np.ndarray:
        return jacobian_det(self.geometry(e), xhat, check=check)

    def area(self, e: int) -> float:
        rule = gauss_rule(2, 2)
        return float(rule.weights @ self.jacobian_det(e, rule.points, check=False))

    @property
    def sizes(self) -> np.ndarray:
        """Element diameters ``h_T`` (largest corner-to-corner distance)."""
        if "sizes" not in self._cache:
            c = self.nodes[self.elements]  # (m, 4, 2)
            dist = np.linalg.norm(c[:, :, None, :] - c[:, None, :, :], axis=-1)
            self._cache["sizes"] = dist.max(axis=(1, 2))
        return self._cache["sizes"]

    @property
    def h_max(self) -> float:
        return float(self.sizes.max())

    def edge_nodes(self, e: int, k: int) -> tuple[int, int]:
        el = self.elements[e]
        return int(el[k]), int(el[(k + 1) % 4])

    def edges(self) -> dict:
        """Map ``(min_node, max_node)`` to the list of ``(element, local_edge)``."""
        if "edges" not in self._cache:
            out: dict = {}
            for e in range(self.n_elements):
                for k in range(4):
                    a, b = self.edge_nodes(e, k)
                    out.setdefault((min(a, b), max(a, b)), []).append((e, k))
            self._cache["edges"] = out
        return self._cache["edges"]

    def boundary_tag(self) -> dict:
        return {(e, k): t for e, k, t in self.boundary}

    def edge_length(self, e: int, k: int) -> float:
        a, b = self.edge_nodes(e, k)
        return float(np.linalg.norm(self.nodes[b] - self.nodes[a]))

    def validate(self) -> None:
        """Raise :class:`MeshError` if any structural invariant fails."""
        c = self.nodes[self.elements]
        for e in range(self.n_elements):
            edges = np.roll(c[e], -1, axis=0) - c[e]
            nxt = np.roll(edges, -1, axis=0)
            cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
            if np.any(cross <= 0):
                raise InvertedElementError(f"element {e} is not convex and counter-clockwise")
            rule = gauss_rule(10, 2)
            self.jacobian_det(e, rule.points)
        if np.any(self.degrees < 1):
            raise MeshError("polynomial degrees must be >= 1")
        edges = self.edges()
        tags = self.boundary_tag()
        for key, adj in edges.items():
            if len(adj) > 2:
                raise MeshError(f"edge {key} shared by more than two elements")
            if len(adj) == 1 and adj[0] not in tags:
                raise MeshError(
                    f"edge {key} of element {adj[0][0]} has one neighbour but no "
                    "boundary tag (hanging node or incomplete BOUNDARY section)"
                )
            if len(adj) == 2:
                (e1, _), (e2, _) = adj
                if abs(int(self.degrees[e1]) - int(self.degrees[e2])) > 1:
                    raise MeshError(f"degrees of neighbours {e1}, {e2} differ by more than one")
        for (e, k), t in tags.items():
            a, b = self.edge_nodes(e, k)
            if len(edges[(min(a, b), max(a, b))]) != 1:
                raise MeshError(f"boundary entry ({e}, {k}) is an interior edge")
            if t not in ("D", "N"):
                raise MeshError(f"unknown boundary tag {t!r}")
        dlen = sum(self.edge_length(e, k) for (e, k), t in tags.items() if t == "D")
        if dlen <= 0:
            raise MeshError("Dirichlet boundary has zero length")

    def with_degrees(self, degrees) -> "HpMesh":
        degrees = np.broadcast_to(np.asarray(degrees, dtype=int), (self.n_elements,)).copy()
        return HpMesh(
            self.nodes,
            self.elements,
            degrees,
            self.boundary,
            self.parent,
            self.parent_element,
            self.parent_offset,
        )

    def inverse_map(self, e: int, x, tol: float = 1e-13, maxit: int = 30) -> np.ndarray:
        """Reference coordinates of physical points ``x`` (Newton iteration)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        g = self.geometry(e)
        xhat = np.zeros_like(x)
        for _ in range(maxit):
            r = map_to_physical(g, xhat) - x
            J = g.jacobian(xhat)
            step = np.linalg.solve(J, r[..., None])[..., 0]
            xhat = xhat - step
            if np.abs(step).max() < tol:
                break
        return xhat

    def locate(self, x, tol: float = 1e-10) -> tuple[int, np.ndarray]:
        """Element index and reference coordinates of one physical point."""
        x = np.asarray(x, dtype=float).reshape(1, 2)
        lo = self.nodes[self.elements].min(axis=1)
        hi = self.nodes[self.elements].max(axis=1)
        cand = np.nonzero(np.all((x >= lo - tol) & (x <= hi + tol), axis=1))[0]
        for e in cand:
            xhat = self.inverse_map(int(e), x)
            if np.all(np.abs(xhat) <= 1 + tol):
                return int(e), np.clip(xhat, -1, 1)
        raise PointLocationError(f"point {x[0]} lies outside the mesh")

    def ancestor_points(self, ancestor: "HpMesh", e: int, xhat):
        """Map reference points of element ``e`` to the ancestor mesh's element."""
        mesh = self
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        while mesh is not ancestor:
            if mesh.parent is None:
                raise MeshError("mesh is not a refinement of the requested ancestor")
            xhat = 0.5 * (xhat + mesh.parent_offset[e])
            e = int(mesh.parent_element[e])
            mesh = mesh.parent
        return e, xhat

    def is_descendant_of(self, other: "HpMesh") -> bool:
        mesh = self
        while mesh is not None:
            if mesh is other:
                return True
            mesh = mesh.parent
        return False


def refine_uniform(m: HpMesh) -> HpMesh:
    """Split every quadrilateral into four through edge midpoints and centroid.

    Child ``c`` sits at parent corner ``c``; its reference square is the
    parent's quarter ``(xhat + REF_CORNERS[c]) / 2``.
    """
    nodes = [row for row in m.nodes]
    mid: dict = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in mid:
            mid[key] = len(nodes)
            nodes.append(0.5 * (m.nodes[a] + m.nodes[b]))
        return mid[key]

    elements, degrees, parent, offset = [], [], [], []
    for e in range(m.n_elements):
        v = [int(i) for i in m.elements[e]]
        ms = [midpoint(v[k], v[(k + 1) % 4]) for k in range(4)]
        center = len(nodes)
        nodes.append(m.nodes[v].mean(axis=0))
        children = [
            (v[0], ms[0], center, ms[3]),
            (ms[0], v[1], ms[1], center),
            (center, ms[1], v[2], ms[2]),
            (ms[3], center, ms[2], v[3]),
        ]
        for c, child in enumerate(children):
            elements.append(child)
            degrees.append(int(m.degrees[e]))
            parent.append(e)
            offset.append(REF_CORNERS[c])
    boundary = []
    for e, k, tag in m.boundary:
        boundary.append((4 * e + k, k, tag))
        boundary.append((4 * e + (k + 1) % 4, k, tag))
    return HpMesh(
        np.array(nodes),
        np.array(elements),
        np.array(degrees),
        tuple(sorted(boundary)),
        parent=m,
        parent_element=np.array(parent),
        parent_offset=np.array(offset),
    )


SIDES = ("left", "right", "bottom", "top")


def unit_square(n: int, degree=1, dirichlet=("left",), width: float = 1.0, height: float = 1.0) -> HpMesh:
    """Structured ``n x n`` mesh of a rectangle anchored at the origin.

    ``degree`` is an int, an array of length ``n*n`` (row-major, x fastest), or
    a callable ``(i, j) -> p``.  Edges on the sides listed in ``dirichlet`` are
    clamped, all other boundary edges are traction edges.
    """
    for s in dirichlet:
        if s not in SIDES:
            raise ValueError(f"unknown side {s!r}")
    xs = np.linspace(0.0, width, n + 1)
    ys = np.linspace(0.0, height, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    elements, degs, boundary = [], [], []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            elements.append((a, a + 1, a + n + 2, a + n + 1))
            if callable(degree):
                degs.append(int(degree(i, j)))
            e = j * n + i
            for k, side, on in (
                (0, "bottom", j == 0),
                (1, "right", i == n - 1),
                (2, "top", j == n - 1),
                (3, "left", i == 0),
            ):
                if on:
                    boundary.append((e, k, "D" if side in dirichlet else "N"))
    if not callable(degree):
        degs = np.broadcast_to(np.asarray(degree, dtype=int), (n * n,))
    return HpMesh(nodes, np.array(elements), np.array(degs), tuple(boundary))


def edge_side(m: HpMesh, e: int, k: int, tol: float = 1e-12) -> str | None:
    """Which side of the bounding box a boundary edge lies on, if any."""
    a, b = m.edge_nodes(e, k)
    pa, pb = m.nodes[a], m.nodes[b]
    lo, hi = m.nodes.min(axis=0), m.nodes.max(axis=0)
    if abs(pa[0] - lo[0]) < tol and abs(pb[0] - lo[0]) < tol:
        return "left"
    if abs(pa[0] - hi[0]) < tol and abs(pb[0] - hi[0]) < tol:
        return "right"
    if abs(pa[1] - lo[1]) < tol and abs(pb[1] - lo[1]) < tol:
        return "bottom"
    if abs(pa[1] - hi[1]) < tol and abs(pb[1] - hi[1]) < tol:
        return "top"
    return None


def write_mesh(m: HpMesh, path) -> None:
    lines = [f"NODES {m.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in m.nodes]
    lines.append(f"ELEMENTS {m.n_elements}")
    lines += [" ".join(str(int(i)) for i in el) + f" {int(p)}" for el, p in zip(m.elements, m.degrees)]
    lines.append(f"BOUNDARY {len(m.boundary)}")
    lines += [f"{e} {k} {t}" for e, k, t in m.boundary]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, validate: bool = True) -> HpMesh:
    """Parse the NODES / ELEMENTS / BOUNDARY text format.

    Blank lines and ``#`` comments are ignored.  Errors carry line numbers.
    """
    raw = Path(path).read_text().splitlines()
    rows = []
    for no, line in enumerate(raw, start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append((no, line.split()))
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(rows):
            raise MeshFormatError(f"missing {name} section", len(raw))
        no, tok = rows[pos]
        if tok[0] != name or len(tok) != 2:
            raise MeshFormatError(f"expected '{name} <count>'", no)
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshFormatError(f"bad count {tok[1]!r}", no) from None
        pos += 1
        return count

    def body(count, width, conv):
        nonlocal pos
        out = []
        for _ in range(count):
            if pos >= len(rows):
                raise MeshFormatError("unexpected end of file", len(raw))
            no, tok = rows[pos]
            if len(tok) != width:
                raise MeshFormatError(f"expected {width} fields, got {len(tok)}", no)
            try:
                out.append(conv(tok))
            except (ValueError, KeyError) as err:
                raise MeshFormatError(str(err), no) from None
            pos += 1
        return out

    nodes = body(header("NODES"), 2, lambda t: (float(t[0]), float(t[1])))
    elems = body(header("ELEMENTS"), 5, lambda t: tuple(int(v) for v in t))

    def bconv(t):
        if t[2] not in ("D", "N"):
            raise ValueError(f"boundary tag must be D or N, got {t[2]!r}")
        return int(t[0]), int(t[1]), t[2]

    bnd = body(header("BOUNDARY"), 3, bconv)
    if pos != len(rows):
        raise MeshFormatError("trailing content", rows[pos][0])
    el = np.array([e[:4] for e in elems], dtype=int).reshape(-1, 4)
    if el.size and (el.min() < 0 or el.max() >= len(nodes)):
        raise MeshFormatError("element references unknown node")
    mesh = HpMesh(np.array(nodes).reshape(-1, 2), el, np.array([e[4] for e in elems]), tuple(bnd))
    if validate:
        mesh.validate()
    return mesh
