"""2D triangulations: structured builders, Gmsh import, quality audit.

The solver runs on conforming triangle meshes. Topology conventions:

* cells are counterclockwise vertex triples,
* an edge is stored as ``(lo, hi)`` with ``lo < hi``; its unit tangent points
  from ``lo`` to ``hi``,
* every edge belongs to exactly one cell (boundary) or two cells (interior).

Meshes are immutable after construction; all arrays are marked read-only so
they can be shared safely between solver components.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Mesh",
    "MeshAudit",
    "EmptyMeshError",
    "MalformedFileError",
    "UnsupportedFormatError",
    "audit_mesh",
    "generate_uniform_square",
    "load_gmsh_ascii",
    "parse_native",
    "format_native",
    "load_mesh_file",
]

#: angle comparisons against pi/2 use this slack (radians)
ANGLE_TOL = 1e-12


class UnsupportedFormatError(ValueError):
    """Mesh file is in a format this reader does not handle."""


class MalformedFileError(ValueError):
    """Mesh file is syntactically or referentially broken."""


class EmptyMeshError(ValueError):
    """Mesh file contains no triangles."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh with precomputed edge topology.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
        Vertex coordinates.
    cells : ndarray, shape (nc, 3)
        Vertex indices per triangle, counterclockwise.
    edges : ndarray, shape (ne, 2)
        Unique edges as ``(lo, hi)`` pairs with ``lo < hi``, sorted
        lexicographically (so edge construction is permutation invariant).
    cell_edges : ndarray, shape (nc, 3)
        Edge index of the local edges ``(v0,v1), (v1,v2), (v2,v0)``.
    cell_edge_signs : ndarray, shape (nc, 3)
        ``+1`` where the local traversal agrees with the stored ``lo -> hi``
        direction, ``-1`` otherwise.
    boundary_edge : ndarray, shape (ne,), bool
        True for edges incident to exactly one cell.
    h : float
        Longest edge over the mesh.
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    boundary_edge: np.ndarray
    h: float

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def cell_areas(self) -> np.ndarray:
        """Signed areas, positive for the stored counterclockwise cells."""
        p = self.vertices[self.cells]
        a = _signed_areas(p)
        a.setflags(write=False)
        return a

    @cached_property
    def edge_tangents(self) -> np.ndarray:
        """Unit tangents, oriented from the lower to the higher vertex index."""
        vec = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        t = vec / np.linalg.norm(vec, axis=1)[:, None]
        t.setflags(write=False)
        return t

    @classmethod
    def from_cells(cls, vertices, cells) -> "Mesh":
        """Build a mesh from raw arrays, normalizing orientation.

        Cells with negative signed area are flipped; zero-area cells and
        vertices referenced by no cell are rejected. Edge topology is derived
        here and an edge incident to more than two cells is an error.
        """
        verts = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        tris = np.ascontiguousarray(np.asarray(cells, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("cells must have shape (nc, 3)")
        if len(tris) == 0:
            raise EmptyMeshError("mesh has no cells")
        if tris.min() < 0 or tris.max() >= len(verts):
            raise ValueError("cell refers to a vertex index out of range")
        if (tris[:, [0, 1, 2]] == tris[:, [1, 2, 0]]).any():
            raise ValueError("cell with a repeated vertex")

        used = np.zeros(len(verts), dtype=bool)
        used[tris] = True
        if not used.all():
            raise ValueError(
                f"{int((~used).sum())} vertices are referenced by no cell; "
                "compact the mesh before constructing"
            )

        areas = _signed_areas(verts[tris])
        scale = np.abs(verts[tris]).max() + 1.0
        degenerate = np.abs(areas) <= 1e-14 * scale * scale
        if degenerate.any():
            raise ValueError(f"{int(degenerate.sum())} degenerate (zero-area) cells")
        flip = areas < 0
        if flip.any():
            tris = tris.copy()
            tris[flip] = tris[flip][:, [0, 2, 1]]

        # local edges in traversal order (v0,v1), (v1,v2), (v2,v0)
        raw = np.stack([tris, np.roll(tris, -1, axis=1)], axis=2)  # (nc, 3, 2)
        lo_hi = np.sort(raw.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(lo_hi, axis=0, return_inverse=True)
        cell_edges = inverse.reshape(-1, 3).astype(np.int64)
        signs = np.where(raw[:, :, 0] < raw[:, :, 1], 1, -1).astype(np.int8)

        counts = np.bincount(cell_edges.ravel(), minlength=len(edges))
        if counts.max() > 2:
            raise ValueError("non-conforming mesh: an edge is shared by more than two cells")
        boundary = counts == 1

        side = verts[edges[:, 1]] - verts[edges[:, 0]]
        h = float(np.linalg.norm(side, axis=1).max())

        for arr in (verts, tris, edges, cell_edges, signs, boundary):
            arr.setflags(write=False)
        return cls(verts, tris, edges, cell_edges, signs, boundary, h)


def _signed_areas(triangle_xy: np.ndarray) -> np.ndarray:
    d1 = triangle_xy[..., 1, :] - triangle_xy[..., 0, :]
    d2 = triangle_xy[..., 2, :] - triangle_xy[..., 0, :]
    return 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])


# ---------------------------------------------------------------------------
# structured builders


def generate_uniform_square(M: int, domain="unit", mask=None) -> Mesh:
    """Uniform right-triangle mesh of a rectangle, optionally with squares
    removed.

    Each unit of side length is split into ``M`` intervals and each grid
    square into two triangles along the lower-left to upper-right diagonal.

    Parameters
    ----------
    M : int
        Subdivisions per unit length, at least 1.
    domain : {"unit", "lshape"} or (x0, y0, x1, y1)
        ``"unit"`` is the unit square. ``"lshape"`` is ``(-0.5, 0.5)^2`` with
        the quadrant ``[0, 0.5] x [-0.5, 0]`` removed; it needs even ``M`` so
        the reentrant corner lies on grid lines. A tuple gives a rectangle
        whose side lengths must be whole multiples of ``1/M``.
    mask : callable, optional
        ``mask(cx, cy) -> bool array`` over grid-square centers; squares where
        it returns True are excluded.
    """
    M = int(M)
    if M < 1:
        raise ValueError("M must be a positive integer")

    lshape = False
    if isinstance(domain, str):
        if domain == "unit":
            rect = (0.0, 0.0, 1.0, 1.0)
        elif domain == "lshape":
            if M % 2:
                raise ValueError("lshape needs even M so the corner lies on grid lines")
            rect = (-0.5, -0.5, 0.5, 0.5)
            lshape = True
        else:
            raise ValueError(f"unknown named domain {domain!r}")
    else:
        rect = tuple(float(v) for v in domain)
        if len(rect) != 4:
            raise ValueError("domain tuple must be (x0, y0, x1, y1)")

    x0, y0, x1, y1 = rect
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate domain rectangle")
    nx = M * (x1 - x0)
    ny = M * (y1 - y0)
    if abs(nx - round(nx)) > 1e-9 or abs(ny - round(ny)) > 1e-9:
        raise ValueError("side lengths must be whole multiples of 1/M")
    nx, ny = int(round(nx)), int(round(ny))

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)  # index [iy, ix]
    verts = np.column_stack([gx.ravel(), gy.ravel()])

    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    ix, iy = ix.ravel(), iy.ravel()
    cx = x0 + (ix + 0.5) * (x1 - x0) / nx
    cy = y0 + (iy + 0.5) * (y1 - y0) / ny

    keep = np.ones(len(ix), dtype=bool)
    if lshape:
        keep &= ~((cx > 0.0) & (cy < 0.0))
    if mask is not None:
        keep &= ~np.asarray(mask(cx, cy), dtype=bool)
    ix, iy = ix[keep], iy[keep]
    if len(ix) == 0:
        raise EmptyMeshError("mask removed every grid square")

    v00 = iy * (nx + 1) + ix
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])  # diagonal v00 -> v11
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * len(ix), 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper

    verts, cells = _compact(verts, cells)
    return Mesh.from_cells(verts, cells)


def _compact(verts, cells):
    """Drop vertices not referenced by any cell, renumbering densely."""
    used, inverse = np.unique(cells, return_inverse=True)
    return verts[used], inverse.reshape(cells.shape)


# ---------------------------------------------------------------------------
# file formats


def load_gmsh_ascii(text: str) -> Mesh:
    """Read a Gmsh ASCII v2 file.

    Only 2-node lines and 3-node triangles are retained; other element types
    are ignored. Node ids may be sparse, they are renumbered densely in file
    order. Line elements are cross-checked against the triangulation boundary
    and mismatches produce a warning, not an error.
    """
    sections = _split_gmsh_sections(text)

    fmt = sections.get("MeshFormat")
    if fmt is None or not fmt:
        raise MalformedFileError("missing $MeshFormat section")
    parts = fmt[0].split()
    if len(parts) < 3:
        raise MalformedFileError("malformed $MeshFormat line")
    version, file_type = parts[0], parts[1]
    if file_type != "0":
        raise UnsupportedFormatError("binary Gmsh files are not supported")
    if not version.startswith("2"):
        raise UnsupportedFormatError(f"unsupported Gmsh format version {version}")

    node_lines = sections.get("Nodes")
    if node_lines is None:
        raise MalformedFileError("missing $Nodes section")
    try:
        n_nodes = int(node_lines[0])
    except (IndexError, ValueError):
        raise MalformedFileError("bad node count") from None
    if len(node_lines) - 1 != n_nodes:
        raise MalformedFileError("node count does not match $Nodes body")
    ids = np.empty(n_nodes, dtype=np.int64)
    xy = np.empty((n_nodes, 2), dtype=float)
    for k, line in enumerate(node_lines[1:]):
        parts = line.split()
        if len(parts) < 4:
            raise MalformedFileError(f"malformed node line: {line!r}")
        try:
            ids[k] = int(parts[0])
            xy[k, 0] = float(parts[1])
            xy[k, 1] = float(parts[2])
        except ValueError:
            raise MalformedFileError(f"malformed node line: {line!r}") from None
    id_to_index = {int(i): k for k, i in enumerate(ids)}
    if len(id_to_index) != n_nodes:
        raise MalformedFileError("duplicate node id")

    elem_lines = sections.get("Elements")
    if elem_lines is None:
        raise MalformedFileError("missing $Elements section")
    try:
        n_elems = int(elem_lines[0])
    except (IndexError, ValueError):
        raise MalformedFileError("bad element count") from None
    if len(elem_lines) - 1 != n_elems:
        raise MalformedFileError("element count does not match $Elements body")

    tris = []
    seg_nodes = []
    for line in elem_lines[1:]:
        parts = line.split()
        try:
            etype = int(parts[1])
            ntags = int(parts[2])
            conn = [int(p) for p in parts[3 + ntags:]]
        except (IndexError, ValueError):
            raise MalformedFileError(f"malformed element line: {line!r}") from None
        need = {1: 2, 2: 3}.get(etype)
        if need is None:
            continue  # points, quads, higher order: not used here
        if len(conn) != need:
            raise MalformedFileError(f"element with wrong node count: {line!r}")
        try:
            conn = [id_to_index[c] for c in conn]
        except KeyError as exc:
            raise MalformedFileError(f"element references unknown node id {exc.args[0]}") from None
        (tris if etype == 2 else seg_nodes).append(conn)

    if not tris:
        raise EmptyMeshError("file contains no triangles")

    verts, cells = _compact(xy, np.asarray(tris, dtype=np.int64))
    mesh = Mesh.from_cells(verts, cells)

    if seg_nodes:
        # boundary tagging cross-check: every 2-node line should be a
        # boundary edge of the triangulation
        remap = {}
        used = np.unique(np.asarray(tris, dtype=np.int64))
        for new, old in enumerate(used):
            remap[int(old)] = new
        bset = {tuple(e) for e in mesh.edges[mesh.boundary_edge]}
        bad = 0
        for a, b in seg_nodes:
            pair = (remap.get(a, -1), remap.get(b, -1))
            if tuple(sorted(pair)) not in bset:
                bad += 1
        if bad:
            warnings.warn(
                f"{bad} line elements are not boundary edges of the triangulation",
                stacklevel=2,
            )
    return mesh


def _split_gmsh_sections(text: str) -> dict:
    sections = {}
    name = None
    body: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$End"):
            if name is None or line[4:] != name:
                raise MalformedFileError(f"unexpected {line}")
            sections[name] = body
            name, body = None, []
        elif line.startswith("$"):
            if name is not None:
                raise MalformedFileError(f"section {name} not closed before {line}")
            name = line[1:]
            body = []
        elif name is not None:
            body.append(line)
        # stray content outside sections is ignored
    if name is not None:
        raise MalformedFileError(f"section {name} not closed at end of file")
    return sections


NATIVE_HEADER = "tdgl-mesh 1"


def format_native(mesh: Mesh) -> str:
    """Serialize a mesh in the native plain-text format.

    Layout: header line, vertex count, one ``x y`` line per vertex, cell
    count, one ``i j k`` line per cell. Coordinates round-trip exactly.
    """
    out = [NATIVE_HEADER, str(mesh.num_vertices)]
    # item() yields builtin floats whose repr round-trips exactly
    out.extend(f"{x.item()!r} {y.item()!r}" for x, y in mesh.vertices)
    out.append(str(mesh.num_cells))
    out.extend(f"{i} {j} {k}" for i, j, k in mesh.cells)
    return "\n".join(out) + "\n"


def parse_native(text: str) -> Mesh:
    """Read the native plain-text format written by :func:`format_native`."""
    lines = [ln for ln in (raw.strip() for raw in text.splitlines()) if ln]
    if not lines or lines[0] != NATIVE_HEADER:
        raise UnsupportedFormatError("not a native mesh file (bad header)")
    try:
        nv = int(lines[1])
        verts = np.array([[float(t) for t in lines[2 + k].split()] for k in range(nv)])
        nc = int(lines[2 + nv])
        cells = np.array(
            [[int(t) for t in lines[3 + nv + k].split()] for k in range(nc)],
            dtype=np.int64,
        )
    except (IndexError, ValueError):
        raise MalformedFileError("truncated or malformed native mesh file") from None
    if nc == 0:
        raise EmptyMeshError("native mesh file contains no triangles")
    if verts.ndim != 2 or verts.shape[1] != 2 or cells.shape[1] != 3:
        raise MalformedFileError("native mesh file has wrong column counts")
    return Mesh.from_cells(verts, cells)


def load_mesh_file(path) -> Mesh:
    """Load a mesh from a file, sniffing the format from its first line."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    head = text.lstrip().splitlines()[0] if text.strip() else ""
    if head == NATIVE_HEADER:
        return parse_native(text)
    if head.startswith("$"):
        return load_gmsh_ascii(text)
    raise UnsupportedFormatError(f"unrecognized mesh file format in {path}")


# ---------------------------------------------------------------------------
# quality audit


@dataclass(frozen=True)
class MeshAudit:
    """Angle and uniformity report.

    ``strictly_acute`` means every angle is below 90 degrees (tolerance
    ``ANGLE_TOL`` radians); ``weakly_acute`` allows right angles. The
    quasi-uniformity ratio is the largest cell diameter over the smallest.
    """

    min_angle_deg: float
    max_angle_deg: float
    strictly_acute: bool
    weakly_acute: bool
    quasi_uniformity_ratio: float


def triangle_angles(mesh: Mesh) -> np.ndarray:
    """Interior angles in radians, shape (nc, 3), ordered as the cell vertices."""
    p = mesh.vertices[mesh.cells]  # (nc, 3, 2)
    angles = np.empty((mesh.num_cells, 3))
    for v in range(3):
        u1 = p[:, (v + 1) % 3] - p[:, v]
        u2 = p[:, (v + 2) % 3] - p[:, v]
        cosv = np.einsum("cx,cx->c", u1, u2)
        cosv /= np.linalg.norm(u1, axis=1) * np.linalg.norm(u2, axis=1)
        angles[:, v] = np.arccos(np.clip(cosv, -1.0, 1.0))
    return angles


def audit_mesh(mesh: Mesh) -> MeshAudit:
    """Audit angles and uniformity. Reports only; callers decide policy."""
    angles = triangle_angles(mesh)
    amin = float(angles.min())
    amax = float(angles.max())
    right = np.pi / 2
    p = mesh.vertices[mesh.cells]
    sides = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    diam = sides.max(axis=1)
    return MeshAudit(
        min_angle_deg=float(np.degrees(amin)),
        max_angle_deg=float(np.degrees(amax)),
        strictly_acute=bool(amax < right - ANGLE_TOL),
        weakly_acute=bool(amax <= right + ANGLE_TOL),
        quasi_uniformity_ratio=float(diam.max() / diam.min()),
    )
