"""Triangle meshes: validation, OBJ/PLY I/O, per-face geometry, Loop subdivision."""

import os
from dataclasses import dataclass, field

import numpy as np

# Relative area threshold: a face is degenerate if area < tol * bbox_diag^2.
DEGENERATE_AREA_REL_TOL = 1e-12


class MeshError(ValueError):
    """Raised for invalid mesh data or unparsable mesh files."""


class TriMesh:
    """Immutable oriented triangle mesh embedded in R^3.

    Parameters
    ----------
    positions : array_like, shape (N, 3)
        Vertex coordinates.
    faces : array_like, shape (F, 3)
        Vertex indices per triangle; the order of the three indices carries
        the orientation.  All faces must be oriented consistently (shared
        edges traversed in opposite directions by the two incident faces).

    Attributes
    ----------
    positions : ndarray, shape (N, 3), read-only
    faces : ndarray, shape (F, 3), read-only
    boundary_vertex : ndarray of bool, shape (N,)
        True for vertices incident to a boundary edge.
    """

    def __init__(self, positions, faces, _trusted_connectivity=False):
        positions = np.ascontiguousarray(positions, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise MeshError(f"positions must be (N, 3), got {positions.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {faces.shape}")
        if not np.isfinite(positions).all():
            raise MeshError("positions contain non-finite values")
        self.positions = positions
        self.faces = faces
        self.positions.flags.writeable = False
        self.faces.flags.writeable = False
        if _trusted_connectivity:
            self._validate_areas()
        else:
            self._validate()

    # -- basic queries ---------------------------------------------------

    @property
    def num_vertices(self):
        return self.positions.shape[0]

    @property
    def num_faces(self):
        return self.faces.shape[0]

    @property
    def bbox_diagonal(self):
        lo = self.positions.min(axis=0)
        hi = self.positions.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    @property
    def degenerate_area_tol(self):
        return DEGENERATE_AREA_REL_TOL * self.bbox_diagonal**2

    @property
    def edges(self):
        """Unique undirected edges, shape (E, 2), each row sorted."""
        return self._edges

    @property
    def boundary_edge(self):
        """Boolean mask over `edges`: True for edges with one incident face."""
        return self._boundary_edge

    @property
    def boundary_vertex(self):
        return self._boundary_vertex

    @property
    def is_closed(self):
        return not bool(self._boundary_edge.any())

    def triangle_areas(self):
        p = self.positions[self.faces]
        c = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return 0.5 * np.linalg.norm(c, axis=1)

    def with_positions(self, positions):
        """Same connectivity with new vertex coordinates (areas re-checked)."""
        mesh = TriMesh(positions, self.faces, _trusted_connectivity=True)
        mesh._edges = self._edges
        mesh._boundary_edge = self._boundary_edge
        mesh._boundary_vertex = self._boundary_vertex
        return mesh

    def __repr__(self):
        kind = "closed" if self.is_closed else "open"
        return f"TriMesh({self.num_vertices} vertices, {self.num_faces} faces, {kind})"

    # -- validation ------------------------------------------------------

    def _validate(self):
        n = self.num_vertices
        f = self.faces
        if f.size and (f.min() < 0 or f.max() >= n):
            raise MeshError("face index out of range")
        if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
            raise MeshError("face repeats a vertex")

        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        keys = directed[:, 0] * np.int64(n) + directed[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if (counts > 1).any():
            raise MeshError("inconsistent orientation: a directed edge occurs twice")

        lo = directed.min(axis=1)
        hi = directed.max(axis=1)
        ukeys = lo * np.int64(n) + hi
        uval, ucounts = np.unique(ukeys, return_counts=True)
        if (ucounts > 2).any():
            raise MeshError("non-manifold edge: more than two incident faces")

        self._edges = np.column_stack([uval // n, uval % n])
        self._boundary_edge = ucounts == 1
        bv = np.zeros(n, dtype=bool)
        bv[self._edges[self._boundary_edge].ravel()] = True
        bv.flags.writeable = False
        self._boundary_vertex = bv
        self._validate_areas()

    def _validate_areas(self):
        if self.num_faces == 0:
            return
        areas = self.triangle_areas()
        tol = self.degenerate_area_tol
        if (areas < tol).any():
            k = int(np.argmin(areas))
            raise MeshError(
                f"degenerate triangle {k}: area {areas[k]:.3e} < tolerance {tol:.3e}"
            )


@dataclass(frozen=True)
class DofMap:
    """Maps (vertex, axis) pairs to flat coefficient indices 3*i + k.

    When a Dirichlet boundary condition is active, all three axes of every
    boundary vertex are fixed (their positions are data, not unknowns) and
    the linear systems are restricted to the remaining interior indices.
    """

    num_vertices: int
    dirichlet: bool
    interior_vertex: np.ndarray = field(repr=False)

    @classmethod
    def for_mesh(cls, mesh, dirichlet=False):
        interior = ~mesh.boundary_vertex if dirichlet else np.ones(mesh.num_vertices, dtype=bool)
        interior = interior.copy()
        interior.flags.writeable = False
        return cls(mesh.num_vertices, bool(dirichlet), interior)

    @property
    def num_dofs(self):
        return 3 * self.num_vertices

    @property
    def interior_dofs(self):
        """Flat indices of the free degrees of freedom, ascending."""
        return np.repeat(3 * np.flatnonzero(self.interior_vertex), 3) + np.tile(
            [0, 1, 2], int(self.interior_vertex.sum())
        )

    @property
    def num_interior_dofs(self):
        return 3 * int(self.interior_vertex.sum())

    def flat_index(self, vertex, axis):
        return 3 * vertex + axis

    def zero_extend(self, interior_values):
        """Scatter a vector over interior DOFs into a full 3N vector."""
        full = np.zeros(self.num_dofs)
        full[self.interior_dofs] = interior_values
        return full


# -- per-face geometry -----------------------------------------------------


def triangle_geometry(mesh, face):
    """Area, barycentric-hat surface gradients and corner cotangents of a face.

    Returns
    -------
    area : float
    basis_gradients : ndarray, shape (3, 3)
        Row k is the (constant) surface gradient of the hat function of
        corner k; the rows sum to zero.
    cotangents : ndarray, shape (3,)
        Cotangents of the three interior angles, in corner order.
    """
    p = mesh.positions[mesh.faces[face]]
    c = np.cross(p[1] - p[0], p[2] - p[0])
    two_area = np.linalg.norm(c)
    area = 0.5 * two_area
    if area < mesh.degenerate_area_tol:
        raise MeshError(f"degenerate face {face}")
    nhat = c / two_area
    p1 = np.roll(p, -1, axis=0)
    p2 = np.roll(p, -2, axis=0)
    grads = np.cross(nhat[None, :], p2 - p1) / two_area
    cots = np.einsum("ki,ki->k", p1 - p, p2 - p) / two_area
    return area, grads, cots


# -- Loop subdivision --------------------------------------------------------


def loop_subdivide(mesh):
    """One round of Loop subdivision (F -> 4F, V -> V + E).

    Interior edge points use the 3/8-3/8-1/8-1/8 stencil, boundary edge
    points the midpoint rule.  Interior vertices are relaxed with the
    valence-dependent beta rule, boundary vertices with the cubic-spline
    mask 1/8-3/4-1/8 along the boundary curve.
    """
    pos = mesh.positions
    faces = mesh.faces
    n = mesh.num_vertices
    edges = mesh.edges
    n_edges = edges.shape[0]

    edge_key = edges[:, 0] * np.int64(n) + edges[:, 1]
    order = np.argsort(edge_key, kind="stable")
    sorted_keys = edge_key[order]

    def edge_index(a, b):
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        return order[np.searchsorted(sorted_keys, lo * np.int64(n) + hi)]

    # Opposite-vertex accumulation for the interior edge stencil.
    opp_sum = np.zeros((n_edges, 3))
    opp_count = np.zeros(n_edges, dtype=np.int64)
    for k in range(3):
        ea = faces[:, (k + 1) % 3]
        eb = faces[:, (k + 2) % 3]
        idx = edge_index(ea, eb)
        np.add.at(opp_sum, idx, pos[faces[:, k]])
        np.add.at(opp_count, idx, 1)

    ends_sum = pos[edges[:, 0]] + pos[edges[:, 1]]
    boundary = mesh.boundary_edge
    edge_points = np.empty((n_edges, 3))
    edge_points[boundary] = 0.5 * ends_sum[boundary]
    inner = ~boundary
    edge_points[inner] = 0.375 * ends_sum[inner] + 0.125 * opp_sum[inner]

    # Even (original) vertices.
    valence = np.zeros(n, dtype=np.int64)
    nbr_sum = np.zeros((n, 3))
    np.add.at(valence, edges[:, 0], 1)
    np.add.at(valence, edges[:, 1], 1)
    np.add.at(nbr_sum, edges[:, 0], pos[edges[:, 1]])
    np.add.at(nbr_sum, edges[:, 1], pos[edges[:, 0]])

    new_pos = pos.copy()
    interior_v = ~mesh.boundary_vertex & (valence > 0)
    val = valence[interior_v].astype(np.float64)
    beta = (0.625 - (0.375 + 0.25 * np.cos(2.0 * np.pi / val)) ** 2) / val
    new_pos[interior_v] = (1.0 - val * beta)[:, None] * pos[interior_v] + beta[
        :, None
    ] * nbr_sum[interior_v]

    if mesh.boundary_vertex.any():
        bnd_nbr_sum = np.zeros((n, 3))
        bedges = edges[boundary]
        np.add.at(bnd_nbr_sum, bedges[:, 0], pos[bedges[:, 1]])
        np.add.at(bnd_nbr_sum, bedges[:, 1], pos[bedges[:, 0]])
        bv = mesh.boundary_vertex
        new_pos[bv] = 0.75 * pos[bv] + 0.125 * bnd_nbr_sum[bv]

    # Split each face into four; midpoint indices are offset by n.
    m01 = n + edge_index(faces[:, 0], faces[:, 1])
    m12 = n + edge_index(faces[:, 1], faces[:, 2])
    m20 = n + edge_index(faces[:, 2], faces[:, 0])
    new_faces = np.concatenate(
        [
            np.column_stack([faces[:, 0], m01, m20]),
            np.column_stack([faces[:, 1], m12, m01]),
            np.column_stack([faces[:, 2], m20, m12]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return TriMesh(np.vstack([new_pos, edge_points]), new_faces)


# -- file I/O ---------------------------------------------------------------


def load_mesh(path, format=None):
    """Read a triangle mesh from an OBJ or ASCII-PLY file."""
    fmt = _resolve_format(path, format)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    if fmt == "obj":
        positions, faces = _parse_obj(text, path)
    else:
        positions, faces = _parse_ply(text, path)
    return TriMesh(positions, faces)


def save_mesh(mesh, path, format=None):
    """Write a triangle mesh as OBJ or ASCII-PLY."""
    fmt = _resolve_format(path, format)
    if fmt == "obj":
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.positions]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    else:
        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {mesh.num_vertices}",
            "property double x",
            "property double y",
            "property double z",
            f"element face {mesh.num_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.positions]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def frame_path(out_dir, index):
    """Path of the index-th mesh frame in an output directory."""
    return os.path.join(out_dir, f"frame_{index:04d}.obj")


def _resolve_format(path, format):
    if format is not None:
        fmt = format.lower()
    else:
        fmt = os.path.splitext(str(path))[1].lstrip(".").lower()
    if fmt not in ("obj", "ply"):
        raise MeshError(f"unsupported mesh format {fmt!r} (use obj or ply)")
    return fmt


def _parse_obj(text, path):
    positions = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: bad vertex: {raw!r}") from exc
        elif tag == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise MeshError(
                    f"{path}:{lineno}: only triangle faces are supported "
                    f"(got {len(refs)} vertices)"
                )
            idx = []
            for ref in refs:
                head = ref.split("/")[0]
                try:
                    value = int(head)
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad face index {ref!r}") from exc
                if value <= 0:
                    raise MeshError(f"{path}:{lineno}: face indices must be positive")
                idx.append(value - 1)
            faces.append(idx)
        # Other record types (vn, vt, o, g, s, usemtl, mtllib, ...) are ignored.
    if not positions:
        raise MeshError(f"{path}: no vertices found")
    return np.asarray(positions), np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def _parse_ply(text, path):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshError(f"{path}: not a PLY file")
    n_vertex = n_face = None
    vertex_props = []
    in_vertex_element = False
    cursor = 1
    while cursor < len(lines):
        parts = lines[cursor].strip().split()
        cursor += 1
        if not parts:
            continue
        if parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise MeshError(f"{path}: only ASCII PLY is supported")
        elif parts[0] == "element":
            in_vertex_element = parts[1] == "vertex"
            if parts[1] == "vertex":
                n_vertex = int(parts[2])
            elif parts[1] == "face":
                n_face = int(parts[2])
            else:
                raise MeshError(f"{path}: unsupported element {parts[1]!r}")
        elif parts[0] == "property":
            if in_vertex_element and parts[1] != "list":
                vertex_props.append(parts[-1])
        elif parts[0] == "end_header":
            break
    else:
        raise MeshError(f"{path}: missing end_header")
    if n_vertex is None or n_face is None:
        raise MeshError(f"{path}: missing vertex or face element")
    try:
        cols = [vertex_props.index(axis) for axis in ("x", "y", "z")]
    except ValueError as exc:
        raise MeshError(f"{path}: vertex element lacks x/y/z properties") from exc

    body = [ln.split() for ln in lines[cursor:] if ln.strip()]
    if len(body) < n_vertex + n_face:
        raise MeshError(f"{path}: truncated PLY body")
    try:
        positions = np.array(
            [[float(row[c]) for c in cols] for row in body[:n_vertex]]
        )
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: bad vertex record") from exc
    faces = []
    for row in body[n_vertex : n_vertex + n_face]:
        try:
            count = int(row[0])
            idx = [int(v) for v in row[1 : 1 + count]]
        except (ValueError, IndexError) as exc:
            raise MeshError(f"{path}: bad face record") from exc
        if count != 3:
            raise MeshError(f"{path}: only triangle faces are supported")
        faces.append(idx)
    return positions, np.asarray(faces, dtype=np.int64).reshape(-1, 3)
