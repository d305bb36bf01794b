"""Triangle meshes and the discrete geometric operators built on them.

A mesh is loaded from OFF, OBJ (``v``/``f`` records only) or
binary-little-endian PLY, validated (index range, degenerate faces,
edge-manifoldness), and turned into the cotangent stiffness / lumped mass
pair that defines the generalized eigenproblem used everywhere else.
Geodesic distances are graph geodesics: Dijkstra over the edge graph with
Euclidean edge lengths, which is adequate for error ratios at this scale.
"""

import hashlib
import struct

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import (
    DegenerateFaceError,
    DisconnectedMeshError,
    NonManifoldError,
    NumericalError,
    ParseError,
)

# Relative face-area floor: a face whose area is below this times the squared
# bounding-box diagonal is rejected as degenerate.
DEGENERATE_AREA_FACTOR = 1e-12


class TriMesh:
    """An immutable triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions. Vertex order is significant: correspondence
        indices refer to positions in this array.
    faces : array_like, shape (m, 3)
        Vertex index triples.

    Raises
    ------
    ParseError
        If shapes are wrong or a face index is out of range.
    DegenerateFaceError
        If a face repeats a vertex or has (near-)zero area.
    NonManifoldError
        If an edge is shared by more than two faces.
    """

    def __init__(self, vertices, faces):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ParseError(f"vertices must be (n, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ParseError(f"faces must be (m, 3), got {faces.shape}")
        if not np.isfinite(vertices).all():
            raise ParseError("vertex coordinates contain NaN or Inf")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ParseError(
                f"face index out of range [0, {len(vertices)}): "
                f"min {faces.min()}, max {faces.max()}"
            )
        self.vertices = vertices
        self.faces = faces
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self._validate()

    @property
    def vertex_count(self):
        return len(self.vertices)

    @property
    def face_count(self):
        return len(self.faces)

    def _validate(self):
        f = self.faces
        if f.size == 0:
            return
        same = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if same.any():
            raise DegenerateFaceError(
                f"face {int(np.flatnonzero(same)[0])} repeats a vertex"
            )
        areas = self.face_areas()
        floor = DEGENERATE_AREA_FACTOR * self.bbox_diagonal() ** 2
        bad = areas <= floor
        if bad.any():
            raise DegenerateFaceError(
                f"face {int(np.flatnonzero(bad)[0])} has near-zero area"
            )
        edges = np.sort(
            np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1
        )
        _, counts = np.unique(edges, axis=0, return_counts=True)
        if (counts > 2).any():
            raise NonManifoldError("an edge is shared by more than two faces")

    def face_areas(self):
        """Per-face areas, shape (m,)."""
        p = self.vertices[self.faces]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def total_area(self):
        return float(self.face_areas().sum())

    def bbox_diagonal(self):
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(ext))

    def edges(self):
        """Unique undirected edges, shape (e, 2), sorted pairs."""
        f = self.faces
        e = np.sort(
            np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1
        )
        return np.unique(e, axis=0)

    def normalized_to_unit_area(self):
        """A copy rescaled so the total surface area is 1."""
        scale = 1.0 / np.sqrt(self.total_area())
        return TriMesh(self.vertices * scale, self.faces)

    def content_hash(self):
        """SHA-256 of the exact vertex and face data (hex string)."""
        h = hashlib.sha256()
        h.update(b"TRIMESH1")
        h.update(struct.pack("<QQ", self.vertex_count, self.face_count))
        h.update(np.ascontiguousarray(self.vertices, "<f8").tobytes())
        h.update(np.ascontiguousarray(self.faces, "<i8").tobytes())
        return h.hexdigest()

    def adjacency(self):
        """Symmetric vertex adjacency with Euclidean edge lengths (CSR)."""
        e = self.edges()
        w = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        n = self.vertex_count
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        vals = np.concatenate([w, w])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def connected_component_count(self):
        e = self.edges()
        n = self.vertex_count
        graph = sp.csr_matrix(
            (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)
        )
        count, _ = connected_components(graph, directed=False)
        return int(count)

    def __repr__(self):
        return f"TriMesh(|V|={self.vertex_count}, |F|={self.face_count})"


class Operators:
    """Cotangent stiffness and lumped mass for a mesh.

    Attributes
    ----------
    stiffness : scipy.sparse.csr_matrix, shape (n, n)
        Symmetric; off-diagonal entry for edge (i, j) is
        -(cot a + cot b)/2 over the incident triangles, diagonal chosen
        so each row sums to zero.
    mass : ndarray, shape (n,)
        Diagonal of the lumped mass matrix: one third of the area of the
        triangles incident to each vertex.
    total_area : float
    mesh : TriMesh
        The mesh these operators were built from.
    """

    def __init__(self, stiffness, mass, total_area, mesh):
        self.stiffness = stiffness
        self.mass = mass
        self.total_area = total_area
        self.mesh = mesh

    @property
    def vertex_count(self):
        return self.mass.shape[0]

    def mass_matrix(self):
        """The mass diagonal as a sparse matrix."""
        return sp.diags(self.mass)


def build_operators(mesh, clamp_obtuse=False):
    """Assemble the cotangent stiffness and lumped mass pair.

    Parameters
    ----------
    mesh : TriMesh
    clamp_obtuse : bool
        If True, negative cotangent weights (from obtuse angles) are
        clamped to zero. Off by default: the standard formula keeps them.

    Returns
    -------
    Operators

    Raises
    ------
    NumericalError
        If any cotangent weight is non-finite.
    """
    v, f = mesh.vertices, mesh.faces
    n = mesh.vertex_count
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    # cot at corner c = (u . w) / |u x w| with u, w the edges leaving c
    def corner_cot(a, b, c):
        u = b - a
        w = c - a
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        return np.einsum("ij,ij->i", u, w) / cross

    cot0 = corner_cot(p0, p1, p2)  # opposite edge (1, 2)
    cot1 = corner_cot(p1, p2, p0)  # opposite edge (2, 0)
    cot2 = corner_cot(p2, p0, p1)  # opposite edge (0, 1)
    cots = np.concatenate([cot0, cot1, cot2])
    if not np.isfinite(cots).all():
        raise NumericalError("non-finite cotangent weight")
    if clamp_obtuse:
        cots = np.maximum(cots, 0.0)

    rows = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    cols = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    w = 0.5 * cots
    off = sp.coo_matrix(
        (np.concatenate([-w, -w]),
         (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    stiffness = (off + sp.diags(diag)).tocsr()

    areas = mesh.face_areas()
    mass = np.zeros(n)
    np.add.at(mass, f.ravel(), np.repeat(areas / 3.0, 3))
    return Operators(stiffness, mass, float(areas.sum()), mesh)


def geodesic_matrix(mesh, sources):
    """Graph-geodesic distances from each source vertex to all vertices.

    Row s holds Dijkstra distances over the edge graph with Euclidean
    edge lengths, starting at ``sources[s]``.

    Parameters
    ----------
    mesh : TriMesh
    sources : sequence of vertex indices, nonempty

    Returns
    -------
    ndarray, shape (len(sources), n)

    Raises
    ------
    DisconnectedMeshError
        If any vertex is unreachable from a source.
    """
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size == 0:
        raise ParseError("sources must be nonempty")
    if sources.min() < 0 or sources.max() >= mesh.vertex_count:
        raise ParseError("source index out of range")
    dist = dijkstra(mesh.adjacency(), directed=False, indices=sources)
    dist = np.atleast_2d(dist)
    if np.isinf(dist).any():
        raise DisconnectedMeshError("mesh graph is disconnected")
    return dist


# -- file formats ---------------------------------------------------------


def load_mesh(path, fmt=None, normalize=False):
    """Load a triangle mesh from OFF, OBJ or binary-little-endian PLY.

    Parameters
    ----------
    path : str or Path
    fmt : {"off", "obj", "ply"}, optional
        Inferred from the file extension when omitted.
    normalize : bool
        Rescale to unit total surface area after loading. Matching
        pipelines enable this so diffusion times and geodesic errors are
        scale-comparable across shapes; raw loading keeps file units.

    Returns
    -------
    TriMesh
        Vertex order is exactly the file order.
    """
    path = str(path)
    if fmt is None:
        ext = path.rsplit(".", 1)[-1].lower() if "." in path else ""
        fmt = ext
    fmt = fmt.lower()
    if fmt == "off":
        vertices, faces = _read_off(path)
    elif fmt == "obj":
        vertices, faces = _read_obj(path)
    elif fmt == "ply":
        vertices, faces = _read_ply(path)
    else:
        raise ParseError(f"unknown mesh format {fmt!r} for {path!r}")
    mesh = TriMesh(vertices, faces)
    if normalize:
        mesh = mesh.normalized_to_unit_area()
    return mesh


def _read_off(path):
    tokens = []
    with open(path, "r") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens:
        raise ParseError(f"{path}: empty OFF file")
    if tokens[0].upper() != "OFF":
        raise ParseError(f"{path}: missing OFF header")
    tokens = iter(tokens[1:])

    def take():
        token = next(tokens, None)
        if token is None:
            raise ParseError(f"{path}: truncated OFF data")
        return token

    try:
        nv = int(take())
        nf = int(take())
        take()  # edge count, ignored
        vertices = np.array(
            [[float(take()) for _ in range(3)] for _ in range(nv)],
            dtype=np.float64,
        ).reshape(nv, 3)
        faces = np.empty((nf, 3), dtype=np.int64)
        for i in range(nf):
            cnt = int(take())
            if cnt != 3:
                raise ParseError(f"{path}: face {i} has {cnt} vertices, need 3")
            faces[i] = [int(take()) for _ in range(3)]
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"{path}: malformed OFF data") from exc
    return vertices, faces


def _read_obj(path):
    vertices, faces = [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: short vertex record")
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad vertex") from exc
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ParseError(
                        f"{path}:{lineno}: only triangular faces supported"
                    )
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:4]]
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad face") from exc
                if any(i <= 0 for i in idx):
                    raise ParseError(
                        f"{path}:{lineno}: face indices must be positive (1-based)"
                    )
                faces.append([i - 1 for i in idx])
            # other records (vt, vn, usemtl, ...) carry no geometry
    if not vertices:
        raise ParseError(f"{path}: no vertices found")
    return np.asarray(vertices, np.float64), np.asarray(faces, np.int64)


_PLY_SCALARS = {
    "char": "<i1", "int8": "<i1",
    "uchar": "<u1", "uint8": "<u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}


def _read_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    # the header is ASCII terminated by "end_header"
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[data.index(b"\n", end) + 1:]

    elements = []  # (name, count, [(prop_name, dtype) or ("list", count_dt, item_dt, name)])
    fmt_seen = None
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt_seen = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append((parts[2], parts[1]))
    if fmt_seen != "binary_little_endian":
        raise ParseError(
            f"{path}: only binary_little_endian PLY is supported, got {fmt_seen!r}"
        )

    vertices = None
    faces = None
    offset = 0
    try:
        for name, count, props in elements:
            if name == "vertex":
                names = [p[0] for p in props]
                if any(p[0] == "list" for p in props):
                    raise ParseError(f"{path}: list property on vertices")
                dt = np.dtype([(n, _PLY_SCALARS[t]) for n, t in props])
                arr = np.frombuffer(body, dtype=dt, count=count, offset=offset)
                offset += dt.itemsize * count
                vertices = np.column_stack(
                    [arr["x"], arr["y"], arr["z"]]
                ).astype(np.float64)
            elif name == "face":
                if len(props) != 1 or props[0][0] != "list":
                    raise ParseError(f"{path}: unsupported face properties")
                _, cnt_t, idx_t, _ = props[0]
                cnt_dt = np.dtype(_PLY_SCALARS[cnt_t])
                idx_dt = np.dtype(_PLY_SCALARS[idx_t])
                faces = np.empty((count, 3), dtype=np.int64)
                for i in range(count):
                    k = int(np.frombuffer(body, cnt_dt, 1, offset)[0])
                    offset += cnt_dt.itemsize
                    if k != 3:
                        raise ParseError(f"{path}: face {i} has {k} vertices")
                    faces[i] = np.frombuffer(body, idx_dt, 3, offset)
                    offset += 3 * idx_dt.itemsize
            else:
                # skip an unknown fixed-size element
                if any(p[0] == "list" for p in props):
                    raise ParseError(f"{path}: cannot skip list element {name!r}")
                dt = np.dtype([(n, _PLY_SCALARS[t]) for n, t in props])
                offset += dt.itemsize * count
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: malformed PLY") from exc
    if vertices is None or faces is None:
        raise ParseError(f"{path}: missing vertex or face element")
    return vertices, faces


def save_off(mesh, path):
    """Write a mesh as ASCII OFF with full float64 precision."""
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.vertex_count} {mesh.face_count} 0\n")
        for v in mesh.vertices:
            fh.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
