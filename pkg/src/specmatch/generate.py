"""Procedural test meshes: icospheres, grids, strips.

These are the desk-scale stand-ins for scanned shapes. All generators are
deterministic; the icosphere subdivision order is fixed so vertex indices
are stable across runs.
"""

import numpy as np

from .mesh import TriMesh


def icosphere(subdivisions=1, radius=1.0):
    """Subdivided icosahedron projected onto a sphere.

    Vertex/face counts by subdivision level: 0 -> 12/20, 1 -> 42/80,
    2 -> 162/320, 3 -> 642/1280.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]
    for _ in range(subdivisions):
        midpoint = {}

        def midpoint_index(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint_index(a, b)
            bc = midpoint_index(b, c)
            ca = midpoint_index(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriMesh(np.asarray(verts) * radius, np.asarray(faces, np.int64))


def bumpy_sphere(subdivisions=1, amplitude=0.08, seed=7):
    """Icosphere with a deterministic radial bump pattern.

    Breaks every symmetry of the icosphere, so the Laplacian spectrum is
    simple; use this where eigenvector comparisons need well-separated
    eigenvalues.
    """
    base = icosphere(subdivisions)
    v = base.vertices.copy()
    rng = np.random.default_rng(seed)
    coeff = rng.standard_normal(6)
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    bump = (
        coeff[0] * np.sin(3 * x) + coeff[1] * np.cos(2 * y)
        + coeff[2] * np.sin(4 * z) + coeff[3] * x * y
        + coeff[4] * y * z + coeff[5] * x
    )
    radial = 1.0 + amplitude * bump / np.abs(bump).max()
    return TriMesh(v * radial[:, None], base.faces)


def grid_mesh(nx=8, ny=None, width=1.0, height=1.0):
    """Flat rectangle triangulated on a regular (nx+1) x (ny+1) grid."""
    if ny is None:
        ny = nx
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    def vid(i, j):
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriMesh(verts, np.asarray(faces, np.int64))


def strip_mesh(segments=10, length=1.0, width=0.1):
    """A thin triangulated band; its edge graph contains the obvious path."""
    xs = np.linspace(0.0, length, segments + 1)
    top = np.column_stack([xs, np.full_like(xs, width), np.zeros_like(xs)])
    bottom = np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)])
    verts = np.concatenate([bottom, top])
    n = segments + 1
    faces = []
    for i in range(segments):
        faces.append((i, i + 1, n + i))
        faces.append((i + 1, n + i + 1, n + i))
    return TriMesh(verts, np.asarray(faces, np.int64))


def triangle_lattice(rows=4, cols=6, edge=1.0):
    """Patch of equilateral triangles; every edge has the same length."""
    h = edge * np.sqrt(3.0) / 2.0
    verts = []
    for r in range(rows + 1):
        offset = 0.5 * edge * (r % 2)
        for c in range(cols + 1):
            verts.append((offset + c * edge, r * h, 0.0))

    def vid(r, c):
        return r * (cols + 1) + c

    faces = []
    for r in range(rows):
        for c in range(cols):
            a, b = vid(r, c), vid(r, c + 1)
            d, e = vid(r + 1, c), vid(r + 1, c + 1)
            if r % 2 == 0:
                faces.append((a, b, d))
                faces.append((b, e, d))
            else:
                faces.append((a, b, e))
                faces.append((a, e, d))
    return TriMesh(np.asarray(verts), np.asarray(faces, np.int64))


def single_triangle(p0=(0, 0, 0), p1=(1, 0, 0), p2=(0, 1, 0)):
    return TriMesh(np.asarray([p0, p1, p2], np.float64), np.array([[0, 1, 2]]))


def unit_square_two_triangles():
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=np.float64
    )
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return TriMesh(verts, faces)


def two_disjoint_triangles():
    """Smallest disconnected mesh; used to exercise connectivity errors."""
    verts = np.array(
        [
            [0, 0, 0], [1, 0, 0], [0, 1, 0],
            [5, 0, 0], [6, 0, 0], [5, 1, 0],
        ],
        dtype=np.float64,
    )
    faces = np.array([[0, 1, 2], [3, 4, 5]], dtype=np.int64)
    return TriMesh(verts, faces)
