"""Closed oriented triangle meshes: generators, validation and OFF/OBJ I/O."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import MeshError

__all__ = ["TriangulatedSurface", "icosphere", "torus_mesh", "read_mesh", "write_mesh"]


@dataclass
class TriangulatedSurface:
    """Vertices ``(V, 3)`` and counter-clockwise (outward) triangles ``(F, 3)``."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("only triangular faces are supported")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

    def edges(self):
        """Unique undirected edges ``(E, 2)`` with ``i < j``."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    @property
    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges()) + len(self.faces)

    def validate(self):
        """Raise :class:`MeshError` unless closed and consistently oriented."""
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("degenerate triangle with repeated vertex")
        directed = Counter()
        for a, b, c in f.tolist():
            for e in ((a, b), (b, c), (c, a)):
                directed[e] += 1
        for (a, b), count in directed.items():
            if count != 1:
                raise MeshError(f"directed edge {(a, b)} used {count} times: inconsistent orientation")
            if directed.get((b, a), 0) != 1:
                raise MeshError(f"edge {(a, b)} is not shared by exactly two triangles: surface not closed")
        return self

    def face_normals(self):
        v = self.vertices[self.faces]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def subdivide(self, project=None) -> "TriangulatedSurface":
        """Split every triangle into four; ``project`` maps new vertices back to the surface."""
        verts = list(self.vertices)
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                p = 0.5 * (self.vertices[a] + self.vertices[b])
                mid[key] = len(verts)
                verts.append(p)
            return mid[key]

        faces = []
        for a, b, c in self.faces.tolist():
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        V = np.array(verts)
        if project is not None:
            V = project(V)
        return TriangulatedSurface(V, np.array(faces))


def icosphere(subdivisions: int = 4, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangulatedSurface:
    """Geodesic sphere from a subdivided icosahedron, outward oriented."""
    t = (1.0 + 5 ** 0.5) / 2.0
    V = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=float,
    )
    F = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    )
    c = np.asarray(center, dtype=float)
    unit = lambda P: P / np.linalg.norm(P, axis=1, keepdims=True)
    mesh = TriangulatedSurface(unit(V), F)
    for _ in range(subdivisions):
        mesh = mesh.subdivide(unit)
    return TriangulatedSurface(c + radius * mesh.vertices, mesh.faces)


def torus_mesh(R: float = 1.0, r: float = 0.3, n_u: int = 48, n_v: int = 24,
               center=(0.0, 0.0, 0.0)) -> TriangulatedSurface:
    """Torus of revolution about the z-axis, outward oriented."""
    if not R > r > 0:
        raise MeshError("torus radii must satisfy R > r > 0")
    if n_u < 3 or n_v < 3:
        raise MeshError("torus resolution must be at least 3 x 3")
    u = 2 * np.pi * np.arange(n_u) / n_u
    w = 2 * np.pi * np.arange(n_v) / n_v
    U, W = np.meshgrid(u, w, indexing="ij")
    V = np.stack([(R + r * np.cos(W)) * np.cos(U), (R + r * np.cos(W)) * np.sin(U), r * np.sin(W)], axis=-1)
    idx = lambda i, j: (i % n_u) * n_v + (j % n_v)
    faces = []
    for i in range(n_u):
        for j in range(n_v):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            # (d/du) x (d/dw) points outward for this parametrisation
            faces += [(a, b, c), (a, c, d)]
    return TriangulatedSurface(V.reshape(-1, 3) + np.asarray(center, dtype=float), np.array(faces))


def write_mesh(mesh: TriangulatedSurface, path) -> Path:
    path = Path(path)
    suffix = path.suffix.lower()
    lines = []
    if suffix == ".off":
        lines.append("OFF")
        lines.append(f"{len(mesh.vertices)} {len(mesh.faces)} 0")
        lines += [" ".join(repr(float(c)) for c in p) for p in mesh.vertices]
        lines += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    elif suffix == ".obj":
        lines += ["v " + " ".join(repr(float(c)) for c in p) for p in mesh.vertices]
        lines += ["f " + " ".join(str(int(i) + 1) for i in f) for f in mesh.faces]
    else:
        raise MeshError(f"unsupported mesh format {suffix!r} (use .off or .obj)")
    path.write_text("\n".join(lines) + "\n")
    return path


def _read_off(text):
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens or tokens[0][0] != "OFF":
        raise MeshError("OFF file must start with 'OFF'")
    head = tokens[0][1:] or tokens[1]
    body = tokens[1:] if tokens[0][1:] else tokens[2:]
    nv, nf = int(head[0]), int(head[1])
    if len(body) < nv + nf:
        raise MeshError("OFF file truncated")
    V = np.array([[float(c) for c in row[:3]] for row in body[:nv]])
    F = []
    for row in body[nv:nv + nf]:
        if int(row[0]) != 3:
            raise MeshError("only triangular faces are supported")
        F.append([int(c) for c in row[1:4]])
    return V, np.array(F, dtype=np.int64).reshape(-1, 3)


def _read_obj(text):
    V, F = [], []
    for line in text.splitlines():
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            V.append([float(c) for c in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MeshError("only triangular faces are supported")
            idx = []
            for p in parts[1:]:
                k = int(p.split("/")[0])
                idx.append(k - 1 if k > 0 else len(V) + k)
            F.append(idx)
    return np.array(V, dtype=float).reshape(-1, 3), np.array(F, dtype=np.int64).reshape(-1, 3)


def read_mesh(path) -> TriangulatedSurface:
    """Read an OFF or OBJ file (vertices and triangular faces only)."""
    path = Path(path)
    suffix = path.suffix.lower()
    text = path.read_text()
    if suffix == ".off":
        V, F = _read_off(text)
    elif suffix == ".obj":
        V, F = _read_obj(text)
    else:
        raise MeshError(f"unsupported mesh format {suffix!r} (use .off or .obj)")
    return TriangulatedSurface(V, F)
