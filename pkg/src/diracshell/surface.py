"""Quadrature representations of the closed shell surface."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, MeshError


@dataclass(frozen=True)
class SphereDescriptor:
    radius: float
    n_theta: int
    cos_theta: np.ndarray = field(repr=False)
    gl_weights: np.ndarray = field(repr=False)

    @property
    def n_phi(self) -> int:
        return 2 * self.n_theta

    @property
    def tag(self) -> str:
        return f"sphere(radius={self.radius!r}, n_theta={self.n_theta})"


@dataclass(frozen=True)
class MeshDescriptor:
    path: str

    @property
    def tag(self) -> str:
        return f"mesh({self.path})"


@dataclass(frozen=True)
class Surface:
    """Nodes, positive weights and outward unit normals of a closed surface.

    Attributes
    ----------
    nodes : numpy.ndarray, shape (N, 3)
    weights : numpy.ndarray, shape (N,)
    normals : numpy.ndarray, shape (N, 3)
    descriptor : SphereDescriptor or MeshDescriptor
    """

    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    descriptor: SphereDescriptor | MeshDescriptor

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.normals):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def is_sphere(self) -> bool:
        return isinstance(self.descriptor, SphereDescriptor)

    @property
    def tag(self) -> str:
        return self.descriptor.tag

    def mean_spacing(self) -> float:
        """Typical node spacing sqrt(area / N)."""
        return float(np.sqrt(self.area / self.n_nodes))

    def integrate(self, values) -> np.ndarray:
        """Quadrature sum over nodes along the first axis."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def make_sphere(radius: float, n_theta: int) -> Surface:
    """Gauss-Legendre in cos(theta) times a uniform azimuthal grid.

    Nodes are ordered with the polar index varying slowest; the total count
    is ``2 * n_theta**2``.
    """
    if not radius > 0:
        raise DomainError("sphere radius must be positive")
    if int(n_theta) != n_theta or n_theta < 4:
        raise DomainError("n_theta must be an integer >= 4")
    n = int(n_theta)
    t, wt = np.polynomial.legendre.leggauss(n)
    phi = np.pi * np.arange(2 * n) / n
    st = np.sqrt(1.0 - t**2)
    normals = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(t, 2 * n),
        ],
        axis=1,
    )
    weights = np.repeat(radius**2 * wt * np.pi / n, 2 * n)
    desc = SphereDescriptor(float(radius), n, t, wt)
    return Surface(radius * normals, weights, normals, desc)


def _parse_off(text: str):
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens or tokens[0][0] != "OFF":
        raise MeshError("parse error: missing OFF header")
    head = tokens[0][1:] if len(tokens[0]) > 1 else None
    rest = tokens[1:]
    if head is None:
        if not rest:
            raise MeshError("parse error: missing counts line")
        head, rest = rest[0], rest[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
        verts = np.array([[float(v) for v in row[:3]] for row in rest[:nv]])
        faces = []
        for row in rest[nv : nv + nf]:
            if int(row[0]) != 3 or len(row) < 4:
                raise MeshError("parse error: only triangular faces are supported")
            faces.append([int(row[1]), int(row[2]), int(row[3])])
        faces = np.array(faces, dtype=int)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"parse error: {exc}") from exc
    if verts.shape != (nv, 3) or faces.shape != (nf, 3):
        raise MeshError("parse error: vertex or face count mismatch")
    if nf and (faces.min() < 0 or faces.max() >= nv):
        raise MeshError("parse error: face index out of range")
    return verts, faces


def load_mesh(path) -> Surface:
    """Read an ASCII OFF triangle mesh; one node per face centroid.

    Faces must wind counterclockwise seen from outside. Raises
    :class:`MeshError` on parse failures, open meshes and degenerate faces.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshError(f"cannot read mesh: {exc}") from exc
    verts, faces = _parse_off(text)
    if len(faces) == 0:
        raise MeshError("parse error: mesh has no faces")

    # every directed edge must be matched by its reverse exactly once
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    directed = {tuple(e) for e in edges.tolist()}
    if len(directed) != len(edges):
        raise MeshError("non-manifold or inconsistently wound mesh")
    if any((b, a) not in directed for a, b in directed):
        raise MeshError("non-closed mesh: boundary edge detected")

    p0, p1, p2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    cross = np.cross(p1 - p0, p2 - p0)
    twice_area = np.linalg.norm(cross, axis=1)
    bbox = np.ptp(verts, axis=0).max()
    if np.any(0.5 * twice_area < 1e-14 * bbox**2):
        raise MeshError("degenerate triangle")
    normals = cross / twice_area[:, None]
    centroids = (p0 + p1 + p2) / 3.0

    # signed volume decides whether the winding points outward
    volume = np.einsum("ij,ij->", p0, np.cross(p1, p2)) / 6.0
    if volume < 0:
        normals = -normals
    if len({tuple(c) for c in np.round(centroids, 14).tolist()}) != len(centroids):
        raise MeshError("coincident face centroids")
    return Surface(centroids, 0.5 * twice_area, normals, MeshDescriptor(str(path)))


def ball_measure_profile(s: Surface, x, radii) -> np.ndarray:
    """Discrete measure of the nodes within distance rho of ``x`` for each radius."""
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise DomainError("radii must be positive and increasing")
    d = np.linalg.norm(s.nodes - np.asarray(x, dtype=float), axis=1)
    order = np.argsort(d)
    cum = np.cumsum(s.weights[order])
    idx = np.searchsorted(d[order], radii, side="right")
    return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)


def write_off(path, verts, faces) -> None:
    """Write a triangle mesh in the ASCII OFF format."""
    lines = ["OFF", f"{len(verts)} {len(faces)} 0"]
    lines += [" ".join(repr(float(v)) for v in row) for row in verts]
    lines += ["3 " + " ".join(str(int(i)) for i in row) for row in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def icosphere(subdivisions: int = 3, radius: float = 1.0):
    """Vertices and outward-wound faces of a subdivided icosahedron."""
    g = (1.0 + 5**0.5) / 2.0
    v = [(-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0), (0, -1, g), (0, 1, g),
         (0, -1, -g), (0, 1, -g), (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9),
         (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2),
         (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10),
         (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = list(f)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                q = verts[i] + verts[j]
                verts.append(q / np.linalg.norm(q))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return radius * np.array(verts), np.array(faces, dtype=int)
