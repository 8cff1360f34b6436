"""Triangle meshes, cameras, normals, visibility and sqrt(3)-subdivision."""
from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .raster import rasterize

AZIMUTH_EPS = 1e-6


# --------------------------------------------------------------------------
# cameras


@dataclass
class Camera:
    """Pinhole camera; ``rotation``/``translation`` map world to camera.

    Camera axes follow the usual vision convention: x right, y down, z forward.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        R = self.rotation
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthonormal with determinant +1")

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def project(self, points):
        """Project world points to pixels.

        Returns ``(uv, depth)``. For a single 3-vector behind the camera a
        ``ValueError`` is raised; for arrays such rows get NaN pixels.
        """
        points = np.asarray(points, dtype=float)
        pc = self.to_camera(points)
        z = pc[..., 2]
        if points.ndim == 1:
            if z <= 0:
                raise ValueError("point is behind the camera")
            return np.array([self.fx * pc[0] / z + self.cx, self.fy * pc[1] / z + self.cy]), float(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            zs = np.where(z > 0, z, np.nan)
            uv = np.stack([self.fx * pc[..., 0] / zs + self.cx, self.fy * pc[..., 1] / zs + self.cy], axis=-1)
        return uv, z

    @classmethod
    def look_at(cls, eye, target, up, fx, fy=None, width=256, height=256, cx=None, cy=None) -> "Camera":
        eye = np.asarray(eye, dtype=float)
        z = np.asarray(target, dtype=float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, up)
        if np.linalg.norm(x) < 1e-9:
            raise ValueError("up vector is parallel to the viewing direction")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        return cls(
            fx=fx, fy=fx if fy is None else fy,
            cx=(width - 1) / 2 if cx is None else cx,
            cy=(height - 1) / 2 if cy is None else cy,
            rotation=R, translation=-R @ eye, width=width, height=height,
        )


def projected_azimuth(camera: Camera, normal, eps: float = AZIMUTH_EPS):
    """Azimuth in [0, 2pi) of a normal's image-plane projection.

    Measured counterclockwise from the image +x axis with image y pointing
    up, i.e. ``atan2(-n_y, n_x)`` in camera coordinates. For example the
    world normal (1, 1, 0)/sqrt(2) seen by an identity-pose camera has
    azimuth 7*pi/4. Returns ``None`` (NaN for arrays) when the projection
    is shorter than ``eps`` in squared length.
    """
    n = np.asarray(normal, dtype=float) @ camera.rotation.T
    nx, ny = n[..., 0], n[..., 1]
    alpha = np.mod(np.arctan2(-ny, nx), 2 * np.pi)
    alpha = np.where(alpha >= 2 * np.pi, 0.0, alpha)
    undefined = nx * nx + ny * ny < eps
    if np.ndim(alpha) == 0:
        return None if undefined else float(alpha)
    return np.where(undefined, np.nan, alpha)


# --------------------------------------------------------------------------
# meshes


class Topology:
    """Connectivity derived from a face list (immutable)."""

    def __init__(self, faces: np.ndarray, n_vertices: int):
        F = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        self.faces = F
        self.n_vertices = n_vertices
        m = len(F)
        a = F.reshape(-1)
        b = np.roll(F, -1, axis=1).reshape(-1)
        face_of = np.repeat(np.arange(m), 3)
        key = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        self.edges = edges
        self.nonmanifold = bool(np.any(counts > 2))
        order = np.argsort(inverse, kind="stable")
        edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_dir = np.zeros((len(edges), 2), dtype=bool)
        slot = np.zeros(len(a), dtype=np.int64)
        sorted_inv = inverse[order]
        first = np.ones(len(a), dtype=bool)
        first[1:] = sorted_inv[1:] != sorted_inv[:-1]
        run_start = np.maximum.accumulate(np.where(first, np.arange(len(a)), 0))
        slot[order] = np.arange(len(a)) - run_start
        keep = slot < 2
        edge_faces[inverse[keep], slot[keep]] = face_of[keep]
        edge_dir[inverse[keep], slot[keep]] = (a < b)[keep]
        two = edge_faces[:, 1] >= 0
        # a consistently oriented manifold traverses a shared edge in opposite directions
        self.inconsistent = bool(np.any(edge_dir[two, 0] == edge_dir[two, 1]))
        self.edge_faces = edge_faces
        self.half_edge_edge = inverse.reshape(m, 3)  # edge index of (F[k], F[k+1])

        across = np.full((m, 3), -1, dtype=np.int64)
        he = inverse.reshape(m, 3)
        ef = edge_faces[he]  # (m, 3, 2)
        own = np.arange(m)[:, None]
        across = np.where(ef[..., 0] == own, ef[..., 1], ef[..., 0])
        self.face_adjacency = across  # (m, 3), -1 on boundary

        ones = np.ones(3 * m)
        self.vertex_face = sp.csr_matrix((ones, (a, face_of)), shape=(n_vertices, m))
        ne = len(edges)
        adj = sp.coo_matrix(
            (np.ones(2 * ne), (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]])),
            shape=(n_vertices, n_vertices),
        ).tocsr()
        adj.data[:] = 1.0
        self.vertex_vertex = adj

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_faces[:, 1] < 0

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].reshape(-1)] = True
        return mask

    def neighbors(self, i: int) -> np.ndarray:
        row = self.vertex_vertex[i]
        return row.indices.copy()

    def vertex_faces(self, i: int) -> np.ndarray:
        return self.vertex_face[i].indices.copy()


@dataclass
class RefinableMesh:
    vertices: np.ndarray
    faces: np.ndarray
    albedo: np.ndarray | None = None
    visibility: np.ndarray | None = None  # (n, n_cameras) bool

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        if self.albedo is None:
            self.albedo = np.full((n, 3), 0.5)
        self.albedo = np.asarray(self.albedo, dtype=float).reshape(n, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValueError("face references an invalid vertex index")
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ValueError("face references a vertex more than once")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def topology(self) -> Topology:
        return Topology(self.faces, len(self.vertices))

    @property
    def diagonal(self) -> float:
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def visible_cameras(self, i: int) -> set[int]:
        if self.visibility is None:
            return set()
        return set(np.flatnonzero(self.visibility[i]).tolist())

    def copy(self, **changes) -> "RefinableMesh":
        """Copy with some fields replaced; topology is shared unless faces change."""
        new = copy.copy(self)
        for k, v in changes.items():
            setattr(new, k, v)
        new.vertices = np.array(new.vertices, dtype=float)
        new.albedo = np.array(new.albedo, dtype=float)
        if new.visibility is not None:
            new.visibility = np.array(new.visibility)
        if "faces" in changes:
            new.__dict__.pop("topology", None)
            new.__post_init__()
        return new


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> RefinableMesh:
    """Icosphere by repeated 1:4 midpoint subdivision (level 3 has 642 vertices)."""
    t = (1 + 5 ** 0.5) / 2
    V = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    F = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for _ in range(subdivisions):
        e = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mid = V[uniq[:, 0]] + V[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        base = len(V)
        V = np.vstack([V, mid])
        m = len(F)
        a, b, c = F[:, 0], F[:, 1], F[:, 2]
        ab, bc, ca = base + inv[:m], base + inv[m:2 * m], base + inv[2 * m:]
        F = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
        ])
    return RefinableMesh(V * radius, F)


# --------------------------------------------------------------------------
# normals


def _skew(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    """Sparse block-diagonal matrix from a (k, r, c) stack."""
    k, r, c = blocks.shape
    rows = (np.arange(k)[:, None, None] * r + np.arange(r)[None, :, None]) * np.ones((1, 1, c), dtype=np.int64)
    cols = (np.arange(k)[:, None, None] * c + np.arange(c)[None, None, :]) * np.ones((1, r, 1), dtype=np.int64)
    return sp.csr_matrix((blocks.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(k * r, k * c))


def face_normals(vertices: np.ndarray, faces: np.ndarray, jacobian: bool = False):
    """Unit face normals from counterclockwise winding.

    With ``jacobian=True`` also returns the sparse (3m x 3n) derivative with
    respect to the flattened vertex coordinates, and the face areas.
    """
    V = np.asarray(vertices, dtype=float)
    F = np.asarray(faces)
    a = V[F[:, 1]] - V[F[:, 0]]
    b = V[F[:, 2]] - V[F[:, 0]]
    c = np.cross(a, b)
    length = np.linalg.norm(c, axis=1)
    safe = np.where(length > 0, length, 1.0)
    u = c / safe[:, None]
    if not jacobian:
        return u
    m, n = len(F), len(V)
    Q = (np.eye(3) - u[:, :, None] * u[:, None, :]) / safe[:, None, None]
    Sa, Sb = _skew(a), _skew(b)
    corner = np.stack([Sb - Sa, -Sb, Sa], axis=1)  # (m, 3 corners, 3, 3)
    blocks = np.einsum("mij,mkjl->mkil", Q, corner)
    rows = (3 * np.arange(m))[:, None, None, None] + np.arange(3)[None, None, :, None]
    cols = (3 * F)[:, :, None, None] + np.arange(3)[None, None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    dU = sp.csr_matrix((blocks.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(3 * m, 3 * n))
    return u, dU, 0.5 * length


@dataclass
class NormalField:
    """Face and vertex normals of a mesh together with their Jacobians."""

    face: np.ndarray
    face_jac: sp.csr_matrix
    face_area: np.ndarray
    vertex: np.ndarray
    vertex_jac: sp.csr_matrix
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _vertex_from_faces(u, incidence, faces):
    s = incidence @ u
    length = np.linalg.norm(s, axis=1)
    degenerate = length < 1e-12
    fallback = None
    if degenerate.any():
        # fall back to the first adjacent face normal
        first = np.full(incidence.shape[0], -1, dtype=np.int64)
        rows = np.repeat(np.arange(incidence.shape[0]), np.diff(incidence.indptr))
        first_pos = incidence.indptr[:-1]
        has = np.diff(incidence.indptr) > 0
        first[has] = incidence.indices[first_pos[has]]
        fallback = first
    return s, length, degenerate, fallback


def vertex_normals(mesh: RefinableMesh, return_flags: bool = False):
    """Per-vertex unit normals: normalized mean of the adjacent unit face normals.

    Where the face normals cancel, the normal of one adjacent face is used
    and the vertex is flagged.
    """
    u = face_normals(mesh.vertices, mesh.faces)
    topo = mesh.topology
    s, length, degenerate, first = _vertex_from_faces(u, topo.vertex_face, mesh.faces)
    N = s / np.where(length > 0, length, 1.0)[:, None]
    if degenerate.any():
        ok = degenerate & (first >= 0)
        N[ok] = u[first[ok]]
    return (N, degenerate) if return_flags else N


def normal_field(mesh: RefinableMesh) -> NormalField:
    """Face/vertex normals and their sparse Jacobians w.r.t. vertex positions."""
    topo = mesh.topology
    u, dU, area = face_normals(mesh.vertices, mesh.faces, jacobian=True)
    s, length, degenerate, first = _vertex_from_faces(u, topo.vertex_face, mesh.faces)
    safe = np.where(length > 0, length, 1.0)
    N = s / safe[:, None]
    P = (np.eye(3) - N[:, :, None] * N[:, None, :]) / safe[:, None, None]
    inc3 = sp.kron(topo.vertex_face, sp.eye(3), format="csr")
    dN = block_diag(P) @ (inc3 @ dU)
    if degenerate.any():
        ok = degenerate & (first >= 0)
        N[ok] = u[first[ok]]
        sel = np.zeros(mesh.n_vertices, dtype=bool)
        sel[ok] = True
        rows3 = np.flatnonzero(np.repeat(sel, 3))
        pick = sp.csr_matrix(
            (np.ones(rows3.size), (rows3, (3 * np.repeat(first[ok], 3) + np.tile(np.arange(3), ok.sum())))),
            shape=(3 * mesh.n_vertices, 3 * mesh.n_faces),
        )
        keep = sp.diags(np.repeat(~sel, 3).astype(float))
        dN = keep @ dN + pick @ dU
    return NormalField(face=u, face_jac=dU.tocsr(), face_area=area, vertex=N, vertex_jac=dN.tocsr(),
                       degenerate=degenerate)


# --------------------------------------------------------------------------
# visibility


def compute_visibility(mesh: RefinableMesh, cameras, depth_tolerance: float | None = None,
                       normals: np.ndarray | None = None, executor=None) -> np.ndarray:
    """Boolean (n_vertices, n_cameras) visibility matrix.

    A vertex is visible in a camera when it projects inside the image in
    front of the camera, its vertex normal faces the camera, and the depth
    buffer at its pixel belongs to one of its own faces or lies within
    ``depth_tolerance`` of the vertex depth (default 1e-3 of the bounding-box
    diagonal).
    """
    n = mesh.n_vertices
    if depth_tolerance is None:
        depth_tolerance = 1e-3 * mesh.diagonal
    if normals is None:
        normals = vertex_normals(mesh)
    F = mesh.faces

    def one(cam):
        uv, z = cam.project(mesh.vertices)
        vis = np.zeros(n, dtype=bool)
        col = np.rint(uv[:, 0])
        row = np.rint(uv[:, 1])
        inside = (z > 0) & (col >= 0) & (col <= cam.width - 1) & (row >= 0) & (row <= cam.height - 1)
        view = mesh.vertices - cam.center
        facing = np.einsum("ij,ij->i", normals, view) < 0
        cand = np.flatnonzero(inside & facing)
        if cand.size == 0:
            return vis
        r = rasterize(cam, mesh.vertices, F)
        ci = col[cand].astype(np.int64)
        ri = row[cand].astype(np.int64)
        fid = r.face_id[ri, ci]
        zbuf = r.depth[ri, ci]
        own = (fid >= 0) & np.any(F[np.maximum(fid, 0)] == cand[:, None], axis=1)
        ok = own | (z[cand] <= zbuf + depth_tolerance)
        vis[cand[ok]] = True
        return vis

    cams = list(cameras)
    if executor is not None:
        cols = list(executor.map(one, cams))
    else:
        cols = [one(c) for c in cams]
    if not cols:
        return np.zeros((n, 0), dtype=bool)
    return np.stack(cols, axis=1)


# --------------------------------------------------------------------------
# subdivision


def _sqrt3_weight(valence: np.ndarray) -> np.ndarray:
    return (4.0 - 2.0 * np.cos(2 * np.pi / np.maximum(valence, 1))) / 9.0


def sqrt3_subdivide(mesh: RefinableMesh) -> RefinableMesh:
    """One step of sqrt(3)-subdivision.

    Inserts a vertex at every face centroid, flips every original interior
    edge and relaxes the original interior vertices with the weights
    ``(4 - 2 cos(2 pi / valence)) / 9``. Boundary edges keep their vertices and
    produce one triangle each; boundary vertices are not moved. The result
    has V + F vertices and 3F faces for closed meshes. Visibility is dropped.
    """
    topo = mesh.topology
    if topo.nonmanifold or topo.inconsistent:
        raise ValueError("sqrt3 subdivision needs a consistently oriented edge-manifold mesh")
    V, F = mesh.vertices, mesh.faces
    n, m = len(V), len(F)
    centroids = V[F].mean(axis=1)
    cen_albedo = mesh.albedo[F].mean(axis=1)

    adj = topo.vertex_vertex
    valence = np.diff(adj.indptr)
    nbr_mean = (adj @ V) / np.maximum(valence, 1)[:, None]
    alpha = _sqrt3_weight(valence)
    newV = (1 - alpha)[:, None] * V + alpha[:, None] * nbr_mean
    fixed = topo.boundary_vertices | (valence == 0)
    newV[fixed] = V[fixed]

    faces = []
    ef = topo.edge_faces
    interior = ef[:, 1] >= 0
    # orient each edge as it appears in its first face
    for e_idx, is_int in ((np.flatnonzero(interior), True), (np.flatnonzero(~interior), False)):
        if e_idx.size == 0:
            continue
        f1 = ef[e_idx, 0]
        # find the directed edge (a -> b) of f1
        k = np.argmax(topo.half_edge_edge[f1] == e_idx[:, None], axis=1)
        a = F[f1, k]
        b = F[f1, (k + 1) % 3]
        c1 = n + f1
        if is_int:
            c2 = n + ef[e_idx, 1]
            faces.append(np.stack([a, c2, c1], axis=1))
            faces.append(np.stack([b, c1, c2], axis=1))
        else:
            faces.append(np.stack([a, b, c1], axis=1))
    newF = np.concatenate(faces) if faces else np.zeros((0, 3), dtype=np.int64)
    return RefinableMesh(np.vstack([newV, centroids]), newF, np.vstack([mesh.albedo, cen_albedo]))


def face_pixel_areas(mesh: RefinableMesh, cameras) -> np.ndarray:
    """(m, n_cameras) projected triangle areas in pixels (shoelace formula)."""
    out = np.zeros((mesh.n_faces, len(cameras)))
    for c, cam in enumerate(cameras):
        uv, z = cam.project(mesh.vertices)
        p = uv[mesh.faces]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        out[:, c] = np.where(np.all(z[mesh.faces] > 0, axis=1), np.nan_to_num(area), 0.0)
    return out


def max_face_pixel_area(mesh: RefinableMesh, cameras, visibility: np.ndarray) -> np.ndarray:
    """Largest projected area of each face over the cameras that see any of its corners."""
    areas = face_pixel_areas(mesh, cameras)
    seen = visibility[mesh.faces].any(axis=1)
    return np.where(seen, areas, 0.0).max(axis=1) if len(cameras) else np.zeros(mesh.n_faces)


def subdivide_to_pixel_budget(mesh: RefinableMesh, cameras, budget: float = 16.0,
                              max_rounds: int = 4, depth_tolerance: float | None = None):
    """Subdivide until every face projects to fewer than ``budget`` pixels.

    Visibility is recomputed every round. Returns ``(mesh, converged)``; if
    the round cap is hit a warning is issued and ``converged`` is False.
    """
    if budget < 1:
        warnings.warn("pixel budget below one pixel can never be met", RuntimeWarning, stacklevel=2)
    for _ in range(max_rounds + 1):
        vis = compute_visibility(mesh, cameras, depth_tolerance)
        mesh = mesh.copy(visibility=vis)
        if max_face_pixel_area(mesh, cameras, vis).max(initial=0.0) < budget:
            return mesh, True
        if _ == max_rounds:
            break
        mesh = sqrt3_subdivide(mesh)
    warnings.warn(f"pixel budget {budget} not reached after {max_rounds} subdivision rounds",
                  RuntimeWarning, stacklevel=2)
    return mesh, False
