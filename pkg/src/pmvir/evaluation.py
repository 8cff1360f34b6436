"""Accuracy and completeness of reconstructed point sets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import RefinableMesh


def _check(points, name):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError(f"{name} point set is empty")
    return points


def nearest_distances(query, reference) -> np.ndarray:
    """Exact distance from every query point to its nearest reference point."""
    query = _check(query, "query")
    reference = _check(reference, "reference")
    d, _ = cKDTree(reference).query(query, k=1)
    return d


def accuracy(estimated, ground_truth) -> float:
    """Mean distance from each estimated point to the nearest ground-truth point."""
    return float(nearest_distances(estimated, ground_truth).mean())


def completeness(estimated, ground_truth) -> float:
    """Mean distance from each ground-truth point to the nearest estimated point."""
    return float(nearest_distances(ground_truth, estimated).mean())


def sample_surface(mesh: RefinableMesh, n_samples: int, seed=0) -> np.ndarray:
    """Area-uniform random points on the mesh surface."""
    rng = np.random.default_rng(seed)
    V, F = mesh.vertices, mesh.faces
    area = 0.5 * np.linalg.norm(np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]]), axis=1)
    face = rng.choice(len(F), size=n_samples, p=area / area.sum())
    u, v = rng.random(n_samples), rng.random(n_samples)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    a, b, c = V[F[face, 0]], V[F[face, 1]], V[F[face, 2]]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def _closest_on_triangles(p, a, b, c):
    # Voronoi-region test, evaluated in reverse priority so earlier regions win
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]
        # edge regions
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    e_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    out = np.where(e_bc[:, None], b + t_bc[:, None] * (c - b), out)
    e_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out = np.where(e_ac[:, None], a + t_ac[:, None] * ac, out)
    out = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, out)
    e_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out = np.where(e_ab[:, None], a + t_ab[:, None] * ab, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, out)
    out = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, out)
    return out


def point_to_mesh_distance(points, mesh: RefinableMesh) -> np.ndarray:
    """Exact Euclidean distance from each point to the mesh surface.

    Candidate triangles are those whose bounding sphere reaches within the
    distance to the nearest mesh vertex, which bounds the true distance.
    """
    points = _check(points, "query")
    V, F = mesh.vertices, mesh.faces
    tri = V[F]
    centroid = tri.mean(axis=1)
    radius = np.linalg.norm(tri - centroid[:, None], axis=2).max(axis=1)
    upper, _ = cKDTree(V).query(points, k=1)
    cand = cKDTree(centroid).query_ball_point(points, upper + radius.max() + 1e-12)
    qi = np.repeat(np.arange(len(points)), [len(c) for c in cand])
    ti = np.fromiter((t for c in cand for t in c), dtype=np.int64, count=qi.size)
    closest = _closest_on_triangles(points[qi], tri[ti, 0], tri[ti, 1], tri[ti, 2])
    d = np.linalg.norm(points[qi] - closest, axis=1)
    out = upper.copy()
    np.minimum.at(out, qi, d)
    return out


@dataclass
class EvalReport:
    accuracy_mean: float
    completeness_mean: float
    accuracy_distances: np.ndarray
    completeness_distances: np.ndarray
    vertex_count: int
    diagonal: float

    def rows(self):
        """(metric, mean, median, p90, count) rows, raw and diagonal-normalized."""
        out = []
        for name, d in (("accuracy", self.accuracy_distances), ("completeness", self.completeness_distances)):
            stats = (float(d.mean()), float(np.median(d)), float(np.percentile(d, 90)), d.size)
            out.append((name, *stats))
            out.append((f"{name}_normalized", *(s / self.diagonal for s in stats[:3]), d.size))
        return out


def evaluate_mesh(estimated: RefinableMesh, ground_truth: RefinableMesh, samples: int = 100_000,
                  seed=0) -> EvalReport:
    """Estimated points are the mesh vertices; ground truth is an area-uniform surface sample."""
    gt_points = sample_surface(ground_truth, samples, seed)
    acc = nearest_distances(estimated.vertices, gt_points)
    comp = nearest_distances(gt_points, estimated.vertices)
    return EvalReport(float(acc.mean()), float(comp.mean()), acc, comp, estimated.n_vertices,
                      ground_truth.diagonal)
