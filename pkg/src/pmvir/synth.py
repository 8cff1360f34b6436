"""Ground-truth synthetic scenes: rendered RGB, AoP from true azimuths, corruption."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Camera, RefinableMesh, compute_visibility, icosphere, projected_azimuth, vertex_normals
from .raster import rasterize
from .shading import Illumination, fit_directional_light, sh_basis


@dataclass
class ViewImages:
    """One view's inputs: unpolarized RGB, AoP (NaN where invalid) and foreground mask."""

    rgb: np.ndarray
    aop: np.ndarray
    mask: np.ndarray | None = None

    @property
    def aop_valid(self) -> np.ndarray:
        return np.isfinite(self.aop)


@dataclass
class SyntheticScene:
    gt_mesh: RefinableMesh
    cameras: list[Camera]
    illumination: list[Illumination]
    seed: int = 0


def ring_cameras(n_views: int = 14, size: int = 256, center=(0.0, 0.0, 0.0), radius: float = 1.0,
                 distance: float = 3.0, fill: float = 0.8, elevation_deg: float = 20.0) -> list[Camera]:
    """Cameras on a ring around ``center`` plus two polar views (when n_views >= 4).

    Ring cameras alternate between +/- ``elevation_deg``. The focal length is
    chosen so the bounding sphere of ``radius`` spans ``fill`` of the image.
    """
    center = np.asarray(center, dtype=float)
    d = distance * radius
    f = fill * size / 2 * np.sqrt(d * d - radius * radius) / radius
    n_polar = 2 if n_views >= 4 else 0
    n_ring = n_views - n_polar
    cams = []
    for i in range(n_ring):
        az = 2 * np.pi * i / max(n_ring, 1)
        el = np.deg2rad(elevation_deg) * (1 if i % 2 == 0 else -1)
        eye = center + d * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(Camera.look_at(eye, center, [0, 0, 1], f, width=size, height=size))
    for sign in (1, -1)[:n_polar]:
        eye = center + d * np.array([0.0, 0.0, sign])
        cams.append(Camera.look_at(eye, center, [0, 1, 0], f, width=size, height=size))
    return cams


def default_illumination(n_views: int, direction=(0.4, -0.5, 0.77), intensity: float = 0.7,
                         ambient: float = 0.3, color=(1.0, 1.0, 1.0)) -> list[Illumination]:
    """A distant point light plus uniform environment light, identical in every view."""
    sh = fit_directional_light(direction, intensity, ambient)
    return [Illumination(sh, color) for _ in range(n_views)]


def default_scene(n_views: int = 14, size: int = 256, subdivisions: int = 3, seed: int = 0,
                  albedo=(0.8, 0.7, 0.6), mesh: RefinableMesh | None = None) -> SyntheticScene:
    if mesh is None:
        mesh = icosphere(subdivisions)
        mesh.albedo = np.tile(np.asarray(albedo, dtype=float), (mesh.n_vertices, 1))
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    center = (lo + hi) / 2
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    cams = ring_cameras(n_views, size, center, radius)
    return SyntheticScene(mesh, cams, default_illumination(len(cams)), seed)


def check_coverage(scene: SyntheticScene, min_views: int = 2) -> np.ndarray:
    vis = compute_visibility(scene.gt_mesh, scene.cameras)
    counts = vis.sum(axis=1)
    if np.any(counts < min_views):
        raise ValueError(f"{np.sum(counts < min_views)} vertices are seen by fewer than {min_views} cameras")
    return vis


def _render_view(mesh: RefinableMesh, normals: np.ndarray, cam: Camera, illum: Illumination):
    r = rasterize(cam, mesh.vertices, mesh.faces)
    fg = r.foreground
    rgb = np.zeros((cam.height, cam.width, 3))
    aop = np.full((cam.height, cam.width), np.nan)
    if not fg.any():
        return rgb, aop, fg
    fid = r.face_id[fg]
    b = r.bary[fg]
    tri = mesh.faces[fid]
    N = np.einsum("pk,pkj->pj", b, normals[tri])
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    K = np.einsum("pk,pkj->pj", b, mesh.albedo[tri])
    S = sh_basis(N) @ illum.sh
    rgb[fg] = K * S[:, None] * illum.color
    alpha = projected_azimuth(cam, N)
    aop[fg] = np.mod(alpha, np.pi)
    return rgb, aop, fg


def render_views(scene: SyntheticScene) -> list[ViewImages]:
    """Render RGB and AoP for every camera of the scene.

    Pixel colors follow the shading model with perspective-correct
    interpolated vertex normals and albedo; background is 0. AoP is the
    true surface azimuth modulo pi (no pi/2 offset) and NaN on background or
    where the normal is parallel to the optical axis.
    """
    normals = vertex_normals(scene.gt_mesh)
    out = []
    for cam, illum in zip(scene.cameras, scene.illumination):
        rgb, aop, fg = _render_view(scene.gt_mesh, normals, cam, illum)
        out.append(ViewImages(rgb, aop, fg))
    return out


def render_rgb_views(scene: SyntheticScene) -> list[np.ndarray]:
    return [v.rgb for v in render_views(scene)]


def render_aop_views(scene: SyntheticScene) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per view ``(aop, valid_mask)``."""
    return [(v.aop, v.aop_valid) for v in render_views(scene)]


def corrupt_aop(aop: np.ndarray, ambiguity_fraction: float, sigma_deg: float, seed=0) -> np.ndarray:
    """Add pi/2 ambiguity to a random fraction of valid pixels plus Gaussian angle noise.

    The uniform and normal draws are taken for every pixel regardless of the
    parameters, so a fixed seed gives the same flip pattern and noise field
    for any (fraction, sigma). Result re-wrapped into [0, pi); NaN stays NaN.
    """
    if not 0 <= ambiguity_fraction <= 1:
        raise ValueError("ambiguity_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    aop = np.asarray(aop, dtype=float)
    u = rng.random(aop.shape)
    z = rng.standard_normal(aop.shape)
    out = aop + np.where(u < ambiguity_fraction, np.pi / 2, 0.0) + np.deg2rad(sigma_deg) * z
    out = np.mod(out, np.pi)
    out = np.where(out >= np.pi, 0.0, out)
    return np.where(np.isfinite(aop), out, np.nan)


def corrupt_views(views: list[ViewImages], ambiguity_fraction: float, sigma_deg: float, seed=0) -> list[ViewImages]:
    streams = np.random.SeedSequence(seed).spawn(len(views))
    return [
        ViewImages(v.rgb, corrupt_aop(v.aop, ambiguity_fraction, sigma_deg, s), v.mask)
        for v, s in zip(views, streams)
    ]


def perturb_mesh(gt_mesh: RefinableMesh, amplitude: float, seed=0, n_waves: int = 8,
                 wavelength=(0.5, 1.0)) -> RefinableMesh:
    """Displace vertices along their normals by smooth random noise.

    The noise is a sum of ``n_waves`` plane waves with wavelengths drawn from
    ``wavelength`` (fractions of the bounding-box diagonal). Components
    equivalent to a global translation or uniform scaling are projected out,
    then the field is scaled to RMS ``amplitude * diagonal``. Emulates a
    globally well-placed but locally wrong multi-view-stereo initial model.
    Self-intersections are not checked.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    mesh = gt_mesh.copy(visibility=None)
    if amplitude == 0 or mesh.n_vertices == 0:
        return mesh
    rng = np.random.default_rng(seed)
    diag = gt_mesh.diagonal
    X = gt_mesh.vertices
    N = vertex_normals(gt_mesh)
    dirs = rng.standard_normal((n_waves, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lam = rng.uniform(*wavelength, size=n_waves) * diag
    omega = dirs * (2 * np.pi / lam)[:, None]
    phase = rng.uniform(0, 2 * np.pi, size=n_waves)
    f = np.sin(X @ omega.T + phase).sum(axis=1)
    c = X.mean(axis=0)
    gauge = np.column_stack([N, np.einsum("ij,ij->i", X - c, N)])
    coef, *_ = np.linalg.lstsq(gauge, f, rcond=None)
    f = f - gauge @ coef
    rms = np.sqrt(np.mean(f * f))
    if rms > 0:
        f *= amplitude * diag / rms
    mesh.vertices = X + f[:, None] * N
    return mesh
