"""Vectorized depth-buffer triangle rasterizer.

Pixel (u, v) has its center at integer image coordinates, matching
:meth:`pmvir.geometry.Camera.project`. Faces with any vertex at or behind the
camera plane are dropped rather than clipped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CHUNK = 2_000_000


@dataclass
class Raster:
    face_id: np.ndarray  # (h, w) int, -1 for background
    depth: np.ndarray    # (h, w) camera-space z, inf for background
    bary: np.ndarray     # (h, w, 3) perspective-correct barycentrics

    @property
    def foreground(self) -> np.ndarray:
        return self.face_id >= 0


def rasterize(camera, vertices: np.ndarray, faces: np.ndarray, near: float = 1e-9) -> Raster:
    h, w = camera.height, camera.width
    uv, z = camera.project(vertices)
    face_id = np.full(h * w, -1, dtype=np.int64)
    depth = np.full(h * w, np.inf)
    bary = np.zeros((h * w, 3))
    if len(faces) == 0:
        return Raster(face_id.reshape(h, w), depth.reshape(h, w), bary.reshape(h, w, 3))

    fz = z[faces]
    fuv = uv[faces]  # (m, 3, 2)
    ok = np.all(fz > near, axis=1)
    with np.errstate(invalid="ignore"):
        lo = np.ceil(np.nan_to_num(fuv.min(axis=1), nan=0, posinf=1e9, neginf=-1e9))
        hi = np.floor(np.nan_to_num(fuv.max(axis=1), nan=-1, posinf=1e9, neginf=-1e9))
    lo = np.clip(lo, 0, None).astype(np.int64)
    hi = np.clip(hi, -1, 1e9).astype(np.int64)
    hi[:, 0] = np.minimum(hi[:, 0], w - 1)
    hi[:, 1] = np.minimum(hi[:, 1], h - 1)
    ok &= np.all(hi >= lo, axis=1)
    e1 = fuv[:, 1] - fuv[:, 0]
    e2 = fuv[:, 2] - fuv[:, 0]
    area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    ok &= np.abs(area) > 1e-12
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return Raster(face_id.reshape(h, w), depth.reshape(h, w), bary.reshape(h, w, 3))

    bw = hi[idx, 0] - lo[idx, 0] + 1
    bh = hi[idx, 1] - lo[idx, 1] + 1
    counts = bw * bh
    bounds = np.concatenate([[0], np.cumsum(counts)])
    # split faces into chunks of bounded candidate count
    starts = [0]
    while starts[-1] < idx.size:
        nxt = np.searchsorted(bounds, bounds[starts[-1]] + _CHUNK, side="right") - 1
        starts.append(max(nxt, starts[-1] + 1))
    starts[-1] = idx.size

    for a, b in zip(starts[:-1], starts[1:]):
        f = idx[a:b]
        cnt = counts[a:b]
        owner = np.repeat(np.arange(b - a), cnt)
        k = np.arange(cnt.sum()) - np.repeat(bounds[a:b] - bounds[a], cnt)
        px = lo[f, 0][owner] + k % bw[a:b][owner]
        py = lo[f, 1][owner] + k // bw[a:b][owner]
        fo = f[owner]
        p0 = fuv[fo, 0]
        p1 = fuv[fo, 1]
        p2 = fuv[fo, 2]
        ar = area[fo]
        l0 = ((p1[:, 0] - px) * (p2[:, 1] - py) - (p1[:, 1] - py) * (p2[:, 0] - px)) / ar
        l1 = ((p2[:, 0] - px) * (p0[:, 1] - py) - (p2[:, 1] - py) * (p0[:, 0] - px)) / ar
        l2 = 1.0 - l0 - l1
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not inside.any():
            continue
        lam = np.stack([l0, l1, l2], axis=1)[inside]
        fo = fo[inside]
        pix = (py * w + px)[inside]
        inv = lam / fz[fo]
        zc = 1.0 / inv.sum(axis=1)
        persp = inv * zc[:, None]
        order = np.lexsort((zc, pix))
        pix, zc, fo, persp = pix[order], zc[order], fo[order], persp[order]
        first = np.ones(pix.size, dtype=bool)
        first[1:] = pix[1:] != pix[:-1]
        pix, zc, fo, persp = pix[first], zc[first], fo[first], persp[first]
        closer = zc < depth[pix]
        pix, zc, fo, persp = pix[closer], zc[closer], fo[closer], persp[closer]
        depth[pix] = zc
        face_id[pix] = fo
        bary[pix] = persp
    return Raster(face_id.reshape(h, w), depth.reshape(h, w), bary.reshape(h, w, 3))
