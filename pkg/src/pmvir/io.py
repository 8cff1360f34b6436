"""File formats: meshes, cameras, images, illumination and TSV logs."""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from plyfile import PlyData, PlyElement

from .geometry import Camera, RefinableMesh
from .polar import MosaicLayout, PolarimetricImage, PolarizationMosaic
from .synth import ViewImages

# --------------------------------------------------------------------------
# meshes


def _fan(polygons) -> np.ndarray:
    tris = [(p[0], p[k], p[k + 1]) for p in polygons for k in range(1, len(p) - 1)]
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def write_ply(path, mesh: RefinableMesh, binary: bool = True):
    """Vertices with 8-bit colors plus exact float albedo, triangle faces."""
    K = np.clip(mesh.albedo, 0.0, 1.0)
    rgb8 = np.rint(K * 255).astype(np.uint8)
    vdt = [("x", "f8"), ("y", "f8"), ("z", "f8"), ("red", "u1"), ("green", "u1"), ("blue", "u1"),
           ("albedo_r", "f8"), ("albedo_g", "f8"), ("albedo_b", "f8")]
    v = np.empty(mesh.n_vertices, dtype=vdt)
    for k, name in enumerate("xyz"):
        v[name] = mesh.vertices[:, k]
    for k, name in enumerate(("red", "green", "blue")):
        v[name] = rgb8[:, k]
    for k, ch in enumerate("rgb"):
        v[f"albedo_{ch}"] = mesh.albedo[:, k]
    f = np.empty(mesh.n_faces, dtype=[("vertex_indices", "i4", (3,))])
    f["vertex_indices"] = mesh.faces
    PlyData([PlyElement.describe(v, "vertex"), PlyElement.describe(f, "face")],
            text=not binary).write(str(path))


def read_ply(path) -> RefinableMesh:
    ply = PlyData.read(str(path))
    v = ply["vertex"].data
    names = v.dtype.names
    X = np.stack([v["x"], v["y"], v["z"]], axis=1).astype(float)
    if {"albedo_r", "albedo_g", "albedo_b"} <= set(names):
        K = np.stack([v["albedo_r"], v["albedo_g"], v["albedo_b"]], axis=1).astype(float)
    elif {"red", "green", "blue"} <= set(names):
        K = np.stack([v["red"], v["green"], v["blue"]], axis=1).astype(float) / 255.0
    else:
        K = None
    faces = np.zeros((0, 3), dtype=np.int64)
    if "face" in ply:
        fd = ply["face"].data
        key = "vertex_indices" if "vertex_indices" in fd.dtype.names else fd.dtype.names[0]
        faces = _fan([list(p) for p in fd[key]])
    return RefinableMesh(X, faces, K)


def read_obj(path) -> RefinableMesh:
    """Vertices and faces of a Wavefront OBJ; polygons are fan-triangulated."""
    verts, polys = [], []
    for line in Path(path).read_text().splitlines():
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "v":
            verts.append([float(t) for t in tok[1:4]])
        elif tok[0] == "f":
            idx = [int(t.split("/")[0]) for t in tok[1:]]
            n = len(verts)
            polys.append([i - 1 if i > 0 else n + i for i in idx])
    return RefinableMesh(np.asarray(verts, dtype=float).reshape(-1, 3), _fan(polys))


def read_mesh(path) -> RefinableMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return read_ply(path)
    if suffix == ".obj":
        return read_obj(path)
    raise ValueError(f"unsupported mesh format {suffix!r} (expected .ply or .obj)")


# --------------------------------------------------------------------------
# cameras


def write_cameras(path, cameras: list[Camera], ids=None):
    """One line per view: ``view_id fx fy cx cy r11..r33 t1 t2 t3 width height``."""
    ids = [f"{i:03d}" for i in range(len(cameras))] if ids is None else list(ids)
    lines = ["# view_id fx fy cx cy r11 r12 r13 r21 r22 r23 r31 r32 r33 t1 t2 t3 width height"]
    for vid, c in zip(ids, cameras):
        nums = [c.fx, c.fy, c.cx, c.cy, *c.rotation.ravel(), *c.translation]
        lines.append(" ".join([str(vid), *(repr(float(v)) for v in nums), str(c.width), str(c.height)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_cameras(path) -> tuple[list[str], list[Camera]]:
    ids, cams = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 19:
            raise ValueError(f"{path}:{lineno}: expected 19 fields, got {len(tok)}")
        v = [float(t) for t in tok[1:17]]
        ids.append(tok[0])
        cams.append(Camera(v[0], v[1], v[2], v[3], np.reshape(v[4:13], (3, 3)), v[13:16],
                           int(tok[17]), int(tok[18])))
    return ids, cams


# --------------------------------------------------------------------------
# images


def _check_write(ok: bool, path):
    if not ok:
        raise OSError(f"could not write {path}")


def _imread(path, flags=cv2.IMREAD_UNCHANGED) -> np.ndarray:
    img = cv2.imread(str(path), flags)
    if img is None:
        raise OSError(f"could not read image {path}")
    return img


def write_rgb16(path, rgb: np.ndarray):
    """Linear RGB in [0, 1] as a 16-bit PNG (values outside are clipped)."""
    q = np.rint(np.clip(rgb, 0.0, 1.0) * 65535).astype(np.uint16)
    _check_write(cv2.imwrite(str(path), q[..., ::-1]), path)


def read_rgb(path) -> np.ndarray:
    img = _imread(path)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img = img[..., 2::-1]
    scale = 65535.0 if img.dtype == np.uint16 else 255.0 if img.dtype == np.uint8 else 1.0
    return img.astype(float) / scale


def write_mask(path, mask: np.ndarray):
    _check_write(cv2.imwrite(str(path), np.where(mask, 255, 0).astype(np.uint8)), path)


def read_mask(path) -> np.ndarray:
    img = _imread(path, cv2.IMREAD_GRAYSCALE)
    return img > 127


def write_pfm(path, image: np.ndarray):
    """Single-channel float image; NaN is preserved."""
    _check_write(cv2.imwrite(str(path), np.asarray(image, dtype=np.float32)), path)


def read_pfm(path) -> np.ndarray:
    img = _imread(path)
    if img.ndim == 3:
        img = img[..., 0]
    return img.astype(float)


def read_mosaic(path, layout_path=None) -> PolarizationMosaic:
    """16-bit raw mosaic plus its ``key = value`` layout sidecar (defaults if absent)."""
    layout = MosaicLayout()
    if layout_path is not None:
        layout = MosaicLayout.from_text(Path(layout_path).read_text())
    raw = _imread(path)
    if raw.ndim != 2:
        raise ValueError(f"{path}: mosaic must be single-channel")
    return PolarizationMosaic(raw, layout)


def write_mosaic(path, mosaic: PolarizationMosaic, layout_path=None):
    top = 2 ** mosaic.layout.bit_depth - 1
    raw = np.rint(np.clip(mosaic.raw, 0.0, 1.0) * top).astype(np.uint16)
    _check_write(cv2.imwrite(str(path), raw), path)
    if layout_path is not None:
        Path(layout_path).write_text(mosaic.layout.to_text())


def write_polarimetric(out_dir, image: PolarimetricImage):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rgb16(out / "rgb.png", image.rgb_unpolarized)
    write_pfm(out / "aop.pfm", image.aop)
    write_pfm(out / "dop.pfm", image.dop)
    write_mask(out / "valid.png", image.valid_mask)


# --------------------------------------------------------------------------
# view sets


def write_views(out_dir, views: list[ViewImages], ids):
    """``rgb/<id>.png``, ``aop/<id>.pfm`` (NaN = invalid) and ``mask/<id>.png``."""
    out = Path(out_dir)
    for sub in ("rgb", "aop", "mask"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for vid, v in zip(ids, views):
        write_rgb16(out / "rgb" / f"{vid}.png", v.rgb)
        write_pfm(out / "aop" / f"{vid}.pfm", v.aop)
        if v.mask is not None:
            write_mask(out / "mask" / f"{vid}.png", v.mask)


def read_views(ids, rgb_dir, aop_dir, mask_dir=None) -> list[ViewImages]:
    views = []
    for vid in ids:
        rgb = read_rgb(Path(rgb_dir) / f"{vid}.png")
        aop = read_pfm(Path(aop_dir) / f"{vid}.pfm")
        valid_path = Path(aop_dir) / f"{vid}_valid.png"
        if valid_path.exists():
            aop = np.where(read_mask(valid_path), aop, np.nan)
        mask = None
        if mask_dir is not None:
            mask = read_mask(Path(mask_dir) / f"{vid}.png")
        if rgb.shape[:2] != aop.shape:
            raise ValueError(f"view {vid}: RGB and AoP sizes differ")
        views.append(ViewImages(rgb, aop, mask))
    return views


# --------------------------------------------------------------------------
# text tables


def write_illumination(path, illum: np.ndarray):
    """One view per line: L0..L8 L_R L_G L_B."""
    rows = np.asarray(illum, dtype=float).reshape(-1, 12)
    Path(path).write_text("".join(" ".join(repr(float(v)) for v in r) + "\n" for r in rows))


def read_illumination(path) -> np.ndarray:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    if any(len(r) != 12 for r in rows):
        raise ValueError(f"{path}: every line needs 12 numbers")
    return np.asarray(rows, dtype=float).reshape(-1, 12)


def write_tsv(path, header, rows):
    lines = ["\t".join(header)]
    for r in rows:
        lines.append("\t".join(repr(v) if isinstance(v, float) else str(v) for v in r))
    Path(path).write_text("\n".join(lines) + "\n")


def read_tsv(path) -> list[dict[str, str]]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:] if line]


def write_cost_log(path, history):
    """Columns: stage, iteration, term, value, count."""
    write_tsv(path, ("stage", "iteration", "term", "value", "count"),
              [(h.stage, h.iteration, h.term, float(h.value), h.count) for h in history])


def write_manifest(path, params: dict):
    lines = [f"{k} = {v}" for k, v in params.items()]
    Path(path).write_text("\n".join(lines) + "\n")
