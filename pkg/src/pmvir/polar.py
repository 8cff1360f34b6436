"""Stokes-vector math and color-polarization mosaic processing.

Angles are radians throughout. Intensities are linear floats, nominally in
[0, 1]; integer raw data is normalized by its bit-depth maximum on load.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

POLARIZER_ANGLES = (0, 45, 90, 135)

# relative DoP below which a pixel is treated as unpolarized (AoP undefined)
DOP_EPSILON = 1e-9


@dataclass(frozen=True)
class StokesVector:
    s0: float
    s1: float
    s2: float
    s3: float = 0.0

    def __post_init__(self):
        if self.s0 < 0:
            raise ValueError(f"s0 must be non-negative, got {self.s0}")
        if self.s3 != 0:
            raise ValueError("circular polarization (s3 != 0) is not supported")


def stokes_from_intensities(i0, i45, i90, i135):
    """Linear Stokes components from the four polarizer-angle intensities.

    Scalars give a :class:`StokesVector`; arrays give a ``(..., 4)`` array.
    """
    arrays = [np.asarray(v, dtype=float) for v in (i0, i45, i90, i135)]
    if any(np.any(a < 0) for a in arrays):
        raise ValueError("polarizer intensities must be non-negative")
    i0, i45, i90, i135 = arrays
    if i0.ndim == 0:
        return StokesVector(float(i0 + i90), float(i0 - i90), float(i45 - i135), 0.0)
    s = np.stack([i0 + i90, i0 - i90, i45 - i135, np.zeros_like(i0)], axis=-1)
    return s


def _components(s):
    if isinstance(s, StokesVector):
        return s.s0, s.s1, s.s2
    s = np.asarray(s, dtype=float)
    return s[..., 0], s[..., 1], s[..., 2]


def aop(s):
    """Angle of polarization in [0, pi), or ``None`` for unpolarized input.

    For array input, undefined entries are NaN.
    """
    _, s1, s2 = _components(s)
    phi = np.mod(0.5 * np.arctan2(s2, s1), np.pi)
    # mod can round a tiny negative up to exactly pi
    phi = np.where(phi >= np.pi, 0.0, phi)
    undefined = (np.asarray(s1) == 0) & (np.asarray(s2) == 0)
    if np.ndim(phi) == 0:
        return None if undefined else float(phi)
    return np.where(undefined, np.nan, phi)


def dop(s):
    """Degree of linear polarization, clamped to [0, 1]; 0 where s0 == 0."""
    s0, s1, s2 = _components(s)
    s0 = np.asarray(s0, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(s0 > 0, np.hypot(s1, s2) / np.where(s0 > 0, s0, 1.0), 0.0)
    rho = np.clip(rho, 0.0, 1.0)
    return float(rho) if rho.ndim == 0 else rho


def unpolarized_rgb(i0_rgb, i90_rgb, rho):
    """Unpolarized component I_min = (I0 + I90)(1 - rho)/2, per channel."""
    i0_rgb = np.asarray(i0_rgb, dtype=float)
    i90_rgb = np.asarray(i90_rgb, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if rho.ndim and rho.ndim == i0_rgb.ndim - 1:
        rho = rho[..., None]
    return (i0_rgb + i90_rgb) * (1.0 - rho) / 2.0


def synthesize_intensity(i_max, i_min, phi, phi_pol):
    """Intensity behind a linear polarizer at ``phi_pol`` for light with AoP ``phi``."""
    i_max = np.asarray(i_max, dtype=float)
    i_min = np.asarray(i_min, dtype=float)
    if np.any(i_min < 0) or np.any(i_min > i_max):
        raise ValueError("require i_max >= i_min >= 0")
    out = (i_max + i_min) / 2 + (i_max - i_min) / 2 * np.cos(2 * (np.asarray(phi_pol) - np.asarray(phi)))
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# mosaics


@dataclass(frozen=True)
class MosaicLayout:
    """Layout of the 4x4 color-polarization pattern.

    ``polarizer`` lists the polarizer angle (degrees) of each pixel inside a
    2x2 block, row-major. ``bayer`` gives the color of each 2x2 block inside
    the 4x4 super-block, row-major (e.g. ``"RGGB"``).
    """

    polarizer: tuple[int, int, int, int] = (90, 45, 135, 0)
    bayer: str = "RGGB"
    bit_depth: int = 16

    def __post_init__(self):
        if sorted(self.polarizer) != sorted(POLARIZER_ANGLES):
            raise ValueError(f"polarizer layout must be a permutation of {POLARIZER_ANGLES}")
        if sorted(self.bayer.upper()) != sorted("RGGB"):
            raise ValueError(f"bayer layout must contain R, G, G, B; got {self.bayer!r}")

    def offset(self, angle: int) -> tuple[int, int]:
        k = self.polarizer.index(angle)
        return k // 2, k % 2

    def channel_masks(self, shape) -> np.ndarray:
        """Boolean (3, h, w) masks of R, G, B samples on a block-level grid."""
        h, w = shape
        masks = np.zeros((3, h, w), dtype=bool)
        for k, ch in enumerate(self.bayer.upper()):
            masks["RGB".index(ch), k // 2::2, k % 2::2] = True
        return masks

    def to_text(self) -> str:
        return (
            "# 4x4 color-polarization pattern\n"
            f"polarizer = {' '.join(str(a) for a in self.polarizer)}\n"
            f"bayer = {self.bayer}\n"
            f"bit_depth = {self.bit_depth}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "MosaicLayout":
        values = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        kwargs = {}
        if "polarizer" in values:
            kwargs["polarizer"] = tuple(int(v) for v in values["polarizer"].replace(",", " ").split())
        if "bayer" in values:
            kwargs["bayer"] = values["bayer"].upper()
        if "bit_depth" in values:
            kwargs["bit_depth"] = int(values["bit_depth"])
        return cls(**kwargs)


@dataclass
class PolarizationMosaic:
    raw: np.ndarray
    layout: MosaicLayout = field(default_factory=MosaicLayout)

    def __post_init__(self):
        raw = np.asarray(self.raw)
        if raw.ndim != 2:
            raise ValueError("mosaic must be a single-channel 2D array")
        if raw.shape[0] % 4 or raw.shape[1] % 4:
            raise ValueError(f"mosaic dimensions must be multiples of 4, got {raw.shape}")
        if np.issubdtype(raw.dtype, np.integer):
            raw = raw.astype(float) / (2 ** self.layout.bit_depth - 1)
        raw = raw.astype(float)
        if np.any(raw < 0):
            raise ValueError("mosaic samples must be non-negative")
        self.raw = raw

    @property
    def height(self) -> int:
        return self.raw.shape[0]

    @property
    def width(self) -> int:
        return self.raw.shape[1]


@dataclass
class PolarimetricImage:
    aop: np.ndarray              # (h, w), radians in [0, pi); NaN where invalid
    dop: np.ndarray              # (h, w) in [0, 1]
    rgb_unpolarized: np.ndarray  # (h, w, 3)
    valid_mask: np.ndarray       # (h, w) bool

    @property
    def height(self) -> int:
        return self.aop.shape[0]

    @property
    def width(self) -> int:
        return self.aop.shape[1]


_KERNEL_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=float) / 4
_KERNEL_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=float) / 4


def _bilinear_bayer(plane: np.ndarray, masks: np.ndarray) -> np.ndarray:
    # normalized convolution: identical to classic bilinear demosaicking in the
    # interior and exact for constant input everywhere
    out = np.empty(plane.shape + (3,))
    for c in range(3):
        kernel = _KERNEL_G if c == 1 else _KERNEL_RB
        m = masks[c].astype(float)
        num = ndimage.convolve(plane * m, kernel, mode="nearest")
        den = ndimage.convolve(m, kernel, mode="nearest")
        out[..., c] = num / den
    return out


def _upsample(block_img: np.ndarray, dy: int, dx: int, shape) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    coords = [(yy - dy) / 2.0, (xx - dx) / 2.0]
    return np.stack(
        [ndimage.map_coordinates(block_img[..., c], coords, order=1, mode="nearest") for c in range(3)],
        axis=-1,
    )


def polarizer_images(mosaic: PolarizationMosaic) -> dict[int, np.ndarray]:
    """Full-resolution RGB image behind each polarizer angle."""
    raw, layout = mosaic.raw, mosaic.layout
    half = (raw.shape[0] // 2, raw.shape[1] // 2)
    masks = layout.channel_masks(half)
    out = {}
    for angle in POLARIZER_ANGLES:
        dy, dx = layout.offset(angle)
        bayer = raw[dy::2, dx::2]
        rgb = _bilinear_bayer(bayer, masks)
        out[angle] = _upsample(rgb, dy, dx, raw.shape)
    return out


def demosaic(mosaic: PolarizationMosaic, dop_epsilon: float = DOP_EPSILON) -> PolarimetricImage:
    """Convert a raw 4x4 color-polarization mosaic into AoP, DoP and I_min.

    Each polarizer orientation is pulled out of every 2x2 block to form a
    half-resolution Bayer image, which is color-interpolated bilinearly and
    then bilinearly resampled to full resolution at that orientation's
    sub-pixel offset. AoP and DoP use the RGB-averaged intensities.
    """
    imgs = polarizer_images(mosaic)
    gray = {a: imgs[a].mean(axis=-1) for a in POLARIZER_ANGLES}
    s0 = gray[0] + gray[90]
    s1 = gray[0] - gray[90]
    s2 = gray[45] - gray[135]
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(s0 > 0, np.hypot(s1, s2) / np.where(s0 > 0, s0, 1.0), 0.0)
    valid = (s0 > 0) & (rho > dop_epsilon)
    rho = np.where(valid, np.clip(rho, 0.0, 1.0), 0.0)
    phi = np.mod(0.5 * np.arctan2(s2, s1), np.pi)
    phi = np.where(phi >= np.pi, 0.0, phi)
    phi = np.where(valid, phi, np.nan)
    rgb = unpolarized_rgb(imgs[0], imgs[90], rho)
    return PolarimetricImage(aop=phi, dop=rho, rgb_unpolarized=rgb, valid_mask=valid)


def mosaic_from_scene(rgb_min, phi, rho, layout: MosaicLayout | None = None) -> PolarizationMosaic:
    """Forward-synthesize a raw mosaic from per-pixel (I_min RGB, AoP, DoP).

    The same DoP is used for every channel, so I_max = I_min (1 + rho)/(1 - rho).
    ``phi`` and ``rho`` may be scalars or (h, w) arrays.
    """
    layout = layout or MosaicLayout()
    rgb_min = np.asarray(rgb_min, dtype=float)
    h, w = rgb_min.shape[:2]
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (h, w))
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (h, w))
    if np.any(rho >= 1):
        raise ValueError("rho must be < 1 for a finite I_max")
    i_max = rgb_min * ((1 + rho) / (1 - rho))[..., None]
    raw = np.empty((h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    pol = np.asarray(layout.polarizer)[(yy % 2) * 2 + (xx % 2)]
    color = np.array(["RGB".index(c) for c in layout.bayer.upper()])[((yy // 2) % 2) * 2 + (xx // 2) % 2]
    for c in range(3):
        sel = color == c
        raw[sel] = synthesize_intensity(i_max[..., c][sel], rgb_min[..., c][sel], phi[sel], np.deg2rad(pol[sel]))
    return PolarizationMosaic(raw=raw, layout=layout)
