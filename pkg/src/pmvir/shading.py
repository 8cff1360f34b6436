"""Second-order spherical-harmonics shading in unnormalized monomial form."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_ILLUM = 12  # 9 SH coefficients + 3 color scales


@dataclass
class Illumination:
    sh: np.ndarray      # (9,) L0..L8
    color: np.ndarray   # (3,) L_R, L_G, L_B

    def __post_init__(self):
        self.sh = np.asarray(self.sh, dtype=float).reshape(9)
        self.color = np.asarray(self.color, dtype=float).reshape(3)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.sh, self.color])

    @classmethod
    def from_array(cls, a) -> "Illumination":
        a = np.asarray(a, dtype=float)
        return cls(a[:9], a[9:12])


def sh_basis(normals) -> np.ndarray:
    """(..., 9) basis values [1, Ny, Nz, Nx, NxNy, NyNz, Nz^2-1/3, NxNz, Nx^2-Ny^2]."""
    n = np.asarray(normals, dtype=float)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    return np.stack([
        np.ones_like(x), y, z, x, x * y, y * z, z * z - 1.0 / 3.0, x * z, x * x - y * y,
    ], axis=-1)


def sh_shading(normal, sh) -> np.ndarray:
    """Shading S(N, L) for unit normal(s) ``normal`` and coefficients ``sh``.

    ``sh`` may be (9,) or broadcast against ``normal`` as (..., 9).
    """
    out = np.sum(sh_basis(normal) * np.asarray(sh, dtype=float), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sh_shading_grad(normal, sh) -> np.ndarray:
    """(..., 3) gradient of S with respect to the normal components."""
    n = np.asarray(normal, dtype=float)
    L = np.asarray(sh, dtype=float)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    L = np.broadcast_to(L, n.shape[:-1] + (9,))
    gx = L[..., 3] + L[..., 4] * y + L[..., 7] * z + 2 * L[..., 8] * x
    gy = L[..., 1] + L[..., 4] * x + L[..., 5] * z - 2 * L[..., 8] * y
    gz = L[..., 2] + L[..., 5] * y + 2 * L[..., 6] * z + L[..., 7] * x
    return np.stack([gx, gy, gz], axis=-1)


def render_vertex(albedo, normal, illum: Illumination | np.ndarray) -> np.ndarray:
    """Rendered RGB = albedo * S(N, L) * color scale, channel-wise.

    ``illum`` is an :class:`Illumination` or a (..., 12) parameter array.
    Negative shading is passed through unclamped.
    """
    if isinstance(illum, Illumination):
        params = illum.as_array()
    else:
        params = np.asarray(illum, dtype=float)
    S = np.sum(sh_basis(normal) * params[..., :9], axis=-1)
    return np.asarray(albedo, dtype=float) * np.asarray(S)[..., None] * params[..., 9:12]


def fit_directional_light(direction, intensity: float = 0.7, ambient: float = 0.3,
                          n_samples: int = 4000) -> np.ndarray:
    """SH coefficients best approximating ``ambient + intensity * max(0, N.d)``.

    Least-squares fit over a Fibonacci sphere; used to express a distant
    point light plus uniform environment light in the shading basis.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    k = np.arange(n_samples) + 0.5
    z = 1 - 2 * k / n_samples
    r = np.sqrt(1 - z * z)
    t = np.pi * (1 + 5 ** 0.5) * k
    N = np.stack([r * np.cos(t), r * np.sin(t), z], axis=1)
    target = ambient + intensity * np.maximum(0.0, N @ d)
    coeffs, *_ = np.linalg.lstsq(sh_basis(N), target, rcond=None)
    return coeffs
