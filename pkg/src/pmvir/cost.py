"""Photometric, polarimetric and smoothness residual blocks.

Every block returns residuals whose squared sum is the corresponding energy
term, together with a sparse Jacobian over the packed parameter vector
``x = [X (3n), K (3n), L (12p)]``. The total residual vector stacks the
blocks scaled by the square roots of their weights, so its squared norm is

    E_pho + tau1 * E_pol + tau2 * E_gsm + tau3 * E_psm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp

from .geometry import AZIMUTH_EPS, NormalField, RefinableMesh, normal_field
from .shading import N_ILLUM, sh_basis, sh_shading_grad

TERMS = ("pho", "pol", "gsm", "psm")

# clamp for the arccos argument when differentiating the smoothness angle
ARCCOS_CLAMP = 1 - 1e-12


@dataclass(frozen=True)
class Stage:
    tau1: float
    tau2: float
    tau3: float
    q: float


DEFAULT_SCHEDULE = (
    Stage(0.05, 1.0, 1.0, 2.2),
    Stage(0.1, 1.0, 1.0, 2.8),
    Stage(0.3, 1.0, 1.0, 3.4),
)


@dataclass
class RefinementConfig:
    """Weights, schedule and solver settings for the refinement.

    ``tau1..tau3`` and ``q`` are the weights of a single cost evaluation;
    :func:`pmvir.optimizer.refine` overrides them from ``schedule`` stage by
    stage.
    """

    tau1: float = 0.05
    tau2: float = 1.0
    tau3: float = 1.0
    k: float = 0.5
    q: float = 2.2
    schedule: tuple[Stage, ...] = DEFAULT_SCHEDULE
    max_iterations: int = 50
    function_tolerance: float = 1e-6
    gradient_tolerance: float = 1e-12
    parameter_tolerance: float = 1e-10
    initial_damping: float = 1e-4
    max_damping: float = 1e16
    appearance_warm_start: bool = True  # fit albedo and lighting with fixed geometry first
    vertex_motion: str = "normal"  # "normal": move along stage-initial normals; "free": 3-D
    albedo_min: float = 0.0
    albedo_max: float = 1.0
    color_min: float = 0.0
    color_max: float = 10.0
    delta_chroma: float = 0.05
    delta_intensity: float = 0.2
    depth_tolerance: float = 1e-3  # fraction of the mesh bounding-box diagonal
    pixel_budget: float = 16.0
    max_subdivisions: int = 4
    subdivide: bool = False
    threads: int = 1

    def __post_init__(self):
        self.schedule = tuple(s if isinstance(s, Stage) else Stage(*s) for s in self.schedule)
        self.validate()

    def validate(self):
        if min(self.tau1, self.tau2, self.tau3) < 0:
            raise ValueError("term weights must be non-negative")
        if self.k <= 0 or self.q <= 0:
            raise ValueError("k and q must be positive")
        if not self.schedule:
            raise ValueError("schedule must not be empty")
        for s in self.schedule:
            if min(s.tau1, s.tau2, s.tau3) < 0 or s.q <= 0:
                raise ValueError(f"invalid schedule stage {s}")
        if self.vertex_motion not in ("normal", "free"):
            raise ValueError("vertex_motion must be 'normal' or 'free'")
        if self.albedo_min > self.albedo_max or self.color_min > self.color_max:
            raise ValueError("empty bound interval")

    def for_stage(self, stage: Stage) -> "RefinementConfig":
        return replace(self, tau1=stage.tau1, tau2=stage.tau2, tau3=stage.tau3, q=stage.q)

    @property
    def weights(self) -> dict[str, float]:
        return {"pho": 1.0, "pol": self.tau1, "gsm": self.tau2, "psm": self.tau3}

    # flat ``key = value`` text (a TOML subset)
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "schedule":
                v = "[" + ", ".join(f"[{s.tau1}, {s.tau2}, {s.tau3}, {s.q}]" for s in v) + "]"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, str):
                v = f'"{v}"'
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RefinementConfig":
        import tomli

        data = tomli.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "schedule" in data:
            data["schedule"] = tuple(Stage(*map(float, s)) for s in data["schedule"])
        return cls(**data)


# --------------------------------------------------------------------------
# observations


@dataclass
class Observations:
    """Frozen per-(vertex, camera) samples, struct-of-arrays.

    ``aop`` is NaN where the AoP pixel is invalid. ``weight`` is 1/|V(i)| with
    |V(i)| the number of cameras observing the vertex. ``edge_weight`` holds
    the photometric-smoothness weight of every mesh edge.
    """

    vertex: np.ndarray
    camera: np.ndarray
    rgb: np.ndarray
    aop: np.ndarray
    weight: np.ndarray
    edge_weight: np.ndarray | None = None

    def __len__(self):
        return len(self.vertex)

    @classmethod
    def empty(cls, n_edges: int = 0) -> "Observations":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((0, 3)),
                   np.zeros(0), np.zeros(0), np.ones(n_edges))

    @classmethod
    def build(cls, vertex, camera, rgb, aop, n_vertices: int, edges=None,
              delta_chroma: float = 0.05, delta_intensity: float = 0.2) -> "Observations":
        vertex = np.asarray(vertex, dtype=np.int64)
        camera = np.asarray(camera, dtype=np.int64)
        counts = np.bincount(vertex, minlength=n_vertices)
        weight = 1.0 / np.maximum(counts[vertex], 1)
        obs = cls(vertex, camera, np.asarray(rgb, dtype=float).reshape(-1, 3),
                  np.asarray(aop, dtype=float), weight)
        if edges is not None:
            obs.edge_weight = smoothness_weights(obs, edges, n_vertices, delta_chroma, delta_intensity)
        return obs


def chromaticity(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=float)
    s = rgb.sum(axis=-1, keepdims=True)
    return np.where(s > 1e-12, rgb / np.where(s > 1e-12, s, 1.0), 1.0 / 3.0)


def photometric_smoothness_weight(rgb_i, rgb_j, delta_chroma: float = 0.05,
                                  delta_intensity: float = 0.2):
    """exp(-(dchroma^2/delta_c^2 + dint^2/delta_i^2)) between two observed colors.

    Chromaticity is rgb / (r + g + b); intensity is the channel mean.
    """
    dc = np.linalg.norm(chromaticity(rgb_i) - chromaticity(rgb_j), axis=-1)
    di = np.abs(np.mean(rgb_i, axis=-1) - np.mean(rgb_j, axis=-1))
    w = np.exp(-(dc ** 2 / delta_chroma ** 2 + di ** 2 / delta_intensity ** 2))
    return float(w) if np.ndim(w) == 0 else w


def smoothness_weights(obs: Observations, edges: np.ndarray, n_vertices: int,
                       delta_chroma: float = 0.05, delta_intensity: float = 0.2) -> np.ndarray:
    """Weights w_ij from the mean colors over the cameras both vertices are seen in."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) == 0:
        return np.zeros(0)
    if len(obs) == 0:
        return np.ones(len(edges))
    p = int(obs.camera.max()) + 1
    seen = np.zeros((n_vertices, p), dtype=bool)
    color = np.zeros((n_vertices, p, 3))
    seen[obs.vertex, obs.camera] = True
    color[obs.vertex, obs.camera] = obs.rgb
    common = seen[edges[:, 0]] & seen[edges[:, 1]]
    cnt = common.sum(axis=1)
    ci = (color[edges[:, 0]] * common[..., None]).sum(axis=1) / np.maximum(cnt, 1)[:, None]
    cj = (color[edges[:, 1]] * common[..., None]).sum(axis=1) / np.maximum(cnt, 1)[:, None]
    w = photometric_smoothness_weight(ci, cj, delta_chroma, delta_intensity)
    return np.where(cnt > 0, w, 1.0)


# --------------------------------------------------------------------------
# scalar formulas


def _wrap_pi(x):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, 2 * np.pi)


def _azimuth_branch(alpha, phi):
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    offsets = np.array([-np.pi / 2, 0.0, np.pi / 2, np.pi])
    delta = _wrap_pi(alpha[..., None] - (phi[..., None] + offsets))
    d = np.abs(delta)
    best = np.argmin(d, axis=-1)  # first candidate wins ties
    signed = np.take_along_axis(delta, best[..., None], axis=-1)[..., 0]
    return np.abs(signed), signed


def azimuth_distance(alpha, phi):
    """Circular distance from ``alpha`` to the nearest of phi - pi/2, phi, phi + pi/2, phi + pi.

    Always within [0, pi/4].
    """
    eta, _ = _azimuth_branch(alpha, phi)
    return float(eta) if np.ndim(eta) == 0 else eta


def polarimetric_cost(eta, k: float = 0.5):
    """Concave per-observation cost (e^{-k theta} - e^{-k}) / (1 - e^{-k}), theta = 1 - 4 eta/pi."""
    theta = 1.0 - 4.0 * np.asarray(eta, dtype=float) / np.pi
    out = (np.exp(-k * theta) - math.exp(-k)) / (1.0 - math.exp(-k))
    return float(out) if np.ndim(out) == 0 else out


def polarimetric_residual(alpha, phi, k: float = 0.5, weight_norm=1.0):
    """sqrt(1/|V(i)|) * polarimetric_cost; 0 where alpha or phi is undefined (NaN/None)."""
    alpha = np.asarray(np.nan if alpha is None else alpha, dtype=float)
    phi = np.asarray(np.nan if phi is None else phi, dtype=float)
    valid = np.isfinite(alpha) & np.isfinite(phi)
    eta = azimuth_distance(np.where(valid, alpha, 0.0), np.where(valid, phi, 0.0))
    r = np.sqrt(weight_norm) * polarimetric_cost(eta, k)
    r = np.where(valid, r, 0.0)
    return float(r) if np.ndim(r) == 0 else r


def photometric_residual(observed_rgb, albedo, normal, illum_params, weight_norm=1.0):
    """sqrt(1/|V(i)|) * (observed - rendered) per channel."""
    from .shading import render_vertex

    rendered = render_vertex(albedo, normal, illum_params)
    return np.sqrt(np.asarray(weight_norm))[..., None] * (np.asarray(observed_rgb, dtype=float) - rendered)


def smoothness_angle(u, a):
    """Angle between unit vectors, via atan2 for accuracy near zero."""
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    return np.arctan2(np.linalg.norm(np.cross(u, a), axis=-1), np.sum(u * a, axis=-1))


def geometric_smoothness_residual(face_normal, neighbor_normal, q: float):
    """(angle / pi)^(q/2) between a face normal and its neighbors' mean normal."""
    t = smoothness_angle(face_normal, neighbor_normal)
    r = (t / np.pi) ** (q / 2)
    return float(r) if np.ndim(r) == 0 else r


def photometric_smoothness_residual(albedo_i, albedo_j, w):
    return np.sqrt(np.asarray(w))[..., None] * (np.asarray(albedo_i) - np.asarray(albedo_j))


# --------------------------------------------------------------------------
# parameter packing


@dataclass
class Layout:
    n_vertices: int
    n_views: int

    @property
    def size(self) -> int:
        return 6 * self.n_vertices + N_ILLUM * self.n_views

    @property
    def x_slice(self) -> slice:
        return slice(0, 3 * self.n_vertices)

    @property
    def k_slice(self) -> slice:
        return slice(3 * self.n_vertices, 6 * self.n_vertices)

    @property
    def l_slice(self) -> slice:
        return slice(6 * self.n_vertices, self.size)

    def pack(self, vertices, albedo, illum) -> np.ndarray:
        return np.concatenate([np.ravel(vertices), np.ravel(albedo), np.ravel(illum)]).astype(float)

    def unpack(self, x):
        n, p = self.n_vertices, self.n_views
        return (x[self.x_slice].reshape(n, 3), x[self.k_slice].reshape(n, 3),
                x[self.l_slice].reshape(p, N_ILLUM))


# --------------------------------------------------------------------------
# residual blocks


@dataclass
class Block:
    residual: np.ndarray
    jacobian: sp.csr_matrix | None
    singular: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def cost(self) -> float:
        return float(self.residual @ self.residual)


class ResidualModel:
    """Evaluates all residual blocks for a fixed topology, camera set and observations."""

    def __init__(self, mesh: RefinableMesh, rotations, obs: Observations, config: RefinementConfig):
        self.topology = mesh.topology
        self.faces = mesh.faces
        self.rotations = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
        self.obs = obs
        self.config = config
        self.layout = Layout(mesh.n_vertices, len(self.rotations))
        self._template = mesh
        pol = np.isfinite(obs.aop)
        self.pol_index = np.flatnonzero(pol)
        adj = self.topology.face_adjacency
        self.gsm_faces = np.flatnonzero((adj >= 0).any(axis=1))
        edges = self.topology.edges
        self.edges = edges
        w = obs.edge_weight if obs.edge_weight is not None else np.ones(len(edges))
        if len(w) != len(edges):
            raise ValueError("edge weights do not match the mesh edges")
        self.edge_weight = np.asarray(w, dtype=float)

    def mesh_at(self, x) -> RefinableMesh:
        V, K, _ = self.layout.unpack(x)
        return self._template.copy(vertices=V, albedo=K)

    def normals(self, x) -> NormalField:
        return normal_field(self.mesh_at(x))

    # -- photometric -------------------------------------------------------
    def photometric(self, x, nf: NormalField, jac=True) -> Block:
        lay, obs = self.layout, self.obs
        _, K, L = lay.unpack(x)
        o = len(obs)
        if o == 0:
            return Block(np.zeros(0), sp.csr_matrix((0, lay.size)) if jac else None)
        v, c = obs.vertex, obs.camera
        N = nf.vertex[v]
        B = sh_basis(N)                       # (o, 9)
        Lc = L[c]                             # (o, 12)
        S = np.sum(B * Lc[:, :9], axis=1)    # (o,)
        col = Lc[:, 9:12]
        Kv = K[v]
        sw = np.sqrt(obs.weight)
        r = sw[:, None] * (obs.rgb - Kv * S[:, None] * col)
        if not jac:
            return Block(r.reshape(-1), None)
        rows = np.arange(3 * o).reshape(o, 3)
        # d r / d N
        g = sh_shading_grad(N, Lc[:, :9])    # (o, 3)
        dN = -(sw[:, None] * Kv * col)[:, :, None] * g[:, None, :]  # (o, ch, 3)
        Cn = sp.csr_matrix(
            (dN.reshape(-1),
             (np.repeat(rows.reshape(-1), 3), (3 * v[:, None, None] + np.arange(3)[None, None, :]
                                              + np.zeros((1, 3, 1), dtype=np.int64)).reshape(-1))),
            shape=(3 * o, 3 * lay.n_vertices),
        )
        JX = Cn @ nf.vertex_jac
        # d r / d K
        JK = sp.csr_matrix(
            ((-(sw[:, None] * S[:, None] * col)).reshape(-1),
             (rows.reshape(-1), (3 * v[:, None] + np.arange(3)).reshape(-1))),
            shape=(3 * o, 3 * lay.n_vertices),
        )
        # d r / d L: 9 SH entries and one color scale per row
        base = N_ILLUM * c
        d_sh = -(sw[:, None] * Kv * col)[:, :, None] * B[:, None, :]       # (o, 3, 9)
        d_col = -(sw[:, None] * Kv * S[:, None])                            # (o, 3)
        sh_cols = base[:, None, None] + np.arange(9)[None, None, :] + np.zeros((1, 3, 1), dtype=np.int64)
        col_cols = base[:, None] + 9 + np.arange(3)[None, :]
        JL = sp.csr_matrix(
            (np.concatenate([d_sh.reshape(-1), d_col.reshape(-1)]),
             (np.concatenate([np.repeat(rows.reshape(-1), 9), rows.reshape(-1)]),
              np.concatenate([sh_cols.reshape(-1), col_cols.reshape(-1)]))),
            shape=(3 * o, N_ILLUM * lay.n_views),
        )
        return Block(r.reshape(-1), sp.hstack([JX, JK, JL], format="csr"))

    # -- polarimetric ------------------------------------------------------
    def polarimetric(self, x, nf: NormalField, jac=True) -> Block:
        lay, obs, k = self.layout, self.obs, self.config.k
        idx = self.pol_index
        o = idx.size
        if o == 0:
            return Block(np.zeros(0), sp.csr_matrix((0, lay.size)) if jac else None, np.zeros(0, dtype=bool))
        v, c = obs.vertex[idx], obs.camera[idx]
        R = self.rotations[c]
        n = np.einsum("oij,oj->oi", R, nf.vertex[v])
        rho2 = n[:, 0] ** 2 + n[:, 1] ** 2
        defined = rho2 >= AZIMUTH_EPS
        alpha = np.mod(np.arctan2(-n[:, 1], n[:, 0]), 2 * np.pi)
        eta, signed = _azimuth_branch(alpha, obs.aop[idx])
        theta = 1.0 - 4.0 * eta / np.pi
        ek = math.exp(-k)
        sw = np.sqrt(obs.weight[idx])
        r = np.where(defined, sw * (np.exp(-k * theta) - ek) / (1 - ek), 0.0)
        # near-singular: normal close to the optical axis, eta at a branch switch or at the kink
        singular = (rho2 < 1e-3) | (np.abs(eta - np.pi / 4) < 1e-4) | (eta < 1e-4)
        if not jac:
            return Block(r, None, singular)
        dr_dtheta = sw * (-k * np.exp(-k * theta)) / (1 - ek)
        dr_dalpha = dr_dtheta * (-4.0 / np.pi) * np.sign(signed)
        dalpha_dn = np.stack([n[:, 1], -n[:, 0], np.zeros(o)], axis=1) / np.where(defined, rho2, 1.0)[:, None]
        g = np.einsum("oi,oij->oj", dalpha_dn, R) * np.where(defined, dr_dalpha, 0.0)[:, None]
        Cn = sp.csr_matrix(
            (g.reshape(-1), (np.repeat(np.arange(o), 3), (3 * v[:, None] + np.arange(3)).reshape(-1))),
            shape=(o, 3 * lay.n_vertices),
        )
        JX = Cn @ nf.vertex_jac
        J = sp.hstack([JX, sp.csr_matrix((o, lay.size - 3 * lay.n_vertices))], format="csr")
        return Block(r, J, singular)

    # -- geometric smoothness ---------------------------------------------
    def geometric_smoothness(self, x, nf: NormalField, jac=True) -> Block:
        lay, q = self.layout, self.config.q
        faces = self.gsm_faces
        adj = self.topology.face_adjacency[faces]
        valid_adj = adj >= 0
        u = nf.face
        s = np.sum(np.where(valid_adj[..., None], u[np.maximum(adj, 0)], 0.0), axis=1)
        slen = np.linalg.norm(s, axis=1)
        ok = (slen > 1e-12) & (nf.face_area[faces] > 0)
        a = s / np.where(slen > 0, slen, 1.0)[:, None]
        um = u[faces]
        t = np.where(ok, smoothness_angle(um, a), 0.0)
        r = (t / np.pi) ** (q / 2)
        singular = t < 1e-4
        if not jac:
            return Block(r, None, singular)
        m = len(faces)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr_dt = np.where(t > 1e-12, (q / 2) * (t / np.pi) ** (q / 2 - 1) / np.pi, 0.0)
        d = np.clip(np.sum(um * a, axis=1), -ARCCOS_CLAMP, ARCCOS_CLAMP)
        dt_dd = -1.0 / np.sqrt(1.0 - d * d)
        scale = np.where(ok, dr_dt * dt_dd, 0.0)
        P = (np.eye(3) - a[:, :, None] * a[:, None, :]) / np.where(slen > 0, slen, 1.0)[:, None, None]
        gvec = np.einsum("mij,mj->mi", P, um)  # d(u.a)/d(sum of neighbor normals)
        rows = [np.repeat(np.arange(m), 3)]
        cols = [(3 * faces[:, None] + np.arange(3)).reshape(-1)]
        vals = [(scale[:, None] * a).reshape(-1)]
        for j in range(3):
            sel = valid_adj[:, j]
            rows.append(np.repeat(np.flatnonzero(sel), 3))
            cols.append((3 * adj[sel, j][:, None] + np.arange(3)).reshape(-1))
            vals.append((scale[sel, None] * gvec[sel]).reshape(-1))
        G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m, 3 * len(self.faces)))
        JX = G @ nf.face_jac
        J = sp.hstack([JX, sp.csr_matrix((m, lay.size - 3 * lay.n_vertices))], format="csr")
        return Block(r, J, singular)

    # -- photometric smoothness -------------------------------------------
    def photometric_smoothness(self, x, jac=True) -> Block:
        lay = self.layout
        _, K, _ = lay.unpack(x)
        e = self.edges
        # each undirected edge appears twice in the double sum over i and j in A(i)
        sw = np.sqrt(2.0 * self.edge_weight)
        r = (sw[:, None] * (K[e[:, 0]] - K[e[:, 1]])).reshape(-1)
        if not jac:
            return Block(r, None)
        ne = len(e)
        rows = np.arange(3 * ne)
        ch = np.tile(np.arange(3), ne)
        vals = np.repeat(sw, 3)
        JK = sp.csr_matrix(
            (np.concatenate([vals, -vals]),
             (np.concatenate([rows, rows]),
              np.concatenate([3 * np.repeat(e[:, 0], 3) + ch, 3 * np.repeat(e[:, 1], 3) + ch]))),
            shape=(3 * ne, 3 * lay.n_vertices),
        )
        J = sp.hstack([sp.csr_matrix((3 * ne, 3 * lay.n_vertices)), JK,
                       sp.csr_matrix((3 * ne, N_ILLUM * lay.n_views))], format="csr")
        return Block(r, J)

    # -- assembly ----------------------------------------------------------
    def blocks(self, x, jac=True, terms=TERMS) -> dict[str, Block]:
        nf = self.normals(x)
        out = {}
        if "pho" in terms:
            out["pho"] = self.photometric(x, nf, jac)
        if "pol" in terms:
            out["pol"] = self.polarimetric(x, nf, jac)
        if "gsm" in terms:
            out["gsm"] = self.geometric_smoothness(x, nf, jac)
        if "psm" in terms:
            out["psm"] = self.photometric_smoothness(x, jac)
        return out

    def evaluate(self, x, jac=True):
        """Weighted residual vector and (optionally) Jacobian, plus per-term blocks."""
        blocks = self.blocks(x, jac)
        w = self.config.weights
        for name, b in blocks.items():
            if not np.all(np.isfinite(b.residual)):
                raise FloatingPointError(f"non-finite residual in block {name!r}")
        r = np.concatenate([math.sqrt(w[name]) * b.residual for name, b in blocks.items()])
        if not jac:
            return r, None, blocks
        J = sp.vstack([math.sqrt(w[name]) * b.jacobian for name, b in blocks.items()], format="csr")
        return r, J, blocks

    def cost(self, x) -> float:
        r, _, _ = self.evaluate(x, jac=False)
        return float(r @ r)


def cost_breakdown(blocks: dict[str, Block], config: RefinementConfig) -> dict[str, tuple[float, int]]:
    """Per-term (unweighted energy, residual count)."""
    return {name: (b.cost, b.residual.size) for name, b in blocks.items()}


def total_cost(mesh: RefinableMesh, illum, observations: Observations, config: RefinementConfig,
               cameras) -> tuple[float, np.ndarray]:
    """Scalar cost E_pho + tau1 E_pol + tau2 E_gsm + tau3 E_psm and its residual vector."""
    rotations = [c.rotation for c in cameras]
    model = ResidualModel(mesh, rotations, observations, config)
    illum = np.asarray([i.as_array() if hasattr(i, "as_array") else i for i in illum], dtype=float)
    x = model.layout.pack(mesh.vertices, mesh.albedo, illum.reshape(len(rotations), N_ILLUM))
    r, _, _ = model.evaluate(x, jac=False)
    return float(r @ r), r
