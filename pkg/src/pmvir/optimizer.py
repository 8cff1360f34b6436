"""Staged Levenberg-Marquardt refinement of vertices, albedo and illumination."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cost import TERMS, Observations, RefinementConfig, ResidualModel
from .geometry import Camera, RefinableMesh, compute_visibility, subdivide_to_pixel_budget, vertex_normals
from .shading import N_ILLUM, Illumination

log = logging.getLogger(__name__)


@dataclass
class CostRecord:
    stage: int
    iteration: int
    term: str
    value: float
    count: int


@dataclass
class ProblemState:
    mesh: RefinableMesh
    illumination: np.ndarray | None = None  # (p, 12): L0..L8, L_R, L_G, L_B
    stage_index: int = 0
    iterations: list[int] = field(default_factory=list)
    history: list[CostRecord] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def illuminations(self) -> list[Illumination]:
        return [Illumination.from_array(a) for a in self.illumination]


# --------------------------------------------------------------------------
# observations


def _executor(threads: int):
    workers = threads if threads and threads > 0 else (os.cpu_count() or 1)
    return ThreadPoolExecutor(workers) if workers > 1 else None


def sample_observations(mesh: RefinableMesh, cameras, views, visibility: np.ndarray,
                        config: RefinementConfig | None = None) -> Observations:
    """Sample each visible vertex's projection in every view.

    RGB is interpolated bilinearly; AoP uses the nearest pixel. A sample is
    dropped when any of its four bilinear neighbors falls outside the image
    or the view's foreground mask.
    """
    config = config or RefinementConfig()
    verts, cams, rgbs, aops = [], [], [], []
    for c, (cam, view) in enumerate(zip(cameras, views)):
        idx = np.flatnonzero(visibility[:, c])
        if idx.size == 0:
            continue
        uv, z = cam.project(mesh.vertices[idx])
        h, w = view.rgb.shape[:2]
        ok = np.isfinite(uv).all(axis=1) & (z > 0)
        uv = np.where(ok[:, None], uv, 0.0)
        x0 = np.floor(uv[:, 0]).astype(np.int64)
        y0 = np.floor(uv[:, 1]).astype(np.int64)
        ok &= (x0 >= 0) & (y0 >= 0) & (x0 + 1 <= w - 1) & (y0 + 1 <= h - 1)
        x0c = np.clip(x0, 0, w - 2)
        y0c = np.clip(y0, 0, h - 2)
        if view.mask is not None:
            m = view.mask
            ok &= m[y0c, x0c] & m[y0c, x0c + 1] & m[y0c + 1, x0c] & m[y0c + 1, x0c + 1]
        fx = (uv[:, 0] - x0c)[:, None]
        fy = (uv[:, 1] - y0c)[:, None]
        img = view.rgb
        rgb = ((1 - fx) * (1 - fy) * img[y0c, x0c] + fx * (1 - fy) * img[y0c, x0c + 1]
               + (1 - fx) * fy * img[y0c + 1, x0c] + fx * fy * img[y0c + 1, x0c + 1])
        xi = np.clip(np.rint(uv[:, 0]).astype(np.int64), 0, w - 1)
        yi = np.clip(np.rint(uv[:, 1]).astype(np.int64), 0, h - 1)
        aop = view.aop[yi, xi]
        verts.append(idx[ok])
        cams.append(np.full(ok.sum(), c, dtype=np.int64))
        rgbs.append(rgb[ok])
        aops.append(aop[ok])
    topo = mesh.topology
    if not verts:
        return Observations.empty(len(topo.edges))
    return Observations.build(
        np.concatenate(verts), np.concatenate(cams), np.concatenate(rgbs), np.concatenate(aops),
        mesh.n_vertices, topo.edges, config.delta_chroma, config.delta_intensity,
    )


def initial_estimates(obs: Observations, n_vertices: int, n_views: int,
                      config: RefinementConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Neutral start: L0 = mean observed intensity per view, L1..L8 = 0, colors = 1;
    albedo = mean of observed RGB / L0 per vertex."""
    config = config or RefinementConfig()
    illum = np.zeros((n_views, N_ILLUM))
    illum[:, 9:] = 1.0
    intensity = obs.rgb.mean(axis=1) if len(obs) else np.zeros(0)
    cnt = np.bincount(obs.camera, minlength=n_views)
    tot = np.bincount(obs.camera, weights=intensity, minlength=n_views)
    l0 = np.where(cnt > 0, tot / np.maximum(cnt, 1), 1.0)
    l0 = np.where(l0 > 1e-6, l0, 1.0)
    illum[:, 0] = l0
    albedo = np.full((n_vertices, 3), 0.5)
    if len(obs):
        ratio = obs.rgb / l0[obs.camera][:, None]
        vc = np.bincount(obs.vertex, minlength=n_vertices)
        sums = np.stack([np.bincount(obs.vertex, weights=ratio[:, ch], minlength=n_vertices) for ch in range(3)], 1)
        seen = vc > 0
        albedo[seen] = sums[seen] / vc[seen, None]
        albedo[~seen] = albedo[seen].mean(axis=0) if seen.any() else 0.5
    albedo = np.clip(albedo, config.albedo_min, config.albedo_max)
    return albedo, illum


# --------------------------------------------------------------------------
# solver


@dataclass
class SolverSummary:
    initial_cost: float
    final_cost: float
    iterations: int
    accepted: int
    termination: str
    costs: list[float]


def _bounds_projector(layout, config: RefinementConfig):
    ks, ls = layout.k_slice, layout.l_slice
    p = layout.n_views

    def project(x):
        x = x.copy()
        x[ks] = np.clip(x[ks], config.albedo_min, config.albedo_max)
        L = x[ls].reshape(p, N_ILLUM)
        L[:, 9:] = np.clip(L[:, 9:], config.color_min, config.color_max)
        x[ls] = L.reshape(-1)
        return x

    return project


def _solve_spd(M, b):
    # symmetric minimum-degree ordering keeps the LU fill close to a Cholesky factor's
    lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
    return lu.solve(b)


def levenberg_marquardt(model: ResidualModel, x0: np.ndarray, config: RefinementConfig,
                        callback=None, basis=None) -> tuple[np.ndarray, SolverSummary]:
    """Minimize ||r(x)||^2 with a Marquardt-scaled damped Gauss-Newton method.

    Steps are projected onto the parameter bounds and accepted only when the
    cost strictly decreases, so the accepted cost sequence is monotone.
    The damped normal equations are solved with a sparse direct LU.
    ``basis`` (optional, orthonormal columns) restricts updates to
    ``x + basis @ s``; the damping then acts on the reduced coordinates.
    """
    project = _bounds_projector(model.layout, config)
    x = project(np.asarray(x0, dtype=float))
    r, J, blocks = model.evaluate(x)
    cost = float(r @ r)
    initial = cost
    costs = [cost]
    lam = config.initial_damping
    nu = 2.0
    accepted = 0
    termination = "max_iterations"
    if x.size == 0 or r.size == 0:
        return x, SolverSummary(cost, cost, 0, 0, "empty", costs)
    it = 0
    P = basis if basis is not None else sp.identity(x.size, format="csr")
    J = J @ P
    A = (J.T @ J).tocsc()
    g = J.T @ r
    for it in range(1, config.max_iterations + 1):
        if np.max(np.abs(g)) <= config.gradient_tolerance:
            termination = "gradient_tolerance"
            it -= 1
            break
        D = np.clip(A.diagonal(), 1e-6, 1e32)
        try:
            step = _solve_spd((A + sp.diags(lam * D)).tocsc(), -g)
        except RuntimeError:
            step = np.full_like(g, np.nan)
        step = P @ step
        if not np.all(np.isfinite(step)):
            lam *= nu
            nu *= 2
            if lam > config.max_damping:
                termination = "diverged"
                break
            continue
        x_new = project(x + step)
        dx = x_new - x
        try:
            r_new, _, _ = model.evaluate(x_new, jac=False)
            new_cost = float(r_new @ r_new)
        except FloatingPointError:
            new_cost = np.inf
        dy = P.T @ dx
        predicted = -(2 * dy @ g + dy @ (A @ dy))
        if np.isfinite(new_cost) and new_cost < cost:
            rho = (cost - new_cost) / predicted if predicted > 0 else 0.0
            old = cost
            x, cost = x_new, new_cost
            costs.append(cost)
            accepted += 1
            if callback is not None:
                callback(it, cost)
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if old - cost <= config.function_tolerance * old:
                termination = "function_tolerance"
                break
            if np.linalg.norm(dx) <= config.parameter_tolerance * (np.linalg.norm(x) + config.parameter_tolerance):
                termination = "parameter_tolerance"
                break
            r, J, blocks = model.evaluate(x)
            J = J @ P
            A = (J.T @ J).tocsc()
            g = J.T @ r
        else:
            lam *= nu
            nu *= 2
            if lam > config.max_damping:
                termination = "diverged"
                break
    return x, SolverSummary(initial, cost, it, accepted, termination, costs)


# --------------------------------------------------------------------------
# refinement


def normal_motion_basis(normals: np.ndarray, n_params: int) -> sp.csr_matrix:
    """Columns map one displacement per vertex along its normal, identity on the rest."""
    n = len(normals)
    rows = np.concatenate([np.arange(3 * n), np.arange(3 * n, n_params)])
    cols = np.concatenate([np.repeat(np.arange(n), 3), np.arange(n, n_params - 2 * n)])
    vals = np.concatenate([np.ravel(normals), np.ones(n_params - 3 * n)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_params, n_params - 2 * n))


def make_model(state: ProblemState, cameras, observations: Observations,
               config: RefinementConfig) -> ResidualModel:
    return ResidualModel(state.mesh, [c.rotation for c in cameras], observations, config)


def evaluate(state: ProblemState, observations: Observations, config: RefinementConfig, cameras):
    """Residual vector and sparse Jacobian at the current state."""
    model = make_model(state, cameras, observations, config)
    x = model.layout.pack(state.mesh.vertices, state.mesh.albedo, state.illumination)
    r, J, _ = model.evaluate(x)
    return r, J


def _record(state: ProblemState, stage: int, iteration: int, blocks, config: RefinementConfig):
    total = 0.0
    count = 0
    for name in TERMS:
        if name in blocks:
            val = blocks[name].cost
            n = blocks[name].residual.size
            state.history.append(CostRecord(stage, iteration, name, val, n))
            total += config.weights[name] * val
            count += n
    state.history.append(CostRecord(stage, iteration, "total", total, count))


def refine(state: ProblemState, cameras: list[Camera], views, config: RefinementConfig,
           progress=None) -> ProblemState:
    """Run the stage schedule on ``state``.

    Each stage recomputes visibility and observations from ``views`` (one
    :class:`pmvir.synth.ViewImages` per camera), freezes them, and minimizes
    the weighted cost with :func:`levenberg_marquardt`. Illumination and
    albedo are initialized from the first stage's observations when
    ``state.illumination`` is None.
    """
    cameras = list(cameras)
    state = ProblemState(state.mesh.copy(), None if state.illumination is None else np.array(state.illumination),
                         state.stage_index, list(state.iterations), list(state.history), list(state.diagnostics))
    executor = _executor(config.threads)
    try:
        if config.subdivide:
            mesh, converged = subdivide_to_pixel_budget(
                state.mesh, cameras, config.pixel_budget, config.max_subdivisions,
                config.depth_tolerance * state.mesh.diagonal)
            if not converged:
                state.diagnostics.append("pixel budget not reached")
            state.mesh = mesh
        for si, stage in enumerate(config.schedule):
            cfg = config.for_stage(stage)
            mesh = state.mesh
            vis = compute_visibility(mesh, cameras, cfg.depth_tolerance * mesh.diagonal,
                                     vertex_normals(mesh), executor)
            mesh = mesh.copy(visibility=vis)
            obs = sample_observations(mesh, cameras, views, vis, cfg)
            if state.illumination is None:
                albedo, state.illumination = initial_estimates(obs, mesh.n_vertices, len(cameras), cfg)
                mesh.albedo = albedo
            state.mesh = mesh
            model = make_model(state, cameras, obs, cfg)
            x0 = model.layout.pack(mesh.vertices, mesh.albedo, state.illumination)
            _record(state, si, 0, model.blocks(x0, jac=False), cfg)

            def cb(it, cost, si=si):
                state.history.append(CostRecord(si, it, "total", cost, -1))
                if progress is not None:
                    progress(si, it, cost)

            if cfg.appearance_warm_start and si == 0:
                n3 = 3 * mesh.n_vertices
                sel = sp.identity(model.layout.size, format="csr")[:, n3:]
                x0, _ = levenberg_marquardt(model, x0, cfg, None, sel)
            basis = None
            if cfg.vertex_motion == "normal":
                basis = normal_motion_basis(vertex_normals(mesh), model.layout.size)
            x, summary = levenberg_marquardt(model, x0, cfg, cb, basis)
            if summary.termination == "diverged":
                state.diagnostics.append(f"stage {si}: damping overflow, kept best state")
                log.warning("stage %d: damping overflow; keeping best-so-far parameters", si)
            V, K, L = model.layout.unpack(x)
            state.mesh = mesh.copy(vertices=V.copy(), albedo=K.copy())
            state.illumination = L.copy()
            state.stage_index = si + 1
            state.iterations.append(summary.iterations)
            _record(state, si, summary.iterations + 1, model.blocks(x, jac=False), cfg)
            log.info("stage %d: cost %.6g -> %.6g in %d iterations (%s)", si, summary.initial_cost,
                     summary.final_cost, summary.iterations, summary.termination)
    finally:
        if executor is not None:
            executor.shutdown()
    return state


# --------------------------------------------------------------------------
# gradient check


@dataclass
class GradientReport:
    max_relative_error: float
    per_term: dict[str, float]
    columns: int
    excluded_rows: int

    @property
    def empty(self) -> bool:
        return self.columns == 0


def check_gradients(state: ProblemState, observations: Observations, config: RefinementConfig,
                    cameras, samples: int = 20, seed=0, step: float = 1e-6) -> GradientReport:
    """Compare analytic Jacobian columns against central differences.

    ``samples`` parameter indices are drawn at random (all of them if fewer).
    Rows flagged near-singular at the evaluation point (normals near the view
    axis, AoP distance near a branch switch or zero, smoothness angle near
    zero) are excluded.
    """
    model = make_model(state, cameras, observations, config)
    size = model.layout.size
    if size == 0:
        return GradientReport(0.0, {}, 0, 0)
    x = model.layout.pack(state.mesh.vertices, state.mesh.albedo, state.illumination)
    rng = np.random.default_rng(seed)
    cols = np.arange(size) if samples >= size else np.sort(rng.choice(size, samples, replace=False))
    blocks = model.blocks(x)
    per_term = {}
    excluded = 0
    for name, b in blocks.items():
        if b.residual.size == 0:
            continue
        keep = ~b.singular if b.singular.size else np.ones(b.residual.size, dtype=bool)
        excluded += int((~keep).sum())
        Jc = b.jacobian[:, cols].toarray()[keep]
        worst = 0.0
        for k, j in enumerate(cols):
            h = step * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd = (model.blocks(xp, False, (name,))[name].residual
                  - model.blocks(xm, False, (name,))[name].residual)[keep] / (2 * h)
            scale = max(np.abs(fd).max(initial=0.0), np.abs(Jc[:, k]).max(initial=0.0))
            if scale < 1e-8:
                continue
            worst = max(worst, float(np.abs(fd - Jc[:, k]).max() / scale))
        per_term[name] = worst
    return GradientReport(max(per_term.values(), default=0.0), per_term, len(cols), excluded)
