"""Synthetic refinement experiments shared by the scripts and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import RefinementConfig, Stage
from .evaluation import evaluate_mesh, point_to_mesh_distance
from .geometry import RefinableMesh
from .optimizer import ProblemState, refine
from .synth import corrupt_views, default_scene, perturb_mesh, render_views


@dataclass
class ExperimentConfig:
    n_views: int = 14
    size: int = 256
    subdivisions: int = 3  # icosphere level: 3 gives 642 vertices
    perturbation: float = 0.02  # RMS, fraction of the bounding-box diagonal
    ambiguity: float = 0.0
    sigma_deg: float = 0.0
    photometric_only: bool = False
    seed: int = 0
    eval_samples: int = 100_000
    refinement: RefinementConfig = field(default_factory=RefinementConfig)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    initial_distance: float  # mean vertex-to-ground-truth-surface distance
    final_distance: float
    accuracy: float  # vertices to a dense ground-truth surface sample
    completeness: float
    seconds: float
    iterations: list[int]
    mesh: RefinableMesh

    @property
    def reduction(self) -> float:
        return 1.0 - self.final_distance / self.initial_distance


def photometric_only(config: RefinementConfig) -> RefinementConfig:
    """Same schedule with the polarimetric weight set to zero."""
    return replace(config, schedule=tuple(Stage(0.0, s.tau2, s.tau3, s.q) for s in config.schedule))


def run(cfg: ExperimentConfig) -> ExperimentResult:
    """Render, corrupt, perturb, refine and score one synthetic scene."""
    scene = default_scene(cfg.n_views, cfg.size, cfg.subdivisions, cfg.seed)
    views = render_views(scene)
    if cfg.ambiguity > 0 or cfg.sigma_deg > 0:
        views = corrupt_views(views, cfg.ambiguity, cfg.sigma_deg, cfg.seed)
    init = perturb_mesh(scene.gt_mesh, cfg.perturbation, cfg.seed)
    rcfg = photometric_only(cfg.refinement) if cfg.photometric_only else cfg.refinement
    t0 = time.perf_counter()
    state = refine(ProblemState(init), scene.cameras, views, rcfg)
    seconds = time.perf_counter() - t0
    gt = scene.gt_mesh
    d0 = float(point_to_mesh_distance(init.vertices, gt).mean())
    d1 = float(point_to_mesh_distance(state.mesh.vertices, gt).mean())
    report = evaluate_mesh(state.mesh, gt, cfg.eval_samples, cfg.seed)
    return ExperimentResult(cfg, d0, d1, report.accuracy_mean, report.completeness_mean, seconds,
                            list(state.iterations), state.mesh)


def summarize(values) -> tuple[float, float]:
    """Mean and standard error of the mean."""
    v = np.asarray(values, dtype=float)
    sem = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), sem
