"""Keyframe-weighted placement objective and its optimizer.

The objective for a pose is ``sum_i k_i * (afford_i + pen_i)`` over frames.
Placement seeds a floor grid with 12 yaws per position, keeps the best
prospects and refines each with a compass pattern search over
(tau_x, tau_y, tau_z, theta).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .animation import Animation, BodyFrame, FeatureMap, PlacementPose
from .errors import StructuralError, ValidationError
from .geometry import sample_sdf
from .scene import SceneModel

logger = logging.getLogger(__name__)

SEED_YAWS_DEG = tuple(range(0, 360, 30))


@dataclass(frozen=True)
class LossConfig:
    lambda_sem: float = 1.0
    lambda_pen: float = 10.0
    contact_clamp: float = 0.5

    def __post_init__(self) -> None:
        if min(self.lambda_sem, self.lambda_pen, self.contact_clamp) < 0:
            raise ValidationError("loss weights must be non-negative")


@dataclass(frozen=True)
class PlaceConfig:
    spacing: float = 0.5
    top_k: int = 10
    steps: tuple[float, float, float, float] = (0.25, 0.25, 0.10, 15.0)  # m, m, m, degrees
    min_steps: tuple[float, float, float, float] = (0.01, 0.01, 0.01, 1.0)
    max_evals: int = 200
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise ValidationError("grid spacing must be positive")
        if self.top_k < 1 or self.max_evals < 0:
            raise ValidationError("top_k must be >= 1 and max_evals >= 0")


@dataclass(eq=False)
class PlacementResult:
    pose: PlacementPose
    energy: float
    afford: np.ndarray
    pen: np.ndarray
    weights: np.ndarray
    evaluations: int = 1
    seed_index: int = -1
    seed_energy: float = math.nan

    @property
    def per_frame(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(p), float(k)) for a, p, k in zip(self.afford, self.pen, self.weights)]

    def to_json(self) -> dict:
        return {
            "pose": self.pose.to_json(),
            "energy": float(self.energy),
            "evaluations": int(self.evaluations),
            "seed_index": int(self.seed_index),
            "seed_energy": float(self.seed_energy),
            "per_frame": [
                {"frame": i, "afford": a, "pen": p, "weight": k} for i, (a, p, k) in enumerate(self.per_frame)
            ],
        }


def _frame_terms(phi, sem, contact, semantic, loss: LossConfig):
    """Per-frame (afford, pen) from SDF samples of shape (..., n, v)."""
    v = phi.shape[-1]
    dist = np.minimum(np.abs(phi), loss.contact_clamp)
    mismatch = (semantic != sem).astype(np.float64)
    afford = ((contact * dist).sum(axis=-1) + loss.lambda_sem * (contact * mismatch).sum(axis=-1)) / v
    pen = loss.lambda_pen * np.maximum(0.0, -phi).sum(axis=-1) / v
    return afford, pen


def frame_losses(
    frame: BodyFrame, contact, semantic, scene: SceneModel, loss: LossConfig = LossConfig()
) -> tuple[float, float]:
    """Affordance and penetration loss of one already-placed frame.

    ``contact``/``semantic`` are that frame's feature row.
    """
    contact = np.asarray(contact, dtype=np.float64)
    semantic = np.asarray(semantic)
    if contact.shape != (len(frame.vertices),) or semantic.shape != contact.shape:
        raise StructuralError("feature row does not match the frame vertex count")
    phi, sem = sample_sdf(scene.sdf, frame.vertices)
    a, p = _frame_terms(phi, sem, contact, semantic, loss)
    return float(a), float(p)


class PlacementProblem:
    """Precomputed data for fast repeated evaluation of the objective."""

    def __init__(
        self,
        anim: Animation,
        features: FeatureMap,
        weights,
        scene: SceneModel,
        loss: LossConfig = LossConfig(),
    ) -> None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (anim.n_frames,):
            raise StructuralError(f"need {anim.n_frames} frame weights, got {weights.shape}")
        if features.shape != (anim.n_frames, anim.n_vertices):
            raise StructuralError("features do not match the animation")
        self.anim = anim
        self.scene = scene
        self.loss = loss
        self.weights = weights
        self.contact = features.contact
        self.semantic = features.semantic
        self.center = anim.rotation_center
        self.local = (anim.vertices - self.center).reshape(-1, 3)
        self.n, self.v = anim.n_frames, anim.n_vertices
        self.min_z = float(anim.vertices[:, :, 2].min())

    def _points(self, x: np.ndarray) -> np.ndarray:
        c, s = math.cos(x[3]), math.sin(x[3])
        loc = self.local
        out = np.empty_like(loc)
        out[:, 0] = c * loc[:, 0] - s * loc[:, 1] + (self.center[0] + x[0])
        out[:, 1] = s * loc[:, 0] + c * loc[:, 1] + (self.center[1] + x[1])
        out[:, 2] = loc[:, 2] + x[2]
        return out

    def terms(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-frame (afford, pen) at pose vector x = (tau_x, tau_y, tau_z, theta)."""
        phi, sem = sample_sdf(self.scene.sdf, self._points(np.asarray(x, dtype=np.float64)))
        return _frame_terms(
            phi.reshape(self.n, self.v), sem.reshape(self.n, self.v), self.contact, self.semantic, self.loss
        )

    def energy(self, x) -> float:
        a, p = self.terms(x)
        return float(np.sum(self.weights * (a + p)))

    def result(self, x, evaluations: int = 1, **extra) -> PlacementResult:
        a, p = self.terms(x)
        pose = PlacementPose(tuple(x[:3]), x[3])
        return PlacementResult(pose, float(np.sum(self.weights * (a + p))), a, p, self.weights, evaluations, **extra)


def pose_vector(pose: PlacementPose) -> np.ndarray:
    return np.array([*pose.tau, pose.theta])


def energy(
    anim: Animation,
    features: FeatureMap,
    weights,
    scene: SceneModel,
    pose: PlacementPose,
    loss: LossConfig = LossConfig(),
) -> PlacementResult:
    """Weighted objective of the animation placed at ``pose``."""
    return PlacementProblem(anim, features, weights, scene, loss).result(pose_vector(pose))


def grid_axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    """Inclusive, centered sample positions covering [lo, hi]."""
    count = int(math.floor((hi - lo) / spacing + 1e-9)) + 1
    start = lo + 0.5 * ((hi - lo) - (count - 1) * spacing)
    return start + spacing * np.arange(count)


def seed_grid(scene: SceneModel, anim: Animation, spacing: float = 0.5) -> list[PlacementPose]:
    """Floor-aligned seeds: every grid position times yaws 0, 30, ..., 330 degrees.

    The seed translation moves the animation's rotation center onto the grid
    position and drops the lowest vertex of the whole clip onto the floor.
    """
    if not spacing > 0:
        raise ValidationError("grid spacing must be positive")
    x0, y0, x1, y1 = scene.floor_rect
    if not (x1 > x0 or y1 > y0):
        raise ValidationError("scene floor is empty")
    center = anim.rotation_center
    tz = scene.floor_height - float(anim.vertices[:, :, 2].min())
    seeds = []
    for gx in grid_axis(x0, x1, spacing):
        for gy in grid_axis(y0, y1, spacing):
            for deg in SEED_YAWS_DEG:
                seeds.append(PlacementPose.from_degrees((gx - center[0], gy - center[1], tz), deg))
    return seeds


def pattern_search(problem: PlacementProblem, x0, f0: float, config: PlaceConfig) -> tuple[np.ndarray, float, int]:
    """Compass search accepting only strict improvements.

    Polls +step then -step along tau_x, tau_y, tau_z, theta in turn, moving
    on the first improvement. A full poll without improvement halves every
    step; dimensions whose step fell below its minimum stop being polled.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f = float(f0)
    step = np.array(config.steps[:3] + (math.radians(config.steps[3]),))
    floor = np.array(config.min_steps[:3] + (math.radians(config.min_steps[3]),))
    evals = 0
    while evals < config.max_evals:
        active = np.flatnonzero(step >= floor)
        if len(active) == 0:
            break
        improved = False
        for d in active:
            for sign in (1.0, -1.0):
                if evals >= config.max_evals:
                    break
                cand = x.copy()
                cand[d] += sign * step[d]
                fc = problem.energy(cand)
                evals += 1
                if fc < f:
                    x, f = cand, fc
                    improved = True
                    break
        if not improved:
            step = step / 2.0
    x[3] = math.fmod(x[3], 2 * math.pi) % (2 * math.pi)
    return x, f, evals


def _refine(args):
    problem, idx, x0, f0, config = args
    x, f, evals = pattern_search(problem, x0, f0, config)
    return problem.result(x, evaluations=evals, seed_index=idx, seed_energy=f0)


@dataclass(eq=False)
class PlacementOutcome:
    best: PlacementResult
    prospects: list[PlacementResult] = field(default_factory=list)
    seed_count: int = 0
    evaluations: int = 0


def place(
    anim: Animation,
    features: FeatureMap,
    weights,
    scene: SceneModel,
    config: PlaceConfig = PlaceConfig(),
    loss: LossConfig = LossConfig(),
) -> PlacementOutcome:
    """Grid-seed, keep the ``top_k`` lowest-energy seeds, refine each, return the best."""
    problem = PlacementProblem(anim, features, weights, scene, loss)
    seeds = seed_grid(scene, anim, config.spacing)
    xs = np.array([pose_vector(s) for s in seeds])
    energies = np.array([problem.energy(x) for x in xs])
    order = np.argsort(energies, kind="stable")[: config.top_k]
    tasks = [(problem, int(i), xs[i], float(energies[i]), config) for i in order]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            refined = list(pool.map(_refine, tasks))
    else:
        refined = [_refine(t) for t in tasks]
    best = min(range(len(refined)), key=lambda i: (refined[i].energy, i))
    total = len(seeds) + sum(r.evaluations for r in refined)
    logger.info("placed: %d seeds, best energy %.6g (seed %d)", len(seeds), refined[best].energy, refined[best].seed_index)
    # the reported best carries the run total; prospects keep their own counts
    out = replace(refined[best], evaluations=total)
    return PlacementOutcome(out, refined, len(seeds), total)


def config_dict(config) -> dict:
    return asdict(config)
