"""Physical plausibility of a placed animation: non-collision and contact scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .animation import Animation
from .geometry import sample_sdf
from .scene import SceneModel

DEFAULT_CONTACT_THRESHOLD = 0.02


@dataclass(eq=False)
class PlausibilityReport:
    non_collision: float
    contact: float
    per_frame_non_collision: list[float]
    per_frame_contact: list[bool]
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD

    def to_json(self) -> dict:
        return {
            "non_collision": self.non_collision,
            "contact": self.contact,
            "contact_threshold": self.contact_threshold,
            "per_frame_non_collision": self.per_frame_non_collision,
            "per_frame_contact": self.per_frame_contact,
        }


def _phi(anim: Animation, scene: SceneModel) -> np.ndarray:
    phi, _ = sample_sdf(scene.sdf, anim.vertices.reshape(-1, 3))
    return phi.reshape(anim.n_frames, anim.n_vertices)


def non_collision_score(anim: Animation, scene: SceneModel) -> tuple[np.ndarray, float]:
    """Fraction of vertices with strictly positive SDF, per frame and averaged."""
    per_frame = (_phi(anim, scene) > 0.0).mean(axis=1)
    return per_frame, float(per_frame.mean())


def contact_score(
    anim: Animation, scene: SceneModel, threshold: float = DEFAULT_CONTACT_THRESHOLD
) -> tuple[np.ndarray, float]:
    """Whether any vertex has |SDF| below ``threshold``, per frame and averaged."""
    per_frame = np.abs(_phi(anim, scene)).min(axis=1) < threshold
    return per_frame, float(per_frame.mean())


def plausibility(
    anim: Animation, scene: SceneModel, threshold: float = DEFAULT_CONTACT_THRESHOLD
) -> PlausibilityReport:
    nc, nc_mean = non_collision_score(anim, scene)
    ct, ct_mean = contact_score(anim, scene, threshold)
    return PlausibilityReport(
        non_collision=nc_mean,
        contact=ct_mean,
        per_frame_non_collision=[float(x) for x in nc],
        per_frame_contact=[bool(x) for x in ct],
        contact_threshold=float(threshold),
    )
