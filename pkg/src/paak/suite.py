"""Seeded synthetic data: keyframe-model training sets and placement suites.

Everything here is desk-scale stand-in data built from box scenes and the
procedural capsule person in :mod:`paak.body`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .animation import PlacementPose, transform
from .body import KINDS, SynthClip, SynthParams, synth_clip
from .keyframes import WeightingConfig, geometric_weights, model_inputs, normalized_target
from .model import KeyframeModel, train_model
from .scene import SemanticVocabulary

WINDOW = 60


@dataclass
class SuiteCase:
    name: str
    recipe: dict
    kind: str
    params: SynthParams
    seat_centers: list[tuple[float, float, float]] = field(default_factory=list)

    def clip(self) -> SynthClip:
        return synth_clip(self.kind, self.params)


# ---------------------------------------------------------------------------
# training data
# ---------------------------------------------------------------------------


def random_params(kind: str, rng: np.random.Generator, seed: int) -> SynthParams:
    base = SynthParams(duration=2.0, fps=30.0, seed=seed)
    if kind == "walk":
        return replace(base, speed=float(rng.uniform(0.5, 1.4)))
    if kind == "jump":
        return replace(base, jump_height=float(rng.uniform(0.15, 0.45)))
    if kind == "sit":
        return replace(base, seat_height=float(rng.uniform(0.38, 0.52)))
    return replace(
        base,
        speed=float(rng.uniform(0.6, 1.2)),
        seat_height=float(rng.uniform(0.38, 0.52)),
        idle=float(rng.uniform(0.0, 0.8)),
        hold=float(rng.uniform(0.25, 0.45)),
    )


def training_set(
    count: int = 48,
    seed: int = 0,
    vocab: SemanticVocabulary | None = None,
    config: WeightingConfig = WeightingConfig(),
    window: int = WINDOW,
):
    """Random clips (random yaw) with their normalized geometric keyframe targets.

    Returns ``(inputs, targets)`` with shapes (count, n, v, f) and (count, n).
    """
    vocab = vocab or SemanticVocabulary.default()
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for i in range(count):
        kind = KINDS[i % len(KINDS)]
        clip = synth_clip(kind, random_params(kind, rng, seed * 100003 + i))
        feats = clip.features(vocab)
        anim = transform(clip.animation, PlacementPose((0.0, 0.0, 0.0), float(rng.uniform(0, 2 * math.pi))))
        kw = geometric_weights(anim, feats, vocab, config)
        xs.append(model_inputs(anim, feats, len(vocab), window))
        target = normalized_target(kw.k_g)
        if len(target) != window:
            target = np.interp(np.linspace(0, len(target) - 1, window), np.arange(len(target)), target)
        ys.append(target)
    return np.stack(xs), np.stack(ys)


def train_default_model(
    seed: int = 0,
    count: int = 48,
    epochs: int = 150,
    lr: float = 1e-3,
    batch_size: int = 8,
    m1: int = 8,
    m2: int = 32,
    m3: int = 64,
    vocab: SemanticVocabulary | None = None,
    config: WeightingConfig = WeightingConfig(),
) -> tuple[KeyframeModel, list[float]]:
    x, y = training_set(count, seed, vocab, config)
    model = KeyframeModel.init(x.shape[1], x.shape[2], x.shape[3], m1, m2, m3, seed=seed)
    return train_model(model, x, y, epochs=epochs, lr=lr, batch_size=batch_size, seed=seed)


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------


def _rot(x: float, y: float, yaw: float) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return c * x - s * y, s * x + c * y


def armchair(center, yaw_deg: float = 0.0, seat_height: float = 0.45, width: float = 0.6, depth: float = 0.5):
    """Seat, backrest and two armrests; a seated person faces local +x."""
    yaw = math.radians(yaw_deg)
    cx, cy = center
    parts = [
        ((0.0, 0.0), (depth, width, seat_height)),
        ((-depth / 2 - 0.05, 0.0), (0.1, width + 0.16, seat_height + 0.4)),
        ((0.0, width / 2 + 0.06), (depth, 0.12, seat_height + 0.22)),
        ((0.0, -width / 2 - 0.06), (depth, 0.12, seat_height + 0.22)),
    ]
    out = []
    for (lx, ly), size in parts:
        dx, dy = _rot(lx, ly, yaw)
        out.append({"label": "chair", "center": [cx + dx, cy + dy], "size": list(size), "yaw_deg": yaw_deg})
    return out


def stool(center, seat_height: float = 0.45, size: float = 0.5, label: str = "chair"):
    return [{"label": label, "center": list(center), "size": [size, size, seat_height]}]


def room(size: float = 4.0, objects=(), wall: bool = False) -> dict:
    objs = list(objects)
    if wall:
        h = size / 2
        objs.append({"label": "wall", "center": [0.0, h + 0.1], "size": [size, 0.2, 2.0]})
    return {"floor": {"size": [size, size]}, "objects": objs}


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def oracle_cases(seed: int = 0, count: int = 5) -> list[SuiteCase]:
    """Tiny 1 m floors with a stool plus 0-2 other boxes and 60-frame sitting clips.

    Small enough for an exhaustive (x, y, yaw) search.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(count):
        kind = ("sit", "walk_then_sit", "sit", "walk_then_sit", "sit")[i % 5]
        params = random_params(kind, rng, seed * 1009 + i)
        objects = []
        seats = []
        sx, sy = float(rng.uniform(-0.6, -0.4)), float(rng.uniform(-0.2, 0.2))
        objects += stool((sx, sy), seat_height=params.seat_height + float(rng.uniform(-0.02, 0.04)))
        seats.append((sx, sy, objects[-1]["size"][2]))
        for _ in range(int(rng.integers(0, 3))):
            ang = rng.uniform(0, 2 * math.pi)
            r = rng.uniform(0.9, 1.3)
            objects.append(
                {
                    "label": str(rng.choice(["table", "object", "wall"])),
                    "center": [r * math.cos(ang), r * math.sin(ang)],
                    "size": [float(rng.uniform(0.3, 0.6)), float(rng.uniform(0.3, 0.6)), float(rng.uniform(0.4, 0.9))],
                }
            )
        recipe = {"floor": {"size": [1.0, 1.0]}, "objects": objects}
        cases.append(SuiteCase(f"oracle-{i}-{kind}", recipe, kind, params, seats))
    return cases


def plausibility_suite(seed: int = 0, count: int = 20) -> list[SuiteCase]:
    """Mixed furnished rooms and clip kinds for plausibility statistics."""
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(count):
        kind = KINDS[i % len(KINDS)]
        params = random_params(kind, rng, seed * 7919 + i)
        objects = []
        seats = []
        cx, cy = float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-1.0, 1.0))
        yaw = float(rng.choice([0.0, 90.0, 180.0, 270.0]))
        if rng.random() < 0.5:
            objects += armchair((cx, cy), yaw, seat_height=params.seat_height)
        else:
            objects += stool((cx, cy), seat_height=params.seat_height)
        seats.append((cx, cy, params.seat_height))
        for _ in range(int(rng.integers(1, 3))):
            while True:
                ox, oy = rng.uniform(-1.6, 1.6, size=2)
                if math.hypot(ox - cx, oy - cy) > 1.0:
                    break
            objects.append(
                {
                    "label": str(rng.choice(["table", "object", "bed"])),
                    "center": [float(ox), float(oy)],
                    "size": [float(rng.uniform(0.4, 1.0)), float(rng.uniform(0.4, 1.0)), float(rng.uniform(0.4, 0.8))],
                }
            )
        cases.append(SuiteCase(f"suite-{i:02d}-{kind}", room(4.0, objects, wall=bool(i % 3 == 0)), kind, params, seats))
    return cases


def ring_walls(center, radius: float, sides: int = 16, thickness: float = 0.25, height: float = 2.0, label: str = "wall"):
    """Closed polygonal ring of wall boxes whose inner faces touch ``radius``."""
    cx, cy = center
    seg = 2 * radius * math.tan(math.pi / sides) + thickness
    out = []
    for k in range(sides):
        a = 2 * math.pi * k / sides
        r = radius + thickness / 2
        out.append(
            {
                "label": label,
                "center": [cx + r * math.cos(a), cy + r * math.sin(a)],
                "size": [thickness, seg, height],
                "yaw_deg": math.degrees(a),
            }
        )
    return out


def round_stool(center, seat_height: float = 0.45, size: float = 0.5, label: str = "chair"):
    """Octagonal stool: two square boxes, the second turned by 45 degrees."""
    return [
        {"label": label, "center": list(center), "size": [size, size, seat_height]},
        {"label": label, "center": list(center), "size": [size, size, seat_height], "yaw_deg": 45.0},
    ]


def _ring_penetration(points: np.ndarray, radius: float, lambda_pen: float = 10.0) -> float:
    depth = np.maximum(np.linalg.norm(points[:, :2], axis=1) - radius, 0.0)
    return float(lambda_pen * depth.sum() / len(points))


def booth_sit_cases(seed: int = 0, count: int = 10, idle_pen=(0.01, 0.02)) -> list[SuiteCase]:
    """A stool inside a small round booth, with a walk-then-sit clip that idles first.

    The booth radius is solved per clip so that, with the sitter ~0.15 m
    behind the stool center, the idle pose pokes into the wall by a per-frame
    penetration loss drawn from ``idle_pen``. Whichever way the seated frames
    face, sitting on the stool then costs penetration in every static frame,
    while a mid-air sit outside the booth costs only contact.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(count):
        params = SynthParams(
            duration=2.0,
            fps=30.0,
            speed=float(rng.uniform(0.9, 1.1)),
            seat_height=float(rng.uniform(0.42, 0.48)),
            idle=float(rng.uniform(0.6, 0.7)),
            hold=0.3,
            seed=seed * 31 + i,
        )
        clip = synth_clip("walk_then_sit", params)
        # clip frame: seated frames face -x, so the stool center sits 0.15 m toward -x
        center = clip.animation.pelvis[-1] - np.array([0.15, 0.0, 0.0])
        idle_pts = clip.animation.vertices[0] - center
        target = float(rng.uniform(*idle_pen))
        lo, hi = 0.2, float(np.linalg.norm(idle_pts[:, :2], axis=1).max())
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if _ring_penetration(idle_pts, mid) > target else (lo, mid)
        radius = 0.5 * (lo + hi)
        cx, cy = float(rng.uniform(-0.6, 0.6)), float(rng.uniform(-0.6, 0.6))
        objects = round_stool((cx, cy), params.seat_height) + ring_walls((cx, cy), radius)
        cases.append(
            SuiteCase(f"booth-{i}", room(4.0, objects), "walk_then_sit", params, [(cx, cy, params.seat_height)])
        )
    return cases
