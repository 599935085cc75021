"""Procedural capsule person used for synthetic clips.

The body is ten ring-stacked capsules (torso, head, thighs, shins, upper
and lower arms) plus one tip vertex per foot: 218 vertices with fixed
topology. Rings sit at most ~11 cm apart so thin furniture parts cannot
slip between them unnoticed. Poses are driven by a pelvis position, a yaw, ankle targets
solved with planar two-link IK, and sagittal arm angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .animation import Animation, FeatureMap
from .errors import ValidationError
from .scene import SemanticVocabulary

RING = 6
RING_PHASE = math.radians(30.0)

THIGH = 0.45
SHIN = 0.50
THIGH_R = 0.07
HIP_Y = 0.09
SHOULDER = np.array([0.0, 0.19, 0.45])
UPPER_ARM = 0.30
FOREARM = 0.28
STAND_PELVIS = THIGH + SHIN
WALK_PELVIS = 0.90
STRIDE = 1.0

CONTACT_SCALE = 0.02
CONTACT_RANGE = 0.10

# name, radius, ring stations along the bone, has foot tip
_SEGMENTS = (
    ("torso", 0.13, (0.02, 0.33, 0.64, 0.95), False),
    ("head", 0.09, (0.1, 0.9), False),
    ("thigh_l", THIGH_R, (0.02, 0.25, 0.49, 0.72, 0.95), False),
    ("thigh_r", THIGH_R, (0.02, 0.25, 0.49, 0.72, 0.95), False),
    ("shin_l", 0.05, (0.05, 0.32, 0.58, 0.85), True),
    ("shin_r", 0.05, (0.05, 0.32, 0.58, 0.85), True),
    ("upper_arm_l", 0.045, (0.1, 0.5, 0.9), False),
    ("upper_arm_r", 0.045, (0.1, 0.5, 0.9), False),
    ("forearm_l", 0.04, (0.1, 0.5, 0.9), False),
    ("forearm_r", 0.04, (0.1, 0.5, 0.9), False),
)


def _build_layout():
    parts: dict[str, np.ndarray] = {}
    tris = []
    start = 0
    for name, _, stations, tip in _SEGMENTS:
        rings = len(stations)
        for j in range(rings - 1):
            r0 = np.arange(RING) + start + j * RING
            r1 = r0 + RING
            for k in range(RING):
                k1 = (k + 1) % RING
                tris.append((r0[k], r0[k1], r1[k1]))
                tris.append((r0[k], r1[k1], r1[k]))
        count = rings * RING
        if tip:
            r1 = np.arange(RING) + start + (rings - 1) * RING
            t = start + count
            for k in range(RING):
                tris.append((r1[k], r1[(k + 1) % RING], t))
            count += 1
        parts[name] = np.arange(start, start + count)
        start += count
    return parts, np.array(tris, dtype=np.int64), start


PARTS, TOPOLOGY, N_VERTICES = _build_layout()
SEAT_PARTS = ("torso", "head", "thigh_l", "thigh_r", "upper_arm_l", "upper_arm_r", "forearm_l", "forearm_r")
SEAT_VERTICES = np.concatenate([PARTS[p] for p in SEAT_PARTS])
FOOT_TIPS = np.array([PARTS["shin_l"][-1], PARTS["shin_r"][-1]])


def _ik(hip: np.ndarray, ankle: np.ndarray) -> np.ndarray:
    """Knee position for a planar (x-z) two-link leg bending forward."""
    d_vec = ankle - hip
    d = float(np.hypot(d_vec[0], d_vec[2]))
    d = min(max(d, 1e-6), THIGH + SHIN - 1e-9)
    cos_g = (THIGH**2 + d**2 - SHIN**2) / (2 * THIGH * d)
    g = math.acos(max(-1.0, min(1.0, cos_g)))
    a = math.atan2(d_vec[2], d_vec[0]) + g
    return np.array([hip[0] + THIGH * math.cos(a), hip[1], hip[2] + THIGH * math.sin(a)])


def _arm(shoulder: np.ndarray, swing: float, bend: float):
    elbow = shoulder + UPPER_ARM * np.array([math.sin(swing), 0.0, -math.cos(swing)])
    fa = swing + bend
    wrist = elbow + FOREARM * np.array([math.sin(fa), 0.0, -math.cos(fa)])
    return elbow, wrist


@dataclass
class BodyPose:
    """Body-frame pose: x forward, y left, z up, pelvis at the origin."""

    pelvis: np.ndarray
    yaw: float
    ankle_l: np.ndarray
    ankle_r: np.ndarray
    arm_swing_l: float = 0.0
    arm_swing_r: float = 0.0
    elbow_bend: float = 0.2


def pose_vertices(pose: BodyPose) -> np.ndarray:
    hip_l = np.array([0.0, HIP_Y, 0.0])
    hip_r = np.array([0.0, -HIP_Y, 0.0])
    knee_l = _ik(hip_l, pose.ankle_l)
    knee_r = _ik(hip_r, pose.ankle_r)
    sh_l = SHOULDER.copy()
    sh_r = SHOULDER * np.array([1.0, -1.0, 1.0])
    el_l, wr_l = _arm(sh_l, pose.arm_swing_l, pose.elbow_bend)
    el_r, wr_r = _arm(sh_r, pose.arm_swing_r, pose.elbow_bend)
    bones = {
        "torso": (np.zeros(3), np.array([0.0, 0.0, 0.5])),
        "head": (np.array([0.0, 0.0, 0.55]), np.array([0.0, 0.0, 0.8])),
        "thigh_l": (hip_l, knee_l),
        "thigh_r": (hip_r, knee_r),
        "shin_l": (knee_l, np.asarray(pose.ankle_l, dtype=np.float64)),
        "shin_r": (knee_r, np.asarray(pose.ankle_r, dtype=np.float64)),
        "upper_arm_l": (sh_l, el_l),
        "upper_arm_r": (sh_r, el_r),
        "forearm_l": (el_l, wr_l),
        "forearm_r": (el_r, wr_r),
    }
    lateral = np.array([0.0, 1.0, 0.0])
    phis = RING_PHASE + 2 * math.pi * np.arange(RING) / RING
    out = []
    for name, radius, stations, tip in _SEGMENTS:
        a, b = bones[name]
        axis = (b - a) / np.linalg.norm(b - a)
        u = lateral - axis * (lateral @ axis)
        u /= np.linalg.norm(u)
        w = np.cross(axis, u)
        ring = radius * (np.cos(phis)[:, None] * u + np.sin(phis)[:, None] * w)
        for s in stations:
            out.append(a + s * (b - a) + ring)
        if tip:
            out.append(b[None, :])
    local = np.concatenate(out)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + pose.pelvis


# ---------------------------------------------------------------------------
# clips
# ---------------------------------------------------------------------------

KINDS = ("walk", "sit", "walk_then_sit", "jump")


@dataclass(frozen=True)
class SynthParams:
    duration: float = 2.0
    fps: float = 30.0
    speed: float = 1.0
    seat_height: float = 0.45
    idle: float = 0.0  # standing still before the motion starts (s)
    hold: float = 0.5  # seated hold at the end of sit clips (s)
    jump_height: float = 0.35
    seed: int = 0

    @property
    def n_frames(self) -> int:
        return max(2, int(round(self.duration * self.fps)))


@dataclass(eq=False)
class SynthClip:
    """A generated animation plus the ground truth it was built from."""

    kind: str
    params: SynthParams
    animation: Animation
    sit_mask: np.ndarray  # frames holding the seated pose
    airborne: np.ndarray  # frames with both feet off the ground
    seat_center: np.ndarray | None = None  # canonical seat top center (x, y, z)
    phase: list[str] = field(default_factory=list)

    def features(self, vocab: SemanticVocabulary | None = None, seat_class: str = "chair") -> FeatureMap:
        """Idealized contact/semantic features derived from the clip's ground truth.

        Vertices within 10 cm of their supporting surface get contact
        exp(-h / 2 cm); in seated frames the upper body and thighs expect
        the seat class, everything else expects the floor.
        """
        vocab = vocab or SemanticVocabulary.default()
        seat = vocab.id_of(seat_class)
        z = self.animation.vertices[:, :, 2]
        n, v = z.shape
        support = np.zeros((n, v))
        semantic = np.full((n, v), vocab.floor_id, dtype=np.int64)
        if self.sit_mask.any():
            rows = np.flatnonzero(self.sit_mask)
            support[np.ix_(rows, SEAT_VERTICES)] = self.params.seat_height
            semantic[np.ix_(rows, SEAT_VERTICES)] = seat
        h = np.maximum(z - support, 0.0)
        contact = np.where(h < CONTACT_RANGE, np.exp(-h / CONTACT_SCALE), 0.0)
        return FeatureMap(contact, semantic)


def _smooth(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3 - 2 * s)


def _seated_pelvis_height(seat_height: float) -> float:
    return seat_height + THIGH_R


def synth_clip(kind: str, params: SynthParams | None = None) -> SynthClip:
    """Generate a deterministic clip of the given kind.

    Kinds: ``walk`` (along +x), ``sit`` (stand, sit down, hold),
    ``walk_then_sit`` (optional idle, walk, turn around, sit, hold) and
    ``jump`` (crouch, vertical jump, land).
    """
    params = params or SynthParams()
    if kind not in KINDS:
        raise ValidationError(f"unknown clip kind {kind!r}; expected one of {KINDS}")
    if params.seat_height + THIGH_R > STAND_PELVIS - 0.05:
        raise ValidationError(f"seat height {params.seat_height} is too high for the body")
    rng = np.random.default_rng(params.seed)
    n = params.n_frames
    t = params.duration * np.arange(n) / (n - 1)
    arm_phase = float(rng.uniform(-0.3, 0.3))
    arm_amp = float(rng.uniform(0.25, 0.4))
    stance = float(rng.uniform(-0.01, 0.01))

    pelvis = np.zeros((n, 3))
    yaw = np.zeros(n)
    ankles = np.zeros((n, 2, 3))  # world-relative-to-pelvis, body frame
    swing = np.zeros((n, 2))
    sit_mask = np.zeros(n, dtype=bool)
    phase = ["stand"] * n

    def stand(i, x=0.0):
        pelvis[i] = (x, 0.0, STAND_PELVIS)
        ankles[i, 0] = (0.0, HIP_Y + stance, -STAND_PELVIS)
        ankles[i, 1] = (0.0, -HIP_Y - stance, -STAND_PELVIS)

    def walk(i, x, dist, amp=1.0):
        # amp < 1 shortens the stride (coming to a halt)
        ph = 2 * math.pi * dist / STRIDE
        pelvis[i] = (x, 0.0, STAND_PELVIS + amp * (WALK_PELVIS - STAND_PELVIS))
        for j, off in enumerate((0.0, math.pi)):
            p = ph + off
            lift = 0.08 * amp * max(0.0, math.cos(p))
            side = HIP_Y + stance if j == 0 else -HIP_Y - stance
            ankles[i, j] = (0.22 * amp * math.sin(p), side, -pelvis[i, 2] + lift)
        sw = arm_amp * amp * math.sin(ph + arm_phase)
        swing[i] = (-sw, sw)
        phase[i] = "walk"

    def sit(i, s, base_x, facing):
        # pelvis travels back by a thigh length while the knees stay over the feet
        s = float(_smooth(s))
        hz = _seated_pelvis_height(params.seat_height)
        lift = max(0.0, hz - SHIN)
        back = -facing * THIGH * s
        pz = (1 - s) * STAND_PELVIS + s * hz
        pelvis[i] = (base_x + back, 0.0, pz)
        for j, side in enumerate((HIP_Y + stance, -HIP_Y - stance)):
            ankles[i, j] = (THIGH * s, side, -pz + s * lift)
        swing[i] = (0.5 * s, 0.5 * s)
        phase[i] = "sit" if s >= 1.0 else "sit_down"

    seat_center = None
    if kind == "walk":
        dist_total = params.speed * params.duration
        for i in range(n):
            d = dist_total * i / (n - 1)
            walk(i, d, d)
    elif kind == "jump":
        marks = np.array([0.2, 0.35, 0.65, 0.8]) * params.duration
        for i, ti in enumerate(t):
            stand(i)
            if marks[0] <= ti < marks[1] or marks[2] <= ti < marks[3]:
                # crouch before take-off and after landing
                lo, hi = (marks[0], marks[1]) if ti < marks[1] else (marks[2], marks[3])
                dip = 0.2 * math.sin(math.pi * (ti - lo) / (hi - lo))
                pelvis[i, 2] = STAND_PELVIS - dip
                ankles[i, :, 2] = -pelvis[i, 2]
                swing[i] = (-0.6 * dip / 0.2,) * 2
                phase[i] = "crouch"
            elif marks[1] <= ti < marks[2]:
                s = (ti - marks[1]) / (marks[2] - marks[1])
                pelvis[i, 2] = STAND_PELVIS + 4 * params.jump_height * s * (1 - s)
                ankles[i, :, 2] = -STAND_PELVIS + 0.02
                swing[i] = (0.8, 0.8)
                phase[i] = "air"
    else:
        if kind == "sit":
            idle, walk_t, turn_t = 0.3 * params.duration, 0.0, 0.0
            down_t = 0.35 * params.duration
        else:
            idle, turn_t, down_t = params.idle, 0.3, 0.4
            walk_t = params.duration - idle - turn_t - down_t - params.hold
            if walk_t < 0:
                raise ValidationError("duration too short for idle + turn + sit + hold")
        walk_dist = params.speed * walk_t
        facing = -1.0 if turn_t > 0 else 1.0
        for i, ti in enumerate(t):
            if ti < idle:
                stand(i)
            elif ti < idle + walk_t:
                d = walk_dist * (ti - idle) / walk_t
                # ease in and out of the stride so the feet come together at both ends
                amp = float(_smooth(min(d, walk_dist - d) / 0.2))
                walk(i, d, d, amp)
            elif ti < idle + walk_t + turn_t:
                stand(i, walk_dist)
                yaw[i] = math.pi * float(_smooth((ti - idle - walk_t) / turn_t))
                phase[i] = "turn"
            else:
                yaw[i] = math.pi if turn_t > 0 else 0.0
                s = (ti - idle - walk_t - turn_t) / down_t
                sit(i, s, walk_dist, facing)
                sit_mask[i] = s >= 1.0
        hz = params.seat_height
        seat_center = np.array([walk_dist - facing * (THIGH - 0.2), 0.0, hz])

    verts = np.empty((n, N_VERTICES, 3))
    for i in range(n):
        verts[i] = pose_vertices(
            BodyPose(
                pelvis=pelvis[i],
                yaw=yaw[i],
                ankle_l=ankles[i, 0],
                ankle_r=ankles[i, 1],
                arm_swing_l=swing[i, 0],
                arm_swing_r=swing[i, 1],
            )
        )
    # store float32-representable coordinates so file round trips are exact
    verts = verts.astype(np.float32).astype(np.float64)
    pelvis = pelvis.astype(np.float32).astype(np.float64)
    anim = Animation(TOPOLOGY, verts, pelvis, params.fps)
    airborne = verts[:, FOOT_TIPS, 2].min(axis=1) > 0.05
    return SynthClip(kind, params, anim, sit_mask, airborne, seat_center, phase)


def with_seed(params: SynthParams, seed: int) -> SynthParams:
    return replace(params, seed=seed)
