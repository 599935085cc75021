"""Body-mesh animations, per-vertex interaction features, and rigid placement."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, StructuralError, ValidationError
from .scene import SemanticVocabulary

ANIM_MAGIC = b"PAAKANM1"
FEAT_MAGIC = b"PAAKFTR1"
_ANIM_HEADER = struct.Struct("<IIIf")
_FEAT_HEADER = struct.Struct("<II")

MAX_PELVIS_STEP = 1.0
MAX_PELVIS_OFFSET = 2.0
HEURISTIC_CONTACT_SCALE = 0.05
HEURISTIC_FOOT_HEIGHT = 0.1
HEURISTIC_LOW_PELVIS = 0.65
HEURISTIC_TORSO_RADIUS = 0.35


@dataclass(frozen=True)
class PlacementPose:
    """Translation ``tau`` (m) and yaw ``theta`` (rad, kept in [0, 2*pi))."""

    tau: tuple[float, float, float]
    theta: float

    def __post_init__(self) -> None:
        tau = tuple(float(t) for t in self.tau)
        if len(tau) != 3 or not all(math.isfinite(t) for t in tau):
            raise ValidationError(f"tau must be 3 finite values, got {self.tau}")
        theta = float(self.theta)
        if not math.isfinite(theta):
            raise ValidationError("theta must be finite")
        theta = math.fmod(theta, 2 * math.pi)
        if theta < 0:
            theta += 2 * math.pi
        if theta >= 2 * math.pi:
            theta = 0.0
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def identity(cls) -> "PlacementPose":
        return cls((0.0, 0.0, 0.0), 0.0)

    @classmethod
    def from_degrees(cls, tau, theta_deg: float) -> "PlacementPose":
        return cls(tuple(tau), math.radians(theta_deg))

    @property
    def theta_deg(self) -> float:
        return math.degrees(self.theta)

    def to_json(self) -> dict:
        return {"tau": list(self.tau), "theta_deg": self.theta_deg}

    @classmethod
    def from_json(cls, doc: dict) -> "PlacementPose":
        return cls.from_degrees(doc["tau"], doc["theta_deg"])


@dataclass(frozen=True)
class BodyFrame:
    vertices: np.ndarray
    pelvis: np.ndarray


@dataclass(eq=False)
class Animation:
    """Fixed-topology body mesh sequence.

    Vertices are stored stacked, shape (n_frames, n_vertices, 3); pelvis
    joints have shape (n_frames, 3).
    """

    topology: np.ndarray
    vertices: np.ndarray
    pelvis: np.ndarray
    fps: float

    def __post_init__(self) -> None:
        self.topology = np.ascontiguousarray(self.topology, dtype=np.int64).reshape(-1, 3)
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.pelvis = np.ascontiguousarray(self.pelvis, dtype=np.float64)
        if self.vertices.ndim != 3 or self.vertices.shape[2] != 3:
            raise StructuralError(f"vertices must be (n, v, 3), got {self.vertices.shape}")
        n, v, _ = self.vertices.shape
        if n < 2:
            raise ValidationError(f"an animation needs at least 2 frames, got {n}")
        if v == 0:
            raise ValidationError("frames have no vertices")
        if self.pelvis.shape != (n, 3):
            raise StructuralError(f"pelvis must be ({n}, 3), got {self.pelvis.shape}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise FormatError(f"fps must be positive, got {self.fps}")
        self.fps = float(self.fps)
        if len(self.topology) and (self.topology.min() < 0 or self.topology.max() >= v):
            raise FormatError("topology index out of range")
        if not np.all(np.isfinite(self.vertices)) or not np.all(np.isfinite(self.pelvis)):
            raise ValidationError("non-finite coordinates")
        offset = np.linalg.norm(self.pelvis - self.vertices.mean(axis=1), axis=1)
        bad = np.flatnonzero(offset > MAX_PELVIS_OFFSET)
        if len(bad):
            raise ValidationError(f"frame {int(bad[0])}: pelvis is {offset[bad[0]]:.2f} m from the vertex centroid")
        step = np.linalg.norm(np.diff(self.pelvis, axis=0), axis=1)
        bad = np.flatnonzero(step >= MAX_PELVIS_STEP)
        if len(bad):
            raise ValidationError(
                f"frame {int(bad[0]) + 1}: pelvis jumps {step[bad[0]]:.2f} m (tracking glitch?)"
            )
        self.vertices.setflags(write=False)
        self.pelvis.setflags(write=False)

    @classmethod
    def from_frames(cls, topology, frames: list[BodyFrame], fps: float) -> "Animation":
        if not frames:
            raise ValidationError("an animation needs at least 2 frames, got 0")
        v = len(frames[0].vertices)
        for i, fr in enumerate(frames):
            if len(fr.vertices) != v:
                raise FormatError(f"frame {i} has {len(fr.vertices)} vertices, expected {v}")
        return cls(
            topology,
            np.stack([np.asarray(f.vertices, dtype=np.float64) for f in frames]),
            np.stack([np.asarray(f.pelvis, dtype=np.float64) for f in frames]),
            fps,
        )

    @property
    def n_frames(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[1]

    @property
    def frames(self) -> list[BodyFrame]:
        return [BodyFrame(self.vertices[i], self.pelvis[i]) for i in range(self.n_frames)]

    def frame(self, i: int) -> BodyFrame:
        return BodyFrame(self.vertices[i], self.pelvis[i])

    @property
    def rotation_center(self) -> np.ndarray:
        """Ground projection of the first-frame pelvis (z = 0)."""
        return np.array([self.pelvis[0, 0], self.pelvis[0, 1], 0.0])

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.topology.astype("<i8").tobytes())
        h.update(self.vertices.astype("<f8").tobytes())
        h.update(self.pelvis.astype("<f8").tobytes())
        h.update(struct.pack("<d", self.fps))
        return h.hexdigest()


@dataclass(eq=False)
class FeatureMap:
    """Per-frame, per-vertex contact probability and expected contact class."""

    contact: np.ndarray
    semantic: np.ndarray

    def __post_init__(self) -> None:
        self.contact = np.ascontiguousarray(self.contact, dtype=np.float64)
        self.semantic = np.ascontiguousarray(self.semantic, dtype=np.int64)
        if self.contact.ndim != 2 or self.contact.shape != self.semantic.shape:
            raise FormatError(
                f"contact {self.contact.shape} and semantic {self.semantic.shape} must be equal 2-D shapes"
            )
        if not np.all(np.isfinite(self.contact)) or self.contact.min() < 0.0 or self.contact.max() > 1.0:
            raise ValidationError("contact values must lie in [0, 1]")
        self.contact.setflags(write=False)
        self.semantic.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.contact.shape

    def validate(self, anim: Animation, vocab: SemanticVocabulary) -> "FeatureMap":
        if self.shape != (anim.n_frames, anim.n_vertices):
            raise FormatError(
                f"features are {self.shape}, animation is ({anim.n_frames}, {anim.n_vertices})"
            )
        if self.semantic.min() < 0 or self.semantic.max() >= len(vocab):
            raise ValidationError(f"semantic ids must lie in 0..{len(vocab) - 1}")
        return self

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.contact.astype("<f8").tobytes())
        h.update(self.semantic.astype("<i8").tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# binary I/O
# ---------------------------------------------------------------------------


def save_animation(anim: Animation, path) -> None:
    n, v = anim.n_frames, anim.n_vertices
    with open(path, "wb") as fh:
        fh.write(ANIM_MAGIC)
        fh.write(_ANIM_HEADER.pack(n, v, len(anim.topology), anim.fps))
        fh.write(anim.topology.astype("<u4").tobytes())
        for i in range(n):
            fh.write(anim.vertices[i].astype("<f4").tobytes())
            fh.write(anim.pelvis[i].astype("<f4").tobytes())


def load_animation(path) -> Animation:
    data = Path(path).read_bytes()
    if data[:8] != ANIM_MAGIC:
        raise FormatError(f"{path}: not a PAAKANM1 file")
    n, v, t, fps = _ANIM_HEADER.unpack_from(data, 8)
    if not fps > 0:
        raise FormatError(f"{path}: fps must be positive, got {fps}")
    off = 8 + _ANIM_HEADER.size
    topo_bytes = 12 * t
    frame_bytes = 12 * (v + 1)
    body = len(data) - off - topo_bytes
    if body < 0:
        raise FormatError(f"{path}: topology truncated")
    if body != n * frame_bytes:
        complete = max(body, 0) // frame_bytes
        raise FormatError(
            f"{path}: frame {min(complete, n - 1)} does not hold {v} vertices "
            f"({body} frame bytes for {n} frames of {frame_bytes})"
        )
    topology = np.frombuffer(data, "<u4", 3 * t, off).reshape(t, 3).astype(np.int64)
    frames = np.frombuffer(data, "<f4", n * 3 * (v + 1), off + topo_bytes).reshape(n, v + 1, 3)
    return Animation(topology, frames[:, :v].astype(np.float64), frames[:, v].astype(np.float64), fps)


def save_features(features: FeatureMap, path) -> None:
    n, v = features.shape
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC)
        fh.write(_FEAT_HEADER.pack(n, v))
        fh.write(features.contact.astype("<f4").tobytes())
        fh.write(features.semantic.astype("<u2").tobytes())


def load_features(path) -> FeatureMap:
    data = Path(path).read_bytes()
    if data[:8] != FEAT_MAGIC:
        raise FormatError(f"{path}: not a PAAKFTR1 file")
    n, v = _FEAT_HEADER.unpack_from(data, 8)
    off = 8 + _FEAT_HEADER.size
    if len(data) != off + 6 * n * v:
        raise FormatError(f"{path}: expected {off + 6 * n * v} bytes, found {len(data)}")
    contact = np.frombuffer(data, "<f4", n * v, off).reshape(n, v).astype(np.float64)
    semantic = np.frombuffer(data, "<u2", n * v, off + 4 * n * v).reshape(n, v).astype(np.int64)
    return FeatureMap(contact, semantic)


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def vertex_normals(vertices: np.ndarray, topology: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals for one frame (zero for isolated vertices)."""
    c = vertices[topology]
    fn = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    vn = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(vn, topology[:, k], fn)
    norm = np.linalg.norm(vn, axis=1, keepdims=True)
    return np.divide(vn, norm, out=np.zeros_like(vn), where=norm > 0)


def heuristic_features(anim: Animation, vocab: SemanticVocabulary, seat_class: str = "chair") -> FeatureMap:
    """Crude stand-in for a learned contact/semantic estimator.

    Contact decays exponentially with height above the frame's lowest
    vertex. Near-ground vertices expect the floor; in frames where the
    pelvis sits low, downward-facing vertices near the pelvis expect a
    seat; everything else is labeled ``object``.
    """
    floor = vocab.floor_id
    seat = vocab.id_of(seat_class)
    other = vocab.id_of("object") if "object" in vocab.names else floor
    low = anim.vertices[:, :, 2].min(axis=1)
    height = anim.vertices[:, :, 2] - low[:, None]
    contact = np.clip(np.exp(-height / HEURISTIC_CONTACT_SCALE), 0.0, 1.0)

    pelvis_h = anim.pelvis[:, 2] - low
    low_pelvis = pelvis_h < HEURISTIC_LOW_PELVIS * pelvis_h.max()
    semantic = np.full(height.shape, other, dtype=np.int64)
    for i in np.flatnonzero(low_pelvis):
        normals = vertex_normals(anim.vertices[i], anim.topology)
        near = np.linalg.norm(anim.vertices[i] - anim.pelvis[i], axis=1) < HEURISTIC_TORSO_RADIUS
        semantic[i, near & (normals[:, 2] < -0.5)] = seat
    semantic[height < HEURISTIC_FOOT_HEIGHT] = floor
    return FeatureMap(contact, semantic)


def estimate_features(anim: Animation, source, vocab: SemanticVocabulary | None = None) -> FeatureMap:
    """Per-vertex interaction features from a feature file or the built-in heuristic.

    ``source`` is a path to a PAAKFTR1 file, an in-memory FeatureMap, or the
    string ``"heuristic"``.
    """
    vocab = vocab or SemanticVocabulary.default()
    if isinstance(source, FeatureMap):
        features = source
    elif isinstance(source, str) and source == "heuristic":
        features = heuristic_features(anim, vocab)
    else:
        features = load_features(source)
    return features.validate(anim, vocab)


# ---------------------------------------------------------------------------
# rigid placement
# ---------------------------------------------------------------------------


def yaw_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def transform(anim: Animation, pose: PlacementPose) -> Animation:
    """Rotate by yaw about the vertical through the first-frame pelvis, then translate."""
    center = anim.rotation_center
    rot = yaw_matrix(pose.theta)
    shift = center + np.asarray(pose.tau)
    verts = (anim.vertices - center) @ rot.T + shift
    pelvis = (anim.pelvis - center) @ rot.T + shift
    return Animation(anim.topology, verts, pelvis, anim.fps)


def synth_animation(kind: str, params=None) -> Animation:
    """Procedural capsule-person clip; see :mod:`paak.body`."""
    from .body import SynthParams, synth_clip

    return synth_clip(kind, params or SynthParams()).animation
