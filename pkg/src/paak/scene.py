"""Labeled scene meshes: vocabulary, OBJ/sidecar I/O, synthetic rooms and SDF attachment."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .geometry import (
    DEFAULT_CELL_SIZE,
    Bvh,
    SdfGrid,
    TriangleMesh,
    bake_sdf,
    box_mesh,
    build_bvh,
    load_sdf,
    save_sdf,
)

logger = logging.getLogger(__name__)

DEFAULT_CLASSES = ("floor", "wall", "chair", "sofa", "bed", "table", "object")
DEFAULT_MARGIN = 0.5
MIN_HEADROOM = 2.0


@dataclass(frozen=True)
class SemanticVocabulary:
    classes: tuple[tuple[int, str], ...]
    floor_id: int

    def __post_init__(self) -> None:
        ids = [c[0] for c in self.classes]
        names = [c[1] for c in self.classes]
        if ids != list(range(len(ids))):
            raise ValidationError(f"class ids must be dense 0..C-1, got {ids}")
        if len(set(names)) != len(names):
            raise ValidationError("class names must be unique")
        if self.floor_id not in ids:
            raise ValidationError(f"floor_id {self.floor_id} is not a class id")

    @classmethod
    def default(cls) -> "SemanticVocabulary":
        return cls.from_names(DEFAULT_CLASSES)

    @classmethod
    def from_names(cls, names, floor: str = "floor") -> "SemanticVocabulary":
        names = list(names)
        if floor not in names:
            raise ValidationError(f"vocabulary has no {floor!r} class")
        return cls(tuple(enumerate(names)), names.index(floor))

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> list[str]:
        return [c[1] for c in self.classes]

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown class {name!r}") from None

    def name_of(self, class_id: int) -> str:
        return self.classes[class_id][1]

    def to_json(self) -> dict:
        return {"classes": [{"id": i, "name": n} for i, n in self.classes], "floor_id": self.floor_id}


@dataclass(eq=False)
class SceneModel:
    mesh: TriangleMesh
    face_labels: np.ndarray
    vocab: SemanticVocabulary
    sdf: SdfGrid
    bvh: Bvh
    floor_height: float
    floor_rect: tuple[float, float, float, float]  # x0, y0, x1, y1 of floor faces

    @property
    def content_hash(self) -> str:
        return scene_hash(self.mesh, self.face_labels, self.vocab)

    @property
    def max_z(self) -> float:
        return float(self.mesh.vertices[:, 2].max())


def scene_hash(mesh: TriangleMesh, face_labels, vocab: SemanticVocabulary) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices, "<f8").tobytes())
    h.update(np.ascontiguousarray(mesh.triangles, "<i8").tobytes())
    h.update(np.ascontiguousarray(face_labels, "<i8").tobytes())
    h.update(json.dumps(vocab.to_json(), sort_keys=True).encode())
    return h.hexdigest()


def floor_height_of(mesh: TriangleMesh, face_labels, floor_id: int) -> float:
    """Modal z of floor face centroids, binned at 1 cm."""
    mask = np.asarray(face_labels) == floor_id
    if not mask.any():
        raise ValidationError("scene has no faces labeled with the floor class")
    z = mesh.centroids[mask, 2]
    bins = np.rint(z * 100.0).astype(np.int64)
    vals, counts = np.unique(bins, return_counts=True)
    mode = vals[np.argmax(counts)]
    return float(np.median(z[bins == mode]))


def _floor_rect(mesh: TriangleMesh, face_labels, floor_id: int):
    corners = mesh.corners[np.asarray(face_labels) == floor_id].reshape(-1, 3)
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def scene_bounds(mesh: TriangleMesh, floor_height: float, margin: float = DEFAULT_MARGIN):
    lo, hi = mesh.bounds()
    lo = lo - margin
    hi = hi + margin
    hi[2] = max(hi[2], floor_height + MIN_HEADROOM + margin)
    return lo, hi


def build_scene(
    mesh: TriangleMesh,
    face_labels,
    vocab: SemanticVocabulary | None = None,
    *,
    cell_size: float = DEFAULT_CELL_SIZE,
    margin: float = DEFAULT_MARGIN,
    cache_dir=None,
) -> SceneModel:
    """Validate labels, bake (or load) the scene SDF and assemble a SceneModel.

    Floor faces are usually open surfaces, so they are left out of the
    winding-number sign test; instead the half-space below the floor is
    unioned into the field as solid.
    """
    vocab = vocab or SemanticVocabulary.default()
    labels = np.asarray(face_labels, dtype=np.int64)
    if len(labels) != mesh.n_triangles:
        raise FormatError(f"{len(labels)} face labels for {mesh.n_triangles} faces")
    bad = np.flatnonzero((labels < 0) | (labels >= len(vocab)))
    if len(bad):
        raise ValidationError(f"face {int(bad[0])} has invalid label {int(labels[bad[0]])}")
    mesh = TriangleMesh(mesh.vertices, mesh.triangles, labels)
    floor_h = floor_height_of(mesh, labels, vocab.floor_id)
    bvh = build_bvh(mesh)

    sdf = None
    cache_path = None
    if cache_dir is not None:
        key = hashlib.sha256(
            f"{scene_hash(mesh, labels, vocab)}:{cell_size!r}:{margin!r}".encode()
        ).hexdigest()[:32]
        cache_path = Path(cache_dir) / f"{key}.sdf"
        if cache_path.exists():
            logger.debug("SDF cache hit %s", cache_path)
            sdf = load_sdf(cache_path)
    if sdf is None:
        sdf = bake_scene_sdf(mesh, labels, vocab, floor_h, cell_size=cell_size, margin=margin, bvh=bvh)
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            save_sdf(sdf, cache_path)

    return SceneModel(
        mesh=mesh,
        face_labels=labels,
        vocab=vocab,
        sdf=sdf,
        bvh=bvh,
        floor_height=floor_h,
        floor_rect=_floor_rect(mesh, labels, vocab.floor_id),
    )


def bake_scene_sdf(
    mesh: TriangleMesh,
    labels: np.ndarray,
    vocab: SemanticVocabulary,
    floor_height: float,
    *,
    cell_size: float = DEFAULT_CELL_SIZE,
    margin: float = DEFAULT_MARGIN,
    bvh: Bvh | None = None,
) -> SdfGrid:
    grid = bake_sdf(
        mesh,
        scene_bounds(mesh, floor_height, margin),
        cell_size,
        sign_faces=labels != vocab.floor_id,
        bvh=bvh,
    )
    z = grid.origin[2] + np.arange(grid.dims[2]) * grid.cell_size
    below = np.broadcast_to((z - floor_height)[None, None, :], grid.dims)
    values = grid.values.astype(np.float64)
    use_floor = below < values
    values = np.where(use_floor, below, values)
    sem = np.where(use_floor, vocab.floor_id, grid.semantic_ids)
    return SdfGrid(grid.origin, grid.cell_size, grid.dims, values, sem)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def read_obj(path) -> TriangleMesh:
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise FormatError(f"{path}:{lineno}: face needs at least 3 vertices")
            for k in range(1, len(idx) - 1):
                tris.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_labels(path) -> tuple[SemanticVocabulary, np.ndarray]:
    try:
        doc = json.loads(Path(path).read_text())
        classes = tuple((int(c["id"]), str(c["name"])) for c in doc["classes"])
        vocab = SemanticVocabulary(classes, int(doc["floor_id"]))
        labels = np.asarray(doc["face_labels"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed labels file ({exc})") from exc
    return vocab, labels


def write_labels(vocab: SemanticVocabulary, labels, path) -> None:
    doc = vocab.to_json()
    doc["face_labels"] = [int(x) for x in labels]
    Path(path).write_text(json.dumps(doc))


def default_labels_path(mesh_path) -> Path:
    p = Path(mesh_path)
    return p.with_name(p.stem + ".labels.json")


def load_scene(mesh_path, labels_path=None, *, cell_size: float = DEFAULT_CELL_SIZE, cache_dir=None) -> SceneModel:
    """Load an OBJ scene plus its JSON label sidecar."""
    labels_path = labels_path or default_labels_path(mesh_path)
    mesh = read_obj(mesh_path)
    vocab, labels = read_labels(labels_path)
    if len(labels) != mesh.n_triangles:
        first = min(len(labels), mesh.n_triangles)
        raise FormatError(
            f"{labels_path}: {len(labels)} labels for {mesh.n_triangles} faces "
            f"(face {first} has no matching label)"
        )
    return build_scene(mesh, labels, vocab, cell_size=cell_size, cache_dir=cache_dir)


def save_scene(mesh: TriangleMesh, labels, vocab: SemanticVocabulary, mesh_path, labels_path=None) -> None:
    write_obj(mesh, mesh_path)
    write_labels(vocab, labels, labels_path or default_labels_path(mesh_path))


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------


def recipe_mesh(recipe: dict) -> tuple[TriangleMesh, np.ndarray, SemanticVocabulary]:
    """Build the labeled mesh described by a scene recipe.

    Recipe keys: ``floor`` (``size`` [sx, sy], optional ``center`` and
    ``height``), ``objects`` (each with ``label``, ``center`` [x, y],
    ``size`` [sx, sy, sz], optional ``yaw_deg`` and ``base``), optional
    ``classes``.
    """
    vocab = SemanticVocabulary.from_names(recipe.get("classes", DEFAULT_CLASSES))
    floor = recipe.get("floor", {})
    sx, sy = (float(s) for s in floor.get("size", (4.0, 4.0)))
    if sx <= 0 or sy <= 0:
        raise ValidationError("floor size must be positive")
    cx, cy = (float(c) for c in floor.get("center", (0.0, 0.0)))
    h = float(floor.get("height", 0.0))
    verts = [
        np.array(
            [
                [cx - sx / 2, cy - sy / 2, h],
                [cx + sx / 2, cy - sy / 2, h],
                [cx + sx / 2, cy + sy / 2, h],
                [cx - sx / 2, cy + sy / 2, h],
            ]
        )
    ]
    tris = [np.array([[0, 1, 2], [0, 2, 3]])]
    labels = [np.full(2, vocab.floor_id)]
    offset = 4
    for i, obj in enumerate(recipe.get("objects", [])):
        size = np.asarray(obj["size"], dtype=np.float64)
        if size.shape != (3,) or np.any(size <= 0):
            raise ValidationError(f"object {i} ({obj.get('label')}) has non-positive size {size.tolist()}")
        base = float(obj.get("base", h))
        box = box_mesh([-size[0] / 2, -size[1] / 2, 0.0], [size[0] / 2, size[1] / 2, size[2]])
        yaw = math.radians(float(obj.get("yaw_deg", 0.0)))
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        ox, oy = (float(v) for v in obj["center"])
        v = box.vertices @ rot.T + np.array([ox, oy, base])
        verts.append(v)
        tris.append(box.triangles + offset)
        labels.append(np.full(12, vocab.id_of(obj["label"])))
        offset += len(v)
    mesh = TriangleMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(labels))
    return mesh, mesh.face_ids.copy(), vocab


def synth_scene(recipe: dict, *, cell_size: float | None = None, cache_dir=None) -> SceneModel:
    mesh, labels, vocab = recipe_mesh(recipe)
    cell = cell_size or float(recipe.get("cell_size", DEFAULT_CELL_SIZE))
    return build_scene(mesh, labels, vocab, cell_size=cell, cache_dir=cache_dir)


def load_recipe(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)
