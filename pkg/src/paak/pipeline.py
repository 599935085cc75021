"""End-to-end runs: features, keyframe weights, placement and plausibility.

A :class:`PipelineConfig` carries every tunable with a default. It loads from
TOML (top-level keys plus ``[weighting]``, ``[loss]``, ``[place]`` and
``[train]`` tables) and is echoed into every artifact together with content
hashes of the inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .animation import Animation, FeatureMap, estimate_features, load_animation, transform
from .body import N_VERTICES
from .errors import PaakError, ValidationError
from .keyframes import MODES, KeyframeWeights, WeightingConfig, compute_keyframes
from .metrics import DEFAULT_CONTACT_THRESHOLD, PlausibilityReport, plausibility
from .model import KeyframeModel, load_model, save_model
from .placement import LossConfig, PlaceConfig, PlacementResult, place
from .scene import DEFAULT_CELL_SIZE, SceneModel, load_recipe, load_scene, synth_scene

logger = logging.getLogger(__name__)

RESULT_NAME = "result.json"
REPORT_NAME = "report.json"


class PipelineError(PaakError):
    """A stage failed; the message names the stage and the offending input."""


@dataclass(frozen=True)
class TrainConfig:
    count: int = 48
    epochs: int = 150
    lr: float = 1e-3
    batch_size: int = 8
    m1: int = 8
    m2: int = 32
    m3: int = 64
    window: int = 60


@dataclass(frozen=True)
class PipelineConfig:
    scene: str | None = None  # OBJ (with sidecar labels) or a scene recipe (.toml / .json)
    labels: str | None = None
    animation: str | None = None
    features: str = "heuristic"  # PAAKFTR1 path or "heuristic"
    model: str | None = None  # active mode without a model trains (and caches) the default one
    mode: str = "active"
    out_dir: str = "paak-out"
    seed: int = 0
    jobs: int = 1
    cache_dir: str | None = ".paak-cache"
    cell_size: float = DEFAULT_CELL_SIZE
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD
    weighting: WeightingConfig = field(default_factory=WeightingConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    place: PlaceConfig = field(default_factory=PlaceConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.cell_size > 0:
            raise ValidationError("cell_size must be positive")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")

    def to_json(self) -> dict:
        """Resolved settings for provenance; the output directory is left out so that
        runs differing only in where they write produce identical artifacts."""
        out = asdict(self)
        del out["out_dir"]
        out["place"]["steps"] = list(self.place.steps)
        out["place"]["min_steps"] = list(self.place.min_steps)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        nested = {"weighting": WeightingConfig, "loss": LossConfig, "place": PlaceConfig, "train": TrainConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in doc.items():
            if key in nested:
                sub = dict(value)
                for k in ("steps", "min_steps"):
                    if k in sub:
                        sub[k] = tuple(float(x) for x in sub[k])
                sub_known = {f.name for f in fields(nested[key])}
                bad = set(sub) - sub_known
                if bad:
                    raise ValidationError(f"unknown keys in [{key}]: {sorted(bad)}")
                kwargs[key] = nested[key](**sub)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Replace top-level fields; ``place_*``/``loss_*``/``weighting_*``/``train_*`` reach into tables."""
        top, tables = {}, {}
        for key, value in overrides.items():
            if value is None:
                continue
            head, _, rest = key.partition("_")
            if head in ("place", "loss", "weighting", "train") and rest:
                tables.setdefault(head, {})[rest] = value
            else:
                top[key] = value
        for head, sub in tables.items():
            top[head] = replace(getattr(self, head), **sub)
        return replace(self, **top)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"config: {path}: no such file")
    return PipelineConfig.from_dict(load_recipe(path))


# ---------------------------------------------------------------------------
# hashing and artifact writing
# ---------------------------------------------------------------------------


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dumps(doc) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(doc, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


# ---------------------------------------------------------------------------
# stage helpers
# ---------------------------------------------------------------------------


def _stage(name: str, path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except (PaakError, OSError, ValueError, KeyError) as exc:
        raise PipelineError(f"{name}: {path}: {exc}") from exc


def open_scene(path, labels=None, *, cell_size: float = DEFAULT_CELL_SIZE, cache_dir=None) -> SceneModel:
    """Scene from an OBJ (plus sidecar labels) or from a recipe file."""
    path = Path(path)
    if path.suffix.lower() in (".toml", ".json"):
        return synth_scene(load_recipe(path), cell_size=cell_size, cache_dir=cache_dir)
    return load_scene(path, labels, cell_size=cell_size, cache_dir=cache_dir)


def scene_input_hash(path, labels=None) -> str:
    path = Path(path)
    h = hashlib.sha256(path.read_bytes())
    if path.suffix.lower() not in (".toml", ".json"):
        from .scene import default_labels_path

        h.update(Path(labels or default_labels_path(path)).read_bytes())
    return h.hexdigest()


def default_model_key(config: PipelineConfig, vocab_names: list[str], n_vertices: int) -> str:
    doc = {
        "train": asdict(config.train),
        "weighting": asdict(config.weighting),
        "seed": config.seed,
        "vocab": vocab_names,
        "vertices": n_vertices,
    }
    return hashlib.sha256(dumps(doc).encode()).hexdigest()[:32]


def default_model(config: PipelineConfig, vocab) -> KeyframeModel:
    """Keyframe model trained on the seeded synthetic set, cached under ``cache_dir``."""
    from .suite import train_default_model

    cache = None
    if config.cache_dir is not None:
        cache = Path(config.cache_dir) / f"model-{default_model_key(config, vocab.names, N_VERTICES)}.bin"
        if cache.exists():
            return load_model(cache)
    t = config.train
    logger.info("training default keyframe model (%d clips, %d epochs)", t.count, t.epochs)
    model, _ = train_default_model(
        seed=config.seed,
        count=t.count,
        epochs=t.epochs,
        lr=t.lr,
        batch_size=t.batch_size,
        m1=t.m1,
        m2=t.m2,
        m3=t.m3,
        vocab=vocab,
        config=config.weighting,
    )
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, cache)
    return model


def resolve_model(config: PipelineConfig, vocab, anim: Animation) -> tuple[KeyframeModel | None, str | None]:
    """Model for active mode plus its content hash (None in the other modes)."""
    if config.mode != "active":
        return None, None
    if config.model is not None:
        model = _stage("keyframes", config.model, load_model, config.model)
        digest = file_hash(config.model)
    else:
        if anim.n_vertices != N_VERTICES:
            raise PipelineError(
                f"keyframes: {config.animation}: the built-in model expects {N_VERTICES} vertices, "
                f"got {anim.n_vertices}; train one with 'paak train-model' and pass --model"
            )
        model = default_model(config, vocab)
        digest = hashlib.sha256(model.flat_params().tobytes()).hexdigest()
    if model.v != anim.n_vertices:
        raise PipelineError(f"keyframes: model has {model.v} vertices, animation has {anim.n_vertices}")
    return model, digest


# ---------------------------------------------------------------------------
# run / compare
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PipelineRun:
    result: PlacementResult
    report: PlausibilityReport
    weights: KeyframeWeights
    placed: Animation
    inputs: dict
    result_path: Path | None = None
    report_path: Path | None = None


def result_document(config: PipelineConfig, result: PlacementResult, weights: KeyframeWeights, inputs: dict) -> dict:
    doc = result.to_json()
    doc["mode"] = config.mode
    doc["keyframes"] = weights.to_json()
    doc["config"] = config.to_json()
    doc["inputs"] = inputs
    return doc


def run_pipeline(config: PipelineConfig, *, write: bool = True) -> PipelineRun:
    """features -> keyframe weights -> placement -> plausibility, writing result/report JSON."""
    if config.scene is None or config.animation is None:
        raise PipelineError("config: both 'scene' and 'animation' must be set")
    scene = _stage(
        "scene", config.scene, open_scene, config.scene, config.labels, cell_size=config.cell_size,
        cache_dir=config.cache_dir,
    )
    anim = _stage("animation", config.animation, load_animation, config.animation)
    features: FeatureMap = _stage("features", config.features, estimate_features, anim, config.features, scene.vocab)
    model, model_hash = resolve_model(config, scene.vocab, anim)
    weights = _stage("keyframes", config.animation, compute_keyframes, anim, features, scene.vocab, config.weighting, model)
    k = weights.for_mode(config.mode)
    place_cfg = replace(config.place, jobs=max(config.jobs, config.place.jobs))
    outcome = _stage("placement", config.scene, place, anim, features, k, scene, place_cfg, config.loss)
    placed = transform(anim, outcome.best.pose)
    report = plausibility(placed, scene, config.contact_threshold)

    inputs = {
        "scene": scene_input_hash(config.scene, config.labels),
        "scene_content": scene.content_hash,
        "animation": file_hash(config.animation),
        "features": features.content_hash(),
        "model": model_hash,
    }
    run = PipelineRun(outcome.best, report, weights, placed, inputs)
    if write:
        out = Path(config.out_dir)
        run.result_path = write_json(result_document(config, outcome.best, weights, inputs), out / RESULT_NAME)
        report_doc = report.to_json()
        report_doc.update(mode=config.mode, config=config.to_json(), inputs=inputs)
        run.report_path = write_json(report_doc, out / REPORT_NAME)
        logger.info("wrote %s and %s", run.result_path, run.report_path)
    return run


COMPARE_COLUMNS = ("mode", "energy", "non_collision", "contact", "scene_hash", "animation_hash")


def compare(config: PipelineConfig, modes, csv_path=None) -> list[dict]:
    """Run the pipeline once per mode (shared SDF cache) and tabulate the outcomes."""
    modes = list(modes)
    if len(modes) < 2:
        raise ValidationError("compare needs at least two modes")
    rows = []
    for mode in modes:
        cfg = replace(config, mode=mode, out_dir=str(Path(config.out_dir) / mode))
        run = run_pipeline(cfg)
        rows.append(
            {
                "mode": mode,
                "energy": repr(float(run.result.energy)),
                "non_collision": repr(float(run.report.non_collision)),
                "contact": repr(float(run.report.contact)),
                "scene_hash": run.inputs["scene"],
                "animation_hash": run.inputs["animation"],
            }
        )
    if csv_path is not None:
        path = Path(csv_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    return rows
