"""Command-line interface: ``paak <subcommand> ...``.

Global flags (``--config``, ``--seed``, ``--jobs``, ``--cache-dir``) may be
given before or after the subcommand. Flags override values from the TOML
config, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .animation import (
    Animation,
    PlacementPose,
    estimate_features,
    load_animation,
    save_animation,
    save_features,
    transform,
)
from .errors import PaakError
from .geometry import TriangleMesh, save_sdf
from .keyframes import MODES, compute_keyframes
from .metrics import plausibility
from .model import KeyframeModel, load_model, save_model, train_model
from .pipeline import (
    PipelineConfig,
    PipelineError,
    compare,
    dumps,
    file_hash,
    load_config,
    open_scene,
    result_document,
    run_pipeline,
    scene_input_hash,
    write_json,
)
from .scene import SemanticVocabulary, read_labels, recipe_mesh, save_scene, write_obj

logger = logging.getLogger("paak")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
        "cache_dir": getattr(args, "cache_dir", None),
    }
    return cfg.with_overrides(**overrides)


def _vocab(labels_path) -> SemanticVocabulary:
    if labels_path is None:
        return SemanticVocabulary.default()
    vocab, _ = read_labels(labels_path)
    return vocab


def _guard(stage: str, path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except (PaakError, OSError, ValueError, KeyError) as exc:
        raise PipelineError(f"{stage}: {path}: {exc}") from exc


def _load_pose(path) -> PlacementPose:
    doc = json.loads(Path(path).read_text())
    return PlacementPose.from_json(doc.get("pose", doc))


def export_frames(anim: Animation, out_dir) -> list[Path]:
    """One OBJ per frame, for viewing in external tools."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(anim.n_frames):
        p = out / f"frame_{i:04d}.obj"
        write_obj(TriangleMesh(anim.vertices[i].astype(np.float64), anim.topology), p)
        paths.append(p)
    return paths


def _print(doc) -> None:
    sys.stdout.write(dumps(doc))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_bake_sdf(args) -> int:
    cfg = _resolve_config(args)
    cell = args.cell_size if args.cell_size is not None else cfg.cell_size
    scene = _guard("scene", args.scene, open_scene, args.scene, args.labels, cell_size=cell, cache_dir=cfg.cache_dir)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_sdf(scene.sdf, out)
    _print({"out": str(out), "dims": list(scene.sdf.dims), "cell_size": cell, "scene_hash": scene.content_hash})
    return 0


def cmd_synth(args) -> int:
    from .body import KINDS, SynthParams, synth_clip
    from .suite import booth_sit_cases, oracle_cases, plausibility_suite, room, stool

    cfg = _resolve_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.case:
        family, _, index = args.case.partition(":")
        families = {"oracle": oracle_cases, "suite": plausibility_suite, "booth": booth_sit_cases}
        if family not in families or not index.isdigit():
            raise PipelineError(f"synth: unknown case {args.case!r}; use oracle:N, suite:N or booth:N")
        cases = families[family](seed=cfg.seed, count=int(index) + 1)
        case = cases[int(index)]
        recipe, kind, params = case.recipe, case.kind, case.params
        seats = case.seat_centers
    else:
        if args.kind not in KINDS:
            raise PipelineError(f"synth: unknown clip kind {args.kind!r}; expected one of {KINDS}")
        params = SynthParams(
            duration=args.duration,
            fps=args.fps,
            speed=args.speed,
            seat_height=args.seat_height,
            idle=args.idle,
            seed=cfg.seed,
        )
        kind = args.kind
        if args.recipe:
            from .scene import load_recipe

            recipe = _guard("synth", args.recipe, load_recipe, args.recipe)
        else:
            recipe = room(4.0, stool((0.0, 0.0), seat_height=args.seat_height))
        seats = []
    clip = synth_clip(kind, params)
    mesh, labels, vocab = recipe_mesh(recipe)
    save_scene(mesh, labels, vocab, out / "scene.obj")
    (out / "scene.json").write_text(dumps(recipe))
    save_animation(clip.animation, out / "clip.anim")
    save_features(clip.features(vocab), out / "clip.ftr")
    meta = {
        "kind": kind,
        "params": {k: getattr(params, k) for k in params.__dataclass_fields__},
        "seat_centers": [list(map(float, s)) for s in seats],
        "frames": clip.animation.n_frames,
        "vertices": clip.animation.n_vertices,
    }
    write_json(meta, out / "clip.json")
    _print({"out_dir": str(out), **meta})
    return 0


def cmd_features(args) -> int:
    anim = _guard("animation", args.animation, load_animation, args.animation)
    vocab = _vocab(args.labels)
    feats = _guard("features", args.source, estimate_features, anim, args.source, vocab)
    save_features(feats, args.out)
    _print({"out": args.out, "features_hash": feats.content_hash(), "mean_contact": float(feats.contact.mean())})
    return 0


def cmd_keyframes(args) -> int:
    cfg = _resolve_config(args)
    anim = _guard("animation", args.animation, load_animation, args.animation)
    vocab = _vocab(args.labels)
    feats = _guard("features", args.features, estimate_features, anim, args.features, vocab)
    model = None
    if args.mode == "active":
        if args.model is None:
            from .pipeline import resolve_model

            model, _ = resolve_model(replace(cfg, mode="active", animation=args.animation), vocab, anim)
        else:
            model = _guard("keyframes", args.model, load_model, args.model)
    kw = _guard("keyframes", args.animation, compute_keyframes, anim, feats, vocab, cfg.weighting, model)
    doc = kw.to_json()
    doc["mode"] = args.mode
    doc["weights"] = [float(x) for x in kw.for_mode(args.mode)]
    doc["config"] = cfg.to_json()
    doc["inputs"] = {"animation": file_hash(args.animation), "features": feats.content_hash()}
    write_json(doc, args.out)
    top = int(np.argmax(doc["weights"]))
    _print({"out": args.out, "mode": args.mode, "top_frame": top})
    return 0


def _training_pairs(data_dir, vocab, cfg: PipelineConfig):
    from .keyframes import geometric_weights, model_inputs, normalized_target, resample_frames

    anims = sorted(Path(data_dir).glob("*.anim"))
    if not anims:
        raise PipelineError(f"train-model: {data_dir}: no .anim files")
    xs, ys = [], []
    for path in anims:
        ftr = path.with_suffix(".ftr")
        anim = _guard("animation", path, load_animation, path)
        src = str(ftr) if ftr.exists() else "heuristic"
        feats = _guard("features", ftr, estimate_features, anim, src, vocab)
        kw = _guard("keyframes", path, geometric_weights, anim, feats, vocab, cfg.weighting)
        xs.append(model_inputs(anim, feats, len(vocab), cfg.train.window))
        ys.append(resample_frames(normalized_target(kw.k_g), cfg.train.window))
    return np.stack(xs), np.stack(ys)


def cmd_train_model(args) -> int:
    cfg = _resolve_config(args)
    cfg = cfg.with_overrides(train_epochs=args.epochs, train_lr=args.lr, train_count=args.count)
    vocab = _vocab(args.labels)
    t = cfg.train
    if args.data:
        x, y = _training_pairs(args.data, vocab, cfg)
        model = KeyframeModel.init(x.shape[1], x.shape[2], x.shape[3], t.m1, t.m2, t.m3, seed=cfg.seed)
        model, trace = _guard(
            "train-model", args.data, train_model, model, x, y, epochs=t.epochs, lr=t.lr, batch_size=t.batch_size,
            seed=cfg.seed,
        )
    else:
        from .suite import train_default_model

        model, trace = train_default_model(
            seed=cfg.seed, count=t.count, epochs=t.epochs, lr=t.lr, batch_size=t.batch_size,
            m1=t.m1, m2=t.m2, m3=t.m3, vocab=vocab, config=cfg.weighting,
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    _print({"out": str(out), "epochs": t.epochs, "final_loss": trace[-1] if trace else None})
    return 0


def _pipeline_config(args, **extra) -> PipelineConfig:
    cfg = _resolve_config(args)
    fields = {
        "scene": getattr(args, "scene", None),
        "labels": getattr(args, "labels", None),
        "animation": getattr(args, "animation", None),
        "features": getattr(args, "features", None),
        "model": getattr(args, "model", None),
        "cell_size": getattr(args, "cell_size", None),
        "contact_threshold": getattr(args, "contact_threshold", None),
        "place_spacing": getattr(args, "spacing", None),
        "place_top_k": getattr(args, "top_k", None),
    }
    fields.update(extra)
    return cfg.with_overrides(**fields)


def cmd_place(args) -> int:
    cfg = _pipeline_config(args, mode=args.weights)
    run = run_pipeline(cfg, write=False)
    doc = result_document(cfg, run.result, run.weights, run.inputs)
    write_json(doc, args.out)
    if args.export_obj:
        export_frames(run.placed, args.export_obj)
    _print({"out": args.out, "pose": doc["pose"], "energy": doc["energy"], "evaluations": doc["evaluations"]})
    return 0


def cmd_eval(args) -> int:
    cfg = _pipeline_config(args)
    scene = _guard("scene", args.scene, open_scene, args.scene, args.labels, cell_size=cfg.cell_size,
                   cache_dir=cfg.cache_dir)
    anim = _guard("animation", args.animation, load_animation, args.animation)
    pose = _guard("eval", args.pose, _load_pose, args.pose)
    placed = transform(anim, pose)
    report = plausibility(placed, scene, cfg.contact_threshold)
    doc = report.to_json()
    doc["pose"] = pose.to_json()
    doc["config"] = cfg.to_json()
    doc["inputs"] = {
        "scene": scene_input_hash(args.scene, args.labels),
        "animation": file_hash(args.animation),
        "pose": file_hash(args.pose),
    }
    write_json(doc, args.out)
    if args.export_obj:
        export_frames(placed, args.export_obj)
    _print({"out": args.out, "non_collision": report.non_collision, "contact": report.contact})
    return 0


def _modes(text: str) -> list[str]:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise PipelineError(f"compare: unknown modes {bad}; expected a subset of {MODES}")
    return modes


def cmd_compare(args) -> int:
    cfg = _pipeline_config(args, out_dir=args.out_dir)
    rows = compare(cfg, _modes(args.modes), args.out)
    _print({"out": args.out, "rows": rows})
    return 0


def cmd_run(args) -> int:
    cfg = _pipeline_config(args, mode=args.mode, out_dir=args.out_dir)
    run = run_pipeline(cfg)
    _print(
        {
            "result": str(run.result_path),
            "report": str(run.report_path),
            "energy": run.result.energy,
            "non_collision": run.report.non_collision,
            "contact": run.report.contact,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="TOML config file")
    parser.add_argument("--seed", type=int, default=default, help="top-level random seed")
    parser.add_argument("--jobs", type=int, default=default, help="worker processes for seed refinement")
    parser.add_argument("--cache-dir", default=default, help="SDF and model cache directory")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def _scene_inputs(p: argparse.ArgumentParser, features: bool = True, optional: bool = False) -> None:
    nargs = "?" if optional else None
    p.add_argument("scene", nargs=nargs, help="scene OBJ (with .labels.json sidecar) or recipe .toml/.json")
    p.add_argument("animation", nargs=nargs, help="PAAKANM1 animation file")
    if features:
        p.add_argument("features", nargs="?", help="PAAKFTR1 features file or 'heuristic'")
    p.add_argument("--labels", help="label sidecar (default: <scene>.labels.json)")
    p.add_argument("--cell-size", type=float, help="SDF voxel size in meters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paak", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"paak {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = add("bake-sdf", cmd_bake_sdf, "bake a scene's signed distance field to a file")
    p.add_argument("scene")
    p.add_argument("--labels")
    p.add_argument("--cell-size", type=float)
    p.add_argument("--out", required=True)

    p = add("synth", cmd_synth, "write a synthetic scene, clip and ground-truth features")
    p.add_argument("--case", help="named suite case: oracle:N, suite:N or booth:N")
    p.add_argument("--kind", default="sit")
    p.add_argument("--recipe", help="scene recipe (.toml/.json); default is a stool in a 4 m room")
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--seat-height", type=float, default=0.45)
    p.add_argument("--idle", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)

    p = add("features", cmd_features, "estimate per-vertex contact and semantic features")
    p.add_argument("animation")
    p.add_argument("--source", default="heuristic", help="'heuristic' or a PAAKFTR1 file to validate")
    p.add_argument("--labels", help="label sidecar whose classes define the vocabulary")
    p.add_argument("--out", required=True)

    p = add("keyframes", cmd_keyframes, "compute per-frame keyframe weights")
    p.add_argument("animation")
    p.add_argument("features")
    p.add_argument("--mode", choices=("geometric", "active"), default="geometric")
    p.add_argument("--model", help="trained model (active mode; default: built-in model)")
    p.add_argument("--labels")
    p.add_argument("--out", required=True)

    p = add("train-model", cmd_train_model, "train the keyframe model")
    p.add_argument("--data", help="directory of .anim files with same-stem .ftr features (default: synthetic set)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--count", type=int, help="synthetic clip count when --data is absent")
    p.add_argument("--labels")
    p.add_argument("--out", default="model.bin")

    p = add("place", cmd_place, "place an animation into a scene")
    _scene_inputs(p)
    p.add_argument("--weights", choices=MODES, default="active")
    p.add_argument("--model")
    p.add_argument("--spacing", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--export-obj", help="write the placed clip as one OBJ per frame into this directory")
    p.add_argument("--out", default="result.json")

    p = add("eval", cmd_eval, "score a placement for collisions and contact")
    p.add_argument("scene")
    p.add_argument("animation")
    p.add_argument("pose", help="result.json (or a bare pose JSON)")
    p.add_argument("--labels")
    p.add_argument("--cell-size", type=float)
    p.add_argument("--contact-threshold", type=float)
    p.add_argument("--export-obj")
    p.add_argument("--out", default="report.json")

    p = add("compare", cmd_compare, "run several weighting modes and tabulate the outcomes")
    _scene_inputs(p, optional=True)
    p.add_argument("--modes", default="uniform,geometric,active")
    p.add_argument("--model")
    p.add_argument("--spacing", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--contact-threshold", type=float)
    p.add_argument("--out-dir", default="paak-out")
    p.add_argument("--out", default="compare.csv")

    p = add("run", cmd_run, "full pipeline: features, keyframes, placement, evaluation")
    _scene_inputs(p, optional=True)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--model")
    p.add_argument("--spacing", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--contact-threshold", type=float)
    p.add_argument("--out-dir")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0) or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PaakError as exc:
        print(f"paak {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"paak {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
