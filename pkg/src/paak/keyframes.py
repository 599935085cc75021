"""Per-frame keyframe weights: geometric, learned, diversity and active."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .animation import Animation, FeatureMap
from .errors import NoDominantClass, StructuralError, ValidationError
from .model import KeyframeModel
from .scene import SemanticVocabulary

MODES = ("uniform", "geometric", "active")


@dataclass(frozen=True)
class WeightingConfig:
    lambda_s: float = 0.7
    lambda_m: float = 0.3
    lambda_g: float = 0.7
    lambda_b: float = 0.3

    def __post_init__(self) -> None:
        if min(self.lambda_s, self.lambda_m, self.lambda_g, self.lambda_b) < 0:
            raise ValidationError("weighting lambdas must be non-negative")
        if self.lambda_s + self.lambda_m <= 0 or self.lambda_g + self.lambda_b <= 0:
            raise ValidationError("each lambda pair needs a positive sum")


@dataclass(eq=False)
class KeyframeWeights:
    w_s: np.ndarray
    w_m: np.ndarray
    k_g: np.ndarray
    k_hat_g: np.ndarray | None = None
    w_d: np.ndarray | None = None
    k_a: np.ndarray | None = None
    dominant: int | None = None

    def for_mode(self, mode: str) -> np.ndarray:
        """Per-frame placement weights for ``uniform``, ``geometric`` or ``active`` mode."""
        if mode == "uniform":
            return np.ones_like(self.k_g)
        if mode == "geometric":
            return self.k_g
        if mode == "active":
            if self.k_a is None:
                raise ValidationError("active weights were not computed (no model)")
            return self.k_a
        raise ValidationError(f"unknown weighting mode {mode!r}; expected one of {MODES}")

    def to_json(self) -> dict:
        out = {"dominant": self.dominant}
        for k in ("w_s", "w_m", "k_g", "k_hat_g", "w_d", "k_a"):
            arr = getattr(self, k)
            out[k] = None if arr is None else [float(x) for x in arr]
        return out


# ---------------------------------------------------------------------------
# geometric weights
# ---------------------------------------------------------------------------


def dominant_semantic_class(features: FeatureMap, vocab: SemanticVocabulary) -> int:
    """Most frequent non-floor semantic label; ties go to the smallest id."""
    counts = np.bincount(features.semantic.ravel(), minlength=len(vocab))
    counts[vocab.floor_id] = 0
    if counts.max() == 0:
        raise NoDominantClass("every semantic label is the floor class")
    return int(np.argmax(counts))


def semantic_weights(features: FeatureMap, dominant: int) -> np.ndarray:
    """Count of vertices per frame whose label equals ``dominant``."""
    return (features.semantic == dominant).sum(axis=1).astype(np.float64)


def motion_weights(anim: Animation) -> np.ndarray:
    """Pelvis displacement to the next frame; the last frame repeats its predecessor."""
    if anim.n_frames < 2:
        raise ValidationError("motion weights need at least 2 frames")
    step = np.linalg.norm(np.diff(anim.pelvis, axis=0), axis=1)
    return np.append(step, step[-1])


def _max_normalized(w: np.ndarray) -> np.ndarray:
    top = float(np.max(w)) if len(w) else 0.0
    if top <= 0.0:
        return np.zeros_like(w, dtype=np.float64)
    return np.asarray(w, dtype=np.float64) / top


def geometric_keyframes(w_s, w_m, config: WeightingConfig = WeightingConfig()) -> np.ndarray:
    w_s = np.asarray(w_s, dtype=np.float64)
    w_m = np.asarray(w_m, dtype=np.float64)
    if w_s.shape != w_m.shape:
        raise StructuralError(f"w_s {w_s.shape} and w_m {w_m.shape} differ in length")
    return config.lambda_s * _max_normalized(w_s) + config.lambda_m * _max_normalized(w_m)


def geometric_weights(
    anim: Animation, features: FeatureMap, vocab: SemanticVocabulary, config: WeightingConfig = WeightingConfig()
) -> KeyframeWeights:
    try:
        dominant = dominant_semantic_class(features, vocab)
    except NoDominantClass:
        dominant = vocab.floor_id
    w_s = semantic_weights(features, dominant)
    w_m = motion_weights(anim)
    return KeyframeWeights(w_s, w_m, geometric_keyframes(w_s, w_m, config), dominant=dominant)


# ---------------------------------------------------------------------------
# model inputs and window resampling
# ---------------------------------------------------------------------------


def _window_coords(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = np.linspace(0.0, n_src - 1, n_dst)
    i0 = np.minimum(np.floor(t).astype(np.int64), n_src - 1)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, t - i0


def resample_frames(values: np.ndarray, n: int) -> np.ndarray:
    """Linear resampling along axis 0 to ``n`` samples."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == n:
        return values.copy()
    i0, i1, a = _window_coords(len(values), n)
    a = a.reshape((-1,) + (1,) * (values.ndim - 1))
    return values[i0] * (1 - a) + values[i1] * a


def model_inputs(anim: Animation, features: FeatureMap, n_classes: int, n: int) -> np.ndarray:
    """Per-vertex inputs (n, v, 3 + 1 + C): pelvis-relative position, contact, one-hot class."""
    rel = resample_frames(anim.vertices - anim.pelvis[:, None, :], n)
    contact = resample_frames(features.contact, n)
    if anim.n_frames == n:
        sem = features.semantic
    else:
        i0, i1, a = _window_coords(anim.n_frames, n)
        sem = features.semantic[np.where(a < 0.5, i0, i1)]
    onehot = np.eye(n_classes)[sem]
    return np.concatenate([rel, contact[..., None], onehot], axis=-1)


def model_forward(model: KeyframeModel, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """k_hat (n,) in (0, 1) and the per-frame hidden embedding (n, m2) for one window."""
    return model.forward(inputs)


# ---------------------------------------------------------------------------
# diversity and active weights
# ---------------------------------------------------------------------------


def farthest_point_order(emb: np.ndarray) -> np.ndarray:
    """Greedy farthest-point traversal of every row of ``emb``.

    The first pick has the largest norm; each later pick maximizes the
    distance to the closest already-picked row. Ties go to the lowest index.
    """
    emb = np.asarray(emb, dtype=np.float64)
    n = len(emb)
    order = np.empty(n, dtype=np.int64)
    first = int(np.argmax(np.linalg.norm(emb, axis=1)))
    order[0] = first
    picked = np.zeros(n, dtype=bool)
    picked[first] = True
    min_d = np.linalg.norm(emb - emb[first], axis=1)
    for r in range(1, n):
        cand = np.where(picked, -np.inf, min_d)
        nxt = int(np.argmax(cand))
        order[r] = nxt
        picked[nxt] = True
        min_d = np.minimum(min_d, np.linalg.norm(emb - emb[nxt], axis=1))
    return order


def diversity_from_embeddings(emb: np.ndarray) -> np.ndarray:
    """Rank-based diversity: first pick 1.0, last pick 0.0, linear in between."""
    n = len(emb)
    if n == 1:
        return np.ones(1)
    order = farthest_point_order(emb)
    w = np.empty(n)
    w[order] = (n - 1 - np.arange(n)) / (n - 1)
    return w


def diversity_scores(model: KeyframeModel, inputs: np.ndarray) -> np.ndarray:
    """Diversity weight per window frame from prediction-scaled hidden embeddings."""
    k_hat, hidden = model.forward(inputs)
    return diversity_from_embeddings(k_hat[:, None] * hidden)


def active_keyframes(k_hat_g, w_d, config: WeightingConfig = WeightingConfig()) -> np.ndarray:
    k_hat_g = np.asarray(k_hat_g, dtype=np.float64)
    w_d = np.asarray(w_d, dtype=np.float64)
    if k_hat_g.shape != w_d.shape:
        raise StructuralError("k_hat_g and w_d differ in length")
    return config.lambda_g * k_hat_g + config.lambda_b * w_d


def compute_keyframes(
    anim: Animation,
    features: FeatureMap,
    vocab: SemanticVocabulary,
    config: WeightingConfig = WeightingConfig(),
    model: KeyframeModel | None = None,
) -> KeyframeWeights:
    """Geometric weights, plus learned/diversity/active weights when a model is given.

    Animations whose length differs from the model window are resampled
    to the window and the outputs interpolated back.
    """
    kw = geometric_weights(anim, features, vocab, config)
    if model is None:
        return kw
    inputs = model_inputs(anim, features, len(vocab), model.n)
    k_hat, hidden = model.forward(inputs)
    w_d = diversity_from_embeddings(k_hat[:, None] * hidden)
    if anim.n_frames != model.n:
        k_hat = resample_frames(k_hat, anim.n_frames)
        w_d = resample_frames(w_d, anim.n_frames)
    kw.k_hat_g = k_hat
    kw.w_d = w_d
    kw.k_a = active_keyframes(k_hat, w_d, config)
    return kw


def normalized_target(k_g: np.ndarray) -> np.ndarray:
    """Regression target: k_g scaled to a maximum of 1 (all zeros stay zeros)."""
    return _max_normalized(k_g)


def config_dict(config: WeightingConfig) -> dict:
    return asdict(config)
