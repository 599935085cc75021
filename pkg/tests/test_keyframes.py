import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import best_next_pick
from paak.animation import Animation, FeatureMap, PlacementPose, transform
from paak.body import KINDS, SynthParams, synth_clip
from paak.errors import NoDominantClass, StructuralError, ValidationError
from paak.keyframes import (
    WeightingConfig,
    active_keyframes,
    compute_keyframes,
    diversity_from_embeddings,
    diversity_scores,
    dominant_semantic_class,
    farthest_point_order,
    geometric_keyframes,
    geometric_weights,
    model_inputs,
    motion_weights,
    semantic_weights,
)
from paak.model import KeyframeModel
from paak.scene import SemanticVocabulary

VOCAB = SemanticVocabulary.default()
FLOOR, CHAIR, TABLE = VOCAB.floor_id, VOCAB.id_of("chair"), VOCAB.id_of("table")

weights_1d = arrays(np.float64, st.integers(2, 40), elements=st.floats(0, 100))


def labels_features(counts: dict, n_frames=1):
    sem = np.concatenate([np.full(c, k) for k, c in counts.items()])
    sem = np.tile(sem, (n_frames, 1))
    return FeatureMap(np.zeros(sem.shape), sem)


def pelvis_anim(pelvis):
    pelvis = np.asarray(pelvis, dtype=np.float64)
    verts = pelvis[:, None, :] + np.array([[0, 0, 0.1], [0.1, 0, 0], [0, 0.1, 0]])
    return Animation(np.array([[0, 1, 2]]), verts, pelvis, 30.0)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_config_rejects_zero_pairs_and_negatives():
    with pytest.raises(ValidationError):
        WeightingConfig(lambda_s=0.0, lambda_m=0.0)
    with pytest.raises(ValidationError):
        WeightingConfig(lambda_g=0.0, lambda_b=0.0)
    with pytest.raises(ValidationError):
        WeightingConfig(lambda_s=-0.1)


# ---------------------------------------------------------------------------
# dominant class and semantic weights
# ---------------------------------------------------------------------------


def test_dominant_excludes_floor():
    feats = labels_features({CHAIR: 500, FLOOR: 5000, TABLE: 100})
    assert dominant_semantic_class(feats, VOCAB) == CHAIR


def test_all_floor_has_no_dominant():
    with pytest.raises(NoDominantClass):
        dominant_semantic_class(labels_features({FLOOR: 50}), VOCAB)


def test_dominant_tie_takes_smallest_id():
    feats = labels_features({TABLE: 100, CHAIR: 100, FLOOR: 300})
    assert dominant_semantic_class(feats, VOCAB) == min(CHAIR, TABLE)


def test_semantic_weight_counts():
    sem = np.full((3, 10), FLOOR)
    sem[0, :4] = CHAIR
    sem[2, :] = CHAIR
    w = semantic_weights(FeatureMap(np.zeros((3, 10)), sem), CHAIR)
    assert w.tolist() == [4.0, 0.0, 10.0]


def test_uniform_labeling_constant_semantic_weight():
    feats = labels_features({CHAIR: 3, FLOOR: 7}, n_frames=6)
    w = semantic_weights(feats, CHAIR)
    assert np.all(w == w[0])


def test_all_floor_falls_back_to_floor_class():
    anim = pelvis_anim([[0, 0, 1], [0.1, 0, 1], [0.3, 0, 1]])
    feats = FeatureMap(np.zeros((3, 3)), np.full((3, 3), FLOOR))
    kw = geometric_weights(anim, feats, VOCAB)
    assert kw.dominant == FLOOR
    assert kw.w_s.tolist() == [3.0, 3.0, 3.0]


# ---------------------------------------------------------------------------
# motion weights
# ---------------------------------------------------------------------------


def test_motion_weight_pythagoras():
    # a 3 m step is outside the Animation glitch bound, so feed the pelvis track directly
    track = SimpleNamespace(pelvis=np.array([[0.0, 0, 0], [1, 2, 2]]), n_frames=2)
    w = motion_weights(track)
    assert w.tolist() == [3.0, 3.0]
    assert motion_weights(pelvis_anim([[0, 0, 0], [0.1, 0.2, 0.2]]))[0] == pytest.approx(0.3)


def test_static_motion_all_zero():
    assert np.all(motion_weights(pelvis_anim([[0, 0, 1]] * 5)) == 0)


def test_last_motion_weight_repeats_previous():
    w = motion_weights(pelvis_anim([[0, 0, 1], [0.1, 0, 1], [0.3, 0, 1], [0.35, 0, 1]]))
    assert w[-1] == w[-2]
    assert len(w) == 4


@settings(max_examples=30, deadline=None)
@given(
    kind=st.sampled_from(KINDS),
    tx=st.floats(-5, 5),
    ty=st.floats(-5, 5),
    tz=st.floats(-1, 1),
    theta=st.floats(0, 2 * math.pi - 1e-9),
)
def test_motion_weights_rigid_invariant(kind, tx, ty, tz, theta):
    anim = synth_clip(kind).animation
    moved = transform(anim, PlacementPose((tx, ty, tz), theta))
    np.testing.assert_allclose(motion_weights(moved), motion_weights(anim), atol=1e-9)


# ---------------------------------------------------------------------------
# geometric keyframes
# ---------------------------------------------------------------------------


def test_geometric_direct_evaluation():
    k = geometric_keyframes([0, 10], [5, 0], WeightingConfig(lambda_s=0.5, lambda_m=0.5))
    np.testing.assert_allclose(k, [0.5, 0.5])


def test_geometric_all_zero_guard():
    k = geometric_keyframes(np.zeros(7), np.zeros(7))
    assert np.all(k == 0) and np.all(np.isfinite(k))


def test_geometric_single_zero_term_contributes_nothing():
    k = geometric_keyframes(np.zeros(3), [1.0, 2.0, 4.0], WeightingConfig(lambda_s=0.7, lambda_m=0.3))
    np.testing.assert_allclose(k, [0.075, 0.15, 0.3])


def test_geometric_length_mismatch():
    with pytest.raises(StructuralError):
        geometric_keyframes([1, 2], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(
    data=st.data(),
    scale_s=st.floats(1e-3, 1e3),
    scale_m=st.floats(1e-3, 1e3),
)
def test_geometric_scale_invariant(data, scale_s, scale_m):
    w_s = data.draw(weights_1d)
    w_m = data.draw(arrays(np.float64, len(w_s), elements=st.floats(0, 100)))
    base = geometric_keyframes(w_s, w_m)
    np.testing.assert_allclose(geometric_keyframes(w_s * scale_s, w_m * scale_m), base, atol=1e-12)
    np.testing.assert_allclose(geometric_keyframes(w_s * 7, w_m), base, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_geometric_bounds(data):
    w_s = data.draw(weights_1d)
    w_m = data.draw(arrays(np.float64, len(w_s), elements=st.floats(0, 100)))
    cfg = WeightingConfig()
    k = geometric_keyframes(w_s, w_m, cfg)
    assert np.all(k >= 0)
    assert np.all(k <= cfg.lambda_s + cfg.lambda_m + 1e-12)


@pytest.mark.parametrize("kind", ["sit", "walk_then_sit"])
@pytest.mark.parametrize("seed", range(4))
def test_argmax_in_sit_segment(kind, seed):
    clip = synth_clip(kind, SynthParams(seed=seed, idle=0.3 * (seed % 2)))
    kw = geometric_weights(clip.animation, clip.features(VOCAB), VOCAB)
    assert kw.dominant == CHAIR
    assert clip.sit_mask[int(np.argmax(kw.k_g))]
    # every seated frame outweighs every non-seated one
    assert kw.k_g[clip.sit_mask].min() > kw.k_g[~clip.sit_mask].max()


# ---------------------------------------------------------------------------
# model forward
# ---------------------------------------------------------------------------


def test_zero_model_outputs_half():
    model = KeyframeModel.zeros(5, 6, 4, 3, 4, 5)
    x = np.random.default_rng(0).normal(size=(5, 6, 4))
    k, hidden = model.forward(x)
    np.testing.assert_array_equal(k, np.full(5, 0.5))
    assert hidden.shape == (5, 4)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 8), v=st.integers(1, 6), f=st.integers(1, 5), seed=st.integers(0, 1000))
def test_output_length_is_window(n, v, f, seed):
    model = KeyframeModel.init(n, v, f, 3, 4, 5, seed=seed)
    k, hidden = model.forward(np.random.default_rng(seed).normal(size=(n, v, f)))
    assert k.shape == (n,)
    assert hidden.shape == (n, 4)
    assert np.all((k > 0) & (k < 1))


def test_forward_shape_mismatch():
    model = KeyframeModel.init(4, 8, 5)
    with pytest.raises(StructuralError):
        model.forward(np.zeros((4, 7, 5)))


def test_vertex_permutation_changes_hidden():
    model = KeyframeModel.init(4, 8, 5, 4, 4, 4, seed=1)
    x = np.random.default_rng(2).normal(size=(4, 8, 5))
    _, h = model.forward(x)
    _, hp = model.forward(x[:, ::-1])
    assert not np.allclose(h, hp)


def test_model_inputs_layout():
    clip = synth_clip("sit")
    feats = clip.features(VOCAB)
    x = model_inputs(clip.animation, feats, len(VOCAB), 60)
    assert x.shape == (60, clip.animation.n_vertices, 4 + len(VOCAB))
    np.testing.assert_allclose(x[..., :3], clip.animation.vertices - clip.animation.pelvis[:, None])
    np.testing.assert_array_equal(x[..., 3], feats.contact)
    np.testing.assert_array_equal(x[..., 4:].argmax(-1), feats.semantic)
    # a shorter window resamples
    assert model_inputs(clip.animation, feats, len(VOCAB), 20).shape[0] == 20


# ---------------------------------------------------------------------------
# diversity
# ---------------------------------------------------------------------------


def test_identical_frames_rank_by_index():
    w = diversity_from_embeddings(np.ones((5, 3)))
    np.testing.assert_allclose(w, [1.0, 0.75, 0.5, 0.25, 0.0])


def test_single_frame_diversity_is_one():
    assert diversity_from_embeddings(np.ones((1, 4))).tolist() == [1.0]


def two_clusters(rng, spread=0.05):
    a = rng.normal(scale=spread, size=(3, 4)) + np.array([2.0, 0, 0, 0])
    b = rng.normal(scale=spread, size=(3, 4)) + np.array([0, -1.0, 0, 0])
    emb = np.concatenate([a, b])
    perm = rng.permutation(6)
    return emb[perm], (perm < 3)


@pytest.mark.parametrize("seed", range(10))
def test_two_clusters_second_pick_opposite(seed):
    emb, in_a = two_clusters(np.random.default_rng(seed))
    order = farthest_point_order(emb)
    assert in_a[order[0]] != in_a[order[1]]
    # every pick agrees with an exhaustive farthest-point search
    for r in range(1, 6):
        assert order[r] in best_next_pick(emb, list(order[:r]))
    assert order[0] == int(np.argmax(np.linalg.norm(emb, axis=1)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)), elements=st.floats(-10, 10)))
def test_ranks_form_permutation(emb):
    n = len(emb)
    w = diversity_from_embeddings(emb)
    np.testing.assert_allclose(np.sort(w), np.arange(n) / (n - 1), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 15), st.integers(1, 4)), elements=st.floats(-10, 10)))
def test_farthest_point_matches_brute_force(emb):
    assume(len(np.unique(emb, axis=0)) == len(emb))
    order = farthest_point_order(emb)
    assert sorted(order.tolist()) == list(range(len(emb)))
    for r in range(1, len(emb)):
        assert order[r] in best_next_pick(emb, list(order[:r]))


def test_diversity_scores_deterministic():
    model = KeyframeModel.init(6, 5, 4, 3, 4, 5, seed=3)
    x = np.random.default_rng(1).normal(size=(6, 5, 4))
    a = diversity_scores(model, x)
    np.testing.assert_array_equal(a, diversity_scores(model, x))
    np.testing.assert_allclose(np.sort(a), np.arange(6) / 5)


# ---------------------------------------------------------------------------
# active keyframes
# ---------------------------------------------------------------------------


def test_active_projections():
    k_hat, w_d = np.array([0.2, 0.8, 0.5]), np.array([1.0, 0.0, 0.5])
    np.testing.assert_allclose(active_keyframes(k_hat, w_d, WeightingConfig(lambda_g=1, lambda_b=0)), k_hat)
    np.testing.assert_allclose(active_keyframes(k_hat, w_d, WeightingConfig(lambda_g=0, lambda_b=1)), w_d)


def test_active_arithmetic():
    k = active_keyframes([0.2, 0.8], [1.0, 0.0], WeightingConfig(lambda_g=0.5, lambda_b=0.5))
    np.testing.assert_allclose(k, [0.6, 0.4])


def test_compute_keyframes_modes():
    clip = synth_clip("walk_then_sit", SynthParams(seed=2))
    feats = clip.features(VOCAB)
    kw = compute_keyframes(clip.animation, feats, VOCAB)
    np.testing.assert_array_equal(kw.for_mode("uniform"), np.ones(clip.animation.n_frames))
    with pytest.raises(ValidationError):
        kw.for_mode("active")
    x = model_inputs(clip.animation, feats, len(VOCAB), 30)
    model = KeyframeModel.init(30, x.shape[1], x.shape[2], 4, 8, 8, seed=0)
    kw = compute_keyframes(clip.animation, feats, VOCAB, model=model)
    assert kw.k_a.shape == (clip.animation.n_frames,)
    assert kw.w_d.min() >= 0 and kw.w_d.max() <= 1
    with pytest.raises(ValidationError):
        kw.for_mode("bogus")
