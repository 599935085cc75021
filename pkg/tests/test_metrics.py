import numpy as np
import pytest

from paak.animation import Animation, PlacementPose, transform
from paak.body import SynthParams, synth_clip
from paak.metrics import contact_score, non_collision_score, plausibility
from paak.scene import synth_scene


@pytest.fixture(scope="module")
def box_scene():
    return synth_scene({"floor": {"size": [4, 4]}, "objects": [{"label": "table", "center": [0, 0], "size": [1, 1, 1]}]})


def cloud_anim(points_per_frame):
    verts = np.stack(points_per_frame)
    return Animation(np.zeros((0, 3), int), verts, verts.mean(axis=1), 30.0)


def test_free_space_scores_one(box_scene):
    anim = transform(synth_clip("walk").animation, PlacementPose((0.0, 1.5, 0.5), 0.0))
    per_frame, mean = non_collision_score(anim, box_scene)
    assert mean == 1.0 and np.all(per_frame == 1.0)


def test_ten_of_hundred_inside(box_scene):
    rng = np.random.default_rng(0)
    outside = rng.uniform([1.0, 1.0, 0.2], [1.8, 1.8, 1.5], size=(90, 3))
    inside = rng.uniform([-0.4, -0.4, 0.1], [0.4, 0.4, 0.9], size=(10, 3))
    free = rng.uniform([1.0, 1.0, 0.2], [1.8, 1.8, 1.5], size=(100, 3))
    per_frame, mean = non_collision_score(cloud_anim([np.concatenate([outside, inside]), free]), box_scene)
    assert per_frame.tolist() == pytest.approx([0.9, 1.0])
    assert mean == pytest.approx(0.95)


def test_standing_on_floor_full_contact(box_scene):
    anim = transform(synth_clip("walk", SynthParams(speed=0.0)).animation, PlacementPose((0.0, 1.5, 0.0), 0.0))
    per_frame, mean = contact_score(anim, box_scene)
    assert mean == 1.0


def test_levitating_no_contact(box_scene):
    anim = transform(synth_clip("walk").animation, PlacementPose((0.0, 1.5, 2.2), 0.0))
    per_frame, mean = contact_score(anim, box_scene)
    assert mean == 0.0


def test_jump_contact_per_frame():
    scene = synth_scene({"floor": {"size": [3, 3]}})
    clip = synth_clip("jump", SynthParams(jump_height=0.35))
    per_frame, _ = contact_score(clip.animation, scene, 0.02)
    lowest = clip.animation.vertices[..., 2].min(axis=1)
    assert clip.airborne.sum() >= 5
    assert not per_frame[clip.airborne].any()
    grounded = lowest < 0.005
    assert grounded.sum() >= 20
    assert per_frame[grounded].all()
    # take-off and landing transitions: contact flips exactly where the feet leave / reach the floor
    np.testing.assert_array_equal(per_frame, lowest < 0.02)


def test_report_means_and_threshold(box_scene):
    clip = synth_clip("jump")
    rep = plausibility(transform(clip.animation, PlacementPose((0.0, 1.5, 0.0), 0.0)), box_scene, 0.03)
    assert rep.contact == pytest.approx(np.mean(rep.per_frame_contact))
    assert rep.non_collision == pytest.approx(np.mean(rep.per_frame_non_collision))
    assert rep.to_json()["contact_threshold"] == 0.03
