import numpy as np
import pytest

from gradcheck import max_relative_error, tiny_problem
from paak.errors import FormatError, StructuralError, TrainingDivergedError
from paak.model import KeyframeModel, load_model, save_model, train_model


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    model, x, y = tiny_problem(seed)
    assert max_relative_error(model, x, y) < 1e-3


def test_overfit_single_sample():
    rng = np.random.default_rng(0)
    model = KeyframeModel.init(6, 10, 5, 4, 8, 8, seed=0)
    x = rng.normal(size=(1, 6, 10, 5))
    y = rng.uniform(size=(1, 6))
    trained, trace = train_model(model, x, y, epochs=500, lr=1e-2, batch_size=1, seed=0)
    assert trained.loss(x, y) < 0.01
    assert trace[-1] < 0.01


def test_default_training_trace(default_model):
    _, trace = default_model
    assert np.all(np.isfinite(trace))
    assert trace[-1] <= trace[0]


def test_training_is_deterministic():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 4, 6, 3))
    y = rng.uniform(size=(5, 4))
    a, ta = train_model(KeyframeModel.init(4, 6, 3, 4, 4, 4, seed=1), x, y, epochs=20, seed=9)
    b, tb = train_model(KeyframeModel.init(4, 6, 3, 4, 4, 4, seed=1), x, y, epochs=20, seed=9)
    np.testing.assert_array_equal(a.flat_params(), b.flat_params())
    assert ta == tb


def test_training_does_not_mutate_input_model():
    model = KeyframeModel.init(4, 6, 3, 4, 4, 4, seed=1)
    before = model.flat_params().copy()
    rng = np.random.default_rng(0)
    train_model(model, rng.normal(size=(2, 4, 6, 3)), rng.uniform(size=(2, 4)), epochs=3)
    np.testing.assert_array_equal(model.flat_params(), before)


def test_non_finite_loss_raises():
    model = KeyframeModel.init(4, 6, 3, 4, 4, 4)
    x = np.zeros((2, 4, 6, 3))
    y = np.full((2, 4), np.nan)
    with pytest.raises(TrainingDivergedError):
        train_model(model, x, y, epochs=2)


def test_training_set_mismatch():
    model = KeyframeModel.init(4, 6, 3)
    with pytest.raises(StructuralError):
        train_model(model, np.zeros((3, 4, 6, 3)), np.zeros((2, 4)), epochs=1)


def test_parameters_must_be_finite():
    model = KeyframeModel.init(4, 6, 3)
    params = {k: p.copy() for k, p in model.params.items()}
    params["w2"][0, 0] = np.inf
    with pytest.raises(StructuralError):
        model.with_params(params)


def test_model_file_round_trip(tmp_path):
    model = KeyframeModel.init(5, 7, 4, 3, 6, 9, seed=2)
    save_model(model, tmp_path / "m.bin")
    back = load_model(tmp_path / "m.bin")
    assert (back.n, back.v, back.f, back.m1, back.m2, back.m3) == (5, 7, 4, 3, 6, 9)
    np.testing.assert_array_equal(back.flat_params(), model.flat_params())


def test_model_file_truncated(tmp_path):
    save_model(KeyframeModel.init(5, 7, 4), tmp_path / "m.bin")
    data = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "m.bin").write_bytes(data[:-8])
    with pytest.raises(FormatError):
        load_model(tmp_path / "m.bin")
