"""Finite-difference check of the keyframe model's analytic training gradient."""

import numpy as np

from oracles import finite_difference_grad
from paak.model import PARAM_NAMES, KeyframeModel

DENOM_FLOOR = 1e-7  # below this both gradients are round-off noise


def tiny_problem(seed=0, n=4, v=8, f=5, m=4, batch=3):
    rng = np.random.default_rng(seed)
    model = KeyframeModel.init(n, v, f, m, m, m, seed=seed)
    # non-zero biases keep units active so the check sees every path
    params = {k: p + (0.1 if k.startswith("b") else 0.0) for k, p in model.params.items()}
    model = model.with_params(params)
    x = rng.normal(size=(batch, n, v, f))
    y = rng.uniform(size=(batch, n))
    return model, x, y


def max_relative_error(model: KeyframeModel, x, y, eps=1e-4) -> float:
    _, grad = model.loss_and_grad(x, y)
    flat0 = model.flat_params()
    analytic = np.concatenate([grad[k].ravel() for k in PARAM_NAMES])

    def loss_at(flat):
        return model.with_params(model.unflatten(flat)).loss(x, y)

    numeric = finite_difference_grad(loss_at, flat0, eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOM_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))
