"""Four-layer keyframe regressor with hand-written backprop.

Layer layout for a window of ``n`` frames with ``v`` vertices and ``f``
per-vertex features::

    per-vertex    f      -> m1   ReLU
    per-frame     v*m1   -> m2   ReLU   (the "hidden" frame embedding)
    animation     n*m2   -> m3   ReLU
    animation     m3     -> n    sigmoid
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, StructuralError, TrainingDivergedError

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"PAAKMDL1"
MODEL_VERSION = 1
_DIMS = struct.Struct("<I6I")
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


@dataclass(eq=False)
class KeyframeModel:
    n: int
    v: int
    f: int
    m1: int
    m2: int
    m3: int
    params: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        for name, shape in self.shapes().items():
            p = self.params.get(name)
            if p is None or p.shape != shape:
                raise StructuralError(f"parameter {name} must have shape {shape}")
            if not np.all(np.isfinite(p)):
                raise StructuralError(f"parameter {name} has non-finite entries")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            "w1": (self.f, self.m1),
            "b1": (self.m1,),
            "w2": (self.v * self.m1, self.m2),
            "b2": (self.m2,),
            "w3": (self.n * self.m2, self.m3),
            "b3": (self.m3,),
            "w4": (self.m3, self.n),
            "b4": (self.n,),
        }

    @classmethod
    def init(cls, n: int, v: int, f: int, m1: int = 8, m2: int = 32, m3: int = 64, seed: int = 0) -> "KeyframeModel":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        dims = {"w1": (f, m1), "w2": (v * m1, m2), "w3": (n * m2, m3), "w4": (m3, n)}
        params = {}
        for k, (fan_in, fan_out) in dims.items():
            params[k] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            params["b" + k[1]] = np.zeros(fan_out)
        params["w4"] *= 0.1
        return cls(n, v, f, m1, m2, m3, params)

    @classmethod
    def zeros(cls, n: int, v: int, f: int, m1: int = 8, m2: int = 32, m3: int = 64) -> "KeyframeModel":
        m = cls.init(n, v, f, m1, m2, m3)
        return m.with_params({k: np.zeros_like(p) for k, p in m.params.items()})

    def with_params(self, params: dict[str, np.ndarray]) -> "KeyframeModel":
        return KeyframeModel(self.n, self.v, self.f, self.m1, self.m2, self.m3, params)

    def copy(self) -> "KeyframeModel":
        return self.with_params({k: p.copy() for k, p in self.params.items()})

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def unflatten(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out, pos = {}, 0
        for k in PARAM_NAMES:
            shape = self.shapes()[k]
            size = int(np.prod(shape))
            out[k] = flat[pos : pos + size].reshape(shape)
            pos += size
        return out

    # -- forward / backward -------------------------------------------------

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != (self.n, self.v, self.f):
            raise StructuralError(f"input must be (B, {self.n}, {self.v}, {self.f}), got {x.shape}")
        return x

    def forward(self, x: np.ndarray, *, cache: bool = False):
        """Return ``(k_hat, hidden)`` for a batch (B, n, v, f) or a single window (n, v, f)."""
        single = np.ndim(x) == 3
        x = self._check(x)
        p = self.params
        b = x.shape[0]
        z1 = x @ p["w1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        f1 = h1.reshape(b, self.n, self.v * self.m1)
        z2 = f1 @ p["w2"] + p["b2"]
        h2 = np.maximum(z2, 0.0)
        f2 = h2.reshape(b, self.n * self.m2)
        z3 = f2 @ p["w3"] + p["b3"]
        h3 = np.maximum(z3, 0.0)
        z4 = h3 @ p["w4"] + p["b4"]
        y = 1.0 / (1.0 + np.exp(-z4))
        if cache:
            return y, h2, (x, z1, f1, z2, f2, z3, h3, y)
        if single:
            return y[0], h2[0]
        return y, h2

    def loss_and_grad(self, x: np.ndarray, target: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Mean squared error over the batch and its gradient w.r.t. every parameter."""
        y, _, (x, z1, f1, z2, f2, z3, h3, _) = self.forward(x, cache=True)
        target = np.asarray(target, dtype=np.float64).reshape(y.shape)
        p = self.params
        b = y.shape[0]
        diff = y - target
        loss = float(np.mean(diff**2))

        dz4 = (2.0 / diff.size) * diff * y * (1.0 - y)
        g = {"w4": h3.T @ dz4, "b4": dz4.sum(axis=0)}
        dz3 = (dz4 @ p["w4"].T) * (z3 > 0)
        g["w3"] = f2.T @ dz3
        g["b3"] = dz3.sum(axis=0)
        dz2 = (dz3 @ p["w3"].T).reshape(b, self.n, self.m2) * (z2 > 0)
        g["w2"] = f1.reshape(-1, self.v * self.m1).T @ dz2.reshape(-1, self.m2)
        g["b2"] = dz2.sum(axis=(0, 1))
        dz1 = (dz2 @ p["w2"].T).reshape(b, self.n, self.v, self.m1) * (z1 > 0)
        g["w1"] = x.reshape(-1, self.f).T @ dz1.reshape(-1, self.m1)
        g["b1"] = dz1.sum(axis=(0, 1, 2))
        return loss, g

    def loss(self, x: np.ndarray, target: np.ndarray) -> float:
        y, _ = self.forward(self._check(x))
        return float(np.mean((y - np.asarray(target).reshape(y.shape)) ** 2))


def train_model(
    model: KeyframeModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    *,
    epochs: int = 200,
    lr: float = 1e-3,
    batch_size: int = 8,
    seed: int = 0,
) -> tuple[KeyframeModel, list[float]]:
    """Fit ``model`` to (inputs, targets) with mini-batch Adam on the MSE.

    Returns the trained copy and the per-epoch mean training loss.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) == 0:
        raise StructuralError("training set is empty")
    if len(inputs) != len(targets):
        raise StructuralError(f"{len(inputs)} inputs for {len(targets)} targets")
    rng = np.random.default_rng(seed)
    model = model.copy()
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    s = {k: np.zeros_like(v) for k, v in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(len(inputs))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss, grad = model.loss_and_grad(inputs[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            total += loss * len(idx)
            step += 1
            for k, gk in grad.items():
                m[k] = beta1 * m[k] + (1 - beta1) * gk
                s[k] = beta2 * s[k] + (1 - beta2) * gk * gk
                mh = m[k] / (1 - beta1**step)
                sh = s[k] / (1 - beta2**step)
                model.params[k] -= lr * mh / (np.sqrt(sh) + eps)
        trace.append(total / len(inputs))
        if not np.isfinite(trace[-1]):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        logger.debug("epoch %d loss %.6f", epoch, trace[-1])
    return model, trace


def save_model(model: KeyframeModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(_DIMS.pack(MODEL_VERSION, model.n, model.v, model.f, model.m1, model.m2, model.m3))
        fh.write(model.flat_params().astype("<f8").tobytes())


def load_model(path) -> KeyframeModel:
    data = Path(path).read_bytes()
    if data[:8] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a PAAKMDL1 file")
    version, n, v, f, m1, m2, m3 = _DIMS.unpack_from(data, 8)
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    shell = KeyframeModel.zeros(n, v, f, m1, m2, m3)
    count = len(shell.flat_params())
    off = 8 + _DIMS.size
    if len(data) != off + 8 * count:
        raise FormatError(f"{path}: expected {count} parameters")
    flat = np.frombuffer(data, "<f8", count, off).copy()
    return shell.with_params(shell.unflatten(flat))
