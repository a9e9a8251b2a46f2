"""Parameter containers, plain SGD, gradient checking and parameter files.

Every learned model in the package keeps its weights in a :class:`ParamSet`:
a flat, ordered mapping of names to float64 arrays with one gradient slot per
parameter. Layers write into the gradient slots during their backward pass
and :func:`sgd_step` consumes them.
"""

from __future__ import annotations

import hashlib
import io
import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

DTYPE = np.float64

PARAM_FILE_MAGIC = b"FOODCHAIN-PARAMS"
PARAM_FILE_VERSION = 1


class NonFiniteError(FloatingPointError):
    """A loss, gradient or parameter became NaN or infinite."""


def role_rng(seed: int, role: str) -> np.random.Generator:
    """Independent random stream for one named role of a seeded run.

    Streams depend only on ``(seed, role)``, so adding or removing a
    component never perturbs the initialization of the others.
    """
    key = zlib.crc32(role.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


class ParamSet:
    """Named parameter tensors with matching gradient slots and a step counter."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=DTYPE)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def size(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name, value in self.params.items():
            out.add(name, value.copy())
        out.step = self.step
        return out

    def assign(self, other: "ParamSet", prefix: str = "") -> None:
        """Copy values in place from ``other`` for every name starting with ``prefix``."""
        for name in other.names(prefix):
            if name in self.params:
                if self.params[name].shape != other.params[name].shape:
                    raise ValueError(f"shape mismatch for {name!r}")
                self.params[name][...] = other.params[name]

    def grad_norm(self, names=None) -> float:
        names = self.params.keys() if names is None else names
        return float(np.sqrt(sum(float(np.sum(self.grads[n] ** 2)) for n in names)))

    def equal(self, other: "ParamSet") -> bool:
        if list(self.params) != list(other.params):
            return False
        return all(np.array_equal(self.params[n], other.params[n]) for n in self.params)


@dataclass
class SgdConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def sgd_step(params: ParamSet, config: SgdConfig, frozen: tuple[str, ...] = ()) -> ParamSet:
    """One plain gradient-descent update, in place.

    Gradients are clipped to a global norm of ``config.clip_norm`` and then
    zeroed. Parameters whose name starts with any prefix in ``frozen`` are
    left untouched.
    """
    for name, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    names = [n for n in params.params if not n.startswith(frozen)] if frozen else list(params.params)
    scale = 1.0
    if config.clip_norm is not None:
        norm = params.grad_norm(names)
        if norm > config.clip_norm:
            scale = config.clip_norm / norm
    lr = config.learning_rate * scale
    for name in names:
        params.params[name] -= lr * params.grads[name]
    params.zero_grad()
    params.step += 1
    return params


def grad_check(
    model_loss: Callable[[ParamSet], float],
    params: ParamSet,
    epsilon: float = 1e-5,
    max_coords: int | None = 40,
    seed: int = 0,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``model_loss(params)`` must return the scalar loss and leave its analytic
    gradient in ``params.grads``. Up to ``max_coords`` coordinates per
    parameter tensor are checked (all of them when ``None``).
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    rng = np.random.default_rng(seed)

    def evaluate() -> float:
        params.zero_grad()
        value = float(model_loss(params))
        if not np.isfinite(value):
            raise NonFiniteError("loss is not finite")
        return value

    evaluate()
    analytic = {n: g.copy() for n, g in params.grads.items()}
    worst = 0.0
    for name, p in params.params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        a_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = evaluate()
            flat[i] = orig - epsilon
            down = evaluate()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = a_flat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    params.zero_grad()
    return worst


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def fit_minibatch(model, X, y, config: SgdConfig, val=None, frozen=(), log=None):
    """Minibatch SGD on ``model.loss_grad``; keeps the best-validation parameters.

    Returns ``(train_curve, val_curve, best_epoch)``. Without a validation
    set, the final parameters are kept and ``best_epoch`` is the last epoch.
    """
    rng = role_rng(config.seed, "shuffle")
    train_curve, val_curve = [], []
    best_rmse, best_epoch, best_params = np.inf, -1, None
    for epoch in range(config.epochs):
        total = 0.0
        for batch in iterate_minibatches(len(X), config.batch_size, rng):
            model.params.zero_grad()
            loss = model.loss_grad(X[batch], y[batch])
            if not np.isfinite(loss):
                raise NonFiniteError(f"training diverged at epoch {epoch}")
            total += loss * len(batch)
            sgd_step(model.params, config, frozen)
        train_curve.append(total / len(X))
        if val is not None and len(val[0]):
            pred = model.predict(val[0])
            rmse = float(np.sqrt(np.mean((pred - val[1]) ** 2)))
            val_curve.append(rmse)
            if rmse < best_rmse:
                best_rmse, best_epoch, best_params = rmse, epoch, model.params.copy()
        if log is not None:
            log(epoch, train_curve[-1], val_curve[-1] if val_curve else None)
    if best_params is not None:
        model.params.assign(best_params)
    else:
        best_epoch = config.epochs - 1
    return train_curve, val_curve, best_epoch


# parameter files: magic line, JSON header line, raw little-endian float64 payload

def dumps_params(params: ParamSet, meta: dict | None = None) -> bytes:
    payload = io.BytesIO()
    tensors = []
    offset = 0
    for name, value in params.params.items():
        raw = np.ascontiguousarray(value, dtype="<f8").tobytes()
        tensors.append({"name": name, "shape": list(value.shape), "offset": offset, "nbytes": len(raw)})
        payload.write(raw)
        offset += len(raw)
    body = payload.getvalue()
    header = {
        "version": PARAM_FILE_VERSION,
        "step": params.step,
        "tensors": tensors,
        "sha256": hashlib.sha256(body).hexdigest(),
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return PARAM_FILE_MAGIC + b"\n" + head + b"\n" + body


def loads_params(blob: bytes) -> tuple[ParamSet, dict]:
    magic, sep, rest = blob.partition(b"\n")
    if magic != PARAM_FILE_MAGIC or not sep:
        raise ValueError("not a parameter file")
    head, sep, body = rest.partition(b"\n")
    header = json.loads(head)
    if header.get("version") != PARAM_FILE_VERSION:
        raise ValueError(f"unsupported parameter file version {header.get('version')!r}")
    if hashlib.sha256(body).hexdigest() != header["sha256"]:
        raise ValueError("parameter file checksum mismatch")
    params = ParamSet()
    for t in header["tensors"]:
        raw = body[t["offset"]:t["offset"] + t["nbytes"]]
        params.add(t["name"], np.frombuffer(raw, dtype="<f8").reshape(t["shape"]))
    params.step = header["step"]
    return params, header["meta"]


def save_params(path, params: ParamSet, meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(dumps_params(params, meta))
    return path


def load_params(path) -> tuple[ParamSet, dict]:
    return loads_params(Path(path).read_bytes())
