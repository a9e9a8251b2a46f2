"""Dense layers, LSTM cells/stacks and the MLP baseline, all in plain numpy.

Layers register their weights in a shared :class:`~foodchain.numerics.ParamSet`
under a name prefix. ``forward`` returns the output and a cache;
``backward`` takes the upstream gradient and the cache, accumulates into the
parameter gradient slots and returns the gradient w.r.t. the layer input.

Batched sequences are laid out ``(batch, time, features)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .numerics import DTYPE, ParamSet, role_rng, xavier_uniform


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Dense:
    """Affine map with an optional ReLU or tanh activation."""

    ACTIVATIONS = ("linear", "relu", "tanh")

    def __init__(self, params: ParamSet, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, activation: str = "linear"):
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.params, self.name = params, name
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        params.add(f"{name}.W", xavier_uniform(rng, n_in, n_out))
        params.add(f"{name}.b", np.zeros(n_out))

    @property
    def W(self):
        return self.params[f"{self.name}.W"]

    @property
    def b(self):
        return self.params[f"{self.name}.b"]

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"{self.name}: expected {self.n_in} input features, got {x.shape[-1]}")
        z = x @ self.W + self.b
        if self.activation == "relu":
            out = np.maximum(z, 0.0)
        elif self.activation == "tanh":
            out = np.tanh(z)
        else:
            out = z
        return out, (x, out)

    def backward(self, dout, cache):
        x, out = cache
        if self.activation == "relu":
            dz = dout * (out > 0)
        elif self.activation == "tanh":
            dz = dout * (1.0 - out ** 2)
        else:
            dz = dout
        x2 = x.reshape(-1, self.n_in)
        dz2 = dz.reshape(-1, self.n_out)
        self.params.grads[f"{self.name}.W"] += x2.T @ dz2
        self.params.grads[f"{self.name}.b"] += dz2.sum(axis=0)
        return dz @ self.W.T


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


class LstmLayer:
    """Vanilla LSTM layer (no peepholes). Gate blocks are ordered f, i, g, o."""

    def __init__(self, params: ParamSet, name: str, n_in: int, n_hidden: int,
                 rng: np.random.Generator, forget_bias: float = 1.0):
        if n_hidden <= 0:
            raise ValueError("hidden size must be positive")
        self.params, self.name = params, name
        self.n_in, self.n_hidden = n_in, n_hidden
        H = n_hidden
        params.add(f"{name}.W", xavier_uniform(rng, n_in, H, shape=(n_in, 4 * H)))
        params.add(f"{name}.U", xavier_uniform(rng, H, H, shape=(H, 4 * H)))
        b = np.zeros(4 * H)
        b[:H] = forget_bias
        params.add(f"{name}.b", b)

    @property
    def W(self):
        return self.params[f"{self.name}.W"]

    @property
    def U(self):
        return self.params[f"{self.name}.U"]

    @property
    def b(self):
        return self.params[f"{self.name}.b"]

    def zero_state(self, batch: int) -> LstmState:
        return LstmState(np.zeros((batch, self.n_hidden)), np.zeros((batch, self.n_hidden)))

    def step(self, x, state: LstmState) -> LstmState:
        """Single time step for a batch ``x`` of shape ``(batch, n_in)``."""
        if x.shape[-1] != self.n_in:
            raise ValueError(f"{self.name}: expected {self.n_in} input features, got {x.shape[-1]}")
        H = self.n_hidden
        a = x @ self.W + state.h @ self.U + self.b
        f = sigmoid(a[..., :H])
        i = sigmoid(a[..., H:2 * H])
        g = np.tanh(a[..., 2 * H:3 * H])
        o = sigmoid(a[..., 3 * H:])
        c = f * state.c + i * g
        return LstmState(o * np.tanh(c), c)

    def forward(self, x, state: LstmState | None = None):
        """Run the layer over ``x`` of shape ``(batch, time, n_in)``."""
        B, T, D = x.shape
        if D != self.n_in:
            raise ValueError(f"{self.name}: expected {self.n_in} input features, got {D}")
        H = self.n_hidden
        if state is None:
            state = self.zero_state(B)
        # sigmoid(z) = (1 + tanh(z / 2)) / 2, so one tanh call covers all four gates
        scale = np.full(4 * H, 0.5)
        scale[2 * H:3 * H] = 1.0
        Us = self.U * scale
        xt = np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(-1, D)
        gates = ((xt @ self.W + self.b) * scale).reshape(T, B, 4 * H)  # time-major buffers
        cs = np.empty((T, B, H))
        tcs = np.empty((T, B, H))
        hs = np.empty((T, B, H))
        h, c = state
        for t in range(T):
            gt = gates[t]
            gt += h @ Us
            np.tanh(gt, out=gt)
            gt[:, :2 * H] += 1.0
            gt[:, :2 * H] *= 0.5
            gt[:, 3 * H:] += 1.0
            gt[:, 3 * H:] *= 0.5
            c = np.multiply(gt[:, :H], c, out=cs[t])
            c += gt[:, H:2 * H] * gt[:, 2 * H:3 * H]
            np.tanh(c, out=tcs[t])
            h = np.multiply(gt[:, 3 * H:], tcs[t], out=hs[t])
        cache = (x, state, gates, cs, tcs, hs)
        return hs.transpose(1, 0, 2), LstmState(h.copy(), c.copy()), cache

    def backward(self, dhs, cache, dstate: LstmState | None = None):
        """Backpropagate through time.

        ``dhs`` is the gradient w.r.t. every hidden output; ``dstate`` the
        gradient w.r.t. the final state. Returns ``(dx, dstate0)``.
        """
        x, state0, gates, cs, tcs, hs = cache
        B, T, D = x.shape
        H = self.n_hidden
        f, i, g, o = (gates[..., k * H:(k + 1) * H] for k in range(4))
        c_prev = np.concatenate([state0.c[None], cs[:-1]], axis=0)
        # gate pre-activation derivatives: f, i, g scale with dc; o with dh
        dc_fig = np.empty((T, B, 3, H))
        dc_fig[:, :, 0] = c_prev * f * (1.0 - f)
        dc_fig[:, :, 1] = g * i * (1.0 - i)
        dc_fig[:, :, 2] = i * (1.0 - g ** 2)
        dh_o = tcs * o * (1.0 - o)
        dh_c = o * (1.0 - tcs ** 2)
        dhs_t = np.ascontiguousarray(dhs.transpose(1, 0, 2))
        UT = self.U.T.copy()
        dh_next = np.zeros((B, H)) if dstate is None else dstate.h.copy()
        dc_next = np.zeros((B, H)) if dstate is None else dstate.c.copy()
        da = np.empty((T, B, 4 * H))
        for t in reversed(range(T)):
            dh = dhs_t[t] + dh_next
            dc = dc_next + dh * dh_c[t]
            dat = da[t]
            np.multiply(dc[:, None, :], dc_fig[t], out=dat[:, :3 * H].reshape(B, 3, H))
            np.multiply(dh, dh_o[t], out=dat[:, 3 * H:])
            dh_next = dat @ UT
            dc_next = dc * f[t]
        h_prev = np.concatenate([state0.h[None], hs[:-1]], axis=0)
        da2 = da.reshape(-1, 4 * H)
        grads = self.params.grads
        grads[f"{self.name}.W"] += np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(-1, D).T @ da2
        grads[f"{self.name}.U"] += h_prev.reshape(-1, H).T @ da2
        grads[f"{self.name}.b"] += da2.sum(axis=0)
        dx = (da2 @ self.W.T).reshape(T, B, D).transpose(1, 0, 2)
        return dx, LstmState(dh_next, dc_next)


def lstm_step(layer: LstmLayer, x, state: LstmState | None = None) -> LstmState:
    x = np.asarray(x, dtype=DTYPE)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if state is None:
        state = layer.zero_state(x.shape[0])
    elif squeeze:
        state = LstmState(np.atleast_2d(state.h), np.atleast_2d(state.c))
    out = layer.step(x, state)
    if squeeze:
        out = LstmState(out.h[0], out.c[0])
    return out


class LstmStack:
    """Layers applied in sequence; layer ``l`` consumes the hidden outputs of ``l-1``."""

    def __init__(self, params: ParamSet, name: str, n_in: int, sizes, rng: np.random.Generator,
                 forget_bias: float = 1.0):
        sizes = list(sizes)
        if not sizes:
            raise ValueError("an LSTM stack needs at least one layer")
        self.layers = []
        for k, n_hidden in enumerate(sizes):
            self.layers.append(LstmLayer(params, f"{name}.{k}", n_in, n_hidden, rng, forget_bias))
            n_in = n_hidden
        self.n_out = sizes[-1]

    @property
    def sizes(self):
        return [layer.n_hidden for layer in self.layers]

    def forward(self, x, states=None):
        """Return top-layer hidden sequence, final state of every layer, cache."""
        if x.shape[1] == 0:
            raise ValueError("empty input window")
        finals, caches = [], []
        out = x
        for k, layer in enumerate(self.layers):
            out, final, cache = layer.forward(out, None if states is None else states[k])
            finals.append(final)
            caches.append(cache)
        return out, finals, caches

    def backward(self, dtop, caches, dfinals=None):
        """Returns ``(dx, dstates0)`` where ``dstates0`` lists per-layer initial-state grads."""
        dstates0 = [None] * len(self.layers)
        d = dtop
        for k in reversed(range(len(self.layers))):
            ds = None if dfinals is None else dfinals[k]
            d, dstates0[k] = self.layers[k].backward(d, caches[k], ds)
        return d, dstates0


def lstm_sequence(stack: LstmStack, inputs):
    """Run a stack over one window ``(time, features)`` or a batch of windows.

    Returns the top-layer hidden sequence and the final state of every layer.
    """
    x = np.asarray(inputs, dtype=DTYPE)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] == 0:
        raise ValueError("empty input window")
    hs, finals, _ = stack.forward(x)
    if single:
        hs = hs[0]
        finals = [LstmState(s.h[0], s.c[0]) for s in finals]
    return hs, finals


class Mlp:
    """Dense layers with ReLU hidden activations and a linear output."""

    def __init__(self, params: ParamSet, name: str, sizes, rng: np.random.Generator):
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ValueError("an MLP needs an input and an output size")
        self.layers = []
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = "linear" if k == len(sizes) - 2 else "relu"
            self.layers.append(Dense(params, f"{name}.{k}", a, b, rng, act))

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, dout, caches):
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dout = layer.backward(dout, cache)
        return dout


def mlp_predict(mlp: Mlp, features) -> np.ndarray:
    out, _ = mlp.forward(np.asarray(features, dtype=DTYPE))
    return out


class MlpRegressor:
    """Window regressor on the flattened ``(time x features)`` window."""

    def __init__(self, n_steps: int, n_features: int, hidden=(64, 64), seed: int = 0):
        self.params = ParamSet()
        self.n_steps, self.n_features = n_steps, n_features
        self.mlp = Mlp(self.params, "mlp", [n_steps * n_features, *hidden, 1], role_rng(seed, "mlp"))

    def predict(self, X):
        X = np.asarray(X, dtype=DTYPE)
        out, _ = self.mlp.forward(X.reshape(len(X), -1))
        return out[:, 0]

    def loss_grad(self, X, y):
        out, caches = self.mlp.forward(X.reshape(len(X), -1))
        err = out[:, 0] - y
        self.mlp.backward((2.0 / len(y)) * err[:, None], caches)
        return float(np.mean(err ** 2))


class LstmRegressor:
    """LSTM stack over the window, dense head on the final hidden state."""

    def __init__(self, n_features: int, sizes=(16,), seed: int = 0):
        self.n_features, self.sizes = n_features, tuple(sizes)
        self.params = ParamSet()
        self.stack = LstmStack(self.params, "predictor", n_features, sizes, role_rng(seed, "predictor"))
        self.head = Dense(self.params, "head", self.stack.n_out, 1, role_rng(seed, "head"))

    def _forward(self, X):
        hs, _, caches = self.stack.forward(X)
        out, hcache = self.head.forward(hs[:, -1])
        return out[:, 0], (hs, caches, hcache)

    def predict(self, X):
        return self._forward(np.asarray(X, dtype=DTYPE))[0]

    def loss_grad(self, X, y):
        pred, (hs, caches, hcache) = self._forward(X)
        err = pred - y
        dlast = self.head.backward((2.0 / len(y)) * err[:, None], hcache)
        dhs = np.zeros_like(hs)
        dhs[:, -1] = dlast
        self.stack.backward(dhs, caches)
        return float(np.mean(err ** 2))
