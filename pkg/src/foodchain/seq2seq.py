"""Wavelet-denoised, encoder-pretrained LSTM forecaster with additive attention.

The assembled model runs

    window -> [Haar denoise] -> [encoder embeddings ++ window] -> predictor LSTM
           -> [attention context ++ final hidden] -> dense -> scalar

where every bracketed stage can be switched off. :func:`ablate` trains the
named variants side by side on shared splits and seeds.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .numerics import DTYPE, NonFiniteError, ParamSet, SgdConfig, fit_minibatch, role_rng, sgd_step, iterate_minibatches, xavier_uniform
from .recurrent import Dense, LstmStack, MlpRegressor
from .signal import DEFAULT_SPLITS, DEFAULT_STEP_HOURS, TimeSeriesFrame, fit_apply_minmax, make_windows, wavelet_denoise


# attention ---------------------------------------------------------------

class Attention:
    """Additive attention: ``e_t = v . tanh(h_t W_h + q W_q)``, softmax over t."""

    def __init__(self, params: ParamSet, name: str, n_hidden: int, n_query: int, n_align: int,
                 rng: np.random.Generator):
        self.params, self.name = params, name
        params.add(f"{name}.Wh", xavier_uniform(rng, n_hidden, n_align))
        params.add(f"{name}.Wq", xavier_uniform(rng, n_query, n_align))
        params.add(f"{name}.v", xavier_uniform(rng, n_align, 1)[:, 0])

    def forward(self, hs, q):
        """``hs``: ``(batch, time, hidden)``; ``q``: ``(batch, query)``."""
        Wh, Wq, v = (self.params[f"{self.name}.{k}"] for k in ("Wh", "Wq", "v"))
        if hs.shape[1] == 0:
            raise ValueError("empty hidden sequence")
        u = np.tanh(hs @ Wh + (q @ Wq)[:, None, :])
        e = u @ v
        e = e - e.max(axis=1, keepdims=True)
        w = np.exp(e)
        w /= w.sum(axis=1, keepdims=True)
        ctx = np.einsum("bt,bth->bh", w, hs)
        return ctx, w, (hs, q, u, w)

    def backward(self, dctx, cache, dweights=None):
        """Returns ``(dhs, dq)``."""
        hs, q, u, w = cache
        Wh, Wq, v = (self.params[f"{self.name}.{k}"] for k in ("Wh", "Wq", "v"))
        g = self.params.grads
        dhs = w[:, :, None] * dctx[:, None, :]
        dw = np.einsum("bth,bh->bt", hs, dctx)
        if dweights is not None:
            dw = dw + dweights
        de = w * (dw - np.sum(dw * w, axis=1, keepdims=True))
        g[f"{self.name}.v"] += np.einsum("bt,bta->a", de, u)
        du = de[:, :, None] * v * (1.0 - u ** 2)
        H = hs.shape[2]
        g[f"{self.name}.Wh"] += hs.reshape(-1, H).T @ du.reshape(-1, du.shape[2])
        dsum = du.sum(axis=1)
        g[f"{self.name}.Wq"] += q.T @ dsum
        dhs += du @ Wh.T
        dq = dsum @ Wq.T
        return dhs, dq


def attention_context(hidden_sequence, query, attention: Attention):
    """Context vector and weights for one sequence ``(time, hidden)`` or a batch."""
    hs = np.asarray(hidden_sequence, dtype=DTYPE)
    q = np.asarray(query, dtype=DTYPE)
    single = hs.ndim == 2
    if single:
        hs, q = hs[None], q[None]
    ctx, w, _ = attention.forward(hs, q)
    return (ctx[0], w[0]) if single else (ctx, w)


# autoencoder -------------------------------------------------------------

class EncoderDecoder:
    """LSTM autoencoder over input windows.

    The decoder starts from the encoder's final states (layer by layer, so
    both stacks share sizes) and receives the encoder's top final hidden
    vector at every step. A per-step dense head reconstructs the input.
    """

    def __init__(self, n_features: int, sizes=(16, 8), seed: int = 0):
        self.params = ParamSet()
        self.n_features = n_features
        self.encoder = LstmStack(self.params, "encoder", n_features, sizes, role_rng(seed, "encoder"))
        self.decoder = LstmStack(self.params, "decoder", self.encoder.n_out, sizes, role_rng(seed, "decoder"))
        self.recon = Dense(self.params, "recon", self.decoder.n_out, n_features, role_rng(seed, "recon"))

    @property
    def n_embed(self):
        return self.encoder.n_out

    def _forward(self, X):
        T = X.shape[1]
        ehs, finals, ecache = self.encoder.forward(X)
        summary = finals[-1].h
        dec_in = np.repeat(summary[:, None, :], T, axis=1)
        dhs, _, dcache = self.decoder.forward(dec_in, finals)
        out, rcache = self.recon.forward(dhs)
        return out, (ehs, ecache, dcache, rcache, T)

    def reconstruct(self, X):
        return self._forward(np.asarray(X, dtype=DTYPE))[0]

    def loss_grad(self, X, y=None):
        out, (ehs, ecache, dcache, rcache, T) = self._forward(X)
        err = out - X
        loss = float(np.mean(err ** 2))
        dout = (2.0 / err.size) * err
        ddec = self.recon.backward(dout, rcache)
        ddec_in, dstates0 = self.decoder.backward(ddec, dcache)
        dsummary = ddec_in.sum(axis=1)
        dfinals = [s for s in dstates0]
        top = dfinals[-1]
        dfinals[-1] = type(top)(top.h + dsummary, top.c)
        self.encoder.backward(np.zeros_like(ehs), ecache, dfinals)
        return loss

    def predict(self, X):
        return self.reconstruct(X)


def pretrain_autoencoder(model: EncoderDecoder, X, config: SgdConfig):
    """Minimize mean squared reconstruction error; returns ``(model, per-epoch losses)``."""
    X = np.asarray(X, dtype=DTYPE)
    rng = role_rng(config.seed, "pretrain-shuffle")
    curve = []
    for epoch in range(config.epochs):
        total = 0.0
        for batch in iterate_minibatches(len(X), config.batch_size, rng):
            model.params.zero_grad()
            loss = model.loss_grad(X[batch])
            if not np.isfinite(loss):
                raise NonFiniteError(f"autoencoder pretraining diverged at epoch {epoch}")
            total += loss * len(batch)
            sgd_step(model.params, config)
        curve.append(total / len(X))
    return model, curve


# forecaster --------------------------------------------------------------

@dataclass
class ForecasterConfig:
    use_wavelet: bool = True
    use_encoder: bool = True
    use_attention: bool = True
    wavelet_levels: int = 1
    encoder_sizes: tuple = (16, 8)
    predictor_sizes: tuple = (16,)
    attention_size: int = 8
    freeze_encoder: bool = False
    encoder_skip: bool = True
    window: int = 15
    horizon_steps: int = 1
    step_hours: tuple = DEFAULT_STEP_HOURS
    splits: tuple = DEFAULT_SPLITS
    sgd: SgdConfig = field(default_factory=SgdConfig)
    pretrain: SgdConfig | None = None

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# row names follow the usual ablation table; flags are (wavelet, encoder, attention)
VARIANTS = {
    "MLP": None,
    "LSTM": (False, False, False),
    "WT-ED-LSTM": (True, True, False),
    "ED-LSTM-AM": (False, True, True),
    "WT-ED-LSTM-AM": (True, True, True),
}
OUT_OF_SCOPE_ROWS = ("SVR", "RFR")


def config_to_dict(config: ForecasterConfig) -> dict:
    return json.loads(json.dumps(asdict(config), default=list))


def config_from_dict(raw: dict) -> ForecasterConfig:
    raw = dict(raw)
    for key in ("encoder_sizes", "predictor_sizes", "step_hours", "splits"):
        if raw.get(key) is not None:
            raw[key] = tuple(raw[key])
    raw["sgd"] = SgdConfig(**raw["sgd"])
    raw["pretrain"] = SgdConfig(**raw["pretrain"]) if raw.get("pretrain") else None
    return ForecasterConfig(**raw)


def variant_config(base: ForecasterConfig, name: str) -> ForecasterConfig:
    flags = VARIANTS[name]
    if flags is None:
        return replace(base, use_wavelet=False, use_encoder=False, use_attention=False)
    wt, ed, am = flags
    return replace(base, use_wavelet=wt, use_encoder=ed, use_attention=am)


class Forecaster:
    def __init__(self, config: ForecasterConfig, n_features: int, seed: int | None = None):
        self.config = config
        seed = config.sgd.seed if seed is None else seed
        self.n_features = n_features
        self.params = ParamSet()
        n_pred_in = n_features
        self.encoder = None
        if config.use_encoder:
            self.encoder = LstmStack(self.params, "encoder", n_features, config.encoder_sizes,
                                     role_rng(seed, "encoder"))
            n_pred_in = self.encoder.n_out + (n_features if config.encoder_skip else 0)
        self.predictor = LstmStack(self.params, "predictor", n_pred_in, config.predictor_sizes,
                                   role_rng(seed, "predictor"))
        H = self.predictor.n_out
        self.attention = None
        n_head = H
        if config.use_attention:
            self.attention = Attention(self.params, "attention", H, H, config.attention_size,
                                       role_rng(seed, "attention"))
            n_head = 2 * H
        self.head = Dense(self.params, "head", n_head, 1, role_rng(seed, "head"))

    @property
    def frozen(self):
        return ("encoder.",) if self.config.use_encoder and self.config.freeze_encoder else ()

    def preprocess(self, X):
        X = np.asarray(X, dtype=DTYPE)
        if X.ndim != 3 or X.shape[2] != self.n_features:
            raise ValueError(f"expected windows of shape (n, time, {self.n_features}), got {X.shape}")
        if self.config.use_wavelet:
            X = wavelet_denoise(X, self.config.wavelet_levels, axis=1)
        return X

    def _forward(self, X):
        cache = {}
        h = X
        if self.encoder is not None:
            h, _, cache["enc"] = self.encoder.forward(h)
            if self.config.encoder_skip:
                h = np.concatenate([h, X], axis=2)
        hs, _, cache["pred"] = self.predictor.forward(h)
        last = hs[:, -1]
        z = last
        if self.attention is not None:
            ctx, _, cache["att"] = self.attention.forward(hs, last)
            z = np.concatenate([last, ctx], axis=1)
        out, cache["head"] = self.head.forward(z)
        cache["hs"] = hs
        return out[:, 0], z, cache

    def latent(self, X, preprocessed: bool = False):
        """Input of the output layer for each window."""
        X = X if preprocessed else self.preprocess(X)
        return self._forward(X)[1]

    def predict(self, X, preprocessed: bool = True):
        X = np.asarray(X, dtype=DTYPE) if preprocessed else self.preprocess(X)
        return self._forward(X)[0]

    def loss_grad(self, X, y):
        pred, z, cache = self._forward(X)
        err = pred - y
        dz = self.head.backward((2.0 / len(y)) * err[:, None], cache["head"])
        hs = cache["hs"]
        H = hs.shape[2]
        dhs = np.zeros_like(hs)
        if self.attention is not None:
            dhs_att, dq = self.attention.backward(dz[:, H:], cache["att"])
            dhs += dhs_att
            dhs[:, -1] += dz[:, :H] + dq
        else:
            dhs[:, -1] += dz
        dx = self.predictor.backward(dhs, cache["pred"])[0]
        if self.encoder is not None:
            self.encoder.backward(dx[:, :, :self.encoder.n_out], cache["enc"])
        return float(np.mean(err ** 2))

    def load_encoder(self, autoencoder: EncoderDecoder):
        if self.encoder is None:
            raise ValueError("forecaster has no encoder")
        self.params.assign(autoencoder.params, "encoder.")


def forecast(forecaster: Forecaster, window) -> float:
    """Scalar prediction for one raw (normalized, not yet denoised) window."""
    w = np.asarray(window, dtype=DTYPE)
    if w.ndim != 2:
        raise ValueError("window must be a (time, features) matrix")
    return float(forecaster.predict(w[None], preprocessed=False)[0])


# training and evaluation -------------------------------------------------

@dataclass
class EvalReport:
    rmse: float
    mse: float
    predictions: np.ndarray
    truth: np.ndarray
    target_time: np.ndarray
    split_sizes: dict
    fingerprint: str
    best_epoch: int = -1
    train_curve: list = field(default_factory=list)
    val_curve: list = field(default_factory=list)
    pretrain_curve: list = field(default_factory=list)

    def to_dict(self):
        return {
            "rmse": self.rmse,
            "mse": self.mse,
            "split_sizes": self.split_sizes,
            "fingerprint": self.fingerprint,
            "best_epoch": self.best_epoch,
            "train_curve": list(self.train_curve),
            "val_curve": list(self.val_curve),
            "pretrain_curve": list(self.pretrain_curve),
        }


def rmse(pred, truth) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(truth)) ** 2)))


def prepare_dataset(frame: TimeSeriesFrame, config: ForecasterConfig):
    """Normalize on the training rows, then window each split separately."""
    frame_n, norm = fit_apply_minmax(frame, config.splits[0])
    data = make_windows(frame_n, config.window, config.horizon_steps, config.step_hours, config.splits)
    return data, norm


def _pretrained_encoder(config, X_train, n_features, cache):
    key = (config.use_wavelet, tuple(config.encoder_sizes), config.sgd.seed)
    if cache is not None and key in cache:
        return cache[key]
    pre_cfg = config.pretrain or config.sgd
    ae = EncoderDecoder(n_features, config.encoder_sizes, seed=config.sgd.seed)
    ae, curve = pretrain_autoencoder(ae, X_train, pre_cfg)
    if cache is not None:
        cache[key] = (ae, curve)
    return ae, curve


def train_forecaster(config: ForecasterConfig, frame: TimeSeriesFrame, dataset=None, _pretrain_cache=None):
    """Preprocess, optionally pretrain the encoder, train on MSE and evaluate on the test split.

    The parameters of the epoch with the lowest validation RMSE are kept.
    Returns ``(model, EvalReport)``; RMSE is in normalized target units.
    """
    data = dataset if dataset is not None else prepare_dataset(frame, config)[0]
    model = Forecaster(config, data.X.shape[2])
    X = model.preprocess(data.X)
    Xtr, ytr = X[data.mask("train")], data.y[data.mask("train")]
    Xva, yva = X[data.mask("val")], data.y[data.mask("val")]
    Xte, yte = X[data.mask("test")], data.y[data.mask("test")]
    if len(Xtr) == 0 or len(Xte) == 0:
        raise ValueError("frame too short for non-empty train and test splits")
    pre_curve = []
    if config.use_encoder:
        ae, pre_curve = _pretrained_encoder(config, Xtr, data.X.shape[2], _pretrain_cache)
        model.load_encoder(ae)
    train_curve, val_curve, best = fit_minibatch(model, Xtr, ytr, config.sgd,
                                                 val=(Xva, yva) if len(Xva) else None,
                                                 frozen=model.frozen)
    pred = model.predict(Xte)
    mse = float(np.mean((pred - yte) ** 2))
    report = EvalReport(
        rmse=float(np.sqrt(mse)), mse=mse, predictions=pred, truth=yte,
        target_time=data.target_time[data.mask("test")],
        split_sizes={s: int(np.sum(data.mask(s))) for s in ("train", "val", "test")},
        fingerprint=config.fingerprint(), best_epoch=best,
        train_curve=train_curve, val_curve=val_curve, pretrain_curve=list(pre_curve),
    )
    return model, report


def train_mlp(config: ForecasterConfig, data, hidden=(64, 64)):
    """MLP baseline on the same windows and splits."""
    model = MlpRegressor(data.X.shape[1], data.X.shape[2], hidden, seed=config.sgd.seed)
    Xtr, ytr = data.part("train")
    Xva, yva = data.part("val")
    Xte, yte = data.part("test")
    train_curve, val_curve, best = fit_minibatch(model, Xtr, ytr, config.sgd,
                                                 val=(Xva, yva) if len(Xva) else None)
    pred = model.predict(Xte)
    mse = float(np.mean((pred - yte) ** 2))
    report = EvalReport(
        rmse=float(np.sqrt(mse)), mse=mse, predictions=pred, truth=yte,
        target_time=data.target_time[data.mask("test")],
        split_sizes={s: int(np.sum(data.mask(s))) for s in ("train", "val", "test")},
        fingerprint=hashlib.sha256((config.fingerprint() + repr(hidden)).encode()).hexdigest()[:16],
        best_epoch=best, train_curve=train_curve, val_curve=val_curve,
    )
    return model, report


@dataclass
class AblationResult:
    horizons: list
    rmse: dict  # variant -> list of RMSE per horizon
    reports: dict  # (variant, horizon) -> EvalReport

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", *[f"rmse_h{h}" for h in self.horizons]])
        for name in OUT_OF_SCOPE_ROWS:
            w.writerow([name, *["out of scope"] * len(self.horizons)])
        for name in VARIANTS:
            w.writerow([name, *[f"{v:.6g}" for v in self.rmse[name]]])
        return buf.getvalue()

    def table_text(self) -> str:
        head = f"{'Method':<15}" + "".join(f"{f'h={h}':>14}" for h in self.horizons)
        lines = [head, "-" * len(head)]
        for name in OUT_OF_SCOPE_ROWS:
            lines.append(f"{name:<15}" + "".join(f"{'out of scope':>14}" for _ in self.horizons))
        for name in VARIANTS:
            lines.append(f"{name:<15}" + "".join(f"{v:>14.6f}" for v in self.rmse[name]))
        return "\n".join(lines) + "\n"

    def traces_csv(self, horizon) -> str:
        """Per-sample test predictions for one horizon: timestamp, truth, one column per variant."""
        names = [v for v in VARIANTS if (v, horizon) in self.reports]
        first = self.reports[(names[0], horizon)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "truth", *names])
        preds = [self.reports[(v, horizon)].predictions for v in names]
        for k, (ts, truth) in enumerate(zip(first.target_time, first.truth)):
            w.writerow([str(ts), f"{truth:.10g}", *[f"{p[k]:.10g}" for p in preds]])
        return buf.getvalue()


def ablate(frame: TimeSeriesFrame, horizons=(1, 2, 3), base: ForecasterConfig | None = None,
           mlp_hidden=(64, 64), variants=None) -> AblationResult:
    """Train every variant for every horizon on shared splits and seeds."""
    base = base or ForecasterConfig()
    names = list(VARIANTS) if variants is None else list(variants)
    rmse_table = {name: [] for name in VARIANTS}
    reports = {}
    for h in horizons:
        cfg_h = replace(base, horizon_steps=h)
        data, _ = prepare_dataset(frame, cfg_h)
        cache = {}
        for name in VARIANTS:
            if name not in names:
                rmse_table[name].append(float("nan"))
                continue
            cfg = variant_config(cfg_h, name)
            if name == "MLP":
                _, rep = train_mlp(cfg, data, mlp_hidden)
            else:
                _, rep = train_forecaster(cfg, frame, dataset=data, _pretrain_cache=cache)
            rmse_table[name].append(rep.rmse)
            reports[(name, h)] = rep
    return AblationResult(list(horizons), rmse_table, reports)
