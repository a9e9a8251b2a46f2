"""Safe-off duration labels and a two-layer LSTM predictor for them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import DTYPE, ParamSet, SgdConfig, fit_minibatch, role_rng
from ..recurrent import LstmRegressor
from .thermal import FridgeTrace

WINDOW_MINUTES = 30
EVENT_CAP_S = 1800.0
FEATURES = ("temp_c", "compressor", "ambient_c")


@dataclass
class DefrostExample:
    fridge_id: str
    window: np.ndarray  # (WINDOW_MINUTES, len(FEATURES)) at one-minute spacing
    label_s: float
    lead_s: float
    switch_off_s: float
    window_end_s: float


@dataclass
class Extraction:
    examples: list
    skipped: int = 0
    reasons: dict = field(default_factory=dict)


def crossing_time(t, temp, threshold) -> float | None:
    """First upward crossing of ``threshold`` after ``t[0]``, linearly interpolated."""
    above = np.flatnonzero(temp[1:] >= threshold)
    if len(above) == 0:
        return None
    k = above[0] + 1
    t0, t1, y0, y1 = t[k - 1], t[k], temp[k - 1], temp[k]
    if y1 == y0:
        return float(t1)
    return float(t0 + (threshold - y0) * (t1 - t0) / (y1 - y0))


def _minute_grid(trace: FridgeTrace, end_s: float, minutes: int):
    grid = end_s - 60.0 * np.arange(minutes - 1, -1, -1)
    if grid[0] < trace.t[0] - 1e-9:
        return None
    temp = np.interp(grid, trace.t, trace.temp)
    amb = np.interp(grid, trace.t, trace.ambient)
    idx = np.searchsorted(trace.t, grid + 1e-9, side="right") - 1
    comp = trace.compressor[idx].astype(DTYPE)
    return np.column_stack([temp, comp, amb])


def extract_examples(trace: FridgeTrace, lead_s: float = 0.0, window_minutes: int = WINDOW_MINUTES,
                     cap_s: float = EVENT_CAP_S) -> Extraction:
    """One example per defrost segment of ``trace``.

    The label is the time from switch-off to the first threshold crossing.
    The input window holds ``window_minutes`` one-minute samples of
    temperature, compressor state and ambient temperature, ending ``lead_s``
    seconds before switch-off. Segments whose temperature starts at or above
    the threshold, that never cross within ``cap_s``, or that lack enough
    history are skipped and counted.
    """
    if lead_s < 0:
        raise ValueError("lead must be non-negative")
    out = Extraction([])

    def skip(reason):
        out.skipped += 1
        out.reasons[reason] = out.reasons.get(reason, 0) + 1

    for start, stop in trace.off_segments():
        t_off = float(trace.t[start])
        if trace.temp[start] >= trace.threshold_c:
            skip("starts above threshold")
            continue
        seg = slice(start, min(stop + 1, len(trace)))
        cross = crossing_time(trace.t[seg], trace.temp[seg], trace.threshold_c)
        if cross is None or cross - t_off > cap_s:
            skip("no crossing within cap")
            continue
        window = _minute_grid(trace, t_off - lead_s, window_minutes)
        if window is None:
            skip("insufficient history")
            continue
        out.examples.append(DefrostExample(trace.fridge_id, window, cross - t_off, float(lead_s), t_off,
                                           t_off - lead_s))
    return out


def split_by_fridge(examples, splits=(0.7, 0.1, 0.2), seed: int = 0):
    """Assign whole fridges to train/val/test; returns a list of split names per example."""
    ids = sorted({e.fridge_id for e in examples})
    order = role_rng(seed, "fridge-split").permutation(len(ids))
    n = len(ids)
    n_train = int(round(splits[0] * n))
    n_val = int(round(splits[1] * n))
    which = {}
    for rank, k in enumerate(order):
        which[ids[k]] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return np.array([which[e.fridge_id] for e in examples])


@dataclass
class DefrostPredictor:
    """Two-layer LSTM regressor with its input and label scaling."""

    model: LstmRegressor
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    lead_s: float = 0.0

    def _norm(self, W):
        return (np.asarray(W, dtype=DTYPE) - self.x_mean) / self.x_std

    def predict(self, windows) -> np.ndarray:
        """Predicted safe-off duration in seconds for a batch of windows."""
        return self.model.predict(self._norm(windows)) * self.y_std + self.y_mean

    @property
    def params(self) -> ParamSet:
        return self.model.params

    def meta(self) -> dict:
        return {"x_mean": self.x_mean.tolist(), "x_std": self.x_std.tolist(), "y_mean": self.y_mean,
                "y_std": self.y_std, "lead_s": self.lead_s, "sizes": list(self.model.sizes),
                "n_features": self.model.n_features}

    @classmethod
    def from_params(cls, params: ParamSet, meta: dict) -> "DefrostPredictor":
        model = LstmRegressor(meta["n_features"], tuple(meta["sizes"]), seed=0)
        model.params.assign(params)
        return cls(model, np.array(meta["x_mean"]), np.array(meta["x_std"]), meta["y_mean"], meta["y_std"],
                   meta.get("lead_s", 0.0))


@dataclass
class DefrostReport:
    rmse_s: float
    val_rmse_s: float
    split_sizes: dict
    best_epoch: int
    train_curve: list
    val_curve: list
    predictions: np.ndarray = field(repr=False, default=None)
    truth: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"rmse_s": self.rmse_s, "val_rmse_s": self.val_rmse_s, "split_sizes": self.split_sizes,
                "best_epoch": self.best_epoch, "train_curve": list(self.train_curve),
                "val_curve": list(self.val_curve)}


def train_defrost_predictor(examples, config: SgdConfig, sizes=(16, 16), splits=(0.7, 0.1, 0.2)):
    """Fit a two-layer LSTM on a fridge-level split; RMSE is reported in seconds."""
    if not examples:
        raise ValueError("no defrost examples")
    W = np.stack([e.window for e in examples])
    y = np.array([e.label_s for e in examples])
    part = split_by_fridge(examples, splits, config.seed)
    tr, va, te = (part == s for s in ("train", "val", "test"))
    if not tr.any() or not te.any():
        raise ValueError("too few fridges for non-empty train and test splits")
    x_mean = W[tr].mean(axis=(0, 1))
    x_std = W[tr].std(axis=(0, 1))
    x_std[x_std == 0] = 1.0
    y_mean, y_std = float(y[tr].mean()), float(y[tr].std() or 1.0)
    model = LstmRegressor(W.shape[2], tuple(sizes), seed=config.seed)
    pred = DefrostPredictor(model, x_mean, x_std, y_mean, y_std, examples[0].lead_s)
    Xn = pred._norm(W)
    yn = (y - y_mean) / y_std
    train_curve, val_curve, best = fit_minibatch(model, Xn[tr], yn[tr], config,
                                                 val=(Xn[va], yn[va]) if va.any() else None)
    p_te = pred.predict(W[te])
    val_rmse = float(np.sqrt(np.mean((pred.predict(W[va]) - y[va]) ** 2))) if va.any() else float("nan")
    report = DefrostReport(
        rmse_s=float(np.sqrt(np.mean((p_te - y[te]) ** 2))), val_rmse_s=val_rmse,
        split_sizes={"train": int(tr.sum()), "val": int(va.sum()), "test": int(te.sum())},
        best_epoch=best, train_curve=[c * y_std ** 2 for c in train_curve],
        val_curve=[c * y_std for c in val_curve], predictions=p_te, truth=y[te])
    return pred, report
