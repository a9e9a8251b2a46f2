"""Discrepancy-based multi-source domain adaptation on feature vectors.

Losses (each returns its value and, on request, gradients w.r.t. its inputs):

* :func:`mmd` - squared maximum mean discrepancy with averaged RBF kernels
* :func:`coral` - squared Frobenius distance between covariances / (4 d^2)
* :func:`class_discrepancy` - mean pairwise L1 distance between classifiers'
  softmax outputs on the same target samples

:class:`AdaptModel` is a shared dense trunk feeding one branch and one
softmax classifier per source domain. :func:`train_multisource` minimizes
``MMD + CORAL + CD + CL`` summed over source/target pairs.
"""

from __future__ import annotations

import csv
import io
import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import DTYPE, NonFiniteError, ParamSet, SgdConfig, role_rng, sgd_step
from .recurrent import Dense

BANDWIDTH_MULTIPLIERS = (0.5, 1.0, 2.0)


# losses ------------------------------------------------------------------

def median_bandwidth(X, Y) -> float:
    Z = np.concatenate([X, Y])
    d2 = np.sum((Z[:, None, :] - Z[None, :, :]) ** 2, axis=-1)
    iu = np.triu_indices(len(Z), 1)
    pos = np.sqrt(d2[iu])
    pos = pos[pos > 0]
    return float(np.median(pos)) if len(pos) else 1.0


def default_bandwidths(X, Y):
    base = median_bandwidth(X, Y)
    return [base * m for m in BANDWIDTH_MULTIPLIERS]


def _kernel(A, B, bandwidths):
    """Averaged RBF kernel matrix and its derivative w.r.t. squared distance."""
    diff = A[:, None, :] - B[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    K = np.zeros_like(d2)
    dK = np.zeros_like(d2)
    for bw in bandwidths:
        k = np.exp(-d2 / (2.0 * bw ** 2))
        K += k
        dK -= k / (2.0 * bw ** 2)
    n = len(bandwidths)
    return K / n, dK / n, diff


def mmd(source, target, kernel_bandwidths=None, return_grad: bool = False):
    """Squared MMD, unbiased estimator, clamped at zero.

    The kernel is the mean of RBF kernels ``exp(-|x-y|^2 / (2 s^2))`` over
    ``kernel_bandwidths`` (default: median pairwise distance times 0.5, 1
    and 2). With a single sample in either batch the biased estimator is
    used instead.
    """
    X = np.asarray(source, dtype=DTYPE)
    Y = np.asarray(target, dtype=DTYPE)
    if len(X) == 0 or len(Y) == 0:
        raise ValueError("both batches must be non-empty")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("batches must share their feature dimension")
    bws = default_bandwidths(X, Y) if kernel_bandwidths is None else list(kernel_bandwidths)
    m, n = len(X), len(Y)
    unbiased = m > 1 and n > 1
    if not unbiased:
        warnings.warn("single-sample batch: using the biased MMD estimator", stacklevel=2)
    Kxx, dxx, Dxx = _kernel(X, X, bws)
    Kyy, dyy, Dyy = _kernel(Y, Y, bws)
    Kxy, dxy, Dxy = _kernel(X, Y, bws)
    if unbiased:
        cxx = (1.0 - np.eye(m)) / (m * (m - 1))
        cyy = (1.0 - np.eye(n)) / (n * (n - 1))
    else:
        cxx = np.full((m, m), 1.0 / m ** 2)
        cyy = np.full((n, n), 1.0 / n ** 2)
    cxy = -2.0 / (m * n)
    value = float(np.sum(cxx * Kxx) + np.sum(cyy * Kyy) + cxy * np.sum(Kxy))
    clamped = value < 0
    value = max(value, 0.0)
    if not return_grad:
        return value
    if clamped:
        return value, np.zeros_like(X), np.zeros_like(Y)
    # d/dx_a of sum_ab c_ab k(|x_a - z_b|^2) = sum_b c_ab k'_ab 2 (x_a - z_b)
    wxx = cxx * dxx
    wyy = cyy * dyy
    wxy = cxy * dxy
    dX = 2.0 * np.einsum("ab,abk->ak", wxx + wxx.T, Dxx) + 2.0 * np.einsum("ab,abk->ak", wxy, Dxy)
    dY = 2.0 * np.einsum("ab,abk->ak", wyy + wyy.T, Dyy) - 2.0 * np.einsum("ab,abk->bk", wxy, Dxy)
    return value, dX, dY


def _cov(X):
    Xc = X - X.mean(axis=0)
    return Xc, Xc.T @ Xc / (len(X) - 1)


def coral(source, target, return_grad: bool = False):
    """``|cov(source) - cov(target)|_F^2 / (4 d^2)`` with unbiased covariances."""
    X = np.asarray(source, dtype=DTYPE)
    Y = np.asarray(target, dtype=DTYPE)
    if len(X) < 2 or len(Y) < 2:
        raise ValueError("CORAL needs at least two samples per batch")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("batches must share their feature dimension")
    d = X.shape[1]
    Xc, Cs = _cov(X)
    Yc, Ct = _cov(Y)
    diff = Cs - Ct
    scale = 1.0 / (4.0 * d * d)
    value = float(scale * np.sum(diff ** 2))
    if not return_grad:
        return value
    G = 2.0 * scale * diff
    dX = (2.0 / (len(X) - 1)) * Xc @ G
    dY = -(2.0 / (len(Y) - 1)) * Yc @ G
    return value, dX, dY


def class_discrepancy(classifier_outputs, return_grad: bool = False):
    """Mean over classifier pairs and samples of the L1 distance between softmax rows."""
    probs = [np.asarray(p, dtype=DTYPE) for p in classifier_outputs]
    for p in probs:
        if np.any(p < -1e-12) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("classifier outputs must be row-stochastic")
    if len(probs) < 2:
        warnings.warn("class discrepancy needs two classifiers; returning 0", stacklevel=2)
        return (0.0, [np.zeros_like(p) for p in probs]) if return_grad else 0.0
    pairs = list(itertools.combinations(range(len(probs)), 2))
    n = len(probs[0])
    value = 0.0
    grads = [np.zeros_like(p) for p in probs]
    for a, b in pairs:
        diff = probs[a] - probs[b]
        value += np.abs(diff).sum()
        s = np.sign(diff)
        grads[a] += s
        grads[b] -= s
    denom = len(pairs) * n
    value = float(value / denom)
    if not return_grad:
        return value
    return value, [g / denom for g in grads]


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(p, dp):
    return p * (dp - np.sum(dp * p, axis=1, keepdims=True))


def cross_entropy(logits, labels, return_grad: bool = False):
    p = softmax(logits)
    n = len(labels)
    value = float(-np.mean(np.log(np.clip(p[np.arange(n), labels], 1e-300, None))))
    if not return_grad:
        return value
    g = p.copy()
    g[np.arange(n), labels] -= 1.0
    return value, g / n


# model -------------------------------------------------------------------

@dataclass
class AdaptLossReport:
    mmd: float
    coral: float
    cd: float
    cl: float

    @property
    def fd(self) -> float:
        return self.mmd + self.coral

    @property
    def total(self) -> float:
        return self.fd + self.cd + self.cl

    def row(self):
        return {"Loss_MMD": self.mmd, "Loss_CORAL": self.coral, "Loss_FD": self.fd,
                "Loss_CD": self.cd, "Loss_CL": self.cl, "Loss_TOTAL": self.total}


@dataclass
class LossWeights:
    mmd: float = 1.0
    coral: float = 1.0
    cd: float = 1.0
    cl: float = 1.0


class AdaptModel:
    """Shared ReLU trunk, then per source a ReLU branch and a linear softmax head."""

    def __init__(self, n_features: int, n_sources: int, trunk=(32,), branch: int = 16,
                 n_classes: int = 2, seed: int = 0):
        if n_sources < 1:
            raise ValueError("need at least one source domain")
        self.params = ParamSet()
        self.n_sources, self.n_classes = n_sources, n_classes
        rng = role_rng(seed, "adapt")
        self.trunk = []
        n_in = n_features
        for k, width in enumerate(trunk):
            self.trunk.append(Dense(self.params, f"trunk.{k}", n_in, width, rng, "relu"))
            n_in = width
        self.branches = [Dense(self.params, f"branch.{s}", n_in, branch, rng, "relu") for s in range(n_sources)]
        self.heads = [Dense(self.params, f"clf.{s}", branch, n_classes, rng) for s in range(n_sources)]

    def _trunk(self, X):
        caches = []
        for layer in self.trunk:
            X, c = layer.forward(X)
            caches.append(c)
        return X, caches

    def _trunk_backward(self, d, caches):
        for layer, c in zip(reversed(self.trunk), reversed(caches)):
            d = layer.backward(d, c)
        return d

    def latent(self, X, source: int = 0):
        """Output of the dense layer preceding the classifier of ``source``."""
        t, _ = self._trunk(np.asarray(X, dtype=DTYPE))
        return self.branches[source].forward(t)[0]

    def source_proba(self, X):
        t, _ = self._trunk(np.asarray(X, dtype=DTYPE))
        out = []
        for br, head in zip(self.branches, self.heads):
            f, _ = br.forward(t)
            out.append(softmax(head.forward(f)[0]))
        return out

    def predict_proba(self, X):
        return np.mean(self.source_proba(X), axis=0)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def loss_grad(self, sources, target, weights: LossWeights | None = None,
                  bandwidths=None) -> AdaptLossReport:
        """Forward and backward pass for one batch of each domain.

        ``sources`` is a list of ``(X, y)`` pairs, one per branch. Gradients of
        the weighted objective are accumulated into ``self.params.grads``.
        """
        w = weights or LossWeights()
        S = self.n_sources
        if len(sources) != S:
            raise ValueError(f"expected {S} source batches, got {len(sources)}")
        tt, tcache = self._trunk(target)
        dtt = np.zeros_like(tt)
        mmd_v = coral_v = cl_v = 0.0
        probs, tstate = [], []
        for s, (Xs, ys) in enumerate(sources):
            br, head = self.branches[s], self.heads[s]
            ts, scache = self._trunk(Xs)
            fs, bs_cache = br.forward(ts)
            ft, bt_cache = br.forward(tt)
            m_val, m_ds, m_dt = mmd(fs, ft, bandwidths, return_grad=True)
            c_val, c_ds, c_dt = coral(fs, ft, return_grad=True)
            logits_s, hs_cache = head.forward(fs)
            ce, dlog = cross_entropy(logits_s, ys, return_grad=True)
            logits_t, ht_cache = head.forward(ft)
            p = softmax(logits_t)
            probs.append(p)
            tstate.append((ft, bt_cache, ht_cache, p))
            mmd_v += m_val / S
            coral_v += c_val / S
            cl_v += ce / S
            dfs = (w.mmd * m_ds + w.coral * c_ds) / S + head.backward(w.cl * dlog / S, hs_cache)
            self._trunk_backward(br.backward(dfs, bs_cache), scache)
            tstate[-1] = (ft, bt_cache, ht_cache, p, (w.mmd * m_dt + w.coral * c_dt) / S)
        if S > 1:
            cd_v, dps = class_discrepancy(probs, return_grad=True)
        else:
            cd_v, dps = 0.0, [np.zeros_like(probs[0])]
        for s in range(S):
            ft, bt_cache, ht_cache, p, dft = tstate[s]
            dlogit_t = softmax_backward(p, w.cd * dps[s])
            dft = dft + self.heads[s].backward(dlogit_t, ht_cache)
            dtt += self.branches[s].backward(dft, bt_cache)
        self._trunk_backward(dtt, tcache)
        return AdaptLossReport(mmd_v, coral_v, cd_v, cl_v)


# training ----------------------------------------------------------------

class _Cycler:
    """Endless shuffled minibatches over one domain; smaller domains wrap around."""

    def __init__(self, n, batch, rng):
        self.n, self.batch, self.rng = n, batch, rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self):
        idx = []
        while len(idx) < min(self.batch, self.n):
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            take = min(self.batch - len(idx), self.n - self.pos)
            idx.extend(self.order[self.pos:self.pos + take])
            self.pos += take
        return np.array(idx)


@dataclass
class AdaptResult:
    model: AdaptModel
    curve: list = field(default_factory=list)
    target_accuracy: float = float("nan")

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = ["Loss_MMD", "Loss_CORAL", "Loss_FD", "Loss_CD", "Loss_CL", "Loss_TOTAL"]
        w.writerow(["epoch", *keys])
        for k, rep in enumerate(self.curve):
            row = rep.row()
            w.writerow([k, *(f"{row[key]:.8g}" for key in keys)])
        return buf.getvalue()


def evaluate_losses(model: AdaptModel, sources, target, bandwidths=None) -> AdaptLossReport:
    """Loss components on full domains without touching gradients."""
    saved = {n: g.copy() for n, g in model.params.grads.items()}
    rep = model.loss_grad([(np.asarray(X, dtype=DTYPE), np.asarray(y)) for X, y in sources],
                          np.asarray(target, dtype=DTYPE), bandwidths=bandwidths)
    for n, g in saved.items():
        model.params.grads[n][...] = g
    return rep


def train_multisource(sources, target, config: SgdConfig, target_labels=None, trunk=(32,), branch: int = 16,
                      weights: LossWeights | None = None, n_classes: int = 2) -> AdaptResult:
    """Train one branch per labeled source against the unlabeled target.

    ``sources`` is a list of ``(X, y)``; ``target`` the unlabeled feature
    matrix. Each epoch runs ``ceil(max domain size / batch)`` steps, one
    minibatch from every domain per step. ``target_labels``, when given, is
    used only to score the averaged-classifier prediction at the end.
    """
    if not sources:
        raise ValueError("need at least one source domain")
    sources = [(np.asarray(X, dtype=DTYPE), np.asarray(y, dtype=int)) for X, y in sources]
    Xt = np.asarray(target, dtype=DTYPE)
    model = AdaptModel(Xt.shape[1], len(sources), trunk, branch, n_classes, seed=config.seed)
    rng = role_rng(config.seed, "adapt-batches")
    cyclers = [_Cycler(len(X), config.batch_size, rng) for X, _ in sources]
    tcycle = _Cycler(len(Xt), config.batch_size, rng)
    steps = int(np.ceil(max(len(Xt), *(len(X) for X, _ in sources)) / config.batch_size))
    curve = []
    step_index = 0
    for epoch in range(config.epochs):
        acc = np.zeros(4)
        for _ in range(steps):
            batch = [(X[idx], y[idx]) for (X, y), idx in zip(sources, (c.next() for c in cyclers))]
            model.params.zero_grad()
            rep = model.loss_grad(batch, Xt[tcycle.next()], weights)
            if not np.isfinite(rep.total):
                raise NonFiniteError(f"adaptation diverged at step {step_index}")
            acc += (rep.mmd, rep.coral, rep.cd, rep.cl)
            sgd_step(model.params, config)
            step_index += 1
        curve.append(AdaptLossReport(*(acc / steps)))
    result = AdaptResult(model, curve)
    if target_labels is not None:
        result.target_accuracy = float(np.mean(model.predict(Xt) == np.asarray(target_labels)))
    return result


def read_feature_csv(path, label_column: str = "label", domain_column: str = "domain"):
    """Rows of numeric features plus a label column and a domain tag column.

    Returns ``{domain: (X, y)}`` in first-appearance order; an empty label
    cell is stored as ``-1`` (unlabeled).
    """
    from .signal import CsvFormatError

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if label_column not in header or domain_column not in header:
            raise CsvFormatError(f"{path}:1: need {label_column!r} and {domain_column!r} columns")
        li, di = header.index(label_column), header.index(domain_column)
        fi = [k for k in range(len(header)) if k not in (li, di)]
        out: dict[str, tuple[list, list]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                feats = [float(row[k]) for k in fi]
                label = int(row[li]) if row[li].strip() else -1
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
            xs, ys = out.setdefault(row[di].strip(), ([], []))
            xs.append(feats)
            ys.append(label)
    return {d: (np.array(xs, dtype=DTYPE), np.array(ys, dtype=int)) for d, (xs, ys) in out.items()}


def write_feature_csv(path, domains: dict, label_column: str = "label", domain_column: str = "domain"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        d = next(iter(domains.values()))[0].shape[1]
        w.writerow([*(f"f{k}" for k in range(d)), label_column, domain_column])
        for name, (X, y) in domains.items():
            for row, lab in zip(X, y):
                w.writerow([*(repr(float(v)) for v in row), int(lab), name])
