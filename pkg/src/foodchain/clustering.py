"""k-means++ centroids as a nearest-neighbour backward model, and iterative
pruning/adaptation of merged centroid sets."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .numerics import DTYPE, ParamSet, load_params, save_params


@dataclass
class CentroidSet:
    centroids: np.ndarray
    labels: np.ndarray
    origins: np.ndarray = None
    ids: np.ndarray = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=DTYPE))
        self.labels = np.asarray(self.labels)
        L = len(self.centroids)
        if L < 1:
            raise ValueError("a centroid set needs at least one centroid")
        if len(self.labels) != L:
            raise ValueError("one class label per centroid")
        self.origins = np.full(L, "", dtype=object) if self.origins is None else np.asarray(self.origins, dtype=object)
        self.ids = np.arange(L) if self.ids is None else np.asarray(self.ids)

    def __len__(self):
        return len(self.centroids)

    @property
    def dim(self):
        return self.centroids.shape[1]

    def subset(self, keep) -> "CentroidSet":
        keep = np.asarray(keep)
        return CentroidSet(self.centroids[keep].copy(), self.labels[keep], self.origins[keep], self.ids[keep])

    @classmethod
    def merge(cls, *sets: "CentroidSet") -> "CentroidSet":
        """Concatenate sets; ids are renumbered ``0..L-1`` in order."""
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise ValueError("centroid sets have different dimensions")
        return cls(np.concatenate([s.centroids for s in sets]),
                   np.concatenate([s.labels for s in sets]),
                   np.concatenate([s.origins for s in sets]))


def squared_distances(X, C):
    """Exact pairwise squared Euclidean distances, shape ``(len(X), len(C))``."""
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_objective(X, C, assign=None) -> float:
    d = squared_distances(X, C)
    if assign is None:
        return float(d.min(axis=1).sum())
    return float(d[np.arange(len(X)), assign].sum())


def kmeans_pp_init(X, L: int, rng: np.random.Generator):
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = squared_distances(X, X[centers]).min(axis=1)
    for _ in range(1, L):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(idx)
        d2 = np.minimum(d2, squared_distances(X, X[[idx]])[:, 0])
    return X[centers].copy()


def lloyd(X, init, max_iter: int = 300):
    """Lloyd iterations from ``init``.

    An empty cluster is moved onto the point farthest from its current
    centroid. Returns ``(centroids, assignment, objective history)`` where the
    history holds the objective after every assignment step.
    """
    C = np.array(init, dtype=DTYPE)
    L = len(C)
    d = squared_distances(X, C)
    assign = d.argmin(axis=1)
    history = [float(d[np.arange(len(X)), assign].sum())]
    for _ in range(max_iter):
        for k in range(L):
            members = assign == k
            if members.any():
                C[k] = X[members].mean(axis=0)
        reseeded = False
        for k in range(L):
            if not np.any(assign == k):
                own = squared_distances(X, C)[np.arange(len(X)), assign]
                far = int(np.argmax(own))
                C[k] = X[far]
                assign[far] = k
                reseeded = True
        d = squared_distances(X, C)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(len(X)), new].sum()))
        # after a reseed the other means are stale, so run one more update
        if np.array_equal(new, assign) and not reseeded:
            break
        assign = new
    return C, assign, history


def _majority(labels):
    values, counts = np.unique(labels, return_counts=True)
    return values[np.argmax(counts)]


def kmeans_fit(vectors, labels, L: int, seed: int = 0, origin: str = "", max_iter: int = 300) -> CentroidSet:
    """k-means++ seeding and Lloyd iterations; each centroid takes its members' majority class."""
    X = np.asarray(vectors, dtype=DTYPE)
    labels = np.asarray(labels)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("need a non-empty (n, dim) array of vectors")
    if not 1 <= L <= len(X):
        raise ValueError("cluster count must lie in [1, number of vectors]")
    if len(labels) != len(X):
        raise ValueError("one label per vector")
    rng = np.random.default_rng(seed)
    C, assign, history = lloyd(X, kmeans_pp_init(X, L, rng), max_iter)
    cl = []
    for k in range(L):
        members = labels[assign == k]
        if len(members):
            cl.append(_majority(members))
        else:
            cl.append(labels[np.argmin(squared_distances(X, C[[k]])[:, 0])])
    out = CentroidSet(C, np.array(cl), np.full(L, origin, dtype=object))
    out.history = history
    return out


def classify_nearest(query, centroids: CentroidSet):
    """Label of the nearest centroid; ties go to the lowest index.

    ``query`` may be one vector or a ``(n, dim)`` batch.
    """
    q = np.asarray(query, dtype=DTYPE)
    single = q.ndim == 1
    Q = q[None] if single else q
    if Q.shape[1] != centroids.dim:
        raise ValueError(f"query dimension {Q.shape[1]} does not match centroids ({centroids.dim})")
    out = centroids.labels[squared_distances(Q, centroids.centroids).argmin(axis=1)]
    return out[0] if single else out


def nearest_accuracy(centroids: CentroidSet, X, y) -> float:
    return float(np.mean(classify_nearest(X, centroids) == y))


def adapt_centroids(centroids: CentroidSet, X) -> tuple[CentroidSet, list]:
    """Move each centroid to the mean of the vectors assigned to it.

    Centroids with no assigned vectors stay put. Returns the new set and a
    list of ``(id, before, after)`` for centroids that moved.
    """
    assign = squared_distances(X, centroids.centroids).argmin(axis=1)
    out = centroids.subset(np.arange(len(centroids)))
    moved = []
    for k in range(len(out)):
        members = assign == k
        if members.any():
            new = X[members].mean(axis=0)
            if not np.array_equal(new, out.centroids[k]):
                moved.append((int(out.ids[k]), out.centroids[k].copy(), new))
                out.centroids[k] = new
    return out, moved


@dataclass
class PruneStep:
    removed_id: int
    removed_centroid: np.ndarray
    accuracy: float
    accepted: bool
    adapted: list


@dataclass
class PruneTrace:
    initial_accuracy: float
    steps: list = field(default_factory=list)

    @property
    def removed(self):
        return [s.removed_id for s in self.steps if s.accepted]

    def accuracies(self):
        return [self.initial_accuracy, *(s.accuracy for s in self.steps)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "removed_id", "accuracy", "accepted", "adapted_ids"])
        w.writerow([0, "", f"{self.initial_accuracy:.6f}", "", ""])
        for k, s in enumerate(self.steps, start=1):
            w.writerow([k, s.removed_id, f"{s.accuracy:.6f}", int(s.accepted),
                        " ".join(str(a[0]) for a in s.adapted)])
        return buf.getvalue()


def _purity(centroids: CentroidSet, X, y):
    assign = squared_distances(X, centroids.centroids).argmin(axis=1)
    out = np.ones(len(centroids))
    for k in range(len(centroids)):
        members = assign == k
        if members.any():
            out[k] = np.mean(y[members] == centroids.labels[k])
    return out


def prune_adapt(merged: CentroidSet, X_val, y_val) -> tuple[CentroidSet, PruneTrace]:
    """Greedily drop the weakest centroid and adapt the rest, while accuracy improves.

    The weakest centroid is the one whose removal leaves the highest
    nearest-centroid validation accuracy (lowest member purity breaks ties,
    then lowest index). After removal, the remaining centroids move to the
    means of their validation members. The step is kept only if validation
    accuracy strictly improves; the loop stops at the first step that does
    not, or when one centroid per class remains.
    """
    X = np.asarray(X_val, dtype=DTYPE)
    y = np.asarray(y_val)
    missing = set(np.unique(merged.labels).tolist()) - set(np.unique(y).tolist())
    if missing:
        raise ValueError(f"validation set has no examples of classes {sorted(missing)}")
    n_classes = len(np.unique(merged.labels))
    current = merged
    acc = nearest_accuracy(current, X, y)
    trace = PruneTrace(acc)
    while len(current) > n_classes:
        counts = {lab: np.sum(current.labels == lab) for lab in np.unique(current.labels)}
        candidates = [k for k in range(len(current)) if counts[current.labels[k]] > 1]
        if not candidates:
            break
        purity = _purity(current, X, y)
        keep_all = np.arange(len(current))
        scored = []
        for k in candidates:
            score = nearest_accuracy(current.subset(keep_all[keep_all != k]), X, y)
            scored.append((-score, purity[k], k))
        _, _, worst = min(scored)
        reduced = current.subset(keep_all[keep_all != worst])
        adapted, moved = adapt_centroids(reduced, X)
        new_acc = nearest_accuracy(adapted, X, y)
        accepted = new_acc > acc
        trace.steps.append(PruneStep(int(current.ids[worst]), current.centroids[worst].copy(),
                                     new_acc, accepted, moved))
        if not accepted:
            break
        current, acc = adapted, new_acc
    return current, trace


def save_centroids(path, centroids: CentroidSet):
    ps = ParamSet()
    ps.add("centroids", centroids.centroids)
    meta = {"labels": [str(v) for v in centroids.labels], "origins": [str(v) for v in centroids.origins],
            "ids": [int(v) for v in centroids.ids]}
    return save_params(path, ps, meta)


def load_centroids(path) -> CentroidSet:
    ps, meta = load_params(path)
    return CentroidSet(ps["centroids"], np.array(meta["labels"]), np.array(meta["origins"], dtype=object),
                       np.array(meta["ids"]))
