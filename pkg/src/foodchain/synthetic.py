"""Synthetic stand-ins for the greenhouse and packaging datasets."""

from __future__ import annotations

import numpy as np

from .numerics import DTYPE, role_rng
from .signal import TimeSeriesFrame

GREENHOUSE_CHANNELS = ("co2_ppm", "humidity_pct", "radiation", "outside_temp_c", "inside_temp_c")


def _ar1(rng, n, phi, sigma):
    e = rng.normal(0.0, sigma, n)
    out = np.empty(n)
    acc = 0.0
    for k in range(n):
        acc = phi * acc + e[k]
        out[k] = acc
    return out


def greenhouse_series(n: int = 5000, seed: int = 0, start="2020-01-01T00:00:00",
                      sensor_noise: float = 0.4, target_noise: float = 0.05,
                      innovation: float = 0.002) -> TimeSeriesFrame:
    """Hourly greenhouse climate with a stem-growth-rate target.

    The target is a slow trend plus a daily sine plus AR(1) noise, plus a
    growth response to radiation that arrives after a temperature-dependent
    delay of 2 to 9 hours and peaks at an optimal inside temperature.
    Environmental sensors carry white measurement noise with standard
    deviation ``sensor_noise`` times the channel's own spread; the target
    sensor uses ``target_noise``.
    """
    rng = role_rng(seed, "greenhouse")
    t = np.arange(n, dtype=DTYPE)
    day = 2 * np.pi * t / 24.0
    season = 1.0 + 0.3 * np.sin(2 * np.pi * t / (24.0 * 45))
    cloud = np.clip(1.0 - np.abs(_ar1(rng, n, 0.97, 0.08)), 0.2, 1.0)
    radiation = np.maximum(0.0, np.sin(day - np.pi / 4)) * season * cloud
    outside = 8.0 + 0.0008 * t + 5.0 * np.sin(day - 2.4) + _ar1(rng, n, 0.95, 0.4)
    inside = 19.0 + 0.3 * (outside - 8.0) + 4.0 * radiation + _ar1(rng, n, 0.8, 0.2)
    co2 = 650.0 - 220.0 * radiation + _ar1(rng, n, 0.9, 8.0)
    humidity = 75.0 - 2.5 * (inside - 19.0) + _ar1(rng, n, 0.9, 1.0)

    # warmer plants respond sooner
    delay = np.rint(2.0 + 7.0 / (1.0 + np.exp((inside - 21.0) / 1.2))).astype(int)
    src = np.clip(np.arange(n) - delay, 0, None)
    response = np.exp(-(((inside - 21.0) / 2.5) ** 2))
    growth = (0.000005 * t + 0.02 * np.sin(day + 0.7) + 0.08 * radiation[src] * response
              + _ar1(rng, n, 0.7, innovation))

    def noisy(x, level=sensor_noise):
        return x + rng.normal(0.0, level * np.std(x), n)

    channels = {
        "co2_ppm": noisy(co2),
        "humidity_pct": noisy(humidity),
        "radiation": noisy(radiation),
        "outside_temp_c": noisy(outside),
        "inside_temp_c": noisy(inside),
    }
    stamps = np.datetime64(start, "s") + np.arange(n) * np.timedelta64(3600, "s")
    return TimeSeriesFrame(stamps, channels, noisy(growth, target_noise), "stem_rate")


def two_moons(n: int, rng: np.random.Generator, noise: float = 0.1):
    """Two interleaving half circles; class 0 on top, class 1 below and shifted."""
    y = rng.integers(0, 2, n)
    theta = rng.uniform(0.0, np.pi, n)
    X = np.where(y[:, None] == 0,
                 np.column_stack([np.cos(theta), np.sin(theta)]),
                 np.column_stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)]))
    X = X - np.array([0.5, 0.25])
    return X + rng.normal(0.0, noise, X.shape), y


def rotate(X, degrees: float):
    a = np.deg2rad(degrees)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return X @ R.T


def moons_domains(seed: int = 0, n_per_domain: int = 300,
                  sources=((30.0, 0.5), (-30.0, 2.0), (60.0, 1.5)),
                  target=(0.0, 1.0), noise: float = 0.1):
    """Two-moons domains differing by rotation (degrees) and scale.

    ``sources`` and ``target`` hold ``(angle, scale)`` pairs. Returns
    ``(source_list, (X_target, y_target))`` where ``source_list`` holds
    ``(X, y)`` pairs; target labels are meant for evaluation only.
    """
    rng = role_rng(seed, "moons")
    out = []
    for angle, scale in (*sources, target):
        X, y = two_moons(n_per_domain, rng, noise)
        out.append((rotate(X * scale, angle), y))
    return out[:-1], out[-1]


def planted_centroid_case(seed: int = 0, per_blob: int = 50, spread: float = 0.5):
    """Two-class 2-D validation set and a merged centroid set with one planted bad centroid.

    Class 0 lives in blobs around (-2, 0) and (-2, 3), class 1 around (2, 0)
    and (2, 3). Origin ``a`` contributes a centroid per blob, origin ``b``
    contributes a second class-1 centroid near (2, 1.5) and a class-1
    centroid sitting inside the class-0 blob at (-2, 0), which captures that
    neighbourhood and mislabels it. Returns ``(merged, X_val, y_val, bad_id)``.
    """
    from .clustering import CentroidSet

    rng = role_rng(seed, "planted-centroids")
    blobs = np.array([[-2.0, 0.0], [-2.0, 3.0], [2.0, 0.0], [2.0, 3.0]])
    blob_labels = np.array([0, 0, 1, 1])
    X = np.concatenate([c + rng.normal(0.0, spread, (per_blob, 2)) for c in blobs])
    y = np.repeat(blob_labels, per_blob)
    a = CentroidSet(blobs + rng.normal(0.0, 0.1, blobs.shape), blob_labels, np.full(4, "a", dtype=object))
    b = CentroidSet(np.array([[2.0, 1.5], [-2.0, 0.0]]), np.array([1, 1]), np.full(2, "b", dtype=object))
    merged = CentroidSet.merge(a, b)
    return merged, X, y, 5
