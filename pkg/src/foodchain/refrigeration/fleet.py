"""Demand-side-response selection: switch off as few fridges as possible."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..signal import CsvFormatError

EXACT_LIMIT = 20


@dataclass
class FridgeCandidate:
    fridge_id: str
    predicted_safe_off_s: float
    power_kw: float


@dataclass
class FleetPlan:
    selected: list
    predicted_safe_off_s: dict
    total_reduction_kw: float
    required_kw: float
    event_duration_s: float
    feasible: bool
    achievable_max_kw: float
    method: str
    eligible: list = field(default_factory=list)

    def to_csv(self, path, candidates):
        chosen = set(self.selected)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fridge_id", "predicted_safe_off_s", "selected"])
            for c in candidates:
                w.writerow([c.fridge_id, f"{c.predicted_safe_off_s:.3f}", int(c.fridge_id in chosen)])


def _exact(ids, power, required):
    """Minimum-cardinality subset; among those, the smallest total power, then lexicographic ids."""
    order = np.argsort(-power, kind="stable")
    prefix = np.cumsum(power[order])
    k = int(np.searchsorted(prefix, required - 1e-12)) + 1
    best = None
    for combo in itertools.combinations(range(len(ids)), k):
        total = float(power[list(combo)].sum())
        if total + 1e-12 < required:
            continue
        key = (total, sorted(ids[c] for c in combo))
        if best is None or key < best:
            best = key
    return best[1]


def _greedy(ids, power, required):
    chosen, total = [], 0.0
    for k in np.argsort(-power, kind="stable"):
        if total + 1e-12 >= required:
            break
        chosen.append(ids[k])
        total += power[k]
    return sorted(chosen)


def select_fleet(candidates, required_kw: float, event_duration_s: float, safety_margin: float = 0.1,
                 exact_limit: int = EXACT_LIMIT) -> FleetPlan:
    """Choose the fewest fridges whose combined power covers ``required_kw``.

    A fridge is eligible when its predicted safe-off duration, reduced by
    ``safety_margin`` (a fraction), still covers the event. Up to
    ``exact_limit`` eligible fridges are searched exhaustively, which also
    minimizes the surplus power among minimum-size plans; beyond that the
    highest-power fridges are taken in order, which gives the same
    (minimum) count. If even all eligible fridges fall short the plan is
    marked infeasible, selects nothing and reports the achievable maximum.
    """
    if required_kw < 0:
        raise ValueError("required reduction must be non-negative")
    if not 0 <= safety_margin < 1:
        raise ValueError("safety margin must lie in [0, 1)")
    cands = list(candidates)
    for c in cands:
        if c.power_kw < 0:
            raise ValueError(f"negative power for {c.fridge_id}")
    eligible = [c for c in cands if c.predicted_safe_off_s * (1.0 - safety_margin) >= event_duration_s]
    ids = [c.fridge_id for c in eligible]
    power = np.array([c.power_kw for c in eligible], dtype=float)
    achievable = float(power.sum())
    predicted = {c.fridge_id: c.predicted_safe_off_s for c in cands}
    common = dict(predicted_safe_off_s=predicted, required_kw=required_kw, event_duration_s=event_duration_s,
                  achievable_max_kw=achievable, eligible=sorted(ids))
    if required_kw == 0:
        return FleetPlan([], total_reduction_kw=0.0, feasible=True, method="trivial", **common)
    if achievable + 1e-12 < required_kw:
        return FleetPlan([], total_reduction_kw=0.0, feasible=False, method="infeasible", **common)
    if len(eligible) <= exact_limit:
        chosen, method = _exact(ids, power, required_kw), "exact"
    else:
        chosen, method = _greedy(ids, power, required_kw), "greedy"
    by_id = dict(zip(ids, power))
    total = float(sum(by_id[i] for i in chosen))
    return FleetPlan(chosen, total_reduction_kw=total, feasible=True, method=method, **common)


def read_fleet_csv(path) -> dict:
    """``fridge_id,power_kw`` rows as a dict."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[:2] != ["fridge_id", "power_kw"]:
            raise CsvFormatError(f"{path}:1: expected columns fridge_id,power_kw")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise CsvFormatError(f"{path}:{lineno}: expected 2 fields")
            try:
                out[row[0].strip()] = float(row[1])
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
    return out


def write_fleet_csv(path, powers: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fridge_id", "power_kw"])
        for fid, p in powers.items():
            w.writerow([fid, repr(float(p))])
