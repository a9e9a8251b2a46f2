"""First-order thermal simulation of thermostat-controlled refrigerators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..numerics import DTYPE, role_rng
from ..signal import CsvFormatError

DEFAULT_THRESHOLD_C = 8.0
FREEZER_THRESHOLD_C = -18.0


@dataclass
class FridgeSpec:
    """Physical and control parameters of one unit.

    With the compressor off the cabinet relaxes toward ambient with time
    constant ``tau_s``; with it on, toward ``cool_target_c`` with
    ``tau_cool_s``. The thermostat switches on at ``cut_in_c`` and off at
    ``cut_out_c``. Defrosts force the compressor off until the cabinet
    reaches ``threshold_c`` or ``defrost_cap_s`` elapses.
    """

    fridge_id: str = "fridge-0"
    tau_s: float = 600.0
    tau_cool_s: float = 400.0
    ambient_c: float = 20.0
    ambient_swing_c: float = 0.0
    cut_out_c: float = 2.0
    cut_in_c: float = 5.0
    cool_target_c: float = -3.0
    threshold_c: float = DEFAULT_THRESHOLD_C
    dt_s: float = 60.0
    noise_c: float = 0.0
    door_rate_per_hour: float = 0.0
    door_jump_c: float = 1.0
    defrost_interval_s: float = 3600.0
    defrost_jitter_s: float = 300.0
    defrost_cap_s: float = 1800.0
    initial_c: float | None = None

    def validate(self):
        if not self.tau_s > 0 or not self.tau_cool_s > 0:
            raise ValueError("time constants must be positive")
        if not self.dt_s > 0:
            raise ValueError("sample interval must be positive")
        if not self.ambient_c - abs(self.ambient_swing_c) > self.cut_in_c:
            raise ValueError("ambient must stay above the thermostat cut-in temperature")
        if not self.cool_target_c < self.cut_out_c < self.cut_in_c:
            raise ValueError("need cool_target_c < cut_out_c < cut_in_c")
        if self.noise_c < 0 or self.door_rate_per_hour < 0:
            raise ValueError("noise level and door rate must be non-negative")
        if not self.defrost_cap_s > 0:
            raise ValueError("defrost cap must be positive")


@dataclass
class FridgeTrace:
    fridge_id: str
    t: np.ndarray
    temp: np.ndarray
    compressor: np.ndarray
    defrost: np.ndarray
    ambient: np.ndarray
    tau_s: float
    threshold_c: float = DEFAULT_THRESHOLD_C
    true_temp: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.t)
        for name in ("temp", "compressor", "defrost", "ambient"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from timestamps")
        if not np.all(np.isfinite(self.temp)):
            raise ValueError("temperatures must be finite")

    def __len__(self):
        return len(self.t)

    @property
    def dt_s(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else float("nan")

    def off_segments(self):
        """``(start, stop)`` index pairs of consecutive defrost samples."""
        d = np.concatenate([[0], self.defrost.astype(int), [0]])
        edges = np.flatnonzero(np.diff(d))
        return list(zip(edges[::2], edges[1::2]))


def newton_step(temp, target, tau, dt):
    """Exact first-order relaxation of ``temp`` toward ``target`` over ``dt``."""
    return target - (target - temp) * np.exp(-dt / tau)


def off_temperature(t, t0_c, ambient_c, tau_s):
    """Closed-form warming curve with the compressor off."""
    return ambient_c - (ambient_c - t0_c) * np.exp(-np.asarray(t, dtype=DTYPE) / tau_s)


def defrost_schedule(spec: FridgeSpec, duration_s: float, rng) -> np.ndarray:
    start = spec.defrost_interval_s / 2 + rng.uniform(0, spec.defrost_interval_s / 2)
    times = np.arange(start, duration_s, spec.defrost_interval_s)
    if spec.defrost_jitter_s > 0:
        times = times + rng.uniform(-spec.defrost_jitter_s, spec.defrost_jitter_s, len(times))
    return np.sort(times[(times > 0) & (times < duration_s)])


def simulate_trace(spec: FridgeSpec, duration_s: float, seed: int = 0, schedule=None) -> FridgeTrace:
    """Simulate a trace sampled every ``spec.dt_s`` seconds.

    ``schedule`` lists defrost start times in seconds; by default one defrost
    per ``defrost_interval_s`` with random phase and jitter. A defrost begins
    at the first sample at or after its scheduled time.
    """
    spec.validate()
    rng = role_rng(seed, f"fridge:{spec.fridge_id}")
    n = int(duration_s // spec.dt_s) + 1
    t = np.arange(n) * spec.dt_s
    ambient = spec.ambient_c + spec.ambient_swing_c * np.sin(2 * np.pi * t / 86400.0)
    pending = list(defrost_schedule(spec, duration_s, rng) if schedule is None else sorted(schedule))
    doors = rng.random(n) < spec.door_rate_per_hour * spec.dt_s / 3600.0

    true = np.empty(n)
    comp = np.zeros(n, dtype=np.int8)
    dflag = np.zeros(n, dtype=np.int8)
    T = spec.cut_out_c if spec.initial_c is None else spec.initial_c
    on = False
    in_defrost, defrost_start = False, 0.0
    for k in range(n):
        true[k] = T
        if in_defrost and (T >= spec.threshold_c or t[k] - defrost_start >= spec.defrost_cap_s):
            in_defrost, on = False, True
        if not in_defrost and pending and pending[0] <= t[k]:
            pending.pop(0)
            in_defrost, defrost_start, on = True, t[k], False
        if not in_defrost:
            if T >= spec.cut_in_c:
                on = True
            elif T <= spec.cut_out_c:
                on = False
        comp[k], dflag[k] = on, in_defrost
        if on:
            T = newton_step(T, spec.cool_target_c, spec.tau_cool_s, spec.dt_s)
        else:
            T = newton_step(T, ambient[k], spec.tau_s, spec.dt_s)
        if doors[k]:
            T += spec.door_jump_c
    temp = true + (rng.normal(0.0, spec.noise_c, n) if spec.noise_c > 0 else 0.0)
    return FridgeTrace(spec.fridge_id, t, temp, comp, dflag, ambient, spec.tau_s, spec.threshold_c, true)


def fleet_specs(n_fridges: int, seed: int = 0, tau_range=(300.0, 1200.0), ambient_range=(18.0, 25.0),
                **overrides) -> list[FridgeSpec]:
    """Random fleet with log-uniform warming time constants."""
    rng = role_rng(seed, "fleet")
    lo, hi = np.log(tau_range[0]), np.log(tau_range[1])
    out = []
    for k in range(n_fridges):
        out.append(FridgeSpec(fridge_id=f"fridge-{k:04d}", tau_s=float(np.exp(rng.uniform(lo, hi))),
                              ambient_c=float(rng.uniform(*ambient_range)), **overrides))
    return out


def simulate_fleet(specs, defrosts_per_fridge: int, seed: int = 0) -> list[FridgeTrace]:
    traces = []
    for spec in specs:
        duration = (defrosts_per_fridge + 1) * spec.defrost_interval_s
        traces.append(simulate_trace(spec, duration, seed))
    return traces


def write_trace_csv(path, trace: FridgeTrace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_s", "temp_c", "compressor", "defrost_flag", "ambient_c"])
        for row in zip(trace.t, trace.temp, trace.compressor, trace.defrost, trace.ambient):
            w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3]), repr(float(row[4]))])


def read_trace_csv(path, fridge_id: str = "fridge", tau_s: float = float("nan"),
                   threshold_c: float = DEFAULT_THRESHOLD_C, ambient_c: float | None = None) -> FridgeTrace:
    """Read ``timestamp_s,temp_c,compressor,defrost_flag[,ambient_c]``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        need = ["timestamp_s", "temp_c", "compressor", "defrost_flag"]
        if header[:4] != need:
            raise CsvFormatError(f"{path}:1: expected columns {need}")
        has_amb = len(header) > 4 and header[4] == "ambient_c"
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[:5 if has_amb else 4]])
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    a = np.array(rows)
    if has_amb:
        amb = a[:, 4]
    elif ambient_c is not None:
        amb = np.full(len(a), float(ambient_c))
    else:
        raise CsvFormatError(f"{path}: no ambient_c column and no ambient temperature given")
    return FridgeTrace(fridge_id, a[:, 0], a[:, 1], a[:, 2].astype(np.int8), a[:, 3].astype(np.int8), amb,
                       tau_s, threshold_c)
