"""Run configuration: named profiles, INI files, environment and flag overrides.

Resolution order, later wins:

1. profile defaults (``desk`` or ``paper``)
2. an INI file (``[section]`` / ``key = value``)
3. environment variables ``FOODCHAIN_<SECTION>_<KEY>``
4. ``--set section.key=value`` flags
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field

ENV_PREFIX = "FOODCHAIN_"

# (section, key) -> (type, desk value, paper value, help)
KEYS = {
    ("forecast", "series_length"): (int, 5000, 5000, "synthetic greenhouse series length (hours)"),
    ("forecast", "window"): (int, 15, 15, "input window length (samples)"),
    ("forecast", "step_hours"): ("ints", (1, 6, 12), (1, 6, 12), "lead in hours for horizon index 1, 2, 3"),
    ("forecast", "horizons"): ("ints", (1, 2, 3), (1, 2, 3), "horizon indices trained by ablate"),
    ("forecast", "horizon"): (int, 1, 1, "horizon index used by train"),
    ("forecast", "variant"): (str, "WT-ED-LSTM-AM", "WT-ED-LSTM-AM", "variant trained by train"),
    ("forecast", "wavelet_levels"): (int, 1, 1, "Haar levels whose detail is discarded"),
    ("forecast", "encoder_sizes"): ("ints", (16, 16), (128, 32), "encoder LSTM layer widths"),
    ("forecast", "encoder_skip"): (bool, True, True, "feed the window next to the embeddings"),
    ("forecast", "predictor_sizes"): ("ints", (16,), (128,), "predictor LSTM layer widths"),
    ("forecast", "attention_size"): (int, 8, 32, "attention alignment width"),
    ("forecast", "freeze_encoder"): (bool, False, False, "keep pretrained encoder weights fixed"),
    ("forecast", "learning_rate"): (float, 0.3, 0.01, "SGD step size"),
    ("forecast", "batch_size"): (int, 32, 32, "minibatch size"),
    ("forecast", "epochs"): (int, 40, 100, "training epochs"),
    ("forecast", "pretrain_learning_rate"): (float, 1.0, 0.1, "autoencoder SGD step size"),
    ("forecast", "pretrain_epochs"): (int, 10, 50, "autoencoder epochs"),
    ("forecast", "mlp_hidden"): ("ints", (64, 64), (64, 64), "MLP baseline hidden widths"),
    ("adapt", "n_per_domain"): (int, 300, 300, "samples per synthetic domain"),
    ("adapt", "trunk"): ("ints", (32,), (2048, 2048), "shared dense trunk widths"),
    ("adapt", "branch"): (int, 16, 2048, "per-source branch width"),
    ("adapt", "learning_rate"): (float, 0.3, 0.01, "SGD step size"),
    ("adapt", "batch_size"): (int, 32, 32, "minibatch size per domain"),
    ("adapt", "epochs"): (int, 60, 100, "training epochs"),
    ("adapt", "weight_mmd"): (float, 1.0, 1.0, "MMD coefficient"),
    ("adapt", "weight_coral"): (float, 1.0, 1.0, "CORAL coefficient"),
    ("adapt", "weight_cd"): (float, 1.0, 1.0, "class-discrepancy coefficient"),
    ("adapt", "weight_cl"): (float, 1.0, 1.0, "classification coefficient"),
    ("adapt", "target_domain"): (str, "target", "target", "domain tag of the unlabeled target"),
    ("cluster", "n_clusters"): (int, 4, 7, "centroids per source domain"),
    ("cluster", "val_domain"): (str, "target", "target", "domain tag used for pruning"),
    ("cluster", "max_iter"): (int, 300, 300, "Lloyd iteration cap"),
    ("fridge", "n_fridges"): (int, 110, 1100, "simulated fleet size"),
    ("fridge", "defrosts_per_fridge"): (int, 101, 101, "defrost events simulated per fridge"),
    ("fridge", "tau_min_s"): (float, 300.0, 300.0, "shortest warming time constant"),
    ("fridge", "tau_max_s"): (float, 1200.0, 1200.0, "longest warming time constant"),
    ("fridge", "noise_c"): (float, 0.05, 0.05, "sensor noise standard deviation"),
    ("fridge", "door_rate_per_hour"): (float, 0.2, 0.2, "door openings per hour"),
    ("fridge", "threshold_c"): (float, 8.0, 8.0, "food-safety threshold"),
    ("fridge", "lead_s"): (float, 0.0, 120.0, "prediction lead before switch-off"),
    ("fridge", "max_examples"): (int, 11000, 110000, "examples used for training"),
    ("fridge", "sizes"): ("ints", (16, 16), (64, 64), "two LSTM layer widths"),
    ("fridge", "learning_rate"): (float, 0.1, 0.01, "SGD step size"),
    ("fridge", "batch_size"): (int, 32, 32, "minibatch size"),
    ("fridge", "epochs"): (int, 15, 100, "training epochs"),
    ("fridge", "safety_margin"): (float, 0.1, 0.1, "fraction shaved off predicted safe-off time"),
    ("fridge", "required_kw"): (float, 10.0, 10.0, "power reduction requested"),
    ("fridge", "event_s"): (float, 120.0, 120.0, "demand-response event duration"),
    ("fridge", "power_min_kw"): (float, 0.5, 0.5, "smallest simulated unit power"),
    ("fridge", "power_max_kw"): (float, 3.0, 3.0, "largest simulated unit power"),
}
PROFILES = ("desk", "paper")


class ConfigError(ValueError):
    pass


def _parse(kind, raw: str):
    raw = raw.strip()
    if kind == "ints":
        try:
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        except ValueError:
            raise ConfigError(f"expected comma-separated integers, got {raw!r}") from None
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}") from None


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value).lower() if isinstance(value, bool) else str(value)


@dataclass
class RunConfig:
    profile: str = "desk"
    seed: int = 0
    values: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    def section(self, name: str) -> dict:
        return {k: v for (s, k), v in self.values.items() if s == name}

    def to_dict(self) -> dict:
        out = {"profile": self.profile, "seed": self.seed}
        for (s, k), v in sorted(self.values.items()):
            out[f"{s}.{k}"] = list(v) if isinstance(v, tuple) else v
        return out

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def resolve(profile: str = "desk", seed: int = 0, config_file=None, env=None, overrides=()) -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    column = 1 if profile == "desk" else 2
    values = {k: spec[column] for k, spec in KEYS.items()}
    sources = {k: f"profile:{profile}" for k in KEYS}

    def put(section, key, raw, origin):
        if (section, key) not in KEYS:
            raise ConfigError(f"unknown config key {section}.{key}")
        values[(section, key)] = _parse(KEYS[(section, key)][0], raw)
        sources[(section, key)] = origin

    if config_file is not None:
        parser = configparser.ConfigParser()
        if not os.path.exists(config_file):
            raise ConfigError(f"config file not found: {config_file}")
        parser.read(config_file)
        for section in parser.sections():
            for key, raw in parser.items(section):
                put(section, key, raw, f"file:{config_file}")
    env = os.environ if env is None else env
    for (section, key) in KEYS:
        name = f"{ENV_PREFIX}{section.upper()}_{key.upper()}"
        if name in env:
            put(section, key, env[name], f"env:{name}")
    for item in overrides:
        name, sep, raw = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        put(section, key, raw, "flag")
    return RunConfig(profile, seed, values, sources)


def describe_keys() -> str:
    """One line per key: name, desk default, paper value, description."""
    width = max(len(f"{s}.{k}") for s, k in KEYS)
    lines = [f"  {'key':<{width}}  {'desk':>16}  {'paper':>16}  description"]
    for (s, k), (_, desk, paper, text) in KEYS.items():
        lines.append(f"  {s + '.' + k:<{width}}  {_format(desk):>16}  {_format(paper):>16}  {text}")
    return "\n".join(lines)
