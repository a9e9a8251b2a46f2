"""File-backed model registry: one artifact per model plus an append-only index.

Layout::

    <root>/index.jsonl        one JSON object per published model
    <root>/models/<id>.params serialized parameters

Writers hold an exclusive ``flock`` on ``<root>/.lock`` while they assign
an id, write the artifact (temporary file, then rename) and append the
index line, so concurrent publishers serialize cleanly.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..numerics import ParamSet, dumps_params, load_params


class RegistryCorruptError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegistryEntry:
    model_id: str
    sequence: int
    artifact: str
    val_rmse: float
    data_fingerprint: str
    timestamp: float
    meta: dict = field(default_factory=dict, hash=False, compare=False)


class ModelRegistry:
    def __init__(self, root, clock=time.time):
        self.root = Path(root)
        self.clock = clock
        (self.root / "models").mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.jsonl"

    @contextmanager
    def _lock(self):
        with open(self.root / ".lock", "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def entries(self) -> list[RegistryEntry]:
        if not self.index_path.exists():
            return []
        out = []
        with open(self.index_path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    out.append(RegistryEntry(**raw))
                except (json.JSONDecodeError, TypeError) as exc:
                    raise RegistryCorruptError(f"{self.index_path}:{lineno}: corrupt entry: {exc}") from None
        ids = [e.model_id for e in out]
        if len(set(ids)) != len(ids):
            raise RegistryCorruptError(f"{self.index_path}: duplicate model ids")
        return out

    def publish(self, params: ParamSet, val_rmse: float, data_fingerprint: str, meta: dict | None = None
                ) -> RegistryEntry:
        meta = dict(meta or {})
        payload = dumps_params(params, meta)
        digest = hashlib.sha256(payload).hexdigest()[:12]
        with self._lock():
            seq = len(self.entries())
            model_id = f"m{seq:06d}-{digest}"
            rel = f"models/{model_id}.params"
            tmp = self.root / f"{rel}.tmp{os.getpid()}"
            with open(tmp, "wb") as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.root / rel)
            entry = RegistryEntry(model_id, seq, rel, float(val_rmse), data_fingerprint, float(self.clock()), meta)
            line = json.dumps(asdict(entry), sort_keys=True) + "\n"
            fd = os.open(self.index_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                os.write(fd, line.encode())
                os.fsync(fd)
            finally:
                os.close(fd)
        return entry

    def best(self) -> RegistryEntry:
        """Lowest validation RMSE; ties go to the most recently published."""
        entries = self.entries()
        if not entries:
            raise LookupError("registry is empty")
        return min(entries, key=lambda e: (e.val_rmse, -e.sequence))

    def load(self, entry: RegistryEntry):
        path = self.root / entry.artifact
        if not path.exists():
            raise RegistryCorruptError(f"artifact missing for {entry.model_id}: {path}")
        return load_params(path)
