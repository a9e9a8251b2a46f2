"""Small-scale CLI invocations shared by the CLI and acceptance tests."""

import contextlib
import filecmp
import io
from pathlib import Path

from foodchain.cli import run

SMALL = {
    "forecast": ["forecast.series_length=300", "forecast.epochs=2", "forecast.pretrain_epochs=1",
                 "forecast.encoder_sizes=4", "forecast.predictor_sizes=4", "forecast.attention_size=3",
                 "forecast.mlp_hidden=8", "forecast.horizons=1,2"],
    "adapt": ["adapt.n_per_domain=60", "adapt.epochs=2", "adapt.trunk=8", "adapt.branch=4"],
    "fridge": ["fridge.n_fridges=6", "fridge.defrosts_per_fridge=4", "fridge.epochs=2", "fridge.sizes=4,4"],
}


def small(*sections):
    out = []
    for s in sections:
        for item in SMALL[s]:
            out += ["--set", item]
    return out


def cli(*argv):
    """Run the CLI in-process; returns ``(exit code, stdout, stderr)``."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = run([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def pipeline_commands(base: Path):
    """``(name, argv without --out)`` for every subcommand; inputs live under ``base``."""
    sim, train = base / "sim", base / "train"
    return [
        ("ingest", ["ingest", *small("forecast")]),
        ("train", ["train", *small("forecast")]),
        ("forecast", ["forecast", "--model", train / "model.params", *small("forecast")]),
        ("ablate", ["ablate", *small("forecast")]),
        ("adapt", ["adapt", "--compare", *small("adapt")]),
        ("cluster", ["cluster", *small("adapt")]),
        ("fridge-sim", ["fridge-sim", *small("fridge")]),
        ("fridge-train", ["fridge-train", "--traces", sim / "traces", *small("fridge")]),
        ("fridge-select", ["fridge-select", "--traces", sim / "traces", "--fleet", sim / "fleet.csv",
                           "--registry", base / "ftrain" / "registry", "--set", "fridge.required_kw=1",
                           *small("fridge")]),
        ("report", ["report", "--runs", sim, train]),
    ]


def prepare_inputs(base: Path):
    """Create the runs other subcommands read from."""
    assert cli("fridge-sim", "--out", base / "sim", *small("fridge"))[0] == 0
    assert cli("train", "--out", base / "train", *small("forecast"))[0] == 0
    assert cli("fridge-train", "--out", base / "ftrain", "--traces", base / "sim" / "traces", *small("fridge"))[0] == 0


def tree_differences(a: Path, b: Path):
    """Relative paths whose bytes differ, or that exist on one side only."""
    fa = {p.relative_to(a) for p in a.rglob("*") if p.is_file()}
    fb = {p.relative_to(b) for p in b.rglob("*") if p.is_file()}
    diffs = sorted(str(p) for p in fa ^ fb)
    diffs += sorted(str(p) for p in fa & fb if not filecmp.cmp(a / p, b / p, shallow=False))
    return diffs
