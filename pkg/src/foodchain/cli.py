"""Command-line entry point: ``python -m foodchain <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, describe_keys, resolve
from .numerics import NonFiniteError, SgdConfig, load_params, save_params
from .signal import CsvFormatError, NormalizerState, fit_apply_minmax, make_windows, read_frame_csv, write_frame_csv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_INFEASIBLE = 5
EXIT_NUMERIC = 6
EXIT_REGISTRY = 7

EXIT_HELP = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_FAILURE}  unexpected failure
  {EXIT_USAGE}  usage error (unknown subcommand or flag, bad flag value)
  {EXIT_INPUT}  malformed or missing input file
  {EXIT_CONFIG}  invalid configuration (unknown key, bad value, unknown profile)
  {EXIT_INFEASIBLE}  fleet selection infeasible (plan still written)
  {EXIT_NUMERIC}  training diverged (non-finite loss or gradient)
  {EXIT_REGISTRY}  model registry empty or corrupt

Errors are reported on stderr as one line:
  error code=<name> exit=<n> message=<text>

config keys (section.key, desk default, paper-profile value):
{describe_keys()}
"""

SUBCOMMANDS = {
    "ingest": "validate a series CSV (or write the synthetic one) and its min-max scaling",
    "train": "train one forecaster variant and save its parameters",
    "forecast": "apply a saved forecaster to every window of a series CSV",
    "ablate": "train all variants for every horizon and write the results table",
    "cluster": "k-means centroids per source domain, then prune/adapt on a validation domain",
    "adapt": "multi-source domain adaptation on feature vectors",
    "fridge-sim": "simulate a fleet of refrigerator traces",
    "fridge-train": "train the safe-off duration predictor and publish it to a registry",
    "fridge-select": "choose fridges to switch off for a demand-response event",
    "report": "summarize the manifests and reports of earlier runs",
}


class CliError(Exception):
    def __init__(self, code: int, name: str, message: str):
        super().__init__(message)
        self.code, self.name = code, name


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


# artifacts ---------------------------------------------------------------

class Run:
    """Output directory bookkeeping: artifacts written and the final manifest."""

    def __init__(self, out: Path, subcommand: str, config: RunConfig, inputs=()):
        self.out = out
        self.subcommand = subcommand
        self.config = config
        self.inputs = [Path(p) for p in inputs if p is not None]
        self.artifacts: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(p)
        return p

    def text(self, name: str, content: str):
        self.path(name).write_text(content)

    def json(self, name: str, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")

    def manifest(self, extra=None):
        def digest(p):
            return hashlib.sha256(Path(p).read_bytes()).hexdigest()

        inputs = {}
        for p in self.inputs:
            if p.is_dir():
                for f in sorted(p.rglob("*")):
                    if f.is_file():
                        inputs[str(f)] = digest(f)
            elif p.exists():
                inputs[str(p)] = digest(p)
        body = {
            "subcommand": self.subcommand,
            "profile": self.config.profile,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "config_fingerprint": self.config.fingerprint(),
            "versions": {"foodchain": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
            "inputs": inputs,
            "artifacts": {str(p.relative_to(self.out)): digest(p) for p in sorted(set(self.artifacts))},
        }
        if extra:
            body.update(extra)
        (self.out / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _sgd(cfg: RunConfig, section: str, prefix: str = "") -> SgdConfig:
    return SgdConfig(cfg.get(section, f"{prefix}learning_rate"), cfg.get(section, "batch_size"),
                     cfg.get(section, f"{prefix}epochs"), cfg.seed)


def _registry_clock():
    stamp = float(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return lambda: stamp


# forecasting -------------------------------------------------------------

def _forecast_config(cfg: RunConfig):
    from .seq2seq import ForecasterConfig

    return ForecasterConfig(
        wavelet_levels=cfg.get("forecast", "wavelet_levels"),
        encoder_sizes=cfg.get("forecast", "encoder_sizes"),
        encoder_skip=cfg.get("forecast", "encoder_skip"),
        predictor_sizes=cfg.get("forecast", "predictor_sizes"),
        attention_size=cfg.get("forecast", "attention_size"),
        freeze_encoder=cfg.get("forecast", "freeze_encoder"),
        window=cfg.get("forecast", "window"),
        horizon_steps=cfg.get("forecast", "horizon"),
        step_hours=cfg.get("forecast", "step_hours"),
        sgd=_sgd(cfg, "forecast"),
        pretrain=_sgd(cfg, "forecast", "pretrain_"),
    )


def _load_series(args, cfg: RunConfig):
    if args.input:
        return read_frame_csv(args.input, args.target)
    from .synthetic import greenhouse_series

    return greenhouse_series(cfg.get("forecast", "series_length"), seed=args.data_seed)


def cmd_ingest(args, cfg: RunConfig, run: Run):
    frame = _load_series(args, cfg)
    frame_n, norm = fit_apply_minmax(frame, 0.7)
    write_frame_csv(frame, run.path("series.csv"))
    write_frame_csv(frame_n, run.path("normalized.csv"))
    names = [*frame.channel_names, frame.target_name]
    run.json("normalizer.json", {"columns": names, "mins": norm.mins, "maxs": norm.maxs})
    run.json("summary.json", {"rows": len(frame), "columns": names, "target": frame.target_name,
                              "start": str(frame.timestamps[0]), "end": str(frame.timestamps[-1])})
    return EXIT_OK


def _test_overlay(report, title):
    from .plots import overlay_svg

    return overlay_svg({"truth": report.truth, "prediction": report.predictions}, title)


def cmd_train(args, cfg: RunConfig, run: Run):
    from .seq2seq import VARIANTS, config_to_dict, prepare_dataset, train_forecaster, train_mlp, variant_config

    variant = cfg.get("forecast", "variant")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    frame = _load_series(args, cfg)
    fcfg = variant_config(_forecast_config(cfg), variant)
    data, norm = prepare_dataset(frame, fcfg)
    meta = {"variant": variant, "config": config_to_dict(fcfg), "n_features": int(data.X.shape[2]),
            "columns": [*frame.channel_names, frame.target_name],
            "normalizer": {"mins": norm.mins.tolist(), "maxs": norm.maxs.tolist()}}
    if variant == "MLP":
        hidden = cfg.get("forecast", "mlp_hidden")
        model, report = train_mlp(fcfg, data, hidden)
        meta.update(kind="mlp", hidden=list(hidden), window=fcfg.window)
    else:
        model, report = train_forecaster(fcfg, frame, dataset=data)
        meta.update(kind="forecaster")
    save_params(run.path("model.params"), model.params, meta)
    run.json("report.json", {"variant": variant, **report.to_dict()})
    run.text("curves.csv", _csv_text(["epoch", "train_mse", "val_rmse"],
                                     [[k, f"{a:.10g}", f"{b:.10g}" if b is not None else ""]
                                      for k, (a, b) in enumerate(
                                          zip(report.train_curve, report.val_curve or [None] * len(report.train_curve)))]))
    run.text("test_predictions.csv", _csv_text(
        ["timestamp", "truth", "prediction"],
        [[str(t), f"{a:.10g}", f"{b:.10g}"] for t, a, b in zip(report.target_time, report.truth, report.predictions)]))
    run.text("test_overlay.svg", _test_overlay(report, f"{variant} test split"))
    print(f"{variant}: test RMSE {report.rmse:.6f} (normalized units)")
    return EXIT_OK


def _rebuild_model(params, meta):
    from .recurrent import MlpRegressor
    from .seq2seq import Forecaster, config_from_dict

    fcfg = config_from_dict(meta["config"])
    if meta["kind"] == "mlp":
        model = MlpRegressor(fcfg.window, meta["n_features"], tuple(meta["hidden"]), seed=0)
    else:
        model = Forecaster(fcfg, meta["n_features"])
    model.params.assign(params)
    return model, fcfg


def cmd_forecast(args, cfg: RunConfig, run: Run):
    if not args.model:
        raise CliError(EXIT_USAGE, "usage", "forecast needs --model")
    try:
        params, meta = load_params(args.model)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, "input", f"cannot read model {args.model}: {exc}") from None
    model, fcfg = _rebuild_model(params, meta)
    frame = _load_series(args, cfg)
    if [*frame.channel_names, frame.target_name] != meta["columns"]:
        raise CliError(EXIT_INPUT, "input", f"columns differ from the training series: {meta['columns']}")
    norm = NormalizerState(np.array(meta["normalizer"]["mins"]), np.array(meta["normalizer"]["maxs"]))
    frame_n = frame.with_columns(norm.apply(frame.columns()))
    data = make_windows(frame_n, fcfg.window, fcfg.horizon_steps, fcfg.step_hours, splits=None)
    if meta["kind"] == "mlp":
        pred = model.predict(data.X)
    else:
        pred = model.predict(data.X, preprocessed=False)
    rows = [[str(t), f"{p:.10g}", f"{norm.invert_target(p):.10g}"] for t, p in zip(data.target_time, pred)]
    run.text("predictions.csv", _csv_text(["timestamp", "prediction_normalized", "prediction"], rows))
    return EXIT_OK


def cmd_ablate(args, cfg: RunConfig, run: Run):
    from .plots import overlay_svg
    from .seq2seq import VARIANTS, ablate

    frame = _load_series(args, cfg)
    result = ablate(frame, cfg.get("forecast", "horizons"), _forecast_config(cfg),
                    mlp_hidden=cfg.get("forecast", "mlp_hidden"))
    run.text("table.csv", result.table_csv())
    run.text("table.txt", result.table_text())
    for h in result.horizons:
        run.text(f"traces_h{h}.csv", result.traces_csv(h))
        first = result.reports[(next(iter(VARIANTS)), h)]
        series = {"truth": first.truth}
        series.update({v: result.reports[(v, h)].predictions for v in VARIANTS})
        run.text(f"overlay_h{h}.svg", overlay_svg(series, f"test split, horizon {h}"))
    run.json("reports.json", {f"{v}@h{h}": r.to_dict() for (v, h), r in sorted(result.reports.items())})
    sys.stdout.write(result.table_text())
    return EXIT_OK


# feature-vector tasks ----------------------------------------------------

def _feature_domains(args, cfg: RunConfig):
    from .adapt import read_feature_csv
    from .synthetic import moons_domains

    if args.input:
        return read_feature_csv(args.input)
    sources, target = moons_domains(args.data_seed, cfg.get("adapt", "n_per_domain"))
    out = {f"source{k}": s for k, s in enumerate(sources)}
    out["target"] = target
    return out


def cmd_adapt(args, cfg: RunConfig, run: Run):
    from .adapt import LossWeights, evaluate_losses, train_multisource

    domains = _feature_domains(args, cfg)
    tname = cfg.get("adapt", "target_domain")
    if tname not in domains:
        raise CliError(EXIT_INPUT, "input", f"no domain named {tname!r} in the feature data")
    sources = [(name, d) for name, d in domains.items() if name != tname]
    if not sources:
        raise CliError(EXIT_INPUT, "input", "need at least one labeled source domain")
    for name, (_, y) in sources:
        if np.any(y < 0):
            raise CliError(EXIT_INPUT, "input", f"source domain {name!r} has unlabeled rows")
    Xt, yt = domains[tname]
    labels = yt if np.all(yt >= 0) else None
    sgd = _sgd(cfg, "adapt")
    weights = LossWeights(*(cfg.get("adapt", f"weight_{k}") for k in ("mmd", "coral", "cd", "cl")))
    kw = dict(trunk=cfg.get("adapt", "trunk"), branch=cfg.get("adapt", "branch"), weights=weights)
    result = train_multisource([d for _, d in sources], Xt, sgd, labels, **kw)
    run.text("loss_curve.csv", result.curve_csv())
    final = evaluate_losses(result.model, [d for _, d in sources], Xt)
    summary = {"sources": [n for n, _ in sources], "target": tname, "final_losses": final.row(),
               "multi_source_accuracy": result.target_accuracy if labels is not None else None}
    if args.compare and labels is not None:
        Xc = np.concatenate([d[0] for _, d in sources])
        yc = np.concatenate([d[1] for _, d in sources])
        summary["combined_accuracy"] = train_multisource([(Xc, yc)], Xt, sgd, labels, **kw).target_accuracy
        singles = {n: train_multisource([d], Xt, sgd, labels, **kw).target_accuracy for n, d in sources}
        summary["single_accuracy"] = singles
        summary["single_accuracy_mean"] = float(np.mean(list(singles.values())))
    run.json("summary.json", summary)
    proba = result.model.predict_proba(Xt)
    run.text("target_predictions.csv", _csv_text(
        ["index", "p0", "p1", "predicted", "label"],
        [[k, f"{p[0]:.8f}", f"{p[1]:.8f}", int(np.argmax(p)), int(yt[k])] for k, p in enumerate(proba)]))
    rows, dim = [], 0
    for name, (X, y) in domains.items():
        Z = result.model.latent(X)
        dim = Z.shape[1]
        rows += [[*(f"{v:.10g}" for v in z), int(lab), name] for z, lab in zip(Z, y)]
    run.text("latents.csv", _csv_text([*(f"z{k}" for k in range(dim)), "label", "domain"], rows))
    if labels is not None:
        print(f"target accuracy (averaged classifiers): {result.target_accuracy:.4f}")
    return EXIT_OK


def cmd_cluster(args, cfg: RunConfig, run: Run):
    from .clustering import CentroidSet, kmeans_fit, nearest_accuracy, prune_adapt, save_centroids

    domains = _feature_domains(args, cfg)
    vname = cfg.get("cluster", "val_domain")
    if vname not in domains:
        raise CliError(EXIT_INPUT, "input", f"no domain named {vname!r} in the feature data")
    Xv, yv = domains[vname]
    if np.any(yv < 0):
        raise CliError(EXIT_INPUT, "input", "the validation domain must be labeled")
    L = cfg.get("cluster", "n_clusters")
    sets = []
    for k, (name, (X, y)) in enumerate(domains.items()):
        if name == vname:
            continue
        sets.append(kmeans_fit(X, y, min(L, len(X)), seed=cfg.seed + k, origin=name,
                               max_iter=cfg.get("cluster", "max_iter")))
    if not sets:
        raise CliError(EXIT_INPUT, "input", "need at least one domain besides the validation domain")
    merged = CentroidSet.merge(*sets)
    pruned, trace = prune_adapt(merged, Xv, yv)
    save_centroids(run.path("merged_centroids.params"), merged)
    save_centroids(run.path("pruned_centroids.params"), pruned)
    run.text("prune_trace.csv", trace.to_csv())
    per_source = {s.origins[0]: nearest_accuracy(s, Xv, yv) for s in sets}
    run.json("summary.json", {"validation_domain": vname, "merged_centroids": len(merged),
                              "pruned_centroids": len(pruned), "removed_ids": trace.removed,
                              "accuracy_before": trace.initial_accuracy,
                              "accuracy_after": nearest_accuracy(pruned, Xv, yv),
                              "per_source_accuracy": per_source})
    print(f"centroids {len(merged)} -> {len(pruned)}, validation accuracy "
          f"{trace.initial_accuracy:.4f} -> {nearest_accuracy(pruned, Xv, yv):.4f}")
    return EXIT_OK


# refrigeration -----------------------------------------------------------

def _fleet_specs(cfg: RunConfig):
    from .refrigeration.thermal import fleet_specs

    return fleet_specs(cfg.get("fridge", "n_fridges"), seed=cfg.seed,
                       tau_range=(cfg.get("fridge", "tau_min_s"), cfg.get("fridge", "tau_max_s")),
                       noise_c=cfg.get("fridge", "noise_c"),
                       door_rate_per_hour=cfg.get("fridge", "door_rate_per_hour"),
                       threshold_c=cfg.get("fridge", "threshold_c"))


def cmd_fridge_sim(args, cfg: RunConfig, run: Run):
    from .numerics import role_rng
    from .refrigeration.fleet import write_fleet_csv
    from .refrigeration.thermal import simulate_fleet, write_trace_csv

    specs = _fleet_specs(cfg)
    traces = simulate_fleet(specs, cfg.get("fridge", "defrosts_per_fridge"), seed=cfg.seed)
    for tr in traces:
        write_trace_csv(run.path(f"traces/{tr.fridge_id}.csv"), tr)
    rng = role_rng(cfg.seed, "fleet-power")
    lo, hi = cfg.get("fridge", "power_min_kw"), cfg.get("fridge", "power_max_kw")
    powers = {s.fridge_id: round(float(rng.uniform(lo, hi)), 3) for s in specs}
    write_fleet_csv(run.path("fleet.csv"), powers)
    run.json("specs.json", [{"fridge_id": s.fridge_id, "tau_s": s.tau_s, "ambient_c": s.ambient_c,
                             "threshold_c": s.threshold_c} for s in specs])
    return EXIT_OK


def _read_traces(directory, cfg: RunConfig):
    from .refrigeration.thermal import read_trace_csv

    d = Path(directory)
    files = sorted(d.glob("*.csv"))
    if not files:
        raise CliError(EXIT_INPUT, "input", f"no trace CSV files in {d}")
    return [read_trace_csv(f, fridge_id=f.stem, threshold_c=cfg.get("fridge", "threshold_c")) for f in files]


def cmd_fridge_train(args, cfg: RunConfig, run: Run):
    from .plots import overlay_svg
    from .refrigeration.defrost import extract_examples, train_defrost_predictor
    from .refrigeration.registry import ModelRegistry
    from .refrigeration.thermal import simulate_fleet

    if args.traces:
        traces = _read_traces(args.traces, cfg)
    else:
        traces = simulate_fleet(_fleet_specs(cfg), cfg.get("fridge", "defrosts_per_fridge"), seed=cfg.seed)
    lead = cfg.get("fridge", "lead_s")
    examples, skipped = [], 0
    for tr in traces:
        ext = extract_examples(tr, lead)
        examples += ext.examples
        skipped += ext.skipped
    examples = examples[:cfg.get("fridge", "max_examples")]
    if not examples:
        raise CliError(EXIT_INPUT, "input", "no defrost events with a threshold crossing")
    sgd = SgdConfig(cfg.get("fridge", "learning_rate"), cfg.get("fridge", "batch_size"),
                    cfg.get("fridge", "epochs"), cfg.seed)
    predictor, report = train_defrost_predictor(examples, sgd, cfg.get("fridge", "sizes"))
    meta = predictor.meta()
    save_params(run.path("defrost_model.params"), predictor.params, meta)
    registry = ModelRegistry(Path(args.registry) if args.registry else run.out / "registry", clock=_registry_clock())
    fingerprint = hashlib.sha256(json.dumps([[e.fridge_id, e.label_s] for e in examples]).encode()).hexdigest()[:16]
    entry = registry.publish(predictor.params, report.val_rmse_s, fingerprint, meta)
    if not args.registry:
        run.artifacts += [run.out / "registry" / "index.jsonl", run.out / "registry" / entry.artifact]
    run.json("report.json", {**report.to_dict(), "examples": len(examples), "skipped_segments": skipped,
                             "lead_s": lead, "registry_id": entry.model_id})
    order = np.argsort(report.truth)
    run.text("test_overlay.svg", overlay_svg({"label_s": report.truth[order], "predicted_s": report.predictions[order]},
                                             "safe-off duration, test fridges (sorted by label)"))
    print(f"test RMSE {report.rmse_s:.2f} s on {report.split_sizes['test']} examples; registry id {entry.model_id}")
    return EXIT_OK


def cmd_fridge_select(args, cfg: RunConfig, run: Run):
    from .refrigeration.defrost import WINDOW_MINUTES, DefrostPredictor, _minute_grid
    from .refrigeration.fleet import FridgeCandidate, read_fleet_csv, select_fleet
    from .refrigeration.registry import ModelRegistry, RegistryCorruptError

    if not args.traces or not args.fleet:
        raise CliError(EXIT_USAGE, "usage", "fridge-select needs --traces and --fleet")
    powers = read_fleet_csv(args.fleet)
    traces = {tr.fridge_id: tr for tr in _read_traces(args.traces, cfg)}
    if args.model:
        params, meta = load_params(args.model)
    elif args.registry:
        try:
            reg = ModelRegistry(args.registry)
            entry = reg.best()
            params, meta = reg.load(entry)
        except (LookupError, RegistryCorruptError) as exc:
            raise CliError(EXIT_REGISTRY, "registry", str(exc)) from None
    else:
        raise CliError(EXIT_USAGE, "usage", "fridge-select needs --model or --registry")
    predictor = DefrostPredictor.from_params(params, meta)
    candidates = []
    for fid, power in powers.items():
        if fid not in traces:
            raise CliError(EXIT_INPUT, "input", f"no trace for fridge {fid!r}")
        tr = traces[fid]
        window = _minute_grid(tr, float(tr.t[-1]), WINDOW_MINUTES)
        if window is None:
            raise CliError(EXIT_INPUT, "input", f"trace of {fid!r} is shorter than {WINDOW_MINUTES} minutes")
        candidates.append(FridgeCandidate(fid, float(predictor.predict(window[None])[0]), power))
    plan = select_fleet(candidates, cfg.get("fridge", "required_kw"), cfg.get("fridge", "event_s"),
                        cfg.get("fridge", "safety_margin"))
    plan.to_csv(run.path("plan.csv"), candidates)
    run.json("plan.json", {"selected": plan.selected, "total_reduction_kw": plan.total_reduction_kw,
                           "required_kw": plan.required_kw, "event_duration_s": plan.event_duration_s,
                           "feasible": plan.feasible, "achievable_max_kw": plan.achievable_max_kw,
                           "method": plan.method, "eligible": plan.eligible})
    if not plan.feasible:
        run.manifest()
        raise CliError(EXIT_INFEASIBLE, "infeasible",
                       f"need {plan.required_kw} kW but eligible fridges supply {plan.achievable_max_kw:.3f} kW")
    print(f"selected {len(plan.selected)} fridges, {plan.total_reduction_kw:.3f} kW")
    return EXIT_OK


def cmd_report(args, cfg: RunConfig, run: Run):
    if not args.runs:
        raise CliError(EXIT_USAGE, "usage", "report needs at least one --runs directory")
    lines = ["# Run report", ""]
    for d in args.runs:
        d = Path(d)
        mpath = d / "manifest.json"
        if not mpath.exists():
            raise CliError(EXIT_INPUT, "input", f"no manifest.json in {d}")
        man = json.loads(mpath.read_text())
        lines += [f"## {d.name}: {man['subcommand']}", "",
                  f"- profile {man['profile']}, seed {man['seed']}, config {man['config_fingerprint']}",
                  f"- artifacts: {', '.join(sorted(man['artifacts']))}"]
        for name in ("report.json", "summary.json", "plan.json"):
            p = d / name
            if p.exists():
                body = json.loads(p.read_text())
                flat = {k: v for k, v in sorted(body.items()) if isinstance(v, (int, float, str, bool)) or v is None}
                lines += [f"- {name}: " + ", ".join(f"{k}={v}" for k, v in flat.items())]
        if (d / "table.txt").exists():
            lines += ["", "```", (d / "table.txt").read_text().rstrip(), "```"]
        lines.append("")
    run.text("report.md", "\n".join(lines))
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "train": cmd_train, "forecast": cmd_forecast, "ablate": cmd_ablate,
    "cluster": cmd_cluster, "adapt": cmd_adapt, "fridge-sim": cmd_fridge_sim,
    "fridge-train": cmd_fridge_train, "fridge-select": cmd_fridge_select, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="foodchain", description="Forecasting, adaptation and refrigeration experiments.",
                     epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"foodchain {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=EXIT_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--profile", default="desk", help="desk (default) or paper")
        p.add_argument("--config", help="INI file with [section] key = value overrides")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, default=0, help="seed for initialization, shuffling and simulation")
        if name in ("ingest", "train", "forecast", "ablate", "cluster", "adapt"):
            p.add_argument("--input", help="input CSV (default: bundled synthetic data)")
            p.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic data")
        if name in ("ingest", "train", "forecast", "ablate"):
            p.add_argument("--target", help="target column name (default: last column)")
        if name == "forecast":
            p.add_argument("--model", help="model.params written by train")
        if name == "adapt":
            p.add_argument("--compare", action="store_true", help="also train combined and single-source baselines")
        if name in ("fridge-train", "fridge-select"):
            p.add_argument("--traces", help="directory of trace CSVs (fridge-sim output traces/)")
            p.add_argument("--registry", help="model registry directory")
        if name == "fridge-select":
            p.add_argument("--fleet", help="fleet CSV (fridge_id,power_kw)")
            p.add_argument("--model", help="defrost_model.params (instead of the registry's best)")
        if name == "report":
            p.add_argument("--runs", nargs="+", help="run directories to summarize")
    return parser


def _inputs(args):
    return [getattr(args, k, None) for k in ("input", "model", "traces", "fleet", "config")]


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise CliError(EXIT_USAGE, "usage", "missing subcommand; see --help")
        cfg = resolve(args.profile, args.seed, args.config, overrides=args.set)
        for p in _inputs(args):
            if p is not None and not Path(p).exists():
                raise CliError(EXIT_INPUT, "input", f"no such file or directory: {p}")
        out = Path(args.out)
        r = Run(out, args.command, cfg, _inputs(args))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            code = COMMANDS[args.command](args, cfg, r)
        r.manifest()
        return code
    except CliError as exc:
        return _fail(exc.code, exc.name, str(exc))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except CsvFormatError as exc:
        return _fail(EXIT_INPUT, "input", str(exc))
    except NonFiniteError as exc:
        return _fail(EXIT_NUMERIC, "numeric", str(exc))
    except (ValueError, OSError) as exc:
        return _fail(EXIT_FAILURE, "failure", str(exc))


def _fail(code, name, message) -> int:
    message = " ".join(str(message).split())
    print(f"error code={name} exit={code} message={message}", file=sys.stderr)
    return code


def main():
    sys.exit(run())
