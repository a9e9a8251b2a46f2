"""Switching fridges off for a demand-response event without spoiling food.

Simulate a small fleet, learn how long each cabinet can stay off before it
warms past the 8 C safety threshold, then choose the fewest fridges that
deliver the requested power reduction for a two-minute event.
"""

import tempfile

import numpy as np

from foodchain.numerics import SgdConfig
from foodchain.refrigeration.defrost import WINDOW_MINUTES, _minute_grid, extract_examples, train_defrost_predictor
from foodchain.refrigeration.fleet import FridgeCandidate, select_fleet
from foodchain.refrigeration.registry import ModelRegistry
from foodchain.refrigeration.thermal import fleet_specs, simulate_fleet

specs = fleet_specs(40, seed=0)
traces = simulate_fleet(specs, defrosts_per_fridge=30, seed=0)
examples = [e for tr in traces for e in extract_examples(tr).examples]
labels = np.array([e.label_s for e in examples])
print(f"{len(examples)} defrost events; safe-off time {labels.min():.0f} to {labels.max():.0f} s")

predictor, report = train_defrost_predictor(examples, SgdConfig(0.1, 32, 10, seed=0))
print(f"test RMSE {report.rmse_s:.1f} s on {report.split_sizes['test']} events from held-out fridges")

with tempfile.TemporaryDirectory() as root:
    registry = ModelRegistry(root)
    entry = registry.publish(predictor.params, report.val_rmse_s, "demo-fleet", predictor.meta())
    print(f"published model {entry.model_id}; best in registry: {registry.best().model_id}")

rng = np.random.default_rng(1)
candidates = []
for tr in traces:
    window = _minute_grid(tr, float(tr.t[-1]), WINDOW_MINUTES)
    safe = float(predictor.predict(window[None])[0])
    candidates.append(FridgeCandidate(tr.fridge_id, safe, float(np.round(rng.uniform(0.5, 3.0), 2))))

for required in (0.0, 10.0, 200.0):
    plan = select_fleet(candidates, required, event_duration_s=120.0)
    status = "feasible" if plan.feasible else f"infeasible (at most {plan.achievable_max_kw:.2f} kW)"
    print(f"need {required:5.1f} kW: {len(plan.selected)} fridges, {plan.total_reduction_kw:.2f} kW, "
          f"{plan.method}, {status}")
