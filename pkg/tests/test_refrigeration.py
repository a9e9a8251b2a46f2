import itertools
import json
import multiprocessing as mp

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foodchain.numerics import ParamSet, SgdConfig
from foodchain.refrigeration.defrost import extract_examples, split_by_fridge, train_defrost_predictor
from foodchain.refrigeration.fleet import FridgeCandidate, read_fleet_csv, select_fleet, write_fleet_csv
from foodchain.refrigeration.registry import ModelRegistry, RegistryCorruptError
from foodchain.refrigeration.thermal import (
    FridgeSpec, FridgeTrace, fleet_specs, off_temperature, read_trace_csv, simulate_fleet, simulate_trace,
    write_trace_csv,
)

ANALYTIC_LABEL = 600 * np.log(17 / 12)


def test_closed_form_warming_point():
    spec = FridgeSpec(tau_s=600, ambient_c=20, initial_c=3, threshold_c=15)
    tr = simulate_trace(spec, 1200, schedule=[0])
    assert tr.t[10] == 600 and tr.defrost[10] == 1
    assert tr.temp[10] == pytest.approx(20 - 17 * np.exp(-1), abs=1e-12)
    assert 20 - 17 * np.exp(-1) == pytest.approx(13.746, abs=1e-3)


def test_off_curve_tends_to_ambient():
    assert off_temperature(1e6, 3.0, 20.0, 600.0) == pytest.approx(20.0, abs=1e-12)


def test_invalid_physics_is_rejected():
    with pytest.raises(ValueError):
        simulate_trace(FridgeSpec(tau_s=0), 600)
    with pytest.raises(ValueError):
        simulate_trace(FridgeSpec(ambient_c=4.0), 600)


def analytic_trace(lead_history_min=40, dt=60.0):
    """Compressor cycling history at 3 C, then an off segment from 3 C toward 20 C."""
    n_hist = lead_history_min
    t = np.arange(n_hist + 20) * dt
    t_off = t[n_hist]
    temp = np.where(t < t_off, 3.0, off_temperature(t - t_off, 3.0, 20.0, 600.0))
    comp = (t < t_off).astype(np.int8)
    dflag = (t >= t_off).astype(np.int8)
    return FridgeTrace("f", t, temp, comp, dflag, np.full(len(t), 20.0), 600.0, 8.0), t_off


def test_analytic_label_recovered_within_one_sample():
    tr, t_off = analytic_trace()
    ex = extract_examples(tr).examples
    assert len(ex) == 1
    assert ANALYTIC_LABEL == pytest.approx(208.9, abs=0.1)
    assert abs(ex[0].label_s - ANALYTIC_LABEL) < tr.dt_s
    assert ex[0].switch_off_s == t_off and ex[0].window.shape == (30, 3)


def test_simulated_noiseless_labels_match_inversion():
    spec = FridgeSpec(tau_s=750, ambient_c=22, defrost_jitter_s=0)
    tr = simulate_trace(spec, 6 * 3600, seed=4)
    ex = extract_examples(tr).examples
    assert len(ex) >= 4
    for e in ex:
        k = int(np.searchsorted(tr.t, e.switch_off_s))
        t0 = tr.temp[k]
        exact = 750 * np.log((22 - t0) / (22 - 8))
        assert abs(e.label_s - exact) < spec.dt_s


def test_lead_shifts_the_window_end_exactly():
    tr, t_off = analytic_trace()
    e0 = extract_examples(tr, lead_s=0).examples[0]
    e2 = extract_examples(tr, lead_s=120).examples[0]
    assert e2.window_end_s == t_off - 120 and e2.lead_s == 120
    assert e2.label_s == e0.label_s
    # one-minute grid: the lead-120 window is the lead-0 window shifted by two rows
    assert np.array_equal(e2.window[2:], e0.window[:-2])


def test_ambient_below_threshold_gives_no_examples():
    spec = FridgeSpec(ambient_c=7.5, threshold_c=8.0)
    out = extract_examples(simulate_trace(spec, 5 * 3600, seed=0))
    assert out.examples == [] and out.skipped > 0
    assert set(out.reasons) == {"no crossing within cap"}


def test_insufficient_history_is_counted():
    tr, _ = analytic_trace(lead_history_min=10)
    out = extract_examples(tr)
    assert out.examples == [] and out.reasons == {"insufficient history": 1}


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), tau=st.floats(200, 1500), amb=st.floats(12, 30))
def test_noiseless_off_segments_never_cool(seed, tau, amb):
    spec = FridgeSpec(tau_s=tau, ambient_c=amb)
    tr = simulate_trace(spec, 4 * 3600, seed=seed)
    for start, stop in tr.off_segments():
        seg = tr.temp[start:stop]
        assert np.all(np.diff(seg) >= 0)


def test_same_seed_same_trace_and_csv_round_trip(tmp_path):
    spec = FridgeSpec(noise_c=0.2, door_rate_per_hour=2.0)
    a, b = simulate_trace(spec, 7200, seed=5), simulate_trace(spec, 7200, seed=5)
    assert np.array_equal(a.temp, b.temp) and np.array_equal(a.defrost, b.defrost)
    p = tmp_path / "t.csv"
    write_trace_csv(p, a)
    back = read_trace_csv(p, "fridge-0", tau_s=600)
    assert np.array_equal(back.temp, a.temp) and np.array_equal(back.defrost, a.defrost)


def test_fridge_level_split_never_mixes_a_fridge():
    traces = simulate_fleet(fleet_specs(20, seed=1), defrosts_per_fridge=4, seed=1)
    ex = [e for tr in traces for e in extract_examples(tr).examples]
    part = split_by_fridge(ex, seed=3)
    by_fridge = {}
    for e, s in zip(ex, part):
        by_fridge.setdefault(e.fridge_id, set()).add(s)
    assert all(len(v) == 1 for v in by_fridge.values())
    assert set(part) == {"train", "val", "test"}


def test_noiseless_single_tau_fleet_is_predicted_closely():
    specs = fleet_specs(30, seed=2, tau_range=(600.0, 600.0))
    traces = simulate_fleet(specs, defrosts_per_fridge=20, seed=2)
    ex = [e for tr in traces for e in extract_examples(tr).examples]
    _, report = train_defrost_predictor(ex, SgdConfig(0.2, 32, 30, seed=0), sizes=(16, 16))
    assert report.rmse_s < 5.0


def test_two_minute_lead_is_no_better_than_zero_lead():
    for seed in range(5):
        traces = simulate_fleet(fleet_specs(30, seed=seed, noise_c=0.05), defrosts_per_fridge=20, seed=seed)
        rmse = {}
        for lead in (0, 120):
            ex = [e for tr in traces for e in extract_examples(tr, lead_s=lead).examples]
            rmse[lead] = train_defrost_predictor(ex, SgdConfig(0.2, 32, 30, seed=seed))[1].rmse_s
        assert rmse[120] >= rmse[0], (seed, rmse)


# fleet selection ---------------------------------------------------------

def brute_force(cands, required, event, margin=0.1):
    elig = [c for c in cands if c.predicted_safe_off_s * (1 - margin) >= event]
    for k in range(len(elig) + 1):
        sums = [sum(c.power_kw for c in combo) for combo in itertools.combinations(elig, k)]
        ok = [s for s in sums if s + 1e-12 >= required]
        if ok:
            return k, min(ok)
    return None, None


def random_fleet(rng, n):
    return [FridgeCandidate(f"f{k:02d}", float(rng.uniform(60, 900)), float(np.round(rng.uniform(0.2, 5), 2)))
            for k in range(n)]


def test_exact_selection_matches_brute_force_on_200_instances():
    rng = np.random.default_rng(0)
    for trial in range(200):
        cands = random_fleet(rng, int(rng.integers(1, 16)))
        event = float(rng.uniform(60, 600))
        required = float(rng.uniform(0, 20))
        plan = select_fleet(cands, required, event)
        k, best_total = brute_force(cands, required, event)
        if k is None:
            assert not plan.feasible and plan.selected == []
            continue
        assert plan.feasible and len(plan.selected) == k, trial
        assert plan.total_reduction_kw == pytest.approx(best_total)
        chosen = {c.fridge_id: c for c in cands if c.fridge_id in plan.selected}
        assert all(c.predicted_safe_off_s * 0.9 >= event for c in chosen.values())
        assert plan.total_reduction_kw + 1e-12 >= required


def test_greedy_cardinality_equals_exact():
    rng = np.random.default_rng(1)
    for _ in range(50):
        cands = random_fleet(rng, 14)
        req = float(rng.uniform(0.5, 20))
        exact = select_fleet(cands, req, 60)
        greedy = select_fleet(cands, req, 60, exact_limit=0)
        assert exact.feasible == greedy.feasible
        if exact.feasible:
            assert greedy.method == "greedy" and len(greedy.selected) == len(exact.selected)


def test_selection_trivial_cases():
    one = [FridgeCandidate("a", 1000.0, 5.0)]
    assert select_fleet(one, 0.0, 300).selected == []
    assert select_fleet(one, 5.0, 300).selected == ["a"]
    plan = select_fleet(one, 6.0, 300)
    assert not plan.feasible and plan.achievable_max_kw == 5.0
    assert not select_fleet([FridgeCandidate("a", 310.0, 5.0)], 1.0, 300).feasible
    with pytest.raises(ValueError):
        select_fleet(one, -1.0, 300)


def test_fleet_csv_round_trip(tmp_path):
    write_fleet_csv(tmp_path / "f.csv", {"a": 1.5, "b": 2.25})
    assert read_fleet_csv(tmp_path / "f.csv") == {"a": 1.5, "b": 2.25}


# registry ----------------------------------------------------------------

def tiny_params(value):
    ps = ParamSet()
    ps.add("w", np.full(3, float(value)))
    return ps


def test_registry_best_ordering_and_ties(tmp_path):
    reg = ModelRegistry(tmp_path, clock=lambda: 0.0)
    with pytest.raises(LookupError):
        reg.best()
    first = reg.publish(tiny_params(1), 10.0, "d")
    assert reg.best() == first
    second = reg.publish(tiny_params(2), 5.0, "d")
    assert reg.best() == second
    third = reg.publish(tiny_params(3), 5.0, "d")
    assert reg.best() == third
    params, _ = reg.load(third)
    assert params["w"].tolist() == [3.0, 3.0, 3.0]
    assert ModelRegistry(tmp_path).best() == third


def test_registry_reports_the_corrupt_line(tmp_path):
    reg = ModelRegistry(tmp_path)
    reg.publish(tiny_params(1), 1.0, "d")
    with open(reg.index_path, "a") as fh:
        fh.write('{"model_id": "x", "trunc\n')
    with pytest.raises(RegistryCorruptError, match=":2:"):
        reg.entries()


def _publisher(root, k, barrier):
    reg = ModelRegistry(root)
    barrier.wait()
    reg.publish(tiny_params(k), float(k), f"data-{k}")


def test_concurrent_publishers_never_corrupt_the_index(tmp_path):
    ctx = mp.get_context("fork")
    for trial in range(100):
        root = tmp_path / f"r{trial}"
        ModelRegistry(root)
        barrier = ctx.Barrier(2)
        procs = [ctx.Process(target=_publisher, args=(root, k, barrier)) for k in (1, 2)]
        for p in procs:
            p.start()
        for p in procs:
            p.join(30)
            assert p.exitcode == 0
        entries = ModelRegistry(root).entries()
        assert sorted(e.data_fingerprint for e in entries) == ["data-1", "data-2"], trial
        assert sorted(e.sequence for e in entries) == [0, 1]
        lines = (root / "index.jsonl").read_text().splitlines()
        assert all(json.loads(line) for line in lines) and len(lines) == 2
        for e in entries:
            ModelRegistry(root).load(e)
