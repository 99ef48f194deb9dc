import math

import numpy as np
import pytest

from dprsim.afu import AfuSpec, BitstreamVersion
from dprsim.experiments import (
    OverheadModel,
    layout_pool,
    placement_setup,
    run_overhead_experiment,
    run_placement_experiment,
    transition_bytes,
    transition_time,
)
from dprsim.fabric import ResourceVector
from dprsim.footprint import Footprint
from dprsim.layouts import naive_layout
from dprsim.packing import Assignment, Combination, Placement, StandardSystem
from dprsim.workloads import Difficulty, Family, WorkloadSpec, build_library
from helpers import cells_of

MiB = 2**20
EASY_BRAM = WorkloadSpec(Family.BRAM, Difficulty.EASY)


def version(afu_id, iface, nbytes, cells=((0, 0),)):
    afu = AfuSpec(afu_id, ResourceVector(1, 0, 0))
    return BitstreamVersion(afu, Footprint(iface, cells_of(*cells)), nbytes)


def placement(*versions):
    return Placement(tuple(Assignment(i, v) for i, v in enumerate(versions)))


def test_identical_placements_cost_nothing():
    p = placement(version("a", 0, MiB), version("b", 1, 3 * MiB))
    assert transition_time(p, p) == 0.0


def test_one_mebibyte_takes_one_128th_second():
    empty = placement()
    p = placement(version("a", 0, MiB))
    assert math.isclose(transition_time(empty, p), 1 / 128)


def test_vacating_is_free_and_loads_add_up():
    a, b = version("a", 0, MiB), version("b", 1, 2 * MiB)
    assert transition_time(placement(a, b), placement()) == 0.0
    both = transition_time(placement(), placement(a, b))
    assert math.isclose(both, transition_time(placement(), placement(a))
                        + transition_time(placement(), placement(b)))


def test_only_changed_interfaces_are_billed():
    a, b = version("a", 0, MiB), version("b", 1, 2 * MiB)
    c = version("c", 1, 5 * MiB)
    moved = version("a", 0, MiB, cells=((0, 0), (0, 1)))
    assert transition_bytes(placement(a, b), placement(a, c)) == 5 * MiB
    # same AFU in a different footprint is a reload
    assert transition_bytes(placement(a, b), placement(moved, b)) == MiB


def test_overhead_model_validation_and_energy():
    with pytest.raises(ValueError):
        OverheadModel(pcap_bandwidth=0)
    m = OverheadModel(energy_per_byte=2e-9)
    assert m.joules(10**9) == 2.0
    assert OverheadModel().joules(5) is None


def test_standard_bills_whole_partitions(bram_device):
    layout = naive_layout(bram_device)
    system = StandardSystem(bram_device, layout)
    lib = {a.id: a for a in build_library(EASY_BRAM)}
    before = Combination(tuple(lib[i] for i in ("bram-5", "none", "none", "none", "none", "none")))
    after = Combination(tuple(lib[i] for i in ("bram-5", "bram-5", "none", "none", "none", "none")))
    p1 = system.place(before)
    p2 = system.place(after, {0: p1.by_slot()[0].interface_id})
    changed = p2.by_slot()[1].interface_id
    assert transition_bytes(p1, p2) == system.bytes[changed]


# -- placement experiment ---------------------------------------------------

@pytest.fixture(scope="module")
def small_runs(devices):
    out = {}
    for name in ("bram", "dsp"):
        spec = WorkloadSpec(Family(name), Difficulty.EASY)
        out[name] = run_placement_experiment(devices[name], spec, n_combos=200, n_layouts=60, seed=3)
    return out


@pytest.mark.parametrize("name", ["bram", "dsp"])
def test_rates_are_ordered(small_runs, name):
    r = small_runs[name].rates
    assert 0 <= r["naive"] <= r["best-effort"] <= r["amorphous"] <= 1


def test_amorphous_dominates_per_combination(bram_device):
    setup = placement_setup(bram_device, EASY_BRAM, 150, 40, seed=8)
    best = setup.verdicts[:, setup.best_index]
    for combo, ok in zip(setup.combos, best):
        if ok:
            assert setup.packer(combo)


def test_no_random_layouts_means_naive_is_best(bram_device):
    r = run_placement_experiment(bram_device, EASY_BRAM, n_combos=100, n_layouts=0, seed=1)
    assert r.extra["bestLayoutIndex"] == 0
    assert r.rates["naive"] == r.rates["best-effort"]


def test_placement_is_deterministic(bram_device, small_runs):
    again = run_placement_experiment(bram_device, EASY_BRAM, n_combos=200, n_layouts=60, seed=3)
    assert again.to_dict() == small_runs["bram"].to_dict()


def test_pool_starts_with_naive(bram_device):
    pool = layout_pool(bram_device, 5, seed=0)
    assert len(pool) == 6 and pool[0].key == naive_layout(bram_device).key
    with pytest.raises(ValueError):
        layout_pool(bram_device, -1, seed=0)


def test_rows_are_long_format(small_runs):
    rows = small_runs["bram"].rows()
    assert {r["system"] for r in rows} == {"naive", "best-effort", "amorphous"}
    assert all(r["metric"] == "placementRate" for r in rows)


# -- overhead experiment ----------------------------------------------------

@pytest.fixture(scope="module")
def overhead_runs(bram_device):
    return {
        d: run_overhead_experiment(bram_device, EASY_BRAM, length=150, afu_delta=d, seed=2,
                                   n_combos=200, n_layouts=60)
        for d in (1, 3)
    }


def test_amorphous_reconfigures_faster(overhead_runs):
    for r in overhead_runs.values():
        assert r.ratio > 1
        assert r.extra["transitions"] == 149


def test_more_changes_cost_more(overhead_runs):
    for system in ("best-effort", "amorphous"):
        assert overhead_runs[3].mean_times[system] > overhead_runs[1].mean_times[system]


def test_overhead_is_deterministic(bram_device, overhead_runs):
    again = run_overhead_experiment(bram_device, EASY_BRAM, length=150, afu_delta=1, seed=2,
                                    n_combos=200, n_layouts=60)
    assert again.to_dict() == overhead_runs[1].to_dict()


def test_overhead_rows_include_ratio(overhead_runs):
    rows = overhead_runs[1].rows()
    (ratio,) = [r for r in rows if r["metric"] == "standardOverAmorphous"]
    assert math.isclose(ratio["value"], overhead_runs[1].ratio)
    quantiles = overhead_runs[1].time_quantiles["amorphous"]
    assert quantiles == sorted(quantiles)


def test_energy_is_reported_when_configured(bram_device):
    r = run_overhead_experiment(bram_device, EASY_BRAM, length=30, seed=4, n_combos=50, n_layouts=10,
                                model=OverheadModel(energy_per_byte=1e-9))
    t = r.mean_times["amorphous"]
    assert math.isclose(r.mean_energy["amorphous"], t * 128 * MiB * 1e-9)
