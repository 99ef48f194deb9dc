import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dprsim.afu import AfuSpec, BitstreamDb, BitstreamVersion, Infeasible, build_db_from_layouts
from dprsim.fabric import InterfaceKind, ResourceVector
from dprsim.footprint import Footprint, bitstream_bytes
from dprsim.layouts import naive_layout, random_layouts
from dprsim.packing import (
    AmorphousPacker,
    Combination,
    StandardSystem,
    brute_force_pack,
    check_placement,
    feasible_amorphous,
    feasible_standard,
    placement_rate,
    standard_feasibility_matrix,
)
from dprsim.workloads import Difficulty, Family, WorkloadSpec, build_library, sample_combinations
from helpers import random_db, toy_device, unit_afus

NONE = AfuSpec("none", ResourceVector())


def bram_afu(n):
    return AfuSpec(f"bram-{n}", ResourceVector(500, n, 0), InterfaceKind.MEMORY)


@pytest.fixture(scope="module")
def naive(bram_device):
    return naive_layout(bram_device)


@pytest.fixture(scope="module")
def pool(bram_device, naive):
    return [naive] + random_layouts(bram_device, 60, np.random.default_rng(5))


@pytest.fixture(scope="module")
def library():
    return build_library(WorkloadSpec(Family.BRAM, Difficulty.HARDER))


@pytest.fixture(scope="module")
def db(bram_device, pool, library):
    return build_db_from_layouts(bram_device, pool, library)


@pytest.fixture(scope="module")
def packer(db):
    return AmorphousPacker(db)


@pytest.fixture(scope="module")
def combos(library):
    return sample_combinations(library, 200, 6, np.random.default_rng(11))


def test_empty_combination_is_feasible(bram_device, naive, db):
    empty = Combination((NONE,) * 6)
    assert StandardSystem(bram_device, naive).feasible(empty)
    placed = feasible_amorphous(db, empty)
    assert placed and placed.assignments == ()
    assert brute_force_pack(db, empty)


def test_six_twenty_bram_afus_do_not_fit_naive(bram_device, naive):
    combo = Combination((bram_afu(20),) * 6)
    system = StandardSystem(bram_device, naive)
    out = feasible_standard(naive, combo, system.fit)
    assert isinstance(out, Infeasible) and out.afu_id == "bram-20"
    assert not system.feasible(combo)


def test_oversized_afu_needs_amorphous(bram_device, naive, packer):
    combo = Combination((bram_afu(20), NONE, NONE, NONE, NONE, NONE))
    assert not StandardSystem(bram_device, naive).feasible(combo)
    placed = packer.placement(combo)
    assert placed and check_placement(bram_device, combo, placed) == []


def test_standard_paths_agree(bram_device, pool, combos):
    matrix = standard_feasibility_matrix(bram_device, pool[:10], combos)
    assert matrix.shape == (len(combos), 10)
    for j, layout in enumerate(pool[:10]):
        system = StandardSystem(bram_device, layout)
        for i, combo in enumerate(combos):
            direct = bool(feasible_standard(layout, combo, system.fit))
            assert direct == system.feasible(combo) == bool(matrix[i, j])


def test_standard_placement_is_clean(bram_device, pool, combos):
    system = StandardSystem(bram_device, pool[3])
    for combo in combos:
        out = system.place(combo)
        assert bool(out) == system.feasible(combo)
        if out:
            assert check_placement(bram_device, combo, out) == []


def test_amorphous_dominates_every_pool_layout(bram_device, pool, packer, combos):
    for layout in pool:
        system = StandardSystem(bram_device, layout)
        for combo in combos:
            if system.feasible(combo):
                assert packer.feasible(combo)


def test_amorphous_placements_pass_audit(bram_device, packer, combos):
    for combo in combos:
        out = packer.placement(combo)
        assert bool(out) == packer.feasible(combo)
        if out:
            assert check_placement(bram_device, combo, out) == []


def test_removing_an_afu_keeps_feasibility(packer, combos):
    for combo in combos:
        if not packer.feasible(combo):
            continue
        for slot, _ in combo.demanded:
            afus = list(combo.afus)
            afus[slot] = NONE
            assert packer.feasible(Combination(tuple(afus)))


def test_unpruned_and_greedy_agree_with_exact(db, packer, combos):
    full = AmorphousPacker(db, prune=False)
    greedy = AmorphousPacker(db, greedy=True)
    for combo in combos:
        exact = packer.feasible(combo)
        assert full.feasible(combo) == exact
        if greedy.feasible(combo):
            assert exact


def test_pruning_keeps_only_minimal(db, packer):
    by_iface = {}
    for f in packer.footprints:
        by_iface.setdefault(f.interface_id, []).append(f.cells)
    for afu, bits in packer.candidates.items():
        mine = [packer.footprints[i] for i in range(len(packer.footprints)) if bits >> i & 1]
        for a in mine:
            for b in mine:
                if a is not b and a.interface_id == b.interface_id:
                    assert not a.cells < b.cells
    assert len(packer.footprints) <= len({v.footprint.key for v in db})


def test_version_order_is_smallest_first(packer):
    assert packer.bytes == sorted(packer.bytes)


def test_fixed_versions_are_kept(bram_device, packer, combos):
    for combo in combos:
        first = packer.placement(combo)
        if not first or not first.assignments:
            continue
        keep = first.assignments[0]
        again = packer.placement(combo, {keep.slot: keep.version})
        assert again and again.by_slot()[keep.slot] == keep.version
        assert check_placement(bram_device, combo, again) == []


def test_fixed_blocking_everything_fails(bram_device, packer):
    # one pinned footprint covering all but the other termination cells leaves no room
    combo = Combination((bram_afu(5), bram_afu(5), NONE, NONE, NONE, NONE))
    others = set().union(*(i.termination_cells for i in bram_device.interfaces[1:]))
    big = Footprint(0, bram_device.region - others, bram_device.name)
    pinned = BitstreamVersion(bram_afu(5), big, bitstream_bytes(bram_device, big.cells))
    assert not packer.placement(combo, {0: pinned})


def test_placement_rate_edges(packer, combos):
    assert placement_rate(lambda c: True, combos) == 1.0
    assert placement_rate(lambda c: False, combos) == 0.0
    with pytest.raises(ValueError):
        placement_rate(packer, [])


def test_brute_force_bound(db, library):
    combo = Combination(tuple(library[1:7]))
    with pytest.raises(ValueError):
        brute_force_pack(db, combo, bound=10)


def test_unknown_afu_is_infeasible(packer):
    stranger = AfuSpec("stranger", ResourceVector(1, 0, 0))
    assert not packer.feasible(Combination((stranger,)))


# -- exact search against exhaustive enumeration ----------------------------

TOY = toy_device("LLBLDLLB", rows=3, n_ifaces=4)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_packer_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    afus = unit_afus(int(rng.integers(1, 5)))
    db = random_db(TOY, afus, rng)
    picks = rng.integers(len(afus) + 1, size=int(rng.integers(1, 5)))
    combo = Combination(tuple(NONE if p == len(afus) else afus[p] for p in picks))
    exact = brute_force_pack(db, combo)
    packer = AmorphousPacker(db)
    placed = packer.placement(combo)
    assert bool(placed) == bool(exact)
    if placed:
        assert check_placement(TOY, combo, placed) == []


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_more_versions_never_hurt(seed):
    rng = np.random.default_rng(seed)
    afus = unit_afus(3)
    db = random_db(TOY, afus, rng)
    extra = random_db(TOY, afus, rng)
    bigger = BitstreamDb(TOY, list(db) + list(extra))
    combo = Combination(tuple(afus[int(i)] for i in rng.integers(3, size=3)))
    if AmorphousPacker(db).feasible(combo):
        assert AmorphousPacker(bigger).feasible(combo)
