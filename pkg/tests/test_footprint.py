import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dprsim.fabric import Cell, Interface, InterfaceKind, ResourceKind, region_capacity
from dprsim.footprint import (
    DEFAULT_SIZE_MODEL,
    FRAME_BYTES,
    Footprint,
    Rule,
    SizeModel,
    bitstream_bytes,
    is_connected,
    overlaps,
    validate_footprint,
)
from helpers import cells_of, random_footprint, toy_device


@pytest.fixture(scope="module")
def pair():
    """Two interfaces on a strip: left at (0,0), right at (5,0); net cells next to each."""
    dev = toy_device("LLLLLL", rows=2, n_ifaces=1)
    left = Interface(0, InterfaceKind.BOTH, cells_of((0, 0)), cells_of((1, 0)))
    right = Interface(1, InterfaceKind.BOTH, cells_of((5, 0)), cells_of((4, 0)))
    return dev.with_interfaces([left, right])


def test_enclosing_foreign_termination_is_invalid(pair):
    fp = Footprint(0, cells_of(*[(c, 0) for c in range(6)]), pair.name)
    report = validate_footprint(pair, fp)
    assert not report and report.rule is Rule.FOREIGN_TERMINATION


def test_own_termination_cells_alone_are_valid(pair):
    assert validate_footprint(pair, Footprint(0, cells_of((0, 0)), pair.name))


def test_foreign_net_cells_do_not_invalidate(pair):
    fp = Footprint(0, cells_of((0, 0), (1, 0), (2, 0), (3, 0), (4, 0)), pair.name)
    assert validate_footprint(pair, fp)


def test_disconnected(pair):
    report = validate_footprint(pair, Footprint(0, cells_of((0, 0), (2, 0)), pair.name))
    assert report.rule is Rule.DISCONNECTED


def test_missing_own_termination(pair):
    report = validate_footprint(pair, Footprint(0, cells_of((1, 0), (2, 0)), pair.name))
    assert report.rule is Rule.MISSING_OWN_TERMINATION


def test_escapes_region():
    dev = toy_device("LLLL", rows=2, n_ifaces=1, static=[(3, 1)])
    anchor = dev.interfaces[0].anchor
    cells = frozenset({anchor} | {Cell(c, r) for c in range(4) for r in range(2)})
    report = validate_footprint(dev, Footprint(0, cells, dev.name))
    assert report.rule is Rule.ESCAPES_REGION


def test_rule_order_connectivity_first(pair):
    # disconnected and also containing a foreign termination: connectivity is reported
    report = validate_footprint(pair, Footprint(0, cells_of((0, 0), (5, 0)), pair.name))
    assert report.rule is Rule.DISCONNECTED


def test_unknown_interface(pair):
    with pytest.raises(ValueError):
        validate_footprint(pair, Footprint(7, cells_of((0, 0)), pair.name))


def test_empty_footprint_rejected():
    with pytest.raises(ValueError):
        Footprint(0, frozenset())


def test_non_overlapping_pair(pair):
    big = Footprint(0, cells_of((0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)), pair.name)
    small = Footprint(1, cells_of((5, 0), (5, 1)), pair.name)
    assert validate_footprint(pair, big) and validate_footprint(pair, small)
    assert not overlaps(big, small)


def test_self_overlap(pair):
    a = Footprint(0, cells_of((0, 0)), pair.name)
    assert overlaps(a, a)


def test_overlap_across_devices():
    with pytest.raises(ValueError):
        overlaps(Footprint(0, cells_of((0, 0)), "a"), Footprint(0, cells_of((0, 0)), "b"))


cell_sets = st.frozensets(
    st.builds(Cell, st.integers(0, 5), st.integers(0, 3)), min_size=1, max_size=12
)


@settings(max_examples=300)
@given(cell_sets, cell_sets)
def test_overlap_matches_set_intersection(a, b):
    fa, fb = Footprint(0, a, "d"), Footprint(1, b, "d")
    assert overlaps(fa, fb) == bool(a & b) == overlaps(fb, fa)


def test_is_connected():
    assert is_connected(cells_of((0, 0), (0, 1), (1, 1)))
    assert not is_connected(cells_of((0, 0), (1, 1)))
    assert not is_connected([])


def test_default_logic_cell_bytes(bram_device):
    assert DEFAULT_SIZE_MODEL.bytes_per_cell[ResourceKind.LOGIC] == 36 * 101 * 4 == 14544
    logic_cell = next(c for c in sorted(bram_device.region) if bram_device.kind_of(c) is ResourceKind.LOGIC)
    assert bitstream_bytes(bram_device, [logic_cell]) == DEFAULT_SIZE_MODEL.header_bytes + 14544


def test_frame_constant():
    assert FRAME_BYTES == 404
    m = DEFAULT_SIZE_MODEL.bytes_per_cell
    assert m[ResourceKind.BRAM] == 156 * 404 and m[ResourceKind.DSP] == 28 * 404


def test_empty_set_is_header_only(bram_device):
    assert bitstream_bytes(bram_device, []) == DEFAULT_SIZE_MODEL.header_bytes


def test_doubling_by_disjoint_union(bram_device):
    region = sorted(bram_device.region)
    # two disjoint sets of ten logic cells each
    a = [c for c in region if bram_device.kind_of(c) is ResourceKind.LOGIC][:10]
    b = [c for c in region if bram_device.kind_of(c) is ResourceKind.LOGIC and c not in a][:10]
    h = DEFAULT_SIZE_MODEL.header_bytes
    size_a = bitstream_bytes(bram_device, a)
    assert bitstream_bytes(bram_device, a + b) == 2 * (size_a - h) + h


def test_bytes_out_of_bounds(bram_device):
    with pytest.raises(ValueError):
        bitstream_bytes(bram_device, [Cell(-1, 0)])


def test_size_model_validation():
    with pytest.raises(ValueError):
        SizeModel({ResourceKind.LOGIC: 1, ResourceKind.BRAM: 0, ResourceKind.DSP: 1})
    with pytest.raises(ValueError):
        SizeModel(header_bytes=-1)
    m = SizeModel(header_bytes=7)
    assert SizeModel.from_dict(m.to_dict()) == m


@settings(max_examples=300)
@given(st.data())
def test_size_monotone_under_inclusion(bram_device, data):
    region = sorted(bram_device.region)
    big = data.draw(st.lists(st.sampled_from(region), unique=True, max_size=30))
    small = data.draw(st.lists(st.sampled_from(big), unique=True)) if big else []
    assert bitstream_bytes(bram_device, small) <= bitstream_bytes(bram_device, big)
    if len(small) < len(big):
        assert bitstream_bytes(bram_device, small) < bitstream_bytes(bram_device, big)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_adding_foreign_termination_breaks_validity(bram_device, seed):
    rng = np.random.default_rng(seed)
    i = int(rng.integers(6))
    fp = random_footprint(bram_device, i, rng, int(rng.integers(12)))
    assert validate_footprint(bram_device, fp)
    j = int(rng.integers(5))
    j += j >= i
    foreign = bram_device.interface_by_id[j].termination_cells
    worse = Footprint(i, fp.cells | foreign, bram_device.name)
    assert not validate_footprint(bram_device, worse)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_valid_footprint_capacity_covers_termination(bram_device, seed):
    rng = np.random.default_rng(seed)
    i = int(rng.integers(6))
    fp = random_footprint(bram_device, i, rng, int(rng.integers(20)))
    own = region_capacity(bram_device, bram_device.interface_by_id[i].termination_cells)
    assert own.fits_within(region_capacity(bram_device, fp.cells))


def test_serialization_is_canonical():
    a = Footprint(2, cells_of((3, 1), (0, 2), (0, 1)))
    assert a.to_dict() == {"interfaceId": 2, "cells": [[0, 1], [0, 2], [3, 1]]}
    assert Footprint.from_dict(a.to_dict()) == a
