"""Placement-rate and reconfiguration-overhead experiments."""

from __future__ import annotations

import hashlib
import logging
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .afu import (
    DEFAULT_ROUTABILITY_CAP,
    BitstreamDb,
    BitstreamVersion,
    Infeasible,
    build_db_from_layouts,
)
from .fabric import Device
from .footprint import DEFAULT_SIZE_MODEL, SizeModel
from .layouts import Layout, dump_layouts, naive_layout, random_layouts
from .packing import (
    AmorphousPacker,
    Combination,
    Placement,
    StandardSystem,
    standard_feasibility_matrix,
)
from .workloads import (
    Difficulty,
    Family,
    WorkloadSpec,
    build_library,
    sample_combinations,
    sample_sequence,
)

__all__ = [
    "ExperimentResult",
    "OverheadModel",
    "PlacementSetup",
    "SYSTEMS",
    "layout_pool",
    "placement_setup",
    "run_overhead_experiment",
    "run_placement_experiment",
    "transition_bytes",
    "transition_time",
]

log = logging.getLogger(__name__)

SYSTEMS = ("naive", "best-effort", "amorphous")

# Independent random streams derived from the run seed.
_LAYOUT_STREAM = 0
_COMBO_STREAM = 1
_SEQUENCE_STREAM = 2


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _spec_key(spec: WorkloadSpec) -> tuple[int, int]:
    return list(Family).index(spec.family), list(Difficulty).index(spec.difficulty)


@dataclass(frozen=True)
class OverheadModel:
    pcap_bandwidth: float = 128 * 2**20
    energy_per_byte: float | None = None

    def __post_init__(self):
        if not self.pcap_bandwidth > 0:
            raise ValueError("PCAP bandwidth must be positive")

    def seconds(self, nbytes: int) -> float:
        return nbytes / self.pcap_bandwidth

    def joules(self, nbytes: int) -> float | None:
        return None if self.energy_per_byte is None else nbytes * self.energy_per_byte


def transition_bytes(prev: Placement, nxt: Placement) -> int:
    """Bytes loaded to go from ``prev`` to ``nxt``.

    An interface is reloaded unless it keeps the same AFU in the same
    footprint; vacated interfaces load nothing.
    """
    before = {i: (v.afu.id, v.footprint.key) for i, v in prev.by_interface().items()}
    total = 0
    for iface, v in nxt.by_interface().items():
        if before.get(iface) != (v.afu.id, v.footprint.key):
            total += v.bytes
    return total


def transition_time(prev: Placement, nxt: Placement, model: OverheadModel = OverheadModel()) -> float:
    return model.seconds(transition_bytes(prev, nxt))


@dataclass
class ExperimentResult:
    experiment: str
    device: str
    workload: WorkloadSpec
    seed: int
    params: dict
    rates: dict[str, float] = field(default_factory=dict)
    mean_times: dict[str, float] = field(default_factory=dict)
    time_quantiles: dict[str, list[float]] = field(default_factory=dict)
    mean_energy: dict[str, float] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        """Mean standard / amorphous transition time."""
        return self.mean_times["best-effort"] / self.mean_times["amorphous"]

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "device": self.device,
            "workload": self.workload.to_dict(),
            "seed": self.seed,
            "params": self.params,
            "rates": self.rates,
            "meanTimes": self.mean_times,
            "timeQuantiles": self.time_quantiles,
            "meanEnergy": self.mean_energy,
            "extra": self.extra,
        }

    def rows(self) -> list[dict]:
        """Long-format result rows (one metric value per row)."""
        base = {
            "experiment": self.experiment,
            "workload": self.workload.family.value,
            "difficulty": self.workload.difficulty.value,
            "afuDelta": self.params.get("afuDelta", ""),
            "seed": self.seed,
        }
        out = []
        for system, rate in self.rates.items():
            out.append({**base, "system": system, "metric": "placementRate", "value": rate})
        for system, t in self.mean_times.items():
            out.append({**base, "system": system, "metric": "meanTransitionSeconds", "value": t})
        for system, e in self.mean_energy.items():
            out.append({**base, "system": system, "metric": "meanTransitionJoules", "value": e})
        if self.experiment == "overhead":
            out.append({**base, "system": "ratio", "metric": "standardOverAmorphous", "value": self.ratio})
        return out


# -- shared setup ----------------------------------------------------------

_POOLS: dict[tuple, list[Layout]] = {}
_DBS: dict[tuple, tuple[list[Layout], BitstreamDb]] = {}


def layout_pool(device: Device, n_layouts: int, seed: int) -> list[Layout]:
    """Naive layout followed by ``n_layouts`` random ones; cached per process."""
    if n_layouts < 0:
        raise ValueError("n_layouts must be non-negative")
    key = (device.name, repr(device.to_config().to_dict()), n_layouts, seed)
    pool = _POOLS.get(key)
    if pool is None:
        pool = [naive_layout(device)]
        if n_layouts:
            pool += random_layouts(device, n_layouts, _rng(seed, _LAYOUT_STREAM))
        _POOLS[key] = pool
    return pool


def _pool_db(
    device: Device, pool: list[Layout], family: Family, cap: float, size_model: SizeModel
) -> BitstreamDb:
    # The hardest library contains every easier one, so one DB serves all difficulties.
    key = (id(pool), id(device), family, cap, hash(size_model))
    hit = _DBS.get(key)
    if hit is not None and hit[0] is pool:
        return hit[1]
    lib = build_library(WorkloadSpec(family, Difficulty.HARDER))
    db = build_db_from_layouts(device, pool, lib, cap, size_model)
    _DBS[key] = (pool, db)
    return db


def pool_id(pool: list[Layout]) -> str:
    return hashlib.sha256(dump_layouts(pool).encode()).hexdigest()[:16]


@dataclass
class PlacementSetup:
    device: Device
    spec: WorkloadSpec
    pool: list[Layout]
    combos: list[Combination]
    verdicts: np.ndarray  # (combination, layout) under standard DPR
    best_index: int
    db: BitstreamDb
    packer: AmorphousPacker

    @property
    def best_layout(self) -> Layout:
        return self.pool[self.best_index]


def placement_setup(
    device: Device,
    spec: WorkloadSpec,
    n_combos: int,
    n_layouts: int,
    seed: int,
    routability_cap: float = DEFAULT_ROUTABILITY_CAP,
    size_model: SizeModel = DEFAULT_SIZE_MODEL,
    greedy: bool = False,
    pool: list[Layout] | None = None,
) -> PlacementSetup:
    """Shared inputs of both experiments; ``pool`` overrides the generated layouts."""
    if n_combos < 1:
        raise ValueError("n_combos must be positive")
    if pool is None:
        pool = layout_pool(device, n_layouts, seed)
    lib = build_library(spec)
    combos = sample_combinations(
        lib, n_combos, len(device.interfaces), _rng(seed, _COMBO_STREAM, *_spec_key(spec))
    )
    verdicts = standard_feasibility_matrix(device, pool, combos, routability_cap)
    counts = verdicts.sum(axis=0)
    best = int(np.argmax(counts))  # first maximum = lowest index
    db = _pool_db(device, pool, spec.family, routability_cap, size_model)
    packer = AmorphousPacker.for_db(db, greedy=greedy)
    return PlacementSetup(device, spec, pool, combos, verdicts, best, db, packer)


def run_placement_experiment(
    device: Device,
    spec: WorkloadSpec,
    n_combos: int = 1000,
    n_layouts: int = 1000,
    seed: int = 0,
    routability_cap: float = DEFAULT_ROUTABILITY_CAP,
    size_model: SizeModel = DEFAULT_SIZE_MODEL,
    greedy: bool = False,
    pool: list[Layout] | None = None,
) -> ExperimentResult:
    setup = placement_setup(
        device, spec, n_combos, n_layouts, seed, routability_cap, size_model, greedy, pool
    )
    n = len(setup.combos)
    counts = setup.verdicts.sum(axis=0)
    amorphous = sum(1 for c in setup.combos if setup.packer(c))
    return ExperimentResult(
        "placement",
        device.name,
        spec,
        seed,
        {
            "nCombos": n_combos,
            "nLayouts": n_layouts,
            "routabilityCap": routability_cap,
            "sizeModel": size_model.to_dict(),
            "greedy": greedy,
        },
        rates={
            "naive": int(counts[0]) / n,
            "best-effort": int(counts[setup.best_index]) / n,
            "amorphous": amorphous / n,
        },
        extra={
            "bestLayoutIndex": setup.best_index,
            "layoutPoolId": pool_id(setup.pool),
            "dbVersions": len(setup.db),
        },
    )


# -- overhead --------------------------------------------------------------

def _retained(prev: Combination, nxt: Combination) -> list[int]:
    return [
        s for s, (a, b) in enumerate(zip(prev.afus, nxt.afus)) if a.id == b.id and not a.is_zero
    ]


def _retain_then_repack(
    place: Callable[[Combination, Mapping[int, BitstreamVersion]], Placement | Infeasible],
    prev_combo: Combination,
    prev: Placement,
    combo: Combination,
) -> tuple[Placement | Infeasible, bool]:
    """Keep every retained AFU in place if possible (phase 1).

    Otherwise (phase 2) keep the subset of retained AFUs whose bitstreams are
    worth the most bytes and still admit a placement; the empty subset is a
    full repack.  Returns the placement and whether phase 2 was needed.
    """
    versions = prev.by_slot()
    retained = _retained(prev_combo, combo)
    pl = place(combo, {s: versions[s] for s in retained})
    if pl:
        return pl, False
    subsets = [
        sub
        for r in range(len(retained) - 1, -1, -1)
        for sub in itertools.combinations(retained, r)
    ]
    subsets.sort(key=lambda sub: -sum(versions[s].bytes for s in sub))  # stable
    for sub in subsets:
        pl = place(combo, {s: versions[s] for s in sub})
        if pl:
            return pl, True
    return pl, True


def run_overhead_experiment(
    device: Device,
    spec: WorkloadSpec,
    length: int = 1000,
    afu_delta: int = 1,
    seed: int = 0,
    n_combos: int = 1000,
    n_layouts: int = 1000,
    model: OverheadModel = OverheadModel(),
    routability_cap: float = DEFAULT_ROUTABILITY_CAP,
    size_model: SizeModel = DEFAULT_SIZE_MODEL,
    retry_budget: int = 2000,
    pool: list[Layout] | None = None,
) -> ExperimentResult:
    """Walk a sequence valid under both systems and bill every transition.

    Both systems first try to keep retained AFUs where they are and place only
    the changed slots; if that fails they repack around the most valuable
    retained subset, and any AFU that moves is billed in full.
    """
    setup = placement_setup(
        device, spec, n_combos, n_layouts, seed, routability_cap, size_model, pool=pool
    )
    standard = StandardSystem(device, setup.best_layout, routability_cap, size_model)
    packer = setup.packer
    lib = build_library(spec)
    seq = sample_sequence(
        lib,
        length,
        afu_delta,
        [standard.feasible, packer.feasible],
        _rng(seed, _SEQUENCE_STREAM, *_spec_key(spec), afu_delta),
        n_interfaces=len(device.interfaces),
        retry_budget=retry_budget,
    )

    def place_standard(combo: Combination, fixed: Mapping[int, BitstreamVersion]):
        return standard.place(combo, {s: v.interface_id for s, v in fixed.items()})

    billed: dict[str, list[int]] = {"best-effort": [], "amorphous": []}
    repacks = {"best-effort": 0, "amorphous": 0}
    placers = {"best-effort": place_standard, "amorphous": packer.placement}
    for system, place in placers.items():
        prev_combo = prev_pl = None
        for combo in seq.combos:
            if prev_pl is None:
                pl, repacked = place(combo, {}), False
            else:
                pl, repacked = _retain_then_repack(place, prev_combo, prev_pl, combo)
            if not pl:
                raise RuntimeError(f"{system} rejected a combination it validated")
            if prev_pl is not None:
                billed[system].append(transition_bytes(prev_pl, pl))
                repacks[system] += repacked
            prev_combo, prev_pl = combo, pl

    mean_times, quantiles, energy = {}, {}, {}
    for system, nbytes in billed.items():
        secs = np.array([model.seconds(b) for b in nbytes]) if nbytes else np.zeros(1)
        mean_times[system] = float(secs.mean())
        quantiles[system] = [float(q) for q in np.quantile(secs, [0.1, 0.5, 0.9])]
        if model.energy_per_byte is not None:
            energy[system] = float(np.mean(nbytes or [0]) * model.energy_per_byte)
    return ExperimentResult(
        "overhead",
        device.name,
        spec,
        seed,
        {
            "length": length,
            "afuDelta": afu_delta,
            "nCombos": n_combos,
            "nLayouts": n_layouts,
            "routabilityCap": routability_cap,
            "sizeModel": size_model.to_dict(),
            "pcapBandwidth": model.pcap_bandwidth,
            "energyPerByte": model.energy_per_byte,
        },
        mean_times=mean_times,
        time_quantiles=quantiles,
        mean_energy=energy,
        extra={
            "bestLayoutIndex": setup.best_index,
            "layoutPoolId": pool_id(setup.pool),
            "fullRepacks": repacks,
            "transitions": len(seq) - 1,
        },
    )
