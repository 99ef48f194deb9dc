"""AFU designs, the synthesis fit rule, and bitstream-version databases."""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .fabric import (
    Cell,
    Device,
    Interface,
    InterfaceKind,
    ResourceKind,
    ResourceVector,
    region_capacity,
)
from .footprint import (
    DEFAULT_SIZE_MODEL,
    Footprint,
    SizeModel,
    bitstream_bytes,
    is_connected,
    validate_footprint,
)
from .layouts import Layout

__all__ = [
    "AfuSpec",
    "BitstreamDb",
    "BitstreamVersion",
    "Infeasible",
    "DEFAULT_ROUTABILITY_CAP",
    "build_db_from_layouts",
    "fits",
    "generate_footprints_heuristic",
    "synthesize",
]

DEFAULT_ROUTABILITY_CAP = 0.70
_EPS = 1e-9


@dataclass(frozen=True)
class AfuSpec:
    id: str
    demand: ResourceVector
    interface_kind: InterfaceKind = InterfaceKind.MEMORY

    @property
    def is_zero(self) -> bool:
        """The zero-demand AFU stands for an empty slot."""
        return not any(self.demand)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "demand": self.demand.to_dict(),
            "interfaceKind": self.interface_kind.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> AfuSpec:
        d = data["demand"]
        return cls(
            data["id"],
            ResourceVector(d["logic"], d["bram"], d["dsp"]),
            InterfaceKind(data["interfaceKind"]),
        )


@dataclass(frozen=True)
class Infeasible:
    """Negative outcome of a fit or placement check; always falsy."""

    reason: str
    kind: ResourceKind | None = None
    afu_id: str | None = None

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class BitstreamVersion:
    afu: AfuSpec
    footprint: Footprint
    bytes: int

    @property
    def interface_id(self) -> int:
        return self.footprint.interface_id


def fits(
    demand: ResourceVector, capacity: ResourceVector, routability_cap: float
) -> ResourceKind | None:
    """First resource kind whose demand exceeds ``routability_cap`` x capacity."""
    if demand.logic > routability_cap * capacity.logic + _EPS:
        return ResourceKind.LOGIC
    if demand.bram > 0 and demand.bram > routability_cap * capacity.bram + _EPS:
        return ResourceKind.BRAM
    if demand.dsp > 0 and demand.dsp > routability_cap * capacity.dsp + _EPS:
        return ResourceKind.DSP
    return None


def synthesize(
    device: Device,
    afu: AfuSpec,
    fp: Footprint,
    routability_cap: float = DEFAULT_ROUTABILITY_CAP,
    size_model: SizeModel = DEFAULT_SIZE_MODEL,
) -> BitstreamVersion | Infeasible:
    """Build ``afu`` into footprint ``fp`` if it fits under the routability cap."""
    if not 0 < routability_cap <= 1:
        raise ValueError(f"routability cap {routability_cap} outside (0, 1]")
    report = validate_footprint(device, fp)
    if not report:
        raise ValueError(f"invalid footprint: {report.rule.value} {report.detail}")
    iface = device.interface_by_id[fp.interface_id]
    if not iface.kind.accepts(afu.interface_kind):
        return Infeasible(
            f"{afu.interface_kind.value} AFU cannot attach to {iface.kind.value} interface",
            afu_id=afu.id,
        )
    short = fits(afu.demand, region_capacity(device, fp.cells), routability_cap)
    if short is not None:
        return Infeasible(f"not enough {short.value}", short, afu.id)
    return BitstreamVersion(afu, fp, bitstream_bytes(device, fp.cells, size_model))


# -- heuristic footprints --------------------------------------------------

# (horizontal step cost, vertical step cost) per growth variant.
_VARIANTS = [
    ("balanced", 1.0, 1.0),
    ("tall", 3.0, 1.0),
    ("wide", 1.0, 3.0),
    ("tall-ish", 1.5, 1.0),
    ("wide-ish", 1.0, 1.5),
    ("very-tall", 6.0, 1.0),
    ("very-wide", 1.0, 6.0),
]


def _grow(
    device: Device,
    iface: Interface,
    demand: ResourceVector,
    cap: float,
    allowed: frozenset[Cell],
    h_cost: float,
    v_cost: float,
) -> frozenset[Cell] | None:
    cols = [c.col for c in device.region]
    mid = (min(cols) + max(cols)) / 2
    # Handedness: reaching from the right half, take partial columns from the
    # bottom; from the left half, from the top.
    row_sign = 1 if iface.anchor.col >= mid else -1

    cells = set(iface.termination_cells)
    capacity = region_capacity(device, cells)
    while True:
        short = fits(demand, capacity, cap)
        if short is None:
            break
        dist: dict[Cell, float] = {c: 0.0 for c in cells}
        prev: dict[Cell, Cell] = {}
        heap = [(0.0, 0, c.col, c.row) for c in cells]
        heapq.heapify(heap)
        target = None
        while heap:
            d, _, col, row = heapq.heappop(heap)
            cell = Cell(col, row)
            if d > dist.get(cell, float("inf")):
                continue
            if cell not in cells and device.kind_of(cell) is short:
                target = cell
                break
            for nb in device.neighbors(cell):
                if nb not in allowed:
                    continue
                step = h_cost if nb.row == cell.row else v_cost
                nd = d + step
                if nd < dist.get(nb, float("inf")) - _EPS:
                    dist[nb] = nd
                    prev[nb] = cell
                    tie = row_sign * nb.row
                    heapq.heappush(heap, (nd, tie, nb.col, nb.row))
        if target is None:
            return None
        node = target
        while node not in cells:
            cells.add(node)
            capacity = capacity + device.capacity_of(node)
            node = prev[node]

    # Drop cells the fit does not need, farthest from the anchor first.
    anchor = iface.anchor
    locked = set(iface.termination_cells)
    order = sorted(
        (c for c in cells if c not in locked),
        key=lambda c: (-(abs(c.col - anchor.col) + abs(c.row - anchor.row)), c),
    )
    for cell in order:
        trial = cells - {cell}
        if fits(demand, region_capacity(device, trial), cap) is None and is_connected(trial):
            cells = trial
    return frozenset(cells)


def generate_footprints_heuristic(
    device: Device,
    interface: Interface,
    demand: ResourceVector,
    k: int,
    routability_cap: float = DEFAULT_ROUTABILITY_CAP,
) -> list[Footprint]:
    """Up to ``k`` distinct compact footprints around ``interface`` fitting ``demand``.

    Each variant grows from the termination cells along cheapest paths to the
    nearest cell of whichever kind is still short, with its own horizontal /
    vertical step costs, then trims cells the fit does not need.
    """
    if k < 1:
        raise ValueError("k must be positive")
    owners = device.termination_owner
    allowed = frozenset(
        c for c in device.region if owners.get(c, interface.id) == interface.id
    )
    if fits(demand, region_capacity(device, allowed), routability_cap) is not None:
        return []
    out: list[Footprint] = []
    seen: set[frozenset[Cell]] = set()
    for _, h, v in _VARIANTS:
        cells = _grow(device, interface, demand, routability_cap, allowed, h, v)
        if cells is None or cells in seen:
            continue
        seen.add(cells)
        out.append(Footprint(interface.id, cells, device.name))
        if len(out) == k:
            break
    return out


# -- bitstream database ----------------------------------------------------

class BitstreamDb:
    """Bitstream versions indexed by (AFU id, interface id).

    Treated as immutable once built; derived search indexes are cached on it.
    """

    def __init__(self, device: Device, versions: Iterable[BitstreamVersion] = ()):
        self.device = device
        self._versions: list[BitstreamVersion] = []
        self._index: dict[tuple[str, int], list[BitstreamVersion]] = {}
        self._afus: dict[str, AfuSpec] = {}
        seen: set[tuple] = set()
        for v in versions:
            key = (v.afu.id, v.footprint.key)
            if key in seen:
                continue
            seen.add(key)
            self._versions.append(v)
            self._index.setdefault((v.afu.id, v.interface_id), []).append(v)
            self._afus.setdefault(v.afu.id, v.afu)
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self._versions)

    def __iter__(self):
        return iter(self._versions)

    @property
    def versions(self) -> tuple[BitstreamVersion, ...]:
        return tuple(self._versions)

    @property
    def afu_ids(self) -> list[str]:
        return sorted(self._afus)

    def afu(self, afu_id: str) -> AfuSpec:
        return self._afus[afu_id]

    def for_afu(self, afu_id: str, interface_id: int | None = None) -> list[BitstreamVersion]:
        if interface_id is not None:
            return list(self._index.get((afu_id, interface_id), ()))
        return [v for v in self._versions if v.afu.id == afu_id]

    def merged(self, other: Iterable[BitstreamVersion]) -> BitstreamDb:
        return BitstreamDb(self.device, [*self._versions, *other])

    def to_dict(self) -> dict:
        afus = sorted(self._afus.values(), key=lambda a: a.id)
        versions = sorted(self._versions, key=lambda v: (v.afu.id, v.footprint.key))
        return {
            "device": self.device.name,
            "afus": [a.to_dict() for a in afus],
            "versions": [
                {"afu": v.afu.id, "footprint": v.footprint.to_dict(), "bytes": v.bytes}
                for v in versions
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict, device: Device) -> BitstreamDb:
        if data["device"] != device.name:
            raise ValueError(f"db built for {data['device']!r}, not {device.name!r}")
        afus = {a["id"]: AfuSpec.from_dict(a) for a in data["afus"]}
        versions = [
            BitstreamVersion(
                afus[v["afu"]], Footprint.from_dict(v["footprint"], device.name), int(v["bytes"])
            )
            for v in data["versions"]
        ]
        return cls(device, versions)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["afuId", "interfaceId", "cellCount", "bytes"])
        for v in sorted(self._versions, key=lambda v: (v.afu.id, v.footprint.key)):
            writer.writerow([v.afu.id, v.interface_id, len(v.footprint.cells), v.bytes])
        return buf.getvalue()


def build_db_from_layouts(
    device: Device,
    layouts: Sequence[Layout],
    afu_lib: Sequence[AfuSpec],
    routability_cap: float = DEFAULT_ROUTABILITY_CAP,
    size_model: SizeModel = DEFAULT_SIZE_MODEL,
    max_per_pair: int | None = None,
) -> BitstreamDb:
    """Every feasible (AFU, partition) pair over all layouts, deduplicated.

    Layout partitions are trusted to be valid (layout generators check them),
    so each distinct partition is measured once and tested against every
    compatible non-zero AFU.
    """
    if not 0 < routability_cap <= 1:
        raise ValueError(f"routability cap {routability_cap} outside (0, 1]")
    afus = [a for a in afu_lib if not a.is_zero]
    measured: dict[tuple, tuple[ResourceVector, int]] = {}
    per_pair: dict[tuple[str, int], int] = {}
    versions = []
    for layout in layouts:
        for part in layout.partitions:
            if part.key not in measured:
                measured[part.key] = (
                    region_capacity(device, part.cells),
                    bitstream_bytes(device, part.cells, size_model),
                )
            else:
                continue
            capacity, size = measured[part.key]
            iface = device.interface_by_id[part.interface_id]
            for afu in afus:
                if not iface.kind.accepts(afu.interface_kind):
                    continue
                if fits(afu.demand, capacity, routability_cap) is not None:
                    continue
                pair = (afu.id, part.interface_id)
                if max_per_pair is not None and per_pair.get(pair, 0) >= max_per_pair:
                    continue
                per_pair[pair] = per_pair.get(pair, 0) + 1
                versions.append(BitstreamVersion(afu, part, size))
    return BitstreamDb(device, versions)
