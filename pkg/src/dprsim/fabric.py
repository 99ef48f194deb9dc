"""Discrete model of an FPGA fabric shared by reconfigurable AFUs.

The fabric is a grid of allocation cells.  A cell is one column of a single
resource kind spanning one clock-region row; it is the smallest unit a
reconfigurable region can be built from.  Row 0 is the bottom of the die.

Cells owned by the static partition are excluded from everything else; the
remaining cells form the uncommitted reconfiguration region that AFU
footprints are carved from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

__all__ = [
    "Cell",
    "Column",
    "ConfigError",
    "Device",
    "DeviceConfig",
    "Interface",
    "InterfaceKind",
    "ResourceKind",
    "ResourceVector",
    "DEFAULT_CAPACITY",
    "build_device",
    "load_device_config",
    "perimeter_walk",
    "place_interfaces_peripheral",
    "region_capacity",
]


class ConfigError(ValueError):
    """Raised for device configurations that violate the fabric invariants."""


class ResourceKind(str, Enum):
    LOGIC = "logic"
    BRAM = "bram"
    DSP = "dsp"


class InterfaceKind(str, Enum):
    MEMORY = "memory"
    STREAMING = "streaming"
    BOTH = "both"

    def accepts(self, afu_kind: InterfaceKind) -> bool:
        """Whether an AFU built for ``afu_kind`` may attach to this interface."""
        if self is InterfaceKind.BOTH:
            return True
        return afu_kind is self


# Per-cell densities of a 7-series column within one clock region.
DEFAULT_CAPACITY = {
    ResourceKind.LOGIC: 400,
    ResourceKind.BRAM: 10,
    ResourceKind.DSP: 20,
}


@dataclass(frozen=True, order=True)
class ResourceVector:
    logic: float = 0
    bram: float = 0
    dsp: float = 0

    def __post_init__(self):
        if self.logic < 0 or self.bram < 0 or self.dsp < 0:
            raise ValueError(f"negative resource count in {self!r}")

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(
            self.logic + other.logic, self.bram + other.bram, self.dsp + other.dsp
        )

    def __getitem__(self, kind: ResourceKind) -> float:
        return getattr(self, kind.value)

    def __iter__(self) -> Iterator[float]:
        yield self.logic
        yield self.bram
        yield self.dsp

    def fits_within(self, other: ResourceVector) -> bool:
        """Componentwise ``self <= other``."""
        return (
            self.logic <= other.logic
            and self.bram <= other.bram
            and self.dsp <= other.dsp
        )

    def scaled(self, factor: float) -> ResourceVector:
        return ResourceVector(self.logic * factor, self.bram * factor, self.dsp * factor)

    @classmethod
    def of(cls, kind: ResourceKind, amount: float) -> ResourceVector:
        return cls(**{kind.value: amount})

    def to_dict(self) -> dict:
        return {"logic": self.logic, "bram": self.bram, "dsp": self.dsp}


ZERO = ResourceVector()


class Cell(NamedTuple):
    """One column within one clock-region row; sorts col-major then row."""

    col: int
    row: int


@dataclass(frozen=True)
class Column:
    index: int
    kind: ResourceKind
    capacity: int


@dataclass(frozen=True)
class Interface:
    id: int
    kind: InterfaceKind
    termination_cells: frozenset[Cell]
    net_cells: frozenset[Cell] = frozenset()

    def __post_init__(self):
        if not self.termination_cells:
            raise ConfigError(f"interface {self.id} has no termination cells")

    @property
    def anchor(self) -> Cell:
        return min(self.termination_cells)


@dataclass(frozen=True)
class DeviceConfig:
    """Plain description of a device, as read from a JSON config file."""

    name: str
    rows: int
    columns: tuple[Column, ...]
    static_cells: frozenset[Cell]
    interfaces: tuple[Interface, ...] = ()
    budget: ResourceVector | None = None

    @classmethod
    def from_dict(cls, data: dict) -> DeviceConfig:
        try:
            rows = int(data["regionRows"])
            columns = []
            for group in data["columns"]:
                kind = ResourceKind(group["kind"])
                cap = int(group.get("perCellCapacity", DEFAULT_CAPACITY[kind]))
                for _ in range(int(group.get("count", 1))):
                    columns.append(Column(len(columns), kind, cap))
            static = set()
            for rect in data.get("staticMask", []):
                for c in range(rect["col"], rect["col"] + rect.get("width", 1)):
                    for r in range(rect["row"], rect["row"] + rect.get("height", 1)):
                        static.add(Cell(c, r))
            interfaces = []
            for spec in data.get("interfaces", []):
                term = spec.get("terminationCells") or [spec["anchor"]]
                interfaces.append(
                    Interface(
                        id=int(spec["id"]),
                        kind=InterfaceKind(spec["kind"]),
                        termination_cells=frozenset(Cell(*c) for c in term),
                        net_cells=frozenset(Cell(*c) for c in spec.get("netCells", [])),
                    )
                )
            budget = data.get("budget")
            if budget is not None:
                budget = ResourceVector(budget["logic"], budget["bram"], budget["dsp"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed device config: {exc}") from exc
        return cls(
            name=str(data.get("name", "device")),
            rows=rows,
            columns=tuple(columns),
            static_cells=frozenset(static),
            interfaces=tuple(interfaces),
            budget=budget,
        )

    def to_dict(self) -> dict:
        groups: list[dict] = []
        for col in self.columns:
            if (
                groups
                and groups[-1]["kind"] == col.kind.value
                and groups[-1]["perCellCapacity"] == col.capacity
            ):
                groups[-1]["count"] += 1
            else:
                groups.append(
                    {"kind": col.kind.value, "count": 1, "perCellCapacity": col.capacity}
                )
        out = {
            "name": self.name,
            "regionRows": self.rows,
            "columns": groups,
            "staticMask": [
                {"col": c.col, "row": c.row, "width": 1, "height": 1}
                for c in sorted(self.static_cells)
            ],
            "interfaces": [_interface_to_dict(i) for i in self.interfaces],
        }
        if self.budget is not None:
            out["budget"] = self.budget.to_dict()
        return out


def _interface_to_dict(iface: Interface) -> dict:
    return {
        "id": iface.id,
        "kind": iface.kind.value,
        "anchor": list(iface.anchor),
        "terminationCells": [list(c) for c in sorted(iface.termination_cells)],
        "netCells": [list(c) for c in sorted(iface.net_cells)],
    }


@dataclass(frozen=True, eq=False)
class Device:
    """Immutable fabric description.  Build with :func:`build_device`."""

    name: str
    rows: int
    columns: tuple[Column, ...]
    static_cells: frozenset[Cell]
    interfaces: tuple[Interface, ...] = field(default=())

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @cached_property
    def cells(self) -> tuple[Cell, ...]:
        return tuple(Cell(c, r) for c in range(self.n_columns) for r in range(self.rows))

    @cached_property
    def region(self) -> frozenset[Cell]:
        """Cells of the uncommitted reconfiguration region."""
        return frozenset(c for c in self.cells if c not in self.static_cells)

    @cached_property
    def region_cells(self) -> tuple[Cell, ...]:
        return tuple(sorted(self.region))

    @cached_property
    def _capacity(self) -> dict[Cell, ResourceVector]:
        return {
            cell: ResourceVector.of(self.columns[cell.col].kind, self.columns[cell.col].capacity)
            for cell in self.cells
        }

    @cached_property
    def _capacity_tuple(self) -> dict[Cell, tuple[int, int, int]]:
        return {cell: tuple(int(x) for x in cap) for cell, cap in self._capacity.items()}

    @cached_property
    def termination_owner(self) -> dict[Cell, int]:
        return {c: i.id for i in self.interfaces for c in i.termination_cells}

    @cached_property
    def interface_by_id(self) -> dict[int, Interface]:
        return {i.id: i for i in self.interfaces}

    @cached_property
    def total(self) -> ResourceVector:
        return region_capacity(self, self.region)

    def kind_of(self, cell: Cell) -> ResourceKind:
        return self.columns[cell.col].kind

    def capacity_of(self, cell: Cell) -> ResourceVector:
        return self._capacity[cell]

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell.col < self.n_columns and 0 <= cell.row < self.rows

    def neighbors(self, cell: Cell) -> Iterator[Cell]:
        """Edge-adjacent neighbours inside the uncommitted region."""
        c, r = cell
        for nb in (Cell(c - 1, r), Cell(c + 1, r), Cell(c, r - 1), Cell(c, r + 1)):
            if nb in self.region:
                yield nb

    def bit(self, cell: Cell) -> int:
        return 1 << (cell.col * self.rows + cell.row)

    def mask(self, cells: Iterable[Cell]) -> int:
        m = 0
        rows = self.rows
        for c, r in cells:
            m |= 1 << (c * rows + r)
        return m

    def cells_of_mask(self, mask: int) -> frozenset[Cell]:
        out = []
        rows = self.rows
        while mask:
            low = mask & -mask
            idx = low.bit_length() - 1
            out.append(Cell(idx // rows, idx % rows))
            mask ^= low
        return frozenset(out)

    def with_interfaces(self, interfaces: Sequence[Interface]) -> Device:
        return build_device(
            DeviceConfig(
                self.name, self.rows, self.columns, self.static_cells, tuple(interfaces)
            )
        )

    def to_config(self) -> DeviceConfig:
        return DeviceConfig(
            self.name, self.rows, self.columns, self.static_cells, self.interfaces, self.total
        )


def build_device(config: DeviceConfig) -> Device:
    """Validate ``config`` and return the corresponding :class:`Device`."""
    if config.rows < 1 or not config.columns:
        raise ConfigError("device needs at least one row and one column")
    for i, col in enumerate(config.columns):
        if col.index != i:
            raise ConfigError(f"column {i} carries index {col.index}")
        if col.capacity < 0:
            raise ConfigError(f"column {i} has negative capacity")
    for cell in config.static_cells:
        if not (0 <= cell.col < len(config.columns) and 0 <= cell.row < config.rows):
            raise ConfigError(f"static cell {cell} lies outside the grid")
    device = Device(
        name=config.name,
        rows=config.rows,
        columns=tuple(config.columns),
        static_cells=frozenset(config.static_cells),
        interfaces=tuple(sorted(config.interfaces, key=lambda i: i.id)),
    )
    ids = [i.id for i in device.interfaces]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate interface ids")
    if ids and ids != list(range(len(ids))):
        raise ConfigError(f"interface ids must be 0..{len(ids) - 1}, got {ids}")
    seen: dict[Cell, int] = {}
    for iface in device.interfaces:
        for cell in iface.termination_cells:
            if not device.in_bounds(cell):
                raise ConfigError(f"interface {iface.id} anchor {cell} outside the grid")
            if cell in device.static_cells:
                raise ConfigError(f"interface {iface.id} anchor {cell} is inside the static mask")
            if cell in seen:
                raise ConfigError(
                    f"interfaces {seen[cell]} and {iface.id} share termination cell {cell}"
                )
            seen[cell] = iface.id
        for cell in iface.net_cells:
            if cell not in device.region:
                raise ConfigError(f"interface {iface.id} net cell {cell} outside the region")
    if config.budget is not None:
        total = device.total
        if tuple(total) != tuple(config.budget):
            raise ConfigError(
                f"declared budget {config.budget.to_dict()} does not match "
                f"column map totals {total.to_dict()}"
            )
    return device


def load_device_config(path: str | Path) -> DeviceConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return DeviceConfig.from_dict(data)


def region_capacity(device: Device, cells: Iterable[Cell]) -> ResourceVector:
    """Sum of per-cell capacities over ``cells``; all must be in the region."""
    logic = bram = dsp = 0
    caps = device._capacity_tuple
    region = device.region
    for cell in cells:
        if cell not in region:
            where = "static mask" if cell in device.static_cells else "outside the grid"
            raise ValueError(f"cell {tuple(cell)} is in the {where}")
        lg, br, ds = caps[cell]
        logic += lg
        bram += br
        dsp += ds
    return ResourceVector(logic, bram, dsp)


# -- interface placement ---------------------------------------------------

_EDGES = {
    # direction -> (start offset, end offset, neighbour offset); region on the left.
    "bottom": ((0, 0), (1, 0), (0, -1)),
    "right": ((1, 0), (1, 1), (1, 0)),
    "top": ((1, 1), (0, 1), (0, 1)),
    "left": ((0, 1), (0, 0), (-1, 0)),
}


def perimeter_walk(cells: Iterable[Cell]) -> list[Cell]:
    """Boundary cells of the outer contour, counter-clockwise.

    The walk starts at the bottom-left-most cell and follows the outer
    boundary edges with the region kept on the left; a cell is listed the
    first time one of its edges is traversed.
    """
    region = set(cells)
    if not region:
        return []
    outgoing: dict[tuple[int, int], list[tuple[tuple[int, int], Cell]]] = {}
    for cell in region:
        c, r = cell
        for s, e, n in _EDGES.values():
            if (c + n[0], r + n[1]) in region:
                continue
            start = (c + s[0], r + s[1])
            end = (c + e[0], r + e[1])
            outgoing.setdefault(start, []).append((end, cell))

    first = min(region, key=lambda x: (x.row, x.col))
    start_edge = ((first.col, first.row), (first.col + 1, first.row), first)
    order: list[Cell] = []
    seen: set[Cell] = set()
    edge = start_edge
    while True:
        src, dst, owner = edge
        if owner not in seen:
            seen.add(owner)
            order.append(owner)
        choices = outgoing[dst]
        if len(choices) == 1:
            end, cell = choices[0]
        else:
            # Pinch point: keep hugging the current cell by taking the left turn.
            heading = (dst[0] - src[0], dst[1] - src[1])
            left = (dst[0] - heading[1], dst[1] + heading[0])
            end, cell = next((ch for ch in choices if ch[0] == left), choices[0])
        edge = (dst, end, cell)
        if edge == start_edge:
            break
    return order


def place_interfaces_peripheral(
    device: Device,
    n: int,
    kind: InterfaceKind | Sequence[InterfaceKind] = InterfaceKind.BOTH,
) -> list[Interface]:
    """Spread ``n`` interface anchors evenly along the region's perimeter.

    Anchors must sit on logic columns (termination LUTs); an even target
    position that lands on a hard-block column snaps to the nearest free logic
    cell along the walk.  Each interface's net cells are its anchor's
    neighbours that also lie on the perimeter.
    """
    if n < 1:
        raise ValueError("need at least one interface")
    walk = perimeter_walk(device.region)
    sites = [i for i, c in enumerate(walk) if device.kind_of(c) is ResourceKind.LOGIC]
    if n > len(sites):
        raise ValueError(f"{n} interfaces requested but only {len(sites)} peripheral sites")
    kinds = [kind] * n if isinstance(kind, InterfaceKind) else list(kind)
    if len(kinds) != n:
        raise ValueError("one interface kind per interface required")

    length = len(walk)
    site_set = set(sites)
    taken: set[int] = set()
    chosen: list[int] = []
    for k in range(n):
        target = (k * length) // n
        for delta in range(length):
            hit = None
            for pos in ((target + delta) % length, (target - delta) % length):
                if pos in site_set and pos not in taken:
                    hit = pos
                    break
            if hit is not None:
                taken.add(hit)
                chosen.append(hit)
                break

    on_walk = set(walk)
    anchors = [walk[p] for p in chosen]
    anchor_set = set(anchors)
    out = []
    for idx, (cell, k) in enumerate(zip(anchors, kinds)):
        nets = frozenset(
            nb for nb in device.neighbors(cell) if nb in on_walk and nb not in anchor_set
        )
        out.append(Interface(idx, k, frozenset([cell]), nets))
    return out
