"""AFU footprints: validity, overlap, and bitstream-size accounting."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .fabric import Cell, Device, ResourceKind, ResourceVector

__all__ = [
    "Footprint",
    "ResourceVector",
    "Rule",
    "SizeModel",
    "ValidityReport",
    "DEFAULT_SIZE_MODEL",
    "FRAME_BYTES",
    "bitstream_bytes",
    "is_connected",
    "overlaps",
    "validate_footprint",
]


@dataclass(frozen=True)
class Footprint:
    """Cells an AFU bitstream occupies, bound to one interface."""

    interface_id: int
    cells: frozenset[Cell]
    device: str = ""

    def __post_init__(self):
        if not self.cells:
            raise ValueError("a footprint needs at least one cell")
        if not isinstance(self.cells, frozenset):
            object.__setattr__(self, "cells", frozenset(Cell(*c) for c in self.cells))

    @property
    def key(self) -> tuple:
        """Canonical identity: interface plus cells in col-major order."""
        return (self.interface_id, tuple(sorted(self.cells)))

    def __len__(self) -> int:
        return len(self.cells)

    def to_dict(self) -> dict:
        return {
            "interfaceId": self.interface_id,
            "cells": [[c.col, c.row] for c in sorted(self.cells)],
        }

    @classmethod
    def from_dict(cls, data: Mapping, device: str = "") -> Footprint:
        return cls(
            int(data["interfaceId"]),
            frozenset(Cell(int(c), int(r)) for c, r in data["cells"]),
            device,
        )


class Rule(str, Enum):
    DISCONNECTED = "disconnected"
    MISSING_OWN_TERMINATION = "missing own termination cells"
    FOREIGN_TERMINATION = "encloses foreign termination cells"
    ESCAPES_REGION = "escapes region"


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    rule: Rule | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.valid


def is_connected(cells: Iterable[Cell]) -> bool:
    """Edge-connectivity of a cell set; the empty set counts as disconnected."""
    cells = set(cells)
    if not cells:
        return False
    start = next(iter(cells))
    seen = {start}
    queue = deque([start])
    while queue:
        c, r = queue.popleft()
        for nb in ((c - 1, r), (c + 1, r), (c, r - 1), (c, r + 1)):
            if nb in cells and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(cells)


def validate_footprint(device: Device, fp: Footprint) -> ValidityReport:
    try:
        iface = device.interface_by_id[fp.interface_id]
    except KeyError:
        raise ValueError(f"device {device.name!r} has no interface {fp.interface_id}") from None

    if not is_connected(fp.cells):
        return ValidityReport(False, Rule.DISCONNECTED)
    missing = iface.termination_cells - fp.cells
    if missing:
        return ValidityReport(
            False, Rule.MISSING_OWN_TERMINATION, f"missing {sorted(missing)}"
        )
    owners = device.termination_owner
    foreign = sorted(
        (owners[c], c) for c in fp.cells if c in owners and owners[c] != fp.interface_id
    )
    if foreign:
        ids = sorted({i for i, _ in foreign})
        return ValidityReport(False, Rule.FOREIGN_TERMINATION, f"interfaces {ids}")
    outside = sorted(c for c in fp.cells if c not in device.region)
    if outside:
        return ValidityReport(False, Rule.ESCAPES_REGION, f"cells {outside[:4]}")
    return ValidityReport(True)


def overlaps(a: Footprint, b: Footprint) -> bool:
    if a.device != b.device:
        raise ValueError(f"footprints from different devices: {a.device!r} vs {b.device!r}")
    return not a.cells.isdisjoint(b.cells)


# 7-series configuration frame: 101 words of 32 bits.
FRAME_BYTES = 101 * 4


@dataclass(frozen=True)
class SizeModel:
    """Linear partial-bitstream size model: a header plus a fixed cost per cell.

    Defaults follow the 7-series frame counts of one column within one clock
    region (CLB 36 frames, DSP 28, BRAM 28 interconnect + 128 content).
    """

    bytes_per_cell: Mapping[ResourceKind, int] = field(
        default_factory=lambda: {
            ResourceKind.LOGIC: 36 * FRAME_BYTES,
            ResourceKind.BRAM: (28 + 128) * FRAME_BYTES,
            ResourceKind.DSP: 28 * FRAME_BYTES,
        }
    )
    header_bytes: int = 1024

    def __post_init__(self):
        for kind in ResourceKind:
            if self.bytes_per_cell.get(kind, 0) <= 0:
                raise ValueError(f"bytes per {kind.value} cell must be positive")
        if self.header_bytes < 0:
            raise ValueError("header bytes must be non-negative")

    def __hash__(self):
        return hash((tuple(sorted((k.value, v) for k, v in self.bytes_per_cell.items())),
                     self.header_bytes))

    def to_dict(self) -> dict:
        return {
            "bytesPerCell": {k.value: v for k, v in sorted(self.bytes_per_cell.items())},
            "headerBytes": self.header_bytes,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> SizeModel:
        per = {ResourceKind(k): int(v) for k, v in data["bytesPerCell"].items()}
        return cls(per, int(data.get("headerBytes", 0)))


DEFAULT_SIZE_MODEL = SizeModel()


def bitstream_bytes(
    device: Device, cells: Iterable[Cell], model: SizeModel = DEFAULT_SIZE_MODEL
) -> int:
    per = model.bytes_per_cell
    columns = device.columns
    total = model.header_bytes
    for cell in cells:
        if not device.in_bounds(cell):
            raise ValueError(f"cell {tuple(cell)} outside device {device.name!r}")
        total += per[columns[cell.col].kind]
    return total
