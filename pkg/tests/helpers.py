"""Small devices and random instance builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from dprsim.afu import AfuSpec, BitstreamDb, synthesize
from dprsim.fabric import (
    Cell,
    DeviceConfig,
    InterfaceKind,
    ResourceVector,
    build_device,
    place_interfaces_peripheral,
)
from dprsim.footprint import Footprint

_KIND = {"L": "logic", "B": "bram", "D": "dsp"}


def toy_config(pattern: str = "LLBLDL", rows: int = 3, static=(), name: str = "toy") -> DeviceConfig:
    data = {
        "name": name,
        "regionRows": rows,
        "columns": [{"kind": _KIND[ch], "count": 1} for ch in pattern],
        "staticMask": [{"col": c, "row": r} for c, r in static],
    }
    return DeviceConfig.from_dict(data)


def toy_device(pattern: str = "LLBLDL", rows: int = 3, n_ifaces: int = 3, static=(), name="toy",
               kind=InterfaceKind.BOTH):
    bare = build_device(toy_config(pattern, rows, static, name))
    return bare.with_interfaces(place_interfaces_peripheral(bare, n_ifaces, kind))


def random_footprint(device, iface_id: int, rng: np.random.Generator, extra: int) -> Footprint:
    """Valid footprint: termination cells plus up to ``extra`` randomly grown cells."""
    owners = device.termination_owner
    iface = device.interface_by_id[iface_id]
    cells = set(iface.termination_cells)
    for _ in range(extra):
        frontier = sorted(
            {nb for c in cells for nb in device.neighbors(c)
             if nb not in cells and owners.get(nb, iface_id) == iface_id}
        )
        if not frontier:
            break
        cells.add(frontier[int(rng.integers(len(frontier)))])
    return Footprint(iface_id, frozenset(cells), device.name)


def unit_afus(n: int) -> list[AfuSpec]:
    """AFUs that fit any footprint holding a logic cell."""
    return [AfuSpec(f"a{i}", ResourceVector(1, 0, 0), InterfaceKind.MEMORY) for i in range(n)]


def random_db(device, afus, rng: np.random.Generator, max_versions: int = 4, max_extra: int = 6):
    versions = []
    n_if = len(device.interfaces)
    for afu in afus:
        for _ in range(int(rng.integers(0, max_versions + 1))):
            fp = random_footprint(device, int(rng.integers(n_if)), rng, int(rng.integers(max_extra + 1)))
            v = synthesize(device, afu, fp, routability_cap=1.0)
            if v:
                versions.append(v)
    return BitstreamDb(device, versions)


def cells_of(*pairs) -> frozenset[Cell]:
    return frozenset(Cell(c, r) for c, r in pairs)
