"""Fixed DPR-partition layouts for standard DPR.

A layout assigns one partition footprint to every interface.  Partitions never
overlap; cells may be left over.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .fabric import Cell, Device, ResourceKind, region_capacity
from .footprint import Footprint, is_connected, validate_footprint

__all__ = [
    "Layout",
    "LayoutError",
    "best_effort_layout",
    "check_layout",
    "naive_layout",
    "random_layouts",
    "load_layouts",
    "dump_layouts",
]

log = logging.getLogger(__name__)


class LayoutError(RuntimeError):
    pass


@dataclass(frozen=True)
class Layout:
    partitions: tuple[Footprint, ...]

    @property
    def key(self) -> tuple:
        return tuple(p.key for p in self.partitions)

    def __len__(self) -> int:
        return len(self.partitions)

    def to_dict(self) -> dict:
        return {"partitions": [p.to_dict() for p in self.partitions]}

    @classmethod
    def from_dict(cls, data: dict, device: str = "") -> Layout:
        return cls(tuple(Footprint.from_dict(p, device) for p in data["partitions"]))


def check_layout(device: Device, layout: Layout) -> list[str]:
    """Return the list of invariant violations (empty when the layout is clean)."""
    problems = []
    if len(layout.partitions) != len(device.interfaces):
        problems.append(
            f"{len(layout.partitions)} partitions for {len(device.interfaces)} interfaces"
        )
    used: set[Cell] = set()
    for i, part in enumerate(layout.partitions):
        if part.interface_id != i:
            problems.append(f"partition {i} bound to interface {part.interface_id}")
            continue
        report = validate_footprint(device, part)
        if not report:
            problems.append(f"partition {i}: {report.rule.value} {report.detail}")
        if used & part.cells:
            problems.append(f"partition {i} overlaps an earlier partition")
        used |= part.cells
    return problems


def dump_layouts(layouts: Iterable[Layout]) -> str:
    return json.dumps([l.to_dict() for l in layouts], separators=(",", ":"))


def load_layouts(text: str, device: str = "") -> list[Layout]:
    return [Layout.from_dict(d, device) for d in json.loads(text)]


# -- naive equal split -----------------------------------------------------

def _kinds_present(device: Device) -> list[ResourceKind]:
    total = device.total
    return [k for k in ResourceKind if total[k] > 0]


class _Balancer:
    """Shared bookkeeping for growing near-equal partitions."""

    def __init__(self, device: Device, tolerance: float):
        self.device = device
        n = len(device.interfaces)
        total = device.total
        self.kinds = _kinds_present(device)
        self.target = {k: total[k] / n for k in self.kinds}
        self.upper = {k: self.target[k] * (1 + tolerance) for k in self.kinds}
        self.owner: dict[Cell, int] = {}
        self.parts: list[set[Cell]] = []
        self.load: list[dict[ResourceKind, float]] = []
        for iface in device.interfaces:
            cells = set(iface.termination_cells)
            self.parts.append(cells)
            for c in cells:
                self.owner[c] = iface.id
            self.load.append({k: region_capacity(device, cells)[k] for k in self.kinds})
        self.locked = set(device.termination_owner)

    def fill(self, i: int) -> float:
        return sum(self.load[i][k] / self.target[k] for k in self.kinds) / len(self.kinds)

    def add(self, i: int, cell: Cell) -> None:
        cap = self.device.capacity_of(cell)
        prev = self.owner.get(cell)
        if prev is not None:
            self.parts[prev].discard(cell)
            for k in self.kinds:
                self.load[prev][k] -= cap[k]
        self.owner[cell] = i
        self.parts[i].add(cell)
        for k in self.kinds:
            self.load[i][k] += cap[k]

    def release(self, cell: Cell) -> None:
        prev = self.owner.pop(cell)
        self.parts[prev].discard(cell)
        cap = self.device.capacity_of(cell)
        for k in self.kinds:
            self.load[prev][k] -= cap[k]

    def deviation(self, loads: Sequence[dict[ResourceKind, float]]) -> tuple[float, float]:
        worst = 0.0
        sq = 0.0
        for load in loads:
            for k in self.kinds:
                d = abs(load[k] - self.target[k]) / self.target[k]
                worst = max(worst, d)
                sq += d * d
        return worst, sq

    def frontier(self, i: int) -> list[Cell]:
        out = set()
        for cell in self.parts[i]:
            for nb in self.device.neighbors(cell):
                if nb not in self.parts[i] and nb not in self.locked:
                    out.add(nb)
        return sorted(out)


def naive_layout(
    device: Device, tolerance: float = 0.15, iterations: int = 30000, seed: int = 0
) -> Layout:
    """Split the region into one roughly equally resourced partition per interface.

    Partitions grow from their termination cells, always extending the least
    filled partition with the cell that best closes its deficit without
    overshooting ``tolerance`` above the per-interface mean; ties go to the
    lowest column index.  A fixed-seed annealing pass then trades boundary
    cells between neighbours to shrink the worst relative deviation, so the
    result is a pure function of the device.
    """
    if not device.interfaces:
        raise LayoutError("device has no interfaces")
    if len(device.interfaces) == 1:
        iface = device.interfaces[0]
        return Layout((Footprint(iface.id, device.region, device.name),))

    bal = _Balancer(device, tolerance)
    kinds = bal.kinds
    n = len(device.interfaces)
    done = [False] * n
    while not all(done):
        i = min((j for j in range(n) if not done[j]), key=lambda j: (bal.fill(j), j))
        best = None
        for cell in bal.frontier(i):
            if cell in bal.owner:
                continue
            cap = device.capacity_of(cell)
            if any(bal.load[i][k] + cap[k] > bal.upper[k] for k in kinds):
                continue
            # Prefer cells supplying the kind this partition lacks most.
            gain = sum(
                min(cap[k], max(0.0, bal.target[k] - bal.load[i][k])) / bal.target[k]
                for k in kinds
            )
            score = (-gain, cell.col, cell.row)
            if best is None or score < best[0]:
                best = (score, cell)
        if best is None:
            done[i] = True
        else:
            bal.add(i, best[1])

    _anneal(bal, iterations, seed)

    layout = Layout(
        tuple(Footprint(i, frozenset(bal.parts[i]), device.name) for i in range(n))
    )
    problems = check_layout(device, layout)
    if problems:
        raise LayoutError(f"naive layout broke invariants: {problems}")
    return layout


def _anneal(bal: _Balancer, iterations: int, seed: int) -> None:
    """Seeded simulated annealing over single boundary-cell moves.

    A move hands one unlocked cell to an edge-adjacent partition or back to
    the leftover pool, provided the donor stays connected.  The energy is the
    worst relative deviation plus a small quadratic term; a tiny per-cell
    charge on leftovers breaks ties in favour of covering the region.
    """
    device = bal.device
    kinds = bal.kinds
    target = bal.target
    rng = np.random.default_rng(seed)
    free = [c for c in device.region_cells if c not in bal.locked]
    n_cells = len(device.region)

    def energy(loads, leftover):
        worst, sq = bal.deviation(loads)
        return worst + 0.1 * sq / len(loads) + 1e-3 * leftover / n_cells

    leftover = sum(1 for c in free if c not in bal.owner)
    current = energy(bal.load, leftover)
    best = (current, dict(bal.owner))
    temps = np.geomspace(0.2, 1e-4, iterations)
    picks = rng.integers(len(free), size=iterations)
    coins = rng.random(iterations)
    for step in range(iterations):
        cell = free[picks[step]]
        src = bal.owner.get(cell)
        options = sorted({bal.owner[nb] for nb in device.neighbors(cell) if nb in bal.owner} - {src})
        if src is not None:
            options.append(None)
        if not options:
            continue
        dst = options[int(coins[step] * len(options))]
        cap = device.capacity_of(cell)
        loads = list(bal.load)
        if src is not None:
            loads[src] = {k: bal.load[src][k] - cap[k] for k in kinds}
        if dst is not None:
            loads[dst] = {k: bal.load[dst][k] + cap[k] for k in kinds}
        new_left = leftover + (dst is None) - (src is None)
        proposed = energy(loads, new_left)
        delta = proposed - current
        if delta > 0 and rng.random() >= np.exp(-delta / temps[step]):
            continue
        if src is not None and not is_connected(bal.parts[src] - {cell}):
            continue
        if dst is None:
            bal.release(cell)
        else:
            bal.add(dst, cell)
        leftover = new_left
        current = proposed
        if current < best[0] - 1e-12:
            best = (current, dict(bal.owner))

    # Restore the best state seen.
    for cell in list(bal.owner):
        if cell not in bal.locked:
            bal.release(cell)
    for cell, i in sorted(best[1].items()):
        if cell not in bal.locked:
            bal.add(i, cell)


# -- randomized layouts ----------------------------------------------------

def _grow_random(device: Device, rng: np.random.Generator, fill_range: tuple[float, float]):
    n = len(device.interfaces)
    weights = rng.dirichlet(np.ones(n))
    fill = rng.uniform(*fill_range)
    region_size = len(device.region)
    goal = fill * region_size

    owner = dict(device.termination_owner)
    parts = [set(i.termination_cells) for i in device.interfaces]
    frontiers: list[list[Cell]] = []
    for i in range(n):
        fr = sorted({nb for c in parts[i] for nb in device.neighbors(c) if nb not in owner})
        frontiers.append(fr)
    assigned = len(owner)
    active = [i for i in range(n) if frontiers[i]]
    while assigned < goal and active:
        w = weights[active]
        i = active[int(rng.choice(len(active), p=w / w.sum()))]
        fr = frontiers[i]
        # Lazily drop cells already claimed by someone else.
        while fr:
            j = int(rng.integers(len(fr)))
            cell = fr[j]
            fr[j] = fr[-1]
            fr.pop()
            if cell not in owner:
                break
        else:
            active.remove(i)
            continue
        owner[cell] = i
        parts[i].add(cell)
        assigned += 1
        for nb in device.neighbors(cell):
            if nb not in owner:
                fr.append(nb)
        if not fr:
            active.remove(i)
    return parts


def _sensible(device: Device, layout: Layout) -> bool:
    for iface, part in zip(device.interfaces, layout.partitions):
        if len(part.cells) <= len(iface.termination_cells):
            return False
    return not check_layout(device, layout)


def random_layouts(
    device: Device,
    n: int,
    rng: np.random.Generator,
    fill_range: tuple[float, float] = (1.0, 1.0),
    retry_factor: int = 20,
    prune: Callable[[Device, Layout], bool] = _sensible,
) -> list[Layout]:
    """``n`` distinct layouts grown concurrently from every interface.

    Each layout draws its own growth-weight vector (Dirichlet) so partitions
    enclose different resource fractions.  A fill fraction below 1 stops growth
    early and leaves cells unassigned; the default grows until every reachable
    cell is taken.  ``prune`` rejects nonsensical layouts; by default those
    with an invalid partition or one holding nothing beyond its termination
    cells.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not device.interfaces:
        raise LayoutError("device has no interfaces")
    if len(device.interfaces) == 1:
        only = Layout((Footprint(0, device.region, device.name),))
        if n > 1:
            raise LayoutError(f"only 1 distinct layout exists, {n} requested")
        return [only]

    out: list[Layout] = []
    seen: set[tuple] = set()
    attempts = 0
    budget = retry_factor * n
    while len(out) < n:
        if attempts >= budget:
            raise LayoutError(
                f"produced {len(out)} of {n} distinct sensible layouts in {attempts} attempts"
            )
        attempts += 1
        parts = _grow_random(device, rng, fill_range)
        layout = Layout(
            tuple(Footprint(i, frozenset(p), device.name) for i, p in enumerate(parts))
        )
        if layout.key in seen or not prune(device, layout):
            continue
        seen.add(layout.key)
        out.append(layout)
    log.debug("random_layouts: %d layouts in %d attempts", n, attempts)
    return out


def best_effort_layout(
    layouts: Sequence[Layout],
    feasibility: Callable[[Layout], Callable[[object], bool]],
    combinations: Sequence,
) -> tuple[Layout, float]:
    """Pick the layout accepting the most combinations; ties go to the lowest index.

    ``feasibility(layout)`` returns a per-combination predicate.  Callers put the
    naive layout in ``layouts`` so the result can never be worse than it.
    """
    if not layouts:
        raise ValueError("no candidate layouts")
    if not combinations:
        raise ValueError("no combinations")
    best_i, best_count = 0, -1
    for i, layout in enumerate(layouts):
        check = feasibility(layout)
        count = sum(1 for combo in combinations if check(combo))
        if count > best_count:
            best_i, best_count = i, count
    return layouts[best_i], best_count / len(combinations)
