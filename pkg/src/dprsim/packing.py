"""Feasibility of demanded AFU combinations under standard and amorphous DPR.

Standard DPR is a bipartite matching between demanded AFUs and the fixed
partitions of one layout.  Amorphous DPR picks, for each AFU, one bitstream
version (interface + footprint) so that no two footprints overlap and no
interface is used twice; the search here is exhaustive, so a negative answer
is definitive for the given database.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .afu import (
    DEFAULT_ROUTABILITY_CAP,
    AfuSpec,
    BitstreamDb,
    BitstreamVersion,
    Infeasible,
    fits,
)
from .fabric import Device, ResourceVector, region_capacity
from .footprint import DEFAULT_SIZE_MODEL, Footprint, SizeModel, bitstream_bytes
from .layouts import Layout

__all__ = [
    "AmorphousPacker",
    "Assignment",
    "Combination",
    "Placement",
    "StandardSystem",
    "brute_force_pack",
    "check_placement",
    "feasible_amorphous",
    "feasible_standard",
    "placement_rate",
    "standard_feasibility_matrix",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Combination:
    """Demanded AFUs, one per interface slot; zero-demand AFUs mark empty slots."""

    afus: tuple[AfuSpec, ...]

    def __post_init__(self):
        if not isinstance(self.afus, tuple):
            object.__setattr__(self, "afus", tuple(self.afus))

    @property
    def demanded(self) -> list[tuple[int, AfuSpec]]:
        return [(slot, a) for slot, a in enumerate(self.afus) if not a.is_zero]

    @property
    def key(self) -> tuple[str, ...]:
        """Multiset of non-zero AFU ids; feasibility depends on nothing else."""
        return tuple(sorted(a.id for a in self.afus if not a.is_zero))

    def __len__(self) -> int:
        return len(self.afus)

    def ids(self) -> list[str]:
        return [a.id for a in self.afus]


@dataclass(frozen=True)
class Assignment:
    slot: int
    version: BitstreamVersion

    @property
    def afu_id(self) -> str:
        return self.version.afu.id

    @property
    def interface_id(self) -> int:
        return self.version.interface_id


@dataclass(frozen=True)
class Placement:
    assignments: tuple[Assignment, ...] = ()
    search_nodes: int = field(default=0, compare=False)

    def __bool__(self) -> bool:
        return True

    def by_interface(self) -> dict[int, BitstreamVersion]:
        return {a.interface_id: a.version for a in self.assignments}

    def by_slot(self) -> dict[int, BitstreamVersion]:
        return {a.slot: a.version for a in self.assignments}

    @property
    def total_bytes(self) -> int:
        return sum(a.version.bytes for a in self.assignments)


def check_placement(device: Device, combo: Combination, placement: Placement) -> list[str]:
    """Independent audit of a placement against a combination."""
    problems = []
    want = dict(combo.demanded)
    got = {a.slot: a for a in placement.assignments}
    if set(want) != set(got):
        problems.append(f"slots placed {sorted(got)} != demanded {sorted(want)}")
    ifaces = [a.interface_id for a in placement.assignments]
    if len(set(ifaces)) != len(ifaces):
        problems.append(f"interface used twice: {sorted(ifaces)}")
    for slot, a in got.items():
        if slot in want and a.afu_id != want[slot].id:
            problems.append(f"slot {slot} holds {a.afu_id}, wants {want[slot].id}")
        iface = device.interface_by_id[a.interface_id]
        if not iface.kind.accepts(a.version.afu.interface_kind):
            problems.append(f"slot {slot}: interface kind mismatch")
    for a, b in itertools.combinations(placement.assignments, 2):
        if not a.version.footprint.cells.isdisjoint(b.version.footprint.cells):
            problems.append(f"slots {a.slot} and {b.slot} overlap")
    return problems


def placement_rate(oracle: Callable[[Combination], object], combinations: Sequence) -> float:
    if not combinations:
        raise ValueError("no combinations")
    return sum(1 for c in combinations if oracle(c)) / len(combinations)


# -- standard DPR ----------------------------------------------------------

def _kuhn(masks: Sequence[int], n_right: int, blocked: int = 0) -> list[int] | None:
    """Perfect matching of left vertices into right vertices given as bitmasks."""
    owner = [-1] * n_right

    def augment(i: int, seen: list[bool]) -> bool:
        m = masks[i] & ~blocked
        while m:
            low = m & -m
            p = low.bit_length() - 1
            m ^= low
            if seen[p]:
                continue
            seen[p] = True
            if owner[p] < 0 or augment(owner[p], seen):
                owner[p] = i
                return True
        return False

    for i in range(len(masks)):
        if not augment(i, [False] * n_right):
            return None
    match = [-1] * len(masks)
    for p, i in enumerate(owner):
        if i >= 0:
            match[i] = p
    return match


@lru_cache(maxsize=1 << 18)
def _matchable(masks: tuple[int, ...], n_right: int) -> bool:
    return _kuhn(masks, n_right) is not None


def feasible_standard(
    layout: Layout,
    combo: Combination,
    fit: Callable[[AfuSpec, Footprint], BitstreamVersion | Infeasible],
) -> Placement | Infeasible:
    """Match every demanded AFU to its own partition of ``layout``.

    ``fit`` is the synthesis oracle for one (AFU, partition) pair.  On failure
    the witness names an AFU left unmatched.
    """
    demanded = combo.demanded
    parts = layout.partitions
    versions: dict[tuple[int, int], BitstreamVersion] = {}
    masks = []
    for slot, afu in demanded:
        m = 0
        for p, part in enumerate(parts):
            v = fit(afu, part)
            if v:
                versions[slot, p] = v
                m |= 1 << p
        masks.append(m)
    match = _kuhn(masks, len(parts))
    if match is None:
        witness = _unmatched_witness(masks, len(parts))
        afu = demanded[witness][1]
        return Infeasible("no matching of AFUs to partitions", afu_id=afu.id)
    return Placement(
        tuple(
            Assignment(slot, versions[slot, p])
            for (slot, _), p in zip(demanded, match)
        )
    )


def _unmatched_witness(masks: Sequence[int], n_right: int) -> int:
    # Grow the prefix until it stops being matchable; its last AFU is a witness.
    for k in range(1, len(masks) + 1):
        if _kuhn(masks[:k], n_right) is None:
            return k - 1
    return len(masks) - 1


class StandardSystem:
    """A fixed layout with per-partition fit masks cached for fast repeated checks."""

    def __init__(
        self,
        device: Device,
        layout: Layout,
        routability_cap: float = DEFAULT_ROUTABILITY_CAP,
        size_model: SizeModel = DEFAULT_SIZE_MODEL,
    ):
        self.device = device
        self.layout = layout
        self.routability_cap = routability_cap
        self.size_model = size_model
        self.n = len(layout.partitions)
        self.capacity = [region_capacity(device, p.cells) for p in layout.partitions]
        self.bytes = [bitstream_bytes(device, p.cells, size_model) for p in layout.partitions]
        self.kinds = [device.interface_by_id[p.interface_id].kind for p in layout.partitions]
        self._masks: dict[str, int] = {}

    def fit_mask(self, afu: AfuSpec) -> int:
        m = self._masks.get(afu.id)
        if m is None:
            m = 0
            for p in range(self.n):
                if self.kinds[p].accepts(afu.interface_kind) and fits(
                    afu.demand, self.capacity[p], self.routability_cap
                ) is None:
                    m |= 1 << p
            self._masks[afu.id] = m
        return m

    def fit(self, afu: AfuSpec, part: Footprint) -> BitstreamVersion | Infeasible:
        p = part.interface_id
        if self.layout.partitions[p] != part:
            raise ValueError("partition is not part of this layout")
        if self.fit_mask(afu) >> p & 1:
            return BitstreamVersion(afu, part, self.bytes[p])
        return Infeasible("does not fit partition", afu_id=afu.id)

    def feasible(self, combo: Combination) -> bool:
        masks = tuple(sorted(self.fit_mask(a) for _, a in combo.demanded))
        if 0 in masks:
            return False
        return _matchable(masks, self.n)

    __call__ = feasible

    def place(
        self, combo: Combination, keep: Mapping[int, int] | None = None
    ) -> Placement | Infeasible:
        """Place ``combo``; ``keep`` pins slots to partitions (slot -> partition)."""
        keep = dict(keep or {})
        demanded = combo.demanded
        blocked = 0
        for slot, p in keep.items():
            blocked |= 1 << p
        free = [(s, a) for s, a in demanded if s not in keep]
        masks = [self.fit_mask(a) for _, a in free]
        match = _kuhn(masks, self.n, blocked)
        if match is None:
            return Infeasible("no matching of AFUs to free partitions")
        where = dict(keep)
        where.update({s: p for (s, _), p in zip(free, match)})
        afus = dict(demanded)
        return Placement(
            tuple(
                Assignment(s, BitstreamVersion(afus[s], self.layout.partitions[p], self.bytes[p]))
                for s, p in sorted(where.items())
            )
        )


def standard_feasibility_matrix(
    device: Device,
    layouts: Sequence[Layout],
    combinations: Sequence[Combination],
    routability_cap: float = DEFAULT_ROUTABILITY_CAP,
) -> np.ndarray:
    """Boolean (combination x layout) verdicts under standard DPR.

    Vectorised over layouts: a combination is matchable iff every subset S of
    its demanded AFUs can reach at least |S| partitions (Hall's condition).
    Uses the same fit rule as ``fits``.
    """
    n_parts = len(device.interfaces)
    if n_parts > 16:
        raise ValueError("vectorised scan supports at most 16 interfaces")
    caps = np.array(
        [[tuple(region_capacity(device, p.cells)) for p in l.partitions] for l in layouts],
        dtype=float,
    ).reshape(len(layouts), n_parts, 3)
    kinds = [device.interface_by_id[i].kind for i in range(n_parts)]
    weights = (1 << np.arange(n_parts)).astype(np.int64)
    popcount = np.array([bin(i).count("1") for i in range(1 << n_parts)], dtype=np.int64)
    masks: dict[str, np.ndarray] = {}

    def fit_mask(afu: AfuSpec) -> np.ndarray:
        m = masks.get(afu.id)
        if m is None:
            d = afu.demand
            ok = d.logic <= routability_cap * caps[:, :, 0] + 1e-9
            if d.bram > 0:
                ok &= d.bram <= routability_cap * caps[:, :, 1] + 1e-9
            if d.dsp > 0:
                ok &= d.dsp <= routability_cap * caps[:, :, 2] + 1e-9
            ok &= np.array([k.accepts(afu.interface_kind) for k in kinds])
            m = masks[afu.id] = (ok * weights).sum(axis=1)
        return m

    out = np.zeros((len(combinations), len(layouts)), dtype=bool)
    memo: dict[tuple[str, ...], np.ndarray] = {}
    for ci, combo in enumerate(combinations):
        key = combo.key
        row = memo.get(key)
        if row is None:
            afus = [a for _, a in combo.demanded]
            k = len(afus)
            if k > n_parts:
                row = np.zeros(len(layouts), dtype=bool)
            else:
                m = [fit_mask(a) for a in afus]
                row = np.ones(len(layouts), dtype=bool)
                union = [None] * (1 << k)
                union[0] = np.zeros(len(layouts), dtype=np.int64)
                for s in range(1, 1 << k):
                    low = (s & -s).bit_length() - 1
                    union[s] = union[s & (s - 1)] | m[low]
                    row &= popcount[union[s]] >= bin(s).count("1")
            memo[key] = row
        out[ci] = row
    return out


# -- amorphous DPR ---------------------------------------------------------

def _bits(x: int) -> Iterable[int]:
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


class AmorphousPacker:
    """Search index over a bitstream database.

    Footprints are numbered by ascending bitstream size, so the search always
    tries the smallest candidate first.  For every AFU only inclusion-minimal
    footprints per interface are kept: swapping a footprint for a subset of it
    on the same interface can never create an overlap, so the pruning does not
    lose any packing.  ``conflict[f]`` is the set of footprints that overlap
    ``f`` or share its interface.
    """

    def __init__(
        self,
        db: BitstreamDb,
        prune: bool = True,
        greedy: bool = False,
    ):
        self.db = db
        self.greedy = greedy
        self.device = device = db.device
        by_key: dict[tuple, Footprint] = {}
        afu_keys: dict[str, set[tuple]] = {}
        size: dict[tuple, int] = {}
        for v in db:
            k = v.footprint.key
            by_key.setdefault(k, v.footprint)
            size[k] = v.bytes
            afu_keys.setdefault(v.afu.id, set()).add(k)

        if prune:
            afu_keys = {a: self._minimal(keys, by_key) for a, keys in afu_keys.items()}
        active = sorted({k for keys in afu_keys.values() for k in keys}, key=lambda k: (size[k], k))
        self.footprints = [by_key[k] for k in active]
        self.bytes = [size[k] for k in active]
        index = {k: i for i, k in enumerate(active)}
        self.masks = [device.mask(f.cells) for f in self.footprints]
        self.ifaces = [f.interface_id for f in self.footprints]
        self.caps = [tuple(region_capacity(device, f.cells)) for f in self.footprints]
        self.total = tuple(device.total)

        self.candidates: dict[str, int] = {}
        self.min_need: dict[str, tuple[float, float, float]] = {}
        for a, keys in afu_keys.items():
            bits = 0
            for k in keys:
                bits |= 1 << index[k]
            self.candidates[a] = bits
            self.min_need[a] = tuple(
                min(self.caps[i][j] for i in _bits(bits)) for j in range(3)
            )

        # Per-cell and per-interface membership bitsets; conflicts are their unions.
        n_bits = device.n_columns * device.rows
        self.cell_sets = [0] * n_bits
        self.iface_sets: dict[int, int] = {}
        for i, (m, itf) in enumerate(zip(self.masks, self.ifaces)):
            bit = 1 << i
            for c in _bits(m):
                self.cell_sets[c] |= bit
            self.iface_sets[itf] = self.iface_sets.get(itf, 0) | bit
        self.conflict = []
        for m, itf in zip(self.masks, self.ifaces):
            c = self.iface_sets[itf]
            for cell in _bits(m):
                c |= self.cell_sets[cell]
            self.conflict.append(c)
        self._memo: dict[tuple[str, ...], tuple[int, ...] | None] = {}
        self.nodes = 0

    @staticmethod
    def _minimal(keys: set[tuple], by_key: Mapping[tuple, Footprint]) -> set[tuple]:
        out: set[tuple] = set()
        groups: dict[int, list[tuple]] = {}
        for k in keys:
            groups.setdefault(k[0], []).append(k)
        for group in groups.values():
            group.sort()
            cells = sorted({c for k in group for c in k[1]})
            col = {c: j for j, c in enumerate(cells)}
            mat = np.zeros((len(group), len(cells)), dtype=np.float32)
            for i, k in enumerate(group):
                mat[i, [col[c] for c in k[1]]] = 1
            # outside[g, f] = number of cells of g not in f; zero means g is a subset of f.
            outside = mat @ (1 - mat).T
            subset = outside == 0
            np.fill_diagonal(subset, False)
            dominated = subset.any(axis=0)
            out.update(k for k, d in zip(group, dominated) if not d)
        return out

    @classmethod
    def for_db(cls, db: BitstreamDb, greedy: bool = False) -> AmorphousPacker:
        key = ("packer", greedy)
        packer = db._cache.get(key)
        if packer is None:
            packer = db._cache[key] = cls(db, greedy=greedy)
        return packer

    def blocked_by(self, footprints: Iterable[Footprint]) -> int:
        """Footprint indices that clash with any of ``footprints``."""
        out = 0
        for fp in footprints:
            out |= self.iface_sets.get(fp.interface_id, 0)
            for c in _bits(self.device.mask(fp.cells)):
                out |= self.cell_sets[c]
        return out

    def solve(
        self,
        afu_ids: Sequence[str],
        fixed: Sequence[Footprint] = (),
    ) -> tuple[int, ...] | None:
        """Footprint index per AFU (in input order), or None when none exists."""
        if not afu_ids:
            return ()
        memo_key = None
        if not fixed:
            order = sorted(range(len(afu_ids)), key=lambda i: afu_ids[i])
            memo_key = tuple(afu_ids[i] for i in order)
            if memo_key in self._memo:
                hit = self._memo[memo_key]
                if hit is None:
                    return None
                out = [0] * len(afu_ids)
                for pos, i in enumerate(order):
                    out[i] = hit[pos]
                return tuple(out)

        result = self._search(list(afu_ids), fixed)
        if memo_key is not None:
            self._memo[memo_key] = (
                None if result is None else tuple(result[i] for i in order)
            )
        return result

    def _search(self, afu_ids: list[str], fixed: Sequence[Footprint]) -> tuple[int, ...] | None:
        n = len(afu_ids)
        domains = []
        for a in afu_ids:
            d = self.candidates.get(a, 0)
            if not d:
                return None
            domains.append(d)
        free = list(self.total)
        if fixed:
            blocked = self.blocked_by(fixed)
            domains = [d & ~blocked for d in domains]
            if not all(domains):
                return None
            for fp in fixed:
                for j, x in enumerate(region_capacity(self.device, fp.cells)):
                    free[j] -= x
        need = [self.min_need[a] for a in afu_ids]
        conflict = self.conflict
        caps = self.caps
        assign = [-1] * n
        nodes = 0
        greedy = self.greedy

        def rec(remaining: list[int], domains: list[int], f0: float, f1: float, f2: float) -> bool:
            nonlocal nodes
            if not remaining:
                return True
            s0 = s1 = s2 = 0.0
            for r in remaining:
                nl, nb, nd = need[r]
                s0 += nl
                s1 += nb
                s2 += nd
            if s0 > f0 or s1 > f1 or s2 > f2:
                return False
            s = min(remaining, key=lambda r: (domains[r].bit_count(), r))
            rest = [r for r in remaining if r != s]
            twins = [afu_ids[r] == afu_ids[s] for r in rest]
            d = domains[s]
            while d:
                low = d & -d
                f = low.bit_length() - 1
                d ^= low
                nodes += 1
                clash = ~conflict[f]
                above = ~((low << 1) - 1)
                new = domains[:]
                ok = True
                for r, twin in zip(rest, twins):
                    nd_ = domains[r] & clash
                    if twin:
                        nd_ &= above
                    if not nd_:
                        ok = False
                        break
                    new[r] = nd_
                if not ok:
                    continue
                c0, c1, c2 = caps[f]
                assign[s] = f
                if rec(rest, new, f0 - c0, f1 - c1, f2 - c2):
                    return True
                if greedy:
                    break
            assign[s] = -1
            return False

        found = rec(list(range(n)), domains, *free)
        self.nodes += nodes
        self.last_nodes = nodes
        return tuple(assign) if found else None

    def placement(self, combo: Combination, fixed: Mapping[int, BitstreamVersion] | None = None) -> Placement | Infeasible:
        """Place the demanded AFUs of ``combo``; ``fixed`` pins slots to versions."""
        fixed = dict(fixed or {})
        todo = [(s, a) for s, a in combo.demanded if s not in fixed]
        sol = self.solve([a.id for _, a in todo], [v.footprint for v in fixed.values()])
        if sol is None:
            return Infeasible("no non-overlapping packing of available footprints")
        out = [Assignment(s, v) for s, v in fixed.items()]
        for (s, a), f in zip(todo, sol):
            out.append(Assignment(s, BitstreamVersion(a, self.footprints[f], self.bytes[f])))
        return Placement(tuple(sorted(out, key=lambda x: x.slot)), getattr(self, "last_nodes", 0))

    def feasible(self, combo: Combination) -> bool:
        return self.solve(list(combo.key)) is not None

    __call__ = feasible


def feasible_amorphous(db: BitstreamDb, combo: Combination) -> Placement | Infeasible:
    return AmorphousPacker.for_db(db).placement(combo)


def brute_force_pack(
    db: BitstreamDb, combo: Combination, bound: int = 10**6
) -> Placement | Infeasible:
    """Enumerate every version selection; first valid one in canonical order wins."""
    demanded = combo.demanded
    options = [db.for_afu(a.id) for _, a in demanded]
    total = 1
    for opts in options:
        total *= len(opts)
    if total > bound:
        raise ValueError(f"{total} selections exceed the enumeration bound {bound}")
    for pick in itertools.product(*options):
        ifaces = [v.interface_id for v in pick]
        if len(set(ifaces)) != len(ifaces):
            continue
        if all(
            a.footprint.cells.isdisjoint(b.footprint.cells)
            for a, b in itertools.combinations(pick, 2)
        ):
            return Placement(tuple(Assignment(s, v) for (s, _), v in zip(demanded, pick)))
    return Infeasible("exhaustive enumeration found no packing")
