"""Synthetic AFU libraries and the combination / sequence samplers."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .afu import AfuSpec
from .fabric import InterfaceKind, ResourceVector
from .packing import Combination

__all__ = [
    "Difficulty",
    "Family",
    "SequenceError",
    "TransitionSequence",
    "WorkloadSpec",
    "build_library",
    "sample_combinations",
    "sample_sequence",
    "ZERO_AFU_ID",
    "AFU_LOGIC",
]

AFU_LOGIC = 500
ZERO_AFU_ID = "none"
STEP = 5


class Family(str, Enum):
    BRAM = "bram"
    DSP = "dsp"
    MIXED = "mixed"


class Difficulty(str, Enum):
    EASY = "easy"
    HARD = "hard"
    HARDER = "harder"


_CEILINGS = {
    Family.BRAM: (20, 30, 40),
    Family.DSP: (30, 40, 50),
    Family.MIXED: (20, 30, 40),
}


@dataclass(frozen=True)
class WorkloadSpec:
    family: Family
    difficulty: Difficulty

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "difficulty", Difficulty(self.difficulty))

    @property
    def ceiling(self) -> int:
        return _CEILINGS[self.family][list(Difficulty).index(self.difficulty)]

    @property
    def name(self) -> str:
        return f"{self.family.value}-{self.difficulty.value}"

    @classmethod
    def parse(cls, text: str) -> WorkloadSpec:
        family, _, difficulty = text.lower().partition("-")
        return cls(Family(family), Difficulty(difficulty or "easy"))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "difficulty": self.difficulty.value}


def _bram(n: int, logic: int) -> AfuSpec:
    return AfuSpec(f"bram-{n}", ResourceVector(logic, n, 0), InterfaceKind.MEMORY)


def _dsp(n: int, logic: int) -> AfuSpec:
    return AfuSpec(f"dsp-{n}", ResourceVector(logic, 0, n), InterfaceKind.STREAMING)


def build_library(spec: WorkloadSpec, logic: int = AFU_LOGIC) -> list[AfuSpec]:
    """Zero-demand placeholder first, then demands in steps of 5 up to the ceiling."""
    top = spec.ceiling
    grid = range(STEP, top + 1, STEP)
    zero_kind = InterfaceKind.STREAMING if spec.family is Family.DSP else InterfaceKind.MEMORY
    lib = [AfuSpec(ZERO_AFU_ID, ResourceVector(), zero_kind)]
    if spec.family in (Family.BRAM, Family.MIXED):
        lib += [_bram(n, logic) for n in grid]
    if spec.family in (Family.DSP, Family.MIXED):
        lib += [_dsp(n, logic) for n in grid]
    return lib


def sample_combinations(
    library: Sequence[AfuSpec], n: int, n_interfaces: int, rng: np.random.Generator
) -> list[Combination]:
    if not library:
        raise ValueError("empty AFU library")
    if n < 1 or n_interfaces < 1:
        raise ValueError("n and n_interfaces must be positive")
    draws = rng.integers(len(library), size=(n, n_interfaces))
    return [Combination(tuple(library[i] for i in row)) for row in draws]


class SequenceError(RuntimeError):
    def __init__(self, message: str, progress: int):
        super().__init__(message)
        self.progress = progress


@dataclass(frozen=True)
class TransitionSequence:
    combos: tuple[Combination, ...]
    afu_delta: int

    def __len__(self) -> int:
        return len(self.combos)

    def differences(self) -> list[int]:
        return [
            sum(x.id != y.id for x, y in zip(a.afus, b.afus))
            for a, b in zip(self.combos, self.combos[1:])
        ]


def sample_sequence(
    library: Sequence[AfuSpec],
    length: int,
    afu_delta: int,
    validators: Sequence[Callable[[Combination], object]],
    rng: np.random.Generator,
    n_interfaces: int = 6,
    retry_budget: int = 2000,
    redraw_until_different: bool = True,
) -> TransitionSequence:
    """Random walk over combinations every validator accepts.

    Each step re-draws ``afu_delta`` distinct slots chosen uniformly.  With
    ``redraw_until_different`` the new AFU in a changed slot is drawn from the
    library minus the old one, so consecutive combinations differ in exactly
    ``afu_delta`` slots.  ``retry_budget`` bounds attempts per emitted combination.
    """
    if not library:
        raise ValueError("empty AFU library")
    if not validators:
        raise ValueError("at least one validator is required")
    if not 1 <= afu_delta <= n_interfaces:
        raise ValueError(f"afu_delta {afu_delta} outside 1..{n_interfaces}")
    if length < 1:
        raise ValueError("length must be positive")
    if redraw_until_different and len(library) < 2:
        raise ValueError("cannot change a slot with a one-AFU library")

    def ok(combo: Combination) -> bool:
        return all(v(combo) for v in validators)

    for _ in range(retry_budget):
        first = sample_combinations(library, 1, n_interfaces, rng)[0]
        if ok(first):
            break
    else:
        raise SequenceError("no starting combination accepted by all validators", 0)

    combos = [first]
    while len(combos) < length:
        prev = combos[-1].afus
        for _ in range(retry_budget):
            slots = rng.choice(n_interfaces, size=afu_delta, replace=False)
            new = list(prev)
            for s in sorted(int(x) for x in slots):
                if redraw_until_different:
                    pick = int(rng.integers(len(library) - 1))
                    old = library.index(prev[s])
                    new[s] = library[pick + (pick >= old)]
                else:
                    new[s] = library[int(rng.integers(len(library)))]
            combo = Combination(tuple(new))
            if ok(combo):
                combos.append(combo)
                break
        else:
            raise SequenceError(
                f"retry budget exhausted after {len(combos)} of {length} combinations",
                len(combos),
            )
    return TransitionSequence(tuple(combos), afu_delta)
