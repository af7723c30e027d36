"""Tolerance-based series comparison and translation of mismatch indices
into contiguous A1 cell ranges.

Closeness uses the asymmetric form |a - b| <= atol + rtol * |b| with b the
reference (model) side. NaN is never close to anything, itself included, so
an erratic cell surfacing as NaN always registers as a mismatch; infinities
are close only to an identical infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, LengthMismatch
from .grid import MAX_COLS, MAX_ROWS, CellRef, Orientation, offset_ref
from .series import Series

Run = tuple[int, int]


@dataclass(frozen=True)
class ToleranceSpec:
    """Relative and absolute comparison tolerances; both finite and >= 0."""

    rtol: float = 1e-5
    atol: float = 1e-8

    def __post_init__(self) -> None:
        for label, value in (("rtol", self.rtol), ("atol", self.atol)):
            if not math.isfinite(value) or value < 0.0:
                raise DomainError(f"{label} must be finite and >= 0, got {value}")


DEFAULT_TOLERANCE = ToleranceSpec()


def _contiguous_runs(indices: Sequence[int]) -> tuple[Run, ...]:
    runs: list[Run] = []
    start: int | None = None
    prev = -2
    for i in indices:
        if start is None:
            start = i
        elif i != prev + 1:
            runs.append((start, prev))
            start = i
        prev = i
    if start is not None:
        runs.append((start, prev))
    return tuple(runs)


@dataclass(frozen=True)
class ComparisonResult:
    """Elementwise closeness mask plus its index and run views."""

    mask: tuple[bool, ...]
    mismatch_indices: tuple[int, ...]
    match_runs: tuple[Run, ...]
    mismatch_runs: tuple[Run, ...]

    @classmethod
    def from_mask(cls, mask: Iterable[bool]) -> "ComparisonResult":
        mask_t = tuple(bool(m) for m in mask)
        matches = tuple(i for i, ok in enumerate(mask_t) if ok)
        mismatches = tuple(i for i, ok in enumerate(mask_t) if not ok)
        return cls(
            mask=mask_t,
            mismatch_indices=mismatches,
            match_runs=_contiguous_runs(matches),
            mismatch_runs=_contiguous_runs(mismatches),
        )

    @property
    def all_close(self) -> bool:
        return not self.mismatch_indices

    @property
    def mismatch_fraction(self) -> float:
        if not self.mask:
            return 0.0
        return len(self.mismatch_indices) / len(self.mask)


def isclose(a: Series, b: Series, tol: ToleranceSpec = DEFAULT_TOLERANCE) -> ComparisonResult:
    """Elementwise closeness of a against the reference series b."""
    if len(a) != len(b):
        raise LengthMismatch(len(a), len(b))
    av, bv = a.values, b.values
    with np.errstate(invalid="ignore"):
        within = np.abs(av - bv) <= (tol.atol + tol.rtol * np.abs(bv))
    finite = np.isfinite(av) & np.isfinite(bv)
    mask = np.where(finite, within, av == bv)
    return ComparisonResult.from_mask(mask.tolist())


def allclose(a: Series, b: Series, tol: ToleranceSpec = DEFAULT_TOLERANCE) -> bool:
    """True when every element of a is close to b; empty series compare equal."""
    return isclose(a, b, tol).all_close


def mismatch_runs(result: ComparisonResult) -> list[Run]:
    """Maximal contiguous runs of mismatching indices, ascending, inclusive."""
    return list(result.mismatch_runs)


def runs_to_a1(
    anchor: CellRef,
    orientation: Orientation,
    offset: int,
    runs: Iterable[Run],
) -> list[str]:
    """Render index runs as absolute A1 ranges.

    Index i maps to the cell displaced by offset + i from the anchor along
    the orientation; single-index runs render as one cell ("$G$41"), wider
    runs as "start:end".
    """
    if offset < 0:
        raise DomainError(f"offset must be >= 0, got {offset}")
    out: list[str] = []
    for start, end in runs:
        first = offset_ref(anchor, orientation, offset + start)
        last = offset_ref(anchor, orientation, offset + end)
        for ref in (first, last):
            if ref.row > MAX_ROWS or ref.col > MAX_COLS:
                raise DomainError(f"cell {ref.a1(include_sheet=False)} is outside grid bounds")
        if start == end:
            out.append(first.a1(include_sheet=False))
        else:
            out.append(f"{first.a1(include_sheet=False)}:{last.a1(include_sheet=False)}")
    return out
