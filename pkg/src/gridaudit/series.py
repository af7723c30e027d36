"""Minimal immutable 1-D float64 series kernel.

Exactly the five vector operations the EBITDA model needs, nothing more,
so the whole formula surface stays auditable at a glance. Everything here
is a pure function over immutable data and safe to share across threads.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from typing import Literal, Union

import numpy as np

from .errors import DivisionByZero, DomainError, LengthMismatch

ArithOp = Literal["add", "sub", "mul", "div"]

_ARITH_FUNCS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
}


class Series:
    """Fixed-length, read-only sequence of float64 values."""

    __slots__ = ("_data",)

    def __init__(self, values: Iterable[float] | np.ndarray) -> None:
        arr = np.array(list(values) if not isinstance(values, np.ndarray) else values,
                       dtype=np.float64, copy=True)
        if arr.ndim != 1:
            raise DomainError(f"series must be 1-D, got {arr.ndim} dimensions")
        arr.setflags(write=False)
        self._data = arr

    @property
    def values(self) -> np.ndarray:
        """Read-only float64 view of the underlying data."""
        return self._data

    def to_list(self) -> list[float]:
        return self._data.tolist()

    def __len__(self) -> int:
        return int(self._data.shape[0])

    def __getitem__(self, index: int) -> float:
        return float(self._data[index])

    def __iter__(self) -> Iterator[float]:
        return iter(self._data.tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Series):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(
            np.all(self._data == other._data)
        )

    def __hash__(self) -> int:
        return hash(self._data.tobytes())

    def __repr__(self) -> str:
        vals = self._data.tolist()
        if len(vals) > 8:
            head = ", ".join(repr(v) for v in vals[:8])
            return f"Series([{head}, ...] n={len(vals)})"
        return f"Series({vals!r})"


Scalar = Union[int, float]


def roll(s: Series, shift: int) -> Series:
    """Cyclic shift: output[i] = input[(i - shift) mod n]; empty in, empty out."""
    return Series(np.roll(s.values, shift))


def tile(s: Series, reps: int) -> Series:
    """Repeat the series end to end; output[i] = input[i mod n]."""
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    return Series(np.tile(s.values, reps))


def range_from_one(n: int) -> Series:
    """The series [1, 2, ..., n]; empty for n = 0."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    return Series(np.arange(1, n + 1, dtype=np.float64))


def zip_arith(a: Series, b: Series | Scalar, op: ArithOp) -> Series:
    """Elementwise arithmetic; a scalar right operand broadcasts to every element."""
    if op not in _ARITH_FUNCS:
        raise DomainError(f"unknown op {op!r}; expected one of {sorted(_ARITH_FUNCS)}")
    if isinstance(b, Series):
        if len(a) != len(b):
            raise LengthMismatch(len(a), len(b))
        bv: np.ndarray | float = b.values
        if op == "div":
            zeros = np.flatnonzero(b.values == 0.0)
            if zeros.size:
                raise DivisionByZero(int(zeros[0]))
    else:
        bv = float(b)
        if op == "div" and bv == 0.0:
            raise DivisionByZero()
    return Series(_ARITH_FUNCS[op](a.values, bv))


def pow_broadcast(base: Scalar, exponents: Series) -> Series:
    """output[i] = base ** exponents[i]; the base must be strictly positive."""
    base = float(base)
    if not base > 0.0:
        raise DomainError(f"base must be > 0, got {base}")
    return Series(np.power(base, exponents.values))
