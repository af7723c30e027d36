"""Deterministic fault injection for audit test cases.

build_consistent_gridbook synthesizes a workbook whose bound rows hold the
model's true values, so it passes validation by construction. inject then
produces a tampered copy differing only at the targeted cells, reproducing
the classic error classes: a stale fill (first cell edited, the rest left
from an outdated parameter set), a constant pasted over a window, or a
window scaled by a factor.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .audit import (
    Binding,
    BindingSpec,
    _materialize,
    _parse_source,
    binding_cells,
    resolve_inputs,
)
from .compare import DEFAULT_TOLERANCE, ToleranceSpec
from .errors import BindingError, FaultError, OverlapError, SpecError
from .grid import (
    CellRef,
    CellValue,
    GridBook,
    Number,
    RangeRef,
    offset_ref,
    parse_a1,
    read_cell,
)
from .oracle import NODE_ORDER, ModelInputs, run_model
from .series import Series

FAULT_KINDS = ("stale_fill", "constant_overwrite", "scale_error")

# Nodes whose values move when the derate input is perturbed; stale_fill
# must target one of these or the stale series would equal the true one.
_DERATE_DEPENDENT = ("nom_gen", "net_gen", "ebitda_r", "ebitda_n")


@dataclass(frozen=True)
class FaultSpec:
    """One injectable fault.

    indices is an inclusive (start, end) window into the bound series; when
    omitted for constant_overwrite/scale_error the window is placed by the
    seed. stale_fill always corrupts indices >= 1, keeping the first cell
    correct, with values recomputed from a derate scaled by input_scale.
    """

    kind: str
    node: str
    indices: tuple[int, int] | None = None
    value: float | None = None
    factor: float | None = None
    input_scale: float = 1.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in FAULT_KINDS:
            raise FaultError(f"unknown fault kind {self.kind!r}; known: {FAULT_KINDS}")
        if self.node not in NODE_ORDER:
            raise FaultError(f"unknown node {self.node!r}")
        if self.kind == "constant_overwrite" and self.value is None:
            raise FaultError("constant_overwrite needs a 'value'")
        if self.kind == "scale_error":
            if self.factor is None:
                raise FaultError("scale_error needs a 'factor'")
            if self.factor == 1.0:
                raise FaultError("scale factor must differ from 1")
        if self.kind == "stale_fill":
            if self.input_scale == 1.0:
                raise FaultError("stale_fill input_scale must differ from 1")
            if self.node not in _DERATE_DEPENDENT:
                raise FaultError(
                    f"stale_fill target must depend on derate; "
                    f"use one of {_DERATE_DEPENDENT}"
                )
        if self.indices is not None:
            start, end = self.indices
            if start < 0 or end < start:
                raise FaultError(f"bad index window ({start}, {end})")

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "FaultSpec":
        if not isinstance(data, Mapping):
            raise SpecError("fault spec must be a JSON object")
        allowed = {"kind", "node", "start", "end", "value", "factor",
                   "input_scale", "seed"}
        unknown = set(data) - allowed
        if unknown:
            raise SpecError(f"fault spec has unknown keys: {sorted(unknown)}")
        for key in ("kind", "node"):
            if key not in data:
                raise SpecError(f"fault spec needs a {key!r}")
        indices = None
        if "start" in data or "end" in data:
            if "start" not in data or "end" not in data:
                raise SpecError("fault spec must give start and end together")
            indices = (int(data["start"]), int(data["end"]))
        return cls(
            kind=str(data["kind"]),
            node=str(data["node"]),
            indices=indices,
            value=float(data["value"]) if "value" in data else None,
            factor=float(data["factor"]) if "factor" in data else None,
            input_scale=float(data.get("input_scale", 1.05)),
            seed=int(data.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "node": self.node, "seed": self.seed}
        if self.indices is not None:
            out["start"], out["end"] = self.indices
        if self.value is not None:
            out["value"] = self.value
        if self.factor is not None:
            out["factor"] = self.factor
        if self.kind == "stale_fill":
            out["input_scale"] = self.input_scale
        return out


def load_fault_spec(path: str | Path) -> FaultSpec:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"fault spec not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{p.name}: invalid JSON: {exc}") from exc
    return FaultSpec.from_dict(data)


# ---------------------------------------------------------------------------
# Building consistent books

def _layout_cells(binding: Binding) -> list[CellRef]:
    """Every cell a binding occupies when written, leading offset included."""
    if binding.sheet is None or binding.anchor is None:
        raise BindingError(
            f"binding for {binding.node!r} has no sheet+anchor location to build at"
        )
    anchor = binding.anchor.with_sheet(binding.sheet)
    total = binding.offset + (binding.length or 0)
    return [offset_ref(anchor, binding.orientation, i) for i in range(total)]


def _source_cells(src: str) -> list[CellRef]:
    kind, ref_text, direction = _parse_source(src)
    if kind == "name":
        raise BindingError(
            f"input source {src!r} has no location; use cell:/range:/expand: to build"
        )
    ref = parse_a1(ref_text)
    if kind == "cell":
        if not isinstance(ref, CellRef) or ref.sheet is None:
            raise SpecError(f"cell source must be a sheet-qualified cell: {src!r}")
        return [ref]
    if kind == "range":
        rng = ref if isinstance(ref, RangeRef) else RangeRef(ref, ref)
        if rng.sheet is None:
            raise SpecError(f"range source must name a sheet: {src!r}")
        return list(rng.cells())
    # expand: lay out the 12 irradiance cells from the anchor
    if not isinstance(ref, CellRef) or ref.sheet is None:
        raise SpecError(f"expand source must anchor a sheet-qualified cell: {src!r}")
    orientation = "col" if direction == "down" else "row"
    return [offset_ref(ref, orientation, i) for i in range(12)]


def _check_overlaps(regions: list[tuple[str, list[CellRef]]]) -> None:
    seen: dict[tuple[str, int, int], str] = {}
    collisions: list[str] = []
    for label, cells in regions:
        for ref in cells:
            key = (ref.sheet or "", ref.row, ref.col)
            other = seen.get(key)
            if other is not None and other != label:
                collisions.append(f"{label} and {other} both write {ref.a1()}")
            else:
                seen[key] = label
    if collisions:
        raise OverlapError("; ".join(sorted(set(collisions))))


def build_consistent_gridbook(inputs: ModelInputs, layout: BindingSpec) -> GridBook:
    """Write the model's true values into a fresh gridbook at the layout's
    bound locations; the result passes validation by construction.

    Node bindings must carry sheet+anchor locations. Leading offset cells are
    written as 0.0 placeholders (pre-operations columns). Workbook-sourced
    inputs are written at their cell:/range:/expand: locations; defined names
    attached to node bindings are registered over the full written run.
    """
    run = run_model(inputs)
    n = inputs.n_months
    bindings = [_materialize(b, n) for b in layout.bindings]

    regions: list[tuple[str, list[CellRef]]] = []
    sheets: dict[str, dict[tuple[int, int], CellValue]] = {}
    names: dict[str, RangeRef] = {}

    def write(ref: CellRef, value: float) -> None:
        sheets.setdefault(ref.sheet, {})[(ref.row, ref.col)] = Number(float(value))

    for binding in bindings:
        cells = _layout_cells(binding)
        regions.append((f"node {binding.node}", cells))
        series = run.node_values[binding.node]
        for i, ref in enumerate(cells):
            if i < binding.offset:
                write(ref, 0.0)
            else:
                write(ref, series[i - binding.offset])
        if binding.name is not None:
            names[binding.name] = RangeRef(cells[0], cells[-1])

    input_values = inputs.to_dict()
    sources = {}
    if "from_workbook" in layout.inputs:
        sources = dict(layout.inputs["from_workbook"])
    if layout.model_years_source is not None:
        sources["model_years"] = layout.model_years_source
    for key, src in sources.items():
        cells = _source_cells(str(src))
        regions.append((f"input {key}", cells))
        if key == "irradiance":
            irr = input_values["irradiance"]
            if len(cells) != len(irr):
                raise BindingError(
                    f"irradiance source {src!r} covers {len(cells)} cells, needs {len(irr)}"
                )
            for ref, v in zip(cells, irr):
                write(ref, v)
        else:
            if len(cells) != 1:
                raise BindingError(f"input {key!r} source must be a single cell")
            write(cells[0], float(input_values[key]))

    _check_overlaps(regions)
    return GridBook(sheets=sheets, defined_names=names)


# ---------------------------------------------------------------------------
# Injection

def _too_close(new: float, old: float, tol: ToleranceSpec) -> bool:
    return abs(new - old) <= tol.atol + tol.rtol * abs(old)


def inject(book: GridBook, fault: FaultSpec, layout: BindingSpec) -> GridBook:
    """A new gridbook differing from book only at the fault's target cells.

    The input book is never mutated. Every written cell must differ from the
    stored value by more than the binding's tolerance, so the fault is
    guaranteed to register under comparison.
    """
    raw_bindings = {b.node: b for b in layout.bindings}
    if fault.node not in raw_bindings:
        raise BindingError(f"fault target {fault.node!r} is not bound in the layout")
    inputs = resolve_inputs(book, layout)
    n = inputs.n_months
    binding = _materialize(raw_bindings[fault.node], n)
    cells = binding_cells(book, binding)

    if fault.kind == "stale_fill":
        stale_derate = inputs.derate * fault.input_scale
        try:
            stale_inputs = dataclasses.replace(inputs, derate=stale_derate)
        except Exception as exc:
            raise FaultError(f"stale derate {stale_derate} is invalid: {exc}") from exc
        stale = run_model(stale_inputs).node_values[fault.node]
        targets = [(i, stale[i]) for i in range(1, n)]
    else:
        if fault.indices is not None:
            start, end = fault.indices
        else:
            rng = random.Random(fault.seed)
            start = rng.randrange(n)
            end = rng.randrange(start, n)
        if end >= n:
            raise FaultError(
                f"index window ({start}, {end}) exceeds bound length {n}"
            )
        if fault.kind == "constant_overwrite":
            targets = [(i, float(fault.value)) for i in range(start, end + 1)]
        else:
            targets = []
            for i in range(start, end + 1):
                cell = read_cell(book, cells[i])
                if not isinstance(cell, Number):
                    raise FaultError(
                        f"target cell {cells[i].a1()} holds {cell!r}, cannot scale"
                    )
                targets.append((i, cell.value * float(fault.factor)))

    tol = binding.tol or DEFAULT_TOLERANCE
    writes: list[tuple[CellRef, float]] = []
    for i, new_value in targets:
        ref = cells[i]
        cell = read_cell(book, ref)
        if not isinstance(cell, Number):
            raise FaultError(f"target cell {ref.a1()} holds {cell!r}, expected a number")
        if _too_close(new_value, cell.value, tol):
            raise FaultError(
                f"fault at {ref.a1()} writes {new_value!r}, within tolerance of "
                f"the true value {cell.value!r}"
            )
        writes.append((ref, new_value))

    new_sheets = {name: dict(cells_map) for name, cells_map in book.sheets.items()}
    for ref, new_value in writes:
        new_sheets[ref.sheet][(ref.row, ref.col)] = Number(new_value)
    return GridBook(
        sheets=new_sheets,
        defined_names=dict(book.defined_names),
        formulas={s: dict(f) for s, f in book.formulas.items()},
    )


def diff_cells(a: GridBook, b: GridBook) -> list[CellRef]:
    """Cells whose values differ between two books, sorted by sheet, row, col."""
    out: list[CellRef] = []
    for sheet in sorted(set(a.sheets) | set(b.sheets)):
        cells_a = a.sheets.get(sheet, {})
        cells_b = b.sheets.get(sheet, {})
        for key in sorted(set(cells_a) | set(cells_b)):
            if cells_a.get(key) != cells_b.get(key):
                out.append(CellRef(key[0], key[1], sheet))
    return out
