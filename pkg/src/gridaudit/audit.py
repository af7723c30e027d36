"""Bind model nodes to workbook ranges, validate the terminal node, and
localize failures by a backward walk over the calculation graph.

A binding ties one model node to a workbook location: either a defined name
or an (sheet, anchor, orientation) triple whose run expands from the anchor.
The audit compares every bound node against the model, then reports as
culprits the failing nodes whose bound upstream nodes all pass; unbound
intermediates are transparent, and culprits above which anything was left
unbound are flagged as upstream-unverified.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .compare import (
    DEFAULT_TOLERANCE,
    ComparisonResult,
    ToleranceSpec,
    isclose,
    runs_to_a1,
)
from .errors import (
    BindingError,
    GridAuditError,
    LengthError,
    NotAnInteger,
    SpecError,
    TypeMismatch,
)
from .grid import (
    CellRef,
    CellValue,
    GridBook,
    Number,
    Orientation,
    RangeRef,
    offset_ref,
    parse_a1,
    read_cell,
    read_range,
    read_series,
    resolve_name,
)
from .oracle import (
    INPUT_FIELDS,
    INTEGER_INPUTS,
    NODE_ORDER,
    ModelInputs,
    ModelRun,
    node_ancestors,
    run_model,
)
from .series import Series

TERMINAL_NODE = "ebitda_n"


# ---------------------------------------------------------------------------
# Binding specs

@dataclass(frozen=True)
class Binding:
    """One node-to-range binding.

    Exactly one target form must be usable: a defined name, or a sheet plus
    anchor cell with an orientation. offset skips leading cells (e.g.
    pre-operations columns); length, when omitted, defaults to the model
    length at audit time.
    """

    node: str
    name: str | None = None
    sheet: str | None = None
    anchor: CellRef | None = None
    orientation: Orientation = "row"
    offset: int = 0
    length: int | None = None
    tol: ToleranceSpec | None = None

    def __post_init__(self) -> None:
        has_anchor = self.sheet is not None and self.anchor is not None
        if self.name is None and not has_anchor:
            raise SpecError(
                f"binding for {self.node!r} needs a name or a sheet+anchor target"
            )
        if (self.sheet is None) != (self.anchor is None):
            raise SpecError(
                f"binding for {self.node!r} must give sheet and anchor together"
            )
        if self.orientation not in ("row", "col"):
            raise SpecError(
                f"binding for {self.node!r}: orientation must be 'row' or 'col'"
            )
        if self.offset < 0:
            raise SpecError(f"binding for {self.node!r}: offset must be >= 0")
        if self.length is not None and self.length < 1:
            raise SpecError(f"binding for {self.node!r}: length must be >= 1")


@dataclass(frozen=True)
class BindingSpec:
    """A whole audit description: workbook, input sources, node bindings."""

    workbook: str
    inputs: dict
    bindings: tuple[Binding, ...]
    model_years_source: str | None = None
    base_dir: Path | None = None

    def workbook_path(self) -> Path:
        p = Path(self.workbook)
        if not p.is_absolute() and self.base_dir is not None:
            return self.base_dir / p
        return p


def _binding_from_dict(raw: Mapping[str, object]) -> Binding:
    if not isinstance(raw, Mapping) or "node" not in raw:
        raise SpecError(f"binding entry must be an object with a 'node' key: {raw!r}")
    node = raw["node"]
    if node not in NODE_ORDER:
        raise SpecError(f"unknown node {node!r}; known nodes: {list(NODE_ORDER)}")
    allowed = {"node", "name", "sheet", "anchor", "orientation", "offset", "length",
               "rtol", "atol"}
    extra = set(raw) - allowed
    if extra:
        raise SpecError(f"binding for {node!r} has unknown keys: {sorted(extra)}")
    anchor = None
    if "anchor" in raw:
        ref = parse_a1(str(raw["anchor"]))
        if not isinstance(ref, CellRef):
            raise SpecError(f"binding for {node!r}: anchor must be a single cell")
        anchor = ref
    tol = None
    if "rtol" in raw or "atol" in raw:
        tol = ToleranceSpec(
            rtol=float(raw.get("rtol", DEFAULT_TOLERANCE.rtol)),
            atol=float(raw.get("atol", DEFAULT_TOLERANCE.atol)),
        )
    return Binding(
        node=str(node),
        name=str(raw["name"]) if "name" in raw else None,
        sheet=str(raw["sheet"]) if "sheet" in raw else None,
        anchor=anchor,
        orientation=str(raw.get("orientation", "row")),  # type: ignore[arg-type]
        offset=int(raw.get("offset", 0)),
        length=int(raw["length"]) if "length" in raw else None,
        tol=tol,
    )


def binding_spec_from_dict(data: object, base_dir: Path | None = None) -> BindingSpec:
    if not isinstance(data, dict):
        raise SpecError("binding spec must be a JSON object")
    unknown = set(data) - {"workbook", "inputs", "bindings", "model_years_source"}
    if unknown:
        raise SpecError(f"binding spec has unknown keys: {sorted(unknown)}")
    if "workbook" not in data or not isinstance(data["workbook"], str):
        raise SpecError("binding spec needs a 'workbook' path")
    if "inputs" not in data or not isinstance(data["inputs"], dict):
        raise SpecError("binding spec needs an 'inputs' object")
    raw_bindings = data.get("bindings", [])
    if not isinstance(raw_bindings, list):
        raise SpecError("'bindings' must be a list")
    bindings = tuple(_binding_from_dict(b) for b in raw_bindings)
    seen: set[str] = set()
    for b in bindings:
        if b.node in seen:
            raise SpecError(f"node {b.node!r} is bound more than once")
        seen.add(b.node)
    mys = data.get("model_years_source")
    if mys is not None and not isinstance(mys, str):
        raise SpecError("'model_years_source' must be a source string")
    return BindingSpec(
        workbook=data["workbook"],
        inputs=dict(data["inputs"]),
        bindings=bindings,
        model_years_source=mys,
        base_dir=base_dir,
    )


def load_binding_spec(path: str | Path) -> BindingSpec:
    """Load a binding-spec JSON file; relative workbook paths resolve against
    the spec file's directory."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"binding spec not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{p.name}: invalid JSON: {exc}") from exc
    return binding_spec_from_dict(data, base_dir=p.parent)


# ---------------------------------------------------------------------------
# Input extraction

def coerce_input_cell(value: CellValue, integer: bool = False) -> float | int:
    """Turn a numeric cell into a model input value.

    Integer-typed inputs must be within 1e-9 of an exact integer; other
    inputs pass through as floats.
    """
    if not isinstance(value, Number):
        raise TypeMismatch(f"expected a numeric cell, got {value!r}")
    v = value.value
    if not integer:
        return v
    nearest = round(v)
    if abs(v - nearest) >= 1e-9:
        raise NotAnInteger(v)
    return int(nearest)


def _parse_source(src: str) -> tuple[str, str, str | None]:
    """Split an input source string into (kind, reference, direction)."""
    if ":" not in src:
        raise SpecError(f"bad input source {src!r}; expected kind:reference")
    kind, rest = src.split(":", 1)
    if kind == "expand":
        if ":" not in rest:
            raise SpecError(f"bad expand source {src!r}; expected expand:<cell>:down|right")
        ref, direction = rest.rsplit(":", 1)
        if direction not in ("down", "right"):
            raise SpecError(f"bad expand direction {direction!r} in {src!r}")
        return kind, ref, direction
    if kind not in ("name", "cell", "range"):
        raise SpecError(f"unknown input source kind {kind!r} in {src!r}")
    return kind, rest, None


def _scalar_from_source(book: GridBook, src: str, integer: bool) -> float | int:
    kind, ref_text, _ = _parse_source(src)
    if kind == "name":
        rng = resolve_name(book, ref_text)
        if rng.size != 1:
            raise TypeMismatch(
                f"name {ref_text!r} spans {rng.size} cells, expected a single cell"
            )
        return coerce_input_cell(read_cell(book, rng.start), integer=integer)
    if kind == "cell":
        ref = parse_a1(ref_text)
        if not isinstance(ref, CellRef) or ref.sheet is None:
            raise SpecError(f"cell source must name a sheet-qualified cell: {src!r}")
        return coerce_input_cell(read_cell(book, ref), integer=integer)
    raise SpecError(f"source {src!r} does not yield a scalar")


def _series_from_source(book: GridBook, src: str) -> Series:
    kind, ref_text, direction = _parse_source(src)
    if kind == "name":
        return read_range(book, resolve_name(book, ref_text))
    if kind == "range":
        rng = parse_a1(ref_text)
        if isinstance(rng, CellRef):
            rng = RangeRef(rng, rng)
        if rng.sheet is None:
            raise SpecError(f"range source must name a sheet: {src!r}")
        return read_range(book, rng)
    if kind == "expand":
        ref = parse_a1(ref_text)
        if not isinstance(ref, CellRef) or ref.sheet is None:
            raise SpecError(f"expand source must anchor a sheet-qualified cell: {src!r}")
        orientation: Orientation = "col" if direction == "down" else "row"
        return read_series(book, ref, orientation)
    raise SpecError(f"source {src!r} does not yield a series")


def resolve_inputs(book: GridBook | None, spec: BindingSpec) -> ModelInputs:
    """Materialize ModelInputs from a spec, reading the workbook if needed."""
    raw = spec.inputs
    if "from_workbook" in raw:
        if set(raw) != {"from_workbook"}:
            raise SpecError("'inputs' must be inline values or a 'from_workbook' map")
        sources = dict(raw["from_workbook"])
        if spec.model_years_source is not None:
            sources["model_years"] = spec.model_years_source
        unknown = set(sources) - set(INPUT_FIELDS)
        if unknown:
            raise SpecError(f"unknown input names in from_workbook: {sorted(unknown)}")
        missing = [k for k in INPUT_FIELDS if k not in sources]
        if missing:
            raise SpecError(f"from_workbook is missing inputs: {missing}")
        if book is None:
            raise SpecError("workbook-sourced inputs need a loaded workbook")
        values: dict[str, object] = {}
        for key, src in sources.items():
            if key == "irradiance":
                values[key] = _series_from_source(book, str(src))
            else:
                values[key] = _scalar_from_source(
                    book, str(src), integer=key in INTEGER_INPUTS
                )
        return ModelInputs.from_dict(values)
    inline = dict(raw)
    if spec.model_years_source is not None and "model_years" not in inline:
        if book is None:
            raise SpecError("model_years_source needs a loaded workbook")
        inline["model_years"] = _scalar_from_source(
            book, spec.model_years_source, integer=True
        )
    return ModelInputs.from_dict(inline)


# ---------------------------------------------------------------------------
# Series extraction

def extract_bound_series(book: GridBook, binding: Binding) -> Series:
    """Read a binding's full range, drop offset leading cells, take exactly
    binding.length cells; shortfalls raise LengthError, never truncate."""
    if binding.length is None:
        raise BindingError(f"binding for {binding.node!r} has no resolved length")
    needed = binding.offset + binding.length
    if binding.name is not None:
        rng = resolve_name(book, binding.name)
        if rng.n_rows > 1 and rng.n_cols > 1:
            raise BindingError(
                f"name {binding.name!r} is a {rng.n_rows}x{rng.n_cols} block; "
                "series bindings need a single row or column"
            )
        cells = list(rng.cells())
        if len(cells) < needed:
            raise LengthError(len(cells), needed)
        window = cells[binding.offset:needed]
        values = []
        for ref in window:
            cell = read_cell(book, ref)
            if not isinstance(cell, Number):
                raise TypeMismatch(
                    f"cell {ref.a1()} holds {cell!r}, expected a number"
                )
            values.append(cell.value)
        return Series(values)
    anchor = binding.anchor.with_sheet(binding.sheet)  # type: ignore[union-attr]
    run = read_series(book, anchor, binding.orientation)
    if len(run) < needed:
        raise LengthError(len(run), needed)
    return Series(run.values[binding.offset:needed])


def binding_geometry(book: GridBook, binding: Binding) -> tuple[CellRef, Orientation]:
    """The anchor cell and direction a binding's indices advance along."""
    if binding.name is not None:
        rng = resolve_name(book, binding.name)
        orientation: Orientation = "col" if rng.n_cols == 1 and rng.n_rows > 1 else "row"
        return rng.start, orientation
    return binding.anchor.with_sheet(binding.sheet), binding.orientation  # type: ignore[union-attr]


def binding_cells(book: GridBook, binding: Binding) -> list[CellRef]:
    """Workbook cells of the bound window, index 0 first (offset applied)."""
    if binding.length is None:
        raise BindingError(f"binding for {binding.node!r} has no resolved length")
    anchor, orientation = binding_geometry(book, binding)
    return [
        offset_ref(anchor, orientation, binding.offset + i)
        for i in range(binding.length)
    ]


# ---------------------------------------------------------------------------
# Reports

@dataclass(frozen=True)
class NodeResult:
    node: str
    bound: bool
    passed: bool | None = None
    mismatch_fraction: float | None = None


@dataclass(frozen=True)
class Culprit:
    node: str
    error_ranges: tuple[str, ...]
    correct_ranges: tuple[str, ...]
    upstream_unverified: bool


@dataclass(frozen=True)
class AuditReport:
    """Machine-readable audit outcome."""

    verdict: str  # "pass" | "fail" | "error"
    nodes: tuple[NodeResult, ...] = ()
    culprits: tuple[Culprit, ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        out: dict = {
            "verdict": self.verdict,
            "nodes": [
                {
                    "node": n.node,
                    "bound": n.bound,
                    "pass": n.passed,
                    "mismatch_fraction": n.mismatch_fraction,
                }
                for n in self.nodes
            ],
            "culprits": [
                {
                    "node": c.node,
                    "error_ranges": list(c.error_ranges),
                    "correct_ranges": list(c.correct_ranges),
                    "upstream_unverified": c.upstream_unverified,
                }
                for c in self.culprits
            ],
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _error_report(cause: Exception | str) -> AuditReport:
    return AuditReport(verdict="error", error=str(cause))


def _materialize(binding: Binding, model_length: int) -> Binding:
    if binding.length is None:
        return dataclasses.replace(binding, length=model_length)
    return binding


def _prepare(
    book: GridBook, spec: BindingSpec, default_tol: ToleranceSpec | None
) -> tuple[ModelInputs, ModelRun, dict[str, Binding], ToleranceSpec]:
    inputs = resolve_inputs(book, spec)
    run = run_model(inputs)
    bindings = {
        b.node: _materialize(b, inputs.n_months) for b in spec.bindings
    }
    return inputs, run, bindings, default_tol or DEFAULT_TOLERANCE


def validate(
    book: GridBook, spec: BindingSpec, default_tol: ToleranceSpec | None = None
) -> AuditReport:
    """Compare only the terminal node; pass/fail with no localization."""
    try:
        _, run, bindings, tol = _prepare(book, spec, default_tol)
        if TERMINAL_NODE not in bindings:
            return _error_report(f"terminal node {TERMINAL_NODE!r} is not bound")
        binding = bindings[TERMINAL_NODE]
        extracted = extract_bound_series(book, binding)
        result = isclose(extracted, run.node_values[TERMINAL_NODE], binding.tol or tol)
    except GridAuditError as exc:
        return _error_report(exc)
    nodes = tuple(
        NodeResult(
            node,
            bound=node in bindings,
            passed=result.all_close if node == TERMINAL_NODE else None,
            mismatch_fraction=result.mismatch_fraction if node == TERMINAL_NODE else None,
        )
        for node in NODE_ORDER
    )
    return AuditReport(
        verdict="pass" if result.all_close else "fail",
        nodes=nodes,
    )


def audit(
    book: GridBook, spec: BindingSpec, default_tol: ToleranceSpec | None = None
) -> AuditReport:
    """Compare every bound node and localize failures to culprit nodes and
    exact cell ranges."""
    try:
        _, run, bindings, tol = _prepare(book, spec, default_tol)
        if TERMINAL_NODE not in bindings:
            return _error_report(f"terminal node {TERMINAL_NODE!r} is not bound")
        results: dict[str, ComparisonResult] = {}
        for node in NODE_ORDER:
            binding = bindings.get(node)
            if binding is None:
                continue
            extracted = extract_bound_series(book, binding)
            results[node] = isclose(
                extracted, run.node_values[node], binding.tol or tol
            )
    except GridAuditError as exc:
        return _error_report(exc)

    nodes = tuple(
        NodeResult(
            node,
            bound=node in bindings,
            passed=results[node].all_close if node in results else None,
            mismatch_fraction=results[node].mismatch_fraction if node in results else None,
        )
        for node in NODE_ORDER
    )

    culprits: list[Culprit] = []
    for node in NODE_ORDER:
        result = results.get(node)
        if result is None or result.all_close:
            continue
        ancestors = node_ancestors(node)
        bound_ancestors = [a for a in ancestors if a in results]
        if any(not results[a].all_close for a in bound_ancestors):
            continue  # blame lies upstream
        anchor, orientation = binding_geometry(book, bindings[node])
        offset = bindings[node].offset
        culprits.append(
            Culprit(
                node=node,
                error_ranges=tuple(
                    runs_to_a1(anchor, orientation, offset, result.mismatch_runs)
                ),
                correct_ranges=tuple(
                    runs_to_a1(anchor, orientation, offset, result.match_runs)
                ),
                upstream_unverified=bool(ancestors - set(results)),
            )
        )

    terminal_ok = results[TERMINAL_NODE].all_close
    return AuditReport(
        verdict="pass" if terminal_ok else "fail",
        nodes=nodes,
        culprits=tuple(culprits),
    )
