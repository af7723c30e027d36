"""Workbook grid model: load OOXML or gridbook-JSON files into an immutable
in-memory grid, resolve defined names, and extract cell and range values.

Only cached (last-computed) cell values are read; formula text is captured
when present but plays no part in extraction. A loaded GridBook is never
mutated, so concurrent reads are safe.
"""

from __future__ import annotations

import json
import zipfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Union

from .errors import (
    DomainError,
    LengthError,
    NotAWorkbook,
    ParseError,
    TypeMismatch,
    UnknownName,
    UnknownSheet,
    UnsupportedFeature,
)
from .series import Series

MAX_ROWS = 1_048_576
MAX_COLS = 16_384

Orientation = Literal["row", "col"]

_MAIN_NS = "{http://schemas.openxmlformats.org/spreadsheetml/2006/main}"
_REL_NS = "{http://schemas.openxmlformats.org/package/2006/relationships}"
_RID_ATTR = "{http://schemas.openxmlformats.org/officeDocument/2006/relationships}id"
_OLE_MAGIC = b"\xd0\xcf\x11\xe0\xa1\xb1\x1a\xe1"


# ---------------------------------------------------------------------------
# Cell values

@dataclass(frozen=True)
class Number:
    """A numeric cell, at the file's full stored precision."""

    value: float


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class CellError:
    """An error cell such as #DIV/0!."""

    code: str


@dataclass(frozen=True)
class Empty:
    """An absent cell; distinct from Number(0)."""


EMPTY = Empty()

CellValue = Union[Number, Text, Bool, CellError, Empty]


# ---------------------------------------------------------------------------
# References

def col_to_letters(col: int) -> str:
    """Column index to letters, bijective base-26: 1 -> A, 26 -> Z, 27 -> AA."""
    if col < 1:
        raise DomainError(f"column index must be >= 1, got {col}")
    chars: list[str] = []
    while col > 0:
        col, rem = divmod(col - 1, 26)
        chars.append(chr(ord("A") + rem))
    return "".join(reversed(chars))


def letters_to_col(letters: str) -> int:
    """Inverse of col_to_letters; raises DomainError on non-letter input."""
    if not letters or not letters.isalpha():
        raise DomainError(f"not a column-letter string: {letters!r}")
    col = 0
    for ch in letters.upper():
        col = col * 26 + (ord(ch) - ord("A") + 1)
    return col


def _format_sheet(sheet: str) -> str:
    if sheet.isalnum() or (sheet and all(c.isalnum() or c in "_." for c in sheet)):
        return sheet
    return "'" + sheet.replace("'", "''") + "'"


@dataclass(frozen=True)
class CellRef:
    """A single cell address; rows and columns are 1-based."""

    row: int
    col: int
    sheet: str | None = None

    def __post_init__(self) -> None:
        if self.row < 1 or self.col < 1:
            raise DomainError(f"row and col must be >= 1, got ({self.row}, {self.col})")

    def a1(self, absolute: bool = True, include_sheet: bool = True) -> str:
        dollar = "$" if absolute else ""
        text = f"{dollar}{col_to_letters(self.col)}{dollar}{self.row}"
        if include_sheet and self.sheet is not None:
            return f"{_format_sheet(self.sheet)}!{text}"
        return text

    def with_sheet(self, sheet: str | None) -> "CellRef":
        return CellRef(self.row, self.col, sheet)


@dataclass(frozen=True)
class RangeRef:
    """A rectangular cell range; start is the top-left, end the bottom-right."""

    start: CellRef
    end: CellRef

    def __post_init__(self) -> None:
        if self.start.sheet != self.end.sheet:
            raise DomainError("range corners must share a sheet")
        if self.start.row > self.end.row or self.start.col > self.end.col:
            raise DomainError(
                f"range corners out of order: {self.start.a1()}:{self.end.a1()}"
            )

    @property
    def sheet(self) -> str | None:
        return self.start.sheet

    @property
    def n_rows(self) -> int:
        return self.end.row - self.start.row + 1

    @property
    def n_cols(self) -> int:
        return self.end.col - self.start.col + 1

    @property
    def size(self) -> int:
        return self.n_rows * self.n_cols

    def cells(self) -> Iterator[CellRef]:
        """All cells in the range, row-major."""
        for r in range(self.start.row, self.end.row + 1):
            for c in range(self.start.col, self.end.col + 1):
                yield CellRef(r, c, self.sheet)

    def a1(self, absolute: bool = True, include_sheet: bool = True) -> str:
        first = self.start.a1(absolute, include_sheet)
        second = self.end.a1(absolute, include_sheet=False)
        return f"{first}:{second}"


def offset_ref(ref: CellRef, orientation: Orientation, delta: int) -> CellRef:
    """Displace a cell along a row (columns advance) or a column (rows advance)."""
    if orientation == "row":
        return CellRef(ref.row, ref.col + delta, ref.sheet)
    if orientation == "col":
        return CellRef(ref.row + delta, ref.col, ref.sheet)
    raise DomainError(f"orientation must be 'row' or 'col', got {orientation!r}")


# ---------------------------------------------------------------------------
# A1 parsing

def _parse_sheet_prefix(text: str) -> tuple[str | None, int]:
    if text.startswith("'"):
        i = 1
        chars: list[str] = []
        while i < len(text):
            if text[i] == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    chars.append("'")
                    i += 2
                    continue
                break
            chars.append(text[i])
            i += 1
        else:
            raise ParseError("unterminated quoted sheet name", position=len(text))
        if i + 1 >= len(text) or text[i + 1] != "!":
            raise ParseError("expected '!' after quoted sheet name", position=i + 1)
        if not chars:
            raise ParseError("empty sheet name", position=0)
        return "".join(chars), i + 2
    bang = text.find("!")
    if bang < 0:
        return None, 0
    if bang == 0:
        raise ParseError("empty sheet name", position=0)
    return text[:bang], bang + 1


def _parse_cell_part(text: str, i: int, sheet: str | None) -> tuple[CellRef, int]:
    if i < len(text) and text[i] == "$":
        i += 1
    start_letters = i
    while i < len(text) and text[i].isalpha():
        i += 1
    if i == start_letters:
        raise ParseError("expected column letters", position=i)
    col = letters_to_col(text[start_letters:i])
    if col > MAX_COLS:
        raise ParseError(
            f"column {text[start_letters:i]!r} exceeds grid bounds", position=start_letters
        )
    if i < len(text) and text[i] == "$":
        i += 1
    start_digits = i
    while i < len(text) and text[i].isdigit():
        i += 1
    if i == start_digits:
        raise ParseError("expected row digits", position=i)
    row = int(text[start_digits:i])
    if row < 1 or row > MAX_ROWS:
        raise ParseError(f"row {row} outside grid bounds", position=start_digits)
    return CellRef(row, col, sheet), i


def parse_a1(text: str) -> CellRef | RangeRef:
    """Parse A1 text such as "G41", "$H$41:$BN$41" or "Model!D26".

    Dollar signs are accepted and ignored for addressing; a reversed range is
    normalized so the top-left corner comes first.
    """
    if not text:
        raise ParseError("empty reference", position=0)
    sheet, i = _parse_sheet_prefix(text)
    first, i = _parse_cell_part(text, i, sheet)
    if i == len(text):
        return first
    if text[i] != ":":
        raise ParseError(f"unexpected character {text[i]!r}", position=i)
    second, i = _parse_cell_part(text, i + 1, sheet)
    if i != len(text):
        raise ParseError(f"unexpected trailing text {text[i:]!r}", position=i)
    top = CellRef(min(first.row, second.row), min(first.col, second.col), sheet)
    bottom = CellRef(max(first.row, second.row), max(first.col, second.col), sheet)
    return RangeRef(top, bottom)


# ---------------------------------------------------------------------------
# The grid model

@dataclass(frozen=True)
class GridBook:
    """Parsed workbook: sparse per-sheet cell maps plus defined names.

    Treat instances as immutable after construction; all readers do.
    """

    sheets: dict[str, dict[tuple[int, int], CellValue]]
    defined_names: dict[str, RangeRef] = field(default_factory=dict)
    formulas: dict[str, dict[tuple[int, int], str]] = field(default_factory=dict)

    def sheet_names(self) -> list[str]:
        return list(self.sheets)


def read_cell(book: GridBook, ref: CellRef) -> CellValue:
    """The stored value at ref, or Empty when the cell is absent."""
    if ref.sheet is None:
        raise UnknownSheet("cell reference carries no sheet name")
    cells = book.sheets.get(ref.sheet)
    if cells is None:
        raise UnknownSheet(
            f"unknown sheet {ref.sheet!r}; workbook has: {sorted(book.sheets)}"
        )
    return cells.get((ref.row, ref.col), EMPTY)


def _numeric_at(book: GridBook, ref: CellRef) -> float:
    value = read_cell(book, ref)
    if isinstance(value, Number):
        return value.value
    if isinstance(value, Empty):
        raise TypeMismatch(f"cell {ref.a1()} is empty, expected a number")
    raise TypeMismatch(f"cell {ref.a1()} holds {value!r}, expected a number")


def read_series(
    book: GridBook,
    anchor: CellRef,
    orientation: Orientation = "row",
    count: int | None = None,
) -> Series:
    """Collect a numeric run starting at anchor.

    With count=None the run expands along the orientation (right for "row",
    down for "col") and stops before the first empty cell; with a count,
    exactly that many cells are collected. Every collected cell must hold a
    number: text, booleans and error cells raise TypeMismatch naming the
    offending cell, and an empty cell inside a counted run raises LengthError.
    """
    if count is not None and count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    values: list[float] = []
    i = 0
    while True:
        ref = offset_ref(anchor, orientation, i)
        if ref.row > MAX_ROWS or ref.col > MAX_COLS:
            cell: CellValue = EMPTY
        else:
            cell = read_cell(book, ref)
        if isinstance(cell, Empty):
            if count is None:
                if i == 0:
                    raise TypeMismatch(f"cell {ref.a1()} is empty, expected a number")
                break
            raise LengthError(i, count)
        if not isinstance(cell, Number):
            raise TypeMismatch(f"cell {ref.a1()} holds {cell!r}, expected a number")
        values.append(cell.value)
        i += 1
        if count is not None and i == count:
            break
    return Series(values)


def read_range(book: GridBook, rng: RangeRef) -> Series:
    """All cells of a range as a numeric series, row-major."""
    return Series([_numeric_at(book, ref) for ref in rng.cells()])


def resolve_name(book: GridBook, name: str) -> RangeRef:
    """The range a defined name is bound to."""
    try:
        return book.defined_names[name]
    except KeyError:
        raise UnknownName(
            f"unknown name {name!r}; defined names: {sorted(book.defined_names)}"
        ) from None


# ---------------------------------------------------------------------------
# Loading

def open_workbook(path: str | Path) -> GridBook:
    """Load an OOXML spreadsheet (.xlsx/.xlsm) or a gridbook-JSON file.

    Cell values are the file's cached results: for formula cells that is the
    last value the spreadsheet application computed. Two loads of the same
    bytes produce equal GridBooks.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"workbook not found: {p}")
    with open(p, "rb") as fh:
        head = fh.read(8)
    if head == _OLE_MAGIC:
        raise UnsupportedFeature(
            f"{p.name}: OLE compound file (encrypted or legacy .xls), not supported"
        )
    if zipfile.is_zipfile(p):
        return _load_ooxml(p)
    if head.lstrip()[:1] == b"{":
        return _load_gridbook_json(p)
    raise NotAWorkbook(f"{p.name}: neither a ZIP container nor gridbook-JSON")


def _xml_root(zf: zipfile.ZipFile, part: str) -> ET.Element:
    try:
        data = zf.read(part)
    except KeyError:
        raise NotAWorkbook(f"missing part {part}") from None
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        raise NotAWorkbook(f"bad XML in part {part}: {exc}") from exc


def _load_shared_strings(zf: zipfile.ZipFile) -> list[str]:
    if "xl/sharedStrings.xml" not in zf.namelist():
        return []
    root = _xml_root(zf, "xl/sharedStrings.xml")
    strings: list[str] = []
    for si in root.findall(f"{_MAIN_NS}si"):
        parts = [t.text or "" for t in si.iter(f"{_MAIN_NS}t")]
        strings.append("".join(parts))
    return strings


def _cell_value(
    cell: ET.Element, shared: list[str], part: str, addr: str
) -> tuple[CellValue, str | None]:
    ctype = cell.get("t", "n")
    v = cell.find(f"{_MAIN_NS}v")
    f = cell.find(f"{_MAIN_NS}f")
    formula = f.text if f is not None and f.text else None
    if ctype == "inlineStr":
        text = "".join(t.text or "" for t in cell.iter(f"{_MAIN_NS}t"))
        return Text(text), formula
    if v is None or v.text is None:
        return EMPTY, formula
    raw = v.text
    if ctype == "s":
        try:
            return Text(shared[int(raw)]), formula
        except (ValueError, IndexError):
            raise NotAWorkbook(
                f"bad shared-string index {raw!r} at {addr} in {part}"
            ) from None
    if ctype == "str":
        return Text(raw), formula
    if ctype == "b":
        return Bool(raw.strip() in ("1", "true", "TRUE")), formula
    if ctype == "e":
        return CellError(raw), formula
    try:
        return Number(float(raw)), formula
    except ValueError:
        raise NotAWorkbook(f"bad numeric value {raw!r} at {addr} in {part}") from None


def _load_sheet(
    zf: zipfile.ZipFile, part: str, shared: list[str]
) -> tuple[dict[tuple[int, int], CellValue], dict[tuple[int, int], str]]:
    root = _xml_root(zf, part)
    cells: dict[tuple[int, int], CellValue] = {}
    formulas: dict[tuple[int, int], str] = {}
    sheet_data = root.find(f"{_MAIN_NS}sheetData")
    if sheet_data is None:
        return cells, formulas
    row_idx = 0
    for row in sheet_data.findall(f"{_MAIN_NS}row"):
        row_idx = int(row.get("r", row_idx + 1))
        col_idx = 0
        for cell in row.findall(f"{_MAIN_NS}c"):
            addr = cell.get("r")
            if addr is not None:
                ref = parse_a1(addr)
                if not isinstance(ref, CellRef):
                    raise NotAWorkbook(f"bad cell address {addr!r} in {part}")
                row_idx, col_idx = ref.row, ref.col
            else:
                col_idx += 1
            value, formula = _cell_value(cell, shared, part, f"R{row_idx}C{col_idx}")
            if formula is not None:
                formulas[(row_idx, col_idx)] = formula
            if not isinstance(value, Empty):
                cells[(row_idx, col_idx)] = value
    return cells, formulas


def _load_ooxml(path: Path) -> GridBook:
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise NotAWorkbook(f"{path.name}: bad ZIP container: {exc}") from exc
    with zf:
        parts = set(zf.namelist())
        wb = _xml_root(zf, "xl/workbook.xml")
        rels: dict[str, str] = {}
        if "xl/_rels/workbook.xml.rels" in parts:
            rel_root = _xml_root(zf, "xl/_rels/workbook.xml.rels")
            for rel in rel_root.findall(f"{_REL_NS}Relationship"):
                rels[rel.get("Id", "")] = rel.get("Target", "")
        shared = _load_shared_strings(zf)

        sheets: dict[str, dict[tuple[int, int], CellValue]] = {}
        formulas: dict[str, dict[tuple[int, int], str]] = {}
        sheet_el = wb.find(f"{_MAIN_NS}sheets")
        for sheet in sheet_el.findall(f"{_MAIN_NS}sheet") if sheet_el is not None else []:
            name = sheet.get("name")
            rid = sheet.get(_RID_ATTR)
            if name is None or rid is None or rid not in rels:
                raise NotAWorkbook(
                    f"sheet entry without resolvable relationship in xl/workbook.xml"
                )
            target = rels[rid].lstrip("/")
            if not target.startswith("xl/"):
                target = "xl/" + target
            if "worksheets/" not in target:
                continue  # chartsheets and other non-grid parts
            if target not in parts:
                raise NotAWorkbook(f"missing part {target}")
            cells, sheet_formulas = _load_sheet(zf, target, shared)
            sheets[name] = cells
            if sheet_formulas:
                formulas[name] = sheet_formulas
        if not sheets:
            raise NotAWorkbook(f"{path.name}: workbook defines no worksheets")

        names: dict[str, RangeRef] = {}
        defined = wb.find(f"{_MAIN_NS}definedNames")
        for dn in defined.findall(f"{_MAIN_NS}definedName") if defined is not None else []:
            name = dn.get("name")
            text = dn.text or ""
            if name is None or name in names:
                continue
            try:
                ref = parse_a1(text.strip())
            except (ParseError, DomainError):
                continue  # formula, constant or multi-area name: not a plain range
            rng = ref if isinstance(ref, RangeRef) else RangeRef(ref, ref)
            if rng.sheet is None or rng.sheet not in sheets:
                continue
            names[name] = rng
    return GridBook(sheets=sheets, defined_names=names, formulas=formulas)


def _load_gridbook_json(path: Path) -> GridBook:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise NotAWorkbook(f"{path.name}: invalid gridbook-JSON: {exc}") from exc
    return gridbook_from_dict(data, source=path.name)


def gridbook_from_dict(data: object, source: str = "<gridbook>") -> GridBook:
    """Build a GridBook from decoded gridbook-JSON; strict about the schema."""
    if not isinstance(data, dict) or not isinstance(data.get("sheets"), dict):
        raise NotAWorkbook(f"{source}: gridbook-JSON must have a 'sheets' object")
    raw_sheets = data["sheets"]
    if not raw_sheets:
        raise NotAWorkbook(f"{source}: workbook defines no sheets")
    sheets: dict[str, dict[tuple[int, int], CellValue]] = {}
    for sheet_name, cells_obj in raw_sheets.items():
        if not isinstance(cells_obj, dict):
            raise NotAWorkbook(f"{source}: sheet {sheet_name!r} must map A1 to values")
        cells: dict[tuple[int, int], CellValue] = {}
        for addr, raw in cells_obj.items():
            try:
                ref = parse_a1(addr)
            except ParseError as exc:
                raise NotAWorkbook(f"{source}: bad address {addr!r}: {exc}") from exc
            if not isinstance(ref, CellRef) or ref.sheet is not None:
                raise NotAWorkbook(
                    f"{source}: address {addr!r} must be a bare single cell"
                )
            if isinstance(raw, bool):
                cells[(ref.row, ref.col)] = Bool(raw)
            elif isinstance(raw, (int, float)):
                cells[(ref.row, ref.col)] = Number(float(raw))
            elif isinstance(raw, str):
                cells[(ref.row, ref.col)] = Text(raw)
            else:
                raise NotAWorkbook(
                    f"{source}: cell {sheet_name}!{addr} has unsupported value {raw!r}"
                )
        sheets[sheet_name] = cells
    names: dict[str, RangeRef] = {}
    raw_names = data.get("names", {})
    if not isinstance(raw_names, dict):
        raise NotAWorkbook(f"{source}: 'names' must be an object")
    for name, text in raw_names.items():
        if not isinstance(text, str):
            raise NotAWorkbook(f"{source}: name {name!r} must map to a range string")
        try:
            ref = parse_a1(text)
        except ParseError as exc:
            raise NotAWorkbook(f"{source}: name {name!r}: {exc}") from exc
        rng = ref if isinstance(ref, RangeRef) else RangeRef(ref, ref)
        if rng.sheet is None:
            raise NotAWorkbook(f"{source}: name {name!r} must be sheet-qualified")
        if rng.sheet not in sheets:
            raise NotAWorkbook(
                f"{source}: name {name!r} refers to unknown sheet {rng.sheet!r}"
            )
        names[name] = rng
    return GridBook(sheets=sheets, defined_names=names)


# ---------------------------------------------------------------------------
# Saving (gridbook-JSON is the only output format)

def gridbook_to_dict(book: GridBook) -> dict:
    """GridBook as a gridbook-JSON object with deterministic key order."""
    sheets: dict[str, dict[str, object]] = {}
    for sheet_name in sorted(book.sheets):
        cells_out: dict[str, object] = {}
        for (row, col) in sorted(book.sheets[sheet_name]):
            value = book.sheets[sheet_name][(row, col)]
            addr = f"{col_to_letters(col)}{row}"
            if isinstance(value, Number):
                cells_out[addr] = value.value
            elif isinstance(value, Bool):
                cells_out[addr] = value.value
            elif isinstance(value, Text):
                cells_out[addr] = value.value
            else:
                raise UnsupportedFeature(
                    f"cannot serialize cell {sheet_name}!{addr} ({value!r}) to gridbook-JSON"
                )
        sheets[sheet_name] = cells_out
    out: dict = {"sheets": sheets}
    if book.defined_names:
        out["names"] = {
            name: book.defined_names[name].a1() for name in sorted(book.defined_names)
        }
    return out


def save_gridbook_json(book: GridBook, path: str | Path) -> None:
    """Write a GridBook as gridbook-JSON; byte-deterministic for equal books."""
    text = json.dumps(gridbook_to_dict(book), indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")
