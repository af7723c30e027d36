"""Trusted monthly solar PPA EBITDA model.

A small set of pure functions over the series kernel computes the plant's
monthly cash-flow nodes, and run_model records every intermediate node by
name so each one can be checked against a workbook row independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import GridAuditError, InvalidInput, ModelError
from .series import Series, pow_broadcast, range_from_one, roll, tile, zip_arith

MONTHS_PER_YEAR = 12

NODE_ORDER: tuple[str, ...] = (
    "ops_months",
    "nom_gen",
    "deg_index",
    "net_gen",
    "inf_index",
    "ebitda_r",
    "ebitda_n",
)

DAG_EDGES: tuple[tuple[str, str], ...] = (
    ("ops_months", "deg_index"),
    ("ops_months", "inf_index"),
    ("nom_gen", "net_gen"),
    ("deg_index", "net_gen"),
    ("net_gen", "ebitda_r"),
    ("net_gen", "ebitda_n"),
    ("inf_index", "ebitda_n"),
)

NODE_PARENTS: dict[str, tuple[str, ...]] = {
    node: tuple(src for src, dst in DAG_EDGES if dst == node) for node in NODE_ORDER
}

INPUT_FIELDS: tuple[str, ...] = (
    "plant_size",
    "derate",
    "irradiance",
    "start_month",
    "model_years",
    "ppa_price",
    "om_cost",
    "degradation_rate",
    "inflation_rate",
)

INTEGER_INPUTS = frozenset({"start_month", "model_years"})


def node_ancestors(node: str) -> frozenset[str]:
    """All transitive upstream nodes of a node in the calculation graph."""
    seen: set[str] = set()
    stack = list(NODE_PARENTS.get(node, ()))
    while stack:
        parent = stack.pop()
        if parent not in seen:
            seen.add(parent)
            stack.extend(NODE_PARENTS.get(parent, ()))
    return frozenset(seen)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidInput(message)


@dataclass(frozen=True)
class ModelInputs:
    """Inputs of the solar plant model.

    plant_size is nameplate DC capacity in kWp; derate the DC-to-AC loss
    fraction; irradiance twelve monthly kWh/m2 values ordered January first;
    start_month the calendar month operations begin (1-12); prices are $/kWh;
    degradation and inflation are annual rates compounded monthly.
    """

    plant_size: float
    derate: float
    irradiance: Series
    start_month: int
    model_years: int
    ppa_price: float
    om_cost: float
    degradation_rate: float
    inflation_rate: float

    def __post_init__(self) -> None:
        _require(len(self.irradiance) == MONTHS_PER_YEAR,
                 f"irradiance must have 12 values, got {len(self.irradiance)}")
        _require(all(v >= 0.0 for v in self.irradiance),
                 "irradiance values must be >= 0")
        _require(isinstance(self.start_month, int) and not isinstance(self.start_month, bool),
                 "start_month must be an integer")
        _require(1 <= self.start_month <= 12,
                 f"start_month must be 1..12, got {self.start_month}")
        _require(isinstance(self.model_years, int) and not isinstance(self.model_years, bool),
                 "model_years must be an integer")
        _require(self.model_years >= 1,
                 f"model_years must be >= 1, got {self.model_years}")
        _require(0.0 < self.derate <= 1.0,
                 f"derate must be in (0, 1], got {self.derate}")
        _require(self.ppa_price >= 0.0, "ppa_price must be >= 0")
        _require(self.om_cost >= 0.0, "om_cost must be >= 0")
        _require(self.degradation_rate > -1.0, "degradation_rate must be > -1")
        _require(self.inflation_rate > -1.0, "inflation_rate must be > -1")

    @property
    def n_months(self) -> int:
        return MONTHS_PER_YEAR * self.model_years

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "ModelInputs":
        missing = [k for k in INPUT_FIELDS if k not in data]
        if missing:
            raise InvalidInput(f"missing model inputs: {missing}")
        extra = [k for k in data if k not in INPUT_FIELDS]
        if extra:
            raise InvalidInput(f"unknown model inputs: {extra}")
        kwargs: dict[str, object] = {}
        for key in INPUT_FIELDS:
            value = data[key]
            if key == "irradiance":
                if not isinstance(value, (list, tuple, Series)):
                    raise InvalidInput("irradiance must be a list of 12 numbers")
                kwargs[key] = value if isinstance(value, Series) else Series(value)
            elif key in INTEGER_INPUTS:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise InvalidInput(f"{key} must be a number")
                if isinstance(value, float):
                    if value != int(value):
                        raise InvalidInput(f"{key} must be an integer, got {value}")
                    value = int(value)
                kwargs[key] = value
            else:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise InvalidInput(f"{key} must be a number")
                kwargs[key] = float(value)
        return cls(**kwargs)  # type: ignore[arg-type]

    def to_dict(self) -> dict[str, object]:
        return {
            "plant_size": self.plant_size,
            "derate": self.derate,
            "irradiance": self.irradiance.to_list(),
            "start_month": self.start_month,
            "model_years": self.model_years,
            "ppa_price": self.ppa_price,
            "om_cost": self.om_cost,
            "degradation_rate": self.degradation_rate,
            "inflation_rate": self.inflation_rate,
        }


@dataclass(frozen=True)
class ModelRun:
    """All computed nodes of one model run plus the static dependency edges."""

    node_values: dict[str, Series]
    dag_edges: tuple[tuple[str, str], ...] = DAG_EDGES

    @property
    def n_months(self) -> int:
        return len(self.node_values["ops_months"])


def nom_generation(
    plant_size: float,
    derate: float,
    irradiance: Series,
    start_month: int,
    model_years: int,
) -> Series:
    """Nominal AC power generation of the plant, month by month.

    Parameters
    ----------
    plant_size : float
        nameplate size of the plant in kWp
    derate : float
        conversion/loss factor between DC and AC energy
    irradiance : Series
        monthly solar irradiance in kWh/m2, January first
    start_month : int
        calendar month (1-12) in which operations begin
    model_years : int
        modeled lifetime of the project in years

    Returns a series of length 12 * model_years: the irradiance year is
    rotated so operations month 1 falls on start_month, repeated across the
    model lifetime, and scaled by plant size and derate.
    """
    if not isinstance(start_month, int) or isinstance(start_month, bool):
        raise InvalidInput(f"start_month must be an integer, got {start_month!r}")
    if not 1 <= start_month <= 12:
        raise InvalidInput(f"start_month must be 1..12, got {start_month}")
    if not isinstance(model_years, int) or isinstance(model_years, bool):
        raise InvalidInput(f"model_years must be an integer, got {model_years!r}")
    if model_years < 1:
        raise InvalidInput(f"model_years must be >= 1, got {model_years}")
    start = start_month - 1
    first_year = roll(irradiance, -start)
    lifetime = tile(first_year, model_years)
    return zip_arith(lifetime, plant_size * derate, "mul")


def discount_index(ops_months: Series, rate: float) -> Series:
    """Monthly compounding index (1+rate)**(m/12) over the operating months."""
    if rate <= -1.0:
        raise InvalidInput(f"rate must be > -1, got {rate}")
    exponents = zip_arith(ops_months, 12.0, "div")
    return pow_broadcast(1.0 + rate, exponents)


def net_generation(nominal_gen: Series, degradation: Series) -> Series:
    """Nominal output divided by the degradation index."""
    return zip_arith(nominal_gen, degradation, "div")


def real_ebitda(net_gen: Series, ppa_price: float, om_cost: float) -> Series:
    """Revenue minus operating expenditures at constant prices."""
    revenue = zip_arith(net_gen, ppa_price, "mul")
    expenses = zip_arith(net_gen, om_cost, "mul")
    return zip_arith(revenue, expenses, "sub")


def nominal_ebitda(
    net_gen: Series, ppa_price: float, om_cost: float, inflation: Series
) -> Series:
    """Revenue minus expenditures with both legs scaled by the inflation index."""
    revenue = zip_arith(zip_arith(net_gen, ppa_price, "mul"), inflation, "mul")
    expenses = zip_arith(zip_arith(net_gen, om_cost, "mul"), inflation, "mul")
    return zip_arith(revenue, expenses, "sub")


def run_model(inputs: ModelInputs) -> ModelRun:
    """Compute every model node in dependency order.

    Any failure is re-raised as ModelError naming the node that failed.
    """
    values: dict[str, Series] = {}

    def compute(node: str, fn) -> Series:
        try:
            result = fn()
        except GridAuditError as exc:
            raise ModelError(node, exc) from exc
        values[node] = result
        return result

    ops_months = compute("ops_months", lambda: range_from_one(inputs.n_months))
    nom_gen = compute("nom_gen", lambda: nom_generation(
        inputs.plant_size, inputs.derate, inputs.irradiance,
        inputs.start_month, inputs.model_years))
    deg_index = compute("deg_index", lambda: discount_index(
        ops_months, inputs.degradation_rate))
    net_gen = compute("net_gen", lambda: net_generation(nom_gen, deg_index))
    inf_index = compute("inf_index", lambda: discount_index(
        ops_months, inputs.inflation_rate))
    compute("ebitda_r", lambda: real_ebitda(
        net_gen, inputs.ppa_price, inputs.om_cost))
    compute("ebitda_n", lambda: nominal_ebitda(
        net_gen, inputs.ppa_price, inputs.om_cost, inf_index))
    return ModelRun(node_values=values)
