"""Self-describing dimensioned array container.

A GridDataset is the in-memory form of an ESGN v1 file: named dimensions
(at most one unlimited, the record/concatenation axis), variables holding
row-major f64/i64 payloads, and scalar attribute maps at both levels.
A variable named after a dimension is that dimension's coordinate variable
and must be 1-D over it.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from ..errors import ValidationError

DTYPES = ("f64", "i64")

Scalar = str | int | float | bool

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _check_name(name: str, what: str) -> None:
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ValidationError(f"invalid {what} name: {name!r}")


def _check_attributes(attrs: dict, where: str) -> None:
    for key, value in attrs.items():
        if not isinstance(key, str):
            raise ValidationError(f"{where}: attribute key must be a string, got {key!r}")
        if not isinstance(value, (str, int, float, bool)):
            raise ValidationError(f"{where}: attribute {key!r} must be a scalar, got {type(value).__name__}")


@dataclass(frozen=True)
class Dimension:
    name: str
    size: int
    unlimited: bool = False


@dataclass
class Variable:
    name: str
    dims: list[str]
    dtype: str
    attributes: dict[str, Scalar] = field(default_factory=dict)
    data: list = field(default_factory=list)

    def rank(self) -> int:
        return len(self.dims)


@dataclass
class GridDataset:
    dimensions: list[Dimension] = field(default_factory=list)
    variables: list[Variable] = field(default_factory=list)
    global_attributes: dict[str, Scalar] = field(default_factory=dict)

    def dim(self, name: str) -> Dimension:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise ValidationError(f"unknown dimension: {name!r}")

    def has_dim(self, name: str) -> bool:
        return any(d.name == name for d in self.dimensions)

    def var(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise ValidationError(f"unknown variable: {name!r}")

    def has_var(self, name: str) -> bool:
        return any(v.name == name for v in self.variables)

    def var_shape(self, var: Variable) -> list[int]:
        return [self.dim(d).size for d in var.dims]

    def record_dim(self) -> Dimension | None:
        for d in self.dimensions:
            if d.unlimited:
                return d
        return None

    def validate(self) -> "GridDataset":
        """Raise ValidationError unless every container invariant holds."""
        seen_dims: set[str] = set()
        unlimited = 0
        for d in self.dimensions:
            _check_name(d.name, "dimension")
            if d.name in seen_dims:
                raise ValidationError(f"duplicate dimension name: {d.name!r}")
            seen_dims.add(d.name)
            if not isinstance(d.size, int) or d.size < 0:
                raise ValidationError(f"dimension {d.name!r} has negative size")
            if d.unlimited:
                unlimited += 1
        if unlimited > 1:
            raise ValidationError("more than one unlimited dimension")

        _check_attributes(self.global_attributes, "dataset")
        seen_vars: set[str] = set()
        for v in self.variables:
            _check_name(v.name, "variable")
            if v.name in seen_vars:
                raise ValidationError(f"duplicate variable name: {v.name!r}")
            seen_vars.add(v.name)
            if v.dtype not in DTYPES:
                raise ValidationError(f"variable {v.name!r}: unsupported dtype {v.dtype!r}")
            for dn in v.dims:
                if dn not in seen_dims:
                    raise ValidationError(f"variable {v.name!r} references undeclared dimension {dn!r}")
            expected = math.prod(self.var_shape(v))
            if len(v.data) != expected:
                raise ValidationError(
                    f"variable {v.name!r}: data length {len(v.data)} != shape product {expected}")
            _check_attributes(v.attributes, f"variable {v.name!r}")
            if v.dtype == "i64" and not all(isinstance(x, int) for x in v.data):
                raise ValidationError(f"variable {v.name!r}: i64 data must be integers")
            if v.dtype == "f64" and not all(isinstance(x, (int, float)) for x in v.data):
                raise ValidationError(f"variable {v.name!r}: f64 data must be numeric")
            # coordinate variable rule
            if v.name in seen_dims and v.dims != [v.name]:
                raise ValidationError(
                    f"variable {v.name!r} shares a dimension name so it must be 1-D over {v.name!r}")
        return self

    def structurally_equal(self, other: "GridDataset") -> bool:
        if [(d.name, d.size, d.unlimited) for d in self.dimensions] != \
           [(d.name, d.size, d.unlimited) for d in other.dimensions]:
            return False
        if self.global_attributes != other.global_attributes:
            return False
        if len(self.variables) != len(other.variables):
            return False
        for a, b in zip(self.variables, other.variables):
            if (a.name, a.dims, a.dtype, a.attributes) != (b.name, b.dims, b.dtype, b.attributes):
                return False
            if len(a.data) != len(b.data):
                return False
            for x, y in zip(a.data, b.data):
                if x != y and not (isinstance(x, float) and isinstance(y, float)
                                   and math.isnan(x) and math.isnan(y)):
                    return False
        return True
