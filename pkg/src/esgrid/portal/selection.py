"""Aggregated data selection: coordinate ranges -> one hyperslab constraint.

The mapping rule, stated once: a range selects every coordinate point lying
inside it (inclusive on both ends), and the emitted slab is the smallest
index window covering those points with stride 1.  A range that contains no
coordinate point is out of extent.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ValidationError
from ..gridfmt import Constraint, GridDataset, Hyperslab, Projection

# request field -> dimension names it may bind to, first match wins
DIM_ALIASES = {
    "time": ("time", "t"),
    "lat": ("lat", "latitude", "y"),
    "lon": ("lon", "longitude", "x"),
    "level": ("lev", "level", "plev", "z"),
}


class OutOfExtentError(ValidationError):
    code = "out_of_extent"


@dataclass(frozen=True)
class SelectionRequest:
    dataset: str
    variable: str
    time: tuple[float, float] | None = None
    lat: tuple[float, float] | None = None
    lon: tuple[float, float] | None = None
    level: tuple[float, float] | None = None

    def ranges(self) -> dict[str, tuple[float, float]]:
        out = {}
        for key in ("time", "lat", "lon", "level"):
            value = getattr(self, key)
            if value is not None:
                lo, hi = float(value[0]), float(value[1])
                if lo > hi:
                    raise ValidationError(f"empty {key} range: {lo}..{hi}")
                out[key] = (lo, hi)
        return out


def coord_index_window(coords: list[float], lo: float, hi: float) -> tuple[int, int]:
    inside = [i for i, c in enumerate(coords) if lo <= c <= hi]
    if not inside:
        raise OutOfExtentError(
            f"range {lo}..{hi} selects no coordinate points "
            f"(extent {min(coords)}..{max(coords)})")
    return min(inside), max(inside)


def compile_selection(ds: GridDataset, request: SelectionRequest) -> Constraint:
    """Resolve a selection against the dataset's coordinate variables."""
    if not ds.has_var(request.variable):
        raise ValidationError(f"unknown variable: {request.variable!r}")
    var = ds.var(request.variable)

    bound: dict[str, tuple[float, float]] = {}
    for key, rng in request.ranges().items():
        dim = next((d for d in var.dims if d in DIM_ALIASES[key]), None)
        if dim is None:
            raise ValidationError(
                f"variable {var.name!r} has no {key} dimension (dims: {var.dims})")
        bound[dim] = rng

    slabs: list[Hyperslab] = []
    last_constrained = -1
    for pos, dim in enumerate(var.dims):
        if dim in bound:
            last_constrained = pos
    for pos, dim in enumerate(var.dims[:last_constrained + 1]):
        size = ds.dim(dim).size
        if dim in bound:
            if not ds.has_var(dim):
                raise ValidationError(f"dimension {dim!r} has no coordinate variable")
            lo, hi = bound[dim]
            first, last = coord_index_window(list(ds.var(dim).data), lo, hi)
            slabs.append(Hyperslab(first, 1, last))
        else:
            slabs.append(Hyperslab(0, 1, size - 1))
    return Constraint((Projection(request.variable, tuple(slabs)),))


def check_coverage(request: SelectionRequest, time_coverage, space_coverage) -> None:
    """Cheap submit-time screen against the record's declared coverage."""
    ranges = request.ranges()
    if time_coverage and "time" in ranges:
        lo, hi = ranges["time"]
        if hi < time_coverage[0] or lo > time_coverage[1]:
            raise OutOfExtentError(
                f"time range {lo}..{hi} outside coverage "
                f"{time_coverage[0]}..{time_coverage[1]}")
    if space_coverage:
        lat_min, lat_max, lon_min, lon_max = space_coverage
        if "lat" in ranges:
            lo, hi = ranges["lat"]
            if hi < lat_min or lo > lat_max:
                raise OutOfExtentError(f"lat range {lo}..{hi} outside {lat_min}..{lat_max}")
        if "lon" in ranges:
            lo, hi = ranges["lon"]
            if hi < lon_min or lo > lon_max:
                raise OutOfExtentError(f"lon range {lo}..{hi} outside {lon_min}..{lon_max}")
