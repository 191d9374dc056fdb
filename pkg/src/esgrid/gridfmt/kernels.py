"""Subsetting and record-axis concatenation over GridDatasets.

Both kernels are pure functions over immutable inputs.  Subsetting gathers
the hyperslab-selected index sets (stop inclusive); concatenation is allowed
only along the single unlimited dimension so multi-file holdings join
seamlessly into one record series.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right

from ..errors import NotFoundError, ValidationError
from .constraint import Constraint
from .model import Dimension, GridDataset, Variable


class UnknownVariableError(NotFoundError):
    code = "unknown_variable"


class RankMismatchError(ValidationError):
    code = "rank_mismatch"


class SlabBoundsError(ValidationError):
    code = "slab_out_of_bounds"


class SelectionConflictError(ValidationError):
    """Two projections select different index sets on a shared dimension."""

    code = "selection_conflict"


class ConcatError(ValidationError):
    code = "concat_mismatch"


def _flat_index(index: tuple[int, ...], shape: list[int]) -> int:
    flat = 0
    for i, n in zip(index, shape):
        flat = flat * n + i
    return flat


def _gather(var: Variable, shape: list[int], selections: list[list[int]]) -> list:
    out = []
    for index in itertools.product(*selections):
        out.append(var.data[_flat_index(index, shape)])
    return out


def subset(ds: GridDataset, c: Constraint) -> GridDataset:
    """Project variables and slice them by per-dimension hyperslabs.

    Omitted trailing slabs mean full range.  Coordinate variables of every
    retained dimension are sliced consistently and included in the output
    even when not projected.  Variable order follows the input dataset.
    """
    if not c.projections:
        raise ValidationError("constraint projects no variables")

    # Resolve the per-dimension index selection across all projections.
    selections: dict[str, list[int]] = {}
    projected: list[str] = []
    for proj in c.projections:
        if not ds.has_var(proj.variable):
            raise UnknownVariableError(f"unknown variable: {proj.variable!r}")
        var = ds.var(proj.variable)
        if len(proj.slabs) > var.rank():
            raise RankMismatchError(
                f"{var.name!r}: {len(proj.slabs)} hyperslabs for rank {var.rank()}")
        projected.append(var.name)
        for dim_name, slab in zip(var.dims, proj.slabs):
            size = ds.dim(dim_name).size
            if slab.stop >= size:
                raise SlabBoundsError(
                    f"{var.name!r}: slab {slab} out of bounds for {dim_name!r} (size {size})")
            chosen = slab.indices()
            prior = selections.get(dim_name)
            if prior is not None and prior != chosen:
                raise SelectionConflictError(
                    f"conflicting selections for dimension {dim_name!r}")
            selections[dim_name] = chosen

    # Dimensions retained by the output, in dataset order.
    used_dims = {d for name in projected for d in ds.var(name).dims}
    out_dims = []
    for d in ds.dimensions:
        if d.name in used_dims:
            chosen = selections.get(d.name)
            size = len(chosen) if chosen is not None else d.size
            out_dims.append(Dimension(d.name, size, d.unlimited))

    # Coordinate variables ride along with their dimension.
    included = set(projected)
    for d in out_dims:
        if ds.has_var(d.name):
            included.add(d.name)

    out_vars = []
    for var in ds.variables:
        if var.name not in included:
            continue
        shape = ds.var_shape(var)
        per_dim = [selections.get(dn, list(range(ds.dim(dn).size))) for dn in var.dims]
        out_vars.append(Variable(
            name=var.name,
            dims=list(var.dims),
            dtype=var.dtype,
            attributes=dict(var.attributes),
            data=_gather(var, shape, per_dim),
        ))

    return GridDataset(
        dimensions=out_dims,
        variables=out_vars,
        global_attributes=dict(ds.global_attributes),
    ).validate()


def _check_concat_schema(first: GridDataset, part: GridDataset, axis: str) -> None:
    a_dims = [(d.name, d.size, d.unlimited) for d in first.dimensions if d.name != axis]
    b_dims = [(d.name, d.size, d.unlimited) for d in part.dimensions if d.name != axis]
    if a_dims != b_dims:
        raise ConcatError("non-axis dimensions differ between parts")
    if [d.name for d in first.dimensions] != [d.name for d in part.dimensions]:
        raise ConcatError("dimension order differs between parts")
    a_vars = [(v.name, v.dims, v.dtype) for v in first.variables]
    b_vars = [(v.name, v.dims, v.dtype) for v in part.variables]
    if a_vars != b_vars:
        raise ConcatError("variable schemas differ between parts")
    for va, vb in zip(first.variables, part.variables):
        if va.attributes != vb.attributes:
            raise ConcatError(f"conflicting attributes on variable {va.name!r}")


def _concat_data(blocks: list[list], shapes: list[list[int]], axis_pos: int) -> list:
    """Concatenate row-major blocks along an arbitrary axis position."""
    if axis_pos == 0:
        out: list = []
        for b in blocks:
            out.extend(b)
        return out
    sizes = [s[axis_pos] for s in shapes]
    bounds = list(itertools.accumulate(sizes))
    out_shape = list(shapes[0])
    out_shape[axis_pos] = bounds[-1]
    out = []
    for index in itertools.product(*(range(n) for n in out_shape)):
        part = bisect_right(bounds, index[axis_pos])
        local = list(index)
        local[axis_pos] -= bounds[part - 1] if part else 0
        out.append(blocks[part][_flat_index(tuple(local), shapes[part])])
    return out


def concat(parts: list[GridDataset], axis: str) -> GridDataset:
    """Join datasets along the unlimited record dimension, in part order.

    Record-axis coordinate values are concatenated verbatim (overlaps are
    not de-duplicated).  Variables that do not span the axis must be
    value-identical in every part.  Global attributes come from the first.
    """
    if not parts:
        raise ConcatError("empty part list")
    first = parts[0]
    for part in parts:
        if not part.has_dim(axis):
            raise ConcatError(f"axis {axis!r} missing from a part")
        if not part.dim(axis).unlimited:
            raise ConcatError(f"axis {axis!r} is not the unlimited dimension")
        _check_concat_schema(first, part, axis)

    total = sum(p.dim(axis).size for p in parts)
    out_dims = [Dimension(d.name, total if d.name == axis else d.size, d.unlimited)
                for d in first.dimensions]

    out_vars = []
    for i, var in enumerate(first.variables):
        if axis in var.dims:
            axis_pos = var.dims.index(axis)
            blocks = [p.variables[i].data for p in parts]
            shapes = [p.var_shape(p.variables[i]) for p in parts]
            data = _concat_data(blocks, shapes, axis_pos)
        else:
            for p in parts[1:]:
                if p.variables[i].data != var.data:
                    raise ConcatError(
                        f"non-record variable {var.name!r} has differing values across parts")
            data = list(var.data)
        out_vars.append(Variable(
            name=var.name,
            dims=list(var.dims),
            dtype=var.dtype,
            attributes=dict(var.attributes),
            data=data,
        ))

    return GridDataset(
        dimensions=out_dims,
        variables=out_vars,
        global_attributes=dict(first.global_attributes),
    ).validate()
