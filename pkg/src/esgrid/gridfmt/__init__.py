"""ESGN gridded-array container: model, constraint language, kernels, codec."""

from .codec import FormatError, checksum, read_dataset, write_dataset
from .constraint import (
    Constraint,
    ConstraintSyntaxError,
    Hyperslab,
    Projection,
    parse_constraint,
    render_constraint,
)
from .kernels import (
    ConcatError,
    RankMismatchError,
    SelectionConflictError,
    SlabBoundsError,
    UnknownVariableError,
    concat,
    subset,
)
from .model import DTYPES, Dimension, GridDataset, Variable

__all__ = [
    "Constraint",
    "ConstraintSyntaxError",
    "ConcatError",
    "DTYPES",
    "Dimension",
    "FormatError",
    "GridDataset",
    "Hyperslab",
    "Projection",
    "RankMismatchError",
    "SelectionConflictError",
    "SlabBoundsError",
    "UnknownVariableError",
    "Variable",
    "checksum",
    "concat",
    "parse_constraint",
    "read_dataset",
    "render_constraint",
    "subset",
    "write_dataset",
]
