"""Projection + hyperslab constraint expressions.

Grammar (stop is inclusive, the OPeNDAP convention):

    constraint := proj ("," proj)* [","]
    proj       := NAME slab*
    slab       := "[" INT ":" INT ":" INT "]"     # start:stride:stop

A projection with fewer slabs than the variable's rank leaves the trailing
dimensions at full range.  A single trailing comma is tolerated on parse and
dropped by render, so textual aliases canonicalize to the same form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ValidationError

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"[0-9]+")


class ConstraintSyntaxError(ValidationError):
    """Malformed constraint text; carries the byte offset of the failure."""

    code = "constraint_syntax"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}", offset=offset)
        self.offset = offset


@dataclass(frozen=True)
class Hyperslab:
    start: int
    stride: int
    stop: int  # inclusive

    def __post_init__(self):
        if self.stride < 1:
            raise ValidationError(f"stride must be >= 1, got {self.stride}")
        if self.start < 0 or self.stop < 0:
            raise ValidationError("hyperslab bounds must be non-negative")
        if self.start > self.stop:
            raise ValidationError(f"start {self.start} > stop {self.stop}")

    def indices(self) -> list[int]:
        """The selected index set {start, start+stride, ...} ∩ [start, stop]."""
        return list(range(self.start, self.stop + 1, self.stride))

    def __str__(self) -> str:
        return f"[{self.start}:{self.stride}:{self.stop}]"


@dataclass(frozen=True)
class Projection:
    variable: str
    slabs: tuple[Hyperslab, ...] = ()

    def __str__(self) -> str:
        return self.variable + "".join(str(s) for s in self.slabs)


@dataclass(frozen=True)
class Constraint:
    projections: tuple[Projection, ...] = ()

    def variables(self) -> list[str]:
        return [p.variable for p in self.projections]

    def __str__(self) -> str:
        return render_constraint(self)


def render_constraint(c: Constraint) -> str:
    return ",".join(str(p) for p in c.projections)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, message: str, offset: int | None = None):
        raise ConstraintSyntaxError(message, self.pos if offset is None else offset)

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def expect(self, ch: str) -> None:
        if self.at_end() or self.text[self.pos] != ch:
            self.fail(f"expected {ch!r}")
        self.pos += 1

    def name(self) -> str:
        m = _NAME_RE.match(self.text, self.pos)
        if not m:
            self.fail("expected variable name")
        self.pos = m.end()
        return m.group()

    def integer(self) -> int:
        m = _INT_RE.match(self.text, self.pos)
        if not m:
            self.fail("expected integer")
        self.pos = m.end()
        return int(m.group())

    def slab(self) -> Hyperslab:
        slab_at = self.pos
        self.expect("[")
        start = self.integer()
        self.expect(":")
        stride = self.integer()
        self.expect(":")
        stop = self.integer()
        self.expect("]")
        if stride == 0:
            self.fail("stride must not be 0", slab_at)
        if start > stop:
            self.fail(f"start {start} > stop {stop}", slab_at)
        return Hyperslab(start, stride, stop)

    def projection(self) -> Projection:
        var = self.name()
        slabs = []
        while not self.at_end() and self.text[self.pos] == "[":
            slabs.append(self.slab())
        return Projection(var, tuple(slabs))

    def constraint(self) -> Constraint:
        projections = [self.projection()]
        while not self.at_end() and self.text[self.pos] == ",":
            self.pos += 1
            if self.at_end():
                break  # tolerated trailing comma
            projections.append(self.projection())
        if not self.at_end():
            self.fail("unexpected input")
        return Constraint(tuple(projections))


def parse_constraint(text: str) -> Constraint:
    """Parse constraint text; round-trips through render_constraint."""
    if not isinstance(text, str) or text == "":
        raise ConstraintSyntaxError("empty constraint", 0)
    return _Parser(text).constraint()
