"""Symbolic descriptors: expression trees over primary features.

A :class:`Descriptor` is immutable and always canonical.  Construction goes
through :func:`make`, which drops identity nodes, sorts the arguments of
commutative operators by their canonical strings and rewrites ``a * a`` as
``a ^ 2``.  Two descriptors compare equal iff their canonical strings do.

Text form::

    x3                  leaf (1-based feature index)
    exp(E) log(E) abs(E) sqrt(E)
    (E^-1) (E^2)        reciprocal, square; ``inv(E)`` is accepted on input
    sin(pi*E) cos(pi*E)
    (E+E) (E-E) (E*E) (E/E)
    |E-E|               absolute difference; ``abs(E-E)`` is accepted on input
"""

from __future__ import annotations

import enum
from functools import cached_property

import numpy as np

from . import units as _units
from .exceptions import DomainError, ParseError, ValidationError

__all__ = [
    "Op",
    "Descriptor",
    "UNARY_OPS",
    "BINARY_OPS",
    "leaf",
    "make",
    "apply_op",
    "evaluate",
    "parse_descriptor",
    "canonical_string",
    "descriptor_units",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 1e8


class Op(str, enum.Enum):
    IDENTITY = "identity"
    ADD = "add"
    SUBTRACT = "subtract"
    MULTIPLY = "multiply"
    DIVIDE = "divide"
    ABSDIFF = "absdiff"
    INV = "inv"
    SQUARE = "square"
    SQRT = "sqrt"
    LOG = "log"
    EXP = "exp"
    ABS = "abs"
    SINPI = "sinpi"
    COSPI = "cospi"

    @property
    def arity(self):
        return 2 if self in _BINARY else 1

    @property
    def commutative(self):
        return self in (Op.ADD, Op.MULTIPLY, Op.ABSDIFF)

    @classmethod
    def lookup(cls, name):
        """Accept enum members, their values, and common symbols such as ``'+'``."""
        if isinstance(name, Op):
            return name
        key = str(name).strip()
        if key in _ALIASES:
            return _ALIASES[key]
        try:
            return cls(key.lower())
        except ValueError:
            raise ValidationError(f"unknown operator {name!r}") from None


_BINARY = frozenset({Op.ADD, Op.SUBTRACT, Op.MULTIPLY, Op.DIVIDE, Op.ABSDIFF})

_ALIASES = {
    "I": Op.IDENTITY, "id": Op.IDENTITY,
    "+": Op.ADD, "-": Op.SUBTRACT, "*": Op.MULTIPLY, "x": Op.MULTIPLY, "/": Op.DIVIDE,
    "|-|": Op.ABSDIFF, "abs_diff": Op.ABSDIFF, "abs-difference": Op.ABSDIFF,
    "^-1": Op.INV, "reciprocal": Op.INV, "^2": Op.SQUARE, "sq": Op.SQUARE,
    "|.|": Op.ABS, "sin": Op.SINPI, "cos": Op.COSPI, "sin(pi*)": Op.SINPI,
    "cos(pi*)": Op.COSPI, "square-root": Op.SQRT, "logarithm": Op.LOG,
    "exponential": Op.EXP, "absolute-value": Op.ABS,
}

# operator sets as used by the alternating schedules; identity belongs to both
UNARY_OPS = (Op.IDENTITY, Op.INV, Op.SQUARE, Op.SQRT, Op.LOG, Op.EXP, Op.ABS, Op.SINPI, Op.COSPI)
BINARY_OPS = (Op.IDENTITY, Op.ADD, Op.SUBTRACT, Op.MULTIPLY, Op.DIVIDE, Op.ABSDIFF)


class Descriptor:
    """Canonical expression node.  Build with :func:`leaf` and :func:`make`."""

    __slots__ = ("op", "children", "index", "text", "complexity", "__dict__")

    def __init__(self, op, children=(), index=-1):
        self.op = op
        self.children = tuple(children)
        self.index = index
        self.text = _render(self)
        if op is None:
            self.complexity = 0
        else:
            self.complexity = 1 + max(c.complexity for c in self.children)

    def __setattr__(self, name, value):
        if name in Descriptor.__slots__ and hasattr(self, name):
            raise AttributeError("Descriptor is immutable")
        object.__setattr__(self, name, value)

    @property
    def is_leaf(self):
        return self.op is None

    @cached_property
    def leaves(self):
        """Sorted tuple of the 0-based primary-feature indices used."""
        if self.is_leaf:
            return (self.index,)
        return tuple(sorted({i for c in self.children for i in c.leaves}))

    def __eq__(self, other):
        return isinstance(other, Descriptor) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    def __lt__(self, other):
        return self.text < other.text

    def __str__(self):
        return self.text

    def __repr__(self):
        return f"Descriptor({self.text!r})"

    def __reduce__(self):
        return parse_descriptor, (self.text,)


def _render(d):
    if d.op is None:
        return f"x{d.index + 1}"
    a = d.children[0].text
    op = d.op
    if op is Op.EXP:
        return f"exp({a})"
    if op is Op.LOG:
        return f"log({a})"
    if op is Op.ABS:
        return f"abs({a})"
    if op is Op.SQRT:
        return f"sqrt({a})"
    if op is Op.INV:
        return f"({a}^-1)"
    if op is Op.SQUARE:
        return f"({a}^2)"
    if op is Op.SINPI:
        return f"sin(pi*{a})"
    if op is Op.COSPI:
        return f"cos(pi*{a})"
    b = d.children[1].text
    if op is Op.ABSDIFF:
        return f"|{a}-{b}|"
    sym = {Op.ADD: "+", Op.SUBTRACT: "-", Op.MULTIPLY: "*", Op.DIVIDE: "/"}[op]
    return f"({a}{sym}{b})"


def leaf(index):
    """Primary feature ``index`` (0-based)."""
    if int(index) != index or index < 0:
        raise ValidationError(f"leaf index must be a non-negative integer, got {index!r}")
    return Descriptor(None, (), int(index))


def make(op, *children):
    """Apply ``op`` to ``children`` and return the canonical result."""
    op = Op.lookup(op)
    if op is Op.IDENTITY:
        if len(children) != 1:
            raise ValidationError("identity takes one argument")
        return children[0]
    if len(children) != op.arity:
        raise ValidationError(f"{op.value} takes {op.arity} argument(s), got {len(children)}")
    if op is Op.MULTIPLY and children[0] == children[1]:
        return Descriptor(Op.SQUARE, (children[0],))
    if op.commutative and children[1].text < children[0].text:
        children = (children[1], children[0])
    return Descriptor(op, children)


def canonical_string(descriptor):
    return descriptor.text


def descriptor_units(descriptor, leaf_units):
    """Fold the unit rules over the tree; ``None`` marks an illegal construction."""
    if descriptor.is_leaf:
        return tuple(leaf_units[descriptor.index])
    args = [descriptor_units(c, leaf_units) for c in descriptor.children]
    if any(a is None for a in args):
        return None
    return _units.combine(descriptor.op.value, *args)


def apply_op(op, a, b=None):
    """Entry-wise operator on float arrays; domain violations come back as nan/inf."""
    with np.errstate(all="ignore"):
        if op is Op.IDENTITY:
            return a
        if op is Op.ADD:
            return a + b
        if op is Op.SUBTRACT:
            return a - b
        if op is Op.MULTIPLY:
            return a * b
        if op is Op.DIVIDE:
            return a / b
        if op is Op.ABSDIFF:
            return np.abs(a - b)
        if op is Op.INV:
            return 1.0 / a
        if op is Op.SQUARE:
            return a * a
        if op is Op.SQRT:
            return np.sqrt(a)
        if op is Op.LOG:
            return np.log(a)
        if op is Op.EXP:
            return np.exp(a)
        if op is Op.ABS:
            return np.abs(a)
        if op is Op.SINPI:
            return np.sin(np.pi * a)
        if op is Op.COSPI:
            return np.cos(np.pi * a)
    raise ValidationError(f"unsupported operator {op!r}")


def first_bad_row(values, cap=DEFAULT_CAP):
    """Index of the first non-finite or over-cap entry, or -1."""
    with np.errstate(invalid="ignore"):
        bad = ~np.isfinite(values) | (np.abs(values) > cap)
    if bad.any():
        return int(np.argmax(bad))
    return -1


def evaluate(descriptor, data, cap=DEFAULT_CAP, _memo=None):
    """Evaluate ``descriptor`` row-wise on the primary-feature matrix ``data``.

    Raises
    ------
    DomainError
        If any intermediate or final entry is non-finite or exceeds ``cap``
        in magnitude.
    ValidationError
        If a leaf index is outside ``data``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    memo = {} if _memo is None else _memo
    if descriptor.text in memo:
        return memo[descriptor.text]
    if descriptor.is_leaf:
        if descriptor.index >= data.shape[1]:
            raise ValidationError(f"unknown leaf {descriptor.text}: data has {data.shape[1]} columns")
        out = data[:, descriptor.index]
    else:
        args = [evaluate(c, data, cap, memo) for c in descriptor.children]
        out = apply_op(descriptor.op, *args)
    row = first_bad_row(out, cap)
    if row >= 0:
        raise DomainError(descriptor.op.value if descriptor.op else "leaf", row)
    memo[descriptor.text] = out
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, msg):
        raise ParseError(msg, self.text, self.pos)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self, token):
        self.skip()
        return self.text.startswith(token, self.pos)

    def eat(self, token):
        if not self.peek(token):
            self.error(f"expected {token!r}")
        self.pos += len(token)

    def accept(self, token):
        if self.peek(token):
            self.pos += len(token)
            return True
        return False

    def expr(self):
        self.skip()
        if self.pos >= len(self.text):
            self.error("unexpected end of input")
        if self.peek("x"):
            self.pos += 1
            start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if start == self.pos:
                self.error("expected feature number after 'x'")
            k = int(self.text[start:self.pos])
            if k < 1:
                self.pos = start
                self.error("feature numbers start at 1")
            return leaf(k - 1)
        for name, op in (("exp(", Op.EXP), ("log(", Op.LOG), ("sqrt(", Op.SQRT), ("inv(", Op.INV)):
            if self.accept(name):
                a = self.expr()
                self.eat(")")
                return make(op, a)
        if self.accept("abs("):
            a = self.expr()
            if self.accept("-"):
                b = self.expr()
                self.eat(")")
                return make(Op.ABSDIFF, a, b)
            self.eat(")")
            return make(Op.ABS, a)
        for name, op in (("sin(", Op.SINPI), ("cos(", Op.COSPI)):
            if self.accept(name):
                self.eat("pi")
                self.eat("*")
                a = self.expr()
                self.eat(")")
                return make(op, a)
        if self.accept("|"):
            a = self.expr()
            self.eat("-")
            b = self.expr()
            self.eat("|")
            return make(Op.ABSDIFF, a, b)
        if self.accept("("):
            a = self.expr()
            if self.accept("^"):
                if self.accept("2"):
                    op = Op.SQUARE
                elif self.accept("-1"):
                    op = Op.INV
                else:
                    self.error("only ^2 and ^-1 are supported")
                self.eat(")")
                return make(op, a)
            for sym, op in (("+", Op.ADD), ("-", Op.SUBTRACT), ("*", Op.MULTIPLY), ("/", Op.DIVIDE)):
                if self.accept(sym):
                    b = self.expr()
                    self.eat(")")
                    return make(op, a, b)
            self.eat(")")
            return a
        self.error("unexpected character")


def parse_descriptor(text):
    """Parse the text form back into a canonical :class:`Descriptor`."""
    p = _Parser(str(text))
    d = p.expr()
    p.skip()
    if p.pos != len(p.text):
        p.error("trailing input")
    return d
