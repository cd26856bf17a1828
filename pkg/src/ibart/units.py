"""Physical dimensions as rational exponent vectors over the SI base dimensions."""

from __future__ import annotations

import re
from fractions import Fraction

from .exceptions import ValidationError

__all__ = ["BASE_DIMENSIONS", "DIMENSIONLESS", "parse_unit", "format_unit", "combine"]

BASE_DIMENSIONS = ("kg", "m", "s", "A", "K", "mol", "cd")
DIMENSIONLESS = tuple(Fraction(0) for _ in BASE_DIMENSIONS)


def _vec(**exps):
    return tuple(Fraction(exps.get(b, 0)) for b in BASE_DIMENSIONS)


# symbols map to dimensions only; prefactors such as 1 eV = 1.602e-19 J are irrelevant here
_SYMBOLS = {
    "kg": _vec(kg=1), "g": _vec(kg=1), "amu": _vec(kg=1), "Da": _vec(kg=1),
    "m": _vec(m=1), "cm": _vec(m=1), "nm": _vec(m=1), "pm": _vec(m=1),
    "Angstrom": _vec(m=1), "angstrom": _vec(m=1), "Å": _vec(m=1),
    "s": _vec(s=1), "A": _vec(A=1), "K": _vec(K=1), "mol": _vec(mol=1), "cd": _vec(cd=1),
    "J": _vec(kg=1, m=2, s=-2), "eV": _vec(kg=1, m=2, s=-2), "N": _vec(kg=1, m=1, s=-2),
    "Pa": _vec(kg=1, m=-1, s=-2), "W": _vec(kg=1, m=2, s=-3), "C": _vec(A=1, s=1),
    "V": _vec(kg=1, m=2, s=-3, A=-1), "Hz": _vec(s=-1),
}

_FACTOR = re.compile(r"^([A-Za-zÅ]+)(?:\^\(?([+-]?\d+(?:/\d+)?|[+-]?\d*\.\d+)\)?)?$")


def parse_unit(text):
    """Parse ``'kg^1*m^2*s^-2'`` (or ``'m/s'``, ``'1'``) into an exponent vector."""
    text = (text or "").strip()
    if text in ("", "1", "-", "dimensionless", "none"):
        return DIMENSIONLESS
    total = list(DIMENSIONLESS)
    sign = 1
    for token in re.split(r"([*/])(?![^()]*\))", text.replace(" ", "")):
        if token == "*":
            sign = 1
            continue
        if token == "/":
            sign = -1
            continue
        if token in ("", "1"):
            continue
        m = _FACTOR.match(token)
        if not m or m.group(1) not in _SYMBOLS:
            raise ValidationError(f"cannot parse unit factor {token!r} in {text!r}")
        power = Fraction(m.group(2)) if m.group(2) else Fraction(1)
        for i, e in enumerate(_SYMBOLS[m.group(1)]):
            total[i] += sign * power * e
    return tuple(total)


def format_unit(units):
    if units is None:
        return "?"
    parts = [f"{b}^{e}" for b, e in zip(BASE_DIMENSIONS, units) if e != 0]
    return "*".join(parts) if parts else "1"


def combine(kind, a, b=None):
    """Units of ``kind`` applied to operand units; ``None`` if the combination is illegal.

    ``kind`` is an operator name as used by :class:`ibart.descriptors.Op`.
    """
    if a is None or (b is None and kind in ("add", "subtract", "multiply", "divide", "absdiff")):
        return None
    if kind in ("identity", "abs"):
        return a
    if kind in ("add", "subtract", "absdiff"):
        return a if a == b else None
    if kind == "multiply":
        return tuple(x + y for x, y in zip(a, b))
    if kind == "divide":
        return tuple(x - y for x, y in zip(a, b))
    if kind == "inv":
        return tuple(-x for x in a)
    if kind == "square":
        return tuple(2 * x for x in a)
    if kind == "sqrt":
        return tuple(x / 2 for x in a)
    if kind in ("exp", "log", "sinpi", "cospi"):
        return DIMENSIONLESS if a == DIMENSIONLESS else None
    raise ValidationError(f"no unit rule for operator {kind!r}")
