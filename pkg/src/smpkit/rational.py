"""Exact rational parsing and formatting shared by every grammar."""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Union

Number = Union[int, float, Fraction, str]

_RATIONAL_RE = re.compile(r"[0-9]+(?:\.[0-9]+)?(?:/[0-9]+)?|\.[0-9]+")


def rational(x: Number) -> Fraction:
    """Convert a number or numeric string to an exact Fraction.

    Floats go through their shortest repr, so ``rational(0.1)`` is 1/10.

    Args:
        x: An int, float, Fraction or a string like ``"3"``, ``"2.5"``, ``"7/3"``.

    Returns:
        The exact Fraction.

    Raises:
        ValueError: If the value is not a finite rational.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise ValueError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"not a finite rational: {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise ValueError(f"not a rational: {x!r}")


def format_rational(q: Fraction) -> str:
    """Render a Fraction as an integer, a terminating decimal, or ``p/q``."""
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{q.numerator}/{q.denominator}"
    digits = max(twos, fives)
    scaled = q * 10**digits
    sign = "-" if scaled < 0 else ""
    n = abs(scaled.numerator)
    whole, frac = divmod(n, 10**digits)
    return f"{sign}{whole}.{str(frac).rjust(digits, '0')}"


def match_rational(text: str, pos: int):
    """Match an unsigned rational literal at ``pos``.

    Returns:
        A pair ``(value, end)`` or None when no literal starts at ``pos``.
    """
    m = _RATIONAL_RE.match(text, pos)
    if not m:
        return None
    raw = m.group(0)
    if "/" in raw:
        num, den = raw.split("/")
        if int(den) == 0:
            return None
        return Fraction(Fraction(num), int(den)), m.end()
    return Fraction(raw), m.end()
