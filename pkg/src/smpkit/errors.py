"""Exception hierarchy. Every library error derives from ArtifactError."""

from __future__ import annotations


class ArtifactError(Exception):
    """Base class for all errors raised by smpkit."""


class InputError(ArtifactError):
    """Invalid user input (bad files, unknown states, bad parameters)."""


class ParseError(InputError, SyntaxError):
    """A grammar violation, carrying the offset of the first bad character."""

    def __init__(self, message: str, text: str = "", offset: int = 0, line: int | None = None):
        self.text_value = text
        self.offset_value = offset
        self.line_value = line
        where = f"line {line}, " if line is not None else ""
        super().__init__(f"{message} ({where}offset {offset})")
        # SyntaxError exposes .offset and .lineno; keep them meaningful.
        self.offset = offset
        self.lineno = line


class MalformedCdf(InputError):
    """A CDF constructor received parameters outside its domain."""


class UnknownState(InputError):
    """A state identifier that does not exist in the model."""


class UnsupportedShape(ArtifactError):
    """The closed-form acceleration engine does not cover this CDF shape."""


class RateCompositionOnNonExponential(InputError):
    """A rate composition was applied to a non-exponential CDF."""


class KindMismatch(InputError):
    """A process has the wrong kind (reactive, generative, general)."""


class MassMismatch(InputError):
    """Two distributions handed to a coupling have different total mass."""


class NotUnambiguous(InputError):
    """A generative process has two successors for the same output."""


class UnsupportedClass(ArtifactError):
    """No tail bound is available for the residence-time class."""


class ResourceGuard(ArtifactError):
    """A computation would exceed a configured resource limit."""


class HorizonTooShort(ResourceGuard):
    """A scheduler horizon or reachability horizon is too small."""


class ExplosionGuard(ResourceGuard):
    """An enumeration would produce more objects than the configured limit."""
