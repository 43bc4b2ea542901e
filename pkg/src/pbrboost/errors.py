"""Exception and warning types shared across the toolkit."""

from __future__ import annotations


class PBRBoostError(Exception):
    """Base class for all toolkit errors."""


class ParseError(PBRBoostError):
    """Malformed record in an input file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingUVs(PBRBoostError):
    """Mesh has no texture coordinates; the material pipeline requires them."""


class QuadratureDiverged(PBRBoostError):
    """Numerical BRDF quadrature produced NaN or infinity."""


class EmptyMask(PBRBoostError):
    """Label fusion received no votes for any triangle."""


class KTooLarge(PBRBoostError):
    """Requested more clusters than there are distinct covered colors."""


class SchemaError(PBRBoostError):
    """Recommendation file violates the expected schema; carries a field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class UnknownSegment(PBRBoostError):
    """A segment id was referenced that the mask does not contain."""

    def __init__(self, segment_id: int):
        self.segment_id = segment_id
        super().__init__(f"unknown segment id {segment_id}")


class RangeError(PBRBoostError):
    """A material value fell outside [0, 1]."""


class OutOfBounds(PBRBoostError):
    """A query point lies outside the encoder's domain box."""


class MissingTargetView(PBRBoostError):
    """File-backed oracle directory lacks a target image for a view."""


class ReferenceMeshAbsent(PBRBoostError):
    """Synthetic-reference oracle was constructed without a reference mesh."""


class DivergedLoss(PBRBoostError):
    """Refinement loss became NaN; carries diagnostics of the failing step."""

    def __init__(self, round_index: int, step: int):
        self.round_index = round_index
        self.step = step
        super().__init__(f"loss diverged to NaN at round {round_index}, step {step}")


class UVOverlapWarning(UserWarning):
    """Two triangles claimed the same texel with different material values."""
