"""Exception hierarchy and the CLI exit-code map.

Every domain failure raised by this package derives from GraspFieldError so
callers (service routes, CLI) can map failures to stable exit codes without
enumerating modules.
"""

from __future__ import annotations


class GraspFieldError(Exception):
    """Base class for all domain errors raised by graspfield."""


# feature field / LFLD format
class MalformedHeader(GraspFieldError):
    pass


class TruncatedPayload(GraspFieldError):
    pass


class NonUnitEmbedding(GraspFieldError):
    pass


class OutOfBounds(GraspFieldError):
    pass


class ScaleOutOfRange(GraspFieldError):
    pass


class DegenerateInterpolation(GraspFieldError):
    pass


class DimensionMismatch(GraspFieldError):
    pass


class EmptyField(GraspFieldError):
    pass


# scene I/O
class AllInvalidDepth(GraspFieldError):
    pass


class TooFewPoints(GraspFieldError):
    pass


class ImageTooSmall(GraspFieldError):
    pass


class DegenerateRange(GraspFieldError):
    pass


class MalformedFile(GraspFieldError):
    pass


# object extraction
class DegenerateFeatures(GraspFieldError):
    pass


class EmptyForeground(GraspFieldError):
    pass


class NoSurface(GraspFieldError):
    pass


class MissingFeatures(GraspFieldError):
    pass


# conditional querying
class EmptyMask(GraspFieldError):
    pass


# grasp planning
class EmptyCloud(GraspFieldError):
    pass


class ProposerFailure(GraspFieldError):
    pass


class NoValidPairs(GraspFieldError):
    pass


class WeightOutOfRange(GraspFieldError):
    pass


class NoGraspFound(GraspFieldError):
    pass


# LLM planner
class EmptyObjectList(GraspFieldError):
    pass


class UnparseableResponse(GraspFieldError):
    pass


class UnknownAction(GraspFieldError):
    pass


class NoParseableResponses(GraspFieldError):
    pass


class LLMUnavailable(GraspFieldError):
    pass


# synthetic scenes
class OverlappingObjects(GraspFieldError):
    pass


class ConfigError(GraspFieldError):
    pass


# NoGraspFound is pinned to 2 by the CLI contract; everything else just needs
# to be nonzero, distinct, and stable across releases.
EXIT_CODES: dict[type[GraspFieldError], int] = {
    NoGraspFound: 2,
    MalformedHeader: 10,
    TruncatedPayload: 11,
    NonUnitEmbedding: 12,
    OutOfBounds: 13,
    ScaleOutOfRange: 14,
    DegenerateInterpolation: 15,
    DimensionMismatch: 16,
    EmptyField: 17,
    AllInvalidDepth: 20,
    TooFewPoints: 21,
    ImageTooSmall: 22,
    DegenerateRange: 23,
    MalformedFile: 24,
    DegenerateFeatures: 30,
    EmptyForeground: 31,
    NoSurface: 32,
    MissingFeatures: 33,
    EmptyMask: 40,
    EmptyCloud: 45,
    ProposerFailure: 46,
    NoValidPairs: 47,
    WeightOutOfRange: 48,
    EmptyObjectList: 55,
    UnparseableResponse: 56,
    UnknownAction: 57,
    NoParseableResponses: 58,
    LLMUnavailable: 59,
    OverlappingObjects: 65,
    ConfigError: 70,
}


def exit_code_for(exc: BaseException) -> int:
    """Stable nonzero exit code for a domain error (1 for anything unknown)."""
    return EXIT_CODES.get(type(exc), 1)


def error_name(exc: BaseException) -> str:
    return type(exc).__name__
