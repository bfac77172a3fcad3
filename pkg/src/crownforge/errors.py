"""Exception and warning types shared across the package."""


class CrownForgeError(Exception):
    """Base class for all package errors."""


class ParseError(CrownForgeError):
    """Malformed input file (header, count, or payload)."""


class IoError(CrownForgeError):
    """File cannot be read or written."""


class NonManifoldEdgeError(CrownForgeError):
    """An undirected edge is shared by more than two faces."""


class EmptyTargetError(CrownForgeError):
    """Nearest-neighbor target set is empty."""


class KTooLargeError(CrownForgeError, ValueError):
    """Requested sample count exceeds the available points."""


class NoAbutmentFacesError(CrownForgeError):
    """No face has all three vertices labeled as abutment."""


class DegenerateLoopError(CrownForgeError):
    """Boundary loop is too short or collinear for a closed spline fit."""


class DegenerateFanError(CrownForgeError):
    """Cut surface cannot be built (degenerate polyline or centroid)."""


class NoIntersectionError(CrownForgeError):
    """Cut surface does not separate the mesh into removed and kept faces."""


class MissingNormalsError(CrownForgeError):
    """Operation requires per-point normals that are absent."""


class IsoOutOfRangeError(CrownForgeError, ValueError):
    """Iso value lies outside the open range of the grid values."""


class EmptySetError(CrownForgeError):
    """Loss or metric received an empty point set."""


class ShapeMismatchError(CrownForgeError, ValueError):
    """Array shapes are inconsistent with the operation contract."""


class MissingCurvatureError(CrownForgeError):
    """Curvature values required by the weighting are absent."""


class MissingMarginFlagsError(CrownForgeError):
    """Margin membership flags required by the weighting are absent."""


class LengthMismatchError(CrownForgeError, ValueError):
    """Paired arrays differ in length."""


class AdjacentNotWatertightError(CrownForgeError):
    """Intersection area requires watertight adjacent meshes."""


class TNotDivisibleError(CrownForgeError, ValueError):
    """Token count is not divisible as required by the block."""


class InvalidSpecError(CrownForgeError, ValueError):
    """Scene specification contains out-of-range values."""


class MissingCaseError(CrownForgeError):
    """Evaluation case directory lacks a required artifact."""


class PipelineStageError(CrownForgeError):
    """A pipeline stage failed; message names the stage and the cause."""


class UnsupportedPropertyWarning(UserWarning):
    """Input file carries a property the reader does not understand."""


class DegenerateStarWarning(UserWarning):
    """Vertex star is degenerate; curvature falls back to zero."""


class DisconnectedWarning(UserWarning):
    """More than one connected component; only the largest is kept."""


class MultipleLoopsWarning(UserWarning):
    """More than one boundary loop; only the longest is used."""
