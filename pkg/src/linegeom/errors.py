"""Exception hierarchy.

Two roots matter to callers: :class:`InputError` for bad parameters (the CLI
maps these to exit code 2) and :class:`NumericError` for computations that
could not be completed or certified (exit code 3).
"""


class LineGeomError(Exception):
    """Base class for all package errors."""


class InputError(LineGeomError, ValueError):
    pass


class NumericError(LineGeomError, ArithmeticError):
    pass


# projective_core
class CoincidentPoints(InputError):
    pass


class NotALine(InputError):
    pass


class NotCollinear(InputError):
    pass


class DegenerateQuadruple(InputError):
    pass


class NotSkew(InputError):
    pass


class PointOnDirectrix(InputError):
    pass


class DependentComplexes(InputError):
    pass


class SingularPoint(NumericError):
    pass


# ray_systems
class DegenerateDirection(NumericError):
    pass


class ImaginaryFoci(NumericError):
    pass


class MissedSurface(NumericError):
    def __init__(self, samples, msg=None):
        self.samples = list(samples)
        super().__init__(msg or f"{len(self.samples)} rays miss the surface: {self.samples[:8]}")


class TangentIncidence(NumericError):
    pass


class TotalInternalReflection(NumericError):
    def __init__(self, samples, msg=None):
        self.samples = list(samples)
        super().__init__(msg or f"total internal reflection at {len(self.samples)} samples: {self.samples[:8]}")


class InvalidAngle(InputError):
    pass


class DegenerateRadius(InputError):
    pass


class ParallelNeighbors(NumericError):
    pass


# quadratic_complex
class SingularQuadric(InputError):
    pass


class DegenerateTetrahedron(InputError):
    pass


class DegenerateLambda(InputError):
    pass


class FitFailed(NumericError):
    pass


class EmptyCone(NumericError):
    pass


# quartic_zoo
class NonDistinctAxes(InputError):
    pass


class ParameterOutOfRange(InputError):
    pass


class DegenerateFamily(InputError):
    pass


class NotANode(NumericError):
    pass


class NodeCountMismatch(NumericError):
    pass


class EllipticPoint(NumericError):
    pass


class LostSurface(NumericError):
    pass


class WrongSignature(InputError):
    pass


# mesh_export
class EmptyIsosurface(NumericError):
    pass


class DegenerateSegment(InputError):
    pass


class ExportError(LineGeomError, OSError):
    pass
