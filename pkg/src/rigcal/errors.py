"""Exception hierarchy shared by all rigcal modules.

ValidationError subclasses map to CLI exit code 1, NumericalError to exit
code 2.
"""


class RigcalError(Exception):
    pass


class ValidationError(RigcalError):
    pass


class NumericalError(RigcalError):
    pass


# -- geometry ----------------------------------------------------------------

class NonPositiveDepth(ValidationError):
    pass


class NonPositiveScale(ValidationError):
    pass


class NearPiRotation(ValidationError):
    pass


# -- pointmaps ---------------------------------------------------------------

class EmptyEstimates(ValidationError):
    pass


class InvalidMatchedPixel(ValidationError):
    pass


# -- scene graph -------------------------------------------------------------

class GraphDisconnected(ValidationError):
    pass


class UnknownView(ValidationError):
    pass


# -- losses / optimizer ------------------------------------------------------

class InsufficientPoses(ValidationError):
    pass


class PoseIndexMismatch(ValidationError):
    pass


class NonFiniteLoss(NumericalError):
    pass


# -- closed-form hand-eye ----------------------------------------------------

class DegenerateMotion(ValidationError):
    pass


class ZeroCameraTranslation(ValidationError):
    pass


# -- ground plane ------------------------------------------------------------

class InsufficientPoints(ValidationError):
    pass


class NoConsensus(NumericalError):
    pass


class EmptyInput(ValidationError):
    pass


# -- evaluation --------------------------------------------------------------

class LengthMismatch(ValidationError):
    pass


class NoDetections(ValidationError):
    pass


class EmptyCloud(ValidationError):
    pass


# -- io ----------------------------------------------------------------------

class MissingChannel(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class CorruptBinary(ValidationError):
    pass


class MalformedLine(ValidationError):
    pass


class NonRigidRotation(ValidationError):
    pass


class FirstPoseNotIdentity(ValidationError):
    pass


# -- synthetic ---------------------------------------------------------------

class UnknownPreset(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass
