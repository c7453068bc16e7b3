"""Exception types shared across the simulator."""


class TapegripError(Exception):
    """Base class for all package errors."""


class ConfigError(TapegripError):
    """Config file failed to parse or violated an invariant."""


class NoSolutionError(TapegripError):
    """The appendage triangle cannot close for the requested inputs."""


class NotConvergedError(TapegripError):
    """Kinematics solver exceeded its iteration budget."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


class OutOfWorkspaceError(TapegripError):
    """Inverse-kinematics target lies outside the reachable region.

    ``boundary`` is one of ``angular_left``, ``angular_right``,
    ``radial_inner``, ``radial_outer`` (left-appendage frame convention;
    mirrored callers swap the angular labels).
    """

    def __init__(self, boundary: str, message: str = ""):
        super().__init__(f"out of workspace ({boundary}){': ' + message if message else ''}")
        self.boundary = boundary


class OutOfRangeError(TapegripError):
    """Scalar input outside the supported interval."""


class BelowOffsetError(TapegripError):
    """Buckling model evaluated at or below its length offset."""


class DegenerateDataError(TapegripError):
    """Fit input data cannot identify the model parameters."""


class NearSingularError(TapegripError):
    """Force estimate unreliable: lever projection close to zero."""

    def __init__(self, message: str, cosine: float):
        super().__init__(f"{message} (cos = {cosine:.4f})")
        self.cosine = cosine


class NoContactError(TapegripError):
    """Queried object is not engaged between the appendages."""


class SchemaVersionError(TapegripError):
    """Serialized record carries an unsupported schema version."""


class ScenarioError(TapegripError):
    """Scenario file invalid or references unknown entities."""


class ProtocolError(TapegripError):
    """Teleop client message failed validation."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
