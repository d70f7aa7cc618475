"""Exception hierarchy shared by all beatdiag modules."""


class ToolkitError(Exception):
    """Base class for all beatdiag errors."""


class ParseError(ToolkitError):
    """A file could not be parsed; the message carries path and line number."""


class MalformedAnnotation(ToolkitError):
    """Beat annotation violates ordering or range constraints."""


class MissingFps(ToolkitError):
    """Activation file lacks the mandatory frame-rate header."""


class CorruptActivation(ToolkitError):
    """Activation file has bad magic, wrong length, or out-of-range values."""


class StateSpaceError(ToolkitError):
    """The requested tempo range cannot be represented at the given frame rate."""


class ConstraintError(ToolkitError):
    """A tempo constraint produced an empty effective BPM range."""


class InsufficientReference(ToolkitError):
    """Too few reference beats for the requested computation."""


class NoOverlap(ToolkitError):
    """No reference beat falls inside the activation curve."""


class DegenerateInput(ToolkitError):
    """Statistic is undefined for the given input (e.g. zero rank variance)."""
