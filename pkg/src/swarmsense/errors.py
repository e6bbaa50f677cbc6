"""Exception hierarchy shared by all swarmsense modules."""


class SwarmSenseError(Exception):
    """Base class for every error raised by this package."""


class DegenerateDirection(SwarmSenseError, ValueError):
    """The horizontal projection of a direction vector is zero."""


class SingularPoint(SwarmSenseError, ValueError):
    """A field was requested exactly at a point charge."""


class OutOfModel(SwarmSenseError, ValueError):
    """Inputs violate the validity conditions of the approximate model."""


class InsufficientSamples(SwarmSenseError, ValueError):
    """A sample stream is too short for the requested estimate."""


class DegenerateQuad(SwarmSenseError, ValueError):
    """All four amplitudes are balanced; distance is unobservable."""


class UnknownCombination(SwarmSenseError, KeyError):
    """A (modulation, transducer) pair is not in the measurement table."""


class UnknownChannel(SwarmSenseError, KeyError):
    """A channel name is not in the active channel set."""


class OutOfRange(SwarmSenseError, ValueError):
    """A sensitivity threshold lies above the transmit power."""


class ProtocolViolation(SwarmSenseError, RuntimeError):
    """An event arrived that is impossible in the current protocol phase."""


class ConfigError(SwarmSenseError, ValueError):
    """Scenario or dataset configuration failed validation.

    ``problems`` holds one ``"section.key: message"`` string per offending field.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ClippedSignalWarning(UserWarning):
    """An amplified receiver signal exceeded the converter's full scale."""
