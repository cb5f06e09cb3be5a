"""Exception taxonomy shared across the simulator."""


class FlashError(Exception):
    """Base class for all simulator errors."""


class OutOfRange(FlashError):
    """Block, page, or sector index outside the device geometry."""


class BadBlock(FlashError):
    """Operation attempted on a block marked bad."""


class NotErased(FlashError):
    """Full program issued to a page that is not free."""


class DownwardProgram(FlashError):
    """Partial program tried to lower a cell level; charge injection is one-way."""


class LengthMismatch(FlashError):
    """Bit-vector argument has the wrong length."""


class NonAsciiCharacter(FlashError):
    """Text contains a character outside the 7-bit range."""


class DecodeFailure(FlashError):
    """Read data lies beyond the correction radius of the stored codeword."""

    def __init__(self, distance: int, capability: int):
        super().__init__(f"distance {distance} exceeds correction capability {capability}")
        self.distance = distance
        self.capability = capability


class Unmapped(FlashError):
    """Logical page has no physical mapping."""


class DeviceFull(FlashError):
    """No free page available even after reclamation."""


class NothingToCollect(FlashError):
    """Garbage collection found no victim or no room to relocate."""


class ParameterError(FlashError):
    """Invalid configuration or operation parameter."""


class ExhaustedRounds(FlashError):
    """Sanitize-verify loop ran out of rounds while still failing.

    Carries the per-round history so callers can report instead of hide it.
    """

    def __init__(self, rounds: int, history):
        super().__init__(f"verification still failing after {rounds} round(s)")
        self.rounds = rounds
        self.history = history


class CorruptImage(FlashError):
    """Flash image file is malformed or truncated."""


class VersionMismatch(CorruptImage):
    """Flash image was written by an incompatible format version."""
