"""Semantic exception hierarchy shared by all aumclean modules."""


class AumCleanError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(AumCleanError, ValueError):
    """An argument violates an operation's contract (domain, shape, range)."""


class ParseError(AumCleanError, ValueError):
    """A file does not conform to its documented schema.

    Messages name the offending line number where one exists.
    """


class CorruptLogError(AumCleanError):
    """A logit log is incomplete: some (epoch, sample) pair is missing or duplicated."""


class DivergedError(AumCleanError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, lr: float):
        self.epoch = epoch
        self.lr = lr
        super().__init__(f"non-finite loss at epoch {epoch} (lr={lr})")


class UndefinedCorrelationError(AumCleanError):
    """Rank correlation is undefined because one input has zero rank variance."""
