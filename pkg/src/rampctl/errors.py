"""Exceptions raised across the toolkit."""

from __future__ import annotations


class RampctlError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RampctlError, ValueError):
    """Invalid configuration. ``problems`` lists every violated rule."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NonPositiveProfile(RampctlError, ValueError):
    pass


class GridMismatch(RampctlError, ValueError):
    pass


class ZeroCurrent(RampctlError, ValueError):
    pass


class NumericalBlowup(RampctlError, RuntimeError):
    """The solver produced an unphysical state.

    ``stats`` carries the substeps completed before the failure when the error
    escapes :func:`rampctl.plasma.advance`.
    """

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class EpisodeOver(RampctlError, RuntimeError):
    pass
