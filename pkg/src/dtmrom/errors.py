"""Exception hierarchy. Configuration problems map to CLI exit code 2, solver problems to 3."""

from __future__ import annotations


class DtmError(Exception):
    """Base class; ``stage`` and ``mu`` give context when available."""

    def __init__(self, message: str, *, stage: str | None = None, mu=None):
        self.stage = stage
        self.mu = None if mu is None else tuple(float(m) for m in mu)
        parts = [message]
        if stage:
            parts.insert(0, f"[{stage}]")
        if self.mu is not None:
            parts.append(f"(mu={list(self.mu)})")
        super().__init__(" ".join(parts))


class ConfigurationError(DtmError):
    pass


class FormatError(ConfigurationError):
    pass


class GeometryError(ConfigurationError):
    pass


class SolverError(DtmError):
    pass


class InversionError(SolverError):
    pass


class AssemblyError(SolverError):
    pass


class NonconvergenceError(SolverError):
    def __init__(self, message: str, history=None, **kw):
        super().__init__(message, **kw)
        self.history = list(history or [])


class OnlineError(SolverError):
    def __init__(self, message: str, history=None, result=None, **kw):
        super().__init__(message, **kw)
        self.history = list(history or [])
        self.result = result


class TrainingError(SolverError):
    pass
