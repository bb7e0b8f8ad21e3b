"""Exception hierarchy shared across the package."""


class Phi4KzError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(Phi4KzError):
    """Invalid parameters (sizes, signs, incompatible settings)."""


class ConvergenceError(Phi4KzError):
    """An iterative or truncated computation failed its convergence check."""


class GaugeError(Phi4KzError):
    """Eigenvector sign conventions of two bases do not line up."""


class NumericalConsistencyError(Phi4KzError):
    """A quantity violated a bound it satisfies in exact arithmetic."""


class AssemblyError(Phi4KzError):
    """Mismatched operator dimensions or control-field tags at assembly."""


class ScheduleError(Phi4KzError):
    """Invalid quench-schedule parameters."""


class ManifestError(Phi4KzError):
    """A run manifest failed validation."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path

    def payload(self):
        return {"error": "manifest", "message": str(self), "path": self.path}
