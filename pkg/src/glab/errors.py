"""Exception hierarchy shared by every glab module."""


class GlabError(Exception):
    """Base class for all library errors."""


class VolumeCapError(GlabError):
    """Requested box exceeds the configured site cap."""


class OutOfBoxError(GlabError, ValueError):
    """A site lies outside the box it is queried against."""


class GeometryMismatchError(GlabError, ValueError):
    """Two fields or a field and a plan live on different boxes."""


class InvalidParameterError(GlabError, ValueError):
    pass


class DivergenceError(GlabError, ValueError):
    """A lattice sum requested at L = infinity does not converge."""


class NonConvergenceError(GlabError):
    """Iterative refinement hit its cap before reaching the tolerance.

    The best available estimate is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class WrongTailClassError(GlabError, ValueError):
    pass


class EmptyStreamError(GlabError, ValueError):
    pass


class ConfigError(GlabError, ValueError):
    """Experiment configuration failed validation; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
