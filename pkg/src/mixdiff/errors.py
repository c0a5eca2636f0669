"""Exception hierarchy.

Every error carries the name of the module that raised it so the CLI can
print ``ERROR <module>: <message>`` lines.
"""


class MixDiffError(Exception):
    module = "mixdiff"


class DatasetError(MixDiffError, ValueError):
    module = "core"


class ConfigError(MixDiffError, ValueError):
    module = "core"


class ScoringError(MixDiffError, ValueError):
    module = "scoring"


class PerturbError(MixDiffError, ValueError):
    module = "perturb"


class BackendError(MixDiffError):
    module = "backend"


class AccessDeniedError(BackendError):
    pass


class EngineError(MixDiffError):
    module = "engine"


class TheoryError(MixDiffError, ValueError):
    module = "theory"


class MetricsError(MixDiffError, ValueError):
    module = "metrics"


class ServerError(MixDiffError):
    module = "modelserver"
