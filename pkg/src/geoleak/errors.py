class GeoleakError(Exception):
    """Base class for data/config errors surfaced to the CLI as exit code 2."""


class IngestError(GeoleakError):
    pass


class ConfigError(GeoleakError):
    pass


class InconsistentInputError(GeoleakError):
    pass


class RegressionError(GeoleakError):
    pass


class JoinError(GeoleakError):
    pass
