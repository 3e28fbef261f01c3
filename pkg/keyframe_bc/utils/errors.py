"""
    Exceptions raised by keyframe_bc
"""


class KeyframeError(Exception):
    """ Base class of every error raised by the package """


class ConfigurationError(KeyframeError):
    """ Invalid configuration, arguments or dimensions """


class ShapeError(KeyframeError):
    """ Array shapes do not match what the model expects """


class NumericError(KeyframeError):
    """ Non-finite or out-of-domain numeric values """


class UsageError(KeyframeError):
    """ Operation called in the wrong state (e.g. stepping a finished episode) """


class DataError(KeyframeError):
    """ Missing or inconsistent data """


class ParseError(DataError):
    """ Malformed line in a persisted file """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f'line {line_number}: {message}'
        super().__init__(message)
        self.line_number = line_number


class EmptyClusterError(DataError):
    """ k-means left a cluster without members """


class BoostingError(NumericError):
    """ Boosting cannot continue (average normalized loss reached 1) """


class MissingArtifactError(DataError):
    """ A file the command depends on is not on disk """

    def __init__(self, path, hint=''):
        message = f'Missing artifact {path}'
        if hint:
            message = f'{message} ({hint})'
        super().__init__(message)
        self.path = path
