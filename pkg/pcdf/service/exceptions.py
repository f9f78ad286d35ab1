class ArgumentException(ValueError):
    pass


class AlignmentException(ArgumentException):
    pass


class InfeasibleRegimeException(ArgumentException):
    pass


class ConfigurationException(Exception):
    pass


class DataException(Exception):
    pass


class IngestionParseException(DataException):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class InsufficientDataException(DataException):
    pass


class NoSeasonalityException(Exception):
    pass


class NumericException(Exception):
    pass


class TrainingDivergedException(NumericException):
    def __init__(self, message, epoch, history):
        super().__init__(message)
        self.epoch = epoch
        self.history = history


class IncompatibleArtifactsException(Exception):
    pass


class MissingArtifactException(Exception):
    pass
