class DomainError(ValueError):
    """Argument outside the domain an operation is defined on."""


class GenerationError(RuntimeError):
    """A rejection sampler ran out of attempts."""


class DatasetError(RuntimeError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class ConfigError(ValueError):
    pass
