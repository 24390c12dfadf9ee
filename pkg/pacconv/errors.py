class PacconvError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(PacconvError, ValueError):
    """Inputs violate a documented precondition (shapes, ranges, finiteness)."""


class ResourceError(PacconvError, RuntimeError):
    """The request exceeds desk-scale limits or a sampling budget."""


class ConfigError(InvalidInputError):
    """
    A config document could not be parsed or failed schema validation.

    Args:
        message (str): human readable description.
        field (str): dotted path of the offending field, if known.
        line (int): line number in the source document, if known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f'line {line}')
        if field is not None:
            where.append(f'field {field!r}')
        prefix = f"[{', '.join(where)}] " if where else ''
        super().__init__(prefix + message)


class CompositionError(ConfigError):
    """Two adjacent layers do not compose."""

    def __init__(self, first, second, reason):
        self.first = first
        self.second = second
        super().__init__(f'layer {first!r} does not compose with layer {second!r}: {reason}', field='layers')


class ZooLookupError(PacconvError, KeyError):
    """Unknown architecture name."""

    def __init__(self, name, available):
        self.name = name
        self.available = sorted(available)
        super().__init__(name)

    def __str__(self):
        return f"unknown architecture {self.name!r}; available: {', '.join(self.available)}"
