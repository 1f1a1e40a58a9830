class DomainError(ValueError):
    """A point violates the domain of its factor space."""


class DegenerateGeodesicError(ValueError):
    """The minimizing geodesic between two points is not unique."""


class CSVFormatError(ValueError):
    """A data file does not follow the ``label,f0,f1,...`` layout."""


class NonFiniteLossError(FloatingPointError):
    """A loss term became NaN or infinite during distillation."""
