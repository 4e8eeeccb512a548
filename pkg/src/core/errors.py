from typing import Dict, List, Optional


class DenseUNetError(Exception):
    """Base class for every error raised by the package"""

    def to_dict(self) -> Dict:
        return {'error': type(self).__name__, 'message': str(self)}


class DimensionError(DenseUNetError):
    """A tensor axis does not have the size an operation requires"""

    def __init__(self, axis: str, expected, actual, op: str = ""):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        self.op = op
        prefix = f"{op}: " if op else ""
        super().__init__(f"{prefix}axis '{axis}' expected {expected}, got {actual}")

    def to_dict(self) -> Dict:
        data = super().to_dict()
        data.update({'axis': self.axis, 'expected': str(self.expected),
                     'actual': str(self.actual), 'op': self.op})
        return data


class ConfigurationError(DenseUNetError):
    """A spec failed validation; carries every problem found"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))

    @classmethod
    def raise_if(cls, errors: List[str]):
        if errors:
            raise cls(errors)

    def to_dict(self) -> Dict:
        data = super().to_dict()
        data['errors'] = self.errors
        return data


class NonFiniteError(DenseUNetError):
    """NaN or Inf appeared in a forward or backward pass"""

    def __init__(self, op: str, phase: str = "forward"):
        self.op = op
        self.phase = phase
        super().__init__(f"non-finite values produced by {op} ({phase})")


class NonFiniteLossError(DenseUNetError):
    """Training loss became NaN/Inf; snapshot holds the diagnostic state"""

    def __init__(self, step: int, snapshot: Dict):
        self.step = step
        self.snapshot = snapshot
        super().__init__(f"non-finite loss at step {step}")

    def to_dict(self) -> Dict:
        data = super().to_dict()
        data['step'] = self.step
        data['snapshot'] = self.snapshot
        return data


class IntegrityError(DenseUNetError):
    """A binary file is truncated, corrupted or of the wrong type"""


class PtsParseError(DenseUNetError):
    """Malformed .pts landmark file"""

    def __init__(self, message: str, line_number: int, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line_number}: {message}")

    def to_dict(self) -> Dict:
        data = super().to_dict()
        data['line'] = self.line_number
        data['path'] = self.path
        return data


class DegenerateNormaliserError(DenseUNetError):
    """NME normaliser distance is zero"""


class SingularTransformError(DenseUNetError):
    """Affine matrix is not invertible"""
