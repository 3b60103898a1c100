"""Shared exception types.

Plain ``ValueError`` covers ordinary precondition violations (shapes, value
domains, bad configuration). The classes here exist where callers need to
react to a failure class specifically: file-format problems are handled like
I/O errors by the CLI, and the numerical failures map to a distinct exit
code.
"""


class FormatError(Exception):
    """A file does not conform to one of the documented on-disk formats."""


class NotPositiveDefiniteError(ArithmeticError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the zero-based index of the failing diagonal entry, so the
    quantizer can escalate damping and retry.
    """

    def __init__(self, pivot: int, value: float):
        super().__init__(
            f"matrix is not positive definite: pivot {pivot} = {value:g}"
        )
        self.pivot = pivot
        self.value = value


class DegenerateHessianError(ArithmeticError):
    """Calibration activations are identically zero; no usable curvature."""


class QuantizationFailedError(ArithmeticError):
    """Hessian factorization still failed after maximum damping escalation."""
