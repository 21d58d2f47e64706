"""Error hierarchy shared by all modules.

Every error carries a CLI exit code: 2 for validation failures, 3 for
numerical failures and 4 for trimming failures or non-convergence.  Extra
keyword payloads (failing cube, probe, offending values) are kept in
``payload`` and end up in the machine-readable ``error.json``.
"""

from __future__ import annotations

from typing import Any


class SobotrimError(Exception):
    exit_code = 3
    kind = "numerical"

    def __init__(self, message: str = "", **payload: Any):
        super().__init__(message)
        self.message = message
        self.payload = payload

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "kind": self.kind,
            "exit_code": self.exit_code,
            "message": self.message,
            "payload": _jsonable(self.payload),
        }


class ValidationError(SobotrimError):
    exit_code = 2
    kind = "validation"


class NumericalError(SobotrimError):
    exit_code = 3
    kind = "numerical"


class PaddingMisaligned(ValidationError):
    pass


class EtaMisaligned(ValidationError):
    pass


class ParameterOutOfRange(ValidationError):
    pass


class HomogenizationIllposed(ValidationError):
    pass


class TraceIncompatible(ValidationError):
    pass


class NotOnManifold(ValidationError):
    pass


class InputNotManifoldValued(ValidationError):
    pass


class NoUniformChart(ValidationError):
    pass


class NotSmallEnergy(ValidationError):
    pass


class DomainExceeded(NumericalError):
    pass


class OutsideTubularNeighborhood(NumericalError):
    pass


class TransitionInfeasible(NumericalError):
    pass


class ProbeUnstable(NumericalError):
    pass


class CertificateFailed(NumericalError):
    pass


class SampleRejected(NumericalError):
    pass


class ClaimViolation(NumericalError):
    def __init__(self, claim: int, message: str = "", **payload: Any):
        super().__init__(message or f"claim {claim} violated", claim=claim, **payload)
        self.claim = claim


class TrimmingFailed(SobotrimError):
    exit_code = 4
    kind = "trimming"


class NonConvergence(SobotrimError):
    exit_code = 4
    kind = "non-convergence"


def _jsonable(obj: Any) -> Any:
    """Best-effort conversion of numpy payloads into JSON types."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)
