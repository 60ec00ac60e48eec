"""Errors raised by the analysis pipeline."""

import json
from typing import Any


class TuringHopfError(Exception):
    """Base error with a machine-readable code."""

    code = "error"
    exit_code = 2

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_json(self) -> str:
        """One JSON line for stderr."""
        payload = {"code": self.code, "message": self.message}
        if self.details:
            payload["details"] = {key: _plain(value) for key, value in self.details.items()}
        return json.dumps(payload, sort_keys=True)


def _plain(value: Any) -> Any:
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    return repr(value)


class InputError(TuringHopfError):
    code = "input"
    exit_code = 1


class ExpressionSyntaxError(InputError):
    code = "syntax"

    def __init__(self, message: str, offset: int, **details: Any) -> None:
        super().__init__(f"{message} at offset {offset}", offset=offset, **details)
        self.offset = offset


class UnknownSymbol(InputError):
    code = "unknown_symbol"

    def __init__(self, name: str, offset: int | None = None) -> None:
        super().__init__(f"Unknown symbol: {name}", symbol=name, offset=offset)
        self.name = name
        self.offset = offset


class ModelParseError(InputError):
    code = "model_parse"


class ConfigError(InputError):
    code = "config"


class DomainError(TuringHopfError):
    code = "domain"


class EquilibriumViolation(TuringHopfError):
    code = "equilibrium_violation"


class NonPositiveDiffusion(TuringHopfError):
    code = "non_positive_diffusion"


class NotApplicable(TuringHopfError):
    code = "not_applicable"


class NoBifurcationFound(TuringHopfError):
    code = "no_bifurcation"


class CertificationFailed(TuringHopfError):
    code = "certification_failed"


class TransversalityFailed(TuringHopfError):
    code = "transversality_failed"


class DegeneratePoint(TuringHopfError):
    code = "degenerate_point"


class SimpleRootViolation(TuringHopfError):
    code = "simple_root_violation"


class ContourThroughZero(TuringHopfError):
    code = "contour_through_zero"


class InconclusiveTailBound(TuringHopfError):
    code = "inconclusive_tail_bound"


class DegenerateEigenvector(TuringHopfError):
    code = "degenerate_eigenvector"


class UnsupportedBasisFunction(TuringHopfError):
    code = "unsupported_basis_function"


class ResonanceError(TuringHopfError):
    code = "resonance"

    def __init__(self, matrix: str, condition: float) -> None:
        super().__init__(f"Matrix {matrix} is singular or ill-conditioned", matrix=matrix, condition=condition)
        self.matrix = matrix


class ValidationFailed(TuringHopfError):
    code = "validation_failed"


class DegenerateCubic(TuringHopfError):
    code = "degenerate_cubic"


class BoundaryCase(TuringHopfError):
    code = "boundary_case"


class OutsideCatalog(TuringHopfError):
    code = "outside_catalog"


class BlowUp(TuringHopfError):
    code = "blow_up"


class WorkerError(TuringHopfError):
    """A job failed inside a worker process."""

    code = "worker"
