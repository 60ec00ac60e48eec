"""Center-subspace eigenfunctions and adjoint eigenfunctions at a Turing-Hopf point."""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateEigenvector
from .expoly import ExpPoly
from .expoly import bilinear_form as _pairing
from .model import LinearPart
from .spectrum import TuringHopfPoint

_LOGGER = logging.getLogger(__name__)

DENOMINATOR_TOLERANCE = 1e-8
RESIDUAL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EigenBasis:
    """Eigendata of the Hopf mode (index 1, mode 0) and the Turing mode (index 2, mode n2).

    phi1(theta) = exp(i omega theta) (1, k1), phi2 = (1, k3) on [-1, 0];
    psi1(s) = exp(-i omega s) T1 (1, k2), psi2 = T2 (1, k4) on [0, 1].
    """

    k1: complex
    k2: complex
    k3: float
    k4: float
    T1: complex
    T2: float
    omega: float
    n2: int
    length: float
    delayed: np.ndarray
    residuals: Mapping[str, float] = field(default_factory=dict)

    @property
    def phi1(self) -> ExpPoly:
        return ExpPoly.exponential((1.0, self.k1), 1j * self.omega)

    @property
    def phi2(self) -> ExpPoly:
        return ExpPoly.exponential((1.0, self.k3), 0.0)

    @property
    def psi1(self) -> ExpPoly:
        return ExpPoly.exponential(self.T1 * np.array([1.0, self.k2]), -1j * self.omega)

    @property
    def psi2(self) -> ExpPoly:
        return ExpPoly.exponential(self.T2 * np.array([1.0, self.k4]), 0.0)

    def conjugate(self) -> "EigenBasis":
        """Basis of the conjugate Hopf pair (the z-bar row)."""
        return replace(
            self,
            k1=complex(np.conj(self.k1)),
            k2=complex(np.conj(self.k2)),
            T1=complex(np.conj(self.T1)),
            omega=-self.omega,
        )

    def centers(self, mode: int) -> list[tuple[ExpPoly, ExpPoly, complex]]:
        """(phi, psi, eigenvalue) of the center directions carried by cosine ``mode``."""
        if mode == 0:
            return [(self.phi1, self.psi1, 1j * self.omega), (self.phi1.conj(), self.psi1.conj(), -1j * self.omega)]
        if mode == self.n2:
            return [(self.phi2, self.psi2, 0.0j)]
        return []


def bilinear_form(alpha: ExpPoly, beta: ExpPoly, lp: LinearPart) -> complex:
    """Delay pairing (alpha, beta) for either critical mode.

    Diffusion enters only through the instantaneous part, so both modes share
    the delayed block ``lp.B``.
    """
    return _pairing(alpha, beta, lp.B)


def _ratio(primary: tuple[complex, complex], fallback: tuple[complex, complex], scale: float, name: str) -> complex:
    for numerator, denominator in (primary, fallback):
        if abs(denominator) >= DENOMINATOR_TOLERANCE * scale:
            return numerator / denominator
        _LOGGER.debug("%s: denominator %.3e below tolerance, switching rows", name, abs(denominator))
    raise DegenerateEigenvector(f"{name}: eigenvector is not of the form (1, k)", scale=scale)


def compute_basis(lp: LinearPart, p: TuringHopfPoint) -> EigenBasis:
    """Closed-form k's and normalizing T's at the point, with residual checks."""
    A, B = lp.A, lp.B
    omega = p.omega
    decay = np.exp(-1j * omega)
    K = lp.modal(p.n2, p.length)
    scale = lp.scale(p.n2, p.length)

    hopf = 1j * omega * np.eye(2) - A - B * decay
    turing = K - A - B

    k1 = _ratio((hopf[0, 0], -hopf[0, 1]), (-hopf[1, 0], hopf[1, 1]), scale, "k1")
    k2 = _ratio((hopf[0, 0], -hopf[1, 0]), (-hopf[0, 1], hopf[1, 1]), scale, "k2")
    k3 = _ratio((turing[0, 0], -turing[0, 1]), (-turing[1, 0], turing[1, 1]), scale, "k3").real
    k4 = _ratio((turing[0, 0], -turing[1, 0]), (-turing[0, 1], turing[1, 1]), scale, "k4").real

    left1, right1 = np.array([1.0, k2]), np.array([1.0, k1])
    left2, right2 = np.array([1.0, k4]), np.array([1.0, k3])
    T1 = 1.0 / (left1 @ right1 + decay * (left1 @ B @ right1))
    T2 = float(1.0 / (left2 @ right2 + left2 @ B @ right2))

    basis = EigenBasis(
        k1=complex(k1),
        k2=complex(k2),
        k3=float(k3),
        k4=float(k4),
        T1=complex(T1),
        T2=T2,
        omega=omega,
        n2=p.n2,
        length=p.length,
        delayed=B,
    )
    residuals = {
        "phi1": float(np.linalg.norm(hopf @ basis.phi1(0.0))) / scale,
        "phi2": float(np.linalg.norm(turing @ basis.phi2(0.0))) / scale,
        "psi1": float(np.linalg.norm(basis.psi1(0.0) @ hopf)) / scale,
        "psi2": float(np.linalg.norm(basis.psi2(0.0) @ turing)) / scale,
        "norm1": abs(bilinear_form(basis.psi1, basis.phi1, lp) - 1.0),
        "norm2": abs(bilinear_form(basis.psi2, basis.phi2, lp) - 1.0),
        "orth1": abs(bilinear_form(basis.psi1, basis.phi1.conj(), lp)),
    }
    worst = max(residuals, key=residuals.get)
    if residuals[worst] > RESIDUAL_TOLERANCE:
        raise DegenerateEigenvector(f"Eigenbasis residual {worst} too large", residual=residuals[worst])
    _LOGGER.debug("Eigenbasis k1=%s k2=%s k3=%s k4=%s T1=%s T2=%s", k1, k2, k3, k4, T1, T2)
    return replace(basis, residuals=residuals)
