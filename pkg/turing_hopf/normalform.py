"""Third-order normal form on the center manifold of a Turing-Hopf point.

Monomials are named by the exponents of (z1, z1-bar, z2): "210" is z1^2 z1-bar.
The nonlinearity is written F(x) = 1/2 sum F_mnk z^mnk + 1/6 sum F_mnk z^mnk with
x = (u, v, u_tau, v_tau), so F_mnk carries the multinomial factor.

Spatial projections use the Neumann cosine basis
beta_0 = 1/sqrt(l pi), beta_n = sqrt(2/(l pi)) cos(n x / l).
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .eigenbasis import EigenBasis, bilinear_form
from .errors import ResonanceError, ValidationFailed
from .expoly import ExpPoly
from .model import DerivativeBundle, LinearPart
from .spectrum import TuringHopfPoint

_LOGGER = logging.getLogger(__name__)

SECOND_ORDER = ("200", "110", "101", "020", "011", "002")
THIRD_ORDER = ("210", "102", "111", "003")
CONDITION_LIMIT = 1e8
VALIDATION_TOLERANCE = 1e-7
_SAMPLES = 20


def _exponents(monomial: str) -> tuple[int, int, int]:
    return int(monomial[0]), int(monomial[1]), int(monomial[2])


@dataclass(frozen=True)
class CoeffVectors:
    """Coefficient vectors of the nonlinearity restricted to the center directions.

    ``alpha_z1[i]`` is F_{alpha_(i+1) z1}; ``y[d]`` is the 2x4 matrix
    (F_{y1(0) d}, F_{y2(0) d}, F_{y1(-1) d}, F_{y2(-1) d}) for d in z1, zbar1, z2.
    """

    alpha_z1: np.ndarray
    alpha_z2: np.ndarray
    y: Mapping[str, np.ndarray]
    second: Mapping[str, np.ndarray]
    third: Mapping[str, np.ndarray]

    def S(self, direction: str, phi: ExpPoly) -> np.ndarray:
        """S_{y direction}(phi): the y-matrix applied to (phi(0), phi(-1))."""
        return self.y[direction] @ np.concatenate([phi(0.0), phi(-1.0)])


def _quadratic(H: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("cij,i,j->c", H, a, b)


def _cubic(T: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum("cijk,i,j,k->c", T, a, b, c)


def coeff_vectors(bundle: DerivativeBundle, eb: EigenBasis, p: TuringHopfPoint | None = None) -> CoeffVectors:
    delay = np.exp(-1j * eb.omega)
    q1 = np.array([1.0, eb.k1, delay, eb.k1 * delay])
    q1bar = np.conj(q1)
    q2 = np.array([1.0, eb.k3, 1.0, eb.k3], dtype=complex)
    H, T = bundle.second, bundle.third

    second = {
        "200": _quadratic(H, q1, q1),
        "110": 2 * _quadratic(H, q1, q1bar),
        "101": 2 * _quadratic(H, q1, q2),
        "020": _quadratic(H, q1bar, q1bar),
        "011": 2 * _quadratic(H, q1bar, q2),
        "002": _quadratic(H, q2, q2),
    }
    third = {
        "210": 3 * _cubic(T, q1, q1, q1bar),
        "102": 3 * _cubic(T, q1, q2, q2),
        "111": 6 * _cubic(T, q1, q1bar, q2),
        "003": _cubic(T, q2, q2, q2),
    }
    y = {name: 2 * np.einsum("cib,b->ci", H, q) for name, q in (("z1", q1), ("zbar1", q1bar), ("z2", q2))}

    lp = bundle.linear
    phi1_now, phi1_past = q1[:2], q1[2:]
    phi2 = q2[:2]
    k = (eb.n2 / eb.length) ** 2
    alpha_z1 = np.stack([2 * (lp.dA[i] @ phi1_now + lp.dB[i] @ phi1_past) for i in range(2)])
    alpha_z2 = np.stack([2 * (-k * lp.dD[i] @ phi2 + lp.dA[i] @ phi2 + lp.dB[i] @ phi2) for i in range(2)])
    return CoeffVectors(alpha_z1=alpha_z1, alpha_z2=alpha_z2, y=y, second=second, third=third)


# -----------------------------------------------------------------------------
# Second-order center-manifold corrections


@dataclass(frozen=True)
class HTerm:
    """Spatial-mode component w(theta) of h_mnk, solving the center-complement equation."""

    monomial: str
    mode: int
    rate: complex
    forcing: np.ndarray
    w: ExpPoly


@dataclass(frozen=True)
class HFunctions:
    terms: Mapping[tuple[str, int], HTerm]
    n2: int
    length: float
    conventions: Mapping[str, str] = field(default_factory=dict)
    conditions: Mapping[str, float] = field(default_factory=dict)

    def component(self, monomial: str, mode: int) -> ExpPoly:
        term = self.terms.get((monomial, mode))
        return term.w if term is not None else ExpPoly.zero()

    @property
    def _root(self) -> float:
        return math.sqrt(self.length * math.pi)

    @property
    def h200_11(self) -> ExpPoly:
        return self.component("200", 0) / self._root

    @property
    def h020_11(self) -> ExpPoly:
        return self.component("020", 0) / self._root

    @property
    def h110_11(self) -> ExpPoly:
        return self.component("110", 0) / self._root

    @property
    def h110_22(self) -> ExpPoly:
        return self.h110_11

    @property
    def h101_21(self) -> ExpPoly:
        return self.component("101", self.n2) / self._root

    @property
    def h011_12(self) -> ExpPoly:
        return self.component("011", self.n2) / self._root

    @property
    def h002_11(self) -> ExpPoly:
        return self.component("002", 0) / self._root

    @property
    def h002_22(self) -> ExpPoly:
        return self.component("002", 0) / self._root + self.component("002", 2 * self.n2) / math.sqrt(
            2 * self.length * math.pi
        )

    def projections(self) -> dict[str, ExpPoly]:
        return {
            name: getattr(self, name)
            for name in ("h200_11", "h020_11", "h110_11", "h110_22", "h101_21", "h011_12", "h002_11", "h002_22")
        }


def _modes(monomial: str, n2: int, length: float) -> list[tuple[int, float]]:
    """Spatial modes excited by a monomial with the cosine-basis overlap of each."""
    _, _, k = _exponents(monomial)
    root = math.sqrt(length * math.pi)
    if k == 0:
        return [(0, 1.0 / root)]
    if k == 1:
        return [(n2, 1.0 / root)]
    return [(0, 1.0 / root), (2 * n2, 1.0 / (math.sqrt(2) * root))]


def _matrix_name(multiple: int, mode: int) -> str:
    shift = {0: "", 1: "i*omega0", -1: "-i*omega0"}.get(multiple, f"{multiple}i*omega0")
    operator = "L0(I)" if multiple == 0 else f"L0(exp({shift}*.))"
    head = " + ".join(part for part in (shift, f"K{mode}" if mode else "") if part)
    return f"[{head} - {operator}]" if head else f"[-{operator}]"


def _characteristic_matrix(lp: LinearPart, mode: int, length: float, rate: complex) -> np.ndarray:
    return rate * np.eye(2) + lp.modal(mode, length) - lp.A - lp.B * np.exp(-rate)


def _required(n2: int, length: float) -> list[tuple[str, int, int]]:
    """(monomial, mode, frequency multiple) for every h component."""
    required = []
    for monomial in SECOND_ORDER:
        m, n, _ = _exponents(monomial)
        for mode, _overlap in _modes(monomial, n2, length):
            required.append((monomial, mode, m - n))
    return required


def check_resonance(lp: LinearPart, eb: EigenBasis) -> dict[str, float]:
    """Condition numbers of the matrices inverted by :func:`h_functions`."""
    conditions = {}
    for _monomial, mode, multiple in _required(eb.n2, eb.length):
        name = _matrix_name(multiple, mode)
        if name in conditions:
            continue
        matrix = _characteristic_matrix(lp, mode, eb.length, 1j * multiple * eb.omega)
        condition = float(np.linalg.cond(matrix))
        if not np.isfinite(condition) or condition > CONDITION_LIMIT:
            raise ResonanceError(name, condition)
        conditions[name] = condition
    return conditions


def _solve(lp: LinearPart, eb: EigenBasis, mode: int, rate: complex, forcing: np.ndarray, sign: int) -> ExpPoly:
    matrix = _characteristic_matrix(lp, mode, eb.length, rate)
    w = ExpPoly.exponential(sign * np.linalg.solve(matrix, forcing), rate)
    for phi, psi, eigenvalue in eb.centers(mode):
        w = w + phi * (psi(0.0) @ forcing / (eigenvalue - rate))
    return w


def _build(cv: CoeffVectors, eb: EigenBasis, lp: LinearPart, sign: int) -> dict[tuple[str, int], HTerm]:
    terms = {}
    for monomial in SECOND_ORDER:
        m, n, _ = _exponents(monomial)
        rate = 1j * (m - n) * eb.omega
        for mode, overlap in _modes(monomial, eb.n2, eb.length):
            forcing = cv.second[monomial] * overlap
            w = _solve(lp, eb, mode, rate, forcing, sign if monomial == "200" else 1)
            terms[(monomial, mode)] = HTerm(monomial, mode, rate, forcing, w)
    return terms


def h_functions(cv: CoeffVectors, eb: EigenBasis, lp: LinearPart, p: TuringHopfPoint | None = None) -> HFunctions:
    """Solve for every second-order h component and validate it.

    The sign of the particular solution of h_200 is settled by the validator and
    recorded in ``conventions``.
    """
    conditions = check_resonance(lp, eb)
    failure: ValidationFailed | None = None
    for sign in (1, -1):
        h = HFunctions(
            terms=_build(cv, eb, lp, sign),
            n2=eb.n2,
            length=eb.length,
            conventions={
                "h200_inverse": "[2i*omega0 - L0(exp(2i*omega0*.))]^-1"
                if sign == 1
                else "[-2i*omega0 + L0(exp(2i*omega0*.))]^-1",
            },
            conditions=conditions,
        )
        try:
            validate_h(h, cv, eb, lp, p)
        except ValidationFailed as e:
            _LOGGER.warning("h_200 with sign %+d failed validation (%.3e)", sign, e.details.get("residual"))
            failure = failure or e
            continue
        return h
    raise failure


@dataclass(frozen=True)
class ValidationReport:
    max_residual: float
    interior: float
    boundary: float
    orthogonality: Mapping[str, float]


def validate_h(
    h: HFunctions,
    cv: CoeffVectors,
    eb: EigenBasis,
    lp: LinearPart,
    p: TuringHopfPoint | None = None,
    tolerance: float = VALIDATION_TOLERANCE,
) -> ValidationReport:
    """Residuals of the defining relations of each h component.

    Interior: w' - rate w = sum_c (psi_c(0) G) phi_c on [-1, 0].
    Boundary: rate w(0) - L_j(w) = G - sum_c phi_c(0) psi_c(0) G.
    Orthogonality: (psi_c, w) = 0 for every center direction of the mode.
    """
    thetas = np.linspace(-1.0, 0.0, _SAMPLES)
    interior = boundary = 0.0
    for term in h.terms.values():
        centers = eb.centers(term.mode)
        magnitude = 1.0 + float(np.linalg.norm(term.forcing))
        scale = lp.scale(term.mode, eb.length) * magnitude
        projected = [psi(0.0) @ term.forcing for _phi, psi, _eigenvalue in centers]

        expected = np.zeros((_SAMPLES, 2), dtype=complex)
        for (phi, _psi, _eigenvalue), weight in zip(centers, projected):
            expected = expected + weight * phi(thetas)
        ode = term.w.derivative()(thetas) - term.rate * term.w(thetas) - expected
        interior = max(interior, float(np.abs(ode).max()) / scale)

        now, past = term.w(0.0), term.w(-1.0)
        generator = -lp.modal(term.mode, eb.length) @ now + lp.A @ now + lp.B @ past
        target = term.forcing - sum(
            (phi(0.0) * weight for (phi, _psi, _eigenvalue), weight in zip(centers, projected)), np.zeros(2)
        )
        residual = term.rate * now - generator - target
        boundary = max(boundary, float(np.abs(residual).max()) / scale)

    orthogonality = {}
    for index, mode in ((1, 0), (2, eb.n2)):
        psi = eb.psi1 if index == 1 else eb.psi2
        for monomial in SECOND_ORDER:
            w = h.component(monomial, mode)
            magnitude = 1.0 + float(np.linalg.norm(cv.second[monomial]))
            orthogonality[f"psi{index}.h{monomial}"] = abs(bilinear_form(psi, w, lp)) / magnitude
        if index == 1:
            for monomial in SECOND_ORDER:
                w = h.component(monomial, 0)
                magnitude = 1.0 + float(np.linalg.norm(cv.second[monomial]))
                orthogonality[f"psi1bar.h{monomial}"] = abs(bilinear_form(psi.conj(), w, lp)) / magnitude

    worst = max([interior, boundary, *orthogonality.values()])
    report = ValidationReport(max_residual=worst, interior=interior, boundary=boundary, orthogonality=orthogonality)
    _LOGGER.debug("h validation: interior=%.3e boundary=%.3e max=%.3e", interior, boundary, worst)
    if worst > tolerance:
        raise ValidationFailed("Center-manifold corrections violate their defining relations", residual=worst)
    return report


# -----------------------------------------------------------------------------
# Assembly


@dataclass(frozen=True)
class NormalFormCoeffs:
    """Coefficients of the truncated normal form in (z1, z1-bar, z2).

    dz1/dt = i omega0 z1 + 1/2 (f_a1z1 a1 + f_a2z1 a2) z1 + 1/6 (g210 z1^2 z1-bar + g102 z1 z2^2)
    dz2/dt = 1/2 (f_a1z2 a1 + f_a2z2 a2) z2 + 1/6 (g111 z1 z1-bar z2 + g003 z2^3)
    """

    f_a1z1: complex
    f_a2z1: complex
    f_a1z2: complex
    f_a2z2: complex
    g210: complex
    g102: complex
    g111: complex
    g003: complex
    omega: float
    intermediates: Mapping[str, complex] = field(default_factory=dict)
    conventions: Mapping[str, str] = field(default_factory=dict)
    validation: ValidationReport | None = None
    point: TuringHopfPoint | None = None

    @property
    def coefficients(self) -> dict[str, complex]:
        return {
            name: getattr(self, name)
            for name in ("f_a1z1", "f_a2z1", "f_a1z2", "f_a2z2", "g210", "g102", "g111", "g003")
        }


def _second_order(cv: CoeffVectors, eb: EigenBasis) -> dict[str, complex]:
    root = math.sqrt(eb.length * math.pi)
    psi1, psi2 = eb.psi1(0.0), eb.psi2(0.0)
    f = {}
    for monomial in ("200", "110", "020", "002"):
        f[f"f11_{monomial}"] = complex(psi1 @ cv.second[monomial]) / root
        f[f"f12_{monomial}"] = complex(np.conj(psi1) @ cv.second[monomial]) / root
    for monomial in ("101", "011"):
        f[f"f13_{monomial}"] = complex(psi2 @ cv.second[monomial]) / root
    # Cosine-basis selection rules.
    for name in ("f11_101", "f11_011", "f13_200", "f13_110", "f13_020", "f13_002"):
        f[name] = 0j
    return f


def assemble(
    cv: CoeffVectors,
    h: HFunctions,
    eb: EigenBasis,
    p: TuringHopfPoint | None = None,
    validation: ValidationReport | None = None,
) -> NormalFormCoeffs:
    scale = eb.length * math.pi
    psi1, psi2 = eb.psi1(0.0), eb.psi2(0.0)
    f = _second_order(cv, eb)
    f["f11_210"] = complex(psi1 @ cv.third["210"]) / scale
    f["f11_102"] = complex(psi1 @ cv.third["102"]) / scale
    f["f13_111"] = complex(psi2 @ cv.third["111"]) / scale
    f["f13_003"] = 3 * complex(psi2 @ cv.third["003"]) / (2 * scale)

    factor = 3 / (2j * eb.omega)
    g210 = (
        f["f11_210"]
        + factor * (-f["f11_110"] * f["f11_200"] + f["f11_110"] * f["f12_110"] + (2 / 3) * f["f11_020"] * f["f12_200"])
        + 1.5 * complex(psi1 @ (cv.S("z1", h.h110_11) + cv.S("zbar1", h.h200_11)))
    )
    g102 = (
        f["f11_102"]
        + factor
        * (-2 * f["f11_002"] * f["f11_200"] + f["f12_002"] * f["f11_110"] + 2 * f["f11_002"] * f["f13_101"])
        + 1.5 * complex(psi1 @ (cv.S("z1", h.h002_11) + cv.S("z2", h.h101_21)))
    )
    g111 = (
        f["f13_111"]
        + factor * (-f["f13_101"] * f["f11_110"] + f["f13_011"] * f["f12_110"])
        + 1.5 * complex(psi2 @ (cv.S("z1", h.h011_12) + cv.S("zbar1", h.h101_21) + cv.S("z2", h.h110_22)))
    )
    g003 = (
        f["f13_003"]
        + factor * (-f["f11_002"] * f["f13_101"] + f["f12_002"] * f["f13_011"])
        + 1.5 * complex(psi2 @ cv.S("z2", h.h002_22))
    )

    nf = NormalFormCoeffs(
        f_a1z1=complex(psi1 @ cv.alpha_z1[0]),
        f_a2z1=complex(psi1 @ cv.alpha_z1[1]),
        f_a1z2=complex(psi2 @ cv.alpha_z2[0]),
        f_a2z2=complex(psi2 @ cv.alpha_z2[1]),
        g210=g210,
        g102=g102,
        g111=g111,
        g003=g003,
        omega=eb.omega,
        intermediates=f,
        conventions=dict(h.conventions),
        validation=validation,
        point=p,
    )
    _LOGGER.info("Normal form: g210=%s g102=%s g111=%s g003=%s", g210, g102, g111, g003)
    return nf


def normal_form(bundle: DerivativeBundle, eb: EigenBasis, p: TuringHopfPoint | None = None) -> NormalFormCoeffs:
    """coeff_vectors, h_functions, validate_h and assemble in one call."""
    cv = coeff_vectors(bundle, eb, p)
    h = h_functions(cv, eb, bundle.linear, p)
    report = validate_h(h, cv, eb, bundle.linear, p)
    return assemble(cv, h, eb, p, report)
