"""Planar amplitude system, its equilibria, unfolding type and attractor predictions.

In cylindrical coordinates z1 = R exp(i Theta), z2 = V and after the rescaling
r = sqrt(|Re g210| / 6) R, v = sqrt(|g003| / 6) V, t~ = epsilon t the normal form
reduces to

    dr/dt~ = r (eps1 + r^2 + b v^2)
    dv/dt~ = v (eps2 + c r^2 + d v^2)

with epsilon = sign(Re g210).  Stability is always reported in original time,
i.e. for the flow of epsilon * J.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .eigenbasis import EigenBasis
from .errors import BoundaryCase, DegenerateCubic, OutsideCatalog
from .normalform import NormalFormCoeffs
from .spectrum import TuringHopfPoint

_LOGGER = logging.getLogger(__name__)

CUBIC_TOLERANCE = 1e-10
BOUNDARY_TOLERANCE = 1e-9
EQUILIBRIA = ("E1", "E2", "E3", "E4")

CASE_KINDS = {
    1: "spatially homogeneous steady state",
    2: "spatially homogeneous periodic solution",
    3: "spatially inhomogeneous steady states",
    4: "spatially inhomogeneous periodic solutions",
    5: "spatially inhomogeneous quasi-periodic solutions",
}
_CASE_OF = {"E1": 1, "E2": 2, "E3": 3, "E4": 4}


@dataclass(frozen=True)
class AmplitudeSystem:
    """Constants of the planar system; ``eps1``/``eps2`` are coefficients of (alpha1, alpha2)."""

    epsilon: int
    eps1: tuple[float, float]
    eps2: tuple[float, float]
    b: float
    c: float
    d: int
    omega: float
    g210: complex
    g102: complex
    g111: complex
    g003: complex
    f_a1z1: complex
    f_a2z1: complex

    @property
    def d_minus_bc(self) -> float:
        return self.d - self.b * self.c

    def unfolding(self, alpha: Sequence) -> tuple:
        """(eps1, eps2) at parameter offsets ``alpha``; arrays broadcast."""
        a1, a2 = alpha
        return (
            self.eps1[0] * a1 + self.eps1[1] * a2,
            self.eps2[0] * a1 + self.eps2[1] * a2,
        )

    def frequency(self, alpha: Sequence, r2: float = 0.0, v2: float = 0.0) -> float:
        """Unit-delay angular frequency of the Hopf component at amplitudes (r^2, v^2)."""
        shift = 0.5 * (self.f_a1z1 * alpha[0] + self.f_a2z1 * alpha[1]).imag
        return (
            self.omega
            + shift
            + self.g210.imag * r2 / abs(self.g210.real)
            + self.g102.imag * v2 / abs(self.g003)
        )


def to_amplitude(nf: NormalFormCoeffs) -> AmplitudeSystem:
    re210 = nf.g210.real
    abs003 = abs(nf.g003)
    if abs(re210) <= CUBIC_TOLERANCE or abs003 <= CUBIC_TOLERANCE:
        raise DegenerateCubic(
            "Re g210 and g003 must be nonzero", re_g210=re210, g003=nf.g003
        )
    epsilon = 1 if re210 > 0 else -1
    amp = AmplitudeSystem(
        epsilon=epsilon,
        eps1=(epsilon * 0.5 * nf.f_a1z1.real, epsilon * 0.5 * nf.f_a2z1.real),
        eps2=(epsilon * 0.5 * nf.f_a1z2.real, epsilon * 0.5 * nf.f_a2z2.real),
        b=epsilon * nf.g102.real / abs003,
        c=epsilon * nf.g111.real / abs(re210),
        d=1 if epsilon * nf.g003.real > 0 else -1,
        omega=nf.omega,
        g210=nf.g210,
        g102=nf.g102,
        g111=nf.g111,
        g003=nf.g003,
        f_a1z1=nf.f_a1z1,
        f_a2z1=nf.f_a2z1,
    )
    _LOGGER.info(
        "Amplitude system: epsilon=%d b=%.6g c=%.6g d=%d d-bc=%.6g", epsilon, amp.b, amp.c, amp.d, amp.d_minus_bc
    )
    return amp


# -----------------------------------------------------------------------------
# Equilibria


@dataclass(frozen=True)
class Equilibrium:
    id: str
    r: float
    v: float
    exists: bool
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    stability: str


def _squares(amp: AmplitudeSystem, e1, e2) -> dict[str, tuple]:
    """(r^2, v^2) of each equilibrium; negative entries mean it does not exist."""
    zero = np.zeros_like(np.asarray(e1, dtype=float))
    dbc = amp.d_minus_bc
    return {
        "E1": (zero, zero),
        "E2": (-e1 + zero, zero),
        "E3": (zero, -e2 / amp.d + zero),
        "E4": ((amp.b * e2 - amp.d * e1) / dbc + zero, (amp.c * e1 - e2) / dbc + zero),
    }


def _jacobian_entries(amp: AmplitudeSystem, e1, e2, r2, v2):
    rv = np.sqrt(np.maximum(r2, 0.0) * np.maximum(v2, 0.0))
    return (
        e1 + 3 * r2 + amp.b * v2,
        2 * amp.b * rv,
        2 * amp.c * rv,
        e2 + amp.c * r2 + 3 * amp.d * v2,
    )


def _exists(name: str, r2, v2):
    if name == "E1":
        return np.ones_like(r2, dtype=bool)
    if name == "E2":
        return r2 > 0
    if name == "E3":
        return v2 > 0
    return (r2 > 0) & (v2 > 0)


def _stability(jacobian: np.ndarray, epsilon: int) -> str:
    trace = epsilon * float(np.trace(jacobian))
    det = float(np.linalg.det(jacobian))
    tolerance = 1e-14 * (1.0 + float(np.abs(jacobian).max())) ** 2
    if abs(det) <= tolerance:
        return "degenerate"
    if det < 0:
        return "saddle"
    if abs(trace) <= 1e-12 * (1.0 + float(np.abs(jacobian).max())):
        return "hopf-critical"
    return "stable" if trace < 0 else "unstable"


def equilibria(amp: AmplitudeSystem, alpha: Sequence[float]) -> list[Equilibrium]:
    """E1-E4 at ``alpha`` with planar Jacobians and original-time stability."""
    e1, e2 = (float(x) for x in amp.unfolding(alpha))
    result = []
    for name, (r2, v2) in _squares(amp, e1, e2).items():
        r2, v2 = float(r2), float(v2)
        exists = bool(_exists(name, r2, v2))
        if not exists:
            r2, v2 = max(r2, 0.0), max(v2, 0.0)
        j11, j12, j21, j22 = _jacobian_entries(amp, e1, e2, r2, v2)
        jacobian = np.array([[j11, j12], [j21, j22]], dtype=float)
        result.append(
            Equilibrium(
                id=name,
                r=math.sqrt(r2),
                v=math.sqrt(v2),
                exists=exists,
                jacobian=jacobian,
                eigenvalues=np.linalg.eigvals(jacobian),
                stability=_stability(jacobian, amp.epsilon) if exists else "absent",
            )
        )
    return result


def e4_hopf_ray(amp: AmplitudeSystem) -> tuple[float, float] | None:
    """Normal of the line where the E4 Jacobian has zero trace, (dc - d) eps1 + (b - d) eps2 = 0.

    Only d = -1 admits it; with d = +1 the trace 2(r^2 + v^2) never vanishes.
    """
    if amp.d > 0:
        return None
    return (amp.d * amp.c - amp.d, amp.b - amp.d)


# -----------------------------------------------------------------------------
# Unfolding type

_SIGN_TABLE = {
    (1, 1, 1): ("Ia", "Ib"),
    (1, 1, -1): ("II", "II"),
    (1, -1, 1): ("III", "III"),
    (1, -1, -1): ("IVa", "IVb"),
    (-1, 1, 1): ("V", "V"),
    (-1, 1, -1): ("VIa", "VIb"),
    (-1, -1, 1): ("VIIa", "VIIb"),
    (-1, -1, -1): ("VIII", "VIII"),
}


def classify_unfolding(amp: AmplitudeSystem) -> str:
    """Unfolding type from the signs of d, b, c and d - bc."""
    for name, value in (("b", amp.b), ("c", amp.c), ("d-bc", amp.d_minus_bc)):
        if abs(value) <= BOUNDARY_TOLERANCE:
            raise BoundaryCase(f"{name} vanishes; unfolding type is not generic", quantity=name, value=value)
    key = (amp.d, 1 if amp.b > 0 else -1, 1 if amp.c > 0 else -1)
    positive, negative = _SIGN_TABLE[key]
    return positive if amp.d_minus_bc > 0 else negative


# -----------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Signature:
    existing: tuple[str, ...]
    stable: tuple[str, ...]
    cycle: bool

    def __str__(self) -> str:
        cycle = "+cycle" if self.cycle else ""
        return f"exist={'/'.join(self.existing)};stable={'/'.join(self.stable) or '-'}{cycle}"


@dataclass(frozen=True)
class Region:
    label: str
    signature: Signature
    angle: float
    cells: int
    kinds: tuple[str, ...]


@dataclass(frozen=True)
class Ray:
    label: str
    equation: str
    angle: float
    direction: tuple[float, float]


@dataclass(frozen=True)
class RegionMap:
    """Region index per grid cell (-1 marks the excluded origin cell)."""

    alpha1: np.ndarray
    alpha2: np.ndarray
    index: np.ndarray
    regions: list[Region]
    rays: list[Ray]
    case: str | None = None

    def label_at(self, alpha: Sequence[float]) -> str:
        i = int(np.argmin(np.abs(self.alpha1 - alpha[0])))
        j = int(np.argmin(np.abs(self.alpha2 - alpha[1])))
        k = int(self.index[i, j])
        return self.regions[k].label if k >= 0 else "origin"


def _grid_masks(amp: AmplitudeSystem, e1: np.ndarray, e2: np.ndarray):
    existing, stable = {}, {}
    traces = {}
    for name, (r2, v2) in _squares(amp, e1, e2).items():
        exists = _exists(name, r2, v2)
        r2c, v2c = np.maximum(r2, 0.0), np.maximum(v2, 0.0)
        j11, j12, j21, j22 = _jacobian_entries(amp, e1, e2, r2c, v2c)
        trace = amp.epsilon * (j11 + j22)
        det = j11 * j22 - j12 * j21
        existing[name] = exists
        stable[name] = exists & (det > 0) & (trace < 0)
        traces[name] = (trace, det)
    trace, det = traces["E4"]
    cycle = existing["E4"] & (det > 0) & (trace > 0) & (amp.d < 0)
    return existing, stable, cycle


def _signature_codes(amp: AmplitudeSystem, e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
    existing, stable, cycle = _grid_masks(amp, e1, e2)
    code = np.zeros(np.shape(e1), dtype=np.int64)
    for bit, name in enumerate(EQUILIBRIA):
        code |= existing[name].astype(np.int64) << bit
        code |= stable[name].astype(np.int64) << (bit + 4)
    return code | (cycle.astype(np.int64) << 8)


def _decode(code: int) -> Signature:
    return Signature(
        existing=tuple(name for bit, name in enumerate(EQUILIBRIA) if code >> bit & 1),
        stable=tuple(name for bit, name in enumerate(EQUILIBRIA) if code >> (bit + 4) & 1),
        cycle=bool(code >> 8 & 1),
    )


def _kinds(signature: Signature) -> tuple[str, ...]:
    kinds = [CASE_KINDS[_CASE_OF[name]] for name in signature.stable]
    if signature.cycle:
        kinds.append(CASE_KINDS[5])
    return tuple(kinds)


def _lines(amp: AmplitudeSystem) -> list[tuple[str, np.ndarray]]:
    e1, e2 = np.array(amp.eps1), np.array(amp.eps2)
    lines = [
        ("eps1=0", e1),
        ("eps2=0", e2),
        ("c*eps1-eps2=0", amp.c * e1 - e2),
        ("b*eps2-d*eps1=0", amp.b * e2 - amp.d * e1),
    ]
    hopf = e4_hopf_ray(amp)
    if hopf is not None:
        lines.append(("(dc-d)*eps1+(b-d)*eps2=0", hopf[0] * e1 + hopf[1] * e2))
    return lines


def critical_rays(amp: AmplitudeSystem, radius: float = 0.1, offset: float = 0.02) -> list[Ray]:
    """Half-lines through the origin across which the region signature changes, in angular order."""
    found = []
    for equation, normal in _lines(amp):
        if not np.any(normal):
            continue
        for sign in (1.0, -1.0):
            direction = sign * np.array([-normal[1], normal[0]])
            direction = direction / np.linalg.norm(direction)
            angle = math.atan2(direction[1], direction[0]) % (2 * math.pi)
            sides = np.array([angle - offset, angle + offset])
            a1, a2 = radius * np.cos(sides), radius * np.sin(sides)
            codes = _signature_codes(amp, *amp.unfolding((a1, a2)))
            if codes[0] != codes[1]:
                found.append((angle, equation, (float(direction[0]), float(direction[1]))))
    found.sort()
    return [Ray(f"T{i}", equation, angle, direction) for i, (angle, equation, direction) in enumerate(found, start=1)]


def _half_step(axis: np.ndarray) -> float:
    """Half the node spacing; nodes this close to zero belong to the origin cell."""
    if axis.size < 2:
        return 0.0
    return 0.5 * abs(axis[-1] - axis[0]) / (axis.size - 1) * (1 + 1e-6)


def region_map(
    amp: AmplitudeSystem,
    box: tuple[tuple[float, float], tuple[float, float]] = ((-0.2, 0.2), (-0.2, 0.2)),
    resolution: int = 200,
) -> RegionMap:
    """Classify every grid offset by its dynamics and label the distinct signatures D1, D2, ...

    Labels follow the circular-mean angle of each signature's cells.
    """
    alpha1 = np.linspace(box[0][0], box[0][1], resolution)
    alpha2 = np.linspace(box[1][0], box[1][1], resolution)
    a1, a2 = np.meshgrid(alpha1, alpha2, indexing="ij")
    codes = _signature_codes(amp, *amp.unfolding((a1, a2)))
    origin = (np.abs(a1) <= _half_step(alpha1)) & (np.abs(a2) <= _half_step(alpha2))
    angles = np.arctan2(a2, a1)

    entries = []
    for code in np.unique(codes[~origin]):
        cells = (codes == code) & ~origin
        mean = math.atan2(np.sin(angles[cells]).mean(), np.cos(angles[cells]).mean()) % (2 * math.pi)
        entries.append((mean, int(code), int(cells.sum())))
    entries.sort()

    index = np.full(codes.shape, -1, dtype=np.int64)
    regions = []
    for k, (mean, code, count) in enumerate(entries):
        signature = _decode(code)
        index[(codes == code) & ~origin] = k
        regions.append(Region(f"D{k + 1}", signature, mean, count, _kinds(signature)))
        _LOGGER.debug("Region D%d: %s (%d cells)", k + 1, signature, count)

    radius = 0.5 * min(abs(box[0][0]), abs(box[0][1]), abs(box[1][0]), abs(box[1][1])) or 0.1
    try:
        case = classify_unfolding(amp)
    except BoundaryCase:
        case = None
    _LOGGER.info("Region map: %d region(s) over %dx%d grid", len(regions), resolution, resolution)
    return RegionMap(alpha1, alpha2, index, regions, critical_rays(amp, radius), case)


# -----------------------------------------------------------------------------
# Attractors


@dataclass(frozen=True)
class Attractor:
    """One attractor of the original system and its leading-order waveform.

    The profile is U(t, x) ~ rho (phi1(0) exp(i Theta) + c.c.) + h cos(n2 x / l)
    with Theta advancing at ``omega_original`` in original time.
    """

    case: int
    kind: str
    multiplicity: int
    equilibrium: str | None
    params: Mapping[str, float] = field(default_factory=dict)
    h: np.ndarray | None = None


@dataclass(frozen=True)
class AttractorPrediction:
    alpha: tuple[float, float]
    signature: Signature
    attractors: tuple[Attractor, ...]
    n2: int
    length: float

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(a.kind for a in self.attractors)


def _time_scale(p: TuringHopfPoint, alpha: Sequence[float]) -> float:
    if p.time_scale_parameter in p.parameters:
        return p.time_scale + alpha[p.parameters.index(p.time_scale_parameter)]
    return p.time_scale


def predict_attractor(
    amp: AmplitudeSystem,
    nf: NormalFormCoeffs,
    eb: EigenBasis,
    p: TuringHopfPoint,
    alpha: Sequence[float],
    rho: float = 1e-3,
) -> AttractorPrediction:
    """Attractors at ``alpha`` with Case 1-5 waveform parameters.

    ``rho`` is the small torus amplitude used for quasi-periodic solutions.
    """
    alpha = (float(alpha[0]), float(alpha[1]))
    eqs = {e.id: e for e in equilibria(amp, alpha)}
    e1, e2 = (np.array(x) for x in amp.unfolding(alpha))
    codes = _signature_codes(amp, e1, e2)
    signature = _decode(int(codes))

    tau = _time_scale(p, alpha)
    beta0 = 1.0 / math.sqrt(p.length * math.pi)
    mode_norm = math.sqrt(2.0 / (p.length * math.pi))
    radial = math.sqrt(6.0 / abs(nf.g210.real))
    axial = math.sqrt(6.0 / abs(nf.g003))
    phi2 = eb.phi2(0.0).real

    attractors = []
    for name in signature.stable:
        e = eqs[name]
        case = _CASE_OF[name]
        params: dict[str, float] = {"tau": tau}
        h = None
        if case in (2, 4):
            omega = amp.frequency(alpha, e.r**2, e.v**2)
            params.update(rho=radial * e.r * beta0, omega=omega, omega_original=omega / tau)
        if case in (3, 4):
            h = axial * e.v * mode_norm * phi2
        attractors.append(
            Attractor(case, CASE_KINDS[case], 2 if case in (3, 4) else 1, name, params, h)
        )
    if signature.cycle:
        e = eqs["E4"]
        varpi = 2 * e.r * e.v * math.sqrt(amp.d_minus_bc)
        omega = amp.frequency(alpha, e.r**2, e.v**2)
        params = {
            "tau": tau,
            "rho": radial * e.r * beta0,
            "rho5": rho,
            "h5": rho,
            "omega": omega,
            "omega_original": omega / tau,
            "varpi": varpi,
            "varpi_original": varpi / tau,
        }
        attractors.append(Attractor(5, CASE_KINDS[5], 2, "E4", params, axial * e.v * mode_norm * phi2))
    if not attractors:
        raise OutsideCatalog("No stable equilibrium or cycle at this parameter offset", alpha=list(alpha))
    return AttractorPrediction(alpha, signature, tuple(attractors), p.n2, p.length)


def synthesize(
    attractor: Attractor,
    eb: EigenBasis,
    x: np.ndarray,
    t: np.ndarray,
    mirror: bool = False,
) -> np.ndarray:
    """Leading-order deviation from equilibrium, shape (len(t), len(x), 2), original time.

    ``mirror`` returns the sign-flipped spatial pattern.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros((t.size, x.size, 2))
    params = attractor.params
    if "rho" in params:
        phase = np.exp(1j * params["omega_original"] * t)
        temporal = 2 * (phase[:, None] * eb.phi1(0.0)[None, :]).real
        if "varpi_original" in params:
            temporal = temporal * (1.0 + params["rho5"] * np.cos(params["varpi_original"] * t))[:, None]
        out += params["rho"] * temporal[:, None, :]
    if attractor.h is not None:
        profile = np.cos(eb.n2 * x / eb.length)
        spatial = np.ones_like(t)
        if "varpi_original" in params:
            spatial = 1.0 + params["h5"] * np.sin(params["varpi_original"] * t)
        sign = -1.0 if mirror else 1.0
        out += sign * spatial[:, None, None] * profile[None, :, None] * attractor.h[None, None, :]
    return out
