"""Characteristic determinants, Turing-Hopf point location and spectrum certification.

Everything here works in unit-delay time.  A model whose delay is a parameter
is rescaled with :func:`turing_hopf.model.unit_delay` first.
"""

import itertools
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import (
    CertificationFailed,
    ConfigError,
    ContourThroughZero,
    DegeneratePoint,
    InconclusiveTailBound,
    NoBifurcationFound,
    SimpleRootViolation,
    TransversalityFailed,
    TuringHopfError,
)
from .model import LinearPart, ModelSpec, linear_part, unit_delay

_LOGGER = logging.getLogger(__name__)

_NEWTON_MAX_ITER = 60
_NEWTON_HALVINGS = 30
_FD_STEP = 1e-6
_DEDUPE_TOLERANCE = 1e-6
_EDGE_POINTS = 256
_MAX_CONTOUR_POINTS = 400_000
_MAX_PHASE_STEP = math.pi / 3
_WINDING_SLACK = 0.25
_CONTOUR_NUDGES = 3


@dataclass(frozen=True)
class CharContext:
    """Characteristic determinant of cosine mode ``n`` as a function of (lambda, mu)."""

    linearize: Callable[[Sequence], LinearPart]
    n: int
    length: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 0:
            raise ValueError(f"Mode index must be a non-negative integer: {self.n!r}")

    @classmethod
    def for_model(cls, m: ModelSpec, n: int) -> "CharContext":
        um = unit_delay(m)
        return cls(lambda mu: linear_part(um, mu), n, um.length)

    @property
    def k(self) -> float:
        return (self.n / self.length) ** 2


def _determinant(lp: LinearPart, k: float, lam, outer: bool = False):
    """det(lam I + k D - A - B exp(-lam)) with numpy broadcasting.

    With ``outer`` the axes of ``lam`` are appended after the leading axes of ``lp``.
    """
    lam = np.asarray(lam)
    A, B, D = lp.A, lp.B, lp.D
    if outer and lam.ndim:
        A, B, D = (X.reshape(X.shape[:-2] + (1,) * lam.ndim + (2, 2)) for X in (A, B, D))
    decay = np.exp(-lam)
    m = [
        [(lam if i == j else 0.0) + k * D[..., i, j] - A[..., i, j] - B[..., i, j] * decay for j in range(2)]
        for i in range(2)
    ]
    return m[0][0] * m[1][1] - m[0][1] * m[1][0]


def char_function(lp: LinearPart, n: int, length: float) -> Callable[[Any], Any]:
    """Vectorized lambda -> Delta_n(lambda) at a fixed linearization."""
    k = (n / length) ** 2
    return lambda lam: _determinant(lp, k, lam)


def char_value(ctx: CharContext, lam: complex, mu: Sequence) -> complex:
    return complex(_determinant(ctx.linearize(mu), ctx.k, complex(lam)))


def _derivatives(lp: LinearPart, k: float, lam: complex) -> tuple[complex, complex, complex]:
    identity = np.eye(2)
    decay = np.exp(-lam)
    m = lam * identity + k * lp.D - lp.A - lp.B * decay
    adjugate = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
    d_lam = np.trace(adjugate @ (identity + lp.B * decay))
    d_mu = [np.trace(adjugate @ (k * lp.dD[i] - lp.dA[i] - lp.dB[i] * decay)) for i in range(2)]
    return complex(d_lam), complex(d_mu[0]), complex(d_mu[1])


def char_derivatives(ctx: CharContext, lam: complex, mu: Sequence) -> tuple[complex, complex, complex]:
    """(dDelta/dlambda, dDelta/dmu1, dDelta/dmu2) by the adjugate trace identity."""
    return _derivatives(ctx.linearize(mu), ctx.k, complex(lam))


# -----------------------------------------------------------------------------
# Points and configuration


@dataclass(frozen=True)
class Certification:
    """Root counts of each inspected mode inside [-delta, re_max] x [-im_max, im_max]."""

    counts: Mapping[int, int]
    delta: float
    n_max: int
    n_tail: int
    contours: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    @property
    def inspected(self) -> tuple[int, ...]:
        return tuple(sorted(self.counts))


@dataclass(frozen=True)
class Candidate:
    """A refined (omega, mu) solution for a given Turing mode and what became of it."""

    n2: int
    omega: float
    mu: tuple[float, float]
    residual: float
    status: str = "pending"
    error: str | None = None


@dataclass(frozen=True)
class TuringHopfPoint:
    """A certified Turing-Hopf point in unit-delay time; the Hopf mode is always 0."""

    mu: tuple[float, float]
    omega: float
    n2: int
    length: float
    parameters: tuple[str, str] = ("mu1", "mu2")
    time_scale: float = 1.0
    time_scale_parameter: str | None = None
    d_alpha: float = math.nan
    d_gamma: float = math.nan
    residuals: tuple[float, float] = (0.0, 0.0)
    certification: Certification | None = None
    candidates: tuple[Candidate, ...] = ()
    n1: int = 0

    @property
    def omega_original(self) -> float:
        """Hopf frequency in the model's original time unit."""
        return self.omega / self.time_scale


@dataclass(frozen=True)
class SearchConfig:
    box: tuple[tuple[float, float], tuple[float, float]]
    n_max: int = 10
    n_values: tuple[int, ...] | None = None
    grid: int = 41
    omega_max: float = 20.0
    omega_points: int = 400
    seeds_per_mode: int = 8
    guesses: tuple[tuple[float, float, float], ...] = ()
    tolerance: float = 1e-9
    transversality_tolerance: float = 1e-6
    simple_root_tolerance: float = 1e-9
    delta: float = 1e-3
    certify_n_max: int = 20
    contour_omega: float = 50.0

    def __post_init__(self) -> None:
        for lo, hi in self.box:
            if not lo < hi:
                raise ConfigError("Search box bounds must satisfy lo < hi", box=[list(b) for b in self.box])
        if self.n_max < 1 or self.grid < 3 or self.omega_points < 8:
            raise ConfigError("Search needs n_max >= 1, grid >= 3 and omega_points >= 8")

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.n_values))) if self.n_values else tuple(range(1, self.n_max + 1))

    @classmethod
    def from_model(cls, m: ModelSpec, **overrides) -> "SearchConfig":
        """Defaults, then the model's ``[search]`` table, then ``overrides`` (None values ignored)."""
        values: dict[str, Any] = {}
        table = dict(m.search)
        if "box" in table:
            values["box"] = tuple(tuple(float(x) for x in pair) for pair in table.pop("box"))
        if "n_values" in table:
            values["n_values"] = tuple(int(n) for n in table.pop("n_values"))
        if "guesses" in table:
            values["guesses"] = tuple(tuple(float(x) for x in g) for g in table.pop("guesses"))
        known = set(cls.__dataclass_fields__)
        for key, value in table.items():
            if key not in known:
                raise ConfigError(f"Unknown [search] key: {key}")
            values[key] = value
        values.update({key: value for key, value in overrides.items() if value is not None})
        if "box" not in values:
            values["box"] = tuple(tuple(sorted((0.5 * b, 1.5 * b))) if b else (-1.0, 1.0) for b in m.base)
        return cls(**values)


# -----------------------------------------------------------------------------
# Seeding and Newton refinement


def _hopf_indicator(lp: LinearPart, omegas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed Re Delta_0 at the Im Delta_0 sign change with the smallest |Re|, per grid point."""
    values = _determinant(lp, 0.0, 1j * omegas, outer=True)
    im, re = values.imag, values.real
    crossing = np.signbit(im[..., :-1]) != np.signbit(im[..., 1:])
    weight = im[..., :-1] / (im[..., :-1] - im[..., 1:] + np.where(crossing, 0.0, 1.0))
    re_cross = re[..., :-1] + weight * (re[..., 1:] - re[..., :-1])
    om_cross = omegas[:-1] + weight * (omegas[1:] - omegas[:-1])
    magnitude = np.where(crossing, np.abs(re_cross), np.inf)
    best = np.argmin(magnitude, axis=-1)[..., None]
    found = np.isfinite(np.take_along_axis(magnitude, best, axis=-1))[..., 0]
    indicator = np.where(found, np.take_along_axis(re_cross, best, axis=-1)[..., 0], np.nan)
    omega = np.where(found, np.take_along_axis(om_cross, best, axis=-1)[..., 0], np.nan)
    return indicator, omega


def _changes_sign(corners: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return (np.nanmax(corners, axis=0) > 0) & (np.nanmin(corners, axis=0) < 0)


def _seeds(um: ModelSpec, cfg: SearchConfig) -> dict[int, list[tuple[float, float, float]]]:
    (lo1, hi1), (lo2, hi2) = cfg.box
    axis1 = np.linspace(lo1, hi1, cfg.grid)
    axis2 = np.linspace(lo2, hi2, cfg.grid)
    mu1, mu2 = np.meshgrid(axis1, axis2, indexing="ij")
    lp = linear_part(um, (mu1, mu2))
    omegas = np.linspace(cfg.omega_max / cfg.omega_points, cfg.omega_max, cfg.omega_points)
    hopf, omega = _hopf_indicator(lp, omegas)
    scale = 1.0 + np.linalg.norm(lp.A, axis=(-2, -1)) + np.linalg.norm(lp.B, axis=(-2, -1))

    def cells(values: np.ndarray) -> np.ndarray:
        return np.stack([values[:-1, :-1], values[1:, :-1], values[:-1, 1:], values[1:, 1:]])

    hopf_cells = cells(hopf / scale**2)
    hopf_change = _changes_sign(hopf_cells)
    seeds: dict[int, list[tuple[float, float, float]]] = {}
    for n in cfg.modes:
        turing_cells = cells(_determinant(lp, (n / um.length) ** 2, 0.0).real / scale**2)
        hit = hopf_change & _changes_sign(turing_cells)
        with np.errstate(invalid="ignore"):
            score = np.nanmean(np.abs(hopf_cells), axis=0) + np.nanmean(np.abs(turing_cells), axis=0)
        indices = np.argwhere(hit)
        ranked = sorted(indices.tolist(), key=lambda ij: (score[tuple(ij)], ij))[: cfg.seeds_per_mode]
        found = []
        for i, j in ranked:
            with np.errstate(invalid="ignore"):
                w = np.nanmean(cells(omega)[:, i, j])
            found.append((float(w), 0.5 * (axis1[i] + axis1[i + 1]), 0.5 * (axis2[j] + axis2[j + 1])))
        found.extend(cfg.guesses)
        if found:
            seeds[n] = found
        _LOGGER.debug("Mode %s: %d seed(s)", n, len(found))
    return seeds


def _system(um: ModelSpec, n2: int, x: np.ndarray) -> np.ndarray:
    lp = linear_part(um, (x[1], x[2]))
    scale = lp.scale(n2, um.length) ** 2
    hopf = complex(_determinant(lp, 0.0, 1j * x[0]))
    turing = complex(_determinant(lp, (n2 / um.length) ** 2, 0.0))
    return np.array([hopf.real, hopf.imag, turing.real]) / scale


def _jacobian(um: ModelSpec, n2: int, x: np.ndarray) -> np.ndarray:
    columns = []
    for i in range(3):
        h = _FD_STEP * max(abs(x[i]), 1.0)
        step = np.zeros(3)
        step[i] = h
        columns.append((_system(um, n2, x + step) - _system(um, n2, x - step)) / (2 * h))
    return np.stack(columns, axis=1)


def refine_point(m: ModelSpec, n2: int, guess: Sequence[float], tolerance: float = 1e-9) -> Candidate | None:
    """Damped Newton on (Re Delta_0(i omega), Im Delta_0(i omega), Delta_n2(0)) in (omega, mu1, mu2).

    Returns None when the iteration does not converge to a positive frequency.
    """
    um = unit_delay(m)
    x = np.asarray(guess, dtype=float)
    residual = _system(um, n2, x)
    norm = float(np.linalg.norm(residual))
    for iteration in range(_NEWTON_MAX_ITER):
        if norm <= tolerance * 1e-3:
            break
        try:
            step = np.linalg.solve(_jacobian(um, n2, x), -residual)
        except np.linalg.LinAlgError:
            _LOGGER.debug("Singular Newton Jacobian at %s", x)
            return None
        damping = 1.0
        for _ in range(_NEWTON_HALVINGS):
            trial = x + damping * step
            trial_residual = _system(um, n2, trial)
            trial_norm = float(np.linalg.norm(trial_residual))
            if trial_norm < norm:
                break
            damping /= 2
        else:
            break
        x, residual, norm = trial, trial_residual, trial_norm
        _LOGGER.debug("Newton n2=%s iter=%d residual=%.3e x=%s", n2, iteration, norm, x)
        if np.linalg.norm(damping * step) <= 1e-15 * (1.0 + np.linalg.norm(x)):
            break
    if not np.all(np.isfinite(x)) or norm > tolerance or x[0] <= 0:
        return None
    return Candidate(n2=n2, omega=float(x[0]), mu=(float(x[1]), float(x[2])), residual=norm)


def _in_box(mu: Sequence[float], box) -> bool:
    return all(lo - 1e-9 * (1 + abs(lo)) <= value <= hi + 1e-9 * (1 + abs(hi)) for value, (lo, hi) in zip(mu, box))


def _dedupe(candidates: list[Candidate]) -> list[Candidate]:
    kept: list[Candidate] = []
    for c in sorted(candidates, key=lambda c: (c.n2, c.mu, c.omega)):
        duplicate = any(
            k.n2 == c.n2
            and np.allclose((k.omega,) + k.mu, (c.omega,) + c.mu, rtol=_DEDUPE_TOLERANCE, atol=_DEDUPE_TOLERANCE)
            for k in kept
        )
        if not duplicate:
            kept.append(c)
    return kept


# -----------------------------------------------------------------------------
# Transversality and certification


def transversality(m: ModelSpec, p: TuringHopfPoint, tolerance: float = 1e-9) -> tuple[float, float]:
    """Re dlambda/dmu1 at i omega0 (mode 0) and dlambda/dmu2 at 0 (mode n2)."""
    um = unit_delay(m)
    lp = linear_part(um, p.mu)
    scale = lp.scale(p.n2, p.length)
    results = []
    for n, lam, index in ((0, 1j * p.omega, 1), (p.n2, 0.0, 2)):
        d_lam, *d_mu = _derivatives(lp, (n / p.length) ** 2, lam)
        if abs(d_lam) < tolerance * scale:
            raise SimpleRootViolation(
                f"Critical root of mode {n} is not simple", mode=n, derivative=abs(d_lam), scale=scale
            )
        results.append(-d_mu[index - 1] / d_lam)
    return float(results[0].real), float(results[1].real)


def tail_mode(lp: LinearPart, length: float, delta: float) -> int:
    """Smallest n from which no mode has a root with Re lambda >= -delta."""
    growth = math.exp(delta)
    a_norm = np.linalg.norm(lp.A, 2)
    b_norm = np.linalg.norm(lp.B, 2)
    diffusion = np.diag(lp.D)
    bound = (a_norm + growth * b_norm + delta) / diffusion.min()
    by_norm = math.floor(length * math.sqrt(bound)) + 1

    by_rows = 0
    for i in range(2):
        j = 1 - i
        coupling = abs(lp.A[i, j]) + growth * abs(lp.B[i, j])
        need = (coupling + delta + abs(lp.A[i, i]) + growth * abs(lp.B[i, i])) / diffusion[i]
        by_rows = max(by_rows, math.floor(length * math.sqrt(need)) + 1)
    return min(by_norm, by_rows)


class _Unresolved(Exception):
    pass


def _winding(fn: Callable, left: float, right: float, height: float, floor: float) -> float:
    corners = [complex(left, -height), complex(right, -height), complex(right, height), complex(left, height)]
    edges = [np.linspace(a, b, _EDGE_POINTS, endpoint=False) for a, b in itertools.pairwise(corners + corners[:1])]
    z = np.concatenate(edges + [np.array([corners[0]])])
    values = fn(z)
    while True:
        if np.min(np.abs(values)) <= floor:
            raise _Unresolved
        increments = np.angle(values[1:] / values[:-1])
        coarse = np.flatnonzero(np.abs(increments) > _MAX_PHASE_STEP)
        if coarse.size == 0:
            return float(increments.sum() / (2 * math.pi))
        if z.size + coarse.size > _MAX_CONTOUR_POINTS:
            raise _Unresolved
        middle = 0.5 * (z[coarse] + z[coarse + 1])
        z = np.insert(z, coarse + 1, middle)
        values = np.insert(values, coarse + 1, fn(middle))


def count_roots(lp: LinearPart, n: int, length: float, delta: float, omega: float) -> tuple[int, tuple[float, float]]:
    """Argument-principle count of Delta_n zeros with Re lambda >= -delta.

    The rectangle encloses every such root by the bound
    |lambda| <= ||A|| + e^delta ||B|| + ||K|| + delta.
    """
    k = (n / length) ** 2
    bound = np.linalg.norm(lp.A, 2) + math.exp(delta) * np.linalg.norm(lp.B, 2) + k * np.abs(lp.D).max() + delta
    right = bound + 1.0
    height = max(omega, bound + 1.0)
    fn = char_function(lp, n, length)
    floor = 1e-14 * (1.0 + bound) ** 2
    left = -delta
    for attempt in range(_CONTOUR_NUDGES + 1):
        try:
            winding = _winding(fn, left, right, height, floor)
        except _Unresolved:
            winding = math.nan
        count = round(winding) if math.isfinite(winding) else None
        if count is not None and abs(winding - count) <= _WINDING_SLACK:
            return int(count), (right, height)
        _LOGGER.warning("Contour for mode %s unresolved (winding %s), nudging", n, winding)
        left = -delta * (1.0 + 0.1 * (attempt + 1))
        height += 0.37 * (attempt + 1)
    raise ContourThroughZero(f"Argument principle failed for mode {n}", mode=n, delta=delta)


def certify_spectrum(
    m: ModelSpec,
    p: TuringHopfPoint,
    delta: float = 1e-3,
    n_max: int = 20,
    omega: float = 50.0,
    stop_on_failure: bool = False,
) -> Certification:
    """Per-mode root counts with Re lambda >= -delta for modes 0..n_max.

    Critical modes are counted first.  With ``stop_on_failure`` counting ends at
    the first mode whose count differs from the expected one.
    """
    um = unit_delay(m)
    lp = linear_part(um, p.mu)
    n_tail = tail_mode(lp, p.length, delta)
    if n_tail > n_max + 1:
        raise InconclusiveTailBound(
            f"Modes up to {n_tail - 1} may carry unstable roots; raise n_max", n_max=n_max, n_tail=n_tail
        )
    counts: dict[int, int] = {}
    contours: dict[int, tuple[float, float]] = {}
    order = [0, p.n2] + [n for n in range(n_max + 1) if n not in (0, p.n2)]
    for n in order:
        counts[n], contours[n] = count_roots(lp, n, p.length, delta, omega)
        _LOGGER.debug("Mode %s: %s root(s) with Re >= %s", n, counts[n], -delta)
        if stop_on_failure and counts[n] != _expected_count(n, p.n2):
            break
    return Certification(counts=counts, delta=delta, n_max=n_max, n_tail=n_tail, contours=contours)


def _expected_count(n: int, n2: int) -> int:
    return 2 if n == 0 else 1 if n == n2 else 0


def certified(cert: Certification, n2: int) -> bool:
    return all(count == _expected_count(n, n2) for n, count in cert.counts.items()) and cert.inspected == tuple(
        range(cert.n_max + 1)
    )


# -----------------------------------------------------------------------------
# Location


def _check_candidate(um: ModelSpec, c: Candidate, cfg: SearchConfig) -> TuringHopfPoint:
    lp = linear_part(um, c.mu)
    scale = lp.scale(c.n2, um.length)
    if abs(complex(_determinant(lp, 0.0, 0.0))) <= cfg.tolerance * scale**2:
        raise DegeneratePoint("Mode 0 has a zero root as well", mu=list(c.mu))
    point = TuringHopfPoint(
        mu=c.mu,
        omega=c.omega,
        n2=c.n2,
        length=um.length,
        parameters=um.parameters,
        time_scale=um.time_scale_value(c.mu),
        time_scale_parameter=um.time_scale,
        residuals=(
            abs(complex(_determinant(lp, 0.0, 1j * c.omega))) / scale**2,
            abs(complex(_determinant(lp, (c.n2 / um.length) ** 2, 0.0))) / scale**2,
        ),
    )
    try:
        d_alpha, d_gamma = transversality(um, point, cfg.simple_root_tolerance)
    except SimpleRootViolation as e:
        raise DegeneratePoint("Critical root is not simple", **e.details) from e
    if abs(d_alpha) <= cfg.transversality_tolerance or abs(d_gamma) <= cfg.transversality_tolerance:
        raise TransversalityFailed(
            "Critical roots do not cross transversally", d_alpha=d_alpha, d_gamma=d_gamma, mu=list(c.mu)
        )
    cert = certify_spectrum(um, point, cfg.delta, cfg.certify_n_max, cfg.contour_omega, stop_on_failure=True)
    if not certified(cert, c.n2):
        raise CertificationFailed(
            "Other modes have roots with non-negative real part",
            counts={str(n): count for n, count in cert.counts.items()},
            mu=list(c.mu),
            n2=c.n2,
        )
    return replace(point, d_alpha=d_alpha, d_gamma=d_gamma, certification=cert)


def locate_turing_hopf(m: ModelSpec, search: SearchConfig) -> TuringHopfPoint:
    """Seed on a parameter grid, refine by Newton, then certify; the smallest certified n2 wins."""
    um = unit_delay(m)
    seeds = _seeds(um, search)
    if not seeds:
        raise NoBifurcationFound(
            "No Hopf and Turing sign changes meet inside the box", box=[list(b) for b in search.box]
        )

    refined = []
    for n2, guesses in seeds.items():
        for guess in guesses:
            c = refine_point(um, n2, guess, search.tolerance)
            if c is not None and _in_box(c.mu, search.box):
                refined.append(c)
    candidates = _dedupe(refined)
    if not candidates:
        raise NoBifurcationFound(
            "Newton refinement did not converge from any seed", seeds=sum(map(len, seeds.values()))
        )

    winner: TuringHopfPoint | None = None
    failures: list[TuringHopfError] = []
    reported: list[Candidate] = []
    for c in candidates:
        try:
            point = _check_candidate(um, c, search)
        except (DegeneratePoint, TransversalityFailed, CertificationFailed, ContourThroughZero) as e:
            _LOGGER.debug("Candidate n2=%s mu=%s rejected: %s", c.n2, c.mu, e.code)
            failures.append(e)
            reported.append(Candidate(c.n2, c.omega, c.mu, c.residual, "rejected", e.code))
            continue
        reported.append(Candidate(c.n2, c.omega, c.mu, c.residual, "certified"))
        if winner is None:
            winner = point

    if winner is None:
        first = failures[0]
        first.details["candidates"] = [[c.n2, c.omega, *c.mu, c.error] for c in reported]
        raise first

    _LOGGER.info(
        "Turing-Hopf point at %s=%.6g, %s=%.6g with omega=%.6g (original %.6g), n2=%d",
        winner.parameters[0],
        winner.mu[0],
        winner.parameters[1],
        winner.mu[1],
        winner.omega,
        winner.omega_original,
        winner.n2,
    )
    return replace(winner, candidates=tuple(reported))


def polish_roots(
    fn: Callable[[complex], complex],
    derivative: Callable[[complex], complex],
    region: tuple[float, float, float, float],
    seeds: int = 64,
    rng: np.random.Generator | None = None,
) -> list[complex]:
    """Multi-start damped Newton on a scalar analytic function inside ``region``.

    ``region`` is (re_lo, re_hi, im_lo, im_hi).  Roots are deduplicated and sorted.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    re_lo, re_hi, im_lo, im_hi = region
    starts = rng.uniform(re_lo, re_hi, seeds) + 1j * rng.uniform(im_lo, im_hi, seeds)
    roots: list[complex] = []
    for z in starts:
        z = complex(z)
        value = fn(z)
        for _ in range(100):
            slope = derivative(z)
            if slope == 0:
                break
            step = -value / slope
            damping = 1.0
            while damping > 1e-6:
                trial = z + damping * step
                trial_value = fn(trial)
                if abs(trial_value) < abs(value):
                    break
                damping /= 2
            else:
                break
            z, value = trial, trial_value
            if abs(step) * damping <= 1e-14 * (1 + abs(z)):
                break
        if abs(value) > 1e-9 * (1 + abs(z) ** 2):
            continue
        if not (re_lo <= z.real <= re_hi and im_lo <= z.imag <= im_hi):
            continue
        if not any(abs(z - r) <= 1e-7 * (1 + abs(r)) for r in roots):
            roots.append(z)
    return sorted(roots, key=lambda r: (round(r.real, 9), round(r.imag, 9)))
