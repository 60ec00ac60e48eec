"""Direct simulation of the delayed reaction-diffusion system and pattern classification."""

import logging
import math
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Any

import numpy as np
from scipy import fft, signal
from scipy.linalg import solve_banded

from .errors import BlowUp, ConfigError
from .expr import compile_expr, evaluate
from .model import ModelSpec, linear_part

_LOGGER = logging.getLogger(__name__)

MIN_POINTS = 64
STABILITY_FACTOR = 0.25
BLOWUP_LIMIT = 1e8

TAIL_FRACTION = 0.25
MIN_TAIL_SAMPLES = 20
MODES = 12
MODE_FLOOR = 1e-4
MODE_RATIO = 0.05
STRADDLE = 0.2
STEADY_FLOOR = 1e-6
STEADY_RATIO = 1e-3
PEAK_PROMINENCE = 0.02
SECONDARY_POWER = 0.1
COMMENSURATE_ORDER = 8
COMMENSURATE_TOLERANCE = 0.02

_CONFIG_KEYS = {"n_points", "dt", "dt_max", "t_end", "stride", "perturbation", "delay", "blowup"}


class PatternKind(StrEnum):
    CONSTANT_STEADY = "constant-steady"
    NONCONSTANT_STEADY = "nonconstant-steady"
    HOMOGENEOUS_PERIODIC = "homogeneous-periodic"
    INHOMOGENEOUS_PERIODIC = "inhomogeneous-periodic"
    QUASI_PERIODIC = "quasi-periodic"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class Perturbation:
    """amplitude * shape(k x / l) added to one species."""

    species: str = "u"
    shape: str = "cos"
    k: float = 1.0
    amplitude: float = 5e-3

    def __post_init__(self) -> None:
        if self.species not in ("u", "v"):
            raise ConfigError(f"Unknown species: {self.species}")
        if self.shape not in ("cos", "sin"):
            raise ConfigError(f"Unknown perturbation shape: {self.shape}")

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "Perturbation":
        unknown = set(values) - {"species", "shape", "k", "amplitude"}
        if unknown:
            raise ConfigError(f"Unknown perturbation keys: {sorted(unknown)}")
        try:
            return cls(
                species=str(values.get("species", "u")),
                shape=str(values.get("shape", "cos")),
                k=float(values.get("k", 1.0)),
                amplitude=float(values.get("amplitude", 5e-3)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid perturbation: {e}") from e

    def profile(self, x: np.ndarray, length: float) -> np.ndarray:
        wave = np.cos if self.shape == "cos" else np.sin
        return self.amplitude * wave(self.k * x / length)

    def negated(self) -> "Perturbation":
        return replace(self, amplitude=-self.amplitude)


@dataclass(frozen=True)
class SimConfig:
    """Grid, stepping and initial data for one run (original time units).

    ``initial`` optionally holds absolute values of shape (2, n_points); the
    perturbations are added on top of it (or of the equilibrium).
    """

    n_points: int = 256
    dt: float = 0.01
    t_end: float = 2000.0
    delay: float = 1.0
    stride: int = 25
    perturbations: tuple[Perturbation, ...] = ()
    initial: np.ndarray | None = None
    blowup: float = BLOWUP_LIMIT

    @classmethod
    def from_model(cls, m: ModelSpec, mu: Sequence[float], **overrides: Any) -> "SimConfig":
        """Defaults, then the model's [simulate] table, then ``overrides``.

        The step is the largest ``delay / k`` not above ``dt_max`` unless ``dt`` is given.
        """
        values: dict[str, Any] = {"dt_max": 0.01}
        values.update(m.simulate)
        values.update({key: value for key, value in overrides.items() if value is not None})
        unknown = set(values) - _CONFIG_KEYS - {"initial"}
        if unknown:
            raise ConfigError(f"Unknown simulation settings: {sorted(unknown)}")

        delay = float(values.get("delay", m.delay_value(mu)))
        dt_max = float(values.pop("dt_max"))
        if "dt" not in values:
            if dt_max <= 0 or delay <= 0:
                raise ConfigError("dt_max and the delay must be positive", dt_max=dt_max, delay=delay)
            values["dt"] = delay / math.ceil(delay / dt_max - 1e-9)
        perturbations = tuple(
            p if isinstance(p, Perturbation) else Perturbation.from_dict(p) for p in values.pop("perturbation", ())
        )
        initial = values.pop("initial", None)
        try:
            return cls(
                n_points=int(values.get("n_points", cls.n_points)),
                dt=float(values["dt"]),
                t_end=float(values.get("t_end", cls.t_end)),
                delay=delay,
                stride=int(values.get("stride", cls.stride)),
                perturbations=perturbations,
                initial=None if initial is None else np.asarray(initial, dtype=float),
                blowup=float(values.get("blowup", cls.blowup)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid simulation settings: {e}") from e

    @property
    def lag(self) -> int:
        """Delay in steps; the delay must be a whole number of steps."""
        steps = round(self.delay / self.dt)
        if steps < 1 or abs(steps * self.dt - self.delay) > 1e-9 * max(self.delay, 1.0):
            raise ConfigError("dt must divide the delay exactly", dt=self.dt, delay=self.delay)
        return steps

    def grid(self, length: float) -> np.ndarray:
        return np.linspace(0.0, length * np.pi, self.n_points)

    def initial_state(self, x: np.ndarray, length: float, equilibrium: np.ndarray) -> np.ndarray:
        """Deviation from the equilibrium at t <= 0, shape (2, n_points)."""
        if self.initial is None:
            state = np.zeros((2, x.size))
        else:
            if self.initial.shape != (2, x.size):
                raise ConfigError(
                    "Initial data must have shape (2, n_points)", shape=list(self.initial.shape), n_points=x.size
                )
            state = self.initial - equilibrium[:, None]
        for p in self.perturbations:
            state[0 if p.species == "u" else 1] += p.profile(x, length)
        return state

    def mirrored(self, equilibrium: Sequence[float]) -> "SimConfig":
        """Initial data reflected through the equilibrium."""
        initial = None
        if self.initial is not None:
            initial = 2.0 * np.asarray(equilibrium, dtype=float)[:, None] - self.initial
        return replace(self, perturbations=tuple(p.negated() for p in self.perturbations), initial=initial)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_points": self.n_points,
            "dt": self.dt,
            "t_end": self.t_end,
            "delay": self.delay,
            "stride": self.stride,
            "perturbation": [
                {"species": p.species, "shape": p.shape, "k": p.k, "amplitude": p.amplitude}
                for p in self.perturbations
            ],
            "initial": "array" if self.initial is not None else None,
            "blowup": self.blowup,
        }


@dataclass(frozen=True)
class Trajectory:
    """Recorded snapshots; ``values`` holds absolute (u, v), shape (count, 2, n_points)."""

    times: np.ndarray
    x: np.ndarray
    values: np.ndarray
    equilibrium: tuple[float, float] = (0.0, 0.0)
    dt: float = 0.0
    stride: int = 1
    mu: tuple[float, float] | None = None
    config: Mapping[str, Any] = field(default_factory=dict)

    @property
    def deviations(self) -> np.ndarray:
        return self.values - np.asarray(self.equilibrium)[None, :, None]

    def tail(self, fraction: float = TAIL_FRACTION) -> np.ndarray:
        """Boolean mask of the snapshots in the last ``fraction`` of the horizon."""
        start = self.times[-1] - fraction * (self.times[-1] - self.times[0])
        return self.times >= start


class _CrankNicolson:
    """Banded (I - r Lap) solve with ghost-node Neumann ends."""

    def __init__(self, diffusion: float, h: float, dt: float, n: int) -> None:
        self.ratio = dt * diffusion / (2.0 * h * h)
        self.dt = dt
        banded = np.zeros((3, n))
        banded[0, 1:] = -self.ratio
        banded[0, 1] = -2.0 * self.ratio
        banded[1, :] = 1.0 + 2.0 * self.ratio
        banded[2, :-1] = -self.ratio
        banded[2, -2] = -2.0 * self.ratio
        self.banded = banded

    def step(self, u: np.ndarray, forcing: np.ndarray) -> np.ndarray:
        lap = np.empty_like(u)
        lap[1:-1] = u[:-2] - 2.0 * u[1:-1] + u[2:]
        lap[0] = 2.0 * (u[1] - u[0])
        lap[-1] = 2.0 * (u[-2] - u[-1])
        rhs = u + self.ratio * lap + self.dt * forcing
        return solve_banded((1, 1), self.banded, rhs, check_finite=False)


def _check_step(m: ModelSpec, mu: Sequence[float], cfg: SimConfig) -> None:
    if cfg.n_points < MIN_POINTS:
        raise ConfigError(f"n_points must be at least {MIN_POINTS}", n_points=cfg.n_points)
    if cfg.t_end <= 0 or cfg.stride < 1:
        raise ConfigError("t_end and stride must be positive", t_end=cfg.t_end, stride=cfg.stride)
    lp = linear_part(m, mu)
    norm = float(np.linalg.norm(np.hstack([lp.A, lp.B]), 2))
    if norm > 0 and cfg.dt > STABILITY_FACTOR / norm:
        raise ConfigError(
            "dt exceeds the explicit reaction bound", dt=cfg.dt, bound=STABILITY_FACTOR / norm, jacobian_norm=norm
        )


def run(m: ModelSpec, mu: Sequence[float], cfg: SimConfig) -> Trajectory:
    """Integrate the model in its own time units at parameters ``mu``.

    Diffusion is Crank-Nicolson, reactions are explicit, and delayed arguments
    come from a ring buffer holding the last ``cfg.lag`` states.
    """
    mu = (float(mu[0]), float(mu[1]))
    lag = cfg.lag
    _check_step(m, mu, cfg)

    x = cfg.grid(m.length)
    n = x.size
    equilibrium = np.asarray(m.equilibrium, dtype=float)
    state = cfg.initial_state(x, m.length, equilibrium)
    bindings = m.bindings(mu)
    solvers = [_CrankNicolson(float(evaluate(d, bindings)), x[1] - x[0], cfg.dt, n) for d in m.diffusion]
    reactions = [compile_expr(f) for f in m.reactions]
    history = np.repeat(state[None], lag, axis=0)

    steps = round(cfg.t_end / cfg.dt)
    count = steps // cfg.stride + 1
    times = np.arange(count) * cfg.stride * cfg.dt
    values = np.empty((count, 2, n))
    values[0] = state + equilibrium[:, None]
    _LOGGER.debug("Simulating %d steps (lag %d, N=%d) at mu=%s", steps, lag, n, mu)

    started = time.monotonic()
    with np.errstate(all="ignore"):
        for step in range(steps):
            slot = step % lag
            delayed = history[slot]
            bindings.update(u=state[0], v=state[1], u_tau=delayed[0], v_tau=delayed[1])
            forcing = [np.broadcast_to(reaction(bindings), (n,)) for reaction in reactions]
            history[slot] = state
            state = np.stack([solver.step(state[i], forcing[i]) for i, solver in enumerate(solvers)])

            peak = float(np.abs(state + equilibrium[:, None]).max())
            if not peak <= cfg.blowup:
                raise BlowUp("Solution left the finite range", t=(step + 1) * cfg.dt, step=step + 1, peak=peak)
            if (step + 1) % cfg.stride == 0:
                values[(step + 1) // cfg.stride] = state + equilibrium[:, None]

    _LOGGER.debug("Simulation finished in %.1fs", time.monotonic() - started)
    return Trajectory(
        times=times,
        x=x,
        values=values,
        equilibrium=(float(equilibrium[0]), float(equilibrium[1])),
        dt=cfg.dt,
        stride=cfg.stride,
        mu=mu,
        config=cfg.to_dict(),
    )


# -----------------------------------------------------------------------------
# Pattern analysis


@dataclass(frozen=True)
class PatternReport:
    kind: PatternKind
    dominant_mode: int
    dominant_amplitude: float
    dominant_coefficient: float
    mode_amplitudes: tuple[float, ...]
    frequencies: tuple[float, ...]
    periods: tuple[float, ...]
    tail: tuple[float, float]
    samples: int
    notes: tuple[str, ...] = ()


def mode_coefficients(values: np.ndarray, modes: int = MODES) -> np.ndarray:
    """Cosine coefficients a_k of samples on the closed grid, k = 0..modes, along the last axis."""
    points = values.shape[-1] - 1
    coefficients = fft.dct(values, type=1, axis=-1) / points
    coefficients[..., 0] /= 2.0
    return coefficients[..., : modes + 1]


def _straddles(value: float, threshold: float) -> bool:
    return (1.0 - STRADDLE) * threshold <= value <= (1.0 + STRADDLE) * threshold


def _spectral_peaks(series: np.ndarray, spacing: float) -> list[tuple[float, float]]:
    """(frequency, power) of the spectral peaks of ``series``, strongest first."""
    centered = series - series.mean()
    windowed = centered * signal.get_window("hann", centered.size)
    power = np.abs(fft.rfft(windowed)) ** 2
    if power.max() <= 0:
        return []
    indices, _ = signal.find_peaks(power, prominence=PEAK_PROMINENCE * power.max())
    peaks = []
    for i in indices:
        left, mid, right = np.log(power[i - 1 : i + 2] + 1e-300)
        curvature = left - 2.0 * mid + right
        offset = 0.5 * (left - right) / curvature if curvature < 0 else 0.0
        peaks.append(((i + offset) / (centered.size * spacing), float(power[i])))
    return sorted(peaks, key=lambda peak: -peak[1])


def commensurate(
    f1: float, f2: float, order: int = COMMENSURATE_ORDER, tolerance: float = COMMENSURATE_TOLERANCE
) -> bool:
    """True when p f1 = q f2 within ``tolerance`` for some 1 <= p, q <= order."""
    scale = tolerance * max(f1, f2)
    return any(abs(p * f1 - q * f2) <= scale for p in range(1, order + 1) for q in range(1, order + 1))


def analyze_pattern(tr: Trajectory, modes: int = MODES, fraction: float = TAIL_FRACTION) -> PatternReport:
    """Classify the tail of a trajectory by its cosine-mode content and spectrum."""
    mask = tr.tail(fraction)
    samples = int(mask.sum())
    if samples < MIN_TAIL_SAMPLES:
        raise ConfigError(f"Tail window holds {samples} samples, need {MIN_TAIL_SAMPLES}", samples=samples)
    tail_times = tr.times[mask]
    coefficients = mode_coefficients(tr.deviations[mask], modes)  # (samples, 2, modes + 1)
    amplitudes = np.sqrt((coefficients**2).sum(axis=1)).mean(axis=0)

    notes: list[str] = []
    dominant = 1 + int(np.argmax(amplitudes[1:]))
    threshold = max(MODE_FLOOR, MODE_RATIO * amplitudes[0])
    inhomogeneous = amplitudes[dominant] > threshold
    if _straddles(amplitudes[dominant], threshold):
        notes.append(f"mode {dominant} amplitude {amplitudes[dominant]:.3e} straddles threshold {threshold:.3e}")

    # The most active coefficient drives the temporal test; the Turing mode can be nearly steady
    # while mode 0 oscillates.
    spread = coefficients.std(axis=0)
    species, mode = np.unravel_index(int(np.argmax(spread)), spread.shape)
    level = float(np.abs(coefficients.mean(axis=0)).max())
    steady_threshold = STEADY_FLOOR + STEADY_RATIO * level
    oscillation = float(spread[species, mode])
    steady = oscillation <= steady_threshold
    if _straddles(oscillation, steady_threshold):
        notes.append(f"oscillation {oscillation:.3e} straddles steady threshold {steady_threshold:.3e}")

    frequencies: tuple[float, ...] = ()
    quasi = False
    if not steady:
        spacing = float(np.mean(np.diff(tail_times)))
        peaks = _spectral_peaks(coefficients[:, species, mode], spacing)
        if not peaks:
            notes.append("no spectral peak in an oscillating tail")
        else:
            base, power = peaks[0]
            frequencies = (2.0 * np.pi * base,)
            for other, other_power in peaks[1:]:
                if other_power >= SECONDARY_POWER * power and not commensurate(base, other):
                    frequencies = (2.0 * np.pi * base, 2.0 * np.pi * other)
                    quasi = True
                    break

    if notes:
        _LOGGER.warning("Pattern undecided: %s", "; ".join(notes))
        kind = PatternKind.UNDECIDED
    elif steady:
        kind = PatternKind.NONCONSTANT_STEADY if inhomogeneous else PatternKind.CONSTANT_STEADY
    elif quasi:
        kind = PatternKind.QUASI_PERIODIC
    else:
        kind = PatternKind.INHOMOGENEOUS_PERIODIC if inhomogeneous else PatternKind.HOMOGENEOUS_PERIODIC

    report = PatternReport(
        kind=kind,
        dominant_mode=dominant,
        dominant_amplitude=float(amplitudes[dominant]),
        dominant_coefficient=float(coefficients[:, 0, dominant].mean()),
        mode_amplitudes=tuple(float(a) for a in amplitudes),
        frequencies=tuple(float(f) for f in frequencies),
        periods=tuple(float(2.0 * np.pi / f) for f in frequencies),
        tail=(float(tail_times[0]), float(tail_times[-1])),
        samples=samples,
        notes=tuple(notes),
    )
    _LOGGER.debug(
        "Pattern %s: dominant mode %d (%.3e), frequencies %s", kind, dominant, amplitudes[dominant], frequencies
    )
    return report


def mirror_mismatch(primary: Trajectory, mirror: Trajectory, mode: int, fraction: float = TAIL_FRACTION) -> float:
    """Largest |a_mode + a'_mode| of the u coefficients over the tail, relative to max |a_mode|."""
    mask = primary.tail(fraction)
    a = mode_coefficients(primary.deviations[mask, 0], mode)[:, mode]
    b = mode_coefficients(mirror.deviations[mask, 0], mode)[:, mode]
    scale = float(np.abs(a).max())
    if scale == 0.0:
        return float(np.abs(b).max())
    return float(np.abs(a + b).max()) / scale


# -----------------------------------------------------------------------------
# Concurrent runs


def sweep(
    m: ModelSpec, jobs: Sequence[tuple[Sequence[float], SimConfig]], workers: int = 1
) -> list[Trajectory]:
    """Run independent simulations, in job order.

    With more than one worker the jobs go to spawned processes that rebuild the
    model from ``m.source``.
    """
    if workers <= 1 or len(jobs) <= 1 or m.source is None:
        return [run(m, mu, cfg) for mu, cfg in jobs]
    from .worker import run_jobs

    return run_jobs(m.source, list(jobs), workers)


def mirrored_pair(
    m: ModelSpec, mu: Sequence[float], cfg: SimConfig, workers: int = 1
) -> tuple[Trajectory, Trajectory]:
    """A run and the run from initial data reflected through the equilibrium."""
    primary, mirror = sweep(m, [(mu, cfg), (mu, cfg.mirrored(m.equilibrium))], workers)
    return primary, mirror
