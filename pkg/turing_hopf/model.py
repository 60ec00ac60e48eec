"""Model specification, linearization and derivative bundle."""

import itertools
import logging
import tomllib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    DomainError,
    EquilibriumViolation,
    ModelParseError,
    NonPositiveDiffusion,
    NotApplicable,
)
from .expr import (
    STATE_SYMBOLS,
    Const,
    Expr,
    Sym,
    differentiate,
    differentiate_path,
    evaluate,
    parse,
    substitute,
    symbols,
)

_LOGGER = logging.getLogger(__name__)

EQUILIBRIUM_TOLERANCE = 1e-10
_SAMPLE_OFFSETS = (-1.0, 0.0, 1.0)


class DelayMode(StrEnum):
    UNIT = "unit"
    PARAMETER = "parameter"


@dataclass(frozen=True)
class ModelSpec:
    """Two-component delayed reaction-diffusion system on (0, l*pi) with Neumann ends.

    Reactions are written in (u, v, u_tau, v_tau) with the equilibrium at the origin.
    """

    reactions: tuple[Expr, Expr]
    diffusion: tuple[Expr, Expr]
    parameters: tuple[str, str]
    base: tuple[float, float]
    length: float
    constants: Mapping[str, float] = field(default_factory=dict)
    delay: DelayMode = DelayMode.UNIT
    delay_parameter: str | None = None
    time_scale: str | None = None
    equilibrium: tuple[float, float] = (0.0, 0.0)
    search: Mapping[str, Any] = field(default_factory=dict)
    simulate: Mapping[str, Any] = field(default_factory=dict)
    source: str | None = None

    @property
    def symbol_table(self) -> tuple[str, ...]:
        return STATE_SYMBOLS + self.parameters + tuple(self.constants)

    def bindings(self, mu: Sequence, state: Mapping[str, Any] | None = None) -> dict[str, Any]:
        """Constants, parameter values and state values (origin by default)."""
        values: dict[str, Any] = dict(self.constants)
        values.update(zip(self.parameters, mu))
        values.update(dict.fromkeys(STATE_SYMBOLS, 0.0))
        if state:
            values.update(state)
        return values

    def parameter_value(self, name: str | None, mu: Sequence) -> float:
        """Value of a named parameter or constant at ``mu``; 1 when ``name`` is None."""
        if name is None:
            return 1.0
        if name in self.parameters:
            return float(mu[self.parameters.index(name)])
        return float(self.constants[name])

    def delay_value(self, mu: Sequence) -> float:
        """The delay in this model's own time unit."""
        if self.delay is DelayMode.UNIT:
            return 1.0
        return self.parameter_value(self.delay_parameter, mu)

    def time_scale_value(self, mu: Sequence) -> float:
        return self.parameter_value(self.time_scale, mu)

    def partial(self, component: int, path: Sequence[str]) -> Expr:
        """Mixed partial of reaction ``component`` along ``path`` (order as given)."""
        return differentiate_path(self.reactions[component], path)

    @cached_property
    def _linear_exprs(self) -> dict[str, list[list[Expr]]]:
        a = [[differentiate(f, x) for x in STATE_SYMBOLS[:2]] for f in self.reactions]
        b = [[differentiate(f, x) for x in STATE_SYMBOLS[2:]] for f in self.reactions]
        d = [[self.diffusion[0], Const(0.0)], [Const(0.0), self.diffusion[1]]]
        return {"A": a, "B": b, "D": d}

    @cached_property
    def _parameter_exprs(self) -> dict[str, list[list[list[Expr]]]]:
        return {
            key: [[[differentiate(e, p) for e in row] for row in rows] for p in self.parameters]
            for key, rows in self._linear_exprs.items()
        }

    @cached_property
    def _jet(self) -> dict[tuple[int, tuple[int, ...]], Expr]:
        """Reaction derivatives of orders 1-3 keyed by sorted state-index tuples."""
        jet: dict[tuple[int, tuple[int, ...]], Expr] = {}
        for component, reaction in enumerate(self.reactions):
            for order in (1, 2, 3):
                for index in itertools.combinations_with_replacement(range(4), order):
                    parent = reaction if order == 1 else jet[(component, index[:-1])]
                    jet[(component, index)] = differentiate(parent, STATE_SYMBOLS[index[-1]])
        return jet


@dataclass(frozen=True)
class LinearPart:
    """A (instantaneous), B (delayed), D (diffusion) and their parameter derivatives.

    ``dA[i]`` is the derivative with respect to the i-th bifurcation parameter.
    Arrays carry leading axes when evaluated on a parameter grid.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    dA: np.ndarray
    dB: np.ndarray
    dD: np.ndarray

    def scale(self, n: int, length: float) -> float:
        """Magnitude used by scale-relative tolerances."""
        k = (n / length) ** 2
        return 1.0 + _norm(self.A) + _norm(self.B) + _norm(self.D) * k

    def modal(self, n: int, length: float) -> np.ndarray:
        """(n/l)^2 D, the diffusion contribution of cosine mode n."""
        return (n / length) ** 2 * self.D


@dataclass(frozen=True)
class DerivativeBundle:
    """Reaction partials of orders 1-3 in x = (u, v, u_tau, v_tau) at the origin."""

    first: np.ndarray
    second: np.ndarray
    third: np.ndarray
    linear: LinearPart
    mu: tuple[float, float]


def _norm(matrix: np.ndarray) -> float:
    return float(np.linalg.norm(matrix, 2))


def _matrix(rows: list[list[Expr]], bindings: Mapping[str, Any]) -> np.ndarray:
    values = [[evaluate(e, bindings) for e in row] for row in rows]
    shape = np.broadcast_shapes(*(np.shape(value) for row in values for value in row))
    out = np.empty(shape + (2, 2))
    for i, j in itertools.product(range(2), range(2)):
        out[..., i, j] = values[i][j]
    return out


def linear_part(m: ModelSpec, mu: Sequence) -> LinearPart:
    """Linearization at the origin; ``mu`` entries may be arrays of equal shape."""
    bindings = m.bindings(mu)
    exprs = m._linear_exprs
    derivatives = m._parameter_exprs
    return LinearPart(
        A=_matrix(exprs["A"], bindings),
        B=_matrix(exprs["B"], bindings),
        D=_matrix(exprs["D"], bindings),
        dA=np.stack([_matrix(rows, bindings) for rows in derivatives["A"]], axis=-3),
        dB=np.stack([_matrix(rows, bindings) for rows in derivatives["B"]], axis=-3),
        dD=np.stack([_matrix(rows, bindings) for rows in derivatives["D"]], axis=-3),
    )


def derivative_bundle(m: ModelSpec, mu0: Sequence) -> DerivativeBundle:
    bindings = m.bindings(mu0)
    tensors = [np.zeros((2,) + (4,) * order) for order in (1, 2, 3)]
    for (component, index), e in m._jet.items():
        value = evaluate(e, bindings)
        for permuted in set(itertools.permutations(index)):
            tensors[len(index) - 1][(component,) + permuted] = value
    _LOGGER.debug("Derivative bundle at mu=%s: %d symbolic partials", tuple(mu0), len(m._jet))
    return DerivativeBundle(
        first=tensors[0],
        second=tensors[1],
        third=tensors[2],
        linear=linear_part(m, mu0),
        mu=(float(mu0[0]), float(mu0[1])),
    )


def rescale_delay(m: ModelSpec) -> ModelSpec:
    """Rescale time by the delay so the delay becomes 1 (t -> t/tau).

    Reactions and diffusions are multiplied by the delay symbol, which stays a
    bifurcation parameter.
    """
    if m.delay is not DelayMode.PARAMETER:
        raise NotApplicable("Model already has a unit delay")
    tau = Sym(m.delay_parameter)
    return replace(
        m,
        reactions=tuple(tau * f for f in m.reactions),
        diffusion=tuple(tau * d for d in m.diffusion),
        delay=DelayMode.UNIT,
        delay_parameter=None,
        time_scale=m.delay_parameter,
    )


def unit_delay(m: ModelSpec) -> ModelSpec:
    """The unit-delay form of ``m`` (rescaled when the delay is a parameter)."""
    return rescale_delay(m) if m.delay is DelayMode.PARAMETER else m


# -----------------------------------------------------------------------------
# Model files


def embedded_model_text() -> str:
    """The bundled Holling-Tanner model file."""
    return (resources.files("turing_hopf") / "data" / "holling_tanner.toml").read_text(encoding="utf-8")


def load_model_file(path: str | Path | None) -> ModelSpec:
    if path is None:
        return load_model(embedded_model_text())
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ModelParseError(f"Cannot read model file: {e}", path=str(path)) from e
    return load_model(text)


def _table(doc: Mapping[str, Any], key: str, required: bool = True) -> Mapping[str, Any]:
    value = doc.get(key)
    if value is None:
        if required:
            raise ModelParseError(f"Missing [{key}] table")
        return {}
    if not isinstance(value, dict):
        raise ModelParseError(f"[{key}] must be a table")
    return value


def _number(table: Mapping[str, Any], key: str, where: str) -> float:
    value = table.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelParseError(f"{where}.{key} must be a number")
    return float(value)


def _expression(table: Mapping[str, Any], key: str, declared: Sequence[str]) -> Expr:
    text = table.get(key)
    if not isinstance(text, str):
        raise ModelParseError(f"model.{key} must be an expression string")
    return parse(text, declared)


def load_model(text: str) -> ModelSpec:
    """Parse and validate a TOML model file."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ModelParseError(f"Invalid TOML: {e}") from e

    model = _table(doc, "model")
    parameter_table = _table(doc, "parameters")
    constant_table = _table(doc, "constants", required=False)
    delay_table = _table(doc, "delay", required=False)

    if len(parameter_table) != 2:
        raise ModelParseError("[parameters] must name exactly two bifurcation parameters")
    parameters = tuple(parameter_table)
    base = tuple(_number(parameter_table, name, "parameters") for name in parameters)
    constants = {name: _number(constant_table, name, "constants") for name in constant_table}
    overlap = set(parameters) & (set(constants) | set(STATE_SYMBOLS))
    if overlap:
        raise ModelParseError(f"Names declared twice: {sorted(overlap)}")

    length = _number(model, "l", "model")
    if length <= 0:
        raise ModelParseError("model.l must be positive")

    try:
        delay = DelayMode(delay_table.get("mode", DelayMode.UNIT))
    except ValueError as e:
        raise ModelParseError(f"Unknown delay mode: {delay_table.get('mode')}") from e
    delay_parameter = delay_table.get("parameter")
    if delay is DelayMode.PARAMETER and delay_parameter not in parameters + tuple(constants):
        raise ModelParseError("delay.parameter must name a declared parameter or constant")

    declared = STATE_SYMBOLS + parameters + tuple(constants)
    reactions = (_expression(model, "f", declared), _expression(model, "g", declared))
    diffusion = (_expression(model, "d1", declared), _expression(model, "d2", declared))
    for d in diffusion:
        if symbols(d) & set(STATE_SYMBOLS):
            raise ModelParseError("Diffusion coefficients may not depend on the state")

    equilibrium = (0.0, 0.0)
    shift_table = _table(doc, "shift", required=False)
    if shift_table:
        reactions, equilibrium = _apply_shift(reactions, shift_table, declared, parameters, constants)

    spec = ModelSpec(
        reactions=reactions,
        diffusion=diffusion,
        parameters=parameters,
        base=base,
        length=length,
        constants=constants,
        delay=delay,
        delay_parameter=delay_parameter if delay is DelayMode.PARAMETER else None,
        equilibrium=equilibrium,
        search=_table(doc, "search", required=False),
        simulate=_table(doc, "simulate", required=False),
        source=text,
    )
    validate_model(spec)
    _LOGGER.debug("Loaded model with parameters %s, l=%s, delay=%s", parameters, length, delay)
    return spec


def _apply_shift(reactions, shift_table, declared, parameters, constants):
    offsets = {}
    for species in ("u", "v"):
        e = _expression(shift_table, species, declared)
        moving = symbols(e) & (set(parameters) | set(STATE_SYMBOLS))
        if moving:
            raise EquilibriumViolation(
                "Equilibrium shift must not depend on bifurcation parameters or state",
                species=species,
                symbols=sorted(moving),
            )
        offsets[species] = evaluate(e, constants)
    mapping = {
        "u": Sym("u") + Const(offsets["u"]),
        "u_tau": Sym("u_tau") + Const(offsets["u"]),
        "v": Sym("v") + Const(offsets["v"]),
        "v_tau": Sym("v_tau") + Const(offsets["v"]),
    }
    shifted = tuple(substitute(f, mapping) for f in reactions)
    return shifted, (offsets["u"], offsets["v"])


def _sample_box(base: Sequence[float]) -> list[tuple[float, float]]:
    steps = [0.1 * abs(value) if value != 0 else 0.1 for value in base]
    return [
        (base[0] + i * steps[0], base[1] + j * steps[1])
        for i, j in itertools.product(_SAMPLE_OFFSETS, _SAMPLE_OFFSETS)
    ]


def validate_model(m: ModelSpec) -> None:
    """Origin is an equilibrium and diffusions are positive across a box of 9 parameter samples."""
    for mu in _sample_box(m.base):
        bindings = m.bindings(mu)
        for index, d in enumerate(m.diffusion, start=1):
            value = evaluate(d, bindings)
            if not value > 0:
                raise NonPositiveDiffusion(f"d{index} must be positive", mu=list(mu), value=value)
        for name, f in zip(("f", "g"), m.reactions):
            try:
                value = evaluate(f, bindings)
            except DomainError as e:
                raise EquilibriumViolation(
                    f"{name} is undefined at the origin: {e.message}", mu=list(mu)
                ) from e
            if abs(value) > EQUILIBRIUM_TOLERANCE:
                raise EquilibriumViolation(
                    f"Origin is not an equilibrium: {name} = {value:.3e}", mu=list(mu), value=value
                )
