"""Reaction and diffusion expressions: parser, evaluator and symbolic derivatives."""

import logging
import math
import re
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from functools import singledispatch

import numpy as np

from .errors import DomainError, ExpressionSyntaxError, UnknownSymbol

_LOGGER = logging.getLogger(__name__)

STATE_SYMBOLS = ("u", "v", "u_tau", "v_tau")
FUNCTIONS = ("exp", "ln", "sin", "cos", "sqrt")

Bindings = Mapping[str, float | np.ndarray]


class Expr:
    """Immutable expression node.

    The operators build simplified trees (constant folding and 0/1 identities),
    the parser builds trees exactly as written.
    """

    precedence = 5

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __str__(self) -> str:
        return serialize(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    @property
    def precedence(self) -> int:
        return 3 if math.copysign(1.0, self.value) < 0 else 5


@dataclass(frozen=True)
class Sym(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    precedence = 3


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr
    precedence = 1
    op = "+"


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr
    precedence = 1
    op = "-"


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr
    precedence = 2
    op = "*"


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr
    precedence = 2
    op = "/"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    precedence = 4


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr


ZERO = Const(0.0)
ONE = Const(1.0)


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(float(value))


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -----------------------------------------------------------------------------
# Simplifying constructors


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(base: Expr, exponent: int) -> Expr:
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if _is_const(base) and (base.value != 0.0 or exponent > 0):
        return Const(base.value**exponent)
    return Pow(base, exponent)


def func(name: str, arg: Expr) -> Expr:
    if _is_const(arg):
        try:
            return Const(float(_FUNCTION_TABLE[name](arg.value)))
        except DomainError:
            pass
    return Func(name, arg)


# -----------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"Unexpected character {text[start]!r}", _byte_offset(text, start))
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), _byte_offset(text, match.start(kind))))
        pos = match.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


class _Parser:
    """Recursive-descent parser over the infix grammar."""

    def __init__(self, text: str, symbols: Iterable[str] | None) -> None:
        self.tokens = _tokenize(text)
        self.index = 0
        self.symbols = None if symbols is None else frozenset(symbols)

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def accept(self, *ops: str) -> _Token | None:
        if self.current.kind == "op" and self.current.text in ops:
            return self.advance()
        return None

    def expect(self, op: str) -> None:
        if self.accept(op) is None:
            raise ExpressionSyntaxError(f"Expected {op!r}", self.current.offset)

    def parse(self) -> Expr:
        e = self.expression()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(f"Unexpected token {self.current.text!r}", self.current.offset)
        return e

    def expression(self) -> Expr:
        e = self.term()
        while (token := self.accept("+", "-")) is not None:
            right = self.term()
            e = Add(e, right) if token.text == "+" else Sub(e, right)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while (token := self.accept("*", "/")) is not None:
            right = self.unary()
            e = Mul(e, right) if token.text == "*" else Div(e, right)
        return e

    def unary(self) -> Expr:
        if self.accept("-") is not None:
            return Neg(self.unary())
        if self.accept("+") is not None:
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^", "**") is None:
            return base
        sign = -1 if self.accept("-") is not None else 1
        if sign == 1:
            self.accept("+")
        token = self.current
        if token.kind != "num" or not token.text.isdigit():
            raise ExpressionSyntaxError("Exponent must be an integer literal", token.offset)
        self.advance()
        return Pow(base, sign * int(token.text))

    def atom(self) -> Expr:
        token = self.current
        if token.kind == "num":
            self.advance()
            return Const(float(token.text))
        if token.kind == "name":
            self.advance()
            if self.accept("(") is not None:
                if token.text not in FUNCTIONS:
                    raise ExpressionSyntaxError(f"Unknown function {token.text!r}", token.offset)
                arg = self.expression()
                self.expect(")")
                return Func(token.text, arg)
            if token.text in FUNCTIONS:
                raise ExpressionSyntaxError(f"Function {token.text!r} needs an argument", token.offset)
            if self.symbols is not None and token.text not in self.symbols:
                raise UnknownSymbol(token.text, token.offset)
            return Sym(token.text)
        if self.accept("(") is not None:
            e = self.expression()
            self.expect(")")
            return e
        if token.kind == "end":
            raise ExpressionSyntaxError("Unexpected end of input", token.offset)
        raise ExpressionSyntaxError(f"Unexpected token {token.text!r}", token.offset)


def parse(text: str, symbols: Iterable[str] | None = None) -> Expr:
    """Parse an infix expression; when ``symbols`` is given every name must be declared in it."""
    return _Parser(text, symbols).parse()


# -----------------------------------------------------------------------------
# Serialization


def serialize(e: Expr) -> str:
    """Render ``e`` with the minimum parentheses that parse back to the same tree."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({serialize(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, e.arg.precedence < Neg.precedence)
    if isinstance(e, Pow):
        return f"{_wrap(e.base, e.base.precedence < 5)}^{e.exponent}"
    left = _wrap(e.left, e.left.precedence < e.precedence)
    right = _wrap(e.right, e.right.precedence <= e.precedence)
    return f"{left} {e.op} {right}"


def _wrap(e: Expr, needed: bool) -> str:
    text = serialize(e)
    return f"({text})" if needed else text


# -----------------------------------------------------------------------------
# Structure


@singledispatch
def symbols(e: Expr) -> frozenset[str]:
    """Names referenced by ``e``."""
    raise TypeError(f"Not an expression: {e!r}")


@symbols.register
def _(e: Const) -> frozenset[str]:
    return frozenset()


@symbols.register
def _(e: Sym) -> frozenset[str]:
    return frozenset((e.name,))


@symbols.register(Neg)
@symbols.register(Func)
def _(e) -> frozenset[str]:
    return symbols(e.arg)


@symbols.register
def _(e: Pow) -> frozenset[str]:
    return symbols(e.base)


@symbols.register(Add)
@symbols.register(Sub)
@symbols.register(Mul)
@symbols.register(Div)
def _(e) -> frozenset[str]:
    return symbols(e.left) | symbols(e.right)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace symbols by expressions, simplifying as the tree is rebuilt."""
    if isinstance(e, Sym):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, Func):
        return func(e.name, substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return power(substitute(e.base, mapping), e.exponent)
    left, right = substitute(e.left, mapping), substitute(e.right, mapping)
    return _BINARY_BUILDERS[type(e)](left, right)


_BINARY_BUILDERS = {Add: add, Sub: sub, Mul: mul, Div: div}


# -----------------------------------------------------------------------------
# Differentiation


@singledispatch
def differentiate(e: Expr, sym: str) -> Expr:
    """Exact derivative of ``e`` with respect to ``sym``."""
    raise TypeError(f"Not an expression: {e!r}")


@differentiate.register
def _(e: Const, sym: str) -> Expr:
    return ZERO


@differentiate.register
def _(e: Sym, sym: str) -> Expr:
    return ONE if e.name == sym else ZERO


@differentiate.register
def _(e: Neg, sym: str) -> Expr:
    return neg(differentiate(e.arg, sym))


@differentiate.register
def _(e: Add, sym: str) -> Expr:
    return add(differentiate(e.left, sym), differentiate(e.right, sym))


@differentiate.register
def _(e: Sub, sym: str) -> Expr:
    return sub(differentiate(e.left, sym), differentiate(e.right, sym))


@differentiate.register
def _(e: Mul, sym: str) -> Expr:
    return add(
        mul(differentiate(e.left, sym), e.right),
        mul(e.left, differentiate(e.right, sym)),
    )


@differentiate.register
def _(e: Div, sym: str) -> Expr:
    da = differentiate(e.left, sym)
    db = differentiate(e.right, sym)
    if _is_const(db, 0.0):
        return div(da, e.right)
    return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))


@differentiate.register
def _(e: Pow, sym: str) -> Expr:
    db = differentiate(e.base, sym)
    if _is_const(db, 0.0):
        return ZERO
    return mul(mul(Const(float(e.exponent)), power(e.base, e.exponent - 1)), db)


@differentiate.register
def _(e: Func, sym: str) -> Expr:
    da = differentiate(e.arg, sym)
    if _is_const(da, 0.0):
        return ZERO
    match e.name:
        case "exp":
            outer = e
        case "ln":
            return div(da, e.arg)
        case "sin":
            outer = func("cos", e.arg)
        case "cos":
            outer = neg(func("sin", e.arg))
        case "sqrt":
            return div(da, mul(Const(2.0), e))
        case _:
            raise TypeError(f"Unknown function {e.name}")
    return mul(outer, da)


def differentiate_path(e: Expr, path: Iterable[str]) -> Expr:
    """Mixed partial derivative taken in the order given by ``path``."""
    for sym in path:
        e = differentiate(e, sym)
    return e


# -----------------------------------------------------------------------------
# Evaluation


def _checked_log(x):
    if np.any(np.asarray(x) <= 0):
        raise DomainError("ln of a non-positive value")
    return np.log(x)


def _checked_sqrt(x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("sqrt of a negative value")
    return np.sqrt(x)


_FUNCTION_TABLE: dict[str, Callable] = {
    "exp": np.exp,
    "ln": _checked_log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": _checked_sqrt,
}

_UNCHECKED_TABLE: dict[str, Callable] = {
    "exp": np.exp,
    "ln": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
}


@singledispatch
def _eval(e: Expr, b: Bindings):
    raise TypeError(f"Not an expression: {e!r}")


@_eval.register
def _(e: Const, b: Bindings):
    return e.value


@_eval.register
def _(e: Sym, b: Bindings):
    try:
        return b[e.name]
    except KeyError:
        raise UnknownSymbol(e.name) from None


@_eval.register
def _(e: Neg, b: Bindings):
    return -_eval(e.arg, b)


@_eval.register
def _(e: Add, b: Bindings):
    return _eval(e.left, b) + _eval(e.right, b)


@_eval.register
def _(e: Sub, b: Bindings):
    return _eval(e.left, b) - _eval(e.right, b)


@_eval.register
def _(e: Mul, b: Bindings):
    return _eval(e.left, b) * _eval(e.right, b)


@_eval.register
def _(e: Div, b: Bindings):
    denominator = _eval(e.right, b)
    if np.any(np.asarray(denominator) == 0):
        raise DomainError("division by zero", expression=serialize(e))
    return _eval(e.left, b) / denominator


@_eval.register
def _(e: Pow, b: Bindings):
    base = _eval(e.base, b)
    if e.exponent < 0:
        if np.any(np.asarray(base) == 0):
            raise DomainError("zero raised to a negative power", expression=serialize(e))
        return 1.0 / base ** (-e.exponent)
    return base**e.exponent


@_eval.register
def _(e: Func, b: Bindings):
    return _FUNCTION_TABLE[e.name](_eval(e.arg, b))


def evaluate(e: Expr, b: Bindings) -> float | np.ndarray:
    """Evaluate ``e``; array bindings broadcast and give an array result."""
    with np.errstate(over="ignore"):
        value = _eval(e, b)
    if np.ndim(value) == 0:
        return float(value)
    return np.asarray(value, dtype=float)


def compile_expr(e: Expr) -> Callable[[Bindings], float | np.ndarray]:
    """Close ``e`` over numpy operations without per-node domain checks.

    Used on hot paths (the time stepper); callers run it under ``np.errstate``.
    """
    if isinstance(e, Const):
        value = e.value
        return lambda b: value
    if isinstance(e, Sym):
        name = e.name
        return lambda b: b[name]
    if isinstance(e, Neg):
        arg = compile_expr(e.arg)
        return lambda b: -arg(b)
    if isinstance(e, Pow):
        base = compile_expr(e.base)
        exponent = e.exponent
        return lambda b: base(b) ** exponent if exponent > 0 else 1.0 / base(b) ** (-exponent)
    if isinstance(e, Func):
        arg = compile_expr(e.arg)
        function = _UNCHECKED_TABLE[e.name]
        return lambda b: function(arg(b))
    left, right = compile_expr(e.left), compile_expr(e.right)
    match e:
        case Add():
            return lambda b: left(b) + right(b)
        case Sub():
            return lambda b: left(b) - right(b)
        case Mul():
            return lambda b: left(b) * right(b)
        case Div():
            return lambda b: left(b) / right(b)
    raise TypeError(f"Not an expression: {e!r}")
