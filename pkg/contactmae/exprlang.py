"""Expression language over chart and jet variables.

Expressions are immutable trees of :class:`Const`, :class:`Var`,
:class:`Unary` and :class:`Binary` nodes. They are parsed from infix text,
evaluated on floats or numpy arrays, differentiated exactly and carried
through the total-derivative operators of the jet space.

Grammar (highest precedence first)::

    atom    := number | name | function '(' expr ')' | '(' expr ')'
    power   := atom ['^' signed]            right associative
    signed  := ('-' | '+') signed | power
    term    := signed (('*' | '/') signed)*
    expr    := term (('+' | '-') term)*

Functions: ``exp log sin cos sqrt``. Constants: ``pi`` and ``e``.
Variables: ``x1..xn``, ``z``, ``pI`` with ``I`` a multi-index of digits
(``p2``, ``p12``, ``p112``; ``p21`` is read as ``p12``) and ``t1..t_{n-1}``.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from functools import singledispatch
from itertools import combinations_with_replacement
from typing import (Callable, Dict, FrozenSet, Iterable, List, Mapping,
                    Optional, Sequence, Tuple, Union)

import numpy as np

from .errors import (DomainError, ExprSyntaxError, JetOrderOverflow,
                     UnboundVariable, UnknownVariable)

logger = logging.getLogger(__name__)

Number = Union[float, np.ndarray]
Env = Mapping[str, Number]
Compiled = Callable[[Env], Number]

UNARY_FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")
NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_ATOM = 5


class Expr:
    """Base class of expression nodes.

    Nodes never change after construction. Compiled closures, derivatives
    and the free-variable set are cached on the node.
    """

    __slots__ = ("_compiled", "_derivs", "_vars")

    def __init__(self) -> None:
        self._compiled: Optional[Compiled] = None
        self._derivs: Dict[str, "Expr"] = {}
        self._vars: Optional[FrozenSet[str]] = None

    def __add__(self, other) -> "Expr":
        return add(self, as_expr(other))

    def __radd__(self, other) -> "Expr":
        return add(as_expr(other), self)

    def __sub__(self, other) -> "Expr":
        return sub(self, as_expr(other))

    def __rsub__(self, other) -> "Expr":
        return sub(as_expr(other), self)

    def __mul__(self, other) -> "Expr":
        return mul(self, as_expr(other))

    def __rmul__(self, other) -> "Expr":
        return mul(as_expr(other), self)

    def __truediv__(self, other) -> "Expr":
        return div(self, as_expr(other))

    def __rtruediv__(self, other) -> "Expr":
        return div(as_expr(other), self)

    def __pow__(self, other) -> "Expr":
        return power(self, as_expr(other))

    def __neg__(self) -> "Expr":
        return neg(self)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}: {to_string(self)}>"

    def __str__(self) -> str:
        return to_string(self)


class Const(Expr):
    """Real constant."""

    __slots__ = ("value",)

    def __init__(self, value: float) -> None:
        super().__init__()
        self.value = float(value)


class Var(Expr):
    """Named variable."""

    __slots__ = ("name",)

    def __init__(self, name: str) -> None:
        super().__init__()
        self.name = name


class Unary(Expr):
    """Negation or elementary function applied to one argument."""

    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr) -> None:
        super().__init__()
        if op != "neg" and op not in UNARY_FUNCTIONS:
            raise ValueError(f"Unknown unary operator {op}.")
        self.op = op
        self.arg = arg


class Binary(Expr):
    """Arithmetic operator with two operands; ``^`` is the power."""

    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr) -> None:
        super().__init__()
        if op not in "+-*/^":
            raise ValueError(f"Unknown binary operator {op}.")
        self.op = op
        self.left = left
        self.right = right


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value: Union[Expr, float, int]) -> Expr:
    """Wrap numbers into constants."""
    if isinstance(value, Expr):
        return value
    return Const(value)


def _is_const(e: Expr, value: Optional[float] = None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


# Smart constructors. Only constant folding, no simplification.

def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    return Binary("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        try:
            return Const(_checked_pow(a.value, b.value))
        except DomainError:
            return Binary("^", a, b)
    if _is_const(b, 0.0):
        return ONE
    if _is_const(b, 1.0):
        return a
    return Binary("^", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def apply(op: str, a: Expr) -> Expr:
    """Apply an elementary function, folding constant arguments."""
    if op == "neg":
        return neg(a)
    if isinstance(a, Const):
        try:
            return Const(float(_UNARY_IMPL[op](a.value)))
        except DomainError:
            pass
    return Unary(op, a)


def exp(a) -> Expr:
    return apply("exp", as_expr(a))


def log(a) -> Expr:
    return apply("log", as_expr(a))


def sin(a) -> Expr:
    return apply("sin", as_expr(a))


def cos(a) -> Expr:
    return apply("cos", as_expr(a))


def sqrt(a) -> Expr:
    return apply("sqrt", as_expr(a))


# Evaluation

def _checked_log(a: Number) -> Number:
    if np.any(np.asarray(a) <= 0.0):
        raise DomainError("log of a non-positive number")
    return np.log(a)


def _checked_sqrt(a: Number) -> Number:
    if np.any(np.asarray(a) < 0.0):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(a)


def _checked_div(a: Number, b: Number) -> Number:
    if np.any(np.asarray(b) == 0.0):
        raise DomainError("division by zero")
    return a / b


def _checked_pow(a: Number, b: Number) -> Number:
    base = np.asarray(a)
    expo = np.asarray(b)
    integral = np.all(np.mod(expo, 1.0) == 0.0)
    if not integral and np.any(base < 0.0):
        raise DomainError("negative base with non-integer exponent")
    if np.any((base == 0.0) & (expo < 0.0)):
        raise DomainError("zero base with negative exponent")
    try:
        if integral and np.ndim(b) == 0:
            return a ** int(b)
        return np.power(a, b)
    except OverflowError as err:
        raise DomainError("power overflows the float range") from err


_UNARY_IMPL: Dict[str, Callable[[Number], Number]] = {
    "neg": np.negative,
    "exp": np.exp,
    "log": _checked_log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": _checked_sqrt,
}

_BINARY_IMPL: Dict[str, Callable[[Number, Number], Number]] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _checked_div,
    "^": _checked_pow,
}


@singledispatch
def _build(e: Expr) -> Compiled:
    raise TypeError(f"Cannot compile {type(e)}")


@_build.register(Const)
def _(e: Const) -> Compiled:
    value = e.value
    return lambda env: value


@_build.register(Var)
def _(e: Var) -> Compiled:
    name = e.name

    def lookup(env: Env) -> Number:
        try:
            return env[name]
        except KeyError:
            raise UnboundVariable(name) from None
    return lookup


@_build.register(Unary)
def _(e: Unary) -> Compiled:
    arg = compile_expr(e.arg)
    impl = _UNARY_IMPL[e.op]
    return lambda env: impl(arg(env))


@_build.register(Binary)
def _(e: Binary) -> Compiled:
    left = compile_expr(e.left)
    right = compile_expr(e.right)
    impl = _BINARY_IMPL[e.op]
    return lambda env: impl(left(env), right(env))


def compile_expr(e: Expr) -> Compiled:
    """Return the cached closure evaluating ``e`` on an environment."""
    if e._compiled is None:
        e._compiled = _build(e)
    return e._compiled


def evaluate(e: Expr, env: Env) -> Number:
    """Evaluate an expression.

    Args:
        e: Expression.
        env: Binding of every variable of ``e`` to a float or an array.
            Arrays are broadcast together.

    Returns:
        A float for scalar environments, an array otherwise.

    Raises:
        UnboundVariable: A variable of ``e`` is missing from ``env``.
        DomainError: log/sqrt of a negative number or division by zero.
    """
    with np.errstate(over="ignore"):
        value = compile_expr(e)(env)
    if np.ndim(value) == 0:
        return float(value)
    return value


# Structure

@singledispatch
def _free(e: Expr) -> FrozenSet[str]:
    raise TypeError(f"Unknown node {type(e)}")


@_free.register(Const)
def _(e: Const) -> FrozenSet[str]:
    return frozenset()


@_free.register(Var)
def _(e: Var) -> FrozenSet[str]:
    return frozenset((e.name,))


@_free.register(Unary)
def _(e: Unary) -> FrozenSet[str]:
    return free_variables(e.arg)


@_free.register(Binary)
def _(e: Binary) -> FrozenSet[str]:
    return free_variables(e.left) | free_variables(e.right)


def free_variables(e: Expr) -> FrozenSet[str]:
    """Names of the variables occurring in ``e``."""
    if e._vars is None:
        e._vars = _free(e)
    return e._vars


@singledispatch
def _subst(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    raise TypeError(f"Unknown node {type(e)}")


@_subst.register(Const)
def _(e: Const, mapping: Mapping[str, Expr]) -> Expr:
    return e


@_subst.register(Var)
def _(e: Var, mapping: Mapping[str, Expr]) -> Expr:
    return mapping.get(e.name, e)


@_subst.register(Unary)
def _(e: Unary, mapping: Mapping[str, Expr]) -> Expr:
    return apply(e.op, substitute(e.arg, mapping))


@_subst.register(Binary)
def _(e: Binary, mapping: Mapping[str, Expr]) -> Expr:
    left = substitute(e.left, mapping)
    right = substitute(e.right, mapping)
    return _BINARY_BUILD[e.op](left, right)


_BINARY_BUILD = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


def substitute(e: Expr, mapping: Mapping[str, Union[Expr, float]]) -> Expr:
    """Replace variables by expressions, folding constants again."""
    mapping = {k: as_expr(v) for k, v in mapping.items()}
    if not free_variables(e) & set(mapping):
        return e
    return _subst(e, mapping)


# Differentiation

@singledispatch
def _derive(e: Expr, v: str) -> Expr:
    raise TypeError(f"Unknown node {type(e)}")


@_derive.register(Const)
def _(e: Const, v: str) -> Expr:
    return ZERO


@_derive.register(Var)
def _(e: Var, v: str) -> Expr:
    return ONE if e.name == v else ZERO


@_derive.register(Unary)
def _(e: Unary, v: str) -> Expr:
    a = e.arg
    da = diff(a, v)
    if e.op == "neg":
        return neg(da)
    if e.op == "exp":
        return mul(e, da)
    if e.op == "log":
        return div(da, a)
    if e.op == "sin":
        return mul(cos(a), da)
    if e.op == "cos":
        return neg(mul(sin(a), da))
    # sqrt
    return div(da, mul(Const(2.0), e))


@_derive.register(Binary)
def _(e: Binary, v: str) -> Expr:
    a, b = e.left, e.right
    da, db = diff(a, v), diff(b, v)
    if e.op == "+":
        return add(da, db)
    if e.op == "-":
        return sub(da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    if e.op == "/":
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    # power
    if isinstance(b, Const):
        return mul(mul(b, power(a, Const(b.value - 1.0))), da)
    return mul(e, add(mul(db, log(a)), div(mul(b, da), a)))


def diff(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``v``."""
    if v not in free_variables(e):
        return ZERO
    cached = e._derivs.get(v)
    if cached is None:
        cached = _derive(e, v)
        e._derivs[v] = cached
    return cached


# Printing

def _precedence(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PRECEDENCE[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PRECEDENCE["neg"]
    if isinstance(e, Const) and e.value < 0.0:
        return _PRECEDENCE["neg"]
    return _ATOM


def _wrap(e: Expr, parens: bool) -> str:
    text = to_string(e)
    return f"({text})" if parens else text


@singledispatch
def to_string(e: Expr) -> str:
    """Print an expression in the parser's grammar."""
    raise TypeError(f"Unknown node {type(e)}")


@to_string.register(Const)
def _(e: Const) -> str:
    return repr(e.value)


@to_string.register(Var)
def _(e: Var) -> str:
    return e.name


@to_string.register(Unary)
def _(e: Unary) -> str:
    if e.op == "neg":
        return "-" + _wrap(e.arg, _precedence(e.arg) < _ATOM
                           and _precedence(e.arg) != _PRECEDENCE["^"])
    return f"{e.op}({to_string(e.arg)})"


@to_string.register(Binary)
def _(e: Binary) -> str:
    prec = _PRECEDENCE[e.op]
    lp, rp = _precedence(e.left), _precedence(e.right)
    if e.op == "^":
        left = _wrap(e.left, lp <= prec)
        right = _wrap(e.right, rp < _PRECEDENCE["neg"])
        return f"{left}^{right}"
    left = _wrap(e.left, lp < prec)
    right = _wrap(e.right, rp < prec or (rp == prec and e.op in "-/")
                  or rp == _PRECEDENCE["neg"])
    return f"{left} {e.op} {right}"


# Variable table and jet names

_JET_PATTERN = re.compile(r"p([1-9]+)")
_X_PATTERN = re.compile(r"x([1-9])")
_T_PATTERN = re.compile(r"t([1-9])")


def multi_index(name: str) -> Tuple[int, ...]:
    """Multi-index of a jet variable name, ``'p21' -> (1, 2)``."""
    match = _JET_PATTERN.fullmatch(name)
    if match is None:
        raise UnknownVariable(name)
    return tuple(sorted(int(c) for c in match.group(1)))


def jet_name(indices: Iterable[int]) -> str:
    """Canonical name of the jet variable with the given indices."""
    return "p" + "".join(str(i) for i in sorted(indices))


def is_jet_variable(name: str) -> bool:
    return _JET_PATTERN.fullmatch(name) is not None


@dataclass(frozen=True, eq=False)
class VarTable:
    """Admitted variables of a problem.

    Attributes:
        n: Number of independent variables, 2 to 8.
        order: Highest jet order admitted in parsed text.
        max_order: Highest jet order total derivatives may produce.
        aliases: User names mapped to canonical names (``x1b -> x3``).
    """

    n: int
    order: int = 2
    max_order: int = 8
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 2 <= self.n <= 8:
            raise ValueError(f"n must lie in [2, 8], got {self.n}.")
        if self.order < 0:
            raise ValueError("Jet order must be non-negative.")
        if self.max_order < self.order:
            raise ValueError("max_order must not be below order.")

    @property
    def x(self) -> List[str]:
        return [f"x{i}" for i in range(1, self.n + 1)]

    @property
    def p(self) -> List[str]:
        return [f"p{i}" for i in range(1, self.n + 1)]

    @property
    def t(self) -> List[str]:
        return [f"t{h}" for h in range(1, self.n)]

    @property
    def chart(self) -> List[str]:
        """Coordinates (x, z, p) of the contact chart in frame order."""
        return self.x + ["z"] + self.p

    def jet_variables(self, k: int) -> List[str]:
        """The C(n+k-1, k) jet variables of order ``k``."""
        return [jet_name(idx) for idx in
                combinations_with_replacement(range(1, self.n + 1), k)]

    @property
    def names(self) -> List[str]:
        """Ordered list of admitted variable names."""
        names = self.x + ["z"]
        for k in range(1, self.order + 1):
            names += self.jet_variables(k)
        return names + self.t

    def canonical(self, name: str, order: Optional[int] = None) -> str:
        """Canonical form of an admitted name.

        Raises:
            UnknownVariable: The name is not admitted.
        """
        order = self.order if order is None else order
        name = self.aliases.get(name, name)
        if name == "z":
            return name
        for pattern in (_X_PATTERN, _T_PATTERN):
            match = pattern.fullmatch(name)
            if match:
                index = int(match.group(1))
                bound = self.n if pattern is _X_PATTERN else self.n - 1
                if 1 <= index <= bound:
                    return name
                raise UnknownVariable(name)
        if is_jet_variable(name):
            idx = multi_index(name)
            if max(idx) <= self.n and 1 <= len(idx) <= order:
                return jet_name(idx)
        raise UnknownVariable(name)


# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))")


class _Parser:
    """Recursive-descent parser for the expression grammar."""

    def __init__(self, text: str, vt: VarTable) -> None:
        self.text = text
        self.vt = vt
        self.tokens: List[Tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            match = _TOKEN.match(text, pos)
            if match is None or match.end() == pos:
                raise ExprSyntaxError("unexpected character", pos)
            kind = match.lastgroup
            start = match.start(kind)
            self.tokens.append((kind, match.group(kind), start))
            pos = match.end()
        self.index = 0

    def peek(self) -> Optional[Tuple[str, str, int]]:
        if self.index < len(self.tokens):
            return self.tokens[self.index]
        return None

    def position(self) -> int:
        token = self.peek()
        return token[2] if token else len(self.text)

    def take(self, value: Optional[str] = None) -> Tuple[str, str, int]:
        token = self.peek()
        if token is None:
            raise ExprSyntaxError("unexpected end of input", len(self.text))
        if value is not None and token[1] != value:
            raise ExprSyntaxError(f"expected '{value}'", token[2])
        self.index += 1
        return token

    def accept(self, *values: str) -> Optional[str]:
        token = self.peek()
        if token is not None and token[0] == "op" and token[1] in values:
            self.index += 1
            return token[1]
        return None

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprSyntaxError("empty expression", 0)
        result = self.expr()
        if self.peek() is not None:
            raise ExprSyntaxError("unexpected token", self.position())
        return result

    def expr(self) -> Expr:
        result = self.term()
        while True:
            op = self.accept("+", "-")
            if op is None:
                return result
            result = _BINARY_BUILD[op](result, self.term())

    def term(self) -> Expr:
        result = self.signed()
        while True:
            op = self.accept("*", "/")
            if op is None:
                return result
            result = _BINARY_BUILD[op](result, self.signed())

    def signed(self) -> Expr:
        op = self.accept("-", "+")
        if op == "-":
            return neg(self.signed())
        if op == "+":
            return self.signed()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            return power(base, self.signed())
        return base

    def atom(self) -> Expr:
        kind, value, pos = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            if value in UNARY_FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return apply(value, arg)
            if value in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[value])
            return Var(self.vt.canonical(value))
        if value == "(":
            inner = self.expr()
            self.take(")")
            return inner
        raise ExprSyntaxError(f"unexpected '{value}'", pos)


def parse(text: str, vt: VarTable) -> Expr:
    """Parse expression text.

    Raises:
        ExprSyntaxError: Text is not in the grammar.
        UnknownVariable: An identifier is not admitted by ``vt``.
    """
    result = _Parser(text, vt).parse()
    logger.debug("Parsed %s", text)
    return result


# Total derivatives

def total_derivative(e: Expr, i: int, vt: VarTable) -> Expr:
    """Total derivative D_i on the jet space.

    D_i e = ∂_{x^i} e + p_i ∂_z e + Σ_I p_{I,i} ∂_{p_I} e, with the index
    list ``I, i`` sorted into canonical form.

    Raises:
        JetOrderOverflow: A jet variable of ``e`` already has the highest
            order admitted by ``vt.max_order``.
    """
    if not 1 <= i <= vt.n:
        raise ValueError(f"Index {i} out of range 1..{vt.n}.")
    result = diff(e, f"x{i}")
    names = free_variables(e)
    if "z" in names:
        result = add(result, mul(Var(f"p{i}"), diff(e, "z")))
    for name in sorted(n for n in names if is_jet_variable(n)):
        idx = multi_index(name)
        if len(idx) + 1 > vt.max_order:
            raise JetOrderOverflow(
                f"D_{i} {name} needs jet order {len(idx) + 1} "
                f"above the cap {vt.max_order}",
                {"variable": name, "cap": vt.max_order})
        result = add(result, mul(Var(jet_name(idx + (i,))), diff(e, name)))
    return result


def total_derivative_multi(e: Expr, indices: Sequence[int],
                           vt: VarTable) -> Expr:
    """Apply D_{i_1} ... D_{i_k} for a list of indices."""
    for i in indices:
        e = total_derivative(e, i, vt)
    return e
