"""Right-hand side expressions: parsing, evaluation and forward-mode partials.

Grammar (lowest to highest precedence)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := number | name | name '(' sum ')' | '(' sum ')'

Names are ``x`` and ``y0``, ``y1``, ... (``y<j>`` is the j-th derivative of
the unknown).  Only smooth functions are accepted.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import (
    DomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
)

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")

_VAR_RE = re.compile(r"x|y(0|[1-9][0-9]*)")


class Expr:
    """Base class of the expression tree."""

    __slots__ = ()

    def variables(self) -> set[str]:
        out: set[str] = set()
        _collect_vars(self, out)
        return out

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr


_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div}
_BINARY_SYMBOL = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def _collect_vars(e, out):
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, (Neg, Call)):
        _collect_vars(e.arg, out)
    elif isinstance(e, Pow):
        _collect_vars(e.base, out)
        _collect_vars(e.exponent, out)
    elif not isinstance(e, Num):
        _collect_vars(e.left, out)
        _collect_vars(e.right, out)


@dataclass(frozen=True)
class EvalEnv:
    """Point of evaluation: abscissa ``x`` and ``y = (y, y', ..., y^(n-1))``."""

    x: float
    y: tuple

    def __init__(self, x, y=()):
        object.__setattr__(self, "x", float(x))
        object.__setattr__(self, "y", tuple(float(v) for v in y))

    def lookup(self, name):
        if name == "x":
            return self.x
        j = int(name[1:])
        if j >= len(self.y):
            raise UnboundVariableError(f"variable {name} is not bound (n = {len(self.y)})")
        return self.y[j]


# -- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = []
        pos = 0
        raw = src.encode("utf-8")
        while pos < len(src):
            if src[pos:].strip() == "":
                break
            m = _TOKEN_RE.match(src, pos)
            if m is None or m.end() == pos:
                ws = len(src[pos:]) - len(src[pos:].lstrip())
                raise ExprSyntaxError(
                    f"unexpected character {src[pos + ws]!r}", self._byte(pos + ws)
                )
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.end = len(raw)
        self.i = 0

    def _byte(self, char_offset):
        return len(self.src[:char_offset].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def error(self, message, tok=None):
        offset = self.end if tok is None else self._byte(tok[2])
        raise ExprSyntaxError(message, offset)

    def expect(self, value):
        tok = self.peek()
        if tok is None or tok[1] != value:
            self.error(f"expected {value!r}", tok)
        self.i += 1

    def parse(self):
        if not self.tokens:
            raise ExprSyntaxError("empty expression", 0)
        e = self.sum()
        tok = self.peek()
        if tok is not None:
            self.error(f"unexpected token {tok[1]!r}", tok)
        return e

    def sum(self):
        e = self.product()
        while (tok := self.peek()) is not None and tok[1] in "+-" and tok[0] == "op":
            self.i += 1
            e = _BINARY[tok[1]](e, self.product())
        return e

    def product(self):
        e = self.unary()
        while (tok := self.peek()) is not None and tok[0] == "op" and tok[1] in "*/":
            self.i += 1
            e = _BINARY[tok[1]](e, self.unary())
        return e

    def unary(self):
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "-":
            self.i += 1
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self.i += 1
            return Pow(base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        if tok is None:
            self.error("unexpected end of input")
        kind, text, _ = tok
        self.i += 1
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            nxt = self.peek()
            if nxt is not None and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {text!r}", self._byte(tok[2]))
                self.i += 1
                arg = self.sum()
                self.expect(")")
                return Call(text, arg)
            if not _VAR_RE.fullmatch(text):
                self.error(f"unknown identifier {text!r}", tok)
            return Var(text)
        if text == "(":
            e = self.sum()
            self.expect(")")
            return e
        self.error(f"unexpected token {text!r}", tok)


def parse_expr(src: str) -> Expr:
    """Parse ``src`` into an expression tree.

    Raises :class:`ExprSyntaxError` (with a byte offset) on malformed input
    and :class:`UnknownFunctionError` for calls outside :data:`FUNCTIONS`.
    """
    return _Parser(src).parse()


def to_source(e: Expr) -> str:
    """Fully parenthesised source text; ``parse_expr`` inverts it exactly."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.arg)})"
    if isinstance(e, Pow):
        return f"({to_source(e.base)}^{to_source(e.exponent)})"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    return f"({to_source(e.left)} {_BINARY_SYMBOL[type(e)]} {to_source(e.right)})"


# -- evaluation ------------------------------------------------------------


def integer_exponent(e: Expr):
    """Return the exponent as an int if it is an integral literal, else None."""
    sign = 1
    if isinstance(e, Neg):
        sign, e = -1, e.arg
    if isinstance(e, Num) and float(e.value).is_integer() and abs(e.value) <= 1 << 20:
        return sign * int(e.value)
    return None


def ipow(v: float, k: int) -> float:
    """``v**k`` by repeated multiplication (k >= 0)."""
    r = 1.0
    for _ in range(k):
        r = r * v
    return r


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def _div(a, b):
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _real_pow(b, k_or_none, e_val):
    if k_or_none is not None:
        k = k_or_none
        if k >= 0:
            return ipow(b, k)
        return _div(1.0, ipow(b, -k))
    if b <= 0.0:
        raise DomainError(f"non-integer power of nonpositive base {b!r}")
    return _fpow(b, e_val)


def _fpow(b, e):
    try:
        return b**e
    except OverflowError:
        return math.inf


def _log(v):
    if v <= 0.0:
        raise DomainError(f"log of nonpositive argument {v!r}")
    return math.log(v)


def _sqrt(v):
    if v < 0.0:
        raise DomainError(f"sqrt of negative argument {v!r}")
    return math.sqrt(v)


_REAL_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
}


def _as_env(env):
    if isinstance(env, EvalEnv):
        return env
    if isinstance(env, Mapping):
        return EvalEnv(env.get("x", 0.0), env.get("y", ()))
    raise TypeError(f"cannot use {type(env).__name__} as an evaluation environment")


def eval_real(e: Expr, env) -> float:
    """Evaluate ``e`` in double precision."""
    env = _as_env(env)
    return _eval(e, env)


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env.lookup(e.name)
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Add):
        return _eval(e.left, env) + _eval(e.right, env)
    if isinstance(e, Sub):
        return _eval(e.left, env) - _eval(e.right, env)
    if isinstance(e, Mul):
        return _eval(e.left, env) * _eval(e.right, env)
    if isinstance(e, Div):
        return _div(_eval(e.left, env), _eval(e.right, env))
    if isinstance(e, Pow):
        k = integer_exponent(e.exponent)
        b = _eval(e.base, env)
        return _real_pow(b, k, None if k is not None else _eval(e.exponent, env))
    if isinstance(e, Call):
        return _REAL_FUNCS[e.func](_eval(e.arg, env))
    raise TypeError(f"not an expression node: {e!r}")


class Dual:
    """Value plus one tangent component."""

    __slots__ = ("val", "der")

    def __init__(self, val, der=0.0):
        self.val = val
        self.der = der

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r})"


def _dual_pow(b: Dual, e: Expr, env, wrt):
    k = integer_exponent(e)
    if k is not None:
        if k == 0:
            return Dual(1.0, 0.0)
        if k > 0:
            return Dual(ipow(b.val, k), k * ipow(b.val, k - 1) * b.der)
        val = _div(1.0, ipow(b.val, -k))
        return Dual(val, k * _div(1.0, ipow(b.val, 1 - k)) * b.der)
    x = _dual(e, env, wrt)
    if b.val <= 0.0:
        raise DomainError(f"non-integer power of nonpositive base {b.val!r}")
    val = _fpow(b.val, x.val)
    der = x.val * _fpow(b.val, x.val - 1.0) * b.der + math.log(b.val) * val * x.der
    return Dual(val, der)


def _dual(e, env, wrt):
    if isinstance(e, Num):
        return Dual(e.value, 0.0)
    if isinstance(e, Var):
        return Dual(env.lookup(e.name), 1.0 if e.name == wrt else 0.0)
    if isinstance(e, Neg):
        a = _dual(e.arg, env, wrt)
        return Dual(-a.val, -a.der)
    if isinstance(e, Pow):
        return _dual_pow(_dual(e.base, env, wrt), e.exponent, env, wrt)
    if isinstance(e, Call):
        a = _dual(e.arg, env, wrt)
        f = e.func
        if f == "sin":
            return Dual(math.sin(a.val), math.cos(a.val) * a.der)
        if f == "cos":
            return Dual(math.cos(a.val), -math.sin(a.val) * a.der)
        if f == "tan":
            c = math.cos(a.val)
            return Dual(math.tan(a.val), a.der / (c * c))
        if f == "exp":
            v = _exp(a.val)
            return Dual(v, v * a.der)
        if f == "log":
            return Dual(_log(a.val), a.der / a.val)
        v = _sqrt(a.val)
        if a.der == 0.0:
            return Dual(v, 0.0)
        return Dual(v, _div(a.der, 2.0 * v))
    a = _dual(e.left, env, wrt)
    b = _dual(e.right, env, wrt)
    if isinstance(e, Add):
        return Dual(a.val + b.val, a.der + b.der)
    if isinstance(e, Sub):
        return Dual(a.val - b.val, a.der - b.der)
    if isinstance(e, Mul):
        return Dual(a.val * b.val, a.der * b.val + a.val * b.der)
    if isinstance(e, Div):
        val = _div(a.val, b.val)
        return Dual(val, (a.der * b.val - a.val * b.der) / (b.val * b.val))
    raise TypeError(f"not an expression node: {e!r}")


def eval_with_partial(e: Expr, env, wrt: str) -> tuple[float, float]:
    """Return ``(value, d value / d wrt)`` by dual-number forward mode.

    The value component is computed by the same floating point operations
    as :func:`eval_real` and is therefore bit-identical to it.
    """
    env = _as_env(env)
    env.lookup(wrt)
    d = _dual(e, env, wrt)
    return d.val, d.der


def gradient(e: Expr, env) -> tuple[float, np.ndarray]:
    """Value and all partials with respect to ``y0 .. y{n-1}``, one sweep each."""
    env = _as_env(env)
    n = len(env.y)
    grad = np.zeros(n)
    val = eval_real(e, env)
    for j in range(n):
        grad[j] = eval_with_partial(e, env, f"y{j}")[1]
    return val, grad


# -- tape compilation for the integration kernels --------------------------

OP_CONST, OP_X, OP_Y = 0, 1, 2
OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG = 3, 4, 5, 6, 7
OP_IPOW, OP_POW = 8, 9
OP_SIN, OP_COS, OP_TAN, OP_EXP, OP_LOG, OP_SQRT = 10, 11, 12, 13, 14, 15

_FUNC_OPS = {"sin": OP_SIN, "cos": OP_COS, "tan": OP_TAN, "exp": OP_EXP, "log": OP_LOG, "sqrt": OP_SQRT}
_BIN_OPS = {Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}


@dataclass(frozen=True)
class Tape:
    """Postfix program for a stack machine evaluating value and gradient."""

    ops: np.ndarray
    args: np.ndarray
    depth: int


def compile_tape(e: Expr) -> Tape:
    ops: list[int] = []
    args: list[float] = []
    depth = 0
    cur = 0

    def emit(op, arg=0.0, delta=0):
        nonlocal cur, depth
        ops.append(op)
        args.append(float(arg))
        cur += delta
        depth = max(depth, cur)

    def walk(node):
        if isinstance(node, Num):
            emit(OP_CONST, node.value, 1)
        elif isinstance(node, Var):
            if node.name == "x":
                emit(OP_X, 0.0, 1)
            else:
                emit(OP_Y, int(node.name[1:]), 1)
        elif isinstance(node, Neg):
            walk(node.arg)
            emit(OP_NEG)
        elif isinstance(node, Call):
            walk(node.arg)
            emit(_FUNC_OPS[node.func])
        elif isinstance(node, Pow):
            walk(node.base)
            k = integer_exponent(node.exponent)
            if k is not None:
                emit(OP_IPOW, k)
            else:
                walk(node.exponent)
                emit(OP_POW, 0.0, -1)
        else:
            walk(node.left)
            walk(node.right)
            emit(_BIN_OPS[type(node)], 0.0, -1)

    walk(e)
    return Tape(np.asarray(ops, dtype=np.int32), np.asarray(args, dtype=np.float64), max(depth, 1))


ExprLike = Union[str, Expr]


def as_expr(e: ExprLike) -> Expr:
    return parse_expr(e) if isinstance(e, str) else e


def max_y_index(e: Expr) -> int:
    """Largest ``j`` among the ``y<j>`` variables, -1 if none occur."""
    idx = [int(v[1:]) for v in e.variables() if v != "x"]
    return max(idx, default=-1)
