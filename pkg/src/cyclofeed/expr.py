"""Expression ASTs for model right-hand sides.

Grammar (infix, standard precedence power > unary minus > mul/div > add/sub,
left associative binaries):

    sum    := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom (('^' | '**') ['-'] INT)?
    atom   := NUMBER | NAME | NAME '(' sum ')' | '(' sum ')'

Names resolve to the time symbol ``t``, state symbols ``x1`` .. ``xn``, the
functions ``sin``/``cos``/``exp``, or otherwise to parameters bound in a
model's parameter table.  Exponents are restricted to constant integers so
differentiation stays total.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

from .errors import EvalError, ParseError

__all__ = [
    "Num", "Param", "Time", "State", "BinOp", "Neg", "Pow", "Func", "Expr",
    "parse_expression", "evaluate", "differentiate", "unparse",
    "state_indices", "param_names", "uses_time", "substitute_states",
    "compile_exprs",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Time:
    pass


@dataclass(frozen=True)
class State:
    index: int  # 1-based


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str  # sin | cos | exp
    arg: "Expr"


Expr = Union[Num, Param, Time, State, BinOp, Neg, Pow, Func]

_FUNCTIONS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}
_STATE_RE = re.compile(r"^x([0-9]+)$")

_TOKEN_RE = re.compile(
    r"(?P<num>(?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^()])"
)


@dataclass
class _Token:
    kind: str  # num | name | op | end
    text: str
    column: int  # 1-based


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", column=pos + 1)
        tokens.append(_Token(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text: str) -> None:
        tok = self.advance()
        if tok.kind != "op" or tok.text != text:
            got = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ParseError(f"expected {text!r}, got {got}", tok.column)

    def parse(self) -> Expr:
        e = self._sum()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected trailing {tok.text!r}", tok.column)
        return e

    def _sum(self) -> Expr:
        e = self._term()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = self.advance().text
            e = BinOp(op, e, self._term())
        return e

    def _term(self) -> Expr:
        e = self._unary()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = self.advance().text
            e = BinOp(op, e, self._unary())
        return e

    def _unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            inner = self._unary()
            # Fold a negated literal so unparse/parse round-trips Num(-c).
            if isinstance(inner, Num):
                return Num(-inner.value)
            return Neg(inner)
        if tok.kind == "op" and tok.text == "+":
            self.advance()
            return self._unary()
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("^", "**"):
            self.advance()
            return Pow(base, self._int_exponent())
        return base

    def _int_exponent(self) -> int:
        sign = 1
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            sign = -1
        tok = self.advance()
        if tok.kind != "num" or any(c in tok.text for c in ".eE"):
            raise ParseError("exponent must be a constant integer", tok.column)
        return sign * int(tok.text)

    def _atom(self) -> Expr:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text in _FUNCTIONS:
                self.expect_op("(")
                arg = self._sum()
                self.expect_op(")")
                return Func(tok.text, arg)
            if tok.text == "t":
                return Time()
            m = _STATE_RE.match(tok.text)
            if m:
                digits = m.group(1)
                if digits.startswith("0"):
                    raise ParseError(f"state symbol {tok.text!r}: indices start at x1", tok.column)
                return State(int(digits))
            return Param(tok.text)
        if tok.kind == "op" and tok.text == "(":
            e = self._sum()
            self.expect_op(")")
            return e
        got = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ParseError(f"unexpected {got}", tok.column)


def parse_expression(text: str) -> Expr:
    """Parse infix expression text into an AST."""
    return _Parser(_tokenize(text)).parse()


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, t: float, x, params=None) -> float:
    """Evaluate an expression at time t, state x, with bound parameters.

    Division by zero, overflow and any non-finite intermediate raise
    EvalError rather than propagating silently.
    """
    params = {} if params is None else params

    def ev(node):
        match node:
            case Num(v):
                return v
            case Time():
                return float(t)
            case State(i):
                if i > len(x):
                    raise EvalError(f"state symbol x{i} out of range for dimension {len(x)}")
                return float(x[i - 1])
            case Param(name):
                try:
                    return float(params[name])
                except KeyError:
                    raise EvalError(f"unbound parameter {name!r}") from None
            case Neg(a):
                return -ev(a)
            case BinOp(op, a, b):
                va, vb = ev(a), ev(b)
                if op == "+":
                    r = va + vb
                elif op == "-":
                    r = va - vb
                elif op == "*":
                    r = va * vb
                else:
                    if vb == 0.0:
                        raise EvalError("division by zero")
                    r = va / vb
            case Pow(base, k):
                vb = ev(base)
                try:
                    r = vb ** k
                except ZeroDivisionError:
                    raise EvalError("zero raised to a negative power") from None
                except OverflowError:
                    raise EvalError("overflow in power") from None
            case Func(name, arg):
                try:
                    r = _FUNCTIONS[name](ev(arg))
                except OverflowError:
                    raise EvalError(f"overflow in {name}") from None
            case _:
                raise TypeError(f"not an expression node: {node!r}")
        if not math.isfinite(r):
            raise EvalError("non-finite intermediate value")
        return r

    return ev(e)


# ---------------------------------------------------------------------------
# construction helpers with constant folding (0*e -> 0, e+0 -> e, 1*e -> e,
# numeric subtrees folded; the only simplifications applied anywhere)

def _is_num(e, v=None) -> bool:
    return isinstance(e, Num) and (v is None or e.value == v)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a, -1.0):
        return _neg(b)
    if _is_num(b, -1.0):
        return _neg(a)
    return BinOp("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _pow(base: Expr, k: int) -> Expr:
    if k == 0:
        return Num(1.0)
    if k == 1:
        return base
    if isinstance(base, Num) and not (base.value == 0.0 and k < 0):
        return Num(base.value ** k)
    return Pow(base, k)


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, var) -> Expr:
    """Exact symbolic derivative with respect to ``var`` ("t" or a state index)."""
    wrt_time = var == "t"
    if not wrt_time and not isinstance(var, int):
        raise ValueError(f"var must be 't' or a 1-based state index, got {var!r}")

    def d(node):
        match node:
            case Num() | Param():
                return Num(0.0)
            case Time():
                return Num(1.0) if wrt_time else Num(0.0)
            case State(i):
                return Num(1.0) if (not wrt_time and i == var) else Num(0.0)
            case Neg(a):
                return _neg(d(a))
            case BinOp("+", a, b):
                return _add(d(a), d(b))
            case BinOp("-", a, b):
                return _sub(d(a), d(b))
            case BinOp("*", a, b):
                return _add(_mul(d(a), b), _mul(a, d(b)))
            case BinOp("/", a, b):
                return _div(_sub(_mul(d(a), b), _mul(a, d(b))), _pow(b, 2))
            case Pow(base, k):
                return _mul(_mul(Num(float(k)), _pow(base, k - 1)), d(base))
            case Func("sin", a):
                return _mul(Func("cos", a), d(a))
            case Func("cos", a):
                return _mul(_neg(Func("sin", a)), d(a))
            case Func("exp", a):
                return _mul(Func("exp", a), d(a))
            case _:
                raise TypeError(f"not an expression node: {node!r}")

    return d(e)


# ---------------------------------------------------------------------------
# rendering

_LEVEL_SUM, _LEVEL_TERM, _LEVEL_UNARY, _LEVEL_POW, _LEVEL_ATOM = 1, 2, 3, 4, 5


def _num_text(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def unparse(e: Expr) -> str:
    """Render an AST back to expression text that re-parses to the same AST."""

    def go(node) -> tuple[str, int]:
        match node:
            case Num(v):
                return _num_text(v), _LEVEL_ATOM if v >= 0 else _LEVEL_UNARY
            case Param(name):
                return name, _LEVEL_ATOM
            case Time():
                return "t", _LEVEL_ATOM
            case State(i):
                return f"x{i}", _LEVEL_ATOM
            case Func(name, arg):
                return f"{name}({go(arg)[0]})", _LEVEL_ATOM
            case Pow(base, k):
                text, level = go(base)
                if level < _LEVEL_ATOM:
                    text = f"({text})"
                return f"{text}^{k}", _LEVEL_POW
            case Neg(a):
                text, level = go(a)
                if level < _LEVEL_UNARY:
                    text = f"({text})"
                return f"-{text}", _LEVEL_UNARY
            case BinOp(op, a, b):
                mine = _LEVEL_SUM if op in "+-" else _LEVEL_TERM
                lt, ll = go(a)
                rt, rl = go(b)
                if ll < mine:
                    lt = f"({lt})"
                if rl <= mine:
                    rt = f"({rt})"
                return f"{lt} {op} {rt}" if mine == _LEVEL_SUM else f"{lt}{op}{rt}", mine
            case _:
                raise TypeError(f"not an expression node: {node!r}")

    return go(e)[0]


# ---------------------------------------------------------------------------
# structure queries and substitution

def _children(e: Expr):
    match e:
        case BinOp(_, a, b):
            return (a, b)
        case Neg(a) | Func(_, a) | Pow(a, _):
            return (a,)
        case _:
            return ()


def iter_nodes(e: Expr):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(_children(node))


def state_indices(e: Expr) -> set[int]:
    return {node.index for node in iter_nodes(e) if isinstance(node, State)}


def param_names(e: Expr) -> set[str]:
    return {node.name for node in iter_nodes(e) if isinstance(node, Param)}


def uses_time(e: Expr) -> bool:
    return any(isinstance(node, Time) for node in iter_nodes(e))


def substitute_states(e: Expr, mapping: dict[int, Expr]) -> Expr:
    """Replace state symbols by expressions, rebuilding with constant folding."""

    def go(node):
        match node:
            case State(i):
                return mapping.get(i, node)
            case BinOp("+", a, b):
                return _add(go(a), go(b))
            case BinOp("-", a, b):
                return _sub(go(a), go(b))
            case BinOp("*", a, b):
                return _mul(go(a), go(b))
            case BinOp("/", a, b):
                return _div(go(a), go(b))
            case Neg(a):
                return _neg(go(a))
            case Pow(base, k):
                return _pow(go(base), k)
            case Func(name, a):
                return Func(name, go(a))
            case _:
                return node

    return go(e)


# ---------------------------------------------------------------------------
# compilation to plain Python for the integrator hot path

def _emit(e: Expr, params) -> str:
    match e:
        case Num(v):
            return repr(v)
        case Time():
            return "t"
        case State(i):
            return f"x[{i - 1}]"
        case Param(name):
            try:
                return repr(float(params[name]))
            except KeyError:
                raise EvalError(f"unbound parameter {name!r}") from None
        case Neg(a):
            return f"(-{_emit(a, params)})"
        case BinOp(op, a, b):
            return f"({_emit(a, params)}{op}{_emit(b, params)})"
        case Pow(base, k):
            return f"({_emit(base, params)}**{k})"
        case Func(name, a):
            return f"_{name}({_emit(a, params)})"
        case _:
            raise TypeError(f"not an expression node: {e!r}")


def compile_exprs(exprs, params):
    """Compile a sequence of expressions into one fast ``f(t, x) -> tuple``.

    Parameter values are inlined as literals, so the result is a closed
    function of (t, x) only.  Evaluation semantics match :func:`evaluate`
    except that non-finite values propagate (callers such as the integrator
    detect blow-up on the state instead).
    """
    body = ", ".join(_emit(e, params) for e in exprs)
    if len(list(exprs)) == 1:
        body += ","
    src = f"def _fn(t, x):\n    return ({body})"
    ns = {"_sin": math.sin, "_cos": math.cos, "_exp": math.exp}
    exec(src, ns)
    fn = ns["_fn"]
    fn.__source__ = src
    return fn
