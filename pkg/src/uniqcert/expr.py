"""Expression DSL: parsing, printing, evaluation and forward-mode derivatives.

Expressions are scalar formulas in a small set of declared variables
(``t, x, s, r`` by default, ``x1 .. xn`` for systems).  Values are computed
by Python code generated from the AST; first and second partial derivatives
come from dual numbers pushed through the same AST.

Evaluation never returns NaN or infinity silently: a non-finite result is
re-traced at the offending point and reported as a :class:`DomainError`
naming the sub-expression that failed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Mapping, Sequence, Union

import numpy as np

DEFAULT_VARIABLES = ("t", "x", "s", "r")
CONSTANTS = {"pi": math.pi, "e": math.e}
# name -> arity; piecewise is variadic
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "ln": 1,
    "sqrt": 1,
    "abs": 1,
    "min": 2,
    "max": 2,
    "pow": 2,
    "piecewise": None,
}

_VARIABLE_NAME = re.compile(r"(?:[tsr]|x\d*)\Z")


class ExprError(ValueError):
    """Base class for DSL errors.  ``offset`` is a byte offset into the source."""

    def __init__(self, message: str, offset: int | None = None, text: str | None = None):
        self.offset = offset
        self.text = text
        self.message = message
        super().__init__(message if offset is None else f"{message} (at byte {offset})")

    def pointer(self) -> str:
        """Source line with a caret under the failing byte, for error reports."""
        if self.text is None or self.offset is None:
            return ""
        raw = self.text.encode("utf-8")
        prefix = raw[: self.offset].decode("utf-8", errors="replace")
        return f"{self.text}\n{' ' * len(prefix)}^"


class ExprSyntaxError(ExprError):
    pass


class UnknownFunction(ExprError):
    pass


class UnknownVariable(ExprError):
    pass


class DomainError(ExprError):
    """Evaluation left the domain of a real operation (ln, sqrt, division, ...)."""

    def __init__(self, message: str, node: "Node | None" = None, point: Mapping | None = None):
        self.node = node
        self.point = dict(point) if point else {}
        where = f" in '{to_text(node)}'" if node is not None else ""
        at = ""
        if self.point:
            at = " at " + ", ".join(f"{k}={v!r}" for k, v in sorted(self.point.items()))
        super().__init__(f"{message}{where}{at}")
        self.reason = message


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError("numeric literals are finite and non-negative; use Neg for signs")


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: "Node"  # variable-free


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Compare:
    op: str  # "<" or "<="
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Piecewise:
    branches: tuple  # ((Compare, Node), ...)
    default: "Node | None" = None


Node = Union[Num, Const, Var, Neg, Add, Sub, Mul, Div, Pow, Call, Compare, Piecewise]
_BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}
_ATOMIC = (Num, Const, Var, Call, Piecewise)


def children(node: Node) -> tuple:
    if isinstance(node, (Num, Const, Var)):
        return ()
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, (Add, Sub, Mul, Div, Compare)):
        return (node.left, node.right)
    if isinstance(node, Pow):
        return (node.base, node.exponent)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, Piecewise):
        out = []
        for cond, value in node.branches:
            out.extend((cond, value))
        if node.default is not None:
            out.append(node.default)
        return tuple(out)
    raise TypeError(f"not an expression node: {node!r}")


def walk(node: Node) -> Iterator[Node]:
    yield node
    for child in children(node):
        yield from walk(child)


def free_variables(node: Node) -> frozenset:
    return frozenset(n.name for n in walk(node) if isinstance(n, Var))


def rename(node: Node, mapping: Mapping[str, str]) -> Node:
    """Copy of ``node`` with variables renamed through ``mapping``."""
    if isinstance(node, Var):
        return Var(mapping.get(node.name, node.name))
    if isinstance(node, (Num, Const)):
        return node
    if isinstance(node, Neg):
        return Neg(rename(node.arg, mapping))
    if isinstance(node, (Add, Sub, Mul, Div)):
        return type(node)(rename(node.left, mapping), rename(node.right, mapping))
    if isinstance(node, Compare):
        return Compare(node.op, rename(node.left, mapping), rename(node.right, mapping))
    if isinstance(node, Pow):
        return Pow(rename(node.base, mapping), node.exponent)
    if isinstance(node, Call):
        return Call(node.name, tuple(rename(a, mapping) for a in node.args))
    branches = tuple((rename(c, mapping), rename(v, mapping)) for c, v in node.branches)
    default = None if node.default is None else rename(node.default, mapping)
    return Piecewise(branches, default)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _wrap(node: Node) -> str:
    text = to_text(node)
    return text if isinstance(node, _ATOMIC) else f"({text})"


def to_text(node: Node) -> str:
    """Render a node in DSL syntax; ``parse(to_text(n))`` rebuilds ``n``."""
    if isinstance(node, Num):
        v = float(node.value)
        return str(int(v)) if v.is_integer() and v < 1e15 else repr(v)
    if isinstance(node, (Const, Var)):
        return node.name
    if isinstance(node, Neg):
        return f"-{_wrap(node.arg)}"
    if type(node) in _BINARY:
        return f"{_wrap(node.left)}{_BINARY[type(node)]}{_wrap(node.right)}"
    if isinstance(node, Pow):
        return f"{_wrap(node.base)}^{_wrap(node.exponent)}"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Compare):
        return f"{to_text(node.left)} {node.op} {to_text(node.right)}"
    if isinstance(node, Piecewise):
        parts = [to_text(p) for p in children(node)]
        return f"piecewise({', '.join(parts)})"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|<|[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | name | op | end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {text[pos]!r}", len(text[:pos].encode("utf-8")), text
            )
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), len(text[:pos].encode("utf-8"))))
        pos = m.end()
    tokens.append(_Token("end", "", len(text.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = frozenset(variables)
        self.tokens = _tokenize(text)
        self.i = 0

    def error(self, cls, message, token):
        return cls(message, token.offset, self.text)

    def peek(self, *ops) -> bool:
        tok = self.tokens[self.i]
        return tok.kind == "op" and tok.text in ops

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str) -> _Token:
        tok = self.tokens[self.i]
        if not (tok.kind == "op" and tok.text == op):
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise self.error(ExprSyntaxError, f"expected {op!r}, found {found}", tok)
        return self.advance()

    def parse(self) -> Node:
        if self.tokens[0].kind == "end":
            raise self.error(ExprSyntaxError, "empty expression", self.tokens[0])
        node = self.expression()
        tok = self.tokens[self.i]
        if tok.kind != "end":
            raise self.error(ExprSyntaxError, f"unexpected {tok.text!r}", tok)
        return node

    def expression(self) -> Node:
        node = self.term()
        while self.peek("+", "-"):
            op = self.advance().text
            right = self.term()
            node = Add(node, right) if op == "+" else Sub(node, right)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek("*", "/"):
            op = self.advance().text
            right = self.unary()
            node = Mul(node, right) if op == "*" else Div(node, right)
        return node

    def unary(self) -> Node:
        if self.peek("-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        node = self.primary()
        while self.peek("^"):
            caret = self.advance()
            exponent = self.exponent()
            if free_variables(exponent):
                raise self.error(
                    ExprSyntaxError,
                    "exponent must be constant; write exp(y*ln(x)) for x^y",
                    caret,
                )
            node = Pow(node, exponent)
        return node

    def exponent(self) -> Node:
        if self.peek("-"):
            self.advance()
            return Neg(self.exponent())
        return self.primary()

    def primary(self) -> Node:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek("("):
                return self.call(tok)
            if tok.text in CONSTANTS:
                return Const(tok.text)
            if tok.text in FUNCTIONS:
                raise self.error(ExprSyntaxError, f"function {tok.text!r} needs arguments", tok)
            if tok.text not in self.variables:
                raise self.error(UnknownVariable, f"unknown variable {tok.text!r}", tok)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            node = self.expression()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise self.error(ExprSyntaxError, f"unexpected {found}", tok)

    def item(self) -> Node:
        left = self.expression()
        if self.peek("<", "<="):
            op = self.advance().text
            return Compare(op, left, self.expression())
        return left

    def call(self, name_tok: _Token) -> Node:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise self.error(UnknownFunction, f"unknown function {name!r}", name_tok)
        self.expect("(")
        args = [self.item()]
        while self.peek(","):
            self.advance()
            args.append(self.item())
        self.expect(")")
        if name == "piecewise":
            return self.piecewise(args, name_tok)
        if any(isinstance(a, Compare) for a in args):
            raise self.error(
                ExprSyntaxError, "comparisons are only allowed inside piecewise", name_tok
            )
        if len(args) != FUNCTIONS[name]:
            raise self.error(
                ExprSyntaxError, f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", name_tok
            )
        if name == "pow":
            if free_variables(args[1]):
                raise self.error(ExprSyntaxError, "pow exponent must be constant", name_tok)
            return Pow(args[0], args[1])
        return Call(name, tuple(args))

    def piecewise(self, args, name_tok) -> Piecewise:
        branches = []
        default = None
        i = 0
        while i < len(args):
            arg = args[i]
            if isinstance(arg, Compare):
                if i + 1 >= len(args) or isinstance(args[i + 1], Compare):
                    raise self.error(
                        ExprSyntaxError, "piecewise condition must be followed by a value", name_tok
                    )
                branches.append((arg, args[i + 1]))
                i += 2
            elif i == len(args) - 1:
                default = arg
                i += 1
            else:
                raise self.error(
                    ExprSyntaxError, "piecewise takes cond, value pairs and an optional default", name_tok
                )
        if not branches:
            raise self.error(ExprSyntaxError, "piecewise needs at least one condition", name_tok)
        return Piecewise(tuple(branches), default)


def parse(text: str, variables: Sequence[str] = DEFAULT_VARIABLES) -> "Expr":
    """Parse DSL text against a declared variable signature."""
    for v in variables:
        if not _VARIABLE_NAME.match(v):
            raise ValueError(f"invalid variable name {v!r}")
    root = _Parser(text, variables).parse()
    return Expr(root, tuple(variables), text)


# ---------------------------------------------------------------------------
# Dual numbers
# ---------------------------------------------------------------------------


class Dual:
    """``v + d*eps`` with eps**2 = 0.  Components may be floats, arrays or Duals."""

    __slots__ = ("v", "d")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, v, d):
        self.v = v
        self.d = d

    def __repr__(self):
        return f"Dual({self.v!r}, {self.d!r})"

    def __neg__(self):
        return Dual(-self.v, -self.d)

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.v + o.v, self.d + o.d)
        return Dual(self.v + o, self.d)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.v - o.v, self.d - o.d)
        return Dual(self.v - o, self.d)

    def __rsub__(self, o):
        return Dual(o - self.v, -self.d)

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.v * o.v, self.v * o.d + self.d * o.v)
        return Dual(self.v * o, self.d * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            return Dual(self.v / o.v, (self.d * o.v - self.v * o.d) / (o.v * o.v))
        return Dual(self.v / o, self.d / o)

    def __rtruediv__(self, o):
        return Dual(o / self.v, -o * self.d / (self.v * self.v))


def _real(u):
    while isinstance(u, Dual):
        u = u.v
    return u


def _components(u):
    if isinstance(u, Dual):
        yield from _components(u.v)
        yield from _components(u.d)
    else:
        yield u


def _finite(u) -> bool:
    return all(np.all(np.isfinite(c)) for c in _components(u))


def _chain(factor, d):
    # zero tangent stays zero even where the factor is infinite (e.g. sqrt at 0)
    if isinstance(d, Dual) or isinstance(factor, Dual):
        return factor * d
    return np.where(d == 0, 0.0, factor * d)


def _where(mask, a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        a = a if isinstance(a, Dual) else Dual(a, 0.0)
        b = b if isinstance(b, Dual) else Dual(b, 0.0)
        return Dual(_where(mask, a.v, b.v), _where(mask, a.d, b.d))
    return np.where(mask, a, b)


def _sin(u):
    if isinstance(u, Dual):
        return Dual(_sin(u.v), _chain(_cos(u.v), u.d))
    return np.sin(u)


def _cos(u):
    if isinstance(u, Dual):
        return Dual(_cos(u.v), _chain(-_sin(u.v), u.d))
    return np.cos(u)


def _exp(u):
    if isinstance(u, Dual):
        e = _exp(u.v)
        return Dual(e, _chain(e, u.d))
    return np.exp(u)


def _expm1(u):
    if isinstance(u, Dual):
        return Dual(_expm1(u.v), _chain(_exp(u.v), u.d))
    return np.expm1(u)


def _exp_minus_one(node: Node):
    """Argument of ``exp(u) - 1``, which is evaluated as expm1(u) to keep accuracy near u = 0."""
    if (
        isinstance(node, Sub)
        and isinstance(node.left, Call)
        and node.left.name == "exp"
        and isinstance(node.right, Num)
        and node.right.value == 1.0
    ):
        return node.left.args[0]
    return None


def _ln(u):
    if isinstance(u, Dual):
        return Dual(_ln(u.v), _chain(1.0 / u.v, u.d))
    return np.log(u)


def _sqrt(u):
    if isinstance(u, Dual):
        s = _sqrt(u.v)
        return Dual(s, _chain(0.5 / s, u.d))
    return np.sqrt(u)


def _abs(u):
    if isinstance(u, Dual):
        # abs'(0) = 0 by convention
        return Dual(_abs(u.v), np.sign(_real(u.v)) * u.d)
    return np.abs(u)


def _pow(u, c: float):
    if c == 0:
        return 1.0
    if isinstance(u, Dual):
        return Dual(_pow(u.v, c), _chain(c * _pow(u.v, c - 1.0), u.d))
    return np.power(u, c)


def _min(a, b):
    return _where(_real(a) <= _real(b), a, b)


def _max(a, b):
    return _where(_real(a) >= _real(b), a, b)


_UNARY = {"sin": _sin, "cos": _cos, "exp": _exp, "ln": _ln, "sqrt": _sqrt, "abs": _abs}


def _constant_value(node: Node) -> float:
    value = _walk(node, {}, strict=True)
    return float(value)


def _compare(op, left, right):
    left, right = _real(left), _real(right)
    return left < right if op == "<" else left <= right


def _walk(node: Node, env: Mapping, strict: bool):
    """Generic evaluator over floats, arrays and Duals.

    In strict mode the inputs are a single point; each node is checked and
    the first failing one raises DomainError.
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Piecewise):
        if strict:
            for cond, value in node.branches:
                if bool(_compare(cond.op, _walk(cond.left, env, True), _walk(cond.right, env, True))):
                    return _walk(value, env, True)
            if node.default is None:
                raise DomainError("no piecewise branch matches", node)
            return _walk(node.default, env, True)
        conds = [
            _compare(c.op, _walk(c.left, env, False), _walk(c.right, env, False))
            for c, _ in node.branches
        ]
        out = _walk(node.default, env, False) if node.default is not None else np.nan
        for cond, (_, value) in reversed(list(zip(conds, node.branches))):
            out = _where(cond, _walk(value, env, False), out)
        return out

    if isinstance(node, Pow):
        base = _walk(node.base, env, strict)
        c = _constant_value(node.exponent)
        if strict:
            b = _real(base)
            if b < 0 and not float(c).is_integer():
                raise DomainError("negative base with non-integer exponent", node)
            if b == 0 and c < 0:
                raise DomainError("zero raised to a negative power", node)
        out = _pow(base, c)
    elif isinstance(node, Neg):
        out = -_walk(node.arg, env, strict)
    elif _exp_minus_one(node) is not None:
        out = _expm1(_walk(_exp_minus_one(node), env, strict))
    elif type(node) in _BINARY:
        left = _walk(node.left, env, strict)
        right = _walk(node.right, env, strict)
        if isinstance(node, Add):
            out = left + right
        elif isinstance(node, Sub):
            out = left - right
        elif isinstance(node, Mul):
            out = left * right
        else:
            if strict and _real(right) == 0:
                raise DomainError("division by zero", node)
            out = left / right
    elif isinstance(node, Call):
        args = [_walk(a, env, strict) for a in node.args]
        if strict:
            if node.name == "ln" and _real(args[0]) <= 0:
                raise DomainError("ln of non-positive value", node)
            if node.name == "sqrt" and _real(args[0]) < 0:
                raise DomainError("sqrt of negative value", node)
        if node.name in _UNARY:
            out = _UNARY[node.name](args[0])
        elif node.name == "min":
            out = _min(*args)
        else:
            out = _max(*args)
    else:
        raise TypeError(f"cannot evaluate {node!r}")

    if strict and not _finite(out):
        raise DomainError("non-finite value", node)
    return out


# ---------------------------------------------------------------------------
# Code generation (fast value path)
# ---------------------------------------------------------------------------


def _math_pow(b, c):
    return math.pow(b, c)


def _no_branch():
    raise ArithmeticError("no piecewise branch")


def _np_select(conds, values, default):
    arrays = np.broadcast_arrays(*conds, *values, default)
    n = len(conds)
    return np.select(arrays[:n], arrays[n : 2 * n], arrays[-1])


def _np_min(a, b):
    return np.where(a <= b, a, b)


def _np_max(a, b):
    return np.where(a >= b, a, b)


_MATH_NS = {"_m": math, "_pow": _math_pow, "_nobranch": _no_branch}
_NUMPY_NS = {"_np": np, "_select": _np_select, "_min": _np_min, "_max": _np_max}
_MATH_FN = {"sin": "_m.sin", "cos": "_m.cos", "exp": "_m.exp", "ln": "_m.log", "sqrt": "_m.sqrt", "abs": "abs"}
_NUMPY_FN = {"sin": "_np.sin", "cos": "_np.cos", "exp": "_np.exp", "ln": "_np.log", "sqrt": "_np.sqrt", "abs": "_np.abs"}


def _codegen(node: Node, vectorized: bool) -> str:
    g = lambda n: _codegen(n, vectorized)  # noqa: E731
    if isinstance(node, Num):
        v = float(node.value)
        return str(int(v)) if v.is_integer() and v < 1e15 else repr(v)
    if isinstance(node, Const):
        return repr(CONSTANTS[node.name])
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{g(node.arg)})"
    if _exp_minus_one(node) is not None:
        fn = "_np.expm1" if vectorized else "_m.expm1"
        return f"{fn}({g(_exp_minus_one(node))})"
    if type(node) in _BINARY:
        return f"({g(node.left)} {_BINARY[type(node)]} {g(node.right)})"
    if isinstance(node, Compare):
        return f"({g(node.left)} {node.op} {g(node.right)})"
    if isinstance(node, Pow):
        c = _constant_value(node.exponent)
        if vectorized:
            return f"_np.power({g(node.base)}, {c!r})"
        return f"_pow({g(node.base)}, {c!r})"
    if isinstance(node, Call):
        args = [g(a) for a in node.args]
        if node.name in ("min", "max"):
            fn = f"_{node.name}" if vectorized else node.name
            return f"{fn}({args[0]}, {args[1]})"
        table = _NUMPY_FN if vectorized else _MATH_FN
        return f"{table[node.name]}({args[0]})"
    if isinstance(node, Piecewise):
        if vectorized:
            conds = ", ".join(g(c) for c, _ in node.branches)
            values = ", ".join(g(v) for _, v in node.branches)
            default = g(node.default) if node.default is not None else "_np.nan"
            return f"_select([{conds}], [{values}], {default})"
        out = g(node.default) if node.default is not None else "_nobranch()"
        for cond, value in reversed(node.branches):
            out = f"({g(value)} if {g(cond)} else {out})"
        return out
    raise TypeError(f"cannot compile {node!r}")


def _compile(node: Node, order: Sequence[str], vectorized: bool) -> Callable:
    src = f"def _fn({', '.join(order)}):\n    return {_codegen(node, vectorized)}\n"
    ns = dict(_NUMPY_NS if vectorized else _MATH_NS)
    exec(compile(src, "<uniqcert-expr>", "exec"), ns)  # source built from a validated AST
    return ns["_fn"]


# ---------------------------------------------------------------------------
# Expr
# ---------------------------------------------------------------------------


def _is_array(v) -> bool:
    return isinstance(v, np.ndarray) and v.ndim > 0


@dataclass(frozen=True)
class Expr:
    """A parsed expression together with its declared variable signature."""

    root: Node
    variables: tuple = DEFAULT_VARIABLES
    source: str | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        extra = self.free_variables - set(self.variables)
        if extra:
            raise UnknownVariable(f"undeclared variable(s): {', '.join(sorted(extra))}")

    def __str__(self):
        return to_text(self.root)

    @classmethod
    def constant(cls, value: float, variables: Sequence[str] = DEFAULT_VARIABLES) -> "Expr":
        value = float(value)
        node = Num(abs(value))
        return cls(Neg(node) if value < 0 else node, tuple(variables))

    @cached_property
    def free_variables(self) -> frozenset:
        return free_variables(self.root)

    def rename(self, mapping: Mapping[str, str]) -> "Expr":
        names = tuple(dict.fromkeys(mapping.get(v, v) for v in self.variables))
        return Expr(rename(self.root, mapping), names)

    @cached_property
    def _order(self) -> tuple:
        return tuple(sorted(self.free_variables))

    @cached_property
    def _scalar_fn(self) -> Callable:
        return _compile(self.root, self._order, vectorized=False)

    @cached_property
    def _vector_fn(self) -> Callable:
        return _compile(self.root, self._order, vectorized=True)

    def compile(self, order: Sequence[str]) -> Callable:
        """Fast scalar function of positional arguments named by ``order``.

        Unlike :meth:`eval` this skips per-call binding checks; domain
        failures still raise DomainError.
        """
        missing = self.free_variables - set(order)
        if missing:
            raise UnknownVariable(f"no argument for variable(s): {', '.join(sorted(missing))}")
        fn = _compile(self.root, tuple(order), vectorized=False)
        root = self.root

        def checked(*args):
            args = [float(a) for a in args]
            try:
                out = fn(*args)
            except (ValueError, ZeroDivisionError, OverflowError, ArithmeticError):
                out = math.nan
            if not math.isfinite(out):
                _diagnose(root, dict(zip(order, args)))
            return out

        return checked

    def _args(self, env: Mapping) -> list:
        try:
            return [env[v] for v in self._order]
        except KeyError as exc:
            raise UnknownVariable(f"no binding for variable {exc.args[0]!r}") from None

    def eval(self, env: Mapping):
        """Value at ``env``.  Array bindings broadcast and give an array."""
        args = self._args(env)
        if not any(_is_array(a) for a in args):
            args = [float(a) for a in args]
            try:
                out = self._scalar_fn(*args)
            except (ValueError, ZeroDivisionError, OverflowError, ArithmeticError):
                out = math.nan
            if not math.isfinite(out):
                _diagnose(self.root, {v: env[v] for v in self._order})
            return float(out)
        arrays = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
        shape = arrays[0].shape
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._vector_fn(*arrays), dtype=float), shape)
        bad = ~np.isfinite(out)
        if bad.any():
            idx = np.flatnonzero(bad.ravel())[0]
            _diagnose(self.root, {v: a.ravel()[idx] for v, a in zip(self._order, arrays)})
        return out

    def partial(self, var: str, env: Mapping, order: int = 1):
        """Forward-mode partial derivative with respect to ``var``.

        ``order=2`` nests dual numbers (used internally for curvature bounds).
        """
        if var not in self.variables:
            raise UnknownVariable(f"variable {var!r} is not declared")
        args = self._args(env)
        names = list(self._order)
        if var not in self.free_variables:
            self.eval(env)
            shape = np.broadcast_shapes(*[np.shape(a) for a in args]) if args else ()
            return np.zeros(shape) if shape else 0.0
        arrays = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
        shape = arrays[0].shape
        point = dict(zip(names, arrays))
        point[var] = _seed(point[var], order)
        with np.errstate(all="ignore"):
            out = _walk(self.root, point, strict=False)
        if not _finite(out):
            bad = np.zeros(shape, dtype=bool)
            for c in _components(out):
                bad |= ~np.isfinite(np.broadcast_to(c, shape))
            idx = int(np.flatnonzero(bad.ravel())[0])
            single = {n: float(a.ravel()[idx]) for n, a in zip(names, arrays)}
            spot = dict(single)
            spot[var] = _seed(single[var], order)
            try:
                with np.errstate(all="ignore"):
                    _walk(self.root, spot, strict=True)
            except DomainError as exc:
                raise DomainError(exc.reason, exc.node, single) from None
            raise DomainError("non-finite derivative", self.root, single)
        for _ in range(order):
            out = out.d if isinstance(out, Dual) else 0.0
        result = np.broadcast_to(np.asarray(out, dtype=float), shape)
        return float(result) if not shape else result


def _seed(value, order: int):
    if order == 1:
        return Dual(value, 1.0)
    if order == 2:
        return Dual(Dual(value, 1.0), Dual(1.0, 0.0))
    raise ValueError("only first and second derivatives are supported")


def _diagnose(root: Node, point: Mapping):
    point = {k: float(v) for k, v in point.items()}
    try:
        with np.errstate(all="ignore"):
            _walk(root, point, strict=True)
    except DomainError as exc:
        raise DomainError(exc.reason, exc.node, point) from None
    raise DomainError("non-finite value", root, point)


def evaluate(e: Expr, env: Mapping):
    return e.eval(env)


def partial(e: Expr, var: str, env: Mapping):
    return e.partial(var, env)


def kink_expressions(e: Expr) -> list[Expr]:
    """Sub-expressions whose sign changes mark derivative kinks.

    Arguments of ``abs``, differences of ``min``/``max`` arguments and the
    two sides of piecewise conditions.
    """
    out = []
    for node in walk(e.root):
        if isinstance(node, Call) and node.name == "abs":
            out.append(node.args[0])
        elif isinstance(node, Call) and node.name in ("min", "max"):
            out.append(Sub(node.args[0], node.args[1]))
        elif isinstance(node, Compare):
            out.append(Sub(node.left, node.right))
    return [Expr(n, e.variables) for n in dict.fromkeys(out)]
