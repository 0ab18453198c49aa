"""Immutable symbolic expression trees: parsing, printing, differentiation.

Expressions are hash-consed: structurally identical subtrees are the same
object, so structural equality is identity and large derived expressions
share storage as DAGs.
"""

from __future__ import annotations

import threading
from typing import Iterator

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt")

_intern_lock = threading.Lock()
_intern_table: dict[tuple, "Expression"] = {}


class ExprSyntaxError(ValueError):
    """Raised on malformed expression text; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class Expression:
    """A node in an immutable expression DAG.

    kind is one of 'const', 'var', 'param', 'neg', 'add', 'sub', 'mul',
    'div', 'pow', 'call'.  Integer constants keep exact int values so the
    power rule stays exact.  The imaginary unit is Constant(1j).
    """

    __slots__ = ("kind", "value", "name", "args", "_hash", "__weakref__")

    def __new__(cls, kind, value=None, name=None, args=()):
        key = (kind, value, name if name is not None else None, tuple(id(a) for a in args))
        with _intern_lock:
            hit = _intern_table.get(key)
            if hit is not None:
                return hit
            self = object.__new__(cls)
            self.kind = kind
            self.value = value
            self.name = name
            self.args = tuple(args)
            self._hash = hash((kind, repr(value), name, self.args))
            _intern_table[key] = self
            return self

    def __hash__(self):
        return self._hash

    # Interning makes identity coincide with structural equality.
    def __eq__(self, other):
        return self is other

    def __repr__(self):
        return f"Expression({to_text(self)!r})"

    def __iter__(self) -> Iterator["Expression"]:
        """Postorder traversal of unique nodes."""
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                yield node
            else:
                stack.append((node, True))
                for a in node.args:
                    stack.append((a, False))

    # Operator sugar, used heavily when building condition residuals.
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return pow_(self, as_expr(other))

    def __neg__(self):
        return neg(self)


def constant(value) -> Expression:
    if isinstance(value, bool):
        raise TypeError("bool is not a valid constant")
    if isinstance(value, complex) and value.imag == 0.0:
        value = value.real
    if isinstance(value, float) and value.is_integer() and abs(value) < 2**53:
        value = int(value)
    return Expression("const", value=value)


def variable(name: str) -> Expression:
    return Expression("var", name=name)


def parameter(name: str) -> Expression:
    return Expression("param", name=name)


IMAG_UNIT = constant(1j)
ZERO = constant(0)
ONE = constant(1)


def as_expr(x) -> Expression:
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, float, complex)):
        return constant(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to Expression")


def neg(a: Expression) -> Expression:
    return Expression("neg", args=(a,))


def add(a: Expression, b: Expression) -> Expression:
    return Expression("add", args=(a, b))


def sub(a: Expression, b: Expression) -> Expression:
    return Expression("sub", args=(a, b))


def mul(a: Expression, b: Expression) -> Expression:
    return Expression("mul", args=(a, b))


def div(a: Expression, b: Expression) -> Expression:
    return Expression("div", args=(a, b))


def pow_(a: Expression, b: Expression) -> Expression:
    return Expression("pow", args=(a, b))


def call(fname: str, a: Expression) -> Expression:
    if fname not in FUNCTIONS:
        raise ValueError(f"unknown function {fname!r}")
    return Expression("call", name=fname, args=(a,))


def free_names(e: Expression) -> frozenset:
    """Names of all variables and parameters appearing in e."""
    return frozenset(n.name for n in e if n.kind in ("var", "param"))


def substitute(e: Expression, mapping: dict) -> Expression:
    """Replace variables/parameters by expressions, by name."""
    memo: dict[int, Expression] = {}

    def walk(node):
        got = memo.get(id(node))
        if got is not None:
            return got
        if node.kind in ("var", "param"):
            out = mapping.get(node.name, node)
            out = as_expr(out)
        elif node.kind == "const":
            out = node
        else:
            new_args = tuple(walk(a) for a in node.args)
            out = node if new_args == node.args else Expression(
                node.kind, value=node.value, name=node.name, args=new_args)
        memo[id(node)] = out
        return out

    return walk(e)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
#
# expr   := term (('+'|'-') term)*
# term   := factor (('*'|'/') factor)*
# factor := unary ('^' factor)?
# unary  := '-' unary | atom
# atom   := number | 'i' | ident | ident '(' expr ')' | '(' expr ')'


class _Parser:
    def __init__(self, text: str, param_names=()):
        self.text = text
        self.pos = 0
        self.params = frozenset(param_names)

    def error(self, message):
        raise ExprSyntaxError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\n\r":
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch):
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def parse(self) -> Expression:
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected character {self.text[self.pos]!r}")
        return e

    def expr(self):
        e = self.term()
        while True:
            if self.take("+"):
                e = add(e, self.term())
            elif self.take("-"):
                e = sub(e, self.term())
            else:
                return e

    def term(self):
        e = self.factor()
        while True:
            if self.take("*"):
                e = mul(e, self.factor())
            elif self.take("/"):
                e = div(e, self.factor())
            else:
                return e

    def factor(self):
        base = self.unary()
        if self.take("^"):
            return pow_(base, self.factor())
        return base

    def unary(self):
        if self.take("-"):
            return neg(self.unary())
        return self.atom()

    def atom(self):
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            e = self.expr()
            if not self.take(")"):
                self.error("expected ')'")
            return e
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch.isalpha() or ch == "_":
            return self.ident()
        self.error("expected a number, name or '('" if ch else "unexpected end of input")

    def number(self):
        start = self.pos
        text = self.text
        while self.pos < len(text) and text[self.pos].isdigit():
            self.pos += 1
        is_float = False
        if self.pos < len(text) and text[self.pos] == ".":
            is_float = True
            self.pos += 1
            while self.pos < len(text) and text[self.pos].isdigit():
                self.pos += 1
        if self.pos < len(text) and text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(text) and text[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(text) and text[self.pos].isdigit():
                is_float = True
                while self.pos < len(text) and text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark  # 'e' belongs to a following identifier
        tok = text[start:self.pos]
        if tok in (".", ""):
            self.pos = start
            self.error("malformed number")
        return constant(float(tok) if is_float else int(tok))

    def ident(self):
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isalnum() or text[self.pos] == "_"):
            self.pos += 1
        name = text[start:self.pos]
        if name == "i":
            return IMAG_UNIT
        if self.peek() == "(":
            if name not in FUNCTIONS:
                self.pos = start
                raise UnknownFunctionError(f"unknown function {name!r}", start)
            self.pos += 1
            arg = self.expr()
            if not self.take(")"):
                self.error("expected ')'")
            return call(name, arg)
        if name in self.params:
            return parameter(name)
        return variable(name)


def parse(text: str, param_names=()) -> Expression:
    """Parse expression text; names in param_names become parameter nodes."""
    return _Parser(text, param_names).parse()


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------

# Precedence levels used to insert the minimal parentheses that keep the
# parse(print(e)) round trip structural.
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4,
         "const": 9, "var": 9, "param": 9, "call": 9}


def _const_text(value):
    if value == 1j:
        return "i", 9
    if isinstance(value, complex):
        re, im = value.real, value.imag
        if re == 0:
            return f"{_num(im)}*i", 2
        return f"({_num(re)} + {_num(im)}*i)", 9
    if isinstance(value, (int, float)) and value < 0:
        return f"-{_num(-value)}", 3
    return _num(value), 9


def _num(v):
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer() and abs(v) < 2**53):
        return str(int(v))
    return repr(v)


def to_text(e: Expression) -> str:
    """Render e in the input grammar."""

    def walk(node):
        k = node.kind
        if k == "const":
            return _const_text(node.value)
        if k in ("var", "param"):
            return node.name, 9
        if k == "call":
            body, _ = walk(node.args[0])
            return f"{node.name}({body})", 9
        if k == "neg":
            body, prec = walk(node.args[0])
            # '-' applies to a whole unary only: -a*b or -a^2 would rebind.
            if prec != 9 and prec != _PREC["neg"]:
                body = f"({body})"
            return f"-{body}", _PREC["neg"]
        a, b = node.args
        at, ap = walk(a)
        bt, bp = walk(b)
        if k in ("add", "sub"):
            if ap < 1:
                at = f"({at})"
            if bp <= 1:  # right side of +/- must bind tighter (left assoc)
                bt = f"({bt})"
            op = "+" if k == "add" else "-"
            return f"{at} {op} {bt}", 1
        if k in ("mul", "div"):
            if ap < 2:
                at = f"({at})"
            if bp <= 2:
                bt = f"({bt})"
            op = "*" if k == "mul" else "/"
            return f"{at}{op}{bt}", 2
        if k == "pow":
            if ap <= 4:  # base of ^ may not itself be an un-parenthesized unary/pow
                at = f"({at})"
            if bp < 4:
                bt = f"({bt})"
            return f"{at}^{bt}", 4
        raise AssertionError(k)

    text, _ = walk(e)
    return text


# ---------------------------------------------------------------------------
# basic simplification
# ---------------------------------------------------------------------------


def _is_const(e, v=None):
    return e.kind == "const" and (v is None or e.value == v)


def _fold_const(v):
    # Negative real constants are kept as neg(positive) so printed output
    # reparses to the same tree.
    if isinstance(v, complex):
        return constant(v)
    if v < 0:
        return neg(constant(-v))
    return constant(v)


def simplify_basic(e: Expression) -> Expression:
    """Constant folding and unit/zero identities.  Semantics-preserving.

    Intentionally shallow: this project identifies expressions numerically
    (see sampling.equivalent), not by canonical forms.
    """
    memo: dict[int, Expression] = {}

    def sb(node):
        got = memo.get(id(node))
        if got is not None:
            return got
        out = _simplify_node(node, sb)
        memo[id(node)] = out
        return out

    return sb(e)


def _simplify_node(node, sb):
    k = node.kind
    if k in ("const", "var", "param"):
        return node
    args = tuple(sb(a) for a in node.args)
    if k == "neg":
        (a,) = args
        if a.kind == "neg":
            return a.args[0]
        if _is_const(a, 0):
            return ZERO
        return neg(a)
    if k == "call":
        return Expression("call", name=node.name, args=args)
    a, b = args
    if k == "add":
        if _is_const(a, 0):
            return b
        if _is_const(b, 0):
            return a
        if _is_const(a) and _is_const(b):
            return _fold_const(a.value + b.value)
        return add(a, b)
    if k == "sub":
        if _is_const(b, 0):
            return a
        if _is_const(a, 0):
            return sb(neg(b))
        if _is_const(a) and _is_const(b):
            return _fold_const(a.value - b.value)
        if a is b:
            return ZERO
        return sub(a, b)
    if k == "mul":
        if _is_const(a, 0) or _is_const(b, 0):
            return ZERO
        if _is_const(a, 1):
            return b
        if _is_const(b, 1):
            return a
        if _is_const(a) and _is_const(b):
            return _fold_const(a.value * b.value)
        return mul(a, b)
    if k == "div":
        if _is_const(a, 0) and not _is_const(b, 0):
            return ZERO
        if _is_const(b, 1):
            return a
        if _is_const(a) and _is_const(b) and b.value != 0:
            q = a.value / b.value
            if isinstance(a.value, int) and isinstance(b.value, int) and a.value % b.value == 0:
                q = a.value // b.value
            return _fold_const(q)
        return div(a, b)
    if k == "pow":
        if _is_const(b, 1):
            return a
        if _is_const(b, 0):
            return ONE
        if _is_const(a, 1):
            return ONE
        if _is_const(a) and _is_const(b) and isinstance(b.value, int) and 0 <= b.value <= 16 \
                and isinstance(a.value, int):
            return _fold_const(a.value ** b.value)
        # (x^m)^n -> x^(m*n) for exact integer exponents
        if a.kind == "pow" and _is_const(a.args[1]) and _is_const(b) \
                and isinstance(a.args[1].value, int) and isinstance(b.value, int):
            return pow_(a.args[0], constant(a.args[1].value * b.value))
        return pow_(a, b)
    raise AssertionError(k)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def differentiate(e: Expression, var: str) -> Expression:
    """Exact symbolic partial derivative with respect to the named variable.

    Total on the grammar; results are run through simplify_basic to keep
    repeated differentiation from ballooning.
    """
    memo: dict[int, Expression] = {}

    def d(node):
        got = memo.get(id(node))
        if got is not None:
            return got
        out = _diff_node(node, var, d)
        memo[id(node)] = out
        return out

    return simplify_basic(d(e))


def _diff_node(node, var, d):
    k = node.kind
    if k == "const":
        return ZERO
    if k in ("var", "param"):
        return ONE if node.name == var else ZERO
    if k == "neg":
        return neg(d(node.args[0]))
    if k == "add":
        return add(d(node.args[0]), d(node.args[1]))
    if k == "sub":
        return sub(d(node.args[0]), d(node.args[1]))
    if k == "mul":
        a, b = node.args
        return add(mul(d(a), b), mul(a, d(b)))
    if k == "div":
        a, b = node.args
        return div(sub(mul(d(a), b), mul(a, d(b))), pow_(b, constant(2)))
    if k == "pow":
        a, b = node.args
        if _is_const(b) and isinstance(b.value, int):
            n = b.value
            return mul(mul(b, pow_(a, constant(n - 1))), d(a))
        # general u^v: u^v * (v' ln u + v u' / u)
        return mul(node, add(mul(d(b), call("ln", a)), mul(b, div(d(a), a))))
    if k == "call":
        (u,) = node.args
        du = d(u)
        f = node.name
        if f == "sin":
            return mul(call("cos", u), du)
        if f == "cos":
            return neg(mul(call("sin", u), du))
        if f == "tan":
            return mul(add(ONE, pow_(node, constant(2))), du)
        if f == "exp":
            return mul(node, du)
        if f == "ln":
            return div(du, u)
        if f == "sqrt":
            return div(du, mul(constant(2), node))
    raise AssertionError(k)
