"""Guard and argument expression language for FSM control programs.

Expressions come in two interchangeable forms: a JSON tree (the wire format
embedded in program documents) and a compact text form (what the language
model writes).  Both sides round-trip through the same AST.

JSON form: leaves are ``{"lit": value}`` or ``{"var": name}``; interior nodes
are ``{"op": name, "args": [...]}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Union

# Kinds a value can have at runtime.  "any" never describes a concrete value;
# it is the checker's wildcard for positions it cannot pin down statically.
VALUE_KINDS = ("number", "boolean", "string", "list", "record", "null")

UNARY_OPS = ("not", "neg", "len")
BINARY_OPS = (
    "or", "and",
    "lt", "le", "gt", "ge", "eq", "ne", "in",
    "add", "sub", "mul", "div",
    "index",
)


class ExprError(Exception):
    """Base for everything this module raises on purpose."""


class ExprSyntaxError(ExprError):
    pass


class ExprDecodeError(ExprError):
    pass


class ExprTypeError(ExprError):
    def __init__(self, message: str, code: str = "KindMismatch"):
        super().__init__(message)
        self.code = code


class ExprEvalError(ExprError):
    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Lit:
    value: Any


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class ListLit:
    items: tuple


@dataclass(frozen=True)
class Else:
    """Catch-all guard; always evaluates to true."""


Expr = Union[Lit, Var, Unary, Binary, ListLit, Else]


def kind_of(value: Any) -> str:
    """Runtime kind of a value.  bool is checked before int on purpose."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "record"
    raise ExprError(f"value of unsupported python type {type(value).__name__!r}")


# ---------------------------------------------------------------------------
# JSON codec


def to_json_dict(expr: Expr) -> dict:
    if isinstance(expr, Lit):
        return {"lit": expr.value}
    if isinstance(expr, Var):
        return {"var": expr.name}
    if isinstance(expr, Unary):
        return {"op": expr.op, "args": [to_json_dict(expr.operand)]}
    if isinstance(expr, Binary):
        return {"op": expr.op, "args": [to_json_dict(expr.left), to_json_dict(expr.right)]}
    if isinstance(expr, ListLit):
        return {"op": "list", "args": [to_json_dict(item) for item in expr.items]}
    if isinstance(expr, Else):
        return {"op": "else", "args": []}
    raise ExprError(f"not an expression: {expr!r}")


def from_json_dict(node: Any) -> Expr:
    if not isinstance(node, dict):
        raise ExprDecodeError(f"expression node must be an object, got {type(node).__name__}")
    if "lit" in node:
        value = node["lit"]
        _check_literal(value)
        return Lit(value)
    if "var" in node:
        name = node["var"]
        if not isinstance(name, str) or not _IDENT_RE.fullmatch(name):
            raise ExprDecodeError(f"bad variable name {name!r}")
        return Var(name)
    if "op" not in node:
        raise ExprDecodeError(f"expression node needs 'lit', 'var' or 'op': {node!r}")
    op = node["op"]
    args = node.get("args", [])
    if not isinstance(args, list):
        raise ExprDecodeError("'args' must be an array")
    if op == "else":
        if args:
            raise ExprDecodeError("'else' takes no arguments")
        return Else()
    if op == "list":
        return ListLit(tuple(from_json_dict(a) for a in args))
    if op in UNARY_OPS:
        if len(args) != 1:
            raise ExprDecodeError(f"'{op}' takes 1 argument, got {len(args)}")
        return Unary(op, from_json_dict(args[0]))
    if op in BINARY_OPS:
        if len(args) != 2:
            raise ExprDecodeError(f"'{op}' takes 2 arguments, got {len(args)}")
        return Binary(op, from_json_dict(args[0]), from_json_dict(args[1]))
    raise ExprDecodeError(f"unknown operator {op!r}")


def _check_literal(value: Any, depth: int = 0) -> None:
    if depth > 32:
        raise ExprDecodeError("literal nests too deeply")
    if value is None or isinstance(value, (bool, int, float, str)):
        return
    if isinstance(value, list):
        for item in value:
            _check_literal(item, depth + 1)
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise ExprDecodeError("record literal keys must be strings")
            _check_literal(item, depth + 1)
        return
    raise ExprDecodeError(f"unsupported literal {value!r}")


# ---------------------------------------------------------------------------
# Text form

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>\d+\.\d+|\d+)
      | (?P<str>"(?:[^"\\]|\\.)*")
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<punct><=|>=|==|!=|[<>+\-*/()\[\],])
    )""",
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "in", "len", "true", "false", "null", "else"}


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise ExprSyntaxError(f"cannot tokenize at {text[pos:pos + 12]!r}")
        pos = match.end()
        if match.lastgroup == "num":
            raw = match.group("num")
            tokens.append(("num", float(raw) if "." in raw else int(raw)))
        elif match.lastgroup == "str":
            try:
                tokens.append(("str", json.loads(match.group("str"))))
            except json.JSONDecodeError as exc:
                raise ExprSyntaxError(f"bad string literal: {exc}") from exc
        elif match.lastgroup == "ident":
            word = match.group("ident")
            tokens.append(("kw", word) if word in _KEYWORDS else ("ident", word))
        else:
            tokens.append(("punct", match.group("punct")))
    return tokens


class _Parser:
    def __init__(self, tokens: list):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self):
        token = self.peek()
        self.pos += 1
        return token

    def expect(self, kind: str, value: str):
        token = self.take()
        if token != (kind, value):
            raise ExprSyntaxError(f"expected {value!r}, got {token[1]!r}")

    def parse(self) -> Expr:
        expr = self.or_expr()
        if self.pos != len(self.tokens):
            raise ExprSyntaxError(f"trailing input at {self.peek()[1]!r}")
        return expr

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.peek() == ("kw", "or"):
            self.take()
            left = Binary("or", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.peek() == ("kw", "and"):
            self.take()
            left = Binary("and", left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.peek() == ("kw", "not"):
            self.take()
            return Unary("not", self.not_expr())
        return self.comparison()

    _CMP = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "==": "eq", "!=": "ne"}

    def comparison(self) -> Expr:
        left = self.arith()
        kind, value = self.peek()
        if kind == "punct" and value in self._CMP:
            self.take()
            return Binary(self._CMP[value], left, self.arith())
        if (kind, value) == ("kw", "in"):
            self.take()
            return Binary("in", left, self.arith())
        return left

    def arith(self) -> Expr:
        left = self.term()
        while self.peek()[0] == "punct" and self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            left = Binary("add" if op == "+" else "sub", left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[0] == "punct" and self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            left = Binary("mul" if op == "*" else "div", left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.peek() == ("punct", "-"):
            self.take()
            return Unary("neg", self.unary())
        return self.postfix()

    def postfix(self) -> Expr:
        expr = self.atom()
        while self.peek() == ("punct", "["):
            self.take()
            index = self.or_expr()
            self.expect("punct", "]")
            expr = Binary("index", expr, index)
        return expr

    def atom(self) -> Expr:
        kind, value = self.take()
        if kind == "num" or kind == "str":
            return Lit(value)
        if kind == "kw":
            if value == "true":
                return Lit(True)
            if value == "false":
                return Lit(False)
            if value == "null":
                return Lit(None)
            if value == "else":
                return Else()
            if value == "len":
                self.expect("punct", "(")
                inner = self.or_expr()
                self.expect("punct", ")")
                return Unary("len", inner)
            raise ExprSyntaxError(f"keyword {value!r} cannot start an expression")
        if kind == "ident":
            return Var(value)
        if (kind, value) == ("punct", "("):
            inner = self.or_expr()
            self.expect("punct", ")")
            return inner
        if (kind, value) == ("punct", "["):
            items = []
            if self.peek() != ("punct", "]"):
                items.append(self.or_expr())
                while self.peek() == ("punct", ","):
                    self.take()
                    items.append(self.or_expr())
            self.expect("punct", "]")
            return ListLit(tuple(items))
        raise ExprSyntaxError(f"unexpected token {value!r}")


def parse(text: str) -> Expr:
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression")
    return _Parser(_tokenize(text)).parse()


_PRECEDENCE = {
    "or": 1, "and": 2,
    "lt": 4, "le": 4, "gt": 4, "ge": 4, "eq": 4, "ne": 4, "in": 4,
    "add": 5, "sub": 5,
    "mul": 6, "div": 6,
    "index": 8,
}
_SYMBOL = {
    "or": "or", "and": "and",
    "lt": "<", "le": "<=", "gt": ">", "ge": ">=", "eq": "==", "ne": "!=",
    "in": "in", "add": "+", "sub": "-", "mul": "*", "div": "/",
}


def to_text(expr: Expr) -> str:
    return _render(expr, 0)


def _render(expr: Expr, parent_prec: int) -> str:
    if isinstance(expr, Lit):
        return json.dumps(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Else):
        return "else"
    if isinstance(expr, ListLit):
        return "[" + ", ".join(_render(item, 0) for item in expr.items) + "]"
    if isinstance(expr, Unary):
        if expr.op == "len":
            return f"len({_render(expr.operand, 0)})"
        if expr.op == "not":
            inner = _render(expr.operand, 3)
            text = f"not {inner}"
            return f"({text})" if parent_prec > 3 else text
        inner = _render(expr.operand, 7)
        text = f"-{inner}"
        return f"({text})" if parent_prec > 7 else text
    if isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        if expr.op == "index":
            return f"{_render(expr.left, prec)}[{_render(expr.right, 0)}]"
        # left-associative, except comparisons which do not chain at all
        left_prec = prec + 1 if prec == 4 else prec
        text = f"{_render(expr.left, left_prec)} {_SYMBOL[expr.op]} {_render(expr.right, prec + 1)}"
        return f"({text})" if parent_prec > prec else text
    raise ExprError(f"not an expression: {expr!r}")


# ---------------------------------------------------------------------------
# Static checking

_NUMERIC = ("number", "any")
_BOOLISH = ("boolean", "any")


def typecheck(expr: Expr, declared: dict) -> str:
    """Return the kind of ``expr`` under the declared variable kinds.

    Raises ExprTypeError for undeclared variables and kind mismatches.  "any"
    is accepted anywhere and propagates out of indexing, since element kinds
    are not tracked.
    """
    if isinstance(expr, Lit):
        return kind_of(expr.value)
    if isinstance(expr, Var):
        if expr.name not in declared:
            raise ExprTypeError(f"undeclared variable {expr.name!r}", code="UndefinedVariable")
        return declared[expr.name]
    if isinstance(expr, Else):
        return "boolean"
    if isinstance(expr, ListLit):
        for item in expr.items:
            typecheck(item, declared)
        return "list"
    if isinstance(expr, Unary):
        inner = typecheck(expr.operand, declared)
        if expr.op == "not":
            if inner not in _BOOLISH:
                raise ExprTypeError(f"'not' needs a boolean, got {inner}")
            return "boolean"
        if expr.op == "neg":
            if inner not in _NUMERIC:
                raise ExprTypeError(f"negation needs a number, got {inner}")
            return "number"
        if inner not in ("list", "string", "any"):
            raise ExprTypeError(f"len() needs a list or string, got {inner}")
        return "number"
    if isinstance(expr, Binary):
        left = typecheck(expr.left, declared)
        right = typecheck(expr.right, declared)
        op = expr.op
        if op in ("and", "or"):
            for side in (left, right):
                if side not in _BOOLISH:
                    raise ExprTypeError(f"'{op}' needs booleans, got {side}")
            return "boolean"
        if op in ("add", "sub", "mul", "div"):
            for side in (left, right):
                if side not in _NUMERIC:
                    raise ExprTypeError(f"arithmetic needs numbers, got {side}")
            return "number"
        if op in ("lt", "le", "gt", "ge"):
            if left in _NUMERIC and right in _NUMERIC:
                return "boolean"
            if left in ("string", "any") and right in ("string", "any"):
                return "boolean"
            raise ExprTypeError(f"cannot order {left} against {right}")
        if op in ("eq", "ne"):
            return "boolean"
        if op == "in":
            if right not in ("list", "any"):
                raise ExprTypeError(f"'in' needs a list on the right, got {right}")
            return "boolean"
        if op == "index":
            if left in ("list", "any"):
                if right not in _NUMERIC and left == "list":
                    raise ExprTypeError(f"list index must be a number, got {right}")
                return "any"
            if left == "record":
                if right not in ("string", "any"):
                    raise ExprTypeError(f"record key must be a string, got {right}")
                return "any"
            raise ExprTypeError(f"cannot index into {left}")
    raise ExprError(f"not an expression: {expr!r}")


# ---------------------------------------------------------------------------
# Evaluation


def _want_number(value: Any, context: str) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ExprEvalError(f"{context} needs a number, got {kind_of(value)}", code="KindMismatch")
    return value


def _want_boolean(value: Any, context: str) -> bool:
    if not isinstance(value, bool):
        raise ExprEvalError(f"{context} needs a boolean, got {kind_of(value)}", code="KindMismatch")
    return value


def strict_eq(a: Any, b: Any) -> bool:
    """Equality with no bool/number coercion at the top level."""
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    return a == b


def evaluate(expr: Expr, env: dict) -> Any:
    """Evaluate against a variable environment.  Strict: any kind violation
    raises ExprEvalError instead of coercing."""
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Var):
        if expr.name not in env:
            raise ExprEvalError(f"undefined variable {expr.name!r}", code="UndefinedVariable")
        return env[expr.name]
    if isinstance(expr, Else):
        return True
    if isinstance(expr, ListLit):
        return [evaluate(item, env) for item in expr.items]
    if isinstance(expr, Unary):
        if expr.op == "not":
            return not _want_boolean(evaluate(expr.operand, env), "'not'")
        if expr.op == "neg":
            return -_want_number(evaluate(expr.operand, env), "negation")
        value = evaluate(expr.operand, env)
        if not isinstance(value, (list, str)):
            raise ExprEvalError(f"len() needs a list or string, got {kind_of(value)}", code="KindMismatch")
        return len(value)
    if isinstance(expr, Binary):
        op = expr.op
        if op in ("and", "or"):
            left = _want_boolean(evaluate(expr.left, env), f"'{op}'")
            if op == "and" and not left:
                return False
            if op == "or" and left:
                return True
            return _want_boolean(evaluate(expr.right, env), f"'{op}'")
        left = evaluate(expr.left, env)
        right = evaluate(expr.right, env)
        if op in ("add", "sub", "mul", "div"):
            a = _want_number(left, "arithmetic")
            b = _want_number(right, "arithmetic")
            if op == "add":
                return a + b
            if op == "sub":
                return a - b
            if op == "mul":
                return a * b
            if b == 0:
                raise ExprEvalError("division by zero", code="DivisionByZero")
            return a / b
        if op in ("lt", "le", "gt", "ge"):
            if isinstance(left, str) and isinstance(right, str):
                a, b = left, right
            else:
                a = _want_number(left, "comparison")
                b = _want_number(right, "comparison")
            if op == "lt":
                return a < b
            if op == "le":
                return a <= b
            if op == "gt":
                return a > b
            return a >= b
        if op == "eq":
            return strict_eq(left, right)
        if op == "ne":
            return not strict_eq(left, right)
        if op == "in":
            if not isinstance(right, list):
                raise ExprEvalError(f"'in' needs a list on the right, got {kind_of(right)}", code="KindMismatch")
            return any(strict_eq(left, item) for item in right)
        if op == "index":
            if isinstance(left, list):
                idx = _want_number(right, "list index")
                if isinstance(idx, float):
                    if not idx.is_integer():
                        raise ExprEvalError(f"list index must be an integer, got {idx}", code="KindMismatch")
                    idx = int(idx)
                if not -len(left) <= idx < len(left):
                    raise ExprEvalError(f"index {idx} out of range for list of {len(left)}", code="IndexOutOfRange")
                return left[idx]
            if isinstance(left, dict):
                if not isinstance(right, str):
                    raise ExprEvalError(f"record key must be a string, got {kind_of(right)}", code="KindMismatch")
                if right not in left:
                    raise ExprEvalError(f"record has no key {right!r}", code="MissingKey")
                return left[right]
            raise ExprEvalError(f"cannot index into {kind_of(left)}", code="KindMismatch")
    raise ExprError(f"not an expression: {expr!r}")
