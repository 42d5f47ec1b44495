"""Closed predicate library and the boolean expressions built from it.

Expressions are ``and``/``or`` combinations of calls, e.g.
``behind_vehicle(ambulance1, "ego-vehicle") and is_currently_moving(ambulance1)``.
``and`` binds tighter than ``or``; parentheses group.  Arguments are bare
identifiers (hyphens allowed), quoted strings or numbers.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

# name -> (arity, indices of arguments that name agents)
LIBRARY: dict[str, tuple[int, tuple[int, ...]]] = {
    "behind_vehicle": (2, (0, 1)),
    "right_in_front": (2, (0, 1)),
    "are_close_by": (2, (0, 1)),
    "is_currently_moving": (1, (0,)),
    "is_currently_stopped": (1, (0,)),
    "is_braking": (1, (0,)),
    "is_ego_driving_steady": (1, (0,)),
    "in_lane": (2, (0,)),
    "at_intersection": (1, (0,)),
    "property_is": (3, (0,)),
    "gnss_error_exceeds": (2, (0,)),
}

# Rendered into the grounding prompt.
SIGNATURES = {
    "behind_vehicle": "behind_vehicle(agent, other): agent is behind other, travelling the same way",
    "right_in_front": "right_in_front(agent, other): agent is just ahead of other",
    "are_close_by": "are_close_by(agent, other): the two are near each other",
    "is_currently_moving": "is_currently_moving(agent): agent is moving",
    "is_currently_stopped": "is_currently_stopped(agent): agent has come to a standstill",
    "is_braking": "is_braking(agent): agent is decelerating",
    "is_ego_driving_steady": "is_ego_driving_steady(agent): agent holds its target speed",
    "in_lane": "in_lane(agent, lane_id): agent occupies the lane",
    "at_intersection": "at_intersection(agent): agent is inside an intersection box",
    "property_is": "property_is(agent, key, value): discrete property of the agent has the value",
    "gnss_error_exceeds": "gnss_error_exceeds(agent, meters): GNSS reading is off by more than meters",
}


class ExprError(ValueError):
    pass


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Union[str, float], ...]

    def agents(self) -> list[str]:
        idx = LIBRARY.get(self.name, (0, ()))[1]
        return [str(self.args[i]) for i in idx if i < len(self.args)]


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    terms: tuple["Expr", ...]


Expr = Union[Call, BoolOp]

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<str>"[^"]*"|'[^']*')
      | (?P<num>-?\d+(?:\.\d+)?(?![\w-]))
      | (?P<word>[A-Za-z_][\w-]*)
      | (?P<punct>[(),])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprError(f"unexpected character at {pos} in {text!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def _join(op: str, terms: list) -> Expr:
    if len(terms) == 1:
        return terms[0]
    flat = []
    for t in terms:
        flat.extend(t.terms if isinstance(t, BoolOp) and t.op == op else [t])
    return BoolOp(op, tuple(flat))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ExprError(f"expected {value or 'token'} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        expr = self.or_expr()
        if self.i != len(self.toks):
            raise ExprError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return expr

    def or_expr(self) -> Expr:
        terms = [self.and_expr()]
        while self.peek() == ("word", "or"):
            self.take()
            terms.append(self.and_expr())
        return _join("or", terms)

    def and_expr(self) -> Expr:
        terms = [self.atom()]
        while self.peek() == ("word", "and"):
            self.take()
            terms.append(self.atom())
        return _join("and", terms)

    def atom(self) -> Expr:
        kind, value = self.peek()
        if value == "(":
            self.take("(")
            inner = self.or_expr()
            self.take(")")
            return inner
        if kind != "word" or value in ("and", "or"):
            raise ExprError(f"expected predicate call, got {value!r} in {self.text!r}")
        self.take()
        self.take("(")
        args: list = []
        if self.peek()[1] != ")":
            while True:
                args.append(self.arg())
                if self.peek()[1] == ",":
                    self.take(",")
                    continue
                break
        self.take(")")
        return Call(value, tuple(args))

    def arg(self):
        kind, value = self.take()
        if kind == "str":
            return value[1:-1]
        if kind == "num":
            return float(value)
        if kind == "word":
            return value
        raise ExprError(f"bad argument {value!r} in {self.text!r}")


def parse_expr(text: str) -> Expr:
    if not text or not text.strip():
        raise ExprError("empty expression")
    return _Parser(text).parse()


def calls(expr: Expr) -> list[Call]:
    if isinstance(expr, Call):
        return [expr]
    return [c for t in expr.terms for c in calls(t)]


def _fmt_arg(a) -> str:
    if isinstance(a, float):
        return repr(int(a)) if a.is_integer() else repr(a)
    return f'"{a}"'


def format_expr(expr: Expr, _parent: str = "") -> str:
    if isinstance(expr, Call):
        return f"{expr.name}({', '.join(_fmt_arg(a) for a in expr.args)})"
    inner = f" {expr.op} ".join(format_expr(t, expr.op) for t in expr.terms)
    return f"({inner})" if _parent == "and" and expr.op == "or" else inner


def check_calls(expr: Expr, agents: set[str] | None = None) -> list[str]:
    """Problems with library membership, arity and agent references."""
    problems = []
    for c in calls(expr):
        if c.name not in LIBRARY:
            problems.append(f"unknown predicate '{c.name}'")
            continue
        arity = LIBRARY[c.name][0]
        if len(c.args) != arity:
            problems.append(f"predicate '{c.name}' takes {arity} argument(s), got {len(c.args)}")
            continue
        if agents is not None:
            for a in c.agents():
                if a not in agents:
                    problems.append(f"predicate '{c.name}' references unknown agent '{a}'")
    return problems


def evaluate(expr: Expr, leaf) -> bool:
    """Evaluate ``expr`` with ``leaf(call) -> bool`` for the predicate calls."""
    if isinstance(expr, Call):
        return bool(leaf(expr))
    if expr.op == "and":
        return all(evaluate(t, leaf) for t in expr.terms)
    return any(evaluate(t, leaf) for t in expr.terms)
