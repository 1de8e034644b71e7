"""Runtime values: numbers, the unit value, constructor terms, and bottom."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union


class _Bot:
    """The undefined value. A single shared instance, BOT."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "_|_"

    def __hash__(self):
        return hash("_|_bot")


class _Unit:
    """The unit (control) value. A single shared instance, UNIT."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "()"

    def __hash__(self):
        return hash("()unit")


BOT = _Bot()
UNIT = _Unit()


@dataclass(frozen=True)
class Term:
    """A constructor application. Arguments are always defined values."""

    cons: str
    args: tuple["Value", ...] = ()

    def __post_init__(self):
        if any(v is BOT for v in self.args):
            raise ValueError("constructor terms cannot contain _|_")

    def __repr__(self):
        return f"{self.cons}({', '.join(map(repr, self.args))})"


Value = Union[_Bot, _Unit, int, float, Term]


def is_defined(v: Value) -> bool:
    return v is not BOT


def all_defined(vs) -> bool:
    return all(v is not BOT for v in vs)


def value_key(v: Value):
    """Total order on values, for deterministic sorting of mixed tuples."""
    if v is BOT:
        return (0,)
    if v is UNIT:
        return (1,)
    if isinstance(v, bool):  # guard against bools sneaking in as ints
        return (2, float(v), 0)
    if isinstance(v, (int, float)):
        # ints and floats interleave by numeric value; break ties by type
        return (2, float(v), 0 if isinstance(v, int) else 1)
    if isinstance(v, Term):
        return (3, v.cons, len(v.args), tuple(value_key(a) for a in v.args))
    raise TypeError(f"not a value: {v!r}")


def value_to_json(v: Value):
    """Encode a value for JSON output. _|_ is null; terms are objects."""
    if v is BOT:
        return None
    if v is UNIT:
        return {"unit": True}
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, Term):
        return {"cons": v.cons, "args": [value_to_json(a) for a in v.args]}
    raise TypeError(f"not a value: {v!r}")


def value_from_json(obj) -> Value:
    if obj is None:
        return BOT
    if isinstance(obj, bool):
        raise ValueError("booleans are not values; use cons T/0 and F/0")
    if isinstance(obj, (int, float)):
        return obj
    if isinstance(obj, dict):
        if obj.get("unit"):
            return UNIT
        return Term(obj["cons"], tuple(value_from_json(a) for a in obj.get("args", [])))
    raise ValueError(f"cannot decode value from {obj!r}")


def show_value(v: Value) -> str:
    """Render a value in concrete syntax (parseable by parse_value)."""
    if v is BOT:
        return "_|_"
    if v is UNIT:
        return "()"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, Term):
        return f"{v.cons}({', '.join(show_value(a) for a in v.args)})"
    raise TypeError(f"not a value: {v!r}")


def parse_value(text: str) -> Value:
    """Parse a value literal: number, (), _|_, or Cons(v, ...)."""
    v, rest = _parse_value(text.strip())
    if rest.strip():
        raise ValueError(f"trailing input after value: {rest!r}")
    return v


def _parse_value(s: str) -> tuple[Value, str]:
    s = s.lstrip()
    if not s:
        raise ValueError("expected a value")
    if s.startswith("_|_"):
        return BOT, s[3:]
    if s.startswith("()"):
        return UNIT, s[2:]
    if s[0].isdigit() or (s[0] == "-" and len(s) > 1 and s[1].isdigit()):
        i = 1
        while i < len(s) and (s[i].isdigit() or s[i] in ".eE" or (s[i] in "+-" and s[i - 1] in "eE")):
            i += 1
        tok = s[:i]
        num: Value = float(tok) if any(c in tok for c in ".eE") else int(tok)
        return num, s[i:]
    if s[0].isalpha() or s[0] == "_":
        i = 1
        while i < len(s) and (s[i].isalnum() or s[i] in "_'"):
            i += 1
        name, rest = s[:i], s[i:].lstrip()
        if not rest.startswith("("):
            raise ValueError(f"constructor {name} needs argument parentheses")
        rest = rest[1:].lstrip()
        args = []
        if not rest.startswith(")"):
            while True:
                v, rest = _parse_value(rest)
                args.append(v)
                rest = rest.lstrip()
                if rest.startswith(","):
                    rest = rest[1:]
                    continue
                break
        if not rest.lstrip().startswith(")"):
            raise ValueError(f"unclosed constructor arguments in {s!r}")
        return Term(name, tuple(args)), rest.lstrip()[1:]
    raise ValueError(f"cannot parse value from {s!r}")
