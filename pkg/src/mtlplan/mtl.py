"""Metric temporal logic over discrete labeled traces.

Formulas are immutable trees. The concrete syntax is::

    formula := disj
    disj    := conj ('|' conj)*
    conj    := unary ('&' unary)*
    unary   := '!' unary | 'X' unary | 'F' interval? unary
             | 'G' interval? unary | primary
    primary := 'TRUE' | IDENT | '(' formula ('U' interval formula)? ')'
    interval:= '[' INT ',' INT ']'

``F``, ``G`` and ``X`` double as region names (the rescue layout has regions
called ``F`` and ``G``). A keyword letter is read as an operator only when the
next token can start an operand; otherwise it is an atom.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

PRIME_SUFFIX = "_prime"


class MTLError(Exception):
    pass


class MTLSyntaxError(MTLError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownPropositionError(MTLError):
    pass


class UnsupportedFragmentError(MTLError):
    pass


class TraceTooShortError(MTLError):
    pass


@dataclass(frozen=True)
class Proposition:
    name: str
    primed: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("proposition name must be nonempty")

    @classmethod
    def from_name(cls, name: str) -> "Proposition":
        return cls(name, name.endswith(PRIME_SUFFIX))

    @property
    def base(self) -> str:
        return self.name[: -len(PRIME_SUFFIX)] if self.primed else self.name


@dataclass(frozen=True)
class Interval:
    """Closed window ``[lo, hi]`` of discrete steps; ``hi=None`` is unbounded."""

    lo: int
    hi: int | None

    def __post_init__(self):
        if self.lo < 0:
            raise ValueError(f"interval lower bound {self.lo} < 0")
        if self.hi is not None and self.hi < self.lo:
            raise ValueError(f"malformed interval [{self.lo},{self.hi}]")

    @property
    def bounded(self) -> bool:
        return self.hi is not None

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi}]" if self.bounded else ""


UNBOUNDED = Interval(0, None)


class Formula:
    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)

    def children(self) -> tuple["Formula", ...]:
        return ()


@dataclass(frozen=True, eq=True, repr=False)
class TrueF(Formula):
    def __repr__(self):
        return "TrueF()"


TRUE = TrueF()


@dataclass(frozen=True, repr=False)
class Atom(Formula):
    name: str

    @property
    def primed(self) -> bool:
        return self.name.endswith(PRIME_SUFFIX)

    def __repr__(self):
        return f"Atom({self.name!r})"


@dataclass(frozen=True, repr=False)
class Not(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"Not({self.arg!r})"


@dataclass(frozen=True, repr=False)
class And(Formula):
    args: tuple[Formula, ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("And needs at least one operand")
        object.__setattr__(self, "args", tuple(self.args))

    def children(self):
        return self.args

    def __repr__(self):
        return f"And({', '.join(map(repr, self.args))})"


@dataclass(frozen=True, repr=False)
class Or(Formula):
    args: tuple[Formula, ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("Or needs at least one operand")
        object.__setattr__(self, "args", tuple(self.args))

    def children(self):
        return self.args

    def __repr__(self):
        return f"Or({', '.join(map(repr, self.args))})"


@dataclass(frozen=True, repr=False)
class Next(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"Next({self.arg!r})"


@dataclass(frozen=True, repr=False)
class Eventually(Formula):
    interval: Interval
    arg: Formula

    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"Eventually({self.interval.lo}, {self.interval.hi}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Always(Formula):
    interval: Interval
    arg: Formula

    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"Always({self.interval.lo}, {self.interval.hi}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Until(Formula):
    interval: Interval
    left: Formula
    right: Formula

    def __post_init__(self):
        if not self.interval.bounded:
            raise ValueError("until requires a bounded interval")

    def children(self):
        return (self.left, self.right)

    def __repr__(self):
        return f"Until({self.interval.lo}, {self.interval.hi}, {self.left!r}, {self.right!r})"


def conj(*args: Formula) -> Formula:
    return args[0] if len(args) == 1 else And(tuple(args))


def disj(*args: Formula) -> Formula:
    return args[0] if len(args) == 1 else Or(tuple(args))


def walk(f: Formula) -> Iterable[Formula]:
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def atoms(f: Formula) -> set[str]:
    return {n.name for n in walk(f) if isinstance(n, Atom)}


# --------------------------------------------------------------------------
# printing

_KEYWORDS = {"F", "G", "X", "U", "TRUE"}


def to_string(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "TRUE"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + to_string(f.arg)
    if isinstance(f, And):
        return "(" + " & ".join(to_string(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(" + " | ".join(to_string(a) for a in f.args) + ")"
    if isinstance(f, Next):
        return "X " + to_string(f.arg)
    if isinstance(f, Eventually):
        return f"F{f.interval} " + to_string(f.arg)
    if isinstance(f, Always):
        return f"G{f.interval} " + to_string(f.arg)
    if isinstance(f, Until):
        return f"({to_string(f.left)} U{f.interval} {to_string(f.right)})"
    raise TypeError(f"not a formula: {f!r}")


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z][A-Za-z0-9_]*)|(?P<sym>[!&|()\[\],]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise MTLSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, pi: Iterable[str] | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.pi = None if pi is None else set(pi)

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.take()
        if tok[1] != value or tok[0] == "eof":
            raise MTLSyntaxError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        return tok

    def _starts_operand(self, k: int) -> bool:
        kind, value, _ = self.peek(k)
        if kind == "sym":
            return value in "!(["
        if kind == "ident":
            # `a U[..] b` inside parentheses: U followed by '[' is infix
            return not (value == "U" and self.peek(k + 1)[1] == "[")
        return False

    def parse(self) -> Formula:
        f = self.disj()
        kind, value, pos = self.peek()
        if kind != "eof":
            raise MTLSyntaxError(f"unexpected token {value!r}", pos)
        return f

    def disj(self) -> Formula:
        args = [self.conj()]
        while self.peek()[1] == "|" and self.peek()[0] == "sym":
            self.take()
            args.append(self.conj())
        return disj(*args)

    def conj(self) -> Formula:
        args = [self.unary()]
        while self.peek()[1] == "&" and self.peek()[0] == "sym":
            self.take()
            args.append(self.unary())
        return conj(*args)

    def interval(self, optional: bool) -> Interval:
        if self.peek()[1] != "[":
            if optional:
                return UNBOUNDED
            tok = self.peek()
            raise MTLSyntaxError("expected interval", tok[2])
        start = self.expect("[")[2]
        lo = self._int()
        self.expect(",")
        hi = self._int()
        self.expect("]")
        if hi < lo:
            raise MTLSyntaxError(f"malformed interval [{lo},{hi}]", start)
        return Interval(lo, hi)

    def _int(self) -> int:
        kind, value, pos = self.take()
        if kind != "int":
            raise MTLSyntaxError(f"expected integer, found {value or 'end of input'!r}", pos)
        return int(value)

    def unary(self) -> Formula:
        kind, value, pos = self.peek()
        if kind == "sym" and value == "!":
            self.take()
            return Not(self.unary())
        if kind == "ident" and value in ("X", "F", "G") and self._starts_operand(1):
            self.take()
            if value == "X":
                return Next(self.unary())
            iv = self.interval(optional=True)
            arg = self.unary()
            return Eventually(iv, arg) if value == "F" else Always(iv, arg)
        return self.primary()

    def primary(self) -> Formula:
        kind, value, pos = self.take()
        if kind == "sym" and value == "(":
            left = self.disj()
            if self.peek()[0] == "ident" and self.peek()[1] == "U":
                self.take()
                iv = self.interval(optional=False)
                right = self.disj()
                self.expect(")")
                return Until(iv, left, right)
            self.expect(")")
            return left
        if kind == "ident":
            if value == "TRUE":
                return TRUE
            if self.pi is not None and value not in self.pi:
                raise UnknownPropositionError(f"unknown proposition {value!r} at position {pos}")
            return Atom(value)
        raise MTLSyntaxError(f"unexpected token {value or 'end of input'!r}", pos)


def parse_mtl(text: str, pi: Iterable[str] | None = None) -> Formula:
    """Parse ``text``; when ``pi`` is given every identifier must belong to it."""
    return _Parser(text, pi).parse()


# --------------------------------------------------------------------------
# normalization and horizons

def to_nnf(f: Formula) -> Formula:
    """Push negations down to atoms. ``!TRUE`` is kept as the false literal."""
    return _nnf(f, negate=False)


def _nnf(f: Formula, negate: bool) -> Formula:
    if isinstance(f, (TrueF, Atom)):
        return Not(f) if negate else f
    if isinstance(f, Not):
        return _nnf(f.arg, not negate)
    if isinstance(f, And):
        args = tuple(_nnf(a, negate) for a in f.args)
        return Or(args) if negate else And(args)
    if isinstance(f, Or):
        args = tuple(_nnf(a, negate) for a in f.args)
        return And(args) if negate else Or(args)
    if isinstance(f, Next):
        return Next(_nnf(f.arg, negate))
    if isinstance(f, Eventually):
        arg = _nnf(f.arg, negate)
        return Always(f.interval, arg) if negate else Eventually(f.interval, arg)
    if isinstance(f, Always):
        arg = _nnf(f.arg, negate)
        return Eventually(f.interval, arg) if negate else Always(f.interval, arg)
    if isinstance(f, Until):
        if negate:
            raise UnsupportedFragmentError("negated until has no linear encoding")
        return Until(f.interval, _nnf(f.left, False), _nnf(f.right, False))
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f: Formula) -> bool:
    return all(isinstance(n.arg, (Atom, TrueF)) for n in walk(f) if isinstance(n, Not))


def horizon_of(f: Formula) -> int:
    """Furthest step ahead of ``t`` that the truth of ``f`` at ``t`` reads.

    Unbounded windows contribute nothing; they stretch to whatever horizon
    they are later bound to.
    """
    if isinstance(f, (TrueF, Atom)):
        return 0
    if isinstance(f, Not):
        return horizon_of(f.arg)
    if isinstance(f, (And, Or)):
        return max(horizon_of(a) for a in f.args)
    if isinstance(f, Next):
        return 1 + horizon_of(f.arg)
    if isinstance(f, (Eventually, Always)):
        hi = f.interval.hi if f.interval.bounded else 0
        return hi + horizon_of(f.arg)
    if isinstance(f, Until):
        hi = f.interval.hi
        return max(hi - 1 + horizon_of(f.left), hi + horizon_of(f.right), 0)
    raise TypeError(f"not a formula: {f!r}")


def bind_horizon(f: Formula, horizon: int) -> Formula:
    """Replace unbounded windows by ``[lo, H - h]`` for the available horizon ``H``."""
    if isinstance(f, (TrueF, Atom)):
        return f
    if isinstance(f, Not):
        return Not(bind_horizon(f.arg, horizon))
    if isinstance(f, And):
        return And(tuple(bind_horizon(a, horizon) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(bind_horizon(a, horizon) for a in f.args))
    if isinstance(f, Next):
        return Next(bind_horizon(f.arg, horizon - 1))
    if isinstance(f, (Eventually, Always)):
        iv = f.interval
        if not iv.bounded:
            hi = horizon - horizon_of(f.arg)
            if hi < iv.lo:
                raise ValueError(f"horizon {horizon} too short for {to_string(f)}")
            iv = Interval(iv.lo, hi)
        return type(f)(iv, bind_horizon(f.arg, horizon - iv.hi))
    if isinstance(f, Until):
        rest = horizon - f.interval.hi
        return Until(f.interval, bind_horizon(f.left, rest), bind_horizon(f.right, rest))
    raise TypeError(f"not a formula: {f!r}")


def shift(f: Formula, steps: int) -> Formula:
    """``X^steps f``: the formula anchored ``steps`` later."""
    return f if steps == 0 else Eventually(Interval(steps, steps), f)


# --------------------------------------------------------------------------
# semantics

@dataclass(frozen=True)
class Trace:
    """Labels ``L(x(t))`` for t = 0..T."""

    labels: tuple[frozenset, ...]
    pi: frozenset | None = None

    def __post_init__(self):
        labels = tuple(frozenset(s) for s in self.labels)
        object.__setattr__(self, "labels", labels)
        if self.pi is not None:
            pi = frozenset(self.pi)
            object.__setattr__(self, "pi", pi)
            for t, s in enumerate(labels):
                extra = s - pi
                if extra:
                    raise UnknownPropositionError(f"labels {sorted(extra)} at t={t} not in proposition set")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, t: int) -> frozenset:
        return self.labels[t]


LabelSeq = Union[Trace, Sequence[frozenset]]


def evaluate_at(f: Formula, trace: LabelSeq, t: int = 0) -> bool:
    """Truth of ``f`` at step ``t``.

    Until demands its left operand strictly before the witness step of the
    right operand, the same reading the linear encoding uses.
    """
    n = len(trace)
    if t < 0 or t + horizon_of(f) > n - 1:
        raise TraceTooShortError(
            f"trace of length {n} cannot decide formula with horizon {horizon_of(f)} at t={t}")
    return _eval(f, trace, t, n)


def _eval(f: Formula, tr, t: int, n: int) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, Atom):
        return f.name in tr[t]
    if isinstance(f, Not):
        return not _eval(f.arg, tr, t, n)
    if isinstance(f, And):
        return all(_eval(a, tr, t, n) for a in f.args)
    if isinstance(f, Or):
        return any(_eval(a, tr, t, n) for a in f.args)
    if isinstance(f, Next):
        return _eval(f.arg, tr, t + 1, n)
    if isinstance(f, (Eventually, Always)):
        iv = f.interval
        hi = iv.hi if iv.bounded else n - 1 - t - horizon_of(f.arg)
        steps = range(t + iv.lo, t + hi + 1)
        if isinstance(f, Eventually):
            return any(_eval(f.arg, tr, s, n) for s in steps)
        return all(_eval(f.arg, tr, s, n) for s in steps)
    if isinstance(f, Until):
        lo, hi = f.interval.lo, f.interval.hi
        for j in range(lo, hi + 1):
            if _eval(f.right, tr, t + j, n) and all(_eval(f.left, tr, t + l, n) for l in range(j)):
                return True
        return False
    raise TypeError(f"not a formula: {f!r}")


def first_violation(f: Formula, trace: LabelSeq, t: int = 0) -> int | None:
    """Earliest step whose labels make ``f`` false at ``t``, or None if it holds.

    For conjunctions and windows of obligations this names the first failing
    instant; for a failed reach obligation it names the window's last step.
    """
    n = len(trace)
    if evaluate_at(f, trace, t):
        return None
    return _violation(f, trace, t, n)


def _violation(f: Formula, tr, t: int, n: int) -> int:
    if isinstance(f, And):
        return min(_violation(a, tr, t, n) for a in f.args if not _eval(a, tr, t, n))
    if isinstance(f, Always):
        iv = f.interval
        hi = iv.hi if iv.bounded else n - 1 - t - horizon_of(f.arg)
        for s in range(t + iv.lo, t + hi + 1):
            if not _eval(f.arg, tr, s, n):
                return _violation(f.arg, tr, s, n)
    if isinstance(f, Next):
        return _violation(f.arg, tr, t + 1, n)
    if isinstance(f, (Eventually, Until)):
        iv = f.interval
        hi = iv.hi if iv.bounded else n - 1 - t - horizon_of(f.arg)
        return t + hi
    return t
