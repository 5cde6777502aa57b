"""Bounded-time temporal formulas over finite timed words.

The grammar is boolean logic plus the timed operators ``U[a,b]``, ``F[a,b]``
and ``G[a,b]`` with finite intervals.  ``evaluate`` implements the pointwise
satisfaction relation directly and is the independent oracle the rest of the
pipeline is checked against: it never looks at automata.

Finite-word convention: a timed obligation whose window is not fully decided
by the word returns False.  Concretely, ``F``/``U`` need an actual witness
inside the window, and ``G`` additionally requires the word to extend past
the window end.  Synthesized plans are unrolled beyond every deadline, so
this conservatism never rejects a genuinely satisfied plan.
"""

import re
from dataclasses import dataclass

from .errors import FormulaSyntaxError, IntervalError

# --- abstract syntax ---


class Formula:
    """Base class; subclasses are frozen dataclasses compared structurally."""

    def __str__(self):
        return fmt(self)


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


def _check_interval(a, b):
    if a < 0 or b < 0:
        raise IntervalError(f"negative interval bound in [{a}, {b}]")
    if a > b:
        raise IntervalError(f"empty interval [{a}, {b}]")


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula
    lo: float
    hi: float

    def __post_init__(self):
        _check_interval(self.lo, self.hi)


@dataclass(frozen=True)
class Eventually(Formula):
    child: Formula
    lo: float
    hi: float

    def __post_init__(self):
        _check_interval(self.lo, self.hi)


@dataclass(frozen=True)
class Always(Formula):
    child: Formula
    lo: float
    hi: float

    def __post_init__(self):
        _check_interval(self.lo, self.hi)


def atoms(phi: Formula) -> frozenset:
    """All proposition names appearing in the formula."""
    if isinstance(phi, Atom):
        return frozenset([phi.name])
    if isinstance(phi, (TrueF,)):
        return frozenset()
    if isinstance(phi, Not):
        return atoms(phi.child)
    if isinstance(phi, (And, Or, Implies)):
        return atoms(phi.left) | atoms(phi.right)
    if isinstance(phi, Until):
        return atoms(phi.left) | atoms(phi.right)
    if isinstance(phi, (Eventually, Always)):
        return atoms(phi.child)
    raise TypeError(f"not a formula: {phi!r}")


def max_bound(phi: Formula) -> float:
    """Largest interval upper bound anywhere in the formula (0 for untimed)."""
    if isinstance(phi, (TrueF, Atom)):
        return 0.0
    if isinstance(phi, Not):
        return max_bound(phi.child)
    if isinstance(phi, (And, Or, Implies)):
        return max(max_bound(phi.left), max_bound(phi.right))
    if isinstance(phi, Until):
        return max(phi.hi, max_bound(phi.left), max_bound(phi.right))
    if isinstance(phi, (Eventually, Always)):
        return max(phi.hi, max_bound(phi.child))
    raise TypeError(f"not a formula: {phi!r}")


# --- printing ---

_PREC = {Implies: 1, Or: 2, And: 3, Until: 4}


def _prec(phi) -> int:
    return _PREC.get(type(phi), 5)


def fmt(phi: Formula) -> str:
    """Render with the parser's precedence; fmt/parse round-trip structurally."""

    def wrap(child, level):
        s = fmt(child)
        return f"({s})" if _prec(child) < level else s

    if isinstance(phi, TrueF):
        return "true"
    if isinstance(phi, Atom):
        return phi.name
    if isinstance(phi, Not):
        return "!" + wrap(phi.child, 5)
    if isinstance(phi, And):
        return f"{wrap(phi.left, 3)} & {wrap(phi.right, 3)}"
    if isinstance(phi, Or):
        return f"{wrap(phi.left, 2)} | {wrap(phi.right, 2)}"
    if isinstance(phi, Implies):
        # right associative; parenthesize a left implication
        left = fmt(phi.left)
        if _prec(phi.left) <= 1:
            left = f"({left})"
        return f"{left} -> {wrap(phi.right, 1)}"
    if isinstance(phi, Until):
        return f"{wrap(phi.left, 5)} U[{phi.lo!r},{phi.hi!r}] {wrap(phi.right, 5)}"
    if isinstance(phi, Eventually):
        return f"F[{phi.lo!r},{phi.hi!r}] {wrap(phi.child, 5)}"
    if isinstance(phi, Always):
        return f"G[{phi.lo!r},{phi.hi!r}] {wrap(phi.child, 5)}"
    raise TypeError(f"not a formula: {phi!r}")


# --- parsing ---

_TOKEN = re.compile(r"""
    (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:@\d+)?)
  | (?P<op>->|[!&|()\[\],])
  | (?P<ws>\s+)
""", re.VERBOSE)

_RESERVED = {"F", "G", "U", "true"}


def _tokenize(text: str):
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.k]
        if kind and tok[0] != kind:
            raise FormulaSyntaxError(f"expected {kind}, found {tok[1]!r}", tok[2])
        if value and tok[1] != value:
            raise FormulaSyntaxError(f"expected {value!r}, found {tok[1]!r}", tok[2])
        self.k += 1
        return tok

    def interval(self):
        self.take("op", "[")
        lo = float(self.take("num")[1])
        self.take("op", ",")
        hi = float(self.take("num")[1])
        self.take("op", "]")
        return lo, hi

    def parse(self) -> Formula:
        phi = self.implies()
        tok = self.peek()
        if tok[0] != "end":
            raise FormulaSyntaxError(f"trailing input {tok[1]!r}", tok[2])
        return phi

    def implies(self) -> Formula:
        left = self.or_()
        if self.peek()[1] == "->":
            self.take()
            return Implies(left, self.implies())
        return left

    def or_(self) -> Formula:
        phi = self.and_()
        while self.peek()[1] == "|":
            self.take()
            phi = Or(phi, self.and_())
        return phi

    def and_(self) -> Formula:
        phi = self.until()
        while self.peek()[1] == "&":
            self.take()
            phi = And(phi, self.until())
        return phi

    def until(self) -> Formula:
        left = self.unary()
        if self.peek()[1] == "U":
            self.take()
            lo, hi = self.interval()
            return Until(left, self.until(), lo, hi)
        return left

    def unary(self) -> Formula:
        kind, value, pos = self.peek()
        if value == "!":
            self.take()
            return Not(self.unary())
        if value in ("F", "G"):
            self.take()
            if self.peek()[1] == "[":
                lo, hi = self.interval()
            elif value == "F" and self.peek()[0] == "num":
                lo, hi = 0.0, float(self.take("num")[1])  # "F b" sugar
            else:
                raise FormulaSyntaxError(f"{value} needs an interval", pos)
            child = self.unary()
            return Eventually(child, lo, hi) if value == "F" else Always(child, lo, hi)
        if value == "true":
            self.take()
            return TrueF()
        if kind == "name":
            self.take()
            return Atom(value)
        if value == "(":
            self.take()
            phi = self.implies()
            self.take("op", ")")
            return phi
        raise FormulaSyntaxError(f"expected a formula, found {value!r}", pos)


def parse(text: str) -> Formula:
    """Parse formula text; raises FormulaSyntaxError / IntervalError."""
    return _Parser(text).parse()


# --- timed words and satisfaction ---


@dataclass(frozen=True)
class TimedWord:
    """Finite prefix of a timed word: (proposition set, timestamp) pairs."""

    letters: tuple      # tuple of frozensets
    times: tuple        # strictly increasing, times[0] == 0

    def __post_init__(self):
        object.__setattr__(self, "letters",
                           tuple(frozenset(l) for l in self.letters))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if len(self.letters) != len(self.times):
            raise ValueError("letters and times differ in length")
        if self.times and self.times[0] != 0.0:
            raise ValueError("first timestamp must be 0")
        for t0, t1 in zip(self.times, self.times[1:]):
            if not t0 < t1:
                raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.letters)


def word(*pairs) -> TimedWord:
    """Convenience constructor: word(({'p'}, 0.0), (set(), 0.4), ...)."""
    letters = tuple(p[0] for p in pairs)
    times = tuple(p[1] for p in pairs)
    return TimedWord(letters, times)


def evaluate(w: TimedWord, phi: Formula, i: int = 0) -> bool:
    """Pointwise satisfaction at position ``i`` of a finite timed word.

    Until holds when some position ``j >= i`` has its timestamp inside
    ``[t_i + lo, t_i + hi]``, satisfies the right operand, and the left
    operand holds at every position strictly before ``j`` (from ``i`` on).
    """
    if i >= len(w):
        raise IndexError("position beyond the word")
    if isinstance(phi, TrueF):
        return True
    if isinstance(phi, Atom):
        return phi.name in w.letters[i]
    if isinstance(phi, Not):
        return not evaluate(w, phi.child, i)
    if isinstance(phi, And):
        return evaluate(w, phi.left, i) and evaluate(w, phi.right, i)
    if isinstance(phi, Or):
        return evaluate(w, phi.left, i) or evaluate(w, phi.right, i)
    if isinstance(phi, Implies):
        return (not evaluate(w, phi.left, i)) or evaluate(w, phi.right, i)
    if isinstance(phi, Until):
        lo, hi = w.times[i] + phi.lo, w.times[i] + phi.hi
        for j in range(i, len(w)):
            if w.times[j] > hi:
                break
            if w.times[j] >= lo and evaluate(w, phi.right, j):
                if all(evaluate(w, phi.left, k) for k in range(i, j)):
                    return True
        return False
    if isinstance(phi, Eventually):
        return evaluate(w, Until(TrueF(), phi.child, phi.lo, phi.hi), i)
    if isinstance(phi, Always):
        lo, hi = w.times[i] + phi.lo, w.times[i] + phi.hi
        if w.times[-1] <= hi:
            return False  # window not covered: undecided counts as failure
        return all(evaluate(w, phi.child, j)
                   for j in range(i, len(w))
                   if lo <= w.times[j] <= hi)
    raise TypeError(f"not a formula: {phi!r}")


def holds(w: TimedWord, phi: Formula) -> bool:
    """Plan-level satisfaction: the reading the automaton compiler enforces.

    Top-level conjuncts are split; an implication conjunct is a recurring
    obligation (checked at every position), everything else is evaluated at
    position 0.
    """
    if isinstance(phi, And):
        return holds(w, phi.left) and holds(w, phi.right)
    if isinstance(phi, Implies):
        return all(evaluate(w, phi, i) for i in range(len(w)))
    return evaluate(w, phi, 0)
