"""Immutable symbolic expressions over exact rationals in jet coordinates.

Expressions are trees built from rational constants, coordinate references,
sums, products, integer powers and (possibly opaque) function applications.
``canonicalize`` rewrites any tree into a normal form:

* a canonical expression is a rational constant, a monomial, or a sum of
  two or more monomials with distinct keys, sorted by the node order below;
* a monomial is an optional rational coefficient times powers of atoms,
  where an atom is a coordinate reference, a function application, or a
  negative integer power of a canonical sum (denominators such as inverse
  Jacobian determinants stay unexpanded);
* positive integer powers of sums are multiplied out and like monomials
  are collected, so polynomial identities cancel to the literal zero.

The node order, fixed so golden outputs stay stable, is

    constants < coordinates < powers < products < sums < functions

with coordinates ordered by (kind, field, component, derivative indices) and
kinds ordered Base < CovBase < Fiber < Jet < CovJet < Param.

Everything here is pure and immutable; expressions can be shared freely
between concurrent tasks, and identity-testing trials derive their RNG
streams deterministically from (seed, trial index).
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Union

#: Theories may use jets up to this order.  Divergence identities transiently
#: need one more order, which Coord tolerates but validation rejects.
MAX_JET_ORDER = 2

Number = Union[int, Fraction, float]


class PoleHit(ArithmeticError):
    """A denominator evaluated to zero."""


class OrderOverflow(ValueError):
    """An operation would require jets beyond the supported order."""


class Inconclusive(RuntimeError):
    """Identity testing could not reach a verdict (e.g. persistent poles)."""


class Kind(IntEnum):
    BASE = 0
    COV_BASE = 1
    FIBER = 2
    JET = 3
    COV_JET = 4
    PARAM = 5


_JET_KINDS = (Kind.JET, Kind.COV_JET)


@dataclass(frozen=True, slots=True)
class Coord:
    """A classified coordinate symbol on the jet space of a theory.

    ``field`` is the field or parameter name ("" for base coordinates),
    ``index`` the base-axis or component index, and ``multi`` the sorted
    derivative multi-index (jets are symmetric, so permuted multi-indices
    compare equal by construction).
    """

    kind: Kind
    field: str = ""
    index: int = 0
    multi: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind in _JET_KINDS:
            if not self.multi:
                raise ValueError("jet coordinate needs a derivative multi-index")
            if len(self.multi) > MAX_JET_ORDER + 1:
                raise OrderOverflow(f"jet order {len(self.multi)} exceeds the supported cap")
            object.__setattr__(self, "multi", tuple(sorted(self.multi)))
        elif self.multi:
            raise ValueError(f"{self.kind.name} coordinate cannot carry a multi-index")

    @property
    def order(self) -> int:
        return len(self.multi)

    def sort_key(self):
        return (int(self.kind), self.field, self.index, self.multi)

    def promoted(self, axis: int) -> "Coord":
        """The coordinate one derivative order higher along ``axis``."""
        if self.kind is Kind.FIBER:
            return Coord(Kind.JET, self.field, self.index, (axis,))
        if self.kind is Kind.COV_BASE:
            return Coord(Kind.COV_JET, self.field, self.index, (axis,))
        if self.kind in _JET_KINDS:
            return Coord(self.kind, self.field, self.index, self.multi + (axis,))
        raise ValueError(f"cannot differentiate {self.kind.name} coordinate {self}")


def base_coord(index: int) -> Coord:
    return Coord(Kind.BASE, "", index)


def fiber(field: str, comp: int = 0) -> Coord:
    return Coord(Kind.FIBER, field, comp)


def jet(field: str, comp: int, *axes: int) -> Coord:
    return Coord(Kind.JET, field, comp, tuple(axes))


def cov_base(field: str, comp: int = 0) -> Coord:
    return Coord(Kind.COV_BASE, field, comp)


def cov_jet(field: str, comp: int, *axes: int) -> Coord:
    return Coord(Kind.COV_JET, field, comp, tuple(axes))


def param(name: str) -> Coord:
    return Coord(Kind.PARAM, name)


# --------------------------------------------------------------------------
# expression nodes


class Expr:
    """Base class for expression nodes; supports Python arithmetic."""

    __slots__ = ()

    def __add__(self, other):
        return Add((self, as_expr(other)))

    def __radd__(self, other):
        return Add((as_expr(other), self))

    def __sub__(self, other):
        return Add((self, Mul((_MINUS_ONE, as_expr(other)))))

    def __rsub__(self, other):
        return Add((as_expr(other), Mul((_MINUS_ONE, self))))

    def __mul__(self, other):
        return Mul((self, as_expr(other)))

    def __rmul__(self, other):
        return Mul((as_expr(other), self))

    def __truediv__(self, other):
        return Mul((self, Pow(as_expr(other), -1)))

    def __rtruediv__(self, other):
        return Mul((as_expr(other), Pow(self, -1)))

    def __pow__(self, exponent: int):
        return Pow(self, exponent)

    def __neg__(self):
        return Mul((_MINUS_ONE, self))


@dataclass(frozen=True, slots=True)
class Rat(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True, slots=True)
class Ref(Expr):
    coord: Coord


@dataclass(frozen=True, slots=True)
class Add(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exp: int

    def __post_init__(self):
        if not isinstance(self.exp, int) or isinstance(self.exp, bool):
            raise TypeError("Pow exponent must be a plain integer")


@dataclass(frozen=True, slots=True)
class Fun(Expr):
    """A function application; ``dorder`` counts formal derivative primes.

    sin/cos/exp differentiate by the usual rules; any other tag is opaque and
    differentiation just increments ``dorder`` (V -> V' -> V'').
    """

    tag: str
    arg: Expr
    dorder: int = 0


ZERO = Rat(Fraction(0))
ONE = Rat(Fraction(1))
_MINUS_ONE = Rat(Fraction(-1))


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)):
        return Rat(Fraction(value))
    raise TypeError(f"cannot coerce {value!r} to an expression")


def rational(p: int, q: int = 1) -> Rat:
    return Rat(Fraction(p, q))


def ref(coord: Coord) -> Ref:
    return Ref(coord)


# --------------------------------------------------------------------------
# node ordering


def _key(e: Expr):
    if isinstance(e, Rat):
        return (0, e.value)
    if isinstance(e, Ref):
        return (1,) + e.coord.sort_key()
    if isinstance(e, Pow):
        return (2, _key(e.base), e.exp)
    if isinstance(e, Mul):
        return (3, tuple(_key(f) for f in e.factors))
    if isinstance(e, Add):
        return (4, tuple(_key(t) for t in e.terms))
    if isinstance(e, Fun):
        return (5, e.tag, e.dorder, _key(e.arg))
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# canonicalization


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    return Fraction(math.gcd(a.numerator, b.numerator),
                    math.lcm(a.denominator, b.denominator))


def _split_coeff(term: Expr) -> tuple[Fraction, Expr | None]:
    """Split a canonical monomial into (coefficient, coefficient-free part)."""
    if isinstance(term, Rat):
        return term.value, None
    if isinstance(term, Mul) and isinstance(term.factors[0], Rat):
        rest = term.factors[1:]
        body = rest[0] if len(rest) == 1 else Mul(rest)
        return term.factors[0].value, body
    return Fraction(1), term


def _with_coeff(coeff: Fraction, body: Expr | None) -> Expr:
    if body is None:
        return Rat(coeff)
    if coeff == 1:
        return body
    factors = body.factors if isinstance(body, Mul) else (body,)
    return Mul((Rat(coeff),) + factors)


def _mono_factors(t: Expr) -> tuple[Fraction, dict[Expr, int]]:
    """Decompose a canonical monomial into coefficient and base -> exponent."""
    if isinstance(t, Rat):
        return t.value, {}
    coeff = Fraction(1)
    factors: tuple[Expr, ...]
    if isinstance(t, Mul):
        factors = t.factors
        if isinstance(factors[0], Rat):
            coeff = factors[0].value
            factors = factors[1:]
    else:
        factors = (t,)
    bases: dict[Expr, int] = {}
    for f in factors:
        if isinstance(f, Pow):
            bases[f.base] = f.exp
        else:
            bases[f] = 1
    return coeff, bases


def _split_content(s: Add) -> tuple[Fraction, list[tuple[Expr, int]], Expr]:
    """Factor a canonical sum into (numeric content, common factors, core sum).

    The numeric content carries the coefficient gcd and the sign of the first
    term; the common factors are powers shared by every monomial (inverse
    determinants in particular), so structurally equal denominators cancel
    against whole-sum factors regardless of scaling.  Common powers of sums
    are only pulled out when negative everywhere, which keeps the residual
    monomials canonical.
    """
    monos = [_mono_factors(t) for t in s.terms]
    content = Fraction(0)
    for c, _ in monos:
        content = _frac_gcd(content, abs(c))

    common: list[tuple[Expr, int]] = []
    for base in sorted(monos[0][1], key=_key):
        exps = [m.get(base) for _, m in monos]
        if any(e is None for e in exps):
            continue
        if isinstance(base, Add):
            if all(e < 0 for e in exps):
                common.append((base, max(exps)))
        else:
            common.append((base, min(exps)))

    shared = dict(common)
    residuals: list[list[Expr]] = []
    for _, bases in monos:
        factors = []
        for b, e in bases.items():
            r = e - shared.get(b, 0)
            if r == 1:
                factors.append(b)
            elif r != 0:
                factors.append(Pow(b, r))
        residuals.append(sorted(factors, key=_key))

    # sign from the term whose residual body is minimal: residual bodies are
    # what a re-extraction of the core sees, so this choice is idempotent and
    # stable under overall sign flips (coefficients never enter the key)
    def body_key(i: int):
        return tuple(_key(f) for f in residuals[i])

    lead = min(range(len(monos)), key=body_key)
    if monos[lead][0] < 0:
        content = -content

    if content == 1 and not common:
        return content, [], s
    rebuilt = [_assemble_mul(coeff / content, residuals[i])
               for i, (coeff, _) in enumerate(monos)]
    return content, common, _canon_add(rebuilt)


def _assemble_mul(coeff: Fraction, factors: list[Expr]) -> Expr:
    if coeff == 0:
        return ZERO
    factors = sorted(factors, key=_key)
    if not factors:
        return Rat(coeff)
    if coeff == 1:
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))
    return Mul((Rat(coeff),) + tuple(factors))


def _canon_mul(factors: Iterable[Expr]) -> Expr:
    coeff = Fraction(1)
    powers: dict[Expr, int] = {}

    def absorb(base: Expr, exp: int):
        powers[base] = powers.get(base, 0) + exp

    stack = list(factors)
    while stack:
        f = stack.pop()
        if isinstance(f, Rat):
            coeff *= f.value
        elif isinstance(f, Mul):
            stack.extend(f.factors)
        elif isinstance(f, Pow):
            absorb(f.base, f.exp)
        elif isinstance(f, Add):
            content, common, core = _split_content(f)
            coeff *= content
            for b, e in common:
                absorb(b, e)
            if isinstance(core, Add):
                absorb(core, 1)
            else:
                stack.append(core)
        else:
            absorb(f, 1)

    if coeff == 0:
        return ZERO

    plain: list[Expr] = []
    expand: list[tuple[Add, int]] = []
    for base, exp in powers.items():
        if exp == 0:
            continue
        if isinstance(base, Add) and exp > 0:
            expand.append((base, exp))
        elif exp == 1:
            plain.append(base)
        else:
            if isinstance(base, Rat):
                coeff *= base.value ** exp
            else:
                plain.append(Pow(base, exp))

    if not expand:
        return _assemble_mul(coeff, plain)

    term_lists = []
    for s, exp in expand:
        term_lists.extend([list(s.terms)] * exp)
    seed = [Rat(coeff)] + plain
    out = [_canon_mul(seed + combo) for combo in
           (list(c) for c in itertools.product(*term_lists))]
    return _canon_add(out)


def _canon_add(terms: Iterable[Expr]) -> Expr:
    acc: dict[Expr | None, Fraction] = {}
    stack = list(terms)
    while stack:
        t = stack.pop()
        if isinstance(t, Add):
            stack.extend(t.terms)
            continue
        coeff, body = _split_coeff(t)
        acc[body] = acc.get(body, Fraction(0)) + coeff

    out = [_with_coeff(c, body) for body, c in acc.items() if c != 0]
    if not out:
        return ZERO
    out.sort(key=_key)
    return out[0] if len(out) == 1 else Add(tuple(out))


def _canon_pow(base: Expr, exp: int) -> Expr:
    if exp == 0:
        return ONE  # bases are formally nonzero; poles surface at evaluation
    if isinstance(base, Rat):
        if base.value == 0:
            if exp < 0:
                raise PoleHit("zero raised to a negative power")
            return ZERO
        return Rat(base.value ** exp)
    if isinstance(base, Pow):
        return _canon_pow(base.base, base.exp * exp)
    if isinstance(base, Mul):
        return _canon_mul([_canon_pow(f, exp) for f in base.factors])
    if isinstance(base, Add):
        if exp > 0:
            return _canon_mul([base] * exp)
        content, common, core = _split_content(base)
        pieces: list[Expr] = [_canon_pow(b, e * exp) for b, e in common]
        pieces.append(Pow(core, exp) if isinstance(core, Add) else _canon_pow(core, exp))
        return _canon_mul([Rat(content ** exp)] + pieces)
    if exp == 1:
        return base
    return Pow(base, exp)


def canonicalize(e: Expr) -> Expr:
    """Deterministic normal form; idempotent."""
    if isinstance(e, (Rat, Ref)):
        return e
    if isinstance(e, Fun):
        return Fun(e.tag, canonicalize(e.arg), e.dorder)
    if isinstance(e, Pow):
        return _canon_pow(canonicalize(e.base), e.exp)
    if isinstance(e, Mul):
        return _canon_mul([canonicalize(f) for f in e.factors])
    if isinstance(e, Add):
        return _canon_add([canonicalize(t) for t in e.terms])
    raise TypeError(f"not an expression node: {e!r}")


def is_zero(e: Expr) -> bool:
    return canonicalize(e) == ZERO


# --------------------------------------------------------------------------
# structural queries


def coords_of(e: Expr) -> frozenset[Coord]:
    found: set[Coord] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Ref):
            found.add(n.coord)
        elif isinstance(n, Add):
            stack.extend(n.terms)
        elif isinstance(n, Mul):
            stack.extend(n.factors)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, Fun):
            stack.append(n.arg)
    return frozenset(found)


def function_tags(e: Expr) -> frozenset[tuple[str, int]]:
    found: set[tuple[str, int]] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Fun):
            found.add((n.tag, n.dorder))
            stack.append(n.arg)
        elif isinstance(n, Add):
            stack.extend(n.terms)
        elif isinstance(n, Mul):
            stack.extend(n.factors)
        elif isinstance(n, Pow):
            stack.append(n.base)
    return frozenset(found)


def max_jet_order(e: Expr) -> int:
    return max((c.order for c in coords_of(e) if c.kind in _JET_KINDS), default=0)


# --------------------------------------------------------------------------
# calculus


_KNOWN_DERIVATIVES: dict[str, Callable[[Expr], Expr]] = {
    "sin": lambda a: Fun("cos", a),
    "cos": lambda a: Mul((_MINUS_ONE, Fun("sin", a))),
    "exp": lambda a: Fun("exp", a),
}


def _raw_partial(e: Expr, c: Coord) -> Expr:
    if isinstance(e, Rat):
        return ZERO
    if isinstance(e, Ref):
        return ONE if e.coord == c else ZERO
    if isinstance(e, Add):
        return Add(tuple(_raw_partial(t, c) for t in e.terms))
    if isinstance(e, Mul):
        terms = []
        for i, f in enumerate(e.factors):
            df = _raw_partial(f, c)
            if df == ZERO:
                continue
            terms.append(Mul(e.factors[:i] + (df,) + e.factors[i + 1:]))
        return Add(tuple(terms)) if terms else ZERO
    if isinstance(e, Pow):
        db = _raw_partial(e.base, c)
        if db == ZERO:
            return ZERO
        return Mul((Rat(Fraction(e.exp)), Pow(e.base, e.exp - 1), db))
    if isinstance(e, Fun):
        da = _raw_partial(e.arg, c)
        if da == ZERO:
            return ZERO
        rule = _KNOWN_DERIVATIVES.get(e.tag) if e.dorder == 0 else None
        outer = rule(e.arg) if rule else Fun(e.tag, e.arg, e.dorder + 1)
        return Mul((outer, da))
    raise TypeError(f"not an expression node: {e!r}")


def partial(e: Expr, c: Coord) -> Expr:
    """Formal partial derivative treating every distinct Coord as independent."""
    return canonicalize(_raw_partial(e, c))


def total_derivative(e: Expr, mu: int, max_order: int = MAX_JET_ORDER) -> Expr:
    """Total derivative D_mu: base-slot derivative plus jet promotion.

    Sums over every field-like coordinate occurring in ``e`` (variational and
    covariance alike).  Raises OrderOverflow when a surviving term would need
    a jet beyond ``max_order``; divergence identities pass ``max_order=3`` for
    terms that cancel in the final sum.
    """
    terms: list[Expr] = [_raw_partial(e, base_coord(mu))]
    for c in sorted(coords_of(e), key=Coord.sort_key):
        if c.kind in (Kind.BASE, Kind.PARAM):
            continue
        de = _raw_partial(e, c)
        if canonicalize(de) == ZERO:
            continue
        if c.order + 1 > max_order:
            raise OrderOverflow(
                f"D_{mu} of {c} needs a jet of order {c.order + 1} (cap {max_order})")
        terms.append(Mul((de, Ref(c.promoted(mu)))))
    return canonicalize(Add(tuple(terms)))


def substitute(e: Expr, mapping: Mapping[Coord, Expr]) -> Expr:
    """Simultaneous replacement of coordinate references, then canonicalize."""

    def walk(n: Expr) -> Expr:
        if isinstance(n, Rat):
            return n
        if isinstance(n, Ref):
            return mapping.get(n.coord, n)
        if isinstance(n, Add):
            return Add(tuple(walk(t) for t in n.terms))
        if isinstance(n, Mul):
            return Mul(tuple(walk(f) for f in n.factors))
        if isinstance(n, Pow):
            return Pow(walk(n.base), n.exp)
        if isinstance(n, Fun):
            return Fun(n.tag, walk(n.arg), n.dorder)
        raise TypeError(f"not an expression node: {n!r}")

    return canonicalize(walk(e))


# --------------------------------------------------------------------------
# evaluation and identity testing


def eval_at(e: Expr, point: Mapping[Coord, Number],
            interp: Mapping[str, Callable] | None = None) -> Number:
    """Evaluate at a point; exact when inputs are rational.

    Opaque functions are looked up in ``interp`` keyed by tag with one prime
    per derivative order ("V", "V'", "V''").  Raises PoleHit when a
    denominator vanishes.
    """
    if isinstance(e, Rat):
        return e.value
    if isinstance(e, Ref):
        try:
            return point[e.coord]
        except KeyError:
            raise KeyError(f"point assigns no value to coordinate {e.coord}") from None
    if isinstance(e, Add):
        return sum(eval_at(t, point, interp) for t in e.terms)
    if isinstance(e, Mul):
        out = Fraction(1)
        for f in e.factors:
            out = out * eval_at(f, point, interp)
        return out
    if isinstance(e, Pow):
        v = eval_at(e.base, point, interp)
        if e.exp < 0 and v == 0:
            raise PoleHit(f"denominator {e.base!r} vanished")
        return v ** e.exp
    if isinstance(e, Fun):
        key = e.tag + "'" * e.dorder
        if interp is None or key not in interp:
            raise LookupError(f"no numeric interpretation for function {key}")
        return interp[key](eval_at(e.arg, point, interp))
    raise TypeError(f"not an expression node: {e!r}")


_HEIGHT = 1 << 16  # sampling coefficient height


def _rand_fraction(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-_HEIGHT, _HEIGHT), rng.randint(1, _HEIGHT))


class _RandomFunctions:
    """Deterministic pseudo-random exact-rational interpretation of opaque tags.

    Each (tag, derivative order) pair behaves as an arbitrary function of the
    evaluated argument: equal arguments give equal values, so the sampling
    respects functional dependence while remaining exact.
    """

    def __init__(self, salt: str):
        self.salt = salt

    def __contains__(self, key) -> bool:
        return True

    def __getitem__(self, key: str):
        def call(argval):
            rng = random.Random(f"{self.salt}|{key}|{argval!r}")
            return _rand_fraction(rng)
        return call


def equal_identically(e1: Expr, e2: Expr, trials: int = 32, seed: int = 0) -> bool:
    """Probabilistic identity test for rational expressions in jet coordinates.

    Canonical-form zero decides immediately; otherwise the difference is
    evaluated at ``trials`` pseudo-random exact-rational points (coefficient
    height 2**16), redrawing on pole hits.  Opaque function tags are sampled
    as random functions of their argument values, which is sound for the
    formal rational-expression semantics used throughout.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    diff = canonicalize(Add((e1, Mul((_MINUS_ONE, e2)))))
    if isinstance(diff, Rat):
        return diff.value == 0
    coords = sorted(coords_of(diff), key=Coord.sort_key)
    for trial in range(trials):
        rng = random.Random(f"eqid|{seed}|{trial}")
        interp = _RandomFunctions(f"eqid-fn|{seed}|{trial}")
        value = None
        for _ in range(16):
            point = {c: _rand_fraction(rng) for c in coords}
            try:
                value = eval_at(diff, point, interp)
                break
            except PoleHit:
                continue
        if value is None:
            raise Inconclusive("all sample points hit poles; expression too degenerate")
        if value != 0:
            return False
    return True


# --------------------------------------------------------------------------
# canonical text rendering


@dataclass(frozen=True)
class NameEnv:
    """Name table for rendering/parsing: base axis names plus field styling.

    ``wide_cov`` covariance fields have one component per base axis rendered
    as compound names (field "X" over axes (t, x) renders Xt, Xx);
    ``multi`` fields render indexed components like q[0].
    """

    axes: tuple[str, ...]
    wide_cov: frozenset[str] = frozenset()
    multi: frozenset[str] = frozenset()

    def coord_name(self, c: Coord) -> str:
        if c.kind is Kind.BASE:
            return self.axes[c.index]
        if c.kind is Kind.PARAM:
            return c.field
        if c.kind in (Kind.FIBER, Kind.COV_BASE):
            return self._field_name(c)
        stem = self._field_name(Coord(Kind.FIBER if c.kind is Kind.JET else Kind.COV_BASE,
                                      c.field, c.index))
        return f"D[{stem};{','.join(self.axes[a] for a in c.multi)}]"

    def _field_name(self, c: Coord) -> str:
        if c.kind is Kind.COV_BASE and c.field in self.wide_cov:
            return c.field + self.axes[c.index]
        if c.field in self.multi:
            return f"{c.field}[{c.index}]"
        return c.field


def default_env(dim: int) -> NameEnv:
    return NameEnv(tuple(f"x{i}" for i in range(dim)))


def _is_negative(e: Expr) -> bool:
    if isinstance(e, Rat):
        return e.value < 0
    if isinstance(e, Mul) and isinstance(e.factors[0], Rat):
        return e.factors[0].value < 0
    return False


def _negated(e: Expr) -> Expr:
    if isinstance(e, Rat):
        return Rat(-e.value)
    if isinstance(e, Mul) and isinstance(e.factors[0], Rat):
        c = -e.factors[0].value
        rest = e.factors[1:]
        if c == 1:
            return rest[0] if len(rest) == 1 else Mul(rest)
        return Mul((Rat(c),) + rest)
    return Mul((_MINUS_ONE, e))


def render_expr(e: Expr, env: NameEnv) -> str:
    """Deterministic, re-parseable infix rendering of a canonical expression.

    Precedence contexts: 0 = sum, 1 = product, 2 = power base / atom.
    """

    def rat(v: Fraction) -> str:
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"

    def vis(n: Expr, prec: int) -> str:
        if isinstance(n, Rat):
            s = rat(n.value)
            needs = (n.value < 0 or n.value.denominator != 1) if prec >= 2 \
                else (n.value < 0 and prec >= 1)
            return f"({s})" if needs else s
        if isinstance(n, Ref):
            return env.coord_name(n.coord)
        if isinstance(n, Fun):
            primes = "'" * n.dorder
            return f"{n.tag}{primes}({vis(n.arg, 0)})"
        if isinstance(n, Pow):
            return f"{vis(n.base, 2)}^{n.exp}"
        if isinstance(n, Mul):
            neg = isinstance(n.factors[0], Rat) and n.factors[0].value < 0
            body = _negated(n) if neg else n
            factors = body.factors if isinstance(body, Mul) else (body,)
            s = "*".join(vis(f, 1) for f in factors)
            if neg:
                s = "-" + s
            return f"({s})" if (prec >= 2 or (neg and prec >= 1)) else s
        if isinstance(n, Add):
            first, *rest = n.terms
            out = [vis(first, 0)]
            for t in rest:
                if _is_negative(t):
                    out.append(f" - {vis(_negated(t), 1)}")
                else:
                    out.append(f" + {vis(t, 1)}")
            s = "".join(out)
            return f"({s})" if prec > 0 else s
        raise TypeError(f"not an expression node: {n!r}")

    return vis(e, 0)
