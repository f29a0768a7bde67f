"""Field-theory declarations and the line-oriented theory-definition DSL.

A theory file looks like::

    theory kg1
    base 2 (t, x)
    param m
    field phi[1] : scalar variational
    lagrangian D[phi;t]*D[phi;x] - (1/2)*m^2*phi^2

Sections must appear in the order theory / base / param* / field* /
lagrangian; the lagrangian is the last section and may span several lines.
Expressions use ``+ - * / ^`` with integer literals (rationals are written
``p/q``), jets ``D[f;mu,...]``, components ``f[i]``, and opaque function
applications ``V(q)`` (derivative tags render as ``V'(q)``).  Covariance
fields with one component per base axis use compound component names: a
field ``X`` over axes ``(t, x)`` is written ``Xt``, ``Xx``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from enum import Enum
from fractions import Fraction
from importlib import resources
from itertools import combinations_with_replacement
from pathlib import Path

from .expr import (
    Coord,
    Expr,
    Fun,
    Kind,
    NameEnv,
    Pow,
    Rat,
    Ref,
    canonicalize,
    coords_of,
    max_jet_order,
    render_expr,
)


class DslSyntaxError(Exception):
    """Syntax error in a theory file, with 1-based line and column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class ValidationError(Exception):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


class FieldKind(Enum):
    VARIATIONAL = "variational"
    BACKGROUND = "background"
    COVARIANCE = "covariance"


class Geom(Enum):
    SCALAR = "scalar"
    COVECTOR = "covector"
    METRIC_INVERSE = "metric_inverse"
    LIE_ONEFORM = "lie_oneform"


@dataclass(frozen=True)
class FieldDecl:
    name: str
    components: int
    kind: FieldKind
    geom: Geom

    @property
    def diff_index(self) -> int:
        return 0 if self.geom is Geom.SCALAR else 1

    def coord_kinds(self) -> tuple[Kind, Kind]:
        """(value kind, jet kind) for this field's coordinates."""
        if self.kind is FieldKind.COVARIANCE:
            return Kind.COV_BASE, Kind.COV_JET
        return Kind.FIBER, Kind.JET


@dataclass(frozen=True)
class TheorySpec:
    name: str
    base_dim: int
    coords: tuple[str, ...]
    fields: tuple[FieldDecl, ...]
    params: tuple[str, ...]
    lagrangian: Expr
    order: int = 1
    #: how this spec was produced ("" for parsed input; covariantize ops tag
    #: their outputs "horizontal" / "background" / "vertical-shift" / ...)
    provenance: str = dc_field(default="", compare=False)

    def field_named(self, name: str) -> FieldDecl:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(f"theory {self.name!r} declares no field {name!r}")

    def covariance_fields(self) -> tuple[FieldDecl, ...]:
        return tuple(f for f in self.fields if f.kind is FieldKind.COVARIANCE)

    def name_env(self) -> NameEnv:
        wide = frozenset(f.name for f in self.fields
                         if f.kind is FieldKind.COVARIANCE and f.components == self.base_dim)
        multi = frozenset(f.name for f in self.fields if f.components > 1)
        return NameEnv(self.coords, wide_cov=wide, multi=multi)


def jet_coords(spec: TheorySpec, upto: int) -> list[Coord]:
    """Deterministic enumeration of base, fiber and jet coordinates.

    Symmetric multi-indices are deduplicated, so a component contributes
    C(dim+s-1, s) jets at order s.
    """
    if upto > 2:
        raise ValueError("jet order cap is 2")
    out = [Coord(Kind.BASE, "", mu) for mu in range(spec.base_dim)]
    for f in spec.fields:
        value_kind, jet_kind = f.coord_kinds()
        for comp in range(f.components):
            out.append(Coord(value_kind, f.name, comp))
            for s in range(1, upto + 1):
                for multi in combinations_with_replacement(range(spec.base_dim), s):
                    out.append(Coord(jet_kind, f.name, comp, multi))
    return out


# --------------------------------------------------------------------------
# validation


def validate(spec: TheorySpec) -> list[str]:
    """All TheorySpec invariants plus the background-field Ansaetze.

    Returns diagnostics; empty means valid.  A1: background fields appear
    only to zeroth order.  A2: differential index at most 1.
    """
    diags: list[str] = []
    if spec.base_dim < 1:
        diags.append(f"base dimension must be >= 1, got {spec.base_dim}")
    if len(spec.coords) != spec.base_dim:
        diags.append(f"declared {len(spec.coords)} coordinate names for base dimension {spec.base_dim}")
    if spec.order not in (1, 2):
        diags.append(f"Lagrangian order must be 1 or 2, got {spec.order}")

    names: dict[str, str] = {}

    def claim(name: str, role: str):
        if name == "D":
            diags.append(f"{role} name 'D' is reserved for jet notation")
        elif name in names:
            diags.append(f"{role} name {name!r} collides with {names[name]}")
        else:
            names[name] = role

    for c in spec.coords:
        claim(c, "coordinate")
    for p in spec.params:
        claim(p, "parameter")
    for f in spec.fields:
        claim(f.name, "field")
        if f.components < 1:
            diags.append(f"field {f.name!r} needs at least one component")
        if f.geom is Geom.COVECTOR and f.components != spec.base_dim:
            diags.append(f"covector field {f.name!r} needs {spec.base_dim} components")
        if f.geom is Geom.METRIC_INVERSE and f.components != spec.base_dim ** 2 + 1:
            diags.append(
                f"metric_inverse field {f.name!r} needs {spec.base_dim ** 2 + 1} components "
                "(inverse-metric entries row-major, then the volume density)")
        if f.geom is Geom.LIE_ONEFORM and f.components % spec.base_dim != 0:
            diags.append(f"lie_oneform field {f.name!r} needs a multiple of {spec.base_dim} components")
        if f.kind is FieldKind.COVARIANCE:
            if f.geom is not Geom.SCALAR:
                diags.append(f"covariance field {f.name!r} must have scalar point-map geometry")
            if f.components not in (spec.base_dim, 1):
                diags.append(
                    f"covariance field {f.name!r} needs {spec.base_dim} components "
                    "(one per base axis) or a single one (gauge shift scalar)")
            if f.components == spec.base_dim:
                for axis in spec.coords:
                    claim(f.name + axis, f"covariance component of {f.name!r}")
        if f.diff_index > 1:
            diags.append(f"field {f.name!r} has differential index {f.diff_index} > 1 (A2)")

    declared = set(jet_coords(spec, 2)) | {Coord(Kind.PARAM, p) for p in spec.params}
    used = coords_of(spec.lagrangian)
    for c in sorted(used - declared, key=Coord.sort_key):
        diags.append(f"lagrangian references undeclared coordinate {c}")

    order_seen = max_jet_order(spec.lagrangian)
    if order_seen > spec.order:
        diags.append(f"lagrangian contains order-{order_seen} jets but the theory is order {spec.order}")

    by_name = {f.name: f for f in spec.fields}
    matter_order = 0
    for c in sorted(used, key=Coord.sort_key):
        f = by_name.get(c.field)
        if f is None:
            continue
        if f.kind is FieldKind.BACKGROUND and c.kind in (Kind.JET, Kind.COV_JET):
            diags.append(f"background field {f.name!r} appears differentiated (A1)")
        if f.kind is not FieldKind.COVARIANCE and c.kind is Kind.JET:
            matter_order = max(matter_order, c.order)
    for c in sorted(used, key=Coord.sort_key):
        f = by_name.get(c.field)
        if f is not None and f.kind is FieldKind.COVARIANCE and c.order == 2 and matter_order <= 1:
            diags.append(
                f"covariance field {f.name!r} carries order-2 jets but the matter "
                "fields are first order (index-0 construction needs only first jets)")
            break
    return diags


# --------------------------------------------------------------------------
# tokenizer


_TOKEN_RE = re.compile(r"\s*(?:(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*'*)|(?P<op>[-+*/^()\[\];,:]))")


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, line_no: int, col_base: int = 1) -> list[_Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(text[pos:].lstrip()) if text[pos:].lstrip() else pos
            raise DslSyntaxError(f"unexpected character {stripped[0]!r}", line_no, bad_at + col_base)
        pos = m.end()
        for kind in ("int", "name", "op"):
            if m.group(kind) is not None:
                out.append(_Token(kind, m.group(kind), line_no, m.start(kind) + col_base))
                break
    return out


# --------------------------------------------------------------------------
# expression parser (recursive descent over the token list)


class _ExprParser:
    def __init__(self, tokens: list[_Token], resolve, line: int):
        self.toks = tokens
        self.pos = 0
        self.resolve = resolve  # callable(name token, component or None, axes or None) -> Coord
        self.line = line

    def peek(self) -> _Token | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> _Token:
        t = self.peek()
        if t is None:
            raise DslSyntaxError("unexpected end of expression", self.line, 0)
        self.pos += 1
        return t

    def expect(self, text: str) -> _Token:
        t = self.next()
        if t.text != text:
            raise DslSyntaxError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return t

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t is not None:
            raise DslSyntaxError(f"trailing input {t.text!r}", t.line, t.col)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while (t := self.peek()) and t.text in "+-":
            self.next()
            rhs = self.term()
            e = e + rhs if t.text == "+" else e - rhs
        return e

    def term(self) -> Expr:
        e = self.unary()
        while (t := self.peek()) and t.text in "*/":
            self.next()
            rhs = self.unary()
            e = e * rhs if t.text == "*" else e / rhs
        return e

    def unary(self) -> Expr:
        t = self.peek()
        if t and t.text == "-":
            self.next()
            return -self.unary()
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while (t := self.peek()) and t.text == "^":
            self.next()
            e = Pow(e, self.exponent())
        return e

    def exponent(self) -> int:
        t = self.next()
        sign = 1
        if t.text == "-":
            sign = -1
            t = self.next()
        if t.kind != "int":
            raise DslSyntaxError("exponent must be an integer literal", t.line, t.col)
        return sign * int(t.text)

    def atom(self) -> Expr:
        t = self.next()
        if t.kind == "int":
            return Rat(Fraction(int(t.text)))
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            if t.text == "D" and (n := self.peek()) and n.text == "[":
                return self.jet_ref(t)
            if (n := self.peek()) and n.text == "(":
                self.next()
                arg = self.expr()
                self.expect(")")
                tag = t.text.rstrip("'")
                return Fun(tag, arg, len(t.text) - len(tag))
            return Ref(self.component_ref(t))
        raise DslSyntaxError(f"unexpected token {t.text!r}", t.line, t.col)

    def component_ref(self, name_tok: _Token) -> Coord:
        comp = None
        if (n := self.peek()) and n.text == "[":
            self.next()
            idx = self.next()
            if idx.kind != "int":
                raise DslSyntaxError("component index must be an integer", idx.line, idx.col)
            comp = int(idx.text)
            self.expect("]")
        return self.resolve(name_tok, comp, None)

    def jet_ref(self, d_tok: _Token) -> Expr:
        self.expect("[")
        name = self.next()
        if name.kind != "name":
            raise DslSyntaxError("jet target must be a field name", name.line, name.col)
        comp = None
        if (n := self.peek()) and n.text == "[":
            self.next()
            idx = self.next()
            if idx.kind != "int":
                raise DslSyntaxError("component index must be an integer", idx.line, idx.col)
            comp = int(idx.text)
            self.expect("]")
        self.expect(";")
        axes = [self.next()]
        while (n := self.peek()) and n.text == ",":
            self.next()
            axes.append(self.next())
        self.expect("]")
        return Ref(self.resolve(name, comp, axes))


# --------------------------------------------------------------------------
# theory parser


def _make_resolver(coords: tuple[str, ...], params: list[str], fields: list[FieldDecl]):
    axis_index = {n: i for i, n in enumerate(coords)}
    by_name = {f.name: f for f in fields}
    compound: dict[str, tuple[FieldDecl, int]] = {}
    for f in fields:
        if f.kind is FieldKind.COVARIANCE and f.components == len(coords):
            for i, axis in enumerate(coords):
                compound[f.name + axis] = (f, i)
    param_set = set(params)

    def resolve(tok: _Token, comp: int | None, axes: list[_Token] | None) -> Coord:
        name = tok.text
        multi: tuple[int, ...] = ()
        if axes is not None:
            for a in axes:
                if a.text not in axis_index:
                    raise DslSyntaxError(f"unknown base coordinate {a.text!r}", a.line, a.col)
            multi = tuple(axis_index[a.text] for a in axes)

        if name in compound and comp is None:
            f, i = compound[name]
            kind = Kind.COV_JET if axes is not None else Kind.COV_BASE
            return Coord(kind, f.name, i, multi)
        if name in by_name:
            f = by_name[name]
            c = comp if comp is not None else 0
            if not (0 <= c < f.components):
                raise DslSyntaxError(f"field {name!r} has no component {c}", tok.line, tok.col)
            if comp is None and f.components > 1:
                raise DslSyntaxError(f"field {name!r} has {f.components} components; write {name}[i]",
                                     tok.line, tok.col)
            value_kind, jet_kind = f.coord_kinds()
            return Coord(jet_kind if axes is not None else value_kind, f.name, c, multi)
        if axes is not None:
            raise DslSyntaxError(f"jet of undeclared field {name!r}", tok.line, tok.col)
        if comp is not None:
            raise DslSyntaxError(f"component reference to undeclared field {name!r}", tok.line, tok.col)
        if name in param_set:
            return Coord(Kind.PARAM, name)
        if name in axis_index:
            return Coord(Kind.BASE, "", axis_index[name])
        raise DslSyntaxError(f"unknown name {name!r}", tok.line, tok.col)

    return resolve


_FIELD_LINE = re.compile(
    r"^field\s+(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*\[\s*(?P<comps>\d+)\s*\]\s*:\s*"
    r"(?P<geom>scalar|covector|metric_inverse|lie_oneform)\s+"
    r"(?P<kind>variational|background|covariance)\s*$")
_BASE_LINE = re.compile(r"^base\s+(?P<dim>\d+)\s*\(\s*(?P<names>[^)]*)\)\s*$")


def parse_theory(text: str) -> TheorySpec:
    """Parse and validate a theory definition; raises on any problem."""
    lines = text.splitlines()
    name = None
    base_dim = None
    coords: tuple[str, ...] = ()
    params: list[str] = []
    fields: list[FieldDecl] = []
    lag_parts: list[tuple[int, str]] = []
    in_lagrangian = False

    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if in_lagrangian:
            lag_parts.append((i, line))
            continue
        stripped = line.strip()
        head = stripped.split(None, 1)[0]
        if head == "theory":
            name = stripped[len("theory"):].strip()
            if not name:
                raise DslSyntaxError("theory needs a name", i, 1)
        elif head == "base":
            m = _BASE_LINE.match(stripped)
            if not m:
                raise DslSyntaxError("expected: base <dim> (<name>, ...)", i, 1)
            base_dim = int(m.group("dim"))
            coords = tuple(n.strip() for n in m.group("names").split(",") if n.strip())
        elif head == "param":
            for n in stripped[len("param"):].split(","):
                n = n.strip()
                if n:
                    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", n):
                        raise DslSyntaxError(f"bad parameter name {n!r}", i, 1)
                    params.append(n)
        elif head == "field":
            m = _FIELD_LINE.match(stripped)
            if not m:
                raise DslSyntaxError(
                    "expected: field <name>[<components>] : <geom> <kind>", i, 1)
            fields.append(FieldDecl(m.group("name"), int(m.group("comps")),
                                    FieldKind(m.group("kind")), Geom(m.group("geom"))))
        elif head == "lagrangian":
            rest = stripped[len("lagrangian"):].strip()
            if rest:
                lag_parts.append((i, rest))
            in_lagrangian = True
        else:
            raise DslSyntaxError(f"unknown section {head!r}", i, 1)

    if name is None:
        raise DslSyntaxError("missing 'theory' section", 1, 1)
    if base_dim is None:
        raise DslSyntaxError("missing 'base' section", 1, 1)
    if not lag_parts:
        raise DslSyntaxError("missing 'lagrangian' section", len(lines), 1)

    resolve = _make_resolver(coords, params, fields)
    tokens: list[_Token] = []
    for line_no, chunk in lag_parts:
        tokens.extend(_tokenize(chunk, line_no))
    lagrangian = canonicalize(_ExprParser(tokens, resolve, lag_parts[0][0]).parse())

    order = max(1, max_jet_order(lagrangian))
    spec = TheorySpec(name=name, base_dim=base_dim, coords=coords, fields=tuple(fields),
                      params=tuple(params), lagrangian=lagrangian, order=min(order, 2))
    diags = validate(spec)
    if diags:
        raise ValidationError(diags)
    return spec


def parse_expr(text: str, spec: TheorySpec) -> Expr:
    """Parse a standalone expression in a theory's namespace."""
    resolve = _make_resolver(spec.coords, list(spec.params), list(spec.fields))
    return canonicalize(_ExprParser(_tokenize(text, 1), resolve, 1).parse())


# --------------------------------------------------------------------------
# rendering and fixture loading


def render_theory(spec: TheorySpec) -> str:
    out = [f"theory {spec.name}"]
    out.append(f"base {spec.base_dim} ({', '.join(spec.coords)})")
    if spec.params:
        out.append(f"param {', '.join(spec.params)}")
    for f in spec.fields:
        out.append(f"field {f.name}[{f.components}] : {f.geom.value} {f.kind.value}")
    out.append(f"lagrangian {render_expr(spec.lagrangian, spec.name_env())}")
    return "\n".join(out) + "\n"


def load_theory(path: str | Path) -> TheorySpec:
    return parse_theory(Path(path).read_text(encoding="utf-8"))


def builtin_theory(name: str) -> TheorySpec:
    """Load one of the bundled theory fixtures by bare name (e.g. "kg1")."""
    res = resources.files("fieldcov").joinpath("theories", f"{name}.thy")
    return parse_theory(res.read_text(encoding="utf-8"))


def builtin_theory_names() -> list[str]:
    folder = resources.files("fieldcov").joinpath("theories")
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".thy"))
