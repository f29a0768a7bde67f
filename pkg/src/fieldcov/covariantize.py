"""Spec-to-spec covariantization rewrites.

Three constructions, all of which adjoin covariance fields and rewrite the
Lagrangian so the enlarged group acts by symmetries while the solution space
stays essentially the same:

* horizontal: base reparametrizations become fields.  A covariance field X
  with one component per base axis is adjoined; base coordinates are replaced
  by its components, first jets are rewritten through the inverse Jacobian of
  X, and the density picks up det J.
* background: non-variational (absolute) fields are demoted to constants
  anchored to the deformed copy of the base and pulled back through X.
* vertical: an internal group action is enlarged.  The additive shift adjoins
  a scalar eta acting by A -> A + d(eta); minimal coupling introduces
  connection components and replaces jets by covariant combinations.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

from .expr import (
    Add,
    Coord,
    Expr,
    Kind,
    Mul,
    OrderOverflow,
    Pow,
    Rat,
    Ref,
    canonicalize,
    coords_of,
    rational,
    substitute,
    total_derivative,
)
from .theory import FieldDecl, FieldKind, Geom, TheorySpec, ValidationError, validate

COV_FIELD = "X"
SHIFT_FIELD = "eta"


class UnsupportedIndex(ValueError):
    """The field's transformation law needs derivatives we do not support."""


class UnsupportedAction(ValueError):
    """Unknown vertical group action."""


class AnsatzViolation(ValueError):
    """A background field breaks the zeroth-order or index-1 assumptions."""


class SingularEta(ArithmeticError):
    """A covariance map is not invertible."""


def _perm_sign(p) -> int:
    sign, p = 1, list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@dataclass(frozen=True)
class JacobianBundle:
    """Jacobian J = (x^a_mu) of a covariance field, with exact inverse.

    ``entries[a][mu]`` are first-jet references of the covariance field,
    ``det`` is the Leibniz expansion, ``cofactor[a][mu]`` the signed minors,
    and ``inverse[mu][a] = cofactor[a][mu] * det^-1`` the inverse entries.
    """

    field: str
    dim: int
    entries: tuple[tuple[Expr, ...], ...]
    det: Expr
    cofactor: tuple[tuple[Expr, ...], ...]
    inverse: tuple[tuple[Expr, ...], ...]


def _minor_det(rows: list[list[Expr]]) -> Expr:
    n = len(rows)
    if n == 0:
        return rational(1)
    terms = []
    for p in permutations(range(n)):
        factors = [rows[i][p[i]] for i in range(n)]
        terms.append(Mul(tuple([Rat(Fraction(_perm_sign(p)))] + factors)))
    return canonicalize(Add(tuple(terms)))


def jacobian_bundle(field: str, dim: int) -> JacobianBundle:
    J = [[Ref(Coord(Kind.COV_JET, field, a, (mu,))) for mu in range(dim)]
         for a in range(dim)]
    det = _minor_det(J)
    cof = []
    for a in range(dim):
        row = []
        for mu in range(dim):
            rows = [[J[i][j] for j in range(dim) if j != mu] for i in range(dim) if i != a]
            row.append(canonicalize(rational((-1) ** (a + mu)) * _minor_det(rows)))
        cof.append(tuple(row))
    det_inv = canonicalize(Pow(det, -1))
    inv = tuple(tuple(canonicalize(cof[a][mu] * det_inv) for a in range(dim))
                for mu in range(dim))
    return JacobianBundle(field, dim, tuple(tuple(r) for r in J), det, tuple(cof), inv)


def chain_rule_jet(spec: TheorySpec, field: FieldDecl,
                   jac: JacobianBundle | None = None) -> dict[Coord, Expr]:
    """First jets along the deformed axes, written in undeformed coordinates.

    Keys are the field's first-jet coordinates reinterpreted as derivatives
    along the covariance field's target axes; values contract the body jets
    with the inverse Jacobian, so for a scalar the derivative along target
    axis a is sum_mu y_mu * x^mu_a.
    """
    if field.diff_index > 1:
        raise UnsupportedIndex(f"field {field.name!r} has differential index > 1")
    if field.geom is not Geom.SCALAR:
        raise UnsupportedIndex(
            f"chain rule is implemented for scalar fields, not {field.geom.value}")
    jac = jac or jacobian_bundle(COV_FIELD, spec.base_dim)
    out: dict[Coord, Expr] = {}
    for comp in range(field.components):
        body = [Ref(Coord(Kind.JET, field.name, comp, (mu,))) for mu in range(spec.base_dim)]
        for a in range(spec.base_dim):
            expr = Add(tuple(Mul((body[mu], jac.inverse[mu][a]))
                             for mu in range(spec.base_dim)))
            out[Coord(Kind.JET, field.name, comp, (a,))] = canonicalize(expr)
    return out


def _checked(spec: TheorySpec) -> TheorySpec:
    diags = validate(spec)
    if diags:
        raise ValidationError(diags)
    return spec


def spatial_substitution(spec: TheorySpec, jac: JacobianBundle | None = None,
                         upto: int = 1) -> dict[Coord, Expr]:
    """Rewrite a theory's own coordinates as expressions over the deformed base.

    Base coordinates become covariance-field components; first jets go through
    the chain rule; with ``upto=2`` second jets are rewritten by differentiating
    the first-jet images along the body axes and contracting with the inverse
    Jacobian again (symmetric in the target indices as an identity on jets).
    """
    jac = jac or jacobian_bundle(COV_FIELD, spec.base_dim)
    dim = spec.base_dim
    mapping: dict[Coord, Expr] = {
        Coord(Kind.BASE, "", mu): Ref(Coord(Kind.COV_BASE, COV_FIELD, mu))
        for mu in range(dim)}
    for f in spec.fields:
        first = chain_rule_jet(spec, f, jac)
        mapping.update(first)
        if upto < 2:
            continue
        for comp in range(f.components):
            for a in range(dim):
                fa = first[Coord(Kind.JET, f.name, comp, (a,))]
                for b in range(a, dim):
                    mapping[Coord(Kind.JET, f.name, comp, (a, b))] = canonicalize(
                        Add(tuple(Mul((total_derivative(fa, nu), jac.inverse[nu][b]))
                                  for nu in range(dim))))
    return mapping


def covariantize_horizontal(spec: TheorySpec) -> TheorySpec:
    """Adjoin a base-diffeomorphism covariance field and rewrite the density.

    Requires a first-order theory of variational scalar fields.  Substituting
    the identity covariance field into the output recovers the input.
    """
    if spec.order != 1:
        raise OrderOverflow("horizontal covariantization is implemented for first-order theories")
    for f in spec.fields:
        if f.kind is not FieldKind.VARIATIONAL:
            raise UnsupportedIndex(
                f"all fields must be variational, {f.name!r} is {f.kind.value}")
        if f.geom is not Geom.SCALAR:
            raise UnsupportedIndex(f"field {f.name!r} is not a scalar")
    jac = jacobian_bundle(COV_FIELD, spec.base_dim)
    mapping = spatial_substitution(spec, jac, upto=1)
    lagrangian = canonicalize(substitute(spec.lagrangian, mapping) * jac.det)
    cov = FieldDecl(COV_FIELD, spec.base_dim, FieldKind.COVARIANCE, Geom.SCALAR)
    return _checked(TheorySpec(
        name=spec.name + "-cov", base_dim=spec.base_dim, coords=spec.coords,
        fields=spec.fields + (cov,), params=spec.params, lagrangian=lagrangian,
        order=1, provenance="horizontal"))


def background_params(field: FieldDecl, dim: int) -> list[str]:
    """Names of the anchored constants a demoted background field becomes."""
    out = [f"{field.name}bar_{i}{j}" for i in range(dim) for j in range(dim)]
    out.append(f"{field.name}bar_vol")
    return out


def covariantize_background(spec: TheorySpec) -> TheorySpec:
    """Demote background fields to anchored constants pulled back through X.

    Inverse-metric entries become x^mu_a x^nu_b gbar_ab and the volume
    density component becomes gbar_vol * det J.
    """
    backgrounds = [f for f in spec.fields if f.kind is FieldKind.BACKGROUND]
    if not backgrounds:
        raise AnsatzViolation("no background fields to demote")
    if spec.covariance_fields():
        raise UnsupportedAction("theory already carries a covariance field")
    used = coords_of(spec.lagrangian)
    for f in backgrounds:
        if any(c.field == f.name and c.kind is Kind.JET for c in used):
            raise AnsatzViolation(f"background field {f.name!r} appears differentiated (A1)")
        if f.diff_index > 1:
            raise AnsatzViolation(f"background field {f.name!r} has differential index > 1 (A2)")
        if f.geom is not Geom.METRIC_INVERSE:
            raise UnsupportedIndex(
                f"only inverse-metric backgrounds are supported, {f.name!r} is {f.geom.value}")

    dim = spec.base_dim
    jac = jacobian_bundle(COV_FIELD, dim)
    mapping: dict[Coord, Expr] = {}
    new_params: list[str] = []
    for f in backgrounds:
        names = background_params(f, dim)
        new_params.extend(names)
        for i in range(dim):
            for j in range(dim):
                pulled = Add(tuple(
                    Mul((jac.inverse[i][a], jac.inverse[j][b],
                         Ref(Coord(Kind.PARAM, names[a * dim + b]))))
                    for a in range(dim) for b in range(dim)))
                mapping[Coord(Kind.FIBER, f.name, i * dim + j)] = canonicalize(pulled)
        mapping[Coord(Kind.FIBER, f.name, dim * dim)] = canonicalize(
            Ref(Coord(Kind.PARAM, names[-1])) * jac.det)

    lagrangian = substitute(spec.lagrangian, mapping)
    cov = FieldDecl(COV_FIELD, dim, FieldKind.COVARIANCE, Geom.SCALAR)
    kept = tuple(f for f in spec.fields if f.kind is not FieldKind.BACKGROUND)
    return _checked(TheorySpec(
        name=spec.name + "-cov", base_dim=dim, coords=spec.coords,
        fields=kept + (cov,), params=spec.params + tuple(new_params),
        lagrangian=lagrangian, order=spec.order, provenance="background"))


@dataclass(frozen=True)
class AdditiveShift:
    """Act on a covector field by A -> A + d(eta) for a new scalar eta."""

    field: str


@dataclass(frozen=True)
class MinimalCoupling:
    """Gauge a multiplet: jets become y^A_mu + A^A_{mu B} y^B.

    ``generators`` are rational matrices spanning the Lie-algebra
    representation; the connection field gets dim * len(generators)
    components, axis-major.
    """

    field: str
    generators: tuple[tuple[tuple[Fraction, ...], ...], ...]
    connection: str = "A"


def covariantize_vertical(spec: TheorySpec, action) -> TheorySpec:
    if isinstance(action, AdditiveShift):
        return _vertical_shift(spec, action)
    if isinstance(action, MinimalCoupling):
        return _vertical_minimal(spec, action)
    raise UnsupportedAction(f"unknown vertical action {action!r}")


def _vertical_shift(spec: TheorySpec, action: AdditiveShift) -> TheorySpec:
    target = spec.field_named(action.field)
    if target.geom is not Geom.COVECTOR:
        raise UnsupportedAction(f"additive shift needs a covector field, {target.name!r} is {target.geom.value}")
    mapping = {
        Coord(Kind.FIBER, target.name, mu):
            Add((Ref(Coord(Kind.FIBER, target.name, mu)),
                 Ref(Coord(Kind.COV_JET, SHIFT_FIELD, 0, (mu,)))))
        for mu in range(spec.base_dim)}
    # jets of the target stay fixed: the shift enters through d(eta) and
    # exterior-derivative combinations are unchanged since d(d eta) = 0
    lagrangian = substitute(spec.lagrangian, mapping)
    eta = FieldDecl(SHIFT_FIELD, 1, FieldKind.COVARIANCE, Geom.SCALAR)
    return _checked(TheorySpec(
        name=spec.name + "-cov", base_dim=spec.base_dim, coords=spec.coords,
        fields=spec.fields + (eta,), params=spec.params, lagrangian=lagrangian,
        order=spec.order, provenance="vertical-shift"))


def _vertical_minimal(spec: TheorySpec, action: MinimalCoupling) -> TheorySpec:
    target = spec.field_named(action.field)
    if target.geom is not Geom.SCALAR:
        raise UnsupportedAction("minimal coupling acts on a scalar multiplet")
    gens = action.generators
    n = target.components
    for g in gens:
        if len(g) != n or any(len(row) != n for row in g):
            raise UnsupportedAction(f"generator shape must be {n}x{n}")
    dim = spec.base_dim
    nk = len(gens)

    def conn(mu: int, k: int) -> Expr:
        return Ref(Coord(Kind.FIBER, action.connection, mu * nk + k))

    mapping: dict[Coord, Expr] = {}
    for comp in range(n):
        for mu in range(dim):
            coupled = [Ref(Coord(Kind.JET, target.name, comp, (mu,)))]
            for k, g in enumerate(gens):
                for b in range(n):
                    if g[comp][b] == 0:
                        continue
                    coupled.append(Mul((Rat(Fraction(g[comp][b])), conn(mu, k),
                                        Ref(Coord(Kind.FIBER, target.name, b)))))
            mapping[Coord(Kind.JET, target.name, comp, (mu,))] = canonicalize(Add(tuple(coupled)))
    lagrangian = substitute(spec.lagrangian, mapping)
    conn_field = FieldDecl(action.connection, dim * nk, FieldKind.VARIATIONAL, Geom.LIE_ONEFORM)
    return _checked(TheorySpec(
        name=spec.name + "-cov", base_dim=dim, coords=spec.coords,
        fields=spec.fields + (conn_field,), params=spec.params,
        lagrangian=lagrangian, order=spec.order, provenance="vertical-minimal"))


# --------------------------------------------------------------------------
# trivial covariance substitution and parent recovery


def identity_covariance_map(spec_tilde: TheorySpec) -> dict[Coord, Expr]:
    """Map sending every covariance field to the trivial one.

    Axis-per-component fields become the identity point map (values = base
    coordinates, Jacobian = identity); gauge-shift scalars become zero.
    """
    mapping: dict[Coord, Expr] = {}
    dim = spec_tilde.base_dim
    for f in spec_tilde.covariance_fields():
        for c in coords_of(spec_tilde.lagrangian):
            if c.field != f.name:
                continue
            if f.components == dim:
                if c.kind is Kind.COV_BASE:
                    mapping[c] = Ref(Coord(Kind.BASE, "", c.index))
                elif c.kind is Kind.COV_JET and c.order == 1:
                    mapping[c] = rational(1 if c.multi[0] == c.index else 0)
                elif c.kind is Kind.COV_JET:
                    mapping[c] = rational(0)
            else:
                mapping[c] = rational(0)
    return mapping


def restrict_to_identity(spec_tilde: TheorySpec) -> Expr:
    """The covariantized Lagrangian with the trivial covariance field."""
    return substitute(spec_tilde.lagrangian, identity_covariance_map(spec_tilde))


def parent_spec(spec_tilde: TheorySpec) -> TheorySpec:
    """Reconstruct the theory a horizontal/vertical covariantization came from."""
    if spec_tilde.provenance == "background":
        raise UnsupportedAction("background covariantization does not restrict to its parent")
    kept = tuple(f for f in spec_tilde.fields if f.kind is not FieldKind.COVARIANCE)
    name = spec_tilde.name[:-4] if spec_tilde.name.endswith("-cov") else spec_tilde.name + "-orig"
    return _checked(TheorySpec(
        name=name, base_dim=spec_tilde.base_dim, coords=spec_tilde.coords,
        fields=kept, params=spec_tilde.params,
        lagrangian=restrict_to_identity(spec_tilde), order=spec_tilde.order))


def gauge_shifted_lagrangian(spec: TheorySpec, shift_field: str = "f") -> Expr:
    """The Lagrangian after A -> A + df (and eta -> eta - f when present).

    The shift is a fresh scalar field symbol; exact invariance of a
    shift-covariantized theory shows up as a literally zero difference.
    """
    covectors = [f for f in spec.fields if f.geom is Geom.COVECTOR]
    if len(covectors) != 1:
        raise UnsupportedAction("gauge shift needs exactly one covector field")
    a = covectors[0]
    mapping: dict[Coord, Expr] = {}
    for mu in range(spec.base_dim):
        df = Ref(Coord(Kind.JET, shift_field, 0, (mu,)))
        mapping[Coord(Kind.FIBER, a.name, mu)] = Add((Ref(Coord(Kind.FIBER, a.name, mu)), df))
        for eta in spec.covariance_fields():
            if eta.components == 1:
                c = Coord(Kind.COV_JET, eta.name, 0, (mu,))
                mapping[c] = Add((Ref(c), Mul((rational(-1), df))))
    return substitute(spec.lagrangian, mapping)


# --------------------------------------------------------------------------
# flat connections from group-valued maps


Matrix = tuple[tuple[Expr, ...], ...]


def _matrix_inverse(m: Matrix) -> Matrix:
    n = len(m)
    rows = [list(r) for r in m]
    det = _minor_det(rows)
    if det == rational(0):
        raise SingularEta("matrix has identically vanishing determinant")
    det_inv = canonicalize(Pow(det, -1))
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            sub = [[rows[r][c] for c in range(n) if c != i] for r in range(n) if r != j]
            cof = canonicalize(rational((-1) ** (i + j)) * _minor_det(sub))
            row.append(canonicalize(cof * det_inv))
        out.append(tuple(row))
    return tuple(out)


def flat_connection_from(eta, dim: int):
    """Connection components A_mu = eta^-1 * D_mu(eta).

    ``eta`` is either a scalar expression (abelian case, where the result
    reduces to the components of d log eta, i.e. d eta for eta = exp f) or a
    square matrix of expressions.  Returns a list over base axes; entries are
    expressions or matrices accordingly.  Connections of this form are flat.
    """
    if isinstance(eta, Expr):
        inv = canonicalize(Pow(eta, -1))
        return [canonicalize(inv * total_derivative(eta, mu)) for mu in range(dim)]
    matrix = tuple(tuple(entry for entry in row) for row in eta)
    inv = _matrix_inverse(matrix)
    n = len(matrix)
    out = []
    for mu in range(dim):
        d_eta = [[total_derivative(matrix[i][j], mu) for j in range(n)] for i in range(n)]
        a_mu = tuple(tuple(
            canonicalize(Add(tuple(Mul((inv[i][k], d_eta[k][j])) for k in range(n))))
            for j in range(n)) for i in range(n))
        out.append(a_mu)
    return out


def curvature(conn, dim: int):
    """F_{mu nu} = D_mu A_nu - D_nu A_mu + [A_mu, A_nu] for each mu < nu."""
    out = {}
    scalar = conn and isinstance(conn[0], Expr)
    for mu in range(dim):
        for nu in range(mu + 1, dim):
            if scalar:
                out[(mu, nu)] = canonicalize(
                    total_derivative(conn[nu], mu) - total_derivative(conn[mu], nu))
                continue
            n = len(conn[mu])
            ent = []
            for i in range(n):
                row = []
                for j in range(n):
                    comm = Add(tuple(
                        Mul((conn[mu][i][k], conn[nu][k][j])) for k in range(n)) + tuple(
                        Mul((rational(-1), conn[nu][i][k], conn[mu][k][j])) for k in range(n)))
                    row.append(canonicalize(
                        total_derivative(conn[nu][i][j], mu)
                        - total_derivative(conn[mu][i][j], nu) + comm))
                ent.append(tuple(row))
            out[(mu, nu)] = tuple(ent)
    return out
