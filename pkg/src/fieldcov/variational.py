"""Euler-Lagrange operator, canonical SEM tensor density, energy, Piola transform."""

from __future__ import annotations

from dataclasses import dataclass

from .expr import (
    Add,
    Coord,
    Expr,
    Kind,
    Mul,
    OrderOverflow,
    Ref,
    canonicalize,
    max_jet_order,
    partial,
    rational,
    total_derivative,
)
from .theory import FieldDecl, FieldKind, TheorySpec
from .covariantize import JacobianBundle


@dataclass
class ELSystem:
    """Euler-Lagrange residuals keyed by (field name, component)."""

    residuals: dict[tuple[str, int], Expr]
    order: int

    def residual(self, name: str, comp: int = 0) -> Expr:
        return self.residuals[(name, comp)]


def _el_residual(spec: TheorySpec, field: FieldDecl, comp: int) -> Expr:
    value_kind, jet_kind = field.coord_kinds()
    lag = spec.lagrangian
    terms = [partial(lag, Coord(value_kind, field.name, comp))]
    for mu in range(spec.base_dim):
        p = partial(lag, Coord(jet_kind, field.name, comp, (mu,)))
        if p != rational(0):
            terms.append(canonicalize(rational(-1) * total_derivative(p, mu)))
    if spec.order >= 2:
        for mu in range(spec.base_dim):
            for nu in range(mu, spec.base_dim):
                p = partial(lag, Coord(jet_kind, field.name, comp, (mu, nu)))
                if p != rational(0):
                    terms.append(total_derivative(total_derivative(p, nu), mu))
    return canonicalize(Add(tuple(terms)))


def euler_lagrange(spec: TheorySpec, field: FieldDecl | str) -> ELSystem:
    """Residuals dL/dy^A - D_mu dL/dy^A_mu (+ D_mu D_nu dL/dy^A_{mu nu}).

    Second-order terms use the symmetric convention mu <= nu, matching the
    deduplicated jet coordinates.
    """
    if isinstance(field, str):
        field = spec.field_named(field)
    if field.kind is FieldKind.BACKGROUND:
        raise ValueError(f"background field {field.name!r} is not varied")
    if spec.order > 2:
        raise OrderOverflow("Euler-Lagrange derivation caps at order 2")
    residuals = {(field.name, comp): _el_residual(spec, field, comp)
                 for comp in range(field.components)}
    order = max((max_jet_order(r) for r in residuals.values()), default=0)
    return ELSystem(residuals, order)


def euler_lagrange_all(spec: TheorySpec) -> ELSystem:
    """Residuals for every variational and covariance field."""
    residuals: dict[tuple[str, int], Expr] = {}
    for f in spec.fields:
        if f.kind is FieldKind.BACKGROUND:
            continue
        residuals.update(euler_lagrange(spec, f).residuals)
    order = max((max_jet_order(r) for r in residuals.values()), default=0)
    return ELSystem(residuals, order)


@dataclass
class SEMTensor:
    """Stress-energy-momentum tensor density, components[c][a] = t^c_a."""

    components: tuple[tuple[Expr, ...], ...]
    variant: str = "canonical"


def _sem_fields(spec: TheorySpec) -> list[FieldDecl]:
    # variational fields always; covariance fields only once they exist,
    # i.e. when the tensor of a covariantized theory is requested
    return [f for f in spec.fields if f.kind is not FieldKind.BACKGROUND]


def sem_tensor(spec: TheorySpec) -> SEMTensor:
    """Canonical SEM density t^c_a = L delta^c_a - (dL/dy^A_c) y^A_a."""
    if spec.order != 1:
        raise OrderOverflow("canonical SEM tensor is defined for first-order theories")
    lag = spec.lagrangian
    dim = spec.base_dim
    rows = []
    for c in range(dim):
        row = []
        for a in range(dim):
            terms = [lag] if c == a else []
            for f in _sem_fields(spec):
                value_kind, jet_kind = f.coord_kinds()
                for comp in range(f.components):
                    p = partial(lag, Coord(jet_kind, f.name, comp, (c,)))
                    if p != rational(0):
                        terms.append(Mul((rational(-1), p,
                                          Ref(Coord(jet_kind, f.name, comp, (a,))))))
            row.append(canonicalize(Add(tuple(terms))) if terms else rational(0))
        rows.append(tuple(row))
    return SEMTensor(tuple(rows), "canonical")


def piola_transform(sem: SEMTensor, jac: JacobianBundle) -> SEMTensor:
    """p^mu_a = t^c_a x^mu_c det J (two-point material-representation flux)."""
    if sem.variant != "canonical":
        raise ValueError("piola_transform expects the canonical variant")
    dim = jac.dim
    rows = []
    for mu in range(dim):
        row = []
        for a in range(dim):
            row.append(canonicalize(Add(tuple(
                Mul((sem.components[c][a], jac.inverse[mu][c], jac.det))
                for c in range(dim)))))
        rows.append(tuple(row))
    return SEMTensor(tuple(rows), "piola-kirchhoff")


def energy(spec: TheorySpec) -> Expr:
    """E = -t^0_0, the energy density of a first-order theory."""
    return canonicalize(rational(-1) * sem_tensor(spec).components[0][0])


def sem_divergence_residual(spec: TheorySpec, a: int) -> Expr:
    """dL/dx^a - D_b t^b_a + sum_A (dL/dy^A) y^A_a: identically zero.

    The variational-derivative sum runs over every field, backgrounds
    included; their formal first jets cancel against the D_b L expansion.
    """
    lag = spec.lagrangian
    dim = spec.base_dim
    sem = sem_tensor(spec)
    terms = [partial(lag, Coord(Kind.BASE, "", a))]
    for b in range(dim):
        if sem.components[b][a] != rational(0):
            terms.append(canonicalize(
                rational(-1) * total_derivative(sem.components[b][a], b, max_order=3)))
    for f in spec.fields:
        value_kind, jet_kind = f.coord_kinds()
        for comp in range(f.components):
            if f.kind is FieldKind.BACKGROUND:
                delta = partial(lag, Coord(value_kind, f.name, comp))
            else:
                delta = _el_residual(spec, f, comp)
            if delta != rational(0):
                terms.append(Mul((delta, Ref(Coord(jet_kind, f.name, comp, (a,))))))
    return canonicalize(Add(tuple(terms)))
