import math

import pytest

from fieldcov.expr import Coord, Kind, rational
from fieldcov.theory import (
    DslSyntaxError,
    FieldDecl,
    FieldKind,
    Geom,
    ValidationError,
    builtin_theory,
    builtin_theory_names,
    jet_coords,
    parse_expr,
    parse_theory,
    render_theory,
    validate,
)

ALL_FIXTURES = ("mechanics", "kg1", "kg2", "chern-simons", "proca",
                "stueckelberg", "minimal-coupling")


def test_bundled_fixtures_complete():
    assert sorted(builtin_theory_names()) == sorted(ALL_FIXTURES)


@pytest.mark.parametrize("name", ALL_FIXTURES)
def test_bundled_fixtures_validate(name):
    spec = builtin_theory(name)
    assert validate(spec) == []


@pytest.mark.parametrize("name", ALL_FIXTURES)
def test_render_parse_round_trip(name):
    spec = builtin_theory(name)
    again = parse_theory(render_theory(spec))
    assert again == spec
    assert render_theory(again) == render_theory(spec)


def test_kg1_lagrangian_structure():
    spec = builtin_theory("kg1")
    want = parse_expr("D[phi;t]*D[phi;x] - (1/2)*m^2*phi^2", spec)
    assert spec.lagrangian == want
    assert spec.order == 1
    assert spec.base_dim == 2


def test_differentiated_background_rejected():
    text = ("theory bad\n"
            "base 1 (t)\n"
            "field phi[1] : scalar variational\n"
            "field g[2] : metric_inverse background\n"
            "lagrangian D[phi;t]^2*g[0] + D[g[0];t]\n")
    with pytest.raises(ValidationError, match="differentiated"):
        parse_theory(text)


def test_degenerate_theory_with_no_fields():
    spec = parse_theory("theory empty\nbase 1 (t)\nlagrangian 3/2\n")
    assert spec.fields == ()
    assert spec.lagrangian == rational(3, 2)


def test_syntax_error_carries_position():
    with pytest.raises(DslSyntaxError) as err:
        parse_theory("theory t\nbase 1 (t)\nlagrangian 1 +\n")
    assert err.value.line >= 1


def test_unknown_name_rejected():
    with pytest.raises(DslSyntaxError, match="unknown name"):
        parse_theory("theory t\nbase 1 (t)\nlagrangian nope\n")


def test_metric_inverse_component_count_enforced():
    text = ("theory bad\nbase 2 (t, x)\n"
            "field g[4] : metric_inverse background\n"
            "lagrangian g[0]\n")
    with pytest.raises(ValidationError, match="metric_inverse"):
        parse_theory(text)


def test_covariance_component_rule():
    bad = FieldDecl("X", 3, FieldKind.COVARIANCE, Geom.SCALAR)
    spec = builtin_theory("kg1")
    diags = validate(type(spec)(
        name="t", base_dim=2, coords=("t", "x"), fields=(bad,), params=(),
        lagrangian=rational(1), order=1))
    assert any("covariance" in d for d in diags)


def test_second_order_covariance_jets_flagged():
    text = ("theory t\nbase 1 (t)\n"
            "field q[1] : scalar variational\n"
            "field X[1] : scalar covariance\n"
            "lagrangian D[q;t]*D[Xt;t,t]\n")
    with pytest.raises(ValidationError, match="order-2 jets"):
        parse_theory(text)


def test_multiline_lagrangian_with_comments():
    spec = parse_theory(
        "# heading comment\n"
        "theory t\n"
        "base 1 (t)\n"
        "param m   # trailing comment\n"
        "field q[1] : scalar variational\n"
        "lagrangian (1/2)*m*D[q;t]^2\n"
        "  - (1/2)*q^2\n")
    want = parse_expr("(1/2)*m*D[q;t]^2 - (1/2)*q^2", spec)
    assert spec.lagrangian == want


def test_jet_coords_counts_match_closed_form():
    spec = builtin_theory("kg1")
    for upto in (1, 2):
        coords = jet_coords(spec, upto)
        dim = spec.base_dim
        expected = dim  # base coordinates
        for f in spec.fields:
            per_comp = 1 + sum(math.comb(dim + s - 1, s) for s in range(1, upto + 1))
            expected += f.components * per_comp
        assert len(coords) == expected
        assert len(set(coords)) == len(coords)


def test_jet_coords_kg1_first_order():
    spec = builtin_theory("kg1")
    coords = jet_coords(spec, 1)
    assert len(coords) == 5  # t, x, phi, phi_t, phi_x


def test_jet_coords_symmetric_second_jets():
    spec = builtin_theory("kg1")
    second = [c for c in jet_coords(spec, 2) if c.kind is Kind.JET and c.order == 2]
    assert len(second) == 3  # tt, tx, xx


def test_jet_coords_covariance_field():
    spec = parse_theory(
        "theory t\nbase 2 (t, x)\n"
        "field X[2] : scalar covariance\n"
        "lagrangian D[Xt;t]\n")
    coords = jet_coords(spec, 1)
    cov = [c for c in coords if c.field == "X"]
    assert len(cov) == 6  # two values + four first jets


def test_component_syntax_required_for_multiplets():
    with pytest.raises(DslSyntaxError, match="components"):
        parse_theory("theory t\nbase 1 (t)\nfield q[2] : scalar variational\nlagrangian q\n")


def test_compound_covariance_names_resolve():
    spec = parse_theory(
        "theory t\nbase 2 (t, x)\n"
        "field phi[1] : scalar variational\n"
        "field X[2] : scalar covariance\n"
        "lagrangian D[phi;t]*D[Xx;t] + Xt\n")
    refs = {r.coord for r in _refs(spec.lagrangian)}
    assert Coord(Kind.COV_BASE, "X", 0) in refs
    assert Coord(Kind.COV_JET, "X", 1, (0,)) in refs


def _refs(e):
    from fieldcov.expr import Add, Fun, Mul, Pow, Ref
    out = []
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Ref):
            out.append(n)
        elif isinstance(n, Add):
            stack.extend(n.terms)
        elif isinstance(n, Mul):
            stack.extend(n.factors)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, Fun):
            stack.append(n.arg)
    return out


def test_expression_render_parse_round_trip():
    import random

    from fieldcov.expr import PoleHit, canonicalize, render_expr
    from conftest import random_expr

    spec = parse_theory(
        "theory rt\nbase 2 (t, x)\n"
        "field a[1] : scalar variational\n"
        "field b[1] : scalar variational\n"
        "field c[1] : scalar variational\n"
        "field u[1] : scalar variational\n"
        "lagrangian a*b*c*D[u;t]\n")
    rng = random.Random(77)
    checked = 0
    while checked < 400:
        raw = random_expr(rng)
        try:
            e = canonicalize(raw)
        except PoleHit:
            continue
        text = render_expr(e, spec.name_env())
        assert parse_expr(text, spec) == e, text
        checked += 1
