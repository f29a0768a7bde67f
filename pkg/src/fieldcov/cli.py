"""Command-line front end.

Subcommands: parse, covariantize, el, sem, energy, verify, simulate,
dump-section.  Inputs are theory files or bare names of bundled fixtures.
Exit codes: 0 success / all checks passed, 1 check failure, 2 usage or parse
error, 3 internal error.  Output is deterministic for fixed arguments.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .expr import render_expr
from .theory import (
    DslSyntaxError,
    FieldKind,
    Geom,
    TheorySpec,
    ValidationError,
    builtin_theory,
    builtin_theory_names,
    parse_theory,
    render_theory,
    validate,
)
from .covariantize import (
    AdditiveShift,
    MinimalCoupling,
    UnsupportedAction,
    UnsupportedIndex,
    covariantize_background,
    covariantize_horizontal,
    covariantize_vertical,
)
from .variational import energy, euler_lagrange_all, sem_tensor
from . import numerics, verify


def _load(token: str) -> TheorySpec:
    path = Path(token)
    if path.exists():
        return parse_theory(path.read_text(encoding="utf-8"))
    if token in builtin_theory_names():
        return builtin_theory(token)
    raise FileNotFoundError(f"no such theory file or bundled fixture: {token}")


def _emit(text: str, args) -> None:
    out = getattr(args, "output", None)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _params_from(args) -> dict[str, Fraction]:
    out = {}
    for item in getattr(args, "param", None) or []:
        name, _, value = item.partition("=")
        if not value:
            raise ValueError(f"--param expects name=value, got {item!r}")
        out[name] = Fraction(value)
    return out


# --------------------------------------------------------------------------
# plain transformations


def cmd_parse(args) -> int:
    spec = _load(args.theory)
    _emit(render_theory(spec), args)
    return 0


def _auto_covariantize(spec: TheorySpec) -> TheorySpec:
    """Pick the applicable rewrite; theories already carrying adjoined
    structure (covariance fields or a connection) pass through unchanged."""
    if spec.covariance_fields() or any(f.geom is Geom.LIE_ONEFORM for f in spec.fields):
        return spec
    if any(f.kind is FieldKind.BACKGROUND for f in spec.fields):
        return covariantize_background(spec)
    if any(f.geom is Geom.COVECTOR for f in spec.fields):
        return covariantize_vertical(spec, AdditiveShift(
            next(f.name for f in spec.fields if f.geom is Geom.COVECTOR)))
    return covariantize_horizontal(spec)


def cmd_covariantize(args) -> int:
    spec = _load(args.theory)
    if args.mode == "horizontal":
        out = covariantize_horizontal(spec)
    elif args.mode == "background":
        out = covariantize_background(spec)
    elif args.mode == "vertical":
        if args.action == "shift":
            covectors = [f.name for f in spec.fields if f.geom is Geom.COVECTOR]
            if len(covectors) != 1:
                raise UnsupportedAction("vertical shift needs exactly one covector field")
            out = covariantize_vertical(spec, AdditiveShift(covectors[0]))
        else:
            doublets = [f for f in spec.fields
                        if f.geom is Geom.SCALAR and f.components == 2]
            if len(doublets) != 1:
                raise UnsupportedAction("minimal coupling here expects one 2-component multiplet")
            rotation = ((Fraction(0), Fraction(-1)), (Fraction(1), Fraction(0)))
            out = covariantize_vertical(spec, MinimalCoupling(doublets[0].name, (rotation,)))
    else:
        out = _auto_covariantize(spec)
    _emit(render_theory(out), args)
    return 0


def cmd_el(args) -> int:
    spec = _load(args.theory)
    env = spec.name_env()
    system = euler_lagrange_all(spec)
    lines = []
    for (name, comp), res in sorted(system.residuals.items()):
        lines.append(f"EL[{name}[{comp}]] = {render_expr(res, env)}")
    _emit("\n".join(lines) + "\n", args)
    return 0


def cmd_sem(args) -> int:
    spec = _load(args.theory)
    env = spec.name_env()
    sem = sem_tensor(spec)
    lines = [f"variant: {sem.variant}"]
    for c in range(spec.base_dim):
        for a in range(spec.base_dim):
            lines.append(f"t[{c}][{a}] = {render_expr(sem.components[c][a], env)}")
    _emit("\n".join(lines) + "\n", args)
    return 0


def cmd_energy(args) -> int:
    spec = _load(args.theory)
    _emit(f"E = {render_expr(energy(spec), spec.name_env())}\n", args)
    return 0


# --------------------------------------------------------------------------
# verification driver


def _run_check(name: str, spec: TheorySpec, args) -> verify.Report:
    samples, seed, tol = args.samples, args.seed, args.tol
    if name == "validate":
        diags = validate(spec)
        details = [verify.CaseRecord("diagnostics", float(len(diags)),
                                     "pass" if not diags else "fail",
                                     "; ".join(diags))]
        return verify.Report("validate", "pass" if not diags else "fail",
                             float(len(diags)), 1, seed, 0.0, details)
    if name == "covariance":
        return verify.check_covariance(_auto_covariantize(spec), samples, seed,
                                       tol if tol is not None else 1e-9)
    if name == "covariance-negative":
        inner = verify.check_covariance(spec, max(10, samples // 10), seed,
                                        tol if tol is not None else 1e-9)
        return verify.expected_failure(inner, "covariance-negative")
    if name == "vacuous-el":
        return verify.check_vacuous_el(_auto_covariantize(spec), seed=seed)
    if name == "sem-divergence":
        return verify.check_sem_divergence(spec, seed=seed)
    if name == "piola":
        return verify.check_piola_identity(min(spec.base_dim, 3))
    if name == "kg-reduction":
        return verify.check_reduction_kg(seed=seed)
    if name == "kg-reduction-negative":
        inner = verify.check_reduction_kg(metric=(1, 0, 0, 1, 1), seed=seed)
        return verify.expected_failure(inner, "kg-reduction-negative")
    if name == "shift-invariance":
        return verify.check_shift_invariance(spec, seed=seed)
    if name == "shift-invariance-cov":
        return verify.check_shift_invariance(_auto_covariantize(spec), seed=seed)
    if name == "shift-invariance-negative":
        inner = verify.check_shift_invariance(spec, seed=seed)
        return verify.expected_failure(inner, "shift-invariance-negative")
    if name == "flatness":
        return verify.check_flatness(seed=seed, tol=tol if tol is not None else 1e-9)
    if name == "correspondence":
        spec_tilde = _auto_covariantize(spec)
        omega, wavenumber = 1.0, 0.5
        return verify.check_solution_correspondence(
            spec, spec_tilde,
            (numerics.quadratic_map(0.125), numerics.quadratic_map(0.125)),
            lambda big_t, big_x: np.cos(omega * big_t + wavenumber * big_x),
            tol if tol is not None else 1e-3,
            span=[(0.0, 1.0), (0.0, 1.0)], steps=256, params={"m": 1}, seed=seed)
    raise ValueError(f"unknown check {name!r}")


DESIGNATED = {
    "mechanics": ["validate", "piola", "covariance", "vacuous-el", "sem-divergence"],
    "kg1": ["validate", "covariance", "vacuous-el", "sem-divergence",
            "kg-reduction", "correspondence", "covariance-negative"],
    "kg2": ["validate", "covariance", "sem-divergence", "kg-reduction",
            "kg-reduction-negative"],
    "chern-simons": ["validate", "shift-invariance-cov", "vacuous-el", "sem-divergence"],
    "proca": ["validate", "sem-divergence", "shift-invariance-negative"],
    "stueckelberg": ["validate", "shift-invariance", "vacuous-el", "sem-divergence"],
    "minimal-coupling": ["validate", "sem-divergence", "flatness"],
}
_FALLBACK_CHECKS = ["validate", "sem-divergence"]


def cmd_verify(args) -> int:
    spec = _load(args.theory)
    if args.checks:
        names = [c.strip() for c in args.checks.split(",") if c.strip()]
    else:
        names = DESIGNATED.get(spec.name, _FALLBACK_CHECKS)
    reports = [_run_check(name, spec, args) for name in names]
    blocks = [r.to_records() if args.format == "records" else r.to_text()
              for r in reports]
    _emit("\n".join(blocks) + "\n", args)
    return 0 if all(r.passed for r in reports) else 1


# --------------------------------------------------------------------------
# simulation


_POTENTIALS = {
    "harmonic": {"V": lambda q: 0.5 * q * q, "V'": lambda q: q,
                 "V''": lambda q: np.ones_like(np.asarray(q, dtype=float))},
    "none": {"V": lambda q: 0.0 * np.asarray(q, dtype=float),
             "V'": lambda q: 0.0 * np.asarray(q, dtype=float),
             "V''": lambda q: 0.0 * np.asarray(q, dtype=float)},
}


def cmd_simulate(args) -> int:
    spec = _load(args.theory)
    params = _params_from(args)
    if spec.base_dim == 1:
        interp = _POTENTIALS[args.potential]
        q0 = [float(v) for v in args.q0.split(",")]
        qdot0 = [float(v) for v in args.qdot0.split(",")]
        section = numerics.integrate_mechanics(
            spec, q0, qdot0, (args.t0, args.t1), args.h, params=params, interp=interp)
        residuals = numerics.el_residual_arrays(spec, section, params, interp)
        worst = max(float(np.max(np.abs(r))) for r in residuals.values())
    elif spec.base_dim == 2:
        omega, wavenumber = (float(v) for v in args.plane_wave.split(","))
        n = args.shape
        grid = numerics.Grid((0.0, 0.0), (args.extent / (n - 1),) * 2, (n, n))
        t_axis, x_axis = grid.axis(0), grid.axis(1)
        boundary = {"t0": np.cos(omega * grid.origin[0] + wavenumber * x_axis),
                    "x0": np.cos(omega * t_axis + wavenumber * grid.origin[1])}
        section = numerics.solve_kg_grid(spec, grid, boundary, params=params)
        worst = float(np.max(np.abs(numerics.kg_residual(spec, section, params))))
    else:
        raise ValueError("simulate supports 1- and 2-dimensional bases")
    if args.output:
        section.save(args.output)
        sys.stdout.write(f"section written to {args.output}\n")
    sys.stdout.write(f"max EL residual: {worst:.6e}\n")
    return 0


def cmd_dump_section(args) -> int:
    section = numerics.DiscreteSection.load(args.section)
    if args.output:
        section.save(args.output)
        return 0
    lines = [f"grid origin={list(section.grid.origin)} spacing={list(section.grid.spacing)} "
             f"shape={list(section.grid.shape)}"]
    for (name, comp), arr in sorted(section.values.items()):
        lines.append(f"{name}[{comp}]: min {float(np.min(arr)):.6g} max {float(np.max(arr)):.6g}")
    _emit("\n".join(lines) + "\n", args)
    return 0


# --------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="fieldcov", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("theory", help="theory file path or bundled fixture name")
        p.add_argument("-o", dest="output", default=None, help="write output to a file")

    p = sub.add_parser("parse", help="parse, validate and re-render a theory")
    common(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("covariantize", help="rewrite a theory with covariance fields")
    common(p)
    p.add_argument("--mode", choices=["auto", "horizontal", "background", "vertical"],
                   default="auto")
    p.add_argument("--action", choices=["shift", "minimal"], default="shift")
    p.set_defaults(func=cmd_covariantize)

    p = sub.add_parser("el", help="print Euler-Lagrange residuals")
    common(p)
    p.set_defaults(func=cmd_el)

    p = sub.add_parser("sem", help="print the canonical SEM tensor density")
    common(p)
    p.set_defaults(func=cmd_sem)

    p = sub.add_parser("energy", help="print the energy density")
    common(p)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("verify", help="run verification checks")
    common(p)
    p.add_argument("--checks", default=None, help="comma-separated check names")
    p.add_argument("--all", action="store_true", help="run the designated checks (default)")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--format", choices=["text", "records"], default="text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="integrate the field equations at desk scale")
    common(p)
    p.add_argument("--q0", default="1.0")
    p.add_argument("--qdot0", default="0.0")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=6.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--potential", choices=sorted(_POTENTIALS), default="harmonic")
    p.add_argument("--plane-wave", default="1.0,0.5", help="omega,k boundary data (2d)")
    p.add_argument("--shape", type=int, default=129, help="grid points per axis (2d)")
    p.add_argument("--extent", type=float, default=1.0, help="domain size per axis (2d)")
    p.add_argument("--param", action="append", help="name=value, repeatable")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dump-section", help="load a section file and re-emit it")
    p.add_argument("section", help="section file written by simulate")
    p.add_argument("-o", dest="output", default=None)
    p.set_defaults(func=cmd_dump_section)

    return top


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DslSyntaxError, ValidationError, FileNotFoundError, ValueError,
            UnsupportedAction, UnsupportedIndex) as exc:
        print(f"fieldcov: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"fieldcov: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
