"""End-to-end acceptance suite.

One test per shipped guarantee, each at its stated tolerance and time budget,
printing a pass/fail line (visible with pytest -s or in captured output).
"""

import math
import time

import numpy as np

from fieldcov.expr import equal_identically
from fieldcov.theory import builtin_theory, parse_expr, parse_theory
from fieldcov.covariantize import (
    AdditiveShift,
    covariantize_background,
    covariantize_horizontal,
    covariantize_vertical,
)
from fieldcov.numerics import (
    DiscreteSection,
    Grid,
    affine_map,
    discrete_action,
    integrate_mechanics,
    kg_residual,
    measured_orders,
    quadratic_map,
    solve_kg_grid,
)
from fieldcov.verify import (
    check_covariance,
    check_flatness,
    check_piola_identity,
    check_reduction_kg,
    check_sem_divergence,
    check_shift_invariance,
    check_solution_correspondence,
    check_vacuous_el,
    expected_failure,
)

ALL_FIXTURES = ("mechanics", "kg1", "kg2", "chern-simons", "proca",
                "stueckelberg", "minimal-coupling")


class _Budget:
    def __init__(self, name, seconds):
        self.name = name
        self.seconds = seconds
        self.start = time.monotonic()

    def done(self, ok: bool):
        elapsed = time.monotonic() - self.start
        print(f"[{'PASS' if ok else 'FAIL'}] {self.name} ({elapsed:.2f}s / {self.seconds:.0f}s budget)")
        assert ok, self.name
        assert elapsed < self.seconds, f"{self.name} exceeded {self.seconds}s ({elapsed:.2f}s)"


def _harmonic():
    return parse_theory(
        "theory harmonic\nbase 1 (t)\nfield q[1] : scalar variational\n"
        "lagrangian (1/2)*D[q;t]^2 - (1/2)*q^2\n")


def test_criterion_01_golden_symbolic_rewrites():
    budget = _Budget("golden symbolic rewrites", 2.0)

    t0 = time.monotonic()
    mech = covariantize_horizontal(builtin_theory("mechanics"))
    mech_golden = parse_expr("((1/2)*m*D[q;t]^2*D[Xt;t]^-2 - V(q))*D[Xt;t]", mech)
    ok = equal_identically(mech.lagrangian, mech_golden, 32, 0)
    assert time.monotonic() - t0 < 1.0

    t0 = time.monotonic()
    kg = covariantize_horizontal(builtin_theory("kg1"))
    kg_golden = parse_expr(
        "(D[phi;x]*D[phi;t]*(D[Xx;t]*D[Xt;x] + D[Xt;t]*D[Xx;x])"
        " - D[phi;x]^2*D[Xt;t]*D[Xx;t] - D[phi;t]^2*D[Xt;x]*D[Xx;x])"
        " / (D[Xt;t]*D[Xx;x] - D[Xt;x]*D[Xx;t])"
        " - (1/2)*m^2*phi^2*(D[Xt;t]*D[Xx;x] - D[Xt;x]*D[Xx;t])", kg)
    ok = ok and equal_identically(kg.lagrangian, kg_golden, 32, 0)
    assert time.monotonic() - t0 < 1.0
    budget.done(ok)


def test_criterion_02_kg_reduction():
    budget = _Budget("two-route KG reduction", 5.0)
    budget.done(check_reduction_kg().passed)


def test_criterion_03_covariance_sampling():
    budget = _Budget("equivariance sampling with negative control", 10.0)
    ok = True
    for spec_tilde in (covariantize_horizontal(builtin_theory("mechanics")),
                       covariantize_horizontal(builtin_theory("kg1")),
                       covariantize_background(builtin_theory("kg2"))):
        report = check_covariance(spec_tilde, samples=100, seed=42, tol=1e-9)
        ok = ok and report.passed
    raw = check_covariance(builtin_theory("kg1"), samples=100, seed=42, tol=1e-9)
    ok = ok and expected_failure(raw, "covariance-negative").passed
    budget.done(ok)


def test_criterion_04_vacuous_field_equations():
    budget = _Budget("adjoined-field equations vacuous off shell", 10.0)
    targets = (covariantize_horizontal(builtin_theory("mechanics")),
               covariantize_horizontal(builtin_theory("kg1")),
               covariantize_vertical(builtin_theory("chern-simons"), AdditiveShift("A")),
               builtin_theory("stueckelberg"))
    budget.done(all(check_vacuous_el(t, trials=32, seed=42).passed for t in targets))


def test_criterion_05_piola_identity():
    budget = _Budget("cofactor divergence identity, dims 1-3", 5.0)
    budget.done(all(check_piola_identity(d).passed for d in (1, 2, 3)))


def test_criterion_06_sem_divergence_identity():
    budget = _Budget("stress-energy divergence identity, all fixtures", 10.0)
    budget.done(all(check_sem_divergence(builtin_theory(n)).passed for n in ALL_FIXTURES))


def test_criterion_07_solution_correspondence():
    budget = _Budget("solution correspondence at desk scale", 30.0)
    harmonic = _harmonic()
    r1 = check_solution_correspondence(
        harmonic, covariantize_horizontal(harmonic), (affine_map(2.0),), np.cos,
        1e-5, span=[(0.0, 2 * math.pi)], steps=6284)
    kg1 = builtin_theory("kg1")
    omega, k = 1.0, 0.5  # 2 omega k = m^2 at m = 1
    r2 = check_solution_correspondence(
        kg1, covariantize_horizontal(kg1),
        (quadratic_map(0.125), quadratic_map(0.125)),
        lambda big_t, big_x: np.cos(omega * big_t + k * big_x),
        1e-3, span=[(0.0, 1.0), (0.0, 1.0)], steps=256, params={"m": 1})
    budget.done(r1.passed and r1.worst < 1e-5 and r2.passed and r2.worst < 1e-3)


def test_criterion_08_flat_connections():
    budget = _Budget("group-map connections are flat", 5.0)
    report = check_flatness(samples=16, seed=42, tol=1e-9)
    budget.done(report.passed and report.worst <= 1e-9)


def test_criterion_09_convergence_orders():
    budget = _Budget("convergence orders of the solvers", 60.0)
    harmonic = _harmonic()

    # three halvings chosen above the float rounding floor (~1e-14 here)
    mech_errors = []
    for h in (8e-3, 4e-3, 2e-3, 1e-3):
        sec = integrate_mechanics(harmonic, [1.0], [0.0], (0.0, 2 * math.pi), h)
        mech_errors.append(float(np.max(np.abs(
            sec.values[("q", 0)] - np.cos(sec.grid.axis(0))))))
    mech_ok = min(measured_orders(mech_errors)) >= 3.9

    kg1 = builtin_theory("kg1")
    kg_errors = []
    for n in (65, 129, 257):
        grid = Grid((0.0, 0.0), (1.0 / (n - 1),) * 2, (n, n))
        boundary = {"t0": np.cos(0.5 * grid.axis(1)), "x0": np.cos(grid.axis(0))}
        sol = solve_kg_grid(kg1, grid, boundary, params={"m": 1})
        kg_errors.append(float(np.max(np.abs(kg_residual(kg1, sol, params={"m": 1})))))
    kg_ok = min(measured_orders(kg_errors)) >= 1.9

    deltas = []
    for n in (1 << 10, 1 << 11, 1 << 12):
        h = 2 * math.pi / n
        grid = Grid((0.0,), (h,), (n + 1,))
        t = grid.axis(0)
        bump = np.sin(t / 2) ** 2 * np.cos(t)
        eps = 1e-6
        plus = DiscreteSection(grid, {("q", 0): np.cos(t) + eps * bump})
        minus = DiscreteSection(grid, {("q", 0): np.cos(t) - eps * bump})
        deltas.append(abs(discrete_action(harmonic, plus)
                          - discrete_action(harmonic, minus)) / (2 * eps))
    action_ok = min(measured_orders(deltas)) >= 1.9

    print(f"  integrator orders {['%.2f' % o for o in measured_orders(mech_errors)]}, "
          f"field-equation orders {['%.2f' % o for o in measured_orders(kg_errors)]}, "
          f"first-variation orders {['%.2f' % o for o in measured_orders(deltas)]}")
    budget.done(mech_ok and kg_ok and action_ok)


def test_criterion_10_negative_controls():
    budget = _Budget("negative controls report expected failures", 10.0)
    proca = check_shift_invariance(builtin_theory("proca"))
    euclid = check_reduction_kg(metric=(1, 0, 0, 1, 1))
    ok = (proca.status == "fail" and euclid.status == "fail"
          and expected_failure(proca, "shift-invariance-negative").passed
          and expected_failure(euclid, "kg-reduction-negative").passed)
    budget.done(ok)
