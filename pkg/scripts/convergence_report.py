#!/usr/bin/env python3
"""Convergence study for the desk-scale solvers.

Reports measured orders for the mechanics integrator (expected ~4), the
marching field-equation residual (expected ~2) and the first variation of the
discrete action along an on-shell section (expected ~2).
"""

import math
import sys

import numpy as np

from fieldcov.theory import builtin_theory, parse_theory
from fieldcov.numerics import (
    DiscreteSection,
    Grid,
    discrete_action,
    integrate_mechanics,
    kg_residual,
    measured_orders,
    solve_kg_grid,
)

HARMONIC = ("theory harmonic\nbase 1 (t)\nfield q[1] : scalar variational\n"
            "lagrangian (1/2)*D[q;t]^2 - (1/2)*q^2\n")


def table(label, hs, errors):
    print(label)
    for h, e in zip(hs, errors):
        print(f"  h = {h:<10.3e} error = {e:.6e}")
    print(f"  measured orders: {['%.3f' % o for o in measured_orders(errors)]}\n")


def main() -> int:
    harmonic = parse_theory(HARMONIC)

    hs = [8e-3, 4e-3, 2e-3, 1e-3]
    errors = []
    for h in hs:
        sec = integrate_mechanics(harmonic, [1.0], [0.0], (0.0, 2 * math.pi), h)
        errors.append(float(np.max(np.abs(sec.values[("q", 0)] - np.cos(sec.grid.axis(0))))))
    table("mechanics integrator (max trajectory error vs cosine)", hs, errors)

    kg1 = builtin_theory("kg1")
    ns = [65, 129, 257]
    errors = []
    for n in ns:
        grid = Grid((0.0, 0.0), (1.0 / (n - 1),) * 2, (n, n))
        boundary = {"t0": np.cos(0.5 * grid.axis(1)), "x0": np.cos(grid.axis(0))}
        sol = solve_kg_grid(kg1, grid, boundary, params={"m": 1})
        errors.append(float(np.max(np.abs(kg_residual(kg1, sol, params={"m": 1})))))
    table("field-equation residual of the marching solver",
          [1.0 / (n - 1) for n in ns], errors)

    deltas = []
    ns = [1 << 10, 1 << 11, 1 << 12]
    for n in ns:
        h = 2 * math.pi / n
        grid = Grid((0.0,), (h,), (n + 1,))
        t = grid.axis(0)
        bump = np.sin(t / 2) ** 2 * np.cos(t)
        eps = 1e-6
        plus = DiscreteSection(grid, {("q", 0): np.cos(t) + eps * bump})
        minus = DiscreteSection(grid, {("q", 0): np.cos(t) - eps * bump})
        deltas.append(abs(discrete_action(harmonic, plus)
                          - discrete_action(harmonic, minus)) / (2 * eps))
    table("first variation of the discrete action along the cosine solution",
          [2 * math.pi / n for n in ns], deltas)
    return 0


if __name__ == "__main__":
    sys.exit(main())
