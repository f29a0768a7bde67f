"""Desk-scale discrete solvers: mechanics ODE integrator, characteristic
Klein-Gordon marching, action quadrature, and grid evaluation of symbolic
expressions.

Sections live on uniform lattices; jets are centered finite differences, so
residuals of smooth on-shell sections shrink like h^2.  Diffeomorphisms used
by the correspondence checks are fixed closed-form monotone maps with
analytic inverses (affine, quadratic and cubic perturbations of the
identity), never numerically inverted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import (
    Add,
    Coord,
    Expr,
    Fun,
    Kind,
    Mul,
    Pow,
    Rat,
    Ref,
    coords_of,
    partial,
    rational,
    substitute,
)
from .theory import FieldKind, TheorySpec
from .variational import euler_lagrange


class StiffnessWarning(UserWarning):
    """Step-to-step energy drift exceeded 1% on a scleronomic system."""


class UnstableScheme(RuntimeError):
    """Marching residual grew far beyond the initial truncation estimate."""


class GridTooCoarse(RuntimeError):
    """Finite-difference truncation dominates the requested tolerance."""


# --------------------------------------------------------------------------
# grids and sections


@dataclass(frozen=True)
class Grid:
    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.origin) == len(self.spacing) == len(self.shape)):
            raise ValueError("grid origin/spacing/shape ranks disagree")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("grid spacing must be positive")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.spacing[k] * np.arange(self.shape[k])

    def meshes(self) -> list[np.ndarray]:
        return list(np.meshgrid(*[self.axis(k) for k in range(self.ndim)], indexing="ij"))


@dataclass
class DiscreteSection:
    """Field values sampled on a uniform grid, one array per component."""

    grid: Grid
    values: dict[tuple[str, int], np.ndarray]
    boundary: dict | None = None

    def __post_init__(self):
        for key, arr in self.values.items():
            if tuple(arr.shape) != self.grid.shape:
                raise ValueError(f"array for {key} has shape {arr.shape}, grid is {self.grid.shape}")

    def save(self, path):
        keys = sorted(self.values)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# grid"
                     f" origin={','.join(repr(v) for v in self.grid.origin)}"
                     f" spacing={','.join(repr(v) for v in self.grid.spacing)}"
                     f" shape={','.join(str(v) for v in self.grid.shape)}\n")
            fh.write("# columns: " + " ".join(f"x{k}" for k in range(self.grid.ndim))
                     + " " + " ".join(f"{n}[{c}]" for n, c in keys) + "\n")
            meshes = self.grid.meshes()
            flat = [m.ravel() for m in meshes] + [self.values[k].ravel() for k in keys]
            for row in zip(*flat):
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "DiscreteSection":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            columns = fh.readline().strip()
            data = np.loadtxt(fh)
        meta = {}
        for part in header.lstrip("# ").split():
            if "=" in part:
                k, v = part.split("=", 1)
                meta[k] = v.split(",")
        grid = Grid(tuple(float(v) for v in meta["origin"]),
                    tuple(float(v) for v in meta["spacing"]),
                    tuple(int(v) for v in meta["shape"]))
        names = columns.split()[2 + grid.ndim:]
        data = np.atleast_2d(data)
        values = {}
        for i, label in enumerate(names):
            name, comp = label[:-1].split("[")
            values[(name, int(comp))] = data[:, grid.ndim + i].reshape(grid.shape)
        return cls(grid, values)


# --------------------------------------------------------------------------
# expression evaluation over floats / arrays


def _interp_key(f: Fun) -> str:
    return f.tag + "'" * f.dorder


def compile_fn(e: Expr, slots: Mapping[Coord, int],
               interp: Mapping[str, Callable] | None = None) -> Callable[[Sequence[float]], float]:
    """Compile to a closure over a flat value vector (fast scalar evaluation)."""
    if isinstance(e, Rat):
        v = float(e.value)
        return lambda vals: v
    if isinstance(e, Ref):
        try:
            i = slots[e.coord]
        except KeyError:
            raise KeyError(f"no slot for coordinate {e.coord}") from None
        return lambda vals: vals[i]
    if isinstance(e, Add):
        fns = [compile_fn(t, slots, interp) for t in e.terms]
        return lambda vals: sum(f(vals) for f in fns)
    if isinstance(e, Mul):
        fns = [compile_fn(f, slots, interp) for f in e.factors]
        def prod(vals):
            out = 1.0
            for f in fns:
                out *= f(vals)
            return out
        return prod
    if isinstance(e, Pow):
        base = compile_fn(e.base, slots, interp)
        exp = e.exp
        return lambda vals: base(vals) ** exp
    if isinstance(e, Fun):
        if interp is None or _interp_key(e) not in interp:
            raise LookupError(f"no numeric interpretation for {_interp_key(e)}")
        g = interp[_interp_key(e)]
        arg = compile_fn(e.arg, slots, interp)
        return lambda vals: g(arg(vals))
    raise TypeError(f"not an expression node: {e!r}")


def eval_on_arrays(e: Expr, arrays: Mapping[Coord, np.ndarray | float],
                   interp: Mapping[str, Callable] | None = None):
    """Evaluate pointwise over numpy arrays (whole-grid vectorized walk)."""
    if isinstance(e, Rat):
        return float(e.value)
    if isinstance(e, Ref):
        try:
            return arrays[e.coord]
        except KeyError:
            raise KeyError(f"no array for coordinate {e.coord}") from None
    if isinstance(e, Add):
        out = eval_on_arrays(e.terms[0], arrays, interp)
        for t in e.terms[1:]:
            out = out + eval_on_arrays(t, arrays, interp)
        return out
    if isinstance(e, Mul):
        out = eval_on_arrays(e.factors[0], arrays, interp)
        for f in e.factors[1:]:
            out = out * eval_on_arrays(f, arrays, interp)
        return out
    if isinstance(e, Pow):
        return eval_on_arrays(e.base, arrays, interp) ** float(e.exp)
    if isinstance(e, Fun):
        if interp is None or _interp_key(e) not in interp:
            raise LookupError(f"no numeric interpretation for {_interp_key(e)}")
        return interp[_interp_key(e)](eval_on_arrays(e.arg, arrays, interp))
    raise TypeError(f"not an expression node: {e!r}")


def bind_params(spec: TheorySpec, params: Mapping[str, float | Fraction] | None) -> dict:
    """Substitution map sending parameter coordinates to numbers."""
    params = params or {}
    missing = [p for p in spec.params if p not in params]
    if missing:
        raise KeyError(f"theory {spec.name!r} needs numeric parameters {missing}")
    out = {}
    for name, value in params.items():
        v = Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(10 ** 12)
        out[Coord(Kind.PARAM, name)] = Rat(v)
    return out


# --------------------------------------------------------------------------
# centered-difference jets


def section_jets(section: DiscreteSection, spec: TheorySpec, upto: int = 2):
    """Coordinate arrays on the interior of the grid, jets by centered FD.

    Returns (interior slice tuple, {Coord: array}).  Mixed second jets use
    the standard cross stencil; everything is O(h^2).
    """
    grid = section.grid
    ndim = grid.ndim
    trim = tuple(slice(1, -1) for _ in range(ndim))
    arrays: dict[Coord, np.ndarray] = {}
    for k, mesh in enumerate(grid.meshes()):
        arrays[Coord(Kind.BASE, "", k)] = mesh[trim]

    def d1(arr, k):
        lo = tuple(slice(1, -1) if i != k else slice(0, -2) for i in range(ndim))
        hi = tuple(slice(1, -1) if i != k else slice(2, None) for i in range(ndim))
        return (arr[hi] - arr[lo]) / (2 * grid.spacing[k])

    def d2(arr, k):
        lo = tuple(slice(1, -1) if i != k else slice(0, -2) for i in range(ndim))
        hi = tuple(slice(1, -1) if i != k else slice(2, None) for i in range(ndim))
        return (arr[hi] - 2 * arr[trim] + arr[lo]) / grid.spacing[k] ** 2

    def dcross(arr, k, l):
        def corner(sk, sl):
            return tuple(
                slice(1, -1) if i not in (k, l) else (sk if i == k else sl)
                for i in range(ndim))
        pp = corner(slice(2, None), slice(2, None))
        mm = corner(slice(0, -2), slice(0, -2))
        pm = corner(slice(2, None), slice(0, -2))
        mp = corner(slice(0, -2), slice(2, None))
        return (arr[pp] - arr[pm] - arr[mp] + arr[mm]) / (4 * grid.spacing[k] * grid.spacing[l])

    for f in spec.fields:
        value_kind, jet_kind = f.coord_kinds()
        for comp in range(f.components):
            arr = section.values[(f.name, comp)]
            arrays[Coord(value_kind, f.name, comp)] = arr[trim]
            for k in range(ndim):
                arrays[Coord(jet_kind, f.name, comp, (k,))] = d1(arr, k)
            if upto >= 2:
                for k in range(ndim):
                    for l in range(k, ndim):
                        arrays[Coord(jet_kind, f.name, comp, (k, l))] = \
                            d2(arr, k) if k == l else dcross(arr, k, l)
    return trim, arrays


def el_residual_arrays(spec: TheorySpec, section: DiscreteSection,
                       params=None, interp=None) -> dict[tuple[str, int], np.ndarray]:
    """Euler-Lagrange residuals of every varied field evaluated on the interior."""
    binding = bind_params(spec, params)
    _, arrays = section_jets(section, spec)
    out = {}
    for f in spec.fields:
        if f.kind is FieldKind.BACKGROUND:
            continue
        system = euler_lagrange(spec, f)
        for (name, comp), res in system.residuals.items():
            bound = substitute(res, binding)
            out[(name, comp)] = np.asarray(eval_on_arrays(bound, arrays, interp), dtype=float)
    return out


# --------------------------------------------------------------------------
# mechanics integrator


def integrate_mechanics(spec: TheorySpec, q0: Sequence[float], qdot0: Sequence[float],
                        span: tuple[float, float], h: float,
                        params: Mapping[str, float] | None = None,
                        interp: Mapping[str, Callable] | None = None,
                        prescribed: Mapping[tuple[str, int], tuple[Callable, Callable, Callable]] | None = None,
                        ) -> DiscreteSection:
    """Fixed-step RK4 on the Euler-Lagrange system in first-order form.

    ``prescribed`` pins components to known functions (value, first and
    second derivative); only the remaining components are integrated.  The
    equations are solved through the velocity Hessian, which must stay
    nonsingular along the trajectory.
    """
    if spec.base_dim != 1:
        raise ValueError("integrate_mechanics expects a 1-dimensional base")
    if spec.order != 1:
        raise ValueError("integrate_mechanics expects a first-order theory")
    if h <= 0:
        raise ValueError("step size must be positive")
    prescribed = dict(prescribed or {})
    binding = bind_params(spec, params)
    lag = substitute(spec.lagrangian, binding)

    free: list[tuple[str, int]] = []
    for f in spec.fields:
        if f.kind is FieldKind.BACKGROUND:
            continue
        value_kind, jet_kind = f.coord_kinds()
        for comp in range(f.components):
            if (f.name, comp) not in prescribed:
                free.append((f.name, comp))
    if len(free) != len(q0) or len(free) != len(qdot0):
        raise ValueError(f"expected initial data for components {free}")

    def kinds(name):
        return spec.field_named(name).coord_kinds()

    vel = {key: Coord(kinds(key[0])[1], key[0], key[1], (0,)) for key in free + list(prescribed)}
    acc = {key: Coord(kinds(key[0])[1], key[0], key[1], (0, 0)) for key in free + list(prescribed)}
    val = {key: Coord(kinds(key[0])[0], key[0], key[1]) for key in free + list(prescribed)}

    n = len(free)
    mass = [[partial(partial(lag, vel[free[i]]), vel[free[j]]) for j in range(n)]
            for i in range(n)]
    zero_free_acc = {acc[key]: rational(0) for key in free}
    force = []
    for key in free:
        res = euler_lagrange(_bound_spec(spec, lag), key[0]).residual(*key)
        force.append(substitute(res, zero_free_acc))

    slots: dict[Coord, int] = {Coord(Kind.BASE, "", 0): 0}
    for key in free + list(prescribed):
        for c in (val[key], vel[key], acc[key]):
            slots.setdefault(c, len(slots))
    mass_fn = [[compile_fn(mass[i][j], slots, interp) for j in range(n)] for i in range(n)]
    force_fn = [compile_fn(force[i], slots, interp) for i in range(n)]

    def accel(t, q, qd):
        vals = [0.0] * len(slots)
        vals[0] = t
        for i, key in enumerate(free):
            vals[slots[val[key]]] = q[i]
            vals[slots[vel[key]]] = qd[i]
        for key, (fv, fd, fdd) in prescribed.items():
            vals[slots[val[key]]] = fv(t)
            vals[slots[vel[key]]] = fd(t)
            vals[slots[acc[key]]] = fdd(t)
        m = np.array([[mf(vals) for mf in row] for row in mass_fn])
        b = np.array([ff(vals) for ff in force_fn])
        return np.linalg.solve(m, b) if n > 1 else b / m[0][0]

    t0, t1 = span
    steps = int(round((t1 - t0) / h))
    q = np.array(q0, dtype=float)
    qd = np.array(qdot0, dtype=float)
    traj = np.empty((steps + 1, n))
    traj[0] = q
    for s in range(steps):
        t = t0 + s * h
        k1v = accel(t, q, qd)
        k1q = qd
        k2v = accel(t + h / 2, q + h / 2 * k1q, qd + h / 2 * k1v)
        k2q = qd + h / 2 * k1v
        k3v = accel(t + h / 2, q + h / 2 * k2q, qd + h / 2 * k2v)
        k3q = qd + h / 2 * k2v
        k4v = accel(t + h, q + h * k3q, qd + h * k3v)
        k4q = qd + h * k3v
        q = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        qd = qd + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        traj[s + 1] = q

    grid = Grid((t0,), (h,), (steps + 1,))
    values = {key: traj[:, i].copy() for i, key in enumerate(free)}
    for key, (fv, _, _) in prescribed.items():
        values[key] = fv(grid.axis(0))
    section = DiscreteSection(grid, values)
    _energy_drift_check(spec, lag, section, interp, prescribed)
    return section


def _bound_spec(spec: TheorySpec, lagrangian: Expr) -> TheorySpec:
    return TheorySpec(name=spec.name, base_dim=spec.base_dim, coords=spec.coords,
                      fields=spec.fields, params=(), lagrangian=lagrangian,
                      order=spec.order, provenance=spec.provenance)


def _energy_drift_check(spec, lag, section, interp, prescribed):
    from .variational import energy
    if prescribed:
        return
    if partial(lag, Coord(Kind.BASE, "", 0)) != rational(0):
        return  # rheonomic: energy need not be conserved
    try:
        e_expr = energy(_bound_spec(spec, lag))
        _, arrays = section_jets(section, spec, upto=1)
        e = np.asarray(eval_on_arrays(e_expr, arrays, interp), dtype=float)
    except LookupError:
        return
    scale = max(abs(float(e[0])), 1.0)
    drift = float(np.max(np.abs(e - e[0]))) / scale
    if drift > 0.01:
        warnings.warn(f"energy drift {drift:.2%} exceeds 1%", StiffnessWarning)


# --------------------------------------------------------------------------
# characteristic Klein-Gordon marching


def solve_kg_grid(spec: TheorySpec, grid: Grid, boundary: Mapping[str, np.ndarray],
                  params: Mapping[str, float] | None = None) -> DiscreteSection:
    """March the mixed-derivative field equation from characteristic data.

    The theory must have a single scalar field whose residual has the shape
    c_mix * phi_{tx} + c_lin * phi + c_0 with constant coefficients; data
    sits on the first row (t = origin) and first column (x = origin).
    """
    if spec.base_dim != 2 or grid.ndim != 2:
        raise ValueError("solve_kg_grid expects a 2-dimensional base")
    scalars = [f for f in spec.fields if f.kind is FieldKind.VARIATIONAL]
    if len(scalars) != 1 or scalars[0].components != 1:
        raise ValueError("solve_kg_grid expects a single scalar field")
    name = scalars[0].name
    binding = bind_params(spec, params)
    res = substitute(euler_lagrange(spec, name).residual(name), binding)

    phi = Coord(Kind.FIBER, name, 0)
    phi_tx = Coord(Kind.JET, name, 0, (0, 1))
    extra = coords_of(res) - {phi, phi_tx}
    if extra:
        raise ValueError(f"residual involves unsupported coordinates {sorted(extra, key=Coord.sort_key)}")
    c_mix = partial(res, phi_tx)
    c_lin = partial(res, phi)
    if coords_of(c_mix) or coords_of(c_lin):
        raise ValueError("marching needs constant coefficients")
    c0 = float(Fraction(substitute(res, {phi: rational(0), phi_tx: rational(0)}).value))
    a = float(Fraction(c_mix.value))
    b = float(Fraction(c_lin.value))
    if a == 0:
        raise ValueError("no mixed-derivative term; nothing to march")

    nt, nx = grid.shape
    ht, hx = grid.spacing
    if not math.isclose(float(boundary["t0"][0]), float(boundary["x0"][0]),
                        rel_tol=0, abs_tol=1e-9):
        raise ValueError("characteristic data disagrees at the corner")
    u = np.empty((nt, nx))
    u[0, :] = boundary["t0"]
    u[:, 0] = boundary["x0"]
    inv = a / (ht * hx)
    for i in range(nt - 1):
        row = u[i]
        nxt = u[i + 1]
        for j in range(nx - 1):
            rhs = inv * (nxt[j] + row[j + 1] - row[j]) - c0 \
                - b * (row[j] + nxt[j] + row[j + 1]) / 4.0
            nxt[j + 1] = rhs / (inv + b / 4.0)

    section = DiscreteSection(grid, {(name, 0): u})
    resid = kg_residual(spec, section, params)
    early = np.max(np.abs(resid[: max(2, nt // 8)])) if nt > 4 else np.max(np.abs(resid))
    if np.max(np.abs(resid)) > 10 * max(early, 1e-14):
        raise UnstableScheme(
            f"residual grew to {np.max(np.abs(resid)):.3e}, initial estimate {early:.3e}")
    return section


def kg_residual(spec: TheorySpec, section: DiscreteSection,
                params=None, interp=None) -> np.ndarray:
    """Centered-difference residual of the scalar field equation."""
    scalars = [f for f in spec.fields if f.kind is FieldKind.VARIATIONAL]
    name = scalars[0].name
    return el_residual_arrays(spec, section, params, interp)[(name, 0)]


# --------------------------------------------------------------------------
# discrete action


def discrete_action(spec: TheorySpec, section: DiscreteSection,
                    params: Mapping[str, float] | None = None,
                    interp: Mapping[str, Callable] | None = None) -> float:
    """Midpoint-rule quadrature of L with centered-difference first jets.

    Values at cell centers average the corners; derivatives difference them,
    so every jet is centered at the cell midpoint and the rule is O(h^2).
    """
    if spec.order != 1:
        raise ValueError("discrete_action handles first-order Lagrangians")
    grid = section.grid
    binding = bind_params(spec, params)
    lag = substitute(spec.lagrangian, binding)
    arrays: dict[Coord, np.ndarray] = {}

    if grid.ndim == 1:
        (h,) = grid.spacing
        t = grid.axis(0)
        arrays[Coord(Kind.BASE, "", 0)] = (t[:-1] + t[1:]) / 2
        for f in spec.fields:
            value_kind, jet_kind = f.coord_kinds()
            for comp in range(f.components):
                v = section.values[(f.name, comp)]
                arrays[Coord(value_kind, f.name, comp)] = (v[:-1] + v[1:]) / 2
                arrays[Coord(jet_kind, f.name, comp, (0,))] = (v[1:] - v[:-1]) / h
        cell = h
    elif grid.ndim == 2:
        ht, hx = grid.spacing
        tm, xm = grid.meshes()
        arrays[Coord(Kind.BASE, "", 0)] = (tm[:-1, :-1] + tm[1:, :-1]) / 2
        arrays[Coord(Kind.BASE, "", 1)] = (xm[:-1, :-1] + xm[:-1, 1:]) / 2
        for f in spec.fields:
            value_kind, jet_kind = f.coord_kinds()
            for comp in range(f.components):
                v = section.values[(f.name, comp)]
                arrays[Coord(value_kind, f.name, comp)] = \
                    (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:]) / 4
                arrays[Coord(jet_kind, f.name, comp, (0,))] = \
                    ((v[1:, :-1] - v[:-1, :-1]) + (v[1:, 1:] - v[:-1, 1:])) / (2 * ht)
                arrays[Coord(jet_kind, f.name, comp, (1,))] = \
                    ((v[:-1, 1:] - v[:-1, :-1]) + (v[1:, 1:] - v[1:, :-1])) / (2 * hx)
        cell = ht * hx
    else:
        raise ValueError("discrete_action supports 1- and 2-dimensional grids")

    cells = tuple(n - 1 for n in grid.shape)
    density = np.broadcast_to(eval_on_arrays(lag, arrays, interp), cells)
    return float(np.sum(density) * cell)


# --------------------------------------------------------------------------
# closed-form monotone maps (diffeomorphisms with analytic inverses)


@dataclass(frozen=True)
class MonotoneMap:
    """A strictly monotone map of the line with closed-form inverse."""

    fwd: Callable
    deriv: Callable
    deriv2: Callable
    inv: Callable

    def __call__(self, t):
        return self.fwd(t)


def affine_map(a: float, b: float = 0.0) -> MonotoneMap:
    if a == 0:
        raise ValueError("affine map needs a nonzero slope")
    return MonotoneMap(lambda t: a * t + b,
                       lambda t: a * np.ones_like(np.asarray(t, dtype=float)),
                       lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                       lambda y: (y - b) / a)


def quadratic_map(alpha: float) -> MonotoneMap:
    """t -> t + alpha t^2, monotone on t > -1/(2 alpha)."""
    if alpha == 0:
        return affine_map(1.0)

    def inv(y):
        return (-1.0 + np.sqrt(1.0 + 4.0 * alpha * np.asarray(y, dtype=float))) / (2.0 * alpha)

    return MonotoneMap(lambda t: t + alpha * t * t,
                       lambda t: 1.0 + 2.0 * alpha * np.asarray(t, dtype=float),
                       lambda t: 2.0 * alpha * np.ones_like(np.asarray(t, dtype=float)),
                       inv)


def cubic_map(alpha: float) -> MonotoneMap:
    """t -> t + alpha t^3 with alpha >= 0; inverse by the real Cardano root."""
    if alpha == 0:
        return affine_map(1.0)
    if alpha < 0:
        raise ValueError("cubic map is monotone only for alpha >= 0")

    def inv(y):
        y = np.asarray(y, dtype=float)
        q = -y / alpha
        p = 1.0 / alpha
        disc = np.sqrt((q / 2.0) ** 2 + (p / 3.0) ** 3)
        return np.cbrt(-q / 2.0 + disc) + np.cbrt(-q / 2.0 - disc)

    return MonotoneMap(lambda t: t + alpha * t ** 3,
                       lambda t: 1.0 + 3.0 * alpha * np.asarray(t, dtype=float) ** 2,
                       lambda t: 6.0 * alpha * np.asarray(t, dtype=float),
                       inv)


def measured_orders(errors: Sequence[float]) -> list[float]:
    """log2 ratios of consecutive errors from successive h-halvings."""
    return [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
