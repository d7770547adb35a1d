"""IMEX finite-volume solver for the relaxation system on a periodic grid.

Main model (global term)::

    u_t + v_x = 0
    v_t + A u_x = -(v - F(u) + R[u]) / eps,   R[u](x) = int_{x_min}^x (G(u) + f) dz

Alternative model: ``u_t + v_x = G(u) + f`` and ``v_t + A u_x = -(v - F(u)) / eps``.

When ``int (G + f) dx`` over the period is nonzero the equilibrium ``v`` is
not periodic. The field therefore carries ``seam_jump = v(x + L) - v(x)``,
which relaxes towards ``-int (G + f) dx`` with the same implicit update as
``v``. Ghost cells across the seam are shifted by that jump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .hypotheses import RelaxationMatrix
from .systems import SystemDefinition

Forcing = Callable[[np.ndarray, float], np.ndarray]

MODELS = ("global_term", "alternative")

# ARS(2,2,2) coefficients
_ARS_G = 1.0 - 1.0 / math.sqrt(2.0)
_ARS_D = 1.0 - 1.0 / (2.0 * _ARS_G)


class SolverError(RuntimeError):
    def __init__(self, message: str, time: float = float("nan")):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.n_cells < 1:
            raise ValueError("n_cells must be positive")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.boundary != "periodic":
            raise ValueError("only periodic boundaries are supported")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def refined(self, factor: int) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, self.n_cells * factor)


@dataclass
class RelaxationField:
    """Cell values of ``(u, v)`` plus the cached global term.

    ``u_source`` is the explicit source of the u-equation (zero in the main
    model) and is only kept so that ``u_t`` can be rebuilt from a snapshot.
    """

    grid: Grid1D
    u: np.ndarray
    v: np.ndarray
    global_term: np.ndarray
    time: float = 0.0
    seam_jump: Optional[np.ndarray] = None
    u_source: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.u.shape[1]
        if self.seam_jump is None:
            self.seam_jump = np.zeros(n)
        if self.u_source is None:
            self.u_source = np.zeros_like(self.u)
        shapes = {self.u.shape, self.v.shape, self.global_term.shape, self.u_source.shape}
        if len(shapes) != 1 or self.u.shape[0] != self.grid.n_cells:
            raise ValueError(f"inconsistent field shapes {shapes} for {self.grid.n_cells} cells")

    @property
    def n(self) -> int:
        return self.u.shape[1]

    def copy(self) -> "RelaxationField":
        return RelaxationField(
            self.grid, self.u.copy(), self.v.copy(), self.global_term.copy(), self.time,
            self.seam_jump.copy(), self.u_source.copy(),
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.seam_jump)))


@dataclass(frozen=True)
class SolverConfig:
    eps: float
    t_end: float
    A: RelaxationMatrix
    cfl: float = 0.45
    order: int = 2
    model: str = "global_term"
    snapshot_every: int = 1
    seed: int = 0
    dt_max: Optional[float] = None
    box_inflation: float = 10.0
    forcing: Optional[Forcing] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")


@dataclass
class SolutionTrace:
    snapshots: List[RelaxationField]
    dts: np.ndarray
    eps: float
    dx: float
    scheme: str
    model: str
    config: SolverConfig

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> RelaxationField:
        return self.snapshots[-1]


# ---------------------------------------------------------------------------
# spatial operators
# ---------------------------------------------------------------------------

def pad_periodic(a: np.ndarray, ng: int, jump=None) -> np.ndarray:
    """Periodic ghost extension by ``ng`` cells, shifted by ``jump`` across the seam."""
    left = a[-ng:]
    right = a[:ng]
    if jump is not None:
        left = left - jump
        right = right + jump
    return np.concatenate([left, a, right], axis=0)


def ddx(a: np.ndarray, dx: float, jump=None) -> np.ndarray:
    """Central first difference with periodic (or jump-shifted) ghosts."""
    p = pad_periodic(a, 1, jump)
    return (p[2:] - p[:-2]) / (2.0 * dx)


def d2dx2(a: np.ndarray, dx: float, jump=None) -> np.ndarray:
    p = pad_periodic(a, 1, jump)
    return (p[2:] - 2.0 * p[1:-1] + p[:-2]) / dx**2


def minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def source_density(sys: SystemDefinition, u: np.ndarray, grid: Grid1D, t: float, forcing: Optional[Forcing]):
    s = sys.G(u)
    if forcing is not None:
        s = s + forcing(grid.centers, t)
    return s


def cumulative_center_integral(s: np.ndarray, dx: float) -> np.ndarray:
    """``dx * (sum_{j<i} s_j + s_i / 2)``: antiderivative from ``x_min`` at the centres."""
    c = np.cumsum(s, axis=0)
    return dx * (c - 0.5 * s)


def compute_global_term(sys: SystemDefinition, u: np.ndarray, grid: Grid1D, t: float = 0.0,
                        forcing: Optional[Forcing] = None) -> np.ndarray:
    """Discrete ``R(x_i) = int_{x_min}^{x_i} (G(u) + f) dz`` with ``R(x_min) = 0``."""
    return cumulative_center_integral(source_density(sys, u, grid, t, forcing), grid.dx)


def _period_integral(sys, u, grid, t, forcing):
    return grid.dx * np.sum(source_density(sys, u, grid, t, forcing), axis=0)


def hyperbolic_rhs(u: np.ndarray, v: np.ndarray, jump: np.ndarray, A: RelaxationMatrix, dx: float, order: int):
    """Upwind (order 1) or MUSCL-minmod (order 2) divergence of ``(v, A u)``.

    Works in the characteristic variables ``w = Q^T v +- sqrt(mu) Q^T u``.
    Returns ``(-dv/dx, -A du/dx)`` in the original variables.
    """
    Q = A.Q
    c = A.speeds
    ut = u @ Q
    vt = v @ Q
    jt = jump @ Q
    wp = pad_periodic(vt + c * ut, 2, jt)
    wm = pad_periodic(vt - c * ut, 2, jt)
    if order == 2:
        sp = minmod(wp[1:-1] - wp[:-2], wp[2:] - wp[1:-1])
        sm = minmod(wm[1:-1] - wm[:-2], wm[2:] - wm[1:-1])
        # padded cells 1 .. N+2 carry slopes; faces sit between cells p and p+1, p = 1 .. N+1
        wl = wp[1:-2] + 0.5 * sp[:-1]
        wr = wm[2:-1] - 0.5 * sm[1:]
    else:
        wl = wp[1:-2]
        wr = wm[2:-1]
    fu = 0.5 * (wl + wr)
    fv = 0.5 * c * (wl - wr)
    du = -(fu[1:] - fu[:-1]) / dx
    dv = -(fv[1:] - fv[:-1]) / dx
    return du @ Q.T, dv @ Q.T


def explicit_rhs(sys, u, v, jump, t, config: SolverConfig, grid: Grid1D):
    du, dv = hyperbolic_rhs(u, v, jump, config.A, grid.dx, config.order)
    if config.model == "alternative":
        du = du + source_density(sys, u, grid, t, config.forcing)
    return du, dv


def relaxation_target(sys, u, grid, t, config: SolverConfig):
    """Equilibrium ``(v_eq, seam_eq, R)`` towards which ``v`` relaxes."""
    Fu = sys.F(u)
    if config.model == "alternative":
        z = np.zeros_like(Fu)
        return Fu, np.zeros(u.shape[1]), z
    R = compute_global_term(sys, u, grid, t, config.forcing)
    J = _period_integral(sys, u, grid, t, config.forcing)
    return Fu - R, -J, R


def _implicit_solve(v_star, d_star, target_v, target_d, eps, a_dt):
    """Closed form of ``y = y* + a_dt (target - y) / eps``; returns the new value and its rate."""
    den = eps + a_dt
    v_new = (eps * v_star + a_dt * target_v) / den
    d_new = (eps * d_star + a_dt * target_d) / den
    return v_new, d_new, (target_v - v_star) / den, (target_d - d_star) / den


def cfl_dt(grid: Grid1D, config: SolverConfig) -> float:
    dt = config.cfl * grid.dx / config.A.max_speed
    if config.dt_max is not None:
        dt = min(dt, config.dt_max)
    return dt


def _u_source(sys, u, grid, t, config):
    if config.model == "alternative":
        return source_density(sys, u, grid, t, config.forcing)
    return np.zeros_like(u)


def step(sys: SystemDefinition, field: RelaxationField, config: SolverConfig, dt: Optional[float] = None) -> RelaxationField:
    """Advance one IMEX step (Euler for order 1, ARS(2,2,2) for order 2)."""
    grid = field.grid
    dt_cfl = cfl_dt(grid, config)
    if dt is None:
        dt = dt_cfl
    elif dt > dt_cfl * (1.0 + 1e-12):
        raise SolverError(f"dt = {dt:.3e} exceeds the CFL limit {dt_cfl:.3e}", field.time)
    eps = config.eps
    t0 = field.time
    u0, v0, d0 = field.u, field.v, field.seam_jump

    if config.order == 1:
        du, dv = explicit_rhs(sys, u0, v0, d0, t0, config, grid)
        u1 = u0 + dt * du
        tv, td, R = relaxation_target(sys, u1, grid, t0 + dt, config)
        v1, d1, _, _ = _implicit_solve(v0 + dt * dv, d0, tv, td, eps, dt)
    else:
        g, dl = _ARS_G, _ARS_D
        e1u, e1v = explicit_rhs(sys, u0, v0, d0, t0, config, grid)
        u2 = u0 + g * dt * e1u
        tv, td, _ = relaxation_target(sys, u2, grid, t0 + g * dt, config)
        v2, d2, i2v, i2d = _implicit_solve(v0 + g * dt * e1v, d0, tv, td, eps, g * dt)
        e2u, e2v = explicit_rhs(sys, u2, v2, d2, t0 + g * dt, config, grid)
        u1 = u0 + dt * (dl * e1u + (1.0 - dl) * e2u)
        vs = v0 + dt * (dl * e1v + (1.0 - dl) * e2v) + (1.0 - g) * dt * i2v
        ds = d0 + (1.0 - g) * dt * i2d
        tv, td, R = relaxation_target(sys, u1, grid, t0 + dt, config)
        v1, d1, _, _ = _implicit_solve(vs, ds, tv, td, eps, g * dt)

    if config.model == "alternative":
        R = np.zeros_like(u1)
    new = RelaxationField(grid, u1, v1, R, t0 + dt, d1, _u_source(sys, u1, grid, t0 + dt, config))
    if not new.is_finite():
        raise SolverError("non-finite state", new.time)
    return new


# ---------------------------------------------------------------------------
# initial data and the run driver
# ---------------------------------------------------------------------------

def _sample_profile(u0, grid: Grid1D, n: int) -> np.ndarray:
    if callable(u0):
        u = np.asarray(u0(grid.centers), dtype=float)
    else:
        u = np.asarray(u0, dtype=float)
    u = u.reshape(grid.n_cells, n) if u.size == grid.n_cells * n else u
    if u.shape != (grid.n_cells, n):
        raise ValueError(f"initial profile has shape {u.shape}, expected {(grid.n_cells, n)}")
    if not np.all(np.isfinite(u)):
        raise ValueError("initial profile contains non-finite values")
    return u


def init_well_prepared(sys: SystemDefinition, grid: Grid1D, u0, model: str = "global_term",
                       forcing: Optional[Forcing] = None, t: float = 0.0) -> RelaxationField:
    """Point values of ``u0`` at the centres with ``v`` on the equilibrium manifold."""
    u = _sample_profile(u0, grid, sys.n)
    cfg = _ModelView(model, forcing)
    tv, td, R = relaxation_target(sys, u, grid, t, cfg)
    return RelaxationField(grid, u, tv.copy(), R, t, td, _u_source(sys, u, grid, t, cfg))


def init_from_exact(sys: SystemDefinition, grid: Grid1D, u_exact, ut_exact, model: str = "global_term",
                    forcing: Optional[Forcing] = None, t: float = 0.0, n_gauss: int = 4) -> RelaxationField:
    """Initial ``(u, v)`` for which ``u_exact`` is the relaxation solution.

    ``v`` is built from ``v_x = -(u_t - u_source)`` with cell-wise Gauss
    quadrature of ``ut_exact``; its additive constant does not influence ``u``.
    """
    x = grid.centers
    dx = grid.dx
    u = _sample_profile(lambda xx: u_exact(xx, t), grid, sys.n)
    cfg = _ModelView(model, forcing)
    gx, gw = np.polynomial.legendre.leggauss(n_gauss)

    def seg_integral(a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        total = 0.0
        for xi, wi in zip(gx, gw):
            xs = mid + half * xi
            val = np.asarray(ut_exact(xs, t), float).reshape(len(xs), sys.n)
            if model == "alternative":
                val = val - np.asarray(sys.G(u_exact(xs, t)), float)
                if forcing is not None:
                    val = val - forcing(xs, t)
            total = total + wi * half[:, None] * val
        return total

    left = np.concatenate([[grid.x_min], x[:-1]])
    pieces = seg_integral(left, x)
    v = sys.F(u)[0:1] - np.cumsum(pieces, axis=0)
    v = v - (v[0] - sys.F(u)[0])  # anchor v(x_0) = F(u(x_0)), any constant is admissible
    total = seg_integral(np.array([grid.x_min]), np.array([grid.x_max]))[0]
    jump = -total
    R = compute_global_term(sys, u, grid, t, forcing) if model == "global_term" else np.zeros_like(u)
    return RelaxationField(grid, u, v, R, t, jump, _u_source(sys, u, grid, t, cfg))


@dataclass(frozen=True)
class _ModelView:
    model: str
    forcing: Optional[Forcing]


def equilibrium_residual(sys: SystemDefinition, field: RelaxationField, forcing: Optional[Forcing] = None,
                         model: str = "global_term") -> float:
    """``|| v - F(u) + R ||_{L2}`` (or ``|| v - F(u) ||`` for the alternative model)."""
    tv, _, _ = relaxation_target(sys, field.u, field.grid, field.time, _ModelView(model, forcing))
    return float(np.sqrt(field.grid.dx * np.sum((field.v - tv) ** 2)))


def time_derivative(field: RelaxationField) -> np.ndarray:
    """``u_t = -v_x + u_source`` with central differences across the seam jump."""
    return -ddx(field.v, field.grid.dx, field.seam_jump) + field.u_source


def uniform_schedule(grid: Grid1D, config: SolverConfig):
    """Number of steps and uniform ``dt <= dt_cfl`` landing exactly on ``t_end``."""
    if config.t_end == 0:
        return 0, 0.0
    dtc = cfl_dt(grid, config)
    nsteps = int(math.ceil(config.t_end / dtc * (1.0 - 1e-12)))
    return nsteps, config.t_end / nsteps


def snapshot_times(grid: Grid1D, config: SolverConfig) -> np.ndarray:
    nsteps, dt = uniform_schedule(grid, config)
    idx = list(range(0, nsteps + 1, config.snapshot_every))
    if idx[-1] != nsteps:
        idx.append(nsteps)
    return np.array([k * dt for k in idx])


def run(sys: SystemDefinition, grid: Grid1D, u0, config: SolverConfig,
        initial: Optional[RelaxationField] = None) -> SolutionTrace:
    """Advance well-prepared data (or ``initial``) to ``t_end``.

    Snapshots are stored every ``snapshot_every`` steps and at the final time.
    """
    field0 = initial if initial is not None else init_well_prepared(sys, grid, u0, config.model, config.forcing)
    nsteps, dt = uniform_schedule(grid, config)
    ref = max(1.0, float(np.max(np.abs(field0.u))))
    snaps = [field0]
    f = field0
    for k in range(1, nsteps + 1):
        f = step(sys, f, config, dt)
        f.time = k * dt
        if float(np.max(np.abs(f.u))) > config.box_inflation * ref:
            raise SolverError(
                f"state left {config.box_inflation}x the initial range; "
                "the subcharacteristic condition may be violated", f.time)
        if k % config.snapshot_every == 0 or k == nsteps:
            snaps.append(f)
    scheme = "upwind-imex-euler" if config.order == 1 else "muscl-minmod-ars222"
    return SolutionTrace(snaps, np.full(nsteps, dt), config.eps, grid.dx, scheme, config.model, config)


def with_eps(config: SolverConfig, eps: float) -> SolverConfig:
    return replace(config, eps=eps)
