"""Reference solutions of the balance law ``u_t + F(u)_x = G(u) + f``.

Used to measure the distance between relaxation runs and their equilibrium
limit, and to manufacture forcings for order-of-accuracy studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .hypotheses import RelaxationMatrix
from .solver import Forcing, Grid1D, compute_global_term, ddx, minmod, pad_periodic, source_density
from .systems import SystemDefinition, exact_solution_linear_reaction


@dataclass
class EquilibriumSnapshot:
    time: float
    u: np.ndarray
    ut: np.ndarray
    ux: np.ndarray


@dataclass
class EquilibriumTrace:
    grid: Grid1D
    snapshots: List[EquilibriumSnapshot]
    forcing: Optional[Forcing] = None
    shock_flag: bool = False
    tv_growth: float = 1.0
    method: str = ""
    energy: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def at(self, t: float) -> EquilibriumSnapshot:
        for s in self.snapshots:
            if s.time == t:
                return s
        raise KeyError(f"no equilibrium snapshot at t = {t!r}")


def equilibrium_time_derivative(sys: SystemDefinition, u: np.ndarray, grid: Grid1D, t: float,
                                forcing: Optional[Forcing] = None) -> np.ndarray:
    """``u_t = -d/dx (F(u) - R[u])`` with central differences.

    This is the same discrete operator that a well-prepared relaxation field
    sees, so identical states give identical time derivatives.
    """
    R = compute_global_term(sys, u, grid, t, forcing)
    J = grid.dx * np.sum(source_density(sys, u, grid, t, forcing), axis=0)
    return -ddx(sys.F(u) - R, grid.dx, -J)


def make_snapshot(sys, u, grid, t, forcing) -> EquilibriumSnapshot:
    return EquilibriumSnapshot(t, u, equilibrium_time_derivative(sys, u, grid, t, forcing), ddx(u, grid.dx))


def total_variation(u: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(np.roll(u, -1, axis=0) - u), axis=0)


def restrict(u_fine: np.ndarray, factor: int) -> np.ndarray:
    """Average blocks of ``factor`` fine cells onto the coarse grid."""
    n = u_fine.shape[0] // factor
    return u_fine.reshape(n, factor, -1).mean(axis=1)


def _hancock_step(sys, u, dx, dt, t, x, forcing):
    # Strang: half source, MUSCL-Hancock transport, half source
    u = _source_rk2(sys, u, 0.5 * dt, t, x, forcing)
    p = pad_periodic(u, 2)
    s = minmod(p[1:-1] - p[:-2], p[2:] - p[1:-1])
    q = p[1:-1]
    ql, qr = q - 0.5 * s, q + 0.5 * s
    half = 0.5 * dt / dx * (sys.F(qr) - sys.F(ql))
    ql = ql - half
    qr = qr - half
    left, right = qr[:-1], ql[1:]
    a = np.maximum(_speeds(sys, left), _speeds(sys, right))[:, None]
    flux = 0.5 * (sys.F(left) + sys.F(right)) - 0.5 * a * (right - left)
    u = u - dt / dx * (flux[1:] - flux[:-1])
    return _source_rk2(sys, u, 0.5 * dt, t + 0.5 * dt, x, forcing)


def _speeds(sys, U):
    if sys.wave_speed is not None:
        return sys.wave_speed(U)
    ev = np.linalg.eigvals(sys.DF(U))
    return np.max(np.abs(ev), axis=-1)


def _source_rk2(sys, u, h, t, x, forcing):
    def rhs(w, tt):
        s = sys.G(w)
        return s if forcing is None else s + forcing(x, tt)

    k1 = rhs(u, t)
    k2 = rhs(u + h * k1, t + h)
    return u + 0.5 * h * (k1 + k2)


def solve_balance_law(
    sys: SystemDefinition,
    grid: Grid1D,
    u0,
    t_end: float = None,
    order: int = 2,
    times: Optional[Sequence[float]] = None,
    refine: int = 4,
    cfl: float = 0.45,
    forcing: Optional[Forcing] = None,
    tv_factor: float = 1.5,
    exact: bool = False,
) -> EquilibriumTrace:
    """Reference solution at the requested snapshot ``times`` (default ``[0, t_end]``).

    The scheme is MUSCL-Hancock with a Rusanov flux on a grid ``refine``
    times finer, Strang-split with an explicit RK2 source step, restricted
    back by cell averaging. Steps are clipped so that every snapshot time
    is hit exactly. With
    ``exact=True`` a linear_reaction system returns the characteristic
    solution instead.
    """
    if times is None:
        if t_end is None:
            raise ValueError("give t_end or times")
        times = [0.0, float(t_end)]
    times = [float(t) for t in times]
    if order != 2:
        raise ValueError("only the second-order reference scheme is provided")

    if exact:
        if not callable(u0):
            raise ValueError("exact reference needs a callable profile")
        snaps = [make_snapshot(sys, exact_solution_linear_reaction(sys, u0, grid.centers, t).reshape(-1, sys.n),
                               grid, t, forcing) for t in times]
        return EquilibriumTrace(grid, snaps, forcing, method="characteristics")

    fine = grid.refined(refine)
    xf = fine.centers
    u = np.asarray(u0(xf) if callable(u0) else u0, float).reshape(fine.n_cells, sys.n)
    tv0 = np.maximum(total_variation(u), 1e-300)
    tvmax = 1.0
    t = 0.0
    snaps = []
    energy = []
    for target in times:
        if target < t - 1e-15:
            raise ValueError("snapshot times must be increasing")
        while target - t > 1e-14 * max(1.0, target):
            c = max(sys.max_speed(u), 1e-12)
            h = cfl * fine.dx / c
            if t + h >= target - 1e-14 * max(1.0, target):
                h = target - t
            elif t + 2.0 * h > target:
                h = 0.5 * (target - t)
            u = _hancock_step(sys, u, fine.dx, h, t, xf, forcing)
            if not np.all(np.isfinite(u)):
                raise FloatingPointError(f"reference solve produced non-finite values near t = {t:.4g}")
            t = t + h
        t = target
        tv = total_variation(u)
        tvmax = max(tvmax, float(np.max(tv / tv0)))
        uc = restrict(u, refine)
        snaps.append(make_snapshot(sys, uc, grid, t, forcing))
        energy.append(float(fine.dx * np.sum(sys.eta(u))))
    flag = tvmax > tv_factor
    return EquilibriumTrace(grid, snaps, forcing, flag, tvmax, f"muscl-hancock-rusanov x{refine}", np.array(energy))


def from_exact(sys: SystemDefinition, grid: Grid1D, u_exact: Callable, times: Sequence[float],
               forcing: Optional[Forcing] = None) -> EquilibriumTrace:
    """Trace built from a closed-form ``u_exact(x, t)`` sampled at the centres."""
    snaps = [make_snapshot(sys, np.asarray(u_exact(grid.centers, t), float).reshape(-1, sys.n), grid, t, forcing)
             for t in times]
    return EquilibriumTrace(grid, snaps, forcing, method="exact")


def homogeneous_relaxation_exact(eps: float, lam: float, u0: float, t):
    """Closed-form ``u`` of ``eps u'' + u' = -lam u`` with ``u(0) = u0``, ``u'(0) = -lam u0``.

    A spatially homogeneous linear-reaction state under the global-term
    relaxation reduces to this ODE when ``v`` starts on equilibrium.
    """
    t = np.asarray(t, float)
    disc = 1.0 - 4.0 * eps * lam
    if abs(disc) < 1e-14:
        m = -1.0 / (2.0 * eps)
        return u0 * np.exp(m * t) * (1.0 + (-lam - m) * t)
    if disc > 0:
        r = math.sqrt(disc)
        m1, m2 = (-1.0 + r) / (2.0 * eps), (-1.0 - r) / (2.0 * eps)
        c1 = u0 * (-lam - m2) / (m1 - m2)
        return c1 * np.exp(m1 * t) + (u0 - c1) * np.exp(m2 * t)
    w = math.sqrt(-disc) / (2.0 * eps)
    s = -1.0 / (2.0 * eps)
    return u0 * np.exp(s * t) * (np.cos(w * t) + (-lam - s) / w * np.sin(w * t))


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution:
    """A smooth space-time field with analytic derivatives (all ``(x, t) -> (N, n)``)."""

    u: Callable
    ut: Callable
    ux: Callable
    utt: Callable
    uxx: Callable


@dataclass(frozen=True)
class ManufacturedForcing:
    sys: SystemDefinition
    exact: ManufacturedSolution
    eps: float
    A: np.ndarray

    def equilibrium(self, x, t):
        """``f_eq = u_t + F(u)_x - G(u)`` so that ``u_exact`` solves the forced balance law."""
        m = self.exact
        U = m.u(x, t)
        Fx = np.einsum("...ij,...j->...i", self.sys.DF(U), m.ux(x, t))
        return m.ut(x, t) + Fx - self.sys.G(U)

    def relaxation(self, x, t):
        """``f_rx = f_eq + eps (u_tt - A u_xx)``: ``u_exact`` solves the forced relaxation system."""
        m = self.exact
        return self.equilibrium(x, t) + self.eps * (m.utt(x, t) - m.uxx(x, t) @ self.A.T)


def manufactured_forcing(sys: SystemDefinition, u_exact: ManufacturedSolution, eps: float = 0.0,
                         A=None) -> ManufacturedForcing:
    A = np.zeros((sys.n, sys.n)) if A is None else (A.A if isinstance(A, RelaxationMatrix) else np.asarray(A, float))
    return ManufacturedForcing(sys, u_exact, float(eps), A)


def travelling_sine(amplitude, speed: float = 1.0, decay: float = 0.0, offset=None, phase=None,
                    wavenumber: float = 2.0 * np.pi) -> ManufacturedSolution:
    """``u_k = offset_k + amp_k exp(-decay t) sin(k (x - c t) + phase_k)``."""
    amp = np.atleast_1d(np.asarray(amplitude, float))
    off = np.zeros_like(amp) if offset is None else np.atleast_1d(np.asarray(offset, float))
    ph = np.zeros_like(amp) if phase is None else np.atleast_1d(np.asarray(phase, float))
    k, c, d = wavenumber, speed, decay

    def arg(x, t):
        return k * (np.asarray(x, float)[:, None] - c * t) + ph

    def u(x, t):
        return off + amp * np.exp(-d * t) * np.sin(arg(x, t))

    def ux(x, t):
        return amp * k * np.exp(-d * t) * np.cos(arg(x, t))

    def uxx(x, t):
        return -amp * k**2 * np.exp(-d * t) * np.sin(arg(x, t))

    def ut(x, t):
        e = amp * np.exp(-d * t)
        return -d * e * np.sin(arg(x, t)) - c * k * e * np.cos(arg(x, t))

    def utt(x, t):
        e = amp * np.exp(-d * t)
        s, co = np.sin(arg(x, t)), np.cos(arg(x, t))
        return d * d * e * s + 2.0 * d * c * k * e * co - (c * k) ** 2 * e * s

    return ManufacturedSolution(u, ut, ux, utt, uxx)
