"""Scalar functionals and discrete identity residuals on solver snapshots.

All spatial derivatives here are central differences on the periodic grid.
``u_t`` of a relaxation snapshot is ``-v_x`` (plus the explicit source in the
alternative model); ``ubar_t`` comes from the balance law itself.

Conventions: ``w = u - ubar``. Source densities ``S`` include any attached
forcing, ``S = G(u) + f``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .equilibrium import EquilibriumSnapshot, EquilibriumTrace
from .hypotheses import RelaxationMatrix, sample_box
from .solver import Forcing, Grid1D, RelaxationField, SolutionTrace, d2dx2, ddx, time_derivative
from .systems import SystemDefinition

ERROR_TERMS = ("a1", "a2", "b1", "b2", "c1", "c2", "d1", "d2", "d3")
DISSIPATION_TERMS = ("I1", "I2", "I3", "I4", "I5", "I6")

# 3-point Gauss-Legendre on [0, 1]
_GX, _GW = np.polynomial.legendre.leggauss(3)
GAUSS3_NODES = 0.5 * (_GX + 1.0)
GAUSS3_WEIGHTS = 0.5 * _GW


class NotApplicableError(ValueError):
    """The functional needs structure the system does not carry."""


class WindowError(ValueError):
    pass


def _matrix(A) -> np.ndarray:
    if A is None:
        return None
    return A.A if isinstance(A, RelaxationMatrix) else np.asarray(A, float)


def _quad(M, a, b):
    """Row-wise ``a_i^T M_i b_i`` (``M`` may be a single matrix)."""
    if M.ndim == 2:
        return np.einsum("ni,ij,nj->n", a, M, b)
    return np.einsum("ni,nij,nj->n", a, M, b)


def _mv(M, a):
    if M.ndim == 2:
        return a @ M.T
    return np.einsum("nij,nj->ni", M, a)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _integral(density, dx):
    return float(dx * np.sum(density))


def _same_grid(a: Grid1D, b: Grid1D):
    if a.n_cells != b.n_cells or a.x_min != b.x_min or a.x_max != b.x_max:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def _check_aligned(relax: RelaxationField, equil: EquilibriumSnapshot):
    if equil.u.shape != relax.u.shape:
        raise ValueError(f"snapshot shapes differ: {relax.u.shape} vs {equil.u.shape}")
    if relax.time != equil.time:
        raise ValueError(f"snapshot times differ: {relax.time!r} vs {equil.time!r}")


def source_of(sys: SystemDefinition, u, grid: Grid1D, t: float, forcing: Optional[Forcing] = None):
    s = sys.G(u)
    return s if forcing is None else s + forcing(grid.centers, t)


# ---------------------------------------------------------------------------
# phi, Psi, relative entropy
# ---------------------------------------------------------------------------

def phi(field: RelaxationField, eps: float) -> float:
    dx = field.grid.dx
    ux = ddx(field.u, dx)
    ut = time_derivative(field)
    return _integral(np.sum(field.u**2 + eps**2 * ux**2 + eps**2 * ut**2, axis=1), dx)


def differences(relax: RelaxationField, equil: EquilibriumSnapshot):
    """``(w, w_x, w_t)`` for ``w = u - ubar``."""
    _check_aligned(relax, equil)
    dx = relax.grid.dx
    w = relax.u - equil.u
    return w, ddx(w, dx), time_derivative(relax) - equil.ut


def psi(relax: RelaxationField, equil: EquilibriumSnapshot, eps: float) -> float:
    w, wx, wt = differences(relax, equil)
    return _integral(np.sum(w**2 + eps**2 * wx**2 + eps**2 * wt**2, axis=1), relax.grid.dx)


def relative_entropy_pair(sys: SystemDefinition, relax: RelaxationField, equil: EquilibriumSnapshot, eps: float):
    """Pointwise ``(H^rel, Q^rel)``, each of shape ``(N,)``."""
    _, _, wt = differences(relax, equil)
    u, ub = relax.u, equil.u
    shifted = u + eps * wt
    Db = sys.Deta(ub)
    H = sys.eta(shifted) - sys.eta(ub) - _dot(Db, shifted - ub)
    Q = sys.q(u) - sys.q(ub) - _dot(Db, sys.F(u) - sys.F(ub))
    return H, Q


def averaged_hessian(sys: SystemDefinition, u: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """``int_0^1 int_0^s D^2 eta(u + tau shift) dtau ds`` by 3x3 Gauss.

    The inner variable is ``tau = s r`` with ``r`` in ``[0, 1]``.
    """
    out = np.zeros(u.shape + (u.shape[-1],))
    for s, ws in zip(GAUSS3_NODES, GAUSS3_WEIGHTS):
        for r, wr in zip(GAUSS3_NODES, GAUSS3_WEIGHTS):
            out += ws * wr * s * sys.D2eta(u + (s * r) * shift)
    return out


def lyapunov_density(sys, relax, equil, eps, A) -> np.ndarray:
    A = _matrix(A)
    alpha = sys.constants.alpha
    _, wx, wt = differences(relax, equil)
    H, _ = relative_entropy_pair(sys, relax, equil, eps)
    avg = averaged_hessian(sys, relax.u, eps * wt)
    inner = alpha * np.eye(sys.n) - avg
    return H + eps**2 * _quad(inner, wt, wt) + eps**2 * alpha * _quad(A, wx, wx)


def lyapunov_G(sys, relax, equil, eps, A) -> float:
    return _integral(lyapunov_density(sys, relax, equil, eps, A), relax.grid.dx)


def relative_potential_density(sys, u, ub) -> np.ndarray:
    if not sys.has_potential:
        raise NotApplicableError(f"system {sys.name!r} has no source potential")
    return sys.R(u) - sys.R(ub) - _dot(sys.DR(ub), u - ub)


def relative_potential(sys, relax: RelaxationField, equil: EquilibriumSnapshot, convex: bool = False,
                       tol: float = 1e-12) -> float:
    """``int R(u) - R(ubar) - DR(ubar)(u - ubar) dx``.

    With ``convex=True`` (D^2 R certified positive semidefinite) every cell
    value is asserted to be nonnegative up to ``tol``.
    """
    _check_aligned(relax, equil)
    dens = relative_potential_density(sys, relax.u, equil.u)
    if convex and np.min(dens) < -tol:
        i = int(np.argmin(dens))
        raise AssertionError(f"negative relative potential {dens[i]:.3e} at cell {i}")
    return _integral(dens, relax.grid.dx)


def int_potential(sys, field: RelaxationField) -> float:
    if not sys.has_potential:
        raise NotApplicableError(f"system {sys.name!r} has no source potential")
    return _integral(sys.R(field.u), field.grid.dx)


# ---------------------------------------------------------------------------
# identity residuals
# ---------------------------------------------------------------------------

def _window_step(times) -> float:
    if len(times) != 3:
        raise WindowError(f"need exactly 3 snapshots, got {len(times)}")
    h0, h1 = times[1] - times[0], times[2] - times[1]
    if not (h0 > 0 and h1 > 0) or abs(h1 - h0) > 1e-9 * max(h0, h1):
        raise WindowError(f"window times are not equally spaced: {list(times)}")
    return 0.5 * (h0 + h1)


def energy_density(sys, u, ut, eps, alpha) -> np.ndarray:
    """Bracketed density of the relaxation energy identity, without the ``u_x^T A u_x`` part."""
    avg = averaged_hessian(sys, u, eps * ut)
    half = 0.5 * alpha * np.eye(sys.n) - avg
    return sys.eta(u + eps * ut) + 0.5 * eps**2 * alpha * _dot(ut, ut) + eps**2 * _quad(half, ut, ut)


@dataclass
class IdentityResidual:
    time: float
    l1: float
    lhs: np.ndarray
    rhs: np.ndarray
    terms: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, object] = field(default_factory=dict)


def energy_identity_residual(sys: SystemDefinition, window: Sequence[RelaxationField], eps: float, A,
                             forcing: Optional[Forcing] = None, alpha: Optional[float] = None,
                             model: str = "global_term") -> IdentityResidual:
    """L1 norm of LHS - RHS of the relaxation energy identity at the middle time.

    The identity is written for the second-order form
    ``u_t + F(u)_x = S + eps (A u_xx - u_tt)``, which the global-term model
    satisfies with ``S = G(u) + f``.
    """
    if model != "global_term":
        raise NotApplicableError("the energy identity is stated for the global-term model")
    if len(window) != 3:
        raise WindowError(f"need exactly 3 snapshots, got {len(window)}")
    h = _window_step([f.time for f in window])
    A = _matrix(A)
    alpha = sys.constants.alpha if alpha is None else float(alpha)
    grid = window[1].grid
    dx = grid.dx
    I = np.eye(sys.n)

    def density(f):
        u = f.u
        ut = time_derivative(f)
        ux = ddx(u, dx)
        return energy_density(sys, u, ut, eps, alpha) + eps**2 * alpha * _quad(A, ux, ux)

    f = window[1]
    u = f.u
    ut = time_derivative(f)
    ux = ddx(u, dx)
    DF = sys.DF(u)
    H2 = sys.D2eta(u)
    S = source_of(sys, u, grid, f.time, forcing)

    dens_t = (density(window[2]) - density(window[0])) / (2.0 * h)
    flux_q = ddx(sys.q(u)[:, None], dx)[:, 0]
    r = ut + _mv(DF, ux)
    lhs = (dens_t + flux_q + eps * alpha * _dot(r, r) + eps * _quad(alpha * I - H2, ut, ut)
           + eps * _quad(np.einsum("nij,jk->nik", H2, A) - alpha * np.einsum("nki,nkj->nij", DF, DF), ux, ux))
    flux_r = eps * _dot(sys.Deta(u), ux @ A.T) + 2.0 * eps**2 * alpha * _quad(A, ut, ux)
    rhs = ddx(flux_r[:, None], dx)[:, 0] + _dot(sys.Deta(u), S) + 2.0 * eps * alpha * _dot(ut, S)
    res = lhs - rhs
    return IdentityResidual(f.time, _integral(np.abs(res), dx), lhs, rhs)


def relative_entropy_residual(sys: SystemDefinition, relax_window: Sequence[RelaxationField],
                              equil_window: Sequence[EquilibriumSnapshot], eps: float, A,
                              forcing: Optional[Forcing] = None, equil_forcing: Optional[Forcing] = None,
                              weakly_dissipative: bool = False) -> IdentityResidual:
    """Discrete relative entropy identity at the middle time of aligned windows.

    ``forcing`` is the forcing attached to the relaxation run and
    ``equil_forcing`` the one attached to the balance law; they enter the
    source terms as ``G(u) + f`` and ``G(ubar) + fbar``. ``terms`` holds the
    space integrals of a1 ... d3. The right-hand side carries ``- b1 - b2``.
    """
    if len(relax_window) != 3 or len(equil_window) != 3:
        raise WindowError("need aligned windows of exactly 3 snapshots")
    for r, e in zip(relax_window, equil_window):
        _check_aligned(r, e)
    h = _window_step([f.time for f in relax_window])
    A = _matrix(A)
    alpha = sys.constants.alpha
    grid = relax_window[1].grid
    dx = grid.dx
    I = np.eye(sys.n)

    def G_density(r, e):
        return lyapunov_density(sys, r, e, eps, A)

    dens_t = (G_density(relax_window[2], equil_window[2]) - G_density(relax_window[0], equil_window[0])) / (2.0 * h)

    r, e = relax_window[1], equil_window[1]
    t = r.time
    u, ub = r.u, e.u
    w, wx, wt = differences(r, e)
    ubx = ddx(ub, dx)
    ubxx = d2dx2(ub, dx)
    ubt = e.ut
    ubtt = (equil_window[2].ut - equil_window[0].ut) / (2.0 * h)

    DFu, DFb = sys.DF(u), sys.DF(ub)
    Hu, Hb = sys.D2eta(u), sys.D2eta(ub)
    Du, Db = sys.Deta(u), sys.Deta(ub)
    dD = Du - Db
    Su = source_of(sys, u, grid, t, forcing)
    Sb = source_of(sys, ub, grid, t, equil_forcing)

    _, Q = relative_entropy_pair(sys, r, e, eps)
    rr = wt + _mv(DFu, wx)
    lhs = (dens_t + ddx(Q[:, None], dx)[:, 0] + eps * alpha * _dot(rr, rr)
           + eps * _quad(alpha * I - Hu, wt, wt)
           + eps * _quad(np.einsum("nij,jk->nik", Hu, A) - alpha * np.einsum("nki,nkj->nij", DFu, DFu), wx, wx))

    flux = eps * _dot(dD, wx @ A.T) + 2.0 * alpha * eps**2 * _quad(A, wx, wt)
    quad_flux = -_dot(_mv(Hb, ubx), sys.F(u) - sys.F(ub) - _mv(DFb, w))
    dens = {
        "a1": eps * _dot(_mv(Hu - Hb, ubt), wt),
        "a2": -eps * _dot(dD, ubtt),
        "b1": eps * _dot(_mv(Hu - Hb, ubx), wx @ A.T),
        "b2": -eps * _dot(dD, ubxx @ A.T),
        "c1": eps * _dot(ubxx @ A.T - ubtt, wt),
        "c2": -_dot(_mv(DFu - DFb, ubx), wt),
        "d1": _dot(dD, Su - Sb),
        "d2": _dot(Sb, dD - _mv(Hb, w)),
        "d3": _dot(Su - Sb, wt),
    }
    rhs = (ddx(flux[:, None], dx)[:, 0] + quad_flux
           + dens["a1"] + dens["a2"] - dens["b1"] - dens["b2"]
           + 2.0 * eps * alpha * (dens["c1"] + dens["c2"])
           + dens["d1"] + dens["d2"] + 2.0 * eps * alpha * dens["d3"])
    res = lhs - rhs
    terms = {k: _integral(v, dx) for k, v in dens.items()}
    diag = {}
    if weakly_dissipative:
        diag["d1_nonpositive"] = bool(terms["d1"] <= 1e-12 * max(1.0, abs(terms["d2"])))
        diag["d1_pointwise_max"] = float(np.max(dens["d1"]))
    return IdentityResidual(t, _integral(np.abs(res), dx), lhs, rhs, terms, diag)


# ---------------------------------------------------------------------------
# dissipation decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SaturatedEntropy:
    """Bounded test entropy ``eta(s(u))`` with ``s(u) = radius * tanh(u / radius)`` per component.

    For systems the composition is generally not an entropy of the flux;
    ``compatibility_defect`` measures by how much.
    """

    sys: SystemDefinition
    radius: float = 1.0

    def _sat(self, u):
        r = self.radius
        th = np.tanh(u / r)
        return r * th, 1.0 - th**2, -2.0 * th * (1.0 - th**2) / r

    def eta(self, u):
        s, _, _ = self._sat(u)
        return self.sys.eta(s)

    def Deta(self, u):
        s, d1, _ = self._sat(u)
        return self.sys.Deta(s) * d1

    def D2eta(self, u):
        s, d1, d2 = self._sat(u)
        H = self.sys.D2eta(s) * d1[:, :, None] * d1[:, None, :]
        idx = np.arange(u.shape[1])
        H[:, idx, idx] += self.sys.Deta(s) * d2
        return H

    def compatibility_defect(self, u) -> float:
        H = self.D2eta(u)
        DF = self.sys.DF(u)
        M = np.einsum("nij,njk->nik", H, DF)
        return float(np.max(np.abs(M - np.swapaxes(M, 1, 2))))

    def bounds(self, u) -> Dict[str, float]:
        return {
            "eta": float(np.max(np.abs(self.eta(u)))),
            "Deta": float(np.max(np.abs(self.Deta(u)))),
            "D2eta": float(np.max(np.abs(self.D2eta(u)))),
        }


def growth_constant(sys: SystemDefinition, test: SaturatedEntropy, lo, hi, n_samples: int = 4096,
                    seed: int = 0, M: Optional[float] = None):
    """Smallest ``C`` with ``|Deta_bar G| <= C (M - Deta G)`` on sampled states of the box.

    ``M`` defaults to ``1 + max(Deta G, 0)`` over the samples. Returns ``(C, M)``.
    """
    U = sample_box(lo, hi, n_samples, seed)
    G = sys.G(U)
    own = _dot(sys.Deta(U), G)
    if M is None:
        M = 1.0 + max(float(np.max(own)), 0.0)
    den = M - own
    if np.any(den <= 0):
        return math.inf, M
    return float(np.max(np.abs(_dot(test.Deta(U), G)) / den)), float(M)


@dataclass
class DissipationReport:
    times: np.ndarray
    per_time: Dict[str, np.ndarray]
    spacetime: Dict[str, float]
    model: str
    radius: float
    compatibility_defect: float

    def row(self) -> Dict[str, float]:
        return dict(self.spacetime)


def _trapz(y, t):
    y = np.asarray(y, float)
    t = np.asarray(t, float)
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def dissipation_terms(sys, field: RelaxationField, test: SaturatedEntropy, eps: float, A, model: str = "global_term",
                      forcing: Optional[Forcing] = None) -> Dict[str, float]:
    """Per-time norms: L2 proxies for I1, I2 and L1 norms for I3 ... I6."""
    A = _matrix(A)
    dx = field.grid.dx
    u = field.u
    ux = ddx(u, dx)
    ut = time_derivative(field)
    Dt = test.Deta(u)
    Ht = test.D2eta(u)
    S = source_of(sys, u, field.grid, field.time, forcing)
    out = {
        "I1": math.sqrt(_integral((eps * _dot(Dt, ux @ A.T)) ** 2, dx)),
        "I2": math.sqrt(_integral((eps * _dot(Dt, ut)) ** 2, dx)),
        "I3": _integral(np.abs(-eps * _quad(np.einsum("nij,jk->nik", Ht, A), ux, ux)), dx),
        "I4": _integral(np.abs(eps * _quad(Ht, ut, ut)), dx),
        "I5": _integral(np.abs(_dot(Dt, S)), dx),
        "I6": 0.0,
    }
    if model == "alternative":
        out["I6"] = _integral(np.abs(eps * _dot(Dt, _mv(sys.DG(u), ut))), dx)
    return out


def dissipation_decomposition(sys: SystemDefinition, trace: SolutionTrace, test: SaturatedEntropy,
                              A=None, forcing: Optional[Forcing] = None) -> DissipationReport:
    """I1 ... I6 at every snapshot plus their space-time norms (trapezoid in time).

    I1 and I2 are reported through their L2 proxies; their space-time value
    is the L2 norm over the slab.
    """
    A = trace.config.A if A is None else A
    forcing = trace.config.forcing if forcing is None else forcing
    eps = trace.eps
    rows = [dissipation_terms(sys, f, test, eps, A, trace.model, forcing) for f in trace.snapshots]
    times = trace.times
    per = {k: np.array([r[k] for r in rows]) for k in DISSIPATION_TERMS}
    st = {}
    for k in DISSIPATION_TERMS:
        if k in ("I1", "I2"):
            st[k] = math.sqrt(_trapz(per[k] ** 2, times))
        else:
            st[k] = _trapz(per[k], times)
    allu = np.concatenate([f.u for f in trace.snapshots])
    return DissipationReport(times, per, st, trace.model, test.radius, test.compatibility_defect(allu))


# ---------------------------------------------------------------------------
# functional traces
# ---------------------------------------------------------------------------

FUNCTIONAL_COLUMNS = (
    "t", "phi", "psi", "lyapunov_G", "int_R", "int_R_rel", "energy_residual_L1", "rel_entropy_residual_L1",
) + DISSIPATION_TERMS + ERROR_TERMS


@dataclass
class FunctionalTrace:
    """One row per recorded time; missing values are NaN."""

    rows: List[Dict[str, float]]
    columns: Sequence[str] = FUNCTIONAL_COLUMNS
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, math.nan) for r in self.rows], float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(r.get(c, math.nan)) for c in self.columns])

    @classmethod
    def from_csv(cls, path) -> "FunctionalTrace":
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            cols = next(rd)
            rows = [{c: float(v) for c, v in zip(cols, line)} for line in rd]
        return cls(rows, tuple(cols))


def _fmt(x) -> str:
    return repr(float(x))


def evaluate_trace(sys: SystemDefinition, trace: SolutionTrace, equil: Optional[EquilibriumTrace] = None,
                   test: Optional[SaturatedEntropy] = None, identities: bool = True,
                   equil_forcing: Optional[Forcing] = None) -> FunctionalTrace:
    """Every functional at every snapshot of ``trace``.

    Identity residuals use the window centred at each interior snapshot and
    are NaN at the ends or when snapshot spacing is uneven.
    """
    eps = trace.eps
    A = trace.config.A
    forcing = trace.config.forcing
    snaps = trace.snapshots
    if equil is not None:
        _same_grid(snaps[0].grid, equil.grid)
        if len(equil.snapshots) != len(snaps):
            raise ValueError("relaxation and equilibrium traces have different snapshot counts")
        if equil_forcing is None:
            equil_forcing = equil.forcing
    weak = "weakly_dissipative" in sys.tags
    rows = []
    for k, f in enumerate(snaps):
        row = {c: math.nan for c in FUNCTIONAL_COLUMNS}
        row["t"] = f.time
        row["phi"] = phi(f, eps)
        if sys.has_potential:
            row["int_R"] = int_potential(sys, f)
        if equil is not None:
            e = equil.snapshots[k]
            row["psi"] = psi(f, e, eps)
            row["lyapunov_G"] = lyapunov_G(sys, f, e, eps, A)
            if sys.has_potential:
                row["int_R_rel"] = relative_potential(sys, f, e)
        if test is not None:
            row.update(dissipation_terms(sys, f, test, eps, A, trace.model, forcing))
        if identities and 0 < k < len(snaps) - 1:
            win = snaps[k - 1:k + 2]
            try:
                if trace.model == "global_term":
                    row["energy_residual_L1"] = energy_identity_residual(sys, win, eps, A, forcing).l1
                if equil is not None:
                    res = relative_entropy_residual(sys, win, equil.snapshots[k - 1:k + 2], eps, A,
                                                    forcing, equil_forcing, weak)
                    row["rel_entropy_residual_L1"] = res.l1
                    row.update(res.terms)
            except WindowError:
                pass
        rows.append(row)
    meta = {"eps": eps, "dx": trace.dx, "model": trace.model, "system": sys.name}
    return FunctionalTrace(rows, FUNCTIONAL_COLUMNS, meta)
