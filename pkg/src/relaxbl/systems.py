"""Balance-law definitions and the builtin example systems.

Every map on a :class:`SystemDefinition` is vectorised over leading axes:
a state array has shape ``(..., n)``, Jacobians and Hessians come back as
``(..., n, n)`` and scalar maps as ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

Array = np.ndarray
StateMap = Callable[[Array], Array]

FD_STEP = np.cbrt(np.finfo(float).eps)

# 16-point Gauss-Legendre rule on [0, 1], used for antiderivatives of
# constitutive functions (Sigma, -int P, R = -int g).
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
GL_NODES = 0.5 * (_GL_X + 1.0)
GL_WEIGHTS = 0.5 * _GL_W


class SystemDefinitionError(ValueError):
    """Raised when a system's declared structure is violated at construction."""


def as_states(U, n: int) -> Array:
    U = np.asarray(U, dtype=float)
    if U.shape[-1:] != (n,):
        raise ValueError(f"state arrays must end with dimension {n}, got shape {U.shape}")
    return U


def fd_jacobian(f: StateMap, U: Array) -> Array:
    """Central-difference Jacobian of ``f`` at states ``U`` (shape ``(..., n)``).

    The step is ``cbrt(eps) * max(1, |u_j|)`` per component.
    """
    U = np.asarray(U, dtype=float)
    n = U.shape[-1]
    cols = []
    for j in range(n):
        h = FD_STEP * np.maximum(1.0, np.abs(U[..., j]))
        e = np.zeros_like(U)
        e[..., j] = h
        fp = np.asarray(f(U + e), dtype=float)
        fm = np.asarray(f(U - e), dtype=float)
        cols.append((fp - fm) / (2.0 * h[..., None]) if fp.ndim == U.ndim else (fp - fm) / (2.0 * h))
    return np.stack(cols, axis=-1)


def fd_gradient(f: Callable[[Array], Array], U: Array) -> Array:
    """Central-difference gradient of a scalar map; returns shape ``(..., n)``."""
    return fd_jacobian(f, U)


def line_integral(f: Callable[[Array], Array], a: Array) -> Array:
    """``int_0^a f(s) ds`` for arrays ``a`` by Gauss-Legendre on the scaled segment."""
    a = np.asarray(a, dtype=float)
    s = a[..., None] * GL_NODES
    return a * np.sum(GL_WEIGHTS * f(s), axis=-1)


@dataclass(frozen=True)
class Constants:
    alpha: float
    beta: float
    L: float
    C_R: Optional[float] = None
    gamma: Optional[float] = None
    Gamma: Optional[float] = None
    Cbar: Optional[float] = None


@dataclass(frozen=True, eq=False)
class SystemDefinition:
    """A balance law ``u_t + F(u)_x = G(u)`` with an entropy pair.

    ``flux_jacobian``, ``source_jacobian`` and ``entropy_grad`` may be left
    out; the accessors then fall back to central finite differences.
    """

    name: str
    n: int
    flux: StateMap
    source: StateMap
    entropy: StateMap
    entropy_hess: StateMap
    entropy_flux: StateMap
    constants: Constants
    entropy_grad: Optional[StateMap] = None
    flux_jacobian: Optional[StateMap] = None
    source_jacobian: Optional[StateMap] = None
    potential: Optional[StateMap] = None
    potential_grad: Optional[StateMap] = None
    wave_speed: Optional[StateMap] = None
    box_lo: Array = field(default_factory=lambda: np.array([-5.0]))
    box_hi: Array = field(default_factory=lambda: np.array([5.0]))
    labels: tuple = ()
    params: Mapping = field(default_factory=dict)
    tags: frozenset = frozenset()

    # -- evaluation helpers -------------------------------------------------
    def F(self, U):
        return self.flux(as_states(U, self.n))

    def G(self, U):
        return self.source(as_states(U, self.n))

    def eta(self, U):
        return self.entropy(as_states(U, self.n))

    def q(self, U):
        return self.entropy_flux(as_states(U, self.n))

    def Deta(self, U):
        U = as_states(U, self.n)
        if self.entropy_grad is not None:
            return self.entropy_grad(U)
        return fd_gradient(self.entropy, U)

    def D2eta(self, U):
        return self.entropy_hess(as_states(U, self.n))

    def DF(self, U):
        U = as_states(U, self.n)
        if self.flux_jacobian is not None:
            return self.flux_jacobian(U)
        return fd_jacobian(self.flux, U)

    def DG(self, U):
        U = as_states(U, self.n)
        if self.source_jacobian is not None:
            return self.source_jacobian(U)
        return fd_jacobian(self.source, U)

    def R(self, U):
        if self.potential is None:
            raise ValueError(f"system {self.name!r} has no source potential")
        return self.potential(as_states(U, self.n))

    def DR(self, U):
        if self.potential is None:
            raise ValueError(f"system {self.name!r} has no source potential")
        U = as_states(U, self.n)
        if self.potential_grad is not None:
            return self.potential_grad(U)
        return fd_gradient(self.potential, U)

    def max_speed(self, U) -> float:
        """Largest equilibrium characteristic speed over the states ``U``."""
        U = as_states(U, self.n)
        if self.wave_speed is not None:
            return float(np.max(self.wave_speed(U)))
        ev = np.linalg.eigvals(self.DF(U).reshape(-1, self.n, self.n))
        return float(np.max(np.abs(ev)))

    @property
    def has_potential(self) -> bool:
        return self.potential is not None

    @property
    def box(self):
        return np.asarray(self.box_lo, float), np.asarray(self.box_hi, float)

    def with_box(self, lo, hi) -> "SystemDefinition":
        from dataclasses import replace

        return replace(self, box_lo=np.asarray(lo, float), box_hi=np.asarray(hi, float))

    def with_constants(self, **kw) -> "SystemDefinition":
        from dataclasses import replace

        return replace(self, constants=replace(self.constants, **kw))


def _box(n, lo=-5.0, hi=5.0):
    return np.full(n, float(lo)), np.full(n, float(hi))


# ---------------------------------------------------------------------------
# linear advection-reaction
# ---------------------------------------------------------------------------

def make_linear_reaction(a: float, lam: float, box=None) -> SystemDefinition:
    """Scalar ``u_t + a u_x = -lam u`` with ``eta = u^2/2``."""
    a = float(a)
    lam = float(lam)
    if not (np.isfinite(a) and np.isfinite(lam)):
        raise ValueError("a and lambda must be finite")
    lo, hi = box if box is not None else _box(1)

    potential = potential_grad = None
    C_R = None
    if lam >= 0.0:
        potential = lambda U: 0.5 * lam * U[..., 0] ** 2
        potential_grad = lambda U: lam * U
        C_R = max(1.0, np.sqrt(lam / 2.0))

    return SystemDefinition(
        name="linear_reaction",
        n=1,
        flux=lambda U: a * U,
        flux_jacobian=lambda U: np.full(U.shape + (1,), a),
        source=lambda U: -lam * U,
        source_jacobian=lambda U: np.full(U.shape + (1,), -lam),
        entropy=lambda U: 0.5 * U[..., 0] ** 2,
        entropy_grad=lambda U: U.copy(),
        entropy_hess=lambda U: np.ones(U.shape + (1,)),
        entropy_flux=lambda U: 0.5 * a * U[..., 0] ** 2,
        potential=potential,
        potential_grad=potential_grad,
        wave_speed=lambda U: np.full(U.shape[:-1], abs(a)),
        constants=Constants(alpha=2.0, beta=1.0, L=abs(lam), C_R=C_R),
        box_lo=np.asarray(lo, float),
        box_hi=np.asarray(hi, float),
        labels=("u",),
        params={"a": a, "lam": lam},
        tags=frozenset({"linear_reaction"} | ({"gradient_source"} if lam >= 0 else set())),
    )


def exact_solution_linear_reaction(sys: SystemDefinition, u0: Callable, x, t) -> Array:
    """``exp(-lam t) u0(x - a t)`` for a system built by :func:`make_linear_reaction`."""
    if "linear_reaction" not in sys.tags:
        raise ValueError(f"exact solution only available for linear_reaction, not {sys.name!r}")
    a, lam = sys.params["a"], sys.params["lam"]
    x = np.asarray(x, dtype=float)
    return np.exp(-lam * t) * np.asarray(u0(x - a * t), dtype=float)


# ---------------------------------------------------------------------------
# elasticity
# ---------------------------------------------------------------------------

def make_elasticity(
    sigma: Callable,
    dsigma: Callable,
    gamma: float,
    Gamma: float,
    damping: Optional[Callable] = None,
    ddamping: Optional[Callable] = None,
    *,
    Sigma: Optional[Callable] = None,
    lipschitz: Optional[float] = None,
    c0_source: bool = False,
    box=None,
    name: str = "elasticity",
    params: Optional[Mapping] = None,
) -> SystemDefinition:
    """Elasticity ``(u, v)_t - (v, sigma(u))_x = (0, g(v))``.

    Fluxes are stored as ``F = (-v, -sigma(u))`` so that the entropy pair
    ``eta = v^2/2 + Sigma(u)``, ``q = -sigma(u) v`` is compatible.
    """
    lo, hi = box if box is not None else _box(2)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if not 0.0 < gamma < Gamma:
        raise SystemDefinitionError(f"need 0 < gamma < Gamma, got gamma={gamma}, Gamma={Gamma}")
    us = np.linspace(lo[0], hi[0], 4001)
    ds = np.asarray(dsigma(us), float)
    slack = 1e-12 * max(1.0, Gamma)
    outside = (ds < gamma - slack) | (ds > Gamma + slack)
    if np.any(outside):
        bad = us[np.argmax(outside)]
        raise SystemDefinitionError(
            f"sigma' leaves ({gamma}, {Gamma}) on the box, e.g. sigma'({bad:.4g}) = {float(dsigma(bad)):.6g}"
        )
    if abs(float(sigma(0.0))) > 1e-12:
        raise SystemDefinitionError("sigma(0) must vanish")

    g = damping if damping is not None else (lambda v: np.zeros_like(v))
    if abs(float(g(0.0))) > 1e-12:
        raise SystemDefinitionError("damping must satisfy g(0) = 0")
    dg = ddamping

    Sig = Sigma if Sigma is not None else (lambda u: line_integral(sigma, u))

    def flux(U):
        return np.stack([-U[..., 1], -sigma(U[..., 0])], axis=-1)

    def flux_jac(U):
        J = np.zeros(U.shape + (2,))
        J[..., 0, 1] = -1.0
        J[..., 1, 0] = -dsigma(U[..., 0])
        return J

    def source(U):
        return np.stack([np.zeros_like(U[..., 0]), g(U[..., 1])], axis=-1)

    source_jac = None
    if dg is not None:
        def source_jac(U):
            J = np.zeros(U.shape + (2,))
            J[..., 1, 1] = dg(U[..., 1])
            return J

    def entropy(U):
        return 0.5 * U[..., 1] ** 2 + Sig(U[..., 0])

    def entropy_grad(U):
        return np.stack([sigma(U[..., 0]), U[..., 1]], axis=-1)

    def entropy_hess(U):
        H = np.zeros(U.shape + (2,))
        H[..., 0, 0] = dsigma(U[..., 0])
        H[..., 1, 1] = 1.0
        return H

    def entropy_flux(U):
        return -sigma(U[..., 0]) * U[..., 1]

    # g nonincreasing on the velocity range -> attach R = -int_0^v g
    vs = np.linspace(lo[1], hi[1], 4001)
    gv = np.asarray(g(vs), float)
    monotone = bool(np.all(np.diff(gv) <= 1e-12))
    potential = potential_grad = None
    C_R = None
    if monotone:
        potential = lambda U: -line_integral(g, U[..., 1])
        potential_grad = lambda U: np.stack([np.zeros_like(U[..., 0]), -g(U[..., 1])], axis=-1)
        Rv = -line_integral(g, vs)
        C_R = float(max(1.0, np.max(np.abs(gv) / (1.0 + Rv))))

    if lipschitz is None:
        slopes = np.abs(np.diff(gv) / np.diff(vs))
        lipschitz = float(np.max(slopes)) if slopes.size else 0.0

    alpha = max(2.0 * Gamma, 1.0)
    beta = min(gamma, 1.0)
    tags = {"elasticity"}
    if monotone:
        tags |= {"weakly_dissipative", "gradient_source"}
    if c0_source:
        tags.add("c0_source")

    return SystemDefinition(
        name=name,
        n=2,
        flux=flux,
        flux_jacobian=flux_jac,
        source=source,
        source_jacobian=source_jac,
        entropy=entropy,
        entropy_grad=entropy_grad,
        entropy_hess=entropy_hess,
        entropy_flux=entropy_flux,
        potential=potential,
        potential_grad=potential_grad,
        wave_speed=lambda U: np.sqrt(np.abs(dsigma(U[..., 0]))),
        constants=Constants(alpha=alpha, beta=beta, L=float(lipschitz), C_R=C_R, gamma=gamma, Gamma=Gamma),
        box_lo=lo,
        box_hi=hi,
        labels=("u", "v"),
        params=dict(params or {}),
        tags=frozenset(tags),
    )


# ---------------------------------------------------------------------------
# isentropic combustion
# ---------------------------------------------------------------------------

def make_combustion(
    P: Callable,
    P_v: Callable,
    P_Z: Callable,
    Theta: Callable,
    phi: Callable,
    B: Callable,
    dB: Callable,
    d2B: Callable,
    K: float,
    Cbar: float,
    gamma: float,
    Gamma: float,
    *,
    P_ZZ: Optional[Callable] = None,
    lipschitz_phi_theta: float = 1.0,
    box=None,
    params: Optional[Mapping] = None,
    n_check: int = 41,
) -> SystemDefinition:
    """Isentropic combustion in the variables ``(v, u, Z)``.

    ``F = (-u, P(v, Z), 0)``, ``G = (0, 0, -K phi(Theta(v, Z)) Z)`` and
    ``eta = u^2/2 - int_0^v P(s, Z) ds + B(Z)``, ``q = P u``.
    """
    if box is None:
        lo = np.array([-5.0, -5.0, 0.0])
        hi = np.array([5.0, 5.0, 1.0])
    else:
        lo, hi = (np.asarray(b, float) for b in box)
    P_ZZ = P_ZZ if P_ZZ is not None else (lambda v, Z: np.zeros(np.broadcast(v, Z).shape))

    vv, ZZ = np.meshgrid(np.linspace(lo[0], hi[0], 4 * n_check), np.linspace(0.0, 1.0, n_check))
    s = -np.asarray(P_v(vv, ZZ), float)
    if np.any(s < gamma - 1e-12) or np.any(s > Gamma + 1e-12):
        raise SystemDefinitionError(f"-P_v leaves ({gamma}, {Gamma}) on the box: range [{s.min():.4g}, {s.max():.4g}]")
    pz = np.abs(np.asarray(P_Z(vv, ZZ), float))
    ipzz = np.abs(line_integral(lambda t: P_ZZ(t, ZZ[..., None]), vv))
    if pz.max() >= Cbar or ipzz.max() >= Cbar:
        raise SystemDefinitionError(f"|P_Z| or |int P_ZZ| reaches Cbar={Cbar}: {pz.max():.4g}, {ipzz.max():.4g}")
    zs = np.linspace(0.0, 1.0, n_check)
    need = 1.0 + 2.0 / Gamma * Cbar**2 + Cbar
    if np.any(np.asarray(d2B(zs), float) <= need):
        raise SystemDefinitionError(f"B'' must exceed {need:.6g} on [0, 1]")

    alpha = max(1.0, Gamma + Cbar, 2.0 / Gamma * Cbar**2 + 2.0 * Cbar)
    beta = min(gamma / 2.0, 1.0)

    def flux(U):
        v, u, Z = U[..., 0], U[..., 1], U[..., 2]
        return np.stack([-u, P(v, Z), np.zeros_like(v)], axis=-1)

    def flux_jac(U):
        v, Z = U[..., 0], U[..., 2]
        J = np.zeros(U.shape + (3,))
        J[..., 0, 1] = -1.0
        J[..., 1, 0] = P_v(v, Z)
        J[..., 1, 2] = P_Z(v, Z)
        return J

    def rate(U):
        return phi(Theta(U[..., 0], U[..., 2]))

    def source(U):
        Z = U[..., 2]
        zero = np.zeros_like(Z)
        return np.stack([zero, zero, -K * rate(U) * Z], axis=-1)

    def entropy(U):
        v, u, Z = U[..., 0], U[..., 1], U[..., 2]
        intP = line_integral(lambda t: P(t, Z[..., None]), v)
        return 0.5 * u**2 - intP + B(Z)

    def entropy_grad(U):
        v, u, Z = U[..., 0], U[..., 1], U[..., 2]
        intPZ = line_integral(lambda t: P_Z(t, Z[..., None]), v)
        return np.stack([-P(v, Z), u, -intPZ + dB(Z)], axis=-1)

    def entropy_hess(U):
        v, Z = U[..., 0], U[..., 2]
        H = np.zeros(U.shape + (3,))
        H[..., 0, 0] = -P_v(v, Z)
        H[..., 0, 2] = H[..., 2, 0] = -P_Z(v, Z)
        H[..., 1, 1] = 1.0
        H[..., 2, 2] = -line_integral(lambda t: P_ZZ(t, Z[..., None]), v) + d2B(Z)
        return H

    def entropy_flux(U):
        return P(U[..., 0], U[..., 2]) * U[..., 1]

    sysdef = SystemDefinition(
        name="combustion",
        n=3,
        flux=flux,
        flux_jacobian=flux_jac,
        source=source,
        entropy=entropy,
        entropy_grad=entropy_grad,
        entropy_hess=entropy_hess,
        entropy_flux=entropy_flux,
        wave_speed=lambda U: np.sqrt(np.abs(P_v(U[..., 0], U[..., 2]))),
        constants=Constants(
            alpha=alpha, beta=beta, L=abs(K) * lipschitz_phi_theta, gamma=gamma, Gamma=Gamma, Cbar=Cbar
        ),
        box_lo=lo,
        box_hi=hi,
        labels=("v", "u", "Z"),
        params=dict(params or {}),
        tags=frozenset({"combustion"}),
    )

    # reject Hessians that dip below beta anywhere on a coarse box grid
    axes = [np.linspace(lo[k], hi[k], 9) for k in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    lam_min = np.linalg.eigvalsh(entropy_hess(pts))[:, 0].min()
    if lam_min < beta - 1e-12:
        raise SystemDefinitionError(f"entropy Hessian falls below beta={beta:.4g}: min eigenvalue {lam_min:.6g}")
    return sysdef


# ---------------------------------------------------------------------------
# named presets used by configuration files
# ---------------------------------------------------------------------------

ELASTICITY_DEFAULTS = {"k": 1.0, "b": 0.1, "gamma": 0.85, "Gamma": 1.15, "damping": "linear", "damping_rate": 1.0}
COMBUSTION_DEFAULTS = {
    "p_v": 1.5, "p_sin": 0.05, "p_z": 0.1, "c_b": 0.65, "K": 1.0,
    "Cbar": 0.2, "gamma": 1.4, "Gamma": 3.5,
}
LINEAR_DEFAULTS = {"a": 1.0, "lam": 1.0}


def _damping(kind: str, rate: float):
    if kind == "none":
        return (lambda v: np.zeros_like(np.asarray(v, float))), (lambda v: np.zeros_like(np.asarray(v, float))), False
    if kind == "linear":
        return (lambda v: -rate * np.asarray(v, float)), (lambda v: np.full_like(np.asarray(v, float), -rate)), False
    if kind == "positive_part":
        return (
            (lambda v: -rate * np.maximum(np.asarray(v, float), 0.0)),
            (lambda v: np.where(np.asarray(v, float) > 0.0, -rate, 0.0)),
            True,
        )
    if kind == "anti":
        return (lambda v: rate * np.asarray(v, float)), (lambda v: np.full_like(np.asarray(v, float), rate)), False
    raise ValueError(f"unknown damping {kind!r}; expected none, linear, positive_part or anti")


def elasticity_from_params(params: Optional[Mapping] = None) -> SystemDefinition:
    """Elasticity with ``sigma(u) = k u + b sin u`` and a named damping law."""
    p = {**ELASTICITY_DEFAULTS, **(params or {})}
    k, b = float(p["k"]), float(p["b"])
    g, dg, c0 = _damping(p["damping"], float(p["damping_rate"]))
    return make_elasticity(
        sigma=lambda u: k * u + b * np.sin(u),
        dsigma=lambda u: k + b * np.cos(u),
        Sigma=lambda u: 0.5 * k * u**2 + b * (1.0 - np.cos(u)),
        gamma=float(p["gamma"]),
        Gamma=float(p["Gamma"]),
        damping=g,
        ddamping=dg,
        lipschitz=abs(float(p["damping_rate"])) if p["damping"] != "none" else 0.0,
        c0_source=c0,
        params=p,
    )


def combustion_from_params(params: Optional[Mapping] = None) -> SystemDefinition:
    """Combustion with ``P = -p_v v + p_sin sin v + p_z Z``, ``Theta = v``,
    ``phi = max(0, tanh)`` and ``B = c_b Z^2``."""
    p = {**COMBUSTION_DEFAULTS, **(params or {})}
    pv, ps, pz, cb = float(p["p_v"]), float(p["p_sin"]), float(p["p_z"]), float(p["c_b"])
    return make_combustion(
        P=lambda v, Z: -pv * v + ps * np.sin(v) + pz * Z,
        P_v=lambda v, Z: -pv + ps * np.cos(v) + 0.0 * Z,
        P_Z=lambda v, Z: pz + 0.0 * v + 0.0 * Z,
        Theta=lambda v, Z: v,
        phi=lambda th: np.maximum(0.0, np.tanh(th)),
        B=lambda Z: cb * Z**2,
        dB=lambda Z: 2.0 * cb * Z,
        d2B=lambda Z: np.full_like(np.asarray(Z, float), 2.0 * cb),
        K=float(p["K"]),
        Cbar=float(p["Cbar"]),
        gamma=float(p["gamma"]),
        Gamma=float(p["Gamma"]),
        lipschitz_phi_theta=1.0,
        params=p,
    )


def linear_reaction_from_params(params: Optional[Mapping] = None) -> SystemDefinition:
    p = {**LINEAR_DEFAULTS, **(params or {})}
    return make_linear_reaction(float(p["a"]), float(p["lam"]))


BUILTIN_SYSTEMS = {
    "linear_reaction": linear_reaction_from_params,
    "elasticity": elasticity_from_params,
    "combustion": combustion_from_params,
}


def build_system(name: str, params: Optional[Mapping] = None) -> SystemDefinition:
    try:
        factory = BUILTIN_SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(BUILTIN_SYSTEMS)}") from None
    return factory(params)
