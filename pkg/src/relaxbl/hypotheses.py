"""Sampling certificates for the structural hypotheses H1-H5.

Every check returns a :class:`HypothesisReport` whose ``margin`` is a slack:
non-negative means the inequality holds at every sample, and a failing
report carries the witness state(s) where the most negative slack was found.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .systems import SystemDefinition, fd_jacobian, line_integral

TOL = 1e-9
DEFAULT_SAMPLES = 10_000


class Verdict(str, Enum):
    holds = "holds"
    fails = "fails"
    not_applicable = "not_applicable"


HYPOTHESIS_IDS = ("H1", "H2", "H3a", "H3b", "H4", "H5", "D2R_psd")


@dataclass
class HypothesisReport:
    hypothesis_id: str
    verdict: Verdict
    margin: float
    witness: Optional[list] = None
    samples_used: int = 0
    seed: int = 0
    diagnostic: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict == Verdict.holds

    def to_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis_id,
            "verdict": self.verdict.value,
            "margin": float(self.margin),
            "witness": None if self.witness is None else [np.asarray(w, float).tolist() for w in self.witness],
            "samples_used": int(self.samples_used),
            "seed": int(self.seed),
            "diagnostic": self.diagnostic,
            **({"extra": self.extra} if self.extra else {}),
        }


@dataclass(frozen=True)
class RelaxationMatrix:
    """Symmetric positive-definite ``A`` with its cached eigendecomposition."""

    A: np.ndarray
    mu: np.ndarray
    Q: np.ndarray

    @classmethod
    def from_matrix(cls, A) -> "RelaxationMatrix":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if not np.array_equal(A, A.T):
            raise ValueError("A must be exactly symmetric")
        mu, Q = np.linalg.eigh(A)
        if np.any(mu <= 0.0):
            raise ValueError(f"A must be positive definite, eigenvalues {mu}")
        rebuilt = (Q * mu) @ Q.T
        if np.linalg.norm(rebuilt - A) > 1e-12 * np.linalg.norm(A):
            raise ValueError("eigendecomposition of A is inaccurate")
        A.setflags(write=False)
        mu.setflags(write=False)
        Q.setflags(write=False)
        return cls(A=A, mu=mu, Q=Q)

    @classmethod
    def scaled_identity(cls, n: int, s: float) -> "RelaxationMatrix":
        return cls.from_matrix(s * np.eye(n))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def speeds(self) -> np.ndarray:
        return np.sqrt(self.mu)

    @property
    def max_speed(self) -> float:
        return float(np.sqrt(self.mu.max()))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _corners(lo, hi):
    n = lo.size
    if n > 12:
        return np.empty((0, n))
    bits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    return np.where(bits == 1, hi, lo).astype(float)


def sample_box(lo, hi, n_samples: int, seed: int = 0, corners: bool = True) -> np.ndarray:
    """Scrambled Sobol points in the box, plus its corners.

    Sobol prefixes are nested, so a larger ``n_samples`` with the same seed
    samples a superset of the smaller run.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    eng = qmc.Sobol(d=lo.size, scramble=True, seed=seed)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        pts = qmc.scale(eng.random(n_samples), lo, hi)
    if corners:
        pts = np.vstack([_corners(lo, hi), pts])
    return pts


def sample_pairs(lo, hi, n_pairs: int, seed: int = 0):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    both = sample_box(np.concatenate([lo, lo]), np.concatenate([hi, hi]), n_pairs, seed=seed + 7919, corners=False)
    return both[:, : lo.size], both[:, lo.size:]


def _box_of(sys, box):
    if box is None:
        return sys.box
    lo, hi = box
    return np.asarray(lo, float), np.asarray(hi, float)


# ---------------------------------------------------------------------------
# H1
# ---------------------------------------------------------------------------

def _compat_error(sys, U):
    dq = fd_jacobian(sys.entropy_flux, U)
    prod = np.einsum("...i,...ij->...j", sys.Deta(U), sys.DF(U))
    err = np.linalg.norm(dq - prod, axis=-1)
    scale = 1.0 + np.linalg.norm(prod, axis=-1)
    return err, 1e-6 * scale


def entropy_margin(sys: SystemDefinition, U) -> np.ndarray:
    """Per-state slack of H1 (negative means violated)."""
    U = np.atleast_2d(np.asarray(U, float))
    lam = np.linalg.eigvalsh(sys.D2eta(U))
    a, b = sys.constants.alpha, sys.constants.beta
    m = np.minimum(lam[:, 0] - b, 0.5 * a - lam[:, -1])
    eta = sys.eta(U)
    m = np.where(eta < -TOL, np.minimum(m, eta), m)
    err, tol = _compat_error(sys, U)
    m = np.where(err > tol, np.minimum(m, tol - err), m)
    return m


def check_entropy(sys: SystemDefinition, box=None, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> HypothesisReport:
    lo, hi = _box_of(sys, box)
    U = sample_box(lo, hi, n_samples, seed)
    m = entropy_margin(sys, U)
    k = int(np.argmin(m))
    margin = float(m[k])
    zero = np.zeros((1, sys.n))
    origin_ok = abs(float(sys.eta(zero)[0])) <= TOL and np.max(np.abs(sys.Deta(zero))) <= TOL
    diag = ""
    if not origin_ok:
        diag = "eta(0) = 0 and Deta(0) = 0 violated"
        verdict = Verdict.fails
        margin = min(margin, -max(abs(float(sys.eta(zero)[0])), float(np.max(np.abs(sys.Deta(zero))))))
        witness = [zero[0]]
    else:
        verdict = Verdict.holds if margin >= -TOL else Verdict.fails
        witness = [U[k]] if verdict == Verdict.fails else [U[k]]
    return HypothesisReport("H1", verdict, margin, witness, len(U), seed, diag)


# ---------------------------------------------------------------------------
# H2
# ---------------------------------------------------------------------------

def subcharacteristic_matrix(sys: SystemDefinition, A, U) -> np.ndarray:
    """``M(u) = (A D2eta + D2eta A)/2 - alpha DF^T DF`` at each state."""
    A = A.A if isinstance(A, RelaxationMatrix) else np.asarray(A, float)
    H = sys.D2eta(U)
    DF = sys.DF(U)
    return 0.5 * (A @ H + H @ A) - sys.constants.alpha * np.einsum("...ki,...kj->...ij", DF, DF)


def subcharacteristic_margin(sys: SystemDefinition, A, U) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, float))
    return np.linalg.eigvalsh(subcharacteristic_matrix(sys, A, U))[:, 0]


def h2_star_margin(hess, dfs: Sequence[np.ndarray], As: Sequence[np.ndarray], alpha: float, xis) -> np.ndarray:
    """Quadratic form of the multi-dimensional condition, normalised by sum |xi_j|^2.

    ``hess`` is ``(m, n, n)``, ``dfs[j]`` is ``(m, n, n)``, ``As[j]`` is
    ``(n, n)`` and ``xis`` is ``(k, d, n)``. Returns the ``(m, k)`` table.
    """
    xis = np.asarray(xis, float)
    d = len(As)
    quad = np.zeros((hess.shape[0], xis.shape[0]))
    mix = np.zeros((hess.shape[0], xis.shape[0], hess.shape[-1]))
    for j in range(d):
        S = 0.5 * (As[j] @ hess + hess @ As[j])
        quad += np.einsum("kn,mnp,kp->mk", xis[:, j], S, xis[:, j])
        mix += np.einsum("mnp,kp->mkn", dfs[j], xis[:, j])
    val = quad - alpha * np.sum(mix**2, axis=-1)
    return val / np.sum(xis**2, axis=(1, 2))[None, :]


def check_subcharacteristic(
    sys: SystemDefinition,
    A,
    box=None,
    n_samples: int = DEFAULT_SAMPLES,
    n_directions: int = 64,
    seed: int = 0,
    flux_jacobians: Optional[Sequence] = None,
) -> HypothesisReport:
    """Sampled minimum of the subcharacteristic form.

    ``A`` is one :class:`RelaxationMatrix` in one space dimension, or a
    sequence of them together with ``flux_jacobians`` (one callable per
    direction) for the multi-dimensional form.
    """
    lo, hi = _box_of(sys, box)
    U = sample_box(lo, hi, n_samples, seed)
    if isinstance(A, (list, tuple)):
        if flux_jacobians is None or len(flux_jacobians) != len(A):
            raise ValueError("multi-dimensional check needs one flux Jacobian per matrix")
        rng = np.random.default_rng(seed)
        xis = rng.standard_normal((n_directions, len(A), sys.n))
        xis /= np.linalg.norm(xis, axis=(1, 2), keepdims=True)
        table = h2_star_margin(
            sys.D2eta(U), [J(U) for J in flux_jacobians],
            [a.A if isinstance(a, RelaxationMatrix) else np.asarray(a, float) for a in A],
            sys.constants.alpha, xis,
        )
        m = table.min(axis=1)
    else:
        m = subcharacteristic_margin(sys, A, U)
    k = int(np.argmin(m))
    nu = float(m[k])
    verdict = Verdict.holds if nu > 0.0 else Verdict.fails
    return HypothesisReport("H2", verdict, nu, [U[k]], len(U), seed, extra={"nu": nu})


def suggest_A(sys: SystemDefinition) -> RelaxationMatrix:
    return RelaxationMatrix.scaled_identity(sys.n, 2.0 * sys.constants.alpha)


# ---------------------------------------------------------------------------
# H3-a, H3-b
# ---------------------------------------------------------------------------

def weak_dissipation_product(sys, U, Ub):
    return np.einsum("...i,...i->...", sys.Deta(U) - sys.Deta(Ub), sys.G(U) - sys.G(Ub))


def check_weak_dissipation(sys: SystemDefinition, box=None, n_pairs: int = DEFAULT_SAMPLES, seed: int = 0) -> HypothesisReport:
    """Slack ``-max (Deta(U)-Deta(Ub)).(G(U)-G(Ub))`` over sampled pairs."""
    lo, hi = _box_of(sys, box)
    U, Ub = sample_pairs(lo, hi, n_pairs, seed)
    prod = weak_dissipation_product(sys, U, Ub)
    k = int(np.argmax(prod))
    margin = -float(prod[k])
    verdict = Verdict.holds if margin >= -TOL else Verdict.fails
    diag = "" if verdict == Verdict.holds else "source is not weakly dissipative on the box; use the Lipschitz route"
    return HypothesisReport("H3a", verdict, margin, [U[k], Ub[k]], len(U), seed, diag,
                            extra={"max_product": float(prod[k])})


def lipschitz_slack(sys, U, Ub):
    return sys.constants.L * np.linalg.norm(U - Ub, axis=-1) - np.linalg.norm(sys.G(U) - sys.G(Ub), axis=-1)


def check_lipschitz(sys: SystemDefinition, box=None, n_pairs: int = DEFAULT_SAMPLES, seed: int = 0) -> HypothesisReport:
    lo, hi = _box_of(sys, box)
    U, Ub = sample_pairs(lo, hi, n_pairs, seed)
    s = lipschitz_slack(sys, U, Ub)
    k = int(np.argmin(s))
    margin = float(s[k])
    verdict = Verdict.holds if margin >= -TOL else Verdict.fails
    return HypothesisReport("H3b", verdict, margin, [U[k], Ub[k]], len(U), seed, extra={"L": sys.constants.L})


# ---------------------------------------------------------------------------
# H4
# ---------------------------------------------------------------------------

def _asymmetry(J):
    return np.max(np.abs(J - np.swapaxes(J, -1, -2)), axis=(-1, -2))


def potential_margin(sys, U) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, float))
    R = sys.R(U)
    DR = sys.DR(U)
    C = sys.constants.C_R if sys.constants.C_R is not None else 1.0
    m = C * (1.0 + R) - np.linalg.norm(DR, axis=-1)
    m = np.where(R < -TOL, np.minimum(m, R), m)
    grad_err = np.linalg.norm(sys.G(U) + DR, axis=-1)
    m = np.where(grad_err > TOL * (1.0 + np.linalg.norm(DR, axis=-1)), np.minimum(m, -grad_err), m)
    fd = fd_jacobian(sys.potential, U)
    fd_err = np.linalg.norm(fd - DR, axis=-1)
    fd_tol = 1e-6 * (1.0 + np.linalg.norm(DR, axis=-1))
    m = np.where(fd_err > fd_tol, np.minimum(m, fd_tol - fd_err), m)
    return m


def check_potential(sys: SystemDefinition, box=None, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> HypothesisReport:
    lo, hi = _box_of(sys, box)
    U = sample_box(lo, hi, n_samples, seed)
    if not sys.has_potential:
        asym = _asymmetry(sys.DG(U))
        if np.max(asym) > 1e-6:
            diag = "no potential: DG is not symmetric (curl test)"
        else:
            diag = "no potential supplied although DG passes the curl test"
        return HypothesisReport("H4", Verdict.not_applicable, float("nan"), None, len(U), seed, diag,
                                extra={"max_curl": float(np.max(asym))})
    zero = np.zeros((1, sys.n))
    R0 = float(sys.R(zero)[0])
    DR0 = float(np.max(np.abs(sys.DR(zero))))
    if abs(R0) > TOL or DR0 > TOL:
        return HypothesisReport("H4", Verdict.fails, -max(abs(R0), DR0), [zero[0]], len(U), seed,
                                "R(0) = 0 and DR(0) = 0 violated")
    m = potential_margin(sys, U)
    k = int(np.argmin(m))
    margin = float(m[k])
    verdict = Verdict.holds if margin >= -TOL else Verdict.fails
    return HypothesisReport("H4", verdict, margin, [U[k]], len(U), seed, extra={"C_R": sys.constants.C_R})


# ---------------------------------------------------------------------------
# H5 and -DG >= 0
# ---------------------------------------------------------------------------

def entropy_source_row(sys, U):
    """``Deta(u) DG(u)`` as a row field."""
    return np.einsum("...i,...ij->...j", sys.Deta(U), sys.DG(U))


def entropy_source_potential(sys, U) -> np.ndarray:
    """``S(u) = -int_0^1 Deta(su) DG(su) u ds``, the candidate for H5."""
    U = np.atleast_2d(np.asarray(U, float))
    from .systems import GL_NODES, GL_WEIGHTS

    total = np.zeros(U.shape[0])
    for s, w in zip(GL_NODES, GL_WEIGHTS):
        total += w * np.einsum("mi,mi->m", entropy_source_row(sys, s * U), U)
    return -total


def check_H5_and_gradient_psd(
    sys: SystemDefinition, box=None, n_samples: int = DEFAULT_SAMPLES, seed: int = 0
) -> tuple[HypothesisReport, HypothesisReport]:
    """Returns ``(D2R_psd, H5)`` reports."""
    lo, hi = _box_of(sys, box)
    U = sample_box(lo, hi, n_samples, seed)
    if sys.source_jacobian is None:
        na = "no source Jacobian supplied"
        return (HypothesisReport("D2R_psd", Verdict.not_applicable, float("nan"), None, 0, seed, na),
                HypothesisReport("H5", Verdict.not_applicable, float("nan"), None, 0, seed, na))

    DG = sys.DG(U)
    asym = _asymmetry(DG)
    lam = np.linalg.eigvalsh(-0.5 * (DG + np.swapaxes(DG, -1, -2)))[:, 0]
    m1 = np.where(asym > 1e-9, np.minimum(lam, -asym), lam)
    k1 = int(np.argmin(m1))
    r1 = HypothesisReport("D2R_psd", Verdict.holds if m1[k1] >= -TOL else Verdict.fails, float(m1[k1]), [U[k1]],
                          len(U), seed, "" if asym.max() <= 1e-9 else "DG not symmetric")

    curl = _asymmetry(fd_jacobian(lambda V: entropy_source_row(sys, V), U))
    ctol = 1e-5 * (1.0 + np.max(np.abs(DG), axis=(-1, -2)))
    S = entropy_source_potential(sys, U)
    m2 = np.where(curl > ctol, ctol - curl, np.inf)
    m2 = np.minimum(m2, S)
    k2 = int(np.argmin(m2))
    diag = "" if np.all(curl <= ctol) else "Deta DG is not a gradient (curl test)"
    r2 = HypothesisReport("H5", Verdict.holds if m2[k2] >= -TOL else Verdict.fails, float(m2[k2]), [U[k2]],
                          len(U), seed, diag, extra={"max_curl": float(curl.max())})
    return r1, r2


# ---------------------------------------------------------------------------
# re-evaluation at witnesses and the strict gate
# ---------------------------------------------------------------------------

def reevaluate(report: HypothesisReport, sys: SystemDefinition, A=None) -> float:
    """Recompute the defining slack of ``report`` at its witness."""
    if report.witness is None:
        raise ValueError("report has no witness")
    W = [np.atleast_2d(np.asarray(w, float)) for w in report.witness]
    hid = report.hypothesis_id
    if hid == "H1":
        return float(entropy_margin(sys, W[0])[0])
    if hid == "H2":
        if A is None:
            raise ValueError("H2 re-evaluation needs A")
        return float(subcharacteristic_margin(sys, A, W[0])[0])
    if hid == "H3a":
        return -float(weak_dissipation_product(sys, W[0], W[1])[0])
    if hid == "H3b":
        return float(lipschitz_slack(sys, W[0], W[1])[0])
    if hid == "H4":
        return float(potential_margin(sys, W[0])[0])
    if hid == "D2R_psd":
        DG = sys.DG(W[0])
        return float(np.linalg.eigvalsh(-0.5 * (DG + np.swapaxes(DG, -1, -2)))[0, 0])
    if hid == "H5":
        return float(entropy_source_potential(sys, W[0])[0])
    raise ValueError(f"unknown hypothesis {hid!r}")


@dataclass
class CheckSummary:
    system: str
    reports: dict
    A: np.ndarray
    passed: bool
    reason: str

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "A": np.asarray(self.A).tolist(),
            "strict_pass": self.passed,
            "reason": self.reason,
            "reports": [r.to_dict() for r in self.reports.values()],
        }


def check_all(
    sys: SystemDefinition,
    A: Optional[RelaxationMatrix] = None,
    box=None,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    model: str = "global_term",
) -> CheckSummary:
    """Run every check and apply the strict gate.

    Strict pass needs H1 and H2, and either (H3a and H4) or H3b. For the
    alternative model D2R_psd and H5 are also required.
    """
    A = A if A is not None else suggest_A(sys)
    reps = {
        "H1": check_entropy(sys, box, n_samples, seed),
        "H2": check_subcharacteristic(sys, A, box, n_samples, seed=seed),
        "H3a": check_weak_dissipation(sys, box, n_samples, seed),
        "H3b": check_lipschitz(sys, box, n_samples, seed),
        "H4": check_potential(sys, box, n_samples, seed),
    }
    d2r, h5 = check_H5_and_gradient_psd(sys, box, n_samples, seed)
    reps["D2R_psd"] = d2r
    reps["H5"] = h5
    reasons = []
    for hid in ("H1", "H2"):
        if not reps[hid].holds:
            reasons.append(f"{hid} fails")
    source_ok = (reps["H3a"].holds and reps["H4"].holds) or reps["H3b"].holds
    if not source_ok:
        reasons.append("neither (H3a and H4) nor H3b holds")
    if model == "alternative":
        for hid in ("D2R_psd", "H5"):
            if not reps[hid].holds:
                reasons.append(f"{hid} fails (required by the alternative model)")
    return CheckSummary(sys.name, reps, A.A, not reasons, "; ".join(reasons) or "all required hypotheses hold")
