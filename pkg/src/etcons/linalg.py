"""Numerical kernels: Riccati solver, gain construction, matrix exponential.

The Riccati equation is solved by extracting the stable invariant subspace
of the associated Hamiltonian matrix (ordered real Schur form) followed by
Newton-Kleinman refinement sweeps that push the residual below tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, NotDetectableError, NotStabilizableError

#: relative Frobenius-norm residual guaranteed for Riccati solutions
CARE_RESIDUAL_TOL = 1e-10


def _as_matrix(m, name: str) -> np.ndarray:
    out = np.atleast_2d(np.asarray(m, dtype=float))
    if out.ndim != 2:
        raise ConfigError(f"{name} must be a matrix, got ndim={out.ndim}")
    if not np.isfinite(out).all():
        raise ConfigError(f"{name} contains non-finite entries")
    return out


@dataclass(frozen=True)
class SystemModel:
    """Identical agent dynamics xdot = A x + B u, y = C x.

    ``C`` defaults to the identity (full state measurement).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None

    def __post_init__(self):
        a = _as_matrix(self.A, "A")
        if a.shape[0] != a.shape[1]:
            raise ConfigError(f"A must be square, got {a.shape}")
        b = _as_matrix(self.B, "B")
        if b.shape[0] != a.shape[0]:
            raise ConfigError(f"B has {b.shape[0]} rows, expected {a.shape[0]}")
        c = np.eye(a.shape[0]) if self.C is None else _as_matrix(self.C, "C")
        if c.shape[1] != a.shape[0]:
            raise ConfigError(f"C has {c.shape[1]} columns, expected {a.shape[0]}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class GainSet:
    """Protocol gain matrices: Riccati solution P, feedback K, weight Gamma,
    and the observer injection F when output feedback is used."""

    P: np.ndarray
    K: np.ndarray
    Gamma: np.ndarray
    F: np.ndarray | None = None


def care_residual(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius norm of P A + A' P - P B B' P + I."""
    r = P @ A + A.T @ P - P @ B @ B.T @ P + np.eye(A.shape[0])
    return float(np.linalg.norm(r, "fro"))


def _unstable_uncontrollable_eig(A: np.ndarray, B: np.ndarray) -> complex | None:
    """PBH scan: an eigenvalue with Re >= 0 where rank [lam I - A, B] < n."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -1e-10:
            pencil = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
            if np.linalg.matrix_rank(pencil, tol=1e-9 * max(1.0, abs(lam))) < n:
                return complex(lam)
    return None


def solve_care(A, B, tol: float = CARE_RESIDUAL_TOL) -> np.ndarray:
    """Stabilizing solution of P A + A' P - P B B' P + I = 0.

    Hamiltonian stable-subspace extraction via ordered real Schur form,
    then Newton-Kleinman sweeps (each a Lyapunov solve) until the residual
    is below ``tol`` relative to ||P||_F. The returned P is symmetric
    positive definite and A - B B' P is Hurwitz; anything else raises
    ``NotStabilizableError`` naming the offending eigenvalue when one can
    be identified.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or B.shape[0] != n:
        raise ConfigError(f"dimension mismatch: A {A.shape}, B {B.shape}")

    def fail() -> NotStabilizableError:
        lam = _unstable_uncontrollable_eig(A, B)
        detail = f" (uncontrollable unstable eigenvalue {lam:.6g})" if lam is not None else ""
        return NotStabilizableError(f"(A, B) is not stabilizable{detail}")

    q = np.eye(n)
    ham = np.block([[A, -B @ B.T], [-q, -A.T]])
    t, z, sdim = sla.schur(ham, output="real", sort="lhp")
    if sdim != n:
        raise fail()
    u1 = z[:n, :n]
    u2 = z[n:, :n]
    try:
        with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
            # a singular basis block means no stabilizing solution; the
            # finiteness check below rejects it, so the noise is ignored
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            p = sla.solve(u1.T, u2.T).T
    except np.linalg.LinAlgError:
        raise fail() from None
    if not np.isfinite(p).all():
        raise fail()
    p = 0.5 * (p + p.T)

    # Newton-Kleinman refinement: with Ak = A - B B' P_k, the next iterate
    # solves Ak' P + P Ak = -(I + P_k B B' P_k).
    for _ in range(20):
        if care_residual(p, A, B) <= tol * max(1.0, np.linalg.norm(p, "fro")):
            break
        kk = B.T @ p
        ak = A - B @ kk
        try:
            # a degenerate Ak (non-stabilizable input) can divide by zero
            # inside the Lyapunov solve; the finite/residual checks below
            # reject the iterate, so suppress the noise
            with np.errstate(divide="ignore", invalid="ignore"):
                p_next = sla.solve_continuous_lyapunov(ak.T, -(q + kk.T @ kk))
        except np.linalg.LinAlgError:
            break
        p_next = 0.5 * (p_next + p_next.T)
        if not np.isfinite(p_next).all():
            break
        p = p_next

    if care_residual(p, A, B) > 1e-8 * max(1.0, np.linalg.norm(p, "fro")):
        raise fail()
    if np.linalg.eigvalsh(p)[0] <= 0:
        raise fail()
    if not is_hurwitz(A - B @ B.T @ p):
        raise fail()
    return p


def feedback_gains(P, B) -> tuple[np.ndarray, np.ndarray]:
    """Feedback matrices K = -B'P and Gamma = P B B' P.

    Gamma is assembled as K'K, which equals P B B' P and is symmetric
    positive semidefinite by construction.
    """
    P = _as_matrix(P, "P")
    B = _as_matrix(B, "B")
    if P.shape[0] != P.shape[1] or B.shape[0] != P.shape[0]:
        raise ConfigError(f"dimension mismatch: P {P.shape}, B {B.shape}")
    k = -B.T @ P
    return k, k.T @ k


def observer_gain(A, C) -> np.ndarray:
    """Output-injection gain F = -Pt C' from the dual Riccati equation
    Pt A' + A Pt - Pt C' C Pt + I = 0, making A + F C Hurwitz."""
    A = _as_matrix(A, "A")
    C = _as_matrix(C, "C")
    try:
        pt = solve_care(A.T, C.T)
    except NotStabilizableError:
        lam = _unstable_uncontrollable_eig(A.T, C.T)
        detail = f" (unobservable unstable eigenvalue {lam:.6g})" if lam is not None else ""
        raise NotDetectableError(f"(A, C) is not detectable{detail}") from None
    f = -pt @ C.T
    if not is_hurwitz(A + f @ C):
        raise NotDetectableError("(A, C) is not detectable")
    return f


def design_gains(model: SystemModel, observer: bool = False) -> GainSet:
    """Full gain construction: Riccati solve, K and Gamma, plus F for
    observer-based runs."""
    p = solve_care(model.A, model.B)
    k, gamma = feedback_gains(p, model.B)
    f = observer_gain(model.A, model.C) if observer else None
    return GainSet(P=p, K=k, Gamma=gamma, F=f)


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """e^{A t} by scaling-and-squaring with a degree-13 Pade approximant
    (scipy's expm, the Al-Mohy/Higham 2009 method)."""
    A = np.asarray(A, dtype=float)
    if not np.isfinite(t):
        raise ValueError(f"non-finite time {t!r}")
    if not np.isfinite(A).all():
        raise ValueError("matrix contains non-finite entries")
    return sla.expm(A * float(t))


def is_hurwitz(M) -> bool:
    """True when every eigenvalue has strictly negative real part."""
    M = np.asarray(M, dtype=float)
    return bool(np.linalg.eigvals(M).real.max() < 0)


def _check_symmetric(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    scale = max(1.0, np.abs(M).max())
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    return M


def max_eig_sym(M) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(_check_symmetric(M))[-1])


def min_eig_sym(M) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(_check_symmetric(M))[0])
