"""Discrete-time LQR: problem types, the G/Q/H operator algebra, policy
evaluation and improvement, exact policy iteration, and the Riccati solution
with a certified residual.

Gains are plain (m, n) ndarrays for the state feedback u = -K x.
"""

import numpy as np
import numpy.linalg as la
import scipy.linalg as sla
from dataclasses import dataclass

from .matops import (
    DimensionError,
    NotStabilizingError,
    NumericError,
    STABILITY_MARGIN,
    is_psd,
    lyap_solve,
    spectral_radius,
    symmetrize,
)

# policy_improve rejects uu blocks with 2-norm condition number at or above
# this; uu = R + B'PB is positive definite in exact arithmetic, so a blown-up
# condition number signals corrupted input
COND_LIMIT = 1e12


class SingularBlockError(RuntimeError):
    """The uu block of a partitioned quadratic is singular or ill conditioned."""


@dataclass(frozen=True)
class LinearSystem:
    """Plant x_{k+1} = A x_k + B u_k + C w_k. C may be all-zero."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionError("A must be square, got %s" % (A.shape,))
        if B.shape[0] != A.shape[0]:
            raise DimensionError("B has %d rows, A has order %d" % (B.shape[0], A.shape[0]))
        if C.shape[0] != A.shape[0]:
            raise DimensionError("C has %d rows, A has order %d" % (C.shape[0], A.shape[0]))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def q(self):
        return self.C.shape[1]


@dataclass(frozen=True)
class CostParams:
    """Stage cost x'Sx + u'Ru with S PSD and R PD."""

    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        S = symmetrize(np.atleast_2d(np.asarray(self.S, dtype=float)))
        R = symmetrize(np.atleast_2d(np.asarray(self.R, dtype=float)))
        if S.shape[0] != S.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionError("S and R must be square")
        if not is_psd(S):
            raise ValueError("S must be positive semidefinite")
        if la.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class PartitionedQuadratic:
    """Symmetric (n+m) x (n+m) matrix with named xx / ux / uu blocks."""

    n: int
    m: int
    full: np.ndarray

    def __post_init__(self):
        full = np.asarray(self.full, dtype=float)
        k = self.n + self.m
        if full.shape != (k, k):
            raise DimensionError("full must be %d x %d, got %s" % (k, k, (full.shape,)))
        scale = max(1.0, np.abs(full).max())
        if np.abs(full - full.T).max() > 1e-9 * scale:
            raise DimensionError("full must be symmetric")
        object.__setattr__(self, "full", symmetrize(full))

    @property
    def xx(self):
        return self.full[: self.n, : self.n]

    @property
    def ux(self):
        return self.full[self.n :, : self.n]

    @property
    def uu(self):
        return self.full[self.n :, self.n :]


@dataclass(frozen=True)
class PiIterate:
    index: int
    gain: np.ndarray
    value: np.ndarray
    are_residual: float
    rho_closed_loop: float
    stabilizing: bool


@dataclass
class PiTrace:
    iterations: list
    converged: bool
    final_error_to_Pstar: float | None = None

    @property
    def gains(self):
        return [it.gain for it in self.iterations]

    @property
    def values(self):
        return [it.value for it in self.iterations]


@dataclass(frozen=True)
class AreSolution:
    Pstar: np.ndarray
    Kstar: np.ndarray
    residual: float


def _check_p(sys, P):
    P = symmetrize(np.atleast_2d(np.asarray(P, dtype=float)))
    if P.shape != (sys.n, sys.n):
        raise DimensionError("P must be %d x %d" % (sys.n, sys.n))
    return P


def _check_gain(sys, K):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (sys.m, sys.n):
        raise DimensionError("gain must be %d x %d, got %s" % (sys.m, sys.n, (K.shape,)))
    return K


def g_of_p(sys, cost, P):
    """G(P): xx = S + A'PA - P, ux = B'PA, uu = R + B'PB."""
    P = _check_p(sys, P)
    A, B = sys.A, sys.B
    PA = P @ A
    full = np.block(
        [
            [cost.S + A.T @ PA - P, (B.T @ PA).T],
            [B.T @ PA, cost.R + B.T @ P @ B],
        ]
    )
    return PartitionedQuadratic(sys.n, sys.m, symmetrize(full))


def q_of_p(sys, cost, P):
    """Q(P): same as G(P) but without the -P term in the xx block."""
    P = _check_p(sys, P)
    A, B = sys.A, sys.B
    PA = P @ A
    full = np.block(
        [
            [cost.S + A.T @ PA, (B.T @ PA).T],
            [B.T @ PA, cost.R + B.T @ P @ B],
        ]
    )
    return PartitionedQuadratic(sys.n, sys.m, symmetrize(full))


def h_operator(Gm, K):
    """H(G, K) = [I -K'] G [I; -K] = Gxx - K'Gux - Gux'K + K'GuuK."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (Gm.m, Gm.n):
        raise DimensionError("gain must be %d x %d, got %s" % (Gm.m, Gm.n, (K.shape,)))
    cross = K.T @ Gm.ux
    return symmetrize(Gm.xx - cross - cross.T + K.T @ Gm.uu @ K)


def policy_eval(sys, cost, K):
    """Value matrix of a stabilizing gain: the unique symmetric solution of
    (A-BK)' P (A-BK) - P + S + K'RK = 0."""
    K = _check_gain(sys, K)
    Acl = sys.A - sys.B @ K
    rho = spectral_radius(Acl)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise NotStabilizingError(rho, "A - BK")
    return lyap_solve(Acl, cost.S + K.T @ cost.R @ K)


def policy_improve(Gm):
    """Improved gain K = uu^{-1} ux, solved as an SPD linear system."""
    uu = symmetrize(Gm.uu)
    cond = la.cond(uu)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularBlockError("uu block condition number %.3e" % cond)
    try:
        cf = sla.cho_factor(uu)
    except la.LinAlgError as e:
        raise SingularBlockError("uu block not positive definite: %s" % e)
    return sla.cho_solve(cf, Gm.ux)


def are_residual(sys, cost, P):
    """Frobenius norm of A'PA - P - A'PB (R + B'PB)^{-1} B'PA + S."""
    P = _check_p(sys, P)
    A, B = sys.A, sys.B
    BtPA = B.T @ P @ A
    corr = A.T @ P @ B @ la.solve(cost.R + B.T @ P @ B, BtPA)
    return float(la.norm(A.T @ P @ A - P - corr + cost.S))


def exact_pi(sys, cost, K1=None, tol=1e-11, max_iter=100):
    """Exact policy iteration: evaluate, then improve, from a stabilizing K1.

    Stops when consecutive value matrices agree within tol (Frobenius), or
    when the improved gain agrees with the current one within tol (the run is
    at a fixed point, so the value cannot move either). K1 defaults to zero,
    which requires A itself to be stable.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    K = np.zeros((sys.m, sys.n)) if K1 is None else _check_gain(sys, K1)
    rho0 = spectral_radius(sys.A - sys.B @ K)
    if rho0 >= 1.0 - STABILITY_MARGIN:
        raise NotStabilizingError(rho0, "A - BK1")
    iterations = []
    converged = False
    P_prev = None
    for i in range(1, max_iter + 1):
        P = policy_eval(sys, cost, K)
        rho = spectral_radius(sys.A - sys.B @ K)
        iterations.append(
            PiIterate(
                index=i,
                gain=K,
                value=P,
                are_residual=are_residual(sys, cost, P),
                rho_closed_loop=rho,
                stabilizing=rho < 1.0,
            )
        )
        if P_prev is not None and la.norm(P - P_prev) <= tol:
            converged = True
            break
        K_next = policy_improve(g_of_p(sys, cost, P))
        if la.norm(K_next - K) <= tol:
            converged = True
            break
        K, P_prev = K_next, P
    return PiTrace(iterations=iterations, converged=converged)


def solve_are(sys, cost, K1=None, tol=1e-11):
    """Riccati solution (Pstar, Kstar) via policy iteration, with residual."""
    trace = exact_pi(sys, cost, K1=K1, tol=tol)
    if not trace.converged:
        raise NumericError("policy iteration did not converge within max_iter")
    Pstar = trace.iterations[-1].value
    Kstar = policy_improve(g_of_p(sys, cost, Pstar))
    return AreSolution(Pstar=Pstar, Kstar=Kstar, residual=are_residual(sys, cost, Pstar))


def avg_cost(C, P):
    """Average cost trace(C' P C) of a value matrix through noise channel C."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if C.shape[0] != P.shape[0]:
        raise DimensionError("C has %d rows, P has order %d" % (C.shape[0], P.shape[0]))
    return float(np.trace(C.T @ P @ C))
