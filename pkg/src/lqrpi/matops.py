"""Dense matrix utilities for the symmetric-matrix algebra used everywhere else.

Symmetric matrices travel as plain float ndarrays. The half-vectorization
convention is fixed once here and used as the wire order by every other module:
svec takes the upper triangle in row-major order and scales off-diagonal
entries by sqrt(2), so that ||svec(X)||_2 == ||X||_F.
"""

import numpy as np
import numpy.linalg as la
from dataclasses import dataclass

# lyap_solve refuses closed-loop matrices with spectral radius above this;
# solves near the stability boundary are too ill conditioned to certify.
STABILITY_MARGIN = 1e-9

# default tolerance on lambda_min for PSD checks, matching the residual
# scale of the dense Kronecker solve
PSD_TOL = 1e-9

_SQRT2 = np.sqrt(2.0)


class DimensionError(ValueError):
    """Shapes or lengths inconsistent with the requested operation."""


class NumericError(RuntimeError):
    """A numerical routine failed or produced an uncertifiable result."""


class NotStabilizingError(ValueError):
    """Closed-loop matrix is not Schur stable. Carries the offending radius."""

    def __init__(self, rho, what="matrix"):
        self.rho = float(rho)
        super().__init__(
            "%s has spectral radius %.9g, need < 1 - %g" % (what, self.rho, STABILITY_MARGIN)
        )


def _as_square(X, name="matrix"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError("%s must be square, got shape %s" % (name, (X.shape,)))
    return X


def _check_symmetric(X, name="matrix"):
    X = _as_square(X, name)
    scale = max(1.0, np.abs(X).max())
    if np.abs(X - X.T).max() > 1e-9 * scale:
        raise DimensionError("%s is not symmetric" % name)
    return X


def symmetrize(X):
    """Exact symmetric part (X + X^T)/2."""
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + X.T)


def _triu_weights(n):
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, _SQRT2)
    return iu, w


def svec(X):
    """Half-vectorize a symmetric matrix; off-diagonals scaled by sqrt(2)."""
    X = _check_symmetric(X, "svec input")
    iu, w = _triu_weights(X.shape[0])
    return w * X[iu]


def smat(v):
    """Inverse of svec. Length must be a triangular number."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError("smat expects a vector")
    L = v.size
    n = int((np.sqrt(8 * L + 1) - 1) / 2 + 0.5)
    if n * (n + 1) // 2 != L:
        raise DimensionError("length %d is not n(n+1)/2 for any n" % L)
    X = np.zeros((n, n))
    iu, w = _triu_weights(n)
    X[iu] = v / w
    X[(iu[1], iu[0])] = X[iu]
    return X


def vtilde(v):
    """svec of the outer product vv^T."""
    v = np.asarray(v, dtype=float).reshape(-1)
    return svec(np.outer(v, v))


@dataclass(frozen=True)
class DuplicationMatrix:
    """D_n with vec(X) = D_n svec(X) for symmetric X.

    With the sqrt(2) scaling the columns are orthonormal, so the
    pseudo-inverse is just the transpose.
    """

    order: int
    matrix: np.ndarray

    @property
    def pinv(self):
        return self.matrix.T


def duplication(n):
    if n < 1:
        raise DimensionError("order must be >= 1")
    t = n * (n + 1) // 2
    D = np.zeros((n * n, t))
    iu, w = _triu_weights(n)
    for k, (i, j) in enumerate(zip(iu[0], iu[1])):
        D[i * n + j, k] = 1.0 / w[k]
        D[j * n + i, k] = 1.0 / w[k]
    return DuplicationMatrix(order=n, matrix=D)


def spectral_radius(M):
    M = _as_square(M)
    try:
        ev = la.eigvals(M)
    except la.LinAlgError as e:  # pragma: no cover - eigensolver failures are exotic
        raise NumericError("eigenvalue computation failed: %s" % e)
    return float(np.abs(ev).max()) if ev.size else 0.0


def is_psd(X, tol=PSD_TOL):
    """True iff lambda_min(X) >= -tol."""
    X = symmetrize(_as_square(X))
    return bool(la.eigvalsh(X).min() >= -tol)


def lyap_solve(Acl, W):
    """Solve Acl^T P Acl - P + W = 0 for symmetric P.

    Dense Kronecker linear solve: (I - Acl^T (x) Acl^T) vec(P) = vec(W).
    Intended for small orders; the closed loop must be comfortably stable.
    """
    Acl = _as_square(Acl, "Acl")
    W = _check_symmetric(W, "W")
    n = Acl.shape[0]
    if W.shape[0] != n:
        raise DimensionError("W order %d does not match Acl order %d" % (W.shape[0], n))
    rho = spectral_radius(Acl)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise NotStabilizingError(rho, "Acl")
    M = np.eye(n * n) - np.kron(Acl.T, Acl.T)
    try:
        x = la.solve(M, W.reshape(-1))
    except la.LinAlgError as e:
        raise NumericError("Lyapunov system singular: %s" % e)
    P = symmetrize(x.reshape(n, n))
    resid = la.norm(Acl.T @ P @ Acl - P + W)
    if resid > 1e-10 * max(1.0, la.norm(W)):
        raise NumericError("Lyapunov residual %.3e too large" % resid)
    return P


def lyap_sum_oracle(Acl, W, K_terms):
    """Partial sum sum_{k=0}^{K_terms-1} (Acl^T)^k W Acl^k. Test oracle only."""
    Acl = _as_square(Acl, "Acl")
    W = _check_symmetric(W, "W")
    if K_terms < 1:
        raise DimensionError("K_terms must be >= 1")
    rho = spectral_radius(Acl)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise NotStabilizingError(rho, "Acl")
    acc = W.copy()
    term = W
    for _ in range(K_terms - 1):
        term = Acl.T @ term @ Acl
        acc += term
    return symmetrize(acc)
