"""Data-driven policy iteration from a single off-policy rollout.

A behavior policy u = -K1 x + v with Gaussian exploration noise drives the
stochastic plant; least squares on the collected transitions estimates the
quadratic that one-step evaluation needs. The optimistic inner loop iterates
that estimate a fixed number of times per policy, and the same regression
data is reused across every outer iteration.

Rollouts and regression triples serialize to a little-endian binary container
(see save_rollout / save_regression) so expensive simulations can be cached.
"""

import struct

import numpy as np
import numpy.linalg as la
from dataclasses import dataclass, field

from .matops import (
    DimensionError,
    NotStabilizingError,
    STABILITY_MARGIN,
    _triu_weights,
    smat,
    spectral_radius,
    svec,
    symmetrize,
)
from .lqr import (
    PartitionedQuadratic,
    SingularBlockError,
    h_operator,
    policy_eval,
)

# distinguished relative_error result for a non-stabilizing gain; the bench
# layer filters on isfinite
UNSTABLE = float("inf")

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class Rollout:
    """One simulated trajectory: states x_0..x_M, inputs u_0..u_{M-1}."""

    states: np.ndarray
    inputs: np.ndarray
    seed: int
    behavior_gain: np.ndarray
    exploration_variance: float

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if states.shape[0] != inputs.shape[0] + 1:
            raise DimensionError(
                "need one more state than inputs, got %d states / %d inputs"
                % (states.shape[0], inputs.shape[0])
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    @property
    def m_samples(self):
        return self.inputs.shape[0]


@dataclass
class RegressionTriple:
    """Sample averages phi = E[zz~ zz~'], psi = E[zz~ xx~'], xi = E[zz~ c].

    phi is d x d with d = (n+m+1)(n+m+2)/2; the pseudo-inverse of phi is
    computed once on first use (rank-revealing SVD) and cached, since every
    inner step of every outer iteration reuses it.
    """

    phi: np.ndarray
    psi: np.ndarray
    xi: np.ndarray
    m_samples: int
    _pinv_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def d(self):
        return self.phi.shape[0]

    def pinv_phi(self, rank_tol=None):
        """(pinv, rank, rank_deficient) with caching per tolerance."""
        key = rank_tol
        if key not in self._pinv_cache:
            U, s, Vt = la.svd(self.phi, hermitian=True)
            tol = self.d * np.finfo(float).eps * s[0] if rank_tol is None else rank_tol
            rank = int((s > tol).sum())
            pinv = (Vt[:rank].T / s[:rank]) @ U[:, :rank].T
            self._pinv_cache[key] = (pinv, rank, rank < self.d)
        return self._pinv_cache[key]


@dataclass(frozen=True)
class OlspiConfig:
    """Run parameters: N outer iterations, T inner iterations, M samples."""

    N: int
    T: int
    M: int
    sigma_u2: float
    seed: int
    burn_in: int = 1000

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.sigma_u2 < 0:
            raise ValueError("sigma_u2 must be nonnegative")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass(frozen=True)
class AugmentedQuadratic:
    """Estimated quadratic of order n+m+1: a state-input block plus a trailing
    scalar that estimates the noise-channel cost trace(C'PC)."""

    full: np.ndarray
    n: int
    m: int
    rank_deficient: bool

    @property
    def leading(self):
        return PartitionedQuadratic(self.n, self.m, self.full[:-1, :-1])

    @property
    def noise_cost(self):
        return float(self.full[-1, -1])


@dataclass(frozen=True)
class OlspiIterate:
    index: int
    gain: np.ndarray
    P_inner: np.ndarray | None
    Q_inner: PartitionedQuadratic | None
    noise_cost_estimate: float | None
    stabilizing_wrt_truth: bool | None


@dataclass(frozen=True)
class OlspiResult:
    K_N: np.ndarray
    iterations: list


def simulate(sys, behavior_gain, sigma_u2, M, seed, x0=None, burn_in=0):
    """Roll the plant forward M steps under u = -K1 x + v, v ~ N(0, s2 I).

    Process noise w ~ N(0, I_q) enters through C. Deterministic given seed
    (counter-based generator). burn_in extra steps are simulated first and
    dropped, so states[0] is the post-burn-in state.
    """
    K1 = np.atleast_2d(np.asarray(behavior_gain, dtype=float))
    if M < 1:
        raise ValueError("M must be >= 1")
    if sigma_u2 < 0:
        raise ValueError("sigma_u2 must be nonnegative")
    Acl = sys.A - sys.B @ K1
    rho = spectral_radius(Acl)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise NotStabilizingError(rho, "A - BK1")
    rng = np.random.Generator(np.random.Philox(key=seed))
    total = burn_in + M
    V = np.sqrt(sigma_u2) * rng.standard_normal((total, sys.m))
    W = rng.standard_normal((total, sys.q))
    BV = V @ sys.B.T
    CW = W @ sys.C.T if sys.q else np.zeros((total, sys.n))
    x = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).reshape(sys.n)
    for t in range(burn_in):
        x = Acl @ x + BV[t] + CW[t]
    states = np.empty((M + 1, sys.n))
    inputs = np.empty((M, sys.m))
    states[0] = x
    for t in range(M):
        k = burn_in + t
        inputs[t] = -K1 @ x + V[k]
        x = Acl @ x + BV[k] + CW[k]
        states[t + 1] = x
    return Rollout(
        states=states,
        inputs=inputs,
        seed=seed,
        behavior_gain=K1,
        exploration_variance=float(sigma_u2),
    )


def _pair_columns(V):
    """Row-wise svec of the outer products: columns w_ij V[:,i] V[:,j]."""
    iu, w = _triu_weights(V.shape[1])
    return V[:, iu[0]] * V[:, iu[1]] * w


def build_regression(rollout, cost):
    """Least-squares data matrices from a rollout: sample averages over all
    transitions of zz~ zz~', zz~ xx~', and zz~ * stage cost, where
    z = [x', u', 1]'."""
    X, U = rollout.states, rollout.inputs
    M = rollout.m_samples
    if M < 1:
        raise ValueError("rollout has no transitions")
    Z = np.concatenate([X[:-1], U, np.ones((M, 1))], axis=1)
    Zt = _pair_columns(Z)
    Xt = _pair_columns(X[1:])
    c = np.einsum("ij,jk,ik->i", X[:-1], cost.S, X[:-1]) + np.einsum(
        "ij,jk,ik->i", U, cost.R, U
    )
    phi = symmetrize(Zt.T @ Zt / M)
    psi = Zt.T @ Xt / M
    xi = Zt.T @ c / M
    return RegressionTriple(phi=phi, psi=psi, xi=xi, m_samples=M)


def _order_from_d(d):
    p = int((np.sqrt(8 * d + 1) - 1) / 2 + 0.5)
    if p * (p + 1) // 2 != d:
        raise DimensionError("phi order %d is not a triangular number" % d)
    return p


def estimate_F(reg, P, rank_tol=None):
    """One-step quadratic estimate: smat(pinv(phi) (psi svec(P) + xi)).

    The leading (n+m) block estimates the evaluation quadratic at P, the
    trailing scalar the noise-channel cost. Rank deficiency of phi is
    reported as a flag, not an error.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = P.shape[0]
    p = _order_from_d(reg.d)
    m = p - 1 - n
    if m < 1:
        raise DimensionError("phi order %d incompatible with n=%d" % (p, n))
    pinv, _, deficient = reg.pinv_phi(rank_tol)
    f = pinv @ (reg.psi @ svec(P) + reg.xi)
    return AugmentedQuadratic(full=smat(f), n=n, m=m, rank_deficient=deficient)


def _policy_update(Q, i):
    """Gain from the uu/ux blocks of an estimated quadratic.

    Estimated blocks need not be positive definite, so this is a general
    symmetric solve. An exactly zero ux gets the minimum-norm answer K = 0
    even when uu is singular (degenerate data).
    """
    uu, ux = Q.uu, Q.ux
    if la.norm(ux) == 0.0:
        return np.zeros_like(ux)
    cond = la.cond(uu)
    if not np.isfinite(cond) or cond >= _COND_LIMIT:
        raise SingularBlockError(
            "uu block singular at outer iteration %d (cond %.3e)" % (i, cond)
        )
    try:
        return la.solve(uu, ux)
    except la.LinAlgError as e:
        raise SingularBlockError("uu block singular at outer iteration %d: %s" % (i, e))


def olspi_run(sys_data, cost, K1, cfg, sys=None, rank_tol=None):
    """Optimistic least-squares policy iteration on fixed regression data.

    For each of the N-1 policy updates the inner loop starts from P = 0 and
    applies T estimate-and-contract steps before the final quadratic is
    formed and the gain updated. The truth system, if given, is used only to
    flag each gain as stabilizing in the trace; the algorithm itself never
    sees it. Pure function of its inputs.
    """
    K = np.atleast_2d(np.asarray(K1, dtype=float))
    m, n = K.shape
    if cfg.M < sys_data.d:
        raise ValueError(
            "M=%d below d=%d, the regression cannot be full rank" % (cfg.M, sys_data.d)
        )
    if _order_from_d(sys_data.d) != n + m + 1:
        raise DimensionError("regression order does not match gain shape")

    def stab(gain):
        if sys is None:
            return None
        return bool(spectral_radius(sys.A - sys.B @ gain) < 1.0 - STABILITY_MARGIN)

    iterations = []
    for i in range(1, cfg.N):
        P_hat = np.zeros((n, n))
        for _ in range(cfg.T):
            F = estimate_F(sys_data, P_hat, rank_tol)
            Q = F.leading  # trailing scalar row/column dropped
            P_hat = h_operator(Q, K)
        F = estimate_F(sys_data, P_hat, rank_tol)
        Q = F.leading
        K_next = _policy_update(Q, i)
        iterations.append(
            OlspiIterate(
                index=i,
                gain=K,
                P_inner=P_hat,
                Q_inner=Q,
                noise_cost_estimate=F.noise_cost,
                stabilizing_wrt_truth=stab(K),
            )
        )
        K = K_next
    iterations.append(
        OlspiIterate(
            index=cfg.N,
            gain=K,
            P_inner=None,
            Q_inner=None,
            noise_cost_estimate=None,
            stabilizing_wrt_truth=stab(K),
        )
    )
    return OlspiResult(K_N=K, iterations=iterations)


def relative_error(sys, cost, K_hat, Pstar):
    """Relative excess average cost of a gain against the optimal value,
    trace(C'(P - P*)C) / trace(C'P*C). Returns the UNSTABLE marker for a
    non-stabilizing gain."""
    K_hat = np.atleast_2d(np.asarray(K_hat, dtype=float))
    if spectral_radius(sys.A - sys.B @ K_hat) >= 1.0 - STABILITY_MARGIN:
        return UNSTABLE
    P = policy_eval(sys, cost, K_hat)
    num = float(np.trace(sys.C.T @ (P - Pstar) @ sys.C))
    den = float(np.trace(sys.C.T @ Pstar @ sys.C))
    return num / den


# ---------------------------------------------------------------------------
# binary container: magic 'LQPI', u16 version, u16 kind, then dims + payload,
# everything little-endian, matrices as row-major float64
# ---------------------------------------------------------------------------

_MAGIC = b"LQPI"
_VERSION = 1
_KIND_ROLLOUT = 1
_KIND_REGRESSION = 2
_HEADER = struct.Struct("<4sHH")
_ROLLOUT_DIMS = struct.Struct("<IIQQd")
_REGRESSION_DIMS = struct.Struct("<IIQ")


def _write_array(f, arr):
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_array(f, shape):
    count = int(np.prod(shape))
    buf = f.read(count * 8)
    if len(buf) != count * 8:
        raise ValueError("container truncated")
    return np.frombuffer(buf, dtype="<f8", count=count).astype(float).reshape(shape)


def save_rollout(path, rollout):
    n = rollout.states.shape[1]
    m = rollout.inputs.shape[1]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, _KIND_ROLLOUT))
        f.write(
            _ROLLOUT_DIMS.pack(
                n, m, rollout.m_samples, rollout.seed, rollout.exploration_variance
            )
        )
        _write_array(f, rollout.behavior_gain)
        _write_array(f, rollout.states)
        _write_array(f, rollout.inputs)


def load_rollout(path):
    with open(path, "rb") as f:
        magic, version, kind = _HEADER.unpack(f.read(_HEADER.size))
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a recognized container: %r v%d" % (magic, version))
        if kind != _KIND_ROLLOUT:
            raise ValueError("container holds kind %d, expected a rollout" % kind)
        n, m, M, seed, sigma_u2 = _ROLLOUT_DIMS.unpack(f.read(_ROLLOUT_DIMS.size))
        gain = _read_array(f, (m, n))
        states = _read_array(f, (M + 1, n))
        inputs = _read_array(f, (M, m))
    return Rollout(
        states=states,
        inputs=inputs,
        seed=seed,
        behavior_gain=gain,
        exploration_variance=sigma_u2,
    )


def save_regression(path, reg):
    d = reg.d
    t = reg.psi.shape[1]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, _KIND_REGRESSION))
        f.write(_REGRESSION_DIMS.pack(d, t, reg.m_samples))
        _write_array(f, reg.phi)
        _write_array(f, reg.psi)
        _write_array(f, reg.xi)


def load_regression(path):
    with open(path, "rb") as f:
        magic, version, kind = _HEADER.unpack(f.read(_HEADER.size))
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a recognized container: %r v%d" % (magic, version))
        if kind != _KIND_REGRESSION:
            raise ValueError("container holds kind %d, expected a regression" % kind)
        d, t, M = _REGRESSION_DIMS.unpack(f.read(_REGRESSION_DIMS.size))
        phi = _read_array(f, (d, d))
        psi = _read_array(f, (d, t))
        xi = _read_array(f, (d,))
    return RegressionTriple(phi=phi, psi=psi, xi=xi, m_samples=M)
