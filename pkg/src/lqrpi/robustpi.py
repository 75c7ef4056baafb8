"""Policy iteration under disturbed policy updates, plus empirical probes of
its robustness: local contraction of the exact iteration map and
input-to-state stability of the disturbed one.

Each iteration evaluates the current gain exactly, perturbs the resulting
quadratic by a bounded symmetric disturbance, and improves against the
perturbed quadratic. Mid-run destabilization is recorded data, not an
exception: the benchmark counts failures as outcomes.
"""

import math

import numpy as np
import numpy.linalg as la
from dataclasses import dataclass

from .matops import (
    NotStabilizingError,
    STABILITY_MARGIN,
    spectral_radius,
    symmetrize,
)
from .lqr import (
    PartitionedQuadratic,
    SingularBlockError,
    are_residual,
    g_of_p,
    policy_eval,
    policy_improve,
    solve_are,
)

DISTURBANCE_KINDS = ("zero", "constant", "iid_bounded", "decaying")


class DegenerateProbeError(RuntimeError):
    """Every probe sample was discarded; no contraction estimate exists."""


@dataclass(frozen=True)
class DisturbanceSpec:
    """Bounded symmetric disturbance sequence for the policy-update step.

    magnitude bounds the Frobenius norm of each disturbance; for the decaying
    kind the bound at iteration i is magnitude * decay_rate**i.
    """

    kind: str
    magnitude: float = 0.0
    decay_rate: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError("kind must be one of %s" % (DISTURBANCE_KINDS,))
        if self.magnitude < 0:
            raise ValueError("magnitude must be nonnegative")
        if self.kind == "decaying":
            if self.decay_rate is None or not (0.0 < self.decay_rate < 1.0):
                raise ValueError("decaying kind needs decay_rate in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class Failure:
    iteration: int
    cause: str  # "non-stabilizing" or "singular-uu"


@dataclass(frozen=True)
class RobustPiIterate:
    index: int
    gain: np.ndarray
    value: np.ndarray
    are_residual: float
    rho_closed_loop: float
    stabilizing: bool
    delta_g_norm: float
    p_error_to_Pstar: float


@dataclass
class RobustPiTrace:
    iterations: list
    converged: bool  # completed all iterations without failure
    final_error_to_Pstar: float | None
    failure: Failure | None


@dataclass(frozen=True)
class ProbeSample:
    p_error_in: float
    p_error_out: float
    ratio: float


@dataclass(frozen=True)
class IssPoint:
    magnitude: float
    sup_tail_error: float | None
    fraction_no_failure: float


def _sample_symmetric(rng, order, fro_norm):
    """Symmetric matrix with iid normal entries, rescaled to the exact norm."""
    X = symmetrize(rng.standard_normal((order, order)))
    nrm = la.norm(X)
    if fro_norm == 0.0 or nrm == 0.0:
        return np.zeros((order, order))
    return X * (fro_norm / nrm)


def _disturbances(spec, order):
    """Generator of disturbance matrices, one per iteration starting at i=1."""
    if spec.kind == "zero":
        while True:
            yield np.zeros((order, order))
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    if spec.kind == "constant":
        dG = _sample_symmetric(rng, order, spec.magnitude)
        while True:
            yield dG
    i = 1
    while True:
        mag = spec.magnitude
        if spec.kind == "decaying":
            mag = spec.magnitude * spec.decay_rate**i
        yield _sample_symmetric(rng, order, mag)
        i += 1


def inexact_pi(sys, cost, K1, dist, n_iter):
    """Disturbed policy iteration for a fixed number of iterations.

    At iteration i: evaluate the current gain (if still stabilizing), perturb
    the resulting quadratic by the i-th disturbance, improve. The trace
    records the per-iteration value error against the Riccati solution. On a
    non-stabilizing iterate or a singular uu block the trace's failure field
    is set and iteration stops; no exception escapes mid-run.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if la.eigvalsh(cost.S).min() <= 0:
        raise ValueError("S must be positive definite for disturbed iteration")
    K = np.atleast_2d(np.asarray(K1, dtype=float))
    rho0 = spectral_radius(sys.A - sys.B @ K)
    if rho0 >= 1.0 - STABILITY_MARGIN:
        raise NotStabilizingError(rho0, "A - BK1")
    Pstar = solve_are(sys, cost).Pstar
    gen = _disturbances(dist, sys.n + sys.m)
    iterations = []
    failure = None
    for i in range(1, n_iter + 1):
        rho = spectral_radius(sys.A - sys.B @ K)
        if rho >= 1.0 - STABILITY_MARGIN:
            failure = Failure(iteration=i, cause="non-stabilizing")
            break
        P = policy_eval(sys, cost, K)
        dG = next(gen)
        iterations.append(
            RobustPiIterate(
                index=i,
                gain=K,
                value=P,
                are_residual=are_residual(sys, cost, P),
                rho_closed_loop=rho,
                stabilizing=True,
                delta_g_norm=float(la.norm(dG)),
                p_error_to_Pstar=float(la.norm(P - Pstar)),
            )
        )
        if i == n_iter:
            break
        Ghat = PartitionedQuadratic(sys.n, sys.m, g_of_p(sys, cost, P).full + dG)
        try:
            K = policy_improve(Ghat)
        except SingularBlockError:
            failure = Failure(iteration=i, cause="singular-uu")
            break
    final = iterations[-1].p_error_to_Pstar if iterations else None
    return RobustPiTrace(
        iterations=iterations,
        converged=failure is None,
        final_error_to_Pstar=final,
        failure=failure,
    )


def contraction_probe(sys, cost, radius, n_samples, seed):
    """Empirical contraction factor of one exact policy-iteration step.

    Samples value matrices uniformly from the Frobenius ball of the given
    radius around the Riccati solution, applies one improve-then-evaluate
    step, and returns the worst observed contraction ratio. Samples whose
    improved gain is not stabilizing are discarded and counted.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    Pstar = solve_are(sys, cost).Pstar
    rng = np.random.Generator(np.random.Philox(key=seed))
    dof = sys.n * (sys.n + 1) // 2
    samples = []
    n_discarded = 0
    for _ in range(n_samples):
        # uniform in the ball: uniform direction, radius ~ r * U^(1/dof)
        X = _sample_symmetric(rng, sys.n, radius * rng.uniform() ** (1.0 / dof))
        err_in = la.norm(X)
        if err_in == 0.0:
            n_discarded += 1
            continue
        P = Pstar + X
        try:
            K = policy_improve(g_of_p(sys, cost, P))
        except SingularBlockError:
            n_discarded += 1
            continue
        if spectral_radius(sys.A - sys.B @ K) >= 1.0 - STABILITY_MARGIN:
            n_discarded += 1
            continue
        P_next = policy_eval(sys, cost, K)
        err_out = la.norm(P_next - Pstar)
        samples.append(
            ProbeSample(p_error_in=float(err_in), p_error_out=float(err_out), ratio=float(err_out / err_in))
        )
    if not samples:
        raise DegenerateProbeError("all %d samples discarded" % n_samples)
    return {
        "sigma_hat": max(s.ratio for s in samples),
        "samples": samples,
        "n_discarded": n_discarded,
    }


def iss_gain_curve(sys, cost, K1, magnitudes, n_iter, trials_per_magnitude, seed):
    """Tail error and failure fraction of disturbed iteration per magnitude.

    A zero-magnitude sanity row is prepended. Trial t uses seed + t for every
    magnitude, so disturbance directions are shared across the curve and only
    the scale varies. The tail window is the last ceil(n_iter/4) iterations.
    """
    mags = list(magnitudes)
    if any(m <= 0 for m in mags) or any(b <= a for a, b in zip(mags, mags[1:])):
        raise ValueError("magnitudes must be strictly increasing and positive")
    if trials_per_magnitude < 1:
        raise ValueError("trials_per_magnitude must be >= 1")
    window = math.ceil(n_iter / 4)
    curve = []
    for mag in [0.0] + mags:
        sup_tail = None
        n_ok = 0
        for t in range(trials_per_magnitude):
            spec = DisturbanceSpec(kind="iid_bounded", magnitude=mag, seed=seed + t)
            trace = inexact_pi(sys, cost, K1, spec, n_iter)
            if trace.failure is not None:
                continue
            n_ok += 1
            tail = max(it.p_error_to_Pstar for it in trace.iterations[-window:])
            sup_tail = tail if sup_tail is None else max(sup_tail, tail)
        curve.append(
            IssPoint(
                magnitude=mag,
                sup_tail_error=sup_tail,
                fraction_no_failure=n_ok / trials_per_magnitude,
            )
        )
    return curve
