import numpy as np
import numpy.linalg as la
import pytest

from lqrpi.lqr import (
    AreSolution,
    CostParams,
    LinearSystem,
    PartitionedQuadratic,
    SingularBlockError,
    avg_cost,
    are_residual,
    exact_pi,
    g_of_p,
    h_operator,
    policy_eval,
    policy_improve,
    q_of_p,
    solve_are,
)
from lqrpi.matops import (
    DimensionError,
    NotStabilizingError,
    lyap_sum_oracle,
    spectral_radius,
    symmetrize,
)


def sec5_problem():
    sys = LinearSystem(
        A=[[0.95, 0.01, 0.0], [0.01, 0.95, 0.01], [0.0, 0.01, 0.95]],
        B=[[1.0, 0.1], [0.0, 0.1], [0.0, 0.1]],
        C=np.eye(3),
    )
    return sys, CostParams(S=np.eye(3), R=np.eye(2))


def scalar_problem(a=0.5, b=1.0, s=1.0, r=1.0):
    return LinearSystem(A=[[a]], B=[[b]], C=[[1.0]]), CostParams(S=[[s]], R=[[r]])


# scalar fixed point of p = a^2 p + s - (a b p)^2 / (r + b^2 p) at
# a=0.5, b=s=r=1, computed from the quadratic closed form
SCALAR_PSTAR = 1.1327822185373189
SCALAR_KSTAR = 0.2655644370746375


def test_linear_system_validation():
    sys, _ = sec5_problem()
    assert (sys.n, sys.m, sys.q) == (3, 2, 3)
    with pytest.raises(DimensionError):
        LinearSystem(A=np.ones((2, 3)), B=np.ones((2, 1)), C=np.ones((2, 1)))
    with pytest.raises(DimensionError):
        LinearSystem(A=np.eye(2), B=np.ones((3, 1)), C=np.ones((2, 1)))
    with pytest.raises(DimensionError):
        LinearSystem(A=np.eye(2), B=np.ones((2, 1)), C=np.ones((3, 1)))


def test_cost_params_validation():
    CostParams(S=np.zeros((2, 2)), R=np.eye(2))  # PSD S is fine
    with pytest.raises(ValueError):
        CostParams(S=np.diag([1.0, -1e-6]), R=np.eye(2))
    with pytest.raises(ValueError):
        CostParams(S=np.eye(2), R=np.diag([1.0, 0.0]))


def test_partitioned_quadratic_blocks():
    full = symmetrize(np.arange(25.0).reshape(5, 5))
    Gm = PartitionedQuadratic(3, 2, full)
    np.testing.assert_array_equal(Gm.xx, full[:3, :3])
    np.testing.assert_array_equal(Gm.ux, full[3:, :3])
    np.testing.assert_array_equal(Gm.uu, full[3:, 3:])
    with pytest.raises(DimensionError):
        PartitionedQuadratic(3, 2, np.zeros((4, 4)))
    with pytest.raises(DimensionError):
        PartitionedQuadratic(2, 2, np.triu(np.ones((4, 4))))


def test_g_of_p_closed_forms():
    # A = 0, B = 0: G(P) = blkdiag(S - P, R)
    sys = LinearSystem(A=[[0.0]], B=[[0.0]], C=[[1.0]])
    cost = CostParams(S=[[1.0]], R=[[1.0]])
    G = g_of_p(sys, cost, np.array([[3.0]]))
    np.testing.assert_allclose(G.full, [[-2.0, 0.0], [0.0, 1.0]])
    # P = 0 reduces both G and Q to blkdiag(S, R)
    sys5, cost5 = sec5_problem()
    np.testing.assert_allclose(
        g_of_p(sys5, cost5, np.zeros((3, 3))).full,
        np.block([[np.eye(3), np.zeros((3, 2))], [np.zeros((2, 3)), np.eye(2)]]),
    )
    # P = I: uu = R + B'B
    G5 = g_of_p(sys5, cost5, np.eye(3))
    np.testing.assert_allclose(G5.uu, [[2.0, 0.1], [0.1, 1.03]])


def test_q_differs_from_g_by_p_block():
    sys, cost = sec5_problem()
    rng = np.random.default_rng(5)
    for _ in range(10):
        P = symmetrize(rng.standard_normal((3, 3)))
        G = g_of_p(sys, cost, P).full
        Q = q_of_p(sys, cost, P).full
        diff = Q - G
        np.testing.assert_allclose(diff[:3, :3], P, atol=1e-13)
        assert np.abs(diff[3:, :]).max() <= 1e-13
        assert np.abs(diff[:, 3:]).max() <= 1e-13


def test_h_operator():
    full = symmetrize(np.arange(25.0).reshape(5, 5))
    Gm = PartitionedQuadratic(3, 2, full)
    # K = 0 picks out the xx block
    np.testing.assert_array_equal(h_operator(Gm, np.zeros((2, 3))), Gm.xx)
    # identity quadratic: H = I + K'K
    K = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]])
    np.testing.assert_allclose(
        h_operator(PartitionedQuadratic(3, 2, np.eye(5)), K), np.eye(3) + K.T @ K
    )
    with pytest.raises(DimensionError):
        h_operator(Gm, np.zeros((3, 2)))


def test_h_of_g_vanishes_at_evaluation_fixed_point():
    # H(G(P_K), K) = 0 is exactly the evaluation equation of K
    sys, cost = sec5_problem()
    rng = np.random.default_rng(13)
    for _ in range(10):
        K = 0.1 * rng.standard_normal((2, 3))
        if spectral_radius(sys.A - sys.B @ K) >= 1.0:
            continue
        P = policy_eval(sys, cost, K)
        H = h_operator(g_of_p(sys, cost, P), K)
        assert np.abs(H).max() <= 1e-9


def test_policy_eval_closed_forms():
    # zero closed loop (uncontrollable zero plant): P = S + K'RK for any K
    sys = LinearSystem(A=np.zeros((2, 2)), B=np.zeros((2, 2)), C=np.eye(2))
    cost = CostParams(S=np.diag([1.0, 2.0]), R=np.eye(2))
    K = np.array([[0.3, 0.0], [0.1, -0.2]])
    np.testing.assert_allclose(
        policy_eval(sys, cost, K), cost.S + K.T @ cost.R @ K, atol=1e-12
    )
    ssys, scost = scalar_problem()
    assert policy_eval(ssys, scost, [[0.0]])[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-13)
    # a = 0.5, k = 0.2: p = (s + r k^2) / (1 - (a - k)^2) = 1.04 / 0.91
    assert policy_eval(ssys, scost, [[0.2]])[0, 0] == pytest.approx(
        1.04 / 0.91, abs=1e-13
    )


def test_policy_eval_rejects_non_stabilizing():
    ssys, scost = scalar_problem(a=1.5)
    with pytest.raises(NotStabilizingError) as ei:
        policy_eval(ssys, scost, [[0.0]])
    assert ei.value.rho == pytest.approx(1.5)


def test_policy_eval_matches_series_oracle():
    sys, cost = sec5_problem()
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 10:
        K = 0.2 * rng.standard_normal((2, 3))
        if spectral_radius(sys.A - sys.B @ K) > 0.97:
            continue
        P = policy_eval(sys, cost, K)
        W = cost.S + K.T @ cost.R @ K
        P_series = lyap_sum_oracle(sys.A - sys.B @ K, W, 2000)
        assert la.norm(P - P_series) <= 1e-8
        checked += 1


def test_policy_improve():
    # uu = 2I halves ux
    ux = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    full = np.block([[np.zeros((3, 3)), ux.T], [ux, 2.0 * np.eye(2)]])
    K = policy_improve(PartitionedQuadratic(3, 2, full))
    np.testing.assert_allclose(K, 0.5 * ux)
    # zero ux gives the zero gain
    full0 = np.block(
        [[np.eye(3), np.zeros((3, 2))], [np.zeros((2, 3)), np.eye(2)]]
    )
    np.testing.assert_array_equal(
        policy_improve(PartitionedQuadratic(3, 2, full0)), np.zeros((2, 3))
    )


def test_policy_improve_rejects_singular_uu():
    full = np.block(
        [[np.eye(2), np.ones((2, 2))], [np.ones((2, 2)), np.diag([1.0, 0.0])]]
    )
    with pytest.raises(SingularBlockError):
        policy_improve(PartitionedQuadratic(2, 2, full))
    # indefinite uu fails the Cholesky path
    full_neg = np.block(
        [[np.eye(2), np.ones((2, 2))], [np.ones((2, 2)), np.diag([1.0, -1.0])]]
    )
    with pytest.raises(SingularBlockError):
        policy_improve(PartitionedQuadratic(2, 2, full_neg))


def test_exact_pi_scalar():
    sys, cost = scalar_problem()
    trace = exact_pi(sys, cost)
    assert trace.converged
    assert len(trace.iterations) <= 8
    last = trace.iterations[-1]
    assert last.value[0, 0] == pytest.approx(SCALAR_PSTAR, abs=1e-9)
    assert trace.iterations[0].value[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-13)
    assert all(it.stabilizing for it in trace.iterations)
    assert all(it.index == i + 1 for i, it in enumerate(trace.iterations))


def test_exact_pi_monotone_values():
    sys, cost = sec5_problem()
    trace = exact_pi(sys, cost)
    assert trace.converged
    values = trace.values
    for P_cur, P_next in zip(values, values[1:]):
        assert la.eigvalsh(P_cur - P_next).min() >= -1e-9


def test_exact_pi_fixed_point_terminates_immediately():
    sys, cost = sec5_problem()
    are = solve_are(sys, cost)
    trace = exact_pi(sys, cost, K1=are.Kstar)
    assert trace.converged
    assert len(trace.iterations) == 1


def test_exact_pi_rejects_non_stabilizing_start():
    sys, cost = scalar_problem(a=1.1)
    with pytest.raises(NotStabilizingError):
        exact_pi(sys, cost)  # K1 = 0 leaves the unstable A as the closed loop
    with pytest.raises(ValueError):
        exact_pi(*scalar_problem(), tol=0.0)


def test_solve_are_scalar_and_degenerate():
    sys, cost = scalar_problem()
    are = solve_are(sys, cost)
    assert are.Pstar[0, 0] == pytest.approx(SCALAR_PSTAR, abs=1e-9)
    assert are.Kstar[0, 0] == pytest.approx(SCALAR_KSTAR, abs=1e-9)
    assert are.residual <= 1e-10
    # A = 0: P* = S and K* = 0
    zsys = LinearSystem(A=np.zeros((2, 2)), B=np.eye(2), C=np.eye(2))
    zcost = CostParams(S=np.diag([1.0, 2.0]), R=np.eye(2))
    zare = solve_are(zsys, zcost)
    np.testing.assert_allclose(zare.Pstar, zcost.S, atol=1e-12)
    np.testing.assert_allclose(zare.Kstar, np.zeros((2, 2)), atol=1e-12)


def test_solve_are_sec5():
    sys, cost = sec5_problem()
    are = solve_are(sys, cost)
    assert isinstance(are, AreSolution)
    assert are.residual <= 1e-10
    assert spectral_radius(sys.A - sys.B @ are.Kstar) < 1.0
    assert la.eigvalsh(are.Pstar).min() > 0
    # the optimal pair is a fixed point of both operators
    np.testing.assert_allclose(
        policy_improve(g_of_p(sys, cost, are.Pstar)), are.Kstar, atol=1e-9
    )
    assert np.abs(h_operator(g_of_p(sys, cost, are.Pstar), are.Kstar)).max() <= 1e-9
    assert are_residual(sys, cost, are.Pstar) <= 1e-10


def test_avg_cost():
    P = np.diag([1.0, 2.0])
    assert avg_cost(np.eye(2), P) == pytest.approx(3.0)
    assert avg_cost(np.zeros((2, 2)), P) == 0.0
    C = np.array([[1.0], [1.0]])
    assert avg_cost(C, P) == pytest.approx(3.0)
    with pytest.raises(DimensionError):
        avg_cost(np.ones((3, 1)), P)
