"""Unit tests for the SO(3)/SE(3)/se(3) algebra layer."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from helpers import random_homvec, random_pose, random_twist, random_unit3
from se3obs import PreconditionFailed, se3

E1, E2, E3 = np.eye(3)

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)
vec6 = arrays(np.float64, 6, elements=finite)
mat4 = arrays(np.float64, (4, 4), elements=finite)


# ---------------------------------------------------------------------------
# hat / vee / wedge

def test_hat3_cross_product():
    assert np.allclose(se3.hat3(E1) @ E2, E3)
    w = np.array([0.3, -1.2, 2.0])
    y = np.array([1.0, 0.5, -0.7])
    assert np.allclose(se3.hat3(w) @ y, np.cross(w, y))


def test_hat3_zero():
    assert np.array_equal(se3.hat3(np.zeros(3)), np.zeros((3, 3)))


@given(vec3)
def test_vee3_roundtrip(w):
    assert np.abs(se3.vee3(se3.hat3(w)) - w).max() <= 1e-14


def test_vee3_rejects_non_antisymmetric():
    with pytest.raises(PreconditionFailed):
        se3.vee3(np.eye(3))


def test_wedge6_blocks():
    xi = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    m = se3.wedge6(xi)
    assert np.array_equal(m[:3, :3], se3.hat3(xi[:3]))
    assert np.array_equal(m[:3, 3], xi[3:])
    assert np.array_equal(m[3], np.zeros(4))
    assert np.array_equal(se3.wedge6(np.zeros(6)), np.zeros((4, 4)))


@given(vec6)
def test_vee6_roundtrip(xi):
    assert np.abs(se3.vee6(se3.wedge6(xi)) - xi).max() <= 1e-14


def test_vee6_rejects_bad_structure():
    m = np.zeros((4, 4))
    m[3, 0] = 1.0
    with pytest.raises(PreconditionFailed):
        se3.vee6(m)
    m = np.zeros((4, 4))
    m[0, 1] = m[1, 0] = 1.0  # symmetric, not antisymmetric
    with pytest.raises(PreconditionFailed):
        se3.vee6(m)


# ---------------------------------------------------------------------------
# transforms

def test_compose_inverse_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_pose(rng)
        assert np.abs(se3.compose(g, se3.inverse(g)) - np.eye(4)).max() < 1e-12
    assert np.array_equal(se3.inverse(se3.identity_pose()), np.eye(4))


def test_compose_pure_translations():
    g1 = se3.pose(np.eye(3), [1.0, 2.0, 3.0])
    g2 = se3.pose(np.eye(3), [-0.5, 0.0, 4.0])
    assert np.allclose(se3.compose(g1, g2)[:3, 3], [0.5, 2.0, 7.0])


def test_pose_rejects_non_rotation():
    with pytest.raises(PreconditionFailed):
        se3.pose(2.0 * np.eye(3), np.zeros(3))
    with pytest.raises(PreconditionFailed):
        se3.pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))  # det -1


def test_angle_axis_cases():
    u = random_unit3(np.random.default_rng(1))
    assert np.allclose(se3.angle_axis(0.0, u), np.eye(3))
    assert np.allclose(se3.angle_axis(np.pi, E1), np.diag([1.0, -1.0, -1.0]))
    R = se3.angle_axis(1.234, u)
    assert np.allclose(R @ u, u)
    with pytest.raises(PreconditionFailed):
        se3.angle_axis(1.0, [1.0, 1.0, 0.0])


def test_dist_identity_values():
    assert se3.dist_identity(se3.identity_pose()) == 0.0
    g = se3.pose(se3.angle_axis(np.pi, E1), np.zeros(3))
    assert abs(se3.dist_identity(g) - 2.0 * np.sqrt(2.0)) < 1e-12
    p = np.array([3.0, -4.0, 12.0])
    assert abs(se3.dist_identity(se3.pose(np.eye(3), p)) - 13.0) < 1e-12


# ---------------------------------------------------------------------------
# exponential map

def test_exp_zero_and_pure_translation():
    rng = np.random.default_rng(2)
    xi = random_twist(rng)
    assert np.array_equal(se3.exp_se3(xi, 0.0), np.eye(4))
    v = np.array([1.0, -2.0, 0.5])
    g = se3.exp_se3(np.concatenate([np.zeros(3), v]), 0.25)
    assert np.allclose(g, se3.pose(np.eye(3), 0.25 * v))


def test_exp_first_order_taylor():
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(10):
        xi = random_twist(rng)
        g = se3.exp_se3(xi, h)
        assert np.abs(g - (np.eye(4) + h * se3.wedge6(xi))).max() < 1e-10


def test_exp_one_parameter_subgroup():
    xi = np.array([0.4, -0.3, 0.9, 1.0, 0.0, -2.0])
    g = se3.compose(se3.exp_se3(xi, 0.7), se3.exp_se3(xi, 0.5))
    assert np.abs(g - se3.exp_se3(xi, 1.2)).max() < 1e-12


def test_exp_small_angle_branch_agrees_with_series_oracle():
    # both sides of the series/closed-form switch match a high-order Taylor
    # evaluation of exp(h xi^), so the branch introduces no discontinuity
    xi = np.concatenate([random_unit3(np.random.default_rng(4)), [0.1, 0.2, 0.3]])
    for h in (0.5e-6, 0.99e-6, 1.01e-6, 2e-6):
        X = se3.wedge6(xi) * h
        oracle = np.eye(4) + X + X @ X / 2.0 + X @ X @ X / 6.0
        assert np.abs(se3.exp_se3(xi, h) - oracle).max() < 1e-15


def test_exp_matches_series_reference():
    # brute-force matrix exponential by scaling and squaring of the Taylor
    # series, as an independent oracle
    rng = np.random.default_rng(5)
    for _ in range(10):
        xi = random_twist(rng)
        X = se3.wedge6(xi) * 0.3 / 1024.0
        E = np.eye(4)
        term = np.eye(4)
        for k in range(1, 20):
            term = term @ X / k
            E = E + term
        for _ in range(10):
            E = E @ E
        assert np.abs(se3.exp_se3(xi, 0.3) - E).max() < 1e-11


def test_orthonormalize():
    rng = np.random.default_rng(6)
    R = random_pose(rng)[:3, :3]
    assert np.abs(se3.orthonormalize(R) - R).max() < 1e-15
    noisy = R + 1e-3 * rng.normal(size=(3, 3))
    P = se3.orthonormalize(noisy)
    assert np.linalg.norm(P.T @ P - np.eye(3)) < 1e-12
    assert np.abs(P - R).max() < 5e-3


def test_long_composition_drift():
    # one million group compositions with the periodic re-projection policy
    # keep the rotation block orthonormal to 1e-9
    rng = np.random.default_rng(7)
    steps = [se3.exp_se3(random_twist(rng), 1e-3) for _ in range(10)]
    g = se3.identity_pose()
    for i in range(1_000_000):
        g = g @ steps[i % 10]
        if (i + 1) % 1000 == 0:
            R = g[:3, :3]
            if np.linalg.norm(R.T @ R - np.eye(3)) > se3.ORTHO_RESIDUAL:
                g[:3, :3] = se3.orthonormalize(R)
    R = g[:3, :3]
    assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-9
    assert np.array_equal(g[3], [0.0, 0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# Lie bracket

def test_bracket_matches_matrix_commutator():
    rng = np.random.default_rng(40)
    for _ in range(100):
        x, y = random_twist(rng), random_twist(rng)
        lhs = se3.wedge6(se3.bracket(x, y))
        rhs = se3.wedge6(x) @ se3.wedge6(y) - se3.wedge6(y) @ se3.wedge6(x)
        assert np.abs(lhs - rhs).max() < 1e-13


def test_bracket_antisymmetry_and_jacobi():
    rng = np.random.default_rng(41)
    for _ in range(50):
        x, y, z = (random_twist(rng) for _ in range(3))
        assert np.abs(se3.bracket(x, y) + se3.bracket(y, x)).max() < 1e-14
        cyc = se3.bracket(x, se3.bracket(y, z)) \
            + se3.bracket(y, se3.bracket(z, x)) \
            + se3.bracket(z, se3.bracket(x, y))
        assert np.abs(cyc).max() < 1e-12


def test_bracket_zero_and_self():
    x = np.array([0.3, -0.7, 1.1, 2.0, 0.5, -1.3])
    assert np.array_equal(se3.bracket(np.zeros(6), x), np.zeros(6))
    assert np.array_equal(se3.bracket(x, x), np.zeros(6))


def test_bracket_infinitesimal_adjoint():
    # d/ds Ad_{exp(s x)} y at s = 0 equals [x, y]
    rng = np.random.default_rng(42)
    for _ in range(20):
        x, y = random_twist(rng), random_twist(rng)
        s = 1e-6
        plus = se3.adjoint(se3.exp_se3(x, s)) @ y
        minus = se3.adjoint(se3.exp_se3(x, -s)) @ y
        fd = (plus - minus) / (2.0 * s)
        assert np.abs(fd - se3.bracket(x, y)).max() < 1e-7


# ---------------------------------------------------------------------------
# adjoints

def test_adjoint_identity():
    assert np.array_equal(se3.adjoint(se3.identity_pose()), np.eye(6))


def test_adjoint_defining_identity():
    rng = np.random.default_rng(8)
    for _ in range(50):
        g = random_pose(rng)
        x = random_twist(rng)
        lhs = se3.wedge6(se3.adjoint(g) @ x)
        rhs = g @ se3.wedge6(x) @ se3.inverse(g)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_adjoint_homomorphism():
    rng = np.random.default_rng(9)
    for _ in range(100):
        g1, g2 = random_pose(rng), random_pose(rng)
        lhs = se3.adjoint(g1) @ se3.adjoint(g2)
        rhs = se3.adjoint(se3.compose(g1, g2))
        assert np.abs(lhs - rhs).max() < 1e-12


def test_adjoint_star_is_transpose():
    rng = np.random.default_rng(10)
    for _ in range(20):
        g = random_pose(rng)
        assert np.abs(se3.adjoint_star(g) - se3.adjoint(g).T).max() == 0.0


def test_adjoint_star_hermitian_adjoint_identity():
    # <<Y, g X g^-1>> == <<(W^-1 Ad*_g W y)^, X>> with W the twist metric:
    # the co-adjoint is the metric adjoint of the adjoint action
    rng = np.random.default_rng(11)
    W = se3.TWIST_METRIC
    Winv = np.linalg.inv(W)
    for _ in range(100):
        g = random_pose(rng)
        x, y = random_twist(rng), random_twist(rng)
        X, Y = se3.wedge6(x), se3.wedge6(y)
        lhs = np.trace(Y.T @ (g @ X @ se3.inverse(g)))
        y_star = Winv @ se3.adjoint_star(g) @ W @ y
        rhs = np.trace(se3.wedge6(y_star).T @ X)
        assert abs(lhs - rhs) < 1e-12


def test_psi_intertwines_congruence_with_coadjoint():
    # psi(g^T X g^-T) = Ad*_g psi(X) for X in se(3)
    rng = np.random.default_rng(12)
    for _ in range(100):
        g = random_pose(rng)
        X = se3.wedge6(random_twist(rng))
        lhs = se3.psi(g.T @ X @ se3.inverse(g).T)
        rhs = se3.adjoint_star(g) @ se3.psi(X)
        assert np.abs(lhs - rhs).max() < 1e-12


# ---------------------------------------------------------------------------
# projections / twist extraction

def test_proj_antisym():
    sym = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    assert np.array_equal(se3.proj_antisym(sym), np.zeros((3, 3)))
    rng = np.random.default_rng(13)
    A = rng.normal(size=(3, 3))
    P = se3.proj_antisym(A)
    assert np.abs(P + P.T).max() < 1e-15


def test_proj_se3_fixes_se3():
    X = se3.wedge6(np.array([1.0, -2.0, 0.5, 3.0, 0.0, 1.0]))
    assert np.array_equal(se3.proj_se3(X), X)


@given(mat4, vec6)
def test_proj_se3_inner_product_identity(A, y):
    # <<A, X>> = <<proj(A), X>> for all X in se(3)
    X = se3.wedge6(y)
    lhs = np.trace(A.T @ X)
    rhs = np.trace(se3.proj_se3(A).T @ X)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_psi_a_cases():
    rng = np.random.default_rng(14)
    w = rng.normal(size=3)
    assert np.allclose(se3.psi_a(se3.hat3(w)), w)
    assert np.array_equal(se3.psi_a(np.eye(3)), np.zeros(3))


@given(mat4, vec6)
def test_psi_gradient_pairing(A, y):
    # <<A, y^>> = 2 psi(A)^T y
    lhs = np.trace(A.T @ se3.wedge6(y))
    rhs = 2.0 * se3.psi(A) @ y
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_psi_b_and_metric():
    rng = np.random.default_rng(15)
    A = rng.normal(size=(4, 4))
    full = se3.psi_b(A)
    weighted = se3.psi(A)
    assert np.allclose(weighted, se3.TWIST_METRIC @ full)
    assert np.allclose(se3.psi(A), se3.psi(se3.proj_se3(A)))


# ---------------------------------------------------------------------------
# homogeneous wedge product

def test_hom_wedge_antisymmetry():
    rng = np.random.default_rng(16)
    for _ in range(50):
        b, r = random_homvec(rng), random_homvec(rng)
        assert np.array_equal(se3.hom_wedge(r, r), np.zeros(6))
        assert np.array_equal(se3.hom_wedge(b, r), -se3.hom_wedge(r, b))


def test_hom_wedge_group_equivariance():
    # (g b) ^ (g r) = Ad*_{g^-1} (b ^ r): the wedge of transformed vectors
    # is the co-adjoint image of the original wedge
    rng = np.random.default_rng(17)
    for _ in range(100):
        g = random_pose(rng)
        b, r = random_homvec(rng), random_homvec(rng)
        lhs = se3.hom_wedge(g @ b, g @ r)
        rhs = se3.adjoint_star(se3.inverse(g)) @ se3.hom_wedge(b, r)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_hom_wedge_equivariance_operator_form():
    # same identity at the matrix level, with the metric-weighted operator
    # representation of the co-adjoint:
    #   proj_se3(g^-T X g^T) = ((W^-1 Ad*_{g^-1} W) vee6(X))^
    rng = np.random.default_rng(23)
    Wm = se3.TWIST_METRIC
    Wi = np.linalg.inv(Wm)
    for _ in range(100):
        g = random_pose(rng)
        b, r = random_homvec(rng), random_homvec(rng)
        gi = se3.inverse(g)
        X = se3.wedge6(se3.hom_wedge(b, r))
        lhs = se3.proj_se3(gi.T @ X @ g.T)
        rhs = se3.wedge6(Wi @ se3.adjoint_star(gi) @ Wm @ se3.vee6(X))
        assert np.abs(lhs - rhs).max() < 1e-12


def test_hom_wedge_psi_rank_one_identity():
    # psi((I - g) r r^T) = (g r) ^ r / 2
    rng = np.random.default_rng(18)
    for _ in range(100):
        g = random_pose(rng)
        r = random_homvec(rng)
        lhs = se3.psi((np.eye(4) - g) @ np.outer(r, r))
        rhs = 0.5 * se3.hom_wedge(g @ r, r)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_hom_wedge_sum_matches_loop():
    rng = np.random.default_rng(19)
    k = rng.uniform(0.5, 2.0, size=7)
    B = np.stack([random_homvec(rng) for _ in range(7)])
    R = np.stack([random_homvec(rng) for _ in range(7)])
    loop = sum(k[i] * se3.hom_wedge(B[i], R[i]) for i in range(7))
    assert np.abs(se3.hom_wedge_sum(k, B, R) - loop).max() < 1e-13


# ---------------------------------------------------------------------------
# matrices with zero bottom row

def test_zero_bottom_row_projection_identity():
    # P(g M) = P(g^-T M) for M with zero bottom row
    rng = np.random.default_rng(20)
    for _ in range(100):
        g = random_pose(rng)
        M = rng.normal(size=(4, 4))
        M[3] = 0.0
        lhs = se3.proj_se3(g @ M)
        rhs = se3.proj_se3(se3.inverse(g).T @ M)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_zero_bottom_row_trace_invariance():
    # tr(g^T g M Mbar^T) = tr(M Mbar^T) for M, Mbar with zero bottom row
    rng = np.random.default_rng(21)
    for _ in range(100):
        g = random_pose(rng)
        M = rng.normal(size=(4, 4))
        Mbar = rng.normal(size=(4, 4))
        M[3] = Mbar[3] = 0.0
        lhs = np.trace(g.T @ g @ M @ Mbar.T)
        rhs = np.trace(M @ Mbar.T)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(rhs))


def test_bordered_matrix_three_factor_decomposition():
    # [[A, b], [b^T, d]] = [[I, b/d], [0, 1]] diag(A - b b^T/d, d)
    #                      [[I, 0], [b^T/d, 1]]
    rng = np.random.default_rng(22)
    for _ in range(50):
        A = rng.normal(size=(3, 3))
        A = A + A.T
        b = rng.normal(size=3)
        d = rng.uniform(0.2, 5.0)
        full = np.zeros((4, 4))
        full[:3, :3] = A
        full[:3, 3] = b
        full[3, :3] = b
        full[3, 3] = d
        left = np.eye(4)
        left[:3, 3] = b / d
        mid = np.zeros((4, 4))
        mid[:3, :3] = A - np.outer(b, b) / d
        mid[3, 3] = d
        right = np.eye(4)
        right[3, :3] = b / d
        assert np.abs(left @ mid @ right - full).max() < 1e-10
