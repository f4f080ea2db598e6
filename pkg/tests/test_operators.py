import numpy as np
import pytest
import scipy.sparse
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import scalar_l1_prox, stacked_least_squares
from prsplit.operators import (
    AffineOperator,
    LeastSquaresGradient,
    ScaledIdentity,
    ShiftedOperator,
    SubspaceNormalCone,
    WeightedL1Subdifferential,
    ZeroOperator,
    resolvent_least_squares,
    resolvent_shifted,
    resolvent_weighted_l1,
    soft_threshold,
    verify_inclusion,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
gammas = st.floats(0.05, 5.0)


def abs_value():
    return WeightedL1Subdifferential([1.0])


# --- shifted resolvent ----------------------------------------------------------


def test_shifted_zero_operator():
    assert resolvent_shifted(ZeroOperator(1), 1.0, 1.0, np.array([2.0]))[0] == pytest.approx(1.0)


def test_shifted_identity_without_shift():
    assert resolvent_shifted(ScaledIdentity(1.0), 0.0, 1.0, np.array([4.0]))[0] == pytest.approx(2.0)


def test_shifted_abs_against_grid():
    u = resolvent_shifted(abs_value(), 1.0, 1.0, np.array([4.0]))[0]
    assert u == pytest.approx(1.5)
    # brute force: minimize |u| + u^2/2 + (u - 4)^2/2 on a fine grid
    grid = np.linspace(-5, 5, 200001)
    obj = np.abs(grid) + 0.5 * grid**2 + 0.5 * (grid - 4.0) ** 2
    assert u == pytest.approx(grid[np.argmin(obj)], abs=1e-4)


def test_shifted_rejects_nonpositive_denominator():
    with pytest.raises(ValueError):
        resolvent_shifted(ZeroOperator(1), -1.0, 1.0, np.array([1.0]))
    with pytest.raises(ValueError):
        resolvent_shifted(ZeroOperator(1), -2.0, 1.0, np.array([1.0]))


def test_shifted_operator_rejects_nonmonotone():
    with pytest.raises(ValueError):
        ShiftedOperator(ScaledIdentity(0.5), -1.0)
    assert ShiftedOperator(ScaledIdentity(0.5), -0.5).modulus == 0.0


# --- least squares ---------------------------------------------------------------


def test_least_squares_scalar():
    assert resolvent_least_squares(np.array([[1.0]]), [0.0], 0.0, 1.0, np.array([2.0]))[0] == pytest.approx(1.0)


def test_least_squares_identity():
    u = resolvent_least_squares(np.eye(2), [1.0, 1.0], 0.0, 1.0, np.zeros(2))
    np.testing.assert_allclose(u, [0.5, 0.5])


def test_least_squares_random_matches_stacked_solve(rng):
    for _ in range(20):
        C = rng.standard_normal((5, 3))
        b, x = rng.standard_normal(5), rng.standard_normal(3)
        shift, gamma = rng.uniform(0, 0.5), rng.uniform(0.1, 1.5)
        u = resolvent_least_squares(C, b, shift, gamma, x)
        np.testing.assert_allclose(u, stacked_least_squares(C, b, shift, gamma, x), atol=1e-10)


def test_least_squares_rejects_indefinite():
    C = np.diag([1.0, 0.1])
    # lambda_min = 0.01; shift 2 with gamma 1 makes I + gamma(C^T C - 2I) indefinite
    with pytest.raises(ValueError):
        resolvent_least_squares(C, [0.0, 0.0], 2.0, 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        LeastSquaresGradient(C, [0.0, 0.0], shift=0.5)


def test_least_squares_sparse_and_dense_agree(rng):
    C = scipy.sparse.random(30, 10, density=0.4, random_state=1, format="csr") + scipy.sparse.eye(30, 10)
    b, x = rng.standard_normal(30), rng.standard_normal(10)
    op_sparse = LeastSquaresGradient(C, b, 0.0, gammas=(0.7,))
    op_dense = LeastSquaresGradient(C.toarray(), b, 0.0)
    np.testing.assert_allclose(op_sparse.resolvent(0.7, x), op_dense.resolvent(0.7, x), rtol=1e-12)


def test_least_squares_factor_cache_is_per_gamma(rng):
    C = rng.standard_normal((6, 4))
    op = LeastSquaresGradient(C, rng.standard_normal(6), gammas=(1.0,))
    assert set(op._factors) == {1.0}
    x = rng.standard_normal(4)
    op.resolvent(0.3, x)
    assert set(op._factors) == {1.0, 0.3}
    np.testing.assert_allclose(op.resolvent(0.3, x), resolvent_least_squares(C, op.b, 0.0, 0.3, x))


# --- weighted l1 ------------------------------------------------------------------


def test_weighted_l1_examples():
    assert resolvent_weighted_l1([1.0], 0.0, 1.0, np.array([2.0]))[0] == pytest.approx(1.0)
    assert resolvent_weighted_l1([1.0], 0.0, 1.0, np.array([0.5]))[0] == 0.0
    u = resolvent_weighted_l1([2.0], 1.0, 1.0, np.array([6.0]))[0]
    assert u == pytest.approx(2.0)
    # 0 in gamma (W sign(u) + shift u) + u - x
    assert 1.0 * (2.0 * np.sign(u) + 1.0 * u) + u - 6.0 == pytest.approx(0.0)


def test_weighted_l1_rejects_negative_weight():
    with pytest.raises(ValueError):
        resolvent_weighted_l1([1.0, -0.1], 0.0, 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        WeightedL1Subdifferential([-1.0])


@given(w=st.floats(0, 3), shift=st.floats(-0.2, 2), gamma=gammas, x=finite)
def test_weighted_l1_matches_scalar_minimization(w, shift, gamma, x):
    if 1 + gamma * shift <= 0.05:
        return
    u = resolvent_weighted_l1([w], shift, gamma, np.array([x]))[0]
    assert u == pytest.approx(scalar_l1_prox(w, shift, gamma, x), abs=1e-10)


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold([-3.0, -0.5, 0.0, 0.5, 3.0], 1.0),
                                  [-2.0, 0.0, 0.0, 0.0, 2.0])


# --- inclusion --------------------------------------------------------------------


def test_verify_inclusion_examples():
    I = ScaledIdentity(1.0)
    assert verify_inclusion(I, np.array([1.0]), np.array([1.0]))
    assert not verify_inclusion(I, np.array([1.0]), np.array([2.0]))
    assert verify_inclusion(abs_value(), np.array([0.0]), np.array([0.7]))
    assert not verify_inclusion(abs_value(), np.array([0.0]), np.array([1.3]))
    assert verify_inclusion(abs_value(), np.array([2.0]), np.array([1.0]))


def test_normal_cone_inclusion():
    N = SubspaceNormalCone([True, False])
    assert verify_inclusion(N, np.array([0.0, 3.0]), np.array([5.0, 0.0]))
    assert not verify_inclusion(N, np.array([0.0, 3.0]), np.array([0.0, 1.0]))
    assert not verify_inclusion(N, np.array([1.0, 3.0]), np.array([0.0, 0.0]))


# --- properties over every concrete operator ------------------------------------


def _operators(seed=0):
    rng = np.random.default_rng(seed)
    n = 4
    C = rng.standard_normal((7, n))
    alpha = float(np.linalg.eigvalsh(C.T @ C)[0])
    M = rng.standard_normal((n, n))
    M = M @ M.T + 0.3 * np.eye(n) + (M - M.T)
    return {
        "zero": ZeroOperator(n),
        "identity": ScaledIdentity(2.0, n),
        "affine": AffineOperator(M, rng.standard_normal(n)),
        "l1": WeightedL1Subdifferential(rng.uniform(0, 1, n), 0.3),
        "least_squares": LeastSquaresGradient(C, rng.standard_normal(7), alpha / 2),
        "normal_cone": SubspaceNormalCone([True, False, True, False]),
        "shifted_cone": ShiftedOperator(SubspaceNormalCone([True, True, False, False]), 0.7),
        "shifted_ls": ShiftedOperator(LeastSquaresGradient(C, rng.standard_normal(7)), -alpha / 2),
    }


OPS = _operators()


def _assume_defined(op, gamma):
    # the shift identity needs 1 + gamma * shift > 0
    assume(1 + gamma * getattr(op, "shift", 0.0) > 0 or not isinstance(op, ShiftedOperator))


vec4 = arrays(np.float64, 4, elements=finite)


@pytest.mark.parametrize("name", sorted(OPS))
@given(x=vec4, y=vec4, gamma=gammas)
def test_resolvent_nonexpansive(name, x, y, gamma):
    op = OPS[name]
    _assume_defined(op, gamma)
    d = np.linalg.norm(op.resolvent(gamma, x) - op.resolvent(gamma, y))
    assert d <= np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12


@pytest.mark.parametrize("name", sorted(OPS))
@given(x=vec4, gamma=gammas)
def test_resolvent_fixed_point_identity(name, x, gamma):
    op = OPS[name]
    _assume_defined(op, gamma)
    u = op.resolvent(gamma, x)
    t = (x - u) / gamma
    assert verify_inclusion(op, u, t, tol=1e-8 * (1 + np.linalg.norm(x)), gamma=gamma)


@pytest.mark.parametrize("name", sorted(OPS))
def test_strong_monotonicity_on_graph(name, rng):
    op = OPS[name]
    Z, T = op.graph_sample(rng, 300, 4)
    for z, t in zip(Z, T):
        assert verify_inclusion(op, z, t, tol=1e-8 * (1 + np.linalg.norm(z) + np.linalg.norm(t)))
    i, j = rng.integers(0, 300, (2, 2000))
    dz, dt = Z[i] - Z[j], T[i] - T[j]
    lhs = np.einsum("ij,ij->i", dt, dz)
    rhs = op.modulus * np.einsum("ij,ij->i", dz, dz)
    assert np.all(lhs >= rhs - 1e-9 * (1 + np.abs(lhs)))


def test_shifted_matches_directly_assembled(rng):
    C = rng.standard_normal((9, 4))
    b = rng.standard_normal(9)
    alpha = float(np.linalg.eigvalsh(C.T @ C)[0])
    w = rng.uniform(0, 1, 4)
    for shift in (0.0, alpha / 3, alpha):
        direct_f = LeastSquaresGradient(C, b, shift)
        via_f = ShiftedOperator(LeastSquaresGradient(C, b), -shift)
        direct_g = WeightedL1Subdifferential(w, shift)
        via_g = ShiftedOperator(WeightedL1Subdifferential(w), shift)
        for _ in range(10):
            x = rng.standard_normal(4) * 3
            # keep 1 - g * shift > 0 for the shifted form
            g = rng.uniform(0.1, 0.9) / max(alpha, 1.0)
            a, c = direct_f.resolvent(g, x), via_f.resolvent(g, x)
            assert np.linalg.norm(a - c) <= 1e-10 * np.linalg.norm(a)
            a, c = direct_g.resolvent(g, x), via_g.resolvent(g, x)
            assert np.linalg.norm(a - c) <= 1e-10 * max(np.linalg.norm(a), 1e-300)


def test_affine_modulus_validation(rng):
    M = np.diag([1.0, 2.0])
    assert AffineOperator(M).modulus == pytest.approx(1.0)
    with pytest.raises(ValueError):
        AffineOperator(M, modulus=1.5)
    with pytest.raises(ValueError):
        AffineOperator(-M)


def test_shifted_resolvent_undefined_for_large_gamma(rng):
    C = rng.standard_normal((6, 3))
    op = ShiftedOperator(LeastSquaresGradient(C, np.zeros(6)), -0.5 * np.linalg.eigvalsh(C.T @ C)[0])
    with pytest.raises(ValueError):
        op.resolvent(-2.0 / op.shift, np.ones(3))


def test_set_valued_has_no_point_eval():
    with pytest.raises(TypeError):
        abs_value().point_eval(np.zeros(1))


@given(x=arrays(float, 6, elements=finite), w=arrays(float, 6, elements=st.floats(0, 3)), gamma=gammas)
def test_moreau_decomposition_l1(x, w, gamma):
    # x splits into the prox of gamma*||W.||_1 and the projection onto the dual box
    op = WeightedL1Subdifferential(w)
    box = np.clip(x, -gamma * w, gamma * w)
    np.testing.assert_allclose(op.resolvent(gamma, x) + box, x, rtol=0, atol=1e-12 * (1 + np.abs(x).max()))


@given(x=arrays(float, 4, elements=finite), gamma=gammas)
def test_moreau_decomposition_linear(x, gamma):
    # J_{gM} + J_{(gM)^{-1}} = I for a monotone linear map M
    M = np.array([[2.0, 1.0, 0, 0], [-1.0, 1.0, 0, 0], [0, 0, 0.5, 0], [0, 0, 0, 3.0]])
    op = AffineOperator(M, np.zeros(4))
    inv_part = np.linalg.solve(np.eye(4) + np.linalg.inv(gamma * M), x)
    np.testing.assert_allclose(op.resolvent(gamma, x) + inv_part, x, rtol=1e-10, atol=1e-10)
