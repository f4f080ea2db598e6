import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prsplit.counterexample import (
    DivergenceInstance,
    classify,
    classify_factor,
    divergence_threshold,
    iteration_factors,
    simulate,
    theta_scan,
)
from prsplit.splitting import PRConfig, run

PAIRS = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 2.0)]


def test_factor_examples():
    assert iteration_factors(DivergenceInstance(0, 0), 2.0) == (-1.0, 1.0)
    assert iteration_factors(DivergenceInstance(0, 0), 1.0) == (0.0, 1.0)
    assert iteration_factors(DivergenceInstance(1, 1), 4.0) == (-1.0, -1.0)


def test_threshold_examples():
    assert divergence_threshold(DivergenceInstance(0, 0)) == 2.0
    assert divergence_threshold(DivergenceInstance(1, 1)) == 4.0
    assert divergence_threshold(DivergenceInstance(0, 1)) == 2.0
    assert divergence_threshold(DivergenceInstance(0.5, 2)) == pytest.approx(3.0)


@given(bb=st.floats(0, 50))
def test_threshold_two_whenever_a_has_no_modulus(bb):
    assert divergence_threshold(DivergenceInstance(0.0, bb)) == 2.0


def test_instance_validation():
    with pytest.raises(ValueError):
        DivergenceInstance(1.0, 0.5)
    with pytest.raises(ValueError):
        DivergenceInstance(-0.1, 0.0)
    with pytest.raises(ValueError):
        DivergenceInstance(0, 0, block_dim=0)
    with pytest.raises(ValueError):
        iteration_factors(DivergenceInstance(), 0.0)


def test_resolvent_formulas(rng):
    for beta, bb in PAIRS:
        A, B = DivergenceInstance(beta, bb, block_dim=3).operators()
        x = rng.standard_normal(6)
        np.testing.assert_allclose(A.resolvent(1.0, x), x / (1 + beta), rtol=1e-15)
        expect = np.r_[np.zeros(3), x[3:] / (1 + bb)]
        np.testing.assert_allclose(B.resolvent(1.0, x), expect, rtol=1e-15)


def test_simulate_oscillation():
    sim = simulate(DivergenceInstance(0, 0), 2.0, [1.0, 1.0], 25)
    assert sim.classification == "oscillates"
    np.testing.assert_array_equal(sim.iterates[:, 0], (-1.0) ** np.arange(26))
    np.testing.assert_array_equal(sim.iterates[:, 1], 1.0)


def test_simulate_one_step_convergence():
    sim = simulate(DivergenceInstance(0, 0), 1.0, [1.0, 1.0], 5)
    assert sim.classification == "converges"
    np.testing.assert_array_equal(sim.iterates[1:], [[0.0, 1.0]] * 5)


def test_simulate_geometric_growth():
    sim = simulate(DivergenceInstance(1, 1), 4.5, [1.0, 1.0], 40)
    assert sim.factors == (-1.25, -1.25)
    assert sim.classification == "diverges"
    norms = np.linalg.norm(sim.iterates, axis=1)
    np.testing.assert_allclose(norms[1:] / norms[:-1], 1.25, rtol=1e-13)


@pytest.mark.parametrize("pair", PAIRS)
@pytest.mark.parametrize("offset", [-0.5, -1e-6, 0.0, 1e-6, 0.5])
def test_simulation_matches_factor_powers(pair, offset):
    inst = DivergenceInstance(*pair, block_dim=2)
    theta = divergence_threshold(inst) + offset
    x0 = np.random.default_rng(0).standard_normal(4)
    sim = simulate(inst, theta, x0, 200)
    assert sim.max_rel_error <= 1e-12


@pytest.mark.parametrize("pair", PAIRS)
def test_classification_flips_at_threshold(pair):
    inst = DivergenceInstance(*pair)
    thr = divergence_threshold(inst)
    f_below = iteration_factors(inst, thr - 1e-6)
    f_at = iteration_factors(inst, thr)
    assert min(f_below) > -1
    assert min(f_at) <= -1 + 1e-15
    assert classify(inst, thr - 1e-6) == "converges"
    assert classify(inst, thr) in ("oscillates", "diverges")
    assert classify(inst, thr + 1e-3) == "diverges"


def test_second_block_is_fixed_without_moduli():
    # with beta = beta_bar = 0 the second factor is 1 for every theta
    inst = DivergenceInstance(0, 0)
    for theta in (0.5, 2.0, 7.0):
        assert iteration_factors(inst, theta)[1] == 1.0
    assert classify_factor(1.0) == "converges"
    assert classify_factor(-1.0) == "oscillates"
    assert classify_factor(-1.0001) == "diverges"


def test_classify_ignores_zero_blocks():
    inst = DivergenceInstance(0, 0)
    assert classify(inst, 3.0, x0=[0.0, 1.0]) == "converges"
    assert classify(inst, 3.0, x0=[1.0, 0.0]) == "diverges"


@given(beta=st.floats(0, 3), extra=st.floats(0, 3), gamma=st.floats(0.1, 5))
def test_general_gamma_threshold_by_simulation(beta, extra, gamma):
    inst = DivergenceInstance(beta, beta + extra, gamma=gamma)
    thr = divergence_threshold(inst)
    gb, gbb = gamma * beta, gamma * (beta + extra)
    if gb + gbb > 0:
        assert thr == pytest.approx(min(2 + 2 * gb, 2 + 2 * (1 + gb * gbb) / (gb + gbb)))
    for theta, growing in ((0.98 * thr, False), (1.02 * thr, True)):
        sim = simulate(inst, theta, [1.0, 1.0], 60)
        assert sim.max_rel_error <= 1e-12
        norms = np.linalg.norm(sim.iterates, axis=1)
        if growing:
            assert norms[-1] > 5 * norms[0]
        else:
            assert np.all(norms <= norms[0] * (1 + 1e-12))


def test_uncertified_run_breaks_step_monotonicity():
    inst = DivergenceInstance(0.5, 2.0)
    A, B = inst.operators()
    theta = divergence_threshold(inst) + 0.5
    res = run(A, B, PRConfig(gamma=1.0, theta=theta, x0=np.ones(2), beta=0.5, max_iter=30))
    assert np.any(np.diff(res.trace["delta_x_norm"]) > 1e-12)


def test_theta_scan_rows():
    rows = theta_scan(DivergenceInstance(1, 1), np.arange(1.5, 4.51, 0.25))
    assert len(rows) == 13
    labels = [r["classification"] for r in rows]
    first_bad = next(i for i, lab in enumerate(labels) if lab != "converges")
    assert rows[first_bad]["theta"] == 4.0
    assert all(lab != "converges" for lab in labels[first_bad:])
    assert all(r["threshold"] == 4.0 for r in rows)


def test_solution_point_of_instance():
    assert np.array_equal(DivergenceInstance(0, 0).solution([3.0, 4.0]), [0.0, 4.0])
    assert np.array_equal(DivergenceInstance(0, 1).solution([3.0, 4.0]), [0.0, 0.0])
