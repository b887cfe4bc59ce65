from itertools import combinations

import numpy as np
import pytest

import hybridid as hi
from hybridid.dictionary import DesignMatrix, build_design_matrix, normalize_columns
from hybridid.errors import InseparableTransitionError, NoConsensusError
from hybridid.solvers import (
    SolverConfig,
    resolve_epsilon,
    solve_coefficient_sparse,
    solve_residual_sparse,
    solve_sparse_logistic,
)

from conftest import lstsq_fit


def as_dm(Phi, names=None):
    Phi = np.asarray(Phi, float)
    names = names or [f"c{j}" for j in range(Phi.shape[1])]
    return DesignMatrix(Phi, names)


# ---------------------------------------------------------------------------
# residual-sparse


def test_single_subsystem_noiseless():
    rng = np.random.default_rng(0)
    Phi = rng.normal(size=(40, 3))
    W_true = np.array([[1.0, 0.0], [-2.0, 0.5], [0.0, 3.0]])
    Y = Phi @ W_true
    split = solve_residual_sparse(as_dm(Phi), Y, SolverConfig(epsilon=1e-10))
    assert split.explained.all()
    assert np.allclose(split.Z, 0.0, atol=1e-9)
    assert np.allclose(split.W, W_true, atol=1e-9)


def test_thermostat_consensus_matches_truth_rows(thermostat_case):
    data, truth, modes, cfg = thermostat_case
    dm = normalize_columns(build_design_matrix(data, truth.dictionary_spec))
    Y = data.targets()
    split = solve_residual_sparse(dm, Y, cfg)
    on_rows = modes[: data.n_transitions] == 1
    assert np.array_equal(split.explained, on_rows)
    # oracle: plain least squares on the generator's true heater-on rows
    W_oracle = lstsq_fit(dm.values[on_rows], Y[on_rows])
    W = dm.denormalize_coefficients(W_oracle)
    assert np.allclose(W.ravel(), [0.3, 0.99], atol=1e-9)
    assert np.allclose(dm.denormalize_coefficients(split.W).ravel(), [0.3, 0.99], atol=1e-9)


def test_two_outlier_rows_brute_force():
    rng = np.random.default_rng(5)
    y = rng.uniform(0.5, 3.0, size=10)
    target = 2.0 * y
    outliers = np.array([2, 7])
    target[outliers] += 5.0
    Phi = np.column_stack([np.ones(10), y])
    Y = target[:, None]

    # oracle: best 2-row outlier subset by exhaustive search
    best = min(
        combinations(range(10), 2),
        key=lambda pair: float(
            np.sum(
                (np.delete(Y, pair, axis=0)
                 - np.delete(Phi, pair, axis=0)
                 @ lstsq_fit(np.delete(Phi, pair, axis=0), np.delete(Y, pair, axis=0))) ** 2
            )
        ),
    )
    assert sorted(best) == sorted(outliers)

    split = solve_residual_sparse(as_dm(Phi), Y, SolverConfig(epsilon=1e-8))
    assert np.array_equal(np.flatnonzero(~split.explained), outliers)
    assert np.allclose(split.Z[outliers, 0], 5.0, atol=1e-8)


def test_majority_exactness_random_instances():
    # noiseless two-mode data with a strict majority: the explained set is
    # exactly the majority rows and W matches the per-segment LS oracle
    for M, seed in [(30, 0), (80, 1), (200, 2), (200, 3)]:
        rng = np.random.default_rng(seed)
        share = rng.uniform(0.55, 0.8)
        labels = (rng.random(M) >= share).astype(int)   # 0 = majority mode
        maps = [(rng.uniform(0.5, 0.95), rng.uniform(0.3, 1.2)),
                (rng.uniform(-0.6, 0.3), rng.uniform(1.5, 2.5))]
        y = np.zeros(M + 1)
        y[0] = rng.uniform(0.5, 2.0)
        for t in range(M):
            a, b = maps[labels[t]]
            y[t + 1] = a * y[t] + b
        Phi = np.column_stack([np.ones(M), y[:M]])
        Y = y[1:][:, None]
        split = solve_residual_sparse(as_dm(Phi), Y, SolverConfig(epsilon=1e-9))
        majority = labels == 0
        assert np.array_equal(split.explained, majority), f"M={M} seed={seed}"
        W_oracle = lstsq_fit(Phi[majority], Y[majority])
        assert np.allclose(split.W, W_oracle, atol=1e-9)


def test_no_consensus_error():
    # alternating inconsistent rows: nothing explains min_segment at eps=0-ish
    Phi = np.ones((6, 1))
    Y = np.array([[0.0], [10.0], [20.0], [30.0], [40.0], [50.0]])
    with pytest.raises(NoConsensusError):
        solve_residual_sparse(as_dm(Phi), Y, SolverConfig(epsilon=1e-12))


def test_nonconverged_iterate_still_returned():
    data, truth, modes = __import__("hybridid").generate_benchmark("thermostat", steps=120)
    from hybridid.dictionary import build_design_matrix, normalize_columns

    dm = normalize_columns(build_design_matrix(data, truth.dictionary_spec))
    cfg = SolverConfig(epsilon=1e-6, max_iters=1)   # too few reweighting rounds
    split = solve_residual_sparse(dm, data.targets(), cfg)
    assert split.explained.any()          # best iterate is still usable
    assert split.converged in (True, False)


def test_default_epsilon_from_global_fit():
    rng = np.random.default_rng(1)
    Phi = rng.normal(size=(30, 2))
    Y = Phi @ np.array([[1.0], [2.0]]) + rng.normal(0, 0.1, size=(30, 1))
    cfg = SolverConfig()
    eps = resolve_epsilon(as_dm(Phi), Y, cfg)
    resid = np.abs(Y - Phi @ lstsq_fit(Phi, Y))
    assert eps == pytest.approx(3.0 * np.median(resid))


def test_scaling_equivariance(thermostat_case):
    data, truth, modes, cfg = thermostat_case
    dm = normalize_columns(build_design_matrix(data, truth.dictionary_spec))
    Y = data.targets()
    c = 7.5
    a = solve_residual_sparse(dm, Y, cfg)
    b = solve_residual_sparse(
        dm, c * Y, SolverConfig(epsilon=cfg.epsilon * c, lambda_w=cfg.lambda_w * c)
    )
    assert np.array_equal(a.explained, b.explained)
    assert np.allclose(c * a.W, b.W, rtol=1e-9)
    Wa = solve_coefficient_sparse(dm, Y, cfg)
    Wb = solve_coefficient_sparse(
        dm, c * Y, SolverConfig(epsilon=cfg.epsilon, lambda_w=cfg.lambda_w * c)
    )
    assert np.allclose(c * Wa, Wb, rtol=1e-9)


# ---------------------------------------------------------------------------
# coefficient-sparse


def _decay_series(a=0.5, y0=2.0, n=40):
    y = y0 * a ** np.arange(n)
    return y


def test_exact_support_recovery():
    y = _decay_series()
    Phi = np.column_stack([np.ones(39), y[:39], y[:39] ** 2])
    target = y[1:][:, None]
    W = solve_coefficient_sparse(as_dm(Phi, ["1", "y1", "y1^2"]), target,
                                 SolverConfig(lambda_w=0.01))
    assert np.allclose(W.ravel(), [0.0, 0.5, 0.0], atol=1e-12)
    # oracle: unrestricted least squares already has this support
    W_ls = lstsq_fit(Phi, target)
    assert np.allclose(W_ls.ravel(), [0.0, 0.5, 0.0], atol=1e-10)


def test_zero_target_gives_zero_model():
    Phi = np.column_stack([np.ones(10), np.arange(10.0)])
    W = solve_coefficient_sparse(as_dm(Phi), np.zeros((10, 1)), SolverConfig(lambda_w=0.1))
    assert np.allclose(W, 0.0)


def test_thermostat_off_mode(thermostat_case):
    data, truth, modes, cfg = thermostat_case
    dm = build_design_matrix(data, truth.dictionary_spec)
    off = modes[: data.n_transitions] == 2
    W = solve_coefficient_sparse(dm.take_rows(np.flatnonzero(off)),
                                 data.targets()[off], cfg)
    assert np.allclose(W.ravel(), [0.0, 0.99], atol=1e-10)


def test_thresholded_ls_fixed_point():
    rng = np.random.default_rng(2)
    Phi = rng.normal(size=(60, 6))
    W_true = np.zeros((6, 1))
    W_true[[1, 4], 0] = [2.0, -1.5]
    Y = Phi @ W_true + rng.normal(0, 0.01, size=(60, 1))
    cfg = SolverConfig(lambda_w=1.0)
    W1 = solve_coefficient_sparse(as_dm(Phi), Y, cfg)
    support = np.flatnonzero(W1[:, 0])
    W2 = solve_coefficient_sparse(as_dm(Phi), Y, cfg)
    assert np.array_equal(support, np.flatnonzero(W2[:, 0]))
    # restricting to the found support and re-running keeps the same support
    W3 = solve_coefficient_sparse(as_dm(Phi[:, support]), Y, cfg)
    assert np.array_equal(np.flatnonzero(W3[:, 0]), np.arange(len(support)))


def test_monotone_sparsity_in_lambda():
    rng = np.random.default_rng(4)
    Phi = rng.normal(size=(80, 8))
    W_true = np.zeros((8, 1))
    W_true[[0, 3, 6], 0] = [3.0, -2.0, 0.7]
    Y = Phi @ W_true + rng.normal(0, 0.05, size=(80, 1))
    sizes = []
    for lam in [0.0, 0.5, 2.0, 5.0, 20.0, 100.0]:
        W = solve_coefficient_sparse(as_dm(Phi), Y, SolverConfig(lambda_w=lam))
        sizes.append(int(np.count_nonzero(W)))
    assert sizes == sorted(sizes, reverse=True)


def test_empty_rows_rejected():
    with pytest.raises(ValueError, match="empty row set"):
        solve_coefficient_sparse(as_dm(np.zeros((0, 2))), np.zeros((0, 1)), SolverConfig())


def test_all_thresholded_warns():
    Phi = np.column_stack([np.ones(10), np.arange(10.0)])
    Y = 0.001 * np.arange(10.0)[:, None]
    with pytest.warns(UserWarning, match="thresholded to zero"):
        W = solve_coefficient_sparse(as_dm(Phi), Y, SolverConfig(lambda_w=1e6))
    assert np.allclose(W, 0.0)


# ---------------------------------------------------------------------------
# sparse sigmoid predicate


def test_separable_threshold_classifies_training_rows():
    y = np.linspace(18.0, 23.0, 120)
    Psi = np.column_stack([np.ones_like(y), y])
    targets = (y >= 21.0).astype(float)
    v = solve_sparse_logistic(as_dm(Psi, ["1", "y1"]), targets, np.ones_like(y), 0.05)
    assert np.array_equal(Psi @ v >= 0, targets > 0.5)
    # direction proportional to (y - 21): negative intercept, positive slope
    assert v[1] > 0 and v[0] < 0
    assert -v[0] / v[1] == pytest.approx(21.0, abs=0.05)


def test_constant_class_drives_bias_negative():
    y = np.linspace(0.0, 5.0, 50)
    Psi = np.column_stack([np.ones_like(y), y])
    v = solve_sparse_logistic(as_dm(Psi, ["1", "y1"]), np.zeros(50), np.ones(50), 0.05)
    assert v[1] == 0.0
    assert v[0] < 0.0
    g = Psi @ v
    assert (1.0 / (1.0 + np.exp(-g)) < 0.5).all()


def test_2d_rule_support_and_heldout_boundary():
    rng = np.random.default_rng(0)
    G = rng.uniform(-2, 2, size=(400, 2))
    targets = (G.sum(axis=1) >= 1.0).astype(float)
    Psi = np.column_stack([np.ones(400), G[:, 0], G[:, 1], G[:, 0] * G[:, 1]])
    v = solve_sparse_logistic(as_dm(Psi, ["1", "y1", "y2", "y1*y2"]),
                              targets, np.ones(400), 0.05)
    assert set(np.flatnonzero(v)) == {0, 1, 2}
    assert np.sign(v[1]) == np.sign(v[2]) == 1.0 if v[1] > 0 else True
    # decision boundary on held-out grid points
    H = rng.uniform(-2, 2, size=(3000, 2))
    PsiH = np.column_stack([np.ones(3000), H[:, 0], H[:, 1], H[:, 0] * H[:, 1]])
    agree = np.mean((PsiH @ v >= 0) == (H.sum(axis=1) >= 1.0))
    assert agree >= 0.97


def test_inseparable_identical_features_rejected():
    Psi = np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 3.0]])
    targets = np.array([1.0, 0.0, 0.0])
    with pytest.raises(InseparableTransitionError):
        solve_sparse_logistic(as_dm(Psi), targets, np.ones(3), 0.01)


def test_zero_weight_rows_have_no_influence():
    rng = np.random.default_rng(9)
    y = np.linspace(0, 10, 80)
    Psi = np.column_stack([np.ones_like(y), y])
    targets = (y >= 6.0).astype(float)
    weights = np.ones_like(y)
    weights[::4] = 0.0
    v1 = solve_sparse_logistic(as_dm(Psi), targets, weights, 0.05)
    mutated = targets.copy()
    mutated[::4] = rng.integers(0, 2, size=np.sum(weights == 0)).astype(float)
    v2 = solve_sparse_logistic(as_dm(Psi), mutated, weights, 0.05)
    live = weights > 0
    assert np.array_equal((Psi @ v1 >= 0)[live], (Psi @ v2 >= 0)[live])


def test_decision_scale_invariance():
    y = np.linspace(-3, 3, 50)
    Psi = np.column_stack([np.ones_like(y), y])
    v = solve_sparse_logistic(as_dm(Psi), (y >= 0.5).astype(float), np.ones(50), 0.02)
    for c in (0.1, 1.0, 42.0):
        assert np.array_equal(Psi @ v >= 0, Psi @ (c * v) >= 0)
