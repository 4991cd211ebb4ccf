import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitkit.errors import FormatError, InsufficientDataError, ParameterError
from gaitkit.osvm import (OsvmModel, decide, dumps_osvm, kernel_matrix, loads_osvm, rbf_kernel, score,
                          score_features, solve_dual, train_osvm)
from gaitkit.pca import fit_pca
from gaitkit.synth import brute_force_osvm


def _full_alpha(model, train):
    """Dense alpha vector over the training set (zeros for non-SVs)."""
    out = np.zeros(len(train))
    for sv, a in zip(model.support_vectors, model.alphas):
        out[np.flatnonzero(np.all(train == sv, axis=1))[0]] = a
    return out


def _kkt_violation(model, train):
    ell = len(train)
    c = 1.0 / (model.nu * ell)
    a = _full_alpha(model, train)
    g = kernel_matrix(train, model.support_vectors, model.gamma_rbf) @ model.alphas
    up = a < c - 1e-12
    low = a > 1e-12
    return max(g[low].max() - g[up].min(), 0.0)


def test_rbf_examples():
    s = np.array([0.3, -1.2, 2.0])
    assert rbf_kernel(s, s, 0.3) == 1.0
    assert rbf_kernel([0.0, 0.0], [1.0, 0.0], 0.3) == pytest.approx(np.exp(-0.3))
    assert rbf_kernel([0.0, 0.0], [1.0, 0.0], 0.3) == pytest.approx(0.740818, abs=1e-6)
    assert rbf_kernel([5.0, 1.0], [-3.0, 2.0], 0.0) == 1.0


def test_four_point_oracle():
    x = np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 1.1], [2.0, 2.0]])
    m = solve_dual(x, nu=0.5, gamma_rbf=0.5)
    ref = brute_force_osvm(x, nu=0.5, gamma_rbf=0.5)
    np.testing.assert_allclose(_full_alpha(m, x), _full_alpha(ref, x), atol=1e-5)
    assert abs(m.b - ref.b) < 1e-5


def test_two_identical_points():
    x = np.array([[1.0, 2.0], [1.0, 2.0]])
    for model in (solve_dual(x, 1.0, 0.3), brute_force_osvm(x, 1.0, 0.3)):
        np.testing.assert_allclose(model.alphas, [0.5, 0.5])


def test_repeated_point():
    x = np.tile([0.5, -0.5, 1.0], (10, 1))
    for model in (train_osvm(x, 0.5, 0.3), brute_force_osvm(x, 0.5, 0.3)):
        assert model.b == pytest.approx(1.0)
        assert np.all(score(model, x) >= -1e-12)
        assert model.alphas.sum() == pytest.approx(1.0)


def test_nu_property_100(rng):
    x = rng.standard_normal((100, 4))
    m = train_osvm(x, nu=0.02, gamma_rbf=0.3)
    assert np.sum(score(m, x) < 0) <= 2
    assert m.n_sv >= 2


@pytest.mark.parametrize("nu", [0.05, 0.2, 0.5])
def test_dual_feasibility_and_kkt(rng, nu):
    x = rng.standard_normal((80, 3))
    m = train_osvm(x, nu=nu, gamma_rbf=0.5)
    ell = len(x)
    assert m.alphas.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.all(m.alphas > 0) and np.all(m.alphas <= 1 / (nu * ell) + 1e-12)
    assert _kkt_violation(m, x) <= 1e-6
    h = score(m, x)
    assert np.mean(h < 0) <= nu + 2 / ell
    assert m.n_sv / ell >= nu - 2 / ell


def test_score_far_and_hand_built():
    m = OsvmModel(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0.25, 0.75]), 0.4, 0.3, 0.1)
    assert score(m, np.array([1e3, -1e3])) == pytest.approx(-0.4)
    s = np.array([0.5, -0.5])
    expect = 0.25 * np.exp(-0.3 * 0.5) + 0.75 * np.exp(-0.3 * 2.5) - 0.4
    assert abs(score(m, s) - expect) < 1e-12


def test_decide():
    m = OsvmModel(np.zeros((1, 2)), np.ones(1), 0.5, 0.3, 0.1)
    # h = exp(-0.3 d^2) - 0.5
    assert decide(m, np.zeros(2)) == 1
    far = np.array([10.0, 0.0])
    assert score(m, far) == pytest.approx(-0.5) and decide(m, far) == -1
    at_zero = np.array([np.sqrt(np.log(2) / 0.3), 0.0])
    assert decide(m, at_zero) == (1 if score(m, at_zero) >= 0 else -1)


def test_decide_consistency(rng):
    m = train_osvm(rng.standard_normal((50, 3)), nu=0.1, gamma_rbf=0.3)
    s = rng.standard_normal((1000, 3)) * 2
    h = score(m, s)
    np.testing.assert_array_equal(decide(m, s), np.where(h >= 0, 1, -1))


def test_interior_points_inside(rng):
    x = rng.standard_normal((60, 2))
    m = train_osvm(x, nu=0.1, gamma_rbf=0.3)
    inner = np.flatnonzero(_full_alpha(m, x) == 0)
    assert inner.size and np.all(score(m, x[inner]) >= 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_lipschitz_bound(seed):
    rng = np.random.default_rng(seed)
    gamma = 0.3
    m = train_osvm(rng.standard_normal((40, 3)), nu=0.1, gamma_rbf=gamma)
    s1, s2 = rng.standard_normal((2, 200, 3)) * 2
    bound = np.sqrt(2 * gamma / np.e)   # sup of the kernel-expansion gradient norm
    lhs = np.abs(score(m, s1) - score(m, s2))
    assert np.all(lhs <= 10 * bound * np.linalg.norm(s1 - s2, axis=1))


def test_permutation_invariance(rng):
    x = rng.standard_normal((70, 3))
    m1 = train_osvm(x, nu=0.1, gamma_rbf=0.3)
    m2 = train_osvm(x[rng.permutation(70)], nu=0.1, gamma_rbf=0.3)
    grid = np.stack(np.meshgrid(*[np.linspace(-3, 3, 9)] * 3), -1).reshape(-1, 3)
    assert np.max(np.abs(score(m1, grid) - score(m2, grid))) <= 1e-6


def test_errors(rng):
    with pytest.raises(InsufficientDataError):
        train_osvm(rng.standard_normal((9, 2)))
    with pytest.raises(ParameterError):
        train_osvm(rng.standard_normal((20, 2)), nu=0.0)
    with pytest.raises(ParameterError):
        train_osvm(rng.standard_normal((20, 2)), gamma_rbf=-1.0)


def test_persistence_round_trip(rng):
    f = rng.standard_normal((60, 8))
    pca = fit_pca(f, S=4)
    from gaitkit.pca import apply
    m = train_osvm(apply(pca, f), nu=0.1, gamma_rbf=0.3, pca=pca)
    text = dumps_osvm(m)
    assert text.startswith("#gaitkit-osvm v1")
    back = loads_osvm(text)
    assert back == m and dumps_osvm(back) == text
    probe = rng.standard_normal((20, 8))
    np.testing.assert_array_equal(score_features(back, probe), score_features(m, probe))
    with pytest.raises(FormatError):
        loads_osvm(text.replace("v1", "v2", 1))
    with pytest.raises(FormatError):
        loads_osvm(text.replace("n_sv=", "n_sv=1", 1))
