import numpy as np
import pytest

from gausskld import GaussianPair, SingularMatrix, StencilFailure, kld_value
from gausskld.kld import Basis
from gausskld.oracle import (
    IDENTITIES,
    FdConfig,
    PackedPoint,
    central_gradient,
    central_hessian,
    fd_gradient,
    fd_hessian,
    identity_suite,
    instance_rng,
    kld_extended,
    mc_kld,
    packed_dim,
    packed_length,
    random_pair,
    random_spd,
)

SCALAR_KLD = 0.5 * (np.log(2.0) - 0.5)


# -- extended formula -------------------------------------------------------


def test_kld_extended_nonsymmetric_identical_is_zero():
    A = np.array([[2.0, 0.7], [-0.3, 1.1]])
    m = np.array([0.1, 0.2])
    assert kld_extended(m, m, A, A) == pytest.approx(0.0, abs=1e-15)


def test_kld_extended_scalar_by_hand():
    # 1/2 [log 3 - log 0.5 - 1 + 0.5/3 + (1.2 - 0.2)^2 / 3]
    expected = 0.5 * (np.log(3.0) - np.log(0.5) - 1.0 + 0.5 / 3.0 + 1.0 / 3.0)
    assert kld_extended([1.2], [0.2], [[0.5]], [[3.0]]) == pytest.approx(expected, rel=1e-15)


def test_kld_extended_negative_determinant_uses_abs():
    S = np.array([[0.0, 1.0], [1.0, 0.0]])  # det -1
    assert np.isfinite(kld_extended([0.0, 0.0], [0.0, 0.0], S, np.eye(2)))


def test_kld_extended_batched(rng):
    pairs = [random_pair(rng, 3) for _ in range(4)]
    batch = kld_extended(*(np.stack([getattr(p, k) for p in pairs]) for k in "mwSV"))
    assert batch.shape == (4,)
    for value, p in zip(batch, pairs):
        assert value == pytest.approx(kld_value(p), rel=1e-12)


def test_kld_extended_singular():
    with pytest.raises(SingularMatrix):
        kld_extended([0.0, 0.0], [0.0, 0.0], np.eye(2), np.zeros((2, 2)))
    with pytest.raises(SingularMatrix):
        kld_extended([0.0, 0.0], [0.0, 0.0], np.ones((2, 2)), np.eye(2))


# -- packing ------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_packed_round_trip(n, rng):
    p = random_pair(rng, n)
    for basis in Basis:
        point = PackedPoint.from_pair(p, basis)
        assert point.theta.size == packed_length(n, basis)
        assert point.n == n
        q = point.to_pair()
        for k in "mwSV":
            np.testing.assert_array_equal(getattr(q, k), getattr(p, k))


def test_packed_lengths():
    assert packed_length(3, "vec") == 2 * 3 + 2 * 9
    assert packed_length(3, "vech") == 2 * 3 + 2 * 6
    assert packed_dim(24, "vec") == 3
    assert packed_dim(18, "vech") == 3


# -- finite-difference harness ---------------------------------------------------


def test_harness_quadratic_gradient():
    theta = np.array([0.3, -2.0, 5.0, 1e-3])
    g = central_gradient(lambda X: np.sum(X * X, axis=1), theta)
    assert np.max(np.abs(g - 2 * theta)) <= 1e-10


def test_harness_quadratic_hessian():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    A = A + A.T
    b = rng.standard_normal(5)
    theta = rng.standard_normal(5)

    def f(X):
        return 0.5 * np.einsum("ki,ij,kj->k", X, A, X) + X @ b + 3.0

    # second differences are exact on quadratics for any step; a wide step
    # keeps cancellation (~eps |f| / h^2) far below the 1e-8 check
    wide = FdConfig(step=1e-2)
    assert np.max(np.abs(central_hessian(f, theta, wide) - A)) <= 1e-8
    assert np.max(np.abs(central_gradient(f, theta) - (A @ theta + b))) <= 1e-8


def test_fd_gradient_stationary_in_mean():
    S = random_spd(np.random.default_rng(1), 2)
    m = np.array([0.5, -0.5])
    g = fd_gradient(PackedPoint.from_pair(GaussianPair(m, m, S, S), "vec"))
    assert np.max(np.abs(g[:4])) <= 1e-8


def test_fd_hessian_psd_at_minimum():
    S = random_spd(np.random.default_rng(2), 2)
    m = np.array([0.5, -0.5])
    H = fd_hessian(PackedPoint.from_pair(GaussianPair(m, m, S, S), "vech"))
    assert np.linalg.eigvalsh(H).min() >= -1e-8


def test_stencil_failure():
    # V[0, 0] = 1e-4: an absolute 1e-4 step lands exactly on a singular V
    p = GaussianPair([0.0, 0.0], [0.0, 0.0], np.eye(2), np.diag([1e-4, 1.0]))
    cfg = FdConfig(step=1e-4, relative_step=False)
    with pytest.raises(StencilFailure):
        fd_hessian(PackedPoint.from_pair(p, "vech"), cfg)


def test_fd_config_validation():
    with pytest.raises(ValueError):
        FdConfig(step=0.0)
    with pytest.raises(ValueError):
        FdConfig(scheme="forward")
    cfg = FdConfig(step=1e-5)
    np.testing.assert_array_equal(cfg.steps(np.array([0.5, -4.0])), [1e-5, 4e-5])


# -- Monte Carlo ---------------------------------------------------------------


def test_mc_kld_identical():
    S = random_spd(np.random.default_rng(3), 2)
    est, se = mc_kld(GaussianPair([0.0, 1.0], [0.0, 1.0], S, S), samples=20_000, seed=1)
    assert abs(est) <= 3 * se + 1e-12


def test_mc_kld_scalar_reference():
    est, se = mc_kld(GaussianPair([0.0], [0.0], [[1.0]], [[2.0]]), samples=1_000_000, seed=11)
    assert abs(est - SCALAR_KLD) <= 3 * se


def test_mc_kld_diagonal_factorises():
    s, v = np.array([0.5, 1.5]), np.array([1.0, 0.8])
    m, w = np.array([0.2, -0.3]), np.array([0.0, 0.4])
    per_coord = 0.5 * (np.log(v) - np.log(s) - 1 + s / v + (m - w) ** 2 / v)
    est, se = mc_kld(GaussianPair(m, w, np.diag(s), np.diag(v)), samples=200_000, seed=5)
    assert abs(est - per_coord.sum()) <= 3 * se


def test_mc_kld_deterministic():
    p = random_pair(np.random.default_rng(4), 2)
    assert mc_kld(p, 5000, seed=9) == mc_kld(p, 5000, seed=9)
    assert mc_kld(p, 5000, seed=9) != mc_kld(p, 5000, seed=10)
    with pytest.raises(ValueError):
        mc_kld(p, 10)


# -- identity suite ------------------------------------------------------------


def test_identity_suite_passes():
    reports = identity_suite(seed=42, dims=[1, 2, 3], trials=100)
    failed = [(r.name, r.observed_error) for r in reports if not r.passed]
    assert not failed
    assert all(r.observed_error <= 1e-10 for r in reports if r.tolerance == 1e-10)
    names = {r.name for r in reports}
    for name in IDENTITIES:
        assert f"{name}[n=2]" in names
    assert "control_ss_block_vec_fd_mismatch[n=2]" in names


def test_identity_suite_scalar_is_exact():
    reports = identity_suite(seed=1, dims=[1], trials=20, fd_trials=2)
    algebraic = [r for r in reports if r.tolerance == 1e-10]
    assert all(r.passed for r in reports)
    # scalar algebra: only rounding in a handful of products
    assert max(r.observed_error for r in algebraic) <= 1e-15


def test_identity_suite_deterministic():
    a = identity_suite(seed=7, dims=[2], trials=10, fd_trials=2)
    b = identity_suite(seed=7, dims=[2], trials=10, fd_trials=2)
    assert [r.as_dict() for r in a] == [r.as_dict() for r in b]


def test_identity_suite_order_independent():
    # per-trial generators are keyed by (seed, index, n, trial), not by position in a stream
    a = identity_suite(seed=7, dims=[2, 3], trials=5, fd_trials=1)
    b = identity_suite(seed=7, dims=[3, 2], trials=5, fd_trials=1)
    assert sorted((r.as_dict() for r in a), key=lambda d: d["name"]) == sorted(
        (r.as_dict() for r in b), key=lambda d: d["name"]
    )


def test_identity_suite_detects_corrupted_identity():
    from gausskld import matcalc
    from gausskld.oracle import rel_err

    def negated_rhs(rng, n):
        A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        c, d = rng.standard_normal(n), rng.standard_normal(n)
        lhs, rhs = matcalc.prop1_lhs_rhs(A, B, c, d)
        return rel_err(lhs, -rhs)

    reports = identity_suite(seed=3, dims=[2], trials=10, identities={"corrupted_prop1": negated_rhs})
    assert len(reports) == 1
    assert not reports[0].passed
    assert reports[0].observed_error > 1e-3


def test_identity_suite_validation():
    with pytest.raises(ValueError):
        identity_suite(dims=[])
    with pytest.raises(ValueError):
        identity_suite(trials=0)


def test_instance_rng_independent_streams():
    a = instance_rng(1, 0, 2, 0).standard_normal(3)
    b = instance_rng(1, 0, 2, 1).standard_normal(3)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, instance_rng(1, 0, 2, 0).standard_normal(3))


def test_random_spd_spectrum():
    rng = np.random.default_rng(8)
    for n in (1, 3, 6):
        lam = np.linalg.eigvalsh(random_spd(rng, n))
        assert lam.min() >= 0.5 - 1e-12 and lam.max() <= 2.0 + 1e-12
