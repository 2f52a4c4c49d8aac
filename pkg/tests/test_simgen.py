import numpy as np
import pytest

from sess import metrics, simgen
from sess.errors import ConfigError, UnstableSystem

SMALL1 = dict(n=40, p=60, q=30)
SMALL2 = dict(n=80, p=60, q=40)


def _bytes(*arrays):
    return b"".join(np.ascontiguousarray(a).tobytes() for a in arrays)


def test_sim1_deterministic():
    a, ta = simgen.gen_sim1(simgen.Sim1Config(**SMALL1, seed=7))
    b, tb = simgen.gen_sim1(simgen.Sim1Config(**SMALL1, seed=7))
    assert _bytes(a.X, a.Y, ta.C_star) == _bytes(b.X, b.Y, tb.C_star)
    c, _ = simgen.gen_sim1(simgen.Sim1Config(**SMALL1, seed=8))
    assert not np.array_equal(a.X, c.X)


def test_sim2_deterministic():
    a, ta = simgen.gen_sim2(simgen.Sim2Config(**SMALL2, seed=3))
    b, tb = simgen.gen_sim2(simgen.Sim2Config(**SMALL2, seed=3))
    assert _bytes(a.X, a.Y, ta.C_star) == _bytes(b.X, b.Y, tb.C_star)


def test_var_deterministic():
    a, ta = simgen.gen_var(5, 50, seed=2)
    b, tb = simgen.gen_var(5, 50, seed=2)
    assert _bytes(a, ta.stacked) == _bytes(b, tb.stacked)


def test_streams_are_independent():
    x = simgen.rng_stream(1, simgen.STREAM_X).standard_normal(5)
    e = simgen.rng_stream(1, simgen.STREAM_E).standard_normal(5)
    assert not np.array_equal(x, e)


@pytest.mark.parametrize("seed", range(5))
def test_sim1_truth_structure(seed):
    ds, truth = simgen.gen_sim1(simgen.Sim1Config(seed=seed))
    assert metrics.numerical_rank(truth.C_star) == 3
    s = np.linalg.svd(truth.C_star, compute_uv=False)
    np.testing.assert_allclose(s[:3], [100, 99, 98], rtol=1e-12)
    np.testing.assert_allclose(truth.U_star @ truth.V_star.T, truth.C_star, atol=1e-10)
    for k, S in enumerate(truth.supports):
        np.testing.assert_array_equal(np.flatnonzero(truth.U_star[:, k]), S)
    Z = ds.X @ truth.U_star
    np.testing.assert_allclose(Z.T @ Z / ds.n, np.eye(3), atol=1e-10)


def test_sim1_noiseless_is_exact():
    ds, truth = simgen.gen_sim1(simgen.Sim1Config(**SMALL1, gamma=0.0))
    np.testing.assert_array_equal(ds.Y, ds.X @ truth.C_star)


def test_sim1_nonzero_count_range():
    # rank-3 truncation of the sparse seed matrix is expected to keep 20..90 entries
    counts = [np.count_nonzero(simgen.gen_sim1(simgen.Sim1Config(seed=s))[1].C_star) for s in range(10)]
    assert all(20 <= c <= 90 for c in counts), counts


def test_sim1_config_validation():
    with pytest.raises(ConfigError):
        simgen.Sim1Config(r=0)
    with pytest.raises(ConfigError):
        simgen.Sim1Config(rho_x=1.0)
    with pytest.raises(ConfigError):
        simgen.Sim1Config(p=2, q=2, r=3)


def test_ar1_adjacent_correlation():
    X = simgen.gaussian_rows(simgen.rng_stream(0, 0), 10_000, np.linalg.cholesky(simgen.ar1_cov(20, 0.5)))
    corr = np.corrcoef(X, rowvar=False)
    assert np.all(np.abs(np.diag(corr, 1) - 0.5) <= 0.02)


def test_scaled_t_unit_variance():
    draws = simgen.scaled_t(simgen.rng_stream(0, 2), 1_000_000, 5.0)
    assert abs(draws.var() - 1.0) <= 0.05


def test_sim2_construction_identities():
    cfg = simgen.Sim2Config()
    ds, truth = simgen.gen_sim2(cfg)
    U, V = truth.extras["u_construction"], truth.extras["v_construction"]
    np.testing.assert_allclose(np.linalg.norm(U, axis=0), 1.0, rtol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1.0, rtol=1e-14)
    assert [np.count_nonzero(U[:, j]) for j in range(3)] == list(cfg.sparsity)
    assert [np.flatnonzero(U[:, j])[0] for j in range(3)] == list(cfg.u_offsets)
    for j, s in enumerate(cfg.sparsity):
        np.testing.assert_allclose(np.abs(U[U[:, j] != 0, j]), 1 / np.sqrt(s), rtol=1e-14)
    assert truth.extras["snr_realized"] == pytest.approx(0.75, abs=1e-10)
    np.testing.assert_allclose(ds.X @ U, truth.extras["X1"], atol=1e-8)
    np.testing.assert_allclose(truth.U_star @ truth.V_star.T, truth.C_star, atol=1e-10)


def test_sim2_right_vector_magnitudes():
    _, truth = simgen.gen_sim2(simgen.Sim2Config(**SMALL2, seed=1))
    V = truth.extras["v_construction"]
    for j in range(3):
        nz = V[V[:, j] != 0, j]
        raw = nz / np.abs(nz).max()
        assert nz.size == 5 and np.all(np.abs(raw) <= 1.0)
        ratio = np.abs(nz).min() / np.abs(nz).max()
        assert ratio >= 0.3 - 1e-12


def test_sim2_config_validation():
    with pytest.raises(ConfigError):
        simgen.Sim2Config(p=15)
    with pytest.raises(ConfigError):
        simgen.Sim2Config(sparsity=(8, 9))
    with pytest.raises(ConfigError):
        simgen.Sim2Config(df=2.0)


def test_var_noiseless_recursion():
    series, vt = simgen.gen_var(q=6, T=40, r=2, L=3, noise_scale=0.0, seed=4)
    for t in range(3, 40):
        pred = sum(C.T @ series[t - i] for i, C in enumerate(vt.lags, start=1))
        np.testing.assert_allclose(series[t], pred, atol=1e-12)
    assert vt.spectral_radius < 0.95


def test_ar1_autocovariance():
    lags = (np.array([[0.5]]),)
    y = simgen.simulate_var(lags, 200_000, 1.0, simgen.rng_stream(0, simgen.STREAM_VAR_NOISE))
    assert y.var() == pytest.approx(1 / (1 - 0.25), rel=0.1)


def test_var_unstable_after_redraws():
    with pytest.raises(UnstableSystem):
        simgen.gen_var(q=5, T=20, seed=0, max_radius=1e-9)


def test_error_bound_formula():
    Sigma = simgen.ar1_cov(10, 0.5)
    gamma_u = np.sqrt(np.linalg.eigvalsh(Sigma).max())
    assert simgen.error_norm_bound(Sigma, 30, 10) == pytest.approx(gamma_u * (2 * np.sqrt(30) + np.sqrt(10)))


def test_error_bound_holds_on_a_few_draws():
    n = q = 50
    Sigma = simgen.ar1_cov(q, 0.5)
    chol = np.linalg.cholesky(Sigma)
    bound = simgen.error_norm_bound(Sigma, n, q)
    for s in range(10):
        E = simgen.gaussian_rows(simgen.rng_stream(s, simgen.STREAM_E), n, chol)
        assert np.linalg.norm(E, 2) <= bound
