import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import standardized_design
from sess import factorcore as fc
from sess import matio, metrics, simgen
from sess.errors import DimensionError, InsufficientLength, SchemaError, SessError


def noiseless_sim1(n=100, p=200, q=150, r=3, seed=0):
    ds, truth = simgen.gen_sim1(simgen.Sim1Config(n=n, p=p, q=q, r=r, gamma=0.0, seed=seed))
    return ds, truth


# --- eigen step ---------------------------------------------------------------

def test_rank_one_exact(rng):
    n, q = 12, 7
    z = rng.standard_normal(n)
    z *= np.sqrt(n) / np.linalg.norm(z)
    v = rng.standard_normal(q)
    pairs = fc.top_eigenpairs(np.outer(z, v), 3)
    assert pairs[0][1] == pytest.approx(v @ v / q, rel=1e-12)
    assert min(np.abs(pairs[0][0] - z).max(), np.abs(pairs[0][0] + z).max()) <= 1e-10
    assert all(lam <= 1e-25 for _, lam in pairs[1:])


def test_zero_matrix_has_zero_spectrum():
    assert all(lam == 0 for _, lam in fc.top_eigenpairs(np.zeros((5, 4)), 4))


def test_matches_dense_eigensolver(rng):
    Y = rng.standard_normal((20, 15))
    pairs = fc.top_eigenpairs(Y, 15)
    M = Y @ Y.T / (20 * 15)
    ref = np.sort(np.linalg.eigvalsh(M))[::-1][:15]
    lam = np.array([lam for _, lam in pairs])
    np.testing.assert_allclose(lam, ref, rtol=1e-10, atol=1e-14)
    lam1 = lam[0]
    for z, l in pairs:
        assert abs(np.linalg.norm(z) - np.sqrt(20)) <= 1e-12 * np.sqrt(20)
        assert np.linalg.norm(M @ z - l * z) <= 1e-8 * (lam1 + 1) * np.sqrt(20)
    Z = np.column_stack([z for z, _ in pairs])
    off = Z.T @ Z - np.diag(np.diag(Z.T @ Z))
    assert np.abs(off).max() <= 1e-8 * 20


@pytest.mark.parametrize("r_max", [0, 6])
def test_eigen_rank_bounds(r_max):
    with pytest.raises(DimensionError):
        fc.top_eigenpairs(np.ones((5, 4)) + np.eye(5, 4), r_max)


# --- loadings -----------------------------------------------------------------

def test_noiseless_loading_identity(rng):
    n, p, q = 30, 5, 6
    X = standardized_design(rng, n, p)
    u = rng.standard_normal(p)
    u *= np.sqrt(n) / np.linalg.norm(X @ u)
    v = rng.standard_normal(q)
    np.testing.assert_allclose(fc.estimate_v(np.outer(X @ u, v), X @ u), v, atol=1e-12)


def test_orthogonal_factor_gives_zero_loading():
    Y = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    z = np.array([1.0, -1.0, 1.0, -1.0])
    np.testing.assert_array_equal(fc.estimate_v(Y, z), [0.0, 0.0])


def test_loading_direct_product(rng):
    Y = rng.standard_normal((10, 4))
    z = rng.standard_normal(10)
    z *= np.sqrt(10) / np.linalg.norm(z)
    np.testing.assert_allclose(fc.estimate_v(Y, z), Y.T @ z / 10, rtol=0, atol=1e-14)
    with pytest.raises(DimensionError):
        fc.estimate_v(Y, 2 * z)


# --- rank criterion -----------------------------------------------------------

@given(seed=st.integers(0, 10_000), n=st.integers(10, 100), q=st.integers(10, 100))
def test_telescoping_identity(seed, n, q):
    Y = np.random.default_rng(seed).standard_normal((n, q))
    pairs = fc.top_eigenpairs(Y, min(n, q, 20))
    _, trace = fc.select_rank(Y, pairs)
    lam1 = pairs[0][1]
    for prev, cur in zip(trace, trace[1:]):
        direct_prev = fc.direct_loss(Y, [z for z, _ in pairs[:prev.k]],
                                     [Y.T @ z / n for z, _ in pairs[:prev.k]])
        direct_cur = fc.direct_loss(Y, [z for z, _ in pairs[:cur.k]],
                                    [Y.T @ z / n for z, _ in pairs[:cur.k]])
        assert abs((direct_prev - direct_cur) - pairs[cur.k - 1][1]) <= 1e-10 * (lam1 + 1)
        assert cur.loss < prev.loss


def test_noiseless_rank_and_loss():
    ds, _ = noiseless_sim1()
    pairs = fc.top_eigenpairs(ds.Y, 10)
    r_hat, trace = fc.select_rank(ds.Y, pairs)
    assert r_hat == 3
    assert trace[3].loss <= 1e-20 * max(1.0, trace[0].loss) or trace[3].loss <= 1e-20
    crit = [e.criterion for e in trace]
    assert crit[0] > crit[1] > crit[2] > crit[3]
    if len(crit) > 4:
        assert crit[4] > crit[3]


def test_pure_noise_selects_empty_model():
    hits = 0
    for seed in range(50):
        Y = np.random.default_rng(seed).standard_normal((60, 80))
        r_hat, _ = fc.select_rank(Y, fc.top_eigenpairs(Y, 20))
        hits += r_hat == 0
    assert hits >= 48


def test_q_scale_variant_and_unknown_variant():
    Y = np.random.default_rng(0).standard_normal((20, 30))
    pairs = fc.top_eigenpairs(Y, 5)
    _, trace = fc.select_rank(Y, pairs, "q_scale")
    e = trace[2]
    assert e.criterion == pytest.approx(np.sqrt(30) * np.log(e.loss) + 2 * np.log(30))
    with pytest.raises(ValueError):
        fc.select_rank(Y, pairs, "bogus")
    with pytest.raises(ValueError):
        fc.select_rank(Y, [], "n_scale")


# --- full fit -----------------------------------------------------------------

@pytest.fixture(scope="module")
def noiseless_fit():
    ds, truth = noiseless_sim1()
    sds = matio.standardize(ds)
    return ds, truth, sds, fc.fit_sess(sds)


def test_noiseless_fixed_point(noiseless_fit):
    ds, truth, sds, fit = noiseless_fit
    n = ds.n
    assert fit.r_hat == 3
    for k, layer in enumerate(fit.layers):
        target = ds.X @ truth.U_star[:, k]
        err = min(np.abs(layer.z_hat - target).max(), np.abs(layer.z_hat + target).max())
        assert err <= 1e-8 * np.sqrt(n)
        verr = min(np.abs(layer.v_hat - truth.V_star[:, k]).max(),
                   np.abs(layer.v_hat + truth.V_star[:, k]).max())
        assert verr <= 1e-8
    C = matio.destandardize_coef(fit.C_hat, sds.col_scales)
    assert metrics.ee(C, truth.C_star) <= 1e-3


def test_fit_invariants(noiseless_fit):
    ds, _, sds, fit = noiseless_fit
    C = sum(np.outer(l.u_hat, l.v_hat) for l in fit.layers)
    np.testing.assert_allclose(fit.C_hat, C, atol=1e-12)
    best = min(fit.criterion_trace, key=lambda e: (e.criterion, e.k))
    assert fit.r_hat == best.k
    lams = [l.lambda_hat for l in fit.layers]
    assert lams == sorted(lams, reverse=True)
    for layer in fit.layers:
        assert abs(np.linalg.norm(layer.z_hat) - np.sqrt(ds.n)) <= 1e-8 * np.sqrt(ds.n)
        np.testing.assert_allclose(layer.v_hat, sds.Y.T @ layer.z_hat / ds.n, atol=1e-10)
        assert layer.v_hat[np.argmax(np.abs(layer.v_hat))] > 0
        assert layer.sigma_hat > 0


def test_noiseless_in_sample_prediction(noiseless_fit):
    ds, _, sds, fit = noiseless_fit
    Yhat = fc.predict(fit, sds.X)
    assert np.linalg.norm(Yhat - ds.Y) <= 1e-3 * np.linalg.norm(ds.Y)


def test_sign_flip_leaves_layer_unchanged(noiseless_fit):
    _, _, _, fit = noiseless_fit
    for layer in fit.layers:
        np.testing.assert_array_equal(np.outer(-layer.u_hat, -layer.v_hat),
                                      np.outer(layer.u_hat, layer.v_hat))


def test_predict_definition_and_pe_consistency(rng):
    ds, truth = simgen.gen_sim1(simgen.Sim1Config(n=50, p=60, q=40, seed=3))
    sds = matio.standardize(ds)
    fit = fc.fit_sess(sds)
    Yhat = fc.predict(fit, sds.X)
    np.testing.assert_array_equal(Yhat, sds.X @ fit.C_hat)
    assert metrics.pe(ds.Y, sds.X, fit.C_hat) == np.linalg.norm(ds.Y - Yhat) / np.linalg.norm(ds.Y)
    with pytest.raises(DimensionError):
        fc.predict(fit, sds.X[:, :-1])


def test_zero_coefficients_predict_zero():
    fit = fc.SessFit((), 0, np.zeros((3, 2)), (), 0.0, 0.5)
    np.testing.assert_array_equal(fc.predict(fit, np.ones((4, 3))), np.zeros((4, 2)))


def test_zero_response_gives_empty_model(rng):
    X = standardized_design(rng, 20, 5)
    fit = fc.fit_sess(matio.Dataset(X, np.zeros((20, 3)), standardized=True))
    assert fit.r_hat == 0 and not fit.layers
    np.testing.assert_array_equal(fit.C_hat, 0)
    assert fit.U_hat.shape == (5, 0)


def test_unstandardized_rejected(rng):
    with pytest.raises(SessError):
        fc.fit_sess(matio.Dataset(rng.standard_normal((10, 3)), rng.standard_normal((10, 2))))


def test_threads_do_not_change_result():
    ds, _ = simgen.gen_sim1(simgen.Sim1Config(n=60, p=80, q=50, seed=4))
    sds = matio.standardize(ds)
    a = fc.fit_sess(sds)
    b = fc.fit_sess(sds, n_jobs=3)
    np.testing.assert_array_equal(a.C_hat, b.C_hat)


def test_options_are_recorded():
    ds, _ = simgen.gen_sim1(simgen.Sim1Config(n=60, p=80, q=50, seed=5))
    sds = matio.standardize(ds)
    fit = fc.fit_sess(sds, omega0=0.4, r_max=2, criterion_variant="q_scale")
    assert fit.omega0 == 0.4 and fit.criterion_variant == "q_scale"
    assert len(fit.eigenvalues) <= 2
    assert fit.mu == pytest.approx(1e-3 * fit.eigenvalues[0])
    with pytest.raises(ValueError):
        fc.fit_sess(sds, omega0=-1.0)
    with pytest.raises(ValueError):
        fc.fit_sess(sds, mu=-1.0)


def test_mu_threshold_limits_candidates():
    ds, _ = simgen.gen_sim1(simgen.Sim1Config(n=60, p=80, q=50, seed=6))
    sds = matio.standardize(ds)
    pairs = fc.top_eigenpairs(sds.Y, 10)
    mu = (pairs[1][1] + pairs[2][1]) / 2
    fit = fc.fit_sess(sds, mu=mu)
    assert len(fit.eigenvalues) == 2 and fit.r_hat <= 2


# --- VAR design ---------------------------------------------------------------

def test_scalar_ar1_layout():
    ds = fc.build_var_design(np.array([1.0, 2.0, 3.0]), 1)
    np.testing.assert_array_equal(ds.X[:, 0], [1.0, 2.0])
    np.testing.assert_array_equal(ds.Y[:, 0], [2.0, 3.0])


def test_two_lag_layout_by_hand():
    series = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 40.0]])
    ds = fc.build_var_design(series, 2)
    np.testing.assert_array_equal(ds.X, [[1, 10, 2, 20], [2, 20, 3, 30]])
    np.testing.assert_array_equal(ds.Y, [[3, 30], [4, 40]])


def test_var_shape_formula():
    T, q, L = 40, 7, 5
    ds = fc.build_var_design(np.random.default_rng(0).standard_normal((T, q)), L)
    assert (ds.n, ds.p, ds.q) == (T - L, L * q, q)


def test_var_too_short():
    with pytest.raises(InsufficientLength):
        fc.build_var_design(np.ones((3, 2)), 3)


def test_stacked_coefficients_align_with_design():
    series, vt = simgen.gen_var(q=4, T=60, r=1, L=2, noise_scale=0.0, seed=1)
    ds = fc.build_var_design(series, 2)
    np.testing.assert_allclose(ds.X @ vt.stacked, ds.Y, atol=1e-10)


# --- serialization ------------------------------------------------------------

def test_fit_round_trip(tmp_path, noiseless_fit):
    _, _, sds, fit = noiseless_fit
    path = tmp_path / "fit.json"
    fc.save_fit(fit, path)
    back = fc.load_fit(path)
    np.testing.assert_array_equal(back.C_hat, fit.C_hat)
    np.testing.assert_array_equal(back.col_scales, sds.col_scales)
    assert back.r_hat == fit.r_hat and back.omega0 == fit.omega0
    assert [e.k for e in back.criterion_trace] == [e.k for e in fit.criterion_trace]


def test_malformed_fit(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"r_hat": 1}')
    with pytest.raises(SchemaError):
        fc.load_fit(path)
    path.write_text("{")
    with pytest.raises(SchemaError):
        fc.load_fit(path)
