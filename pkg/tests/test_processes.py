import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from htsl.processes import (KernelTruncationError, LfsmSpec, PathEnsemble, QuasiStationarySpec,
                            block_split_bound, block_split_margins, deterministic_power_path, partial_sum,
                            prefix_sums, running_max, simulate_iid, simulate_lfsm, simulate_quasi_stationary,
                            simulate_stable_levy, simulate_zero, thread_count, truncation_share)
from htsl.stable import Gaussian, StableLaw

from oracles import inclusive_sum, ma_autocov, running_max_naive

finite = st.floats(-1e6, 1e6, allow_nan=False)


# --- partial sums -----------------------------------------------------------

def test_partial_sum_examples():
    assert partial_sum([1, 2, 3, 4], 0, 2) == 6
    assert partial_sum([1, -3, 2, 5], 1, 2) == 4
    assert partial_sum([1, -3, 2, 5], 2, 0) == 2


def test_running_max_examples():
    assert running_max([1, -3, 2], 0, 1) == 2
    assert running_max([1, -3, 2], 0, 2) == 2
    assert running_max([1, -3, 2], 1, 0) == 3


@pytest.mark.parametrize("m,n", [(-1, 0), (0, -1), (2, 2), (4, 0)])
def test_out_of_range(m, n):
    with pytest.raises(IndexError):
        partial_sum([1, 2, 3, 4], m, n)
    with pytest.raises(IndexError):
        running_max([1, 2, 3, 4], m, n)


@given(xi=st.lists(finite, min_size=2, max_size=40), data=st.data())
def test_inclusive_identity_and_oracle(xi, data):
    m = data.draw(st.integers(0, len(xi) - 2))
    n = data.draw(st.integers(0, len(xi) - m - 2))
    assert partial_sum(xi, m, n + 1) == pytest.approx(partial_sum(xi, m, n) + xi[m + n + 1], abs=1e-6)
    assert partial_sum(xi, m, n) == pytest.approx(inclusive_sum(xi, m, n), abs=1e-6)
    assert running_max(xi, m, n) == pytest.approx(running_max_naive(xi, m, n), abs=1e-6)


@given(xi=arrays(float, st.integers(2, 50), elements=finite))
def test_prefix_sums(xi):
    C = prefix_sums(xi)
    assert C[0] == 0 and C.size == xi.size + 1
    np.testing.assert_allclose(C[-1], xi.sum(), atol=1e-6)


@given(xi=st.lists(finite, min_size=2, max_size=40), data=st.data())
def test_splitting_inequality(xi, data):
    n = data.draw(st.integers(0, (len(xi) - 2) // 2))
    k = data.draw(st.integers(0, len(xi) - 2 * n - 2))
    lhs, rhs = block_split_bound(xi, k, n)
    assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


def test_overlapping_split_fails_under_inclusive_sums():
    # M_{k,2n} <= max(M_{k,n}, |S_{k,n}| + M_{k+n,n}) double counts xi_{k+n}
    xi = [2.0, -1.0, 1.5]
    lhs = running_max(xi, 0, 2)
    rhs = max(running_max(xi, 0, 1), abs(partial_sum(xi, 0, 1)) + running_max(xi, 1, 1))
    assert lhs == 2.5 and rhs == 2.0
    lhs, rhs = block_split_bound([2.0, -1.0, 1.5, 0.0], 0, 1)
    assert lhs <= rhs


def test_margins_match_scalar():
    rng = np.random.default_rng(0)
    x = rng.standard_cauchy((4, 24))
    for n in (0, 1, 3, 7):
        m = block_split_margins(x, n)
        ref = [[np.subtract(*block_split_bound(r, k, n)[::-1]) for k in range(24 - 2 * n - 1)] for r in x]
        np.testing.assert_allclose(m, ref, atol=1e-12)
    with pytest.raises(IndexError):
        block_split_margins(x, 12)


# --- i.i.d. -------------------------------------------------------------------

def test_iid_reproducible():
    a = simulate_iid(Gaussian(), 2, 1, seed=5).values
    b = simulate_iid(Gaussian(), 2, 1, seed=5).values
    assert a.shape == (1, 2) and np.array_equal(a, b)


def test_iid_lazy_equals_eager_and_thread_independent(monkeypatch):
    eager = simulate_iid(StableLaw(1.3), 64, 10, seed=9).values
    monkeypatch.setenv("HTSL_THREADS", "1")
    assert thread_count() == 1
    lazy1 = np.vstack([b.values for b in simulate_iid(StableLaw(1.3), 64, 10, seed=9, lazy=True).iter_batches(3)])
    monkeypatch.setenv("HTSL_THREADS", "4")
    lazy4 = simulate_iid(StableLaw(1.3), 64, 10, seed=9, lazy=True).materialize().values
    assert np.array_equal(eager, lazy1) and np.array_equal(eager, lazy4)


def test_iid_errors():
    with pytest.raises(ValueError):
        simulate_iid(Gaussian(), 0, 1, 0)
    with pytest.raises(ValueError):
        simulate_iid(Gaussian(), 1, 0, 0)


def test_zero_and_ensemble_views():
    z = simulate_zero(5, 2)
    assert np.all(z.values == 0) and z.kind == "increments"
    e = PathEnsemble([[1.0, 2.0, 3.0]], kind="increments")
    np.testing.assert_array_equal(e.path_values, [[0, 1, 3, 6]])
    v = PathEnsemble([[0.0, 1.0, 3.0]])
    np.testing.assert_array_equal(v.increments, [[1, 2]])
    with pytest.raises(ValueError):
        PathEnsemble([[1.0]], kind="bogus")


# --- quasi-stationary ----------------------------------------------------------

def test_white_noise_covariance():
    ens, f = simulate_quasi_stationary(QuasiStationarySpec((1.0,)), 10, 1, 0, m_max=3)
    np.testing.assert_array_equal(f, [1, 0, 0, 0])


def test_ma1_covariance():
    f = QuasiStationarySpec((1.0, 0.5)).covariance_bound(4)
    np.testing.assert_allclose(f, [1.25, 0.5, 0, 0, 0])


def test_geometric_closed_form_and_table():
    spec = QuasiStationarySpec.geometric(0.5)
    m = np.arange(21)
    np.testing.assert_allclose(spec.covariance_bound(20), 0.5 ** m * 4 / 3)
    c = spec.ma_coefficients
    np.testing.assert_allclose([ma_autocov(c, k) for k in range(21)], spec.covariance(20), rtol=1e-12)
    np.testing.assert_allclose(spec.covariance(20), 0.5 ** m * 4 / 3, rtol=1e-12)


def test_rejects_divergent_coefficients():
    with pytest.raises(ValueError):
        QuasiStationarySpec.geometric(1.0)
    with pytest.raises(ValueError):
        QuasiStationarySpec((1.0, math.inf))
    with pytest.raises(ValueError):
        QuasiStationarySpec(())


def test_sample_covariance_within_bound():
    spec = QuasiStationarySpec.geometric(0.5)
    ens, f = simulate_quasi_stationary(spec, 1_000_000, 1, seed=3, m_max=20)
    x = ens.values[0]
    n = x.size
    for m in range(21):
        prod = x[:n - m] * x[m:]
        se = prod.std() / math.sqrt(prod.size)
        cov = prod.mean()
        assert abs(cov) <= f[m] + 4 * se
        if m <= 3:
            assert cov == pytest.approx(f[m], rel=0.02)


def test_long_ma_uses_fft_path():
    spec = QuasiStationarySpec(tuple(0.9 ** j for j in range(100)))
    ens, _ = simulate_quasi_stationary(spec, 500, 2, seed=1)
    lazy, _ = simulate_quasi_stationary(spec, 500, 2, seed=1, lazy=True)
    np.testing.assert_array_equal(ens.values, lazy.materialize().values)
    assert ens.meta["long_run_bound"] == pytest.approx(spec.long_run_bound())


# --- Levy ----------------------------------------------------------------------

def test_levy_starts_at_zero_and_scale():
    ens = simulate_stable_levy(2.0, 4, 1.0, 20_000, seed=2, scale=1 / math.sqrt(2))
    assert np.all(ens.values[:, 0] == 0)
    assert ens.values[:, 1].var() == pytest.approx(1.0, rel=0.03)
    assert ens.meta["hurst"] == 0.5


def test_levy_self_similarity_deciles():
    alpha = 1.5
    a = simulate_stable_levy(alpha, 1, 1.0, 100_000, seed=21).values[:, 1]
    b = simulate_stable_levy(alpha, 2, 1.0, 100_000, seed=22).values[:, 2] / 2 ** (1 / alpha)
    qa = np.quantile(a, np.arange(1, 10) / 10)
    qb = np.quantile(b, np.arange(1, 10) / 10)
    iqr = qa[6] - qa[2]
    # relative to |q|, with the spread as floor for deciles near the centre of symmetry
    assert np.all(np.abs(qa - qb) <= 0.03 * np.maximum(np.abs(qa), iqr))


# --- LFSM ----------------------------------------------------------------------

@pytest.mark.parametrize("alpha", [1.2, 2.0, 1.7])
def test_lfsm_passthrough_is_bit_identical(alpha):
    lfsm = simulate_lfsm(LfsmSpec(alpha, 1 / alpha, mesh=3), 32, 5, seed=4)
    levy = simulate_stable_levy(alpha, 32, 1.0, 5, seed=4)
    assert np.array_equal(lfsm.values, levy.values)
    assert lfsm.meta["passthrough"]


def test_lfsm_guards():
    with pytest.raises(ValueError):
        LfsmSpec(1.5, 1.0)
    with pytest.raises(ValueError):
        LfsmSpec(1.5, 0.0)
    with pytest.raises(ValueError):
        simulate_lfsm(LfsmSpec(1.5, 0.8, kernel_cutoff=4), 8, 1, 0)
    with pytest.raises(KernelTruncationError):
        simulate_lfsm(LfsmSpec(1.2, 0.95, kernel_cutoff=8), 8, 1, 0)


def test_truncation_share_default_window():
    assert truncation_share(2.0, 0.7, 16) < 0.02
    assert truncation_share(2.0, 0.7, 1) > truncation_share(2.0, 0.7, 16)
    assert truncation_share(1.5, 2 / 3, 4) == 0.0


def test_lfsm_lazy_matches_eager():
    spec = LfsmSpec(1.5, 0.8, mesh=2)
    eager = simulate_lfsm(spec, 8, 3, seed=6).values
    lazy = simulate_lfsm(spec, 8, 3, seed=6, lazy=True).materialize().values
    np.testing.assert_allclose(lazy, eager, rtol=1e-12, atol=1e-12)
    assert np.all(eager[:, 0] == 0)


def test_lfsm_gaussian_variance_against_discrete_oracle():
    # exact variance of the Riemann scheme: 2 (1/m) sum_i (g(tm+Tm-1-i) - g(Tm-1-i))^2 for alpha = 2
    spec = LfsmSpec(2.0, 0.7, mesh=4)
    n, P = 8, 4000
    ens = simulate_lfsm(spec, n, P, seed=8)
    T, m, d = 16 * n, 4, spec.exponent
    g = lambda l: np.where(l >= 0, ((np.maximum(l, 0) + 0.5) / m) ** d, 0.0)
    i = np.arange((T + n) * m)
    for t in (1, 4, 8):
        k = g(t * m + T * m - 1 - i) - g(T * m - 1 - i)
        exact = 2 * (1 / m) * np.sum(k * k)
        assert ens.values[:, t].var() == pytest.approx(exact, rel=0.1)


@pytest.mark.slow
def test_lfsm_increment_stationarity():
    ens = simulate_lfsm(LfsmSpec(1.5, 0.8, mesh=4), 17, 100_000, seed=10)
    d0 = ens.values[:, 1] - ens.values[:, 0]
    d16 = ens.values[:, 17] - ens.values[:, 16]
    probs = np.arange(1, 10) / 10
    q0, q16 = np.quantile(d0, probs), np.quantile(d16, probs)
    iqr = q0[6] - q0[2]
    assert np.all(np.abs(q0 - q16) <= 0.05 * np.maximum(np.abs(q0), iqr))


def test_deterministic_power_path():
    e = deterministic_power_path(0.5, 4, 0.5, paths=2)
    np.testing.assert_allclose(e.values[0], np.sqrt(np.arange(9) * 0.5))
    assert e.n_paths == 2
