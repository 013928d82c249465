import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polytest import (
    BudgetConfig,
    DegenerateConstraintError,
    InputError,
    PolynomialSpec,
    build_kernel,
    compute_u_prime,
    compute_ustat,
    empirical_variances,
    estimate_g,
    eval_kernel,
    sample_tuples,
)
from polytest.ustat import TupleSample, expand_signs, load_data_csv
from polytest.ustat import test_statistic as max_statistic
from conftest import IdentityBase, random_kernel, scalar_product_kernel


def test_budget_validation():
    with pytest.raises(InputError):
        BudgetConfig(n=3, m=4, N=1, seed=0)  # n < m
    with pytest.raises(InputError):
        BudgetConfig(n=5, m=2, N=11, seed=0)  # N > C(5,2) = 10
    with pytest.raises(InputError):
        BudgetConfig(n=5, m=2, N=0, seed=0)
    with pytest.raises(InputError):
        BudgetConfig(n=5, m=1, N=1, seed=0)
    cfg = BudgetConfig(n=5, m=2, N=10, seed=0)
    assert cfg.rho == 1.0


def test_sample_tuples_rho_one_enumerates_everything():
    cfg = BudgetConfig(n=4, m=2, N=6, seed=123)
    ts = sample_tuples(cfg)
    assert ts.n_hat == 6
    expected = np.array(list(combinations(range(4), 2)))
    np.testing.assert_array_equal(ts.tuples, expected)


def test_sample_tuples_distinct_and_increasing():
    cfg = BudgetConfig(n=30, m=3, N=150, seed=99)
    ts = sample_tuples(cfg)
    rows = {tuple(r) for r in ts.tuples}
    assert len(rows) == ts.n_hat
    assert np.all(ts.tuples[:, 1:] > ts.tuples[:, :-1])


def test_sample_tuples_binomial_moments():
    # E[N_hat] = N; the mean over seeds stays within 4 binomial sd of it.
    n, m, N = 100, 2, 200
    rho = N / math.comb(n, m)
    draws = np.array([
        sample_tuples(BudgetConfig(n=n, m=m, N=N, seed=s)).n_hat
        for s in range(1000)
    ])
    tol = 4 * math.sqrt(N * (1 - rho)) / math.sqrt(1000)
    assert abs(draws.mean() - N) < tol


def test_sample_tuples_deterministic():
    cfg = BudgetConfig(n=50, m=2, N=100, seed=7)
    a, b = sample_tuples(cfg), sample_tuples(cfg)
    assert a.n_hat == b.n_hat
    np.testing.assert_array_equal(a.tuples, b.tuples)


def test_tuple_sample_requires_rows():
    with pytest.raises(InputError):
        TupleSample(0, np.empty((0, 2), dtype=np.int64))


def test_compute_u_prime_scalar_product_enumeration():
    kernel = scalar_product_kernel()
    data = np.array([[1.0], [2.0], [3.0]])
    ts = sample_tuples(BudgetConfig(n=3, m=2, N=3, seed=0))
    u, h = compute_u_prime(data, kernel, ts)
    assert u[0] == pytest.approx(11.0 / 3.0, rel=1e-15)
    np.testing.assert_allclose(np.sort(h[:, 0]), [2.0, 3.0, 6.0])


def test_compute_u_prime_constant_kernel():
    poly = PolynomialSpec(3.25, (), 1)
    quad = PolynomialSpec(0.0, ((1.0, (0, 0)),), 1)
    kernel = build_kernel([("c", "le", poly), ("q", "le", quad)], IdentityBase(1))
    data = np.random.default_rng(0).normal(size=(6, 1))
    ts = sample_tuples(BudgetConfig(n=6, m=2, N=10, seed=1))
    u, h = compute_u_prime(data, kernel, ts)
    assert u[0] == 3.25
    assert np.all(h[:, 0] == 3.25)


def test_complete_u_oracle_brute_force():
    # rho = 1 incomplete engine == independent nested-loop enumerator.
    rng = np.random.default_rng(11)
    for m in (2, 3, 4):
        kernel = random_kernel(rng, dim=3, degree=m, count=2)
        assert kernel.order == m
        n = 8
        data = rng.normal(size=(n, 3))
        cfg = BudgetConfig(n=n, m=m, N=math.comb(n, m), seed=5)
        ts = sample_tuples(cfg)
        u, _ = compute_u_prime(data, kernel, ts)
        brute = np.zeros(kernel.p)
        count = 0
        for combo in combinations(range(n), m):
            brute += eval_kernel(kernel, data[list(combo)])
            count += 1
        brute /= count
        np.testing.assert_allclose(u, brute, rtol=1e-12, atol=1e-13)


def test_estimate_g_m2_averages_all_other_indices():
    kernel = scalar_product_kernel()
    data = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    proj = estimate_g(data, kernel, seed=0)
    assert proj.K == 4
    # g_hat_0 = (1/4) sum_{k != 0} x_0 x_k
    assert proj.g_hat[0, 0] == pytest.approx((2 + 3 + 4 + 5) / 4, rel=1e-15)
    assert proj.g_hat[2, 0] == pytest.approx(3 * (1 + 2 + 4 + 5) / 4, rel=1e-15)
    np.testing.assert_allclose(proj.g_bar, proj.g_hat.mean(axis=0), rtol=1e-12)


def test_estimate_g_m2_is_seed_independent():
    kernel = scalar_product_kernel()
    data = np.random.default_rng(3).normal(size=(9, 1))
    a = estimate_g(data, kernel, seed=1)
    b = estimate_g(data, kernel, seed=999)
    np.testing.assert_array_equal(a.g_hat, b.g_hat)


def test_estimate_g_constant_kernel():
    poly = PolynomialSpec(-1.5, (), 1)
    quad = PolynomialSpec(0.0, ((1.0, (0, 0)),), 1)
    kernel = build_kernel([("c", "le", poly), ("q", "le", quad)], IdentityBase(1))
    data = np.random.default_rng(4).normal(size=(7, 1))
    proj = estimate_g(data, kernel, seed=0)
    assert np.all(proj.g_hat[:, 0] == -1.5)
    sigma_g_sq, _ = empirical_variances(
        proj, np.full((3, 2), -1.5), np.array([-1.5, -1.5])
    )
    assert sigma_g_sq[0] == 0.0


def test_estimate_g_partitions_discard_leftovers():
    # n = 6, m = 3: K = floor(5/2) = 2, one leftover index per i1.
    rng = np.random.default_rng(5)
    kernel = random_kernel(rng, dim=2, degree=3, count=1)
    data = rng.normal(size=(6, 2))
    proj = estimate_g(data, kernel, seed=42)
    assert proj.K == 2
    assert proj.g_hat.shape == (6, 1)


def test_estimate_g_unbiased_for_projection():
    # h(x, y) = xy has g(x) = x E[X]; Monte Carlo over datasets with X_0 fixed.
    kernel = scalar_product_kernel()
    x_star, mu = 1.7, 0.5
    B, n = 4000, 40
    rng = np.random.default_rng(6)
    vals = np.empty(B)
    for b in range(B):
        data = np.concatenate([[x_star], mu + rng.standard_normal(n - 1)])
        proj = estimate_g(data.reshape(-1, 1), kernel, s1=[0, 1], seed=b)
        vals[b] = proj.g_hat[0, 0]
    se = vals.std() / math.sqrt(B)
    assert abs(vals.mean() - x_star * mu) < 4 * se


def test_empirical_variances_examples():
    class P:
        pass

    proj = P()
    proj.g_hat = np.array([[0.0], [2.0]])
    proj.g_bar = np.array([1.0])
    h_values = np.array([[1.0], [2.0], [3.0]])
    u_prime = np.array([2.0])
    sg, sh = empirical_variances(proj, h_values, u_prime)
    assert sg[0] == 1.0
    assert sh[0] == pytest.approx(2.0 / 3.0, rel=1e-15)
    sh_const = empirical_variances(proj, np.full((4, 1), 7.0), np.array([7.0]))[1]
    assert sh_const[0] == 0.0


def test_statistic_examples():
    t = max_statistic(np.array([2.0]), np.array([4.0]), 100, ["le"], ["c"])
    assert t == pytest.approx(10.0, rel=1e-15)
    assert max_statistic(np.zeros(3), np.ones(3), 50, ["le"] * 3, list("abc")) == 0.0
    # equality expansion keeps T >= 0 for any equality-only set
    t = max_statistic(np.array([-0.3]), np.array([1.0]), 9, ["eq"], ["e"])
    assert t == pytest.approx(0.9, rel=1e-14)


def test_statistic_degenerate_names_label():
    with pytest.raises(DegenerateConstraintError) as err:
        max_statistic(
            np.array([1.0, 0.0]), np.array([1.0, 0.0]), 10,
            ["le", "le"], ["fine", "flat"],
        )
    assert "flat" in str(err.value)


def test_expand_signs_antisymmetry():
    kinds = ["eq", "le", "eq"]
    idx, signs = expand_signs(kinds)
    u = np.array([0.7, -1.2, 3.0])
    sigma = np.array([1.0, 2.0, 3.0])
    expanded_u = signs * u[idx]
    expanded_sigma = sigma[idx]
    # each equality contributes an exact (+f, -f) pair with equal sigma
    assert expanded_u[0] == -expanded_u[1]
    assert expanded_sigma[0] == expanded_sigma[1]
    assert expanded_u[3] == -expanded_u[4]
    assert len(expanded_u) == 5


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["eq", "le"]), min_size=1, max_size=6))
def test_expand_signs_length(kinds):
    idx, signs = expand_signs(kinds)
    assert len(idx) == sum(2 if k == "eq" else 1 for k in kinds)
    assert set(np.unique(signs)) <= {-1.0, 1.0}


def test_compute_ustat_deterministic(rng):
    kernel = random_kernel(rng, dim=2, degree=2, count=3)
    data = rng.normal(size=(25, 2))
    budget = BudgetConfig(n=25, m=2, N=60, seed=17)
    r1, p1, s1 = compute_ustat(data, kernel, budget)
    r2, p2, s2 = compute_ustat(data, kernel, budget)
    np.testing.assert_array_equal(r1.u_prime, r2.u_prime)
    np.testing.assert_array_equal(r1.h_values, r2.h_values)
    np.testing.assert_array_equal(p1.g_hat, p2.g_hat)
    np.testing.assert_array_equal(s1.tuples, s2.tuples)
    assert r1.t_stat == r2.t_stat


def test_compute_ustat_thread_independent(rng):
    kernel = random_kernel(rng, dim=2, degree=2, count=3)
    data = rng.normal(size=(25, 2))
    budget = BudgetConfig(n=25, m=2, N=60, seed=17)
    r1, _, _ = compute_ustat(data, kernel, budget, threads=1)
    r2, _, _ = compute_ustat(data, kernel, budget, threads=3)
    np.testing.assert_array_equal(r1.h_values, r2.h_values)
    assert r1.t_stat == r2.t_stat


def test_load_data_csv(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,b\n1.5,2\n3,4\n")
    with pytest.raises(InputError):
        load_data_csv(f)
    data = load_data_csv(f, skip_header=True)
    np.testing.assert_array_equal(data, [[1.5, 2.0], [3.0, 4.0]])
