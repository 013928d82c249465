import numpy as np
import pytest

from polytest import BaseEstimator, PolynomialSpec, build_kernel


class IdentityBase(BaseEstimator):
    """theta_i estimated by the i-th coordinate of a single sample."""

    eta = 1

    def __init__(self, dim: int):
        self.dim = dim

    def evaluate(self, coord, samples):
        return float(samples[0, coord])

    def batch_values(self, data, coords):
        coords = np.asarray(coords, dtype=np.int64)
        if coords.size == 0:
            return np.empty((data.shape[0], 0))
        return np.array(data[:, coords], dtype=np.float64)


class PairMeanBase(BaseEstimator):
    """eta = 2 toy estimator: theta_i estimated by the mean of two samples.

    Has no batch path, so kernels over it exercise the reference engine.
    """

    eta = 2

    def __init__(self, dim: int):
        self.dim = dim

    def evaluate(self, coord, samples):
        return float(0.5 * (samples[0, coord] + samples[1, coord]))


def scalar_product_kernel():
    """h(x, y) = x*y on scalar samples, the classic order-2 example."""
    poly = PolynomialSpec(0.0, ((1.0, (0, 0)),), 1)
    return build_kernel([("prod", "le", poly)], IdentityBase(1))


def random_polynomials(rng, dim, degree, count, max_terms=3):
    polys = []
    for _ in range(count):
        n_terms = int(rng.integers(1, max_terms + 1))
        terms = []
        for _ in range(n_terms):
            r = int(rng.integers(1, degree + 1)) if degree > 1 else 1
            idx = tuple(int(i) for i in rng.integers(0, dim, size=r))
            terms.append((float(rng.normal()), idx))
        # Force at least one term of full degree so the order is exactly eta*degree.
        idx = tuple(int(i) for i in rng.integers(0, dim, size=degree))
        terms.append((float(rng.normal()), idx))
        polys.append(PolynomialSpec(float(rng.normal()), tuple(terms), dim))
    return polys


def random_kernel(rng, dim=3, degree=2, count=2):
    polys = random_polynomials(rng, dim, degree, count)
    cons = [(f"k{i}", "le", poly) for i, poly in enumerate(polys)]
    return build_kernel(cons, IdentityBase(dim))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
