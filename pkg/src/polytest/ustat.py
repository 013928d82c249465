"""Randomized incomplete U-statistics and their studentization.

The index tuples entering the statistic are selected by Bernoulli sampling
over all size-m subsets of {0..n-1}: the realized count follows a binomial
law with success probability ``rho = N / C(n, m)`` (conditioned to be at least
one), and the tuples themselves are drawn uniformly without replacement.  The
statistic is the tuple average of the kernel; its approximate variance
combines the variance of a divide-and-conquer estimate of the projection
``g(x) = E[h(x, X_2, ..., X_m)]`` with the variance of the kernel values,
weighted by ``m^2`` and ``n/N`` respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .engine import CompiledKernel, compile_kernel
from .errors import DegenerateConstraintError, InputError
from .kernels import SymmetricKernel, eval_kernel
from .streams import ROLE_PARTITION, derive_seed, substream

_MAX_BINOMIAL_N = 2**62


@dataclass(frozen=True)
class BudgetConfig:
    """Sampling budget for one incomplete U-statistic.

    Attributes:
      n: sample size.
      m: kernel order (2 <= m <= n, capped upstream at 6).
      N: computational budget, the expected number of selected tuples;
         must satisfy 1 <= N <= C(n, m).
      seed: 64-bit seed; tuple selection is deterministic given it.
    """

    n: int
    m: int
    N: int
    seed: int

    def __post_init__(self):
        if self.m < 2:
            raise InputError(f"kernel order must be >= 2, got {self.m}")
        if self.n < self.m:
            raise InputError(f"need n >= m, got n={self.n}, m={self.m}")
        if not 1 <= self.N <= self.total_tuples:
            raise InputError(
                f"budget N={self.N} outside [1, C({self.n},{self.m})="
                f"{self.total_tuples}]"
            )

    @property
    def total_tuples(self) -> int:
        return math.comb(self.n, self.m)

    @property
    def rho(self) -> float:
        return self.N / self.total_tuples


@dataclass(frozen=True)
class TupleSample:
    """The realized Bernoulli draw: ``n_hat`` distinct increasing m-tuples."""

    n_hat: int
    tuples: np.ndarray  # (n_hat, m) int64, rows strictly increasing, distinct

    def __post_init__(self):
        if self.n_hat != self.tuples.shape[0] or self.n_hat < 1:
            raise InputError("n_hat must equal the number of tuples and be >= 1")


def sample_tuples(cfg: BudgetConfig) -> TupleSample:
    """Draw the Bernoulli tuple sample for a budget configuration.

    The count is Binomial(C(n, m), rho) redrawn while zero; the tuples are
    uniform without replacement, by rejection against a hash set in the sparse
    regime and by exact enumeration when rho > 1/2 (the enumeration path also
    serves the complete-statistic mode rho = 1).
    """
    rng = substream(cfg.seed)
    total = cfg.total_tuples
    rho = cfg.rho
    if total <= _MAX_BINOMIAL_N:
        n_hat = int(rng.binomial(total, rho))
        while n_hat == 0:
            n_hat = int(rng.binomial(total, rho))
    else:
        # C(n, m) exceeds the binomial sampler's integer range; in this regime
        # rho is tiny and Binomial(C, N/C) is Poisson(N) to within O(N^2/C).
        n_hat = int(rng.poisson(cfg.N))
        while n_hat == 0:
            n_hat = int(rng.poisson(cfg.N))
    if rho > 0.5:
        all_tuples = np.array(
            list(combinations(range(cfg.n), cfg.m)), dtype=np.int64
        )
        chosen = rng.choice(total, size=n_hat, replace=False)
        chosen.sort()
        return TupleSample(n_hat, np.ascontiguousarray(all_tuples[chosen]))
    seen: set[tuple[int, ...]] = set()
    rows = np.empty((n_hat, cfg.m), dtype=np.int64)
    filled = 0
    while filled < n_hat:
        draw = rng.integers(0, cfg.n, size=cfg.m)
        draw.sort()
        if cfg.m > 1 and np.any(draw[1:] == draw[:-1]):
            continue
        key = tuple(int(x) for x in draw)
        if key in seen:
            continue
        seen.add(key)
        rows[filled] = draw
        filled += 1
    return TupleSample(n_hat, rows)


@dataclass(frozen=True)
class ProjectionEstimates:
    """Divide-and-conquer estimates of the projection g at each index in S1."""

    g_hat: np.ndarray   # (n1, p)
    g_bar: np.ndarray   # (p,)
    s1: np.ndarray      # (n1,) indices
    K: int              # blocks per index, floor((n-1)/(m-1))


@dataclass(frozen=True)
class UStatResult:
    """Incomplete U-statistic with empirical variances and the max statistic."""

    u_prime: np.ndarray      # (p,)
    h_values: np.ndarray     # (n_hat, p)
    sigma_g_sq: np.ndarray   # (p,)
    sigma_h_sq: np.ndarray   # (p,)
    sigma_sq: np.ndarray     # (p,) m^2 sigma_g^2 + (n/N) sigma_h^2
    t_stat: float


def _eval_tuple_batch(
    data: np.ndarray,
    kernel: SymmetricKernel,
    tuples: np.ndarray,
    compiled: Optional[CompiledKernel],
    V: Optional[np.ndarray],
    threads: int,
) -> np.ndarray:
    if compiled is not None:
        if V is None:
            V = compiled.base_values(data)
        return compiled.eval_tuples(V, tuples, threads=threads)
    return np.array([eval_kernel(kernel, data[row]) for row in tuples])


def compute_u_prime(
    data: np.ndarray,
    kernel: SymmetricKernel,
    sample: TupleSample,
    *,
    compiled: Optional[CompiledKernel] = None,
    V: Optional[np.ndarray] = None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Tuple-average estimate of the constraint vector.

    Returns ``(u_prime, h_values)`` where ``u_prime`` is exactly the column
    mean of the ``(n_hat, p)`` kernel evaluations.
    """
    data = np.asarray(data, dtype=np.float64)
    if sample.tuples.shape[1] != kernel.order:
        raise InputError(
            f"tuple width {sample.tuples.shape[1]} != kernel order {kernel.order}"
        )
    if data.shape[0] <= int(sample.tuples.max()):
        raise InputError("data has fewer rows than the largest sampled index")
    h_values = _eval_tuple_batch(data, kernel, sample.tuples, compiled, V, threads)
    return h_values.mean(axis=0), h_values


def estimate_g(
    data: np.ndarray,
    kernel: SymmetricKernel,
    s1: Optional[Sequence[int]] = None,
    seed: int = 0,
    *,
    compiled: Optional[CompiledKernel] = None,
    V: Optional[np.ndarray] = None,
    threads: int = 1,
) -> ProjectionEstimates:
    """Divide-and-conquer projection estimates over the index subset S1.

    For each index i1 the remaining n-1 indices are partitioned, after a
    seeded shuffle, into K = floor((n-1)/(m-1)) disjoint blocks of size m-1
    (leftovers discarded), and the kernel values h(X_i1, X_block) are averaged
    over the blocks.  For m = 2 the blocks are singletons and the unique
    partition is used directly, so the result does not depend on the seed.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    m = kernel.order
    if n < m:
        raise InputError(f"need n >= m, got n={n}, m={m}")
    K = (n - 1) // (m - 1)
    s1 = np.arange(n, dtype=np.int64) if s1 is None else np.asarray(s1, dtype=np.int64)
    if len(s1) < 2:
        raise InputError("S1 must contain at least two indices")
    rng = substream(seed)
    width = K * (m - 1)
    block_rows = np.empty((len(s1), K, m), dtype=np.int64)
    everyone = np.arange(n, dtype=np.int64)
    for pos, i1 in enumerate(s1):
        others = np.delete(everyone, i1)
        if m > 2:
            others = others[rng.permutation(n - 1)]
        block_rows[pos, :, 0] = i1
        block_rows[pos, :, 1:] = others[:width].reshape(K, m - 1)
    if compiled is not None and V is None:
        V = compiled.base_values(data)
    p = kernel.p
    g_hat = np.empty((len(s1), p), dtype=np.float64)
    # Evaluate in bounded slices of S1 so the (rows, p) scratch stays small.
    per = max(1, 4096 // max(K, 1))
    for s in range(0, len(s1), per):
        e = min(s + per, len(s1))
        flat = block_rows[s:e].reshape(-1, m)
        vals = _eval_tuple_batch(data, kernel, flat, compiled, V, threads)
        g_hat[s:e] = vals.reshape(e - s, K, p).mean(axis=1)
    return ProjectionEstimates(g_hat, g_hat.mean(axis=0), s1, K)


def empirical_variances(
    proj: ProjectionEstimates, h_values: np.ndarray, u_prime: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate variances of the projection estimates and kernel values.

    Both use the 1/count normalization of the defining displays, not the
    unbiased 1/(count-1) variant.
    """
    sigma_g_sq = np.mean((proj.g_hat - proj.g_bar) ** 2, axis=0)
    sigma_h_sq = np.mean((h_values - u_prime) ** 2, axis=0)
    return sigma_g_sq, sigma_h_sq


def expand_signs(kinds: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Indices and signs of the equality-expanded coordinate vector.

    Each equality contributes the pair (f, -f); inequalities contribute a
    single coordinate.  The returned arrays map expanded coordinates back to
    raw ones, so any statistic on the expanded vector is ``sign * raw[idx]``.
    """
    idx, signs = [], []
    for j, kind in enumerate(kinds):
        idx.append(j)
        signs.append(1.0)
        if kind == "eq":
            idx.append(j)
            signs.append(-1.0)
    return np.array(idx, dtype=np.int64), np.array(signs, dtype=np.float64)


def check_nondegenerate(sigma_sq: np.ndarray, labels: Sequence[str]) -> None:
    """Raise DegenerateConstraintError naming the first zero-variance label."""
    bad = np.flatnonzero(sigma_sq <= 0.0)
    if bad.size:
        raise DegenerateConstraintError(labels[int(bad[0])])


def test_statistic(
    u_prime: np.ndarray,
    sigma_sq: np.ndarray,
    n: int,
    kinds: Sequence[str],
    labels: Sequence[str],
) -> float:
    """Max studentized coordinate sqrt(n) U'_j / sigma_j after expansion."""
    check_nondegenerate(sigma_sq, labels)
    idx, signs = expand_signs(kinds)
    z = math.sqrt(n) * u_prime / np.sqrt(sigma_sq)
    return float(np.max(signs * z[idx]))


def compute_ustat(
    data: np.ndarray,
    kernel: SymmetricKernel,
    budget: BudgetConfig,
    *,
    s1: Optional[Sequence[int]] = None,
    threads: int = 1,
    partition_seed: Optional[int] = None,
) -> tuple[UStatResult, ProjectionEstimates, TupleSample]:
    """Sample tuples and assemble the full studentized statistic.

    The projection subset ``s1`` defaults to all n indices; the
    block-partition shuffle seed defaults to a substream of the budget seed
    (role ``ROLE_PARTITION``).
    """
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] != budget.n:
        raise InputError(f"data has {data.shape[0]} rows but budget n={budget.n}")
    if kernel.order != budget.m:
        raise InputError(f"kernel order {kernel.order} != budget m={budget.m}")
    compiled = compile_kernel(kernel)
    V = compiled.base_values(data) if compiled is not None else None
    sample = sample_tuples(budget)
    u_prime, h_values = compute_u_prime(
        data, kernel, sample, compiled=compiled, V=V, threads=threads
    )
    if partition_seed is None:
        partition_seed = derive_seed(budget.seed, ROLE_PARTITION)
    proj = estimate_g(
        data, kernel, s1=s1, seed=partition_seed, compiled=compiled, V=V,
        threads=threads,
    )
    sigma_g_sq, sigma_h_sq = empirical_variances(proj, h_values, u_prime)
    sigma_sq = budget.m**2 * sigma_g_sq + (budget.n / budget.N) * sigma_h_sq
    t_stat = test_statistic(u_prime, sigma_sq, budget.n, kernel.kinds, kernel.labels)
    result = UStatResult(u_prime, h_values, sigma_g_sq, sigma_h_sq, sigma_sq, t_stat)
    return result, proj, sample


def load_data_csv(path, skip_header: bool = False) -> np.ndarray:
    """Read a data matrix from CSV, one sample per row, 64-bit floats."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1 if skip_header else 0,
                          dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc
    if data.size == 0:
        raise InputError(f"{path}: no data rows")
    return data
