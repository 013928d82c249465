"""Gaussian multiplier bootstrap critical values and the full test.

One bootstrap replicate multiplies the centered kernel values and the centered
projection estimates by independent standard normals:

    U#_h = (1/sqrt(n_hat)) sum_i  xi'_i (h(X_i) - U')
    U#_g = (1/sqrt(n1))    sum_i1 xi_i1 (g_hat_i1 - g_bar)
    U#   = m U#_g + sqrt(n/N) U#_h

and reduces to ``W = max_j U#_j / sigma_j`` over the equality-expanded
coordinates.  Conditionally on the data, U# is centered Gaussian with
covariance ``m^2 Cov(g_hat) + (n/N) Cov(h)``, whose diagonal is exactly the
studentizer of the test statistic.

Replicate ``a`` draws its multipliers from the substream
``(seed, ROLE_MULTIPLIER, a)`` (first the tuple multipliers xi', then the S1
multipliers xi), so the replicates can be evaluated in any order or in
parallel without changing the result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError
from .kernels import SymmetricKernel
from .streams import ROLE_MULTIPLIER, ROLE_PARTITION, derive_seed, substream
from .ustat import (
    BudgetConfig,
    ProjectionEstimates,
    TupleSample,
    UStatResult,
    check_nondegenerate,
    compute_ustat,
    expand_signs,
)


@dataclass(frozen=True)
class BootstrapConfig:
    """Multiplier bootstrap settings.

    ``seed`` defaults to a substream of the budget seed when omitted, so a
    single seed determines the whole test.
    """

    A: int = 1000
    alpha: float = 0.05
    seed: Optional[int] = None

    def __post_init__(self):
        if self.A < 1:
            raise InputError(f"need at least one bootstrap replicate, got {self.A}")
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must be in (0, 1), got {self.alpha}")


def draw_u_sharp(
    result: UStatResult,
    proj: ProjectionEstimates,
    budget: BudgetConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One multiplier draw of the bootstrap vector U#."""
    n_hat, _ = result.h_values.shape
    n1 = proj.g_hat.shape[0]
    xi_h = rng.standard_normal(n_hat)
    xi_g = rng.standard_normal(n1)
    u_h = xi_h @ (result.h_values - result.u_prime) / math.sqrt(n_hat)
    u_g = xi_g @ (proj.g_hat - proj.g_bar) / math.sqrt(n1)
    return budget.m * u_g + math.sqrt(budget.n / budget.N) * u_h


def draw_w(
    result: UStatResult,
    proj: ProjectionEstimates,
    budget: BudgetConfig,
    kernel: SymmetricKernel,
    rng: np.random.Generator,
) -> float:
    """One bootstrap replicate of W = max_j U#_j / sigma_j (expanded)."""
    u = draw_u_sharp(result, proj, budget, rng)
    z = u / np.sqrt(result.sigma_sq)
    idx, signs = expand_signs(kernel.kinds)
    return float(np.max(signs * z[idx]))


def critical_value(w: np.ndarray, alpha: float) -> float:
    """Right-continuous empirical (1-alpha)-quantile of the draws.

    Returns the ceil((1-alpha) A)-th order statistic; the small slack guards
    against (1-alpha)*A landing a hair above an integer in floating point.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise InputError("empty bootstrap draw vector")
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    k = math.ceil((1.0 - alpha) * w.size - 1e-9)
    k = min(max(k, 1), w.size)
    return float(np.sort(w)[k - 1])


def p_value(w: np.ndarray, t_stat: float) -> float:
    """Randomization p-value (1 + #{W_a >= T}) / (A + 1), never zero."""
    w = np.asarray(w, dtype=np.float64)
    return (1 + int(np.count_nonzero(w >= t_stat))) / (w.size + 1)


@dataclass(frozen=True)
class TestReport:
    """Everything produced by one test run, with full provenance."""

    t_stat: float
    critical_value: float
    p_value: float
    reject: bool
    alpha: float
    n: int
    m: int
    N: int
    n_hat: int
    n1: int
    A: int
    seed: int
    boot_seed: int
    labels: tuple[str, ...]
    kinds: tuple[str, ...]
    u_prime: np.ndarray
    sigma_g_sq: np.ndarray
    sigma_h_sq: np.ndarray
    sigma_sq: np.ndarray
    w: np.ndarray

    def to_dict(self) -> dict:
        """JSON-ready dictionary with the documented report schema."""
        return {
            "p_value": self.p_value,
            "t_stat": self.t_stat,
            "critical_value": self.critical_value,
            "reject": self.reject,
            "alpha": self.alpha,
            "N": self.N,
            "n": self.n,
            "n1": self.n1,
            "A": self.A,
            "seed": self.seed,
            "n_hat": self.n_hat,
            "m": self.m,
            "boot_seed": self.boot_seed,
            "per_constraint": [
                {
                    "label": self.labels[j],
                    "kind": self.kinds[j],
                    "u_prime": float(self.u_prime[j]),
                    "sigma_g_sq": float(self.sigma_g_sq[j]),
                    "sigma_h_sq": float(self.sigma_h_sq[j]),
                }
                for j in range(len(self.labels))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def bootstrap_draws(
    result: UStatResult,
    proj: ProjectionEstimates,
    budget: BudgetConfig,
    kernel: SymmetricKernel,
    boot_seed: int,
    A: int,
) -> np.ndarray:
    """All A bootstrap replicates of W, one substream per replicate."""
    h_centered = result.h_values - result.u_prime
    g_centered = proj.g_hat - proj.g_bar
    sigma = np.sqrt(result.sigma_sq)
    idx, signs = expand_signs(kernel.kinds)
    n_hat = h_centered.shape[0]
    n1 = g_centered.shape[0]
    root_h = math.sqrt(n_hat)
    root_g = math.sqrt(n1)
    root_an = math.sqrt(budget.n / budget.N)
    w = np.empty(A, dtype=np.float64)
    for a in range(A):
        rng = substream(boot_seed, ROLE_MULTIPLIER, a)
        # Same draw order and arithmetic as draw_u_sharp, so the two paths
        # produce bit-identical replicates.
        xi_h = rng.standard_normal(n_hat)
        xi_g = rng.standard_normal(n1)
        u_h = xi_h @ h_centered / root_h
        u_g = xi_g @ g_centered / root_g
        z = (budget.m * u_g + root_an * u_h) / sigma
        w[a] = np.max(signs * z[idx])
    return w


def run_test(
    data: np.ndarray,
    kernel: SymmetricKernel,
    budget: BudgetConfig,
    boot: BootstrapConfig,
    *,
    n1: Optional[int] = None,
    threads: int = 1,
) -> TestReport:
    """Run the complete test: sample, estimate, studentize, bootstrap, decide.

    ``n1`` restricts the projection subset to the first n1 sample indices;
    by default all n indices are used.
    """
    s1 = None
    if n1 is not None:
        if not 2 <= n1 <= budget.n:
            raise InputError(f"n1 must be in [2, n], got {n1}")
        s1 = np.arange(n1)
    result, proj, sample = compute_ustat(
        data, kernel, budget, s1=s1, threads=threads
    )
    check_nondegenerate(result.sigma_sq, kernel.labels)
    boot_seed = boot.seed if boot.seed is not None else derive_seed(
        budget.seed, ROLE_MULTIPLIER
    )
    w = bootstrap_draws(result, proj, budget, kernel, boot_seed, boot.A)
    c_w = critical_value(w, boot.alpha)
    p = p_value(w, result.t_stat)
    return TestReport(
        t_stat=result.t_stat,
        critical_value=c_w,
        p_value=p,
        reject=bool(result.t_stat > c_w),
        alpha=boot.alpha,
        n=budget.n,
        m=budget.m,
        N=budget.N,
        n_hat=sample.n_hat,
        n1=len(proj.s1),
        A=boot.A,
        seed=budget.seed,
        boot_seed=boot_seed,
        labels=kernel.labels,
        kinds=kernel.kinds,
        u_prime=result.u_prime,
        sigma_g_sq=result.sigma_g_sq,
        sigma_h_sq=result.sigma_h_sq,
        sigma_sq=result.sigma_sq,
        w=w,
    )
