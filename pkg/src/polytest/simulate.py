"""Monte Carlo harness for empirical size, p-value and power studies.

Replicates are independent work units: replicate ``rep`` derives its data,
parameter, tuple and multiplier streams from counter-keyed substreams of the
master seed, results are merged in replicate order, and the statistical
columns of the output tables are therefore bit-identical for a fixed master
seed regardless of the thread count.  Wall-clock columns are measured and
naturally vary between runs.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import bootstrap_draws, critical_value, p_value
from .errors import InputError, PolytestError
from .kernels import SymmetricKernel
from .streams import (
    ROLE_DATA,
    ROLE_MULTIPLIER,
    ROLE_PARAMS,
    ROLE_TUPLES,
    derive_seed,
    substream,
)
from .trees import local_alternative, sample_mvn, setup_covariance, enumerate_constraints
from .ustat import BudgetConfig, check_nondegenerate, compute_ustat

SIZE_HEADER = "setup,N,alpha,rejection_rate,mc_se,reps,wall_time_s"
POWER_HEADER = "setup,N,shift_h,rejection_rate,mc_se,reps,wall_time_s"


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid and scale of one simulation study.

    Desk-scale defaults keep a full study in the minutes range; larger grids
    (say l=15, n=500, reps=500, A=1000) are reachable through the CLI flags.
    """

    setup: str = "a"
    l: int = 8
    n: int = 200
    budgets: tuple[int, ...] = ()
    mode: str = "equalities_only"
    reps: int = 300
    alphas: tuple[float, ...] = (0.01, 0.05, 0.1)
    shift_grid: tuple[float, ...] = ()
    A: int = 500
    master_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise InputError("need at least one replicate")
        if self.setup not in ("a", "b", "c"):
            raise InputError(f"setup must be a, b or c, got {self.setup!r}")
        if not self.budgets:
            object.__setattr__(self, "budgets", (2 * self.n,))


@dataclass
class SimulationTable:
    """Aggregated rejection rates with Monte Carlo standard errors."""

    header: str
    rows: list[tuple] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [self.header]
        for row in self.rows:
            lines.append(",".join(_fmt(x) for x in row))
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _mc_se(rate: float, reps: int) -> float:
    return math.sqrt(rate * (1.0 - rate) / reps)


def _base_kernel(cfg: ExperimentConfig) -> SymmetricKernel:
    # Constraint structure depends only on the tree shape, never on the drawn
    # parameters, so one kernel is shared by all replicates.
    tree, _ = setup_covariance(cfg.setup, cfg.l, substream(0))
    kernel = enumerate_constraints(tree, cfg.mode).to_kernel()
    for N in cfg.budgets:
        BudgetConfig(n=cfg.n, m=kernel.order, N=N, seed=0)
    return kernel


def _replicate_sigma(cfg: ExperimentConfig, rep: int) -> np.ndarray:
    # Setups b and c redraw their random edge parameters every replicate.
    _, sigma = setup_covariance(
        cfg.setup, cfg.l, substream(cfg.master_seed, ROLE_PARAMS, rep)
    )
    return sigma


def _run_cell(
    cfg: ExperimentConfig,
    kernel: SymmetricKernel,
    data: np.ndarray,
    N: int,
    rep: int,
    cell: int,
) -> tuple[float, np.ndarray]:
    """One test on one replicate's data: returns (t_stat, W draws)."""
    budget = BudgetConfig(
        n=cfg.n, m=kernel.order, N=N,
        seed=derive_seed(cfg.master_seed, ROLE_TUPLES, rep, cell),
    )
    result, proj, _ = compute_ustat(data, kernel, budget, threads=1)
    check_nondegenerate(result.sigma_sq, kernel.labels)
    boot_seed = derive_seed(cfg.master_seed, ROLE_MULTIPLIER, rep, cell)
    w = bootstrap_draws(result, proj, budget, kernel, boot_seed, cfg.A)
    return result.t_stat, w


def _parallel_map(fn, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _check_error_budget(errors: list, reps: int) -> None:
    if len(errors) > 0.01 * reps:
        raise RuntimeError(
            f"{len(errors)} of {reps} replicates errored (> 1%); first: "
            f"{errors[0]}"
        )


def empirical_size(cfg: ExperimentConfig) -> SimulationTable:
    """Rejection rates under the null for each (budget, alpha) cell."""
    if any(h != 0 for h in cfg.shift_grid):
        raise InputError("empirical_size requires a null (no shift) configuration")
    kernel = _base_kernel(cfg)
    start = time.perf_counter()

    def one_rep(rep: int):
        try:
            sigma = _replicate_sigma(cfg, rep)
            data = sample_mvn(
                sigma, cfg.n, substream(cfg.master_seed, ROLE_DATA, rep, 0)
            )
            rejects = np.empty((len(cfg.budgets), len(cfg.alphas)), dtype=bool)
            for bi, N in enumerate(cfg.budgets):
                t_stat, w = _run_cell(cfg, kernel, data, N, rep, bi)
                for ai, alpha in enumerate(cfg.alphas):
                    rejects[bi, ai] = t_stat > critical_value(w, alpha)
            return rejects
        except PolytestError as exc:
            return exc

    outcomes = _parallel_map(one_rep, range(cfg.reps), cfg.threads)
    errors = [o for o in outcomes if isinstance(o, Exception)]
    _check_error_budget(errors, cfg.reps)
    good = np.array([o for o in outcomes if not isinstance(o, Exception)])
    wall = time.perf_counter() - start
    table = SimulationTable(SIZE_HEADER)
    reps = good.shape[0]
    for bi, N in enumerate(cfg.budgets):
        for ai, alpha in enumerate(cfg.alphas):
            rate = float(good[:, bi, ai].mean())
            table.rows.append(
                (cfg.setup, N, alpha, rate, _mc_se(rate, reps), reps,
                 round(wall / len(cfg.budgets), 3))
            )
    return table


def pvalue_study(cfg: ExperimentConfig) -> np.ndarray:
    """One null p-value per replicate, for uniformity checks (single budget)."""
    if len(cfg.budgets) != 1:
        raise InputError("pvalue_study expects exactly one budget")
    kernel = _base_kernel(cfg)

    def one_rep(rep: int):
        try:
            sigma = _replicate_sigma(cfg, rep)
            data = sample_mvn(
                sigma, cfg.n, substream(cfg.master_seed, ROLE_DATA, rep, 0)
            )
            t_stat, w = _run_cell(cfg, kernel, data, cfg.budgets[0], rep, 0)
            return p_value(w, t_stat)
        except PolytestError as exc:
            return exc

    outcomes = _parallel_map(one_rep, range(cfg.reps), cfg.threads)
    errors = [o for o in outcomes if isinstance(o, Exception)]
    _check_error_budget(errors, cfg.reps)
    return np.array([o for o in outcomes if not isinstance(o, Exception)])


def empirical_power(cfg: ExperimentConfig, alpha: float = 0.05) -> SimulationTable:
    """Rejection rates against rank-one local alternatives at a fixed level.

    Each shift in the grid tilts the replicate's covariance; rows whose
    replicates mostly fail (e.g. the tilt breaks positive definiteness) are
    marked invalid with an empty rate rather than aborting the study.
    """
    if not cfg.shift_grid:
        raise InputError("empirical_power needs a non-empty shift grid")
    kernel = _base_kernel(cfg)
    table = SimulationTable(POWER_HEADER)
    for hi, shift in enumerate(cfg.shift_grid):
        start = time.perf_counter()

        def one_rep(rep: int, shift=shift, hi=hi):
            try:
                sigma = _replicate_sigma(cfg, rep)
                tilted = local_alternative(sigma, shift, cfg.n)
                data = sample_mvn(
                    tilted, cfg.n, substream(cfg.master_seed, ROLE_DATA, rep, hi)
                )
                rejects = np.empty(len(cfg.budgets), dtype=bool)
                for bi, N in enumerate(cfg.budgets):
                    cell = hi * len(cfg.budgets) + bi
                    t_stat, w = _run_cell(cfg, kernel, data, N, rep, cell)
                    rejects[bi] = t_stat > critical_value(w, alpha)
                return rejects
            except PolytestError as exc:
                return exc

        outcomes = _parallel_map(one_rep, range(cfg.reps), cfg.threads)
        good = np.array([o for o in outcomes if not isinstance(o, Exception)])
        wall = round((time.perf_counter() - start) / len(cfg.budgets), 3)
        for bi, N in enumerate(cfg.budgets):
            if len(good) < 0.99 * cfg.reps:
                table.rows.append((cfg.setup, N, shift, "", "", len(good), wall))
                continue
            rate = float(good[:, bi].mean())
            table.rows.append(
                (cfg.setup, N, shift, rate, _mc_se(rate, len(good)), len(good), wall)
            )
    return table
