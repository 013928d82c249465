"""Batch kernel evaluation over index tuples: the package's hot core.

For base estimators with ``eta == 1`` the permutation-averaged kernel admits a
closed form that avoids enumerating permutations at evaluation time: a
degree-r term contributes its block product once for every ordered r-tuple of
distinct argument slots, each with weight ``(m - r)!/m!``.  Grouping identical
slot/coordinate assignments folds that enumeration into a flat list of
*instances* ``(coefficient, slots, coordinates)`` whose products are summed
per constraint.  Base estimator values depend on single samples only, so they
are precomputed once per data row and shared by every tuple.

Two interchangeable engines evaluate the instance list over a batch of index
tuples:

* ``numba``: an ``@njit(nogil=True, cache=True)`` loop (default when numba
  imports);
* ``numpy``: gather/product/bincount vectorization, used as fallback and for
  cross-checking.

Both accumulate in the same instance order and produce bit-identical output.
Select explicitly with the environment variable ``POLYTEST_ENGINE=numba`` or
``POLYTEST_ENGINE=numpy``.  Batches may be chunked across worker threads; the
chunk boundaries are fixed, so results do not depend on the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import ConfigurationError, InputError
from .kernels import BaseEstimator, SymmetricKernel

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


_CHUNK_ROWS = 4096


def available_engines() -> tuple[str, ...]:
    return ("numba", "numpy") if HAVE_NUMBA else ("numpy",)


def resolve_engine(engine: str | None = None) -> str:
    """Resolve an engine name from the argument or POLYTEST_ENGINE."""
    name = engine or os.environ.get("POLYTEST_ENGINE", "").strip().lower() or "auto"
    if name == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in ("numba", "numpy"):
        raise ConfigurationError(f"unknown engine {name!r}; use 'numba' or 'numpy'")
    if name == "numba" and not HAVE_NUMBA:
        raise ConfigurationError("numba engine requested but numba is not importable")
    return name


@njit(cache=True, nogil=True)
def _eval_numba(V, tuples, coef, cons, slots, cols, const0, out):  # pragma: no cover
    B = tuples.shape[0]
    Q, R = slots.shape
    p = const0.shape[0]
    acc = np.empty(p, dtype=np.float64)
    for b in range(B):
        for j in range(p):
            acc[j] = 0.0
        row = tuples[b]
        for q in range(Q):
            v = coef[q]
            for k in range(R):
                v *= V[row[slots[q, k]], cols[q, k]]
            acc[cons[q]] += v
        for j in range(p):
            out[b, j] = const0[j] + acc[j]


def _eval_numpy(V, tuples, coef, cons, slots, cols, const0, out):
    B = tuples.shape[0]
    p = const0.shape[0]
    Vt = V[tuples]  # (B, m, T+1)
    vals = coef[None, :] * Vt[:, slots[:, 0], cols[:, 0]]
    for k in range(1, slots.shape[1]):
        vals = vals * Vt[:, slots[:, k], cols[:, k]]
    flat = (np.arange(B, dtype=np.int64)[:, None] * p + cons[None, :]).ravel()
    sums = np.bincount(flat, weights=vals.ravel(), minlength=B * p)
    out[:] = const0[None, :] + sums.reshape(B, p)


@dataclass
class CompiledKernel:
    """Flattened instance representation of a symmetric kernel (eta == 1)."""

    order: int
    p: int
    used_coords: np.ndarray   # parameter coordinates referenced, shape (T,)
    const0: np.ndarray        # per-constraint constant, shape (p,)
    coef: np.ndarray          # instance coefficients, shape (Q,)
    cons: np.ndarray          # instance -> constraint, nondecreasing, shape (Q,)
    slots: np.ndarray         # argument slots, shape (Q, R), padded
    cols: np.ndarray          # columns into the value table, shape (Q, R)
    kernel: SymmetricKernel

    def base_values(self, data: np.ndarray) -> np.ndarray:
        """Value table V: per-row base estimator values plus a ones column."""
        data = np.ascontiguousarray(data, dtype=np.float64)
        vals = self.kernel.base.batch_values(data, self.used_coords)
        return np.ascontiguousarray(
            np.concatenate([vals, np.ones((data.shape[0], 1))], axis=1)
        )

    def eval_tuples(
        self,
        V: np.ndarray,
        tuples: np.ndarray,
        threads: int = 1,
        engine: str | None = None,
        out: np.ndarray | None = None,
    ) -> np.ndarray:
        """Kernel values for each index tuple, shape ``(len(tuples), p)``."""
        tuples = np.ascontiguousarray(tuples, dtype=np.int64)
        if tuples.ndim != 2 or tuples.shape[1] != self.order:
            raise InputError(
                f"tuple array must be (B, {self.order}), got {tuples.shape}"
            )
        B = tuples.shape[0]
        if out is None:
            out = np.empty((B, self.p), dtype=np.float64)
        fn = _eval_numba if resolve_engine(engine) == "numba" else _eval_numpy
        # Chunk size is a function of the instance count only, never of the
        # thread count, so chunk boundaries (and results) are reproducible.
        chunk = max(16, min(_CHUNK_ROWS, 8_000_000 // max(len(self.coef), 1)))
        spans = [(s, min(s + chunk, B)) for s in range(0, B, chunk)]

        def run(span):
            s, e = span
            fn(V, tuples[s:e], self.coef, self.cons, self.slots, self.cols,
               self.const0, out[s:e])

        if threads > 1 and len(spans) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run, spans))
        else:
            for span in spans:
                run(span)
        return out


def compile_kernel(kernel: SymmetricKernel) -> CompiledKernel | None:
    """Flatten a kernel into instance arrays, or None if not compilable.

    Requires ``base.eta == 1`` and a ``batch_values`` implementation; callers
    fall back to the permutation-averaged reference evaluation otherwise.
    """
    base = kernel.base
    if base.eta != 1:
        return None
    if type(base).batch_values is BaseEstimator.batch_values:
        return None
    m = kernel.order
    used = sorted({
        i
        for coord in kernel.coords
        for _, idx in coord.program.poly.terms
        for i in idx
    })
    col_of = {t: k for k, t in enumerate(used)}
    ones_col = len(used)

    const0 = np.array(
        [c.program.poly.constant for c in kernel.coords], dtype=np.float64
    )
    max_r = max(
        (c.program.poly.total_degree for c in kernel.coords), default=0
    )
    coef_list: list[float] = []
    cons_list: list[int] = []
    slot_rows: list[tuple[int, ...]] = []
    col_rows: list[tuple[int, ...]] = []
    fact_m = math.factorial(m)
    for j, coord in enumerate(kernel.coords):
        # Group ordered slot assignments that yield identical products.
        grouped: dict[tuple[tuple[int, int], ...], float] = {}
        for term_coef, idx in coord.program.poly.terms:
            r = len(idx)
            weight = term_coef * math.factorial(m - r) / fact_m
            for arrangement in permutations(range(m), r):
                key = tuple(sorted(zip(arrangement, idx)))
                grouped[key] = grouped.get(key, 0.0) + weight
        for key in sorted(grouped):
            pairs = list(key) + [(0, -1)] * (max_r - len(key))
            coef_list.append(grouped[key])
            cons_list.append(j)
            slot_rows.append(tuple(s for s, _ in pairs))
            col_rows.append(tuple(
                ones_col if t < 0 else col_of[t] for _, t in pairs
            ))
    shape = (len(coef_list), max(max_r, 1))
    return CompiledKernel(
        order=m,
        p=kernel.p,
        used_coords=np.array(used, dtype=np.int64),
        const0=const0,
        coef=np.array(coef_list, dtype=np.float64),
        cons=np.array(cons_list, dtype=np.int64),
        slots=np.array(slot_rows, dtype=np.int64).reshape(shape),
        cols=np.array(col_rows, dtype=np.int64).reshape(shape),
        kernel=kernel,
    )
