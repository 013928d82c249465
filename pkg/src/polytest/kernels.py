"""Symmetric unbiased kernel estimators for polynomial parameter constraints.

Given unbiased base estimators ``theta_hat_i`` of the parameter coordinates,
each consuming ``eta`` samples, a polynomial ``f`` of total degree ``s`` is
estimated without bias by a three-step construction:

1. evaluate each factor ``theta_hat_i`` on its own block of ``eta`` samples,
   so a degree-r term consumes the first ``r * eta`` of ``eta * s`` samples;
2. sum the blocks' products with the polynomial's coefficients;
3. average the resulting function over all permutations of its arguments.

The result is an order ``m = eta * s`` symmetric kernel whose expectation over
i.i.d. samples is exactly ``f(theta)``.  A kernel of lower order is lifted to a
common order ``M`` by averaging over all size-``m`` argument subsets, which for
the permutation-averaged form amounts to evaluating the same block program with
the trailing arguments ignored.

Symmetrization is performed by explicit enumeration of the ``m!`` permutations
with an exactly rounded sum, so evaluation is bit-identical under any
permutation of the sample arguments.  The order is capped at ``MAX_ORDER = 6``
(720 permutations); the latent tree application needs order 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InputError
from .poly import PolynomialSpec

MAX_ORDER = 6


# --- base estimators ---------------------------------------------------------

def vech_index(u: int, v: int, n_vars: int) -> int:
    """Index of sigma_uv in vech(Sigma), column-major lower triangle."""
    if u < v:
        u, v = v, u
    if not 0 <= v <= u < n_vars:
        raise InputError(f"pair ({u},{v}) out of range for {n_vars} variables")
    return v * n_vars - (v * (v - 1)) // 2 + (u - v)


def vech_pair(t: int, n_vars: int) -> tuple[int, int]:
    """Inverse of :func:`vech_index`: the (row, column) pair of coordinate t."""
    if not 0 <= t < n_vars * (n_vars + 1) // 2:
        raise InputError(f"vech index {t} out of range for {n_vars} variables")
    v = 0
    while t >= n_vars - v:
        t -= n_vars - v
        v += 1
    return v + t, v


class BaseEstimator:
    """Family of unbiased estimators of the parameter coordinates.

    Subclasses fix the number of samples ``eta`` each estimator consumes and
    the parameter dimension ``dim``, and implement :meth:`evaluate`.  The
    evaluator must be deterministic and total on finite inputs.  Estimators
    with ``eta == 1`` may additionally implement :meth:`batch_values` to
    unlock the compiled evaluation engine.
    """

    eta: int
    dim: int

    def evaluate(self, coord: int, samples: np.ndarray) -> float:
        """Value of estimator ``coord`` on an ``(eta, l)`` block of samples."""
        raise NotImplementedError

    def batch_values(self, data: np.ndarray, coords: np.ndarray) -> Optional[np.ndarray]:
        """Per-row estimator values, shape ``(n, len(coords))``; eta == 1 only."""
        return None


class CovEntryBase(BaseEstimator):
    """Estimators of the covariance entries sigma_uv of zero-mean data.

    The parameter vector is vech(Sigma) for ``n_vars`` observed variables and
    coordinate (u, v) is estimated from a single sample by ``x_u * x_v``.
    """

    eta = 1

    def __init__(self, n_vars: int):
        if n_vars < 1:
            raise InputError("need at least one observed variable")
        self.n_vars = n_vars
        self.dim = n_vars * (n_vars + 1) // 2

    def evaluate(self, coord: int, samples: np.ndarray) -> float:
        u, v = vech_pair(coord, self.n_vars)
        return float(samples[0, u] * samples[0, v])

    def batch_values(self, data: np.ndarray, coords: np.ndarray) -> np.ndarray:
        pairs = np.array([vech_pair(int(t), self.n_vars) for t in coords], dtype=np.int64)
        if pairs.size == 0:
            return np.empty((data.shape[0], 0))
        return data[:, pairs[:, 0]] * data[:, pairs[:, 1]]

    def __repr__(self):
        return f"CovEntryBase(n_vars={self.n_vars})"


# --- kernel programs and coordinates -----------------------------------------

@dataclass(frozen=True)
class KernelProgram:
    """Unsymmetrized block estimator of one polynomial (step 2).

    ``order`` is ``eta * total_degree``; evaluation on at least ``order``
    samples assigns consecutive disjoint blocks of ``eta`` samples to the
    factors of each term and ignores unused trailing arguments.
    """

    poly: PolynomialSpec
    base: BaseEstimator
    order: int

    def evaluate(self, samples: np.ndarray) -> float:
        if samples.shape[0] < self.order:
            raise InputError(
                f"program of order {self.order} got {samples.shape[0]} samples"
            )
        eta = self.base.eta
        value = self.poly.constant
        for coef, idx in self.poly.terms:
            prod = coef
            for k, i in enumerate(idx):
                prod *= self.base.evaluate(i, samples[k * eta:(k + 1) * eta])
            value += prod
        return value


def build_unsymmetrized(poly: PolynomialSpec, base: BaseEstimator) -> KernelProgram:
    """Construct the block estimator program of order ``eta * total_degree``."""
    if poly.dim != base.dim:
        raise InputError(
            f"polynomial has dim {poly.dim} but base estimator has {base.dim}"
        )
    return KernelProgram(poly, base, base.eta * poly.total_degree)


@dataclass(frozen=True)
class KernelCoordinate:
    """One coordinate of a symmetric kernel: a program plus its lifted order."""

    program: KernelProgram
    order: int

    def evaluate(self, samples: np.ndarray) -> float:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] != self.order:
            raise InputError(
                f"kernel coordinate of order {self.order} got shape {samples.shape}"
            )
        if self.program.order == 0:
            return self.program.poly.constant
        # math.fsum returns the exactly rounded sum, so the average is
        # invariant under any permutation of the input rows.
        vals = [
            self.program.evaluate(samples[list(perm)])
            for perm in permutations(range(self.order))
        ]
        return math.fsum(vals) / math.factorial(self.order)


def symmetrize(program: KernelProgram, m: int) -> KernelCoordinate:
    """Average the block program over all ``m!`` argument permutations."""
    if m > MAX_ORDER:
        raise ConfigurationError(
            f"kernel order {m} exceeds the cap {MAX_ORDER} "
            f"({math.factorial(m)} permutations)"
        )
    if m < program.order:
        raise InputError(
            f"cannot symmetrize an order-{program.order} program at order {m}"
        )
    return KernelCoordinate(program, m)


def lift_order(coord: KernelCoordinate, m: int) -> KernelCoordinate:
    """Lift a kernel coordinate to a higher order by subset averaging.

    Averaging the order-m' kernel over all size-m' subsets of m arguments
    preserves symmetry and unbiasedness; for the permutation-averaged form it
    equals symmetrizing the original block program at order m.
    """
    if m < coord.order:
        raise InputError(f"cannot lift an order-{coord.order} kernel to order {m}")
    if m > MAX_ORDER:
        raise ConfigurationError(f"kernel order {m} exceeds the cap {MAX_ORDER}")
    return KernelCoordinate(coord.program, m)


@dataclass(frozen=True)
class SymmetricKernel:
    """A vector of symmetric kernel coordinates sharing one order and base.

    Attributes:
      order: common number of sample arguments m.
      base: the base estimator family shared by all coordinates.
      coords: per-constraint kernel coordinates.
      labels: constraint identifiers, used in reports and error messages.
      kinds: 'eq' or 'le' per coordinate, consumed by the test statistic.
    """

    order: int
    base: BaseEstimator
    coords: tuple[KernelCoordinate, ...]
    labels: tuple[str, ...]
    kinds: tuple[str, ...]

    @property
    def p(self) -> int:
        return len(self.coords)

    def __post_init__(self):
        if not (len(self.coords) == len(self.labels) == len(self.kinds)):
            raise InputError("coords, labels and kinds must have equal length")
        for kind in self.kinds:
            if kind not in ("eq", "le"):
                raise InputError(f"constraint kind must be 'eq' or 'le', got {kind!r}")
        for c in self.coords:
            if c.order != self.order:
                raise InputError("all kernel coordinates must share the common order")


def build_kernel(
    constraints: Sequence[tuple[str, str, PolynomialSpec]],
    base: BaseEstimator,
    order: int | None = None,
) -> SymmetricKernel:
    """Assemble the vector kernel for a list of (label, kind, polynomial).

    The common order defaults to ``eta * max total degree``; lower-degree
    coordinates are lifted to it so a single tuple sample serves all
    coordinates.
    """
    if not constraints:
        raise InputError("empty constraint set")
    programs = [build_unsymmetrized(poly, base) for _, _, poly in constraints]
    m = max(prog.order for prog in programs)
    if order is not None:
        if order < m:
            raise InputError(f"requested order {order} below required {m}")
        m = order
    if m < 1:
        raise InputError("constraint set is entirely constant; nothing to estimate")
    coords = tuple(symmetrize(prog, m) for prog in programs)
    labels = tuple(label for label, _, _ in constraints)
    kinds = tuple(kind for _, kind, _ in constraints)
    return SymmetricKernel(m, base, coords, labels, kinds)


def eval_kernel(kernel: SymmetricKernel, samples: np.ndarray) -> np.ndarray:
    """Evaluate all kernel coordinates on ``(order, l)`` sample rows.

    Pure and deterministic; bit-identical under permutation of the rows.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] != kernel.order:
        raise InputError(
            f"kernel of order {kernel.order} needs a ({kernel.order}, l) sample "
            f"array, got shape {samples.shape}"
        )
    return np.array([c.evaluate(samples) for c in kernel.coords], dtype=np.float64)
