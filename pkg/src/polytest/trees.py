"""Gaussian latent tree models: structure, constraints, covariances, sampling.

A latent tree is an undirected tree whose degree-1 nodes (leaves) carry the
observed variables; every inner node must have degree at least three.  The
model's covariance matrices factor along paths,

    sigma_vv = omega_v,
    sigma_uv = sqrt(omega_u omega_v) * prod of rho_e over the u-v path,

with leaf variances omega_v > 0 and edge correlations 0 < |rho_e| < 1.

Membership of a covariance matrix with no zero entries is characterized by a
finite list of polynomial constraints in the entries: per leaf triple, one
sign condition and three squared-correlation bounds; per leaf quadruple,
either (if some pair of leaf-to-leaf paths is edge-disjoint) a tetrad equality
and a dominance inequality for that split, or (if all three pairings share
edges) two tetrad equalities.  The total count is 2 C(l,4) + 4 C(l,3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InputError, NotPositiveDefiniteError
from .kernels import CovEntryBase, SymmetricKernel, build_kernel, vech_index
from .poly import PolynomialSpec

Edge = tuple[str, str]

TAGS = ("ineq_a", "ineq_b", "ineq_c", "tetrad_Q", "tetrad_notQ")


def _edge(a: str, b: str) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Tree:
    """Undirected tree with labeled nodes; leaves ordered by first appearance."""

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    leaves: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if len(self.nodes) != len(set(self.nodes)):
            raise InputError("duplicate node labels")
        object.__setattr__(
            self, "edges", tuple(_edge(a, b) for a, b in self.edges)
        )
        adj: dict[str, list[str]] = {v: [] for v in self.nodes}
        seen_edges = set()
        for a, b in self.edges:
            if a == b:
                raise InputError(f"self-loop at node {a!r}")
            e = _edge(a, b)
            if e in seen_edges:
                raise InputError(f"duplicate edge {a!r} - {b!r}")
            seen_edges.add(e)
            for v in (a, b):
                if v not in adj:
                    raise InputError(f"edge endpoint {v!r} is not a declared node")
            adj[a].append(b)
            adj[b].append(a)
        if len(self.edges) != len(self.nodes) - 1:
            raise InputError(
                f"a tree on {len(self.nodes)} nodes needs {len(self.nodes) - 1} "
                f"edges, got {len(self.edges)} (cycle or disconnection)"
            )
        if self.nodes:
            stack, reached = [self.nodes[0]], {self.nodes[0]}
            while stack:
                for w in adj[stack.pop()]:
                    if w not in reached:
                        reached.add(w)
                        stack.append(w)
            if len(reached) != len(self.nodes):
                missing = next(v for v in self.nodes if v not in reached)
                raise InputError(f"tree is disconnected: node {missing!r} unreachable")
        for v in self.nodes:
            if len(adj[v]) == 2:
                raise InputError(
                    f"inner node {v!r} has degree 2; inner nodes need degree >= 3"
                )
        leaves = tuple(v for v in self.nodes if len(adj[v]) <= 1)
        object.__setattr__(self, "leaves", leaves)
        object.__setattr__(self, "_adj", {v: tuple(ws) for v, ws in adj.items()})

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def neighbors(self, v: str) -> tuple[str, ...]:
        return self._adj[v]

    def path_edges(self, u: str, v: str) -> frozenset[Edge]:
        """Edge set of the unique simple path between two distinct nodes."""
        if u == v:
            raise InputError("path endpoints must differ")
        for w in (u, v):
            if w not in self._adj:
                raise InputError(f"unknown node {w!r}")
        parent: dict[str, str] = {u: u}
        stack = [u]
        while stack:
            x = stack.pop()
            if x == v:
                break
            for w in self._adj[x]:
                if w not in parent:
                    parent[w] = x
                    stack.append(w)
        edges = []
        x = v
        while x != u:
            edges.append(_edge(x, parent[x]))
            x = parent[x]
        return frozenset(edges)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]]) -> "Tree":
        edges = [(str(a), str(b)) for a, b in edges]
        nodes: list[str] = []
        seen = set()
        for a, b in edges:
            for v in (a, b):
                if v not in seen:
                    seen.add(v)
                    nodes.append(v)
        return cls(tuple(nodes), tuple(_edge(a, b) for a, b in edges))

    @classmethod
    def from_file(cls, path) -> "Tree":
        """Parse the plain-text format: one `nodeA nodeB` edge per line."""
        edges = []
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                fields = line.split()
                if len(fields) != 2:
                    raise InputError(
                        f"{path}:{lineno}: expected 'nodeA nodeB', got {line!r}"
                    )
                edges.append((fields[0], fields[1]))
        if not edges:
            raise InputError(f"{path}: no edges")
        return cls.from_edges(edges)


def star_tree(l: int) -> Tree:
    """Star tree: one hidden hub, leaves labeled '1'..'l'."""
    if l < 3:
        raise InputError("a star tree needs at least 3 leaves")
    return Tree.from_edges([("h", str(i)) for i in range(1, l + 1)])


def caterpillar_tree(l: int) -> Tree:
    """Binary caterpillar: spine s1..s(l-2), leaf pairs at both spine ends.

    Leaves '1' and '2' attach to s1, leaf i+1 to the interior node s_i, and
    leaves 'l-1' and 'l' to s(l-2).
    """
    if l < 4:
        raise InputError("a caterpillar tree needs at least 4 leaves")
    spine = [f"s{i}" for i in range(1, l - 1)]
    edges = [(spine[i], spine[i + 1]) for i in range(len(spine) - 1)]
    edges += [(spine[0], "1"), (spine[0], "2")]
    for i in range(2, l - 2):
        edges.append((spine[i - 1], str(i + 1)))
    edges += [(spine[-1], str(l - 1)), (spine[-1], str(l))]
    return Tree.from_edges(edges)


def random_tree(l: int, rng: np.random.Generator, collapse: float = 0.3) -> Tree:
    """Random valid tree on l leaves.

    Grows a random unrooted binary tree by edge subdivision, then contracts
    each inner edge independently with probability ``collapse`` (contraction
    merges inner nodes, so degrees stay >= 3; contracting everything yields
    the star).
    """
    if l < 4:
        raise InputError("need at least 4 leaves")
    parent = {}  # node -> representative after contraction
    edges = [("1", "i1"), ("2", "i1"), ("3", "i1")]
    inner_count = 1
    for leaf in range(4, l + 1):
        k = int(rng.integers(0, len(edges)))
        a, b = edges.pop(k)
        inner_count += 1
        mid = f"i{inner_count}"
        edges += [(a, mid), (b, mid), (str(leaf), mid)]
    rep: dict[str, str] = {}

    def find(v: str) -> str:
        while v in rep:
            v = rep[v]
        return v

    final_edges = []
    for a, b in edges:
        if a.startswith("i") and b.startswith("i") and rng.random() < collapse:
            ra, rb = find(a), find(b)
            if ra != rb:
                rep[rb] = ra
            continue
        final_edges.append((a, b))
    return Tree.from_edges([(find(a), find(b)) for a, b in final_edges])


# --- quadruple classification and constraint enumeration ---------------------

def classify_quadruple(
    tree: Tree, quad: Sequence[str]
) -> Optional[tuple[tuple[str, str], tuple[str, str]]]:
    """Classify a leaf quadruple by its three path-pair intersections.

    Returns None when all three pairings have edge-disjoint paths, else the
    unique pairing ((a, b), (c, d)) whose two paths are edge-disjoint.  A tree
    always realizes exactly one of the two cases; anything else indicates a
    structural bug and raises.
    """
    u, v, w, z = quad
    pairings = (
        ((u, v), (w, z)),
        ((u, w), (v, z)),
        ((u, z), (v, w)),
    )
    empty = [
        pair
        for pair in pairings
        if not tree.path_edges(*pair[0]) & tree.path_edges(*pair[1])
    ]
    if len(empty) == 3:
        return None
    if len(empty) == 1:
        return empty[0]
    raise AssertionError(
        f"path trichotomy violated for quadruple {quad}: {len(empty)} empty "
        "intersections"
    )


@dataclass(frozen=True)
class TreeConstraint:
    label: str
    kind: str                 # 'eq' or 'le'
    tag: str                  # one of TAGS
    leaves: tuple[str, ...]
    poly: PolynomialSpec


@dataclass(frozen=True)
class ConstraintSet:
    """Enumerated polynomial constraints of a latent tree model.

    Polynomials live in theta = vech(Sigma) coordinates over the tree's leaf
    order.  ``p_effective`` counts coordinates after equality expansion.
    """

    tree: Tree
    mode: str
    constraints: tuple[TreeConstraint, ...]

    @property
    def p(self) -> int:
        return len(self.constraints)

    @property
    def p_effective(self) -> int:
        return sum(2 if c.kind == "eq" else 1 for c in self.constraints)

    def tag_counts(self) -> dict[str, int]:
        counts = {tag: 0 for tag in TAGS}
        for c in self.constraints:
            counts[c.tag] += 1
        return counts

    def to_kernel(self) -> SymmetricKernel:
        """Vector kernel over covariance-entry estimators, one common order."""
        base = CovEntryBase(self.tree.n_leaves)
        return build_kernel(
            [(c.label, c.kind, c.poly) for c in self.constraints], base
        )


def enumerate_constraints(tree: Tree, mode: str = "all") -> ConstraintSet:
    """Enumerate the model's constraints for a tree with at least 4 leaves.

    ``mode='all'`` yields 2 C(l,4) + 4 C(l,3) constraints; the per-quadruple
    contribution is always two (one tetrad plus one dominance inequality for
    split quadruples, two tetrads otherwise).  ``mode='equalities_only'``
    keeps just the tetrads.
    """
    if mode not in ("all", "equalities_only"):
        raise InputError(f"mode must be 'all' or 'equalities_only', got {mode!r}")
    leaves = tree.leaves
    l = len(leaves)
    if l < 4:
        raise InputError(f"constraint enumeration needs >= 4 leaves, got {l}")
    pos = {leaf: k for k, leaf in enumerate(leaves)}

    def s(a: str, b: str) -> int:
        return vech_index(pos[a], pos[b], l)

    dim = l * (l + 1) // 2

    def poly(terms) -> PolynomialSpec:
        return PolynomialSpec(0.0, tuple(terms), dim)

    out: list[TreeConstraint] = []
    if mode == "all":
        for u, v, w in combinations(leaves, 3):
            out.append(TreeConstraint(
                f"ineq_a[{u},{v},{w}]", "le", "ineq_a", (u, v, w),
                poly([(-1.0, (s(u, v), s(u, w), s(v, w)))]),
            ))
            # sigma_xy^2 sigma_yz^2 <= sigma_yy^2 sigma_xz^2 for center y.
            for x, y, z in ((u, v, w), (u, w, v), (v, u, w)):
                out.append(TreeConstraint(
                    f"ineq_b[{x},{y},{z}]", "le", "ineq_b", (u, v, w),
                    poly([
                        (1.0, (s(x, y), s(x, y), s(y, z), s(y, z))),
                        (-1.0, (s(y, y), s(y, y), s(x, z), s(x, z))),
                    ]),
                ))
    for quad in combinations(leaves, 4):
        u, v, w, z = quad
        split = classify_quadruple(tree, quad)
        if split is not None:
            (a, b), (c, d) = split
            if mode == "all":
                out.append(TreeConstraint(
                    f"ineq_c[{a},{b}|{c},{d}]", "le", "ineq_c", quad,
                    poly([
                        (1.0, (s(a, c), s(a, c), s(b, d), s(b, d))),
                        (-1.0, (s(a, b), s(a, b), s(c, d), s(c, d))),
                    ]),
                ))
            out.append(TreeConstraint(
                f"tetrad_Q[{a},{b}|{c},{d}]", "eq", "tetrad_Q", quad,
                poly([
                    (1.0, (s(a, c), s(b, d))),
                    (-1.0, (s(a, d), s(b, c))),
                ]),
            ))
        else:
            out.append(TreeConstraint(
                f"tetrad_notQ[{u},{v},{w},{z}]#1", "eq", "tetrad_notQ", quad,
                poly([
                    (1.0, (s(u, z), s(v, w))),
                    (-1.0, (s(u, w), s(v, z))),
                ]),
            ))
            out.append(TreeConstraint(
                f"tetrad_notQ[{u},{v},{w},{z}]#2", "eq", "tetrad_notQ", quad,
                poly([
                    (1.0, (s(u, v), s(w, z))),
                    (-1.0, (s(u, w), s(v, z))),
                ]),
            ))
    return ConstraintSet(tree, mode, tuple(out))


def format_tree_constraint(c: TreeConstraint, tree: Tree) -> str:
    """One listing line: tag, leaf tuple, polynomial in sigma symbols, kind."""
    from .kernels import vech_pair

    leaves = tree.leaves
    l = len(leaves)

    def sym(t: int) -> str:
        u, v = vech_pair(t, l)
        return f"s[{leaves[v]},{leaves[u]}]"

    parts = []
    if c.poly.constant != 0.0:
        parts.append(f"{'-' if c.poly.constant < 0 else '+'} {abs(c.poly.constant):g}")
    for coef, idx in c.poly.terms:
        coefstr = "" if abs(coef) == 1.0 else f"{abs(coef):g}*"
        factors = "*".join(sym(i) for i in idx)
        parts.append(f"{'-' if coef < 0 else '+'} {coefstr}{factors}")
    expr = " ".join(parts)
    if expr.startswith("+ "):
        expr = expr[2:]
    rel = "= 0" if c.kind == "eq" else "<= 0"
    return f"{c.tag}\t({','.join(c.leaves)})\t{expr} {rel}"


# --- covariance parametrization and sampling ---------------------------------

@dataclass(frozen=True)
class TreeParams:
    """Leaf variances and edge correlations of a latent tree model."""

    omega: Mapping[str, float]
    rho: Mapping[Edge, float]

    def __post_init__(self):
        for v, val in self.omega.items():
            if not val > 0:
                raise InputError(f"omega[{v!r}] must be > 0, got {val}")
        for e, val in self.rho.items():
            if not 0 < abs(val) < 1:
                raise InputError(f"rho[{e!r}] must satisfy 0 < |rho| < 1, got {val}")


def _cholesky_or_eig(sigma: np.ndarray, context: str) -> None:
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(sigma)[0])
        raise NotPositiveDefiniteError(context, smallest) from None


def tree_covariance(tree: Tree, params: TreeParams) -> np.ndarray:
    """Model covariance over the leaves from path products of edge parameters.

    Verifies positive definiteness by Cholesky; a near-singular matrix gets a
    single retry with a diagonal jitter of 1e-10 * trace/l before raising.
    """
    leaves = tree.leaves
    l = len(leaves)
    sigma = np.empty((l, l), dtype=np.float64)
    for i, u in enumerate(leaves):
        sigma[i, i] = params.omega[u]
        for j in range(i + 1, l):
            v = leaves[j]
            val = math.sqrt(params.omega[u] * params.omega[v])
            for e in tree.path_edges(u, v):
                val *= params.rho[e]
            sigma[i, j] = sigma[j, i] = val
    try:
        np.linalg.cholesky(sigma)
        return sigma
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(sigma) / l
    sigma = sigma + jitter * np.eye(l)
    _cholesky_or_eig(sigma, "tree covariance not positive definite after jitter")
    return sigma


def setup_covariance(
    setup: str, l: int, rng: np.random.Generator
) -> tuple[Tree, np.ndarray]:
    """The three simulation setups: regular star, near-singular star, caterpillar.

    (a) star tree, all rho = sqrt(0.5), all omega = 2;
    (b) star tree, rho = 0.998 on the edges to the first two leaves and
        N(0, sd=0.1) draws elsewhere, omega = 100 on those leaves and 1 else;
    (c) binary caterpillar, rho = 0.998 except on edges incident to 4 evenly
        spaced spine nodes where rho is drawn as in (b), all omega = 2.
    """
    def small_rho() -> float:
        while True:
            r = 0.1 * rng.standard_normal()
            if 0 < abs(r) < 1:
                return float(r)

    if setup == "a":
        tree = star_tree(l)
        params = TreeParams(
            {leaf: 2.0 for leaf in tree.leaves},
            {e: math.sqrt(0.5) for e in tree.edges},
        )
    elif setup == "b":
        tree = star_tree(l)
        strong = {_edge("h", tree.leaves[0]), _edge("h", tree.leaves[1])}
        params = TreeParams(
            {leaf: 100.0 if k < 2 else 1.0 for k, leaf in enumerate(tree.leaves)},
            {e: 0.998 if e in strong else small_rho() for e in tree.edges},
        )
    elif setup == "c":
        tree = caterpillar_tree(l)
        n_spine = l - 2
        chosen = {f"s{math.ceil(n_spine * k / 5)}" for k in range(1, 5)}
        rho = {}
        for e in tree.edges:
            touched = e[0] in chosen or e[1] in chosen
            rho[e] = small_rho() if touched else 0.998
        params = TreeParams({leaf: 2.0 for leaf in tree.leaves}, rho)
    else:
        raise InputError(f"setup must be one of a, b, c; got {setup!r}")
    return tree, tree_covariance(tree, params)


def local_alternative(
    sigma: np.ndarray,
    shift: float,
    n: int,
    gamma: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Rank-one local alternative Sigma + gamma gamma^T shift / sqrt(n).

    ``gamma`` defaults to (0, ..., 0, 1, 1).  Raises when the perturbed matrix
    is not positive definite.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    l = sigma.shape[0]
    if shift < 0:
        raise InputError(f"shift must be >= 0, got {shift}")
    if gamma is None:
        gamma = np.zeros(l)
        gamma[-2:] = 1.0
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (l,):
        raise InputError(f"gamma must have length {l}")
    tilted = sigma + np.outer(gamma, gamma) * (shift / math.sqrt(n))
    _cholesky_or_eig(tilted, "local alternative not positive definite")
    return tilted


def sample_mvn(sigma: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. rows from N(0, Sigma) via the lower Cholesky factor."""
    sigma = np.asarray(sigma, dtype=np.float64)
    try:
        lower = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(sigma)[0])
        raise NotPositiveDefiniteError(
            "sampling covariance not positive definite", smallest
        ) from None
    return rng.standard_normal((n, sigma.shape[0])) @ lower.T
