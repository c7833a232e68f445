"""Tree computations: broadcast sampling, exact root posteriors, reconstruction bias,
and the closed-form Ising recursion (f, its fixed point, edge correlation and
free energy).

Tree algorithms run on *forests*: many trees concatenated into flat arrays and
processed one depth level at a time, so a batch of Monte Carlo trials costs a
handful of vectorized operations per level.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ensembles import Tree, _check_rng, regular_tree, sample_galton_watson_tree
from .exact import ImpossibleEvidence
from .model import antiferro_table_eps, coloring_table, ising_table, ising_table_eps, weight_table
from .parallel import chunk_sizes, derive_rng, mean_stderr, pmap


@dataclass(frozen=True)
class IsingTreeParams:
    k: int
    theta: float
    lam: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.theta < 1:
            raise ValueError("theta must lie in [0, 1)")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class TreeModel:
    """Edge tables, the law of the table attached to each edge, and a vertex bias."""

    tables: tuple
    weight_p: tuple | None = None
    vertex_bias: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(weight_table(t) for t in self.tables))
        if self.weight_p is not None and len(self.weight_p) != len(self.tables):
            raise ValueError("weight_p needs one probability per table")

    @property
    def q(self) -> int:
        return self.tables[0].shape[0]

    @classmethod
    def ising(cls, theta: float, lam: float = 0.0) -> "TreeModel":
        bias = None if lam == 0 else np.array([1 + lam, 1 - lam])
        return cls((ising_table(theta),), None, bias)

    @classmethod
    def spin_glass(cls, eps: float) -> "TreeModel":
        return cls((ising_table_eps(eps), antiferro_table_eps(eps)), (0.5, 0.5))

    @classmethod
    def coloring(cls, q: int, eps: float) -> "TreeModel":
        return cls((coloring_table(q, eps),))


# ---------------------------------------------------------------- forests

@dataclass
class _Forest:
    parent: np.ndarray
    depth: np.ndarray
    weight_id: np.ndarray
    roots: np.ndarray

    @classmethod
    def of(cls, trees: Sequence[Tree]) -> "_Forest":
        sizes = np.array([len(t) for t in trees])
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        parent = np.concatenate(
            [np.where(t.parent >= 0, t.parent + off, -1) for t, off in zip(trees, offsets)]
        )
        depth = np.concatenate([t.depth for t in trees])
        wid = np.concatenate([t.weight_id for t in trees])
        return cls(parent, depth, wid, offsets)

    def levels(self):
        order = np.argsort(self.depth, kind="stable")
        bounds = np.searchsorted(self.depth[order], np.arange(self.depth.max() + 2))
        return [order[bounds[d]:bounds[d + 1]] for d in range(self.depth.max() + 1)]


def _upward(forest: _Forest, T: np.ndarray, init: np.ndarray, levels=None) -> np.ndarray:
    """Normalized subtree beliefs for every node, leaves to roots.

    ``init[i]`` is the node's own factor: the vertex bias, or the evidence
    likelihood for observed nodes. Raises if some subtree has zero mass.
    """
    levels = forest.levels() if levels is None else levels
    b = init.astype(float, copy=True)
    for d in range(len(levels) - 1, 0, -1):
        nodes = levels[d]
        if len(nodes) == 0:
            continue
        s = b[nodes].sum(axis=1, keepdims=True)
        if np.any(s <= 0):
            raise ImpossibleEvidence("evidence has zero probability")
        b[nodes] /= s
        # symmetric tables: message(x_parent) = sum_y psi(x_parent, y) belief(y)
        msg = np.einsum("nxy,ny->nx", T[forest.weight_id[nodes]], b[nodes])
        msg /= msg.sum(axis=1, keepdims=True)
        np.multiply.at(b, forest.parent[nodes], msg)
    top = levels[0]
    s = b[top].sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise ImpossibleEvidence("evidence has zero probability")
    b[top] /= s
    return b


def _base_factors(n_nodes: int, model: TreeModel) -> np.ndarray:
    if model.vertex_bias is None:
        return np.ones((n_nodes, model.q))
    return np.tile(np.asarray(model.vertex_bias, dtype=float), (n_nodes, 1))


def _broadcast(forest: _Forest, model: TreeModel, rng, levels=None) -> np.ndarray:
    levels = forest.levels() if levels is None else levels
    T = np.stack(model.tables)
    n = len(forest.parent)
    up = _upward(forest, T, _base_factors(n, model), levels)
    x = np.empty(n, dtype=np.int64)
    x[levels[0]] = _draw(up[levels[0]], rng)
    for d in range(1, len(levels)):
        nodes = levels[d]
        if len(nodes) == 0:
            continue
        rows = T[forest.weight_id[nodes], x[forest.parent[nodes]], :] * up[nodes]
        x[nodes] = _draw(rows, rng)
    return x


def _draw(weights: np.ndarray, rng) -> np.ndarray:
    c = np.cumsum(weights, axis=1)
    u = rng.random(len(weights)) * c[:, -1]
    return np.minimum((u[:, None] >= c).sum(axis=1), weights.shape[1] - 1)


# ---------------------------------------------------------------- public tree operations

def broadcast_sample(tree: Tree, model: TreeModel, rng) -> np.ndarray:
    """Exact sample of the tree Gibbs measure, root first then children given parents.

    For tables with constant row sums and no bias this is the usual broadcast
    (root uniform, child drawn from the normalized row of its parent's value);
    otherwise the children's kernels are reweighted by their subtree mass.
    """
    rng = _check_rng(rng)
    return _broadcast(_Forest.of([tree]), model, rng)


def upward_root_posterior(tree: Tree, model: TreeModel, evidence: Mapping[int, object] | None = None) -> np.ndarray:
    """Exact law of the root given evidence, by leaf-to-root message passing.

    ``evidence`` maps node -> observed state (int) or a likelihood vector over
    states. Observed nodes do not receive the vertex bias; their law is given by
    the evidence alone.
    """
    evidence = {} if evidence is None else evidence
    init = _base_factors(len(tree), model)
    for node, ev in evidence.items():
        if not 0 <= node < len(tree):
            raise ValueError(f"evidence on unknown node {node}")
        if np.ndim(ev) == 0:
            row = np.zeros(model.q)
            row[int(ev)] = 1.0
        else:
            row = np.asarray(ev, dtype=float)
            if row.shape != (model.q,) or np.any(row < 0):
                raise ValueError("likelihood evidence needs one nonnegative entry per state")
        init[node] = row
    b = _upward(_Forest.of([tree]), np.stack(model.tables), init)
    return b[0]


def ising_field_evidence(nodes, h0: float) -> dict[int, np.ndarray]:
    """Independent Bernoulli((1+h0)/2) priors on ``nodes`` as likelihood evidence."""
    if not -1 <= h0 <= 1:
        raise ValueError("h0 must lie in [-1, 1]")
    row = np.array([(1 + h0) / 2, (1 - h0) / 2])
    return {int(v): row for v in nodes}


@dataclass(frozen=True)
class TreeEnsemble:
    kind: str  # "regular" or "gw"
    param: float  # k for regular, gamma for gw

    def __post_init__(self):
        if self.kind not in ("regular", "gw"):
            raise ValueError("tree ensemble kind must be 'regular' or 'gw'")

    def sample(self, depth: int, weight_p, rng) -> Tree:
        if self.kind == "regular":
            return regular_tree(int(self.param), depth, weight_p=weight_p, rng=rng)
        return sample_galton_watson_tree(self.param, depth, rng, weight_p=weight_p)


def _bias_chunk(task) -> np.ndarray:
    ensemble, model, t, size, seed, stream, index, evidence_state = task
    rng = derive_rng(seed, stream, index)
    trees = [ensemble.sample(t, model.weight_p, rng) for _ in range(size)]
    forest = _Forest.of(trees)
    levels = forest.levels()
    T = np.stack(model.tables)
    n = len(forest.parent)
    base = _base_factors(n, model)
    prior = _upward(forest, T, base, levels)[forest.roots]
    observed = forest.depth == t
    if evidence_state is None:
        x = _broadcast(forest, model, rng, levels)
    else:
        x = np.full(n, int(evidence_state))
    init = base.copy()
    init[observed] = np.eye(model.q)[x[observed]]
    post = _upward(forest, T, init, levels)[forest.roots]
    return 0.5 * np.abs(post - prior).sum(axis=1)


def tree_reconstruction_bias(
    ensemble: TreeEnsemble,
    model: TreeModel,
    t: int,
    trials: int,
    seed: int = 0,
    jobs: int | None = 1,
    evidence_state: int | None = None,
    stream: int = 0,
    return_samples: bool = False,
):
    """Monte Carlo mean and standard error of ``TV(P(X_root | X_depth_t), P(X_root))``.

    Each trial draws a tree from ``ensemble`` (and its edge tables), broadcasts
    a configuration and conditions on the generation at depth ``t``. Trees that
    die out before depth ``t`` contribute 0. ``evidence_state`` replaces the
    broadcast by a fixed boundary with every depth-``t`` node in that state.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    tasks = [
        (ensemble, model, t, size, seed, stream, i, evidence_state)
        for i, size in enumerate(chunk_sizes(trials))
    ]
    values = np.concatenate(pmap(_bias_chunk, tasks, jobs))
    mean, se = mean_stderr(values)
    if return_samples:
        return mean, se, values
    return mean, se


# ---------------------------------------------------------------- scalar Ising recursion

def ising_f_step(h, params: IsingTreeParams):
    """One level of the regular-tree Ising recursion for the root bias."""
    k, th, lam = params.k, params.theta, params.lam
    a = (1 + lam) * (1 + th * np.asarray(h, dtype=float)) ** k
    b = (1 - lam) * (1 - th * np.asarray(h, dtype=float)) ** k
    out = (a - b) / (a + b)
    return float(out) if np.ndim(out) == 0 else out


def ising_f_iterate(h0, params: IsingTreeParams, t: int):
    h = h0
    for _ in range(t):
        h = ising_f_step(h, params)
    return h


class FixedPointError(RuntimeError):
    def __init__(self, message: str, last: float):
        super().__init__(message)
        self.last = last


def ising_fixed_point(params: IsingTreeParams, tol: float = 1e-12, max_iter: int = 1_000_000) -> float:
    """Largest nonnegative fixed point of ``ising_f_step``, iterating down from h = 1.

    At zero field with ``k * theta <= 1`` the origin is the only nonnegative
    fixed point and is returned directly; near the critical point the iteration
    would otherwise converge only polynomially.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if params.lam == 0 and params.k * params.theta <= 1:
        return 0.0
    h = 1.0
    for _ in range(max_iter):
        nxt = ising_f_step(h, params)
        if abs(nxt - h) <= tol:
            return nxt
        h = nxt
    raise FixedPointError(f"no convergence within {max_iter} iterations", h)


def ising_edge_correlation(theta: float, h):
    h = np.asarray(h, dtype=float)
    out = (theta + h ** 2) / (1 + theta * h ** 2)
    return float(out) if out.ndim == 0 else out


def ising_free_energy(theta: float, lam: float, h, k: int):
    """Bethe free energy density of the (k+1)-regular Ising model at bias ``h``."""
    h = np.asarray(h, dtype=float)
    out = -(k + 1) / 2 * np.log1p(theta * h ** 2) + np.log(
        (1 + lam) * (1 + theta * h) ** (k + 1) + (1 - lam) * (1 - theta * h) ** (k + 1)
    )
    return float(out) if out.ndim == 0 else out


def ising_root_bias_plus(theta: float, k: int, t: int) -> float:
    """P(root = + | all depth-t vertices +) on the tree whose root has k+1 children."""
    if t < 1:
        raise ValueError("t must be >= 1")
    h = ising_f_iterate(1.0, IsingTreeParams(k, theta), t - 1)
    g = ising_f_step(h, IsingTreeParams(k + 1, theta))
    return 0.5 * (1 + g)


def kesten_stigum(branching: float, theta: float) -> float:
    """``branching * theta**2``; tree reconstruction is possible iff it exceeds 1."""
    return branching * theta ** 2


__all__ = [
    "IsingTreeParams", "TreeModel", "TreeEnsemble", "FixedPointError",
    "broadcast_sample", "upward_root_posterior", "ising_field_evidence",
    "tree_reconstruction_bias", "ising_f_step", "ising_f_iterate", "ising_fixed_point",
    "ising_edge_correlation", "ising_free_energy", "ising_root_bias_plus", "kesten_stigum",
]
