"""Brute-force oracles for small graphical models.

Everything here enumerates the configuration cube and works in the log domain
with a max shift, so hard constraints (zero weights) are exact. Enumeration is
refused above ``budget`` states instead of being silently subsampled.
"""
from __future__ import annotations

from collections import deque
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .ensembles import Multigraph, ball_decompose, _check_rng
from .model import GraphicalModel, log_weights, spins

DEFAULT_BUDGET = 2 ** 24
_CHUNK = 2 ** 16


class BudgetExceeded(RuntimeError):
    pass


class ImpossibleEvidence(ValueError):
    """Conditioning event has zero probability."""


def tv(p, q) -> float:
    """Total variation distance ``(1/2) sum |p - q|``."""
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def _check_budget(q: int, n: int, budget: int) -> None:
    if n > 0 and n * np.log(q) > np.log(budget) + 1e-9:
        raise BudgetExceeded(f"{q}^{n} states exceed the enumeration budget {budget}")


def states_from_index(q: int, n: int, idx) -> np.ndarray:
    """Decode cube indices into configurations; vertex 0 is the most significant digit."""
    idx = np.asarray(idx, dtype=np.int64)
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % q


def enumerate_states(q: int, n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Configurations with indices ``start..stop-1``."""
    stop = q ** n if stop is None else stop
    return states_from_index(q, n, np.arange(start, stop, dtype=np.int64))


def _log_weight_cube(gm: GraphicalModel, budget: int) -> np.ndarray:
    _check_budget(gm.q, gm.n, budget)
    total = gm.q ** gm.n
    out = np.empty(total)
    for a in range(0, total, _CHUNK):
        b = min(total, a + _CHUNK)
        out[a:b] = log_weights(gm, enumerate_states(gm.q, gm.n, a, b))
    return out


def exact_partition(gm: GraphicalModel, budget: int = DEFAULT_BUDGET) -> float:
    """``log Z``; ``-inf`` when every configuration has zero weight."""
    lw = _log_weight_cube(gm, budget)
    if np.all(np.isneginf(lw)):
        return -np.inf
    return float(logsumexp(lw))


def joint_distribution(gm: GraphicalModel, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Full Gibbs law as an array of shape ``(q,) * N``."""
    lw = _log_weight_cube(gm, budget)
    if np.all(np.isneginf(lw)):
        raise ImpossibleEvidence("model has zero total weight")
    p = np.exp(lw - lw.max())
    p /= p.sum()
    return p.reshape((gm.q,) * gm.n)


def _marginal_of(joint: np.ndarray, U) -> np.ndarray:
    U = list(U)
    if len(set(U)) != len(U):
        raise ValueError("marginal vertex set has repeats")
    rest = tuple(i for i in range(joint.ndim) if i not in U)
    m = joint.sum(axis=rest)
    # axes of m are the kept vertices in increasing order; reorder to U's order
    kept = sorted(U)
    return np.transpose(m, [kept.index(u) for u in U])


def exact_marginal(gm: GraphicalModel, U, budget: int = DEFAULT_BUDGET, joint=None) -> np.ndarray:
    """Marginal law of ``X_U`` as an array of shape ``(q,) * len(U)`` in the order of ``U``."""
    joint = joint_distribution(gm, budget) if joint is None else joint
    return _marginal_of(joint, U)


def _free_component(g: Multigraph, r: int, blocked) -> list[int]:
    """Vertices reachable from ``r`` without entering ``blocked``."""
    seen = {r}
    queue = deque([r])
    adj = g.neighbors
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in seen and y not in blocked:
                seen.add(y)
                queue.append(y)
    return sorted(seen)


def exact_conditional_root(
    gm: GraphicalModel, r: int, evidence: Mapping[int, int], budget: int = DEFAULT_BUDGET
) -> np.ndarray:
    """Law of ``X_r`` given ``X_j = evidence[j]``.

    By the Markov property only the component of ``r`` left after deleting the
    evidence vertices matters, so only that component is enumerated.
    """
    q = gm.q
    if r in evidence:
        out = np.zeros(q)
        out[evidence[r]] = 1.0
        return out
    comp = _free_component(gm.graph, r, evidence)
    _check_budget(q, len(comp), budget)
    pos = {v: i for i, v in enumerate(comp)}
    e = gm.graph.edges
    inside = np.array([u in pos or v in pos for u, v in e[:, :2].tolist()], dtype=bool)
    sub = e[inside] if len(e) else e
    lt, lb = gm.log_tables, gm.log_bias
    X = enumerate_states(q, len(comp))
    lw = lb[X].sum(axis=1)
    for u, v, w in sub.tolist():
        xu = X[:, pos[u]] if u in pos else np.full(len(X), evidence[u])
        xv = X[:, pos[v]] if v in pos else np.full(len(X), evidence[v])
        lw = lw + lt[w, xu, xv]
    if np.all(np.isneginf(lw)):
        raise ImpossibleEvidence(f"evidence around vertex {r} has zero probability")
    p = np.exp(lw - lw.max())
    out = np.bincount(X[:, pos[r]], weights=p, minlength=q)
    return out / out.sum()


def _tv_joint_vs_product(joint: np.ndarray, r: int, far: list[int]) -> float:
    if r in far:
        pf = _marginal_of(joint, far)
        pr = _marginal_of(joint, [r])
        pj = np.zeros((len(pr),) + pf.shape)
        j = far.index(r)
        for a in range(len(pr)):
            sl = [slice(None)] * len(far)
            sl[j] = a
            pj[(a,) + tuple(sl)] = pf[tuple(sl)]
    else:
        pj = _marginal_of(joint, [r] + far)
        pf = pj.sum(axis=0)
        pr = pj.reshape(len(pj), -1).sum(axis=1)
    prod = pr.reshape((-1,) + (1,) * len(far)) * pf[None, ...]
    return tv(pj, prod)


def _tv_by_boundary(joint: np.ndarray, r: int, boundary: list[int]) -> float:
    pr = _marginal_of(joint, [r])
    if r in boundary:
        # conditional is a point mass at the root's own value
        return float(sum(pr[a] * tv(np.eye(len(pr))[a], pr) for a in range(len(pr))))
    pj = _marginal_of(joint, [r] + boundary).reshape(len(pr), -1)
    pd = pj.sum(axis=0)
    total = 0.0
    for col in np.flatnonzero(pd > 0):
        total += pd[col] * tv(pj[:, col] / pd[col], pr)
    return float(total)


def exact_joint_product_tv(
    gm: GraphicalModel, r: int, t: int, budget: int = DEFAULT_BUDGET, method: str = "both", joint=None
) -> float:
    """``|| P(X_r, X_far) - P(X_r) P(X_far) ||_TV`` with ``far`` = vertices at distance >= t.

    ``method="joint"`` sums over the far configuration directly, ``"boundary"``
    averages ``TV(P(X_r | X_D), P(X_r))`` over the boundary law, and ``"both"``
    computes the two and checks they agree.
    """
    joint = joint_distribution(gm, budget) if joint is None else joint
    dec = ball_decompose(gm.graph, r, t)
    far = sorted(dec.residual_vertices)
    if method == "joint":
        return _tv_joint_vs_product(joint, r, far)
    if method == "boundary":
        return _tv_by_boundary(joint, r, sorted(dec.boundary))
    if method != "both":
        raise ValueError(f"unknown method {method!r}")
    a = _tv_joint_vs_product(joint, r, far)
    b = _tv_by_boundary(joint, r, sorted(dec.boundary))
    if abs(a - b) > 1e-10:
        raise AssertionError(f"joint/product TV mismatch: {a} vs {b}")
    return a


def _check_ising_zero_field(gm: GraphicalModel) -> None:
    if gm.q != 2:
        raise ValueError("constrained partition functions need a binary alphabet")
    if gm.vertex_bias is not None and not np.allclose(gm.vertex_bias, gm.vertex_bias[0]):
        raise ValueError("constrained partition functions need zero field")


def magnetization_levels(gm: GraphicalModel, budget: int = DEFAULT_BUDGET) -> dict[int, float]:
    """``{n_plus - n_minus: log Zhat}`` over every reachable level."""
    _check_ising_zero_field(gm)
    lw = _log_weight_cube(gm, budget)
    s = spins(enumerate_states(2, gm.n)).sum(axis=1)
    out = {}
    for level in range(-gm.n, gm.n + 1, 2):
        sel = lw[s == level]
        out[level] = float(logsumexp(sel)) if np.any(np.isfinite(sel)) else -np.inf
    return out


def constrained_partition(gm: GraphicalModel, M: float, budget: int = DEFAULT_BUDGET) -> float:
    """Log of the weight sum over configurations with ``n_plus - n_minus = N * M``."""
    _check_ising_zero_field(gm)
    level = gm.n * M
    if abs(level - round(level)) > 1e-9:
        raise ValueError("N * M must be an integer")
    level = int(round(level))
    if (level - gm.n) % 2:
        raise ValueError("N * M must have the parity of N")
    if abs(level) > gm.n:
        return -np.inf
    return magnetization_levels(gm, budget)[level]


def tilt_distribution(p, q) -> np.ndarray:
    """``p(x) q(x) / z`` with ``z = sum p q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must live on the same set")
    prod = p * q
    z = prod.sum()
    if not z > 0:
        raise ZeroDivisionError("p and q have disjoint supports")
    return prod / z


def exact_sample(gm: GraphicalModel, size: int, rng, joint=None) -> np.ndarray:
    """Independent exact draws, shape ``(size, N)``."""
    rng = _check_rng(rng)
    joint = joint_distribution(gm) if joint is None else joint
    flat = joint.ravel()
    idx = rng.choice(len(flat), size=size, p=flat)
    return states_from_index(gm.q, gm.n, idx)


def submodel(gm: GraphicalModel, vertices, edge_idx, bias_vertices=None) -> GraphicalModel:
    """Model on ``vertices`` (relabeled in increasing order) keeping only ``edge_idx``.

    ``bias_vertices`` (default: all kept vertices) receive the vertex bias; the
    others get none, which avoids counting a shared vertex's bias twice when a
    model is split into two edge-disjoint pieces.
    """
    vertices = sorted(vertices)
    pos = {v: i for i, v in enumerate(vertices)}
    e = gm.graph.edges[np.asarray(edge_idx, dtype=np.int64)]
    rows = [(pos[u], pos[v], w) for u, v, w in e.tolist()]
    g = Multigraph(len(vertices), np.array(rows, dtype=np.int64).reshape(-1, 3))
    sub = GraphicalModel(g, gm.tables, None, gm.kind, dict(gm.params))
    if gm.vertex_bias is None:
        return sub
    biased = set(vertices if bias_vertices is None else bias_vertices)
    if biased == set(vertices):
        return GraphicalModel(g, gm.tables, gm.vertex_bias, gm.kind, dict(gm.params))
    # per-vertex bias is not representable; fold it into self-loop tables
    tables = list(gm.tables) + [np.diag(gm.vertex_bias)]
    loops = [(pos[v], pos[v], len(tables) - 1) for v in sorted(biased)]
    g = Multigraph(len(vertices), np.array(rows + loops, dtype=np.int64).reshape(-1, 3))
    return GraphicalModel(g, tuple(tables), None, gm.kind, dict(gm.params))


def tree_boundary_terms(gm: GraphicalModel, r: int, t: int, ell: int, budget: int = DEFAULT_BUDGET) -> dict:
    """Both sides of the ball-versus-residual comparison bound at radii ``t <= ell``.

    Returns the absolute difference between the joint/product TV of the full
    model and of the ball-only model (``lhs``), the bound
    ``9 |X|^(2|B|) ||mu_res_D - uniform||_TV`` (``rhs``), and the largest
    deviation of the ball marginal from the tilt of the ball-only law by the
    residual boundary law (``tilt_error``, zero up to rounding).
    """
    if not 0 <= t <= ell:
        raise ValueError("need 0 <= t <= ell")
    dec = ball_decompose(gm.graph, r, ell)
    ball = sorted(dec.ball_vertices)
    bnd = sorted(dec.boundary)
    res = sorted(dec.residual_vertices)
    inner = submodel(gm, ball, dec.ball_edges)
    outer = submodel(gm, res, dec.residual_edges, bias_vertices=set(res) - set(bnd))

    full_tv = exact_joint_product_tv(gm, r, t, budget)
    ball_tv = exact_joint_product_tv(inner, ball.index(r), t, budget)

    q = gm.q
    mu_out_d = exact_marginal(outer, [res.index(v) for v in bnd], budget)
    dist_to_uniform = tv(mu_out_d, np.full(mu_out_d.shape, q ** -len(bnd)))
    rhs = 9.0 * float(q) ** (2 * len(ball)) * dist_to_uniform

    mu_ball = exact_marginal(gm, ball, budget)
    mu_in = exact_marginal(inner, list(range(len(ball))), budget)
    # lift the boundary law to the ball cube, uniformly over non-boundary coordinates;
    # ball and bnd are both sorted, so boundary axes appear in the same order
    shape = [q if v in dec.boundary else 1 for v in ball]
    lifted = np.broadcast_to(mu_out_d.reshape(shape), mu_in.shape) / q ** (len(ball) - len(bnd))
    tilted = tilt_distribution(mu_in, lifted)
    return {
        "lhs": abs(full_tv - ball_tv),
        "rhs": rhs,
        "boundary_tv": dist_to_uniform,
        "ball_size": len(ball),
        "tilt_error": float(np.abs(tilted - mu_ball).max()),
    }
