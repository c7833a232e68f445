"""Two-replica statistics and the coloring second-moment functionals.

A replica type ``nu`` is the empirical joint law of ``(X1_i, X2_i)`` over the
vertices for two configurations on the same graph. Deviations are always
measured from the uniform matrix ``1/q^2``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .exact import exact_sample
from .mcmc import chain_seed, init_state, run_sweeps
from .model import GraphicalModel, ModelSpec, spins
from .parallel import derive_rng, mean_stderr, pmap

EXACT_MAX_N = 12


@dataclass(frozen=True)
class ReplicaType:
    nu: np.ndarray
    n: int

    @property
    def q(self) -> int:
        return self.nu.shape[0]


def _as_nu(nu) -> np.ndarray:
    a = nu.nu if isinstance(nu, ReplicaType) else np.asarray(nu, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("type must be a square matrix")
    if np.any(a < -1e-15) or abs(a.sum() - 1) > 1e-12:
        raise ValueError("type entries must be nonnegative and sum to 1")
    return a


def two_replica_type(x1, x2, q: int | None = None) -> ReplicaType:
    x1, x2 = np.asarray(x1, dtype=np.int64), np.asarray(x2, dtype=np.int64)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ValueError("replicas must be 1-d and of equal length")
    if len(x1) == 0:
        raise ValueError("empty configurations")
    q = int(max(x1.max(), x2.max())) + 1 if q is None else q
    counts = np.bincount(x1 * q + x2, minlength=q * q).reshape(q, q)
    return ReplicaType(counts / len(x1), len(x1))


def overlap(x1, x2) -> float:
    """``mean_i s1_i * s2_i`` for Ising state indices (0 -> +1, 1 -> -1)."""
    x1, x2 = np.asarray(x1), np.asarray(x2)
    if x1.shape != x2.shape:
        raise ValueError("replicas must have equal length")
    if np.any((x1 != 0) & (x1 != 1)) or np.any((x2 != 0) & (x2 != 1)):
        raise ValueError("overlap needs a binary alphabet")
    return float(np.mean(spins(x1) * spins(x2)))


def q_statistic(nu, xi: int) -> float:
    """``mean_i (1[X1_i = xi] - 1/q) * (1[X2_i = xi] - 1/q)`` computed from the type.

    Equals ``dnu(xi, xi) - (1/q) * (row_xi + col_xi of dnu)`` with
    ``dnu = nu - 1/q^2``; for an exchangeable pair the row and column terms
    agree in law, giving the one-sided ``2/q`` form. For two spins it is
    exactly a quarter of the overlap, for either state.
    """
    a = _as_nu(nu)
    q = a.shape[0]
    d = a - 1.0 / q ** 2
    return float(d[xi, xi] - (d[xi].sum() + d[:, xi].sum()) / q)


def _replica_pair(gm: GraphicalModel, rng, burn_in: int) -> tuple[np.ndarray, np.ndarray]:
    if gm.n <= EXACT_MAX_N:
        x = exact_sample(gm, 2, rng)
        return x[0], x[1]
    seed = chain_seed(rng)
    out = []
    for i in range(2):
        st = init_state(gm, derive_rng(seed, i))
        run_sweeps(gm, st, burn_in)
        out.append(st.config)
    return out[0], out[1]


def _sphericity_trial(task):
    spec, n, seed, stream, trial, burn_in = task
    rng = derive_rng(seed, stream, n, trial)
    gm = spec.sample_instance(n, rng)
    x1, x2 = _replica_pair(gm, rng, burn_in)
    nu = two_replica_type(x1, x2, gm.q)
    return [q_statistic(nu, xi) ** 2 for xi in range(gm.q)]


def sphericity_estimate(
    spec: ModelSpec,
    n_grid,
    trials: int,
    seed: int = 0,
    burn_in: int = 1000,
    jobs: int | None = 1,
    stream: int = 0,
) -> list[dict]:
    """``E[Q(xi)^2]`` per ``(N, xi)``: one graph and one independent replica pair per trial."""
    if trials < 2:
        raise ValueError("need at least 2 trials per N")
    rows = []
    for n in n_grid:
        tasks = [(spec, int(n), seed, stream, i, burn_in) for i in range(trials)]
        vals = np.array(pmap(_sphericity_trial, tasks, jobs))
        for xi in range(vals.shape[1]):
            m, se = mean_stderr(vals[:, xi])
            rows.append({"model": spec.kind, "N": int(n), "xi": xi, "EQ2_mean": m, "EQ2_stderr": se,
                         "trials": trials, "seed": seed})
    return rows


def coloring_F(nu) -> float:
    """Twice the sum of squared row sums."""
    a = _as_nu(nu)
    return float(2 * np.sum(a.sum(axis=1) ** 2))


def coloring_phi(nu, gamma_bar: float, eps: float) -> float:
    """Entropy of ``nu`` plus ``gamma_bar * log(1 - eb*F + eb^2 * sum nu^2)``, ``eb = 1 - eps``."""
    a = _as_nu(nu)
    if gamma_bar < 0:
        raise ValueError("gamma_bar must be >= 0")
    eb = 1.0 - eps
    arg = 1 - eb * coloring_F(a) + eb ** 2 * float(np.sum(a ** 2))
    entropy = -float(np.sum(xlogy(a, a)))
    if gamma_bar == 0:
        return entropy
    if arg <= 0:
        raise ValueError(f"log argument {arg} <= 0 for this (eps, nu) pair")
    return entropy + gamma_bar * math.log(arg)


def phi_uniform(q: int, gamma_bar: float, eps: float) -> float:
    """Closed form at the uniform type: ``2 log q + 2 gamma_bar log(1 - (1 - eps)/q)``."""
    return 2 * math.log(q) + 2 * gamma_bar * math.log(1 - (1 - eps) / q)


def _partitions(total: int, parts: int) -> np.ndarray:
    """Nonincreasing ``parts``-tuples of nonnegative integers summing to ``total``."""
    out = []

    def rec(prefix, left, cap, k):
        if k == 1:
            if left <= cap:
                out.append(prefix + [left])
            return
        for v in range(min(left, cap), -1, -1):
            if v * k < left:
                break
            rec(prefix + [v], left - v, v, k - 1)

    rec([], total, total, parts)
    return np.array(out, dtype=np.int64).reshape(-1, parts)


def phi_gap_scan(
    q: int,
    gamma_bar: float,
    eps: float,
    delta: float,
    delta_prime: float,
    step: float = 1 / 60,
    balanced_only: bool = False,
) -> dict:
    """Grid infimum of ``phi(uniform) - phi(nu)`` over ``max|nu - 1/q^2| > delta``, ``F <= 2/q + delta_prime``.

    Types are multiples of ``step``. Every quantity involved is invariant under
    permuting whole rows and under permuting entries within a row, so rows are
    enumerated as sorted partitions and row sums as sorted tuples. With
    ``balanced_only`` every row sum is pinned to ``1/q``. A numeric audit on a
    finite grid, not a proof.
    """
    L = int(round(1 / step))
    if abs(L * step - 1) > 1e-9:
        raise ValueError("step must be 1/L for an integer L")
    eb = 1.0 - eps
    target = phi_uniform(q, gamma_bar, eps)
    ubar = 1.0 / q ** 2
    best = (-math.inf, None)
    if balanced_only:
        if L % q:
            raise ValueError("balanced scan needs L divisible by q")
        sums_list = [tuple([L // q] * q)]
    else:
        sums_list = [tuple(int(v) for v in s) for s in _partitions(L, q)]
    row_cache: dict[int, tuple] = {}
    for sums in sums_list:
        F = 2 * sum(s * s for s in sums) / L ** 2
        if F > 2 / q + delta_prime + 1e-12:
            continue
        parts = []
        for s in sums:
            if s not in row_cache:
                rows = _partitions(s, q) / L
                row_cache[s] = (rows, -xlogy(rows, rows).sum(1), (rows ** 2).sum(1),
                                np.abs(rows - ubar).max(1))
            parts.append(row_cache[s])
        shape = [len(p[0]) for p in parts]
        H = np.zeros(shape)
        S = np.zeros(shape)
        D = np.zeros(shape)
        for k, (_, h, s2, dev) in enumerate(parts):
            view = [1] * q
            view[k] = -1
            H = H + h.reshape(view)
            S = S + s2.reshape(view)
            D = np.maximum(D, dev.reshape(view))
        arg = 1 - eb * F + eb ** 2 * S
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = H + (gamma_bar * np.log(arg) if gamma_bar else 0.0)
        phi = np.where((D > delta) & np.isfinite(phi), phi, -math.inf)
        j = int(np.argmax(phi))
        if phi.flat[j] > best[0]:
            idx = np.unravel_index(j, phi.shape)
            nu = np.stack([parts[k][0][idx[k]] for k in range(q)])
            best = (float(phi.flat[j]), nu)
    if best[1] is None:
        return {"gap": math.inf, "argmin_nu": None, "phi_uniform": target, "phi_max": -math.inf}
    return {"gap": target - best[0], "argmin_nu": best[1], "phi_uniform": target, "phi_max": best[0]}


def _compositions(n: int, cells: int):
    for bars in itertools.combinations(range(n + cells - 1), cells - 1):
        edges = (-1,) + bars + (n + cells - 1,)
        yield [edges[i + 1] - edges[i] - 1 for i in range(cells)]


def expected_z2_given_edges(counts, eps: float, m: int) -> float:
    """Exact ``E[Z2(nu) | m edges]`` for the coloring weight on a Poisson multigraph.

    Each edge is an ordered pair of independent uniform endpoints, so for a
    fixed pair of configurations of type ``nu`` one edge contributes
    ``1 - eb*(sum r^2 + sum c^2) + eb^2 * sum nu^2`` in expectation (``r`` and
    ``c`` are the row and column sums) and edges are independent.
    """
    c = np.asarray(counts, dtype=float)
    n = c.sum()
    a = c / n
    eb = 1.0 - eps
    factor = 1 - eb * (np.sum(a.sum(1) ** 2) + np.sum(a.sum(0) ** 2)) + eb ** 2 * np.sum(a ** 2)
    log_pairs = gammaln(n + 1) - np.sum(gammaln(c + 1))
    return float(math.exp(log_pairs) * factor ** m)


def annealed_second_moment_audit(n: int, q: int, gamma_bar: float, eps: float) -> dict:
    """Ratio ``E[Z2(nu) | gamma_bar*n edges] / exp(n * phi(nu))`` over every valid type at size ``n``.

    ``K`` is the largest ratio, the one constant that makes the bound hold on
    this instance size.
    """
    m = gamma_bar * n
    if abs(m - round(m)) > 1e-9:
        raise ValueError("gamma_bar * n must be an integer")
    m = int(round(m))
    ratios = []
    types = []
    for comp in _compositions(n, q * q):
        counts = np.array(comp, dtype=float).reshape(q, q)
        nu = counts / n
        ev = expected_z2_given_edges(counts, eps, m)
        try:
            bound = math.exp(n * coloring_phi(nu, gamma_bar, eps))
        except ValueError:
            bound = 0.0
        ratios.append(math.inf if bound == 0 and ev > 0 else (ev / bound if bound else 0.0))
        types.append(counts.astype(np.int64))
    ratios = np.array(ratios)
    j = int(np.argmax(ratios))
    return {"K": float(ratios[j]), "argmax_counts": types[j], "ratios": ratios, "types": types, "m": m}


__all__ = [
    "ReplicaType", "two_replica_type", "overlap", "q_statistic", "sphericity_estimate", "coloring_F",
    "coloring_phi", "phi_uniform", "phi_gap_scan", "expected_z2_given_edges", "annealed_second_moment_audit",
]
