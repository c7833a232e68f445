"""Heat-bath (Glauber) dynamics for pairwise models on multigraphs.

Randomness is drawn in numpy (vertex orders and uniforms, a batch of sweeps at
a time) and consumed by a compiled inner loop, so a chain is a deterministic
function of its generator state.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numba
import numpy as np

from .ensembles import _check_rng
from .model import GraphicalModel, log_weight
from .parallel import derive_rng, pmap

_BATCH = 64


@dataclass
class _ChainData:
    indptr: np.ndarray
    nbr: np.ndarray
    tab: np.ndarray
    log_tables: np.ndarray
    site_log: np.ndarray


_cache: "weakref.WeakKeyDictionary[GraphicalModel, _ChainData]" = weakref.WeakKeyDictionary()


def _chain_data(gm: GraphicalModel) -> _ChainData:
    data = _cache.get(gm)
    if data is not None:
        return data
    n, q = gm.n, gm.q
    e = gm.graph.edges
    loops = e[e[:, 0] == e[:, 1]]
    plain = e[e[:, 0] != e[:, 1]]
    site = np.tile(gm.log_bias, (n, 1))
    lt = gm.log_tables
    for v, _, w in loops.tolist():
        # a self-loop contributes psi(x_i, x_i) once
        site[v] += np.diag(lt[w])
    src = np.concatenate([plain[:, 0], plain[:, 1]])
    dst = np.concatenate([plain[:, 1], plain[:, 0]])
    tab = np.concatenate([plain[:, 2], plain[:, 2]])
    order = np.argsort(src, kind="stable")
    indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n))]).astype(np.int64)
    data = _ChainData(indptr, dst[order].astype(np.int64), tab[order].astype(np.int64),
                      np.ascontiguousarray(lt), np.ascontiguousarray(site))
    _cache[gm] = data
    return data


@numba.njit(cache=True)
def _run_batch(x, indptr, nbr, tab, log_tables, site_log, order, unif):
    q = site_log.shape[1]
    logp = np.empty(q)
    w = np.empty(q)
    rejected = 0
    for s in range(order.shape[0]):
        for j in range(order.shape[1]):
            i = order[s, j]
            for a in range(q):
                logp[a] = site_log[i, a]
            for e in range(indptr[i], indptr[i + 1]):
                xj = x[nbr[e]]
                t = tab[e]
                for a in range(q):
                    logp[a] += log_tables[t, a, xj]
            m = -np.inf
            for a in range(q):
                if logp[a] > m:
                    m = logp[a]
            if m == -np.inf:
                rejected += 1
                continue
            total = 0.0
            for a in range(q):
                w[a] = np.exp(logp[a] - m)
                total += w[a]
            u = unif[s, j] * total
            acc = 0.0
            new = q - 1
            for a in range(q):
                acc += w[a]
                if u < acc:
                    new = a
                    break
            x[i] = new
    return rejected


@dataclass
class ChainState:
    config: np.ndarray
    rng: np.random.Generator
    sweep_count: int = 0
    rejected: int = 0


def conditional_law(gm: GraphicalModel, x, i: int) -> np.ndarray | None:
    """Law of ``X_i`` given the other coordinates of ``x``; None if it has zero mass."""
    d = _chain_data(gm)
    logp = d.site_log[i].copy()
    for e in range(d.indptr[i], d.indptr[i + 1]):
        logp += d.log_tables[d.tab[e], :, x[d.nbr[e]]]
    m = logp.max()
    if not np.isfinite(m):
        return None
    p = np.exp(logp - m)
    return p / p.sum()


def heat_bath_update(gm: GraphicalModel, state: ChainState, i: int) -> ChainState:
    """Resample ``X_i`` from its exact conditional, in place.

    A zero-mass conditional (possible under hard constraints) leaves the state
    unchanged and increments ``state.rejected``.
    """
    if not 0 <= i < gm.n:
        raise IndexError("vertex out of range")
    p = conditional_law(gm, state.config, i)
    if p is None:
        state.rejected += 1
        return state
    u = state.rng.random() * p.sum()
    state.config[i] = min(int(np.searchsorted(np.cumsum(p), u, side="right")), gm.q - 1)
    return state


def _greedy_feasible(gm: GraphicalModel, rng, tries: int = 100) -> np.ndarray:
    d = _chain_data(gm)
    for _ in range(tries):
        x = np.full(gm.n, -1, dtype=np.int64)
        ok = True
        for i in rng.permutation(gm.n):
            logp = d.site_log[i].copy()
            for e in range(d.indptr[i], d.indptr[i + 1]):
                xj = x[d.nbr[e]]
                if xj >= 0:
                    logp += d.log_tables[d.tab[e], :, xj]
            allowed = np.flatnonzero(np.isfinite(logp))
            if len(allowed) == 0:
                ok = False
                break
            x[i] = rng.choice(allowed)
        if ok and np.isfinite(log_weight(gm, x)):
            return x
    raise RuntimeError("no positive-weight configuration found for initialization")


def init_state(gm: GraphicalModel, rng, config=None) -> ChainState:
    """Uniform random start, or a greedy feasible one when the model has hard zeros."""
    rng = _check_rng(rng)
    if config is not None:
        x = np.array(config, dtype=np.int64)
    elif np.any(np.stack(gm.tables) == 0):
        x = _greedy_feasible(gm, rng)
    else:
        x = rng.integers(0, gm.q, size=gm.n)
    return ChainState(x, rng)


def run_sweeps(gm: GraphicalModel, state: ChainState, sweeps: int) -> ChainState:
    """``sweeps`` passes, each visiting all vertices in a fresh uniformly random order."""
    if sweeps < 0:
        raise ValueError("sweeps must be >= 0")
    d = _chain_data(gm)
    n = gm.n
    done = 0
    while done < sweeps and n:
        b = min(_BATCH, sweeps - done)
        order = state.rng.permuted(np.tile(np.arange(n, dtype=np.int64), (b, 1)), axis=1)
        unif = state.rng.random((b, n))
        state.rejected += _run_batch(state.config, d.indptr, d.nbr, d.tab, d.log_tables, d.site_log, order, unif)
        done += b
    state.sweep_count += sweeps
    return state


def glauber_run(gm: GraphicalModel, sweeps: int, rng, init=None) -> np.ndarray:
    state = run_sweeps(gm, init_state(gm, rng, init), sweeps)
    return state.config


def _replica_task(task):
    gm, seed, stream, idx, burn_in, spacing = task
    state = init_state(gm, derive_rng(seed, stream, idx))
    run_sweeps(gm, state, burn_in + spacing)
    return state.config


def chain_seed(rng) -> int:
    """Master seed for derived chain streams: an int is used as is, a Generator is drawn from."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(_check_rng(rng).integers(0, 2 ** 63 - 1))


def sample_replicas(
    gm: GraphicalModel,
    n_replicas: int,
    burn_in: int = 1000,
    spacing: int = 0,
    rng=0,
    jobs: int | None = 1,
    stream: int = 0,
) -> list[np.ndarray]:
    """One independent chain per replica, chain ``i`` seeded from ``(seed, stream, i)``."""
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    seed = chain_seed(rng)
    tasks = [(gm, seed, stream, i, burn_in, spacing) for i in range(n_replicas)]
    return pmap(_replica_task, tasks, jobs)


def split_chain_magnetization(gm: GraphicalModel, sweeps: int, rng, record_every: int = 10) -> dict:
    """Mean ``|magnetization|`` over the first and second half of a run of ``2 * sweeps``.

    A large gap between the halves means the chain had not settled.
    """
    state = init_state(gm, rng)
    trace = []
    for _ in range(0, 2 * sweeps, record_every):
        run_sweeps(gm, state, record_every)
        trace.append(abs(float(np.mean(1 - 2 * state.config))))
    half = len(trace) // 2
    first = float(np.mean(trace[:half])) if half else float("nan")
    second = float(np.mean(trace[half:]))
    return {"first": first, "second": second, "gap": abs(first - second), "final": state.config}


def dump_samples(configs, path) -> None:
    """One configuration per line as a string of state digits."""
    with open(path, "w") as fh:
        for x in configs:
            fh.write("".join(str(int(v)) for v in x) + "\n")


__all__ = [
    "ChainState", "conditional_law", "heat_bath_update", "init_state", "run_sweeps",
    "glauber_run", "sample_replicas", "split_chain_magnetization", "dump_samples", "chain_seed",
]
