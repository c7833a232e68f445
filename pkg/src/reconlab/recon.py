"""Reconstruction bias on graphs and the threshold scans built on it.

The statistic is ``E_X TV(P(X_r | X_D), P(X_r))`` where ``D`` is the sphere of
radius ``t`` around ``r``. By the Markov property conditioning on ``D`` is the
same as conditioning on everything at distance ``>= t``, and the conditional
law of ``X_r`` only involves the ball interior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensembles import ball_decompose, ball_to_tree, local_tree_check
from .exact import BudgetExceeded, ImpossibleEvidence, exact_conditional_root, exact_sample, joint_distribution, tv
from .mcmc import chain_seed, init_state, run_sweeps, split_chain_magnetization
from .model import GraphicalModel, ModelSpec
from .parallel import CHUNK, chunk_sizes, derive_rng, mean_stderr, pmap
from .treecalc import TreeEnsemble, TreeModel, tree_reconstruction_bias, upward_root_posterior

EXACT_SAMPLE_STATES = 2 ** 16
BALL_BUDGET = 2 ** 20
MAGNETIZATION_THRESHOLD = 0.2


@dataclass(frozen=True)
class ReconEstimate:
    t: int
    bias_mean: float
    bias_stderr: float
    trials: int
    tree_like_fraction: float
    aborted: int = 0
    flagged: int = 0


def _tree_model(gm: GraphicalModel) -> TreeModel:
    return TreeModel(gm.tables, None, gm.vertex_bias)


class _BallPosterior:
    """Conditional root law given the sphere values, cached per sphere assignment."""

    def __init__(self, gm: GraphicalModel, r: int, t: int, budget: int | None = None):
        self.gm, self.r = gm, r
        self.budget = BALL_BUDGET if budget is None else budget
        self.dec = ball_decompose(gm.graph, r, t)
        self.boundary = np.array(sorted(self.dec.boundary), dtype=np.int64)
        self.tree_like = local_tree_check(gm.graph, r, t)
        self._tree = ball_to_tree(gm.graph, self.dec) if self.tree_like and t > 0 else None
        self._cache: dict[tuple, np.ndarray | None] = {}

    def __call__(self, x) -> np.ndarray | None:
        """Posterior, or None when the trial must be aborted (ball over budget)."""
        key = tuple(int(v) for v in np.asarray(x)[self.boundary])
        if key in self._cache:
            return self._cache[key]
        ev = dict(zip(self.boundary.tolist(), key))
        if self._tree is not None:
            tree, vertex_of = self._tree
            tev = {i: ev[int(v)] for i, v in enumerate(vertex_of) if int(v) in ev}
            out = upward_root_posterior(tree, _tree_model(self.gm), tev)
        else:
            try:
                out = exact_conditional_root(self.gm, self.r, ev, self.budget)
            except BudgetExceeded:
                out = None
        self._cache[key] = out
        return out


def root_prior(gm: GraphicalModel, r: int, rng=None, aux_sweeps: int = 2000, burn_in: int = 1000):
    """``(P_r, stderr per state)``: uniform by symmetry, exact when enumerable, else a long run."""
    q = gm.q
    if gm.symmetric_root_marginal:
        return np.full(q, 1.0 / q), np.zeros(q)
    if q ** gm.n <= EXACT_SAMPLE_STATES:
        joint = joint_distribution(gm)
        axes = tuple(a for a in range(gm.n) if a != r)
        return joint.sum(axis=axes), np.zeros(q)
    st = init_state(gm, rng if rng is not None else 0)
    run_sweeps(gm, st, burn_in)
    counts = np.zeros(q)
    for _ in range(aux_sweeps):
        run_sweeps(gm, st, 1)
        counts[st.config[r]] += 1
    p = counts / aux_sweeps
    # sweep-to-sweep correlation makes this an optimistic error
    return p, np.sqrt(p * (1 - p) / aux_sweeps)


def _samples(gm: GraphicalModel, size: int, rng, sampler: str, burn_in: int, joint) -> np.ndarray:
    if sampler == "exact":
        return exact_sample(gm, size, rng, joint)
    seed = chain_seed(rng)
    out = np.empty((size, gm.n), dtype=np.int64)
    for i in range(size):
        st = init_state(gm, derive_rng(seed, i))
        run_sweeps(gm, st, burn_in)
        out[i] = st.config
    return out


def _choose_sampler(gm: GraphicalModel, sampler: str) -> str:
    if sampler == "auto":
        return "exact" if gm.q ** gm.n <= EXACT_SAMPLE_STATES else "glauber"
    if sampler not in ("exact", "glauber"):
        raise ValueError(f"unknown sampler {sampler!r}")
    return sampler


def _biases(post: _BallPosterior, X: np.ndarray, prior: np.ndarray):
    """Per-sample TV values (nan when aborted or flagged) and the abort/flag counts."""
    vals = np.empty(len(X))
    aborted = flagged = 0
    keys, inverse = np.unique(X[:, post.boundary], axis=0, return_inverse=True)
    tvs = np.empty(len(keys))
    status = np.zeros(len(keys), dtype=np.int64)
    for j, key in enumerate(keys):
        x = np.zeros(X.shape[1], dtype=np.int64)
        x[post.boundary] = key
        try:
            p = post(x)
        except ImpossibleEvidence:
            p, status[j] = None, 2
        if p is None:
            tvs[j] = math.nan
            status[j] = status[j] or 1
        else:
            tvs[j] = tv(p, prior)
    inverse = np.asarray(inverse).ravel()
    vals[:] = tvs[inverse]
    aborted = int(np.sum(status[inverse] == 1))
    flagged = int(np.sum(status[inverse] == 2))
    return vals, aborted, flagged


def _graph_chunk(task):
    gm, r, t_list, size, seed, stream, index, sampler, burn_in, joint, prior = task
    rng = derive_rng(seed, stream, index)
    X = _samples(gm, size, rng, sampler, burn_in, joint)
    out = []
    for t in t_list:
        vals, ab, fl = _biases(_BallPosterior(gm, r, t), X, prior)
        out.append((vals, ab, fl))
    return out


def graph_reconstruction_bias(
    gm: GraphicalModel,
    r: int,
    t,
    trials: int,
    seed: int = 0,
    sampler: str = "auto",
    burn_in: int = 1000,
    jobs: int | None = 1,
    stream: int = 0,
    prior=None,
):
    """Monte Carlo estimate of the root-vs-far TV on a fixed graph.

    ``t`` may be an int (returns one :class:`ReconEstimate`) or a sequence of
    radii (returns a list), in which case each sample is reused for every
    radius. Trials whose ball is too big to enumerate are aborted and counted;
    trials with a zero-probability sphere are flagged. Neither enters the mean.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    single = np.ndim(t) == 0
    t_list = [int(t)] if single else [int(v) for v in t]
    if any(v < 0 for v in t_list):
        raise ValueError("t must be >= 0")
    sampler = _choose_sampler(gm, sampler)
    joint = joint_distribution(gm) if sampler == "exact" else None
    if prior is None:
        prior, prior_se = root_prior(gm, r, derive_rng(seed, stream, 1 << 30))
    else:
        prior, prior_se = np.asarray(prior, dtype=float), np.zeros(gm.q)
    tasks = [(gm, r, t_list, size, seed, stream, i, sampler, burn_in, joint, prior)
             for i, size in enumerate(chunk_sizes(trials, CHUNK))]
    parts = pmap(_graph_chunk, tasks, jobs)
    tree_like = [float(_BallPosterior(gm, r, v).tree_like) for v in t_list]
    out = []
    for k, t_val in enumerate(t_list):
        vals = np.concatenate([p[k][0] for p in parts])
        ab = sum(p[k][1] for p in parts)
        fl = sum(p[k][2] for p in parts)
        ok = vals[~np.isnan(vals)]
        m, se = mean_stderr(ok) if len(ok) else (math.nan, math.nan)
        # TV is 1-Lipschitz in the prior: add its error in quadrature
        se = math.hypot(se, 0.5 * float(prior_se.sum())) if not math.isnan(se) else se
        out.append(ReconEstimate(t_val, m, se, len(ok), tree_like[k], ab, fl))
    return out[0] if single else out


def _ensemble_trial(task):
    spec, n, t_list, seed, stream, trial, burn_in = task
    rng = derive_rng(seed, stream, trial)
    gm = spec.sample_instance(n, rng)
    prior, prior_se = root_prior(gm, 0, rng)
    X = _samples(gm, 1, rng, _choose_sampler(gm, "auto"), burn_in, None)
    out = []
    for t in t_list:
        post = _BallPosterior(gm, 0, t)
        vals, _, _ = _biases(post, X, prior)
        out.append((float(vals[0]), post.tree_like, float(prior_se.sum())))
    return out


def ensemble_reconstruction_bias(
    spec: ModelSpec, n: int, t_list, trials: int, seed: int = 0, burn_in: int = 1000,
    jobs: int | None = 1, stream: int = 0,
) -> list[ReconEstimate]:
    """Bias averaged over graphs too: every trial samples a fresh graph, one configuration, root 0."""
    tasks = [(spec, n, list(t_list), seed, stream, i, burn_in) for i in range(trials)]
    res = pmap(_ensemble_trial, tasks, jobs)
    out = []
    for k, t in enumerate(t_list):
        vals = np.array([r[k][0] for r in res])
        tl = np.array([r[k][1] for r in res], dtype=float)
        ok = vals[~np.isnan(vals)]
        m, se = mean_stderr(ok) if len(ok) else (math.nan, math.nan)
        prior_err = 0.5 * max(r[k][2] for r in res)
        se = math.hypot(se, prior_err) if not math.isnan(se) else se
        out.append(ReconEstimate(int(t), m, se, len(ok), float(tl.mean()), int(np.isnan(vals).sum())))
    return out


GRAPH_COLUMNS = ["model", "ensemble", "N", "k_or_gamma", "theta_or_eps", "t", "trials",
                 "bias_mean", "bias_stderr", "tree_like_fraction", "seed"]
MAGNETIZATION_COLUMNS = ["model", "ensemble", "N", "k", "theta", "runs", "sweeps", "threshold",
                         "frac_above", "mean_abs_m", "split_gap_mean", "seed"]


def _magnetization_run(task):
    spec, n, sweeps, seed, stream, run = task
    rng = derive_rng(seed, stream, run)
    gm = spec.sample_instance(n, rng)
    half = max(sweeps // 2, 1)
    d = split_chain_magnetization(gm, half, rng)
    return abs(float(np.mean(1 - 2 * d["final"]))), d["gap"]


def magnetization_proxy(
    k: int, theta: float, n: int, runs: int, sweeps: int, seed: int = 0,
    threshold: float = MAGNETIZATION_THRESHOLD, jobs: int | None = 1, stream: int = 7,
) -> dict:
    """Fraction of runs whose final ``|mean spin|`` exceeds ``threshold`` (a numeric convention).

    Each run is a fresh regular graph and a chain of ``sweeps`` sweeps; the
    agreement between the two halves of the run is reported as a mixing check.
    """
    spec = ModelSpec("ising", theta=theta, k=k)
    res = pmap(_magnetization_run, [(spec, n, sweeps, seed, stream, i) for i in range(runs)], jobs)
    m = np.array([a for a, _ in res])
    gaps = np.array([g for _, g in res])
    return {"model": "ising", "ensemble": "regular", "N": n, "k": k, "theta": theta, "runs": runs,
            "sweeps": sweeps, "threshold": threshold, "frac_above": float(np.mean(m > threshold)),
            "mean_abs_m": float(np.mean(m)), "split_gap_mean": float(np.mean(gaps)), "seed": seed,
            "values": m}


def ferro_threshold_scan(
    k: int, theta_grid, n: int, t_grid, trials: int, seed: int = 0, burn_in: int = 1000,
    tree_trials: int | None = None, jobs: int | None = 1,
) -> list[dict]:
    """Graph bias on random (k+1)-regular graphs next to the regular-tree bias, per (theta, t)."""
    if not len(theta_grid) or not len(t_grid):
        raise ValueError("grids must be nonempty")
    rows = []
    for ti, theta in enumerate(theta_grid):
        spec = ModelSpec("ising", theta=theta, k=k)
        for est in ensemble_reconstruction_bias(spec, n, t_grid, trials, seed, burn_in, jobs, stream=ti):
            rows.append(_graph_row("ising", "regular", n, k, theta, est, seed))
        for t in t_grid:
            m, se = tree_reconstruction_bias(TreeEnsemble("regular", k), TreeModel.ising(theta), int(t),
                                             tree_trials or trials, seed, jobs, stream=ti)
            rows.append({"model": "ising", "ensemble": "regular-tree", "N": "inf", "k_or_gamma": k,
                         "theta_or_eps": theta, "t": int(t), "trials": tree_trials or trials,
                         "bias_mean": m, "bias_stderr": se, "tree_like_fraction": 1.0, "seed": seed})
    return rows


def _graph_row(model, ensemble, n, param, value, est: ReconEstimate, seed) -> dict:
    return {"model": model, "ensemble": ensemble, "N": n, "k_or_gamma": param, "theta_or_eps": value,
            "t": est.t, "trials": est.trials, "bias_mean": est.bias_mean, "bias_stderr": est.bias_stderr,
            "tree_like_fraction": est.tree_like_fraction, "seed": seed}


SG_COLUMNS = ["model", "gamma", "eps", "N", "t", "statistic", "mean", "stderr", "trials",
              "critical_param", "regime", "seed"]


def spin_glass_threshold_scan(
    gamma_grid, eps: float, n_grid, trials: int, seed: int = 0, t_grid=(1, 2, 3),
    burn_in: int = 1000, jobs: int | None = 1,
) -> list[dict]:
    """``E[q12^2]``, graph bias and tree bias across densities, each tagged by ``2 gamma theta^2`` vs 1."""
    from .replica import sphericity_estimate

    if not len(gamma_grid) or not len(n_grid):
        raise ValueError("grids must be nonempty")
    theta = 1 - 2 * eps
    rows = []
    for gi, gamma in enumerate(gamma_grid):
        crit = 2 * gamma * theta ** 2
        regime = "super" if crit > 1 else ("sub" if crit < 1 else "critical")
        spec = ModelSpec("spinglass", eps=eps, gamma=gamma)
        base = {"model": "spinglass", "gamma": gamma, "eps": eps, "critical_param": crit,
                "regime": regime, "seed": seed}
        for r in sphericity_estimate(spec, n_grid, trials, seed, burn_in, jobs, stream=gi):
            if r["xi"] != 0:
                continue
            # q12 = 4 Q(+) for spins
            rows.append({**base, "N": r["N"], "t": "", "statistic": "EQ12sq", "mean": 16 * r["EQ2_mean"],
                         "stderr": 16 * r["EQ2_stderr"], "trials": trials})
        for n in n_grid:
            for est in ensemble_reconstruction_bias(spec, n, t_grid, trials, seed, burn_in, jobs,
                                                    stream=1000 + gi):
                rows.append({**base, "N": n, "t": est.t, "statistic": "graph_bias", "mean": est.bias_mean,
                             "stderr": est.bias_stderr, "trials": est.trials})
        for t in t_grid:
            m, se = tree_reconstruction_bias(TreeEnsemble("gw", gamma), TreeModel.spin_glass(eps), int(t),
                                             trials, seed, jobs, stream=2000 + gi)
            rows.append({**base, "N": "inf", "t": int(t), "statistic": "tree_bias", "mean": m,
                         "stderr": se, "trials": trials})
    return rows


__all__ = [
    "ReconEstimate", "root_prior", "graph_reconstruction_bias", "ensemble_reconstruction_bias",
    "magnetization_proxy", "ferro_threshold_scan", "spin_glass_threshold_scan",
    "GRAPH_COLUMNS", "MAGNETIZATION_COLUMNS", "SG_COLUMNS",
]
