"""Edge weight tables and pairwise graphical models on multigraphs.

Ising variables use state index 0 for spin +1 and index 1 for spin -1.
Two Ising scales coexist: ``ising_table(theta)`` has entries ``1 +/- theta``,
``ising_table_eps(eps)`` has ``1 - eps`` / ``eps``. With ``theta = 1 - 2 eps``
the first is exactly twice the second, so every normalized quantity agrees.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .ensembles import Multigraph, _check_rng, sample_poisson_multigraph, sample_regular_multigraph

PLUS, MINUS = 0, 1


def spins(x) -> np.ndarray:
    """Map Ising state indices to +/-1 spins."""
    return 1 - 2 * np.asarray(x)


def weight_table(entries) -> np.ndarray:
    """Validate and freeze a symmetric nonnegative square table."""
    t = np.array(entries, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("weight table must be square")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("weight table entries must be finite and nonnegative")
    if not np.allclose(t, t.T, rtol=0, atol=1e-15):
        raise ValueError("weight table must be symmetric")
    if not np.any(t > 0):
        raise ValueError("weight table needs a positive entry")
    t.setflags(write=False)
    return t


def ising_table(theta: float) -> np.ndarray:
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    return weight_table([[1 + theta, 1 - theta], [1 - theta, 1 + theta]])


def ising_table_eps(eps: float) -> np.ndarray:
    """Ferromagnetic table in flip-probability form; proportional to ``ising_table(1 - 2 eps)``."""
    if not 0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 1/2]")
    return weight_table([[1 - eps, eps], [eps, 1 - eps]])


def antiferro_table_eps(eps: float) -> np.ndarray:
    if not 0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 1/2]")
    return weight_table([[eps, 1 - eps], [1 - eps, eps]])


def coloring_table(q: int, eps: float) -> np.ndarray:
    if q < 2:
        raise ValueError("need at least 2 colors")
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    return weight_table(np.ones((q, q)) - (1 - eps) * np.eye(q))


@dataclass(frozen=True, eq=False)
class GraphicalModel:
    """Gibbs weight ``prod_edges psi_w(x_u, x_v) * prod_vertices bias(x_i)``."""

    graph: Multigraph
    tables: tuple
    vertex_bias: np.ndarray | None = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        tables = tuple(weight_table(t) for t in self.tables)
        if not tables:
            raise ValueError("need at least one table")
        q = tables[0].shape[0]
        if any(t.shape != (q, q) for t in tables):
            raise ValueError("all tables must share one alphabet")
        if self.graph.m and self.graph.edges[:, 2].max() >= len(tables):
            raise ValueError("edge weight id without a table")
        object.__setattr__(self, "tables", tables)
        if self.vertex_bias is not None:
            b = np.array(self.vertex_bias, dtype=float)
            if b.shape != (q,) or np.any(b <= 0):
                raise ValueError("vertex bias needs one positive entry per state")
            b.setflags(write=False)
            object.__setattr__(self, "vertex_bias", b)

    @property
    def q(self) -> int:
        return self.tables[0].shape[0]

    @property
    def n(self) -> int:
        return self.graph.n

    @cached_property
    def log_tables(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.stack(self.tables))

    @cached_property
    def log_bias(self) -> np.ndarray:
        if self.vertex_bias is None:
            return np.zeros(self.q)
        return np.log(self.vertex_bias)

    def with_graph(self, graph: Multigraph) -> "GraphicalModel":
        return GraphicalModel(graph, self.tables, self.vertex_bias, self.kind, dict(self.params))

    @cached_property
    def symmetric_root_marginal(self) -> bool:
        """True when a transitive state permutation leaves every factor invariant.

        Then every single-vertex marginal is uniform, whatever the graph. Checked
        for the cyclic shift, which is transitive on the alphabet.
        """
        q = self.q
        perm = np.roll(np.arange(q), 1)
        if self.vertex_bias is not None and not np.allclose(self.vertex_bias, self.vertex_bias[0]):
            return False
        return all(np.array_equal(t, t[np.ix_(perm, perm)]) for t in self.tables)


def ising_model(g: Multigraph, theta: float, lam: float = 0.0) -> GraphicalModel:
    """Ferromagnet with entries ``1 +/- theta`` and vertex bias ``(1 + lam, 1 - lam)``."""
    if not 0 <= lam <= 1:
        raise ValueError("lam must lie in [0, 1]")
    bias = None if lam == 0 else np.array([1 + lam, 1 - lam])
    if bias is not None and lam == 1:
        # a zero bias is not a valid multiplier; lam = 1 pins every vertex to +
        raise ValueError("lam = 1 is degenerate; use lam < 1")
    g0 = g.with_weights(np.zeros(g.m, dtype=np.int64))
    return GraphicalModel(g0, (ising_table(theta),), bias, "ising", {"theta": theta, "lambda": lam})


def spin_glass_model(g: Multigraph, epsilon: float, rng, p_plus: float = 0.5) -> GraphicalModel:
    """Each edge independently ferro (table 0) w.p. ``p_plus``, else antiferro (table 1)."""
    rng = _check_rng(rng)
    w = (rng.random(g.m) >= p_plus).astype(np.int64)
    tables = (ising_table_eps(epsilon), antiferro_table_eps(epsilon))
    return GraphicalModel(g.with_weights(w), tables, None, "spinglass", {"eps": epsilon})


def coloring_model(g: Multigraph, q: int, epsilon: float) -> GraphicalModel:
    g0 = g.with_weights(np.zeros(g.m, dtype=np.int64))
    return GraphicalModel(g0, (coloring_table(q, epsilon),), None, "coloring", {"q": q, "eps": epsilon})


def log_weights(gm: GraphicalModel, configs) -> np.ndarray:
    """Unnormalized log-weights of a batch of configurations, shape ``(S, N)`` -> ``(S,)``."""
    X = np.atleast_2d(np.asarray(configs, dtype=np.int64))
    if X.shape[1] != gm.n:
        raise ValueError("configuration length does not match the graph")
    if X.size and (X.min() < 0 or X.max() >= gm.q):
        raise ValueError("state index outside the alphabet")
    e = gm.graph.edges
    out = gm.log_bias[X].sum(axis=1)
    if len(e):
        out = out + gm.log_tables[e[:, 2], X[:, e[:, 0]], X[:, e[:, 1]]].sum(axis=1)
    return out


def log_weight(gm: GraphicalModel, x) -> float:
    """Log of the unnormalized Gibbs weight; ``-inf`` when some factor vanishes."""
    return float(log_weights(gm, np.asarray(x)[None, :])[0])


@dataclass
class ModelSpec:
    """Serializable model descriptor used by the command line."""

    kind: str
    theta: float | None = None
    eps: float | None = None
    lam: float = 0.0
    q: int | None = None
    gamma: float | None = None
    k: int | None = None
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        data = json.loads(text)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ModelSpec":
        return cls.from_json(Path(path).read_text())

    def build(self, g: Multigraph, rng=None) -> GraphicalModel:
        rng = _check_rng(self.seed if rng is None else rng)
        if self.kind == "ising":
            theta = self.theta if self.theta is not None else 1 - 2 * _req(self.eps, "eps")
            return ising_model(g, theta, self.lam)
        if self.kind == "spinglass":
            eps = self.eps if self.eps is not None else (1 - _req(self.theta, "theta")) / 2
            return spin_glass_model(g, eps, rng)
        if self.kind == "coloring":
            return coloring_model(g, _req(self.q, "q"), _req(self.eps, "eps"))
        raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def ensemble(self) -> str:
        """``regular`` when a branching ``k`` is given, else ``poisson`` with density ``gamma``."""
        if self.k is not None:
            return "regular"
        _req(self.gamma, "gamma or k")
        return "poisson"

    def sample_graph(self, n: int, rng) -> Multigraph:
        if self.ensemble == "regular":
            return sample_regular_multigraph(n, self.k, rng)
        return sample_poisson_multigraph(n, self.gamma, rng)

    def sample_instance(self, n: int, rng) -> GraphicalModel:
        """Fresh graph from the ensemble, then the model on it (edge signs drawn from ``rng``)."""
        rng = _check_rng(rng)
        return self.build(self.sample_graph(n, rng), rng)


def _req(value, name):
    if value is None:
        raise ValueError(f"model descriptor needs {name!r}")
    return value

