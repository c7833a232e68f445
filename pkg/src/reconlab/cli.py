"""Command line: ``reconlab <subcommand> ...``.

Every run writes its table as CSV (``--out``, else stdout) and, when writing a
file, a ``<out>.manifest.json`` with the full argument echo, package versions
and wall time. CSV bodies carry no timestamps, so reruns with the same seed are
byte-identical whatever ``--jobs`` is.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__


class ArgError(ValueError):
    pass


def parse_grid(text: str, kind=float) -> list:
    """``a,b,c`` or ``lo..hi[:step]`` (inclusive, default step 1)."""
    text = text.strip()
    try:
        if ".." in text:
            rng, _, step = text.partition(":")
            lo, hi = rng.split("..")
            lo, hi = kind(lo), kind(hi)
            step = kind(step) if step else kind(1)
            if step <= 0 or hi < lo:
                raise ArgError(f"bad range {text!r}")
            count = int(np.floor((hi - lo) / step + 1e-9)) + 1
            vals = [lo + i * step for i in range(count)]
            return [kind(round(v, 12)) if kind is float else kind(v) for v in vals]
        vals = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ArgError(f"cannot parse grid {text!r}: {exc}") from None
    if not vals:
        raise ArgError(f"empty grid {text!r}")
    return vals


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(rows: list[dict], columns: list[str], out) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    text = buf.getvalue()
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return text


def _versions() -> dict:
    import numba
    import scipy

    return {"reconlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _manifest(args, out, started: float, extra_files=()) -> None:
    if out is None:
        return
    config = {k: v for k, v in vars(args).items() if k != "func"}
    data = {"command": args.command, "config": config, "versions": _versions(),
            "wall_time_s": round(time.time() - started, 3),
            "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "outputs": [str(out), *map(str, extra_files)]}
    Path(str(out) + ".manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


def _sibling(out, suffix: str):
    if out is None:
        return None
    p = Path(out)
    return p.with_name(p.stem + suffix + p.suffix)


def _maybe_plot(args, rows, **kw) -> list:
    if not getattr(args, "plot", False) or args.out is None:
        return []
    from .plotting import plot_curves

    path = Path(args.out).with_suffix(kw.pop("suffix", "") + ".png")
    return [plot_curves(rows, path=path, **kw)]


# ---------------------------------------------------------------- subcommands

def _cmd_gen(args) -> list:
    from .ensembles import regular_tree, sample_galton_watson_tree, sample_poisson_multigraph, sample_regular_multigraph

    rng = np.random.default_rng(args.seed)
    wp = (0.5, 0.5) if args.signed else None
    if args.ensemble == "poisson":
        obj = sample_poisson_multigraph(_need(args.n, "--n"), _need(args.gamma, "--gamma"), rng, wp)
    elif args.ensemble == "regular":
        obj = sample_regular_multigraph(_need(args.n, "--n"), _need(args.k, "--k"), rng, wp)
    elif args.ensemble == "gw-tree":
        obj = sample_galton_watson_tree(_need(args.gamma, "--gamma"), _need(args.depth, "--depth"), rng, wp)
    else:
        obj = regular_tree(_need(args.k, "--k"), _need(args.depth, "--depth"), weight_p=wp, rng=rng)
    text = obj.to_text()
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return []


def _need(value, flag):
    if value is None:
        raise ArgError(f"{flag} is required here")
    return value


def _model_spec(args):
    from .model import ModelSpec

    if getattr(args, "model_file", None):
        return ModelSpec.load(args.model_file)
    return ModelSpec(args.model, theta=args.theta_value, eps=args.eps, lam=args.lam, q=args.q,
                     gamma=getattr(args, "gamma_value", None), k=getattr(args, "k", None), seed=args.seed)


def _cmd_exact(args) -> list:
    from .ensembles import Multigraph
    from .exact import exact_joint_product_tv, exact_partition, joint_distribution

    g = Multigraph.load(args.graph)
    spec = _model_spec(args)
    gm = spec.build(g, np.random.default_rng(args.seed))
    joint = joint_distribution(gm, args.budget)
    logz = exact_partition(gm, args.budget)
    rows = []
    for t in args.t:
        rows.append({"model": gm.kind, "N": gm.n, "root": args.root, "t": t,
                     "tv": exact_joint_product_tv(gm, args.root, t, joint=joint), "log_partition": logz})
    write_csv(rows, ["model", "N", "root", "t", "tv", "log_partition"], args.out)
    return _maybe_plot(args, rows, x="t", y="tv", yerr=None, group=["model"], title="exact root-vs-far TV")


def _cmd_tree_scan(args) -> list:
    from .treecalc import TreeEnsemble, TreeModel, tree_reconstruction_bias

    if args.gamma is not None:
        ens, param, label = TreeEnsemble("gw", args.gamma), args.gamma, "gw"
    else:
        ens, param, label = TreeEnsemble("regular", args.k), args.k, "regular"
    values = args.theta if args.model == "ising" else args.eps_grid
    if values is None:
        raise ArgError("--theta (ising) or --eps (spinglass, coloring) is required")
    rows = []
    for vi, v in enumerate(values):
        if args.model == "ising":
            model = TreeModel.ising(v, args.lam)
        elif args.model == "spinglass":
            model = TreeModel.spin_glass(v)
        else:
            model = TreeModel.coloring(_need(args.q, "--q"), v)
        for t in args.t:
            m, se = tree_reconstruction_bias(ens, model, t, args.trials, args.seed, args.jobs, stream=vi)
            rows.append({"ensemble": label, "k_or_gamma": param, "theta": v, "lambda": args.lam, "t": t,
                         "trials": args.trials, "bias_mean": m, "bias_stderr": se, "seed": args.seed})
    cols = ["ensemble", "k_or_gamma", "theta", "lambda", "t", "trials", "bias_mean", "bias_stderr", "seed"]
    write_csv(rows, cols, args.out)
    return _maybe_plot(args, rows, x="t", y="bias_mean", yerr="bias_stderr", group=["theta"],
                       title=f"tree bias, {label} {param}", hline=0.02)


def _cmd_graph_scan(args) -> list:
    from .recon import GRAPH_COLUMNS, MAGNETIZATION_COLUMNS, ferro_threshold_scan, magnetization_proxy

    rows = ferro_threshold_scan(args.k, args.theta, args.n, args.t, args.trials, args.seed, args.burn_in,
                                args.tree_trials, args.jobs)
    write_csv(rows, GRAPH_COLUMNS, args.out)
    extra = []
    if args.mag_runs:
        mrows = [magnetization_proxy(args.k, th, args.n, args.mag_runs, args.mag_sweeps, args.seed,
                                     args.mag_threshold, args.jobs) for th in args.theta]
        mag_out = _sibling(args.out, "_magnetization")
        write_csv(mrows, MAGNETIZATION_COLUMNS, mag_out)
        if mag_out is not None:
            extra.append(mag_out)
        sys.stderr.write(f"magnetization threshold {args.mag_threshold} is a numeric convention\n")
    extra += _maybe_plot(args, rows, x="t", y="bias_mean", yerr="bias_stderr", group=["ensemble", "theta_or_eps"],
                         title=f"graph vs tree bias, k={args.k}, N={args.n}")
    return extra


def _cmd_replica(args) -> list:
    from .replica import phi_gap_scan, sphericity_estimate

    if args.what == "phi-scan":
        q = _need(args.q, "--q")
        rows = []
        for gamma in args.gamma:
            for eps in args.eps_grid or [0.5]:
                r = phi_gap_scan(q, gamma, eps, args.delta, args.delta_prime, 1.0 / args.resolution)
                nu = r["argmin_nu"]
                flat = "" if nu is None else " ".join(_fmt(v) for v in nu.ravel())
                rows.append({"q": q, "gamma": gamma, "eps": eps, "delta": args.delta, "deltap": args.delta_prime,
                             "gap": r["gap"], "argmin_nu": flat})
        write_csv(rows, ["q", "gamma", "eps", "delta", "deltap", "gap", "argmin_nu"], args.out)
        return []
    from .model import ModelSpec

    if args.model == "ising":
        spec = ModelSpec("ising", theta=_need(args.theta_value, "--theta"), lam=args.lam,
                         gamma=args.gamma_value if args.k is None else None, k=args.k)
        value = spec.theta
    elif args.model == "spinglass":
        spec = ModelSpec("spinglass", eps=_need(args.eps, "--eps"), gamma=_need(args.gamma_value, "--gamma"))
        value = spec.eps
    else:
        spec = ModelSpec("coloring", eps=_need(args.eps, "--eps"), q=_need(args.q, "--q"),
                         gamma=args.gamma_value if args.k is None else None, k=args.k)
        value = spec.eps
    if spec.k is None and spec.gamma is None:
        raise ArgError("--gamma or --k is required")
    param1 = spec.k if spec.k is not None else spec.gamma
    rows = sphericity_estimate(spec, args.n, args.trials, args.seed, args.burn_in, args.jobs)
    for r in rows:
        r.update(param1=param1, param2=value)
    write_csv(rows, ["model", "N", "param1", "param2", "xi", "EQ2_mean", "EQ2_stderr", "trials", "seed"], args.out)
    return _maybe_plot(args, rows, x="N", y="EQ2_mean", yerr="EQ2_stderr", group=["xi"], logx=True, logy=True,
                       title=f"E[Q^2], {spec.kind}")


def _cmd_sg_scan(args) -> list:
    from .recon import SG_COLUMNS, spin_glass_threshold_scan

    rows = spin_glass_threshold_scan(args.gamma, _need(args.eps, "--eps"), args.n, args.trials, args.seed,
                                     args.t, args.burn_in, args.jobs)
    write_csv(rows, SG_COLUMNS, args.out)
    q_rows = [r for r in rows if r["statistic"] == "EQ12sq"]
    return _maybe_plot(args, q_rows, x="N", y="mean", yerr="stderr", group=["gamma"], logx=True, logy=True,
                       title=f"E[q12^2], eps={args.eps}")


# ---------------------------------------------------------------- parser

def _common(p, seed=True):
    p.add_argument("--out", default=None, help="output path (default stdout)")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master seed (RECONLAB_SEED overrides)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--plot", action="store_true", help="also render a PNG next to --out (needs matplotlib)")


def _model_args(p, theta_grid=False):
    if theta_grid:
        p.add_argument("--theta", type=lambda s: parse_grid(s), default=None)
        p.add_argument("--eps", dest="eps_grid", type=lambda s: parse_grid(s), default=None)
    else:
        p.add_argument("--theta", dest="theta_value", type=float, default=None)
        p.add_argument("--eps", type=float, default=None)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--q", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ip = lambda s: parse_grid(s, int)  # noqa: E731
    fp = lambda s: parse_grid(s, float)  # noqa: E731
    parser = argparse.ArgumentParser(prog="reconlab", description="Reconstruction experiments on sparse graphs.")
    parser.add_argument("--version", action="version", version=f"reconlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a graph or tree in the text format")
    p.add_argument("ensemble", choices=["poisson", "regular", "gw-tree", "regular-tree"])
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--signed", action="store_true", help="draw table ids 0/1 with probability 1/2 each")
    _common(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("exact", help="exact root-vs-far TV on a small graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", choices=["ising", "spinglass", "coloring"], default="ising")
    p.add_argument("--model-file", default=None, help="JSON model descriptor (overrides --model flags)")
    _model_args(p)
    p.add_argument("--root", type=int, default=0)
    p.add_argument("--t", type=ip, default=[0, 1, 2])
    p.add_argument("--budget", type=int, default=2 ** 24)
    _common(p)
    p.set_defaults(func=_cmd_exact)

    p = sub.add_parser("tree-scan", help="Monte Carlo tree reconstruction bias")
    p.add_argument("model", choices=["ising", "spinglass", "coloring"])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--gamma", type=float, default=None, help="Galton-Watson density (instead of --k)")
    _model_args(p, theta_grid=True)
    p.add_argument("--t", type=ip, required=True)
    p.add_argument("--trials", type=int, default=2000)
    _common(p)
    p.set_defaults(func=_cmd_tree_scan)

    p = sub.add_parser("graph-scan", help="ferromagnet on random regular graphs, with tree companion")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--theta", type=fp, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--t", type=ip, default=[1, 2, 3])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tree-trials", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--mag-runs", type=int, default=0, help="runs for the magnetization proxy (0 = skip)")
    p.add_argument("--mag-sweeps", type=int, default=5000)
    p.add_argument("--mag-threshold", type=float, default=0.2)
    _common(p)
    p.set_defaults(func=_cmd_graph_scan)

    p = sub.add_parser("replica", help="two-replica statistics")
    p.add_argument("what", choices=["sphericity", "phi-scan"])
    p.add_argument("--model", choices=["ising", "spinglass", "coloring"], default="spinglass")
    p.add_argument("--theta", dest="theta_value", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--eps-grid", type=fp, default=None, help="phi-scan: eps values")
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--gamma", type=fp, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--n", type=ip, default=[100, 200, 400])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--delta-prime", type=float, default=0.01)
    p.add_argument("--resolution", type=int, default=60, help="phi-scan grid: multiples of 1/resolution")
    _common(p)
    p.set_defaults(func=_cmd_replica)

    p = sub.add_parser("sg-scan", help="spin glass on Poisson graphs across densities")
    p.add_argument("--gamma", type=fp, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=ip, default=[100, 200, 400])
    p.add_argument("--t", type=ip, default=[1, 2, 3])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--burn-in", type=int, default=1000)
    _common(p)
    p.set_defaults(func=_cmd_sg_scan)
    return parser


def _normalize(args) -> None:
    env = os.environ.get("RECONLAB_SEED")
    if env is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env)
        except ValueError:
            raise ArgError(f"RECONLAB_SEED must be an integer, got {env!r}") from None
    if args.command == "replica":
        # sphericity takes a single density, phi-scan a grid
        g = args.gamma
        args.gamma_value = g[0] if g else None
        if args.what == "sphericity" and g and len(g) > 1:
            raise ArgError("sphericity takes a single --gamma")
        if args.what == "phi-scan" and not g:
            raise ArgError("phi-scan needs --gamma")
    if getattr(args, "trials", 1) is not None and getattr(args, "trials", 1) < 1:
        raise ArgError("--trials must be >= 1")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        raise ArgError("--jobs must be >= 1")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        _normalize(args)
    except ArgError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"reconlab: error: {exc}\n")
        return 2
    started = time.time()
    try:
        extra = args.func(args)
    except ArgError as exc:
        sys.stderr.write(f"reconlab: error: {exc}\n")
        return 2
    except Exception as exc:  # runtime failure
        sys.stderr.write(f"reconlab: {type(exc).__name__}: {exc}\n")
        return 1
    _manifest(args, args.out, started, extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
