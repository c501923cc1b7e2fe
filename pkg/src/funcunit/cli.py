"""Command-line entry point: ``funcunit <subcommand> ...``.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import METHODS, median_ac, run_benchmark, write_csv
from .cluster import affinity, clustering_accuracy, normalized_cut
from .core_io import load_labels, load_tensor, save_labels, save_tensor
from .factorize import FactorizeConfig, factorize
from .features import build_feature_matrix
from .graph import knn_heat_graph, save_edges_csv
from .pipeline import ConfigError, StageError, load_config, run_pipeline
from .select import select_k
from .synth import Rotation, Translation, synth_2d, synth_3d
from .tracking import (
    TrackingParams,
    forward_displacement,
    load_phase_dir,
    register_pair,
    save_phase_dir,
    synth_phases,
)

log = logging.getLogger("funcunit")


class UsageError(Exception):
    pass


def _bandwidth(text):
    return "auto" if text == "auto" else float(text)


def _seed_range(text):
    """``1..5`` or ``1,3,7``."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s]


def _graph_args(p):
    p.add_argument("--neighbors", type=int, default=5)
    p.add_argument("--bandwidth", type=_bandwidth, default="auto")


def cmd_synth(a):
    if a.kind == "synth3d":
        ds = synth_3d(a.scenario, grid=tuple(a.grid or (24, 24, 24)), frames=a.frames,
                      rng=a.seed, jitter=a.jitter or 0.0)
        ds.save(a.out)
    elif a.kind == "synth2d":
        ds = synth_2d(a.k, grid=tuple(a.grid or (64, 64)), rng=a.seed,
                      jitter=0.02 if a.jitter is None else a.jitter)
        ds.save(a.out)
    else:
        shape = tuple(a.grid or (32, 32, 32))
        if a.motion == "translate":
            mot = Translation(tuple(a.vector))
        else:
            center = tuple(a.center) if a.center else tuple((n - 1) / 2 for n in shape)
            mot = Rotation(a.axis, a.angle, center)
        save_phase_dir(synth_phases(mot, shape), a.out)
        save_tensor(forward_displacement(mot, shape), Path(a.out) / "truth_field.mtf")
    return 0


def cmd_track(a):
    params = TrackingParams(iterations=a.iterations, fluid_sigma=a.fluid_sigma,
                            diffusion_sigma=a.diffusion_sigma, step_cap=a.step_cap)
    field = register_pair(load_phase_dir(a.phases, tuple(a.spacing)), params)
    save_tensor(field.displacement, a.out)
    out = Path(a.out)
    save_tensor(field.inverse_displacement, out.with_name(out.stem + ".inv" + out.suffix))
    return 0


def cmd_features(a):
    save_tensor(build_feature_matrix(load_tensor(a.traj), rescale=not a.no_rescale), a.out)
    return 0


def cmd_graph(a):
    save_edges_csv(knn_heat_graph(load_tensor(a.u), a.neighbors, a.bandwidth), a.out)
    return 0


def cmd_factorize(a):
    U = load_tensor(a.u)
    g = knn_heat_graph(U, a.neighbors, a.bandwidth) if a.lam > 0 else None
    cfg = FactorizeConfig(eta=a.eta, lam=a.lam, max_iters=a.max_iters, rel_tol=a.tol)
    rank = a.rank or min(a.k, *U.shape)
    fac = factorize(U, rank, g, cfg, rng=a.seed)
    save_tensor(fac.v, a.out_v)
    save_tensor(fac.w, a.out_w)
    if a.trace:
        Path(a.trace).write_text(
            "iteration,cost\n" + "".join(f"{i},{c!r}\n" for i, c in enumerate(fac.cost_trace)),
            encoding="utf-8")
    log.info("%d iterations, final cost %.6g", fac.n_iter, fac.cost_trace[-1])
    return 0


def cmd_cluster(a):
    W = load_tensor(a.w)
    labels = normalized_cut(affinity(W, a.sigma, squared=a.squared), a.k, rng=a.seed)
    save_labels(labels, a.out)
    return 0


def cmd_select(a):
    U = load_tensor(a.u)
    if a.kmin > a.kmax:
        raise UsageError("--kmin exceeds --kmax")
    g = knn_heat_graph(U, a.neighbors, a.bandwidth) if a.lam > 0 else None
    cfg = FactorizeConfig(eta=a.eta, lam=a.lam, max_iters=a.max_iters, rel_tol=a.tol)
    res = select_k(U, g, range(a.kmin, a.kmax + 1), a.runs, cfg, a.seed, a.sigma)
    with open(a.out, "w", encoding="utf-8") as fh:
        json.dump(res.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if a.csv:
        Path(a.csv).write_text(res.to_csv(), encoding="utf-8")
    print(res.best_k)
    return 0


def cmd_accuracy(a):
    pred, truth = load_labels(a.pred), load_labels(a.truth)
    print(f"{clustering_accuracy(pred, truth):.4f}")
    return 0


def cmd_bench(a):
    methods = list(METHODS) if a.methods == "all" else a.methods.split(",")
    params = {}
    for name in ("eta", "lam", "sigma"):
        if getattr(a, name) is not None:
            params[name] = getattr(a, name)
    rows = []
    for ds in a.dataset:
        res = run_benchmark(ds, methods, a.k, params, _seed_range(a.seeds))
        for m in methods:
            log.info("%s %s median AC %.2f", ds, m, median_ac(res, m))
        rows.extend(res)
    write_csv(rows, a.out)
    return 0


def cmd_pipeline(a):
    cfg = load_config(a.config)
    if a.seed is not None:
        cfg["seed"] = a.seed
    if a.k is not None:
        cfg.setdefault("cluster", {})["k"] = a.k
    report = run_pipeline(cfg, a.out)
    print(json.dumps({"k": report["k"], "accuracy": report.get("accuracy")}))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="funcunit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a labelled synthetic dataset or phase volumes")
    s.add_argument("--kind", choices=["synth3d", "synth2d", "phases"], default="synth3d")
    s.add_argument("--scenario", choices=list("ABCD"), default="A")
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--grid", type=int, nargs="+")
    s.add_argument("--frames", type=int, default=11)
    s.add_argument("--jitter", type=float)
    s.add_argument("--motion", choices=["translate", "rotate"], default="translate")
    s.add_argument("--vector", type=float, nargs=3, default=(0.5, 0.0, 0.0))
    s.add_argument("--axis", choices=["x", "y", "z"], default="x")
    s.add_argument("--angle", type=float, default=-0.1)
    s.add_argument("--center", type=float, nargs=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="file prefix, or directory for --kind phases")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("track", help="register reference and deformed phase volumes")
    s.add_argument("--phases", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--spacing", type=float, nargs=3, default=(1.0, 1.0, 1.0))
    s.add_argument("--iterations", type=int, default=100)
    s.add_argument("--fluid-sigma", type=float, default=1.0)
    s.add_argument("--diffusion-sigma", type=float, default=1.0)
    s.add_argument("--step-cap", type=float, default=0.4)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("features", help="trajectories -> rescaled feature matrix")
    s.add_argument("--traj", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-rescale", action="store_true")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("graph", help="dump the k-NN heat-kernel graph as i,j,weight CSV")
    s.add_argument("--u", required=True)
    s.add_argument("--out", required=True)
    _graph_args(s)
    s.set_defaults(func=cmd_graph)

    def nmf_args(s):
        s.add_argument("--u", required=True)
        s.add_argument("--eta", type=float, default=100.0)
        s.add_argument("--lambda", dest="lam", type=float, default=100.0)
        s.add_argument("--max-iters", type=int, default=500)
        s.add_argument("--tol", type=float, default=1e-6)
        s.add_argument("--seed", type=int, default=0)
        _graph_args(s)

    s = sub.add_parser("factorize", help="graph-regularised sparse NMF")
    nmf_args(s)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--rank", type=int)
    s.add_argument("--out-v", required=True)
    s.add_argument("--out-w", required=True)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_factorize)

    s = sub.add_parser("cluster", help="normalized cut of weighting-map columns")
    s.add_argument("--w", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--sigma", type=float, default=0.01)
    s.add_argument("--squared", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("select-k", help="consensus dispersion over a range of k")
    nmf_args(s)
    s.add_argument("--kmin", type=int, default=2)
    s.add_argument("--kmax", type=int, default=5)
    s.add_argument("--runs", type=int, default=30)
    s.add_argument("--sigma", type=float, default=0.01)
    s.add_argument("--out", required=True)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("accuracy", help="clustering accuracy of two label files")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.set_defaults(func=cmd_accuracy)

    s = sub.add_parser("bench", help="compare methods on labelled datasets")
    s.add_argument("--dataset", action="append", required=True)
    s.add_argument("--methods", default="all")
    s.add_argument("--seeds", default="1..5")
    s.add_argument("--k", type=int)
    s.add_argument("--eta", type=float)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("pipeline", help="run every stage from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--k", type=int)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if a.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=a.threads):
                return a.func(a)
        return a.func(a)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {a.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
