"""End-to-end run driven by a JSON config.

Stages: input (synthetic or files) -> optional tracking -> features ->
graph -> k selection (unless ``cluster.k`` is fixed) -> factorisation ->
normalized cut -> scoring. Every artefact lands in the output directory
together with ``manifest.json`` which records the resolved config, its hash
and library versions.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import platform
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import sklearn

from . import __version__
from .cluster import affinity, clustering_accuracy, normalized_cut
from .core_io import load_labels, load_tensor, make_rng, save_labels, save_tensor
from .factorize import FactorizeConfig, factorize
from .features import build_feature_matrix
from .graph import knn_heat_graph, save_edges_csv
from .select import select_k
from .synth import synth_2d, synth_3d
from .tracking import TrackingParams, fields_to_trajectories, load_phase_dir, register_pair

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "input": {
        "oneOf": [
            _obj({"synth3d": _obj({
                "scenario": {"enum": ["A", "B", "C", "D"]},
                "grid": {"type": "array", "items": _posint, "minItems": 3, "maxItems": 3},
                "frames": {"type": "integer", "minimum": 2},
                "jitter": _nonneg,
            }, ["scenario"])}, ["synth3d"]),
            _obj({"synth2d": _obj({
                "k": {"type": "integer", "minimum": 2, "maximum": 12},
                "grid": {"type": "array", "items": _posint, "minItems": 2, "maxItems": 2},
                "jitter": _nonneg,
            }, ["k"])}, ["synth2d"]),
            _obj({"files": _obj({
                "trajectories": {"type": "string"},
                "labels": {"type": "string"},
            }, ["trajectories"])}, ["files"]),
            _obj({"phases": _obj({
                "frames": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "mask": {"type": "string"},
                "spacing": {"type": "array", "items": _pos, "minItems": 3, "maxItems": 3},
                "labels": {"type": "string"},
            }, ["frames", "mask"])}, ["phases"]),
        ]
    },
    "tracking": _obj({
        "iterations": _posint, "fluid_sigma": _pos, "diffusion_sigma": _pos,
        "step_cap": _pos, "normalization": _pos,
    }),
    "features": _obj({"rescale": {"type": "boolean"}}),
    "graph": _obj({
        "n_neighbors": _posint,
        "bandwidth": {"oneOf": [{"const": "auto"}, _pos]},
    }),
    "factorize": _obj({
        "rank": {"oneOf": [_posint, {"type": "null"}]},
        "eta": _nonneg, "lambda": _nonneg, "max_iters": _posint, "rel_tol": _nonneg,
    }),
    "cluster": _obj({
        "k": {"oneOf": [{"type": "integer", "minimum": 2}, {"type": "null"}]},
        "sigma": _pos,
        "squared": {"type": "boolean"},
    }),
    "select": _obj({
        "kmin": {"type": "integer", "minimum": 2},
        "kmax": {"type": "integer", "minimum": 2},
        "runs": {"type": "integer", "minimum": 2},
    }),
}, ["seed", "input"])

DEFAULTS = {
    "features": {"rescale": True},
    "graph": {"n_neighbors": 5, "bandwidth": "auto"},
    "factorize": {"rank": None, "eta": 100.0, "lambda": 100.0, "max_iters": 500, "rel_tol": 1e-6},
    "cluster": {"k": None, "sigma": 0.01, "squared": False},
    "select": {"kmin": 2, "kmax": 5, "runs": 30},
    "tracking": {},
}


def validate_config(cfg: dict) -> dict:
    """Validate and fill defaults. Raises :class:`ConfigError`."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    out = copy.deepcopy(cfg)
    for section, vals in DEFAULTS.items():
        out[section] = {**vals, **out.get(section, {})}
    if out["select"]["kmin"] > out["select"]["kmax"]:
        raise ConfigError("config error at select: kmin exceeds kmax")
    return out


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_input(cfg, out: Path):
    inp, seed = cfg["input"], cfg["seed"]
    if "synth3d" in inp:
        p = inp["synth3d"]
        ds = synth_3d(p["scenario"], grid=tuple(p.get("grid", (24, 24, 24))),
                      frames=p.get("frames", 11), rng=make_rng(seed, 0), jitter=p.get("jitter", 0.0))
        ds.save(out / "synth")
        return ds.trajectories, ds.truth
    if "synth2d" in inp:
        p = inp["synth2d"]
        ds = synth_2d(p["k"], grid=tuple(p.get("grid", (64, 64))), rng=make_rng(seed, 0),
                      jitter=p.get("jitter", 0.02))
        ds.save(out / "synth")
        return ds.trajectories, ds.truth
    if "files" in inp:
        p = inp["files"]
        traj = load_tensor(p["trajectories"])
        truth = load_labels(p["labels"]) if "labels" in p else None
        return traj, truth
    p = inp["phases"]
    spacing = tuple(p.get("spacing", (1.0, 1.0, 1.0)))
    params = TrackingParams(**cfg["tracking"])
    mask = load_tensor(p["mask"]) > 0.5
    fields = []
    for i, d in enumerate(p["frames"], start=2):
        f = register_pair(load_phase_dir(d, spacing), params)
        save_tensor(f.displacement, out / f"field_{i:03d}.mtf")
        fields.append(f)
    traj = fields_to_trajectories(fields, mask, spacing)
    truth = load_labels(p["labels"]) if "labels" in p else None
    return traj, truth


def run_pipeline(cfg: dict, out_dir) -> dict:
    """Execute all stages; returns the report that is also written to disk."""
    cfg = validate_config(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    manifest = {
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "versions": {"funcunit": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "scikit-learn": sklearn.__version__},
    }
    _dump_json(manifest, out / "manifest.json")

    def stage(name, fn):
        logger.info("stage %s", name)
        try:
            return fn()
        except Exception as exc:  # re-raised with the stage name attached
            raise StageError(name, exc) from exc

    traj, truth = stage("input", lambda: _load_input(cfg, out))
    stage("input", lambda: save_tensor(traj, out / "traj.mtf"))
    if truth is not None:
        stage("input", lambda: save_labels(truth, out / "truth.csv"))

    U = stage("features", lambda: build_feature_matrix(traj, cfg["features"]["rescale"]))
    save_tensor(U, out / "U.mtf")

    gcfg, fcfg, ccfg, scfg = cfg["graph"], cfg["factorize"], cfg["cluster"], cfg["select"]
    fac_cfg = FactorizeConfig(eta=fcfg["eta"], lam=fcfg["lambda"], max_iters=fcfg["max_iters"],
                              rel_tol=fcfg["rel_tol"])
    g = None
    if fcfg["lambda"] > 0:
        g = stage("graph", lambda: knn_heat_graph(U, gcfg["n_neighbors"], gcfg["bandwidth"]))
        save_edges_csv(g, out / "graph_edges.csv")

    report = {"config_sha256": manifest["config_sha256"], "seed": seed,
              "n_points": int(U.shape[1]), "n_features": int(U.shape[0])}
    k = ccfg["k"]
    if k is None:
        sel = stage("select-k", lambda: select_k(
            U, g, range(scfg["kmin"], scfg["kmax"] + 1), scfg["runs"], fac_cfg, seed,
            ccfg["sigma"], rank=fcfg["rank"], squared=ccfg["squared"]))
        k = sel.best_k
        report["selection"] = sel.to_json()
        (out / "dispersion.csv").write_text(sel.to_csv(), encoding="utf-8")
    report["k"] = int(k)

    rank = fcfg["rank"] or min(k, *U.shape)
    fac = stage("factorize", lambda: factorize(U, rank, g, fac_cfg, rng=make_rng(seed, 1)))
    save_tensor(fac.v, out / "V.mtf")
    save_tensor(fac.w, out / "W.mtf")
    (out / "cost.csv").write_text(
        "iteration,cost\n" + "".join(f"{i},{c!r}\n" for i, c in enumerate(fac.cost_trace)),
        encoding="utf-8")
    report.update(rank=int(rank), iterations=fac.n_iter, converged=fac.converged,
                  final_cost=fac.cost_trace[-1])

    labels = stage("cluster", lambda: normalized_cut(
        affinity(fac.w, ccfg["sigma"], squared=ccfg["squared"]), k, rng=make_rng(seed, 2)))
    save_labels(labels, out / "labels.csv")
    report["cluster_sizes"] = np.bincount(labels, minlength=k).tolist()

    if truth is not None:
        report["accuracy"] = stage("score", lambda: clustering_accuracy(labels, truth))
    _dump_json(report, out / "report.json")
    return report
