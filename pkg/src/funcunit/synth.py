"""Labelled synthetic motion datasets.

``synth_2d`` tiles a half-ellipse into k regions that each move by their own
displacement between two frames. ``synth_3d`` builds two overlapping
muscle-like masks, one translating and one rotating about the x axis, in four
scenarios:

=====  ===========================  ==========================  ======
name   translated                   rotated                     labels
=====  ===========================  ==========================  ======
A      genioglossus (incl. overlap)  superior longitudinal       2
B      genioglossus                 superior longitudinal       3
C      transverse                   genioglossus (incl. overlap)  2
D      genioglossus                 transverse                  3
=====  ===========================  ==========================  ======

In B and D the interdigitated voxels form their own label and carry the sum
of both displacement fields.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .core_io import make_rng, save_labels, save_tensor

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class Translation:
    """Rigid shift reaching ``vector`` at the last frame."""

    vector: tuple

    def displacement(self, points, frac: float) -> np.ndarray:
        return np.broadcast_to(frac * np.asarray(self.vector, dtype=np.float64), np.shape(points))


@dataclass(frozen=True)
class Rotation:
    """Rotation by ``angle`` radians (over the whole sequence) about an axis
    through ``center``. ``axis`` is ``"x"``, ``"y"``, ``"z"`` or a 3-vector."""

    axis: Union[str, tuple]
    angle: float
    center: tuple = (0.0, 0.0, 0.0)

    def unit_axis(self) -> np.ndarray:
        if isinstance(self.axis, str):
            a = np.zeros(3)
            a[AXES[self.axis]] = 1.0
            return a
        a = np.asarray(self.axis, dtype=np.float64)
        nrm = np.linalg.norm(a)
        if nrm == 0:
            raise ValueError("rotation axis has zero length")
        return a / nrm

    def matrix(self, frac: float) -> np.ndarray:
        k = self.unit_axis()
        th = frac * self.angle
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        return np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * (K @ K)

    def displacement(self, points, frac: float) -> np.ndarray:
        c = np.asarray(self.center, dtype=np.float64)
        rel = np.asarray(points, dtype=np.float64) - c
        return rel @ self.matrix(frac).T - rel


Motion = Union[Translation, Rotation]


def _frame_fraction(frame_index: int, total_frames: int) -> float:
    if total_frames < 1 or not 1 <= frame_index <= total_frames:
        raise ValueError(f"frame_index {frame_index} outside 1..{total_frames}")
    return 0.0 if total_frames == 1 else (frame_index - 1) / (total_frames - 1)


def apply_rigid_motion(points, motion: Motion, frame_index: int, total_frames: int) -> np.ndarray:
    """Position of ``points`` (P x 3) at ``frame_index`` (1-based); frame 1 is
    the identity and the full motion is reached at ``total_frames``."""
    pts = np.asarray(points, dtype=np.float64)
    if isinstance(motion, Rotation):
        motion.unit_axis()
    return pts + motion.displacement(pts, _frame_fraction(frame_index, total_frames))


@dataclass
class SyntheticDataset:
    trajectories: np.ndarray  # (P, L, 3)
    truth: np.ndarray  # (P,)
    grid_dims: tuple
    params: dict = field(default_factory=dict)
    mask_indices: Optional[np.ndarray] = None  # (P, ndim) voxel indices

    @property
    def n_points(self) -> int:
        return self.trajectories.shape[0]

    @property
    def n_frames(self) -> int:
        return self.trajectories.shape[1]

    def save(self, prefix) -> None:
        """Write ``<prefix>.traj.mtf``, ``<prefix>.labels.csv`` and ``<prefix>.json``."""
        save_tensor(self.trajectories, f"{prefix}.traj.mtf")
        save_labels(self.truth, f"{prefix}.labels.csv")
        meta = {"grid_dims": list(self.grid_dims), "n_points": self.n_points,
                "n_frames": self.n_frames, **self.params}
        with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (Translation, Rotation)):
        return {"type": type(obj).__name__.lower(), **asdict(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj)}")


def _trajectories(points, motions_per_point, n_frames, jitter, rng):
    """Stack frames for groups of points that share a list of motions."""
    P = points.shape[0]
    traj = np.empty((P, n_frames, 3))
    for f in range(1, n_frames + 1):
        frac = _frame_fraction(f, n_frames)
        pos = points.copy()
        for motions, sel in motions_per_point:
            for mot in motions:
                pos[sel] += mot.displacement(points[sel], frac)
        traj[:, f - 1] = pos
    if jitter > 0:
        # frame 1 stays on the voxel centres
        traj[:, 1:] += jitter * rng.standard_normal((P, n_frames - 1, 3))
    return traj


# -- 2D --------------------------------------------------------------------

def half_ellipse_regions(k: int, grid=(64, 64), core_radius: float = 0.4) -> np.ndarray:
    """Label image (-1 outside) of a half-ellipse split into a core and
    ``k - 1`` angular sectors."""
    nx, ny = grid
    x, y = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float), indexing="ij")
    cx, cy = (nx - 1) / 2.0, 0.1 * (ny - 1)
    ax, ay = 0.45 * nx, 0.8 * ny
    rx, ry = (x - cx) / ax, (y - cy) / ay
    r = np.hypot(rx, ry)
    inside = (r <= 1.0) & (ry >= 0)
    theta = np.arctan2(ry, rx)  # [0, pi] inside the upper half
    sector = np.minimum((theta / np.pi * (k - 1)).astype(int), k - 2) + 1
    lab = np.where(r < core_radius, 0, sector)
    return np.where(inside, lab, -1)


def region_displacements_2d(k: int, step: float = 1.0) -> np.ndarray:
    """Distinct in-plane displacements; no direction is axis-aligned."""
    ang = 2 * np.pi * (np.arange(k) + 0.5) / k + 0.1
    mag = step * (1.0 + 0.25 * (np.arange(k) % 3))
    return np.stack([mag * np.cos(ang), mag * np.sin(ang), np.zeros(k)], axis=1)


def synth_2d(k: int = 8, grid=(64, 64), rng=0, jitter: float = 0.02, step: float = 1.0) -> SyntheticDataset:
    if not 2 <= k <= 12:
        raise ValueError(f"k must be in 2..12, got {k}")
    grid = tuple(int(g) for g in grid)
    if len(grid) != 2 or min(grid) < 32:
        raise ValueError("2D grid must be at least 32 x 32")
    lab = half_ellipse_regions(k, grid)
    idx = np.argwhere(lab >= 0)
    truth = lab[tuple(idx.T)].astype(np.int64)
    points = np.column_stack([idx.astype(float), np.zeros(len(idx))])
    disp = region_displacements_2d(k, step)
    groups = [([Translation(tuple(disp[r]))], truth == r) for r in range(k)]
    traj = _trajectories(points, groups, 2, jitter, make_rng(rng))
    params = {"kind": "synth2d", "k": k, "jitter": jitter, "step": step,
              "displacements": disp}
    return SyntheticDataset(traj, truth, grid, params, idx)


# -- 3D --------------------------------------------------------------------

def ellipsoid_mask(grid, center, radii) -> np.ndarray:
    """Boolean ellipsoid; ``center`` and ``radii`` are fractions of ``grid``."""
    coords = np.meshgrid(*[np.arange(n, dtype=float) for n in grid], indexing="ij")
    acc = np.zeros(grid)
    for c, n, f, r in zip(coords, grid, center, radii):
        acc += ((c - f * (n - 1)) / (r * n)) ** 2
    return acc <= 1.0


MUSCLES = {
    # long horizontal body
    "GG": ((0.5, 0.5, 0.4), (0.22, 0.40, 0.22)),
    # thin superior sheet on top of GG
    "SL": ((0.5, 0.5, 0.63), (0.28, 0.40, 0.10)),
    # left-right plate crossing GG
    "T": ((0.5, 0.55, 0.5), (0.40, 0.12, 0.25)),
}

SCENARIOS = {
    # name: (translated, rotated, other muscle, overlap owner or None)
    "A": ("GG", "SL", "SL", "GG"),
    "B": ("GG", "SL", "SL", None),
    "C": ("T", "GG", "T", "GG"),
    "D": ("GG", "T", "T", None),
}

def styloid_center(grid) -> tuple:
    """Pivot behind and above the tongue body, outside every mask, so each
    rotating voxel moves the same way round."""
    nx, ny, nz = grid
    return ((nx - 1) / 2.0, -0.25 * ny, 0.9 * (nz - 1))


DEFAULT_TRANSLATION = (1.0, 0.5, 0.5)
DEFAULT_ROTATION = -0.1


def synth_3d(scenario: str = "A", grid=(24, 24, 24), frames: int = 11, rng=0,
             jitter: float = 0.0, translation=DEFAULT_TRANSLATION,
             rotation_angle: float = DEFAULT_ROTATION, rotation_center=None) -> SyntheticDataset:
    """Two-muscle scenario. Labels: 0 = GG, 1 = the other muscle,
    2 = interdigitated zone (B and D only)."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    grid = tuple(int(g) for g in grid)
    if len(grid) != 3 or min(grid) < 20:
        raise ValueError("3D grid must be at least 20 x 20 x 20")
    if frames < 2:
        raise ValueError("need at least two frames")
    moved, rotated, other, owner = SCENARIOS[scenario]
    gg = ellipsoid_mask(grid, *MUSCLES["GG"])
    ot = ellipsoid_mask(grid, *MUSCLES[other])
    overlap = gg & ot

    label = np.full(grid, -1, dtype=np.int64)
    label[gg] = 0
    label[ot & ~gg] = 1
    if owner is None:
        label[overlap] = 2
    idx = np.argwhere(label >= 0)
    truth = label[tuple(idx.T)]
    points = idx.astype(np.float64)

    g, o = gg[tuple(idx.T)], ot[tuple(idx.T)]
    # overlap moves with its owner (always GG) or, unowned, with both muscles
    is_gg = g if owner else g & ~o
    is_ot = o & ~g
    in_overlap = g & o

    rot_mask = gg if rotated == "GG" else ot
    if rotation_center is None or rotation_center == "styloid":
        rotation_center = styloid_center(grid)
    elif rotation_center == "centroid":
        rotation_center = tuple(np.argwhere(rot_mask).mean(axis=0))
    trans = Translation(tuple(float(t) for t in translation))
    rot = Rotation("x", float(rotation_angle), tuple(float(c) for c in rotation_center))
    motion_of = {moved: trans, rotated: rot}

    groups = [([motion_of["GG"]], is_gg), ([motion_of[other]], is_ot)]
    if owner is None:
        groups.append(([trans, rot], in_overlap))
    traj = _trajectories(points, groups, frames, jitter, make_rng(rng))
    params = {"kind": "synth3d", "scenario": scenario, "frames": frames, "jitter": jitter,
              "translated": moved, "rotated": rotated, "overlap_owner": owner,
              "translation": trans, "rotation": rot,
              "n_labels": int(truth.max()) + 1}
    return SyntheticDataset(traj, truth, grid, params, idx)
