"""Motion features from point trajectories.

A trajectory field has shape ``(P, L, 3)``: P points, L frames, xyz. The
feature matrix has one column per point and ``4 * (L - 1)`` rows laid out
as ``[m_1..m_{L-1}, oz_1.., ox_1.., oy_1..]`` where ``m`` is the inter-frame
displacement magnitude and ``oz/ox/oy`` are the projected direction cosines
shifted by one into ``[0, 2]``.
"""

from __future__ import annotations

import numpy as np

FEATURE_MAX = 10.0


def _check_traj(traj) -> np.ndarray:
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim != 3 or traj.shape[2] != 3:
        raise ValueError(f"trajectories must have shape (P, L, 3), got {traj.shape}")
    if traj.shape[1] < 2:
        raise ValueError("need at least two frames")
    if not np.all(np.isfinite(traj)):
        raise ValueError("trajectories contain non-finite values")
    return traj


def _safe_ratio(num, den):
    # 0/0 -> 0, so the shifted feature sits at the midpoint 1
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def frame_steps(traj) -> np.ndarray:
    """Inter-frame displacements, shape ``(P, L-1, 3)``."""
    traj = _check_traj(traj)
    return np.diff(traj, axis=1)


def magnitude_feature(traj, p: int, l: int) -> float:
    """Length of the step of point ``p`` from frame ``l`` to ``l+1`` (1-based ``l``)."""
    traj = np.asarray(traj, dtype=np.float64)
    if not 1 <= l <= traj.shape[1] - 1:
        raise IndexError(f"frame index {l} outside 1..{traj.shape[1] - 1}")
    return float(np.linalg.norm(traj[p, l] - traj[p, l - 1]))


def direction_features(steps) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    steps = np.asarray(steps, dtype=np.float64)
    dx, dy, dz = steps[..., 0], steps[..., 1], steps[..., 2]
    oz = _safe_ratio(dx, np.sqrt(dx**2 + dy**2)) + 1.0
    ox = _safe_ratio(dy, np.sqrt(dy**2 + dz**2)) + 1.0
    oy = _safe_ratio(dz, np.sqrt(dz**2 + dx**2)) + 1.0
    return oz, ox, oy


def angle_features(traj, p: int, l: int) -> tuple[float, float, float]:
    traj = np.asarray(traj, dtype=np.float64)
    if not 1 <= l <= traj.shape[1] - 1:
        raise IndexError(f"frame index {l} outside 1..{traj.shape[1] - 1}")
    oz, ox, oy = direction_features(traj[p, l] - traj[p, l - 1])
    return float(oz), float(ox), float(oy)


def raw_feature_matrix(traj) -> np.ndarray:
    """Unscaled ``4(L-1) x P`` feature matrix."""
    steps = frame_steps(traj)
    mag = np.linalg.norm(steps, axis=2)
    oz, ox, oy = direction_features(steps)
    # each block is (P, L-1); stack along the feature axis then transpose
    return np.concatenate([mag, oz, ox, oy], axis=1).T.copy()


def rescale_rows(U, upper: float = FEATURE_MAX) -> np.ndarray:
    """Affinely map every row onto ``[0, upper]``; constant rows become 0."""
    U = np.asarray(U, dtype=np.float64)
    if not np.all(np.isfinite(U)):
        raise ValueError("matrix contains non-finite values")
    lo = U.min(axis=1, keepdims=True)
    span = U.max(axis=1, keepdims=True) - lo
    out = np.zeros_like(U)
    np.divide((U - lo) * upper, span, out=out, where=span > 0)
    return np.clip(out, 0.0, upper)


def build_feature_matrix(traj, rescale: bool = True) -> np.ndarray:
    U = raw_feature_matrix(traj)
    return rescale_rows(U) if rescale else U
