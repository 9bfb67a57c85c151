"""Drift metrics over fixed-length subsequences and the two-frame scale error.

t_rel and r_rel follow the odometry-benchmark definition: every frame
(stepped by start_stride) starts one subsequence per target length, the
subsequence ends at the first frame whose ground-truth path length reaches
the target, and the error pose between the predicted and ground-truth
endpoint motions is scored as

    t_rel = ||t'|| * 100 / l                       (percent)
    r_rel = arccos(clamp(d, -1, 1)) * 180/pi * 100 / l   (deg / 100 m)

with d = (tr(R') - 1) / 2 (evaluated by rotation_angle() in its
round-off safe atan2 form). Subsequences are chosen on the ground truth
only, so prediction drift never changes which subsequences get scored.

The scale error compares translation norms of each frame pair:

    se = 1 - min(|t_pred| / max(|t_gt|, eps), |t_gt| / max(|t_pred|, eps))

and is defined as 0 when both norms are below eps (a stationary frame
predicted as stationary is not an error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from odoscale import debug
from odoscale.core.pose import (
    RelativePose,
    Trajectory,
    compose_trajectory,
    rotation_angle,
)

DEFAULT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
DEFAULT_STRIDE = 1
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class EvalConfig:
    """Subsequence lengths (meters), start stride (frames) and scale-error epsilon (meters)."""

    lengths: tuple[float, ...] = DEFAULT_LENGTHS
    start_stride: int = DEFAULT_STRIDE
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        lengths = tuple(float(length) for length in self.lengths)
        if not lengths:
            raise ValueError("lengths cannot be empty")
        if any(not math.isfinite(length) or length <= 0 for length in lengths):
            raise ValueError(f"lengths must be positive and finite: {lengths}")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValueError(f"lengths must be strictly increasing: {lengths}")
        if isinstance(self.start_stride, bool) or int(self.start_stride) != self.start_stride:
            raise ValueError(f"start_stride must be an integer: {self.start_stride}")
        if self.start_stride < 1:
            raise ValueError(f"start_stride must be >= 1: {self.start_stride}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive: {self.epsilon}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "start_stride", int(self.start_stride))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def to_dict(self) -> dict:
        return {
            "lengths": list(self.lengths),
            "start_stride": self.start_stride,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class LengthBreakdown:
    """Drift for one target length; t_rel/r_rel are None when count is 0."""

    length: float
    t_rel: float | None
    r_rel: float | None
    count: int

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "t_rel": self.t_rel,
            "r_rel": self.r_rel,
            "count": self.count,
        }


@dataclass(frozen=True)
class EvalReport:
    """Drift and scale error of one sequence (or a scene average).

    t_rel (percent) and r_rel (deg / 100 m) are None, never 0, when no
    subsequence could be scored. scale_errors holds the per-frame series
    for single sequences and is empty for aggregates.
    """

    t_rel: float | None
    r_rel: float | None
    se: float
    per_length: tuple[LengthBreakdown, ...]
    subsequence_count: int
    frame_count: int
    config: EvalConfig
    scale_errors: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self, include_series: bool = False) -> dict:
        out = {
            "t_rel": self.t_rel,
            "r_rel": self.r_rel,
            "se": self.se,
            "per_length": [b.to_dict() for b in self.per_length],
            "subsequence_count": self.subsequence_count,
            "frame_count": self.frame_count,
            "config": self.config.to_dict(),
        }
        if include_series:
            out["scale_errors"] = list(self.scale_errors)
        return out


@dataclass(frozen=True)
class SubsequenceErrors:
    """Raw endpoint errors of every scored subsequence, in (start, length) order."""

    starts: np.ndarray
    ends: np.ndarray
    lengths: np.ndarray
    translation: np.ndarray  # ||t'|| in meters
    rotation: np.ndarray  # angle of R' in radians

    def __len__(self) -> int:
        return self.starts.shape[0]

    def t_rel(self) -> np.ndarray:
        return self.translation * 100.0 / self.lengths

    def r_rel(self) -> np.ndarray:
        return np.degrees(self.rotation) * 100.0 / self.lengths


def _mean(values) -> float | None:
    """Mean with fixed-order exact summation; None for no values."""
    values = list(values)
    if not values:
        return None
    return math.fsum(values) / len(values)


def subsequence_end(traj_gt: Trajectory, start: int, length: float) -> int | None:
    """Smallest j > start with arclen[j] - arclen[start] >= length, or None.

    Binary search on the prefix array, then settled against the exact
    difference predicate so the answer matches a linear scan bit for bit.
    """
    arclen = traj_gt.arclen
    n = arclen.shape[0]
    if not 0 <= start < n:
        raise ValueError(f"start {start} out of range for trajectory of {n} poses")
    if not length > 0:
        raise ValueError(f"length must be positive: {length}")

    base = arclen[start]
    j = max(int(np.searchsorted(arclen, base + length, side="left")), start + 1)
    while j < n and arclen[j] - base < length:
        j += 1
    while j - 1 > start and arclen[j - 1] - base >= length:
        j -= 1
    return j if j < n else None


def _check_pair(gt: Trajectory, pred: Trajectory) -> None:
    if len(gt) != len(pred):
        raise ValueError(
            f"trajectory length mismatch: ground truth has {len(gt)} poses, prediction has {len(pred)}"
        )
    if len(gt) < 2:
        raise ValueError("trajectories need at least 2 poses")


def _endpoint_motion(traj: Trajectory, starts: np.ndarray, ends: np.ndarray):
    ri_t = np.transpose(traj.rotations[starts], (0, 2, 1))
    d_rot = ri_t @ traj.rotations[ends]
    d_pos = np.einsum("nij,nj->ni", ri_t, traj.positions[ends] - traj.positions[starts])
    return d_rot, d_pos


def subsequence_errors(gt: Trajectory, pred: Trajectory, cfg: EvalConfig | None = None) -> SubsequenceErrors:
    """Endpoint error pose [R'|t'] = inv(pred motion) @ gt motion for every subsequence."""
    cfg = cfg or EvalConfig()
    _check_pair(gt, pred)

    starts: list[int] = []
    ends: list[int] = []
    lengths: list[float] = []
    for start in range(0, len(gt), cfg.start_stride):
        for length in cfg.lengths:
            end = subsequence_end(gt, start, length)
            if end is None:
                continue
            starts.append(start)
            ends.append(end)
            lengths.append(length)

    s = np.asarray(starts, dtype=int)
    e = np.asarray(ends, dtype=int)
    if s.size == 0:
        empty = np.zeros(0)
        return SubsequenceErrors(s, e, empty, empty, empty)

    rot_gt, pos_gt = _endpoint_motion(gt, s, e)
    rot_pred, pos_pred = _endpoint_motion(pred, s, e)
    rot_pred_t = np.transpose(rot_pred, (0, 2, 1))
    err_rot = rot_pred_t @ rot_gt
    err_pos = np.einsum("nij,nj->ni", rot_pred_t, pos_gt - pos_pred)

    return SubsequenceErrors(
        starts=s,
        ends=e,
        lengths=np.asarray(lengths, dtype=float),
        translation=np.linalg.norm(err_pos, axis=1),
        rotation=rotation_angle(err_rot),
    )


def t_rel_error(gt: Trajectory, pred: Trajectory, cfg: EvalConfig | None = None) -> float | None:
    """Mean translational drift in percent; None when no subsequence fits."""
    return _mean(subsequence_errors(gt, pred, cfg).t_rel())


def r_rel_error(gt: Trajectory, pred: Trajectory, cfg: EvalConfig | None = None) -> float | None:
    """Mean rotational drift in degrees per 100 m; None when no subsequence fits."""
    return _mean(subsequence_errors(gt, pred, cfg).r_rel())


def scale_error(t_gt, t_pred, epsilon: float = DEFAULT_EPSILON) -> float:
    """Two-frame scale error in [0, 1]; symmetric in its arguments."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive: {epsilon}")
    norm_gt = float(np.linalg.norm(np.asarray(t_gt, dtype=float)))
    norm_pred = float(np.linalg.norm(np.asarray(t_pred, dtype=float)))
    if not (math.isfinite(norm_gt) and math.isfinite(norm_pred)):
        raise ValueError("translations must be finite")
    if norm_gt < epsilon and norm_pred < epsilon:
        return 0.0
    return 1.0 - min(norm_pred / max(norm_gt, epsilon), norm_gt / max(norm_pred, epsilon))


def _check_rels(gt_rels: Sequence[RelativePose], pred_rels: Sequence[RelativePose]) -> None:
    if len(gt_rels) != len(pred_rels):
        raise ValueError(
            f"relative pose count mismatch: ground truth has {len(gt_rels)}, prediction has {len(pred_rels)}"
        )
    if not gt_rels:
        raise ValueError("at least one relative pose is required")


def per_frame_scale_errors(
    gt_rels: Sequence[RelativePose],
    pred_rels: Sequence[RelativePose],
    epsilon: float = DEFAULT_EPSILON,
) -> list[float]:
    """scale_error() of every frame pair, in order."""
    _check_rels(gt_rels, pred_rels)
    return [scale_error(g.translation, p.translation, epsilon) for g, p in zip(gt_rels, pred_rels)]


def sequence_scale_error(
    gt_rels: Sequence[RelativePose],
    pred_rels: Sequence[RelativePose],
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Arithmetic mean of the per-frame scale errors."""
    return _mean(per_frame_scale_errors(gt_rels, pred_rels, epsilon))


def _breakdown(errors: SubsequenceErrors, lengths: Sequence[float]) -> tuple[LengthBreakdown, ...]:
    t_rel = errors.t_rel()
    r_rel = errors.r_rel()
    out = []
    for length in lengths:
        mask = errors.lengths == length
        out.append(LengthBreakdown(
            length=length,
            t_rel=_mean(t_rel[mask]),
            r_rel=_mean(r_rel[mask]),
            count=int(mask.sum()),
        ))
    return tuple(out)


def evaluate_sequence(
    gt_rels: Sequence[RelativePose],
    pred_rels: Sequence[RelativePose],
    cfg: EvalConfig | None = None,
) -> EvalReport:
    """Compose both sequences and compute t_rel, r_rel, se with per-length breakdowns."""
    cfg = cfg or EvalConfig()
    _check_rels(gt_rels, pred_rels)

    gt = compose_trajectory(gt_rels)
    pred = compose_trajectory(pred_rels)
    errors = subsequence_errors(gt, pred, cfg)
    series = per_frame_scale_errors(gt_rels, pred_rels, cfg.epsilon)

    debug(f"Scored {len(errors)} subsequences over {len(gt)} frames ({gt.length:.1f} m)")

    return EvalReport(
        t_rel=_mean(errors.t_rel()),
        r_rel=_mean(errors.r_rel()),
        se=_mean(series),
        per_length=_breakdown(errors, cfg.lengths),
        subsequence_count=len(errors),
        frame_count=len(gt),
        config=cfg,
        scale_errors=tuple(series),
    )


def aggregate_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Scene average: unweighted mean of each metric over sequences.

    Sequences without any scored subsequence do not contribute to t_rel and
    r_rel; if none has one, the aggregate reports them as None.
    """
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")
    cfg = reports[0].config
    for report in reports[1:]:
        if report.config != cfg:
            raise ValueError(f"config mismatch: {report.config} != {cfg}")

    per_length = []
    for i, length in enumerate(cfg.lengths):
        parts = [r.per_length[i] for r in reports]
        per_length.append(LengthBreakdown(
            length=length,
            t_rel=_mean(p.t_rel for p in parts if p.t_rel is not None),
            r_rel=_mean(p.r_rel for p in parts if p.r_rel is not None),
            count=sum(p.count for p in parts),
        ))

    return EvalReport(
        t_rel=_mean(r.t_rel for r in reports if r.t_rel is not None),
        r_rel=_mean(r.r_rel for r in reports if r.r_rel is not None),
        se=_mean(r.se for r in reports),
        per_length=tuple(per_length),
        subsequence_count=sum(r.subsequence_count for r in reports),
        frame_count=sum(r.frame_count for r in reports),
        config=cfg,
    )
