"""Synthetic ground-truth and prediction sequences for end-to-end checks.

Shapes (camera moves along its own +z axis):
    straight          constant forward steps
    circle            constant yaw rate closing one loop over the sequence
    zigzag_supp_fig1  yaw pattern +90, -90, +90, -90, 0 degrees (repeated)
    random_walk       seeded yaw increments and step lengths

"zigzag" is accepted as an alias of zigzag_supp_fig1.

Predictions copy the ground truth, scale every translation by
(1 + scale_noise) and right-multiply a random rotation of angle
~rotation_jitter onto each relative rotation. Psi is concentration * R_pred,
so larger concentrations give lower entropies.

For the zigzag, schedule="prediction1" / "prediction2" replace the noise
model with two fixed five-step predictions that end at the same endpoint
as the ground truth while getting per-frame scales wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation as ScipyRotation

from odoscale.core.curation import SampleRecord
from odoscale.core.fisher import FisherParams
from odoscale.core.pose import RelativePose, Rotation, Trajectory, compose_trajectory, rotation_from_euler

ZIGZAG_SHAPE = "zigzag_supp_fig1"
SHAPES = ("straight", "circle", ZIGZAG_SHAPE, "random_walk")
SHAPE_ALIASES = {"zigzag": ZIGZAG_SHAPE}
SCHEDULES = ("none", "prediction1", "prediction2")

DEFAULT_FRAMES = 101
DEFAULT_STEP = 1.0
DEFAULT_CONCENTRATION = 10.0

ZIGZAG_YAWS_DEG = (90.0, -90.0, 90.0, -90.0, 0.0)
ZIGZAG_FRAMES = len(ZIGZAG_YAWS_DEG) + 1
ZIGZAG_STEP = 20.0

# Per-step translation multipliers and yaws (degrees) of the fixed zigzag predictions
_ZIGZAG_SCHEDULES = {
    "prediction1": ((1.5, 1.5, 1.0, 0.5, 0.5), ZIGZAG_YAWS_DEG),
    "prediction2": ((0.5, 2.0, 0.5, 1.0, 1.0), (90.0, -90.0, 0.0, 0.0, 0.0)),
}


@dataclass(frozen=True)
class SynthSpec:
    shape: str = "straight"
    frame_count: int = DEFAULT_FRAMES
    step_meters: float = DEFAULT_STEP
    scale_noise: float = 0.0
    rotation_jitter: float = 0.0
    seed: int = 0
    concentration: float = DEFAULT_CONCENTRATION
    schedule: str = "none"

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", SHAPE_ALIASES.get(self.shape, self.shape))
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape '{self.shape}': expected one of {', '.join(SHAPES)}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule '{self.schedule}': expected one of {', '.join(SCHEDULES)}")
        if self.frame_count < 2:
            raise ValueError(f"frame_count must be >= 2: {self.frame_count}")
        if not (math.isfinite(self.step_meters) and self.step_meters > 0):
            raise ValueError(f"step_meters must be positive: {self.step_meters}")
        if not (math.isfinite(self.scale_noise) and self.scale_noise > -1):
            raise ValueError(f"scale_noise must be > -1: {self.scale_noise}")
        if not (math.isfinite(self.rotation_jitter) and self.rotation_jitter >= 0):
            raise ValueError(f"rotation_jitter must be non-negative: {self.rotation_jitter}")
        if not (math.isfinite(self.concentration) and self.concentration >= 0):
            raise ValueError(f"concentration must be non-negative: {self.concentration}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative: {self.seed}")
        if self.schedule != "none":
            if self.shape != ZIGZAG_SHAPE:
                raise ValueError(f"schedule '{self.schedule}' only applies to the zigzag shape")
            if self.frame_count != ZIGZAG_FRAMES:
                raise ValueError(f"schedule '{self.schedule}' needs frame_count {ZIGZAG_FRAMES}")

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "frame_count": self.frame_count,
            "step_meters": self.step_meters,
            "scale_noise": self.scale_noise,
            "rotation_jitter": self.rotation_jitter,
            "seed": self.seed,
            "concentration": self.concentration,
            "schedule": self.schedule,
        }


class Synthesis(NamedTuple):
    gt: Trajectory
    gt_rels: list[RelativePose]
    predictions: list[SampleRecord]


def _yaw(radians: float) -> Rotation:
    return rotation_from_euler((0.0, radians, 0.0))


def _forward(length: float) -> np.ndarray:
    return np.array([0.0, 0.0, length])


def ground_truth_relatives(spec: SynthSpec, rng: np.random.Generator | None = None) -> list[RelativePose]:
    steps = spec.frame_count - 1
    if spec.shape == "straight":
        return [RelativePose(Rotation.identity(), _forward(spec.step_meters)) for _ in range(steps)]
    if spec.shape == "circle":
        turn = _yaw(2.0 * math.pi / steps)
        return [RelativePose(turn, _forward(spec.step_meters)) for _ in range(steps)]
    if spec.shape == ZIGZAG_SHAPE:
        return [
            RelativePose(_yaw(math.radians(ZIGZAG_YAWS_DEG[i % len(ZIGZAG_YAWS_DEG)])), _forward(spec.step_meters))
            for i in range(steps)
        ]
    rng = rng or np.random.default_rng(spec.seed)
    yaws = rng.normal(0.0, 0.2, size=steps)
    lengths = spec.step_meters * rng.uniform(0.5, 1.5, size=steps)
    return [RelativePose(_yaw(yaw), _forward(length)) for yaw, length in zip(yaws, lengths)]


def _jitter(rng: np.random.Generator, magnitude: float) -> Rotation:
    if magnitude == 0.0:
        return Rotation.identity()
    return Rotation(ScipyRotation.from_rotvec(rng.normal(0.0, magnitude, size=3)).as_matrix())


def predicted_relatives(
    spec: SynthSpec,
    gt_rels: list[RelativePose],
    rng: np.random.Generator | None = None,
) -> list[RelativePose]:
    if spec.schedule != "none":
        multipliers, yaws = _ZIGZAG_SCHEDULES[spec.schedule]
        return [
            RelativePose(_yaw(math.radians(yaw)), gt.translation * factor)
            for gt, factor, yaw in zip(gt_rels, multipliers, yaws)
        ]
    rng = rng or np.random.default_rng(spec.seed)
    factor = 1.0 + spec.scale_noise
    return [
        RelativePose(gt.rotation @ _jitter(rng, spec.rotation_jitter), gt.translation * factor)
        for gt in gt_rels
    ]


def synthesize(spec: SynthSpec) -> Synthesis:
    """Ground truth plus prediction records with Psi = concentration * R_pred."""
    rng = np.random.default_rng(spec.seed)
    gt_rels = ground_truth_relatives(spec, rng)
    pred_rels = predicted_relatives(spec, gt_rels, rng)
    records = [
        SampleRecord(f"{i:06d}", pose, FisherParams(spec.concentration * pose.rotation.m))
        for i, pose in enumerate(pred_rels, start=1)
    ]
    return Synthesis(compose_trajectory(gt_rels), gt_rels, records)
