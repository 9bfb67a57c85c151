"""Loss kernels of the cross-modal self-training objective.

    L     = L_vo + lambda_u * L_unc + L_aux
    L_vo  = ||t - t_hat||^2 + lambda_theta * ||theta - theta_hat||^2
    L_unc = -log p(R | Psi_hat)
    L_aux = lambda_a L_audio + lambda_s L_seg + lambda_f L_flow + lambda_d L_depth

Losses are sums over all elements, as written; pass normalize=True to the
grid and audio losses for means instead. Reductions run in a fixed order.
Nothing here trains anything: these are values and closed-form gradients
for checking external training code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import rfft
from scipy.signal import get_window

from odoscale.core import fisher
from odoscale.core.fisher import FisherParams, MonteCarloConfig
from odoscale.core.pose import EulerAngles, RelativePose, Rotation, euler_from_rotation

DEFAULT_LAMBDA_THETA = 1.0
DEFAULT_LAMBDA_U = 0.1
DEFAULT_LAMBDA_AUX = 0.01

DEFAULT_WINDOW = 1024
DEFAULT_HOP = 256
DEFAULT_WINDOW_TYPE = "hann"

SPECTRAL_MODES = ("magnitude", "complex")


class NonFiniteError(FloatingPointError):
    """A function evaluation returned NaN or infinity."""

    def __init__(self, message: str, coordinate: int):
        super().__init__(message)
        self.coordinate = coordinate


@dataclass(frozen=True)
class LossWeights:
    """Weights of the combined objective; all non-negative."""

    lambda_theta: float = DEFAULT_LAMBDA_THETA
    lambda_u: float = DEFAULT_LAMBDA_U
    lambda_a: float = DEFAULT_LAMBDA_AUX
    lambda_s: float = DEFAULT_LAMBDA_AUX
    lambda_f: float = DEFAULT_LAMBDA_AUX
    lambda_d: float = DEFAULT_LAMBDA_AUX

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be non-negative and finite: {value}")


class FieldRole(str, Enum):
    SEGMENTATION = "segmentation"
    DEPTH = "depth"
    FLOW = "flow"


@dataclass(frozen=True, eq=False)
class Field:
    """Dense W x H x C target or prediction; segmentation has C = 2 in [0, 1]."""

    data: np.ndarray
    role: FieldRole

    def __post_init__(self) -> None:
        role = FieldRole(self.role)
        data = np.array(self.data, dtype=float)
        if data.ndim != 3:
            raise ValueError(f"field data must be W x H x C, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field data must be finite")
        if role is FieldRole.SEGMENTATION:
            if data.shape[2] != 2:
                raise ValueError(f"segmentation fields need 2 channels, got {data.shape[2]}")
            if np.any(data < 0) or np.any(data > 1):
                raise ValueError("segmentation values must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "role", role)


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Dual-channel signal, shape (2, L)."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[0] != 2 or samples.shape[1] < 1:
            raise ValueError(f"audio must have shape (2, L) with L >= 1, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive: {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided STFT coefficients, shape (channels, frames, window // 2 + 1)."""

    coefficients: np.ndarray
    window: int
    hop: int
    window_type: str = DEFAULT_WINDOW_TYPE

    @property
    def frame_count(self) -> int:
        return self.coefficients.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.coefficients)

    def frame_energy(self) -> np.ndarray:
        """Per-frame energy by Parseval, shape (channels, frames).

        Interior bins stand for a conjugate pair and count twice; DC and,
        for even windows, the Nyquist bin count once.
        """
        power = np.abs(self.coefficients) ** 2
        weights = np.full(power.shape[-1], 2.0)
        weights[0] = 1.0
        if self.window % 2 == 0:
            weights[-1] = 1.0
        return power @ weights / self.window


@dataclass(frozen=True)
class AuxTerms:
    """Per-task auxiliary losses; None means the task is not trained."""

    audio: float | None = None
    seg: float | None = None
    flow: float | None = None
    depth: float | None = None


@dataclass(frozen=True)
class GradCheckReport:
    """Central differences, optional analytic gradient and their worst deviation.

    Deviation per coordinate is |numeric - analytic| / max(1, |analytic|).
    """

    numeric: np.ndarray
    analytic: np.ndarray | None
    max_deviation: float | None
    worst_coordinate: int | None
    passed: bool


def loss_vo(
    gt: RelativePose,
    t_pred,
    theta_pred: EulerAngles | Sequence[float],
    lambda_theta: float = DEFAULT_LAMBDA_THETA,
) -> float:
    """Squared translation error plus weighted squared Euler-angle error.

    Ground-truth angles come from euler_from_rotation(); differences are
    taken component-wise without wrapping.
    """
    t_pred = np.asarray(t_pred, dtype=float)
    if t_pred.shape != (3,) or not np.all(np.isfinite(t_pred)):
        raise ValueError("predicted translation must be a finite 3-vector")
    if not isinstance(theta_pred, EulerAngles):
        theta_pred = EulerAngles(theta_pred)
    theta_gt = euler_from_rotation(gt.rotation).theta
    return float(np.sum((gt.translation - t_pred) ** 2)) + lambda_theta * float(
        np.sum((theta_gt - theta_pred.theta) ** 2)
    )


def loss_unc(r_gt: Rotation, p: FisherParams) -> float:
    """Fisher negative log likelihood of the ground-truth rotation."""
    return fisher.nll(r_gt, p)


def nll_gradient(
    r: Rotation,
    p: FisherParams,
    method: str = "quadrature",
    mc: MonteCarloConfig | None = None,
) -> np.ndarray:
    """d nll / d Psi = E_p[R] - R."""
    matrix = r.m if isinstance(r, Rotation) else np.asarray(r, dtype=float)
    return fisher.expected_rotation(p, method=method, mc=mc) - matrix


def _check_fields(target: Field, pred: Field) -> None:
    if target.role is not pred.role:
        raise ValueError(f"field role mismatch: {target.role.value} vs {pred.role.value}")
    if target.data.shape != pred.data.shape:
        raise ValueError(f"field shape mismatch: {target.data.shape} vs {pred.data.shape}")


def loss_dice(target: Field, pred: Field) -> float:
    """1 - 2 sum(S o S_hat) / (sum S^2 + sum S_hat^2); 0 when both masks are empty."""
    _check_fields(target, pred)
    if target.role is not FieldRole.SEGMENTATION:
        raise ValueError("Dice loss needs segmentation fields")
    overlap = float(np.sum(target.data * pred.data))
    mass = float(np.sum(target.data ** 2)) + float(np.sum(pred.data ** 2))
    if mass == 0.0:
        return 0.0
    return 1.0 - 2.0 * overlap / mass


def dice_gradient(target: Field, pred: Field) -> np.ndarray:
    """Gradient of loss_dice() with respect to pred.data."""
    _check_fields(target, pred)
    overlap = float(np.sum(target.data * pred.data))
    mass = float(np.sum(target.data ** 2)) + float(np.sum(pred.data ** 2))
    if mass == 0.0:
        return np.zeros_like(pred.data)
    return (4.0 * overlap * pred.data - 2.0 * mass * target.data) / mass ** 2


def loss_field_mse(target: Field, pred: Field, normalize: bool = False) -> float:
    """Squared error summed over the grid (flow and depth)."""
    _check_fields(target, pred)
    diff = target.data - pred.data
    total = float(np.sum(diff * diff))
    return total / diff.size if normalize else total


def stft(
    a: AudioClip,
    window: int = DEFAULT_WINDOW,
    hop: int = DEFAULT_HOP,
    window_type: str = DEFAULT_WINDOW_TYPE,
) -> Spectrogram:
    """Windowed one-sided DFT frames per channel, no padding.

    Frame count is (L - window) // hop + 1.
    """
    length = a.samples.shape[1]
    if not 1 <= hop <= window:
        raise ValueError(f"need 1 <= hop <= window, got hop={hop}, window={window}")
    if length < window:
        raise ValueError(f"signal of {length} samples is shorter than the window ({window})")
    taper = get_window(window_type, window)
    frames = sliding_window_view(a.samples, window, axis=-1)[:, ::hop, :]
    return Spectrogram(rfft(frames * taper, axis=-1), window, hop, window_type)


def loss_audio(
    target: AudioClip,
    pred: AudioClip,
    window: int = DEFAULT_WINDOW,
    hop: int = DEFAULT_HOP,
    spectral: str = "magnitude",
    normalize: bool = False,
) -> float:
    """Waveform squared error plus STFT squared error.

    spectral="magnitude" compares |STFT| (the default; a complex comparison
    largely repeats the waveform term), "complex" compares coefficients.
    """
    if spectral not in SPECTRAL_MODES:
        raise ValueError(f"unknown spectral mode '{spectral}': expected one of {', '.join(SPECTRAL_MODES)}")
    if target.samples.shape != pred.samples.shape:
        raise ValueError(f"audio shape mismatch: {target.samples.shape} vs {pred.samples.shape}")
    if target.sample_rate != pred.sample_rate:
        raise ValueError(f"sample rate mismatch: {target.sample_rate} vs {pred.sample_rate}")

    diff = target.samples - pred.samples
    time_term = float(np.sum(diff * diff))

    spec_target = stft(target, window, hop)
    spec_pred = stft(pred, window, hop)
    if spectral == "magnitude":
        spec_diff = spec_target.magnitude() - spec_pred.magnitude()
        spec_term = float(np.sum(spec_diff * spec_diff))
    else:
        spec_term = float(np.sum(np.abs(spec_target.coefficients - spec_pred.coefficients) ** 2))

    if normalize:
        return time_term / diff.size + spec_term / spec_target.coefficients.size
    return time_term + spec_term


def loss_aux(terms: AuxTerms | Mapping[str, float | None], w: LossWeights | None = None) -> float:
    """Weighted sum of the auxiliary task losses; absent tasks contribute 0."""
    w = w or LossWeights()
    if not isinstance(terms, AuxTerms):
        terms = AuxTerms(**terms)
    total = 0.0
    for weight, value in (
        (w.lambda_a, terms.audio),
        (w.lambda_s, terms.seg),
        (w.lambda_f, terms.flow),
        (w.lambda_d, terms.depth),
    ):
        if value is None:
            continue
        if not math.isfinite(value):
            raise ValueError(f"auxiliary loss terms must be finite: {terms}")
        total += weight * value
    return total


def loss_xvo(vo: float, unc: float, aux: float, w: LossWeights | None = None) -> float:
    """Total objective L_vo + lambda_u * L_unc + L_aux."""
    w = w or LossWeights()
    if not all(math.isfinite(x) for x in (vo, unc, aux)):
        raise ValueError(f"loss components must be finite: vo={vo}, unc={unc}, aux={aux}")
    return vo + w.lambda_u * unc + aux


loss_total = loss_xvo


def grad_check(
    f: Callable[[np.ndarray], float],
    x0,
    step: float = 1e-6,
    tol: float = 1e-6,
    analytic: np.ndarray | Callable[[np.ndarray], np.ndarray] | None = None,
) -> GradCheckReport:
    """Central finite differences of f at x0, compared to an analytic gradient if given."""
    x0 = np.array(x0, dtype=float).ravel()
    if not step > 0:
        raise ValueError(f"step must be positive: {step}")

    numeric = np.empty_like(x0)
    for i in range(x0.size):
        forward = x0.copy()
        backward = x0.copy()
        forward[i] += step
        backward[i] -= step
        f_plus, f_minus = float(f(forward)), float(f(backward))
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NonFiniteError(f"non-finite evaluation at coordinate {i}", coordinate=i)
        numeric[i] = (f_plus - f_minus) / (2.0 * step)

    if analytic is None:
        return GradCheckReport(numeric, None, None, None, True)

    expected = analytic(x0) if callable(analytic) else analytic
    expected = np.asarray(expected, dtype=float).ravel()
    if expected.shape != numeric.shape:
        raise ValueError(f"analytic gradient has shape {expected.shape}, expected {numeric.shape}")
    deviation = np.abs(numeric - expected) / np.maximum(1.0, np.abs(expected))
    worst = int(np.argmax(deviation))
    return GradCheckReport(
        numeric=numeric,
        analytic=expected,
        max_deviation=float(deviation[worst]),
        worst_coordinate=worst,
        passed=bool(deviation[worst] <= tol),
    )
