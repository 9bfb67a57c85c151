"""Matrix Fisher distribution on SO(3).

    p(R | Psi) = exp(tr(Psi^T R)) / c(Psi)

Measure convention: densities are taken with respect to the Haar measure
normalized to total mass 1. The uniform distribution (Psi = 0) then has
density 1, log c = 0 and entropy 0, and concentrated distributions have
negative entropy. Under the volume-8*pi^2 convention every entropy would
be larger by log(8*pi^2) ~= 4.37; thresholds must be stated in the same
convention as the entropies they are compared with (HAAR_CONVENTION is
written into every manifest).

c(Psi) depends only on the proper singular values s of Psi and is
evaluated from the one-dimensional Bessel integral

    c(s) = int_{-1}^{1} 1/2 I0((s1-s2)(1-u)/2) I0((s1+s2)(1+u)/2) exp(s3 u) du

with Gauss-Legendre quadrature on exponentially scaled Bessel functions,
after substituting u = cos(theta). Concentrated Psi put boundary layers of
width ~1/sqrt(s) at u = +-1; in theta they are smooth and Legendre nodes
cluster there.
Expectations E[R] come either from self-normalized Monte Carlo over
Haar-uniform samples (default) or from the analytic derivative of the
same integral (method="quadrature"); E[R] = grad log c(Psi). There is no
sampler for the Fisher distribution itself.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial.transform import Rotation as ScipyRotation
from scipy.special import i0e, i1e, roots_legendre

from odoscale import debug
from odoscale.core.pose import Rotation

HAAR_CONVENTION = "haar-unit-mass"

# Largest |s| handled at the base quadrature order
CONCENTRATION_BOUND = 50.0
BASE_ORDER = 64
MAX_ORDER = 8192
# Relative change between successive orders
QUADRATURE_TOL = 1e-10
# A change this small that stops shrinking is roundoff in the nodes
ROUNDOFF_TOL = 1e-8

DEFAULT_MC_SAMPLES = 1_000_000
DEFAULT_SEED = 0
DEFAULT_CHUNK_SIZE = 65_536

DEGENERATE_TOL = 1e-12

METHODS = ("mc", "quadrature")


class QuadratureError(ArithmeticError):
    """Quadrature did not converge at the highest allowed order."""

    def __init__(self, message: str, bound: float, order: int):
        super().__init__(message)
        self.bound = bound
        self.order = order


@dataclass(frozen=True, eq=False)
class FisherParams:
    """Unconstrained 3x3 parameter matrix Psi."""

    psi: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.psi, dtype=float)
        if arr.shape != (3, 3):
            raise ValueError(f"Psi must have shape (3, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Psi must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "psi", arr)

    @classmethod
    def zeros(cls) -> FisherParams:
        return cls(np.zeros((3, 3)))


@dataclass(frozen=True, eq=False)
class ProperSVD:
    """Psi = u @ diag(s) @ v^T with u, v in SO(3); s1 >= s2 >= |s3|."""

    u: Rotation
    s: np.ndarray
    v: Rotation

    def reconstruct(self) -> np.ndarray:
        return self.u.m @ np.diag(self.s) @ self.v.m.T


@dataclass(frozen=True)
class FisherMode:
    """Maximizer of tr(Psi^T R); degenerate when s2 + s3 == 0 (mode not unique)."""

    rotation: Rotation
    degenerate: bool


@dataclass(frozen=True)
class MonteCarloConfig:
    """Seeded self-normalized Monte Carlo settings.

    Samples are drawn in chunks of chunk_size, each from its own seed
    spawned off `seed`, and reduced in chunk order, so the estimate does not
    depend on `workers`.
    """

    samples: int = DEFAULT_MC_SAMPLES
    seed: int = DEFAULT_SEED
    chunk_size: int = DEFAULT_CHUNK_SIZE
    workers: int = 1

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1: {self.samples}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1: {self.chunk_size}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1: {self.workers}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative: {self.seed}")

    def to_dict(self) -> dict:
        return {"samples": self.samples, "seed": self.seed, "chunk_size": self.chunk_size}


def _as_params(p) -> FisherParams:
    return p if isinstance(p, FisherParams) else FisherParams(p)


def _as_matrix(r) -> np.ndarray:
    return r.m if isinstance(r, Rotation) else np.asarray(r, dtype=float)


def proper_svd(p: FisherParams) -> ProperSVD:
    """SVD with determinant signs folded into s3 so that u, v are proper rotations."""
    p = _as_params(p)
    u, s, vt = np.linalg.svd(p.psi)
    v = vt.T.copy()
    s = s.copy()
    sign_u = 1.0 if np.linalg.det(u) > 0 else -1.0
    sign_v = 1.0 if np.linalg.det(v) > 0 else -1.0
    u[:, 2] *= sign_u
    v[:, 2] *= sign_v
    s[2] *= sign_u * sign_v
    return ProperSVD(Rotation(u), s, Rotation(v))


@lru_cache(maxsize=16)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes u = cos(theta) for Legendre theta on [0, pi]; weights carry sin(theta)."""
    x, w = roots_legendre(order)
    theta = 0.5 * np.pi * (x + 1.0)
    return np.cos(theta), 0.5 * np.pi * w * np.sin(theta)


def _kernels(s: np.ndarray, nodes: np.ndarray, with_gradient: bool) -> np.ndarray:
    """Scaled integrand of c(s) and, optionally, of its partial derivatives.

    Every row carries the factor exp(-(s1 + s2 + s3)), the maximum of the
    exponent over [-1, 1].
    """
    s1, s2, s3 = s
    a = 0.5 * (s1 - s2) * (1.0 - nodes)
    b = 0.5 * (s1 + s2) * (1.0 + nodes)
    w = np.exp((s2 + s3) * (nodes - 1.0))
    i0a, i0b = i0e(a), i0e(b)
    base = 0.5 * i0a * i0b * w
    if not with_gradient:
        return base[np.newaxis, :]
    i1a, i1b = i1e(a), i1e(b)
    left = 0.25 * (1.0 - nodes) * i1a * i0b * w
    right = 0.25 * (1.0 + nodes) * i0a * i1b * w
    return np.stack([base, left + right, right - left, nodes * base])


def _integrate(s: np.ndarray, with_gradient: bool = False) -> np.ndarray:
    """Gauss-Legendre integrals of _kernels(), doubling the order until stable.

    Converged when the relative change drops to QUADRATURE_TOL, or when it
    is below ROUNDOFF_TOL and no longer shrinking.
    """
    peak = float(np.max(np.abs(s)))
    order = BASE_ORDER if peak <= CONCENTRATION_BOUND else 4 * BASE_ORDER
    previous = None
    last_change = math.inf
    while order <= MAX_ORDER:
        nodes, weights = _gauss_legendre(order)
        values = _kernels(s, nodes, with_gradient) @ weights
        if previous is not None:
            change = float(np.max(np.abs(values - previous))) / values[0]
            if change <= QUADRATURE_TOL or (change <= ROUNDOFF_TOL and change >= last_change):
                debug(f"quadrature s={s.tolist()} order={order} change={change:.2e}")
                return values
            last_change = change
        previous = values
        order *= 2
    raise QuadratureError(
        f"normalizer quadrature did not converge at order {MAX_ORDER} for singular values "
        f"{s.tolist()} (base order covers |s| <= {CONCENTRATION_BOUND})",
        bound=CONCENTRATION_BOUND,
        order=MAX_ORDER,
    )


def _log_c_of(s: np.ndarray) -> float:
    if not np.any(s):
        return 0.0
    return float(np.sum(s)) + math.log(_integrate(s)[0])


def _grad_log_c_of(s: np.ndarray) -> np.ndarray:
    """d log c / d s, i.e. the diagonal of E[R] in the canonical frame."""
    if not np.any(s):
        return np.zeros(3)
    values = _integrate(s, with_gradient=True)
    return values[1:] / values[0]


def log_c(p: FisherParams) -> float:
    """log of the normalizer under the unit-mass Haar measure."""
    return _log_c_of(proper_svd(p).s)


def _trace_product(psi: np.ndarray, r: np.ndarray) -> float:
    return float(np.sum(psi * r))


def nll(r: Rotation, p: FisherParams) -> float:
    """Negative log likelihood: log c(Psi) - tr(Psi^T R)."""
    p = _as_params(p)
    return log_c(p) - _trace_product(p.psi, _as_matrix(r))


def log_density(r: Rotation, p: FisherParams) -> float:
    """tr(Psi^T R) - log c(Psi); finite wherever log c is."""
    return -nll(r, p)


def density(r: Rotation, p: FisherParams) -> float:
    """exp(tr(Psi^T R) - log c(Psi)) with respect to unit-mass Haar measure.

    Positive in exact arithmetic, but underflows to 0.0 once log_density
    drops below about -745 (e.g. s = 200 and a rotation pi away from the
    mode). Use log_density when the log is what is needed.
    """
    return math.exp(log_density(r, p))


def mode(p: FisherParams) -> FisherMode:
    """u @ v^T from the proper SVD."""
    svd = proper_svd(p)
    s1, s2, s3 = svd.s
    return FisherMode(
        rotation=Rotation(svd.u.m @ svd.v.m.T),
        degenerate=bool(s2 + s3 <= DEGENERATE_TOL * max(1.0, s1)),
    )


def sample_uniform_rotations(rng: np.random.Generator, count: int) -> np.ndarray:
    """count Haar-uniform rotation matrices, shape (count, 3, 3).

    Four standard normal deviates normalized to a unit quaternion give a
    uniform point on S^3, which maps to a Haar-uniform rotation.
    """
    q = rng.standard_normal((count, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return ScipyRotation.from_quat(q).as_matrix().reshape(count, 3, 3)


def sample_uniform_rotation(rng: np.random.Generator) -> Rotation:
    """One Haar-uniform rotation."""
    return Rotation(sample_uniform_rotations(rng, 1)[0])


def _mc_chunk(s: np.ndarray, seed: np.random.SeedSequence, count: int) -> tuple[np.ndarray, float]:
    rotations = sample_uniform_rotations(np.random.default_rng(seed), count)
    diagonals = np.stack([rotations[:, 0, 0], rotations[:, 1, 1], rotations[:, 2, 2]], axis=1)
    # tr(diag(s) R) <= s1 + s2 + s3 for proper s, so weights stay in (0, 1]
    weights = np.exp(diagonals @ s - float(np.sum(s)))
    return np.einsum("n,nij->ij", weights, rotations), float(np.sum(weights))


def _mc_canonical_expectation(s: np.ndarray, mc: MonteCarloConfig) -> np.ndarray:
    """Self-normalized estimate of E[R] under diag(s), reduced in chunk order."""
    full, rest = divmod(mc.samples, mc.chunk_size)
    sizes = [mc.chunk_size] * full + ([rest] if rest else [])
    seeds = np.random.SeedSequence(mc.seed).spawn(len(sizes))

    if mc.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=mc.workers) as pool:
            parts = list(pool.map(lambda job: _mc_chunk(s, *job), zip(seeds, sizes)))
    else:
        parts = [_mc_chunk(s, seed, size) for seed, size in zip(seeds, sizes)]

    weighted = np.zeros((3, 3))
    total = 0.0
    for part_weighted, part_total in parts:
        weighted += part_weighted
        total += part_total
    if total <= 0.0 or not math.isfinite(total):
        raise FloatingPointError(
            f"Monte Carlo weights underflowed for singular values {s.tolist()}; "
            "use method='quadrature'"
        )
    return weighted / total


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise ValueError(f"unknown method '{method}': expected one of {', '.join(METHODS)}")


def expected_rotation(
    p: FisherParams,
    method: str = "mc",
    mc: MonteCarloConfig | None = None,
) -> np.ndarray:
    """E_p[R] (= grad log c); generally not a rotation, it shrinks with dispersion."""
    _check_method(method)
    svd = proper_svd(p)
    if not np.any(svd.s):
        return np.zeros((3, 3))
    if method == "quadrature":
        canonical = np.diag(_grad_log_c_of(svd.s))
    else:
        canonical = _mc_canonical_expectation(svd.s, mc or MonteCarloConfig())
    return svd.u.m @ canonical @ svd.v.m.T


def log_c_gradient(p: FisherParams) -> np.ndarray:
    """Exact gradient of log c with respect to Psi."""
    return expected_rotation(p, method="quadrature")


def entropy(
    p: FisherParams,
    method: str = "mc",
    mc: MonteCarloConfig | None = None,
) -> float:
    """Differential entropy log c(Psi) - tr(Psi^T E[R]) under unit-mass Haar measure.

    0 for Psi = 0 and negative for concentrated distributions. Computed in
    the canonical frame, so it depends only on the proper singular values.
    """
    _check_method(method)
    s = proper_svd(p).s
    if not np.any(s):
        return 0.0
    if method == "quadrature":
        diagonal = _grad_log_c_of(s)
    else:
        diagonal = np.diag(_mc_canonical_expectation(s, mc or MonteCarloConfig()))
    value = _log_c_of(s) - float(s @ diagonal)
    debug(f"entropy({method}) s={s.tolist()} -> {value:.6f}")
    return value
