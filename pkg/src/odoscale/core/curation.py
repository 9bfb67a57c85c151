"""Pseudo-label curation: entropy scoring, threshold filtering, dataset mixing
and the per-frame ground-truth scale alignment baseline.

A pseudo-labeled sample is kept when the entropy of its predicted rotation
distribution is strictly below tau_u. Entropies use the unit-mass Haar
convention of odoscale.core.fisher; the convention tag travels with every
manifest so a threshold is never compared against entropies computed
under another measure.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from odoscale import debug
from odoscale.core import fisher
from odoscale.core.fisher import HAAR_CONVENTION, FisherParams, MonteCarloConfig, QuadratureError
from odoscale.core.metrics import DEFAULT_EPSILON
from odoscale.core.pose import RelativePose

DEFAULT_TAU_U = -5.668

LABELED = "labeled"
PSEUDO = "pseudo"
MIXED = "mixed"
SOURCES = (LABELED, PSEUDO)


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """One training sample: relative pose plus, for pseudo labels, its Psi.

    entropy stays None until score_entropy() fills it in; selected stays
    None until filter_by_entropy() decides.
    """

    id: str
    pose: RelativePose
    psi: FisherParams | None = None
    entropy: float | None = None
    selected: bool | None = None
    source: str = PSEUDO

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id cannot be empty")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source '{self.source}': expected one of {', '.join(SOURCES)}")


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    """Ordered records of one source (or a mix) with provenance metadata."""

    source: str
    records: tuple[SampleRecord, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.source not in (*SOURCES, MIXED):
            raise ValueError(f"unknown manifest source '{self.source}'")
        records = tuple(self.records)
        seen: set[str] = set()
        for record in records:
            if record.id in seen:
                raise ValueError(f"duplicate record id '{record.id}' in {self.source} manifest")
            seen.add(record.id)
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]


@dataclass(frozen=True)
class FilterConfig:
    """Entropy threshold and the measure convention it is stated in."""

    tau_u: float = DEFAULT_TAU_U
    convention: str = HAAR_CONVENTION

    def __post_init__(self) -> None:
        if math.isnan(self.tau_u):
            raise ValueError("tau_u cannot be NaN")
        if self.convention != HAAR_CONVENTION:
            raise ValueError(
                f"unsupported measure convention '{self.convention}': entropies are "
                f"computed under '{HAAR_CONVENTION}'"
            )

    def to_dict(self) -> dict:
        # JSON has no infinity literal
        tau = self.tau_u if math.isfinite(self.tau_u) else repr(self.tau_u)
        return {"tau_u": tau, "convention": self.convention}


@dataclass(frozen=True)
class EntropyConfig:
    """How entropies are computed; every record uses the same seed."""

    method: str = "mc"
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)

    def __post_init__(self) -> None:
        if self.method not in fisher.METHODS:
            raise ValueError(f"unknown method '{self.method}': expected one of {', '.join(fisher.METHODS)}")

    def to_dict(self) -> dict:
        out = {"method": self.method, "convention": HAAR_CONVENTION}
        if self.method == "mc":
            out.update(self.mc.to_dict())
        return out


class Alignment(NamedTuple):
    """Scale-aligned poses and the frames whose translation was substituted."""

    poses: list[RelativePose]
    substituted: tuple[int, ...]


def _score_one(record: SampleRecord, cfg: EntropyConfig) -> SampleRecord:
    if record.psi is None:
        raise ValueError(f"record '{record.id}' has no Psi to score")
    try:
        value = fisher.entropy(record.psi, method=cfg.method, mc=cfg.mc)
    except QuadratureError as e:
        raise QuadratureError(f"record '{record.id}': {e}", e.bound, e.order) from e
    except FloatingPointError as e:
        raise FloatingPointError(f"record '{record.id}': {e}") from e
    return replace(record, entropy=value)


def score_entropy(
    records: Sequence[SampleRecord],
    cfg: EntropyConfig | None = None,
    workers: int = 1,
) -> list[SampleRecord]:
    """Return copies of the records with entropy populated, in input order."""
    cfg = cfg or EntropyConfig()
    if workers < 1:
        raise ValueError(f"workers must be >= 1: {workers}")
    if workers > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(lambda r: _score_one(r, cfg), records))
    else:
        scored = [_score_one(r, cfg) for r in records]
    debug(f"Scored {len(scored)} records ({cfg.method})")
    return scored


def filter_by_entropy(
    records: Sequence[SampleRecord],
    cfg: FilterConfig | None = None,
    provenance: dict | None = None,
) -> tuple[DatasetManifest, DatasetManifest]:
    """Split records into (kept, rejected) by entropy < tau_u, preserving order."""
    cfg = cfg or FilterConfig()
    kept: list[SampleRecord] = []
    rejected: list[SampleRecord] = []
    for record in records:
        if record.entropy is None:
            raise ValueError(f"record '{record.id}' has no entropy; run score_entropy first")
        if record.entropy < cfg.tau_u:
            kept.append(replace(record, selected=True))
        else:
            rejected.append(replace(record, selected=False))

    debug(f"Filter tau={cfg.tau_u}: kept {len(kept)}/{len(records)}")

    meta = {**(provenance or {}), "filter": cfg.to_dict(), "input_count": len(records)}
    return (
        DatasetManifest(PSEUDO, tuple(kept), {**meta, "partition": "kept"}),
        DatasetManifest(PSEUDO, tuple(rejected), {**meta, "partition": "rejected"}),
    )


def _namespaced(record: SampleRecord, source: str) -> SampleRecord:
    prefix = f"{source}:"
    new_id = record.id if record.id.startswith(prefix) else prefix + record.id
    return replace(record, id=new_id, source=source)


def mix_datasets(labeled: DatasetManifest, pseudo: DatasetManifest) -> DatasetManifest:
    """Labeled block then pseudo block, ids prefixed with their source tag.

    No ratio balancing or reweighting takes place.
    """
    records = [_namespaced(r, LABELED) for r in labeled.records]
    records += [_namespaced(r, PSEUDO) for r in pseudo.records]

    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            raise ValueError(f"record id collision after namespacing: '{record.id}'")
        seen.add(record.id)

    provenance = {
        "counts": {LABELED: len(labeled), PSEUDO: len(pseudo), "total": len(records)},
        LABELED: labeled.provenance,
        PSEUDO: pseudo.provenance,
    }
    return DatasetManifest(MIXED, tuple(records), provenance)


def manifest_from_poses(
    rels: Sequence[RelativePose],
    source: str = LABELED,
    provenance: dict | None = None,
) -> DatasetManifest:
    """Pose-only manifest; record i (1-based, zero padded) is the motion from frame i-1 to i."""
    records = tuple(SampleRecord(f"{i:06d}", pose, source=source) for i, pose in enumerate(rels, start=1))
    return DatasetManifest(source, records, dict(provenance or {}))


def scale_alignment(
    gt_rels: Sequence[RelativePose],
    pred_rels: Sequence[RelativePose],
    epsilon: float = DEFAULT_EPSILON,
) -> Alignment:
    """Rescale each predicted translation to the ground-truth norm.

    Directions and rotations are kept. A predicted translation shorter
    than epsilon has no direction; it is replaced by the ground-truth
    translation and its index is reported in `substituted`.
    """
    if len(gt_rels) != len(pred_rels):
        raise ValueError(
            f"relative pose count mismatch: ground truth has {len(gt_rels)}, prediction has {len(pred_rels)}"
        )
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive: {epsilon}")

    poses: list[RelativePose] = []
    substituted: list[int] = []
    for i, (gt, pred) in enumerate(zip(gt_rels, pred_rels)):
        norm_gt = float(np.linalg.norm(gt.translation))
        norm_pred = float(np.linalg.norm(pred.translation))
        if norm_pred < epsilon:
            translation = gt.translation
            if norm_gt >= epsilon:
                substituted.append(i)
        else:
            translation = pred.translation * (norm_gt / norm_pred)
        poses.append(RelativePose(pred.rotation, translation))

    if substituted:
        debug(f"Scale alignment substituted ground truth at {len(substituted)} frames: {substituted}")
    return Alignment(poses, tuple(substituted))


def scale_align_per_frame(
    gt_rels: Sequence[RelativePose],
    pred_rels: Sequence[RelativePose],
    epsilon: float = DEFAULT_EPSILON,
) -> list[RelativePose]:
    """Per-frame ground-truth scale alignment; see scale_alignment()."""
    return scale_alignment(gt_rels, pred_rels, epsilon).poses
