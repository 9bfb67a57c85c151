"""Plain-text file formats: pose files, prediction files and manifests.

Pose file: one line per frame, 12 decimals, row-major 3x4 [R | t] of frame
i in the frame-0 coordinate system.

Prediction file: one line per frame pair,

    id r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3 p11 p12 ... p33

where [R | t] is the motion from frame i-1 to frame i and p is Psi,
row-major. Ids match ID_PATTERN and are unique within a file.

Manifest: JSON Lines. The first line is a header object
({"kind": "header", ...}); every following line is one record
({"kind": "record", ...}). Keys are sorted so equal manifests are equal
bytes.

Numbers are written with 17 significant digits, which reproduces every
double exactly on re-parse.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from odoscale import __version__, debug
from odoscale.core.curation import DatasetManifest, SampleRecord
from odoscale.core.fisher import HAAR_CONVENTION, FisherParams
from odoscale.core.pose import (
    RelativePose,
    RotationValidationError,
    Trajectory,
    compose_trajectory,
    validate_rotation,
)

POSE_FIELDS = 12
PSI_FIELDS = 9
PREDICTION_FIELDS = 1 + POSE_FIELDS + PSI_FIELDS

# Record ids: alphanumeric plus . _ - and ':' for source namespaces
ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+(:[A-Za-z0-9_.-]+)*$")

TOOL_NAME = "odoscale"


class ParseError(ValueError):
    """Malformed input, with the 1-based line and field it was found at."""

    def __init__(self, message: str, line: int | None = None, field: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.field = field
        self.path = path
        super().__init__(self._render())

    def _render(self) -> str:
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.field is not None:
            where.append(f"field {self.field}")
        return f"{', '.join(where)}: {self.message}" if where else self.message

    def with_path(self, path: str | Path) -> ParseError:
        return ParseError(self.message, self.line, self.field, str(path))


def format_number(x: float) -> str:
    """17 significant digits; negative zero is written as 0."""
    if x == 0:
        return "0"
    return format(float(x), ".17g")


def _numbered_lines(stream: TextIO | Iterable[str]):
    """(line number, tokens) for every non-blank line."""
    for number, line in enumerate(stream, start=1):
        tokens = line.split()
        if tokens:
            yield number, tokens


def _floats(tokens: list[str], line: int, first_field: int) -> np.ndarray:
    values = np.empty(len(tokens))
    for k, token in enumerate(tokens):
        try:
            value = float(token)
        except ValueError:
            raise ParseError(f"not a number: '{token}'", line, first_field + k) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value: '{token}'", line, first_field + k)
        values[k] = value
    return values


def _pose_from_values(values: np.ndarray, line: int) -> RelativePose:
    matrix = values.reshape(3, 4)
    try:
        rotation = validate_rotation(matrix[:, :3])
    except RotationValidationError as e:
        raise ParseError(str(e), line) from e
    return RelativePose(rotation, matrix[:, 3])


def _pose_tokens(pose: RelativePose) -> list[str]:
    matrix = np.hstack([pose.rotation.m, pose.translation[:, None]])
    return [format_number(x) for x in matrix.ravel()]


def parse_kitti_poses(stream: TextIO | Iterable[str]) -> Trajectory:
    """Read a pose file into a Trajectory; rotations are validated per line."""
    poses: list[RelativePose] = []
    for line, tokens in _numbered_lines(stream):
        if len(tokens) != POSE_FIELDS:
            raise ParseError(f"expected {POSE_FIELDS} fields, got {len(tokens)}", line)
        poses.append(_pose_from_values(_floats(tokens, line, 1), line))
    if not poses:
        raise ParseError("no poses found")
    debug(f"Parsed {len(poses)} poses")
    return Trajectory.from_poses(poses)


def emit_kitti_poses(traj: Trajectory, stream: TextIO) -> None:
    for pose in traj.poses:
        stream.write(" ".join(_pose_tokens(pose)) + "\n")


def validate_record_id(record_id: str) -> str:
    """Raise ValueError unless the id is non-empty and matches ID_PATTERN."""
    if not record_id:
        raise ValueError("record id cannot be empty")
    if not ID_PATTERN.match(record_id):
        raise ValueError(
            f"invalid record id '{record_id}': must contain only alphanumeric, "
            "'.', '_', '-' characters with optional ':' namespaces"
        )
    return record_id


def parse_predictions(stream: TextIO | Iterable[str]) -> list[SampleRecord]:
    """Read a prediction file; entropies are left unpopulated."""
    records: list[SampleRecord] = []
    seen: dict[str, int] = {}
    for line, tokens in _numbered_lines(stream):
        if len(tokens) != PREDICTION_FIELDS:
            raise ParseError(f"expected {PREDICTION_FIELDS} fields (id + 12 pose + 9 Psi), got {len(tokens)}", line)
        record_id = tokens[0]
        try:
            validate_record_id(record_id)
        except ValueError as e:
            raise ParseError(str(e), line, 1) from None
        if record_id in seen:
            raise ParseError(f"duplicate id '{record_id}' (first seen on line {seen[record_id]})", line, 1)
        seen[record_id] = line

        values = _floats(tokens[1:], line, 2)
        pose = _pose_from_values(values[:POSE_FIELDS], line)
        psi = FisherParams(values[POSE_FIELDS:].reshape(3, 3))
        records.append(SampleRecord(record_id, pose, psi))
    debug(f"Parsed {len(records)} predictions")
    return records


def emit_predictions(records: Iterable[SampleRecord], stream: TextIO) -> None:
    for record in records:
        if record.psi is None:
            raise ValueError(f"record '{record.id}' has no Psi; prediction files need one")
        psi = [format_number(x) for x in record.psi.psi.ravel()]
        stream.write(" ".join([record.id, *_pose_tokens(record.pose), *psi]) + "\n")


def _record_to_json(record: SampleRecord) -> dict:
    return {
        "kind": "record",
        "id": record.id,
        "source": record.source,
        "entropy": record.entropy,
        "selected": record.selected,
        "pose": np.hstack([record.pose.rotation.m, record.pose.translation[:, None]]).ravel().tolist(),
        "psi": None if record.psi is None else record.psi.psi.ravel().tolist(),
    }


def _record_from_json(obj: dict, line: int) -> SampleRecord:
    try:
        pose_values = np.asarray(obj["pose"], dtype=float)
        if pose_values.shape != (POSE_FIELDS,) or not np.all(np.isfinite(pose_values)):
            raise ParseError(f"'pose' must hold {POSE_FIELDS} finite numbers", line)
        psi = obj.get("psi")
        return SampleRecord(
            id=validate_record_id(obj["id"]),
            pose=_pose_from_values(pose_values, line),
            psi=None if psi is None else FisherParams(np.asarray(psi, dtype=float).reshape(3, 3)),
            entropy=obj.get("entropy"),
            selected=obj.get("selected"),
            source=obj["source"],
        )
    except ParseError:
        raise
    except KeyError as e:
        raise ParseError(f"record is missing key {e}", line) from None
    except (TypeError, ValueError) as e:
        raise ParseError(f"invalid record: {e}", line) from None


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def write_manifest(manifest: DatasetManifest, stream: TextIO) -> None:
    header = {
        "kind": "header",
        "source": manifest.source,
        "convention": HAAR_CONVENTION,
        "tool": TOOL_NAME,
        "version": __version__,
        "record_count": len(manifest),
        "provenance": manifest.provenance,
    }
    stream.write(_dumps(header) + "\n")
    for record in manifest.records:
        stream.write(_dumps(_record_to_json(record)) + "\n")


def read_manifest(stream: TextIO | Iterable[str]) -> DatasetManifest:
    header: dict | None = None
    records: list[SampleRecord] = []
    for line, raw in enumerate(stream, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", line)

        kind = obj.get("kind")
        if header is None:
            if kind != "header":
                raise ParseError("manifest must start with a header object", line)
            header = obj
        elif kind == "record":
            records.append(_record_from_json(obj, line))
        else:
            raise ParseError(f"unexpected object kind '{kind}'", line)

    if header is None:
        raise ParseError("empty manifest")
    if header.get("convention") != HAAR_CONVENTION:
        raise ParseError(f"unsupported measure convention '{header.get('convention')}'")
    try:
        return DatasetManifest(header.get("source", ""), tuple(records), header.get("provenance") or {})
    except ValueError as e:
        raise ParseError(str(e)) from None


def sniff_format(lines: list[str]) -> str:
    """'manifest', 'poses' or 'predictions', judged from the first non-blank line."""
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("{"):
            return "manifest"
        count = len(stripped.split())
        if count == POSE_FIELDS:
            return "poses"
        if count == PREDICTION_FIELDS:
            return "predictions"
        raise ParseError(
            f"unrecognized file: expected {POSE_FIELDS} (pose) or {PREDICTION_FIELDS} (prediction) fields, got {count}",
            1,
        )
    raise ParseError("empty file")


def _read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def read_relatives(path: str | Path) -> list[RelativePose]:
    """Consecutive relative poses from a pose file or a prediction file."""
    lines = _read_lines(path)
    try:
        kind = sniff_format(lines)
        if kind == "poses":
            return parse_kitti_poses(lines).relatives()
        if kind == "predictions":
            return [r.pose for r in parse_predictions(lines)]
        raise ParseError("expected a pose or prediction file, got a manifest")
    except ParseError as e:
        raise e.with_path(path) from None


def read_trajectory(path: str | Path) -> Trajectory:
    """Absolute poses from a pose file, or composed from a prediction file."""
    lines = _read_lines(path)
    try:
        if sniff_format(lines) == "poses":
            return parse_kitti_poses(lines)
    except ParseError as e:
        raise e.with_path(path) from None
    return compose_trajectory(read_relatives(path))


def read_predictions(path: str | Path) -> list[SampleRecord]:
    try:
        return parse_predictions(_read_lines(path))
    except ParseError as e:
        raise e.with_path(path) from None


def read_manifest_file(path: str | Path) -> DatasetManifest:
    try:
        return read_manifest(_read_lines(path))
    except ParseError as e:
        raise e.with_path(path) from None


def file_digest(path: str | Path) -> str:
    """sha256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
