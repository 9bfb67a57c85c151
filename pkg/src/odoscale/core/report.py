"""Run reports for `odoscale evaluate` and their json, csv and human renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from odoscale import __version__
from odoscale.core.metrics import EvalReport

FORMATS = ("json", "csv", "human")

AVERAGE_NAME = "average"


@dataclass(frozen=True)
class SequenceResult:
    """One evaluated gt/pred pair."""

    name: str
    gt_path: str
    pred_path: str
    report: EvalReport
    substituted: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "gt": self.gt_path,
            "pred": self.pred_path,
            "substituted_frames": list(self.substituted),
            **self.report.to_dict(include_series=True),
        }


@dataclass(frozen=True)
class RunReport:
    """Sequences in input order, their scene average and what produced them.

    inputs maps each input path to its sha256 digest. timing is only set
    when requested, so default reports are byte-identical across runs.
    """

    sequences: tuple[SequenceResult, ...]
    average: EvalReport
    inputs: dict[str, str]
    config: dict
    timing: dict | None = field(default=None)

    def to_dict(self) -> dict:
        out = {
            "tool": "odoscale",
            "version": __version__,
            "config": self.config,
            "inputs": self.inputs,
            "sequences": [s.to_dict() for s in self.sequences],
            AVERAGE_NAME: self.average.to_dict(),
        }
        if self.timing is not None:
            out["timing"] = self.timing
        return out


def _cell(value: float | None, spec: str) -> str:
    return "n/a" if value is None else format(value, spec)


def _rows(report: RunReport) -> list[tuple[str, EvalReport]]:
    rows = [(s.name, s.report) for s in report.sequences]
    rows.append((AVERAGE_NAME, report.average))
    return rows


def render_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def render_csv(report: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sequence", "t_rel", "r_rel", "se", "subsequences", "frames"])
    for name, r in _rows(report):
        writer.writerow([
            name,
            "" if r.t_rel is None else repr(r.t_rel),
            "" if r.r_rel is None else repr(r.r_rel),
            repr(r.se),
            r.subsequence_count,
            r.frame_count,
        ])
    return buf.getvalue()


def render_human(report: RunReport) -> str:
    lines = [
        f"{'SEQUENCE':<24} {'t_rel (%)':>10} {'r_rel (deg/100m)':>17} {'se':>8}",
        "-" * 62,
    ]
    rows = _rows(report)
    for i, (name, r) in enumerate(rows):
        if i == len(rows) - 1:
            lines.append("-" * 62)
        lines.append(
            f"{name:<24} {_cell(r.t_rel, '.2f'):>10} {_cell(r.r_rel, '.2f'):>17} {r.se:>8.4f}"
        )
    return "\n".join(lines) + "\n"


def render(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "csv":
        return render_csv(report)
    if fmt == "human":
        return render_human(report)
    raise ValueError(f"unknown format '{fmt}': expected one of {', '.join(FORMATS)}")
