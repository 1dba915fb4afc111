"""Trajectory and ground-truth CSV files."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import Pose

POSE_COLUMNS = ["tx", "ty", "tz", "qw", "qx", "qy", "qz"]
TRUTH_HEADER = ["frame"] + POSE_COLUMNS
TRACK_HEADER = ["frame", "status"] + POSE_COLUMNS + ["inlier_fraction", "rms_px"]


@dataclass(frozen=True, eq=False)
class TrajectoryRow:
    frame: int
    pose: Pose
    status: str = "tracking"
    inlier_fraction: float = 1.0
    rms_px: float = 0.0


def _fmt(v: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(v))


def _pose_fields(p: Pose) -> list[str]:
    return [_fmt(v) for v in p.t] + [_fmt(v) for v in p.quaternion()]


def write_truth(path, frames: list[int], poses: list[Pose]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for f, p in zip(frames, poses):
            w.writerow([f] + _pose_fields(p))


def write_track(path, rows: list[TrajectoryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for r in rows:
            w.writerow([r.frame, r.status] + _pose_fields(r.pose) + [_fmt(r.inlier_fraction), _fmt(r.rms_px)])


def read_trajectory(path) -> list[TrajectoryRow]:
    """Read either CSV schema; truth files are reported as all-tracking."""
    p = Path(path)
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{p}: empty file") from None
        if header == TRACK_HEADER:
            has_status = True
        elif header == TRUTH_HEADER:
            has_status = False
        else:
            raise SchemaError(f"{p}: unexpected header {','.join(header)}")
        rows = []
        for lineno, rec in enumerate(reader, 2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaError(f"{p}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append(_parse_row(rec, has_status))
            except ValueError as exc:
                raise SchemaError(f"{p}:{lineno}: {exc}") from None
    return rows


def _parse_row(rec: list[str], has_status: bool) -> TrajectoryRow:
    frame = int(rec[0])
    i = 2 if has_status else 1
    vals = np.array([float(v) for v in rec[i : i + 7]])
    pose = Pose.from_quaternion(vals[3:], vals[:3])
    if not has_status:
        return TrajectoryRow(frame, pose)
    status = rec[1].strip().lower()
    if status not in ("tracking", "lost"):
        raise ValueError(f"unknown status {rec[1]!r}")
    return TrajectoryRow(frame, pose, status, float(rec[9]), float(rec[10]))
