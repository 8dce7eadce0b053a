"""Model-vs-measurement matrix discrepancy monitoring and localization.

An undetected topology change leaves the assumed network model stale: the
matrix it predicts drifts away from the measurement-based estimate. The
monitor tracks the normalized Frobenius distance between the two, raises an
alarm once it dwells above a threshold, and localizes the change to the
generators whose coupling entries moved the most.
"""

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model_matrix import SystemMatrix


@dataclass(frozen=True)
class ObservedSet:
    """Generators with PMU coverage; the reference is never observed."""

    observed: tuple[int, ...]
    reference: Optional[int] = None

    def __post_init__(self):
        if len(self.observed) == 0:
            raise ValueError("observed set must be non-empty")
        object.__setattr__(self, "observed", tuple(sorted(set(self.observed))))
        if self.reference in self.observed:
            raise ValueError("reference generator cannot be in the observed set")


@dataclass
class DiscrepancyReport:
    times: np.ndarray
    distances: np.ndarray
    threshold: float
    alarm_time: Optional[float]
    snapshot_time: Optional[float]
    diff: Optional[SystemMatrix]
    implicated: list  # (generator id, score), sorted by descending score


def _mat(a):
    return a.matrix if isinstance(a, SystemMatrix) else np.asarray(a, dtype=float)


def normalized_frobenius(a_ref, a) -> float:
    """|A_ref - A|_F / |A_ref|_F; the first argument sets the normalization."""
    ref = _mat(a_ref)
    other = _mat(a)
    if ref.shape != other.shape:
        raise ValueError("matrix shapes differ")
    denom = np.linalg.norm(ref, "fro")
    if denom == 0:
        raise ValueError("zero-norm reference matrix")
    return float(np.linalg.norm(ref - other, "fro") / denom)


def element_diff(a, b):
    """Entrywise |a_ij - b_ij|, keeping the labels when both sides agree."""
    am, bm = _mat(a), _mat(b)
    if am.shape != bm.shape:
        raise ValueError("matrix shapes differ")
    diff = np.abs(am - bm)
    if isinstance(a, SystemMatrix) and isinstance(b, SystemMatrix):
        if a.gen_ids != b.gen_ids:
            raise ValueError("generator labels differ between matrices")
        return SystemMatrix(matrix=diff, gen_ids=a.gen_ids, reference=a.reference)
    return diff


def localize(diff: SystemMatrix, theta: float = 0.5) -> list:
    """Implicate generators from the coupling block of a difference matrix.

    Scores each generator by the largest entry in its row and column of the
    lower-left (dPe/ddelta) block; generators scoring at least
    theta * max(score) are implicated. Returns (id, score) pairs sorted by
    descending score.
    """
    block = diff.lower_left()
    if block.size == 0:
        raise ValueError("empty coupling block")
    scores = np.maximum(block.max(axis=1), block.max(axis=0))
    top = scores.max()
    if top <= 0:
        return []
    hits = [(g, float(s)) for g, s in zip(diff.gen_ids, scores) if s >= theta * top]
    return sorted(hits, key=lambda p: -p[1])


def submatrix_select(a: SystemMatrix, observed) -> SystemMatrix:
    """Rows/columns of both state blocks for the observed generators only."""
    if isinstance(observed, ObservedSet):
        observed = observed.observed
    observed = tuple(observed)
    pos = []
    for g in observed:
        if g not in a.gen_ids:
            raise KeyError(f"generator {g} not present in matrix labels")
        pos.append(a.gen_ids.index(g))
    m = a.m
    idx = pos + [p + m for p in pos]
    sub = a.matrix[np.ix_(idx, idx)]
    return SystemMatrix(matrix=sub, gen_ids=observed, reference=a.reference)


def monitor(times, a_meas_seq, a_model_seq, threshold: float = 0.10,
            dwell_s: float = 10.0, theta: float = 0.5,
            settle_rate: float = 1e-3, settle_s: float = 30.0) -> DiscrepancyReport:
    """Distance series between paired matrix streams, with alarm + localization.

    The alarm fires once the distance stays at or above the threshold for
    dwell_s. Localization runs at the first post-alarm time where the series
    has settled (per-emission slope below settle_rate for settle_s), falling
    back to the final emission. Gaps (None estimates) appear as NaN and do
    not reset the dwell.
    """
    times = np.asarray(times, dtype=float)
    if not (len(times) == len(a_meas_seq) == len(a_model_seq)):
        raise ValueError("streams must be aligned")
    dist = np.full(len(times), np.nan)
    for k, (am, ao) in enumerate(zip(a_meas_seq, a_model_seq)):
        if am is None or ao is None:
            continue
        dist[k] = normalized_frobenius(ao, am)

    alarm_time = None
    alarm_idx = None
    run_start = None
    for k, d in enumerate(dist):
        if np.isnan(d):
            continue
        if d >= threshold:
            if run_start is None:
                run_start = k
            if times[k] - times[run_start] >= dwell_s:
                alarm_time = float(times[k])
                alarm_idx = k
                break
        else:
            run_start = None

    snapshot_time = None
    diff = None
    implicated = []
    if alarm_idx is not None:
        snap_idx = len(times) - 1
        calm_start = None
        for k in range(alarm_idx + 1, len(times)):
            if np.isnan(dist[k]) or np.isnan(dist[k - 1]):
                calm_start = None
                continue
            if abs(dist[k] - dist[k - 1]) < settle_rate:
                if calm_start is None:
                    calm_start = k
                if times[k] - times[calm_start] >= settle_s:
                    snap_idx = k
                    break
            else:
                calm_start = None
        while a_meas_seq[snap_idx] is None and snap_idx > alarm_idx:
            snap_idx -= 1
        snapshot_time = float(times[snap_idx])
        diff = element_diff(a_meas_seq[snap_idx], a_model_seq[snap_idx])
        implicated = localize(diff, theta=theta)

    return DiscrepancyReport(times=times, distances=dist, threshold=threshold,
                             alarm_time=alarm_time, snapshot_time=snapshot_time,
                             diff=diff, implicated=implicated)


def save_report(report: DiscrepancyReport, json_path, distances_csv,
                diff_csv=None) -> None:
    """JSON summary plus CSV distance series (and diff matrix when present)."""
    payload = {
        "threshold": report.threshold,
        "alarm_time": report.alarm_time,
        "snapshot_time": report.snapshot_time,
        "implicated": [[g, s] for g, s in report.implicated],
    }
    with open(json_path, "w") as f:
        json.dump(payload, f, indent=1)
    with open(distances_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "distance"])
        for t, d in zip(report.times, report.distances):
            w.writerow([repr(float(t)), "" if np.isnan(d) else repr(float(d))])
    if diff_csv is not None and report.diff is not None:
        with open(diff_csv, "w") as f:
            for row in report.diff.matrix:
                f.write(",".join(repr(float(v)) for v in row) + "\n")
