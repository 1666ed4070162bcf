"""Per-frame selection of the relevant track among candidate object tracks.

Each video comes with up to 9 ranked candidate tracks from an external
tracker.  A tracked box is scored by how well mined-region matches in the
frame agree with it: ``sum_i IOU(v_i, t) * sim_i`` over the per-region best
match boxes ``v_i``.  The highest-scoring candidate wins the frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import ConfigInvalidError, NoGroundTruthError
from .geometry import BBox, iou


@dataclass(frozen=True)
class Track:
    """A ranked candidate object track: ordered (frame_idx, box) pairs."""

    video_id: str
    track_id: int
    rank: int
    frames: tuple[tuple[int, BBox], ...]

    def __post_init__(self):
        indices = [f for f, _ in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ConfigInvalidError(
                f"track {self.video_id}/{self.track_id} has non-increasing frame indices"
            )

    def box_at(self, frame_idx: int) -> Optional[BBox]:
        for f, box in self.frames:
            if f == frame_idx:
                return box
        return None


@dataclass(frozen=True)
class FrameSelection:
    """The chosen tracked box for one frame."""

    video_id: str
    frame_idx: int
    box: BBox
    score: float
    track_id: int


def score_track_box(
    t: BBox, frame_matches: Sequence[tuple[BBox, float]]
) -> float:
    """sum of IOU(v_i, t) * sim_i over the frame's (match box, similarity) pairs."""
    return sum(iou(v, t) * sim for v, sim in frame_matches)


def select_track_per_frame(
    candidates: Sequence[tuple[int, BBox]],
    frame_matches: Sequence[tuple[BBox, float]],
    video_id: str,
    frame_idx: int,
) -> Optional[FrameSelection]:
    """Pick the candidate with the highest match-agreement score.

    Ties (including the all-zero-score case) go to the lowest track_id, so
    the result is independent of candidate ordering.  Returns None when no
    track covers the frame.
    """
    if not candidates:
        return None
    best_id, best_box = min(candidates, key=lambda c: c[0])
    best_score = score_track_box(best_box, frame_matches)
    for track_id, box in candidates:
        score = score_track_box(box, frame_matches)
        if score > best_score or (score == best_score and track_id < best_id):
            best_id, best_box, best_score = track_id, box, score
    return FrameSelection(
        video_id=video_id,
        frame_idx=frame_idx,
        box=best_box,
        score=best_score,
        track_id=best_id,
    )


def candidates_at_frame(tracks: Sequence[Track], frame_idx: int) -> list[tuple[int, BBox]]:
    """(track_id, box) pairs of all tracks covering the frame, id-ordered."""
    out = []
    for track in sorted(tracks, key=lambda t: t.track_id):
        box = track.box_at(frame_idx)
        if box is not None:
            out.append((track.track_id, box))
    return out


def evaluate_selection(
    selections: Sequence[FrameSelection],
    tracks_by_video: Mapping[str, Sequence[Track]],
    gt_by_frame: Mapping[tuple[str, int], BBox],
) -> tuple[float, float]:
    """(mean IOU of selections, upper-bound mean IOU) against per-frame GT.

    Evaluated over frames that have both a selection and a ground-truth box.
    The upper bound replaces the selection with the best candidate box in
    the frame, so ``mean_iou <= upper_bound`` always.
    """
    ious: list[float] = []
    upper: list[float] = []
    for sel in selections:
        key = (sel.video_id, sel.frame_idx)
        gt = gt_by_frame.get(key)
        if gt is None:
            continue
        ious.append(iou(sel.box, gt))
        candidates = candidates_at_frame(tracks_by_video.get(sel.video_id, ()), sel.frame_idx)
        upper.append(max(iou(box, gt) for _, box in candidates) if candidates else 0.0)
    if not ious:
        raise NoGroundTruthError("no evaluated frame has ground truth")
    return (sum(ious) / len(ious), sum(upper) / len(upper))
