"""Discriminative positive region discovery.

For every proposal we find its single best cosine match in every other
image (regardless of image label); the proposal plus its k most similar
per-image champions form a cluster.  Clusters are ranked by how many of
their instances come from positively-labeled images, near-duplicates of
already-kept clusters are removed greedily, and the positive members of the
top clusters become the mined region set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyDatasetError, NoPositivesError
from .geometry import BBox, iou

POSITIVE = "pos"
NEGATIVE = "neg"


@dataclass(frozen=True)
class Proposal:
    """One region proposal: its image, in-image index, box, and descriptor."""

    image_id: str
    index: int
    box: BBox
    feature: np.ndarray
    label: str = POSITIVE

    @property
    def prop_id(self) -> str:
        return f"{self.image_id}#{self.index}"


@dataclass(frozen=True)
class Cluster:
    """A seed proposal plus its nearest-neighbor members.

    ``members`` holds (proposal, similarity) pairs sorted by similarity
    descending, at most one per image and never from the seed's own image.
    ``positive_count`` counts members from positive images, plus the seed
    when its own image is positive.
    """

    seed: Proposal
    members: tuple[tuple[Proposal, float], ...]
    positive_count: int

    @property
    def cluster_id(self) -> str:
        return self.seed.prop_id

    @property
    def size(self) -> int:
        return len(self.members) + 1

    def mean_member_similarity(self) -> float:
        if not self.members:
            return 0.0
        return sum(s for _, s in self.members) / len(self.members)

    def all_regions(self) -> list[Proposal]:
        return [self.seed] + [p for p, _ in self.members]


@dataclass(frozen=True)
class MinedRegion:
    """A mined positive region with its cluster provenance."""

    region_id: str
    image_id: str
    box: BBox
    cluster_id: str
    cluster_rank: int


@dataclass(frozen=True)
class MinedRegionSet:
    """The positive region pool, plus the rank-ordered contributing clusters."""

    regions: tuple[MinedRegion, ...]
    source_cluster_ids: tuple[str, ...]

    def by_image(self) -> dict[str, list[MinedRegion]]:
        out: dict[str, list[MinedRegion]] = {}
        for r in self.regions:
            out.setdefault(r.image_id, []).append(r)
        return out


def _safe_cosine(a: np.ndarray, na: float, b: np.ndarray, nb: float) -> float:
    # Zero-norm descriptors are degenerate; score them 0 rather than erroring.
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def build_clusters(
    proposals_by_image: Mapping[str, Sequence[Proposal]],
    labels: Mapping[str, str],
    k: int,
) -> list[Cluster]:
    """Cluster every proposal with its k most similar per-image champions.

    The champion of a seed in another image is that image's single most
    cosine-similar proposal (tie: lowest index).  Members are the k best
    champions ordered by (similarity desc, image_id asc, index asc), which
    makes the output invariant to proposal file ordering.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    image_ids = sorted(proposals_by_image)
    if not image_ids:
        raise EmptyDatasetError("no images in proposal dataset")
    feats: dict[str, list[np.ndarray]] = {}
    norms: dict[str, list[float]] = {}
    for img in image_ids:
        props = proposals_by_image[img]
        if not props:
            raise EmptyDatasetError(f"image {img} has no proposals")
        feats[img] = [np.asarray(p.feature, dtype=np.float64).reshape(-1) for p in props]
        norms[img] = [float(np.linalg.norm(f)) for f in feats[img]]

    clusters: list[Cluster] = []
    for img in image_ids:
        for i, seed in enumerate(proposals_by_image[img]):
            sf, sn = feats[img][i], norms[img][i]
            champions: list[tuple[float, str, int]] = []
            for other in image_ids:
                if other == img:
                    continue
                best_sim = -math.inf
                best_j = -1
                for j in range(len(proposals_by_image[other])):
                    sim = _safe_cosine(sf, sn, feats[other][j], norms[other][j])
                    if sim > best_sim:
                        best_sim, best_j = sim, j
                champions.append((best_sim, other, best_j))
            champions.sort(key=lambda c: (-c[0], c[1], c[2]))
            members = tuple(
                (proposals_by_image[image][j], sim)
                for sim, image, j in champions[:k]
            )
            positive_count = int(labels.get(img) == POSITIVE) + sum(
                1 for p, _ in members if labels.get(p.image_id) == POSITIVE
            )
            clusters.append(Cluster(seed=seed, members=members, positive_count=positive_count))
    return clusters


def rank_clusters(clusters: Sequence[Cluster]) -> list[Cluster]:
    """Sort by positive count desc, then mean member similarity desc, then seed id."""
    return sorted(
        clusters,
        key=lambda c: (
            -c.positive_count,
            -c.mean_member_similarity(),
            c.seed.image_id,
            c.seed.index,
        ),
    )


def dedup_clusters(ranked: Sequence[Cluster], iou_thresh: float = 0.25, frac: float = 0.10) -> list[Cluster]:
    """Greedily drop clusters that are near-duplicates of already-kept ones.

    Scanning in rank order, a cluster is removed when at least
    ``ceil(frac * size)`` of its regions (seed included) have IOU above
    ``iou_thresh`` with a same-image region of any kept cluster.  Output is
    always a subsequence of the input.
    """
    kept: list[Cluster] = []
    kept_boxes: dict[str, list[BBox]] = {}
    for cluster in ranked:
        regions = cluster.all_regions()
        needed = math.ceil(frac * len(regions))
        overlapping = 0
        for region in regions:
            if any(iou(region.box, b) > iou_thresh for b in kept_boxes.get(region.image_id, ())):
                overlapping += 1
                if overlapping >= needed:
                    break
        if overlapping >= needed:
            continue
        kept.append(cluster)
        for region in regions:
            kept_boxes.setdefault(region.image_id, []).append(region.box)
    return kept


def select_positive_regions(
    deduped: Sequence[Cluster],
    labels: Mapping[str, str],
    top_c: int = 200,
) -> MinedRegionSet:
    """Union of positive-image regions from the top-C clusters.

    Duplicate (image, box) pairs collapse to their first (best-ranked)
    occurrence.  Raises :class:`NoPositivesError` when nothing survives,
    which signals that mining failed for the category.
    """
    chosen = list(deduped[: max(0, top_c)])
    seen: set[tuple[str, tuple[float, float, float, float]]] = set()
    regions: list[MinedRegion] = []
    for rank, cluster in enumerate(chosen):
        for region in cluster.all_regions():
            if labels.get(region.image_id) != POSITIVE:
                continue
            key = (region.image_id, region.box.sort_key())
            if key in seen:
                continue
            seen.add(key)
            regions.append(
                MinedRegion(
                    region_id=f"r{len(regions):05d}",
                    image_id=region.image_id,
                    box=region.box,
                    cluster_id=cluster.cluster_id,
                    cluster_rank=rank,
                )
            )
    if not regions:
        raise NoPositivesError("no positive regions mined; category mining failed")
    return MinedRegionSet(
        regions=tuple(regions),
        source_cluster_ids=tuple(c.cluster_id for c in chosen),
    )


def best_region_per_image(mined: MinedRegionSet) -> dict[str, MinedRegion]:
    """Per image, the region from the best-ranked contributing cluster.

    This is the single-region baseline a detector would be trained on
    without any video transfer.
    """
    best: dict[str, MinedRegion] = {}
    for region in mined.regions:
        cur = best.get(region.image_id)
        if cur is None or (region.cluster_rank, region.region_id) < (cur.cluster_rank, cur.region_id):
            best[region.image_id] = region
    return best
