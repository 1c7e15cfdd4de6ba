"""Cell clustering on day-period activity profiles.

Each cell is summarized by six features: its average total internet activity
in each 4-hour period of the day (late night 00-04 through night 20-24),
averaged over the days of the trace. K-means over these profiles groups
cells with similar daily patterns; an elbow scan over k guides the choice
of cluster count.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .seeding import entity_rng

logger = logging.getLogger(__name__)

PERIOD_NAMES = ("late_night", "early_morning", "morning",
                "afternoon", "evening", "night")
N_PERIODS = 6
_PERIOD_HOURS = 4
_SECONDS_PER_DAY = 86_400


@dataclass(frozen=True)
class PeriodProfile:
    """Per-cell mean activity in each day period, order fixed as PERIOD_NAMES."""

    cell_id: int
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        if self.features.shape != (N_PERIODS,):
            raise ValueError(f"profiles need exactly {N_PERIODS} features")
        if np.any(self.features < 0):
            raise ValueError("features must be nonnegative")


@dataclass
class ClusterModel:
    """Fitted K-means model over period profiles."""

    k: int
    centroids: np.ndarray
    assignments: dict[int, int]
    sse: float
    seed: int

    def save(self, path) -> None:
        cells = np.array(sorted(self.assignments))
        labels = np.array([self.assignments[c] for c in cells])
        np.savez(path, k=self.k, centroids=self.centroids, cells=cells,
                 labels=labels, sse=self.sse, seed=self.seed)

    @classmethod
    def load(cls, path) -> "ClusterModel":
        data = np.load(path)
        assignments = {int(c): int(l) for c, l in zip(data["cells"], data["labels"])}
        return cls(int(data["k"]), data["centroids"], assignments,
                   float(data["sse"]), int(data["seed"]))


def compute_period_profiles(trace, utc_offset_hours: float = 1.0) -> list[PeriodProfile]:
    """Build the six-feature day-period profile for every cell in the trace.

    A step belongs to the period containing its start time in local
    wall-clock (trace timestamps shifted by ``utc_offset_hours``). Each
    period feature is the summed activity divided by the number of distinct
    local days in which that period occurs.
    """
    span_s = trace.n_steps * trace.step_duration
    if span_s < _SECONDS_PER_DAY:
        raise ValueError("trace must cover at least one full day")
    local_s = (trace.origin_time_ms / 1000.0 + utc_offset_hours * 3600.0
               + np.arange(trace.n_steps) * trace.step_duration)
    periods = ((local_s % _SECONDS_PER_DAY) // (_PERIOD_HOURS * 3600)).astype(int)
    days = (local_s // _SECONDS_PER_DAY).astype(int)
    features = np.zeros((trace.n_cells, N_PERIODS))
    for p in range(N_PERIODS):
        mask = periods == p
        if not mask.any():
            continue
        n_days = len(np.unique(days[mask]))
        features[:, p] = trace.steps[mask].sum(axis=0) / n_days
    return [PeriodProfile(cell, features[i]) for i, cell in enumerate(trace.cell_ids)]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding: spread initial centroids by squared distance."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    dist2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = dist2.sum()
        if total <= 0.0:
            centroids[i:] = points[rng.integers(n, size=k - i)]
            break
        probs = dist2 / total
        centroids[i] = points[rng.choice(n, p=probs)]
        dist2 = np.minimum(dist2, np.sum((points - centroids[i]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, init: np.ndarray, max_iter: int,
           tol: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd's iterations from a given init; returns (centroids, labels, sse).

    Ties in the nearest-centroid assignment break toward the lowest cluster
    index (argmin). An emptied cluster is repaired by moving its centroid to
    the point farthest from its assigned centroid.
    """
    centroids = init.copy()
    k = centroids.shape[0]
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
            else:
                farthest = np.argmax(d2[np.arange(len(points)), labels])
                new_centroids[j] = points[farthest]
                labels[farthest] = j
        shift = np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    sse = float(d2[np.arange(len(points)), labels].sum())
    return centroids, labels, sse


def kmeans_fit(profiles: list[PeriodProfile], k: int, seed: int,
               max_iter: int = 300, tol: float = 1e-6,
               n_restarts: int = 10) -> ClusterModel:
    """Best-of-n-restarts K-means over period profiles; deterministic per seed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(profiles):
        raise ValueError("k cannot exceed the number of profiles")
    points = np.stack([p.features for p in profiles])
    best = None
    for restart in range(n_restarts):
        rng = entity_rng(seed, 10, k, restart)
        init = _kmeans_pp_init(points, k, rng)
        centroids, labels, sse = _lloyd(points, init, max_iter, tol)
        if best is None or sse < best[2]:
            best = (centroids, labels, sse)
    centroids, labels, sse = best
    assignments = {p.cell_id: int(labels[i]) for i, p in enumerate(profiles)}
    return ClusterModel(k, centroids, assignments, sse, seed)


def elbow_scan(profiles: list[PeriodProfile], k_range: tuple[int, int],
               seed: int, n_restarts: int = 10) -> list[tuple[int, float]]:
    """Fit each k in the inclusive range and report (k, sse), ordered by k.

    Besides the seeded restarts, each k also tries a warm start built from
    the previous k's best centroids plus the worst-fit point, which keeps
    the scan non-increasing in k.
    """
    k_lo, k_hi = k_range
    if k_lo < 1 or k_hi > len(profiles) or k_lo > k_hi:
        raise ValueError("k_range must lie within [1, n_profiles]")
    points = np.stack([p.features for p in profiles])
    results = []
    prev_centroids = None
    for k in range(k_lo, k_hi + 1):
        model = kmeans_fit(profiles, k, seed, n_restarts=n_restarts)
        best = (model.centroids, model.sse)
        if prev_centroids is not None and prev_centroids.shape[0] == k - 1:
            d2 = np.sum((points[:, None, :] - prev_centroids[None, :, :]) ** 2, axis=2)
            worst = np.argmax(d2.min(axis=1))
            warm = np.vstack([prev_centroids, points[worst]])
            centroids, _, sse = _lloyd(points, warm, 300, 1e-6)
            if sse < best[1]:
                best = (centroids, sse)
        results.append((k, best[1]))
        prev_centroids = best[0]
    return results


def select_cells(model: ClusterModel, cluster_index: int) -> list[int]:
    """Cells assigned to one cluster, in ascending cell-id order."""
    if not 0 <= cluster_index < model.k:
        raise ValueError(f"cluster_index must be in [0, {model.k})")
    return sorted(c for c, l in model.assignments.items() if l == cluster_index)


def suggest_elbow_k(scan: list[tuple[int, float]]) -> int:
    """Suggest the knee of the (k, sse) curve: the point of maximum distance
    from the chord joining the curve's endpoints (a curvature-maximum proxy
    that is robust to the steep initial drop).

    Only a hint; the choice of k is ultimately a judgment call on the curve.
    """
    if len(scan) < 3:
        return scan[-1][0]
    ks = np.array([k for k, _ in scan], dtype=float)
    sses = np.array([s for _, s in scan])
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    span = sses[0] - sses[-1]
    y = (sses - sses[-1]) / span if span > 0 else np.zeros_like(sses)
    chord = 1.0 - x
    return int(ks[np.argmax(chord - y)])


def write_elbow_csv(scan: list[tuple[int, float]], path,
                    comments: list[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "sse"])
        for k, sse in scan:
            writer.writerow([k, repr(sse)])


def write_cluster_map_csv(model: ClusterModel, path,
                          comments: list[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "cluster_index"])
        for cell in sorted(model.assignments):
            writer.writerow([cell, model.assignments[cell]])
