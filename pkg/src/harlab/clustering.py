"""User clustering by activity-pattern distance.

Pipeline: pick one representative window per (user, activity) — the one
with the smallest mean Euclidean distance to the other windows of that
pair — then build per-user distance vectors (mean correlation distance
to the other users, one coordinate per activity) and run k-means over
them. Uniform random partitions cover the average-case sweeps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from harlab.errors import DataError

log = logging.getLogger(__name__)


@dataclass
class RepresentativeSet:
    """(user_id, activity_label) -> feature vector of the chosen window."""

    vectors: dict
    window_ids: dict = field(default_factory=dict)

    @property
    def users(self):
        return sorted({u for u, _ in self.vectors})

    @property
    def activities(self):
        return sorted({a for _, a in self.vectors})


@dataclass
class UserDistanceVector:
    user_id: str
    distances: np.ndarray  # one entry per activity, in sorted activity order


@dataclass
class ClusterAssignment:
    assignments: dict  # user_id -> cluster index in 0..k-1
    k: int
    method: str
    seed: int
    centroids: np.ndarray | None = None
    inertia: float | None = None
    n_iter: int = 0

    def members(self, cluster: int):
        return sorted(u for u, c in self.assignments.items() if c == cluster)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "seed": self.seed,
            "assignments": {u: int(c) for u, c in sorted(self.assignments.items())},
        }


def representative_window(windows) -> str:
    """Window id minimizing mean Euclidean distance to the other windows
    of one (user, activity) pair. ``windows`` maps window_id -> feature
    vector. Ties break toward the smallest window id; a single window is
    its own representative.
    """
    if not windows:
        raise DataError("representative_window needs at least one window")
    ids = sorted(windows)
    if len(ids) == 1:
        return ids[0]
    mat = np.stack([np.asarray(windows[i], dtype=np.float64) for i in ids])
    diff = mat[:, None, :] - mat[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    mean_dist = dist.sum(axis=1) / (len(ids) - 1)
    return ids[int(np.argmin(mean_dist))]


def correlation_distance(u, v) -> float:
    """1 - Pearson correlation; in [0, 2]. A zero-variance input makes the
    correlation undefined; that degenerate case maps to the neutral
    distance 1 and is logged."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or len(u) < 2:
        raise DataError(f"correlation_distance needs equal-length vectors of >= 2, got {u.shape} vs {v.shape}")
    du = u - u.mean()
    dv = v - v.mean()
    nu = np.sqrt((du**2).sum())
    nv = np.sqrt((dv**2).sum())
    if nu == 0.0 or nv == 0.0:
        log.warning("zero-variance vector in correlation_distance; using neutral distance 1")
        return 1.0
    r = float(np.clip((du @ dv) / (nu * nv), -1.0, 1.0))
    return 1.0 - r


def build_representative_set(feature_vectors) -> RepresentativeSet:
    """feature_vectors: (user_id, activity, window_id) -> vector."""
    grouped = {}
    for (user, activity, wid), vec in feature_vectors.items():
        grouped.setdefault((user, activity), {})[wid] = vec
    vectors = {}
    window_ids = {}
    for key, windows in grouped.items():
        chosen = representative_window(windows)
        vectors[key] = np.asarray(windows[chosen], dtype=np.float64)
        window_ids[key] = chosen
    return RepresentativeSet(vectors=vectors, window_ids=window_ids)


def user_distance_vectors(reps: RepresentativeSet) -> list[UserDistanceVector]:
    """Coordinate a of user u = mean correlation distance between u's
    representative for activity a and every other user's. Pairs where
    either side lacks the activity contribute nothing; a user with no
    peers for an activity gets the neutral distance 1 there."""
    users = reps.users
    activities = reps.activities
    if len(users) < 2:
        raise DataError("user_distance_vectors needs at least 2 users")
    out = []
    for u in users:
        vec = np.empty(len(activities))
        for ai, a in enumerate(activities):
            mine = reps.vectors.get((u, a))
            if mine is None:
                log.warning("user %s has no windows for activity %s; neutral distance 1", u, a)
                vec[ai] = 1.0
                continue
            dists = [
                correlation_distance(mine, reps.vectors[(other, a)])
                for other in users
                if other != u and (other, a) in reps.vectors
            ]
            if not dists:
                log.warning("no peer has activity %s to compare with user %s", a, u)
                vec[ai] = 1.0
            else:
                vec[ai] = float(np.mean(dists))
        out.append(UserDistanceVector(user_id=u, distances=vec))
    return out


def _kmeans_pp_init(x, k, rng):
    n = len(x)
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest = ((x - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total == 0.0:
            centroids[i] = x[rng.integers(n)]
            continue
        centroids[i] = x[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, ((x - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans_points(x, k: int, seed: int, max_iter: int = 300):
    """Lloyd's algorithm with k-means++ seeding on row vectors ``x``.
    Returns (labels, centroids, inertia_history, n_iter); the history has
    one entry per iteration and is non-increasing. Empty clusters are
    repaired by moving in the point farthest from its centroid."""
    x = np.asarray(x, dtype=np.float64)
    n, _ = x.shape
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if n < k:
        raise DataError(f"cannot make {k} clusters from {n} points")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    labels = np.full(n, -1)
    history = []
    for it in range(1, max_iter + 1):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for c in range(k):
            if not (new_labels == c).any():
                dist_to_own = ((x - centroids[new_labels]) ** 2).sum(axis=1)
                dist_to_own[new_labels == c] = -1.0
                new_labels[int(dist_to_own.argmax())] = c
        history.append(float(((x - centroids[new_labels]) ** 2).sum()))
        if (new_labels == labels).all():
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = x[labels == c].mean(axis=0)
    return labels, centroids, history, it


def kmeans(vectors: list[UserDistanceVector], k: int, seed: int, max_iter: int = 300) -> ClusterAssignment:
    if len(vectors) < k:
        raise DataError(f"cannot make {k} clusters from {len(vectors)} users")
    x = np.stack([v.distances for v in vectors])
    labels, centroids, history, n_iter = kmeans_points(x, k, seed, max_iter)
    assignments = {v.user_id: int(c) for v, c in zip(vectors, labels)}
    return ClusterAssignment(
        assignments=assignments, k=k, method="kmeans", seed=seed,
        centroids=centroids, inertia=history[-1], n_iter=n_iter,
    )


def random_partition(user_ids, k: int, seed: int) -> ClusterAssignment:
    """Uniform random assignment conditioned on no empty cluster
    (rejection sampling), deterministic per seed."""
    user_ids = sorted(user_ids)
    if len(user_ids) < k:
        raise DataError(f"cannot make {k} clusters from {len(user_ids)} users")
    rng = np.random.default_rng(seed)
    while True:
        labels = rng.integers(0, k, size=len(user_ids))
        if len(np.unique(labels)) == k:
            break
    return ClusterAssignment(
        assignments={u: int(c) for u, c in zip(user_ids, labels)},
        k=k, method="random", seed=seed,
    )
