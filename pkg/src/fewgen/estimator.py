"""Class-distribution estimation calibrated by nearest unlabeled queries.

Two strategies over one episode class:

* way-based: the class is one Gaussian.  Its mean blends the support mean
  with the mean of the pooled top-R query neighbors of every support
  (half/half); its covariance blends the two scatter matrices the same way.
* shot-based: each support sample is its own Gaussian.  The mean blends the
  support point with the mean of its own top-R neighbors; the covariance is
  the neighbor scatter around that blended mean.

Neighbors are selected purely by Euclidean distance in the projected space;
query labels are never consulted, so the estimator behaves identically at
train and test time.  Degenerate scatter denominators (K-1 or K*R-1 equal
to zero) yield the zero matrix; sampling restores positive definiteness
with diagonal jitter downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyNeighbors, EmptySupport

WAY = "way"
SHOT = "shot"
STRATEGIES = (WAY, SHOT)


@dataclass(eq=False)
class Gaussian:
    """Mean + covariance, with the factorization cache filled on demand.

    ``jitter`` records the diagonal addition actually used to factorize;
    zero until a factorization has been requested.
    """

    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0
    chol: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ClassDistribution:
    """Estimated distribution of one class: 1 Gaussian (way) or K (shot)."""

    strategy: str
    components: tuple[Gaussian, ...]

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy == WAY and len(self.components) != 1:
            raise ValueError("way strategy carries exactly one Gaussian")
        if not self.components:
            raise ValueError("distribution needs at least one component")

    def mean(self) -> np.ndarray:
        """Uniform average of component means (the class-level mean)."""
        return np.mean([g.mean for g in self.components], axis=0)


@dataclass(frozen=True)
class NeighborResult:
    """Top-R neighbors of one support, ascending by distance.

    ``truncated`` flags that fewer than the requested R queries existed;
    that is not an error, the list is simply shorter.
    """

    vectors: np.ndarray  # (r, d)
    indices: np.ndarray  # (r,) positions into the query array
    truncated: bool


def top_r_neighbors(
    support_embedded: np.ndarray, queries_embedded: np.ndarray, r: int
) -> NeighborResult:
    """The r queries closest to the support in Euclidean distance.

    Ties are broken by query position (lower index first).  Requesting more
    neighbors than queries truncates to what exists.
    """
    queries = np.atleast_2d(np.asarray(queries_embedded, dtype=np.float64))
    if queries.shape[0] == 0:
        raise EmptyNeighbors()
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    diff = queries - np.asarray(support_embedded, dtype=np.float64)
    dist_sq = np.einsum("qd,qd->q", diff, diff)
    order = np.argsort(dist_sq, kind="stable")
    take = min(r, queries.shape[0])
    idx = order[:take]
    return NeighborResult(vectors=queries[idx], indices=idx, truncated=r > queries.shape[0])


def _scatter(rows: np.ndarray, center: np.ndarray, denom: int) -> np.ndarray:
    """Sum of outer products of (row - center), over denom; zero if denom<1."""
    d = center.shape[0]
    if denom < 1:
        return np.zeros((d, d))
    dev = rows - center
    cov = (dev.T @ dev) / denom
    return 0.5 * (cov + cov.T)  # kill float asymmetry from the matmul


def estimate_way(support_embedded: np.ndarray, neighbors: list[np.ndarray]) -> Gaussian:
    """Single class Gaussian from K supports and their pooled neighbors.

    mean = (support mean + pooled-neighbor mean) / 2
    cov  = (support scatter / (K-1) + pooled scatter / (K*R-1)) / 2
    with either scatter term defined as zero when its denominator vanishes.
    """
    support = np.atleast_2d(np.asarray(support_embedded, dtype=np.float64))
    k = support.shape[0]
    if k == 0:
        raise EmptySupport()
    pooled = (
        np.concatenate([np.atleast_2d(a) for a in neighbors])
        if neighbors
        else np.empty((0, support.shape[1]))
    )
    total = pooled.shape[0]
    if total == 0:
        raise EmptyNeighbors()

    mu_s = support.mean(axis=0)
    mu_q = pooled.mean(axis=0)
    mean = 0.5 * (mu_s + mu_q)
    sigma_s = _scatter(support, mu_s, k - 1)
    sigma_q = _scatter(pooled, mu_q, total - 1)
    return Gaussian(mean=mean, cov=0.5 * (sigma_s + sigma_q))


def estimate_shot(support_embedded: np.ndarray, neighbors: np.ndarray) -> Gaussian:
    """Per-support Gaussian from one support point and its R neighbors.

    mean = (support + neighbor mean) / 2
    cov  = neighbor scatter around that blended mean / (R-1), zero when R=1.
    """
    x = np.asarray(support_embedded, dtype=np.float64)
    nbrs = np.atleast_2d(np.asarray(neighbors, dtype=np.float64))
    r = nbrs.shape[0]
    if r == 0:
        raise EmptyNeighbors()
    mean = 0.5 * (x + nbrs.mean(axis=0))
    cov = _scatter(nbrs, mean, r - 1)
    return Gaussian(mean=mean, cov=cov)


def estimate_class(
    strategy: str,
    support_embedded: np.ndarray,
    queries_embedded: np.ndarray,
    r: int,
    diagonal: bool = False,
) -> ClassDistribution:
    """Estimate one class's distribution from its supports and the whole
    unlabeled query pool.

    Neighbor sets are selected per support independently and may overlap
    across supports; they are deliberately not deduplicated.  ``diagonal``
    keeps only the covariance diagonal (speed knob for high dimensions; the
    default follows the full-covariance formulas).
    """
    support = np.atleast_2d(np.asarray(support_embedded, dtype=np.float64))
    if support.shape[0] == 0:
        raise EmptySupport()
    neighbor_sets = [
        top_r_neighbors(support[i], queries_embedded, r).vectors
        for i in range(support.shape[0])
    ]
    if strategy == WAY:
        components = (estimate_way(support, neighbor_sets),)
    elif strategy == SHOT:
        components = tuple(
            estimate_shot(support[i], neighbor_sets[i]) for i in range(support.shape[0])
        )
    else:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    if diagonal:
        for g in components:
            g.cov = np.diag(np.diag(g.cov))
    return ClassDistribution(strategy=strategy, components=components)
