"""Synthetic sample generation from estimated class distributions.

Draws are ``x = mean + L z`` with ``L`` a PSD-safe Cholesky factor and ``z``
i.i.d. standard normal from an explicit seeded stream, so generation is
deterministic given the stream and parallelizable across classes with
disjoint streams.  Generated vectors live directly in the projected space;
they are never mapped back through the head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotFactorizable, NumericError
from .estimator import SHOT, WAY, ClassDistribution, Gaussian

# Escalation ladder, as multiples of trace(cov)/d; the absolute floor is
# used when the trace is zero (e.g. a zero covariance from the K=1 rule).
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
JITTER_FLOOR = 1e-12


@dataclass(frozen=True)
class GeneratedSet:
    """Synthetic labeled vectors, one array per episode class index."""

    per_class: tuple[np.ndarray, ...]  # entry c: (n_c, d)

    @property
    def n_way(self) -> int:
        return len(self.per_class)

    def total(self) -> int:
        return sum(a.shape[0] for a in self.per_class)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All generated vectors plus their class indices, class-major."""
        xs = [a for a in self.per_class if a.shape[0] > 0]
        if not xs:
            d = self.per_class[0].shape[1] if self.per_class else 0
            return np.empty((0, d)), np.empty((0,), dtype=np.int64)
        labels = np.concatenate(
            [np.full(a.shape[0], c, dtype=np.int64) for c, a in enumerate(self.per_class)]
        )
        return np.concatenate(self.per_class), labels


def cholesky_psd(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower-triangular L with L L^T = cov + jitter*I, and the jitter used.

    Escalates through JITTER_LADDER * trace(cov)/d (first success wins);
    a zero trace falls back to the absolute floor 1e-12.  Raises
    NotFactorizable after the final escalation, which signals corrupted
    input rather than ordinary rank deficiency.
    """
    cov = np.asarray(cov, dtype=np.float64)
    d = cov.shape[0]
    asym = float(np.abs(cov - cov.T).max()) if d else 0.0
    if asym > 1e-8 * (1.0 + float(np.abs(cov).max())):
        raise NotFactorizable(f"covariance asymmetric by {asym:.3e}")
    sym = 0.5 * (cov + cov.T)

    trace = float(np.trace(sym))
    scale = trace / d if trace > 0 else 0.0
    candidates = [level * scale for level in JITTER_LADDER]
    if scale == 0.0:
        candidates = [0.0, JITTER_FLOOR]
    tried = set()
    for jitter in candidates:
        if jitter in tried:
            continue
        tried.add(jitter)
        try:
            return np.linalg.cholesky(sym + jitter * np.eye(d)), jitter
        except np.linalg.LinAlgError:
            continue
    raise NotFactorizable(f"trace={trace:.3e}, last jitter={candidates[-1]:.3e}")


def sample_gaussian(g: Gaussian, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws from the Gaussian; deterministic given the rng stream.

    The factorization is cached on the Gaussian, along with the jitter
    actually applied.
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if n == 0:
        return np.empty((0, g.dim))
    if g.chol is None:
        g.chol, g.jitter = cholesky_psd(g.cov)
    z = rng.standard_normal((n, g.dim))
    return g.mean + z @ g.chol.T


def shot_allocation(n_gen: int, k: int) -> list[int]:
    """Even split of n_gen draws across k components.

    Each gets floor(n_gen/k); the first n_gen mod k get one extra, so
    counts sum to n_gen and differ by at most one.
    """
    base, extra = divmod(n_gen, k)
    return [base + 1 if i < extra else base for i in range(k)]


def generate_for_class(
    dist: ClassDistribution,
    n_gen: int,
    rng: np.random.Generator,
    allocation: str = "even",
) -> np.ndarray:
    """n_gen synthetic vectors for one class.

    Way: all draws from the single Gaussian.  Shot: draws split across the
    K per-support Gaussians, evenly by default; ``allocation="uniform"``
    instead picks a component uniformly at random for each draw.
    """
    if n_gen < 0:
        raise ValueError(f"n_gen must be nonnegative, got {n_gen}")
    if dist.strategy == WAY:
        return sample_gaussian(dist.components[0], n_gen, rng)
    assert dist.strategy == SHOT
    k = len(dist.components)
    if allocation == "even":
        counts = shot_allocation(n_gen, k)
    elif allocation == "uniform":
        picks = rng.integers(0, k, size=n_gen)
        counts = [int(np.sum(picks == i)) for i in range(k)]
    else:
        raise ValueError(f"allocation must be 'even' or 'uniform', got {allocation!r}")
    chunks = [sample_gaussian(dist.components[i], counts[i], rng) for i in range(k)]
    dim = dist.components[0].dim
    return np.concatenate(chunks) if chunks else np.empty((0, dim))


def generate_set(
    dists: list[ClassDistribution],
    n_gen: int,
    rng: np.random.Generator,
    allocation: str = "even",
) -> GeneratedSet:
    """Generate n_gen vectors for every episode class, class-major order."""
    return GeneratedSet(
        per_class=tuple(generate_for_class(d, n_gen, rng, allocation) for d in dists)
    )


def augment_support(
    support_embedded: np.ndarray,
    support_y: np.ndarray,
    generated: GeneratedSet,
) -> tuple[np.ndarray, np.ndarray]:
    """Combine originals and generated vectors into the final support set.

    Per class: the K original rows (episode order) followed by that class's
    generated rows.  A generated set that does not cover every episode
    class violates its invariant and is rejected.
    """
    support_embedded = np.asarray(support_embedded, dtype=np.float64)
    support_y = np.asarray(support_y)
    n_way = int(support_y.max()) + 1 if support_y.size else 0
    if generated.n_way != n_way:
        raise ValueError(
            f"generated set covers {generated.n_way} classes, episode has {n_way}"
        )
    xs, ys = [], []
    for c in range(n_way):
        originals = support_embedded[support_y == c]
        gen = generated.per_class[c]
        if not np.all(np.isfinite(gen)):
            raise NumericError(f"generated vectors for class {c} contain non-finite values")
        xs.append(originals)
        if gen.shape[0]:
            xs.append(gen)
        ys.append(np.full(originals.shape[0] + gen.shape[0], c, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys)
