"""Evaluation pipeline, synthetic oracle datasets, and statistical reporting.

Episodes are embarrassingly parallel: each one is fully determined by the
master seed and its global index, so reports are identical for any worker
count.  Queries are classified independently but the estimator sees the
episode's whole unlabeled query pool at once (transductive batch).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .embedstore import EmbeddingRecord, EmbeddingStore, make_store
from .episodic import ClassSplit, Episode, derive_rng, sample_episode
from .estimator import STRATEGIES, estimate_class
from .protocore import ProjectionHead, classify, compute_prototypes, project
from .sampler import augment_support, generate_set

# Query-count / neighbor-count pairings used in the two experimental
# regimes: long text (news or reviews) vs short intent utterances.
PRESETS = {
    "news": {"n_query": 25, "r_neighbors": 10},
    "intent": {"n_query": 5, "r_neighbors": 4},
}


@dataclass(frozen=True)
class EvalConfig:
    n_way: int = 5
    k_shot: int = 1
    n_query: int = 25
    r_neighbors: int = 10
    n_gen: int = 20
    strategy: str | None = None  # None = plain prototypical baseline
    episodes: int = 1000
    runs: int = 1
    seed: int = 0
    allocation: str = "even"
    l2_normalize: bool = False

    def __post_init__(self):
        if self.episodes < 1 or self.runs < 1:
            raise ValueError("episodes and runs must both be >= 1")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be None or one of {STRATEGIES}")
        if self.strategy is not None and self.r_neighbors < 1:
            raise ValueError("way/shot strategies need r_neighbors >= 1")

    @classmethod
    def preset(cls, name: str, **overrides) -> "EvalConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}, choose from {sorted(PRESETS)}")
        merged = {**PRESETS[name], **overrides}
        return cls(**merged)


@dataclass(frozen=True)
class EvalReport:
    per_episode: tuple[tuple[int, int, float], ...]  # (run, episode, accuracy)
    run_means: tuple[float, ...]
    mean: float
    std: float
    ci95: float


def _l2_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(norms > 0, x / np.where(norms > 0, norms, 1.0), x)


def predict_episode(
    head: ProjectionHead,
    episode: Episode,
    strategy: str | None,
    r: int,
    n_gen: int,
    rng: np.random.Generator | None = None,
    allocation: str = "even",
    l2_normalize: bool = False,
) -> tuple[np.ndarray, float]:
    """Predicted class index per query plus episode accuracy.

    Strategy ``None``: prototypes from the original support only.  Way or
    shot: estimate each class from the unlabeled query pool, generate
    ``n_gen`` samples per class, augment the support, then classify.
    Ties resolve to the lowest class index.
    """
    zs = project(head, episode.support_x)
    zq = project(head, episode.query_x)
    if l2_normalize:
        zs, zq = _l2_rows(zs), _l2_rows(zq)

    if strategy is None or n_gen == 0:
        # No augmentation: plain prototypical classification.
        aug_x, aug_y = zs, episode.support_y
    else:
        if r < 1:
            raise ValueError("way/shot prediction needs r >= 1")
        if rng is None:
            raise ValueError("way/shot prediction with n_gen > 0 needs an rng stream")
        dists = [
            estimate_class(strategy, zs[episode.support_y == c], zq, r)
            for c in range(episode.n_way)
        ]
        generated = generate_set(dists, n_gen, rng, allocation)
        aug_x, aug_y = augment_support(zs, episode.support_y, generated)

    protos = compute_prototypes(aug_x, aug_y, episode.n_way)
    probs = classify(zq, protos)
    preds = np.argmax(probs, axis=1)
    accuracy = float(np.mean(preds == episode.query_y))
    return preds, accuracy


def _episode_accuracy(
    store: EmbeddingStore,
    labels: frozenset[str],
    head: ProjectionHead,
    config: EvalConfig,
    index: int,
) -> float:
    episode = sample_episode(
        store, labels, config.n_way, config.k_shot, config.n_query,
        derive_rng(config.seed, "eval-episode", index),
    )
    _, accuracy = predict_episode(
        head, episode, config.strategy, config.r_neighbors, config.n_gen,
        derive_rng(config.seed, "eval-gen", index),
        allocation=config.allocation, l2_normalize=config.l2_normalize,
    )
    return accuracy


_WORKER_STATE: dict = {}


def _worker_init(store, labels, head, config):
    _WORKER_STATE["args"] = (store, labels, head, config)


def _worker_eval(index: int) -> float:
    store, labels, head, config = _WORKER_STATE["args"]
    return _episode_accuracy(store, labels, head, config, index)


def evaluate(
    store: EmbeddingStore,
    split: ClassSplit,
    head: ProjectionHead,
    config: EvalConfig,
    n_jobs: int = 1,
) -> EvalReport:
    """runs x episodes evaluation over the unseen classes.

    Deterministic for a fixed seed; aggregation is a plain sum over
    per-episode results keyed by global index, so scheduling and worker
    count cannot change the report.
    """
    labels = split.unseen
    total = config.runs * config.episodes
    indices = list(range(total))
    if n_jobs <= 1:
        accs = [_episode_accuracy(store, labels, head, config, i) for i in indices]
    else:
        with ProcessPoolExecutor(
            max_workers=n_jobs,
            initializer=_worker_init,
            initargs=(store, labels, head, config),
        ) as pool:
            accs = list(pool.map(_worker_eval, indices, chunksize=64))

    acc_matrix = np.asarray(accs).reshape(config.runs, config.episodes)
    run_means = acc_matrix.mean(axis=1)
    mean = float(run_means.mean())
    if config.runs > 1:
        std = float(run_means.std(ddof=1))
        ci95 = float(stats.t.ppf(0.975, config.runs - 1) * std / math.sqrt(config.runs))
    else:
        std = 0.0
        ci95 = 0.0
    per_episode = tuple(
        (run, ep, float(acc_matrix[run, ep]))
        for run in range(config.runs)
        for ep in range(config.episodes)
    )
    return EvalReport(per_episode, tuple(float(m) for m in run_means), mean, std, ci95)


def write_report(report: EvalReport, path) -> None:
    """CSV: run,episode,accuracy rows, then a summary block."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "episode", "accuracy"])
        for run, ep, acc in report.per_episode:
            writer.writerow([run, ep, repr(acc)])
        fh.write("# summary\n")
        writer.writerow(["mean", "std", "ci95"])
        writer.writerow([repr(report.mean), repr(report.std), repr(report.ci95)])


def read_report_summary(path) -> dict[str, float]:
    """Parse the summary block back out of a report CSV."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("# summary"):
            values = lines[i + 2].split(",")
            return {"mean": float(values[0]), "std": float(values[1]), "ci95": float(values[2])}
    raise ValueError(f"no summary block in {path}")


@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale synthetic dataset: Gaussian classes with known parameters."""

    n_classes: int = 20
    dim: int = 16
    per_class_count: int = 40
    class_mean_scale: float = 1.0
    cov_kind: str = "isotropic"  # or "random" (full-rank SPD per class)
    cov_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.cov_kind not in ("isotropic", "random"):
            raise ValueError(f"cov_kind must be 'isotropic' or 'random', got {self.cov_kind!r}")


def make_synthetic(spec: SynthSpec) -> tuple[EmbeddingStore, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Build a synthetic store plus the ground-truth (mean, cov) per class.

    Class means are drawn on a sphere of radius ``class_mean_scale``;
    samples come from a per-class Gaussian around each mean.
    """
    rng = derive_rng(spec.seed, "synth")
    records: list[EmbeddingRecord] = []
    truth: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    eye = np.eye(spec.dim)
    for c in range(spec.n_classes):
        label = f"c{c:03d}"
        direction = rng.standard_normal(spec.dim)
        norm = np.linalg.norm(direction)
        mean = (spec.class_mean_scale / norm) * direction if spec.class_mean_scale > 0 else np.zeros(spec.dim)
        if spec.cov_kind == "isotropic":
            cov = (spec.cov_scale**2) * eye
        else:
            basis = rng.standard_normal((spec.dim, spec.dim))
            cov = (spec.cov_scale**2) * (basis @ basis.T) / spec.dim
        if spec.cov_scale > 0:
            chol = np.linalg.cholesky(cov)
            points = mean + rng.standard_normal((spec.per_class_count, spec.dim)) @ chol.T
        else:
            cov = np.zeros((spec.dim, spec.dim))
            points = np.tile(mean, (spec.per_class_count, 1))
        truth[label] = (mean, cov)
        for i in range(spec.per_class_count):
            records.append(
                EmbeddingRecord(id=f"{label}-{i:04d}", label=label, vector=points[i])
            )
    return make_store(records, spec.dim), truth


@dataclass(frozen=True)
class EstimatorErrorReport:
    support_mean_err: float
    calibrated_mean_err: float
    support_cov_err: float
    calibrated_cov_err: float
    episodes: int


def estimator_error(
    store: EmbeddingStore,
    truth: dict[str, tuple[np.ndarray, np.ndarray]],
    strategy: str,
    n_way: int,
    k_shot: int,
    n_query: int,
    r: int,
    episodes: int,
    seed: int = 0,
) -> EstimatorErrorReport:
    """Average distance of estimated class parameters from the ground truth.

    Compares the support-only mean against the query-calibrated mean (and
    likewise Frobenius covariance error).  r=0 means calibration is
    unavailable, so the calibrated estimate falls back to the support-only
    statistics and the two errors coincide.  When neighbors cross class
    boundaries calibration can worsen the error; both numbers are reported
    as measured.
    """
    labels = frozenset(store.labels)
    sums = np.zeros(4)
    count = 0
    for ep in range(episodes):
        episode = sample_episode(
            store, labels, n_way, k_shot, n_query, derive_rng(seed, "esterr-episode", ep)
        )
        for c, label in enumerate(episode.way_labels):
            true_mean, true_cov = truth[label]
            sup = episode.support_x[episode.support_y == c]
            mu_s = sup.mean(axis=0)
            if k_shot > 1:
                dev = sup - mu_s
                sigma_s = (dev.T @ dev) / (k_shot - 1)
            else:
                sigma_s = np.zeros_like(true_cov)
            if r >= 1:
                dist = estimate_class(strategy, sup, episode.query_x, r)
                mu_hat = dist.mean()
                cov_err = float(
                    np.mean([np.linalg.norm(g.cov - true_cov) for g in dist.components])
                )
            else:
                mu_hat = mu_s
                cov_err = float(np.linalg.norm(sigma_s - true_cov))
            sums += (
                np.linalg.norm(mu_s - true_mean),
                np.linalg.norm(mu_hat - true_mean),
                np.linalg.norm(sigma_s - true_cov),
                cov_err,
            )
            count += 1
    avg = sums / count
    return EstimatorErrorReport(
        support_mean_err=float(avg[0]),
        calibrated_mean_err=float(avg[1]),
        support_cov_err=float(avg[2]),
        calibrated_cov_err=float(avg[3]),
        episodes=episodes,
    )
