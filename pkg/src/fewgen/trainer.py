"""Projection-head training on the combined prototypical + generation loss.

Per episode: embed, estimate each class's distribution from the unlabeled
query pool, draw synthetic samples, then take one optimizer step on

    total = basic + lam * gen

where the basic term scores queries against prototypes of the augmented
support set and the generation term scores the synthetic samples against
prototypes of the original support only.

Gradients are exact for the stop-gradient semantics used here: generated
vectors are constants once sampled (neighbor selection is non-differentiable
and no reparameterized path is defined through estimation), so gradients
flow through query embeddings, through the original-support share of the
augmented prototypes, and through the original-support prototypes of the
generation term.  ``gradient_check`` validates every W and b entry against
central finite differences with the generated set held fixed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .embedstore import EmbeddingStore
from .episodic import ClassSplit, Episode, derive_rng, sample_episode
from .errors import NonFiniteLoss
from .estimator import STRATEGIES, estimate_class
from .protocore import PROB_FLOOR, ProjectionHead
from .sampler import GeneratedSet, augment_support, generate_set


@dataclass(frozen=True)
class TrainConfig:
    n_way: int = 5
    k_shot: int = 1
    n_query: int = 25
    r_neighbors: int = 10
    n_gen: int = 20
    lam: float = 0.1
    strategy: str | None = "way"
    learning_rate: float = 1e-5
    weight_decay: float = 0.0
    episodes: int = 100
    seed: int = 0
    d_out: int | None = None  # None: keep the store dimension (identity init)
    optimizer: str = "adamw"
    allocation: str = "even"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be None or one of {STRATEGIES}")
        if self.optimizer not in ("adamw", "sgd"):
            raise ValueError(f"optimizer must be 'adamw' or 'sgd', got {self.optimizer!r}")

    @property
    def augments(self) -> bool:
        """Whether this config produces any synthetic samples."""
        return self.strategy is not None and self.n_gen > 0 and self.r_neighbors > 0


@dataclass(frozen=True)
class TraceRow:
    episode: int
    l_basic: float
    l_gen: float
    l_total: float
    grad_norm: float


@dataclass
class LossBundle:
    l_basic: float
    l_gen: float
    l_total: float
    d_weight: np.ndarray
    d_bias: np.ndarray


def total_loss(l_basic: float, l_gen: float, lam: float) -> float:
    return l_basic + lam * l_gen


def generation_loss(generated: GeneratedSet, protos_original: np.ndarray) -> float:
    """Mean cross-entropy of generated samples against original-support
    prototypes; an empty generated set contributes zero by convention."""
    gen_x, gen_y = generated.stacked()
    if gen_x.shape[0] == 0:
        return 0.0
    _, _, loss = _softmax_ce(gen_x, gen_y, protos_original)
    return loss


def _softmax_ce(points: np.ndarray, labels: np.ndarray, protos: np.ndarray):
    """Stable softmax over negative squared distances plus mean CE.

    Returns (probs, delta, loss) with delta = probs - onehot(labels), the
    shared backprop seed for both loss terms.
    """
    diff = points[:, None, :] - protos[None, :, :]
    logits = -np.einsum("qnd,qnd->qn", diff, diff)
    logits -= logits.max(axis=1, keepdims=True)
    expo = np.exp(logits)
    probs = expo / expo.sum(axis=1, keepdims=True)
    picked = probs[np.arange(points.shape[0]), labels]
    loss = float(-np.log(np.clip(picked, PROB_FLOOR, None)).mean())
    delta = probs.copy()
    delta[np.arange(points.shape[0]), labels] -= 1.0
    return probs, delta, loss


def episode_losses(
    head: ProjectionHead,
    episode: Episode,
    generated: GeneratedSet | None,
    lam: float,
) -> LossBundle:
    """Losses and exact gradients for one episode with a fixed generated set.

    This is the function whose gradient the optimizer follows and that
    ``gradient_check`` differentiates numerically.
    """
    w, b = head.weight, head.bias
    xs, ys = episode.support_x, episode.support_y
    xq, yq = episode.query_x, episode.query_y
    n_way = episode.n_way
    zs = xs @ w.T + b
    zq = xq @ w.T + b
    if not (np.all(np.isfinite(zs)) and np.all(np.isfinite(zq))):
        raise NonFiniteLoss("projected embeddings contain NaN or infinity")
    nq = zq.shape[0]

    # Prototypes of the augmented support (originals plus generated rows).
    k_orig = np.array([int(np.sum(ys == c)) for c in range(n_way)])
    if generated is not None and generated.total() > 0:
        counts = k_orig + np.array([a.shape[0] for a in generated.per_class])
        protos_aug = np.empty((n_way, zs.shape[1]))
        for c in range(n_way):
            protos_aug[c] = (
                zs[ys == c].sum(axis=0) + generated.per_class[c].sum(axis=0)
            ) / counts[c]
    else:
        counts = k_orig
        protos_aug = np.stack([zs[ys == c].mean(axis=0) for c in range(n_way)])

    _, delta_q, l_basic = _softmax_ce(zq, yq, protos_aug)
    if not np.isfinite(l_basic):
        raise NonFiniteLoss(f"l_basic={l_basic}")
    d_zq = (2.0 / nq) * (delta_q @ protos_aug)
    d_protos = (2.0 / nq) * (
        delta_q.T @ zq - delta_q.sum(axis=0)[:, None] * protos_aug
    )
    d_zs = d_protos[ys] / counts[ys][:, None]

    l_gen = 0.0
    if generated is not None and generated.total() > 0:
        protos_orig = np.stack([zs[ys == c].mean(axis=0) for c in range(n_way)])
        gen_x, gen_y = generated.stacked()
        _, delta_g, l_gen = _softmax_ce(gen_x, gen_y, protos_orig)
        if lam != 0.0:
            m = gen_x.shape[0]
            d_protos_orig = (2.0 / m) * (
                delta_g.T @ gen_x - delta_g.sum(axis=0)[:, None] * protos_orig
            )
            d_zs = d_zs + lam * (d_protos_orig[ys] / k_orig[ys][:, None])

    l_total = total_loss(l_basic, l_gen, lam)
    if not np.isfinite(l_total):
        raise NonFiniteLoss(f"l_basic={l_basic}, l_gen={l_gen}, lam={lam}")

    d_weight = d_zq.T @ xq + d_zs.T @ xs
    d_bias = d_zq.sum(axis=0) + d_zs.sum(axis=0)
    return LossBundle(l_basic, l_gen, l_total, d_weight, d_bias)


class AdamW:
    """Decoupled-weight-decay adaptive-moment optimizer for (W, b)."""

    def __init__(self, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, head: ProjectionHead, d_weight: np.ndarray, d_bias: np.ndarray) -> None:
        self.t += 1
        for name, param, grad in (("w", head.weight, d_weight), ("b", head.bias, d_bias)):
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            param -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                                + self.weight_decay * param)


class SGD:
    """Plain gradient descent with the same decoupled weight decay."""

    def __init__(self, lr: float, weight_decay: float = 0.0):
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self, head: ProjectionHead, d_weight: np.ndarray, d_bias: np.ndarray) -> None:
        head.weight -= self.lr * (d_weight + self.weight_decay * head.weight)
        head.bias -= self.lr * (d_bias + self.weight_decay * head.bias)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adamw":
        return AdamW(config.learning_rate, config.weight_decay)
    return SGD(config.learning_rate, config.weight_decay)


def estimate_and_generate(
    head: ProjectionHead,
    episode: Episode,
    config: TrainConfig,
    rng: np.random.Generator,
) -> GeneratedSet | None:
    """Run estimation + sampling for every episode class, or None when the
    config does not augment.  Neighbors are selected in the current
    projected space; query labels are never consulted."""
    if not config.augments:
        return None
    zs = episode.support_x @ head.weight.T + head.bias
    zq = episode.query_x @ head.weight.T + head.bias
    dists = [
        estimate_class(config.strategy, zs[episode.support_y == c], zq, config.r_neighbors)
        for c in range(episode.n_way)
    ]
    return generate_set(dists, config.n_gen, rng, config.allocation)


def episode_step(
    head: ProjectionHead,
    episode: Episode,
    config: TrainConfig,
    rng: np.random.Generator,
    optimizer=None,
    episode_index: int = 0,
) -> tuple[ProjectionHead, TraceRow]:
    """One training step: estimate, generate, compute losses, update head."""
    if optimizer is None:
        optimizer = make_optimizer(config)
    generated = estimate_and_generate(head, episode, config, rng)
    bundle = episode_losses(head, episode, generated, config.lam)
    optimizer.step(head, bundle.d_weight, bundle.d_bias)
    grad_norm = float(
        np.sqrt(np.sum(bundle.d_weight**2) + np.sum(bundle.d_bias**2))
    )
    row = TraceRow(episode_index, bundle.l_basic, bundle.l_gen, bundle.l_total, grad_norm)
    return head, row


@dataclass(frozen=True)
class GradProbe:
    param: str  # "w" or "b"
    index: int  # flat index within the parameter
    analytic: float
    numeric: float
    rel_error: float


@dataclass(frozen=True)
class GradCheckReport:
    probes: tuple[GradProbe, ...]
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(
    head: ProjectionHead,
    episode: Episode,
    config: TrainConfig,
    probes: int,
    tolerance: float,
    rng: np.random.Generator,
    grad_fn=None,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    The generated set is sampled once with the supplied stream and held
    fixed across every loss evaluation, matching the stop-gradient
    semantics of training.  ``grad_fn(head) -> (dW, db)`` overrides the
    analytic gradient; tests use it as a corrupted-gradient negative
    control.
    """
    if probes < 1:
        raise ValueError(f"probes must be >= 1, got {probes}")
    generated = estimate_and_generate(head, episode, config, rng)

    if grad_fn is None:
        bundle = episode_losses(head, episode, generated, config.lam)
        d_weight, d_bias = bundle.d_weight, bundle.d_bias
    else:
        d_weight, d_bias = grad_fn(head)

    w_size = head.weight.size
    total = w_size + head.bias.size
    if probes >= total:
        flat_indices = np.arange(total)
    else:
        flat_indices = rng.choice(total, size=probes, replace=False)

    work = head.copy()

    def loss_at() -> float:
        return episode_losses(work, episode, generated, config.lam).l_total

    results = []
    for flat in flat_indices:
        flat = int(flat)
        if flat < w_size:
            name, arr, idx, ga = "w", work.weight, flat, float(d_weight.flat[flat])
        else:
            name, arr, idx, ga = "b", work.bias, flat - w_size, float(d_bias.flat[flat - w_size])
        theta = arr.flat[idx]
        h = 1e-5 * (1.0 + abs(theta))
        arr.flat[idx] = theta + h
        up = loss_at()
        arr.flat[idx] = theta - h
        down = loss_at()
        arr.flat[idx] = theta
        gn = (up - down) / (2.0 * h)
        rel = abs(ga - gn) / max(abs(ga), abs(gn), 1e-8)
        results.append(GradProbe(name, idx, ga, gn, rel))

    max_rel = max(p.rel_error for p in results)
    return GradCheckReport(tuple(results), max_rel, tolerance)


def train(
    store: EmbeddingStore, split: ClassSplit, config: TrainConfig
) -> tuple[ProjectionHead, list[TraceRow]]:
    """Optimize a head over episodes sampled from the seen classes.

    Strictly sequential: episode t+1 sees the weights produced by episode
    t.  Distributions are re-estimated and samples re-drawn every episode
    with fresh derived streams, since estimation depends on the current
    head.
    """
    d_in = store.dim
    d_out = config.d_out if config.d_out is not None else d_in
    if d_out == d_in:
        head = ProjectionHead.identity(d_in)
    else:
        head = ProjectionHead.orthonormal(d_in, d_out, derive_rng(config.seed, "head-init"))
    optimizer = make_optimizer(config)
    trace: list[TraceRow] = []
    for ep in range(config.episodes):
        episode = sample_episode(
            store,
            split.seen,
            config.n_way,
            config.k_shot,
            config.n_query,
            derive_rng(config.seed, "train-episode", ep),
        )
        head, row = episode_step(
            head,
            episode,
            config,
            derive_rng(config.seed, "train-gen", ep),
            optimizer,
            episode_index=ep,
        )
        trace.append(row)
    return head, trace


def write_trace(trace: list[TraceRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "l_basic", "l_gen", "l_total", "grad_norm"])
        for row in trace:
            writer.writerow([row.episode, repr(row.l_basic), repr(row.l_gen),
                             repr(row.l_total), repr(row.grad_norm)])


def baseline_config(config: TrainConfig) -> TrainConfig:
    """The same config with augmentation switched off (plain prototypical)."""
    return replace(config, strategy=None, n_gen=0, lam=0.0)
