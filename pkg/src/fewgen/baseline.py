"""Self-contained plain prototypical-network reference.

Deliberately independent of the estimator/sampler/trainer modules: it
imports nothing from this package and re-derives the forward pass, the
cross-entropy gradient, and the optimizer updates from scratch.  The test
suite holds the main pipeline (strategy ``None`` evaluation; the lam=0,
n_gen=0 trainer) to bitwise equality against this module.
"""

from __future__ import annotations

import numpy as np


def embed(weight: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    return x @ weight.T + bias


def prototypes(embedded: np.ndarray, labels: np.ndarray, n_way: int) -> np.ndarray:
    return np.stack([embedded[labels == c].mean(axis=0) for c in range(n_way)])


def neg_sq_distances(queries: np.ndarray, protos: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - protos[None, :, :]
    return -np.einsum("qnd,qnd->qn", diff, diff)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    return expo / expo.sum(axis=1, keepdims=True)


def predict(
    weight: np.ndarray,
    bias: np.ndarray,
    support_x: np.ndarray,
    support_y: np.ndarray,
    query_x: np.ndarray,
    n_way: int,
) -> np.ndarray:
    """Argmax class per query; ties resolve to the lowest class index."""
    zs = embed(weight, bias, support_x)
    zq = embed(weight, bias, query_x)
    logits = neg_sq_distances(zq, prototypes(zs, support_y, n_way))
    return np.argmax(logits, axis=1)


def loss_and_grads(
    weight: np.ndarray,
    bias: np.ndarray,
    support_x: np.ndarray,
    support_y: np.ndarray,
    query_x: np.ndarray,
    query_y: np.ndarray,
    n_way: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean query cross-entropy and its exact gradient wrt (W, b).

    Backprop: with delta = softmax - onehot, the query embedding gets
    2/nq * delta @ P (the delta rows sum to zero, cancelling the query
    term), each prototype gets 2/nq * (delta_c . Z_q - sum(delta_c) P_c),
    and each support row inherits its class prototype's gradient / K_c.
    """
    zs = embed(weight, bias, support_x)
    zq = embed(weight, bias, query_x)
    protos = prototypes(zs, support_y, n_way)
    probs = softmax_rows(neg_sq_distances(zq, protos))
    nq = query_x.shape[0]
    picked = probs[np.arange(nq), query_y]
    loss = float(-np.log(np.clip(picked, 1e-300, None)).mean())

    delta = probs.copy()
    delta[np.arange(nq), query_y] -= 1.0
    d_zq = (2.0 / nq) * (delta @ protos)
    d_protos = (2.0 / nq) * (delta.T @ zq - delta.sum(axis=0)[:, None] * protos)
    class_sizes = np.array([int(np.sum(support_y == c)) for c in range(n_way)])
    d_zs = d_protos[support_y] / class_sizes[support_y][:, None]

    d_weight = d_zq.T @ query_x + d_zs.T @ support_x
    d_bias = d_zq.sum(axis=0) + d_zs.sum(axis=0)
    return loss, d_weight, d_bias


class PlainAdamW:
    """AdamW with decoupled weight decay, re-implemented for the reference."""

    def __init__(self, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.state: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, param in params.items():
            grad = grads[name]
            if name not in self.state:
                self.state[name] = (np.zeros_like(param), np.zeros_like(param))
            m, v = self.state[name]
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.state[name] = (m, v)
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            param -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                                + self.weight_decay * param)


class PlainSGD:
    def __init__(self, lr: float, weight_decay: float = 0.0):
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, param in params.items():
            param -= self.lr * (grads[name] + self.weight_decay * param)


def train_step(
    weight: np.ndarray,
    bias: np.ndarray,
    optimizer,
    support_x: np.ndarray,
    support_y: np.ndarray,
    query_x: np.ndarray,
    query_y: np.ndarray,
    n_way: int,
) -> float:
    """One in-place optimizer step on the plain prototypical loss."""
    loss, d_weight, d_bias = loss_and_grads(
        weight, bias, support_x, support_y, query_x, query_y, n_way
    )
    optimizer.step({"w": weight, "b": bias}, {"w": d_weight, "b": d_bias})
    return loss
