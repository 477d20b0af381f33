"""Backpropagation, Adam with decoupled weight decay, and the epoch loop."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .model import (LOG_FLOOR, ForwardTrace, Gradients, ModelConfig, ModelParams, cross_entropy,
                    forward, init_params)
from .tensor_core import make_rng


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.weight_decay < 1.0:
            raise ConfigError(f"weight_decay must lie in [0, 1), got {self.weight_decay}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError(f"adam_eps must be positive, got {self.adam_eps}")


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    t: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def backward(trace: ForwardTrace, params: ModelParams, label: int) -> Gradients:
    """Exact gradient of the per-sample cross-entropy w.r.t. every parameter.

    ``trace`` must come from a forward pass with the same ``params``; its
    dropout masks are reused so train-mode traces are differentiated too.
    """
    y_hat = trace.y_hat
    C = y_hat.shape[1]
    if not 0 <= label < C:
        raise ConfigError(f"label {label} outside [0, {C})")
    if trace.x.shape[1] != params.w_q.shape[0] or params.w_c.shape[1] != C:
        raise ShapeError("trace does not match parameter shapes")
    d = trace.x.shape[1]
    n_q = trace.q.shape[0]
    masks = trace.dropout_masks

    # loss = -log(y_l + floor); the ratio term keeps the floor exact
    y_l = y_hat[0, label]
    onehot = np.zeros_like(y_hat)
    onehot[0, label] = 1.0
    d_logits = (y_l / (y_l + LOG_FLOOR)) * (y_hat - onehot)

    g_w_c = trace.y_adapt.T @ d_logits
    g_b_c = d_logits.copy()
    d_y = d_logits @ params.w_c.T

    # y = gate * h_in, gate = sigmoid(h_in W_a + b_a)
    gate, h_in = trace.gate, trace.h_in
    d_z = d_y * h_in * gate * (1.0 - gate)
    g_w_a = h_in.T @ d_z
    g_b_a = d_z.sum(axis=0, keepdims=True)
    d_h_in = d_y * gate + d_z @ params.w_a.T
    d_h = d_h_in * masks["h"] if "h" in masks else d_h_in

    # h = p v, p = softmax(q k^T / sqrt(d))
    p, k, v, q = trace.p, trace.k, trace.v, trace.q
    d_p = d_h @ v.T
    d_v = p.T @ d_h
    d_s = p * (d_p - (d_p * p).sum(axis=1, keepdims=True))
    inv_sqrt_d = 1.0 / math.sqrt(d)
    d_q = d_s @ k * inv_sqrt_d
    d_k = d_s.T @ q * inv_sqrt_d

    x_in = trace.x_in
    g_w_q = x_in[:n_q].T @ d_q
    g_w_k = x_in.T @ d_k
    g_w_v = x_in.T @ d_v
    d_x_in = d_k @ params.w_k.T + d_v @ params.w_v.T
    d_x_in[:n_q] += d_q @ params.w_q.T
    d_x = d_x_in * masks["x"] if "x" in masks else d_x_in

    emb = trace.emb
    grads = {}
    for row, (vec, proj, bias) in enumerate(((emb.text, "proj_t", "bias_t"),
                                             (emb.image, "proj_i", "bias_i"),
                                             (emb.geo, "proj_g", "bias_g"))):
        grads[proj] = np.outer(vec, d_x[row])
        grads[bias] = d_x[row:row + 1].copy()
    return Gradients(w_q=g_w_q, w_k=g_w_k, w_v=g_w_v, w_a=g_w_a, b_a=g_b_a, w_c=g_w_c, b_c=g_b_c,
                     **grads)


def batch_loss_and_grad(embs, labels, params: ModelParams, config: ModelConfig, mode: str = "eval",
                        rng: Optional[np.random.Generator] = None,
                        backward_fn: Callable = backward):
    """Mean loss and mean gradient over a batch, accumulated in input order."""
    total = params.zeros_like()
    loss = 0.0
    correct = 0
    for emb, label in zip(embs, labels):
        trace = forward(emb, params, config, mode, rng)
        loss += cross_entropy(trace.y_hat, label)
        correct += int(np.argmax(trace.y_hat[0]) == label)
        g = backward_fn(trace, params, label)
        for name, gm in g.items():
            getattr(total, name).__iadd__(gm)
    n = len(labels)
    return loss / n, total.map(lambda m: m / n), correct


def adam_step(params: ModelParams, grads: Gradients, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update with decoupled weight decay.

    Decay is applied first (p <- p - lr * wd * p), then the Adam delta.
    Returns new (params, state); inputs are left untouched.
    """
    t = state.t + 1
    b1, b2, lr = cfg.beta1, cfg.beta2, cfg.learning_rate
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = getattr(grads, name)
        m = b1 * getattr(state.m, name) + (1.0 - b1) * g
        v = b2 * getattr(state.v, name) + (1.0 - b2) * g * g
        decayed = p * (1.0 - lr * cfg.weight_decay)
        new_p[name] = decayed - lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        new_m[name], new_v[name] = m, v
    return ModelParams(**new_p), AdamState(ModelParams(**new_m), ModelParams(**new_v), t)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    train_accuracy: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def train(embs: Sequence, labels: Sequence[int], model_cfg: ModelConfig, train_cfg: TrainConfig,
          params: Optional[ModelParams] = None, on_epoch: Optional[Callable[[EpochRecord], None]] = None):
    """Mini-batch training; returns (params, history).

    Each epoch shuffles with a generator seeded by (seed, epoch); the same
    generator then draws every dropout mask of that epoch. ``mean_loss`` is
    the average train-mode loss over the epoch and ``train_accuracy`` comes
    from an eval-mode pass over the whole set after the epoch.
    """
    n = len(labels)
    if n == 0:
        raise ConfigError("cannot train on an empty dataset")
    if len(embs) != n:
        raise ShapeError(f"{len(embs)} embeddings but {n} labels")
    for y in labels:
        if not 0 <= y < model_cfg.num_classes:
            raise ConfigError(f"label {y} outside [0, {model_cfg.num_classes})")
    if params is None:
        params = init_params(model_cfg, train_cfg.seed)
    state = AdamState.zeros(params)
    history: List[EpochRecord] = []
    for epoch in range(1, train_cfg.epochs + 1):
        rng = make_rng(train_cfg.seed, 1, epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            loss, grads, _ = batch_loss_and_grad([embs[i] for i in idx], [labels[i] for i in idx],
                                                 params, model_cfg, "train", rng)
            loss_sum += loss * len(idx)
            params, state = adam_step(params, grads, state, train_cfg)
        correct = sum(int(np.argmax(forward(e, params, model_cfg).y_hat[0]) == y)
                      for e, y in zip(embs, labels))
        rec = EpochRecord(epoch, loss_sum / n, correct / n)
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return params, history
