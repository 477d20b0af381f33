"""Analytic-vs-central-difference gradient comparison on a tiny random model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from . import trainer
from .embedders import Embedded
from .model import ModelConfig, ModelParams, cross_entropy, forward_with_masks, init_params
from .tensor_core import finite_diff_grad, make_rng


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


@dataclass
class GradCheckResult:
    errors: Dict[str, float]
    tolerance: float
    eps: float

    @property
    def failed(self) -> List[str]:
        return [name for name, err in self.errors.items() if not err < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failed


def random_problem(config: ModelConfig, n_samples: int, seed: int, dropout: bool = True):
    """Random parameters (nonzero biases), embeddings, labels and fixed dropout masks."""
    rng = make_rng(seed, 4)
    params = init_params(config, seed)
    params = params.map(lambda m: m + 0.1 * rng.standard_normal(m.shape) if m.shape[0] == 1 else m)
    embs = [Embedded(rng.standard_normal(config.d_t), rng.standard_normal(config.d_i),
                     rng.standard_normal(config.d_g)) for _ in range(n_samples)]
    labels = [int(v) for v in rng.integers(0, config.num_classes, n_samples)]
    rate = config.dropout_rate
    masks = []
    for _ in range(n_samples):
        if dropout and rate > 0:
            masks.append({"x": (rng.random((3, config.d)) >= rate) / (1 - rate),
                          "h": (rng.random((1, config.d)) >= rate) / (1 - rate)})
        else:
            masks.append(None)
    return params, embs, labels, masks


def gradient_check(config: Optional[ModelConfig] = None, n_samples: int = 5, eps: float = 1e-5,
                   tolerance: Optional[float] = None, seed: int = 0,
                   backward_fn: Optional[Callable] = None) -> GradCheckResult:
    """Compare the batch-mean gradient from ``backward_fn`` with central differences.

    The tolerance defaults to ``max(1e-4, eps)`` so coarser steps get a
    proportionally looser bound.
    """
    if config is None:
        config = ModelConfig(num_classes=3, d=8, d_t=6, d_i=6, d_g=4)
    if tolerance is None:
        tolerance = max(1e-4, eps)
    backward_fn = backward_fn or trainer.backward
    params, embs, labels, masks = random_problem(config, n_samples, seed)

    analytic = params.zeros_like()
    for emb, label, mask in zip(embs, labels, masks):
        g = backward_fn(forward_with_masks(emb, params, config, mask), params, label)
        for name, gm in g.items():
            getattr(analytic, name).__iadd__(gm / n_samples)

    def mean_loss(p: ModelParams) -> float:
        return sum(cross_entropy(forward_with_masks(e, p, config, m).y_hat, y)
                   for e, y, m in zip(embs, labels, masks)) / n_samples

    errors = {}
    for name, value in params.items():
        def loss_at(m, name=name):
            trial = params.copy()
            setattr(trial, name, m)
            return mean_loss(trial)

        numeric = finite_diff_grad(loss_at, value, eps)
        errors[name] = max_relative_error(getattr(analytic, name), numeric)
    return GradCheckResult(errors, tolerance, eps)
