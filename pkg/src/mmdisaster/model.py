"""Forward pass of the gated cross-modal attention classifier.

One sample is three tokens (text, image, geo). The text token queries all
three tokens, the attended vector is scaled by a learned sigmoid gate and a
linear softmax head produces class probabilities. Every intermediate is kept
in a ``ForwardTrace`` so ``trainer.backward`` can run exact backprop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .embedders import Embedded, EmbedderSet
from .errors import ConfigError, DataFormatError, ShapeError
from .tensor_core import Matrix, add, hadamard, make_rng, matmul, sigmoid_elem, softmax_rows, xavier_init

CHECKPOINT_VERSION = 1
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    d: int = 64
    d_t: int = 32
    d_i: int = 32
    d_g: int = 16
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        for name in ("d", "d_t", "d_i", "d_g"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    def check_embedders(self, emb: EmbedderSet) -> None:
        got = (emb.text.dim_t, emb.image.dim_i, emb.geo.dim_g)
        if got != (self.d_t, self.d_i, self.d_g):
            raise ConfigError(f"embedder dims {got} do not match model dims {(self.d_t, self.d_i, self.d_g)}")


@dataclass
class ModelParams:
    """All learned matrices. Gradients and Adam moments reuse this container."""

    proj_t: Matrix
    bias_t: Matrix
    proj_i: Matrix
    bias_i: Matrix
    proj_g: Matrix
    bias_g: Matrix
    w_q: Matrix
    w_k: Matrix
    w_v: Matrix
    w_a: Matrix
    b_a: Matrix
    w_c: Matrix
    b_c: Matrix

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def items(self) -> Iterator[Tuple[str, Matrix]]:
        for name in self.names():
            yield name, getattr(self, name)

    def map(self, fn) -> "ModelParams":
        return ModelParams(**{name: fn(m) for name, m in self.items()})

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def copy(self) -> "ModelParams":
        return self.map(np.array)

    @staticmethod
    def expected_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, int]]:
        d, C = cfg.d, cfg.num_classes
        return {
            "proj_t": (cfg.d_t, d), "bias_t": (1, d),
            "proj_i": (cfg.d_i, d), "bias_i": (1, d),
            "proj_g": (cfg.d_g, d), "bias_g": (1, d),
            "w_q": (d, d), "w_k": (d, d), "w_v": (d, d),
            "w_a": (d, d), "b_a": (1, d),
            "w_c": (d, C), "b_c": (1, C),
        }

    def check(self, cfg: ModelConfig) -> None:
        for name, shape in self.expected_shapes(cfg).items():
            m = getattr(self, name)
            if m.shape != shape:
                raise ShapeError(f"parameter {name} has shape {m.shape}, expected {shape}")
            if not np.all(np.isfinite(m)):
                raise ShapeError(f"parameter {name} has non-finite entries")


Gradients = ModelParams


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Xavier-uniform weights and zero biases, drawn in field order."""
    rng = make_rng(seed, 0)
    out = {}
    for name, (r, c) in ModelParams.expected_shapes(cfg).items():
        out[name] = np.zeros((r, c)) if r == 1 else xavier_init(r, c, rng)
    return ModelParams(**out)


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass.

    ``x`` and ``h`` are taken before dropout; ``x_in`` and ``h_in`` are the
    (possibly masked) values actually fed downstream. ``dropout_masks`` is
    empty in eval mode.
    """

    emb: Embedded
    x: Matrix
    x_in: Matrix
    q: Matrix
    k: Matrix
    v: Matrix
    scores: Matrix
    p: Matrix
    h: Matrix
    h_in: Matrix
    gate: Matrix
    y_adapt: Matrix
    logits: Matrix
    y_hat: Matrix
    dropout_masks: Dict[str, Matrix] = field(default_factory=dict)


def fuse(t_vec, i_vec, g_vec, params: ModelParams, config: ModelConfig) -> Matrix:
    """Project each modality to width d and stack them as a 3 x d token matrix."""
    rows = []
    for vec, dim, proj, bias, name in (
        (t_vec, config.d_t, params.proj_t, params.bias_t, "text"),
        (i_vec, config.d_i, params.proj_i, params.bias_i, "image"),
        (g_vec, config.d_g, params.proj_g, params.bias_g, "geo"),
    ):
        row = np.asarray(vec, dtype=np.float64).reshape(1, -1)
        if row.shape[1] != dim:
            raise ShapeError(f"{name} vector has length {row.shape[1]}, expected {dim}")
        rows.append(add(matmul(row, proj), bias))
    return np.vstack(rows)


def scaled_dot_attention(q: Matrix, k: Matrix, v: Matrix, d: int) -> Tuple[Matrix, Matrix, Matrix]:
    """Returns (scores, p, h): raw scaled scores, their row softmax, and p @ v."""
    if q.shape[1] != d or k.shape[1] != d or v.shape[1] != d:
        raise ShapeError(f"q, k, v must have {d} columns, got {q.shape}, {k.shape}, {v.shape}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"k and v need equal row counts, got {k.shape[0]} and {v.shape[0]}")
    scores = matmul(q, k.T) / math.sqrt(d)
    p = softmax_rows(scores)
    return scores, p, matmul(p, v)


def cross_modal_attention(x: Matrix, params: ModelParams, n_query: int = 1):
    """Text-row queries attend over every token of ``x``.

    Returns (q, k, v, scores, p, h); ``p`` is n_query x rows(x), ``h`` is
    n_query x d.
    """
    if x.ndim != 2 or x.shape[0] < n_query or x.shape[1] != params.w_q.shape[0]:
        raise ShapeError(f"fused input has shape {x.shape}, incompatible with d={params.w_q.shape[0]}")
    d = x.shape[1]
    q = matmul(x[:n_query], params.w_q)
    k = matmul(x, params.w_k)
    v = matmul(x, params.w_v)
    scores, p, h = scaled_dot_attention(q, k, v, d)
    return q, k, v, scores, p, h


def adaptive_gate(h: Matrix, params: ModelParams) -> Tuple[Matrix, Matrix]:
    """gate = sigmoid(h W_a + b_a); output = gate * h elementwise."""
    if h.ndim != 2 or h.shape[1] != params.w_a.shape[0]:
        raise ShapeError(f"gate input has shape {h.shape}, expected width {params.w_a.shape[0]}")
    gate = sigmoid_elem(add(matmul(h, params.w_a), params.b_a))
    return gate, hadamard(gate, h)


def classify(y_adapt: Matrix, params: ModelParams) -> Tuple[Matrix, Matrix]:
    if y_adapt.ndim != 2 or y_adapt.shape[1] != params.w_c.shape[0]:
        raise ShapeError(f"classifier input has shape {y_adapt.shape}, expected width {params.w_c.shape[0]}")
    logits = add(matmul(y_adapt, params.w_c), params.b_c)
    return logits, softmax_rows(logits)


def cross_entropy(y_hat, label: int) -> float:
    y = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if not 0 <= label < y.size:
        raise ConfigError(f"label {label} outside [0, {y.size})")
    return float(-math.log(y[label] + LOG_FLOOR))


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> Matrix:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward_with_masks(emb: Embedded, params: ModelParams, config: ModelConfig,
                       masks: Optional[Dict[str, Matrix]] = None) -> ForwardTrace:
    """Forward pass with explicit dropout masks (``None`` means eval mode)."""
    masks = masks or {}
    x = fuse(emb.text, emb.image, emb.geo, params, config)
    x_in = x * masks["x"] if "x" in masks else x
    q, k, v, scores, p, h = cross_modal_attention(x_in, params)
    h_in = h * masks["h"] if "h" in masks else h
    gate, y_adapt = adaptive_gate(h_in, params)
    logits, y_hat = classify(y_adapt, params)
    return ForwardTrace(emb, x, x_in, q, k, v, scores, p, h, h_in, gate, y_adapt, logits, y_hat, dict(masks))


def forward(emb: Embedded, params: ModelParams, config: ModelConfig, mode: str = "eval",
            rng: Optional[np.random.Generator] = None) -> ForwardTrace:
    """Run the model on one embedded sample.

    In ``train`` mode with a positive dropout rate, inverted-dropout masks
    are drawn from ``rng`` for the fused tokens and the attention output.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    masks = None
    if mode == "train" and config.dropout_rate > 0:
        if rng is None:
            raise ConfigError("train mode with dropout needs an rng")
        masks = {
            "x": _dropout_mask((3, config.d), config.dropout_rate, rng),
            "h": _dropout_mask((1, config.d), config.dropout_rate, rng),
        }
    return forward_with_masks(emb, params, config, masks)


def predict_proba(embs, params: ModelParams, config: ModelConfig) -> np.ndarray:
    """Eval-mode class probabilities, one row per embedded sample."""
    return np.vstack([forward(e, params, config).y_hat for e in embs]) if len(embs) else np.zeros((0, config.num_classes))


# -- checkpoint -------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, config: ModelConfig, embedders: EmbedderSet,
                    class_names=None) -> None:
    """Write a JSON checkpoint. Floats use shortest round-trip repr, so reads are bit-exact."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": {
            "d": config.d, "d_t": config.d_t, "d_i": config.d_i, "d_g": config.d_g,
            "num_classes": config.num_classes, "dropout_rate": config.dropout_rate,
        },
        "embedders": embedders.to_dict(),
        "class_names": list(class_names) if class_names is not None else None,
        "params": {
            name: {"shape": list(m.shape), "data": [float(v) for v in m.reshape(-1)]}
            for name, m in params.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Returns (params, config, embedders, class_names)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    try:
        config = ModelConfig(**doc["config"])
        embedders = EmbedderSet.from_dict(doc["embedders"])
        mats = {}
        for name in ModelParams.names():
            entry = doc["params"][name]
            mats[name] = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed checkpoint {path}: {exc}") from exc
    params = ModelParams(**mats)
    params.check(config)
    config.check_embedders(embedders)
    return params, config, embedders, doc.get("class_names")
