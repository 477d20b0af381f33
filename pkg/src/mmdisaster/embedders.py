"""Deterministic per-modality embedders.

Text goes through a signed hashing kernel, image features are passed
through and L2-normalized, coordinates get a sinusoidal encoding. A missing
modality always embeds to the zero vector. The model consumes only the
``Embedded`` triple, so any other encoder that produces vectors of the
configured widths can replace these defaults.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError

MODALITIES = ("text", "image", "geo")


@dataclass(frozen=True)
class TextEmbedConfig:
    dim_t: int = 32
    hash_seed: int = 0

    def __post_init__(self):
        if self.dim_t < 1:
            raise ConfigError(f"dim_t must be >= 1, got {self.dim_t}")
        if not 0 <= self.hash_seed < 2**64:
            raise ConfigError(f"hash_seed must fit in 64 unsigned bits, got {self.hash_seed}")


@dataclass(frozen=True)
class ImageEmbedConfig:
    dim_i: int = 32

    def __post_init__(self):
        if self.dim_i < 1:
            raise ConfigError(f"dim_i must be >= 1, got {self.dim_i}")


@dataclass(frozen=True)
class GeoEmbedConfig:
    dim_g: int = 16
    freq_base: float = 10000.0

    def __post_init__(self):
        if self.dim_g < 2 or self.dim_g % 2:
            raise ConfigError(f"dim_g must be a positive even count, got {self.dim_g}")
        if not self.freq_base > 1:
            raise ConfigError(f"freq_base must exceed 1, got {self.freq_base}")


def _token_hash(token: str, seed: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little"))
    return int.from_bytes(digest.digest(), "little")


def embed_text(text: str, cfg: TextEmbedConfig) -> np.ndarray:
    """Signed feature hashing of lowercase whitespace tokens, L2-normalized."""
    vec = np.zeros(cfg.dim_t)
    for token in text.lower().split():
        h = _token_hash(token, cfg.hash_seed)
        # low bits pick the bucket, the top bit picks the sign
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[h % cfg.dim_t] += sign
    norm = math.sqrt(float(vec @ vec))
    return vec / norm if norm > 0 else vec


def embed_image(features: Optional[Sequence[float]], cfg: ImageEmbedConfig) -> np.ndarray:
    if features is None:
        return np.zeros(cfg.dim_i)
    vec = np.asarray(features, dtype=np.float64).reshape(-1)
    if vec.size != cfg.dim_i:
        raise ShapeError(f"image features have length {vec.size}, expected dim_i={cfg.dim_i}")
    norm = math.sqrt(float(vec @ vec))
    return vec / norm if norm > 0 else vec.copy()


def embed_geo(lat: Optional[float], lon: Optional[float], cfg: GeoEmbedConfig) -> np.ndarray:
    """Sinusoidal encoding: first half of the vector encodes latitude, second half longitude.

    Within each half, entries come in (sin, cos) pairs at angular frequency
    ``freq_base ** (-2k / dim_g)`` applied to the coordinate in radians.
    """
    if lat is None and lon is None:
        return np.zeros(cfg.dim_g)
    if lat is None or lon is None:
        raise ConfigError("latitude and longitude must both be given or both be absent")
    if not -90.0 <= lat <= 90.0:
        raise ConfigError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ConfigError(f"longitude {lon} outside [-180, 180]")
    half = cfg.dim_g // 2
    n_pairs = (half + 1) // 2
    freqs = cfg.freq_base ** (-2.0 * np.arange(n_pairs) / cfg.dim_g)
    out = np.empty(cfg.dim_g)
    for offset, coord in ((0, lat), (half, lon)):
        angles = math.radians(coord) * freqs
        pairs = np.empty(2 * n_pairs)
        pairs[0::2] = np.sin(angles)
        pairs[1::2] = np.cos(angles)
        out[offset:offset + half] = pairs[:half]
    return out


class Embedded(NamedTuple):
    """Per-sample modality vectors fed to the model."""

    text: np.ndarray
    image: np.ndarray
    geo: np.ndarray

    def ablate(self, modalities) -> "Embedded":
        """Copy with the named modalities replaced by zero vectors."""
        unknown = set(modalities) - set(MODALITIES)
        if unknown:
            raise ConfigError(f"unknown modalities {sorted(unknown)}; choose from {MODALITIES}")
        return Embedded(*(np.zeros_like(v) if name in modalities else v
                          for name, v in zip(MODALITIES, self)))


@dataclass(frozen=True)
class EmbedderSet:
    """The three default embedders bundled with their configs."""

    text: TextEmbedConfig = field(default_factory=TextEmbedConfig)
    image: ImageEmbedConfig = field(default_factory=ImageEmbedConfig)
    geo: GeoEmbedConfig = field(default_factory=GeoEmbedConfig)

    def embed(self, sample) -> Embedded:
        return Embedded(
            embed_text(sample.text, self.text),
            embed_image(sample.image_features, self.image),
            embed_geo(sample.lat, sample.lon, self.geo),
        )

    def to_dict(self) -> dict:
        return {
            "dim_t": self.text.dim_t,
            "hash_seed": self.text.hash_seed,
            "dim_i": self.image.dim_i,
            "dim_g": self.geo.dim_g,
            "freq_base": self.geo.freq_base,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedderSet":
        return cls(
            TextEmbedConfig(int(d["dim_t"]), int(d["hash_seed"])),
            ImageEmbedConfig(int(d["dim_i"])),
            GeoEmbedConfig(int(d["dim_g"]), float(d["freq_base"])),
        )
