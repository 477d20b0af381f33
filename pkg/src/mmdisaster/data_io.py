"""Multimodal samples, the JSON-lines dataset format, splitting and synthesis.

File layout: the first line is a header object
``{"format_version": 1, "class_names": [...], "d_i": 32}``; every further
line is one sample ``{"id", "text", "image_features"?, "lat"?, "lon"?,
"label"}`` where ``label`` is a class name and the optional keys may also be
``null``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataFormatError
from .tensor_core import make_rng

FORMAT_VERSION = 1

DEFAULT_CLASS_NAMES = (
    "flood", "fire", "earthquake", "hurricane", "landslide", "tsunami",
    "drought", "storm", "wildfire", "cyclone", "avalanche", "heatwave",
)


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    label: int
    image_features: Optional[Tuple[float, ...]] = None
    lat: Optional[float] = None
    lon: Optional[float] = None


@dataclass
class Dataset:
    class_names: List[str]
    d_i: int
    samples: List[Sample] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.class_names)) != len(self.class_names):
            raise ConfigError(f"class names must be unique: {self.class_names}")
        for s in self.samples:
            self._check_sample(s)

    def _check_sample(self, s: Sample) -> None:
        if not 0 <= s.label < len(self.class_names):
            raise ConfigError(f"sample {s.id}: label {s.label} outside [0, {len(self.class_names)})")
        if s.image_features is not None and len(s.image_features) != self.d_i:
            raise ConfigError(f"sample {s.id}: image_features length {len(s.image_features)} != d_i={self.d_i}")
        if (s.lat is None) != (s.lon is None):
            raise ConfigError(f"sample {s.id}: lat and lon must both be present or both absent")
        if s.lat is not None and not (-90 <= s.lat <= 90 and -180 <= s.lon <= 180):
            raise ConfigError(f"sample {s.id}: coordinates ({s.lat}, {s.lon}) out of range")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> List[int]:
        return [s.label for s in self.samples]

    def __len__(self):
        return len(self.samples)

    def subset(self, samples: Sequence[Sample]) -> "Dataset":
        return Dataset(list(self.class_names), self.d_i, list(samples))


def _sample_to_json(s: Sample, class_names) -> str:
    rec = {"id": s.id, "text": s.text}
    if s.image_features is not None:
        rec["image_features"] = [float(v) for v in s.image_features]
    if s.lat is not None:
        rec["lat"] = float(s.lat)
        rec["lon"] = float(s.lon)
    rec["label"] = class_names[s.label]
    return json.dumps(rec, ensure_ascii=False)


def save_dataset(dataset: Dataset, path) -> None:
    header = {"format_version": FORMAT_VERSION, "class_names": list(dataset.class_names), "d_i": dataset.d_i}
    lines = [json.dumps(header)]
    lines.extend(_sample_to_json(s, dataset.class_names) for s in dataset.samples)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _opt_float(rec, key, lineno):
    val = rec.get(key)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise DataFormatError(f"{key} must be a number, got {val!r}", lineno)
    return float(val)


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("missing header line", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"header is not valid JSON: {exc.msg}", 1) from exc
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"header must declare format_version {FORMAT_VERSION}", 1)
    class_names = header.get("class_names")
    d_i = header.get("d_i")
    if not isinstance(class_names, list) or not all(isinstance(c, str) for c in class_names):
        raise DataFormatError("header class_names must be a list of strings", 1)
    if len(set(class_names)) != len(class_names):
        raise DataFormatError("header class_names must be unique", 1)
    if not isinstance(d_i, int) or d_i < 1:
        raise DataFormatError("header d_i must be a positive integer", 1)
    index = {name: i for i, name in enumerate(class_names)}

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON: {exc.msg}", lineno) from exc
        if not isinstance(rec, dict):
            raise DataFormatError("record must be a JSON object", lineno)
        for key in ("id", "text", "label"):
            if not isinstance(rec.get(key), str):
                raise DataFormatError(f"field {key!r} must be a string", lineno)
        if rec["label"] not in index:
            raise DataFormatError(f"unknown label {rec['label']!r}", lineno)
        feats = rec.get("image_features")
        if feats is not None:
            if not isinstance(feats, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in feats):
                raise DataFormatError("image_features must be a list of numbers", lineno)
            if len(feats) != d_i:
                raise DataFormatError(f"image_features has length {len(feats)}, header declares d_i={d_i}",
                                      lineno)
            feats = tuple(float(v) for v in feats)
        lat, lon = _opt_float(rec, "lat", lineno), _opt_float(rec, "lon", lineno)
        if (lat is None) != (lon is None):
            raise DataFormatError("lat and lon must both be present or both absent", lineno)
        if lat is not None and not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise DataFormatError(f"coordinates ({lat}, {lon}) out of range", lineno)
        samples.append(Sample(rec["id"], rec["text"], index[rec["label"]], feats, lat, lon))
    return Dataset(class_names, d_i, samples)


def split(dataset: Dataset, fractions=(0.7, 0.2, 0.1), seed: int = 0):
    """Stratified (train, val, test) split.

    Within each class the samples are shuffled with a seeded generator, then
    ``floor(f * n)`` go to validation and test; the remainder, including all
    rounding residue, goes to train. Each part keeps the original order.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    rng = make_rng(seed, 3)
    parts = ([], [], [])
    for c in range(dataset.num_classes):
        members = [i for i, s in enumerate(dataset.samples) if s.label == c]
        perm = [members[j] for j in rng.permutation(len(members))]
        n = len(members)
        n_val = math.floor(fractions[1] * n + 1e-9)
        n_test = math.floor(fractions[2] * n + 1e-9)
        parts[1].extend(perm[:n_val])
        parts[2].extend(perm[n_val:n_val + n_test])
        parts[0].extend(perm[n_val + n_test:])
    return tuple(dataset.subset([dataset.samples[i] for i in sorted(p)]) for p in parts)


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 3
    samples_per_class: int = 20
    vocab_per_class: int = 12
    shared_vocab: int = 24
    tokens_per_text: int = 8
    geo_centers: Optional[Tuple[Tuple[float, float], ...]] = None
    geo_spread: float = 1.0
    image_dim: int = 32
    image_center_distance: float = 4.0
    noise_level: float = 0.0
    seed: int = 0
    class_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.samples_per_class < 1:
            raise ConfigError(f"samples_per_class must be >= 1, got {self.samples_per_class}")
        if self.vocab_per_class < 1 or self.shared_vocab < 1 or self.tokens_per_text < 1:
            raise ConfigError("vocab_per_class, shared_vocab and tokens_per_text must be >= 1")
        if self.image_dim < self.num_classes:
            raise ConfigError(f"image_dim ({self.image_dim}) must be >= num_classes ({self.num_classes})")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ConfigError(f"noise_level must lie in [0, 1], got {self.noise_level}")
        if self.geo_spread < 0 or self.image_center_distance < 0:
            raise ConfigError("geo_spread and image_center_distance must be nonnegative")
        if self.geo_centers is not None and len(self.geo_centers) != self.num_classes:
            raise ConfigError("geo_centers needs one (lat, lon) pair per class")
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise ConfigError("class_names needs one name per class")

    def resolved_class_names(self) -> List[str]:
        if self.class_names is not None:
            return list(self.class_names)
        return [DEFAULT_CLASS_NAMES[c] if c < len(DEFAULT_CLASS_NAMES) else f"class{c}"
                for c in range(self.num_classes)]

    def resolved_geo_centers(self) -> List[Tuple[float, float]]:
        if self.geo_centers is not None:
            return [tuple(map(float, c)) for c in self.geo_centers]
        C = self.num_classes
        return [(-50.0 + 100.0 * c / (C - 1), -150.0 + 300.0 * c / (C - 1)) for c in range(C)]


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Class-conditional samples with signal in text, image and coordinates.

    Image means sit on scaled basis vectors, so any two class means are
    exactly ``image_center_distance`` apart.
    """
    names = cfg.resolved_class_names()
    centers = cfg.resolved_geo_centers()
    shared = [f"report{k:02d}" for k in range(cfg.shared_vocab)]
    rng = make_rng(cfg.seed, 2)
    radius = cfg.image_center_distance / math.sqrt(2.0)
    samples = []
    for c, name in enumerate(names):
        own = [f"{name}{k:02d}" for k in range(cfg.vocab_per_class)]
        mean = np.zeros(cfg.image_dim)
        mean[c] = radius
        for _ in range(cfg.samples_per_class):
            use_shared = rng.random(cfg.tokens_per_text) < cfg.noise_level
            own_pick = rng.integers(0, len(own), cfg.tokens_per_text)
            shared_pick = rng.integers(0, len(shared), cfg.tokens_per_text)
            tokens = [shared[s] if u else own[o] for u, o, s in zip(use_shared, own_pick, shared_pick)]
            feats = mean + cfg.noise_level * rng.standard_normal(cfg.image_dim)
            lat = float(np.clip(centers[c][0] + cfg.geo_spread * rng.standard_normal(), -90.0, 90.0))
            lon = float(np.clip(centers[c][1] + cfg.geo_spread * rng.standard_normal(), -180.0, 180.0))
            samples.append(Sample(f"s{len(samples):05d}", " ".join(tokens), c,
                                  tuple(float(v) for v in feats), lat, lon))
    return Dataset(names, cfg.image_dim, samples)
