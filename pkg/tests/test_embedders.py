import math

import numpy as np
import pytest

from mmdisaster.embedders import (Embedded, EmbedderSet, GeoEmbedConfig, ImageEmbedConfig, TextEmbedConfig,
                                  embed_geo, embed_image, embed_text)
from mmdisaster.errors import ConfigError, ShapeError


def test_empty_text_is_zero():
    np.testing.assert_array_equal(embed_text("", TextEmbedConfig()), np.zeros(32))


def test_repeated_tokens_collapse():
    cfg = TextEmbedConfig()
    np.testing.assert_array_equal(embed_text("flood flood", cfg), embed_text("flood", cfg))


def test_hash_seed_changes_output():
    a = embed_text("flood in delhi", TextEmbedConfig(hash_seed=1))
    b = embed_text("flood in delhi", TextEmbedConfig(hash_seed=2))
    assert not np.array_equal(a, b)
    for v in (a, b):
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12


def test_text_is_bag_of_words_and_case_insensitive():
    cfg = TextEmbedConfig(dim_t=16, hash_seed=5)
    np.testing.assert_array_equal(embed_text("Fire near the river", cfg), embed_text("river the NEAR fire", cfg))


@pytest.mark.parametrize("text", ["a", "one two three", "x y z w v u t s r q p o"])
def test_text_norm_is_zero_or_one(text):
    n = np.linalg.norm(embed_text(text, TextEmbedConfig(dim_t=4)))
    assert n == 0.0 or abs(n - 1.0) < 1e-12


def test_image_passthrough():
    cfg = ImageEmbedConfig(dim_i=2)
    np.testing.assert_array_equal(embed_image(None, cfg), [0, 0])
    np.testing.assert_array_equal(embed_image([1.0, 0.0], cfg), [1.0, 0.0])
    np.testing.assert_allclose(embed_image([3, 4], cfg), [0.6, 0.8], atol=1e-15)
    with pytest.raises(ShapeError):
        embed_image([1, 2, 3], cfg)


def test_geo_origin():
    v = embed_geo(0.0, 0.0, GeoEmbedConfig())
    np.testing.assert_array_equal(v[0::2], 0.0)
    np.testing.assert_array_equal(v[1::2], 1.0)


def test_geo_layout_matches_hand_formula():
    cfg = GeoEmbedConfig(dim_g=8, freq_base=100.0)
    lat, lon = 28.61, 77.21
    expected = []
    for coord in (lat, lon):
        for k in range(2):
            w = 100.0 ** (-2 * k / 8)
            expected += [math.sin(math.radians(coord) * w), math.cos(math.radians(coord) * w)]
    np.testing.assert_allclose(embed_geo(lat, lon, cfg), expected, atol=1e-15)


def test_geo_absent_and_errors():
    cfg = GeoEmbedConfig()
    np.testing.assert_array_equal(embed_geo(None, None, cfg), np.zeros(16))
    with pytest.raises(ConfigError):
        embed_geo(91.0, 0.0, cfg)
    with pytest.raises(ConfigError):
        embed_geo(0.0, -180.5, cfg)
    with pytest.raises(ConfigError):
        GeoEmbedConfig(dim_g=5)


def test_geo_delhi_neighbourhood():
    cfg = GeoEmbedConfig()
    delhi = embed_geo(28.61, 77.21, cfg)
    near = embed_geo(28.62, 77.21, cfg)
    sydney = embed_geo(-33.87, 151.21, cfg)
    assert np.linalg.norm(delhi - near) < np.linalg.norm(delhi - sydney)


def test_geo_smoothness_random_triples():
    rng = np.random.default_rng(0)
    cfg = GeoEmbedConfig()
    for _ in range(100):
        lat = rng.uniform(-39, 39)
        lon = rng.uniform(-129, 129)
        base = embed_geo(lat, lon, cfg)
        near = embed_geo(lat + 0.01, lon, cfg)
        far = embed_geo(lat + 50 * rng.choice([-1, 1]), lon + 50 * rng.choice([-1, 1]), cfg)
        assert np.linalg.norm(base - near) < np.linalg.norm(base - far)


def test_embedders_are_pure(clean_dataset):
    emb = EmbedderSet()
    s = clean_dataset.samples[0]
    a, b = emb.embed(s), emb.embed(s)
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()


def test_ablate():
    e = Embedded(np.ones(2), np.ones(3), np.ones(4))
    z = e.ablate(["image"])
    np.testing.assert_array_equal(z.image, 0.0)
    np.testing.assert_array_equal(z.text, 1.0)
    with pytest.raises(ConfigError):
        e.ablate(["audio"])


def test_config_round_trip():
    emb = EmbedderSet(TextEmbedConfig(8, 3), ImageEmbedConfig(5), GeoEmbedConfig(6, 500.0))
    assert EmbedderSet.from_dict(emb.to_dict()) == emb
