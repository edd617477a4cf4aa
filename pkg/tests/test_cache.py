import json
from unittest.mock import patch

import numpy as np

from czlab import cache
from czlab.accretive import build_approx_identity, build_reproducing_family

from .conftest import make_b, make_grid


def _make_family():
    b = make_b(make_grid(4.0, 128))
    S = build_approx_identity(b, -2, 0)
    return S, build_reproducing_family(S, min_rank_fraction=0.0)


class TestCache:
    def test_save_and_load_family(self, tmp_path):
        S, family = _make_family()

        with patch.object(cache, "_cache_dir", return_value=tmp_path / ".cache"):
            cache.save(family)
            loaded = cache.load_family(S)

        assert loaded is not None
        assert np.array_equal(loaded.pseudo_inverse.matrix, family.pseudo_inverse.matrix)
        assert loaded.rank == family.rank
        assert loaded.residual == family.residual
        assert loaded.scales == family.scales

    def test_load_missing_returns_none(self, tmp_path):
        S, _ = _make_family()

        with patch.object(cache, "_cache_dir", return_value=tmp_path / ".cache"):
            assert cache.load_family(S) is None

    def test_load_invalid_json_returns_none(self, tmp_path):
        S, family = _make_family()
        cache_dir = tmp_path / ".cache"

        with patch.object(cache, "_cache_dir", return_value=cache_dir):
            path = cache.save(family)
            path.write_text("not json", encoding="utf-8")
            assert cache.load_family(S) is None

    def test_load_invalid_structure_returns_none(self, tmp_path):
        S, family = _make_family()
        cache_dir = tmp_path / ".cache"

        with patch.object(cache, "_cache_dir", return_value=cache_dir):
            path = cache.save(family)
            header = json.loads(path.read_text(encoding="utf-8"))
            header["rank"] = "full"
            path.write_text(json.dumps(header), encoding="utf-8")
            assert cache.load_family(S) is None

    def test_load_wrong_shape_returns_none(self, tmp_path):
        S, family = _make_family()
        cache_dir = tmp_path / ".cache"

        with patch.object(cache, "_cache_dir", return_value=cache_dir):
            path = cache.save(family)
            np.save(path.with_suffix(".npy"), np.zeros((4, 4)), allow_pickle=False)
            assert cache.load_family(S) is None

    def test_key_depends_on_scales(self, tmp_path):
        S, family = _make_family()
        other = build_approx_identity(S.b, -1, 0)

        with patch.object(cache, "_cache_dir", return_value=tmp_path / ".cache"):
            cache.save(family)
            assert cache.load_family(other) is None

    def test_header_is_readable_json(self, tmp_path):
        _, family = _make_family()

        with patch.object(cache, "_cache_dir", return_value=tmp_path / ".cache"):
            path = cache.save(family)

        header = json.loads(path.read_text(encoding="utf-8"))
        assert header["b_hash"] == family.b.digest()
        assert header["n_points"] == 128
        assert len(header["singular_values"]) == len(family.singular_values)
