import numpy as np
import pytest
from PIL import Image

from glyphsim import corpus
from glyphsim.corpus import (CorpusError, GlyphImage, ManifestEntry,
                             build_composite, denoise_manuscript, load_corpus,
                             largest_remainder_counts, preprocess, split,
                             square_pad, standardize, standardize_glyph)

from conftest import make_corpus


def count_ink_components(image: np.ndarray, threshold: float = 0.5) -> int:
    """4-connected component count of the ink mask, by flood fill."""
    ink = np.asarray(image) < threshold
    seen = np.zeros_like(ink, dtype=bool)
    h, w = ink.shape
    count = 0
    for sy in range(h):
        for sx in range(w):
            if not ink[sy, sx] or seen[sy, sx]:
                continue
            count += 1
            stack = [(sy, sx)]
            seen[sy, sx] = True
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and ink[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
    return count


class TestSquarePad:
    def test_already_square_is_identical(self, rng):
        image = rng.random((224, 224))
        out = square_pad(image)
        assert out.shape == (224, 224)
        np.testing.assert_array_equal(out, image)

    def test_100x224_pads_62_each_side(self, rng):
        image = rng.random((100, 224))
        out = square_pad(image)
        assert out.shape == (224, 224)
        np.testing.assert_array_equal(out[62:162], image)
        border = np.concatenate([image[0], image[-1], image[1:-1, 0], image[1:-1, -1]])
        assert (out[:62] == out[0, 0]).all()
        assert out[0, 0] == pytest.approx(border.mean())
        assert (out[162:] == out[0, 0]).all()

    def test_3x1_ones_centered_middle_column(self):
        out = square_pad(np.ones((3, 1)))
        assert out.shape == (3, 3)
        np.testing.assert_array_equal(out[:, 1], np.ones(3))

    def test_odd_padding_keeps_content_centered(self):
        image = np.zeros((2, 5))
        out = square_pad(image)
        assert out.shape == (5, 5)
        # 3 pad rows: 1 above, 2 below
        np.testing.assert_array_equal(out[1:3], image)

    def test_empty_image_rejected(self):
        with pytest.raises(CorpusError):
            square_pad(np.zeros((0, 4)))

    def test_three_channel_input(self, rng):
        image = rng.random((10, 20, 3))
        out = square_pad(image)
        assert out.shape == (20, 20, 3)
        np.testing.assert_array_equal(out[5:15], image)


class TestStandardize:
    def test_gray_0485_zeroes_first_channel(self):
        out = standardize(np.full((224, 224), 0.485))
        np.testing.assert_allclose(out[:, :, 0], 0.0, atol=1e-12)
        np.testing.assert_allclose(out[:, :, 1], (0.485 - 0.456) / 0.224, atol=1e-12)

    def test_constant_one(self):
        out = standardize(np.ones((224, 224)))
        np.testing.assert_allclose(out[:, :, 0], (1.0 - 0.485) / 0.229, atol=1e-12)
        assert out[:, :, 0].flat[0] == pytest.approx(2.2489, abs=1e-4)

    def test_output_shape_224x224x3(self, rng):
        out = standardize(square_pad(rng.random((100, 160))))
        assert out.shape == (224, 224, 3)

    def test_nonfinite_rejected(self):
        bad = np.ones((8, 8))
        bad[3, 3] = np.nan
        with pytest.raises(CorpusError):
            standardize(bad)

    def test_double_normalization_refused(self):
        glyph = GlyphImage(pixels=np.ones((8, 8)), script="s", glyph_id="a")
        once = standardize_glyph(glyph)
        assert once.normalized
        with pytest.raises(CorpusError):
            standardize_glyph(once)

    def test_full_chain_always_finite(self, rng):
        for _ in range(25):
            h, w = rng.integers(2, 90, 2)
            raster = rng.random((h, w))
            out = standardize(square_pad(raster))
            assert np.isfinite(out).all()
            assert out.shape == (224, 224, 3)


def _binary_glyph(size: int = 96) -> np.ndarray:
    page = np.ones((size, size))
    page[20:70, 30:34] = 0.0          # vertical bar
    page[40:44, 30:72] = 0.0          # horizontal bar, connected to the first
    page[75:85, 60:70] = 0.0          # separate blob
    return page


class TestDenoise:
    def test_clean_binary_keeps_component_count(self):
        page = _binary_glyph()
        before = count_ink_components(page)
        out = denoise_manuscript(page)
        assert out.shape == page.shape
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert count_ink_components(out) == before

    def test_salt_and_pepper_speckles_removed(self, rng):
        page = _binary_glyph()
        noisy = page.copy()
        n_pixels = page.size
        flips = rng.choice(n_pixels, size=n_pixels // 100, replace=False)
        flat = noisy.ravel()
        flat[flips] = 1.0 - flat[flips]
        before = count_ink_components(noisy)
        after = count_ink_components(denoise_manuscript(noisy))
        assert after < before

    def test_all_white_page_maps_to_ones(self):
        out = denoise_manuscript(np.ones((64, 64)))
        np.testing.assert_array_equal(out, np.ones((64, 64)))

    def test_values_bounded(self, rng):
        out = denoise_manuscript(rng.random((50, 50)))
        assert out.min() >= 0.0 and out.max() <= 1.0


def _write_png(path, array):
    Image.fromarray((array * 255).astype(np.uint8)).save(path)


class TestLoadCorpus:
    def test_directory_of_three(self, tmp_path, rng):
        d = tmp_path / "scriptA"
        d.mkdir()
        for name in ("a", "b", "c"):
            _write_png(d / f"{name}.png", rng.random((32, 40)))
        got = load_corpus(ManifestEntry(name="scriptA", role="target", directory="scriptA"),
                          root=tmp_path)
        assert len(got) == 3
        assert got.glyph_ids() == ["a", "b", "c"]
        assert all(g.pixels.shape == (224, 224, 3) for g in got.glyphs)
        assert all(g.normalized for g in got.glyphs)

    def test_corrupt_file_skipped_and_reported(self, tmp_path, rng):
        d = tmp_path / "scriptB"
        d.mkdir()
        for i in range(5):
            _write_png(d / f"g{i}.png", rng.random((16, 16)))
        (d / "g2.png").write_text("not an image")
        got = load_corpus(ManifestEntry(name="scriptB", role="comparison",
                                        directory="scriptB"), root=tmp_path)
        assert len(got) == 4
        assert len(got.load_report) == 1
        assert "g2.png" in got.load_report[0]

    def test_empty_directory_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(CorpusError):
            load_corpus(ManifestEntry(name="x", role="target", directory="empty"),
                        root=tmp_path)

    def test_denoise_runs_between_pad_and_standardize(self, monkeypatch, rng):
        calls = []
        real_pad, real_den, real_std = (corpus.square_pad,
                                        corpus.denoise_manuscript,
                                        corpus.standardize)
        monkeypatch.setattr(corpus, "square_pad",
                            lambda img: calls.append("pad") or real_pad(img))
        monkeypatch.setattr(corpus, "denoise_manuscript",
                            lambda img, **kw: calls.append("denoise") or real_den(img, **kw))
        monkeypatch.setattr(corpus, "standardize",
                            lambda img: calls.append("standardize") or real_std(img))
        preprocess(rng.random((20, 30)), denoise=True)
        assert calls == ["pad", "denoise", "standardize"]
        calls.clear()
        preprocess(rng.random((20, 30)), denoise=True, denoise_before_pad=True)
        assert calls == ["denoise", "pad", "standardize"]


class TestComposite:
    def test_three_equal_sources_size_99(self, rng):
        sources = [(make_corpus(40, side=8, name=f"s{i}", seed=i), 1 / 3)
                   for i in range(3)]
        got = build_composite(sources, 99, rng)
        assert len(got) == 99
        for i in range(3):
            assert sum(g.glyph_id.startswith(f"s{i}/") for g in got.glyphs) == 33

    def test_small_source_topped_up_with_augmented(self, rng):
        small = make_corpus(10, side=8, name="small", seed=1)
        big = make_corpus(40, side=8, name="big", seed=2)
        got = build_composite([(small, 0.5), (big, 0.5)], 40, rng)
        small_ids = [g.glyph_id for g in got.glyphs if g.glyph_id.startswith("small/")]
        assert len(small_ids) == 20
        assert sum("#fill" in gid for gid in small_ids) == 10

    def test_single_source_at_full_proportion(self, rng):
        src = make_corpus(30, side=8, name="only", seed=3)
        got = build_composite([(src, 1.0)], 20, rng)
        assert len(got) == 20
        assert all(g.glyph_id.startswith("only/") for g in got.glyphs)

    def test_empty_source_with_nonzero_proportion_rejected(self, rng):
        empty = make_corpus(0, name="none")
        full = make_corpus(10, side=8, name="full")
        with pytest.raises(CorpusError):
            build_composite([(empty, 0.5), (full, 0.5)], 10, rng)

    def test_bad_proportions_rejected(self, rng):
        src = make_corpus(10, side=8)
        with pytest.raises(CorpusError):
            build_composite([(src, 0.7)], 10, rng)


class TestSplit:
    def test_100_glyphs_split_70_20_10(self):
        got = split(make_corpus(100, side=4), rng_seed=0)
        assert [len(got.splits[k]) for k in ("train", "val", "test")] == [70, 20, 10]

    def test_10_glyphs_split_7_2_1(self):
        got = split(make_corpus(10, side=4), rng_seed=0)
        assert [len(got.splits[k]) for k in ("train", "val", "test")] == [7, 2, 1]

    def test_same_seed_same_partition(self):
        a = split(make_corpus(37, side=4), rng_seed=9)
        b = split(make_corpus(37, side=4), rng_seed=9)
        assert a.splits == b.splits

    def test_partition_disjoint_and_exhaustive(self):
        for seed in range(20):
            got = split(make_corpus(23, side=4), rng_seed=seed)
            all_ids = sorted(got.splits["train"] + got.splits["val"] + got.splits["test"])
            assert all_ids == sorted(got.glyph_ids())

    def test_bad_ratios_rejected(self):
        with pytest.raises(CorpusError):
            split(make_corpus(20, side=4), ratios=(0.5, 0.3, 0.3))

    def test_too_small_corpus_rejected(self):
        with pytest.raises(CorpusError):
            split(make_corpus(9, side=4))


def test_largest_remainder_exact_and_total():
    assert largest_remainder_counts([0.7, 0.2, 0.1], 100) == [70, 20, 10]
    assert largest_remainder_counts([0.7, 0.2, 0.1], 10) == [7, 2, 1]
    assert largest_remainder_counts([1 / 3, 1 / 3, 1 / 3], 99) == [33, 33, 33]
    for total in (1, 7, 13, 97):
        counts = largest_remainder_counts([0.5, 0.25, 0.25], total)
        assert sum(counts) == total
