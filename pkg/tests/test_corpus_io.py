import numpy as np
import pytest
from PIL import Image

from scatshift import corpus_io


def write_pgm_p2(path, arr, maxval=255):
    lines = [f"P2\n{arr.shape[1]} {arr.shape[0]}\n{maxval}"]
    for row in arr:
        lines.append(" ".join(str(int(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


class TestNormalizeDynamicRange:
    def test_three_value_case(self):
        out = corpus_io.normalize_dynamic_range(np.array([[10.0, 15.0, 20.0]]))
        assert out.tolist() == [[0.0, 127.0, 255.0]]

    def test_full_range_unchanged(self):
        img = np.arange(256, dtype=float).reshape(16, 16)
        out = corpus_io.normalize_dynamic_range(img)
        assert np.array_equal(out, img)

    def test_constant_image_warns_and_zeroes(self):
        with pytest.warns(RuntimeWarning):
            out = corpus_io.normalize_dynamic_range(np.full((3, 3), 7.0))
        assert np.array_equal(out, np.zeros((3, 3)))

    def test_idempotent_on_nonconstant(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 4096, size=(32, 32)).astype(float)
        once = corpus_io.normalize_dynamic_range(img)
        twice = corpus_io.normalize_dynamic_range(once)
        assert np.array_equal(once, twice)

    def test_output_spans_0_255(self):
        rng = np.random.default_rng(1)
        img = rng.integers(100, 60000, size=(20, 20)).astype(float)
        out = corpus_io.normalize_dynamic_range(img)
        assert out.min() == 0.0 and out.max() == 255.0


class TestResampleImage:
    def test_constant_preserved(self):
        out = corpus_io.resample_image(np.full((512, 512), 100.0), 256)
        assert out.shape == (256, 256)
        assert np.allclose(out, 100.0, atol=1e-9)

    def test_checkerboard_average(self):
        board = np.array([[0.0, 255.0], [255.0, 0.0]])
        img = np.tile(board, (2, 2))
        out = corpus_io.resample_image(img, 2)
        assert np.allclose(out, 127.5)

    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 255, (256, 256))
        out = corpus_io.resample_image(img, 256)
        assert np.array_equal(out, img)

    def test_upsample_warns(self):
        with pytest.warns(RuntimeWarning):
            out = corpus_io.resample_image(np.full((8, 8), 42.0), 16)
        assert out.shape == (16, 16)
        assert np.allclose(out, 42.0)

    def test_noninteger_ratio_preserves_mean(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 255, (48, 48))
        out = corpus_io.resample_image(img, 32)
        # Area averaging conserves total mass exactly.
        assert np.isclose(out.mean(), img.mean(), rtol=1e-12)

    def test_range_preserved(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 255, (100, 80))
        out = corpus_io.resample_image(img, 50)
        assert out.shape == (50, 50)
        assert out.min() >= 0.0 and out.max() <= 255.0


class TestLoadCorpus:
    def _manifest(self, tmp_path, paths):
        m = tmp_path / "manifest.csv"
        m.write_text("path,label,labeler_a,labeler_b\n" + "\n".join(f"{p},," for p in paths) + "\n")
        return corpus_io.read_manifest(m)

    def test_order_matches_manifest(self, tmp_path):
        rng = np.random.default_rng(5)
        paths = []
        for i in range(3):
            arr = rng.integers(0, 200, size=(8 + i, 8)).astype(np.uint8)
            p = tmp_path / f"img{i}.png"
            Image.fromarray(arr, mode="L").save(p)
            paths.append(str(p))
        manifest = self._manifest(tmp_path, paths)
        images, kept, errors = corpus_io.load_corpus(manifest, side=4)
        assert len(images) == 3 and not errors
        assert [e.path for e in kept] == paths
        for img in images:
            assert img.shape == (4, 4)
            assert img.min() >= 0.0 and img.max() <= 255.0

    def test_missing_path_names_it(self, tmp_path):
        manifest = self._manifest(tmp_path, [str(tmp_path / "nope.png")])
        with pytest.raises(corpus_io.CorpusLoadError, match="nope.png"):
            corpus_io.load_corpus(manifest)

    def test_16bit_png_matches_scripted_normalize(self, tmp_path):
        rng = np.random.default_rng(6)
        arr = rng.integers(500, 40000, size=(16, 16)).astype(np.uint16)
        p = tmp_path / "deep.png"
        Image.fromarray(arr).save(p)
        manifest = self._manifest(tmp_path, [str(p)])
        images, _, _ = corpus_io.load_corpus(manifest, side=16)
        # Independent decode + normalize of the same file.
        raw = np.asarray(Image.open(p), dtype=float)
        expected = np.floor((raw - raw.min()) * 255.0 / (raw.max() - raw.min()))
        assert np.array_equal(images[0], expected)

    def test_pgm_p2_decodes(self, tmp_path):
        arr = np.arange(64).reshape(8, 8) * 4
        p = tmp_path / "plain.pgm"
        write_pgm_p2(p, arr)
        img = corpus_io.load_image(p)
        assert np.array_equal(img, arr.astype(float))

    def test_skip_bad_keeps_good_rows(self, tmp_path):
        good = tmp_path / "ok.png"
        Image.fromarray(np.arange(64, dtype=np.uint8).reshape(8, 8), mode="L").save(good)
        bad = tmp_path / "corrupt.png"
        bad.write_bytes(b"not a png")
        manifest = self._manifest(tmp_path, [str(good), str(bad)])
        images, kept, errors = corpus_io.load_corpus(manifest, side=8, skip_bad=True)
        assert len(images) == 1 and len(errors) == 1
        assert "corrupt.png" in errors[0]

    def test_duplicate_paths_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="duplicate"):
            corpus_io.CorpusManifest("c", [corpus_io.ManifestEntry("a.png"), corpus_io.ManifestEntry("a.png")])

    def test_color_reduced_to_luminance(self, tmp_path):
        rgb = np.zeros((8, 8, 3), dtype=np.uint8)
        rgb[..., 1] = 200  # pure green
        p = tmp_path / "color.png"
        Image.fromarray(rgb, mode="RGB").save(p)
        img = corpus_io.load_image(p)
        assert np.allclose(img, 0.587 * 200)


def test_jpeg95_roundtrip_close_but_not_exact(tmp_path):
    rng = np.random.default_rng(7)
    img = rng.uniform(0, 255, (32, 32))
    out = corpus_io.prepare_image(img, side=32, jpeg95=True)
    plain = corpus_io.prepare_image(img, side=32)
    assert out.shape == (32, 32)
    assert not np.array_equal(out, plain)  # lossy storage path
    assert np.abs(out - plain).mean() < 20
