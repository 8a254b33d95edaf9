import numpy as np
import pytest

from deconas import data as sr_data
from deconas.errors import DataError, FormatError, RangeError, ShapeError


class TestDownsample:
    def test_taps_sum_to_one(self):
        for s in (2, 3, 4):
            _, weights = sr_data.downsample_taps(s)
            assert weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_constant_image_is_preserved(self):
        img = np.full((3, 16, 16), 0.37)
        out = sr_data.downsample_bicubic(img, 2)
        assert out.shape == (3, 8, 8)
        assert np.allclose(out, 0.37, atol=1e-12)

    def test_scale_one_is_identity(self):
        img = np.random.default_rng(0).random((3, 8, 8))
        out = sr_data.downsample_bicubic(img, 1)
        assert np.array_equal(out, img)

    def test_impulse_response_matches_taps(self):
        s = 2
        offsets, weights = sr_data.downsample_taps(s)
        n = 32
        img = np.zeros((1, s, n))  # 1-D problem along the last axis
        center = 16
        img[0, :, center] = 1.0
        out = sr_data._filter_decimate_axis(img, s, axis=2)[0, 0]
        expect = np.zeros(n // s)
        c = (s - 1) / 2.0
        for i in range(n // s):
            pos = i * s + c  # output sample center in input coordinates
            for off, w in zip(offsets, weights):
                if i * s + off == center:
                    expect[i] += w
        assert np.allclose(out, expect, atol=1e-12)

    def test_indivisible_shape_rejected(self):
        with pytest.raises(ShapeError):
            sr_data.downsample_bicubic(np.zeros((3, 9, 8)), 2)

    def test_integer_shift_equivariance(self):
        # shifting HR by s pixels shifts LR by 1 pixel (away from borders)
        rng = np.random.default_rng(1)
        s = 2
        img = rng.random((1, 8, 40))
        a = sr_data.downsample_bicubic(img[..., 0:32], s)
        b = sr_data.downsample_bicubic(img[..., s:32 + s], s)
        assert np.allclose(a[..., 3:13], b[..., 2:12], atol=1e-10)


class TestUpsample:
    def test_constant_image_is_preserved(self):
        img = np.full((3, 8, 8), 0.61)
        out = sr_data.upsample_bicubic(img, 2)
        assert out.shape == (3, 16, 16)
        assert np.allclose(out, 0.61, atol=1e-12)

    def test_down_then_up_loses_detail(self):
        hr = sr_data.synth_generate(1, 64, seed=0)[0]
        lr = sr_data.downsample_bicubic(hr, 2)
        rec = sr_data.upsample_bicubic(lr, 2)
        score = sr_data.psnr(rec, hr)
        assert 5.0 < score < 99.0  # high-frequency content cannot fully survive


class TestSynthetic:
    def test_deterministic_and_bounded(self):
        a = sr_data.synth_generate(3, 32, seed=7)
        b = sr_data.synth_generate(3, 32, seed=7)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
            assert x.shape == (3, 32, 32)
            assert x.min() >= 0.0 and x.max() <= 1.0
        c = sr_data.synth_generate(1, 32, seed=8)[0]
        assert not np.array_equal(a[0], c)

    def test_has_high_frequency_content(self):
        img = sr_data.synth_generate(1, 64, seed=0)[0]
        diffs = np.abs(np.diff(img, axis=-1))
        assert diffs.max() > 0.2  # sharp edges exist


class TestPatches:
    def test_alignment_on_coordinate_ramp(self):
        # encode pixel coordinates in the images so alignment is checkable
        s = 2
        hsize = 32
        hr = np.zeros((3, hsize, hsize))
        hr[0] = np.arange(hsize)[None, :] / hsize   # x coordinate
        hr[1] = np.arange(hsize)[:, None] / hsize   # y coordinate
        lr = hr[:, ::s, ::s]
        pair = sr_data.ImagePair(hr=hr, lr=lr, tag="ramp")
        for lr_p, hr_p in sr_data.extract_patches([pair], patch=4, count=20, seed=3):
            # aligned iff the HR origin equals s times the LR origin, which the
            # coordinate ramps expose in the first pixel of each patch
            assert hr_p[0, 0, 0] == lr_p[0, 0, 0]
            assert hr_p[1, 0, 0] == lr_p[1, 0, 0]
            assert hr_p.shape == (3, 4 * s, 4 * s)

    def test_patch_too_large(self):
        pair = sr_data.ImagePair(hr=np.zeros((3, 8, 8)), lr=np.zeros((3, 4, 4)), tag="t")
        with pytest.raises(RangeError):
            sr_data.extract_patches([pair], patch=5, count=1, seed=0)

    def test_empty_pairs(self):
        with pytest.raises(DataError):
            sr_data.extract_patches([], patch=4, count=1, seed=0)


class TestAugmentation:
    def test_dihedral_group_has_eight_elements(self):
        img = np.random.default_rng(2).random((3, 6, 6))
        seen = set()
        for rot in range(4):
            for flip in (False, True):
                seen.add(sr_data.dihedral_transform(img, rot, flip).tobytes())
        assert len(seen) == 8

    def test_transforms_hit_all_elements(self):
        rng = np.random.default_rng(3)
        img = rng.random((3, 4, 4))
        seen = set()
        for _ in range(200):
            a, b = sr_data.augment(img, img, rng)
            assert np.array_equal(a, b)
            seen.add(a.tobytes())
        assert len(seen) == 8

    def test_same_transform_applied_to_both(self):
        rng = np.random.default_rng(4)
        lr = np.random.default_rng(5).random((3, 4, 4))
        hr = lr.repeat(2, axis=1).repeat(2, axis=2)
        lr_t, hr_t = sr_data.augment(lr, hr, rng)
        assert np.array_equal(hr_t, lr_t.repeat(2, axis=1).repeat(2, axis=2))

    def test_rotation_requires_square(self):
        with pytest.raises(ShapeError):
            sr_data.dihedral_transform(np.zeros((3, 4, 6)), rot=1, flip=False)


class TestPSNR:
    def test_identical_images_hit_cap(self):
        img = np.random.default_rng(6).random((3, 8, 8))
        assert sr_data.psnr(img, img) == 100.0

    def test_uniform_offset_has_closed_form(self):
        a = np.full((3, 8, 8), 0.5)
        b = np.full((3, 8, 8), 0.6)  # luma differs by exactly 0.1
        assert sr_data.psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_luma_weights(self):
        img = np.zeros((3, 2, 2))
        img[1] = 1.0  # green only
        assert np.allclose(sr_data.luma(img), 0.587)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sr_data.psnr(np.zeros((3, 4, 4)), np.zeros((3, 5, 5)))


class TestPNM:
    def test_ppm_round_trip(self, tmp_path):
        img = np.random.default_rng(7).random((3, 5, 7))
        path = tmp_path / "x.ppm"
        sr_data.store_pnm(path, img)
        back = sr_data.load_pnm(path)
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12

    def test_pgm_round_trip(self, tmp_path):
        img = np.random.default_rng(8).random((4, 6))
        path = tmp_path / "x.pgm"
        sr_data.store_pnm(path, img)
        back = sr_data.load_pnm(path)
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 64, 128, 255]))
        back = sr_data.load_pnm(path)
        assert back[1, 1] == 1.0

    def test_ascii_pnm_rejected(self, tmp_path):
        path = tmp_path / "a.ppm"
        path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(FormatError):
            sr_data.load_pnm(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(FormatError):
            sr_data.load_pnm(path)


class TestSources:
    def test_synthetic_source(self):
        pairs = sr_data.resolve_source("synthetic:5", scale=2, count=3, size=16)
        assert len(pairs) == 3
        assert pairs[0].hr.shape == (3, 16, 16)
        assert pairs[0].lr.shape == (3, 8, 8)

    def test_directory_source_round_trip(self, tmp_path):
        hr_dir = tmp_path / "hr"
        hr_dir.mkdir()
        for i, img in enumerate(sr_data.synth_generate(2, 16, seed=0)):
            sr_data.store_pnm(hr_dir / f"{i}.ppm", img)
        pairs = sr_data.load_directory(tmp_path, scale=2)
        assert len(pairs) == 2
        assert pairs[0].hr.shape == (3, 16, 16)

    def test_missing_directory(self):
        with pytest.raises(DataError):
            sr_data.resolve_source("dir:/nonexistent/path", scale=2)

    def test_unknown_source(self):
        with pytest.raises(DataError):
            sr_data.resolve_source("http:whatever", scale=2)
