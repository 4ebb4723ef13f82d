import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autostyle.colorspace import LabImage, lab_to_srgb, srgb_to_lab
from autostyle.imgio import RgbImage
from autostyle.stylestats import ChromaStats, LumaFeature, chroma_stats, luma_feature, style_descriptor
from autostyle.transfer import (
    DELTA_MAX,
    DELTA_MIN,
    ChromaMap,
    FaceCorrectionConfig,
    FaceRegion,
    ToneCurveParams,
    TransferConfig,
    apply_chroma,
    apply_tone,
    chroma_transform,
    correct_face_exposure,
    fit_tone_curve,
    load_faces,
    prepare_input,
    regularize_covariance,
    render,
    tone_cost,
    tone_curve_eval,
    tone_target,
    transfer_style,
)

from synth import gaussian_lab, random_spd, smooth_image


def gauss(mean, cov) -> ChromaStats:
    return ChromaStats(np.asarray(mean, float), np.asarray(cov, float))


def lab_planes(L, a=0.0, b=0.0) -> LabImage:
    L = np.asarray(L, float)
    return LabImage(L, np.broadcast_to(a, L.shape).astype(float), np.broadcast_to(b, L.shape).astype(float))


def dense_grid_best(x: np.ndarray, target: np.ndarray) -> float:
    """Brute-force reference: 100x100 over m and delta, delta both log and linear spaced."""
    m = np.linspace(0.0, 1.0, 100)
    best = np.inf
    for deltas in (np.geomspace(DELTA_MIN, DELTA_MAX, 100), np.linspace(DELTA_MIN, DELTA_MAX, 100)):
        mm, dd = np.meshgrid(m, deltas, indexing="ij")
        best = min(best, float(tone_cost(mm, dd, x, target).min()))
    return best


class TestChromaTransform:
    def test_identical(self):
        g = gauss([1, 2], np.diag([16.0, 16.0]))
        np.testing.assert_allclose(chroma_transform(g, g, 7.5).T, np.eye(2), atol=1e-12)

    def test_scalar_gain(self):
        cm = chroma_transform(gauss([0, 0], np.diag([16.0, 16.0])), gauss([0, 0], np.diag([64.0, 64.0])))
        np.testing.assert_allclose(cm.T, 2 * np.eye(2), atol=1e-12)

    def test_floor_caps_gain(self):
        cm = chroma_transform(gauss([0, 0], np.eye(2)), gauss([0, 0], 100 * np.eye(2)), 7.5)
        np.testing.assert_allclose(cm.T, math.sqrt(100 / 7.5) * np.eye(2), atol=1e-12)
        assert cm.T[0, 0] == pytest.approx(3.651, abs=1e-3)

    def test_means_copied(self):
        cm = chroma_transform(gauss([1, 2], np.eye(2) * 9), gauss([-3, 4], np.eye(2) * 9))
        assert cm.mu_in.tolist() == [1, 2] and cm.mu_style.tolist() == [-3, 4]

    def test_regularize_keeps_correlation(self):
        cov = np.array([[1.0, 0.5], [0.5, 4.0]])
        reg = regularize_covariance(cov, 7.5)
        assert reg[0, 0] == 7.5 and reg[1, 1] == 7.5
        assert reg[0, 1] / math.sqrt(reg[0, 0] * reg[1, 1]) == pytest.approx(0.25)

    def test_regularize_clamps_correlation(self):
        reg = regularize_covariance(np.array([[10.0, 10.0], [10.0, 10.0]]), 7.5)
        assert reg[0, 1] / 10.0 == pytest.approx(0.999)
        assert np.linalg.det(reg) > 0

    def test_symmetric_psd_and_maps_covariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            ci, cs = random_spd(rng, 10.0, 400.0), random_spd(rng, 1.0, 400.0)
            T = chroma_transform(gauss([0, 0], ci), gauss([0, 0], cs)).T
            assert np.array_equal(T, T.T)
            assert np.linalg.eigvalsh(T).min() >= -1e-12
            np.testing.assert_allclose(T @ ci @ T, cs, rtol=1e-9, atol=1e-9)


class TestApplyChroma:
    def test_identity(self):
        rng = np.random.default_rng(1)
        img = lab_planes(rng.random((4, 5)), rng.normal(size=(4, 5)), rng.normal(size=(4, 5)))
        out = apply_chroma(img, ChromaMap(np.eye(2), np.array([3.0, 1.0]), np.array([3.0, 1.0])))
        np.testing.assert_allclose(out.a, img.a, atol=1e-14)
        np.testing.assert_allclose(out.b, img.b, atol=1e-14)
        assert np.array_equal(out.L, img.L)

    def test_translation(self):
        img = lab_planes(np.full((2, 2), 0.5), 1.0, 2.0)
        out = apply_chroma(img, ChromaMap(np.eye(2), np.zeros(2), np.array([5.0, -3.0])))
        assert np.all(out.a == 6.0) and np.all(out.b == -1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_moment_matching(self, seed):
        rng = np.random.default_rng(seed)
        img = gaussian_lab(rng, 4000, rng.normal(0, 10, 2), random_spd(rng, 20.0, 300.0), h=40)
        style = gauss(rng.normal(0, 20, 2), random_spd(rng, 1.0, 400.0))
        out = chroma_stats(apply_chroma(img, chroma_transform(chroma_stats(img), style)))
        scale = np.abs(style.cov).max()
        np.testing.assert_allclose(out.mean, style.mean, rtol=1e-6, atol=1e-6 * scale)
        np.testing.assert_allclose(out.cov, style.cov, rtol=1e-6, atol=1e-6 * scale)


class TestToneCurve:
    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(DELTA_MIN, DELTA_MAX))
    def test_endpoints_and_monotone(self, m, delta):
        p = ToneCurveParams(m, delta)
        assert abs(tone_curve_eval(p, 0.0)) <= 1e-12
        assert abs(tone_curve_eval(p, 1.0) - 1.0) <= 1e-12
        x = np.linspace(0.0, 1.0, 257)
        assert np.all(np.diff(tone_curve_eval(p, x)) > 0)

    @pytest.mark.parametrize("delta", [0.01, 0.3, 4.0])
    def test_symmetric_midpoint(self, delta):
        assert tone_curve_eval(ToneCurveParams(0.5, delta), 0.5) == pytest.approx(0.5, abs=1e-15)

    def test_identity_limit(self):
        x = np.linspace(0.1, 0.9, 9)
        np.testing.assert_allclose(tone_curve_eval(ToneCurveParams(0.5, 10.0), x), x, atol=1e-3)

    def test_params_validated(self):
        with pytest.raises(ValueError):
            ToneCurveParams(1.2, 0.5)
        with pytest.raises(ValueError):
            ToneCurveParams(0.5, 0.001)


class TestToneTarget:
    def test_cap_limits_shift(self):
        x = np.linspace(0, 1, 32)
        t = tone_target(x, np.clip(x + 0.8, 0, 1), 0.4)
        assert np.abs(t - x).max() == pytest.approx(0.4)

    def test_cap_passes_small_shift(self):
        x = np.linspace(0, 1, 32)
        y = x + 0.1 * np.sin(np.pi * x)
        np.testing.assert_allclose(tone_target(x, y, 0.4), y, atol=1e-15)

    def test_literal_amplifies(self):
        x = np.linspace(0, 1, 32)
        y = x + 0.1 * np.sin(np.pi * x)
        t = tone_target(x, y, 0.4, "literal")
        sup = np.abs(y - x).max()
        np.testing.assert_allclose(t - x, (y - x) * 0.4 / sup, atol=1e-15)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            tone_target(np.zeros(32), np.zeros(32), 0.4, "other")


def ramp_feature() -> LumaFeature:
    return LumaFeature((np.arange(32) + 0.5) / 32)


class TestFitToneCurve:
    def test_identical_features(self):
        x = ramp_feature()
        fit = fit_tone_curve(x, x)
        assert tone_cost(fit.m, fit.delta, x.q, x.q) <= tone_cost(0.5, 4.0, x.q, x.q)

    def test_recovers_known_curve(self):
        x = ramp_feature()
        truth = ToneCurveParams(0.4, 0.3)
        y = tone_curve_eval(truth, x.q)
        assert np.abs(y - x.q).max() <= 0.4
        fit = fit_tone_curve(x, LumaFeature(y))
        assert np.abs(tone_curve_eval(fit, x.q) - y).max() <= 0.01

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["cap", "literal"]))
    def test_beats_dense_grid(self, seed, mode):
        rng = np.random.default_rng(seed)
        x = np.sort(rng.beta(rng.uniform(0.5, 3), rng.uniform(0.5, 3), 32))
        y = np.sort(rng.beta(rng.uniform(0.5, 3), rng.uniform(0.5, 3), 32))
        fit = fit_tone_curve(LumaFeature(x), LumaFeature(y), 0.4, mode)
        target = tone_target(x, y, 0.4, mode)
        assert tone_cost(fit.m, fit.delta, x, target) <= dense_grid_best(x, target) + 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        x, y = LumaFeature(np.sort(rng.random(32))), LumaFeature(np.sort(rng.random(32)))
        assert fit_tone_curve(x, y) == fit_tone_curve(x, y)


class TestApplyTone:
    def test_identity_like(self):
        L = np.linspace(0, 1, 101).reshape(1, -1)
        out = apply_tone(lab_planes(L), ToneCurveParams(0.5, 10.0))
        assert np.abs(out.L - L).max() <= 2e-3

    def test_matches_curve(self):
        rng = np.random.default_rng(4)
        L = rng.random((20, 20))
        p = ToneCurveParams(0.3, 0.08)
        out = apply_tone(lab_planes(L), p)
        assert np.abs(out.L - tone_curve_eval(p, L)).max() <= 1e-4

    def test_rank_order_and_endpoints(self):
        rng = np.random.default_rng(5)
        L = rng.random(400)
        L[:2] = [0.0, 1.0]
        out = apply_tone(lab_planes(L.reshape(20, 20), 2.0, -1.0), ToneCurveParams(0.7, 0.05))
        flat = out.L.ravel()
        order = np.argsort(L, kind="stable")
        assert np.all(np.diff(flat[order]) >= 0)
        assert flat[0] == 0.0 and flat[1] == 1.0
        assert np.all(out.a == 2.0) and np.all(out.b == -1.0)


class TestFaceCorrection:
    def test_bright_face_untouched(self):
        img = lab_planes(np.full((21, 21), 0.8))
        assert correct_face_exposure(img, [FaceRegion((10, 10), 4)]) is img

    def test_no_faces(self):
        img = lab_planes(np.full((5, 5), 0.1))
        assert correct_face_exposure(img, []) is img

    def test_dark_face_center(self):
        img = lab_planes(np.full((41, 41), 0.1))
        out = correct_face_exposure(img, [FaceRegion((20, 20), 4)], FaceCorrectionConfig(l_th=0.3))
        assert out.L[20, 20] == pytest.approx(math.sqrt(0.1), abs=1e-12)
        assert out.L[20, 20] == pytest.approx(0.3162, abs=1e-4)

    def test_weight_at_three_radii(self):
        img = lab_planes(np.full((41, 61), 0.1))
        out = correct_face_exposure(img, [FaceRegion((10, 20), 5)])
        change = out.L[20, 25] - 0.1
        full = math.sqrt(0.1) - 0.1
        assert change == pytest.approx(math.exp(-0.45 * 9) * full, rel=1e-9)
        assert change / full == pytest.approx(0.0174, abs=1e-4)

    def test_gamma_floor_not_hit(self):
        L = np.full((21, 21), 0.25)
        out = correct_face_exposure(lab_planes(L), [FaceRegion((10, 10), 3)])
        gamma = 0.65 * 0.25 / 0.3
        assert out.L[10, 10] == pytest.approx(0.25**gamma, abs=1e-12)

    def test_chroma_weight(self):
        L = np.full((21, 21), 0.1)
        a = np.zeros((21, 21))
        a[10, 12] = 30.0
        out = correct_face_exposure(lab_planes(L, a), [FaceRegion((10, 10), 8)])
        spatial = math.exp(-0.45 * (2 / 8) ** 2)
        want = 0.1 + spatial * math.exp(-0.001 * 900) * (math.sqrt(0.1) - 0.1)
        assert out.L[10, 12] == pytest.approx(want, rel=1e-9)

    def test_never_darkens(self):
        rng = np.random.default_rng(6)
        L = rng.random((30, 30)) * 0.4
        out = correct_face_exposure(
            lab_planes(L, rng.normal(0, 20, (30, 30))), [FaceRegion((15, 15), 6), FaceRegion((3, 25), 2)]
        )
        assert np.all(out.L >= L)

    def test_center_outside(self):
        with pytest.raises(ValueError):
            correct_face_exposure(lab_planes(np.full((5, 5), 0.1)), [FaceRegion((9, 1), 2)])

    def test_load_faces(self, tmp_path):
        path = tmp_path / "faces.json"
        path.write_text(json.dumps([{"cx": 3, "cy": 4, "r": 5}]))
        assert load_faces(path) == [FaceRegion((3.0, 4.0), 5.0)]
        path.write_text(json.dumps([{"cx": 3}]))
        with pytest.raises(ValueError):
            load_faces(path)
        path.write_text(json.dumps({"cx": 3}))
        with pytest.raises(ValueError):
            load_faces(path)


class TestTransferStyle:
    def test_self_transfer_near_identity(self):
        rng = np.random.default_rng(7)
        img = smooth_image(rng, 64, 80)
        prepared = prepare_input(img)
        out = transfer_style(img, style_descriptor(prepared.lab))
        ref = lab_to_srgb(prepared.lab)
        assert np.abs(out.pixels - ref.pixels).mean(axis=(0, 1)).max() <= 0.02

    def test_grayscale_input(self):
        rng = np.random.default_rng(8)
        gray = smooth_image(rng, 40, 40).pixels.mean(axis=2)
        img = RgbImage(np.repeat(gray[..., None], 3, axis=2))
        style = style_descriptor(gaussian_lab(rng, 1600, [20.0, -10.0], [[900.0, 200.0], [200.0, 600.0]], h=40))
        prepared = prepare_input(img)
        res = render(prepared, style)
        assert np.isfinite(res.image.pixels).all()
        assert res.image.pixels.min() >= 0.0 and res.image.pixels.max() <= 1.0
        # the floor keeps the output spread at or below the style's
        out_cov = chroma_stats(apply_chroma(prepared.lab, res.chroma_map)).cov
        assert np.trace(out_cov) <= np.trace(style.chroma.cov)

    @pytest.mark.parametrize("seed", range(4))
    def test_luma_shift_bounded(self, seed):
        rng = np.random.default_rng(100 + seed)
        prepared = prepare_input(smooth_image(rng, 48, 64))
        style = style_descriptor(srgb_to_lab(smooth_image(rng, 48, 64)))
        style = type(style)(style.chroma, LumaFeature(np.clip(style.luma.q ** rng.uniform(0.2, 5), 0, 1)))
        res = render(prepared, style)
        # luminance after tone mapping, before gamut clamping
        lab = apply_tone(apply_chroma(prepared.lab, res.chroma_map), res.tone)
        shift = np.abs(luma_feature(lab).q - prepared.descriptor.luma.q).max()
        assert shift <= 0.45

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        img = smooth_image(rng)
        style = style_descriptor(srgb_to_lab(smooth_image(rng)))
        assert np.array_equal(transfer_style(img, style).pixels, transfer_style(img, style).pixels)

    def test_fused_matches_stepwise(self):
        rng = np.random.default_rng(10)
        prepared = prepare_input(smooth_image(rng, 50, 70))
        style = style_descriptor(srgb_to_lab(smooth_image(rng, 50, 70)))
        res = render(prepared, style)
        step = lab_to_srgb(apply_tone(apply_chroma(prepared.lab, res.chroma_map), res.tone))
        assert np.abs(res.image.pixels - step.pixels).max() <= 1e-6

    def test_faces_brighten_dark_region(self):
        rng = np.random.default_rng(11)
        px = smooth_image(rng, 60, 60).pixels.copy()
        px[20:40, 20:40] = np.linspace(0.03, 0.08, 20)[None, :, None]
        style = style_descriptor(srgb_to_lab(smooth_image(rng, 60, 60)))
        cfg = TransferConfig(face=FaceCorrectionConfig(l_th=0.9))
        plain = transfer_style(RgbImage(px), style, (), cfg)
        lifted = transfer_style(RgbImage(px), style, [FaceRegion((30, 30), 10)], cfg)
        assert lifted.pixels[30, 30].mean() > plain.pixels[30, 30].mean()

    def test_expand_mode_runs(self):
        rng = np.random.default_rng(12)
        img = smooth_image(rng)
        cfg = TransferConfig(gamma_compress=False)
        out = transfer_style(img, style_descriptor(srgb_to_lab(smooth_image(rng), compress=False)), (), cfg)
        assert np.isfinite(out.pixels).all()
