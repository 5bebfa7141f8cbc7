import numpy as np
import pytest

from fringedet.annotations import Annotation
from fringedet.augment import (
    AugmentConfig,
    RigidDraw,
    augment_rng,
    stage1_apply,
    stage1_expand,
    stage2_apply,
    stage2_batch,
    transform_annotations,
)
from fringedet.geometry import Ellipse, ellipse_iou, ellipse_mask

W, H = 64, 48
ANN = [Annotation(Ellipse(20.0, 15.0, 10.0, 5.0, 30.0), 3.0)]


def _mask_image(anns):
    img = np.zeros((H, W))
    for a in anns:
        img[ellipse_mask(a.ellipse, W, H)] = 1.0
    return img


def _mask_iou(m1, m2):
    m1, m2 = m1 > 0.5, m2 > 0.5
    return np.count_nonzero(m1 & m2) / np.count_nonzero(m1 | m2)


def test_off_is_identity():
    cfg = AugmentConfig.off()
    img = np.random.default_rng(0).uniform(size=(H, W))
    out, anns = stage1_apply(img, ANN, cfg, np.random.default_rng(1))
    assert np.array_equal(out, img)
    assert anns == ANN
    assert np.array_equal(stage2_apply(img, cfg, np.random.default_rng(2)), img)


def test_translation_moves_center_and_pixels():
    img = _mask_image(ANN)
    draw = RigidDraw(dx=5.0, dy=-3.0)
    out, anns = stage1_apply(img, ANN, AugmentConfig.off(), np.random.default_rng(0), draw)
    e = anns[0].ellipse
    assert (e.cx, e.cy) == pytest.approx((25.0, 12.0))
    assert (e.a, e.b, e.theta) == pytest.approx((10.0, 5.0, 30.0))
    # an integer shift is exact under linear interpolation
    np.testing.assert_allclose(out[:H - 3, 5:], img[3:, :W - 5], atol=1e-12)
    assert _mask_iou(out, _mask_image(anns)) > 0.95


@pytest.mark.parametrize("draw", [
    RigidDraw(hflip=True),
    RigidDraw(vflip=True),
    RigidDraw(hflip=True, vflip=True),
    RigidDraw(angle_deg=25.0),
    RigidDraw(angle_deg=-8.0, dx=3.0, dy=2.0, hflip=True),
])
def test_pixels_and_labels_move_together(draw):
    """Rasterize the transformed label and compare with the transformed raster."""
    img = _mask_image(ANN)
    out, anns = stage1_apply(img, ANN, AugmentConfig.off(), np.random.default_rng(0), draw)
    assert len(anns) == 1
    assert _mask_iou(out, _mask_image(anns)) > 0.9


def test_hflip_reflects_angle():
    (a,) = transform_annotations(ANN, RigidDraw(hflip=True), W, H)
    assert a.ellipse.cx == pytest.approx(W - 1 - 20.0)
    assert a.ellipse.theta == pytest.approx(150.0)
    mirrored = Ellipse(W - 1 - 20.0, 15.0, 10.0, 5.0, -30.0)
    assert ellipse_iou(a.ellipse, mirrored) == pytest.approx(1.0, abs=1e-3)


def test_double_flip_is_rotation_by_180():
    (a,) = transform_annotations(ANN, RigidDraw(hflip=True, vflip=True), W, H)
    assert a.ellipse.theta == pytest.approx(30.0)
    assert (a.ellipse.cx, a.ellipse.cy) == pytest.approx((W - 1 - 20.0, H - 1 - 15.0))


def test_center_leaving_frame_is_dropped():
    assert transform_annotations(ANN, RigidDraw(dx=-25.0), W, H) == []


def test_rings_preserved():
    anns = transform_annotations(ANN, RigidDraw(angle_deg=10, dx=1), W, H)
    assert anns[0].rings == 3.0


def test_stage1_expand_count_and_originals_first():
    imgs = [np.full((H, W), 0.3), np.full((H, W), 0.6)]
    anns = [ANN, []]
    cfg = AugmentConfig.desk(stage1_copies=4)
    out_i, out_a = stage1_expand(imgs, anns, cfg)
    assert len(out_i) == len(out_a) == 8
    assert np.array_equal(out_i[0], imgs[0]) and out_a[0] == ANN
    again = stage1_expand(imgs, anns, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(out_i, again[0]))


def test_cutout_fills_rectangles():
    cfg = AugmentConfig.off(cutout_prob=1.0, cutout_count=(1, 1), cutout_size=(0.25, 0.25), cutout_fill=0.5)
    img = np.zeros((H, W))
    out = stage2_apply(img, cfg, np.random.default_rng(0))
    filled = out == 0.5
    rows, cols = np.nonzero(filled)
    assert filled.sum() == 12 * 16
    assert rows.max() - rows.min() + 1 == 12 and cols.max() - cols.min() + 1 == 16


def test_stage2_is_deterministic_per_epoch_and_frame():
    cfg = AugmentConfig.desk(seed=9)
    imgs = [np.random.default_rng(i).uniform(size=(H, W)) for i in range(3)]
    a = stage2_batch(imgs, cfg, epoch=2)
    b = stage2_batch(imgs, cfg, epoch=2)
    c = stage2_batch(imgs, cfg, epoch=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))


def test_stage2_stays_in_unit_range():
    cfg = AugmentConfig(noise_prob=1.0, noise_sigma=(0.5, 0.5), brightness_prob=1.0, contrast_prob=1.0)
    out = stage2_apply(np.random.default_rng(0).uniform(size=(H, W)), cfg, augment_rng(0, 0))
    assert out.min() >= 0.0 and out.max() <= 1.0
