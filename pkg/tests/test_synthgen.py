import numpy as np
import pytest
from scipy.signal import argrelmax

from fringedet.annotations import read_annotations
from fringedet.errors import ConfigError, PlacementError
from fringedet.gridcodec import GridSpec, encode
from fringedet.synthgen import (
    SceneConfig,
    directory_digest,
    fringe_profile,
    generate_dataset,
    generate_frames,
    generate_scene,
    load_png,
    render_clean,
    style_hook,
)

DESK = SceneConfig.desk(seed=5)


def test_same_seed_same_frame():
    a, anns_a = generate_scene(DESK, 3)
    b, anns_b = generate_scene(DESK, 3)
    assert np.array_equal(a, b)
    assert anns_a == anns_b


def test_different_index_differs():
    a, _ = generate_scene(DESK, 0)
    b, _ = generate_scene(DESK, 1)
    assert not np.array_equal(a, b)


def test_frame_independent_of_batch_position():
    imgs, _ = generate_frames(DESK, 5)
    imgs2, _ = generate_frames(DESK, 2, start=3)
    assert np.array_equal(imgs[3], imgs2[0])


@pytest.mark.parametrize("rings", range(1, 12))
def test_profile_has_one_maximum_per_ring(rings):
    rho = np.linspace(0, 1, 20001)
    prof = fringe_profile(rho, rings)
    assert len(argrelmax(prof)[0]) == rings
    assert prof[0] == pytest.approx(0.0)
    assert prof[-1] == pytest.approx(0.0, abs=1e-12)


def test_rendered_radial_profile_counts_rings():
    cfg = SceneConfig.desk(noise_sigma=0.0, wave_amplitude=(0.0, 0.0), n_antinodes=(1, 1),
                           rings_range=(4, 4), axis_range=(18, 18), min_axis_ratio=1.0)
    _, anns = generate_scene(cfg, 0)
    e = anns[0].ellipse
    img = render_clean(cfg, anns, np.full((cfg.height, cfg.width), 0.5))
    # sample along the major axis at sub-pixel spacing with bilinear lookup
    from scipy.ndimage import map_coordinates
    t = np.linspace(0, 0.999 * e.a, 400)
    ang = np.radians(e.theta)
    xs, ys = e.cx + t * np.cos(ang), e.cy + t * np.sin(ang)
    prof = map_coordinates(img, [ys, xs], order=1)
    peaks = argrelmax(np.round(prof, 6))[0]
    assert len(peaks) == 4


def test_annotations_are_encodable_and_in_frame():
    spec = GridSpec(DESK.width, DESK.height)
    _, anns = generate_frames(DESK, 50)
    for frame in anns:
        encode(frame, spec)  # no CellOverflow
        for a in frame:
            e = a.ellipse
            hx, hy = e.half_extents()
            assert e.cx - hx >= 0 and e.cx + hx <= DESK.width - 1
            assert e.cy - hy >= 0 and e.cy + hy <= DESK.height - 1
            assert e.a >= e.b > 0
            assert DESK.rings_range[0] <= a.rings <= DESK.rings_range[1]


def test_antinodes_do_not_overlap():
    _, anns = generate_frames(DESK, 50)
    for frame in anns:
        for i, p in enumerate(frame):
            for q in frame[i + 1:]:
                d = np.hypot(p.ellipse.cx - q.ellipse.cx, p.ellipse.cy - q.ellipse.cy)
                assert d > p.ellipse.a + q.ellipse.a


def test_zero_antinodes_is_background_only():
    cfg = SceneConfig.desk(n_antinodes=(0, 0), seed=1)
    img, anns = generate_scene(cfg, 0)
    assert anns == []
    assert img.shape == (64, 64) and img.dtype == np.uint8


def test_placement_failure():
    cfg = SceneConfig.desk(n_antinodes=(9, 9), axis_range=(14, 18), max_tries=20)
    with pytest.raises(PlacementError):
        generate_scene(cfg, 0)


def test_oversized_antinode():
    cfg = SceneConfig.desk(axis_range=(40, 40), min_axis_ratio=1.0)
    with pytest.raises(PlacementError):
        generate_scene(cfg, 0)


def test_bad_config():
    with pytest.raises(ConfigError):
        SceneConfig(rings_range=(5, 2))
    with pytest.raises(ConfigError):
        SceneConfig(min_axis_ratio=0)


def test_style_hook():
    img = np.arange(16, dtype=np.uint8).reshape(4, 4)
    assert style_hook(img) is img
    assert np.array_equal(style_hook(img, lambda x: 255 - x), 255 - img)
    with pytest.raises(ValueError):
        style_hook(img, lambda x: x[:2])


def test_dataset_on_disk(tmp_path):
    m = generate_dataset(DESK, 4, tmp_path / "d")
    back = read_annotations(tmp_path / "d")
    assert [r.image_path for r in back.records] == [r.image_path for r in m.records]
    for r1, r2 in zip(back.records, m.records):
        assert len(r1.annotations) == len(r2.annotations)
        for x, y in zip(r1.annotations, r2.annotations):
            ex, ey = x.ellipse, y.ellipse
            # files carry six decimals
            assert np.allclose([ex.cx, ex.cy, ex.a, ex.b, ex.theta, x.rings],
                               [ey.cx, ey.cy, ey.a, ey.b, ey.theta, y.rings], atol=5e-7, rtol=0)
    assert (back.image_width, back.image_height) == (64, 64)
    img0, _ = generate_scene(DESK, 0)
    assert np.array_equal(load_png(tmp_path / "d" / "images" / "frame_000000.png"), img0)


def test_dataset_digest_reproducible(tmp_path):
    generate_dataset(DESK, 6, tmp_path / "a")
    generate_dataset(DESK, 6, tmp_path / "b")
    assert directory_digest(tmp_path / "a") == directory_digest(tmp_path / "b")
    generate_dataset(SceneConfig.desk(seed=6), 6, tmp_path / "c")
    assert directory_digest(tmp_path / "a") != directory_digest(tmp_path / "c")
