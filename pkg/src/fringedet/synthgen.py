"""Procedural fake ESPI frames with exact annotations.

Each scene is a wavy low-frequency background with a few elliptical
antinodes pasted on top. Inside an antinode the intensity follows the
normalized elliptical radius ``rho`` (0 at the center, 1 on the boundary)::

    I(rho) = (1 - cos(2 pi r rho)) / 2

which has exactly ``r`` bright fringes strictly inside the ellipse, a dark
center, and a dark rim. Gaussian pixel noise and an optional blur follow.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from fringedet.annotations import Annotation, DatasetManifest, FrameRecord, write_annotations
from fringedet.errors import ConfigError, IoError, PlacementError
from fringedet.geometry import Ellipse

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneConfig:
    width: int = 512
    height: int = 384
    n_antinodes: tuple = (1, 6)
    rings_range: tuple = (1, 11)
    axis_range: tuple = (20.0, 90.0)
    min_axis_ratio: float = 0.4
    background_waves: tuple = (2, 5)
    wave_amplitude: tuple = (0.05, 0.2)
    wave_period: tuple = (0.5, 2.0)  # in units of image width
    fringe_contrast: float = 1.0
    noise_sigma: float = 8.0  # gray levels on the 0..255 scale
    blur_sigma: float = 0.0
    min_ring_spacing: float = 2.5  # pixels per fringe along the semi-minor axis
    grid: tuple = (6, 6)
    max_per_cell: int = 2
    max_tries: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("n_antinodes", "rings_range", "axis_range", "background_waves",
                     "wave_amplitude", "wave_period"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: empty range ({lo}, {hi})")
        if self.n_antinodes[0] < 0 or self.rings_range[0] < 1:
            raise ConfigError("n_antinodes must be >= 0 and rings_range >= 1")
        if self.axis_range[0] <= 0:
            raise ConfigError("axis_range must be positive")
        if not 0 < self.min_axis_ratio <= 1:
            raise ConfigError("min_axis_ratio must lie in (0, 1]")
        if self.width < 8 or self.height < 8:
            raise ConfigError("image too small")

    @classmethod
    def desk(cls, **overrides) -> "SceneConfig":
        """64x64 preset sized for CPU training.

        Fringes are at least 4 px apart so they survive the detector's
        initial 2x downsampling.
        """
        base = dict(
            width=64, height=64, n_antinodes=(1, 3), rings_range=(1, 4),
            axis_range=(6.0, 14.0), min_axis_ratio=0.5, wave_amplitude=(0.03, 0.12),
            noise_sigma=6.0, blur_sigma=0.0, min_ring_spacing=4.0,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


def _scene_rng(seed: int, index: Optional[int]) -> np.random.Generator:
    if index is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _background(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    h, w = cfg.height, cfg.width
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    img = np.full((h, w), 0.5)
    for _ in range(int(rng.integers(cfg.background_waves[0], cfg.background_waves[1] + 1))):
        ang = rng.uniform(0, np.pi)
        period = rng.uniform(*cfg.wave_period) * w
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(*cfg.wave_amplitude)
        k = 2 * np.pi / period
        img += amp * np.sin(k * (xx * np.cos(ang) + yy * np.sin(ang)) + phase)
    return img


def _cells_ok(cfg: SceneConfig, placed: list, cand: Ellipse) -> bool:
    rows, cols = cfg.grid
    cw, ch = cfg.width / cols, cfg.height / rows

    def cell(e):
        return (min(int(e.cy // ch), rows - 1), min(int(e.cx // cw), cols - 1))

    target = cell(cand)
    return sum(1 for e in placed if cell(e) == target) < cfg.max_per_cell


def _sample_antinode(cfg: SceneConfig, rng: np.random.Generator, rings: int) -> Ellipse:
    lo, hi = cfg.axis_range
    a = rng.uniform(lo, hi)
    b = a * rng.uniform(cfg.min_axis_ratio, 1.0)
    # the semi-minor axis must have room to resolve every fringe
    b = max(b, rings * cfg.min_ring_spacing)
    a = max(a, b)
    theta = rng.uniform(0.0, 180.0)
    e = Ellipse(0.0, 0.0, a, b, theta)
    hx, hy = e.half_extents()
    if 2 * hx >= cfg.width - 2 or 2 * hy >= cfg.height - 2:
        raise PlacementError(f"antinode of semi-axes ({a:.1f}, {b:.1f}) does not fit in the frame")
    cx = rng.uniform(hx, cfg.width - 1 - hx)
    cy = rng.uniform(hy, cfg.height - 1 - hy)
    return Ellipse(cx, cy, a, b, theta)


def _place(cfg: SceneConfig, rng: np.random.Generator, n: int) -> list:
    placed, rings_out = [], []
    for _ in range(n):
        for _ in range(cfg.max_tries):
            # ring count is redrawn with each try: many-ring antinodes are
            # large, so a crowded frame falls back to smaller ones
            rings = int(rng.integers(cfg.rings_range[0], cfg.rings_range[1] + 1))
            cand = _sample_antinode(cfg, rng, rings)
            far = all(math.hypot(cand.cx - e.cx, cand.cy - e.cy) > cand.a + e.a for e in placed)
            if far and _cells_ok(cfg, placed, cand):
                placed.append(cand)
                rings_out.append(rings)
                break
        else:
            raise PlacementError(f"could not place antinode {len(placed) + 1} of {n} after {cfg.max_tries} tries")
    return [Annotation(e, float(r)) for e, r in zip(placed, rings_out)]


def fringe_profile(rho, rings: float):
    """Fringe intensity in [0, 1] at normalized elliptical radius ``rho``."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * rings * np.asarray(rho)))


def render_clean(cfg: SceneConfig, annotations, background: np.ndarray) -> np.ndarray:
    """Background plus fringe patches, before noise and blur; values in [0, 1]."""
    img = background.copy()
    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width].astype(float)
    for ann in annotations:
        e = ann.ellipse
        t = math.radians(e.theta)
        dx, dy = xx - e.cx, yy - e.cy
        u = dx * math.cos(t) + dy * math.sin(t)
        v = -dx * math.sin(t) + dy * math.cos(t)
        rho = np.sqrt((u / e.a) ** 2 + (v / e.b) ** 2)
        inside = rho <= 1.0
        fr = fringe_profile(rho[inside], ann.rings)
        mean = img[inside].mean() if inside.any() else 0.5
        img[inside] = (1 - cfg.fringe_contrast) * mean + cfg.fringe_contrast * fr
    return np.clip(img, 0.0, 1.0)


def generate_scene(cfg: SceneConfig, index: Optional[int] = None):
    """Render one frame.

    Returns ``(image, annotations)`` where ``image`` is a ``(height, width)``
    uint8 array. The result depends only on ``cfg`` (and ``index``, which
    selects an independent sub-seed of ``cfg.seed`` for dataset frames).
    """
    rng = _scene_rng(cfg.seed, index)
    bg = _background(cfg, rng)
    n = int(rng.integers(cfg.n_antinodes[0], cfg.n_antinodes[1] + 1))
    anns = _place(cfg, rng, n)
    img = render_clean(cfg, anns, bg) * 255.0
    if cfg.noise_sigma > 0:
        img = img + rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    if cfg.blur_sigma > 0:
        img = gaussian_filter(img, cfg.blur_sigma)
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return img, anns


def style_hook(image: np.ndarray, styler: Optional[Callable] = None) -> np.ndarray:
    """Apply a caller-supplied image-to-image transform (identity by default).

    This is where a learned style-transfer model would plug in; annotations
    are never passed to the styler.
    """
    if styler is None:
        return image
    out = np.asarray(styler(image))
    if out.shape != np.shape(image):
        raise ValueError(f"styler changed the image shape from {np.shape(image)} to {out.shape}")
    return out


def save_png(path, image: np.ndarray):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG", optimize=False)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc


def generate_frames(cfg: SceneConfig, n_images: int, start: int = 0):
    """In-memory frames ``(images, annotation lists)`` for indices ``start..start+n-1``."""
    imgs, anns = [], []
    for i in range(start, start + n_images):
        img, a = generate_scene(cfg, i)
        imgs.append(img)
        anns.append(a)
    return imgs, anns


def generate_dataset(cfg: SceneConfig, n_images: int, out_dir, styler: Optional[Callable] = None,
                     name: str = "fake") -> DatasetManifest:
    """Write ``n_images`` PNG frames, their annotation CSVs, and ``manifest.csv``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    records = []
    for i in range(n_images):
        img, anns = generate_scene(cfg, i)
        img = style_hook(img, styler)
        rel = f"images/frame_{i:06d}.png"
        save_png(out / rel, img)
        records.append(FrameRecord(rel, i, tuple(anns)))
    manifest = DatasetManifest(name, "all", records, cfg.width, cfg.height)
    write_annotations(manifest, out / "manifest.csv")
    log.info("wrote %d frames to %s", n_images, out)
    return manifest


def directory_digest(root) -> str:
    """SHA-256 over every file's relative path and bytes, in sorted order."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()
