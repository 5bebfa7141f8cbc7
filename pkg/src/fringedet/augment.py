"""Two-stage data augmentation.

Stage 1 is an offline preprocessing step that moves pixels and annotations
together (reflection, rotation about the image center, translation).
Stage 2 runs at the start of every training epoch and touches pixels only.

Images here are float arrays in [0, 1] with shape ``(height, width)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import affine_transform, gaussian_filter

from fringedet.geometry import Ellipse, normalize


@dataclass(frozen=True)
class AugmentConfig:
    # stage 1
    rotation_deg: tuple = (-10.0, 10.0)
    translation_px: tuple = (-40.0, 40.0)
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    stage1_noise_sigma: tuple = (0.0, 0.0)
    stage1_blur_sigma: tuple = (0.0, 0.0)
    stage1_copies: int = 41
    # stage 2; each transform fires with its own probability
    blur_prob: float = 0.3
    blur_sigma: tuple = (0.3, 1.0)
    noise_prob: float = 0.5
    noise_sigma: tuple = (0.0, 0.04)
    cutout_prob: float = 0.5
    cutout_count: tuple = (1, 3)
    cutout_size: tuple = (0.05, 0.15)  # fraction of image width/height
    cutout_fill: float = 0.5
    brightness_prob: float = 0.5
    brightness: tuple = (-0.1, 0.1)
    contrast_prob: float = 0.5
    contrast: tuple = (0.8, 1.2)
    seed: int = 0

    @classmethod
    def off(cls, **overrides) -> "AugmentConfig":
        """Every transform disabled; both stages become the identity."""
        base = dict(
            rotation_deg=(0.0, 0.0), translation_px=(0.0, 0.0), hflip_prob=0.0, vflip_prob=0.0,
            blur_prob=0.0, noise_prob=0.0, cutout_prob=0.0, brightness_prob=0.0, contrast_prob=0.0,
            stage1_copies=1,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk(cls, **overrides) -> "AugmentConfig":
        """Ranges for 64-pixel frames.

        Fringe patterns have no preferred orientation, so rotations cover the
        full circle. Shifts of up to a third of the frame move each antinode
        through several grid cells, which the dense head otherwise sees too
        rarely to generalize across positions.
        """
        base = dict(rotation_deg=(-180.0, 180.0), translation_px=(-20.0, 20.0), noise_sigma=(0.0, 0.03),
                    cutout_size=(0.05, 0.12))
        base.update(overrides)
        return cls(**base)


def augment_rng(seed: int, frame: int, epoch: int = 0, stage: int = 2) -> np.random.Generator:
    """Independent stream per (seed, stage, epoch, frame)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stage, epoch, frame)))


@dataclass(frozen=True)
class RigidDraw:
    angle_deg: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    hflip: bool = False
    vflip: bool = False

    def is_identity(self) -> bool:
        return self.angle_deg == 0 and self.dx == 0 and self.dy == 0 and not (self.hflip or self.vflip)


def sample_rigid(cfg: AugmentConfig, rng: np.random.Generator) -> RigidDraw:
    return RigidDraw(
        angle_deg=float(rng.uniform(*cfg.rotation_deg)),
        dx=float(rng.uniform(*cfg.translation_px)),
        dy=float(rng.uniform(*cfg.translation_px)),
        hflip=bool(rng.random() < cfg.hflip_prob),
        vflip=bool(rng.random() < cfg.vflip_prob),
    )


def _forward_matrix(draw: RigidDraw, width: int, height: int):
    """Affine map ``p' = M p + t`` in (x, y) pixel coordinates: flip, rotate about center, shift."""
    f = np.diag([-1.0 if draw.hflip else 1.0, -1.0 if draw.vflip else 1.0])
    f_off = np.array([width - 1.0 if draw.hflip else 0.0, height - 1.0 if draw.vflip else 0.0])
    phi = math.radians(draw.angle_deg)
    rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    m = rot @ f
    t = rot @ (f_off - center) + center + np.array([draw.dx, draw.dy])
    return m, t


def transform_annotations(annotations, draw: RigidDraw, width: int, height: int):
    """Apply the rigid map to each ellipse; drop antinodes whose centers leave the frame."""
    m, t = _forward_matrix(draw, width, height)
    flipped = draw.hflip != draw.vflip
    out = []
    for ann in annotations:
        e = ann.ellipse
        cx, cy = m @ np.array([e.cx, e.cy]) + t
        if not (0 <= cx < width and 0 <= cy < height):
            continue
        theta = -e.theta if flipped else e.theta
        theta += draw.angle_deg
        ne = normalize(Ellipse(float(cx), float(cy), e.a, e.b, theta))
        out.append(replace(ann, ellipse=ne))
    return out


def transform_image(image: np.ndarray, draw: RigidDraw, fill=None) -> np.ndarray:
    if draw.is_identity():
        return image.copy()
    h, w = image.shape
    m, t = _forward_matrix(draw, w, h)
    inv = np.linalg.inv(m)
    # affine_transform works in (row, col) = (y, x) index order
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    inv_rc = swap @ inv @ swap
    off_rc = swap @ (-inv @ t)
    if fill is None:
        fill = float(image.mean())
    return affine_transform(image, inv_rc, offset=off_rc, order=1, mode="constant", cval=fill)


def stage1_apply(image, annotations, cfg: AugmentConfig, rng: np.random.Generator, draw: RigidDraw | None = None):
    """Jointly transform one frame and its annotations.

    ``draw`` overrides the random rigid transform (the rng is still used for
    the optional stage-1 noise and blur).
    """
    image = np.asarray(image, dtype=float)
    if draw is None:
        draw = sample_rigid(cfg, rng)
    h, w = image.shape
    out = transform_image(image, draw)
    anns = transform_annotations(annotations, draw, w, h)
    blur = rng.uniform(*cfg.stage1_blur_sigma)
    if blur > 0:
        out = gaussian_filter(out, blur)
    noise = rng.uniform(*cfg.stage1_noise_sigma)
    if noise > 0:
        out = out + rng.normal(0, noise, size=out.shape)
    return np.clip(out, 0.0, 1.0), anns


def stage1_expand(images, annotations, cfg: AugmentConfig):
    """Originals followed by ``stage1_copies - 1`` augmented copies of each frame.

    Copy ``k`` of frame ``i`` uses the rng stream ``(seed, stage 1, k, i)``.
    """
    out_imgs, out_anns = [], []
    for i, (img, anns) in enumerate(zip(images, annotations)):
        out_imgs.append(np.asarray(img, dtype=float))
        out_anns.append(list(anns))
    for k in range(1, max(1, cfg.stage1_copies)):
        for i, (img, anns) in enumerate(zip(images, annotations)):
            im2, an2 = stage1_apply(img, anns, cfg, augment_rng(cfg.seed, i, k, stage=1))
            out_imgs.append(im2)
            out_anns.append(an2)
    return out_imgs, out_anns


def stage2_apply(image, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Pixel-only perturbations: blur, noise, cutout, brightness, contrast."""
    img = np.array(image, dtype=float, copy=True)
    h, w = img.shape
    if rng.random() < cfg.blur_prob:
        img = gaussian_filter(img, rng.uniform(*cfg.blur_sigma))
    if rng.random() < cfg.noise_prob:
        img = img + rng.normal(0.0, rng.uniform(*cfg.noise_sigma), size=img.shape)
    if rng.random() < cfg.cutout_prob:
        for _ in range(int(rng.integers(cfg.cutout_count[0], cfg.cutout_count[1] + 1))):
            rh = max(1, int(round(rng.uniform(*cfg.cutout_size) * h)))
            rw = max(1, int(round(rng.uniform(*cfg.cutout_size) * w)))
            y0 = int(rng.integers(0, h - rh + 1))
            x0 = int(rng.integers(0, w - rw + 1))
            img[y0:y0 + rh, x0:x0 + rw] = cfg.cutout_fill
    if rng.random() < cfg.brightness_prob:
        img = img + rng.uniform(*cfg.brightness)
    if rng.random() < cfg.contrast_prob:
        m = img.mean()
        img = (img - m) * rng.uniform(*cfg.contrast) + m
    return np.clip(img, 0.0, 1.0)


def stage2_batch(images, cfg: AugmentConfig, epoch: int, indices=None):
    if indices is None:
        indices = range(len(images))
    return [stage2_apply(img, cfg, augment_rng(cfg.seed, int(i), epoch, stage=2)) for img, i in zip(images, indices)]
