"""Elliptical fringe-antinode detection and ring counting for ESPI frames."""

from fringedet.geometry import Ellipse, angle_decode, angle_encode, area, ecc_squared, ellipse_iou, normalize
from fringedet.annotations import Annotation, DatasetManifest, Detection, FrameRecord

__all__ = [
    "Annotation",
    "DatasetManifest",
    "Detection",
    "Ellipse",
    "FrameRecord",
    "angle_decode",
    "angle_encode",
    "area",
    "ecc_squared",
    "ellipse_iou",
    "normalize",
]

__version__ = "0.1.0"
