"""Heat-source detection in 16-bit thermal images (centi-degrees Celsius)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .synth import Camera

OPENING_DIAMETER = 0.15


@dataclass
class HeatDetection:
    bbox: tuple[int, int, int, int]  # u0, v0, u1, v1 inclusive
    distance: float
    position: np.ndarray  # camera optical frame
    peak: int

    @property
    def width(self) -> int:
        return self.bbox[2] - self.bbox[0] + 1

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.bbox[0] + self.bbox[2]), 0.5 * (self.bbox[1] + self.bbox[3])

    def to_json(self) -> dict:
        return {"bbox": [int(v) for v in self.bbox], "distance": float(self.distance),
                "position": [float(v) for v in self.position], "peak": int(self.peak)}

    @classmethod
    def from_json(cls, d) -> HeatDetection:
        return cls(tuple(d["bbox"]), d["distance"], np.array(d["position"]), d["peak"])


def default_k(camera: Camera, diameter: float = OPENING_DIAMETER) -> float:
    """Pinhole ranging constant f * D in px * m."""
    return camera.fx * diameter


def distance_from_width(width_px: float, k: float) -> float:
    if width_px <= 0:
        raise ValueError("width must be positive")
    return k / width_px


def detect_heat(img: np.ndarray, threshold: int, camera: Camera, k: float | None = None) -> HeatDetection | None:
    """Largest hot blob, ranged from its bounding-box width; None if nothing is hot.

    The width gives the pinhole depth of the opening, so ``position`` is the
    box-center ray scaled to that depth.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("expected a single-channel thermal image")
    hot = img >= threshold
    if not hot.any():
        return None
    labels, n = ndimage.label(hot, structure=np.ones((3, 3), bool))
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    sizes[0] = 0
    best = int(np.argmax(sizes))
    v, u = np.nonzero(labels == best)
    bbox = (int(u.min()), int(v.min()), int(u.max()), int(v.max()))
    k = default_k(camera) if k is None else k
    dist = distance_from_width(bbox[2] - bbox[0] + 1, k)
    cu, cv = 0.5 * (bbox[0] + bbox[2]), 0.5 * (bbox[1] + bbox[3])
    ray = np.array([(cu - camera.cx) / camera.fx, (cv - camera.cy) / camera.fy, 1.0])
    pos = dist * ray
    return HeatDetection(bbox, float(dist), pos, int(img[labels == best].max()))


def calibrate_k(samples) -> float:
    """Least-squares k from (distance, width_px) pairs, minimizing sum (d - k / w)^2."""
    s = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(s) == 0 or np.any(s[:, 1] <= 0):
        raise ValueError("need at least one sample with positive width")
    inv = 1.0 / s[:, 1]
    return float((s[:, 0] @ inv) / (inv @ inv))


def calibrate_from_images(images, distances, threshold: int, camera: Camera) -> float:
    """k from thermal frames of a reference heat element at known distances."""
    samples = []
    for img, d in zip(images, distances):
        det = detect_heat(img, threshold, camera, k=1.0)
        if det is not None:
            samples.append((d, det.width))
    return calibrate_k(samples)
