"""Synthetic grayscale frames for exercising the foreground detector.

People are drawn as bright discs over a smooth textured background seen
through a planar homography. Global illumination jumps at scheduled scans.
Running the detector over the frames and projecting blob centroids to the
ground plane yields camera detections for the tracker.
"""

from dataclasses import dataclass

import numpy as np

from ..geometry import Correspondence, dlt_homography, project_points
from ..vision import MixtureForegroundDetector, extract_detections
from .generate import stream

RENDER = 11


@dataclass
class CameraRig:
    """``homography`` maps image (col, row) pixels to ground-plane meters."""

    homography: object
    shape: tuple                    # (rows, cols)

    @classmethod
    def overhead(cls, area, px_per_m=8.0, keystone=0.08, border=4):
        """Slightly keystoned view of the whole area."""
        xmin, xmax, ymin, ymax = area
        cols = int(round((xmax - xmin) * px_per_m)) + 2 * border
        rows = int(round((ymax - ymin) * px_per_m)) + 2 * border
        k = keystone * (cols - 2 * border)
        img = [(border + k, border), (cols - border - k, border),
               (cols - border, rows - border), (border, rows - border)]
        world = [(xmin, ymax), (xmax, ymax), (xmax, ymin), (xmin, ymin)]
        H = dlt_homography([Correspondence(i, w) for i, w in zip(img, world)])
        return cls(H, (rows, cols))

    def to_image(self, points):
        return project_points(self.homography.inverse(), points)

    def to_world(self, points):
        return project_points(self.homography, points)


@dataclass
class RenderConfig:
    background: float = 90.0
    texture: float = 25.0
    person_intensity: float = 200.0
    person_radius_px: float = 2.6
    noise: float = 2.0
    illumination: tuple = ()        # ((scan, offset), ...) cumulative brightness steps
    warmup: int = 20                # empty frames shown to the detector before scan 0
    seed: int = 0


def _background(shape, cfg):
    r, c = np.mgrid[0:shape[0], 0:shape[1]]
    return cfg.background + cfg.texture * (0.5 * np.sin(r / 5.0) + 0.5 * np.cos(c / 7.0))


def _offset_at(t, schedule):
    return sum(off for s, off in schedule if s <= t)


def render_frames(positions, rig, cfg=None):
    """Yield one frame per scan for agent positions (T, A, 2), after warm-up frames.

    Returns a generator of ``(scan, frame)``; warm-up frames use negative scans.
    """
    cfg = cfg or RenderConfig()
    bg = _background(rig.shape, cfg)
    rows, cols = rig.shape
    rr, cc = np.mgrid[0:rows, 0:cols]
    rng = stream(cfg.seed, RENDER)
    for w in range(cfg.warmup):
        yield -cfg.warmup + w, np.clip(bg + cfg.noise * rng.standard_normal(rig.shape), 0, 255)
    T = positions.shape[0]
    for t in range(T):
        frame = bg + _offset_at(t, cfg.illumination)
        px = rig.to_image(positions[t])
        for x, y in px:
            m = (cc - x) ** 2 + (rr - y) ** 2 <= cfg.person_radius_px ** 2
            frame[m] = cfg.person_intensity
        frame = frame + cfg.noise * rng.standard_normal(rig.shape)
        yield t, np.clip(frame, 0, 255)


def detect_sequence(frames, rig, learning_rate, min_area=9, keep_masks=None):
    """Ground-plane detections per scan from a frame sequence.

    ``keep_masks`` may be a dict that receives scan -> foreground mask.
    """
    det = MixtureForegroundDetector(learning_rate=learning_rate)
    out = []
    for t, frame in frames:
        mask = det.apply(frame)
        if t < 0:
            continue
        if keep_masks is not None:
            keep_masks[t] = mask
        cents = extract_detections(mask, min_area)
        out.append(rig.to_world(np.array(cents)) if cents else np.zeros((0, 2)))
    return out
