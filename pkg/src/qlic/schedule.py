"""Quadtree coding schedule: four disjoint masks over (H, W, C).

Channels are split into four groups g(c) = floor(4c/C); each 2x2 spatial
patch carries positions q(h, w) = 2*(h%2) + (w%2). An element (h, w, c)
belongs to step i (0-based) iff q == (g + i) mod 4 — a Latin square over
(group, patch position), so every step sees prior context both from the
other channel groups at the same location and from neighbouring
locations in its own group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    pass


@dataclass
class QuadtreeSchedule:
    height: int
    width: int
    channels: int
    masks: np.ndarray = field(repr=False)  # bool, (4, H, W, C)

    def step_mask(self, step: int) -> np.ndarray:
        """Boolean mask of the elements coded at `step` (0..3)."""
        return self.masks[step]

    def coded_before(self, step: int) -> np.ndarray:
        """Union of masks of all steps strictly before `step`."""
        out = np.zeros_like(self.masks[0])
        for i in range(step):
            out |= self.masks[i]
        return out


def channel_group(c: np.ndarray, channels: int) -> np.ndarray:
    return (4 * c) // channels


def patch_position(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    return 2 * (h % 2) + (w % 2)


def quadtree_schedule(height: int, width: int, channels: int) -> QuadtreeSchedule:
    if height <= 0 or width <= 0 or channels <= 0:
        raise ScheduleError(f"extents must be positive, got {height}x{width}x{channels}")
    if height % 2 != 0 or width % 2 != 0:
        raise ScheduleError(f"H and W must be even, got {height}x{width}")
    if channels % 4 != 0:
        raise ScheduleError(f"channels ({channels}) must be divisible by 4")
    h = np.arange(height)[:, None, None]
    w = np.arange(width)[None, :, None]
    c = np.arange(channels)[None, None, :]
    q = patch_position(h, w)
    g = channel_group(c, channels)
    masks = np.stack([q == ((g + i) % 4) for i in range(4)])
    return QuadtreeSchedule(height=height, width=width, channels=channels,
                            masks=masks)
