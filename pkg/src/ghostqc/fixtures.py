"""Synthetic ground-truth objects used in place of optical targets."""

from __future__ import annotations

import numpy as np

__all__ = ["glyph", "plane", "textured", "OBJECTS", "make_object"]

# 5x7 bitmap of the digit "2"
_DIGIT_TWO = np.array(
    [
        [0, 1, 1, 1, 0],
        [1, 0, 0, 0, 1],
        [0, 0, 0, 0, 1],
        [0, 0, 0, 1, 0],
        [0, 0, 1, 0, 0],
        [0, 1, 0, 0, 0],
        [1, 1, 1, 1, 1],
    ],
    dtype=float,
)


def glyph(side: int = 32) -> np.ndarray:
    """Binary digit-like glyph centred on a ``side x side`` canvas."""
    scale = max(1, int(side * 0.75) // 7)
    block = np.kron(_DIGIT_TWO, np.ones((scale, scale)))
    img = np.zeros((side, side))
    h, w = block.shape
    r0, c0 = (side - h) // 2, (side - w) // 2
    img[r0:r0 + h, c0:c0 + w] = block
    return img


def plane(side: int = 32) -> np.ndarray:
    """Sparse aircraft silhouette: fuselage, swept wings and tail."""
    y, x = np.mgrid[0:side, 0:side] / side
    body = (np.abs(y - 0.5) < 0.06) & (x > 0.12) & (x < 0.88)
    wing = (np.abs(y - 0.5) < 0.38 - 0.9 * np.abs(x - 0.48)) & (np.abs(x - 0.5) < 0.12)
    tail = (np.abs(y - 0.5) < 0.18) & (x > 0.14) & (x < 0.24)
    return (body | wing | tail).astype(float)


def textured(side: int = 32) -> np.ndarray:
    """Smooth grayscale block with a sinusoidal texture, values in ``[0, 1]``."""
    y, x = np.mgrid[0:side, 0:side] / side
    img = 0.5 + 0.25 * np.sin(2 * np.pi * 3 * x) * np.cos(2 * np.pi * 2 * y) + 0.2 * (x - 0.5)
    mask = (np.abs(x - 0.5) < 0.35) & (np.abs(y - 0.5) < 0.35)
    return np.clip(np.where(mask, img, 0.0), 0.0, 1.0)


OBJECTS = {"glyph": glyph, "plane": plane, "textured": textured}


def make_object(name: str, side: int) -> np.ndarray:
    try:
        return OBJECTS[name](side)
    except KeyError:
        raise ValueError(f"unknown object {name!r}; choose from {sorted(OBJECTS)}") from None
