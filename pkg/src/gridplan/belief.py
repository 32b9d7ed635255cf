"""Bayes-filter belief propagation: a convolution followed by a masked, normalized product."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from gridplan.planner import same_conv


class TotalMassZero(ArithmeticError):
    """The observation window holds no predicted belief mass, so the posterior is undefined."""


def motion_update(b: np.ndarray, T: np.ndarray, a: int) -> np.ndarray:
    """Predict the next-state belief by convolving with the single filter of action ``a``.

    The result is unnormalized: mass pushed off the grid is dropped.
    """
    return same_conv(np.asarray(b, float), np.asarray(T, float)[a:a + 1])[0]


def observation_mask(O: np.ndarray, z: Sequence[int], nd: int) -> np.ndarray:
    """Likelihood ``p(z | s')`` of observation ``z`` for every state ``s'``.

    Zero outside the kernel window around ``z``; the window is cropped at the
    grid edges.
    """
    O = np.asarray(O, float)
    h = O.shape[0] // 2
    zi, zj = int(z[0]), int(z[1])
    mask = np.zeros((nd, nd))
    i0, i1 = max(zi - h, 0), min(zi + h + 1, nd)
    j0, j1 = max(zj - h, 0), min(zj + h + 1, nd)
    # p(z | s') = O[z - s' + h]; as s' walks the window forward, z - s' walks it backward.
    flipped = O[::-1, ::-1]
    mask[i0:i1, j0:j1] = flipped[i0 - zi + h:i1 - zi + h, j0 - zj + h:j1 - zj + h]
    return mask


def correct(b_bar: np.ndarray, mask: np.ndarray):
    """Masked, normalized product; returns ``(belief, eta)``."""
    masked = mask * b_bar
    total = masked.sum()
    if not total > 0.0:
        raise TotalMassZero("observation is inconsistent with the predicted belief")
    eta = 1.0 / total
    out = masked * eta
    # Division can leave the sum a few ulps off one; a second pass pins it.
    out /= out.sum()
    return out, eta


def correction_update(b_bar: np.ndarray, O: np.ndarray, z: Sequence[int]) -> np.ndarray:
    b_bar = np.asarray(b_bar, float)
    return correct(b_bar, observation_mask(O, z, b_bar.shape[0]))[0]


def propagate(b, a: int, z: Sequence[int], T, O) -> np.ndarray:
    """One Bayes-filter step: motion update with action ``a``, correction by observation ``z``."""
    return correction_update(motion_update(b, T, a), O, z)
