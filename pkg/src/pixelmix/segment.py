"""Semantic labelling of mixture slots and MAP pixel classification."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import UsageError
from .mixture import N_SLOTS, MixtureModel, joint_log_probabilities, log_joint


class SemanticLabel(IntEnum):
    ROAD = 0
    SHADOW = 1
    VEHICLE = 2


ROAD, SHADOW, VEHICLE = SemanticLabel


@dataclass(frozen=True)
class LabelAssignment:
    """``labels[slot]`` is the semantic label of that mixture slot."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(SemanticLabel(l) for l in self.labels)
        if sorted(labels) != list(SemanticLabel):
            raise UsageError(f"label assignment must be a bijection, got {labels}")
        object.__setattr__(self, "labels", labels)

    def __getitem__(self, slot):
        return self.labels[slot]

    def slot_of(self, label) -> int:
        return self.labels.index(SemanticLabel(label))

    def as_array(self) -> np.ndarray:
        return np.array(self.labels, dtype=np.int8)


def assign_labels(means, covs) -> np.ndarray:
    """Darkest slot -> Shadow; of the rest, larger total variance -> Vehicle.

    ``means`` (..., 3, d), ``covs`` (..., 3, d, d). Returns (..., 3) int array
    mapping slot to label. Ties go to the lower slot index.
    """
    darkness = np.asarray(means).mean(-1)
    spread = np.trace(np.asarray(covs), axis1=-2, axis2=-1)
    shadow = np.argmin(darkness, axis=-1)
    # the two remaining slots in increasing index order
    first = np.where(shadow == 0, 1, 0)
    second = np.where(shadow == 2, 1, 2)
    s1 = np.take_along_axis(spread, first[..., None], -1)[..., 0]
    s2 = np.take_along_axis(spread, second[..., None], -1)[..., 0]
    vehicle = np.where(s2 > s1, second, first)
    road = np.where(s2 > s1, first, second)

    out = np.empty(darkness.shape, dtype=np.int8)
    np.put_along_axis(out, shadow[..., None], SHADOW, -1)
    np.put_along_axis(out, vehicle[..., None], VEHICLE, -1)
    np.put_along_axis(out, road[..., None], ROAD, -1)
    return out


def heuristic_label(m: MixtureModel) -> LabelAssignment:
    return LabelAssignment(tuple(assign_labels(m.means, m.covs)))


def _argmax_by_label(logj, labels):
    """MAP label given per-slot joints; ties resolve to the smaller label."""
    by_label = np.empty_like(logj)
    np.put_along_axis(by_label, labels.astype(np.intp), logj, -1)
    return np.argmax(by_label, axis=-1)


def classify_pixel(i, m: MixtureModel, a: LabelAssignment) -> SemanticLabel:
    logj = joint_log_probabilities(i, m)
    return SemanticLabel(int(_argmax_by_label(logj, a.as_array())))


def _bank_assignments(bank, assignments):
    if assignments is None:
        return assign_labels(bank.means, bank.covs)
    a = np.asarray(assignments)
    if a.shape != (bank.size, N_SLOTS):
        raise UsageError(f"assignments shape {a.shape} does not match bank of {bank.size} pixels")
    return a


def classify_frame(frame, bank, assignments=None) -> np.ndarray:
    """Label mask (H, W) of uint8 ``SemanticLabel`` codes.

    ``assignments`` is (P, 3) slot->label; derived from the bank when omitted.
    """
    x = bank.flat_pixels(frame)
    a = _bank_assignments(bank, assignments)
    logj = log_joint(x, bank.weights, bank.means, bank.covs)
    labels = _argmax_by_label(logj, a)
    return labels.astype(np.uint8).reshape(bank.height, bank.width)


def road_image(bank, assignments=None) -> np.ndarray:
    """Per-pixel mean of the Road slot, (H, W, d)."""
    a = _bank_assignments(bank, assignments)
    road_slot = np.argmax(a == ROAD, axis=-1)
    mu = np.take_along_axis(bank.means, road_slot[:, None, None], axis=1)[:, 0]
    return mu.reshape(bank.height, bank.width, bank.d)


def remove_shadows(frame, mask, bank, assignments=None) -> np.ndarray:
    """Replace Shadow-labelled pixels with that pixel's Road mean."""
    f = np.asarray(frame, dtype=np.float64)
    squeeze = f.ndim == 2
    if squeeze:
        f = f[..., None]
    mask = np.asarray(mask)
    if mask.shape != (bank.height, bank.width) or f.shape[:2] != mask.shape:
        raise UsageError(f"mask {mask.shape} / frame {f.shape} do not match bank "
                         f"{bank.height}x{bank.width}")
    out = np.where((mask == SHADOW)[..., None], road_image(bank, assignments), f)
    return out[..., 0] if squeeze else out
