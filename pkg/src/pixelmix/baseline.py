"""Classical background subtraction: averaged background + Mahalanobis threshold."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import UsageError
from .mixture import VAR_FLOOR

CUMULATIVE = "cumulative"
EXPONENTIAL = "exponential"

DEFAULT_ALPHA = 0.02
DEFAULT_THRESHOLD = 2.5
DEFAULT_INITIAL_VARIANCE = 100.0


def _as_frame(frame):
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim == 2:
        f = f[..., None]
    if f.ndim != 3 or f.shape[-1] not in (1, 3):
        raise UsageError(f"frame must be (H, W) or (H, W, 1|3), got {f.shape}")
    return f


@dataclass(frozen=True, eq=False)
class BackgroundModel:
    """Per-pixel background mean and diagonal variance, both (H, W, d).

    ``second`` is the running mean of squares used by cumulative mode. Before
    the first frame (``t == 0``) the arrays are ``None``.
    """

    mode: str = EXPONENTIAL
    alpha: float = DEFAULT_ALPHA
    selective_update: bool = False
    threshold: float = DEFAULT_THRESHOLD
    initial_variance: float = DEFAULT_INITIAL_VARIANCE
    mean: np.ndarray | None = None
    var: np.ndarray | None = None
    second: np.ndarray | None = None
    t: int = 0

    def __post_init__(self):
        if self.mode not in (CUMULATIVE, EXPONENTIAL):
            raise UsageError(f"unknown background mode {self.mode!r}")
        if self.mode == EXPONENTIAL and not 0.0 < self.alpha <= 1.0:
            raise UsageError(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.threshold > 0:
            raise UsageError("threshold must be > 0")

    def _check(self, frame, mode):
        if self.mode != mode:
            raise UsageError(f"{mode} update on a {self.mode} background")
        f = _as_frame(frame)
        if self.mean is not None and f.shape != self.mean.shape:
            raise UsageError(f"frame shape {f.shape} does not match background {self.mean.shape}")
        return f


def cumulative_update(bg: BackgroundModel, frame) -> BackgroundModel:
    f = bg._check(frame, CUMULATIVE)
    t = bg.t + 1
    if bg.t == 0:
        mean, second = f.copy(), f * f
    else:
        keep = (t - 1) / t
        mean = keep * bg.mean + f / t
        second = keep * bg.second + f * f / t
    var = np.maximum(second - mean * mean, VAR_FLOOR)
    return replace(bg, mean=mean, var=var, second=second, t=t)


def exponential_update(bg: BackgroundModel, frame, foreground=None) -> BackgroundModel:
    """Exponential-forgetting update.

    With ``selective_update`` set, pixels flagged in ``foreground`` (an
    (H, W) bool mask; computed from the current background when omitted) keep
    their old mean and variance.
    """
    f = bg._check(frame, EXPONENTIAL)
    if bg.t == 0:
        var = np.full_like(f, max(bg.initial_variance, VAR_FLOOR))
        return replace(bg, mean=f.copy(), var=var, t=1)
    a = bg.alpha
    mean = (1.0 - a) * bg.mean + a * f
    var = np.maximum((1.0 - a) * bg.var + a * (f - bg.mean) ** 2, VAR_FLOOR)
    if bg.selective_update:
        if foreground is None:
            foreground = mahalanobis_classify(bg, f, bg.threshold)
        keep = np.asarray(foreground, dtype=bool)[..., None]
        mean = np.where(keep, bg.mean, mean)
        var = np.where(keep, bg.var, var)
    return replace(bg, mean=mean, var=var, t=bg.t + 1)


def update(bg: BackgroundModel, frame, foreground=None) -> BackgroundModel:
    if bg.mode == CUMULATIVE:
        if bg.selective_update and bg.t > 0:
            return _selective_cumulative(bg, frame, foreground)
        return cumulative_update(bg, frame)
    return exponential_update(bg, frame, foreground)


def _selective_cumulative(bg, frame, foreground):
    new = cumulative_update(bg, frame)
    if foreground is None:
        foreground = mahalanobis_classify(bg, frame, bg.threshold)
    keep = np.asarray(foreground, dtype=bool)[..., None]
    return replace(new, mean=np.where(keep, bg.mean, new.mean),
                   var=np.where(keep, bg.var, new.var),
                   second=np.where(keep, bg.second, new.second))


def mahalanobis_distance(bg: BackgroundModel, frame) -> np.ndarray:
    if bg.t < 1:
        raise UsageError("background has not seen any frame yet")
    f = _as_frame(frame)
    if f.shape != bg.mean.shape:
        raise UsageError(f"frame shape {f.shape} does not match background {bg.mean.shape}")
    return np.sqrt(np.sum((f - bg.mean) ** 2 / bg.var, axis=-1))


def mahalanobis_classify(bg: BackgroundModel, frame, threshold: float) -> np.ndarray:
    """Boolean (H, W) foreground mask: diagonal Mahalanobis distance > threshold."""
    if not threshold > 0:
        raise UsageError("threshold must be > 0")
    return mahalanobis_distance(bg, frame) > threshold


def log_evidence(bg: BackgroundModel, frame) -> np.ndarray:
    """Per-pixel diagonal-Gaussian log density of ``frame`` under the background."""
    f = _as_frame(frame)
    z = (f - bg.mean) ** 2 / bg.var
    return -0.5 * np.sum(np.log(2 * np.pi * bg.var) + z, axis=-1)
