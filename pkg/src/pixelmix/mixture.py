"""Three-component Gaussian mixtures for a single pixel.

The public functions work on one pixel (``MixtureModel`` / ``SufficientStats``).
The underscore-free array kernels further down (``log_gauss``, ``log_joint``,
``normalize_log``, ``recover_params``, ``expected_stats``) take arbitrary
leading batch dimensions so the same arithmetic drives a whole image bank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import EmptyStatsError, InvariantError, UsageError

N_SLOTS = 3
SLOT_NAMES = ("r", "s", "v")

VAR_FLOOR = 1.0
W_FLOOR = 1e-4
N_MIN = 1e-3

LOG_2PI = math.log(2.0 * math.pi)


class ColorMode(IntEnum):
    GRAY = 1
    RGB = 3

    @classmethod
    def parse(cls, value) -> "ColorMode":
        if isinstance(value, ColorMode):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            aliases = {"1": cls.GRAY, "gray": cls.GRAY, "grey": cls.GRAY,
                       "intensity": cls.GRAY, "3": cls.RGB, "rgb": cls.RGB}
            if key in aliases:
                return aliases[key]
        else:
            try:
                return cls(int(value))
            except ValueError:
                pass
        raise UsageError(f"color mode must be 1/intensity or 3/rgb, got {value!r}")


def _check_cov(cov, where):
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise UsageError(f"{where}: covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise InvariantError(f"{where}: covariance has non-finite entries")
    if not np.allclose(cov, cov.T, rtol=1e-9, atol=1e-9):
        raise InvariantError(f"{where}: covariance is not symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise InvariantError(f"{where}: covariance is not positive definite") from None


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if mean.ndim != 1 or mean.shape[0] not in (1, 3):
            raise UsageError(f"mean must be a 1- or 3-vector, got shape {mean.shape}")
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise UsageError(f"covariance shape {cov.shape} does not match mean {mean.shape}")
        if not 0.0 <= self.weight <= 1.0:
            raise InvariantError(f"weight {self.weight} outside [0, 1]")
        _check_cov(cov, "component")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Weights (3,), means (3, d) and covariances (3, d, d), one row per slot."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(N_SLOTS)
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu.reshape(N_SLOTS, 1)
        cov = np.asarray(self.covs, dtype=np.float64)
        if cov.ndim == 1:
            cov = cov.reshape(N_SLOTS, 1, 1)
        d = mu.shape[-1]
        if mu.shape != (N_SLOTS, d) or d not in (1, 3):
            raise UsageError(f"means must have shape (3, 1) or (3, 3), got {mu.shape}")
        if cov.shape != (N_SLOTS, d, d):
            raise UsageError(f"covariances must have shape (3, {d}, {d}), got {cov.shape}")
        if np.any(w < 0) or np.any(w > 1):
            raise InvariantError(f"weights outside [0, 1]: {w}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvariantError(f"weights sum to {w.sum()!r}, not 1")
        for slot in range(N_SLOTS):
            _check_cov(cov[slot], f"slot {slot}")
        for name, arr in (("weights", w), ("means", mu), ("covs", cov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_components(cls, components) -> "MixtureModel":
        components = list(components)
        if len(components) != N_SLOTS:
            raise UsageError(f"need exactly {N_SLOTS} components, got {len(components)}")
        return cls(
            np.array([c.weight for c in components]),
            np.stack([c.mean for c in components]),
            np.stack([c.cov for c in components]),
        )

    @classmethod
    def isotropic(cls, weights, means, variances, mode=ColorMode.GRAY) -> "MixtureModel":
        """Scalar per-slot means/variances replicated on every channel."""
        d = int(ColorMode.parse(mode))
        mu = np.repeat(np.asarray(means, dtype=np.float64).reshape(N_SLOTS, 1), d, axis=1)
        var = np.asarray(variances, dtype=np.float64).reshape(N_SLOTS, 1, 1)
        return cls(np.asarray(weights, dtype=np.float64), mu, var * np.eye(d))

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def mode(self) -> ColorMode:
        return ColorMode(self.d)

    @property
    def components(self):
        return tuple(GaussianComponent(self.weights[l], self.means[l], self.covs[l])
                     for l in range(N_SLOTS))

    def permuted(self, order) -> "MixtureModel":
        order = list(order)
        return MixtureModel(self.weights[order], self.means[order], self.covs[order])

    def allclose(self, other: "MixtureModel", atol=1e-9) -> bool:
        return (np.allclose(self.weights, other.weights, rtol=0, atol=atol)
                and np.allclose(self.means, other.means, rtol=0, atol=atol)
                and np.allclose(self.covs, other.covs, rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Per-slot count N (3,), sum M (3, d) and outer-product sum Z (3, d, d)."""

    counts: np.ndarray
    sums: np.ndarray
    outer: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.counts, dtype=np.float64).reshape(N_SLOTS)
        m = np.asarray(self.sums, dtype=np.float64)
        if m.ndim == 1:
            m = m.reshape(N_SLOTS, 1)
        z = np.asarray(self.outer, dtype=np.float64)
        if z.ndim == 1:
            z = z.reshape(N_SLOTS, 1, 1)
        d = m.shape[-1]
        if m.shape != (N_SLOTS, d) or z.shape != (N_SLOTS, d, d):
            raise UsageError(f"inconsistent stats shapes {m.shape}, {z.shape}")
        if np.any(n < 0):
            raise InvariantError(f"negative counts {n}")
        if not np.allclose(z, np.swapaxes(z, -1, -2), rtol=1e-9, atol=1e-9):
            raise InvariantError("outer-product sums are not symmetric")
        for name, arr in (("counts", n), ("sums", m), ("outer", z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.sums.shape[1]

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def scaled(self, c: float) -> "SufficientStats":
        return SufficientStats(self.counts * c, self.sums * c, self.outer * c)


# ---------------------------------------------------------------------------
# array kernels


def log_gauss(x, mean, cov):
    """Gaussian log density of ``x`` under each of K components.

    ``x`` is (..., d); ``mean`` (..., K, d) and ``cov`` (..., K, d, d) broadcast
    against it. Returns (..., K).
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    diff = x[..., None, :] - mean
    if d == 1:
        var = cov[..., 0, 0]
        if np.any(~(var > 0)):
            raise InvariantError("non-positive variance")
        maha = diff[..., 0] ** 2 / var
        logdet = np.log(var)
    else:
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise InvariantError("covariance is not positive definite") from None
        z = np.linalg.solve(chol, diff[..., None])[..., 0]
        maha = np.einsum("...i,...i->...", z, z)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
    return -0.5 * (d * LOG_2PI + logdet + maha)


def log_joint(x, weights, mean, cov):
    """log w_l + log N(x; mu_l, Sigma_l); zero weights give -inf."""
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return logw + log_gauss(x, mean, cov)


def normalize_log(logj):
    """Posterior responsibilities and log evidence from joint log-probabilities.

    Returns ``(gamma, log_evidence)`` where gamma has the shape of ``logj``.
    """
    top = np.max(logj, axis=-1, keepdims=True)
    if np.any(np.isneginf(top)):
        raise RuntimeError("every class has zero joint probability")
    shifted = np.exp(logj - top)
    total = shifted.sum(-1, keepdims=True)
    return shifted / total, (top + np.log(total))[..., 0]


class Recovery(NamedTuple):
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    floored: np.ndarray  # bool over batch dims: any floor/fallback fired


def floor_covariance(cov, var_floor=VAR_FLOOR):
    """Symmetrize and clamp eigenvalues to ``var_floor``.

    Returns ``(cov, fired)``; matrices already above the floor are only
    symmetrized.
    """
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    d = cov.shape[-1]
    if d == 1:
        fired = cov[..., 0, 0] < var_floor
        if np.any(fired):
            cov = cov.copy()
            cov[fired] = var_floor
        return cov, fired
    vals, vecs = np.linalg.eigh(cov)
    fired = vals[..., 0] < var_floor
    if np.any(fired):
        vals = np.maximum(vals[fired], var_floor)
        v = vecs[fired]
        cov = cov.copy()
        fixed = np.einsum("...ij,...j,...kj->...ik", v, vals, v)
        cov[fired] = 0.5 * (fixed + np.swapaxes(fixed, -1, -2))
    return cov, fired


def _floor_weights(weights, low, w_floor):
    # pinned slots sit exactly at the floor; the rest share what is left
    for _ in range(N_SLOTS):
        mass = 1.0 - low.sum(-1, keepdims=True) * w_floor
        free = np.where(low, 0.0, weights).sum(-1, keepdims=True)
        out = np.where(low, w_floor, weights * mass / free)
        newly = (out < w_floor) & ~low
        if not newly.any():
            break
        low = low | newly
    return out


def recover_params(counts, sums, outer, prev_means=None, prev_covs=None,
                   var_floor=VAR_FLOOR, w_floor=W_FLOOR, n_min=N_MIN):
    """Weights, means and covariances from sufficient statistics.

    Shapes: counts (..., 3), sums (..., 3, d), outer (..., 3, d, d).
    Slots with count below ``n_min`` keep ``prev_*`` when given; otherwise they
    fall back to the pooled mean with ``var_floor`` * I.
    """
    counts = np.asarray(counts, dtype=np.float64)
    sums = np.asarray(sums, dtype=np.float64)
    outer = np.asarray(outer, dtype=np.float64)
    d = sums.shape[-1]
    total = counts.sum(-1, keepdims=True)
    if np.any(~(total > 0)):
        raise EmptyStatsError("total count is zero; cannot recover parameters")

    weights = counts / total
    supported = counts >= n_min
    safe_n = np.where(supported, counts, 1.0)
    means = sums / safe_n[..., None]
    covs = outer / safe_n[..., None, None] - means[..., :, None] * means[..., None, :]

    lacking = ~supported
    any_lacking = np.any(lacking, axis=-1)
    if np.any(lacking):
        if prev_means is not None:
            fb_mean = np.broadcast_to(prev_means, means.shape)
            fb_cov = np.broadcast_to(prev_covs, covs.shape)
        else:
            pooled = sums.sum(-2) / total
            fb_mean = np.broadcast_to(pooled[..., None, :], means.shape)
            fb_cov = np.broadcast_to(var_floor * np.eye(d), covs.shape)
        means = np.where(lacking[..., None], fb_mean, means)
        covs = np.where(lacking[..., None, None], fb_cov, covs)

    covs, var_fired = floor_covariance(covs, var_floor)

    low = weights < w_floor
    w_fired = np.any(low, axis=-1)
    if np.any(w_fired):
        weights = _floor_weights(weights, low, w_floor)

    floored = np.any(var_fired, axis=-1) | w_fired | any_lacking
    return Recovery(weights, means, covs, floored)


def expected_stats(weights, means, covs, k):
    """Statistics that ``k`` pseudo-observations from the model would give."""
    n = k * weights
    m = n[..., None] * means
    z = n[..., None, None] * (covs + means[..., :, None] * means[..., None, :])
    return n, m, z


# ---------------------------------------------------------------------------
# single-pixel API


def _as_pixel(i, d):
    x = np.atleast_1d(np.asarray(i, dtype=np.float64))
    if x.shape != (d,):
        raise UsageError(f"pixel of shape {x.shape} does not match dimension {d}")
    return x


def gaussian_log_density(i, c: GaussianComponent) -> float:
    x = _as_pixel(i, c.d)
    return float(log_gauss(x, c.mean[None], c.cov[None])[0])


def joint_log_probability(i, m: MixtureModel, slot: int) -> float:
    if slot not in range(N_SLOTS):
        raise UsageError(f"slot must be 0, 1 or 2, got {slot}")
    x = _as_pixel(i, m.d)
    if m.weights[slot] == 0:
        return -math.inf
    return float(log_joint(x, m.weights[slot:slot + 1], m.means[slot:slot + 1],
                           m.covs[slot:slot + 1])[0])


def joint_log_probabilities(i, m: MixtureModel) -> np.ndarray:
    x = _as_pixel(i, m.d)
    return log_joint(x, m.weights, m.means, m.covs)


def responsibilities(i, m: MixtureModel) -> np.ndarray:
    gamma, _ = normalize_log(joint_log_probabilities(i, m))
    return gamma


def params_from_stats(s: SufficientStats, mode=None, previous: MixtureModel | None = None) -> MixtureModel:
    if mode is not None and int(ColorMode.parse(mode)) != s.d:
        raise UsageError(f"stats have dimension {s.d}, mode asks for {int(mode)}")
    prev_mu = prev_cov = None
    if previous is not None:
        if previous.d != s.d:
            raise UsageError("previous model has a different dimension")
        prev_mu, prev_cov = previous.means, previous.covs
    rec = recover_params(s.counts, s.sums, s.outer, prev_mu, prev_cov)
    return MixtureModel(rec.weights, rec.means, rec.covs)


def stats_from_params(m: MixtureModel, prior_strength: float) -> SufficientStats:
    if not prior_strength > 0:
        raise UsageError(f"prior strength must be positive, got {prior_strength}")
    return SufficientStats(*expected_stats(m.weights, m.means, m.covs, float(prior_strength)))


def _as_data(data, d):
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1 and d == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != d:
        raise UsageError(f"data of shape {x.shape} does not match dimension {d}")
    if x.shape[0] == 0:
        raise UsageError("empty data")
    return x


def stream_log_likelihood(data, m: MixtureModel) -> float:
    x = _as_data(data, m.d)
    _, logp = normalize_log(log_joint(x, m.weights, m.means, m.covs))
    return float(logp.sum())
