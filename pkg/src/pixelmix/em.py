"""Batch EM, incremental EM and the exponential-forgetting variant.

Single-pixel entry points operate on ``MixtureModel`` values. ``MixtureBank``
holds one mixture per pixel of an image as stacked arrays and runs the same
kernels over every pixel at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import UsageError
from .mixture import (
    N_SLOTS,
    MixtureModel,
    SufficientStats,
    _as_data,
    _as_pixel,
    expected_stats,
    log_joint,
    normalize_log,
    recover_params,
    stats_from_params,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    prior_strength: float = 10.0
    max_iterations: int = 100
    convergence_tol: float = 1e-4
    forgetting_alpha: float = 0.0
    seed: int = 0
    recompute_every: int = 1
    restarts: int = 1

    def __post_init__(self):
        if not self.prior_strength > 0:
            raise UsageError(f"prior_strength must be > 0, got {self.prior_strength}")
        if self.max_iterations < 1:
            raise UsageError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise UsageError("convergence_tol must be > 0")
        if not 0.0 <= self.forgetting_alpha < 1.0:
            raise UsageError(f"forgetting_alpha must be in [0, 1), got {self.forgetting_alpha}")
        if self.recompute_every < 1:
            raise UsageError("recompute_every must be >= 1")
        if self.restarts < 1:
            raise UsageError("restarts must be >= 1")


# ---------------------------------------------------------------------------
# batch EM


def _e_step_arrays(x, weights, means, covs):
    """Expected statistics over the leading (time) axis of ``x``.

    ``x`` is (T, ..., d); model arrays carry the trailing batch dims.
    Returns ``(N, M, Z, loglik)`` with loglik summed over time.
    """
    gamma, logp = normalize_log(log_joint(x, weights, means, covs))
    n = gamma.sum(0)
    m = np.einsum("t...k,t...i->...ki", gamma, x)
    z = np.einsum("t...k,t...i,t...j->...kij", gamma, x, x)
    z = 0.5 * (z + np.swapaxes(z, -1, -2))
    return n, m, z, logp.sum(0)


def batch_e_step(data, m: MixtureModel) -> SufficientStats:
    x = _as_data(data, m.d)
    n, s, z, _ = _e_step_arrays(x, m.weights, m.means, m.covs)
    return SufficientStats(n, s, z)


@dataclass
class EmTrace:
    """Log-likelihood after each iterate; index 0 is the initial model.

    ``floored`` lists the indices whose model came out of a parameter recovery
    where a variance floor, weight floor or empty-slot fallback fired.
    """

    loglik: list = field(default_factory=list)
    floored: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.loglik)

    def __iter__(self):
        return iter(self.loglik)

    def __getitem__(self, i):
        return self.loglik[i]

    def monotone_violations(self, tol=1e-7):
        """Steps k -> k+1 that decrease by more than ``tol`` without a floor event."""
        skip = set(self.floored)
        return [k for k in range(len(self.loglik) - 1)
                if k + 1 not in skip and self.loglik[k + 1] < self.loglik[k] - tol]


def _run_batch_em(x, weights, means, covs, cfg: EmConfig):
    """Shared loop. Works for one pixel or a stacked bank (trailing batch dims)."""
    trace = EmTrace()
    n, s, z, ll = _e_step_arrays(x, weights, means, covs)
    trace.loglik.append(float(np.sum(ll)))
    for _ in range(cfg.max_iterations):
        rec = recover_params(n, s, z, means, covs)
        weights, means, covs = rec.weights, rec.means, rec.covs
        if np.any(rec.floored):
            trace.floored.append(len(trace.loglik))
            log.info("batch EM: floor or fallback fired at iteration %d", len(trace.loglik))
        prev_ll = ll
        n, s, z, ll = _e_step_arrays(x, weights, means, covs)
        trace.loglik.append(float(np.sum(ll)))
        if np.all(np.abs(ll - prev_ll) < cfg.convergence_tol):
            trace.converged = True
            break
    return weights, means, covs, trace


def _jittered(init: MixtureModel, rng) -> MixtureModel:
    sd = np.sqrt(np.diagonal(init.covs, axis1=1, axis2=2))
    means = np.clip(init.means + rng.normal(size=init.means.shape) * sd, 0.0, 255.0)
    weights = rng.dirichlet(np.full(N_SLOTS, 5.0))
    return MixtureModel(weights, means, init.covs)


def batch_em(data, init: MixtureModel, cfg: EmConfig = EmConfig()):
    """Fit by alternating E-steps and closed-form M-steps.

    Returns ``(model, trace)``. With ``cfg.restarts > 1`` the extra runs start
    from seeded jitters of ``init`` and the highest final likelihood wins.
    """
    x = _as_data(data, init.d)
    if x.shape[0] < N_SLOTS:
        raise UsageError(f"batch EM needs at least {N_SLOTS} points, got {x.shape[0]}")
    rng = np.random.default_rng(cfg.seed)
    best = None
    for attempt in range(cfg.restarts):
        start = init if attempt == 0 else _jittered(init, rng)
        w, mu, cov, trace = _run_batch_em(x, start.weights, start.means, start.covs, cfg)
        if best is None or trace.loglik[-1] > best[1].loglik[-1]:
            best = (MixtureModel(w, mu, cov), trace)
    return best


# ---------------------------------------------------------------------------
# incremental EM


@dataclass(frozen=True, eq=False)
class IncrementalEmState:
    model: MixtureModel
    stats: SufficientStats
    t: int = 0


def incremental_init(init: MixtureModel, cfg: EmConfig = EmConfig()) -> IncrementalEmState:
    return IncrementalEmState(init, stats_from_params(init, cfg.prior_strength), 0)


def _incremental_step(x, weights, means, covs, n, s, z, alpha, recompute):
    """One observation per batch element. Mutates n, s, z in place.

    Returns ``(weights, means, covs, log_evidence, floored)``; the evidence is
    computed under the model before the update.
    """
    gamma, logp = normalize_log(log_joint(x, weights, means, covs))
    if alpha > 0:
        keep = 1.0 - alpha
        n *= keep
        s *= keep
        z *= keep
    n += gamma
    s += gamma[..., None] * x[..., None, :]
    z += gamma[..., None, None] * (x[..., :, None] * x[..., None, :])[..., None, :, :]
    floored = None
    if recompute:
        rec = recover_params(n, s, z, means, covs)
        weights, means, covs, floored = rec
    return weights, means, covs, logp, floored


def incremental_update(state: IncrementalEmState, i, cfg: EmConfig = EmConfig()) -> IncrementalEmState:
    m = state.model
    x = _as_pixel(i, m.d)
    n = state.stats.counts.copy()
    s = state.stats.sums.copy()
    z = state.stats.outer.copy()
    t = state.t + 1
    recompute = t % cfg.recompute_every == 0
    w, mu, cov, _, _ = _incremental_step(x, m.weights, m.means, m.covs, n, s, z,
                                         cfg.forgetting_alpha, recompute)
    model = MixtureModel(w, mu, cov) if recompute else m
    return IncrementalEmState(model, SufficientStats(n, s, z), t)


def effective_sample_size(state: IncrementalEmState) -> float:
    return state.stats.total


def run_incremental(data, init: MixtureModel, cfg: EmConfig = EmConfig()) -> IncrementalEmState:
    """Feed a recorded stream through ``incremental_update`` in order."""
    state = incremental_init(init, cfg)
    for i in _as_data(data, init.d):
        state = incremental_update(state, i, cfg)
    return state


# ---------------------------------------------------------------------------
# per-pixel bank


@dataclass(eq=False)
class MixtureBank:
    """One mixture per pixel, flattened row-major (index = y * width + x).

    Arrays: weights (P, 3), means (P, 3, d), covs (P, 3, d, d), counts (P, 3),
    sums (P, 3, d), outer (P, 3, d, d). ``t`` counts frames absorbed.
    """

    width: int
    height: int
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    counts: np.ndarray
    sums: np.ndarray
    outer: np.ndarray
    t: int = 0

    @classmethod
    def from_prior(cls, prior: MixtureModel, width: int, height: int,
                   prior_strength: float) -> "MixtureBank":
        if width < 1 or height < 1:
            raise UsageError(f"bank size must be positive, got {width}x{height}")
        if not prior_strength > 0:
            raise UsageError("prior_strength must be > 0")
        p = width * height

        def tile(a):
            return np.repeat(np.asarray(a)[None], p, axis=0).copy()

        n, s, z = expected_stats(prior.weights, prior.means, prior.covs, float(prior_strength))
        return cls(width, height, tile(prior.weights), tile(prior.means), tile(prior.covs),
                   tile(n), tile(s), tile(z), 0)

    @property
    def d(self) -> int:
        return self.means.shape[-1]

    @property
    def size(self) -> int:
        return self.width * self.height

    def _index(self, x, y):
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise UsageError(f"pixel ({x}, {y}) outside {self.width}x{self.height}")
        return y * self.width + x

    def model_at(self, x: int, y: int) -> MixtureModel:
        p = self._index(x, y)
        return MixtureModel(self.weights[p], self.means[p], self.covs[p])

    def stats_at(self, x: int, y: int) -> SufficientStats:
        p = self._index(x, y)
        return SufficientStats(self.counts[p], self.sums[p], self.outer[p])

    def state_at(self, x: int, y: int) -> IncrementalEmState:
        return IncrementalEmState(self.model_at(x, y), self.stats_at(x, y), self.t)

    def copy(self) -> "MixtureBank":
        return replace(self, weights=self.weights.copy(), means=self.means.copy(),
                       covs=self.covs.copy(), counts=self.counts.copy(),
                       sums=self.sums.copy(), outer=self.outer.copy())

    def flat_pixels(self, frame) -> np.ndarray:
        frame = np.asarray(frame, dtype=np.float64)
        if frame.ndim == 2:
            frame = frame[..., None]
        if frame.shape != (self.height, self.width, self.d):
            raise UsageError(f"frame shape {frame.shape} does not match bank "
                             f"({self.height}, {self.width}, {self.d})")
        return frame.reshape(self.size, self.d)

    def log_evidence(self, frame) -> np.ndarray:
        """Per-pixel log p(frame) under the current models, shape (P,)."""
        x = self.flat_pixels(frame)
        _, logp = normalize_log(log_joint(x, self.weights, self.means, self.covs))
        return logp

    def update(self, frame, cfg: EmConfig = EmConfig()) -> np.ndarray:
        """Absorb one frame by incremental EM, in place.

        Returns the per-pixel log evidence under the pre-update models.
        """
        x = self.flat_pixels(frame)
        self.t += 1
        recompute = self.t % cfg.recompute_every == 0
        w, mu, cov, logp, _ = _incremental_step(
            x, self.weights, self.means, self.covs, self.counts, self.sums, self.outer,
            cfg.forgetting_alpha, recompute)
        self.weights, self.means, self.covs = w, mu, cov
        return logp

    def fit_batch(self, frames, cfg: EmConfig = EmConfig()) -> EmTrace:
        """Batch EM on a stored stack of frames (T, H, W[, d]), in place.

        Starts from the current models; afterwards the statistics are the
        final expected statistics plus nothing else (the prior is dropped).
        """
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 3:
            frames = frames[..., None]
        if frames.shape[0] == 0:
            raise UsageError("no frames to fit")
        x = np.stack([self.flat_pixels(f) for f in frames])
        w, mu, cov, trace = _run_batch_em(x, self.weights, self.means, self.covs, cfg)
        n, s, z, _ = _e_step_arrays(x, w, mu, cov)
        self.weights, self.means, self.covs = w, mu, cov
        self.counts, self.sums, self.outer = n, s, z
        self.t = frames.shape[0]
        return trace
