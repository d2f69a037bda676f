"""Per-frame segmentation loops, metrics and pixel inspection."""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baseline as bgs
from .bank import load_model_bank, save_model_bank
from .em import EmConfig, MixtureBank
from .errors import DataError, UsageError
from .mixture import ColorMode, MixtureModel
from .netpbm import write_frame
from .segment import (ROAD, SHADOW, VEHICLE, SemanticLabel, assign_labels,
                      classify_frame, remove_shadows, road_image)
from .sequence import SequenceReader, SequenceWriter

log = logging.getLogger(__name__)

METHODS = ("mog-incremental", "mog-batch", "baseline-cumulative", "baseline-exponential")
LABEL_NAMES = [l.name.lower() for l in SemanticLabel]


@dataclass(frozen=True)
class PriorConfig:
    """Weak per-pixel prior, per slot (shadow, road, vehicle).

    Variances are per channel; RGB priors use them on the diagonal.
    """

    means: tuple = (60.0, 120.0, 150.0)
    variances: tuple = (400.0, 400.0, 3000.0)
    weights: tuple = (0.2, 0.7, 0.1)

    def model(self, mode) -> MixtureModel:
        return MixtureModel.isotropic(self.weights, self.means, self.variances, mode)


@dataclass
class RunConfig:
    method: str = "mog-incremental"
    input: Path | None = None
    color_mode: int | None = None
    em: EmConfig = field(default_factory=EmConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    alpha: float = bgs.DEFAULT_ALPHA
    threshold: float = bgs.DEFAULT_THRESHOLD
    initial_variance: float = bgs.DEFAULT_INITIAL_VARIANCE
    selective_update: bool = False
    classify_first: bool = False
    out_masks: Path | None = None
    out_shadowfree: Path | None = None
    out_background: Path | None = None
    out_metrics: Path | None = None
    checkpoint_dir: Path | None = None
    checkpoint_every: int = 0
    resume: Path | None = None
    stop_after: int | None = None
    eval_last: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.checkpoint_every < 0:
            raise UsageError("checkpoint_every must be >= 0")
        if self.checkpoint_every and self.checkpoint_dir is None:
            raise UsageError("checkpoint_every needs a checkpoint directory")
        if self.method.startswith("baseline"):
            if not 0 < self.alpha <= 1:
                raise UsageError(f"alpha must be in (0, 1], got {self.alpha}")
            if not self.threshold > 0:
                raise UsageError("threshold must be > 0")
            if self.resume or self.checkpoint_every:
                raise UsageError("checkpoints apply to mixture methods only")
        if self.method == "mog-batch" and (self.resume or self.checkpoint_every):
            raise UsageError("checkpoint/resume applies to mog-incremental only")
        if self.out_shadowfree is not None and not self.method.startswith("mog"):
            raise UsageError("shadow-free output needs a mixture method")

    @property
    def order(self) -> str:
        return "classify-first" if self.classify_first else "update-first"


@dataclass
class FrameMetrics:
    frame: int
    counts: np.ndarray
    confusion: np.ndarray | None
    loglik: float
    flips: int
    seconds: float


def confusion_matrix(truth, pred) -> np.ndarray:
    """3x3 counts; rows are ground truth, columns are predictions."""
    idx = np.asarray(truth, dtype=np.intp).ravel() * 3 + np.asarray(pred, dtype=np.intp).ravel()
    return np.bincount(idx, minlength=9).reshape(3, 3)


def precision_recall(conf):
    """Per-class precision and recall; NaN where undefined."""
    conf = np.asarray(conf, dtype=np.float64)
    tp = np.diag(conf)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = tp / conf.sum(0)
        recall = tp / conf.sum(1)
    return precision, recall


@dataclass
class MetricsReport:
    method: str
    order: str
    width: int = 0
    height: int = 0
    rows: list = field(default_factory=list)
    bank: MixtureBank | None = None
    background: bgs.BackgroundModel | None = None
    trace: object = None

    def __len__(self):
        return len(self.rows)

    @property
    def has_truth(self) -> bool:
        return bool(self.rows) and self.rows[0].confusion is not None

    def window(self, last=None):
        return self.rows if not last else self.rows[-last:]

    def confusion(self, last=None) -> np.ndarray:
        rows = self.window(last)
        if not rows or rows[0].confusion is None:
            raise UsageError("no ground truth available for this run")
        return sum(r.confusion for r in rows)

    def precision_recall(self, last=None):
        return precision_recall(self.confusion(last))

    def vehicle_false_positive_rate(self, last=None) -> float:
        c = self.confusion(last)
        negatives = c[[ROAD, SHADOW]].sum()
        return float(c[[ROAD, SHADOW], VEHICLE].sum() / negatives) if negatives else float("nan")

    def shadow_false_positive_rate(self, last=None) -> float:
        """Fraction of true-shadow pixels reported as vehicle/foreground."""
        c = self.confusion(last)
        n = c[SHADOW].sum()
        return float(c[SHADOW, VEHICLE] / n) if n else float("nan")

    def columns(self):
        cols = ["frame"] + [f"n_{n}" for n in LABEL_NAMES]
        if self.has_truth:
            cols += [f"c_{a}_{b}" for a in LABEL_NAMES for b in LABEL_NAMES]
            cols += [f"{k}_{n}" for k in ("precision", "recall") for n in LABEL_NAMES]
        return cols + ["loglik", "flips", "seconds"]

    def row_values(self, r: FrameMetrics):
        vals = [r.frame] + [int(c) for c in r.counts]
        if r.confusion is not None:
            vals += [int(c) for c in r.confusion.ravel()]
            p, rc = precision_recall(r.confusion)
            vals += list(p) + list(rc)
        return vals + [r.loglik, r.flips, r.seconds]

    def summary(self, last=None) -> dict:
        out = {"method": self.method, "order": self.order, "frames": len(self.rows)}
        rows = self.window(last)
        if rows:
            out["eval_frames"] = f"{rows[0].frame}-{rows[-1].frame}"
            out["mean_loglik"] = float(np.mean([r.loglik for r in rows]))
            out["flips"] = int(sum(r.flips for r in self.rows))
        if self.has_truth and rows:
            p, rc = self.precision_recall(last)
            for name, a, b in zip(LABEL_NAMES, p, rc):
                out[f"precision_{name}"] = float(a)
                out[f"recall_{name}"] = float(b)
            out["vehicle_fpr"] = self.vehicle_false_positive_rate(last)
            out["shadow_fp_rate"] = self.shadow_false_positive_rate(last)
        return out

    def to_csv(self, last=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns()) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(v) for v in self.row_values(r)) + "\n")
        for k, v in self.summary(last).items():
            buf.write(f"# {k}={_fmt(v)}\n")
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


# ---------------------------------------------------------------------------
# frame sources


def _load_sequence(cfg: RunConfig, frames, truth):
    """(frames iterator of (t, frame, truth), total count, shape)."""
    if frames is not None:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 3:
            frames = frames[..., None]
        if frames.ndim != 4 or len(frames) == 0:
            raise UsageError("need a non-empty (T, H, W[, d]) frame stack")

        def gen():
            for t in range(1, len(frames) + 1):
                yield t, frames[t - 1], None if truth is None else np.asarray(truth[t - 1])

        return gen(), len(frames), frames.shape[1:]
    if cfg.input is None:
        raise UsageError("no input sequence given")
    reader = SequenceReader(cfg.input)
    if len(reader) == 0:
        raise UsageError(f"sequence {cfg.input} has no frames")
    shape = reader.read(1).shape
    with_truth = reader.has_truth()

    def gen():
        for t, frame in reader:
            yield t, frame, reader.truth(t) if with_truth else None

    return gen(), len(reader), shape


def _resolve_mode(cfg, shape):
    d = shape[-1]
    if cfg.color_mode is not None and int(ColorMode.parse(cfg.color_mode)) != d:
        raise UsageError(f"--color-mode {cfg.color_mode} but the sequence has {d} channel(s)")
    return ColorMode(d)


def _row(t, mask, gt, loglik, flips, started):
    counts = np.bincount(mask.ravel(), minlength=3)[:3]
    conf = None
    if gt is not None:
        if gt.shape != mask.shape:
            raise DataError(f"truth mask for frame {t} has shape {gt.shape}")
        conf = confusion_matrix(gt, mask)
    return FrameMetrics(t, counts, conf, float(np.mean(loglik)), int(flips),
                        time.perf_counter() - started)


class _Outputs:
    def __init__(self, cfg):
        self.cfg = cfg
        self.masks = SequenceWriter(cfg.out_masks, "mask") if cfg.out_masks else None
        self.shadowfree = SequenceWriter(cfg.out_shadowfree, "frame") if cfg.out_shadowfree else None
        if cfg.checkpoint_dir:
            Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)

    def flush_metrics(self, report):
        if self.cfg.out_metrics:
            Path(self.cfg.out_metrics).write_text(report.to_csv(self.cfg.eval_last))


def _guarded(report, outputs, source):
    """Yield from ``source``; on bad data flush completed metrics and re-raise."""
    t = 0
    try:
        for item in source:
            t = item[0]
            yield item
    except DataError as exc:
        outputs.flush_metrics(report)
        raise DataError(f"frame {t + 1}: {exc.reason}", exc.offset, exc.path) from None


# ---------------------------------------------------------------------------
# runs


def checkpoint_path(directory, t) -> Path:
    return Path(directory) / f"bank_{t:06d}.pxmb"


def run_mog(cfg: RunConfig, frames=None, truth=None) -> MetricsReport:
    """Mixture segmentation: per frame, update -> label -> classify.

    ``frames``/``truth`` may be passed in memory instead of ``cfg.input``.
    Returns the report; the final bank is available as ``report.bank``.
    """
    if not cfg.method.startswith("mog"):
        raise UsageError(f"run_mog cannot run method {cfg.method}")
    source, total, shape = _load_sequence(cfg, frames, truth)
    mode = _resolve_mode(cfg, shape)
    h, w = shape[:2]
    report = MetricsReport(cfg.method, cfg.order, w, h)
    outputs = _Outputs(cfg)

    if cfg.resume:
        bank = load_model_bank(cfg.resume, expect_d=int(mode))
        if (bank.width, bank.height) != (w, h):
            raise UsageError(f"checkpoint is {bank.width}x{bank.height}, sequence is {w}x{h}")
    else:
        bank = MixtureBank.from_prior(cfg.prior.model(mode), w, h, cfg.em.prior_strength)

    if cfg.method == "mog-batch":
        return _run_mog_batch(cfg, bank, source, report, outputs)

    prev = assign_labels(bank.means, bank.covs)
    for t, frame, gt in _guarded(report, outputs, source):
        if t <= bank.t:
            continue
        if cfg.stop_after is not None and t > cfg.stop_after:
            break
        started = time.perf_counter()
        if cfg.classify_first:
            labels = assign_labels(bank.means, bank.covs)
            mask = classify_frame(frame, bank, labels)
            shadowfree = remove_shadows(frame, mask, bank, labels) if outputs.shadowfree else None
            loglik = bank.update(frame, cfg.em)
        else:
            loglik = bank.update(frame, cfg.em)
            labels = assign_labels(bank.means, bank.covs)
            mask = classify_frame(frame, bank, labels)
            shadowfree = remove_shadows(frame, mask, bank, labels) if outputs.shadowfree else None
        flips = int(np.any(labels != prev, axis=-1).sum())
        prev = labels
        if outputs.masks:
            outputs.masks.write_mask(t, mask)
        if shadowfree is not None:
            outputs.shadowfree.write(t, shadowfree)
        if cfg.checkpoint_every and t % cfg.checkpoint_every == 0:
            save_model_bank(bank, checkpoint_path(cfg.checkpoint_dir, t))
        report.rows.append(_row(t, mask, gt, loglik, flips, started))

    if not report.rows and bank.t == 0:
        raise UsageError("no frames processed")
    if cfg.out_background:
        write_frame(road_image(bank), cfg.out_background)
    outputs.flush_metrics(report)
    report.bank = bank
    return report


def _run_mog_batch(cfg, bank, source, report, outputs):
    items = list(_guarded(report, outputs, source))
    stack = np.stack([f for _, f, _ in items])
    trace = bank.fit_batch(stack, cfg.em)
    log.info("batch EM: %d iterations, converged=%s", len(trace) - 1, trace.converged)
    labels = assign_labels(bank.means, bank.covs)
    for t, frame, gt in items:
        started = time.perf_counter()
        mask = classify_frame(frame, bank, labels)
        if outputs.masks:
            outputs.masks.write_mask(t, mask)
        if outputs.shadowfree:
            outputs.shadowfree.write(t, remove_shadows(frame, mask, bank, labels))
        report.rows.append(_row(t, mask, gt, bank.log_evidence(frame), 0, started))
    if cfg.out_background:
        write_frame(road_image(bank, labels), cfg.out_background)
    outputs.flush_metrics(report)
    report.bank = bank
    report.trace = trace
    return report


def run_baseline(cfg: RunConfig, frames=None, truth=None) -> MetricsReport:
    """Background subtraction; foreground is reported as Vehicle, the rest as Road."""
    if not cfg.method.startswith("baseline"):
        raise UsageError(f"run_baseline cannot run method {cfg.method}")
    source, total, shape = _load_sequence(cfg, frames, truth)
    _resolve_mode(cfg, shape)
    h, w = shape[:2]
    report = MetricsReport(cfg.method, cfg.order, w, h)
    outputs = _Outputs(cfg)
    bg = bgs.BackgroundModel(
        mode=bgs.CUMULATIVE if cfg.method == "baseline-cumulative" else bgs.EXPONENTIAL,
        alpha=cfg.alpha, selective_update=cfg.selective_update, threshold=cfg.threshold,
        initial_variance=cfg.initial_variance)
    classify_first = cfg.classify_first or cfg.selective_update
    for t, frame, gt in _guarded(report, outputs, source):
        if cfg.stop_after is not None and t > cfg.stop_after:
            break
        started = time.perf_counter()
        if bg.t > 0 and classify_first:
            fg = bgs.mahalanobis_classify(bg, frame, cfg.threshold)
            loglik = bgs.log_evidence(bg, frame)
            bg = bgs.update(bg, frame, fg)
        else:
            bg = bgs.update(bg, frame)
            fg = bgs.mahalanobis_classify(bg, frame, cfg.threshold)
            loglik = bgs.log_evidence(bg, frame)
        mask = np.where(fg, VEHICLE, ROAD).astype(np.uint8)
        if outputs.masks:
            outputs.masks.write_mask(t, mask)
        report.rows.append(_row(t, mask, gt, loglik, 0, started))
    if cfg.out_background:
        write_frame(bg.mean, cfg.out_background)
    outputs.flush_metrics(report)
    report.background = bg
    return report


def run(cfg: RunConfig, frames=None, truth=None) -> MetricsReport:
    if cfg.method.startswith("mog"):
        return run_mog(cfg, frames, truth)
    return run_baseline(cfg, frames, truth)


# ---------------------------------------------------------------------------
# comparison and inspection


@dataclass
class Comparison:
    a: MetricsReport
    b: MetricsReport
    deltas: list  # per frame: dict of (b - a) for numeric columns

    def to_csv(self, last=None) -> str:
        buf = io.StringIO()
        if not self.deltas:
            return ""
        keys = list(self.deltas[0])
        buf.write(",".join(keys) + "\n")
        for row in self.deltas:
            buf.write(",".join(_fmt(row[k]) for k in keys) + "\n")
        for tag, rep in (("a", self.a), ("b", self.b)):
            for k, v in rep.summary(last).items():
                buf.write(f"# {tag}.{k}={_fmt(v)}\n")
        return buf.getvalue()


def compare(cfg_a: RunConfig, cfg_b: RunConfig, frames=None, truth=None) -> Comparison:
    if frames is None:
        if cfg_a.input is None or cfg_b.input is None or \
                Path(cfg_a.input).resolve() != Path(cfg_b.input).resolve():
            raise UsageError("compared runs must read the same input sequence")
    a = run(cfg_a, frames, truth)
    b = run(cfg_b, frames, truth)
    if len(a) != len(b):
        raise UsageError(f"runs processed different frame counts ({len(a)} vs {len(b)})")
    cols = [c for c in a.columns() if c not in ("frame", "seconds")]
    deltas = []
    for ra, rb in zip(a.rows, b.rows):
        va = dict(zip(a.columns(), a.row_values(ra)))
        vb = dict(zip(b.columns(), b.row_values(rb)))
        row = {"frame": ra.frame}
        row.update({f"d_{c}": vb[c] - va[c] for c in cols})
        deltas.append(row)
    return Comparison(a, b, deltas)


def inspect_pixel(bank, x: int, y: int, as_csv=False) -> str:
    """Dump one pixel's components, statistics and semantic labels."""
    if not isinstance(bank, MixtureBank):
        bank = load_model_bank(bank)
    state = bank.state_at(x, y)
    m, s = state.model, state.stats
    labels = assign_labels(m.means, m.covs)
    d = m.d
    if as_csv:
        head = (["slot", "label", "weight"] + [f"mean_{i}" for i in range(d)]
                + [f"cov_{i}{j}" for i in range(d) for j in range(d)]
                + ["N"] + [f"M_{i}" for i in range(d)]
                + [f"Z_{i}{j}" for i in range(d) for j in range(d)])
        lines = [",".join(head)]
        for l in range(3):
            nums = ([m.weights[l]] + list(m.means[l]) + list(m.covs[l].ravel())
                    + [s.counts[l]] + list(s.sums[l]) + list(s.outer[l].ravel()))
            vals = [str(l), SemanticLabel(labels[l]).name.lower()] + [repr(float(v)) for v in nums]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"
    out = [f"pixel ({x}, {y})  frames_seen={bank.t}  effective_sample_size={s.total:.6g}"]
    for l in range(3):
        name = SemanticLabel(labels[l]).name.lower()
        mean = " ".join(f"{v:.4g}" for v in m.means[l])
        var = " ".join(f"{v:.4g}" for v in np.diag(m.covs[l]))
        out.append(f"  slot {l} [{name:7s}] w={m.weights[l]:.4f}  mean=({mean})  "
                   f"var=({var})  N={s.counts[l]:.4g}")
    return "\n".join(out) + "\n"
