"""Per-pixel road/shadow/vehicle segmentation with incrementally learned mixtures."""

from .em import (EmConfig, EmTrace, IncrementalEmState, MixtureBank, batch_e_step, batch_em,
                 effective_sample_size, incremental_init, incremental_update)
from .errors import DataError, EmptyStatsError, InvariantError, UsageError
from .mixture import (ColorMode, GaussianComponent, MixtureModel, SufficientStats,
                      gaussian_log_density, joint_log_probability, params_from_stats,
                      responsibilities, stats_from_params, stream_log_likelihood)
from .segment import LabelAssignment, SemanticLabel, classify_frame, classify_pixel, heuristic_label

__version__ = "0.1.0"
