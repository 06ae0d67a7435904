"""Evaluate how well 2D keypoint trajectories track ground-truth objects."""

from .affine import AffineTransform2D, FitDiagnostics, apply_affine, fit_affine, fit_all_pairs
from .errors import ConfigError, DataError, NonFiniteError, OutOfDomainWarning, ParseError, ShapeError
from .metrics import (
    AggregateReport,
    ErrorMatrix,
    ThresholdConfig,
    TrackingReport,
    VelocityConfig,
    aggregate_runs,
    associate,
    error_matrix,
    tracking_error,
    tracking_report,
    velocity_consistency,
)
from .spatial import HeatmapConfig, SoftmaxConfig, channel_softmax, reconstruction_mse, render_gaussian_heatmaps, soft_argmax
from .stats import BoxSummary, IntervalEstimate, bootstrap_ci, box_summary, gaussian_smooth, iqm
from .trajectory import (
    DatasetSplit,
    EpisodeTrajectories,
    Point2,
    RunRecord,
    load_episode,
    load_run,
    save_episode,
    split_sequences,
)

__version__ = "0.1.0"
