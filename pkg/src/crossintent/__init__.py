"""Pedestrian crossing-intention prediction from tracked 2D skeletons."""
from .assignment import Assignment, assign, linear_assignment
from .dataio import Observation, Sequence, TTEAnnotation, read_sequence, read_sequences, write_sequence
from .errors import CrossIntentError, IoError, ValidationError
from .evaluation import EvalReport, TTECurve, balanced_accuracy, emit_report, tte_curves
from .features import FRAME_DIM, concat_external, skeleton_features, window_features
from .forest import ForestModel, train_forest
from .geometry import BBox, Skeleton, iou
from .kalman import KalmanConfig, KalmanFilter
from .model_selection import GridSpec, grid_search_cv
from .pipeline import PipelineConfig, run_eval, run_predict, run_track, run_train
from .tracking import Tracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "Assignment", "BBox", "CrossIntentError", "EvalReport", "FRAME_DIM", "ForestModel", "GridSpec",
    "IoError", "KalmanConfig", "KalmanFilter", "Observation", "PipelineConfig", "Sequence", "Skeleton",
    "TTEAnnotation", "TTECurve", "Tracker", "TrackerConfig", "ValidationError", "assign", "balanced_accuracy",
    "concat_external", "emit_report", "grid_search_cv", "iou", "linear_assignment", "read_sequence",
    "read_sequences", "run_eval", "run_predict", "run_track", "run_train", "skeleton_features",
    "train_forest", "tte_curves", "window_features", "write_sequence",
]
