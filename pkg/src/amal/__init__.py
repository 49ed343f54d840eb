"""Movement assessment from 3D skeleton videos.

Learns per-frame statistics of a properly performed movement from a few
videos and scores new performances with textual feedback.
"""

from .alignment import AlignmentConfig
from .assessment import AssessmentResult, FeedbackItem, format_report
from .model import TrainedModel, read_model, write_model
from .pipeline import assess, train
from .skeleton import SkeletonTopology, SkeletonVideo, read_video, write_video
from .weights import ScoreWeights

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig", "AssessmentResult", "FeedbackItem", "ScoreWeights", "SkeletonTopology",
    "SkeletonVideo", "TrainedModel", "assess", "format_report", "read_model", "read_video",
    "train", "write_model", "write_video",
]
