"""Camera calibration evaluation for soccer broadcast images.

Scores candidate cameras against semantic polyline annotations with the
thresholded Jaccard index JaC_tau, fits homography and pinhole cameras, and
generates synthetic ground truth.
"""

from .camera_models import Homography, PinholeRadial, SimplifiedPinhole, project
from .field_model import CLASS_NAMES, PitchSpec, build_pitch_template
from .metrics import ImageAnnotation, aggregate, evaluate_image, reprojection_error

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "Homography",
    "ImageAnnotation",
    "PinholeRadial",
    "PitchSpec",
    "SimplifiedPinhole",
    "aggregate",
    "build_pitch_template",
    "evaluate_image",
    "project",
    "reprojection_error",
]
